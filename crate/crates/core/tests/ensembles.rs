use approx::assert_relative_eq;
use pfaffian_ensembles::kernels::{window_diff, KernelContext, KernelFlavor, Route, ScalarFlavor};
use pfaffian_ensembles::oracle::{compare, enumerate, oracle_correlation, EnsembleSpec, Flavor};
use pfaffian_ensembles::orthofam::SignConvention;
use pfaffian_ensembles::pfaffian::correlation;
use pfaffian_ensembles::weights::{DiscreteWeight, Truncation};
use pfaffian_ensembles::Error;

fn spec(flavor: Flavor, weight: &DiscreteWeight, l: usize) -> EnsembleSpec {
    EnsembleSpec {
        flavor,
        weight: weight.clone(),
        trunc: Truncation::fixed(l),
    }
}

#[test]
fn generic_weight_kernels_match_enumeration() {
    // d1 = x (x + 2), d2 = 0.3 (x + 0.5)(x + 4)
    let w = DiscreteWeight::generic(vec![0.0, 2.0, 1.0], vec![0.6, 1.35, 0.3], 1.0).unwrap();
    let trunc = Truncation::fixed(40);
    for (flavor, kf) in [
        (Flavor::Symplectic(2), KernelFlavor::Symplectic),
        (Flavor::Orthogonal(1), KernelFlavor::Orthogonal),
    ] {
        let en = enumerate(&spec(flavor, &w, 40)).unwrap();
        let ctx = KernelContext::new(&w, flavor.n(), &trunc).unwrap();
        let k = ctx.matrix_kernel(kf, Route::Inversion).unwrap();
        let rep = compare(&en, &k, 10, 3).unwrap();
        assert!(rep.gf_max < 1e-7, "{flavor:?}: {rep:?}");
    }
    // The rank-factor route needs the lattice long enough for the
    // boundary term to vanish.
    let ctx = KernelContext::with_tail(&w, 2, 1e-14).unwrap();
    for sf in [ScalarFlavor::S4, ScalarFlavor::S1] {
        let a = ctx.scalar(sf, Route::Inversion).unwrap().s;
        let b = ctx.scalar(sf, Route::Rank).unwrap().s;
        assert!(window_diff(&a, &b, ctx.window()) < 1e-7, "{sf:?}");
    }
}

#[test]
fn nabla_layout_gives_the_same_process() {
    let w = DiscreteWeight::meixner(2.0, 0.5).unwrap();
    let trunc = Truncation::fixed(40);
    let en = enumerate(&spec(Flavor::Symplectic(2), &w, 40)).unwrap();
    let ctx = KernelContext::new(&w, 2, &trunc).unwrap();
    let k = ctx
        .matrix_kernel(KernelFlavor::SymplecticNabla, Route::Inversion)
        .unwrap();
    assert!(compare(&en, &k, 10, 9).unwrap().gf_max < 1e-7);
}

#[test]
fn kernels_ignore_weight_scale_and_sign_convention() {
    let w = DiscreteWeight::charlier(1.5).unwrap();
    let trunc = Truncation::fixed(40);
    let base = KernelContext::new(&w, 2, &trunc).unwrap();
    let scaled = KernelContext::new(&w.scaled(7.0).unwrap(), 2, &trunc).unwrap();
    let flipped = KernelContext::with_convention(&w, 2, &trunc, SignConvention::PositiveLeading).unwrap();
    for sf in [ScalarFlavor::S4, ScalarFlavor::S1] {
        let s = base.scalar(sf, Route::Inversion).unwrap().s;
        for other in [&scaled, &flipped] {
            let t = other.scalar(sf, Route::Inversion).unwrap().s;
            assert!(window_diff(&s, &t, base.window()) < 1e-9, "{sf:?}");
        }
    }
}

#[test]
fn density_sums_to_particle_number() {
    let w = DiscreteWeight::meixner(3.0, 0.2).unwrap();
    let ctx = KernelContext::with_tail(&w, 2, 1e-14).unwrap();
    for (kf, particles) in [(KernelFlavor::Symplectic, 2.0), (KernelFlavor::Orthogonal, 4.0)] {
        let k = ctx.matrix_kernel(kf, Route::Closed).unwrap();
        let total: f64 = (0..ctx.window()).map(|x| correlation(&k, &[x]).unwrap()).sum();
        assert_relative_eq!(total, particles, epsilon = 1e-8);
    }
}

#[test]
fn three_point_correlations() {
    let w = DiscreteWeight::charlier(1.0).unwrap();
    let en = enumerate(&spec(Flavor::Orthogonal(2), &w, 24)).unwrap();
    let ctx = KernelContext::new(&w, 2, &Truncation::fixed(24)).unwrap();
    let k = ctx.matrix_kernel(KernelFlavor::Orthogonal, Route::Inversion).unwrap();
    for pts in [[0, 1, 2], [0, 3, 5], [1, 2, 6]] {
        let a = correlation(&k, &pts).unwrap();
        let b = oracle_correlation(&en, &pts).unwrap();
        assert!((a - b).abs() < 1e-9, "{pts:?}: {a} vs {b}");
    }
}

#[test]
fn rejects_bad_input() {
    assert!(matches!(DiscreteWeight::meixner(2.0, 1.5), Err(Error::Parameter(_))));
    let w = DiscreteWeight::charlier(1.0).unwrap();
    assert!(KernelContext::new(&w, 0, &Truncation::fixed(40)).is_err());
    assert!(KernelContext::new(&w, 11, &Truncation::fixed(400)).is_err());
}
