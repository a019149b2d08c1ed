//! Run configuration: `key=value` files overlaid by command-line flags.

use pfaffian_ensembles::kernels::{KernelFlavor, Route};
use pfaffian_ensembles::weights::DiscreteWeight;
use pfaffian_ensembles::Error;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "PFENS_OUT";
const DEFAULT_OUT: &str = "pfens-out";

#[derive(Debug)]
pub enum CliError {
    /// bad flags, config files or parameters (exit code 2)
    Input(String),
    /// a computation failed or a check did not pass (exit code 1)
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Compute(m) => write!(f, "computation failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Compute(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Values from a config file, looked up when a flag is absent.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("config line {}: expected key=value", i + 1)))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    /// Flag value if given, else the file value, else `None`.
    pub fn opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| CliError::Input(format!("config key {key}: cannot parse {s:?}: {e}"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }
}

/// `charlier:a=1`, `meixner:beta=2,c=0.3`, `generic:d1=0/2/1,d2=0.6/1.35/0.3,w0=1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub text: String,
}

impl FromStr for WeightSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(WeightSpec {
            text: s.trim().to_string(),
        })
    }
}

impl WeightSpec {
    pub fn build(&self) -> CliResult<DiscreteWeight> {
        let (family, rest) = self.text.split_once(':').unwrap_or((self.text.as_str(), ""));
        let mut params = BTreeMap::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("weight parameter {item:?} is not key=value")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> CliResult<f64> {
            let v = params
                .get(key)
                .ok_or_else(|| CliError::Input(format!("weight {family} needs parameter {key}")))?;
            v.parse()
                .map_err(|_| CliError::Input(format!("weight parameter {key}={v} is not a number")))
        };
        let list = |key: &str| -> CliResult<Vec<f64>> {
            let v = params
                .get(key)
                .ok_or_else(|| CliError::Input(format!("weight {family} needs parameter {key}")))?;
            v.split('/')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| CliError::Input(format!("bad coefficient {t:?} in {key}")))
                })
                .collect()
        };
        let w = match family.trim() {
            "charlier" => DiscreteWeight::charlier(num("a")?),
            "meixner" => DiscreteWeight::meixner(num("beta")?, num("c")?),
            "generic" => {
                let w0 = if params.contains_key("w0") { num("w0")? } else { 1.0 };
                DiscreteWeight::generic(list("d1")?, list("d2")?, w0)
            }
            other => return Err(CliError::Input(format!("unknown weight family {other:?}"))),
        };
        Ok(w?)
    }
}

pub fn parse_flavor(s: &str) -> CliResult<KernelFlavor> {
    match s {
        "sympl" | "symplectic" => Ok(KernelFlavor::Symplectic),
        "sympl-nabla" | "nabla" => Ok(KernelFlavor::SymplecticNabla),
        "orth" | "orthogonal" => Ok(KernelFlavor::Orthogonal),
        other => Err(CliError::Input(format!(
            "unknown flavor {other:?} (sympl, sympl-nabla, orth)"
        ))),
    }
}

pub fn parse_route(s: &str) -> CliResult<Route> {
    match s {
        "inversion" => Ok(Route::Inversion),
        "rank" => Ok(Route::Rank),
        "closed" => Ok(Route::Closed),
        other => Err(CliError::Input(format!(
            "unknown route {other:?} (inversion, rank, closed)"
        ))),
    }
}

/// Comma-separated list of numbers.
pub fn parse_list<T: FromStr>(s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Input(format!("cannot parse list item {t:?}")))
        })
        .collect()
}

/// Output directory: flag, then config file, then the environment, then a default.
pub fn output_dir(file: &FileConfig, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    if let Some(p) = file.opt::<PathBuf>("out", flag)? {
        return Ok(p);
    }
    Ok(std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_yield_to_flags() {
        let f = FileConfig::parse("N = 3\n# comment\nweight=charlier:a=2\n").unwrap();
        assert_eq!(f.get::<usize>("N", None, 1).unwrap(), 3);
        assert_eq!(f.get::<usize>("N", Some(5), 1).unwrap(), 5);
        assert_eq!(f.get::<usize>("L", None, 40).unwrap(), 40);
        assert!(FileConfig::parse("oops").is_err());
        assert!(f.get::<f64>("weight", None, 0.0).is_err());
    }

    #[test]
    fn weight_specs() {
        let w: WeightSpec = "meixner:beta=2,c=0.3".parse().unwrap();
        assert!(w.build().is_ok());
        let bad: WeightSpec = "meixner:beta=2,c=1.5".parse().unwrap();
        assert!(matches!(bad.build(), Err(CliError::Input(_))));
        let g: WeightSpec = "generic:d1=0/2/1,d2=0.6/1.35/0.3".parse().unwrap();
        assert!(g.build().is_ok());
        let u: WeightSpec = "hahn:n=3".parse().unwrap();
        assert!(u.build().is_err());
    }
}
