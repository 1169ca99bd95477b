//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Command-line `--set`
//! overrides replace file values. Every key is listed in [`KEYS`]; anything
//! else is rejected before computation starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::atom::AtomParams;
use crate::error::{Error, Result};
use crate::fock::FockTruncation;
use crate::lindblad::{GeneratorKind, SteadyMethod, SystemParams};
use crate::metrology::{log_grid, theta_to_atom, ScanConfig, DEFAULT_STRICTNESS};

/// Accepted keys with a one-line description; printed by `--help`.
pub const KEYS: &[(&str, &str)] = &[
    ("g", "coupling strength (rad/s); exclusive with g_tau"),
    ("g_tau", "dimensionless coupling g*tau; exclusive with g"),
    ("tau", "atom transit time (s), default 1e-7"),
    ("r", "injection rate (1/s); exclusive with n_c"),
    ("n_c", "atoms per photon lifetime r/kappa; exclusive with r"),
    ("kappa", "cavity decay rate (1/s), default 1"),
    ("dimensionless", "true fixes kappa = 1"),
    ("p_e", "excited population, default 0.5; not allowed with theta"),
    ("lambda", "real part of the atomic coherence, default 0.5; exclusive with theta"),
    ("lambda_im", "imaginary part of the atomic coherence, default 0"),
    ("theta", "mixing angle in [0, pi]; sets p_e and lambda"),
    ("model", "full | effective | decay, default effective"),
    ("method", "null_space | long_time, default null_space"),
    ("n_max", "Fock truncation override"),
    ("t_final", "evolution / trajectory end time (s), default 10"),
    ("reltol", "integrator relative tolerance, default 1e-9"),
    ("sample_times", "comma-separated ascending times"),
    ("n_samples", "evenly spaced sample count over [0, t_final] when sample_times is absent, default 11"),
    ("initial", "vacuum | steady | fock:N, default vacuum"),
    ("trajectories", "Monte Carlo trajectory count, default 1000"),
    ("seed", "64-bit seed, default 1"),
    ("scan_nc_min", "smallest N_c of the scan grid, default 1"),
    ("scan_nc_max", "largest N_c of the scan grid, default 1e5"),
    ("scan_points", "log-spaced grid points, default 51"),
    ("scan_lambdas", "comma-separated coherences, default 0,0.3,0.5"),
    ("scan_exact", "also compute the exact-moment column, default true"),
    ("fit_min", "lower N_c of the slope-fit window, default 1e3"),
    ("fit_max", "upper N_c of the slope-fit window, default 1e5"),
    ("strictness", "bound for the regime margins, default 0.1"),
    ("dump_density", "write the steady density matrix, default false"),
    ("out", "output directory, default ."),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Vacuum,
    /// Gaussian state rebuilt from the effective steady moments.
    Steady,
    Fock(usize),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub kind: GeneratorKind,
    pub method: SteadyMethod,
    pub n_max: Option<usize>,
    pub t_final: f64,
    pub reltol: f64,
    pub sample_times: Vec<f64>,
    pub initial: InitialState,
    pub trajectories: usize,
    pub seed: u64,
    pub scan: ScanConfig,
    pub strictness: f64,
    pub dump_density: bool,
    pub out: Option<PathBuf>,
}

/// Raw key/value pairs after merging file and overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig(pub BTreeMap<String, String>);

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("config line {}: expected key = value", i + 1)))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(invalid(format!("config line {}: duplicate key {k}", i + 1)));
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| invalid(format!("override {:?} is not key=value", o.as_ref())))?;
            self.0.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    fn check_keys(&self) -> Result<()> {
        for k in self.0.keys() {
            if !KEYS.iter().any(|(name, _)| name == k) {
                return Err(invalid(format!("unknown config key {k:?}")));
            }
        }
        Ok(())
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| invalid(format!("{key}: {v:?} is not a number")))
            })
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| invalid(format!("{key}: {v:?} is not a non-negative integer"))),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.0.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(invalid(format!("{key}: {v:?} is not true or false"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.0
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| invalid(format!("{key}: {x:?} is not a number")))
                    })
                    .collect()
            })
            .transpose()
    }

    fn exclusive(&self, a: &str, b: &str, required: bool) -> Result<()> {
        match (self.has(a), self.has(b)) {
            (true, true) => Err(invalid(format!("{a} and {b} are mutually exclusive"))),
            (false, false) if required => Err(invalid(format!("one of {a} or {b} is required"))),
            _ => Ok(()),
        }
    }

    fn atom(&self) -> Result<AtomParams> {
        self.exclusive("lambda", "theta", false)?;
        if let Some(theta) = self.f64("theta")? {
            if self.has("p_e") || self.has("lambda_im") {
                return Err(invalid("theta fixes p_e and lambda; remove p_e / lambda_im"));
            }
            return theta_to_atom(theta);
        }
        let lambda = Complex64::new(self.f64_or("lambda", 0.5)?, self.f64_or("lambda_im", 0.0)?);
        AtomParams::new(self.f64_or("p_e", 0.5)?, lambda)
    }

    fn params(&self) -> Result<SystemParams> {
        self.exclusive("g", "g_tau", true)?;
        self.exclusive("r", "n_c", true)?;
        let tau = self.f64_or("tau", 1e-7)?;
        if !(tau > 0.0) {
            return Err(invalid("tau must be positive"));
        }
        let kappa = if self.bool_or("dimensionless", false)? {
            match self.f64("kappa")? {
                Some(k) if k != 1.0 => return Err(invalid("dimensionless mode fixes kappa = 1")),
                _ => 1.0,
            }
        } else {
            self.f64_or("kappa", 1.0)?
        };
        let g = match self.f64("g")? {
            Some(g) => g,
            None => self.f64("g_tau")?.expect("checked") / tau,
        };
        let r = match self.f64("r")? {
            Some(r) => r,
            None => self.f64("n_c")?.expect("checked") * kappa,
        };
        SystemParams::new(g, tau, r, kappa, self.atom()?)
    }

    fn kind(&self) -> Result<GeneratorKind> {
        match self.0.get("model").map(String::as_str).unwrap_or("effective") {
            "full" => Ok(GeneratorKind::FullCoarseGrained),
            "effective" => Ok(GeneratorKind::EffectiveSecondOrder),
            "decay" => Ok(GeneratorKind::DecayOnly),
            v => Err(invalid(format!("model: unknown value {v:?}"))),
        }
    }

    fn method(&self) -> Result<SteadyMethod> {
        match self.0.get("method").map(String::as_str).unwrap_or("null_space") {
            "null_space" => Ok(SteadyMethod::NullSpace),
            "long_time" => Ok(SteadyMethod::LongTime),
            v => Err(invalid(format!("method: unknown value {v:?}"))),
        }
    }

    fn initial(&self) -> Result<InitialState> {
        match self.0.get("initial").map(String::as_str).unwrap_or("vacuum") {
            "vacuum" => Ok(InitialState::Vacuum),
            "steady" => Ok(InitialState::Steady),
            v if v.starts_with("fock:") => v[5..]
                .trim()
                .parse()
                .map(InitialState::Fock)
                .map_err(|_| invalid(format!("initial: bad Fock level {v:?}"))),
            v => Err(invalid(format!("initial: unknown value {v:?}"))),
        }
    }

    fn sample_times(&self, t_final: f64) -> Result<Vec<f64>> {
        if let Some(times) = self.list("sample_times")? {
            if self.has("n_samples") {
                return Err(invalid("sample_times and n_samples are mutually exclusive"));
            }
            let mut prev = 0.0;
            for &t in &times {
                if !(t >= prev) || t > t_final {
                    return Err(invalid("sample_times must be ascending and within [0, t_final]"));
                }
                prev = t;
            }
            return Ok(times);
        }
        let n = self.u64_or("n_samples", 11)? as usize;
        match n {
            0 => Err(invalid("n_samples must be positive")),
            1 => Ok(vec![t_final]),
            _ => Ok((0..n).map(|i| t_final * i as f64 / (n - 1) as f64).collect()),
        }
    }

    fn scan(&self, strictness: f64) -> Result<ScanConfig> {
        let params_tau = self.f64_or("tau", 1e-7)?;
        let g_tau = match (self.f64("g")?, self.f64("g_tau")?) {
            (Some(g), _) => g * params_tau,
            (None, Some(gt)) => gt,
            (None, None) => 0.01,
        };
        let atom_p_e = if self.has("theta") {
            self.atom()?.p_e()
        } else {
            self.f64_or("p_e", 0.5)?
        };
        Ok(ScanConfig {
            n_c_grid: log_grid(
                self.f64_or("scan_nc_min", 1.0)?,
                self.f64_or("scan_nc_max", 1e5)?,
                self.u64_or("scan_points", 51)? as usize,
            )?,
            lambdas: self.list("scan_lambdas")?.unwrap_or_else(|| vec![0.0, 0.3, 0.5]),
            tau: params_tau,
            p_e: atom_p_e,
            kappa: self.f64_or("kappa", 1.0)?,
            g_tau,
            fit_window: (self.f64_or("fit_min", 1e3)?, self.f64_or("fit_max", 1e5)?),
            exact: self.bool_or("scan_exact", true)?,
            strictness,
        })
    }

    /// Typed configuration. `needs_params` is false for commands that only
    /// read the scan keys.
    pub fn resolve(&self, needs_params: bool) -> Result<ExperimentConfig> {
        self.check_keys()?;
        let params = if needs_params {
            self.params()?
        } else {
            // scans fix their own N_c grid; keep a harmless placeholder
            SystemParams::new(0.0, 1.0, 0.0, 1.0, AtomParams::ground())?
        };
        let t_final = self.f64_or("t_final", 10.0)?;
        if !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(invalid("t_final must be finite and non-negative"));
        }
        let n_max = if self.has("n_max") {
            Some(FockTruncation::new(self.u64_or("n_max", 0)? as usize)?.n_max())
        } else {
            None
        };
        let strictness = self.f64_or("strictness", DEFAULT_STRICTNESS)?;
        Ok(ExperimentConfig {
            params,
            kind: self.kind()?,
            method: self.method()?,
            n_max,
            t_final,
            reltol: self.f64_or("reltol", 1e-9)?,
            sample_times: self.sample_times(t_final)?,
            initial: self.initial()?,
            trajectories: self.u64_or("trajectories", 1000)? as usize,
            seed: self.u64_or("seed", 1)?,
            scan: self.scan(strictness)?,
            strictness,
            dump_density: self.bool_or("dump_density", false)?,
            out: self.0.get("out").map(PathBuf::from),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> RawConfig {
        RawConfig::parse(text).unwrap()
    }

    #[test]
    fn parses_and_resolves() {
        let c = raw("# E1\ng_tau = 0.01\nn_c = 10 # atoms\nkappa=1\np_e=0.5\nlambda=0.5\n")
            .resolve(true)
            .unwrap();
        assert!((c.params.g_tau() - 0.01).abs() < 1e-15);
        assert_eq!(c.params.n_c(), 10.0);
        assert_eq!(c.kind, GeneratorKind::EffectiveSecondOrder);
        assert_eq!(c.sample_times.len(), 11);
    }

    #[test]
    fn overrides_win() {
        let mut r = raw("g_tau = 0.01\nn_c = 10\n");
        r.apply_overrides(&["n_c=20", "model = full"]).unwrap();
        let c = r.resolve(true).unwrap();
        assert_eq!(c.params.n_c(), 20.0);
        assert_eq!(c.kind, GeneratorKind::FullCoarseGrained);
    }

    #[test]
    fn schema_violations() {
        for text in [
            "g = 1\ng_tau = 0.01\nn_c = 10",
            "g_tau = 0.01",
            "g_tau = 0.01\nr = 1\nn_c = 10",
            "g_tau = 0.01\nn_c = 10\nlambda = 0.5\ntheta = 1",
            "g_tau = 0.01\nn_c = 10\nbogus = 1",
            "g_tau = 0.01\nn_c = 10\nmodel = exact",
            "g_tau = x\nn_c = 10",
            "g_tau = 0.01\nn_c = 10\ndimensionless = true\nkappa = 2",
            "g_tau = 0.01\nn_c = 10\nsample_times = 2,1",
        ] {
            assert!(raw(text).resolve(true).is_err(), "{text}");
        }
        assert!(RawConfig::parse("a = 1\na = 2").is_err());
        assert!(RawConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn theta_equivalent_to_explicit_atom() {
        let a = raw("g_tau = 0.01\nn_c = 10\ntheta = 1.5707963267948966").resolve(true).unwrap();
        let b = raw("g_tau = 0.01\nn_c = 10\np_e = 0.5\nlambda = 0.5").resolve(true).unwrap();
        assert_eq!(a.params, b.params);
    }
}
