//! Flat key = value experiment configuration with dotted section keys.
//!
//! ```text
//! grid.n = 32
//! grid.length = 12.566370614359172
//! seed = 7
//! stability.epsilon = 0.02
//! ```
//!
//! Unknown keys are rejected up front; every effective value (defaults
//! included) lands in the run manifest so thresholds and windows are
//! reproducible from the output alone.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Every key the configuration understands, with its default.
const KNOWN_KEYS: &[(&str, &str)] = &[
    ("grid.n", "32"),
    ("grid.length", "12.566370614359172"), // 4 pi
    ("seed", "7"),
    ("output.dir", "out"),
    ("force.kind", "manufactured"),
    ("force.amplitude", "0.02"),
    ("force.core_scale_cells", "4"),
    ("solver.tol", "1e-10"),
    ("solver.max_iter", "200"),
    ("norms.power_tol", "1e-6"),
    ("capacity.tol", "1e-8"),
    ("capacity.domain_factor", "1"),
    ("capacity.omega", "1.7"),
    ("resolvent.tol", "1e-9"),
    ("resolvent.magnitudes", "1,2,4,8,16,32,64,128,256"),
    ("semigroup.times", "0.08,0.113,0.16,0.226,0.32"),
    ("semigroup.theta", "1.1780972450961724"), // 3 pi / 8
    ("semigroup.exponent_n", "48"),
    ("stability.epsilon", "0.02"),
    ("stability.horizon", "0.5"),
    ("stability.dt", "0.0025"),
    ("stability.sigma0", "0.75"),
    ("stability.sigma1", "0.25"),
    ("stability.sigmas", "0,0.25,0.5,0.75"),
    ("stability.alphas", "-1,-0.5,0"),
    ("stability.checkpoint_every", "8"),
    ("stability.residual_stride", "4"),
    ("stability.fit_start_steps", "10"),
    ("stability.profile", "random_band"),
];

/// Parsed configuration: explicit values over the known-key defaults.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            values: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parse the `key = value` file format. Lines starting with `#` and
    /// blank lines are ignored.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text)
    }

    /// Set one value, rejecting unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::InvalidConfig(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply a `key=value` override (the CLI --set flag).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("override '{assignment}' is not key=value"))
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        if let Some(v) = self.values.get(key) {
            return Ok(v.as_str());
        }
        KNOWN_KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, d)| *d)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown key '{key}'")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("key '{key}': '{raw}' is not a number")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("key '{key}': '{raw}' is not an integer")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("key '{key}': '{raw}' is not an integer")))
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get(key)?;
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("key '{key}': '{s}' is not a number"))
                })
            })
            .collect()
    }

    /// The grid every scenario operates on.
    pub fn grid(&self) -> Result<crate::grid::Grid> {
        crate::grid::Grid::new(self.get_usize("grid.n")?, self.get_f64("grid.length")?)
    }

    /// Stability sub-config resolved against the defaults.
    pub fn stability(&self) -> Result<crate::stability::StabilityConfig> {
        let cfg = crate::stability::StabilityConfig {
            sigma0: self.get_f64("stability.sigma0")?,
            sigma1: self.get_f64("stability.sigma1")?,
            sigmas: self.get_f64_list("stability.sigmas")?,
            alphas: self.get_f64_list("stability.alphas")?,
            epsilon: self.get_f64("stability.epsilon")?,
            horizon: self.get_f64("stability.horizon")?,
            dt: self.get_f64("stability.dt")?,
            checkpoint_every: self.get_usize("stability.checkpoint_every")?,
            residual_stride: self.get_usize("stability.residual_stride")?,
            fit_start_steps: self.get_usize("stability.fit_start_steps")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Validate every present and defaulted key parses, and that module
    /// preconditions hold.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.get_u64("seed")?;
        self.get_f64("force.amplitude")?;
        self.get_f64("force.core_scale_cells")?;
        self.get_f64("solver.tol")?;
        self.get_usize("solver.max_iter")?;
        self.get_f64("norms.power_tol")?;
        self.get_f64("capacity.tol")?;
        let df = self.get_usize("capacity.domain_factor")?;
        if df == 0 || df > 4 {
            return Err(Error::InvalidConfig(format!(
                "capacity.domain_factor must be 1..=4, got {df}"
            )));
        }
        let omega = self.get_f64("capacity.omega")?;
        if !(0.0 < omega && omega < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "capacity.omega must lie in (0, 2), got {omega}"
            )));
        }
        self.get_f64("resolvent.tol")?;
        self.get_f64_list("resolvent.magnitudes")?;
        self.get_f64_list("semigroup.times")?;
        let theta = self.get_f64("semigroup.theta")?;
        if !(crate::operator::SECTOR_GAMMA < theta && theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!(
                "semigroup.theta must lie in (pi/4, pi/2), got {theta}"
            )));
        }
        let en = self.get_usize("semigroup.exponent_n")?;
        if en < 4 || en % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "semigroup.exponent_n must be even and >= 4, got {en}"
            )));
        }
        self.stability()?;
        let kind = self.get("force.kind")?;
        if !["manufactured", "mollified_singular"].contains(&kind) {
            return Err(Error::InvalidConfig(format!("unknown force.kind '{kind}'")));
        }
        let profile = self.get("stability.profile")?;
        if !["random_band", "beltrami"].contains(&profile) {
            return Err(Error::InvalidConfig(format!(
                "unknown stability.profile '{profile}'"
            )));
        }
        Ok(())
    }

    /// Every effective (key, value) pair, defaults resolved, for the
    /// manifest.
    pub fn effective(&self) -> Vec<(String, String)> {
        KNOWN_KEYS
            .iter()
            .map(|(k, d)| {
                let v = self.values.get(*k).map(|s| s.as_str()).unwrap_or(d);
                (k.to_string(), v.to_string())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::parse("grid.n = 16\n# comment\n\nseed = 3\n").unwrap();
        assert_eq!(cfg.get_usize("grid.n").unwrap(), 16);
        assert_eq!(cfg.get_u64("seed").unwrap(), 3);
        // Defaulted key still resolves.
        assert!(cfg.get_f64("stability.epsilon").unwrap() > 0.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(
            ExperimentConfig::parse("grid.m = 16\n"),
            Err(Error::InvalidConfig(_))
        ));
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_override("nope=1").is_err());
        assert!(cfg.apply_override("grid.n=64").is_ok());
    }

    #[test]
    fn rejects_malformed_lines_and_values() {
        assert!(ExperimentConfig::parse("grid.n 16\n").is_err());
        let cfg = ExperimentConfig::parse("grid.n = sixteen\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn effective_covers_all_keys() {
        let cfg = ExperimentConfig::default();
        let eff = cfg.effective();
        assert!(eff.iter().any(|(k, _)| k == "stability.dt"));
        assert!(eff.iter().any(|(k, _)| k == "capacity.tol"));
        assert_eq!(eff.len(), super::KNOWN_KEYS.len());
    }

    #[test]
    fn list_parsing() {
        let cfg = ExperimentConfig::parse("stability.sigmas = 0, 0.5\n").unwrap();
        assert_eq!(cfg.get_f64_list("stability.sigmas").unwrap(), vec![0.0, 0.5]);
    }
}
