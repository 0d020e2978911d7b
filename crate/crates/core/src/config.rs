//! Tunable thresholds for the restructuring scans, loadable from a simple
//! `key = value` file.

use std::io::{self, BufRead};

/// Scan thresholds and mode flags. The defaults keep the scans eager so
/// identical inputs always produce identical structures.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseConfig {
    /// A branch shared as a complete leaf-ward path by this many distinct
    /// trees gets factored into its own tree.
    pub min_share: u64,
    /// A node splits off when neg >= falsity_ratio * pos.
    pub falsity_ratio: f64,
    /// Unused link strength halves every this many decay ticks.
    pub decay_half_life: f64,
    /// Links weaker than this are dropped.
    pub strength_floor: f64,
    /// Run the scans after every ingest; when false they run on request or
    /// at the end of a batch.
    pub eager_scans: bool,
}

impl Default for BaseConfig {
    fn default() -> Self {
        BaseConfig {
            min_share: 2,
            falsity_ratio: 1.0,
            decay_half_life: 8.0,
            strength_floor: 0.05,
            eager_scans: true,
        }
    }
}

impl BaseConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// rejected so typos do not silently fall back to defaults.
    pub fn from_reader(r: impl BufRead) -> io::Result<Self> {
        let mut config = BaseConfig::default();
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            let line = match line.split_once('#') {
                Some((before, _)) => before,
                None => line.as_str(),
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, format!("config line {}: {}", no + 1, msg));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".to_string()))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "min_share" => config.min_share = value.parse().map_err(|e| bad(format!("min_share: {}", e)))?,
                "falsity_ratio" => config.falsity_ratio = value.parse().map_err(|e| bad(format!("falsity_ratio: {}", e)))?,
                "decay_half_life" => config.decay_half_life = value.parse().map_err(|e| bad(format!("decay_half_life: {}", e)))?,
                "strength_floor" => config.strength_floor = value.parse().map_err(|e| bad(format!("strength_floor: {}", e)))?,
                "eager_scans" => config.eager_scans = value.parse().map_err(|e| bad(format!("eager_scans: {}", e)))?,
                other => return Err(bad(format!("unknown key {:?}", other))),
            }
        }
        config.check().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.min_share == 0 {
            return Err("min_share must be >= 1".into());
        }
        if !(self.falsity_ratio.is_finite() && self.falsity_ratio > 0.0) {
            return Err("falsity_ratio must be a positive finite number".into());
        }
        if !(self.decay_half_life.is_finite() && self.decay_half_life > 0.0) {
            return Err("decay_half_life must be a positive finite number".into());
        }
        if !(self.strength_floor.is_finite() && (0.0..1.0).contains(&self.strength_floor)) {
            return Err("strength_floor must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Deterministic `key = value` rendering, keys sorted.
    pub fn render(&self) -> String {
        format!(
            "decay_half_life = {:?}\neager_scans = {}\nfalsity_ratio = {:?}\nmin_share = {}\nstrength_floor = {:?}\n",
            self.decay_half_life, self.eager_scans, self.falsity_ratio, self.min_share, self.strength_floor
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let text = "min_share = 3\nfalsity_ratio = 2.5 # looser\n\neager_scans = false\n";
        let c = BaseConfig::from_reader(text.as_bytes()).unwrap();
        assert_eq!(c.min_share, 3);
        assert_eq!(c.falsity_ratio, 2.5);
        assert!(!c.eager_scans);
        assert_eq!(c.decay_half_life, 8.0);

        assert!(BaseConfig::from_reader("bogus = 1\n".as_bytes()).is_err());
        assert!(BaseConfig::from_reader("min_share = 0\n".as_bytes()).is_err());
        assert!(BaseConfig::from_reader("min_share == 2\n".as_bytes()).is_err());
    }

    #[test]
    fn render_parses_back() {
        let c = BaseConfig::default();
        let parsed = BaseConfig::from_reader(c.render().as_bytes()).unwrap();
        assert_eq!(parsed, c);
    }
}
