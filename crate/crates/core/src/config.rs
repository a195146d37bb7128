//! System configuration and the JSON configuration file schema.
//!
//! A configuration file carries the scalar system parameters at the top level
//! (keys `B`, `K`, `M`, `L_s`, `L_u`, `F_mbytes`, `tau`, `pilot_power`, `E0`,
//! `gamma`, `eta`), an optional `cache` object selecting the cache mode and
//! placement, and an optional `experiment` object describing a sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::plan::ExperimentSpec;

/// Scalar parameters of the multi-cell system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of cells.
    #[serde(rename = "B")]
    pub cells: usize,
    /// Users per cell.
    #[serde(rename = "K")]
    pub users: usize,
    /// BS antennas.
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "L_s")]
    pub library_size: usize,
    /// Cache size per user, in files.
    #[serde(rename = "L_u")]
    pub cache_size: usize,
    #[serde(rename = "F_mbytes")]
    pub file_size_mbytes: f64,
    /// Pilot length in symbols.
    #[serde(rename = "tau")]
    pub pilot_length: usize,
    /// Pilot symbol power (linear).
    pub pilot_power: f64,
    /// Total BS transmit power (linear); the transmit SNR is `10 log10(E0)`.
    #[serde(rename = "E0")]
    pub total_power: f64,
    #[serde(rename = "gamma")]
    pub pathloss_exponent: f64,
    /// Per-cell Zipf exponents.
    #[serde(rename = "eta")]
    pub zipf_exponents: Vec<f64>,
}

impl SystemConfig {
    /// Desk-scale defaults: three cells, 40 users and 60 antennas per cell,
    /// a 100-file library with 6-file caches, 20 dB SNR.
    pub fn desk_default() -> Self {
        SystemConfig {
            cells: 3,
            users: 40,
            antennas: 60,
            library_size: 100,
            cache_size: 6,
            file_size_mbytes: 1.0,
            pilot_length: 40,
            pilot_power: 1.0,
            total_power: 100.0,
            pathloss_exponent: 3.8,
            zipf_exponents: vec![0.6, 0.5, 0.4],
        }
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.total_power.log10()
    }

    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.total_power = 10f64.powf(snr_db / 10.0);
    }

    /// Antennas per user.
    pub fn rho0(&self) -> f64 {
        self.antennas as f64 / self.users as f64
    }

    /// Pilot power times pilot length.
    pub fn pilot_energy(&self) -> f64 {
        self.pilot_power * self.pilot_length as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 || self.users == 0 || self.antennas == 0 {
            return Err(Error::config("B, K and M must all be at least 1"));
        }
        if self.library_size == 0 {
            return Err(Error::config("L_s must be at least 1"));
        }
        if self.cache_size >= self.library_size {
            return Err(Error::config(format!(
                "L_u = {} must be smaller than L_s = {}",
                self.cache_size, self.library_size
            )));
        }
        if self.pilot_length < self.users {
            return Err(Error::config(format!(
                "tau = {} is shorter than K = {}; orthogonal pilots do not exist",
                self.pilot_length, self.users
            )));
        }
        for (name, v) in [
            ("F_mbytes", self.file_size_mbytes),
            ("pilot_power", self.pilot_power),
            ("E0", self.total_power),
            ("gamma", self.pathloss_exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.zipf_exponents.len() != self.cells {
            return Err(Error::config(format!("eta has {} entries but B = {}", self.zipf_exponents.len(), self.cells)));
        }
        for (j, &eta) in self.zipf_exponents.iter().enumerate() {
            if !eta.is_finite() || eta < 0.0 {
                return Err(Error::config(format!("eta[{j}] = {eta} is not a valid exponent")));
            }
            if eta <= 0.0 || eta >= 1.0 {
                log::warn!("eta[{j}] = {eta} lies outside (0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    #[default]
    Uncoded,
    Coded,
    None,
}

/// How per-cell placement probabilities are chosen in uncoded mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Every file cached with probability `L_u / L_s`.
    Uniform,
    /// The `L_u` most popular files of each cell are cached.
    #[default]
    Deterministic,
    /// An explicit `B x L_s` table of caching probabilities.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CacheSpec {
    #[serde(default)]
    pub mode: CacheMode,
    #[serde(default)]
    pub placement: Placement,
}

/// Top-level layout of a JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub system: SystemConfig,
    #[serde(default)]
    pub cache: CacheSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        file.system.validate()?;
        if let Placement::Explicit(table) = &file.cache.placement {
            if table.len() != file.system.cells || table.iter().any(|row| row.len() != file.system.library_size) {
                return Err(Error::config("explicit placement table must be B x L_s"));
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "B": 2, "K": 4, "M": 16, "L_s": 10, "L_u": 2, "F_mbytes": 1.0,
        "tau": 4, "pilot_power": 1.0, "E0": 10.0, "gamma": 3.8, "eta": [0.6, 0.5]
    }"#;

    #[test]
    fn parses_minimal_file_with_defaults() {
        let file = ConfigFile::from_json(MINIMAL).unwrap();
        assert_eq!(file.system.cells, 2);
        assert_eq!(file.system.antennas, 16);
        assert_eq!(file.cache.mode, CacheMode::Uncoded);
        assert_eq!(file.cache.placement, Placement::Deterministic);
        assert!((file.system.snr_db() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn parses_cache_variants() {
        let text = MINIMAL.replace(
            "\"eta\": [0.6, 0.5]",
            "\"eta\": [0.6, 0.5], \"cache\": {\"mode\": \"coded\", \"placement\": \"uniform\"}",
        );
        let file = ConfigFile::from_json(&text).unwrap();
        assert_eq!(file.cache.mode, CacheMode::Coded);
        assert_eq!(file.cache.placement, Placement::Uniform);

        let row = ["0.1"; 10].join(",");
        let text = MINIMAL.replace(
            "\"eta\": [0.6, 0.5]",
            &format!("\"eta\": [0.6, 0.5], \"cache\": {{\"placement\": {{\"explicit\": [[{row}],[{row}]]}}}}"),
        );
        let file = ConfigFile::from_json(&text).unwrap();
        assert!(matches!(file.cache.placement, Placement::Explicit(ref t) if t.len() == 2));
    }

    #[test]
    fn rejects_invalid_systems() {
        let bad_cache = MINIMAL.replace("\"L_u\": 2", "\"L_u\": 10");
        assert!(matches!(ConfigFile::from_json(&bad_cache), Err(Error::Config(_))));
        let bad_tau = MINIMAL.replace("\"tau\": 4", "\"tau\": 3");
        assert!(matches!(ConfigFile::from_json(&bad_tau), Err(Error::Config(_))));
        let bad_eta = MINIMAL.replace("[0.6, 0.5]", "[0.6]");
        assert!(matches!(ConfigFile::from_json(&bad_eta), Err(Error::Config(_))));
        let unknown = MINIMAL.replace("\"gamma\"", "\"gama\"");
        assert!(ConfigFile::from_json(&unknown).is_err());
    }

    #[test]
    fn snr_round_trip() {
        let mut cfg = SystemConfig::desk_default();
        cfg.set_snr_db(13.0);
        assert!((cfg.snr_db() - 13.0).abs() < 1e-12);
    }
}
