//! Experiment plans and the desk-scale figure presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{CacheMode, CacheSpec, ConfigFile, Placement, SystemConfig};
use crate::error::{Error, Result};
use crate::precoding::PrecoderKind;
use crate::rates::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig1,
    Fig2,
    Fig4,
    Fig6,
    Custom,
}

impl Preset {
    pub const FIGURES: [Preset; 4] = [Preset::Fig1, Preset::Fig2, Preset::Fig4, Preset::Fig6];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig4 => "fig4",
            Preset::Fig6 => "fig6",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Preset::Fig1),
            "fig2" => Ok(Preset::Fig2),
            "fig4" => Ok(Preset::Fig4),
            "fig6" => Ok(Preset::Fig6),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::config(format!("unknown preset '{other}'"))),
        }
    }
}

/// The swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Antennas per user; `M = round(ρ0 K)` at fixed `K`.
    #[serde(rename = "rho0")]
    Rho0,
    #[serde(rename = "snr_db")]
    SnrDb,
    /// Zipf exponent applied to every cell.
    #[serde(rename = "eta")]
    Eta,
    /// Cache size in files.
    #[serde(rename = "L_u")]
    CacheSize,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Rho0 => "rho0",
            SweepParameter::SnrDb => "snr_db",
            SweepParameter::Eta => "eta",
            SweepParameter::CacheSize => "L_u",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn parameter_name(&self) -> &'static str {
        self.parameter.as_str()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaPolicy {
    /// Maximize the closed-form ECDR at every grid point.
    Optimize,
    Fixed(f64),
}

/// The optional `experiment` object of a configuration file. Missing
/// fields fall back to the preset (or to defaults for custom runs).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub preset: Option<Preset>,
    pub sweep: Option<Sweep>,
    pub schemes: Option<Vec<Scheme>>,
    pub precoders: Option<Vec<PrecoderKind>>,
    pub topologies: Option<usize>,
    pub fading_per_topology: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<AlphaPolicy>,
    pub analytic_topologies: Option<usize>,
    pub perfect_csi: Option<bool>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub preset: Preset,
    pub system: SystemConfig,
    pub cache: CacheSpec,
    pub sweep: Sweep,
    pub schemes: Vec<Scheme>,
    pub precoders: Vec<PrecoderKind>,
    pub topologies: usize,
    pub fading_per_topology: usize,
    pub master_seed: u64,
    pub alpha: AlphaPolicy,
    /// Topology draws averaged by the closed-form rows.
    pub analytic_topologies: usize,
    /// Give the BSs the true channels instead of MMSE estimates.
    pub perfect_csi: bool,
    /// Skip the Monte Carlo rows.
    pub closed_form_only: bool,
}

pub const DEFAULT_SEED: u64 = 2023;
const DEFAULT_ANALYTIC_TOPOLOGIES: usize = 200;

fn grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    // Rounded so that grid values print cleanly.
    (0..count).map(|i| ((start + step * i as f64) * 1e9).round() / 1e9).collect()
}

impl ExperimentPlan {
    /// Desk-scale version of a figure setup.
    pub fn preset(preset: Preset) -> Result<Self> {
        let mut system = SystemConfig::desk_default();
        let uncoded = CacheSpec { mode: CacheMode::Uncoded, placement: Placement::Deterministic };
        let (sweep, cache, schemes) = match preset {
            Preset::Fig1 => (
                Sweep { parameter: SweepParameter::Rho0, values: grid(1.1, 0.1, 12) },
                uncoded,
                vec![Scheme::P1, Scheme::B1],
            ),
            Preset::Fig2 => (
                Sweep { parameter: SweepParameter::SnrDb, values: grid(0.0, 5.0, 7) },
                uncoded,
                vec![Scheme::P1, Scheme::B1],
            ),
            Preset::Fig4 => (
                Sweep { parameter: SweepParameter::Eta, values: grid(0.1, 0.1, 9) },
                uncoded,
                vec![Scheme::P1, Scheme::B1],
            ),
            Preset::Fig6 => {
                system.cells = 4;
                system.users = 32;
                system.pilot_length = 32;
                system.cache_size = 25;
                system.zipf_exponents = vec![0.6, 0.5, 0.4, 0.3];
                system.set_snr_db(10.0);
                let coded = CacheSpec { mode: CacheMode::Coded, placement: Placement::Deterministic };
                (
                    Sweep { parameter: SweepParameter::Rho0, values: grid(1.1, 0.1, 12) },
                    coded,
                    vec![Scheme::P2, Scheme::B2],
                )
            }
            Preset::Custom => return Err(Error::config("the custom preset needs a configuration file")),
        };
        system.antennas = (1.5 * system.users as f64).round() as usize;
        let plan = ExperimentPlan {
            preset,
            system,
            cache,
            sweep,
            schemes,
            precoders: PrecoderKind::ALL.to_vec(),
            topologies: 200,
            fading_per_topology: 10,
            master_seed: DEFAULT_SEED,
            alpha: AlphaPolicy::Optimize,
            analytic_topologies: DEFAULT_ANALYTIC_TOPOLOGIES,
            perfect_csi: false,
            closed_form_only: false,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Plan described by a configuration file. An explicit `preset` overrides
    /// the file's preset; a figure preset keeps the file's system parameters
    /// only for the keys it does not fix.
    pub fn from_config(file: &ConfigFile, preset: Option<Preset>) -> Result<Self> {
        let spec = file.experiment.clone().unwrap_or_default();
        let preset = preset.or(spec.preset).unwrap_or(Preset::Custom);
        let mut plan = match preset {
            Preset::Custom => {
                let schemes = match file.cache.mode {
                    CacheMode::Uncoded => vec![Scheme::P1, Scheme::B1],
                    CacheMode::Coded => vec![Scheme::P2, Scheme::B2],
                    CacheMode::None => vec![Scheme::B1],
                };
                ExperimentPlan {
                    preset,
                    system: file.system.clone(),
                    cache: file.cache.clone(),
                    sweep: Sweep { parameter: SweepParameter::Rho0, values: vec![file.system.rho0()] },
                    schemes,
                    precoders: PrecoderKind::ALL.to_vec(),
                    topologies: 200,
                    fading_per_topology: 10,
                    master_seed: DEFAULT_SEED,
                    alpha: AlphaPolicy::Optimize,
                    analytic_topologies: DEFAULT_ANALYTIC_TOPOLOGIES,
                    perfect_csi: false,
                    closed_form_only: false,
                }
            }
            figure => {
                let mut plan = Self::preset(figure)?;
                // Figure presets fix B, K, L_u, SNR and eta; the remaining
                // keys come from the file.
                plan.system.library_size = file.system.library_size;
                plan.system.file_size_mbytes = file.system.file_size_mbytes;
                plan.system.pilot_power = file.system.pilot_power;
                plan.system.pathloss_exponent = file.system.pathloss_exponent;
                plan
            }
        };
        if let Some(sweep) = spec.sweep {
            plan.sweep = sweep;
        }
        if let Some(s) = spec.schemes {
            plan.schemes = s;
        }
        if let Some(p) = spec.precoders {
            plan.precoders = p;
        }
        if let Some(t) = spec.topologies {
            plan.topologies = t;
        }
        if let Some(f) = spec.fading_per_topology {
            plan.fading_per_topology = f;
        }
        if let Some(s) = spec.seed {
            plan.master_seed = s;
        }
        if let Some(a) = spec.alpha {
            plan.alpha = a;
        }
        if let Some(n) = spec.analytic_topologies {
            plan.analytic_topologies = n;
        }
        if let Some(p) = spec.perfect_csi {
            plan.perfect_csi = p;
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn trials(&self) -> usize {
        self.topologies * self.fading_per_topology
    }

    /// Set the total number of trials, keeping the fading draws per topology.
    pub fn set_trials(&mut self, trials: usize) -> Result<()> {
        if trials == 0 {
            return Err(Error::config("the trial count must be at least 1"));
        }
        self.fading_per_topology = self.fading_per_topology.min(trials);
        self.topologies = trials.div_ceil(self.fading_per_topology);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.sweep.values.is_empty() {
            return Err(Error::config("the sweep grid is empty"));
        }
        if self.topologies == 0 || self.fading_per_topology == 0 || self.analytic_topologies == 0 {
            return Err(Error::config("trial counts must be at least 1"));
        }
        if let AlphaPolicy::Fixed(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::config(format!("fixed alpha must be positive, got {a}")));
            }
        }
        for &v in &self.sweep.values {
            self.system_at(v)?;
        }
        Ok(())
    }

    /// System parameters at one grid point.
    pub fn system_at(&self, value: f64) -> Result<SystemConfig> {
        let mut s = self.system.clone();
        if !value.is_finite() {
            return Err(Error::config(format!("sweep value {value} is not finite")));
        }
        match self.sweep.parameter {
            SweepParameter::Rho0 => {
                if value <= 0.0 {
                    return Err(Error::config(format!("rho0 must be positive, got {value}")));
                }
                s.antennas = (value * s.users as f64).round().max(1.0) as usize;
            }
            SweepParameter::SnrDb => s.set_snr_db(value),
            SweepParameter::Eta => s.zipf_exponents = vec![value; s.cells],
            SweepParameter::CacheSize => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::config(format!("L_u must be a whole number of files, got {value}")));
                }
                s.cache_size = value as usize;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in Preset::FIGURES {
            let plan = ExperimentPlan::preset(p).unwrap();
            assert!(plan.trials() >= 2000);
            assert!(!plan.sweep.values.is_empty());
        }
        let fig1 = ExperimentPlan::preset(Preset::Fig1).unwrap();
        assert_eq!(fig1.sweep.values.first(), Some(&1.1));
        assert_eq!(fig1.sweep.values.last(), Some(&2.2));
        assert_eq!(fig1.system.users, 40);
        assert_eq!(fig1.system_at(1.1).unwrap().antennas, 44);
        let fig6 = ExperimentPlan::preset(Preset::Fig6).unwrap();
        assert_eq!(fig6.system.cache_size * fig6.system.users % fig6.system.library_size, 0);
        assert!(ExperimentPlan::preset(Preset::Custom).is_err());
    }

    #[test]
    fn set_trials_keeps_fading_depth() {
        let mut plan = ExperimentPlan::preset(Preset::Fig2).unwrap();
        plan.set_trials(95).unwrap();
        assert_eq!(plan.fading_per_topology, 10);
        assert_eq!(plan.topologies, 10);
        plan.set_trials(3).unwrap();
        assert_eq!(plan.trials(), 3);
        assert!(plan.set_trials(0).is_err());
    }

    #[test]
    fn experiment_section_parses() {
        let text = r#"{
            "B": 2, "K": 4, "M": 16, "L_s": 10, "L_u": 2, "F_mbytes": 1.0,
            "tau": 4, "pilot_power": 1.0, "E0": 10.0, "gamma": 3.8, "eta": [0.6, 0.5],
            "experiment": {
                "sweep": {"parameter": "snr_db", "values": [0, 10]},
                "schemes": ["P1"], "precoders": ["ZF", "RZF"],
                "topologies": 3, "fading_per_topology": 2, "seed": 7,
                "alpha": {"fixed": 0.25}
            }
        }"#;
        let file = ConfigFile::from_json(text).unwrap();
        let plan = ExperimentPlan::from_config(&file, None).unwrap();
        assert_eq!(plan.preset, Preset::Custom);
        assert_eq!(plan.sweep.parameter, SweepParameter::SnrDb);
        assert_eq!(plan.schemes, vec![Scheme::P1]);
        assert_eq!(plan.precoders, vec![PrecoderKind::Zf, PrecoderKind::Rzf]);
        assert_eq!(plan.trials(), 6);
        assert_eq!(plan.master_seed, 7);
        assert_eq!(plan.alpha, AlphaPolicy::Fixed(0.25));
        assert!((plan.system_at(10.0).unwrap().total_power - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut plan = ExperimentPlan::preset(Preset::Fig1).unwrap();
        plan.sweep.values.clear();
        assert!(matches!(plan.validate(), Err(Error::Config(_))));
        let mut plan = ExperimentPlan::preset(Preset::Fig4).unwrap();
        plan.sweep = Sweep { parameter: SweepParameter::CacheSize, values: vec![100.0] };
        assert!(plan.validate().is_err());
    }
}
