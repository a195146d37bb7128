//! Sweeps: closed-form rows averaged over analytic topology draws and
//! Monte Carlo rows from independently seeded trials.

use rayon::prelude::*;

use crate::cache::{coded_probabilities, place_coded, uncoded_probabilities, CachingProbabilities};
use crate::config::{CacheSpec, SystemConfig};
use crate::error::{Error, Result};
use crate::estimation::{baseline_variances, variances_weighted};
use crate::precoding::PrecoderKind;
use crate::rates::{
    coded_closed_form, formula_id, optimize_alpha, uncoded_closed_form, Ecdr, Scheme, TaggedVariances, Welford,
    ALPHA_BRACKET,
};
use crate::rng::{stream, Stream};
use crate::sim::emit::{ResultRow, ResultTable, Value, MC_CELL, MC_TAGGED};
use crate::sim::plan::{AlphaPolicy, ExperimentPlan};
use crate::sim::trial::{placement_table, run_trial, TrialSetup};
use crate::system_model::{place_users, zipf_popularity, UserId};

#[derive(Debug, Clone, PartialEq)]
enum Probabilities {
    Uncoded(CachingProbabilities),
    Coded { p: f64 },
}

/// Closed-form inputs of one grid point and scheme: the tagged user's
/// variances on a fixed set of topology draws.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPoint {
    pub scheme: Scheme,
    system: SystemConfig,
    probabilities: Probabilities,
    tagged: Vec<TaggedVariances>,
}

/// Topology-averaged closed-form ECDR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormValue {
    pub value: Value,
    pub stderr: f64,
    pub topologies: u64,
    pub infeasible: u64,
}

impl AnalyticPoint {
    pub fn new(system: &SystemConfig, cache: &CacheSpec, scheme: Scheme, seed: u64, topologies: usize) -> Result<Self> {
        let pt = system.pilot_energy();
        let target = UserId::new(0, 0);
        let probabilities = match scheme {
            Scheme::P1 => {
                let popularity = zipf_popularity(system)?;
                Probabilities::Uncoded(uncoded_probabilities(
                    &popularity,
                    &placement_table(system, &popularity, cache),
                )?)
            }
            Scheme::B1 => Probabilities::Uncoded(CachingProbabilities::no_cache(system.cells)),
            Scheme::P2 => {
                let placement = place_coded(system)?;
                Probabilities::Coded { p: coded_probabilities(system.users, placement.t())?.p_other() }
            }
            Scheme::B2 => {
                place_coded(system)?;
                Probabilities::Coded { p: 1.0 }
            }
        };
        let tagged = (0..topologies as u64)
            .map(|i| {
                let ls = place_users(system, &mut stream(seed, Stream::Analytic, i, 0));
                let var = match (&probabilities, scheme) {
                    (Probabilities::Uncoded(q), Scheme::P1) => variances_weighted(&ls, pt, |j, _| q.q_a[j]),
                    _ => baseline_variances(&ls, pt),
                };
                TaggedVariances::of(&var, target)
            })
            .collect();
        Ok(AnalyticPoint { scheme, system: system.clone(), probabilities, tagged })
    }

    fn single(&self, var: &TaggedVariances, precoder: PrecoderKind, alpha: Option<f64>) -> Result<Ecdr> {
        let s = &self.system;
        let (rho0, e0) = (s.rho0(), s.total_power);
        match &self.probabilities {
            Probabilities::Uncoded(q) => uncoded_closed_form(q, var, 0, rho0, e0, precoder, alpha),
            Probabilities::Coded { p } => {
                coded_closed_form(*p, var, 0, rho0, e0, s.library_size, s.cache_size, precoder, alpha)
            }
        }
    }

    pub fn evaluate(&self, precoder: PrecoderKind, alpha: Option<f64>) -> Result<ClosedFormValue> {
        let n = self.tagged.len() as u64;
        let mut acc = Welford::new();
        for var in &self.tagged {
            match self.single(var, precoder, alpha) {
                Ok(Ecdr::Finite(v)) => acc.push(v),
                Ok(Ecdr::Infinite) => {
                    return Ok(ClosedFormValue { value: Value::Infinite, stderr: 0.0, topologies: n, infeasible: 0 })
                }
                Err(Error::InfeasibleLoad { .. }) => {
                    return Ok(ClosedFormValue { value: Value::Missing, stderr: 0.0, topologies: n, infeasible: n })
                }
                Err(e) => return Err(e),
            }
        }
        let value = if acc.count() == 0 { Value::Missing } else { Value::Num(acc.mean()) };
        Ok(ClosedFormValue { value, stderr: acc.stderr(), topologies: n, infeasible: 0 })
    }

    /// Regularization maximizing the averaged RZF closed form.
    pub fn best_alpha(&self) -> Result<f64> {
        if self.evaluate(PrecoderKind::Rzf, Some(1.0))?.value.num().is_none() {
            return Ok(1.0);
        }
        let (alpha, _) = optimize_alpha(
            |a| {
                self.evaluate(PrecoderKind::Rzf, Some(a))?
                    .value
                    .num()
                    .ok_or_else(|| Error::Numeric(format!("RZF closed form undefined at alpha = {a}")))
            },
            ALPHA_BRACKET,
        )?;
        Ok(alpha)
    }
}

/// Monte Carlo statistics of one (grid point, scheme, precoder).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McSummary {
    /// Rate of the tagged user, over trials in which it is active.
    pub tagged: Welford,
    /// Per-trial mean rate of the active users of the target cell.
    pub cell: Welford,
    pub infeasible: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrialSummary {
    infeasible: bool,
    tagged: Option<f64>,
    cell: Option<f64>,
}

/// Run all trials of one grid point and scheme; summaries are merged in
/// trial-index order.
pub fn monte_carlo(setup: &TrialSetup, plan: &ExperimentPlan) -> Result<Vec<McSummary>> {
    let fading = plan.fading_per_topology as u64;
    let per_trial: Vec<Vec<TrialSummary>> = (0..plan.trials() as u64)
        .into_par_iter()
        .map(|i| {
            let out = run_trial(setup, plan.master_seed, i / fading, i % fading)?;
            Ok(out
                .outcomes
                .iter()
                .map(|o| {
                    let rates: Vec<f64> = o.sinr.iter().flatten().map(|g| (1.0 + g).log2()).collect();
                    TrialSummary {
                        infeasible: o.infeasible,
                        tagged: o.sinr[0].map(|g| (1.0 + g).log2()),
                        cell: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![McSummary::default(); setup.precoders.len()];
    for trial in &per_trial {
        for (acc, s) in out.iter_mut().zip(trial) {
            if s.infeasible {
                acc.infeasible += 1;
                continue;
            }
            if let Some(r) = s.tagged {
                acc.tagged.push(r);
            }
            if let Some(r) = s.cell {
                acc.cell.push(r);
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn mc_row(
    sweep_value: f64,
    scheme: Scheme,
    precoder: PrecoderKind,
    formula: &str,
    acc: &Welford,
    scale: Option<f64>,
    seed: u64,
    infeasible: u64,
) -> ResultRow {
    let (ecdr_mean, ecdr_stderr) = match scale {
        None => (Value::Infinite, 0.0),
        Some(_) if acc.count() == 0 => (Value::Missing, 0.0),
        Some(s) => (Value::Num(s * acc.mean()), s * acc.stderr()),
    };
    ResultRow {
        sweep_value,
        scheme,
        precoder,
        formula: formula.to_string(),
        ecdr_mean,
        ecdr_stderr,
        trials: acc.count(),
        seed,
        infeasible_count: infeasible,
    }
}

/// Closed-form and Monte Carlo rows for every grid point, scheme and
/// precoder, on the current rayon pool.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.validate()?;
    let mut rows = Vec::new();
    for &value in &plan.sweep.values {
        let system = plan.system_at(value)?;
        for &scheme in &plan.schemes {
            let point = AnalyticPoint::new(&system, &plan.cache, scheme, plan.master_seed, plan.analytic_topologies)?;
            let alpha = if plan.precoders.contains(&PrecoderKind::Rzf) {
                Some(match plan.alpha {
                    AlphaPolicy::Fixed(a) => a,
                    AlphaPolicy::Optimize => point.best_alpha()?,
                })
            } else {
                None
            };
            log::info!("{} = {value}, {scheme}: alpha = {alpha:?}", plan.sweep.parameter_name());
            for &precoder in &plan.precoders {
                let cf = point.evaluate(precoder, alpha)?;
                rows.push(ResultRow {
                    sweep_value: value,
                    scheme,
                    precoder,
                    formula: formula_id(scheme, precoder).to_string(),
                    ecdr_mean: cf.value,
                    ecdr_stderr: cf.stderr,
                    trials: cf.topologies,
                    seed: plan.master_seed,
                    infeasible_count: cf.infeasible,
                });
            }
            if plan.closed_form_only || plan.precoders.is_empty() {
                continue;
            }
            let setup = TrialSetup::new(&system, &plan.cache, scheme, &plan.precoders, alpha, plan.perfect_csi)?;
            let scale = setup.ecdr_scale();
            let summaries = monte_carlo(&setup, plan)?;
            for (&precoder, mc) in plan.precoders.iter().zip(&summaries) {
                for (formula, acc) in [(MC_TAGGED, &mc.tagged), (MC_CELL, &mc.cell)] {
                    rows.push(mc_row(value, scheme, precoder, formula, acc, scale, plan.master_seed, mc.infeasible));
                }
            }
        }
    }
    Ok(ResultTable { rows })
}

/// [`run_experiment`] on a dedicated pool of `workers` threads.
pub fn run_experiment_with_workers(plan: &ExperimentPlan, workers: usize) -> Result<ResultTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_experiment(plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CacheMode, Placement};
    use crate::sim::plan::{Preset, Sweep, SweepParameter};

    fn tiny_plan() -> ExperimentPlan {
        let mut plan = ExperimentPlan::preset(Preset::Fig2).unwrap();
        plan.system.users = 6;
        plan.system.pilot_length = 6;
        plan.system.antennas = 12;
        plan.sweep = Sweep { parameter: SweepParameter::SnrDb, values: vec![10.0, 20.0] };
        plan.topologies = 4;
        plan.fading_per_topology = 3;
        plan.analytic_topologies = 8;
        plan
    }

    #[test]
    fn row_layout() {
        let table = run_experiment(&tiny_plan()).unwrap();
        // 2 points x 2 schemes x 3 precoders x (closed form + 2 MC rows).
        assert_eq!(table.rows.len(), 36);
        assert!(table.rows.iter().all(|r| r.ecdr_stderr >= 0.0));
        assert_eq!(table.select(MC_CELL, Scheme::B1, PrecoderKind::Zf).count(), 2);
        let b1 = table.select(MC_TAGGED, Scheme::B1, PrecoderKind::Mrt).next().unwrap();
        assert_eq!(b1.trials, 12);
    }

    #[test]
    fn empty_scheme_list_gives_empty_table() {
        let mut plan = tiny_plan();
        plan.schemes.clear();
        assert!(run_experiment(&plan).unwrap().rows.is_empty());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let plan = tiny_plan();
        let a = run_experiment_with_workers(&plan, 1).unwrap();
        let b = run_experiment_with_workers(&plan, 3).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn closed_form_rows_ignore_trial_count() {
        let mut plan = tiny_plan();
        let a = run_experiment(&plan).unwrap();
        plan.topologies = 2;
        let b = run_experiment(&plan).unwrap();
        let cf = |t: &ResultTable| t.rows.iter().filter(|r| !r.is_monte_carlo()).cloned().collect::<Vec<_>>();
        assert_eq!(cf(&a), cf(&b));
    }

    #[test]
    fn baseline_points_match_no_cache_substitution() {
        let mut sys = SystemConfig::desk_default();
        sys.users = 10;
        sys.pilot_length = 10;
        sys.antennas = 15;
        let spec = CacheSpec { mode: CacheMode::Uncoded, placement: Placement::Deterministic };
        let b1 = AnalyticPoint::new(&sys, &spec, Scheme::B1, 4, 5).unwrap();
        // Zero cache: the proposed scheme reduces to the baseline exactly.
        sys.cache_size = 0;
        let p1 = AnalyticPoint::new(&sys, &spec, Scheme::P1, 4, 5).unwrap();
        for kind in PrecoderKind::ALL {
            let a = p1.evaluate(kind, Some(0.2)).unwrap();
            let b = b1.evaluate(kind, Some(0.2)).unwrap();
            let (a, b) = (a.value.num().unwrap(), b.value.num().unwrap());
            assert!((a - b).abs() <= 1e-12 * b, "{kind}: {a} vs {b}");
        }
    }
}
