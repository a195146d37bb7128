//! One Monte Carlo trial: topology, requests and caches, fading, channel
//! estimation, precoders for every active user and the effective SINRs of
//! the users of one cell.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rand::Rng;

use crate::cache::{
    deterministic_placement, draw_requests, incidence, place_coded, place_uncoded, uncoded_probabilities,
    uniform_placement, zf_constraint_set, CacheContents, CacheIncidence, CachingProbabilities, CodedPlacement,
    PlacementProbs, RequestState,
};
use crate::config::{CacheSpec, Placement, SystemConfig};
use crate::error::{Error, Result};
use crate::estimation::{draw_fading, mmse_estimate, EstimateSet, Variances};
use crate::precoding::{g_function, mrt, rzf_with_gram, zf_lambda, zf_with_gram, PrecoderKind};
use crate::rates::{PowerAllocation, PrecoderSet, Scheme};
use crate::rng::{stream, Stream};
use crate::system_model::{place_users, zipf_popularity, LargeScaleState, PopularityProfile};

/// How caches and requests are drawn for a scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum CacheModel {
    /// No caching, every user active and interfering.
    None,
    Uncoded {
        popularity: PopularityProfile,
        placement: PlacementProbs,
        probabilities: CachingProbabilities,
    },
    Coded {
        placement: CodedPlacement,
    },
}

/// Everything a trial needs besides its indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub system: SystemConfig,
    pub scheme: Scheme,
    pub model: CacheModel,
    pub precoders: Vec<PrecoderKind>,
    /// RZF regularization.
    pub alpha: Option<f64>,
    pub perfect_csi: bool,
    /// Cell whose users are measured.
    pub target_cell: usize,
}

/// Placement probabilities selected by a cache spec.
pub fn placement_table(system: &SystemConfig, popularity: &PopularityProfile, cache: &CacheSpec) -> PlacementProbs {
    match &cache.placement {
        Placement::Uniform => uniform_placement(system),
        Placement::Deterministic => deterministic_placement(popularity, system.cache_size),
        Placement::Explicit(table) => table.clone(),
    }
}

impl TrialSetup {
    pub fn new(
        system: &SystemConfig,
        cache: &CacheSpec,
        scheme: Scheme,
        precoders: &[PrecoderKind],
        alpha: Option<f64>,
        perfect_csi: bool,
    ) -> Result<Self> {
        system.validate()?;
        let model = match scheme {
            Scheme::B1 | Scheme::B2 => CacheModel::None,
            Scheme::P1 => {
                let popularity = zipf_popularity(system)?;
                let placement = placement_table(system, &popularity, cache);
                let probabilities = uncoded_probabilities(&popularity, &placement)?;
                CacheModel::Uncoded { popularity, placement, probabilities }
            }
            Scheme::P2 => CacheModel::Coded { placement: place_coded(system)? },
        };
        if scheme == Scheme::B2 {
            place_coded(system)?;
        }
        Ok(TrialSetup {
            system: system.clone(),
            scheme,
            model,
            precoders: precoders.to_vec(),
            alpha,
            perfect_csi,
            target_cell: 0,
        })
    }

    /// Factor turning the mean rate of an active target-cell user into an
    /// average ECDR; `None` when nothing is ever delivered.
    pub fn ecdr_scale(&self) -> Option<f64> {
        let s = &self.system;
        match self.scheme {
            Scheme::B1 => Some(1.0),
            Scheme::P1 => match &self.model {
                CacheModel::Uncoded { probabilities, .. } => {
                    let qa = probabilities.q_a[self.target_cell];
                    (qa > 0.0).then(|| 1.0 / qa)
                }
                _ => Some(1.0),
            },
            Scheme::P2 | Scheme::B2 => Some(s.library_size as f64 / (s.library_size - s.cache_size) as f64),
        }
    }
}

/// Topology plus the cache state of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub large_scale: LargeScaleState,
    pub incidence: CacheIncidence,
}

/// Topology `topology` (shared by all cache draws of that topology) with
/// cache draw `index`.
pub fn draw_scenario(setup: &TrialSetup, master: u64, topology: u64, index: u64) -> Result<Scenario> {
    let large_scale = place_users(&setup.system, &mut stream(master, Stream::Topology, topology, 0));
    let mut rng = stream(master, Stream::Cache, topology, index);
    let incidence = draw_incidence(setup, &mut rng)?;
    Ok(Scenario { large_scale, incidence })
}

fn draw_incidence<R: Rng + ?Sized>(setup: &TrialSetup, rng: &mut R) -> Result<CacheIncidence> {
    let s = &setup.system;
    match &setup.model {
        CacheModel::None => Ok(CacheIncidence::from_fn(s.cells, s.users, |_, _, _, _| true)),
        CacheModel::Uncoded { popularity, placement, .. } => {
            let cache = place_uncoded(s, popularity, placement, rng)?;
            let requests = draw_requests(popularity, s.users, rng);
            incidence(&CacheContents::Uncoded(cache), &requests)
        }
        CacheModel::Coded { placement } => {
            // Interference depends only on the delivered subfile index.
            let mut requests = RequestState::from_files(s.cells, s.users, vec![0; s.cells * s.users])?;
            requests.select_subfiles(placement, rng);
            incidence(&CacheContents::Coded(*placement), &requests)
        }
    }
}

/// Small-scale quantities of one fading draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub estimates: EstimateSet,
    pub power: PowerAllocation,
}

pub fn draw_realization<R: Rng + ?Sized>(setup: &TrialSetup, scenario: &Scenario, rng: &mut R) -> Realization {
    let s = &setup.system;
    let channel = draw_fading(s.antennas, &scenario.large_scale, rng);
    let estimates = if setup.perfect_csi {
        EstimateSet::perfect(&channel, &scenario.large_scale, &scenario.incidence)
    } else {
        mmse_estimate(&channel, &scenario.large_scale, &scenario.incidence, s.pilot_power, s.pilot_length, rng)
    };
    let power = PowerAllocation::uniform(s.total_power, &scenario.incidence);
    Realization { estimates, power }
}

/// Own-cell estimates of the active users of every cell and their Gram
/// matrices, shared by the precoders of that cell.
pub struct CellGrams {
    active: Vec<Vec<usize>>,
    position: Vec<Vec<usize>>,
    h: Vec<DMatrix<Complex64>>,
    gram: Vec<DMatrix<Complex64>>,
}

impl CellGrams {
    pub fn new(scenario: &Scenario, realization: &Realization) -> Self {
        let inc = &scenario.incidence;
        let (b, k) = (inc.cells(), inc.users());
        let mut out = CellGrams { active: Vec::new(), position: Vec::new(), h: Vec::new(), gram: Vec::new() };
        for j in 0..b {
            let active: Vec<usize> = (0..k).filter(|&l| inc.is_active(j, l)).collect();
            let mut position = vec![usize::MAX; k];
            for (p, &l) in active.iter().enumerate() {
                position[l] = p;
            }
            let all = realization.estimates.h_hat_at(j);
            let h = DMatrix::from_fn(all.nrows(), active.len(), |r, c| all[(r, j * k + active[c])]);
            out.gram.push(h.ad_mul(&h));
            out.h.push(h);
            out.active.push(active);
            out.position.push(position);
        }
        out
    }
}

/// Basis and inverse (regularized) Gram of all active users of a cell,
/// shared by every user whose constraint set is the whole cell.
fn full_solve(
    setup: &TrialSetup,
    grams: &CellGrams,
    var: &Variances,
    j: usize,
    kind: PrecoderKind,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let m = setup.system.antennas;
    let (basis, gram) = if kind == PrecoderKind::Zf {
        (grams.h[j].clone(), grams.gram[j].clone())
    } else {
        let alpha = setup.alpha.ok_or_else(|| Error::config("RZF needs a regularization parameter"))?;
        let scale: Vec<f64> = grams.active[j].iter().map(|&c| 1.0 / (m as f64 * var.hat(j, c, j)).sqrt()).collect();
        let h = &grams.h[j];
        let f = DMatrix::from_fn(m, scale.len(), |r, c| h[(r, c)] * scale[c]);
        let g = DMatrix::from_fn(scale.len(), scale.len(), |r, c| {
            grams.gram[j][(r, c)] * (scale[r] * scale[c])
                + if r == c { Complex64::from(alpha) } else { Complex64::from(0.0) }
        });
        (f, g)
    };
    let inverse =
        Cholesky::new(gram).ok_or_else(|| Error::Numeric("Gram matrix is not positive definite".into()))?.inverse();
    if inverse.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("Gram matrix is numerically singular".into()));
    }
    Ok((basis, inverse))
}

/// Precoders of all active users, or `None` if some ZF precoder is
/// infeasible.
pub fn build_precoders(
    setup: &TrialSetup,
    scenario: &Scenario,
    realization: &Realization,
    grams: &CellGrams,
    kind: PrecoderKind,
) -> Result<Option<PrecoderSet>> {
    let inc = &scenario.incidence;
    let var = realization.estimates.variances();
    let m = setup.system.antennas;
    let mut set = PrecoderSet::new(inc.cells(), inc.users(), m);
    for j in 0..inc.cells() {
        let pos = &grams.position[j];
        let mut full = None;
        for &l in &grams.active[j] {
            let beta_hat = var.hat(j, l, j);
            let w = match kind {
                PrecoderKind::Mrt => mrt(grams.h[j].column(pos[l]), beta_hat)?.w,
                PrecoderKind::Zf | PrecoderKind::Rzf => {
                    let cols: Vec<usize> =
                        std::iter::once(l).chain(zf_constraint_set(inc, j, l).into_iter().map(|u| u.user)).collect();
                    if kind == PrecoderKind::Zf && zf_lambda(m, cols.len() - 1, beta_hat).is_err() {
                        return Ok(None);
                    }
                    if cols.len() == grams.active[j].len() {
                        if full.is_none() {
                            full = Some(full_solve(setup, grams, var, j, kind)?);
                        }
                        let (basis, inverse) = full.as_ref().expect("just computed");
                        let lambda = if kind == PrecoderKind::Zf {
                            zf_lambda(m, cols.len() - 1, beta_hat)?
                        } else {
                            let alpha = setup.alpha.expect("checked by full_solve");
                            g_function((cols.len() - 1) as f64 / m as f64, alpha)?.lambda()
                        };
                        basis * inverse.column(pos[l]) * Complex64::from(lambda.sqrt())
                    } else {
                        let idx: Vec<usize> = cols.iter().map(|&c| pos[c]).collect();
                        let q = grams.h[j].select_columns(&idx);
                        let gram = grams.gram[j].select_rows(&idx).select_columns(&idx);
                        if kind == PrecoderKind::Zf {
                            zf_with_gram(&q, gram, beta_hat)?.w
                        } else {
                            let alpha =
                                setup.alpha.ok_or_else(|| Error::config("RZF needs a regularization parameter"))?;
                            let scale: Vec<f64> =
                                cols.iter().map(|&c| 1.0 / (m as f64 * var.hat(j, c, j)).sqrt()).collect();
                            let f = DMatrix::from_fn(m, cols.len(), |r, c| q[(r, c)] * scale[c]);
                            let g =
                                DMatrix::from_fn(cols.len(), cols.len(), |r, c| gram[(r, c)] * (scale[r] * scale[c]));
                            rzf_with_gram(&f, g, alpha)?.w
                        }
                    }
                }
            };
            set.set(j, l, &w);
        }
    }
    Ok(Some(set))
}

/// Effective SINR of every user of `cell` (`None` for inactive users).
pub fn cell_sinrs(
    scenario: &Scenario,
    realization: &Realization,
    precoders: &PrecoderSet,
    cell: usize,
) -> Vec<Option<f64>> {
    let inc = &scenario.incidence;
    let (b, k) = (inc.cells(), inc.users());
    let est = &realization.estimates;
    let mut signal = vec![0.0; k];
    let mut denom = vec![1.0; k];
    for j in 0..b {
        let e = realization.power.power(j);
        let w = precoders.cell(j);
        let hat = est.h_hat_at(j).columns(cell * k, k).ad_mul(w);
        let err = est.h_tilde_at(j).columns(cell * k, k).ad_mul(w);
        for t in 0..k {
            if !inc.is_active(cell, t) {
                continue;
            }
            for l in 0..k {
                if !inc.is_active(j, l) {
                    continue;
                }
                let error = e * err[(t, l)].norm_sqr();
                if (j, l) == (cell, t) {
                    signal[t] = e * hat[(t, l)].norm_sqr();
                    denom[t] += error;
                } else if inc.c(j, l, cell, t) {
                    denom[t] += e * hat[(t, l)].norm_sqr() + error;
                }
            }
        }
    }
    (0..k).map(|t| inc.is_active(cell, t).then(|| signal[t] / denom[t])).collect()
}

/// SINRs of the target cell for one precoder type.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderOutcome {
    pub kind: PrecoderKind,
    /// Some ZF precoder of the realization did not exist.
    pub infeasible: bool,
    pub sinr: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub outcomes: Vec<PrecoderOutcome>,
}

impl TrialOutcome {
    pub fn active_users(&self) -> usize {
        self.outcomes.first().map_or(0, |o| o.sinr.iter().filter(|s| s.is_some()).count())
    }
}

/// One fading draw on a fixed scenario.
pub fn simulate_fading<R: Rng + ?Sized>(setup: &TrialSetup, scenario: &Scenario, rng: &mut R) -> Result<TrialOutcome> {
    let realization = draw_realization(setup, scenario, rng);
    let grams = CellGrams::new(scenario, &realization);
    let k = setup.system.users;
    let outcomes = setup
        .precoders
        .iter()
        .map(|&kind| {
            Ok(match build_precoders(setup, scenario, &realization, &grams, kind)? {
                Some(set) => PrecoderOutcome {
                    kind,
                    infeasible: false,
                    sinr: cell_sinrs(scenario, &realization, &set, setup.target_cell),
                },
                None => PrecoderOutcome { kind, infeasible: true, sinr: vec![None; k] },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialOutcome { outcomes })
}

/// Trial `(topology, fading)`: a deterministic function of the master seed
/// and the two indices.
pub fn run_trial(setup: &TrialSetup, master: u64, topology: u64, fading: u64) -> Result<TrialOutcome> {
    let scenario = draw_scenario(setup, master, topology, fading)?;
    simulate_fading(setup, &scenario, &mut stream(master, Stream::Fading, topology, fading))
}
