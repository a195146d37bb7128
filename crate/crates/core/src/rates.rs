//! SINR power decomposition, ergodic rates, ECDR and the closed-form
//! bounds / large-system expressions for MRT, ZF and RZF.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cache::{zf_constraint_set, CacheIncidence, CachingProbabilities, InterferenceSets};
use crate::error::{Error, Result};
use crate::estimation::{EstimateSet, Variances};
use crate::precoding::{g_function, PrecoderKind};
use crate::system_model::UserId;

/// Streaming mean / variance accumulator with an associative merge.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (zero with fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Per-user transmit powers `E_{j,l} = E0 / K̄_j` (zero in a silent cell).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    per_cell: Vec<f64>,
}

impl PowerAllocation {
    pub fn uniform(total_power: f64, incidence: &CacheIncidence) -> Self {
        let per_cell = (0..incidence.cells())
            .map(|j| match incidence.active_count(j) {
                0 => 0.0,
                n => total_power / n as f64,
            })
            .collect();
        PowerAllocation { per_cell }
    }

    pub fn from_per_cell(per_cell: Vec<f64>) -> Self {
        PowerAllocation { per_cell }
    }

    #[inline]
    pub fn power(&self, cell: usize) -> f64 {
        self.per_cell[cell]
    }
}

/// Precoding vectors of one realization, one `M x K` matrix per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    users: usize,
    w: Vec<DMatrix<Complex64>>,
    present: Vec<bool>,
}

impl PrecoderSet {
    pub fn new(cells: usize, users: usize, antennas: usize) -> Self {
        PrecoderSet { users, w: vec![DMatrix::zeros(antennas, users); cells], present: vec![false; cells * users] }
    }

    pub fn set(&mut self, j: usize, l: usize, w: &nalgebra::DVector<Complex64>) {
        self.w[j].column_mut(l).copy_from(w);
        self.present[j * self.users + l] = true;
    }

    pub fn has(&self, j: usize, l: usize) -> bool {
        self.present[j * self.users + l]
    }

    /// Precoders of cell `j` (zero columns where absent).
    pub fn cell(&self, j: usize) -> &DMatrix<Complex64> {
        &self.w[j]
    }
}

/// Decomposition of the effective SINR of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBreakdown {
    pub p_signal: f64,
    /// Interference from members of `U` over the estimated channel.
    pub p_interference: Vec<(UserId, f64)>,
    /// Interference from members of `V` through the estimation error.
    pub p_csi_error: Vec<(UserId, f64)>,
}

impl PowerBreakdown {
    pub fn sinr(&self) -> f64 {
        let i: f64 = self.p_interference.iter().map(|(_, p)| p).sum();
        let e: f64 = self.p_csi_error.iter().map(|(_, p)| p).sum();
        self.p_signal / (i + e + 1.0)
    }
}

pub fn power_breakdown(
    target: UserId,
    sets: &InterferenceSets,
    estimates: &EstimateSet,
    precoders: &PrecoderSet,
    power: &PowerAllocation,
) -> Result<PowerBreakdown> {
    let (b, k) = (target.cell, target.user);
    let w_of = |u: UserId| -> Result<_> {
        if !precoders.has(u.cell, u.user) {
            return Err(Error::logic(format!("no precoder for active user ({}, {})", u.cell, u.user)));
        }
        Ok(precoders.cell(u.cell).column(u.user))
    };
    let hh = estimates.h_hat(b, k, b)?;
    let p_signal = power.power(b) * hh.dotc(&w_of(target)?).norm_sqr();
    let p_interference = sets
        .u
        .iter()
        .map(|&u| Ok((u, power.power(u.cell) * estimates.h_hat(b, k, u.cell)?.dotc(&w_of(u)?).norm_sqr())))
        .collect::<Result<Vec<_>>>()?;
    let p_csi_error = sets
        .v
        .iter()
        .map(|&u| Ok((u, power.power(u.cell) * estimates.h_tilde(b, k, u.cell)?.dotc(&w_of(u)?).norm_sqr())))
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerBreakdown { p_signal, p_interference, p_csi_error })
}

/// Sample-mean estimate of `E{log2(1 + γ)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

pub fn ergodic_rate(sinr: &[f64]) -> Result<RateEstimate> {
    if sinr.len() < 2 {
        return Err(Error::domain("an ergodic rate estimate needs at least two samples"));
    }
    let acc: Welford = sinr.iter().map(|&g| (1.0 + g).log2()).collect();
    Ok(RateEstimate { mean: acc.mean(), stderr: acc.stderr(), samples: acc.count() })
}

/// An ECDR value; offloaded deliveries have no finite rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ecdr {
    Finite(f64),
    Infinite,
}

impl Ecdr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Ecdr::Finite(v) => Some(v),
            Ecdr::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Ecdr::Infinite)
    }
}

/// How a rate is turned into an ECDR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EcdrScaling {
    /// `(F / L_d) R`, infinite for `L_d = 0`.
    Realization { file_size: f64, delivered: f64 },
    /// `R / q_a`.
    UncodedAverage { q_a: f64 },
    /// `R L_s / (L_s - L_u)`.
    Coded { library: usize, cache: usize },
}

pub fn ecdr(rate: f64, scaling: EcdrScaling) -> Result<Ecdr> {
    if !(rate >= 0.0) {
        return Err(Error::domain(format!("rate must be non-negative, got {rate}")));
    }
    Ok(match scaling {
        EcdrScaling::Realization { delivered, .. } if delivered <= 0.0 => Ecdr::Infinite,
        EcdrScaling::Realization { file_size, delivered } => Ecdr::Finite(file_size / delivered * rate),
        EcdrScaling::UncodedAverage { q_a } if q_a <= 0.0 => Ecdr::Infinite,
        EcdrScaling::UncodedAverage { q_a } => Ecdr::Finite(rate / q_a),
        EcdrScaling::Coded { library, cache } if cache >= library => Ecdr::Infinite,
        EcdrScaling::Coded { library, cache } => Ecdr::Finite(rate * library as f64 / (library - cache) as f64),
    })
}

fn check_target(target: UserId, sets: &InterferenceSets) -> Result<()> {
    if sets.v.binary_search(&target).is_err() {
        return Err(Error::logic(format!("user ({}, {}) is inactive", target.cell, target.user)));
    }
    Ok(())
}

/// MRT SINR lower bound `1 / E{1/γ}` for a given cache state.
pub fn prop1_sinr(
    target: UserId,
    sets: &InterferenceSets,
    var: &Variances,
    power: &PowerAllocation,
    antennas: usize,
) -> Result<f64> {
    if antennas <= 2 {
        return Err(Error::domain(format!("the MRT bound needs M > 2, got M = {antennas}")));
    }
    check_target(target, sets)?;
    let (b, k) = (target.cell, target.user);
    let m = antennas as f64;
    let eb = power.power(b);
    let hat_b = var.hat(b, k, b);
    let num = (m - 1.0) * (m - 2.0) / m * eb * hat_b;
    let intra: f64 = sets.u_per_cell[b].len() as f64 * (m - 2.0) / m * eb * hat_b;
    let d1: f64 = sets.d1.iter().map(|u| power.power(u.cell) * var.hat(b, k, u.cell)).sum();
    let d2: f64 = sets.d2.iter().map(|u| (m + 1.0) * power.power(u.cell) * var.hat(b, k, u.cell)).sum();
    let err: f64 = sets.u.iter().map(|u| power.power(u.cell) * var.tilde(b, k, u.cell)).sum();
    let own_err = (m - 2.0) / m * eb * var.tilde(b, k, b);
    Ok(num / (intra + d1 + d2 + err + own_err + 1.0))
}

/// ZF SINR lower bound for a given cache state.
pub fn prop2_sinr(
    target: UserId,
    sets: &InterferenceSets,
    incidence: &CacheIncidence,
    var: &Variances,
    power: &PowerAllocation,
    antennas: usize,
) -> Result<f64> {
    check_target(target, sets)?;
    let (b, k) = (target.cell, target.user);
    let m = antennas as f64;
    let dof = |n: usize| -> Result<f64> {
        if antennas <= n + 1 {
            Err(Error::Infeasible { antennas, constraints: n, needed: n + 1 })
        } else {
            Ok(m - n as f64 - 1.0)
        }
    };
    let num = dof(sets.n_n())? * power.power(b) * var.hat(b, k, b);
    let d3: f64 = sets.d3.iter().map(|u| power.power(u.cell) * var.hat(b, k, u.cell)).sum();
    let mut d2 = 0.0;
    for u in &sets.d2 {
        let n_jk = zf_constraint_set(incidence, u.cell, u.user).len();
        d2 += dof(n_jk)? * power.power(u.cell) * var.hat(b, k, u.cell);
    }
    let err: f64 = sets.v.iter().map(|u| power.power(u.cell) * var.tilde(b, k, u.cell)).sum();
    Ok(num / (d3 + d2 + err + 1.0))
}

/// Large-system RZF SINR for a given cache state and regularization.
pub fn prop3_sinr(
    target: UserId,
    sets: &InterferenceSets,
    incidence: &CacheIncidence,
    var: &Variances,
    power: &PowerAllocation,
    antennas: usize,
    alpha: f64,
) -> Result<f64> {
    check_target(target, sets)?;
    let (b, k) = (target.cell, target.user);
    let m = antennas as f64;
    let g_of = |u: UserId| g_function(zf_constraint_set(incidence, u.cell, u.user).len() as f64 / m, alpha);
    let own = g_of(target)?;
    let hat_b = var.hat(b, k, b);
    let num = power.power(b) * hat_b * own.signal_factor();
    let mut den = 1.0 / m;
    for u in &sets.u_per_cell[b] {
        den += power.power(b) * hat_b / (m * (1.0 + g_of(*u)?.g).powi(2));
    }
    for u in &sets.d3 {
        den += power.power(u.cell) * var.hat(b, k, u.cell) / m;
    }
    for u in &sets.d4 {
        den += power.power(u.cell) * var.hat(b, k, u.cell) / (m * (1.0 + g_of(*u)?.g).powi(2));
    }
    for u in &sets.d2 {
        den += power.power(u.cell) * var.hat(b, k, u.cell) * g_of(*u)?.signal_factor();
    }
    for u in &sets.v {
        den += power.power(u.cell) * var.tilde(b, k, u.cell) / m;
    }
    Ok(num / den)
}

/// Caching scheme a closed form refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Uncoded caching with cache-aware precoding.
    P1,
    /// No caching.
    B1,
    /// Coded caching with cache-aware precoding.
    P2,
    /// Coded caching with cache-oblivious precoding.
    B2,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::P1 => "P1",
            Scheme::B1 => "B1",
            Scheme::P2 => "P2",
            Scheme::B2 => "B2",
        }
    }

    pub fn is_coded(self) -> bool {
        matches!(self, Scheme::P2 | Scheme::B2)
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Scheme::B1 | Scheme::B2)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Formula identifier used in result tables.
pub fn formula_id(scheme: Scheme, precoder: PrecoderKind) -> &'static str {
    use PrecoderKind::*;
    use Scheme::*;
    match (scheme, precoder) {
        (P1, Mrt) => "P1-MRT-LB",
        (P1, Zf) => "P1-ZF-LB",
        (P1, Rzf) => "P1-RZF-LS",
        (B1, Mrt) => "B1-MRT-LB",
        (B1, Zf) => "B1-ZF-LB",
        (B1, Rzf) => "B1-RZF-LS",
        (P2, Mrt) => "P2-MRT-LB",
        (P2, Zf) => "P2-ZF-LB",
        (P2, Rzf) => "P2-RZF-LS",
        (B2, Mrt) => "B2-MRT-LB",
        (B2, Zf) => "B2-ZF-LB",
        (B2, Rzf) => "B2-RZF-LS",
    }
}

/// Formula identifier of the per-realization bound averaged by the simulator.
pub fn realization_formula_id(precoder: PrecoderKind) -> &'static str {
    match precoder {
        PrecoderKind::Mrt => "MRT-SET-LB",
        PrecoderKind::Zf => "ZF-SET-LB",
        PrecoderKind::Rzf => "RZF-SET-LS",
    }
}

/// Estimate and error variances of the tagged user towards every BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedVariances {
    pub hat: Vec<f64>,
    pub tilde: Vec<f64>,
}

impl TaggedVariances {
    pub fn of(var: &Variances, user: UserId) -> Self {
        let cells = var.cells();
        TaggedVariances {
            hat: (0..cells).map(|j| var.hat(user.cell, user.user, j)).collect(),
            tilde: (0..cells).map(|j| var.tilde(user.cell, user.user, j)).collect(),
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Closed-form SINR of uncoded caching for the tagged user of cell `b`.
/// Pass [`CachingProbabilities::no_cache`] and baseline variances for the
/// no-caching baseline.
pub fn uncoded_closed_form_sinr(
    probs: &CachingProbabilities,
    var: &TaggedVariances,
    b: usize,
    rho0: f64,
    e0: f64,
    precoder: PrecoderKind,
    alpha: Option<f64>,
) -> Result<f64> {
    let cells = probs.cells();
    if var.hat.len() != cells || var.tilde.len() != cells || b >= cells {
        return Err(Error::domain("variance vectors do not match the number of cells"));
    }
    let qa = &probs.q_a;
    let qi = &probs.q_i[b];
    let qn = &probs.q_n;
    let qab = qa[b];
    let err: f64 = (0..cells).map(|j| ratio(qi[j], qa[j]) * var.tilde[j]).sum();
    let noise = 1.0 / e0;
    let others = (0..cells).filter(|&j| j != b);
    Ok(match precoder {
        PrecoderKind::Mrt => {
            let inter: f64 = others.map(|j| ratio(qi[j], qa[j]) * (rho0 + 1.0) * var.hat[j]).sum();
            (rho0 * var.hat[b] / qab) / (qi[b] * var.hat[b] / qab + inter + err + noise)
        }
        PrecoderKind::Zf => {
            if rho0 <= qn[b] {
                return Err(Error::InfeasibleLoad { rho0, load: qn[b] });
            }
            let inter: f64 = others.map(|j| ratio(qi[j], qa[j]) * (1.0 - 2.0 * qn[j] + rho0) * var.hat[j]).sum();
            ((rho0 - qn[b]) * var.hat[b] / qab) / (inter + err + noise)
        }
        PrecoderKind::Rzf => {
            let alpha = alpha.ok_or_else(|| Error::domain("RZF closed form needs alpha"))?;
            let gb = g_function(qn[b] / rho0, alpha)?;
            let mut inter = 0.0;
            for j in others {
                let gj = g_function(qn[j] / rho0, alpha)?;
                let factor = rho0 * gj.signal_factor() + qn[j] / (1.0 + gj.g).powi(2) + 1.0 - qn[j];
                inter += ratio(qi[j], qa[j]) * var.hat[j] * factor;
            }
            let intra = qi[b] * var.hat[b] / (qab * (1.0 + gb.g).powi(2));
            (rho0 * var.hat[b] * gb.signal_factor() / qab) / (intra + inter + err + noise)
        }
    })
}

/// Closed-form ECDR of uncoded caching (`(1/q_a) log2(1 + γ)`).
pub fn uncoded_closed_form(
    probs: &CachingProbabilities,
    var: &TaggedVariances,
    b: usize,
    rho0: f64,
    e0: f64,
    precoder: PrecoderKind,
    alpha: Option<f64>,
) -> Result<Ecdr> {
    if probs.q_a.get(b).copied().unwrap_or(0.0) <= 0.0 {
        return Ok(Ecdr::Infinite);
    }
    let sinr = uncoded_closed_form_sinr(probs, var, b, rho0, e0, precoder, alpha)?;
    ecdr((1.0 + sinr).log2(), EcdrScaling::UncodedAverage { q_a: probs.q_a[b] })
}

/// Closed-form SINR of coded caching. `p` is the interference probability
/// between users of different index (`1` for the cache-oblivious baseline).
pub fn coded_closed_form_sinr(
    p: f64,
    var: &TaggedVariances,
    b: usize,
    rho0: f64,
    e0: f64,
    precoder: PrecoderKind,
    alpha: Option<f64>,
) -> Result<f64> {
    let cells = var.hat.len();
    if b >= cells || var.tilde.len() != cells {
        return Err(Error::domain("variance vectors do not match the number of cells"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("interference probability {p} outside [0, 1]")));
    }
    let err: f64 = p * var.tilde.iter().sum::<f64>();
    let cross: f64 = (0..cells).filter(|&j| j != b).map(|j| var.hat[j]).sum();
    let noise = 1.0 / e0;
    let hb = var.hat[b];
    Ok(match precoder {
        PrecoderKind::Mrt => rho0 * hb / (p * hb + (rho0 + p) * cross + err + noise),
        PrecoderKind::Zf => {
            if rho0 <= p {
                return Err(Error::InfeasibleLoad { rho0, load: p });
            }
            (rho0 - p) * hb / (((rho0 - p) + (1.0 - p)) * cross + err + noise)
        }
        PrecoderKind::Rzf => {
            let alpha = alpha.ok_or_else(|| Error::domain("RZF closed form needs alpha"))?;
            let g = g_function(p / rho0, alpha)?;
            let factor = rho0 * g.signal_factor() + p * p / (1.0 + g.g).powi(2) + (1.0 - p) * p;
            rho0 * hb * g.signal_factor() / (p * hb / (1.0 + g.g).powi(2) + cross * factor + err + noise)
        }
    })
}

/// Closed-form ECDR of coded caching (`L_s / (L_s - L_u) · log2(1 + γ)`).
#[allow(clippy::too_many_arguments)]
pub fn coded_closed_form(
    p: f64,
    var: &TaggedVariances,
    b: usize,
    rho0: f64,
    e0: f64,
    library: usize,
    cache: usize,
    precoder: PrecoderKind,
    alpha: Option<f64>,
) -> Result<Ecdr> {
    if cache >= library {
        return Ok(Ecdr::Infinite);
    }
    let sinr = coded_closed_form_sinr(p, var, b, rho0, e0, precoder, alpha)?;
    ecdr((1.0 + sinr).log2(), EcdrScaling::Coded { library, cache })
}

/// Bracket and tolerance of the regularization search.
pub const ALPHA_BRACKET: (f64, f64) = (1e-4, 1e4);
const ALPHA_GRID: usize = 64;
const ALPHA_REL_TOL: f64 = 1e-3;

/// Maximize `f` over `α ∈ [lo, hi]`: a log-spaced grid scan followed by a
/// golden-section refinement on `log α` around the best grid point.
pub fn optimize_alpha(mut f: impl FnMut(f64) -> Result<f64>, bracket: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::domain(format!("invalid alpha bracket [{lo}, {hi}]")));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x.exp())?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("objective is not finite at alpha = {}", x.exp())));
        }
        Ok(v)
    };
    let step = (lhi - llo) / (ALPHA_GRID - 1) as f64;
    let mut best = (llo, eval(llo)?);
    let mut best_i = 0;
    for i in 1..ALPHA_GRID {
        let x = llo + step * i as f64;
        let v = eval(x)?;
        if v > best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let mut a = llo + step * best_i.saturating_sub(1) as f64;
    let mut d = (llo + step * (best_i + 1) as f64).min(lhi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut b = d - inv_phi * (d - a);
    let mut c = a + inv_phi * (d - a);
    let (mut fb, mut fc) = (eval(b)?, eval(c)?);
    let tol = (1.0 + ALPHA_REL_TOL).ln();
    while d - a > tol {
        if fb >= fc {
            d = c;
            c = b;
            fc = fb;
            b = d - inv_phi * (d - a);
            fb = eval(b)?;
        } else {
            a = b;
            b = c;
            fb = fc;
            c = a + inv_phi * (d - a);
            fc = eval(c)?;
        }
    }
    for (x, v) in [(b, fb), (c, fc)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok((best.0.exp(), best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{deterministic_placement, interference_sets, uncoded_probabilities};
    use crate::estimation::baseline_variances;
    use crate::system_model::{zipf_row, LargeScaleState, PopularityProfile};
    use proptest::prelude::*;

    #[test]
    fn welford_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let all: Welford = xs.iter().copied().collect();
        let mut left: Welford = xs[..333].iter().copied().collect();
        let right: Welford = xs[333..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count(), all.count());
        assert!((left.mean() - all.mean()).abs() < 1e-12);
        assert!((left.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn ergodic_rate_examples() {
        let r = ergodic_rate(&[1.0; 10]).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(ergodic_rate(&[0.0, 3.0]).unwrap().mean, 1.0);
        assert!(ergodic_rate(&[1.0]).is_err());
    }

    #[test]
    fn ergodic_rate_matches_quadrature() {
        // γ ~ Exp(1): E log2(1+γ) = e^1 E1(1) / ln 2 = 0.5963473623231940 / ln 2.
        use rand::Rng;
        let mut rng = crate::rng::stream(3, crate::rng::Stream::Oracle, 0, 0);
        let samples: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let r = ergodic_rate(&samples).unwrap();
        let exact = 0.596_347_362_323_194 / std::f64::consts::LN_2;
        assert!((r.mean - exact).abs() < 3.0 * r.stderr, "{} vs {exact} ± {}", r.mean, r.stderr);
    }

    #[test]
    fn ecdr_examples() {
        assert_eq!(ecdr(2.0, EcdrScaling::Realization { file_size: 1.0, delivered: 1.0 }).unwrap(), Ecdr::Finite(2.0));
        assert_eq!(ecdr(1.0, EcdrScaling::Coded { library: 100, cache: 20 }).unwrap(), Ecdr::Finite(1.25));
        assert_eq!(ecdr(1.0, EcdrScaling::UncodedAverage { q_a: 0.5 }).unwrap(), Ecdr::Finite(2.0));
        assert_eq!(ecdr(1.0, EcdrScaling::UncodedAverage { q_a: 0.0 }).unwrap(), Ecdr::Infinite);
        assert_eq!(ecdr(1.0, EcdrScaling::Realization { file_size: 1.0, delivered: 0.0 }).unwrap(), Ecdr::Infinite);
        assert!(ecdr(-1.0, EcdrScaling::UncodedAverage { q_a: 0.5 }).is_err());
    }

    fn single_user() -> (InterferenceSets, Variances, CacheIncidence) {
        let inc = CacheIncidence::from_fn(1, 1, |_, _, _, _| true);
        let sets = interference_sets(&inc, UserId::new(0, 0));
        // β = 1, pτ = 1: β̂ = β̃ = 0.5.
        let ls = LargeScaleState::from_betas(1, 1, vec![1.0], 3.8).unwrap();
        (sets, baseline_variances(&ls, 1.0), inc)
    }

    #[test]
    fn prop1_single_user_example() {
        let (sets, var, _) = single_user();
        let power = PowerAllocation::from_per_cell(vec![1.0]);
        let g = prop1_sinr(UserId::new(0, 0), &sets, &var, &power, 4).unwrap();
        assert!((g - 0.6).abs() < 1e-15);
        assert!(((1.0 + g).log2() - 0.678_071_905_112_638).abs() < 1e-12);
        assert!(matches!(prop1_sinr(UserId::new(0, 0), &sets, &var, &power, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn prop2_single_cell_examples() {
        let (sets, var, inc) = single_user();
        let power = PowerAllocation::from_per_cell(vec![2.0]);
        let g = prop2_sinr(UserId::new(0, 0), &sets, &inc, &var, &power, 5).unwrap();
        assert!((g - 4.0 * 2.0 * 0.5 / (1.0 + 2.0 * 0.5)).abs() < 1e-15);
        let ls = LargeScaleState::from_betas(1, 1, vec![1.0], 3.8).unwrap();
        let perfect = Variances::perfect(&ls);
        let g = prop2_sinr(UserId::new(0, 0), &sets, &inc, &perfect, &power, 5).unwrap();
        assert!((g - 4.0 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn prop3_without_interferers() {
        let ls = LargeScaleState::from_betas(1, 1, vec![1.0], 3.8).unwrap();
        let inc = CacheIncidence::from_fn(1, 1, |_, _, _, _| true);
        let sets = interference_sets(&inc, UserId::new(0, 0));
        let var = Variances::perfect(&ls);
        let power = PowerAllocation::from_per_cell(vec![3.0]);
        let g = prop3_sinr(UserId::new(0, 0), &sets, &inc, &var, &power, 64, 0.5).unwrap();
        let gv = g_function(0.0, 0.5).unwrap();
        assert!((g - 3.0 * 64.0 * gv.signal_factor()).abs() < 1e-9 * g);
    }

    #[test]
    fn d2_member_hurts_more_than_d1_member() {
        // Two cells, two users; compare the bound with one Type II versus
        // one Type I interferer of equal β̂·E.
        let ls = LargeScaleState::from_betas(2, 2, vec![0.9, 0.2, 0.9, 0.2, 0.2, 0.9, 0.2, 0.9], 3.8).unwrap();
        let var = baseline_variances(&ls, 2.0);
        let power = PowerAllocation::from_per_cell(vec![1.0, 1.0]);
        let target = UserId::new(0, 0);
        let base = |active: (usize, usize)| {
            CacheIncidence::from_fn(2, 2, move |j, l, _, _| (j, l) == (0, 0) || (j, l) == active)
        };
        let with_d2 = base((1, 0));
        let with_d1 = base((1, 1));
        let g2 = prop1_sinr(target, &interference_sets(&with_d2, target), &var, &power, 8).unwrap();
        let g1 = prop1_sinr(target, &interference_sets(&with_d1, target), &var, &power, 8).unwrap();
        assert!(g2 < g1);
    }

    fn random_inputs(eta: f64, cache: usize, seed: u64) -> (CachingProbabilities, TaggedVariances, TaggedVariances) {
        use crate::config::SystemConfig;
        use crate::estimation::variances_weighted;
        use crate::rng::{stream, Stream};
        let mut cfg = SystemConfig::desk_default();
        cfg.zipf_exponents = vec![eta, eta * 0.8, eta * 0.6];
        let pop = PopularityProfile::from_rows(cfg.zipf_exponents.iter().map(|&e| zipf_row(100, e).unwrap()).collect())
            .unwrap();
        let probs = uncoded_probabilities(&pop, &deterministic_placement(&pop, cache)).unwrap();
        let ls = crate::system_model::place_users(&cfg, &mut stream(seed, Stream::Topology, 0, 0));
        let mf = variances_weighted(&ls, cfg.pilot_energy(), |j, _| probs.q_a[j]);
        let base = baseline_variances(&ls, cfg.pilot_energy());
        let t = UserId::new(0, 0);
        (probs, TaggedVariances::of(&mf, t), TaggedVariances::of(&base, t))
    }

    #[test]
    fn p1_reduces_to_b1_without_caching() {
        let (_, _, base) = random_inputs(0.6, 6, 1);
        let none = CachingProbabilities::no_cache(3);
        for kind in PrecoderKind::ALL {
            let a = uncoded_closed_form(&none, &base, 0, 1.5, 100.0, kind, Some(0.3)).unwrap();
            // Baseline formula written out directly.
            let (h, t) = (&base.hat, &base.tilde);
            let err: f64 = t.iter().sum();
            let cross = h[1] + h[2];
            let rho = 1.5;
            let sinr = match kind {
                PrecoderKind::Mrt => rho * h[0] / (h[0] + (rho + 1.0) * cross + err + 0.01),
                PrecoderKind::Zf => (rho - 1.0) * h[0] / ((rho - 1.0) * cross + err + 0.01),
                PrecoderKind::Rzf => {
                    let g = g_function(1.0 / rho, 0.3).unwrap();
                    let sf = g.signal_factor();
                    let inv = 1.0 / (1.0 + g.g).powi(2);
                    rho * h[0] * sf / (h[0] * inv + cross * (rho * sf + inv) + err + 0.01)
                }
            };
            let expected = (1.0 + sinr).log2();
            let got = a.finite().unwrap();
            assert!((got - expected).abs() <= 1e-12 * expected, "{kind}: {got} vs {expected}");
        }
    }

    #[test]
    fn uncoded_mrt_hand_example() {
        // B = 1, q_a = 0.5, q_i = 0.25, ρ0 = 2, E0 → ∞, β̃ = 0.
        let probs = CachingProbabilities { q_a: vec![0.5], q_i: vec![vec![0.25]], q_n: vec![0.25] };
        let var = TaggedVariances { hat: vec![0.7], tilde: vec![0.0] };
        let v = uncoded_closed_form(&probs, &var, 0, 2.0, f64::INFINITY, PrecoderKind::Mrt, None).unwrap();
        assert!((v.finite().unwrap() - 2.0 * 9f64.log2()).abs() < 1e-12);
        let none = CachingProbabilities { q_a: vec![0.0], q_i: vec![vec![0.0]], q_n: vec![0.0] };
        assert!(uncoded_closed_form(&none, &var, 0, 2.0, 1.0, PrecoderKind::Mrt, None).unwrap().is_infinite());
    }

    #[test]
    fn zf_closed_form_infeasibility() {
        let none = CachingProbabilities::no_cache(1);
        let var = TaggedVariances { hat: vec![0.5], tilde: vec![0.1] };
        assert!(matches!(
            uncoded_closed_form(&none, &var, 0, 1.0, 10.0, PrecoderKind::Zf, None),
            Err(Error::InfeasibleLoad { .. })
        ));
        assert!(matches!(
            coded_closed_form_sinr(1.0, &var, 0, 0.9, 10.0, PrecoderKind::Zf, None),
            Err(Error::InfeasibleLoad { .. })
        ));
    }

    #[test]
    fn coded_examples() {
        let var = TaggedVariances { hat: vec![0.5, 0.01], tilde: vec![0.1, 0.02] };
        for kind in PrecoderKind::ALL {
            let p2 = coded_closed_form(1.0, &var, 0, 2.0, 10.0, 100, 20, kind, Some(0.5)).unwrap();
            let b2 = coded_closed_form_sinr(1.0, &var, 0, 2.0, 10.0, kind, Some(0.5)).unwrap();
            assert_eq!(p2.finite().unwrap(), 1.25 * (1.0 + b2).log2());
        }
        assert!(coded_closed_form(0.5, &var, 0, 2.0, 10.0, 100, 100, PrecoderKind::Mrt, None).unwrap().is_infinite());
    }

    #[test]
    fn optimize_synthetic_objective() {
        let (a, v) = optimize_alpha(|a| Ok(-(a.log10() - 0.3).powi(2)), ALPHA_BRACKET).unwrap();
        assert!((a / 10f64.powf(0.3) - 1.0).abs() < 0.005);
        assert!(v <= 0.0 && v > -1e-5);
        assert!(optimize_alpha(|_| Ok(f64::NAN), ALPHA_BRACKET).is_err());
    }

    #[test]
    fn optimized_rzf_approaches_mrt_at_low_snr() {
        // Single cell, equal β, very low SNR: the optimum sits at large α and
        // reproduces the MRT closed form.
        let none = CachingProbabilities::no_cache(1);
        let var = TaggedVariances { hat: vec![0.5], tilde: vec![0.05] };
        let mrt = uncoded_closed_form(&none, &var, 0, 2.0, 1e-3, PrecoderKind::Mrt, None).unwrap().finite().unwrap();
        let (alpha, rzf) = optimize_alpha(
            |a| Ok(uncoded_closed_form(&none, &var, 0, 2.0, 1e-3, PrecoderKind::Rzf, Some(a))?.finite().unwrap()),
            ALPHA_BRACKET,
        )
        .unwrap();
        assert!(alpha > 100.0, "alpha {alpha}");
        assert!((rzf - mrt).abs() < 0.01 * mrt);
    }

    proptest! {
        #[test]
        fn proposed_dominates_baseline_uncoded(eta in 0.1f64..0.9, cache in 1usize..30, seed in 0u64..50, rho in 1.1f64..3.0, snr in 0.0f64..30.0) {
            let (probs, mf, base) = random_inputs(eta, cache, seed);
            let e0 = 10f64.powf(snr / 10.0);
            let none = CachingProbabilities::no_cache(3);
            for kind in [PrecoderKind::Mrt, PrecoderKind::Zf] {
                let p1 = uncoded_closed_form(&probs, &mf, 0, rho, e0, kind, None).unwrap().finite().unwrap();
                let b1 = uncoded_closed_form(&none, &base, 0, rho, e0, kind, None).unwrap().finite().unwrap();
                prop_assert!(p1 >= b1, "{kind}: {p1} < {b1}");
            }
            for alpha in [1e-3, 0.1, 1.0, 10.0] {
                let p1 = uncoded_closed_form(&probs, &mf, 0, rho, e0, PrecoderKind::Rzf, Some(alpha)).unwrap().finite().unwrap();
                let b1 = uncoded_closed_form(&none, &base, 0, rho, e0, PrecoderKind::Rzf, Some(alpha)).unwrap().finite().unwrap();
                prop_assert!(p1 >= b1, "RZF alpha {alpha}: {p1} < {b1}");
            }
        }

        #[test]
        fn proposed_dominates_baseline_coded(t in 1usize..31, h0 in 0.05f64..1.0, h1 in 1e-4f64..0.05, h2 in 1e-4f64..0.05, rho in 1.1f64..3.0, snr in 0.0f64..30.0) {
            let k = 32usize;
            let p = (k - t - 1) as f64 / (k - 1) as f64;
            let var = TaggedVariances { hat: vec![h0, h1, h2], tilde: vec![h0 * 0.1, h1, h2] };
            let e0 = 10f64.powf(snr / 10.0);
            for kind in PrecoderKind::ALL {
                let p2 = coded_closed_form_sinr(p, &var, 0, rho, e0, kind, Some(0.2)).unwrap();
                let b2 = coded_closed_form_sinr(1.0, &var, 0, rho, e0, kind, Some(0.2)).unwrap();
                prop_assert!(p2 >= b2 * (1.0 - 1e-12), "{kind}: {p2} < {b2}");
            }
        }

        #[test]
        fn mrt_closed_form_decreases_in_q_a(qa in 0.2f64..0.9, dq in 0.01f64..0.1, qi in 0.0f64..0.2) {
            let var = TaggedVariances { hat: vec![0.6], tilde: vec![0.05] };
            let at = |q: f64| {
                let probs = CachingProbabilities { q_a: vec![q], q_i: vec![vec![qi.min(q)]], q_n: vec![0.1] };
                uncoded_closed_form(&probs, &var, 0, 1.5, 100.0, PrecoderKind::Mrt, None).unwrap().finite().unwrap()
            };
            prop_assert!(at(qa + dq) < at(qa));
        }

        #[test]
        fn zf_closed_form_decreases_in_q_n(qn in 0.0f64..0.5, dq in 0.01f64..0.2) {
            let var = TaggedVariances { hat: vec![0.6, 0.02], tilde: vec![0.05, 0.02] };
            let at = |q: f64| {
                let probs = CachingProbabilities { q_a: vec![0.7, 0.7], q_i: vec![vec![0.4, 0.4]; 2], q_n: vec![q, q] };
                uncoded_closed_form(&probs, &var, 0, 1.5, 100.0, PrecoderKind::Zf, None).unwrap().finite().unwrap()
            };
            prop_assert!(at(qn + dq) < at(qn));
        }
    }
}
