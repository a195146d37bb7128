//! Independent reference computations: random-matrix moments, the
//! Marchenko–Pastur resolvent by quadrature and coded-caching counting.
//! They back the `selftest` command and the acceptance suite.

use std::fmt;

use num_complex::Complex64;
use num_integer::binomial;

use crate::cache::{
    coded_probabilities, draw_requests, incidence, place_uncoded, uncoded_probabilities, CacheContents, CodedPlacement,
    PlacementProbs,
};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::estimation::complex_normal_matrix;
use crate::precoding::{empirical_resolvent_trace, g_function, zf, zf_lambda};
use crate::rates::Welford;
use crate::rng::{stream, Stream};
use crate::system_model::PopularityProfile;

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    /// Allowed deviation, relative to the reference unless `absolute`.
    pub tolerance: f64,
    pub absolute: bool,
}

impl OracleCheck {
    fn relative(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        OracleCheck { name: name.into(), value, reference, tolerance, absolute: false }
    }

    fn absolute(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        OracleCheck { name: name.into(), value, reference, tolerance, absolute: true }
    }

    pub fn deviation(&self) -> f64 {
        let d = (self.value - self.reference).abs();
        if self.absolute {
            d
        } else {
            d / self.reference.abs()
        }
    }

    pub fn passed(&self) -> bool {
        self.deviation() <= self.tolerance
    }
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.9} vs {:.9} ({} deviation {:.3e}, tolerance {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.reference,
            if self.absolute { "absolute" } else { "relative" },
            self.deviation(),
            self.tolerance
        )
    }
}

/// Inner-product moments of Gaussian estimates: the inverse chi-square
/// moment `E{1/|ĥᴴĥ|²}` and `E|ĥ₁ᴴĥ₂|²` for independent and for
/// collinear (same-pilot) pairs.
pub fn inner_product_moments(m: usize, beta_hat: f64, beta_other: f64, draws: usize, seed: u64) -> Vec<OracleCheck> {
    let mut rng = stream(seed, Stream::Oracle, 1, m as u64);
    let (mut inv, mut indep, mut coll) = (Welford::new(), Welford::new(), Welford::new());
    let (s1, s2) = (beta_hat.sqrt(), beta_other.sqrt());
    for _ in 0..draws {
        let z = complex_normal_matrix(m, 2, &mut rng);
        let h1 = z.column(0) * Complex64::from(s1);
        let h2 = z.column(1) * Complex64::from(s2);
        let g = h1.norm_squared();
        inv.push(1.0 / (g * g));
        indep.push(h1.dotc(&h2).norm_sqr());
        // Same-pilot estimates are scaled copies of one statistic.
        let h2c = z.column(0) * Complex64::from(s2);
        coll.push(h1.dotc(&h2c).norm_sqr());
    }
    let mf = m as f64;
    vec![
        OracleCheck::relative(
            "E{1/|h^H h|^2}",
            inv.mean(),
            1.0 / ((mf - 1.0) * (mf - 2.0) * beta_hat * beta_hat),
            0.05,
        ),
        OracleCheck::relative("E|h1^H h2|^2 independent", indep.mean(), mf * beta_hat * beta_other, 0.02),
        OracleCheck::relative("E|h1^H h2|^2 collinear", coll.mean(), mf * (mf + 1.0) * beta_hat * beta_other, 0.02),
    ]
}

/// Complex inverse-Wishart moment behind the ZF normalization:
/// `E‖Q(QᴴQ)⁻¹e₁‖² = 1/((M - N - 1) β̂)`, and the normalized precoder has
/// unit mean power.
pub fn zf_norm_moments(
    m: usize,
    constraints: usize,
    beta_hat: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<OracleCheck>> {
    let mut rng = stream(seed, Stream::Oracle, 2, m as u64);
    let lambda = zf_lambda(m, constraints, beta_hat)?;
    let (mut raw, mut power) = (Welford::new(), Welford::new());
    for _ in 0..draws {
        let q = complex_normal_matrix(m, constraints + 1, &mut rng) * Complex64::from(beta_hat.sqrt());
        let p = zf(&q, beta_hat)?;
        let w2 = p.w.norm_squared();
        raw.push(w2 / lambda);
        power.push(w2);
    }
    Ok(vec![
        OracleCheck::relative(
            "E||Q(Q^H Q)^-1 e1||^2",
            raw.mean(),
            1.0 / ((m - constraints - 1) as f64 * beta_hat),
            0.05,
        ),
        OracleCheck::absolute("ZF mean ||w||^2", power.mean(), 1.0, 0.02),
    ])
}

/// `(1/M) tr((FFᴴ + αI)⁻¹)` in the large-system limit, by quadrature of
/// the Marchenko–Pastur law with ratio `rho_inv = N/M`.
pub fn mp_resolvent(rho_inv: f64, alpha: f64) -> f64 {
    let atom = (1.0 - rho_inv).max(0.0) / alpha;
    if rho_inv == 0.0 {
        return atom;
    }
    let lo = (1.0 - rho_inv.sqrt()).powi(2);
    let hi = (1.0 + rho_inv.sqrt()).powi(2);
    let (c, h) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    // x = c - h cos θ turns the square-root edges into a smooth periodic
    // integrand, for which the midpoint rule converges spectrally.
    let n = 1 << 16;
    let dt = std::f64::consts::PI / n as f64;
    let sum: f64 = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * dt;
            let x = c - h * t.cos();
            let s = t.sin();
            h * h * s * s / (x * (x + alpha))
        })
        .sum();
    atom + sum * dt / (2.0 * std::f64::consts::PI)
}

/// Closed-form `G` against the quadrature on a grid.
pub fn g_function_vs_quadrature(grid: &[(f64, f64)], tolerance: f64) -> Result<Vec<OracleCheck>> {
    grid.iter()
        .map(|&(r, a)| {
            let g = g_function(r, a)?.g;
            Ok(OracleCheck::absolute(format!("G({r}, {a}) vs quadrature"), g, mp_resolvent(r, a), tolerance))
        })
        .collect()
}

/// Closed-form `G` against the empirical resolvent trace of one draw.
pub fn g_function_vs_resolvent(m: usize, rho_inv: f64, alpha: f64, seed: u64) -> Result<OracleCheck> {
    let mut rng = stream(seed, Stream::Oracle, 3, m as u64);
    let emp = empirical_resolvent_trace(m, rho_inv, alpha, &mut rng)?;
    Ok(OracleCheck::relative(
        format!("G({rho_inv}, {alpha}) vs resolvent trace at M = {m}"),
        g_function(rho_inv, alpha)?.g,
        emp,
        0.02,
    ))
}

/// Counting facts of coded placement, checked by enumerating subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedCount {
    pub users: usize,
    pub t: usize,
    pub per_user_ok: bool,
    pub per_file_ok: bool,
    /// `p_other` equals the enumerated fraction exactly.
    pub probability_ok: bool,
}

impl CodedCount {
    pub fn passed(&self) -> bool {
        self.per_user_ok && self.per_file_ok && self.probability_ok
    }
}

/// Enumerate the placement for `K`, `t`: each user caches `C(K-1, t-1)`
/// subfiles, the copies of a file total `t C(K, t)`, and a user `l ≠ k`
/// lacks the needed subfile of `k` for `(K - t - 1) / (K - 1)` of them.
pub fn coded_counting(users: usize, t: usize) -> Result<CodedCount> {
    let placement = CodedPlacement::new(users, t)?;
    let subsets: Vec<Vec<usize>> = placement.subsets().collect();
    let held: Vec<u128> =
        (0..users).map(|u| subsets.iter().filter(|s| placement.holds(u, s)).count() as u128).collect();
    let per_user_ok = held.iter().all(|&h| h == binomial(users as u128 - 1, t as u128 - 1));
    let per_file_ok = held.iter().sum::<u128>() == t as u128 * binomial(users as u128, t as u128);
    let p = coded_probabilities(users, t)?;
    let (k, l) = (0, users - 1);
    let needed: Vec<Vec<usize>> = placement.needed_subfiles(k).collect();
    let lacking = needed.iter().filter(|s| !placement.holds(l, s)).count() as u128;
    // lacking / needed == (K - t - 1) / (K - 1), compared in integers.
    let probability_ok = lacking * (users as u128 - 1) == (users - t - 1) as u128 * needed.len() as u128
        && (p.p_other() - (users - t - 1) as f64 / (users - 1) as f64).abs() == 0.0;
    Ok(CodedCount { users, t, per_user_ok, per_file_ok, probability_ok })
}

/// Empirical activity / interference / constraint frequencies of random
/// uncoded caching against the analytic probabilities. Cell `j`'s user 0
/// is the target, user 1 of each cell is the interferer.
pub fn caching_probability_frequencies(
    system: &SystemConfig,
    popularity: &PopularityProfile,
    placement: &PlacementProbs,
    samples: usize,
    seed: u64,
) -> Result<Vec<OracleCheck>> {
    let probs = uncoded_probabilities(popularity, placement)?;
    let b = system.cells;
    let mut rng = stream(seed, Stream::Oracle, 4, 0);
    let mut active = vec![0u64; b];
    let mut interf = vec![vec![0u64; b]; b];
    let mut constraint = vec![0u64; b];
    for _ in 0..samples {
        let cache = place_uncoded(system, popularity, placement, &mut rng)?;
        let requests = draw_requests(popularity, system.users, &mut rng);
        let c = incidence(&CacheContents::Uncoded(cache), &requests)?;
        for t in 0..b {
            if !c.is_active(t, 0) {
                continue;
            }
            active[t] += 1;
            for j in 0..b {
                if c.is_active(j, 1) && c.c(j, 1, t, 0) {
                    interf[t][j] += 1;
                }
            }
            // (t, 1) is a ZF constraint of (t, 0).
            if c.is_active(t, 1) && c.c(t, 0, t, 1) {
                constraint[t] += 1;
            }
        }
    }
    let n = samples as f64;
    let check = |name: String, count: u64, p: f64| {
        let se = (p * (1.0 - p) / n).sqrt().max(1.0 / n);
        OracleCheck::absolute(name, count as f64 / n, p, 3.0 * se)
    };
    let mut out = Vec::new();
    for t in 0..b {
        out.push(check(format!("q_a[{t}]"), active[t], probs.q_a[t]));
        for j in 0..b {
            out.push(check(format!("q_i[{t}][{j}]"), interf[t][j], probs.q_i[t][j]));
        }
        out.push(check(format!("q_n[{t}]"), constraint[t], probs.q_n[t]));
    }
    Ok(out)
}

/// The `selftest` suite: every check at its acceptance size.
pub fn selftest(seed: u64) -> Result<Vec<OracleCheck>> {
    let mut out = inner_product_moments(8, 0.7, 0.4, 100_000, seed);
    out.extend(zf_norm_moments(8, 3, 0.5, 100_000, seed)?);
    let grid: Vec<(f64, f64)> =
        [0.0, 0.25, 0.5, 1.0, 2.0].iter().flat_map(|&r| [0.01, 0.1, 1.0, 10.0].map(|a| (r, a))).collect();
    out.extend(g_function_vs_quadrature(&grid, 1e-6)?);
    out.push(g_function_vs_resolvent(256, 0.5, 1.0, seed)?);
    for users in 2..=12 {
        for t in 1..users {
            let c = coded_counting(users, t)?;
            out.push(OracleCheck::absolute(
                format!("coded counting K = {users}, t = {t}"),
                if c.passed() { 0.0 } else { 1.0 },
                0.0,
                0.0,
            ));
        }
    }
    Ok(out)
}
