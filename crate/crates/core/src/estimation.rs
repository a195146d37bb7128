//! Small-scale fading and cache-aware uplink MMSE channel estimation.
//!
//! User `l` of every cell transmits pilot `l`; only active users transmit.
//! Pilot sequences are never materialized: with orthonormal pilots the
//! projection of the received block onto pilot `k` is a sufficient statistic.

use nalgebra::{DMatrix, DVectorView};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cache::CacheIncidence;
use crate::error::{Error, Result};
use crate::system_model::LargeScaleState;

/// One standard circularly-symmetric complex Gaussian sample.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows x cols` matrix of i.i.d. `CN(0, 1)` entries, filled column-major.
pub fn complex_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Fading `G` and channels `H = sqrt(beta) G`, stored per BS as
/// `M x (B K)` matrices whose column `j K + l` belongs to user `(j, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    cells: usize,
    users: usize,
    g: Vec<DMatrix<Complex64>>,
    h: Vec<DMatrix<Complex64>>,
}

impl ChannelRealization {
    pub fn antennas(&self) -> usize {
        self.g[0].nrows()
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Fading vector of user `(j, l)` towards BS `bs`.
    pub fn g(&self, j: usize, l: usize, bs: usize) -> DVectorView<'_, Complex64> {
        self.g[bs].column(j * self.users + l)
    }

    pub fn h(&self, j: usize, l: usize, bs: usize) -> DVectorView<'_, Complex64> {
        self.h[bs].column(j * self.users + l)
    }

    /// All channels seen by BS `bs`.
    pub fn h_at(&self, bs: usize) -> &DMatrix<Complex64> {
        &self.h[bs]
    }
}

/// Draw i.i.d. Rayleigh fading for every (user, BS) pair. Draw order is
/// BS-major, then user, then antenna.
pub fn draw_fading<R: Rng + ?Sized>(antennas: usize, large_scale: &LargeScaleState, rng: &mut R) -> ChannelRealization {
    let (b, k) = (large_scale.cells(), large_scale.users());
    let mut g = Vec::with_capacity(b);
    let mut h = Vec::with_capacity(b);
    for bs in 0..b {
        let gm = complex_normal_matrix(antennas, b * k, rng);
        let mut hm = gm.clone();
        for (col, mut column) in hm.column_iter_mut().enumerate() {
            column *= Complex64::from(large_scale.beta(col / k, col % k, bs).sqrt());
        }
        g.push(gm);
        h.push(hm);
    }
    ChannelRealization { cells: b, users: k, g, h }
}

/// Estimate and error variances indexed `(j, l, j')` like the pathloss.
#[derive(Debug, Clone, PartialEq)]
pub struct Variances {
    cells: usize,
    users: usize,
    hat: Vec<f64>,
    tilde: Vec<f64>,
}

impl Variances {
    #[inline]
    fn idx(&self, j: usize, l: usize, bs: usize) -> usize {
        (j * self.users + l) * self.cells + bs
    }

    #[inline]
    pub fn hat(&self, j: usize, l: usize, bs: usize) -> f64 {
        self.hat[self.idx(j, l, bs)]
    }

    #[inline]
    pub fn tilde(&self, j: usize, l: usize, bs: usize) -> f64 {
        self.tilde[self.idx(j, l, bs)]
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Perfect CSI: `hat = beta`, `tilde = 0`.
    pub fn perfect(large_scale: &LargeScaleState) -> Self {
        Variances {
            cells: large_scale.cells(),
            users: large_scale.users(),
            hat: large_scale.betas().to_vec(),
            tilde: vec![0.0; large_scale.betas().len()],
        }
    }
}

/// Single-pair estimate variance: `pτβ² / (1 + pτ(β + contamination))`.
#[inline]
pub fn estimate_variance(beta: f64, contamination: f64, pilot_energy: f64) -> f64 {
    pilot_energy * beta * beta / (1.0 + pilot_energy * (beta + contamination))
}

/// Variances where pilot contaminator `(j', k)` is weighted by
/// `weight(j', k)` (its activity indicator, or an activity probability).
pub fn variances_weighted(
    large_scale: &LargeScaleState,
    pilot_energy: f64,
    weight: impl Fn(usize, usize) -> f64,
) -> Variances {
    let (b, k) = (large_scale.cells(), large_scale.users());
    let mut hat = Vec::with_capacity(b * k * b);
    let mut tilde = Vec::with_capacity(b * k * b);
    for j in 0..b {
        for l in 0..k {
            for bs in 0..b {
                let contamination: f64 =
                    (0..b).filter(|&jp| jp != j).map(|jp| weight(jp, l) * large_scale.beta(jp, l, bs)).sum();
                let beta = large_scale.beta(j, l, bs);
                let h = estimate_variance(beta, contamination, pilot_energy);
                hat.push(h);
                tilde.push(beta - h);
            }
        }
    }
    Variances { cells: b, users: k, hat, tilde }
}

/// Variances given the realized activity pattern: only active users
/// contaminate.
pub fn estimation_variances(
    large_scale: &LargeScaleState,
    incidence: &CacheIncidence,
    pilot_power: f64,
    pilot_length: usize,
) -> Variances {
    variances_weighted(large_scale, pilot_power * pilot_length as f64, |jp, l| {
        if incidence.is_active(jp, l) {
            1.0
        } else {
            0.0
        }
    })
}

/// Variances with every user active (no caching).
pub fn baseline_variances(large_scale: &LargeScaleState, pilot_energy: f64) -> Variances {
    variances_weighted(large_scale, pilot_energy, |_, _| 1.0)
}

/// MMSE estimates `Ĥ` and errors `H̃ = H - Ĥ` for the active users.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    cells: usize,
    users: usize,
    active: Vec<bool>,
    h_hat: Vec<DMatrix<Complex64>>,
    h_tilde: Vec<DMatrix<Complex64>>,
    variances: Variances,
}

impl EstimateSet {
    pub fn variances(&self) -> &Variances {
        &self.variances
    }

    pub fn is_active(&self, j: usize, l: usize) -> bool {
        self.active[j * self.users + l]
    }

    /// Estimate of the channel of `(j, l)` at BS `bs`.
    pub fn h_hat(&self, j: usize, l: usize, bs: usize) -> Result<DVectorView<'_, Complex64>> {
        if !self.is_active(j, l) {
            return Err(Error::logic(format!("user ({j}, {l}) is inactive and has no channel estimate")));
        }
        Ok(self.h_hat[bs].column(j * self.users + l))
    }

    pub fn h_tilde(&self, j: usize, l: usize, bs: usize) -> Result<DVectorView<'_, Complex64>> {
        if !self.is_active(j, l) {
            return Err(Error::logic(format!("user ({j}, {l}) is inactive and has no estimation error")));
        }
        Ok(self.h_tilde[bs].column(j * self.users + l))
    }

    /// All estimates at BS `bs` (`M x (B K)`, zero columns for inactive users).
    pub fn h_hat_at(&self, bs: usize) -> &DMatrix<Complex64> {
        &self.h_hat[bs]
    }

    pub fn h_tilde_at(&self, bs: usize) -> &DMatrix<Complex64> {
        &self.h_tilde[bs]
    }

    /// Perfect CSI at the BSs: `Ĥ = H`, `H̃ = 0`.
    pub fn perfect(channel: &ChannelRealization, large_scale: &LargeScaleState, incidence: &CacheIncidence) -> Self {
        let (b, k) = (channel.cells, channel.users);
        let active: Vec<bool> = (0..b * k).map(|u| incidence.is_active(u / k, u % k)).collect();
        let mut h_hat = channel.h.clone();
        for m in &mut h_hat {
            zero_inactive(m, &active);
        }
        let h_tilde = channel.h.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect();
        EstimateSet { cells: b, users: k, active, h_hat, h_tilde, variances: Variances::perfect(large_scale) }
    }
}

fn zero_inactive(m: &mut DMatrix<Complex64>, active: &[bool]) {
    for (col, &a) in active.iter().enumerate() {
        if !a {
            m.column_mut(col).fill(Complex64::new(0.0, 0.0));
        }
    }
}

/// Uplink MMSE estimation. For every BS `j` and pilot `k` the statistic
/// `r = sqrt(pτ) Σ_active h(j', k, j) + n` is formed with `n ~ CN(0, I_M)`,
/// and `ĥ(b, k, j) = sqrt(pτ) β(b,k,j) / (1 + pτ Σ_active β(j',k,j)) · r`.
/// Noise is drawn for every `(j, k)` (BS-major) whether or not any user
/// uses the pilot, so the stream layout does not depend on activity.
pub fn mmse_estimate<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    large_scale: &LargeScaleState,
    incidence: &CacheIncidence,
    pilot_power: f64,
    pilot_length: usize,
    rng: &mut R,
) -> EstimateSet {
    let (b, k) = (channel.cells, channel.users);
    let m = channel.antennas();
    let pt = pilot_power * pilot_length as f64;
    let spt = pt.sqrt();
    let active: Vec<bool> = (0..b * k).map(|u| incidence.is_active(u / k, u % k)).collect();
    let mut h_hat = Vec::with_capacity(b);
    let mut h_tilde = Vec::with_capacity(b);
    for bs in 0..b {
        let noise = complex_normal_matrix(m, k, rng);
        let h = &channel.h[bs];
        let mut est = DMatrix::<Complex64>::zeros(m, b * k);
        for pilot in 0..k {
            let users: Vec<usize> = (0..b).filter(|&j| active[j * k + pilot]).collect();
            if users.is_empty() {
                continue;
            }
            let mut r = noise.column(pilot).into_owned();
            let mut total_beta = 0.0;
            for &j in &users {
                r.axpy(Complex64::from(spt), &h.column(j * k + pilot), Complex64::from(1.0));
                total_beta += large_scale.beta(j, pilot, bs);
            }
            for &j in &users {
                let scale = spt * large_scale.beta(j, pilot, bs) / (1.0 + pt * total_beta);
                est.column_mut(j * k + pilot).copy_from(&(&r * Complex64::from(scale)));
            }
        }
        let mut err = h - &est;
        zero_inactive(&mut err, &active);
        h_hat.push(est);
        h_tilde.push(err);
    }
    let variances = estimation_variances(large_scale, incidence, pilot_power, pilot_length);
    EstimateSet { cells: b, users: k, active, h_hat, h_tilde, variances }
}
