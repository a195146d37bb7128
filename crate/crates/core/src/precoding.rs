//! Cache-aware MRT, ZF and RZF precoders and the large-system G-function.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, DVectorView, Dyn};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::complex_normal_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PrecoderKind {
    Mrt,
    Zf,
    Rzf,
}

impl PrecoderKind {
    pub const ALL: [PrecoderKind; 3] = [PrecoderKind::Mrt, PrecoderKind::Zf, PrecoderKind::Rzf];

    pub fn as_str(self) -> &'static str {
        match self {
            PrecoderKind::Mrt => "MRT",
            PrecoderKind::Zf => "ZF",
            PrecoderKind::Rzf => "RZF",
        }
    }
}

impl fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A precoding vector normalized so that `E{‖w‖²} = 1` over realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub w: DVector<Complex64>,
    pub lambda: f64,
    pub kind: PrecoderKind,
    pub alpha: Option<f64>,
}

/// `w = sqrt(1 / (M β̂)) ĥ`.
pub fn mrt(h_hat: DVectorView<'_, Complex64>, beta_hat: f64) -> Result<Precoder> {
    if !(beta_hat > 0.0) {
        return Err(Error::domain(format!("estimate variance must be positive, got {beta_hat}")));
    }
    let lambda = 1.0 / (h_hat.len() as f64 * beta_hat);
    Ok(Precoder { w: h_hat * Complex64::from(lambda.sqrt()), lambda, kind: PrecoderKind::Mrt, alpha: None })
}

/// ZF normalization `(M - N_n - 1) β̂`.
pub fn zf_lambda(antennas: usize, constraints: usize, beta_hat: f64) -> Result<f64> {
    if antennas <= constraints + 1 {
        return Err(Error::Infeasible { antennas, constraints, needed: constraints + 1 });
    }
    Ok((antennas - constraints - 1) as f64 * beta_hat)
}

/// ZF precoder. Column 0 of `q` is the target's estimate, the remaining
/// columns are the estimates of the users it must not interfere with.
pub fn zf(q: &DMatrix<Complex64>, beta_hat: f64) -> Result<Precoder> {
    zf_with_gram(q, q.ad_mul(q), beta_hat)
}

/// ZF precoder with a precomputed Gram matrix `QᴴQ`.
pub fn zf_with_gram(q: &DMatrix<Complex64>, gram: DMatrix<Complex64>, beta_hat: f64) -> Result<Precoder> {
    if !(beta_hat > 0.0) {
        return Err(Error::domain(format!("estimate variance must be positive, got {beta_hat}")));
    }
    let lambda = zf_lambda(q.nrows(), q.ncols() - 1, beta_hat)?;
    let x = solve_e1(gram)?;
    let w = q * x * Complex64::from(lambda.sqrt());
    Ok(Precoder { w, lambda, kind: PrecoderKind::Zf, alpha: None })
}

/// Solve `A x = e1` for Hermitian positive definite `A`.
fn solve_e1(a: DMatrix<Complex64>) -> Result<DVector<Complex64>> {
    let n = a.nrows();
    let chol = Cholesky::<Complex64, Dyn>::new(a)
        .ok_or_else(|| Error::Numeric("Gram matrix is not positive definite".into()))?;
    let mut e1 = DVector::zeros(n);
    e1[0] = Complex64::new(1.0, 0.0);
    let x = chol.solve(&e1);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("Gram matrix is numerically singular".into()));
    }
    Ok(x)
}

/// Value of the large-system function `G(ρ⁻¹, α)` and `Ḡ = -dG/dα`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFunctionValue {
    pub rho_inv: f64,
    pub alpha: f64,
    pub g: f64,
    pub g_bar: f64,
}

impl GFunctionValue {
    /// RZF normalization `(1 + G)² / Ḡ`.
    pub fn lambda(&self) -> f64 {
        (1.0 + self.g).powi(2) / self.g_bar
    }

    /// `G² / Ḡ`, the large-system desired-signal factor.
    pub fn signal_factor(&self) -> f64 {
        self.g * self.g / self.g_bar
    }
}

/// Closed form of the Stieltjes-type transform of the Marchenko–Pastur law,
/// evaluated in a cancellation-free arrangement.
pub fn g_function(rho_inv: f64, alpha: f64) -> Result<GFunctionValue> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::domain(format!("alpha must be positive and finite, got {alpha}")));
    }
    if !(rho_inv >= 0.0) || !rho_inv.is_finite() {
        return Err(Error::domain(format!("load ratio must be non-negative, got {rho_inv}")));
    }
    let a = 1.0 - rho_inv;
    let b = 1.0 + rho_inv;
    let x = a * a / (alpha * alpha) + 2.0 * b / alpha;
    let s = (x + 1.0).sqrt();
    let (g, g_bar) = if a >= 0.0 {
        let g = 0.5 * (x / (s + 1.0) + a / alpha);
        let g_bar = 0.5 * ((a * a / alpha.powi(3) + b / (alpha * alpha)) / s + a / (alpha * alpha));
        (g, g_bar)
    } else {
        // S + a/α and the derivative both cancel for a < 0; use the
        // conjugate forms instead.
        let abs_a = -a;
        let g = 0.5 * ((2.0 * b / alpha + 1.0) / (s + abs_a / alpha) - 1.0);
        let d = a * a / alpha + b + abs_a * s;
        let g_bar = 2.0 * rho_inv / (d * alpha * alpha * s);
        (g, g_bar)
    };
    Ok(GFunctionValue { rho_inv, alpha, g, g_bar })
}

/// RZF precoder. `f` is `M x (N_n + 1)`; column 0 is the target's scaled
/// fading estimate `ĥ / sqrt(M β̂)` and the remaining columns those of the
/// users in its constraint set.
///
/// Computes `sqrt(λ) (F Fᴴ + α I_M)⁻¹ f₁` as `sqrt(λ) F (FᴴF + α I)⁻¹ e₁`.
pub fn rzf(f: &DMatrix<Complex64>, alpha: f64) -> Result<Precoder> {
    rzf_with_gram(f, f.ad_mul(f), alpha)
}

/// RZF precoder with a precomputed `FᴴF`.
pub fn rzf_with_gram(f: &DMatrix<Complex64>, mut gram: DMatrix<Complex64>, alpha: f64) -> Result<Precoder> {
    let m = f.nrows();
    let n_n = f.ncols() - 1;
    let gv = g_function(n_n as f64 / m as f64, alpha)?;
    let lambda = gv.lambda();
    for i in 0..gram.nrows() {
        gram[(i, i)] += Complex64::from(alpha);
    }
    let x = solve_e1(gram)?;
    let w = f * x * Complex64::from(lambda.sqrt());
    Ok(Precoder { w, lambda, kind: PrecoderKind::Rzf, alpha: Some(alpha) })
}

/// `(1/M) tr((F Fᴴ + α I_M)⁻¹)` for `F` of size `M x N`, `N = ρ⁻¹ M`, with
/// i.i.d. `CN(0, 1/M)` entries.
pub fn empirical_resolvent_trace<R: Rng + ?Sized>(m: usize, rho_inv: f64, alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    let n_real = rho_inv * m as f64;
    let n = n_real.round() as usize;
    if (n_real - n as f64).abs() > 1e-9 {
        return Err(Error::domain(format!("rho_inv * M = {n_real} is not an integer")));
    }
    if n == 0 {
        return Ok(1.0 / alpha);
    }
    let f = complex_normal_matrix(m, n, rng) * Complex64::from((1.0 / m as f64).sqrt());
    let mut gram = f.ad_mul(&f);
    for i in 0..n {
        gram[(i, i)] += Complex64::from(alpha);
    }
    let inv = Cholesky::<Complex64, Dyn>::new(gram)
        .ok_or_else(|| Error::Numeric("regularized Gram matrix is not positive definite".into()))?
        .inverse();
    let small: f64 = (0..n).map(|i| inv[(i, i)].re).sum();
    // Push-through: tr_M = tr_N + (M - N) / α.
    Ok((small + (m as f64 - n as f64) / alpha) / m as f64)
}

/// `|<a, b>| / (‖a‖ ‖b‖)`.
pub fn cosine(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}
