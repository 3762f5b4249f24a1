//! Gegenbauer coefficients of the stereographic kernel
//! `ψ(θ; a) = cot(θ/2) + a tan(θ/2)` on S^q and the derived Sobolev weights.
//!
//! Even and odd coefficients have closed forms in terms of
//!
//! ```text
//! α_{m,q} = Γ(m + 1/2)² Γ((q-1)/2)² / (2π Γ(m + q/2)²)
//! b_{2m}   = α_{m,q} (4m + q - 1) (1 + a)
//! b_{2m+1} = α_{m,q} (2m + 1)(4m + q + 1) / (2m + q) (1 - a)
//! ```
//!
//! and the Sobolev weights are `w_k = b_k / (1 + 2k/(q-1))`. The
//! quadrature oracle [`gegenbauer_coef_oracle`] evaluates the defining
//! integral directly and is kept for verification only.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{gegenbauer_unchecked, ln_gamma};

/// Default truncation of calibration tables.
pub const DEFAULT_K_MAX: usize = 1000;

/// Kernel parameter `a`, sphere dimension `q` and an optional truncation `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub a: f64,
    pub q: usize,
    pub truncation: Option<usize>,
}

impl KernelSpec {
    pub fn new(a: f64, q: usize) -> Result<Self> {
        let spec = KernelSpec { a, q, truncation: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn truncated(a: f64, q: usize, k: usize) -> Result<Self> {
        let spec = KernelSpec {
            a,
            q,
            truncation: Some(k),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.a) {
            return Err(Error::Config(format!("kernel parameter a must lie in [-1, 1], got {}", self.a)));
        }
        if self.q < 2 {
            return Err(Error::Config(format!(
                "q must be at least 2 (the kernel has no finite coefficients on the circle), got {}",
                self.q
            )));
        }
        if self.truncation == Some(0) {
            return Err(Error::Config("truncation K must be at least 1".into()));
        }
        Ok(())
    }

    /// Gegenbauer index `(q - 1) / 2`.
    pub fn lambda(&self) -> f64 {
        (self.q as f64 - 1.0) / 2.0
    }
}

/// `α_{k,q}`, evaluated in log space.
pub fn alpha(k: usize, q: usize) -> f64 {
    let kf = k as f64;
    let qf = q as f64;
    let ln = 2.0 * ln_gamma(kf + 0.5) + 2.0 * ln_gamma((qf - 1.0) / 2.0) - (2.0 * PI).ln() - 2.0 * ln_gamma(kf + qf / 2.0);
    ln.exp()
}

/// Gegenbauer coefficient `b_{k,q}(ψ(·; a))` in closed form.
pub fn gegenbauer_coef(k: usize, spec: &KernelSpec) -> f64 {
    let q = spec.q as f64;
    let m = k / 2;
    let mf = m as f64;
    if k % 2 == 0 {
        alpha(m, spec.q) * (4.0 * mf + q - 1.0) * (1.0 + spec.a)
    } else {
        alpha(m, spec.q) * (2.0 * mf + 1.0) * (4.0 * mf + q + 1.0) / (2.0 * mf + q) * (1.0 - spec.a)
    }
}

/// `E_H0[ψ(θ_12; a)]`; identical to `b_{0,q}` by construction.
pub fn expected_h0(spec: &KernelSpec) -> f64 {
    gegenbauer_coef(0, spec)
}

/// Sobolev weight `w_{k,q} = b_{k,q} / (1 + 2k/(q-1))`.
pub fn sobolev_weight(k: usize, spec: &KernelSpec) -> f64 {
    gegenbauer_coef(k, spec) / (1.0 + 2.0 * k as f64 / (spec.q as f64 - 1.0))
}

fn binomial(n: u64, r: u64) -> Option<u128> {
    if r > n {
        return Some(0);
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 1..=u128::from(r) {
        acc = acc.checked_mul(u128::from(n - r) + i)? / i;
    }
    Some(acc)
}

/// Dimension `d_{k,q}` of the space of degree-`k` spherical harmonics on S^q,
/// computed exactly as `C(k+q, q) - C(k+q-2, q)`.
pub fn harmonic_dim(k: usize, q: usize) -> Result<u64> {
    if q < 2 {
        return Err(Error::domain("harmonic_dim", format!("q must be at least 2, got {q}")));
    }
    let (k, q) = (k as u64, q as u64);
    let upper = binomial(k + q, q).ok_or(Error::Overflow("harmonic_dim"))?;
    let lower = if k >= 2 {
        binomial(k + q - 2, q).ok_or(Error::Overflow("harmonic_dim"))?
    } else {
        0
    };
    u64::try_from(upper - lower).map_err(|_| Error::Overflow("harmonic_dim"))
}

/// `c_{k,q} = ω_q/ω_{q-1} (1 + 2k/(q-1))^{-2} d_{k,q}`, the squared norm of
/// `C_k^{(q-1)/2}` under the weight `(1 - x²)^{q/2 - 1}`.
pub fn gegenbauer_norm(k: usize, q: usize) -> Result<f64> {
    let qf = q as f64;
    let area_ratio = PI.sqrt() * (ln_gamma(qf / 2.0) - ln_gamma((qf + 1.0) / 2.0)).exp();
    let scale = 1.0 + 2.0 * k as f64 / (qf - 1.0);
    Ok(area_ratio * harmonic_dim(k, q)? as f64 / (scale * scale))
}

/// Coefficient `b_{k,q}` by adaptive quadrature of its defining integral,
/// written in the angular form
/// `∫_0^π ψ(θ; a) C_k(cos θ) sin^{q-1}θ dθ / ∫_0^π C_k(cos θ)² sin^{q-1}θ dθ`.
///
/// Both integrals are computed numerically; nothing here uses the closed form.
pub fn gegenbauer_coef_oracle(k: usize, spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    let lambda = spec.lambda();
    let power = spec.q as i32 - 1;
    let a = spec.a;
    let numerator = quadrature::integrate(
        |theta| {
            let half = 0.5 * theta;
            let psi = 1.0 / half.tan() + a * half.tan();
            psi * gegenbauer_unchecked(k, lambda, theta.cos()) * theta.sin().powi(power)
        },
        0.0,
        PI,
        1e-12,
        20_000,
    )?;
    let norm = quadrature::integrate(
        |theta| {
            let c = gegenbauer_unchecked(k, lambda, theta.cos());
            c * c * theta.sin().powi(power)
        },
        0.0,
        PI,
        1e-13,
        20_000,
    )?;
    Ok(numerator / norm)
}

/// Cached coefficient sequences for `k = 0..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub spec: KernelSpec,
    pub b: Vec<f64>,
    pub w: Vec<f64>,
    pub d: Vec<u64>,
    pub c: Vec<f64>,
    pub e_h0: f64,
}

impl CoefficientTable {
    pub fn build(spec: &KernelSpec, k_max: usize) -> Result<Self> {
        spec.validate()?;
        if k_max < 1 {
            return Err(Error::Config("K_max must be at least 1".into()));
        }
        let mut b = Vec::with_capacity(k_max + 1);
        let mut w = Vec::with_capacity(k_max + 1);
        let mut d = Vec::with_capacity(k_max + 1);
        let mut c = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            b.push(gegenbauer_coef(k, spec));
            w.push(sobolev_weight(k, spec));
            d.push(harmonic_dim(k, spec.q)?);
            c.push(gegenbauer_norm(k, spec.q)?);
        }
        let e_h0 = expected_h0(spec);
        Ok(CoefficientTable { spec: *spec, b, w, d, c, e_h0 })
    }

    pub fn k_max(&self) -> usize {
        self.b.len() - 1
    }

    /// `Var[w_k (Y_k - d_k)] = 2 w_k² d_k`.
    pub fn term_variance(&self, k: usize) -> f64 {
        2.0 * self.w[k] * self.w[k] * self.d[k] as f64
    }

    /// Variance of the series terms `k = 1..=k` (no tail).
    pub fn head_variance(&self, k: usize) -> f64 {
        (1..=k.min(self.k_max())).map(|j| self.term_variance(j)).sum()
    }

    /// Writes `k,b,w,d,c` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,b,w,d,c")?;
        for k in 0..=self.k_max() {
            writeln!(out, "{},{:.17e},{:.17e},{},{:.17e}", k, self.b[k], self.w[k], self.d[k], self.c[k])?;
        }
        Ok(())
    }
}

/// Bound on `Σ_{k > K_max} 2 w_k² d_k`.
///
/// Each parity class satisfies `w_k² d_k ~ C_p k^{1-q}`. The constant of
/// each parity is the ratio `w_k² d_k k^{q-1}` at whichever of `K_max - 1`,
/// `K_max` has that parity; the ratio is nonincreasing in `k` within a
/// parity, so it dominates every later term. Summing `C_p k^{1-q}` over
/// every other integer beyond `K_max` is bounded by
/// `C_p (K_max - 1)^{2-q} / (2 (q - 2))` via the integral comparison.
pub fn remainder_bound(table: &CoefficientTable) -> Result<f64> {
    let q = table.spec.q;
    if q < 3 {
        return Err(Error::NonSummable { q });
    }
    let k_max = table.k_max();
    if k_max < 2 {
        return Err(Error::Config("remainder bound needs K_max >= 2".into()));
    }
    let qf = q as f64;
    let scaled = |k: usize| table.w[k] * table.w[k] * table.d[k] as f64 * (k as f64).powf(qf - 1.0);
    let constants = scaled(k_max) + scaled(k_max - 1);
    let sum_bound = constants * ((k_max - 1) as f64).powf(2.0 - qf) / (2.0 * (qf - 2.0));
    Ok(2.0 * sum_bound)
}

/// `2 Σ_{k=K+1}^{K_max} w_k² d_k` plus [`remainder_bound`] for the terms
/// beyond the table. For `q = 2` the series diverges and
/// [`Error::NonSummable`] is returned.
pub fn tail_variance(table: &CoefficientTable, k: usize) -> Result<f64> {
    let q = table.spec.q;
    if q < 3 {
        return Err(Error::NonSummable { q });
    }
    if k > table.k_max() {
        return Err(Error::Config(format!("K = {k} exceeds table K_max = {}", table.k_max())));
    }
    let head: f64 = (k + 1..=table.k_max()).rev().map(|j| table.term_variance(j)).sum();
    Ok(head + remainder_bound(table)?)
}
