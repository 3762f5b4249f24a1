//! Data-generating processes on S^q: uniform, rotationally symmetric
//! alternatives, uniform spherical caps and the uniform antipodal-dependent
//! (UAD) process.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::sample::SphericalSample;
use crate::special::{inc_beta, inc_beta_inv, ln_gamma};

/// Angular functions of the rotationally symmetric alternatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngularFunction {
    /// `f(s) = exp(s)`.
    Vmf,
    /// `f(s) = cosh(s)`, an equal mixture of two antipodal vMFs.
    MixVmf,
    /// `f(s; ν) = exp(-(s - ν)²)`.
    SmallCircle { nu: f64 },
}

pub const DEFAULT_SMALL_CIRCLE_NU: f64 = 0.25;

/// Highest derivative order tabulated for the small-circle function.
pub const MAX_SMALL_CIRCLE_DERIVATIVE: usize = 6;

impl AngularFunction {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            AngularFunction::Vmf => s.exp(),
            AngularFunction::MixVmf => s.cosh(),
            AngularFunction::SmallCircle { nu } => (-(s - nu) * (s - nu)).exp(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            AngularFunction::Vmf => "vmf".into(),
            AngularFunction::MixVmf => "mixvmf".into(),
            AngularFunction::SmallCircle { nu } => format!("smallcircle({nu})"),
        }
    }

    /// Parses `vmf`, `mixvmf`, `smallcircle` or `smallcircle(<nu>)`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_lowercase();
        match t.as_str() {
            "vmf" | "exp" => return Ok(AngularFunction::Vmf),
            "mixvmf" | "cosh" => return Ok(AngularFunction::MixVmf),
            "smallcircle" | "sc" => return Ok(AngularFunction::SmallCircle { nu: DEFAULT_SMALL_CIRCLE_NU }),
            _ => {}
        }
        if let Some(inner) = t.strip_prefix("smallcircle(").and_then(|r| r.strip_suffix(')')) {
            let nu: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid small-circle parameter '{inner}'")))?;
            if nu.is_finite() {
                return Ok(AngularFunction::SmallCircle { nu });
            }
        }
        Err(Error::Config(format!("unknown angular function '{text}' (expected vmf, mixvmf or smallcircle(nu))")))
    }

    /// `f^{(k)}(0)` for `k = 0..=k_max`.
    ///
    /// The small-circle derivatives are `H_k(ν) e^{-ν²}` with `H_k` the
    /// physicists' Hermite polynomials, tabulated up to order 6.
    pub fn derivatives_at_zero(&self, k_max: usize) -> Result<Vec<f64>> {
        match *self {
            AngularFunction::Vmf => Ok(vec![1.0; k_max + 1]),
            AngularFunction::MixVmf => Ok((0..=k_max).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect()),
            AngularFunction::SmallCircle { nu } => {
                if k_max > MAX_SMALL_CIRCLE_DERIVATIVE {
                    return Err(Error::DerivativeOrder {
                        order: k_max,
                        stored: MAX_SMALL_CIRCLE_DERIVATIVE,
                    });
                }
                let x = nu;
                let hermite = [
                    1.0,
                    2.0 * x,
                    4.0 * x * x - 2.0,
                    8.0 * x.powi(3) - 12.0 * x,
                    16.0 * x.powi(4) - 48.0 * x * x + 12.0,
                    32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x,
                    64.0 * x.powi(6) - 480.0 * x.powi(4) + 720.0 * x * x - 120.0,
                ];
                let scale = (-nu * nu).exp();
                Ok(hermite[..=k_max].iter().map(|h| h * scale).collect())
            }
        }
    }

    /// `max_{|s| ≤ κ} f(s)`: a 10^4-point grid scan refined by golden-section
    /// search around the best grid point.
    pub fn envelope(&self, kappa: f64) -> Result<f64> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Envelope(format!("concentration must be finite and nonnegative, got {kappa}")));
        }
        if kappa == 0.0 {
            return Ok(self.eval(0.0));
        }
        const GRID: usize = 10_000;
        let step = 2.0 * kappa / GRID as f64;
        let mut best_i = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=GRID {
            let v = self.eval(-kappa + step * i as f64);
            if !v.is_finite() {
                return Err(Error::Envelope(format!("{} is not finite on [-{kappa}, {kappa}]", self.name())));
            }
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let (mut lo, mut hi) = (
            (-kappa + step * best_i.saturating_sub(1) as f64).max(-kappa),
            (-kappa + step * (best_i + 1) as f64).min(kappa),
        );
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let x1 = hi - ratio * (hi - lo);
            let x2 = lo + ratio * (hi - lo);
            if self.eval(x1) < self.eval(x2) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        let refined = self.eval(0.5 * (lo + hi));
        let m = best.max(refined).max(self.eval(-kappa)).max(self.eval(kappa));
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Envelope(format!("envelope of {} is {m}", self.name())));
        }
        Ok(m)
    }
}

/// Rotationally symmetric law with density `∝ f(κ x'μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotSymSpec {
    pub mu: Vec<f64>,
    pub kappa: f64,
    pub f: AngularFunction,
}

impl RotSymSpec {
    pub fn new(mu: Vec<f64>, kappa: f64, f: AngularFunction) -> Result<Self> {
        check_unit("RotSymSpec", &mu)?;
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::domain("RotSymSpec", format!("kappa must be finite and nonnegative, got {kappa}")));
        }
        Ok(RotSymSpec { mu, kappa, f })
    }
}

/// Uniform law on the cap `{x : x'μ ≥ cos θ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapSpec {
    pub mu: Vec<f64>,
    pub theta: f64,
}

impl CapSpec {
    pub fn new(mu: Vec<f64>, theta: f64) -> Result<Self> {
        check_unit("CapSpec", &mu)?;
        if theta == 0.0 {
            return Err(Error::domain("CapSpec", "theta = 0 is a point mass at mu"));
        }
        if !(theta > 0.0 && theta <= std::f64::consts::PI) {
            return Err(Error::domain("CapSpec", format!("theta must lie in (0, pi], got {theta}")));
        }
        Ok(CapSpec { mu, theta })
    }
}

fn check_unit(function: &'static str, mu: &[f64]) -> Result<()> {
    if mu.len() < 2 {
        return Err(Error::domain(function, "mu needs at least 2 coordinates"));
    }
    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= 1e-12) {
        return Err(Error::domain(function, format!("mu must have unit norm, got {norm}")));
    }
    Ok(())
}

fn check_q(function: &'static str, q: usize, min: usize) -> Result<()> {
    if q < min {
        return Err(Error::domain(function, format!("q must be at least {min}, got {q}")));
    }
    Ok(())
}

fn check_mu_dim(function: &'static str, mu: &[f64], q: usize) -> Result<()> {
    if mu.len() != q + 1 {
        return Err(Error::domain(function, format!("mu has {} coordinates, expected {}", mu.len(), q + 1)));
    }
    Ok(())
}

/// North pole `e_{q+1}` of S^q.
pub fn north_pole(q: usize) -> Vec<f64> {
    let mut e = vec![0.0; q + 1];
    e[q] = 1.0;
    e
}

fn normal_unit<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    loop {
        let mut norm2 = 0.0;
        for x in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x = z;
            norm2 += z * z;
        }
        if norm2 > 1e-200 {
            let inv = 1.0 / norm2.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

/// `n` iid points from Unif(S^q) as normalized Gaussian vectors.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(q: usize, n: usize, rng: &mut R) -> Result<SphericalSample> {
    check_q("sample_uniform_sphere", q, 1)?;
    if n == 0 {
        return Err(Error::domain("sample_uniform_sphere", "n must be at least 1"));
    }
    let dim = q + 1;
    let mut points = vec![0.0; n * dim];
    for row in points.chunks_exact_mut(dim) {
        normal_unit(row, rng);
    }
    Ok(SphericalSample::from_generated(points, q))
}

/// Projected uniform CDF `F_q(v) = I_{(v+1)/2}(q/2, q/2)` of `X'μ`.
pub fn projected_cdf_fq(v: f64, q: usize) -> Result<f64> {
    check_q("projected_cdf_fq", q, 2)?;
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::domain("projected_cdf_fq", format!("v must lie in [-1, 1], got {v}")));
    }
    let h = q as f64 / 2.0;
    Ok(inc_beta((v + 1.0) / 2.0, h, h))
}

/// Density of `X'μ` under uniformity, `ω_{q-1}/ω_q (1 - v²)^{q/2 - 1}`.
pub fn projected_density(v: f64, q: usize) -> f64 {
    if !(-1.0..=1.0).contains(&v) {
        return 0.0;
    }
    let qf = q as f64;
    let log_const = ln_gamma((qf + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln() - ln_gamma(qf / 2.0);
    (log_const + (qf / 2.0 - 1.0) * (1.0 - v * v).ln()).exp()
}

/// Orthonormal complement `Γ_μ` of a unit vector, realized as the last-axis
/// Householder reflection `H` with `H e_{q+1} = μ`; `Γ_μ u = H (u, 0)`.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    mu: Vec<f64>,
    w: Vec<f64>,
    w_norm2: f64,
    sign: f64,
}

impl TangentFrame {
    pub fn new(mu: &[f64]) -> Result<Self> {
        check_unit("TangentFrame", mu)?;
        let last = mu.len() - 1;
        // Reflect along e - μ, or along e + μ (negated) when μ is close to e,
        // so that ‖w‖ is never small.
        let sign = if mu[last] > 0.0 { -1.0 } else { 1.0 };
        let mut w: Vec<f64> = mu.iter().map(|m| -sign * m).collect();
        w[last] += 1.0;
        let w_norm2 = w.iter().map(|x| x * x).sum();
        Ok(TangentFrame {
            mu: mu.to_vec(),
            w,
            w_norm2,
            sign,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Writes `v μ + √(1 - v²) Γ_μ u` into `out`.
    pub fn compose(&self, v: f64, u: &[f64], out: &mut [f64]) {
        let dim = self.mu.len();
        debug_assert_eq!(u.len(), dim - 1);
        debug_assert_eq!(out.len(), dim);
        let s = (1.0 - v * v).max(0.0).sqrt();
        let proj: f64 = self.w[..dim - 1].iter().zip(u).map(|(a, b)| a * b).sum();
        let coef = 2.0 * proj / self.w_norm2;
        for i in 0..dim {
            let ui = if i < dim - 1 { u[i] } else { 0.0 };
            let gamma_u = -self.sign * (ui - coef * self.w[i]);
            out[i] = v * self.mu[i] + s * gamma_u;
        }
    }
}

/// `v μ + √(1 - v²) Γ_μ u` for a unit `u ∈ S^{q-1}` and unit `μ ∈ S^q`.
pub fn tangent_normal_compose(v: f64, u: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::domain("tangent_normal_compose", format!("v must lie in [-1, 1], got {v}")));
    }
    let frame = TangentFrame::new(mu)?;
    if u.len() + 1 != mu.len() {
        return Err(Error::domain("tangent_normal_compose", "u must have one coordinate fewer than mu"));
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::domain("tangent_normal_compose", format!("u must have unit norm, got {norm}")));
    }
    let mut out = vec![0.0; mu.len()];
    frame.compose(v, u, &mut out);
    Ok(out)
}

/// Proposal and acceptance counts of a rejection run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RejectionStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl RejectionStats {
    pub fn rate(&self) -> f64 {
        self.accepted as f64 / self.proposals as f64
    }
}

/// Acceptance probability `E[f(κV)] / M` of the rejection sampler, with
/// `V ~ F_q` and `M` the envelope.
pub fn predicted_acceptance(spec: &RotSymSpec, q: usize) -> Result<f64> {
    let m = spec.f.envelope(spec.kappa)?;
    let mean = integrate(|v| spec.f.eval(spec.kappa * v) * projected_density(v, q), -1.0, 1.0, 1e-12 * m, 4000)?;
    Ok(mean / m)
}

/// Samples from the rotationally symmetric law by rejection on `V = X'μ`
/// against the projected uniform proposal, then composes with a uniform
/// tangent direction.
pub fn sample_rotsym<R: Rng + ?Sized>(spec: &RotSymSpec, q: usize, n: usize, rng: &mut R) -> Result<SphericalSample> {
    sample_rotsym_with_stats(spec, q, n, rng).map(|(s, _)| s)
}

pub fn sample_rotsym_with_stats<R: Rng + ?Sized>(
    spec: &RotSymSpec,
    q: usize,
    n: usize,
    rng: &mut R,
) -> Result<(SphericalSample, RejectionStats)> {
    check_q("sample_rotsym", q, 2)?;
    check_mu_dim("sample_rotsym", &spec.mu, q)?;
    if n == 0 {
        return Err(Error::domain("sample_rotsym", "n must be at least 1"));
    }
    let envelope = spec.f.envelope(spec.kappa)?;
    let frame = TangentFrame::new(&spec.mu)?;
    let h = q as f64 / 2.0;
    let proposal = Beta::new(h, h).map_err(|e| Error::Envelope(e.to_string()))?;
    let dim = q + 1;
    let mut points = vec![0.0; n * dim];
    let mut u = vec![0.0; q];
    let mut stats = RejectionStats::default();
    for row in points.chunks_exact_mut(dim) {
        let v = loop {
            stats.proposals += 1;
            let v = 2.0 * proposal.sample(rng) - 1.0;
            let accept: f64 = rng.gen();
            if accept * envelope <= spec.f.eval(spec.kappa * v) {
                break v;
            }
        };
        stats.accepted += 1;
        normal_unit(&mut u, rng);
        frame.compose(v, &u, row);
    }
    Ok((SphericalSample::from_generated(points, q), stats))
}

/// Draws `V = X'μ` for a uniform point on the cap `{v ≥ cos θ}`.
///
/// With `p_θ = 1 - F_q(cos θ) = I_{sin²(θ/2)}(q/2, q/2)`, the upper-tail
/// form `1 - F_q(V) = p_θ U'` is equivalent to
/// `V = F_q^{-1}((1 - F_q(cos θ)) U + F_q(cos θ))` with `U' = 1 - U`, and
/// stays accurate for tiny caps.
struct CapInverter {
    h: f64,
    p_theta: f64,
    x_max: f64,
    cos_theta: f64,
}

impl CapInverter {
    fn new(q: usize, theta: f64) -> Self {
        let h = q as f64 / 2.0;
        let x_max = (0.5 * theta).sin().powi(2);
        CapInverter {
            h,
            p_theta: inc_beta(x_max, h, h),
            x_max,
            cos_theta: theta.cos(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let x = inc_beta_inv(self.p_theta * u, self.h, self.h).min(self.x_max);
        (1.0 - 2.0 * x).max(self.cos_theta).clamp(-1.0, 1.0)
    }
}

/// Uniform sample on the spherical cap by inversion of the projected CDF.
pub fn sample_cap<R: Rng + ?Sized>(spec: &CapSpec, q: usize, n: usize, rng: &mut R) -> Result<SphericalSample> {
    check_q("sample_cap", q, 2)?;
    check_mu_dim("sample_cap", &spec.mu, q)?;
    if n == 0 {
        return Err(Error::domain("sample_cap", "n must be at least 1"));
    }
    let inverter = CapInverter::new(q, spec.theta);
    let frame = TangentFrame::new(&spec.mu)?;
    let dim = q + 1;
    let mut points = vec![0.0; n * dim];
    let mut u = vec![0.0; q];
    for row in points.chunks_exact_mut(dim) {
        let v = inverter.draw(rng);
        normal_unit(&mut u, rng);
        frame.compose(v, &u, row);
    }
    Ok(SphericalSample::from_generated(points, q))
}

/// UAD process: the first `⌈n/2⌉` rows are iid uniform and row `i + ⌈n/2⌉`
/// is uniform on the cap of angle `θ` around `-X_i`, for `i < ⌊n/2⌋`.
pub fn sample_uad<R: Rng + ?Sized>(q: usize, n: usize, theta: f64, rng: &mut R) -> Result<SphericalSample> {
    check_q("sample_uad", q, 2)?;
    if n < 2 {
        return Err(Error::domain("sample_uad", "n must be at least 2"));
    }
    if !(theta > 0.0 && theta <= std::f64::consts::PI) {
        return Err(Error::domain("sample_uad", format!("theta must lie in (0, pi], got {theta}")));
    }
    let dim = q + 1;
    let head = n.div_ceil(2);
    let mut points = sample_uniform_sphere(q, head, rng)?.into_vec();
    points.resize(n * dim, 0.0);
    let inverter = CapInverter::new(q, theta);
    let mut u = vec![0.0; q];
    let mut out = vec![0.0; dim];
    for i in 0..n / 2 {
        let anti: Vec<f64> = points[i * dim..(i + 1) * dim].iter().map(|x| -x).collect();
        let frame = TangentFrame::new(&anti)?;
        let v = inverter.draw(rng);
        normal_unit(&mut u, rng);
        frame.compose(v, &u, &mut out);
        points[(head + i) * dim..(head + i + 1) * dim].copy_from_slice(&out);
    }
    Ok(SphericalSample::from_generated(points, q))
}
