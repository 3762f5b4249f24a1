//! Reference distributions for calibration: simulated draws of the
//! weighted chi-square null limit, of its local-alternative counterpart, and
//! exact-n Monte Carlo null distributions, with p-value and critical-value
//! queries and a flat binary cache.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::coefficients::{harmonic_dim, tail_variance, CoefficientTable, KernelSpec};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::samplers::{sample_uniform_sphere, AngularFunction};
use crate::special::ChiSquareSampler;
use crate::statistics::{evaluate_many, TestStatistic};

/// Draws per substream when simulating series draws.
const SERIES_CHUNK: usize = 4096;

/// Series terms beyond this many are replaced by a single Gaussian with the
/// same variance when the tail tolerance demands more terms.
pub const MAX_EXACT_TERMS: usize = 400;

/// Default tail control: tail standard deviation at most this fraction of
/// the series standard deviation.
pub const DEFAULT_TAIL_SD_RATIO: f64 = 1e-3;

/// Number of derivatives `f^{(k)}(0)` stored by [`LocalAlternative`].
pub const STORED_DERIVATIVES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NullKind {
    AsymptoticSeries,
    ExactMc,
}

impl NullKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NullKind::AsymptoticSeries => "asymptotic",
            NullKind::ExactMc => "exact-n",
        }
    }
}

/// How many series terms to simulate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesTruncation {
    /// Exactly the terms `k = 1..=K`.
    Fixed(usize),
    /// Smallest `K` with `tail_variance(table, K) ≤ tol`.
    TailVariance(f64),
    /// The spec's truncation for a truncated statistic; otherwise a tail
    /// variance of `DEFAULT_TAIL_SD_RATIO²` times the series variance.
    Auto,
}

/// A calibrated reference distribution: sorted draws plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct NullModel {
    pub kind: NullKind,
    pub statistic: TestStatistic,
    draws: Vec<f64>,
    /// Series truncation `K` (asymptotic) or sample size `n` (exact).
    pub size_param: usize,
    pub seed: u64,
    /// Variance of the part of the series not simulated term by term.
    pub tail_var_bound: f64,
    /// Whether that part was added as one Gaussian term.
    pub gaussian_tail: bool,
}

/// Empirical upper-α quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValue {
    pub value: f64,
    /// `α m < 10`: too few draws beyond the quantile for a stable estimate.
    pub undersampled: bool,
}

impl NullModel {
    pub fn from_draws(
        kind: NullKind,
        statistic: TestStatistic,
        mut draws: Vec<f64>,
        size_param: usize,
        seed: u64,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Config("a null model needs at least one draw".into()));
        }
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("null model draws must be finite".into()));
        }
        draws.sort_by(f64::total_cmp);
        Ok(NullModel {
            kind,
            statistic,
            draws,
            size_param,
            seed,
            tail_var_bound: 0.0,
            gaussian_tail: false,
        })
    }

    /// Draws in ascending order.
    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn m(&self) -> usize {
        self.draws.len()
    }

    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.m() as f64
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (self.m() as f64 - 1.0)
    }

    /// Add-one Monte Carlo p-value `(1 + #{draws ≥ t}) / (m + 1)`.
    pub fn p_value(&self, t: f64) -> f64 {
        let below = self.draws.partition_point(|&d| d < t);
        (1 + self.m() - below) as f64 / (self.m() + 1) as f64
    }

    /// Fraction of draws strictly above `t`.
    pub fn exceedance(&self, t: f64) -> f64 {
        (self.m() - self.draws.partition_point(|&d| d <= t)) as f64 / self.m() as f64
    }

    /// Order statistic `⌈(1-α)(m+1)⌉` (1-based, capped at `m`).
    pub fn critical_value(&self, alpha: f64) -> Result<CriticalValue> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let m = self.m();
        let rank = ((1.0 - alpha) * (m + 1) as f64).ceil() as usize;
        let rank = rank.clamp(1, m);
        Ok(CriticalValue {
            value: self.draws[rank - 1],
            undersampled: alpha * (m as f64) < 10.0,
        })
    }

    /// Empirical `p`-quantile, same order-statistic convention.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.critical_value(1.0 - p)?.value)
    }

    /// Writes the model to `path` in the flat binary cache format.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut buf = Vec::with_capacity(96 + 8 * self.m());
        buf.extend_from_slice(CACHE_MAGIC);
        buf.push(match self.kind {
            NullKind::AsymptoticSeries => 0,
            NullKind::ExactMc => 1,
        });
        let (tag, a, trunc) = match self.statistic {
            TestStatistic::Stereo(spec) => (0u8, spec.a, spec.truncation.map_or(u64::MAX, |k| k as u64)),
            TestStatistic::Rayleigh { .. } => (1, 0.0, u64::MAX),
            TestStatistic::Bingham { .. } => (2, 0.0, u64::MAX),
        };
        buf.push(tag);
        buf.push(u8::from(self.gaussian_tail));
        buf.extend_from_slice(&(self.statistic.q() as u64).to_le_bytes());
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&trunc.to_le_bytes());
        buf.extend_from_slice(&(self.size_param as u64).to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.tail_var_bound.to_le_bytes());
        buf.extend_from_slice(&(self.m() as u64).to_le_bytes());
        for d in &self.draws {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        // Write-then-rename so concurrent readers never see a partial file.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::File::create(&tmp)?.write_all(&buf)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let corrupt = |detail: &str| Error::Cache {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        let header = CACHE_MAGIC.len() + 3 + 7 * 8;
        if bytes.len() < header || &bytes[..CACHE_MAGIC.len()] != CACHE_MAGIC {
            return Err(corrupt("bad header"));
        }
        let mut pos = CACHE_MAGIC.len();
        let kind = match bytes[pos] {
            0 => NullKind::AsymptoticSeries,
            1 => NullKind::ExactMc,
            _ => return Err(corrupt("unknown kind")),
        };
        let tag = bytes[pos + 1];
        let gaussian_tail = bytes[pos + 2] != 0;
        pos += 3;
        let mut word = || {
            let w = u64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes"));
            pos += 8;
            w
        };
        let q = word() as usize;
        let a = f64::from_bits(word());
        let trunc = word();
        let size_param = word() as usize;
        let seed = word();
        let tail_var_bound = f64::from_bits(word());
        let m = word() as usize;
        if bytes.len() != header + 8 * m {
            return Err(corrupt("length does not match draw count"));
        }
        let statistic = match tag {
            0 => {
                let spec = KernelSpec {
                    a,
                    q,
                    truncation: (trunc != u64::MAX).then_some(trunc as usize),
                };
                spec.validate().map_err(|e| corrupt(&e.to_string()))?;
                TestStatistic::Stereo(spec)
            }
            1 => TestStatistic::Rayleigh { q },
            2 => TestStatistic::Bingham { q },
            _ => return Err(corrupt("unknown statistic")),
        };
        let draws: Vec<f64> = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if draws.windows(2).any(|w| w[0] > w[1]) {
            return Err(corrupt("draws are not sorted"));
        }
        Ok(NullModel {
            kind,
            statistic,
            draws,
            size_param,
            seed,
            tail_var_bound,
            gaussian_tail,
        })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SUNULL01";

/// `<root>/<kind>/<q>_<a>_<n or K>_<m>_<seed>.bin`; the statistic segment
/// is `a<a>`, `a<a>K<K>`, `rayleigh` or `bingham`.
pub fn cache_path(root: &Path, kind: NullKind, statistic: &TestStatistic, size_param: usize, m: usize, seed: u64) -> PathBuf {
    let stat = match statistic {
        TestStatistic::Stereo(KernelSpec { a, truncation: None, .. }) => format!("a{a}"),
        TestStatistic::Stereo(KernelSpec {
            a,
            truncation: Some(k),
            ..
        }) => format!("a{a}K{k}"),
        TestStatistic::Rayleigh { .. } => "rayleigh".into(),
        TestStatistic::Bingham { .. } => "bingham".into(),
    };
    let size = match kind {
        NullKind::AsymptoticSeries => format!("K{size_param}"),
        NullKind::ExactMc => format!("n{size_param}"),
    };
    root.join(kind.as_str())
        .join(format!("{}_{stat}_{size}_{m}_{seed}.bin", statistic.q()))
}

/// One series term: `w_k (Y_k - d_k)`.
struct SeriesTerm {
    weight: f64,
    dof: f64,
    sampler: ChiSquareSampler,
}

struct SeriesPlan {
    terms: Vec<SeriesTerm>,
    k_used: usize,
    tail_var: f64,
    gaussian_sd: f64,
}

fn plan_series(table: &CoefficientTable, truncation: SeriesTruncation, noncentral: Option<(usize, f64)>) -> Result<SeriesPlan> {
    let spec = table.spec;
    spec.validate()?;
    if spec.q == 2 && spec.truncation.is_none() {
        return Err(Error::NonSummable { q: 2 });
    }
    let truncation = match (truncation, spec.truncation) {
        (SeriesTruncation::Auto, Some(k)) => SeriesTruncation::Fixed(k),
        (SeriesTruncation::Auto, None) => {
            let total = table.head_variance(table.k_max()) + tail_variance(table, table.k_max())?;
            SeriesTruncation::TailVariance(DEFAULT_TAIL_SD_RATIO * DEFAULT_TAIL_SD_RATIO * total)
        }
        (t, _) => t,
    };
    let (k_exact, tail_var, gaussian) = match truncation {
        SeriesTruncation::Fixed(k) => {
            if k == 0 {
                return Err(Error::Config("series truncation K must be at least 1".into()));
            }
            if let Some(kt) = spec.truncation {
                if k > kt {
                    return Err(Error::Config(format!("K = {k} exceeds the statistic's truncation {kt}")));
                }
            }
            if k > table.k_max() {
                return Err(Error::Config(format!("K = {k} exceeds table K_max = {}", table.k_max())));
            }
            let tail = match spec.truncation {
                Some(kt) => table.head_variance(kt) - table.head_variance(k),
                None => tail_variance(table, k)?,
            };
            (k, tail.max(0.0), false)
        }
        SeriesTruncation::TailVariance(tol) => {
            if spec.truncation.is_some() {
                return Err(Error::Config("tail control applies to the untruncated statistic only".into()));
            }
            if !(tol > 0.0) {
                return Err(Error::Config(format!("tail variance tolerance must be positive, got {tol}")));
            }
            let k_needed = (1..=table.k_max())
                .find(|&k| tail_variance(table, k).map(|t| t <= tol).unwrap_or(false));
            match k_needed {
                Some(k) if k <= MAX_EXACT_TERMS => (k, tail_variance(table, k)?, false),
                _ => {
                    let k = MAX_EXACT_TERMS.min(table.k_max());
                    (k, tail_variance(table, k)?, true)
                }
            }
        }
        SeriesTruncation::Auto => unreachable!("resolved above"),
    };
    let mut terms = Vec::new();
    for k in 1..=k_exact {
        let w = table.w[k];
        if w == 0.0 {
            continue;
        }
        let ncp = match noncentral {
            Some((kv, xi)) if kv == k => xi,
            _ => 0.0,
        };
        terms.push(SeriesTerm {
            weight: w,
            dof: table.d[k] as f64,
            sampler: ChiSquareSampler::new(table.d[k], ncp)?,
        });
    }
    Ok(SeriesPlan {
        terms,
        k_used: k_exact,
        tail_var,
        gaussian_sd: if gaussian { tail_var.sqrt() } else { 0.0 },
    })
}

fn simulate_series(plan: &SeriesPlan, m: usize, rng: &RandomStream) -> Vec<f64> {
    let chunks = m.div_ceil(SERIES_CHUNK);
    let mut draws: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut sub = rng.substream(c as u64);
            let len = SERIES_CHUNK.min(m - c * SERIES_CHUNK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let mut total = 0.0;
                for term in &plan.terms {
                    total += term.weight * (term.sampler.sample(&mut sub) - term.dof);
                }
                if plan.gaussian_sd > 0.0 {
                    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut sub);
                    total += plan.gaussian_sd * z;
                }
                out.push(total);
            }
            out
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    draws
}

/// Draws of `Σ_{k=1}^{K} w_k (Y_k - d_k)`, `Y_k ~ χ²_{d_k}` independent.
///
/// For the untruncated statistic the series is infinite and `q ≥ 3` is
/// required. When the tail tolerance needs more than [`MAX_EXACT_TERMS`]
/// terms, the terms beyond that are replaced by one centered Gaussian with
/// their total variance (each of them is a scaled chi-square with a large
/// number of degrees of freedom).
pub fn sample_null_asymptotic(table: &CoefficientTable, truncation: SeriesTruncation, m: usize, rng: &RandomStream) -> Result<NullModel> {
    if m == 0 {
        return Err(Error::Config("draw count m must be positive".into()));
    }
    let plan = plan_series(table, truncation, None)?;
    let draws = simulate_series(&plan, m, rng);
    Ok(NullModel {
        kind: NullKind::AsymptoticSeries,
        statistic: TestStatistic::Stereo(table.spec),
        draws,
        size_param: plan.k_used,
        seed: rng.key(),
        tail_var_bound: plan.tail_var,
        gaussian_tail: plan.gaussian_sd > 0.0,
    })
}

/// Local alternative `f(κ_n x'μ)` with `κ_n` at the detection scale of a
/// kernel whose lowest nonzero harmonic order is `k_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAlternative {
    pub f: AngularFunction,
    pub tau: f64,
    pub k_v: usize,
    pub derivatives_at_zero: Vec<f64>,
}

impl LocalAlternative {
    /// `k_v = 1 + [a = 1]`.
    pub fn new(f: AngularFunction, tau: f64, a: f64) -> Result<Self> {
        Self::with_order(f, tau, if a == 1.0 { 2 } else { 1 })
    }

    pub fn with_order(f: AngularFunction, tau: f64, k_v: usize) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("tau must be finite and nonnegative, got {tau}")));
        }
        if k_v == 0 {
            return Err(Error::Config("k_v must be at least 1".into()));
        }
        Ok(LocalAlternative {
            f,
            tau,
            k_v,
            derivatives_at_zero: f.derivatives_at_zero(STORED_DERIVATIVES)?,
        })
    }
}

/// `ξ_{k,q}(τ) = d_{k,q} (f^{(k)}(0))² τ^{2k} Π_{ℓ=0}^{k-1} (2ℓ + q + 1)^{-2}`.
pub fn noncentrality(alt: &LocalAlternative, k: usize, q: usize) -> Result<f64> {
    let stored = alt.derivatives_at_zero.len() - 1;
    if k > stored {
        return Err(Error::DerivativeOrder { order: k, stored });
    }
    if alt.tau == 0.0 {
        return Ok(0.0);
    }
    let d = harmonic_dim(k, q)? as f64;
    let deriv = alt.derivatives_at_zero[k];
    let prod: f64 = (0..k).map(|l| (2 * l + q + 1) as f64).product();
    Ok(d * deriv * deriv * alt.tau.powi(2 * k as i32) / (prod * prod))
}

/// Draws of the local-alternative limit: as the null series, with the
/// `k_v` term noncentral with parameter `ξ_{k_v,q}(τ)`.
pub fn sample_alt_asymptotic(
    table: &CoefficientTable,
    alt: &LocalAlternative,
    truncation: SeriesTruncation,
    m: usize,
    rng: &RandomStream,
) -> Result<NullModel> {
    if m == 0 {
        return Err(Error::Config("draw count m must be positive".into()));
    }
    let xi = noncentrality(alt, alt.k_v, table.spec.q)?;
    let plan = plan_series(table, truncation, Some((alt.k_v, xi)))?;
    if plan.k_used < alt.k_v {
        return Err(Error::Config(format!("series truncation {} is below k_v = {}", plan.k_used, alt.k_v)));
    }
    let draws = simulate_series(&plan, m, rng);
    Ok(NullModel {
        kind: NullKind::AsymptoticSeries,
        statistic: TestStatistic::Stereo(table.spec),
        draws,
        size_param: plan.k_used,
        seed: rng.key(),
        tail_var_bound: plan.tail_var,
        gaussian_tail: plan.gaussian_sd > 0.0,
    })
}

/// `m` draws of the statistic on fresh uniform samples of size `n`.
/// Replicate `i` uses `rng.substream(i)`.
pub fn sample_null_exact(statistic: TestStatistic, n: usize, m: usize, rng: &RandomStream) -> Result<NullModel> {
    Ok(sample_null_exact_many(&[statistic], n, m, rng)?.remove(0))
}

/// Exact-n null models for several statistics sharing the same uniform
/// samples (replicate `i` of every model is computed on the same data).
pub fn sample_null_exact_many(statistics: &[TestStatistic], n: usize, m: usize, rng: &RandomStream) -> Result<Vec<NullModel>> {
    if statistics.is_empty() {
        return Err(Error::Config("no statistics requested".into()));
    }
    if n < 2 {
        return Err(Error::Config(format!("exact-n calibration needs n >= 2, got {n}")));
    }
    if m == 0 {
        return Err(Error::Config("replicate count m must be positive".into()));
    }
    let q = statistics[0].q();
    if statistics.iter().any(|s| s.q() != q) {
        return Err(Error::Config("all statistics must share q".into()));
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut sub = rng.substream(i as u64);
            let sample = sample_uniform_sphere(q, n, &mut sub)?;
            evaluate_many(statistics, &sample)
        })
        .collect::<Result<_>>()?;
    statistics
        .iter()
        .enumerate()
        .map(|(j, s)| NullModel::from_draws(NullKind::ExactMc, *s, rows.iter().map(|r| r[j]).collect(), n, rng.key()))
        .collect()
}

/// Exact-n null models read from `root` when present, otherwise simulated
/// (jointly for the missing ones) and written there.
pub fn cached_null_exact_many(
    root: &Path,
    statistics: &[TestStatistic],
    n: usize,
    m: usize,
    rng: &RandomStream,
) -> Result<Vec<NullModel>> {
    let paths: Vec<PathBuf> = statistics
        .iter()
        .map(|s| cache_path(root, NullKind::ExactMc, s, n, m, rng.key()))
        .collect();
    let mut models: Vec<Option<NullModel>> = paths
        .iter()
        .zip(statistics)
        .map(|(p, s)| match NullModel::load(p) {
            Ok(model) if model.statistic == *s && model.size_param == n && model.m() == m => Some(model),
            Ok(_) => {
                log::warn!("cache file {} does not match its key; recomputing", p.display());
                None
            }
            Err(Error::Io(_)) => None,
            Err(e) => {
                log::warn!("{e}; recomputing");
                None
            }
        })
        .collect();
    let missing: Vec<usize> = (0..statistics.len()).filter(|&i| models[i].is_none()).collect();
    if !missing.is_empty() {
        let stats: Vec<TestStatistic> = missing.iter().map(|&i| statistics[i]).collect();
        log::info!("simulating exact-n null for {} statistic(s), n = {n}, m = {m}", stats.len());
        // Shared replicate substreams make a jointly simulated model
        // identical to one simulated alone.
        for (i, model) in missing.iter().zip(sample_null_exact_many(&stats, n, m, rng)?) {
            model.save(&paths[*i])?;
            models[*i] = Some(model);
        }
    }
    Ok(models.into_iter().map(|m| m.expect("filled")).collect())
}

/// Two-sample Kolmogorov–Smirnov distance and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub distance: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{j-1} e^{-2 j² λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut total = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        total += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

fn ks_p_value(distance: f64, effective_n: f64) -> f64 {
    let sqrt_n = effective_n.sqrt();
    kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * distance)
}

pub fn ks_two_sample(x: &[f64], y: &[f64]) -> KsResult {
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut distance: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        distance = distance.max((i as f64 / nx - j as f64 / ny).abs());
    }
    KsResult {
        distance,
        p_value: ks_p_value(distance, nx * ny / (nx + ny)),
    }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> KsResult {
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let distance = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = cdf(v);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max);
    KsResult {
        distance,
        p_value: ks_p_value(distance, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::DEFAULT_K_MAX;
    use approx::assert_relative_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn table(a: f64, q: usize) -> CoefficientTable {
        CoefficientTable::build(&KernelSpec::new(a, q).unwrap(), DEFAULT_K_MAX).unwrap()
    }

    #[test]
    fn p_value_and_critical_value_conventions() {
        let draws: Vec<f64> = (1..=999).map(f64::from).collect();
        let model = NullModel::from_draws(NullKind::ExactMc, TestStatistic::Rayleigh { q: 2 }, draws, 10, 1).unwrap();
        assert_eq!(model.p_value(0.0), 1.0);
        assert_eq!(model.p_value(1e9), 1.0 / 1000.0);
        assert!((model.p_value(500.0) - 0.5).abs() <= 1.0 / 999.0);
        assert_eq!(model.critical_value(0.5).unwrap().value, 500.0);
        assert_eq!(model.critical_value(0.05).unwrap().value, 950.0);
        assert!(!model.critical_value(0.05).unwrap().undersampled);
        assert!(model.critical_value(0.001).unwrap().undersampled);
        assert!(model.critical_value(0.0).is_err());
        let mut last = f64::NEG_INFINITY;
        for alpha in [0.5, 0.2, 0.1, 0.05, 0.01] {
            let c = model.critical_value(alpha).unwrap().value;
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn q2_untruncated_series_is_refused() {
        let rng = RandomStream::new(1);
        let t = CoefficientTable::build(&KernelSpec::new(0.0, 2).unwrap(), 50).unwrap();
        assert!(matches!(
            sample_null_asymptotic(&t, SeriesTruncation::Auto, 10, &rng),
            Err(Error::NonSummable { q: 2 })
        ));
        assert!(matches!(
            sample_null_asymptotic(&t, SeriesTruncation::Fixed(6), 10, &rng),
            Err(Error::NonSummable { q: 2 })
        ));
        let t6 = CoefficientTable::build(&KernelSpec::truncated(0.0, 2, 6).unwrap(), 6).unwrap();
        let model = sample_null_asymptotic(&t6, SeriesTruncation::Auto, 1000, &rng).unwrap();
        assert_eq!(model.size_param, 6);
        assert_eq!(model.tail_var_bound, 0.0);
    }

    #[test]
    fn series_moments() {
        let rng = RandomStream::new(2);
        let t = table(0.0, 3);
        let m = 200_000;
        let model = sample_null_asymptotic(&t, SeriesTruncation::Auto, m, &rng).unwrap();
        let var = t.head_variance(t.k_max()) + tail_variance(&t, t.k_max()).unwrap();
        let se_mean = (var / m as f64).sqrt();
        assert!(model.mean().abs() < 5.0 * se_mean, "mean {}", model.mean());
        // SE of the sample variance ≈ var √((κ - 1)/m) with κ ≤ 10 for this series.
        let se_var = var * (9.0 / m as f64).sqrt();
        assert!((model.variance() - var).abs() < 5.0 * se_var, "{} vs {var}", model.variance());
        assert!(model.gaussian_tail);
        assert!(model.tail_var_bound <= 0.02 * var);
    }

    #[test]
    fn a_minus_one_uses_odd_terms_only() {
        let rng = RandomStream::new(3);
        let t = CoefficientTable::build(&KernelSpec::new(-1.0, 3).unwrap(), 20).unwrap();
        let plan = plan_series(&t, SeriesTruncation::Fixed(20), None).unwrap();
        assert_eq!(plan.terms.len(), 10);
        let model = sample_null_asymptotic(&t, SeriesTruncation::Fixed(20), 100, &rng).unwrap();
        assert_eq!(model.m(), 100);
    }

    #[test]
    fn seed_determinism() {
        let t = table(1.0, 3);
        let a = sample_null_asymptotic(&t, SeriesTruncation::Fixed(30), 10_000, &RandomStream::new(7)).unwrap();
        let b = sample_null_asymptotic(&t, SeriesTruncation::Fixed(30), 10_000, &RandomStream::new(7)).unwrap();
        assert_eq!(a, b);
        let stat = TestStatistic::Stereo(KernelSpec::new(0.5, 2).unwrap());
        let x = sample_null_exact(stat, 20, 500, &RandomStream::new(8)).unwrap();
        let y = sample_null_exact(stat, 20, 500, &RandomStream::new(8)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn joint_and_single_exact_models_agree() {
        let rng = RandomStream::new(9);
        let stats = [
            TestStatistic::Rayleigh { q: 3 },
            TestStatistic::Stereo(KernelSpec::new(-1.0, 3).unwrap()),
        ];
        let joint = sample_null_exact_many(&stats, 15, 300, &rng).unwrap();
        let single = sample_null_exact(stats[1], 15, 300, &rng).unwrap();
        assert_eq!(joint[1], single);
    }

    #[test]
    fn noncentrality_examples() {
        let exp1 = LocalAlternative::with_order(AngularFunction::Vmf, 1.0, 1).unwrap();
        assert_eq!(noncentrality(&exp1, 1, 2).unwrap(), 1.0 / 3.0);
        let exp2 = LocalAlternative::with_order(AngularFunction::Vmf, 2.0, 1).unwrap();
        assert_eq!(noncentrality(&exp2, 1, 3).unwrap(), 1.0);
        for q in 2..6 {
            let cosh = LocalAlternative::with_order(AngularFunction::MixVmf, 3.0, 1).unwrap();
            assert_eq!(noncentrality(&cosh, 1, q).unwrap(), 0.0);
        }
        let zero = LocalAlternative::new(AngularFunction::SmallCircle { nu: 0.25 }, 0.0, 0.0).unwrap();
        assert_eq!(noncentrality(&zero, 3, 3).unwrap(), 0.0);
        assert!(matches!(noncentrality(&zero, 7, 3), Err(Error::DerivativeOrder { .. })));
        assert_eq!(LocalAlternative::new(AngularFunction::Vmf, 1.0, 1.0).unwrap().k_v, 2);
        assert_eq!(LocalAlternative::new(AngularFunction::Vmf, 1.0, 0.99).unwrap().k_v, 1);
    }

    #[test]
    fn alternative_at_zero_reproduces_null() {
        let t = CoefficientTable::build(&KernelSpec::truncated(0.0, 2, 6).unwrap(), 6).unwrap();
        let rng = RandomStream::new(10);
        let null = sample_null_asymptotic(&t, SeriesTruncation::Auto, 5000, &rng).unwrap();
        let alt = LocalAlternative::new(AngularFunction::Vmf, 0.0, 0.0).unwrap();
        let draws = sample_alt_asymptotic(&t, &alt, SeriesTruncation::Auto, 5000, &rng).unwrap();
        assert_eq!(null.draws(), draws.draws());
    }

    #[test]
    fn alternative_mean_shift() {
        let t = table(0.0, 3);
        let m = 100_000;
        let rng = RandomStream::new(11);
        let mut means = Vec::new();
        for tau in [1.0, 2.0] {
            let alt = LocalAlternative::new(AngularFunction::Vmf, tau, 0.0).unwrap();
            let model = sample_alt_asymptotic(&t, &alt, SeriesTruncation::Fixed(100), m, &rng.substream(tau as u64)).unwrap();
            means.push((model.mean(), model.variance(), noncentrality(&alt, 1, 3).unwrap()));
        }
        let shift = t.w[1] * (means[1].2 - means[0].2);
        let se = ((means[0].1 + means[1].1) / m as f64).sqrt();
        assert!((means[1].0 - means[0].0 - shift).abs() < 5.0 * se);
    }

    #[test]
    fn rayleigh_exact_matches_chi_square() {
        let rng = RandomStream::new(12);
        let model = sample_null_exact(TestStatistic::Rayleigh { q: 2 }, 200, 10_000, &rng).unwrap();
        let chi = ChiSquared::new(3.0).unwrap();
        let ks = ks_one_sample(model.draws(), |x| chi.cdf(x));
        assert!(ks.distance < 0.02, "{}", ks.distance);
        let c = model.critical_value(0.05).unwrap().value;
        assert!((c - 7.815).abs() < 0.3, "{c}");
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rng = RandomStream::new(13);
        let stats = [
            TestStatistic::Stereo(KernelSpec::truncated(1.0, 2, 6).unwrap()),
            TestStatistic::Bingham { q: 2 },
        ];
        let first = cached_null_exact_many(dir.path(), &stats, 12, 200, &rng).unwrap();
        let path = cache_path(dir.path(), NullKind::ExactMc, &stats[0], 12, 200, rng.key());
        assert!(path.to_string_lossy().contains("exact-n"));
        assert!(path.exists());
        let loaded = NullModel::load(&path).unwrap();
        assert_eq!(loaded, first[0]);
        let second = cached_null_exact_many(dir.path(), &stats, 12, 200, &rng).unwrap();
        assert_eq!(first, second);
        fs::write(&path, b"garbage").unwrap();
        assert!(matches!(NullModel::load(&path), Err(Error::Cache { .. })));
        let third = cached_null_exact_many(dir.path(), &stats, 12, 200, &rng).unwrap();
        assert_eq!(first, third);
        let t = table(0.0, 3);
        let series = sample_null_asymptotic(&t, SeriesTruncation::Fixed(10), 50, &rng).unwrap();
        let p = cache_path(dir.path(), NullKind::AsymptoticSeries, &series.statistic, 10, 50, rng.key());
        series.save(&p).unwrap();
        assert_eq!(NullModel::load(&p).unwrap(), series);
    }

    #[test]
    fn ks_helpers() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&x, |v| v);
        assert!(r.distance <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.2).collect();
        let r2 = ks_two_sample(&x, &shifted);
        assert_relative_eq!(r2.distance, 0.2, epsilon = 2e-3);
        assert!(r2.p_value < 1e-10);
        assert_relative_eq!(kolmogorov_survival(1.3581), 0.05, epsilon = 1e-3);
    }
}
