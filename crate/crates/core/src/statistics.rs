//! Test statistics evaluated on a [`SphericalSample`].
//!
//! The stereographic statistic is linear in `a`, so a single pass over the
//! pairs accumulating `Σ cot(θ_ij/2)` and `Σ tan(θ_ij/2)` serves every
//! kernel parameter at once ([`PairSums`]). The truncated statistic is a
//! linear combination of the per-degree harmonic sums `Σ C_k(cos θ_ij)`
//! ([`HarmonicSums`]). The pair loop is sequential with a fixed summation
//! order (row-wise partial sums added in row order), so results are
//! bit-reproducible; Monte Carlo drivers parallelize over replicates instead.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;

use crate::coefficients::{expected_h0, gegenbauer_coef, KernelSpec};
use crate::distributions::{cached_null_exact_many, sample_null_exact, NullModel};
use crate::error::{Error, Result, TieKind};
use crate::rng::RandomStream;
use crate::sample::SphericalSample;
use crate::special::gegenbauer_all;

/// Dot products within this distance of ±1 are treated as ties.
pub const TIE_TOL: f64 = 1e-14;

/// `ψ(θ; a) = cot(θ/2) + a tan(θ/2)` for `θ` strictly inside `(0, π)`.
pub fn kernel_psi(theta: f64, a: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::SingularKernel { theta });
    }
    let half = 0.5 * theta;
    Ok(1.0 / half.tan() + a * half.tan())
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Strictly upper-triangular array of pairwise angles `θ_ij`, `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseAngles {
    n: usize,
    theta: Vec<f64>,
}

impl PairwiseAngles {
    pub fn from_sample(sample: &SphericalSample) -> Self {
        let n = sample.n();
        let mut theta = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                theta.push(dot(sample.row(i), sample.row(j)).clamp(-1.0, 1.0).acos());
            }
        }
        PairwiseAngles { n, theta }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `θ_ij` for `i != j` (either order).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i != j && i < self.n && j < self.n);
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let offset = i * self.n - i * (i + 1) / 2;
        self.theta[offset + (j - i - 1)]
    }

    /// `(i, j, θ_ij)` in row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))).zip(&self.theta).map(|((i, j), &t)| (i, j, t))
    }
}

/// `Σ_{i<j} cot(θ_ij/2)` and, when requested, `Σ_{i<j} tan(θ_ij/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSums {
    pub n: usize,
    pub q: usize,
    pub cot: f64,
    pub tan: Option<f64>,
}

/// Accumulates the half-angle sums from dot products `c = cos θ` using
/// `cot(θ/2) = √((1+c)/(1-c))` and `tan(θ/2) = 1 / cot(θ/2)`.
///
/// Coincident pairs are always an error; antipodal pairs only when the
/// tangent sum is requested.
pub fn pair_sums(sample: &SphericalSample, with_tan: bool) -> Result<PairSums> {
    let n = sample.n();
    let mut cot_total = 0.0;
    let mut tan_total = 0.0;
    for i in 0..n {
        let xi = sample.row(i);
        let mut cot_row = 0.0;
        let mut tan_row = 0.0;
        for j in i + 1..n {
            let c = dot(xi, sample.row(j)).clamp(-1.0, 1.0);
            if c >= 1.0 - TIE_TOL {
                return Err(Error::Tie {
                    i,
                    j,
                    kind: TieKind::Coincident,
                });
            }
            if with_tan {
                if c <= -1.0 + TIE_TOL {
                    return Err(Error::Tie {
                        i,
                        j,
                        kind: TieKind::Antipodal,
                    });
                }
                let cot = ((1.0 + c) / (1.0 - c)).sqrt();
                cot_row += cot;
                tan_row += 1.0 / cot;
            } else {
                cot_row += ((1.0 + c) / (1.0 - c)).sqrt();
            }
        }
        cot_total += cot_row;
        tan_total += tan_row;
    }
    Ok(PairSums {
        n,
        q: sample.q(),
        cot: cot_total,
        tan: with_tan.then_some(tan_total),
    })
}

impl PairSums {
    /// `P_n = (2/n) Σ cot(θ_ij/2)`.
    pub fn stat_pn(&self) -> f64 {
        2.0 / self.n as f64 * self.cot
    }

    /// `T_n(a)`; `a != 0` needs the tangent sum.
    pub fn stat_tn(&self, a: f64) -> Result<f64> {
        let spec = KernelSpec::new(a, self.q)?;
        let centering = (self.n as f64 - 1.0) * expected_h0(&spec);
        if a == 0.0 {
            return Ok(self.stat_pn() - centering);
        }
        let tan = self
            .tan
            .ok_or_else(|| Error::Config("tangent sum was not accumulated for a != 0".into()))?;
        Ok(2.0 / self.n as f64 * (self.cot + a * tan) - centering)
    }
}

/// `T_n(a) = (2/n) Σ_{i<j} ψ(θ_ij; a) - (n-1) E_H0[ψ(θ_12; a)]`.
pub fn stat_tn(sample: &SphericalSample, a: f64) -> Result<f64> {
    KernelSpec::new(a, sample.q())?;
    pair_sums(sample, a != 0.0)?.stat_tn(a)
}

/// `P_n = (2/n) Σ_{i<j} cot(θ_ij/2)`.
pub fn stat_pn(sample: &SphericalSample) -> Result<f64> {
    Ok(pair_sums(sample, false)?.stat_pn())
}

/// `S_k = Σ_{i<j} C_k^{(q-1)/2}(cos θ_ij)` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSums {
    pub n: usize,
    pub q: usize,
    pub sums: Vec<f64>,
}

pub fn harmonic_sums(sample: &SphericalSample, k: usize) -> HarmonicSums {
    let n = sample.n();
    let lambda = (sample.q() as f64 - 1.0) / 2.0;
    let mut sums = vec![0.0; k + 1];
    let mut row_sums = vec![0.0; k + 1];
    let mut buf = vec![0.0; k + 1];
    for i in 0..n {
        let xi = sample.row(i);
        row_sums.iter_mut().for_each(|s| *s = 0.0);
        for j in i + 1..n {
            let c = dot(xi, sample.row(j)).clamp(-1.0, 1.0);
            gegenbauer_all(lambda, c, &mut buf);
            for (s, v) in row_sums.iter_mut().zip(&buf) {
                *s += v;
            }
        }
        for (s, r) in sums.iter_mut().zip(&row_sums) {
            *s += r;
        }
    }
    HarmonicSums { n, q: sample.q(), sums }
}

impl HarmonicSums {
    pub fn k(&self) -> usize {
        self.sums.len() - 1
    }

    /// `T_{n,K}(a)` for any `K ≤ self.k()`. The `k = 0` term cancels the
    /// centering exactly and is dropped.
    pub fn stat_tnk(&self, a: f64, k: usize) -> Result<f64> {
        let spec = KernelSpec::truncated(a, self.q, k)?;
        if k > self.k() {
            return Err(Error::Config(format!("harmonic sums only accumulated up to K = {}", self.k())));
        }
        let total: f64 = (1..=k).map(|j| gegenbauer_coef(j, &spec) * self.sums[j]).sum();
        Ok(2.0 / self.n as f64 * total)
    }
}

/// `T_{n,K}(a) = (2/n) Σ_{i<j} ψ_K(θ_ij; a) - (n-1) b_{0,q}` with
/// `ψ_K = Σ_{k=0}^{K} b_{k,q} C_k^{(q-1)/2}(cos θ)`. Ties are allowed.
pub fn stat_tnk(sample: &SphericalSample, spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    let k = spec
        .truncation
        .ok_or_else(|| Error::Config("truncated statistic needs a truncation K".into()))?;
    if spec.q != sample.q() {
        return Err(Error::Config(format!("spec has q = {}, sample has q = {}", spec.q, sample.q())));
    }
    harmonic_sums(sample, k).stat_tnk(spec.a, k)
}

fn mean_direction(sample: &SphericalSample) -> Vec<f64> {
    let mut mean = vec![0.0; sample.dim()];
    for row in sample.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let n = sample.n() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Rayleigh statistic `n (q+1) ‖X̄‖²`, asymptotically `χ²_{q+1}`.
pub fn stat_rayleigh(sample: &SphericalSample) -> f64 {
    let mean = mean_direction(sample);
    sample.n() as f64 * sample.dim() as f64 * dot(&mean, &mean)
}

/// Bingham statistic `p(p+2)/2 · n · (tr(S²) - 1/p)` with `p = q+1` and
/// `S = n⁻¹ Σ X_i X_i'`; asymptotically `χ²_{(p-1)(p+2)/2}`.
pub fn stat_bingham(sample: &SphericalSample) -> f64 {
    let p = sample.dim();
    let mut scatter = vec![0.0; p * p];
    for row in sample.rows() {
        for r in 0..p {
            for c in r..p {
                scatter[r * p + c] += row[r] * row[c];
            }
        }
    }
    let n = sample.n() as f64;
    let mut trace_sq = 0.0;
    for r in 0..p {
        for c in r..p {
            let s = scatter[r * p + c] / n;
            trace_sq += if r == c { s * s } else { 2.0 * s * s };
        }
    }
    let pf = p as f64;
    pf * (pf + 2.0) / 2.0 * n * (trace_sq - 1.0 / pf)
}

/// A statistic that can be calibrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestStatistic {
    /// `T_n(a)`, or `T_{n,K}(a)` when the spec carries a truncation.
    Stereo(KernelSpec),
    Rayleigh { q: usize },
    Bingham { q: usize },
}

impl TestStatistic {
    pub fn q(&self) -> usize {
        match self {
            TestStatistic::Stereo(spec) => spec.q,
            TestStatistic::Rayleigh { q } | TestStatistic::Bingham { q } => *q,
        }
    }

    /// Short column label, e.g. `T_n(0.5)`, `T_n6(1)`, `Rayleigh`.
    pub fn label(&self) -> String {
        match self {
            TestStatistic::Stereo(KernelSpec { a, truncation: None, .. }) => format!("T_n({a})"),
            TestStatistic::Stereo(KernelSpec {
                a,
                truncation: Some(k),
                ..
            }) => format!("T_n{k}({a})"),
            TestStatistic::Rayleigh { .. } => "Rayleigh".into(),
            TestStatistic::Bingham { .. } => "Bingham".into(),
        }
    }

    pub fn evaluate(&self, sample: &SphericalSample) -> Result<f64> {
        Ok(evaluate_many(std::slice::from_ref(self), sample)?[0])
    }
}

/// Evaluates several statistics on one sample, sharing the pair pass.
pub fn evaluate_many(stats: &[TestStatistic], sample: &SphericalSample) -> Result<Vec<f64>> {
    let mut need_pairs = false;
    let mut need_tan = false;
    let mut max_k = 0usize;
    for s in stats {
        if s.q() != sample.q() {
            return Err(Error::Config(format!(
                "statistic {} is for q = {}, sample has q = {}",
                s.label(),
                s.q(),
                sample.q()
            )));
        }
        if let TestStatistic::Stereo(spec) = s {
            spec.validate()?;
            match spec.truncation {
                None => {
                    need_pairs = true;
                    need_tan |= spec.a != 0.0;
                }
                Some(k) => max_k = max_k.max(k),
            }
        }
    }
    let pairs = if need_pairs { Some(pair_sums(sample, need_tan)?) } else { None };
    let harmonics = if max_k > 0 { Some(harmonic_sums(sample, max_k)) } else { None };
    stats
        .iter()
        .map(|s| match s {
            TestStatistic::Stereo(spec) => match spec.truncation {
                None => pairs.as_ref().expect("pair sums computed").stat_tn(spec.a),
                Some(k) => harmonics.as_ref().expect("harmonic sums computed").stat_tnk(spec.a, k),
            },
            TestStatistic::Rayleigh { .. } => Ok(stat_rayleigh(sample)),
            TestStatistic::Bingham { .. } => Ok(stat_bingham(sample)),
        })
        .collect()
}

/// How a critical value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Calibration {
    Asymptotic,
    ExactMc,
    /// K-fold adaptive test with Bonferroni combination of exact-n p-values.
    KFold,
}

impl Calibration {
    pub fn as_str(&self) -> &'static str {
        match self {
            Calibration::Asymptotic => "asymptotic",
            Calibration::ExactMc => "exact-n-mc",
            Calibration::KFold => "kfold-bonferroni",
        }
    }
}

/// Outcome of a single test. `reject` is `statistic > critical_value`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub label: String,
    pub statistic: f64,
    pub method: Calibration,
    pub alpha: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub seed: u64,
    pub n: usize,
    pub q: usize,
    /// Selected `â_k` per fold (K-fold test only).
    pub selected_a: Vec<f64>,
}

impl std::fmt::Display for TestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "test           {}", self.label)?;
        writeln!(f, "n, q           {}, {}", self.n, self.q)?;
        writeln!(f, "calibration    {}", self.method.as_str())?;
        writeln!(f, "statistic      {:.10}", self.statistic)?;
        writeln!(f, "critical value {:.10} (alpha = {})", self.critical_value, self.alpha)?;
        writeln!(f, "p-value        {:.6}", self.p_value)?;
        if !self.selected_a.is_empty() {
            let list: Vec<String> = self.selected_a.iter().map(|a| a.to_string()).collect();
            writeln!(f, "selected a     {}", list.join(" "))?;
        }
        writeln!(f, "seed           {}", self.seed)?;
        write!(f, "decision       {}", if self.reject { "reject uniformity" } else { "do not reject" })
    }
}

/// Source of exact-size null distributions for the K-fold test.
pub trait Calibrator: Sync {
    fn null_model(&self, statistic: &TestStatistic, n: usize) -> Result<Arc<NullModel>>;
}

/// Exact-n Monte Carlo calibrator with an in-memory (and optional on-disk)
/// cache. The model for a statistic and size is simulated from the
/// substream named after them, so it does not depend on request order.
pub struct ExactCalibrator {
    m: usize,
    rng: RandomStream,
    cache_root: Option<PathBuf>,
    models: Mutex<HashMap<String, Arc<NullModel>>>,
}

impl ExactCalibrator {
    pub fn new(m: usize, rng: RandomStream, cache_root: Option<PathBuf>) -> Self {
        ExactCalibrator {
            m,
            rng,
            cache_root,
            models: Mutex::new(HashMap::new()),
        }
    }
}

impl Calibrator for ExactCalibrator {
    fn null_model(&self, statistic: &TestStatistic, n: usize) -> Result<Arc<NullModel>> {
        let key = format!("q{}/{}/n{n}", statistic.q(), statistic.label());
        if let Some(model) = self.models.lock().expect("calibrator lock").get(&key) {
            return Ok(Arc::clone(model));
        }
        let rng = self.rng.substream_named(&key);
        let model = match &self.cache_root {
            Some(root) => cached_null_exact_many(root, std::slice::from_ref(statistic), n, self.m, &rng)?.remove(0),
            None => sample_null_exact(*statistic, n, self.m, &rng)?,
        };
        let model = Arc::new(model);
        self.models
            .lock()
            .expect("calibrator lock")
            .entry(key)
            .or_insert_with(|| Arc::clone(&model));
        Ok(model)
    }
}

/// Random partition of `0..n` into `folds` groups whose sizes differ by at
/// most one.
pub fn random_folds<R: rand::Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    out
}

/// K-fold adaptive stereographic test.
///
/// For each fold, `â_k` maximizes `T(a)` over `grid` on the complement of
/// the fold, and `T(â_k)` on the fold is converted to an exact-size Monte
/// Carlo p-value. The fold p-values are combined by Bonferroni: the test
/// rejects when `min_k p_k ≤ α / K_f`. The reported statistic is
/// `-ln(min_k p_k)` with critical value `-ln(α / K_f)`, and the reported
/// p-value is `min(1, K_f min_k p_k)`.
pub fn stat_kfold(
    sample: &SphericalSample,
    folds: usize,
    grid: &[f64],
    calibrator: &dyn Calibrator,
    alpha: f64,
    rng: &RandomStream,
) -> Result<TestReport> {
    let n = sample.n();
    let q = sample.q();
    if folds < 2 {
        return Err(Error::Config(format!("K-fold test needs at least 2 folds, got {folds}")));
    }
    if n < 2 * folds {
        return Err(Error::Config(format!("n = {n} is too small for {folds} folds of at least 2 points")));
    }
    if grid.is_empty() {
        return Err(Error::Config("K-fold test needs a nonempty grid of a values".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    for &a in grid {
        KernelSpec::new(a, q)?;
    }
    let need_tan = grid.iter().any(|&a| a != 0.0);
    let partition = random_folds(n, folds, &mut rng.clone());
    let mut min_p = f64::INFINITY;
    let mut selected = Vec::with_capacity(folds);
    for (k, fold) in partition.iter().enumerate() {
        let mut in_fold = vec![false; n];
        fold.iter().for_each(|&i| in_fold[i] = true);
        let complement: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let sums = pair_sums(&sample.subset(&complement), need_tan)?;
        let mut best = (f64::NEG_INFINITY, grid[0]);
        for &a in grid {
            let t = sums.stat_tn(a)?;
            if t > best.0 {
                best = (t, a);
            }
        }
        let a_hat = best.1;
        let statistic = TestStatistic::Stereo(KernelSpec::new(a_hat, q)?);
        let t_fold = stat_tn(&sample.subset(fold), a_hat)?;
        let p = calibrator.null_model(&statistic, fold.len())?.p_value(t_fold);
        log::debug!("fold {k}: a = {a_hat}, T = {t_fold}, p = {p}");
        min_p = min_p.min(p);
        selected.push(a_hat);
    }
    let kf = folds as f64;
    Ok(TestReport {
        label: format!("T_n^({folds})"),
        statistic: -min_p.ln(),
        method: Calibration::KFold,
        alpha,
        critical_value: -(alpha / kf).ln(),
        p_value: (kf * min_p).min(1.0),
        reject: min_p <= alpha / kf,
        seed: rng.key(),
        n,
        q,
        selected_a: selected,
    })
}
