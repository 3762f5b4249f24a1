//! Experiment drivers behind the command-line interface: single tests,
//! critical-value tables, local-power grids and the UAD rejection table.
//!
//! Every experiment cell draws from `master.substream_named(cell key)` and
//! replicate `r` of a cell from `.substream(r)`, so any cell can be re-run
//! on its own and reproduces the full run bit for bit. Calibration models
//! are keyed the same way by statistic and size.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::coefficients::{harmonic_dim, CoefficientTable, KernelSpec, DEFAULT_K_MAX};
use crate::config::{ExperimentConfig, ExperimentKind, TestFamily};
use crate::distributions::{
    cache_path, cached_null_exact_many, noncentrality, sample_alt_asymptotic, sample_null_asymptotic, LocalAlternative,
    NullKind, NullModel, SeriesTruncation,
};
use crate::error::{Error, Result};
use crate::rng::{stable_id, RandomStream};
use crate::sample::SphericalSample;
use crate::samplers::{north_pole, sample_rotsym, sample_uad, AngularFunction, RotSymSpec};
use crate::special::ChiSquareSampler;
use crate::statistics::{evaluate_many, stat_kfold, Calibration, ExactCalibrator, TestReport, TestStatistic};

/// Degrees of freedom of the chi-square limit of Rayleigh (`k = 1`) or
/// Bingham (`k = 2`): the harmonic dimension `d_{k,q}`.
fn baseline_order(stat: &TestStatistic) -> Option<usize> {
    match stat {
        TestStatistic::Rayleigh { .. } => Some(1),
        TestStatistic::Bingham { .. } => Some(2),
        TestStatistic::Stereo(_) => None,
    }
}

fn chi_square_quantile(dof: u64, p: f64) -> Result<f64> {
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok(chi.inverse_cdf(p))
}

fn chi_square_survival(dof: u64, x: f64) -> Result<f64> {
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok(chi.sf(x))
}

fn stereo_table(spec: &KernelSpec) -> Result<CoefficientTable> {
    CoefficientTable::build(spec, spec.truncation.unwrap_or(DEFAULT_K_MAX))
}

/// Simulated weighted chi-square null of a stereographic statistic, read
/// from or written to `cache` when given.
pub fn asymptotic_null(spec: &KernelSpec, m: usize, rng: &RandomStream, cache: Option<&Path>) -> Result<NullModel> {
    let stat = TestStatistic::Stereo(*spec);
    let size = spec.truncation.unwrap_or(0);
    let path = cache.map(|root| cache_path(root, NullKind::AsymptoticSeries, &stat, size, m, rng.key()));
    if let Some(p) = &path {
        if let Ok(model) = NullModel::load(p) {
            if model.statistic == stat && model.m() == m && model.kind == NullKind::AsymptoticSeries {
                return Ok(model);
            }
        }
    }
    let model = sample_null_asymptotic(&stereo_table(spec)?, SeriesTruncation::Auto, m, rng)?;
    if let Some(p) = &path {
        model.save(p)?;
    }
    Ok(model)
}

/// How `cmd test` calibrates.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOptions {
    pub statistic: TestStatistic,
    pub method: Calibration,
    pub alpha: f64,
    pub seed: u64,
    /// Calibration draws.
    pub m: usize,
    pub folds: usize,
    pub grid: Vec<f64>,
    pub cache: Option<PathBuf>,
}

/// Runs one test on a sample.
pub fn run_test(sample: &SphericalSample, opts: &TestOptions) -> Result<TestReport> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let master = RandomStream::new(opts.seed);
    let q = sample.q();
    let n = sample.n();
    if opts.method == Calibration::KFold {
        let calibrator = ExactCalibrator::new(opts.m, master.substream_named("kfold-null"), opts.cache.clone());
        return stat_kfold(sample, opts.folds, &opts.grid, &calibrator, opts.alpha, &master.substream_named("folds"));
    }
    let stat = opts.statistic;
    if stat.q() != q {
        return Err(Error::Config(format!("statistic is for q = {}, sample has q = {q}", stat.q())));
    }
    let value = stat.evaluate(sample)?;
    let (critical_value, p_value) = match (opts.method, baseline_order(&stat)) {
        (Calibration::Asymptotic, Some(k)) => {
            let dof = harmonic_dim(k, q)?;
            (chi_square_quantile(dof, 1.0 - opts.alpha)?, chi_square_survival(dof, value)?)
        }
        (Calibration::Asymptotic, None) => {
            let TestStatistic::Stereo(spec) = stat else { unreachable!() };
            let rng = master.substream_named(&format!("asymptotic-null/q{q}/{}", stat.label()));
            let model = asymptotic_null(&spec, opts.m, &rng, opts.cache.as_deref())?;
            (model.critical_value(opts.alpha)?.value, model.p_value(value))
        }
        (Calibration::ExactMc, _) => {
            let rng = master.substream_named(&format!("exact-null/q{q}/n{n}"));
            let model = match &opts.cache {
                Some(root) => cached_null_exact_many(root, &[stat], n, opts.m, &rng)?.remove(0),
                None => crate::distributions::sample_null_exact(stat, n, opts.m, &rng)?,
            };
            (model.critical_value(opts.alpha)?.value, model.p_value(value))
        }
        (Calibration::KFold, _) => unreachable!("handled above"),
    };
    Ok(TestReport {
        label: stat.label(),
        statistic: value,
        method: opts.method,
        alpha: opts.alpha,
        critical_value,
        p_value,
        reject: value > critical_value,
        seed: opts.seed,
        n,
        q,
        selected_a: Vec::new(),
    })
}

/// One row of a critical-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct CritvalRow {
    pub method: NullKind,
    pub q: usize,
    pub test: String,
    /// `n` for exact-n, the series truncation for asymptotic.
    pub size: usize,
    pub m: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub undersampled: bool,
    pub seed: u64,
}

/// Critical values of `statistic` at every `alpha`, from the asymptotic
/// series (`n = None`) or exact-n Monte Carlo (`n = Some(n)`).
pub fn critical_values(
    statistic: TestStatistic,
    n: Option<usize>,
    m: usize,
    alphas: &[f64],
    seed: u64,
    cache: Option<&Path>,
) -> Result<Vec<CritvalRow>> {
    let master = RandomStream::new(seed);
    let q = statistic.q();
    let (kind, model) = match n {
        Some(n) => {
            let rng = master.substream_named(&format!("exact-null/q{q}/n{n}"));
            let model = match cache {
                Some(root) => cached_null_exact_many(root, &[statistic], n, m, &rng)?.remove(0),
                None => crate::distributions::sample_null_exact(statistic, n, m, &rng)?,
            };
            (NullKind::ExactMc, model)
        }
        None => {
            let TestStatistic::Stereo(spec) = statistic else {
                // Chi-square limits are exact quantiles; no draws needed.
                let dof = harmonic_dim(baseline_order(&statistic).expect("baseline"), q)?;
                return alphas
                    .iter()
                    .map(|&alpha| {
                        Ok(CritvalRow {
                            method: NullKind::AsymptoticSeries,
                            q,
                            test: statistic.label(),
                            size: 0,
                            m: 0,
                            alpha,
                            critical_value: chi_square_quantile(dof, 1.0 - alpha)?,
                            undersampled: false,
                            seed,
                        })
                    })
                    .collect();
            };
            let rng = master.substream_named(&format!("asymptotic-null/q{q}/{}", statistic.label()));
            (NullKind::AsymptoticSeries, asymptotic_null(&spec, m, &rng, cache)?)
        }
    };
    alphas
        .iter()
        .map(|&alpha| {
            let c = model.critical_value(alpha)?;
            if c.undersampled {
                log::warn!("alpha = {alpha} with m = {m}: fewer than 10 draws beyond the critical value");
            }
            Ok(CritvalRow {
                method: kind,
                q,
                test: statistic.label(),
                size: model.size_param,
                m: model.m(),
                alpha,
                critical_value: c.value,
                undersampled: c.undersampled,
                seed,
            })
        })
        .collect()
}

pub fn write_critval_csv<W: Write>(rows: &[CritvalRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "method,q,test,size,m,alpha,critical_value,undersampled,seed")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.10},{},{}",
            r.method.as_str(),
            r.q,
            r.test,
            r.size,
            r.m,
            r.alpha,
            r.critical_value,
            r.undersampled,
            r.seed
        )?;
    }
    Ok(())
}

/// Rejection count of one test in one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub experiment: ExperimentKind,
    pub cell: String,
    pub cell_id: u64,
    pub seed: u64,
    pub q: usize,
    pub n: usize,
    pub f: Option<String>,
    pub ell: Option<u32>,
    pub tau: Option<f64>,
    pub kappa: Option<f64>,
    pub theta_deg: Option<f64>,
    pub test: String,
    pub replicates: usize,
    pub rejections: usize,
    /// Asymptotic power in percent, where the threshold matches `ℓ = 2k_v`.
    pub theory_pct: Option<f64>,
}

impl RateRow {
    pub fn rate_pct(&self) -> f64 {
        100.0 * self.rejections as f64 / self.replicates as f64
    }

    /// `√(p(1-p)/M) · 100`.
    pub fn se_pct(&self) -> f64 {
        let p = self.rejections as f64 / self.replicates as f64;
        100.0 * (p * (1.0 - p) / self.replicates as f64).sqrt()
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_rate_csv<W: Write>(rows: &[RateRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "experiment,cell,cell_id,seed,q,n,f,ell,tau,kappa,theta_deg,test,M,rejections,rate_pct,se_pct,theory_pct"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.2},{:.2},{}",
            r.experiment.as_str(),
            r.cell,
            r.cell_id,
            r.seed,
            r.q,
            r.n,
            opt(&r.f),
            opt(&r.ell),
            opt(&r.tau),
            r.kappa.map(|k| format!("{k:.6}")).unwrap_or_default(),
            opt(&r.theta_deg),
            r.test,
            r.replicates,
            r.rejections,
            r.rate_pct(),
            r.se_pct(),
            r.theory_pct.map(|t| format!("{t:.2}")).unwrap_or_default()
        )?;
    }
    Ok(())
}

fn pairs(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

fn check_budget(estimated_pairs: f64, budget: f64) -> Result<()> {
    if estimated_pairs > budget {
        return Err(Error::Infeasible { estimated_pairs, budget });
    }
    Ok(())
}

/// Statistics of a local-power run on S^q: Rayleigh, Bingham, then
/// `T_{n,K}(a)` on S^2 and `T_n(a)` for `q ≥ 3`.
pub fn power_statistics(cfg: &ExperimentConfig, q: usize) -> Result<Vec<TestStatistic>> {
    let mut stats = Vec::new();
    for family in &cfg.tests {
        match family {
            TestFamily::Rayleigh => stats.push(TestStatistic::Rayleigh { q }),
            TestFamily::Bingham => stats.push(TestStatistic::Bingham { q }),
            TestFamily::Stereo => {
                for &a in &cfg.a_grid {
                    let spec = if q == 2 {
                        KernelSpec::truncated(a, q, cfg.truncation)?
                    } else {
                        KernelSpec::new(a, q)?
                    };
                    stats.push(TestStatistic::Stereo(spec));
                }
            }
            TestFamily::KFold => return Err(Error::Config("the K-fold test is only available in uad-table".into())),
        }
    }
    Ok(stats)
}

/// Asymptotic critical values for every statistic of a power run on S^q.
pub struct PowerCalibration {
    pub q: usize,
    pub statistics: Vec<TestStatistic>,
    pub critical: Vec<f64>,
}

pub fn power_calibration(cfg: &ExperimentConfig, q: usize) -> Result<PowerCalibration> {
    let master = RandomStream::new(cfg.seed);
    let statistics = power_statistics(cfg, q)?;
    let critical = statistics
        .iter()
        .map(|stat| match (stat, baseline_order(stat)) {
            (_, Some(k)) => chi_square_quantile(harmonic_dim(k, q)?, 1.0 - cfg.alpha),
            (TestStatistic::Stereo(spec), None) => {
                let rng = master.substream_named(&format!("asymptotic-null/q{q}/{}", stat.label()));
                asymptotic_null(spec, cfg.calibration_m, &rng, Some(&cfg.cache_dir))?
                    .critical_value(cfg.alpha)
                    .map(|c| c.value)
            }
            _ => unreachable!(),
        })
        .collect::<Result<_>>()?;
    Ok(PowerCalibration { q, statistics, critical })
}

/// One `(f, q, n, ℓ, τ)` cell of a local-power run.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCell {
    pub f: AngularFunction,
    pub q: usize,
    pub n: usize,
    pub ell: u32,
    pub tau: f64,
}

impl PowerCell {
    pub fn key(&self) -> String {
        format!("power/f={}/q={}/n={}/ell={}/tau={}", self.f.name(), self.q, self.n, self.ell, self.tau)
    }

    /// `κ_n = n^{-1/ℓ} τ`.
    pub fn kappa(&self) -> f64 {
        (self.n as f64).powf(-1.0 / self.ell as f64) * self.tau
    }
}

pub fn power_cells(cfg: &ExperimentConfig) -> Vec<PowerCell> {
    let mut cells = Vec::new();
    for &f in &cfg.alternatives {
        for &q in &cfg.q {
            for &n in &cfg.n {
                for &ell in &cfg.ell {
                    for &tau in &cfg.tau {
                        cells.push(PowerCell { f, q, n, ell, tau });
                    }
                }
            }
        }
    }
    cells
}

/// Asymptotic power of `stat` in a cell when `ℓ = 2 k_v`, in percent.
fn theoretical_power(
    cfg: &ExperimentConfig,
    cell: &PowerCell,
    stat: &TestStatistic,
    critical: f64,
    rng: &RandomStream,
) -> Result<Option<f64>> {
    let q = cell.q;
    match stat {
        TestStatistic::Stereo(spec) => {
            let alt = LocalAlternative::new(cell.f, cell.tau, spec.a)?;
            if cell.ell as usize != 2 * alt.k_v {
                return Ok(None);
            }
            let draws = sample_alt_asymptotic(&stereo_table(spec)?, &alt, SeriesTruncation::Auto, cfg.calibration_m, rng)?;
            Ok(Some(100.0 * draws.exceedance(critical)))
        }
        _ => {
            let k = baseline_order(stat).expect("baseline");
            if cell.ell as usize != 2 * k {
                return Ok(None);
            }
            let alt = LocalAlternative::with_order(cell.f, cell.tau, k)?;
            let xi = noncentrality(&alt, k, q)?;
            let sampler = ChiSquareSampler::new(harmonic_dim(k, q)?, xi)?;
            let mut sub = rng.clone();
            let m = cfg.calibration_m;
            let hits = (0..m).filter(|_| sampler.sample(&mut sub) > critical).count();
            Ok(Some(100.0 * hits as f64 / m as f64))
        }
    }
}

/// Runs one local-power cell.
pub fn run_power_cell(cfg: &ExperimentConfig, cell: &PowerCell, calibration: &PowerCalibration) -> Result<Vec<RateRow>> {
    let master = RandomStream::new(cfg.seed);
    let key = cell.key();
    let cell_rng = master.substream_named(&key);
    let spec = RotSymSpec::new(north_pole(cell.q), cell.kappa(), cell.f)?;
    let stats = &calibration.statistics;
    let counts = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rep = cell_rng.substream(r as u64);
            let sample = sample_rotsym(&spec, cell.q, cell.n, &mut rep)?;
            let values = evaluate_many(stats, &sample)?;
            Ok::<_, Error>(values.iter().zip(&calibration.critical).map(|(v, c)| usize::from(v > c)).collect::<Vec<_>>())
        })
        .try_reduce(|| vec![0; stats.len()], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            Ok(a)
        })?;
    stats
        .iter()
        .zip(&calibration.critical)
        .zip(counts)
        .map(|((stat, &crit), rejections)| {
            let theory_rng = cell_rng.substream_named(&format!("theory/{}", stat.label()));
            Ok(RateRow {
                experiment: ExperimentKind::LocalPower,
                cell: key.clone(),
                cell_id: stable_id(&key),
                seed: cfg.seed,
                q: cell.q,
                n: cell.n,
                f: Some(cell.f.name()),
                ell: Some(cell.ell),
                tau: Some(cell.tau),
                kappa: Some(cell.kappa()),
                theta_deg: None,
                test: stat.label(),
                replicates: cfg.replicates,
                rejections,
                theory_pct: theoretical_power(cfg, cell, stat, crit, &theory_rng)?,
            })
        })
        .collect()
}

/// Estimated pair evaluations of a configuration.
pub fn estimated_pairs(cfg: &ExperimentConfig) -> f64 {
    match cfg.experiment {
        ExperimentKind::LocalPower => power_cells(cfg).iter().map(|c| cfg.replicates as f64 * pairs(c.n)).sum(),
        ExperimentKind::UadTable => {
            let per_q: f64 = cfg
                .n
                .iter()
                .map(|&n| {
                    let cells = cfg.theta_deg.len() as f64 * cfg.replicates as f64 * pairs(n);
                    let kfold = if cfg.tests.contains(&TestFamily::KFold) { 2.0 } else { 0.0 };
                    cells * (1.0 + kfold) + cfg.calibration_m as f64 * pairs(n)
                })
                .sum();
            per_q * cfg.q.len() as f64
        }
        ExperimentKind::NullCalibration => {
            cfg.q.len() as f64 * cfg.n.iter().map(|&n| cfg.calibration_m as f64 * pairs(n)).sum::<f64>()
        }
    }
}

/// Local-power experiment over every cell, rows sorted by cell key.
pub fn run_power(cfg: &ExperimentConfig) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    check_budget(estimated_pairs(cfg), cfg.budget)?;
    let mut calibrations = Vec::new();
    for &q in &cfg.q {
        calibrations.push(power_calibration(cfg, q)?);
    }
    let mut cells = power_cells(cfg);
    cells.sort_by_key(|c| c.key());
    let mut rows = Vec::new();
    for cell in &cells {
        log::info!("cell {}", cell.key());
        let calibration = calibrations.iter().find(|c| c.q == cell.q).expect("calibrated");
        rows.extend(run_power_cell(cfg, cell, calibration)?);
    }
    Ok(rows)
}

/// One `(q, n, θ)` cell of the UAD table.
#[derive(Debug, Clone, PartialEq)]
pub struct UadCell {
    pub q: usize,
    pub n: usize,
    pub theta_deg: f64,
}

impl UadCell {
    pub fn key(&self) -> String {
        format!("uad/q={}/n={}/theta={}", self.q, self.n, self.theta_deg)
    }
}

pub fn uad_cells(cfg: &ExperimentConfig) -> Vec<UadCell> {
    let mut cells = Vec::new();
    for &q in &cfg.q {
        for &n in &cfg.n {
            for &theta_deg in &cfg.theta_deg {
                cells.push(UadCell { q, n, theta_deg });
            }
        }
    }
    cells
}

/// Exact-n critical values shared by all UAD cells with the same `(q, n)`.
pub struct UadCalibration {
    pub q: usize,
    pub n: usize,
    pub statistics: Vec<TestStatistic>,
    pub critical: Vec<f64>,
    pub kfold: Option<ExactCalibrator>,
}

pub fn uad_calibration(cfg: &ExperimentConfig, q: usize, n: usize) -> Result<UadCalibration> {
    let master = RandomStream::new(cfg.seed);
    let mut statistics = Vec::new();
    for family in &cfg.tests {
        match family {
            TestFamily::Rayleigh => statistics.push(TestStatistic::Rayleigh { q }),
            TestFamily::Bingham => statistics.push(TestStatistic::Bingham { q }),
            TestFamily::Stereo => {
                for &a in &cfg.a_grid {
                    statistics.push(TestStatistic::Stereo(KernelSpec::new(a, q)?));
                }
            }
            TestFamily::KFold => {}
        }
    }
    let critical = if statistics.is_empty() {
        Vec::new()
    } else {
        let rng = master.substream_named(&format!("exact-null/q{q}/n{n}"));
        cached_null_exact_many(&cfg.cache_dir, &statistics, n, cfg.calibration_m, &rng)?
            .iter()
            .map(|m| m.critical_value(cfg.alpha).map(|c| c.value))
            .collect::<Result<_>>()?
    };
    let kfold = if cfg.tests.contains(&TestFamily::KFold) {
        let calibrator = ExactCalibrator::new(cfg.calibration_m, master.substream_named("kfold-null"), Some(cfg.cache_dir.clone()));
        // Warm the calibrator for every fold size outside the replicate loop.
        use crate::statistics::Calibrator;
        let sizes = [n / cfg.folds, n.div_ceil(cfg.folds)];
        for &a in &cfg.a_grid {
            for size in sizes {
                calibrator.null_model(&TestStatistic::Stereo(KernelSpec::new(a, q)?), size)?;
            }
        }
        Some(calibrator)
    } else {
        None
    };
    Ok(UadCalibration {
        q,
        n,
        statistics,
        critical,
        kfold,
    })
}

/// Runs one UAD cell; columns follow the configured test order.
pub fn run_uad_cell(cfg: &ExperimentConfig, cell: &UadCell, calibration: &UadCalibration) -> Result<Vec<RateRow>> {
    let master = RandomStream::new(cfg.seed);
    let key = cell.key();
    let cell_rng = master.substream_named(&key);
    let theta = cell.theta_deg.to_radians();
    let stats = &calibration.statistics;
    let with_kfold = calibration.kfold.is_some();
    let width = stats.len() + usize::from(with_kfold);
    let counts = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let rep = cell_rng.substream(r as u64);
            let sample = sample_uad(cell.q, cell.n, theta, &mut rep.clone())?;
            let values = evaluate_many(stats, &sample)?;
            let mut out: Vec<usize> = values.iter().zip(&calibration.critical).map(|(v, c)| usize::from(v > c)).collect();
            if let Some(calibrator) = &calibration.kfold {
                let report = stat_kfold(&sample, cfg.folds, &cfg.a_grid, calibrator, cfg.alpha, &rep.substream_named("folds"))?;
                out.push(usize::from(report.reject));
            }
            Ok::<_, Error>(out)
        })
        .try_reduce(|| vec![0; width], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            Ok(a)
        })?;
    let mut labels: Vec<String> = stats.iter().map(TestStatistic::label).collect();
    if with_kfold {
        labels.push(format!("T_n^({})", cfg.folds));
    }
    // Report in configured family order.
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let rank = |label: &str| -> usize {
        let family = if label == "Rayleigh" {
            TestFamily::Rayleigh
        } else if label == "Bingham" {
            TestFamily::Bingham
        } else if label.starts_with("T_n^(") {
            TestFamily::KFold
        } else {
            TestFamily::Stereo
        };
        cfg.tests.iter().position(|f| *f == family).unwrap_or(usize::MAX)
    };
    order.sort_by_key(|&i| rank(&labels[i]));
    Ok(order
        .into_iter()
        .map(|i| RateRow {
            experiment: ExperimentKind::UadTable,
            cell: key.clone(),
            cell_id: stable_id(&key),
            seed: cfg.seed,
            q: cell.q,
            n: cell.n,
            f: None,
            ell: None,
            tau: None,
            kappa: None,
            theta_deg: Some(cell.theta_deg),
            test: labels[i].clone(),
            replicates: cfg.replicates,
            rejections: counts[i],
            theory_pct: None,
        })
        .collect())
}

/// UAD rejection table, rows sorted by cell key.
pub fn run_uad_table(cfg: &ExperimentConfig) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    check_budget(estimated_pairs(cfg), cfg.budget)?;
    let mut cells = uad_cells(cfg);
    cells.sort_by_key(|c| c.key());
    let mut rows = Vec::new();
    let mut calibration: Option<UadCalibration> = None;
    for cell in &cells {
        if calibration.as_ref().map(|c| (c.q, c.n)) != Some((cell.q, cell.n)) {
            log::info!("calibrating q = {}, n = {} with m = {}", cell.q, cell.n, cfg.calibration_m);
            calibration = Some(uad_calibration(cfg, cell.q, cell.n)?);
        }
        log::info!("cell {}", cell.key());
        rows.extend(run_uad_cell(cfg, cell, calibration.as_ref().expect("calibrated"))?);
    }
    Ok(rows)
}

/// Critical values for every `(q, a, n)` of a null-calibration config: the
/// exact-n value for each `n` and the asymptotic one where it exists.
pub fn run_null_calibration(cfg: &ExperimentConfig) -> Result<Vec<CritvalRow>> {
    cfg.validate()?;
    check_budget(estimated_pairs(cfg), cfg.budget)?;
    let mut rows = Vec::new();
    for &q in &cfg.q {
        for stat in power_statistics(cfg, q)? {
            for &n in &cfg.n {
                rows.extend(critical_values(stat, Some(n), cfg.calibration_m, &[cfg.alpha], cfg.seed, Some(&cfg.cache_dir))?);
            }
            rows.extend(critical_values(stat, None, cfg.calibration_m, &[cfg.alpha], cfg.seed, Some(&cfg.cache_dir))?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::sample_uniform_sphere;

    fn small_power_config(cache: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::LocalPower);
        cfg.q = vec![2];
        cfg.n = vec![50];
        cfg.replicates = 100;
        cfg.alternatives = vec![AngularFunction::Vmf];
        cfg.ell = vec![2];
        cfg.tau = vec![0.0, 4.0];
        cfg.calibration_m = 2000;
        cfg.cache_dir = cache.to_path_buf();
        cfg
    }

    #[test]
    fn power_rows_are_reproducible_per_cell() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_power_config(dir.path());
        let rows = run_power(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 5);
        let cells = power_cells(&cfg);
        let calibration = power_calibration(&cfg, 2).unwrap();
        let again = run_power_cell(&cfg, &cells[1], &calibration).unwrap();
        let original: Vec<RateRow> = rows.iter().filter(|r| r.cell == cells[1].key()).cloned().collect();
        assert_eq!(again, original);
        for r in &rows {
            assert!((0.0..=100.0).contains(&r.rate_pct()));
            // Theory where ℓ = 2 k_v: Rayleigh and T_{n,6}(a < 1).
            let expect_theory = r.test == "Rayleigh" || (r.test.starts_with("T_n6(") && r.test != "T_n6(1)");
            assert_eq!(r.theory_pct.is_some(), expect_theory, "{}", r.test);
        }
        let mut buf = Vec::new();
        write_rate_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), rows.len() + 1);
    }

    #[test]
    fn infeasible_runs_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_power_config(dir.path());
        cfg.budget = 1e3;
        assert!(matches!(run_power(&cfg), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn critval_tables() {
        let dir = tempfile::tempdir().unwrap();
        let stat = TestStatistic::Stereo(KernelSpec::new(0.0, 3).unwrap());
        let alphas = [0.10, 0.05, 0.01];
        let rows = critical_values(stat, Some(30), 2000, &alphas, 5, Some(dir.path())).unwrap();
        assert!(rows[0].critical_value < rows[1].critical_value && rows[1].critical_value < rows[2].critical_value);
        let again = critical_values(stat, Some(30), 2000, &alphas, 5, Some(dir.path())).unwrap();
        assert_eq!(rows, again);
        let q2 = TestStatistic::Stereo(KernelSpec::new(0.0, 2).unwrap());
        assert!(matches!(critical_values(q2, None, 2000, &alphas, 5, None), Err(Error::NonSummable { q: 2 })));
        let r = critical_values(TestStatistic::Rayleigh { q: 2 }, None, 0, &[0.05], 5, None).unwrap();
        assert!((r[0].critical_value - 7.814_727_903).abs() < 1e-6);
    }

    #[test]
    fn single_test_reports() {
        let mut rng = RandomStream::new(3);
        let s = sample_uniform_sphere(3, 40, &mut rng).unwrap();
        let mut opts = TestOptions {
            statistic: TestStatistic::Stereo(KernelSpec::new(0.0, 3).unwrap()),
            method: Calibration::ExactMc,
            alpha: 0.05,
            seed: 1,
            m: 2000,
            folds: 4,
            grid: vec![-1.0, 0.0, 1.0],
            cache: None,
        };
        let exact = run_test(&s, &opts).unwrap();
        assert_eq!(exact.reject, exact.statistic > exact.critical_value);
        opts.method = Calibration::Asymptotic;
        let asym = run_test(&s, &opts).unwrap();
        assert_eq!(asym.statistic, exact.statistic);
        opts.statistic = TestStatistic::Rayleigh { q: 3 };
        let ray = run_test(&s, &opts).unwrap();
        assert!((0.0..=1.0).contains(&ray.p_value));
        opts.method = Calibration::KFold;
        let kf = run_test(&s, &opts).unwrap();
        assert_eq!(kf.selected_a.len(), 4);
    }
}
