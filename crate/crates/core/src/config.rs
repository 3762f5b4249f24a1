//! Flat `key = value` experiment configuration. Repeated keys form lists,
//! `#` starts a comment.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::samplers::AngularFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LocalPower,
    UadTable,
    NullCalibration,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::LocalPower => "local-power",
            ExperimentKind::UadTable => "uad-table",
            ExperimentKind::NullCalibration => "null-calibration",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "local-power" | "power" => Ok(ExperimentKind::LocalPower),
            "uad-table" | "uad" => Ok(ExperimentKind::UadTable),
            "null-calibration" | "critval" => Ok(ExperimentKind::NullCalibration),
            _ => Err(Error::Config(format!(
                "unknown experiment '{text}' (expected local-power, uad-table or null-calibration)"
            ))),
        }
    }
}

/// Which tests an experiment evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestFamily {
    Rayleigh,
    Bingham,
    /// `T_n(a)` (or `T_{n,K}(a)` on S^2 in power experiments) for each `a`.
    Stereo,
    /// K-fold adaptive test over the `a` grid.
    KFold,
}

impl TestFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestFamily::Rayleigh => "rayleigh",
            TestFamily::Bingham => "bingham",
            TestFamily::Stereo => "stereo",
            TestFamily::KFold => "kfold",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "rayleigh" => Ok(TestFamily::Rayleigh),
            "bingham" => Ok(TestFamily::Bingham),
            "stereo" => Ok(TestFamily::Stereo),
            "kfold" => Ok(TestFamily::KFold),
            _ => Err(Error::Config(format!("unknown test family '{text}' (expected rayleigh, bingham, stereo or kfold)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub q: Vec<usize>,
    pub n: Vec<usize>,
    /// Experiment replicates `M`.
    pub replicates: usize,
    pub alpha: f64,
    pub a_grid: Vec<f64>,
    /// Truncation `K` of the stereographic statistic on S^2 in power runs.
    pub truncation: usize,
    pub alternatives: Vec<AngularFunction>,
    pub ell: Vec<u32>,
    pub tau: Vec<f64>,
    /// Cap angles in degrees.
    pub theta_deg: Vec<f64>,
    pub tests: Vec<TestFamily>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Calibration draws `m` per null model.
    pub calibration_m: usize,
    pub folds: usize,
    /// Refuse runs whose estimated pair evaluations exceed this.
    pub budget: f64,
    pub cache_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let (q, n, tests) = match experiment {
            ExperimentKind::LocalPower => (
                vec![2, 3],
                vec![500],
                vec![TestFamily::Rayleigh, TestFamily::Bingham, TestFamily::Stereo],
            ),
            ExperimentKind::UadTable => (
                vec![2, 3],
                vec![100],
                vec![TestFamily::Rayleigh, TestFamily::Bingham, TestFamily::KFold, TestFamily::Stereo],
            ),
            ExperimentKind::NullCalibration => (vec![3], vec![100], vec![TestFamily::Stereo]),
        };
        ExperimentConfig {
            experiment,
            q,
            n,
            replicates: 2000,
            alpha: 0.05,
            a_grid: vec![-1.0, 0.0, 1.0],
            truncation: 6,
            alternatives: vec![
                AngularFunction::Vmf,
                AngularFunction::MixVmf,
                AngularFunction::SmallCircle { nu: 0.25 },
            ],
            ell: vec![2, 4, 6],
            tau: (0..=12).map(|i| i as f64 * 0.5).collect(),
            theta_deg: vec![1.0, 20.0, 90.0, 180.0],
            tests,
            seed: 1,
            output: None,
            calibration_m: 100_000,
            folds: 10,
            budget: 1e11,
            cache_dir: PathBuf::from("cache"),
        }
    }

    /// Parses `key = value` lines. Keys not given keep their defaults for
    /// the selected experiment; `experiment` must appear.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("config line {}", i + 1),
                detail: format!("expected key = value, got '{line}'"),
            })?;
            entries.push((i + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let kind = entries
            .iter()
            .find(|e| e.1 == "experiment")
            .ok_or_else(|| Error::Config("config must set 'experiment'".into()))?;
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::parse(&kind.2)?);
        let mut seen: Vec<&str> = Vec::new();
        for (line, key, value) in &entries {
            let fresh = !seen.contains(&key.as_str());
            if fresh {
                seen.push(key);
            }
            let err = |detail: String| Error::Parse {
                location: format!("config line {line}"),
                detail,
            };
            macro_rules! num {
                ($t:ty) => {
                    value.parse::<$t>().map_err(|_| err(format!("invalid value '{value}' for '{key}'")))?
                };
            }
            macro_rules! push {
                ($field:expr, $v:expr) => {{
                    let v = $v;
                    if fresh {
                        $field.clear();
                    }
                    $field.push(v);
                }};
            }
            match key.as_str() {
                "experiment" => {
                    if !fresh {
                        return Err(err("'experiment' given twice".into()));
                    }
                }
                "q" => push!(cfg.q, num!(usize)),
                "n" => push!(cfg.n, num!(usize)),
                "M" => cfg.replicates = num!(usize),
                "alpha" => cfg.alpha = num!(f64),
                "a" => push!(cfg.a_grid, num!(f64)),
                "K" => cfg.truncation = num!(usize),
                "f" => push!(cfg.alternatives, AngularFunction::parse(value).map_err(|e| err(e.to_string()))?),
                "ell" => push!(cfg.ell, num!(u32)),
                "tau" => push!(cfg.tau, num!(f64)),
                "theta" => push!(cfg.theta_deg, num!(f64)),
                "test" => push!(cfg.tests, TestFamily::parse(value).map_err(|e| err(e.to_string()))?),
                "seed" => cfg.seed = num!(u64),
                "out" => cfg.output = Some(PathBuf::from(value)),
                "m" => cfg.calibration_m = num!(usize),
                "folds" => cfg.folds = num!(usize),
                "budget" => cfg.budget = num!(f64),
                "cache" => cfg.cache_dir = PathBuf::from(value),
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Config(detail));
        if self.replicates < 100 {
            return bad(format!("M must be at least 100, got {}", self.replicates));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.q.is_empty() || self.q.iter().any(|&q| q < 2) {
            return bad("q list must be nonempty with every q >= 2".into());
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n < 2) {
            return bad("n list must be nonempty with every n >= 2".into());
        }
        if self.tests.is_empty() {
            return bad("no tests selected".into());
        }
        if self.a_grid.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return bad("every a must lie in [-1, 1]".into());
        }
        let needs_grid = self.tests.contains(&TestFamily::Stereo) || self.tests.contains(&TestFamily::KFold);
        if needs_grid && self.a_grid.is_empty() {
            return bad("a grid is empty".into());
        }
        if self.truncation == 0 {
            return bad("K must be at least 1".into());
        }
        if self.calibration_m < 1000 {
            return bad(format!("m must be at least 1000, got {}", self.calibration_m));
        }
        if !(self.budget > 0.0) {
            return bad("budget must be positive".into());
        }
        match self.experiment {
            ExperimentKind::LocalPower => {
                if self.alternatives.is_empty() || self.ell.is_empty() || self.tau.is_empty() {
                    return bad("local-power needs f, ell and tau lists".into());
                }
                if self.ell.contains(&0) {
                    return bad("ell must be positive".into());
                }
                if self.tau.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                    return bad("tau values must be finite and nonnegative".into());
                }
                if self.tests.contains(&TestFamily::KFold) {
                    return bad("the K-fold test is only available in uad-table".into());
                }
            }
            ExperimentKind::UadTable => {
                if self.theta_deg.is_empty() || self.theta_deg.iter().any(|t| !(*t > 0.0 && *t <= 180.0)) {
                    return bad("theta values must lie in (0, 180] degrees".into());
                }
                if self.tests.contains(&TestFamily::KFold) {
                    if self.folds < 2 {
                        return bad("folds must be at least 2".into());
                    }
                    if let Some(n) = self.n.iter().find(|&&n| n < 2 * self.folds) {
                        return bad(format!("n = {n} is too small for {} folds", self.folds));
                    }
                }
            }
            ExperimentKind::NullCalibration => {}
        }
        Ok(())
    }

    /// Canonical serialization; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("experiment", self.experiment.as_str().into());
        self.q.iter().for_each(|v| line("q", v.to_string()));
        self.n.iter().for_each(|v| line("n", v.to_string()));
        line("M", self.replicates.to_string());
        line("alpha", self.alpha.to_string());
        self.a_grid.iter().for_each(|v| line("a", v.to_string()));
        line("K", self.truncation.to_string());
        self.alternatives.iter().for_each(|v| line("f", v.name()));
        self.ell.iter().for_each(|v| line("ell", v.to_string()));
        self.tau.iter().for_each(|v| line("tau", v.to_string()));
        self.theta_deg.iter().for_each(|v| line("theta", v.to_string()));
        self.tests.iter().for_each(|v| line("test", v.as_str().into()));
        line("seed", self.seed.to_string());
        if let Some(out) = &self.output {
            line("out", out.display().to_string());
        }
        line("m", self.calibration_m.to_string());
        line("folds", self.folds.to_string());
        line("budget", format!("{:e}", self.budget));
        line("cache", self.cache_dir.display().to_string());
        s
    }
}
