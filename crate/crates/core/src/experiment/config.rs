//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::InitialMeasure;
use crate::prm_noise::{NoiseMode, SpaceTimeGrid};
use crate::spde::ModelSpec;
use crate::stable_core::StableIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub d: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { alpha: 1.5, gamma: 0.75, d: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub box_halfwidth: f64,
    pub nx: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { box_halfwidth: 10.0, nx: 512, dt: 1e-4, horizon: 0.1 }
    }
}

/// Which check a `verify` run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyTest {
    StableLaplace,
    SubordinatorLaplace,
    QvSubordinator,
    IntegralRep,
    BdgRatio,
    GamblersRuin,
}

impl VerifyTest {
    pub fn slug(self) -> &'static str {
        match self {
            VerifyTest::StableLaplace => "stable-laplace",
            VerifyTest::SubordinatorLaplace => "subordinator-laplace",
            VerifyTest::QvSubordinator => "qv-subordinator",
            VerifyTest::IntegralRep => "integral-rep",
            VerifyTest::BdgRatio => "bdg-ratio",
            VerifyTest::GamblersRuin => "gamblers-ruin",
        }
    }
}

/// Checks a `solve` run computes over its ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveCheck {
    MeanMeasure,
    MassMean,
    TailIndex,
    MomentSlope,
    Mollifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SampleLaw {
    Stable,
    Subordinator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `1` on `[-1/2, 1/2]^d`.
    Box,
    /// `(1 − |x|)_+` per axis.
    Triangle,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0]
}

fn default_residual_share() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    /// Draws of `W_t` or `S_t`.
    Sample { law: SampleLaw, t: f64, n: usize },
    /// Terminal values of `φ·L` beside draws of `W_{T_φ}`.
    Integrate { profile: Profile, n: usize },
    /// Ensemble of solver runs.
    Solve {
        #[serde(default)]
        checks: Vec<SolveCheck>,
        #[serde(default)]
        write_snapshots: bool,
    },
    Verify {
        test: VerifyTest,
        n: usize,
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
        #[serde(default)]
        b: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
    },
    /// Occupation-support sweep over `γ`.
    Sweep {
        gammas: Vec<f64>,
        record_times: Vec<f64>,
        mass_fractions: Vec<f64>,
        tau_supp: f64,
        beyond_radius: f64,
    },
    /// Residual of the boundary identity under `dt → dt/2`.
    Boundary {
        x0: f64,
        #[serde(default = "default_residual_share")]
        residual_share: f64,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Sample { .. } => "sample",
            Experiment::Integrate { .. } => "integrate",
            Experiment::Solve { .. } => "solve",
            Experiment::Verify { .. } => "verify",
            Experiment::Sweep { .. } => "sweep",
            Experiment::Boundary { .. } => "boundary",
        }
    }
}

fn default_replicates() -> usize {
    200
}

fn default_initial() -> InitialMeasure {
    InitialMeasure::point(vec![0.0], 1.0)
}

fn default_snapshot_times() -> Vec<f64> {
    vec![0.01, 0.05, 0.1]
}

fn default_probes() -> Vec<Vec<f64>> {
    vec![vec![0.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// No default: every run names its seed.
    pub seed: u64,
    /// Entry name inside the artifact directory; defaults to the experiment kind.
    #[serde(default)]
    pub name: Option<String>,
    pub output_dir: PathBuf,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_snapshot_times")]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_probes")]
    pub probes: Vec<Vec<f64>>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseMode,
    #[serde(default = "default_initial")]
    pub initial: InitialMeasure,
    pub experiment: Experiment,
}

fn default_noise() -> NoiseMode {
    NoiseMode::ExactCell
}

impl RunConfig {
    /// The default solver setup with the given seed, output directory and experiment.
    pub fn new(seed: u64, output_dir: impl Into<PathBuf>, experiment: Experiment) -> Self {
        Self {
            seed,
            name: None,
            output_dir: output_dir.into(),
            replicates: default_replicates(),
            snapshot_times: default_snapshot_times(),
            probes: default_probes(),
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            noise: default_noise(),
            initial: default_initial(),
            experiment,
        }
    }

    pub fn entry_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.experiment {
            Experiment::Verify { test, .. } => format!("verify-{}", test.slug()),
            e => e.kind().to_string(),
        }
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let at = e.span().map(|s| line_col(src, s.start)).map(|(l, c)| format!("line {l}, column {c}: "));
            Error::Config(format!("{}{}", at.unwrap_or_default(), e.message()))
        })?;
        if let Err((key, msg)) = cfg.check() {
            let at = locate(src, &key).map(|l| format!("line {l}: ")).unwrap_or_default();
            return Err(Error::Config(format!("{at}{key}: {msg}")));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(StableIndex::new(self.model.alpha)?, self.model.gamma, self.model.d)
    }

    pub fn space_time_grid(&self) -> Result<SpaceTimeGrid> {
        let g = &self.grid;
        let steps = g.horizon / g.dt;
        if !(steps.is_finite() && steps >= 1.0 && (steps - steps.round()).abs() < 1e-6 * steps) {
            return Err(Error::Config(format!("horizon {} is not a whole number of steps of {}", g.horizon, g.dt)));
        }
        SpaceTimeGrid::new(self.model.d, g.box_halfwidth, g.nx, g.dt, steps.round() as usize)
    }

    /// Validates every module precondition the experiment will touch, returning the
    /// offending key on failure.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(k, m)| Error::Config(format!("{k}: {m}")))
    }

    fn check(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, e: Error| {
            let msg = match e {
                Error::Config(m) => m,
                other => other.to_string(),
            };
            (k.to_string(), msg)
        };
        let alpha = StableIndex::new(self.model.alpha).map_err(|e| bad("model.alpha", e))?;
        let needs_solver = matches!(
            self.experiment,
            Experiment::Solve { .. } | Experiment::Sweep { .. } | Experiment::Boundary { .. }
        );
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(("name".into(), "must be a plain file name".into()));
            }
        }
        if needs_solver {
            if !(self.model.gamma > 0.0 && self.model.gamma <= 1.0) {
                return Err(("model.gamma".into(), format!("must lie in (0, 1], got {}", self.model.gamma)));
            }
            if !(1..=3).contains(&self.model.d) {
                return Err(("model.d".into(), format!("must be 1, 2 or 3, got {}", self.model.d)));
            }
            self.model_spec().map_err(|e| bad("model", e))?;
            let g = &self.grid;
            if g.nx < 2 {
                return Err(("grid.nx".into(), format!("need at least 2 cells per axis, got {}", g.nx)));
            }
            if !(g.box_halfwidth > 0.0 && g.box_halfwidth.is_finite()) {
                return Err(("grid.box_halfwidth".into(), format!("must be positive, got {}", g.box_halfwidth)));
            }
            if !(g.dt > 0.0 && g.dt.is_finite()) {
                return Err(("grid.dt".into(), format!("must be positive, got {}", g.dt)));
            }
            let grid = self.space_time_grid().map_err(|e| bad("grid.horizon", e))?;
            if let NoiseMode::PrmThreshold { eps, .. } = self.noise {
                if !(eps > 0.0) {
                    return Err(("noise.eps".into(), "must be positive".into()));
                }
            }
            if self.replicates == 0 {
                return Err(("replicates".into(), "must be at least 1".into()));
            }
            let y0 = self.initial.to_field(&grid).map_err(|e| bad("initial", e))?;
            let dims_ok = match &self.initial {
                InitialMeasure::Atoms(a) => a.iter().all(|a| a.location.len() == grid.d),
                InitialMeasure::Gridded(_) => true,
            };
            if !dims_ok || y0.mass() <= 0.0 {
                return Err(("initial".into(), "needs positive mass in dimension d".into()));
            }
        }
        if let Experiment::Solve { .. } = self.experiment {
            let grid = self.space_time_grid().map_err(|e| bad("grid", e))?;
            for p in &self.probes {
                if p.len() != grid.d || grid.cell_of(p).is_none() {
                    return Err(("probes".into(), format!("{p:?} is not a point of the box")));
                }
            }
            for &t in &self.snapshot_times {
                if !(t >= 0.0 && t <= grid.horizon() * (1.0 + 1e-12)) {
                    return Err(("snapshot_times".into(), format!("{t} outside [0, horizon]")));
                }
            }
        }
        match &self.experiment {
            Experiment::Sample { t, n, .. } => {
                if !(*t > 0.0) || *n == 0 {
                    return Err(("experiment".into(), "needs t > 0 and n >= 1".into()));
                }
            }
            Experiment::Integrate { n, .. } | Experiment::Verify { n, .. } if *n == 0 => {
                return Err(("experiment.n".into(), "must be at least 1".into()));
            }
            Experiment::Verify { test: VerifyTest::GamblersRuin, b, delta, .. } => match (b, delta) {
                (Some(b), Some(d)) if *b > 0.0 && *b < 1.0 && *d > 0.0 && *d < 1.0 => {}
                _ => return Err(("experiment".into(), "gamblers-ruin needs b and delta in (0, 1)".into())),
            },
            Experiment::Verify { lambdas, .. } if lambdas.iter().any(|l| !(*l > 0.0)) => {
                return Err(("experiment.lambdas".into(), "must be positive".into()));
            }
            Experiment::Sweep { gammas, record_times, mass_fractions, .. } => {
                if gammas.is_empty() || record_times.is_empty() {
                    return Err(("experiment".into(), "sweep needs gammas and record_times".into()));
                }
                for &g in gammas {
                    ModelSpec::new(alpha, g, self.model.d).map_err(|e| bad("experiment.gammas", e))?;
                }
                if mass_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                    return Err(("experiment.mass_fractions".into(), "must lie in (0, 1]".into()));
                }
            }
            Experiment::Boundary { residual_share, .. } => {
                if self.model.d != 1 {
                    return Err(("model.d".into(), "the boundary experiment is one-dimensional".into()));
                }
                if !(*residual_share > 0.0 && *residual_share < 1.0) {
                    return Err(("experiment.residual_share".into(), "must lie in (0, 1)".into()));
                }
                if self.space_time_grid().map(|g| g.n_steps % 2 != 0).unwrap_or(false) {
                    return Err(("grid.horizon".into(), "needs an even number of steps".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Line of `table.key` (or of `[table]` when only a table is named) in the source.
fn locate(src: &str, path: &str) -> Option<usize> {
    let (table, key) = match path.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None if src.lines().any(|l| l.trim() == format!("[{path}]")) => return header_line(src, path),
        None => ("", path),
    };
    let mut current = "";
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            current = h;
            continue;
        }
        let k = t.split('=').next().map(str::trim);
        if current == table && k == Some(key) {
            return Some(i + 1);
        }
    }
    header_line(src, table)
}

fn header_line(src: &str, table: &str) -> Option<usize> {
    src.lines().position(|l| l.trim() == format!("[{table}]")).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"
seed = 7
output_dir = "out"
replicates = 4
snapshot_times = [0.01, 0.02]

[model]
alpha = 1.5
gamma = 0.75
d = 1

[grid]
box_halfwidth = 4.0
nx = 64
dt = 0.001
horizon = 0.02

[experiment]
kind = "solve"
checks = ["mass-mean"]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(SOLVE).unwrap();
        assert_eq!(cfg.space_time_grid().unwrap().n_steps, 20);
        assert_eq!(cfg.noise, NoiseMode::ExactCell);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn seed_is_mandatory() {
        let src = SOLVE.replace("seed = 7\n", "");
        let e = RunConfig::from_toml_str(&src).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
    }

    #[test]
    fn errors_name_the_line() {
        let src = SOLVE.replace("gamma = 0.75", "gamma = 1.5");
        let e = RunConfig::from_toml_str(&src).unwrap_err().to_string();
        assert!(e.contains("line 9"), "{e}");
        let src = SOLVE.replace("nx = 64", "nx = \"many\"");
        let e = RunConfig::from_toml_str(&src).unwrap_err().to_string();
        assert!(e.contains("line 14"), "{e}");
        let src = SOLVE.replace("horizon = 0.02", "horizon = 0.0205");
        let e = RunConfig::from_toml_str(&src).unwrap_err().to_string();
        assert!(e.contains("line 16"), "{e}");
        let src = SOLVE.replace("nx = 64", "nx = 1");
        let e = RunConfig::from_toml_str(&src).unwrap_err().to_string();
        assert!(e.contains("line 14: grid.nx"), "{e}");
        let src = SOLVE.replace("replicates = 4", "replicates = 4\ncolour = 1");
        assert!(RunConfig::from_toml_str(&src).is_err());
    }

    #[test]
    fn verify_configs_need_only_a_seed() {
        let src = "seed = 1\noutput_dir = \"o\"\n[experiment]\nkind = \"verify\"\ntest = \"gamblers-ruin\"\nn = 10\nb = 0.01\ndelta = 0.5\n";
        let cfg = RunConfig::from_toml_str(src).unwrap();
        assert_eq!(cfg.entry_name(), "verify-gamblers-ruin");
        let bad = src.replace("delta = 0.5", "delta = 1.5");
        assert!(RunConfig::from_toml_str(&bad).unwrap_err().to_string().contains("line 3"));
    }
}
