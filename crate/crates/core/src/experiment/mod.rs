//! Configured runs, their artifact directories and the manifest tying them together.
//!
//! An artifact directory holds `manifest.json` and one subdirectory per experiment
//! entry with `config.toml`, `summary.json` and CSV tables.

mod config;
mod report;
pub mod verify;

pub use config::{
    Experiment, GridConfig, ModelConfig, Profile, RunConfig, SampleLaw, SolveCheck, VerifyTest,
};
pub use report::{render_report, ReportOutcome};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    boundary_refinement_experiment, mass_mean_check, mean_measure_check, mollifier_check, moment_slope_check,
    support_study, tail_index_check, CheckRecord, DiagnosticsReport, SupportSettings, TailIndexRule,
};
use crate::error::{Error, Result};
use crate::field::InitialMeasure;
use crate::prm_noise::threshold_for_residual_share;
use crate::rng::{tag, RngFactory};
use crate::snapshot::{write_snapshot, Snapshot};
use crate::spde::{run_ensemble, RunOptions, SolutionTrajectory, Solver};
use crate::stable_core::{sample_stable_increment, sample_subordinator_increment, LevyNormalization, StableIndex};

use verify::Outcome;

/// A CSV table held as text cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn push_text(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<FileDigest>,
    pub checks_passed: usize,
    pub checks_failed: usize,
    pub failed_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiments: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn empty() -> Self {
        Self { tool: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into(), experiments: Vec::new() }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// What `run_experiment` produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub entry: ManifestEntry,
    pub report: DiagnosticsReport,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.report.all_passed() && self.entry.failed_replicates == 0
    }
}

struct Produced {
    outcome: Outcome,
    notes: Vec<String>,
    failed_replicates: usize,
    snapshots: Vec<(String, Snapshot)>,
}

impl From<Outcome> for Produced {
    fn from(outcome: Outcome) -> Self {
        Self { outcome, notes: Vec::new(), failed_replicates: 0, snapshots: Vec::new() }
    }
}

/// Runs one configured experiment and writes its entry under `output_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let factory = RngFactory::new(cfg.seed);
    let produced = match &cfg.experiment {
        Experiment::Sample { law, t, n } => sample(cfg, *law, *t, *n, &factory)?,
        Experiment::Integrate { profile, n } => {
            verify::integral_rep(StableIndex::new(cfg.model.alpha)?, *profile, *n, &factory)?.into()
        }
        Experiment::Verify { test, n, lambdas, b, delta } => {
            let alpha = StableIndex::new(cfg.model.alpha)?;
            match test {
                VerifyTest::StableLaplace => verify::stable_laplace(alpha, lambdas, *n, &factory).into(),
                VerifyTest::SubordinatorLaplace => verify::subordinator_laplace(alpha, *n, &factory).into(),
                VerifyTest::QvSubordinator => verify::qv_subordinator(alpha, *n, &factory)?.into(),
                VerifyTest::IntegralRep => {
                    let mut o = verify::integral_rep(alpha, Profile::Box, *n, &factory)?;
                    let t = verify::integral_rep(alpha, Profile::Triangle, *n, &factory)?;
                    o.checks.extend(t.checks);
                    o.tables.extend(t.tables);
                    o.into()
                }
                VerifyTest::BdgRatio => verify::bdg_ratio(alpha, *n, &factory)?.into(),
                VerifyTest::GamblersRuin => verify::gamblers_ruin(
                    alpha,
                    b.ok_or_else(|| Error::Config("b missing".into()))?,
                    delta.ok_or_else(|| Error::Config("delta missing".into()))?,
                    *n,
                    &factory,
                )?
                .into(),
            }
        }
        Experiment::Solve { checks, write_snapshots } => solve(cfg, checks, *write_snapshots, &factory)?,
        Experiment::Sweep { gammas, record_times, mass_fractions, tau_supp, beyond_radius } => {
            sweep(cfg, gammas, record_times, mass_fractions, *tau_supp, *beyond_radius, &factory)?
        }
        Experiment::Boundary { x0, residual_share } => boundary(cfg, *x0, *residual_share, &factory)?,
    };
    write_entry(cfg, produced)
}

fn write_entry(cfg: &RunConfig, produced: Produced) -> Result<RunOutcome> {
    let name = cfg.entry_name();
    let root = &cfg.output_dir;
    let dir = root.join(&name);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let config_text = cfg.to_toml_string()?;
    fs::write(dir.join("config.toml"), &config_text)?;
    let mut report = DiagnosticsReport { checks: produced.outcome.checks, notes: produced.notes };
    if produced.failed_replicates > 0 {
        report.notes.push(format!("{} replicate(s) failed and were excluded", produced.failed_replicates));
    }
    fs::write(dir.join("summary.json"), report.to_json()? + "\n")?;
    for t in &produced.outcome.tables {
        t.write_csv(&dir.join(format!("{}.csv", t.name)))?;
    }
    if !produced.snapshots.is_empty() {
        fs::create_dir_all(dir.join("snapshots"))?;
        for (file, snap) in &produced.snapshots {
            let f = fs::File::create(dir.join("snapshots").join(file))?;
            write_snapshot(std::io::BufWriter::new(f), snap)?;
        }
    }
    let mut files = Vec::new();
    collect_digests(&dir, &dir, &mut files)?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let passed = report.checks.iter().filter(|c| c.passed).count();
    let entry = ManifestEntry {
        name: name.clone(),
        kind: cfg.experiment.kind().into(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        files,
        checks_passed: passed,
        checks_failed: report.checks.len() - passed,
        failed_replicates: produced.failed_replicates,
    };
    let mut manifest = Manifest::read(root).unwrap_or_else(|_| Manifest::empty());
    manifest.experiments.retain(|e| e.name != name);
    manifest.experiments.push(entry.clone());
    manifest.experiments.sort_by(|a, b| a.name.cmp(&b.name));
    manifest.write(root)?;
    Ok(RunOutcome { dir, entry, report })
}

fn collect_digests(base: &Path, dir: &Path, out: &mut Vec<FileDigest>) -> Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            collect_digests(base, &p, out)?;
        } else {
            let bytes = fs::read(&p)?;
            let rel = p.strip_prefix(base).map_err(|e| Error::Config(e.to_string()))?;
            out.push(FileDigest {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
    }
    Ok(())
}

fn sample(cfg: &RunConfig, law: SampleLaw, t: f64, n: usize, factory: &RngFactory) -> Result<Produced> {
    let alpha = StableIndex::new(cfg.model.alpha)?;
    let norm = LevyNormalization::new(alpha);
    let mut rng = factory.stream(if law == SampleLaw::Stable { tag::STABLE } else { tag::SUBORDINATOR }, 0);
    let mut table = Table::new("samples", &["index", "value"]);
    for i in 0..n {
        let v = match law {
            SampleLaw::Stable => sample_stable_increment(alpha, t, &mut rng),
            SampleLaw::Subordinator => sample_subordinator_increment(alpha, &norm, t, &mut rng),
        };
        table.push(&[i as f64, v]);
    }
    Ok(Outcome { checks: Vec::new(), tables: vec![table] }.into())
}

/// Mass-weighted centre of the initial measure.
fn centre_of(initial: &InitialMeasure, cfg: &RunConfig) -> Result<Vec<f64>> {
    let grid = cfg.space_time_grid()?;
    let f = initial.to_field(&grid)?;
    let m = f.mass();
    Ok((0..grid.d).map(|k| f.pair_with(|x| x[k]) / m).collect())
}

fn ensemble(cfg: &RunConfig, factory: &RngFactory) -> Result<(Vec<SolutionTrajectory>, Vec<String>)> {
    let grid = cfg.space_time_grid()?;
    let solver = Solver::new(cfg.model_spec()?, &grid, cfg.noise)?;
    let opts = RunOptions { snapshot_times: cfg.snapshot_times.clone(), probes: cfg.probes.clone(), ..Default::default() };
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in run_ensemble(&solver, &cfg.initial, &opts, cfg.replicates, factory).into_iter().enumerate() {
        match r {
            Ok(t) => ok.push(t),
            Err(e) => failures.push(format!("replicate {i}: {e}")),
        }
    }
    if ok.is_empty() {
        return Err(Error::Domain(format!("every replicate failed; first: {}", failures[0])));
    }
    Ok((ok, failures))
}

fn solve(cfg: &RunConfig, checks: &[SolveCheck], write_snapshots: bool, factory: &RngFactory) -> Result<Produced> {
    let grid = cfg.space_time_grid()?;
    let spec = cfg.model_spec()?;
    let (runs, failures) = ensemble(cfg, factory)?;
    let mut out = Outcome::default();

    let mut probes = Table::new("probes", &["replicate", "probe", "time", "value"]);
    let mut mass = Table::new("mass", &["replicate", "time", "mass", "clip_loss", "leak", "p_integral"]);
    for (i, r) in runs.iter().enumerate() {
        for (p, series) in r.probes.iter().enumerate() {
            for (k, v) in series.values.iter().enumerate() {
                probes.push(&[i as f64, p as f64, k as f64 * grid.dt, *v]);
            }
        }
        for &t in &cfg.snapshot_times {
            let k = (t / grid.dt).round() as usize;
            mass.push(&[i as f64, k as f64 * grid.dt, r.mass_path[k], r.clip_loss[k], r.leak[k], r.p_integral]);
        }
    }
    out.tables.push(probes);
    out.tables.push(mass);

    let positive_times: Vec<f64> = cfg.snapshot_times.iter().copied().filter(|t| *t > 0.0).collect();
    for check in checks {
        let rec = match check {
            SolveCheck::MeanMeasure => mean_measure_check(&runs, &cfg.initial, &positive_times, 0.01)?,
            SolveCheck::MassMean => mass_mean_check(&runs, cfg.initial.to_field(&grid)?.mass(), &cfg.snapshot_times)?,
            SolveCheck::TailIndex => tail_index_check(
                &runs,
                &cfg.initial,
                spec.alpha,
                &positive_times,
                &centre_of(&cfg.initial, cfg)?,
                &TailIndexRule::default(),
                0.2,
            )?,
            SolveCheck::MomentSlope => {
                let (rec, points) =
                    moment_slope_check(&runs, &cfg.initial, 0, 1.2, 1e-3, 0.1f64.min(grid.horizon()), 12, 0.15)?;
                let mut t = Table::new("moments", &["time", "mean", "se", "heat_term"]);
                for p in &points {
                    t.push(&[p.t, p.moment.mean, p.moment.se, p.heat_term]);
                }
                out.tables.push(t);
                rec
            }
            SolveCheck::Mollifier => {
                let t = *positive_times.last().ok_or_else(|| Error::Config("mollifier needs a snapshot".into()))?;
                let rows = mollifier_check(&runs, t, &cfg.probes[0], &[8, 4, 2, 1, 0], 1.0)?;
                let mut table = Table::new("mollifier", &["eps", "mean_abs_diff", "se"]);
                for r in &rows {
                    table.push(&[r.eps, r.mean_abs_diff, r.se]);
                }
                out.tables.push(table);
                let monotone = rows.windows(2).all(|w| w[1].mean_abs_diff <= w[0].mean_abs_diff);
                CheckRecord::new(
                    "mollified density converges to cell value",
                    monotone && rows.last().is_some_and(|r| r.mean_abs_diff == 0.0),
                    format!("E|psi_eps*Y - Y| at eps = {:?}: {:?}", rows.iter().map(|r| r.eps).collect::<Vec<_>>(), rows.iter().map(|r| r.mean_abs_diff).collect::<Vec<_>>()),
                )
            }
        };
        out.checks.push(rec);
    }

    let mut snapshots = Vec::new();
    if write_snapshots {
        for (i, r) in runs.iter().enumerate() {
            for (s, f) in r.snapshots.iter().enumerate() {
                snapshots.push((
                    format!("r{i:04}_s{s:02}.snap"),
                    Snapshot { alpha: spec.alpha.value(), field: f.clone(), ledger: Vec::new() },
                ));
            }
        }
    }
    let mut notes = runs[0].warnings.clone();
    notes.extend(failures.iter().cloned());
    Ok(Produced { outcome: out, notes, failed_replicates: failures.len(), snapshots })
}

fn sweep(
    cfg: &RunConfig,
    gammas: &[f64],
    record_times: &[f64],
    mass_fractions: &[f64],
    tau_supp: f64,
    beyond_radius: f64,
    factory: &RngFactory,
) -> Result<Produced> {
    let settings = SupportSettings {
        alpha: StableIndex::new(cfg.model.alpha)?,
        gammas: gammas.to_vec(),
        grid: cfg.space_time_grid()?,
        y0: cfg.initial.clone(),
        centre: centre_of(&cfg.initial, cfg)?,
        n_replicates: cfg.replicates,
        record_times: record_times.to_vec(),
        mass_fractions: mass_fractions.to_vec(),
        tau_supp,
        beyond_radius,
    };
    let rep = support_study(&settings, factory)?;
    let mut radii = Table::new("radii", &["curve", "gamma", "time", "metric", "fraction", "value"]);
    let mut finals = Table::new("final_radii", &["gamma", "replicate", "threshold_radius"]);
    for c in std::iter::once(&rep.control).chain(&rep.curves) {
        for (ti, t) in c.times.iter().enumerate() {
            let row = |metric: &str, fraction: String, v: f64| {
                vec![c.label.clone(), c.gamma.to_string(), t.to_string(), metric.to_string(), fraction, v.to_string()]
            };
            for (fi, f) in mass_fractions.iter().enumerate() {
                radii.push_text(row("mass-fraction", f.to_string(), c.mass_radius[fi][ti]));
            }
            radii.push_text(row("threshold", String::new(), c.threshold_radius[ti]));
            radii.push_text(row("zero-beyond", String::new(), c.zero_beyond_fraction[ti]));
        }
    }
    for c in &rep.curves {
        for (i, r) in c.final_threshold_radii.iter().enumerate() {
            finals.push(&[c.gamma, i as f64, *r]);
        }
    }
    let spreads: Vec<String> = rep
        .curves
        .iter()
        .map(|c| format!("gamma {}: {:.3} (clip mass {:.1e})", c.gamma, c.final_spread(), c.mean_clip_mass))
        .collect();
    let failed: usize = rep.curves.iter().map(|c| c.failed_replicates).sum();
    let check = CheckRecord::new(
        "support spread monotone in gamma",
        rep.monotone && !rep.curves.is_empty(),
        format!(
            "occupation radius above {tau_supp:e} at t={}: {}; zero-noise control {:.3}",
            record_times.last().unwrap_or(&0.0),
            spreads.join(", "),
            rep.control.final_spread()
        ),
    );
    let check = rep.curves.iter().fold(check, |c, k| c.metric(format!("spread_gamma_{}", k.gamma), k.final_spread()));
    let outcome = Outcome { checks: vec![check], tables: vec![radii, finals] };
    Ok(Produced { outcome, notes: Vec::new(), failed_replicates: failed, snapshots: Vec::new() })
}

fn boundary(cfg: &RunConfig, x0: f64, share: f64, factory: &RngFactory) -> Result<Produced> {
    let grid = cfg.space_time_grid()?;
    let spec = cfg.model_spec()?;
    let eps = threshold_for_residual_share(spec.alpha, grid.dt * grid.cell_volume(), share);
    let rep = boundary_refinement_experiment(spec, &grid, &cfg.initial, x0, eps, cfg.replicates, factory)?;
    let mut residual = Table::new("residual", &["grid", "time", "mean_abs_residual"]);
    for (k, v) in rep.fine_abs_path.iter().enumerate() {
        residual.push_text(vec!["fine".into(), (k as f64 * grid.dt).to_string(), v.to_string()]);
    }
    for (k, v) in rep.coarse_abs_path.iter().enumerate() {
        residual.push_text(vec!["coarse".into(), (k as f64 * 2.0 * grid.dt).to_string(), v.to_string()]);
    }
    let check = CheckRecord::new(
        "boundary identity residual shrinks under refinement",
        rep.ratio >= 1.5,
        format!(
            "mean |residual(T)| {:.3e} at dt={} vs {:.3e} at 2dt, ratio {:.2} (x0 = {}, eps = {:.3e}, {} replicates)",
            rep.fine.mean, grid.dt, rep.coarse.mean, rep.ratio, rep.x0, eps, rep.n_replicates
        ),
    )
    .metric("ratio", rep.ratio)
    .metric("fine", rep.fine.mean)
    .metric("coarse", rep.coarse.mean);
    let outcome = Outcome { checks: vec![check], tables: vec![residual] };
    Ok(Produced { outcome, notes: Vec::new(), failed_replicates: rep.failed_replicates, snapshots: Vec::new() })
}
