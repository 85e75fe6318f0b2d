//! A TOML config run end to end: artifacts, manifest, then the rendered report.

use stable_spde::experiment::{render_report, run_experiment, Manifest, RunConfig};

const CONFIG: &str = r#"
seed = 42
output_dir = "target/example-artifacts"
replicates = 20
snapshot_times = [0.01, 0.02]
probes = [[0.0]]

[model]
alpha = 1.5
gamma = 0.75
d = 1

[grid]
box_halfwidth = 6.0
nx = 256
dt = 0.0002
horizon = 0.02

[experiment]
kind = "solve"
checks = ["mass-mean", "mean-measure", "mollifier"]
"#;

fn main() -> stable_spde::Result<()> {
    let cfg = RunConfig::from_toml_str(CONFIG)?;
    let out = run_experiment(&cfg)?;
    for c in &out.report.checks {
        println!("{}", c.line());
    }
    let manifest = Manifest::read(&cfg.output_dir)?;
    for e in &manifest.experiments {
        println!("{}: {} files, config sha256 {}", e.name, e.files.len(), &e.config_sha256[..16]);
    }
    let rep = render_report(&cfg.output_dir)?;
    println!("report: {} rows, {} files, missing {:?}", rep.rows, rep.written.len(), rep.missing);

    // a broken config names its line
    let bad = CONFIG.replace("gamma = 0.75", "gamma = 1.25");
    if let Err(e) = RunConfig::from_toml_str(&bad) {
        println!("rejected: {e}");
    }
    Ok(())
}
