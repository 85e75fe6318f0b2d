//! Static report over an artifact directory: a summary table plus SVG plots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};

use super::Manifest;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOutcome {
    /// Rows of the summary table, one per check.
    pub rows: usize,
    /// Tables or summaries that were expected but absent.
    pub missing: Vec<String>,
    pub written: Vec<PathBuf>,
}

type Series = (String, Vec<(f64, f64)>);

fn read_columns(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(header.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(out)
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

fn line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |a: f64, b: f64| if b > a { 0.05 * (b - a) } else { 0.5 };
    let (px, py) = (pad(x0, x1), pad(y0, y1));
    let plot_err = |e: String| Error::Io(std::io::Error::other(e));
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d((x0 - px)..(x1 + px), (y0 - py)..(y1 + py))
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    for (i, (label, data)) in series.iter().enumerate() {
        let colour = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(data.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()), colour))
            .map_err(|e| plot_err(e.to_string()))?
            .label(label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], colour));
    }
    if !series.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(e.to_string()))?;
    }
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

fn moment_plot(table: &Path, out: &Path) -> Result<()> {
    let rows = read_columns(table)?;
    let sim: Vec<(f64, f64)> = rows.iter().map(|r| (num(r, "time").ln(), num(r, "mean").ln())).collect();
    let heat: Vec<(f64, f64)> = rows.iter().map(|r| (num(r, "time").ln(), num(r, "heat_term").ln())).collect();
    line_plot(out, "moment curve", "log t", "log E Y^q", &[("simulated".into(), sim), ("heat flow".into(), heat)])
}

fn residual_plot(table: &Path, out: &Path) -> Result<()> {
    let rows = read_columns(table)?;
    let pick = |g: &str| -> Vec<(f64, f64)> {
        rows.iter().filter(|r| r["grid"] == g).map(|r| (num(r, "time"), num(r, "mean_abs_residual"))).collect()
    };
    line_plot(out, "boundary identity residual", "t", "mean |residual|", &[("dt".into(), pick("fine")), ("2 dt".into(), pick("coarse"))])
}

/// One plot per curve of a support sweep; returns the files written.
fn radius_plots(table: &Path, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let rows = read_columns(table)?;
    let mut curves: BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for r in &rows {
        if r["metric"] == "zero-beyond" {
            continue;
        }
        let key = if r["metric"] == "threshold" { "threshold".to_string() } else { format!("mass {}", r["fraction"]) };
        curves.entry(r["curve"].clone()).or_default().entry(key).or_default().push((num(r, "time"), num(r, "value")));
    }
    let control: Vec<(f64, f64)> = curves
        .get("zero-noise control")
        .and_then(|c| c.get("threshold"))
        .cloned()
        .unwrap_or_default();
    let mut written = Vec::new();
    for (label, metrics) in &curves {
        if label == "zero-noise control" {
            continue;
        }
        let mut series: Vec<Series> = metrics.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        series.push(("control threshold".into(), control.clone()));
        let file = dir.join(format!("{prefix}_radius_{}.svg", label.replace(['=', ' '], "_")));
        line_plot(&file, &format!("support radii, {label}"), "t", "radius", &series)?;
        written.push(file);
    }
    Ok(written)
}

fn csv_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Renders `report/` inside an artifact directory. Missing tables are listed and skipped.
pub fn render_report(dir: &Path) -> Result<ReportOutcome> {
    let manifest = Manifest::read(dir)
        .map_err(|e| Error::Config(format!("{} has no readable manifest.json: {e}", dir.display())))?;
    let out = dir.join("report");
    if out.exists() {
        fs::remove_dir_all(&out)?;
    }
    fs::create_dir_all(&out)?;
    let mut outcome = ReportOutcome::default();
    let mut md = String::from("| experiment | check | result | detail |\n|---|---|---|---|\n");
    let mut table = csv::Writer::from_path(out.join("summary.csv"))?;
    table.write_record(["experiment", "check", "result", "detail"])?;
    for e in &manifest.experiments {
        let edir = dir.join(&e.name);
        match fs::read_to_string(edir.join("summary.json")) {
            Ok(text) => {
                let rep: DiagnosticsReport = serde_json::from_str(&text)?;
                for c in &rep.checks {
                    let result = if c.passed { "PASS" } else { "FAIL" };
                    md.push_str(&format!("| {} | {} | {result} | {} |\n", e.name, csv_escape(&c.name), csv_escape(&c.detail)));
                    table.write_record([e.name.as_str(), c.name.as_str(), result, c.detail.as_str()])?;
                    outcome.rows += 1;
                }
            }
            Err(_) => outcome.missing.push(format!("{}/summary.json", e.name)),
        }
        let expected: &[&str] = match e.kind.as_str() {
            "sweep" => &["radii.csv"],
            "boundary" => &["residual.csv"],
            _ => &[],
        };
        for f in expected {
            if !edir.join(f).exists() {
                outcome.missing.push(format!("{}/{f}", e.name));
            }
        }
        if edir.join("moments.csv").exists() {
            let file = out.join(format!("{}_moments.svg", e.name));
            moment_plot(&edir.join("moments.csv"), &file)?;
            outcome.written.push(file);
        }
        if edir.join("radii.csv").exists() {
            outcome.written.extend(radius_plots(&edir.join("radii.csv"), &out, &e.name)?);
        }
        if edir.join("residual.csv").exists() {
            let file = out.join(format!("{}_residual.svg", e.name));
            residual_plot(&edir.join("residual.csv"), &file)?;
            outcome.written.push(file);
        }
    }
    table.flush()?;
    if !outcome.missing.is_empty() {
        md.push_str("\nMissing:\n");
        for m in &outcome.missing {
            md.push_str(&format!("- {m}\n"));
        }
    }
    fs::write(out.join("summary.md"), md)?;
    outcome.written.push(out.join("summary.md"));
    outcome.written.push(out.join("summary.csv"));
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_experiment, Experiment, GridConfig, RunConfig};

    #[test]
    fn empty_manifest_gives_zero_rows() {
        let tmp = tempfile::tempdir().unwrap();
        Manifest::empty().write(tmp.path()).unwrap();
        let o = render_report(tmp.path()).unwrap();
        assert_eq!(o.rows, 0);
        assert!(o.missing.is_empty());
        let md = fs::read_to_string(tmp.path().join("report/summary.md")).unwrap();
        assert_eq!(md.lines().count(), 2);
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(render_report(tmp.path()).is_err());
    }

    #[test]
    fn sweep_gets_one_plot_per_gamma_and_rerender_is_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(
            3,
            tmp.path(),
            Experiment::Sweep {
                gammas: vec![0.75, 1.0],
                record_times: vec![0.01, 0.02],
                mass_fractions: vec![0.9],
                tau_supp: 1e-12,
                beyond_radius: 2.0,
            },
        );
        cfg.replicates = 2;
        cfg.grid = GridConfig { box_halfwidth: 4.0, nx: 64, dt: 1e-3, horizon: 0.02 };
        run_experiment(&cfg).unwrap();
        let first = render_report(tmp.path()).unwrap();
        let plots: Vec<_> = first.written.iter().filter(|p| p.to_string_lossy().contains("_radius_")).collect();
        assert_eq!(plots.len(), 2);
        assert_eq!(first.rows, 1);
        let bytes: Vec<Vec<u8>> = first.written.iter().map(|p| fs::read(p).unwrap()).collect();
        let second = render_report(tmp.path()).unwrap();
        assert_eq!(first.written, second.written);
        for (p, b) in second.written.iter().zip(&bytes) {
            assert_eq!(&fs::read(p).unwrap(), b, "{}", p.display());
        }
        fs::remove_file(tmp.path().join("sweep/radii.csv")).unwrap();
        let partial = render_report(tmp.path()).unwrap();
        assert_eq!(partial.missing, ["sweep/radii.csv"]);
        assert_eq!(partial.rows, 1);
    }
}
