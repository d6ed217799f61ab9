use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{BenchError, ExperimentPlan, RunReport};
use crate::physlab::NoiseSpec;

/// Paths written by [`render_tables`]; optional tables are `None` when the
/// plan has no matching axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TableFiles {
    pub reports: PathBuf,
    pub timings: PathBuf,
    pub benchmark: Option<PathBuf>,
    pub prompt: Option<PathBuf>,
    pub noise: Option<PathBuf>,
    pub summary: PathBuf,
}

/// Three decimals, or `NA` when the metric is missing.
pub fn format_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

struct Row {
    labels: Vec<String>,
    mae: Option<f64>,
    mse: Option<f64>,
    r2: Option<f64>,
    tree_score: Option<f64>,
    runs: usize,
    failures: usize,
}

impl Row {
    fn aggregate(labels: Vec<String>, reports: &[&RunReport]) -> Self {
        let ok: Vec<&&RunReport> = reports.iter().filter(|r| r.ok()).collect();
        let med =
            |f: fn(&RunReport) -> Option<f64>| median(ok.iter().filter_map(|r| f(r)).collect());
        Row {
            labels,
            mae: med(|r| r.mae),
            mse: med(|r| r.mse),
            r2: med(|r| r.r2),
            tree_score: med(|r| r.tree_score),
            runs: reports.len(),
            failures: reports.len() - ok.len(),
        }
    }
}

/// Groups in order of first appearance.
fn group_by<'a>(
    reports: &[&'a RunReport],
    key: impl Fn(&RunReport) -> Vec<String>,
) -> Vec<(Vec<String>, Vec<&'a RunReport>)> {
    let mut groups: Vec<(Vec<String>, Vec<&RunReport>)> = Vec::new();
    for r in reports {
        let k = key(r);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    groups
}

/// Max tree score, then min MAE, then first.
fn best_index(rows: &[&Row]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        let Some(ts) = r.tree_score else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let cur = rows[b];
                let cur_ts = cur.tree_score.expect("best has a score");
                ts > cur_ts
                    || (ts == cur_ts
                        && r.mae.unwrap_or(f64::INFINITY) < cur.mae.unwrap_or(f64::INFINITY))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn noise_label(n: &NoiseSpec) -> String {
    format!("{}@{}", n.target.as_str(), n.level)
}

fn write_metric_table(path: &Path, header: &[&str], rows: &[Row]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| BenchError::Io(e.into()))?;
    let mut full: Vec<&str> = header.to_vec();
    full.extend(["mae", "mse", "r2", "tree_score", "runs", "failures"]);
    w.write_record(&full)
        .map_err(|e| BenchError::Io(e.into()))?;
    for r in rows {
        let mut rec = r.labels.clone();
        rec.extend([
            format_metric(r.mae),
            format_metric(r.mse),
            format_metric(r.r2),
            format_metric(r.tree_score),
            r.runs.to_string(),
            r.failures.to_string(),
        ]);
        w.write_record(&rec).map_err(|e| BenchError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Summary lines for `rows` split into groups by their first `group_len`
/// labels; the best row of each group is starred.
fn summarize(out: &mut String, title: &str, rows: &[Row], group_len: usize) {
    let _ = writeln!(
        out,
        "== {title} (* = best in group: max tree_score, then min mae)"
    );
    let mut start = 0;
    while start < rows.len() {
        let key = &rows[start].labels[..group_len];
        let end = rows[start..]
            .iter()
            .position(|r| r.labels[..group_len] != *key)
            .map_or(rows.len(), |p| start + p);
        let group: Vec<&Row> = rows[start..end].iter().collect();
        let best = best_index(&group);
        let _ = writeln!(out, "{}", key.join(" / "));
        for (i, r) in group.iter().enumerate() {
            let mark = if Some(i) == best { '*' } else { ' ' };
            let _ = writeln!(
                out,
                "  {mark} {:<28} mae={} mse={} r2={} tree={}",
                r.labels[group_len..].join(" / "),
                format_metric(r.mae),
                format_metric(r.mse),
                format_metric(r.r2),
                format_metric(r.tree_score)
            );
        }
        start = end;
    }
    out.push('\n');
}

/// Sorts rows so each group is contiguous, keeping first-appearance order.
fn contiguous(rows: Vec<Row>, group_len: usize) -> Vec<Row> {
    let mut order: Vec<Vec<String>> = Vec::new();
    for r in &rows {
        let k = r.labels[..group_len].to_vec();
        if !order.contains(&k) {
            order.push(k);
        }
    }
    let mut rows = rows;
    rows.sort_by_key(|r| {
        order
            .iter()
            .position(|k| *k == r.labels[..group_len])
            .expect("known group")
    });
    rows
}

/// Writes `reports.jsonl`, `timings.csv`, `summary.txt`, and whichever of
/// `benchmark.csv`, `prompt.csv`, `noise.csv` the plan's axes call for.
pub fn render_tables(
    reports: &[RunReport],
    plan: &ExperimentPlan,
    out_dir: &Path,
) -> Result<TableFiles, BenchError> {
    std::fs::create_dir_all(out_dir)?;
    let reports_path = out_dir.join("reports.jsonl");
    let mut w = BufWriter::new(File::create(&reports_path)?);
    for r in reports {
        let line = serde_json::to_string(r).map_err(|e| BenchError::Io(e.into()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;

    let timings_path = out_dir.join("timings.csv");
    let mut t = BufWriter::new(File::create(&timings_path)?);
    writeln!(t, "cell,wall_time_s")?;
    for r in reports {
        writeln!(t, "{},{:.3}", r.cell, r.wall_time)?;
    }
    t.flush()?;

    let mut summary = String::new();
    let baseline: Vec<&RunReport> = if plan.noise_axis.is_empty() {
        reports.iter().collect()
    } else {
        reports
            .iter()
            .filter(|r| r.noise == NoiseSpec::baseline())
            .collect()
    };

    let mut benchmark = None;
    if !baseline.is_empty() {
        let rows: Vec<Row> = group_by(&baseline, |r| {
            vec![
                r.scenario.to_string(),
                r.critic.clone(),
                r.preset.to_string(),
            ]
        })
        .into_iter()
        .map(|(k, g)| Row::aggregate(k, &g))
        .collect();
        let rows = contiguous(rows, 2);
        let path = out_dir.join("benchmark.csv");
        write_metric_table(&path, &["scenario", "critic", "preset"], &rows)?;
        summarize(&mut summary, "benchmark", &rows, 2);
        benchmark = Some(path);
    }

    let mut prompt = None;
    let prompted: Vec<&RunReport> = baseline
        .iter()
        .copied()
        .filter(|r| r.variant.is_some())
        .collect();
    if !prompted.is_empty() {
        let rows: Vec<Row> = group_by(&prompted, |r| {
            vec![
                r.variant.map(|v| v.to_string()).unwrap_or_default(),
                r.critic.clone(),
                r.preset.to_string(),
            ]
        })
        .into_iter()
        .map(|(k, g)| Row::aggregate(k, &g))
        .collect();
        let rows = contiguous(rows, 2);
        let path = out_dir.join("prompt.csv");
        write_metric_table(&path, &["prompt", "critic", "preset"], &rows)?;
        summarize(&mut summary, "prompt sensitivity", &rows, 2);
        prompt = Some(path);
    }

    let mut noise = None;
    if !plan.noise_axis.is_empty() {
        let all: Vec<&RunReport> = reports.iter().collect();
        let columns: Vec<String> = plan.noise_axis.iter().map(noise_label).collect();
        let path = out_dir.join("noise.csv");
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| BenchError::Io(e.into()))?;
        let mut header = vec!["scenario".to_string(), "critic".into(), "preset".into()];
        header.extend(columns.iter().cloned());
        w.write_record(&header)
            .map_err(|e| BenchError::Io(e.into()))?;
        // One row per (scenario, critic, preset, noise) for best marking.
        let mut per_noise: Vec<Row> = Vec::new();
        for (k, g) in group_by(&all, |r| {
            vec![
                r.scenario.to_string(),
                r.critic.clone(),
                r.preset.to_string(),
            ]
        }) {
            let mut rec = k.clone();
            for (col, spec) in columns.iter().zip(&plan.noise_axis) {
                let cell: Vec<&RunReport> =
                    g.iter().copied().filter(|r| r.noise == *spec).collect();
                let row = Row::aggregate(
                    vec![k[0].clone(), col.clone(), k[1].clone(), k[2].clone()],
                    &cell,
                );
                rec.push(format_metric(row.tree_score));
                per_noise.push(row);
            }
            w.write_record(&rec).map_err(|e| BenchError::Io(e.into()))?;
        }
        w.flush()?;
        let rows = contiguous(per_noise, 2);
        summarize(&mut summary, "noise robustness (tree_score)", &rows, 2);
        noise = Some(path);
    }

    let failed: Vec<&RunReport> = reports.iter().filter(|r| !r.ok()).collect();
    let _ = writeln!(
        summary,
        "== runs: {} total, {} failed",
        reports.len(),
        failed.len()
    );
    for r in failed {
        let _ = writeln!(
            summary,
            "  {}: {}",
            r.cell,
            r.failure.as_deref().unwrap_or("")
        );
    }
    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&summary_path, summary)?;

    Ok(TableFiles {
        reports: reports_path,
        timings: timings_path,
        benchmark,
        prompt,
        noise,
        summary: summary_path,
    })
}
