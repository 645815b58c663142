use super::sweep::{Manifest, CSV_HEADER};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: usize,
    pub objective: String,
    pub seed: u64,
    pub mi_certificate: f64,
    pub final_mi_estimate: f64,
    pub mean_probe_accuracy: f64,
    pub per_factor_accuracies: Vec<f64>,
    pub wallclock_s: f64,
}

/// Mean and spread over seeds of one `(axis, objective)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub axis: usize,
    pub objective: String,
    pub n_seeds: usize,
    pub mi_certificate: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_mi_estimate: f64,
    pub std_mi_estimate: f64,
    pub dataset_size: Option<usize>,
}

impl CellSummary {
    /// `exp(MI) > n`, compared in log space; `None` when the size is unknown.
    pub fn flagged(&self) -> Option<bool> {
        self.dataset_size.map(|n| exceeds_dataset_size(self.mi_certificate, n))
    }
}

pub fn exceeds_dataset_size(mi_certificate: f64, n: usize) -> bool {
    mi_certificate > (n as f64).ln()
}

fn parse<T: std::str::FromStr>(field: &str, name: &str, line: u64) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Format(format!("line {line}: bad {name} value {field:?}")))
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Format(format!(
            "{}: header {:?} does not match the sweep schema {:?}",
            path.display(),
            header,
            CSV_HEADER
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let per_factor = if rec[6].is_empty() {
            Vec::new()
        } else {
            rec[6].split(';').map(|v| parse(v, "per_factor_accuracies", line)).collect::<Result<_>>()?
        };
        rows.push(SweepRow {
            axis: parse(&rec[0], "axis", line)?,
            objective: rec[1].to_string(),
            seed: parse(&rec[2], "seed", line)?,
            mi_certificate: parse(&rec[3], "mi_certificate", line)?,
            final_mi_estimate: parse(&rec[4], "final_mi_estimate", line)?,
            mean_probe_accuracy: parse(&rec[5], "mean_probe_accuracy", line)?,
            per_factor_accuracies: per_factor,
            wallclock_s: parse(&rec[7], "wallclock_s", line)?,
        });
    }
    Ok(rows)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by `(axis, objective)` in order of first appearance.
pub fn aggregate(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, String), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.axis, r.objective.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let acc: Vec<f64> = g.iter().map(|r| r.mean_probe_accuracy).collect();
            let mi: Vec<f64> = g.iter().map(|r| r.final_mi_estimate).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            let (mean_mi_estimate, std_mi_estimate) = mean_std(&mi);
            CellSummary {
                axis: key.0,
                objective: key.1,
                n_seeds: g.len(),
                mi_certificate: g[0].mi_certificate,
                mean_accuracy,
                std_accuracy,
                mean_mi_estimate,
                std_mi_estimate,
                dataset_size: None,
            }
        })
        .collect()
}

fn sizes_from_manifest(csv: &Path) -> Option<BTreeMap<usize, usize>> {
    let path = csv.parent()?.join("manifest.json");
    let text = std::fs::read_to_string(path).ok()?;
    let manifest: Manifest = serde_json::from_str(&text).ok()?;
    Some(manifest.dataset_sizes)
}

pub struct ReportOutcome {
    pub markdown: String,
    pub markdown_path: PathBuf,
    pub plot_paths: Vec<PathBuf>,
}

/// Summarizes sweep CSVs into a markdown table and regenerates their plots.
///
/// Dataset sizes for the `exp(MI) > n` flag come from `dataset_size` when
/// given, otherwise from a `manifest.json` beside each CSV.
pub fn report(csv_paths: &[PathBuf], out_dir: Option<&Path>, dataset_size: Option<usize>) -> Result<ReportOutcome> {
    if csv_paths.is_empty() {
        return Err(Error::Config("no CSV files given".into()));
    }
    let out_dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => csv_paths[0].parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&out_dir)?;
    let mut md = String::from("| source | axis | objective | seeds | MI (nats) | accuracy | MI estimate | exp(MI) > n |\n");
    md.push_str("|---|---:|---|---:|---:|---|---|---|\n");
    let mut plot_paths = Vec::new();
    for path in csv_paths {
        let rows = read_rows(path)?;
        let sizes = sizes_from_manifest(path);
        let mut cells = aggregate(&rows);
        for c in &mut cells {
            c.dataset_size = dataset_size.or_else(|| sizes.as_ref().and_then(|s| s.get(&c.axis).copied()));
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
        for c in &cells {
            let flag = match (c.flagged(), c.dataset_size) {
                (Some(true), Some(n)) => format!("yes (n = {n})"),
                (Some(false), Some(n)) => format!("no (n = {n})"),
                _ => "unknown".into(),
            };
            let _ = writeln!(
                md,
                "| {stem} | {} | {} | {} | {:.3} | {:.4} ± {:.4} | {:.3} ± {:.3} | {flag} |",
                c.axis, c.objective, c.n_seeds, c.mi_certificate, c.mean_accuracy, c.std_accuracy, c.mean_mi_estimate,
                c.std_mi_estimate
            );
        }
        let plot = out_dir.join(format!("{stem}_accuracy.png"));
        super::plot::accuracy_plot(&cells, &plot)?;
        plot_paths.push(plot);
    }
    let markdown_path = out_dir.join("report.md");
    std::fs::write(&markdown_path, &md)?;
    Ok(ReportOutcome { markdown: md, markdown_path, plot_paths })
}
