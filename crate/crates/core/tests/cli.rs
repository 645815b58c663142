use std::path::{Path, PathBuf};
use std::process::Command;
use wdm_core::cli::*;
use wdm_core::datasets::{glyph_mi, load_dataset};

const CONFIG: &str = r#"{
  "dataset": {"family": "glyph", "layout": "stacked", "alphabet_sizes": [5], "cell_px": 6, "n_samples": 96, "seed": 0, "jitter": 0.2},
  "axis": "n_characters",
  "axis_values": [1, 3],
  "objectives": ["cpc", "wpc"],
  "seeds": [0, 1],
  "encoder": {"arch": "mlp", "hidden_widths": [16], "repr_dim": 4},
  "train": {"steps": 40, "batch_size": 16, "learning_rate": 0.001, "eval_every": 10}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn strip_wallclock(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn plan_has_one_cell_per_axis_objective_seed() {
    let cfg = SweepConfig::parse(CONFIG).unwrap();
    assert_eq!(cfg.cells().unwrap().len(), 8);
    let full = CONFIG.replace("[5]", "[16]").replace("[1, 3]", "[1, 2, 3, 4]").replace("[0, 1]", "[0, 1, 2]");
    let cells = SweepConfig::parse(&full).unwrap().cells().unwrap();
    assert_eq!(cells.len(), 24);
    for c in &cells {
        assert_eq!(c.mi_certificate, glyph_mi(&vec![16; c.axis_value]));
        assert_eq!(c.encoder.input_shape, [6, 6, c.axis_value]);
    }
}

#[test]
fn invalid_configs_report_a_line() {
    let err = SweepConfig::parse(&CONFIG.replace("\"seeds\": [0, 1]", "\"seeds\": []")).unwrap_err().to_string();
    assert!(err.contains("line 6") && err.contains("seeds"), "{err}");
    let err = SweepConfig::parse(&CONFIG.replace("\"axis_values\": [1, 3],", "\"axis_values\": [1, 3]")).unwrap_err();
    assert!(err.to_string().contains("line 5"), "{err}");
    let err = SweepConfig::parse(&CONFIG.replace("\"cpc\", \"wpc\"", "\"nce\"")).unwrap_err();
    assert!(err.to_string().contains("line 5"), "{err}");
    let err = SweepConfig::parse(&CONFIG.replace("\"repr_dim\": 4", "\"repr_dim\": 1")).unwrap_err();
    assert!(err.to_string().contains("line 7"), "{err}");
}

#[test]
fn sweep_is_deterministic_and_reportable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SweepConfig::parse(CONFIG).unwrap();
    let a = run_sweep(&cfg, &tmp.path().join("a")).unwrap();
    let b = run_sweep(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(a.rows, 8);
    assert!(a.failures.is_empty());
    let (ca, cb) = (std::fs::read_to_string(&a.csv_path).unwrap(), std::fs::read_to_string(&b.csv_path).unwrap());
    assert_eq!(ca.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(strip_wallclock(&ca), strip_wallclock(&cb));
    assert!(a.plot_path.exists());

    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&a.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest.cells.len(), 8);
    assert_eq!(manifest.dataset_sizes.get(&3), Some(&96));
    for row in read_rows(&a.csv_path).unwrap() {
        assert!((row.mi_certificate - glyph_mi(&vec![5; row.axis])).abs() < 1e-9);
        assert_eq!(row.per_factor_accuracies.len(), row.axis);
    }

    // Plots are regenerated from the CSV alone.
    std::fs::remove_file(&a.plot_path).unwrap();
    let rep = report(&[a.csv_path.clone()], None, None).unwrap();
    assert!(rep.plot_paths.iter().all(|p| p.exists()));
    assert!(rep.markdown.contains("yes (n = 96)"), "{}", rep.markdown);
    assert!(rep.markdown.contains("no (n = 96)"));
}

#[test]
fn report_statistics_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let header = CSV_HEADER.join(",");
    let one = write(tmp.path(), "one.csv", &format!("{header}\n3,cpc,0,8.317766,4.0,0.8125,0.75;0.8;0.8875,1.5\n"));
    let cells = aggregate(&read_rows(&one).unwrap());
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].mean_accuracy, 0.8125);
    assert_eq!(cells[0].std_accuracy, 0.0);

    // exp(ln 4096) = 4096 > 1024.
    let rep = report(&[one.clone()], Some(tmp.path()), Some(1024)).unwrap();
    assert!(rep.markdown.contains("yes (n = 1024)"));
    assert!(exceeds_dataset_size(4096f64.ln() + 1e-9, 1024));
    assert!(!exceeds_dataset_size(1000f64.ln(), 1024));
    let nine = glyph_mi(&[55, 52, 48, 47, 46, 43, 42, 41, 41]);
    assert!(exceeds_dataset_size(nine, 50_000) && exceeds_dataset_size(nine, 1_000_000_000));

    let bad = write(tmp.path(), "bad.csv", "axis,objective,seed\n1,cpc,0\n");
    assert!(report(&[one, bad], Some(tmp.path()), None).is_err());
}

#[test]
fn binary_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sweep.json", &CONFIG.replace("[0, 1]", "[0]"));
    let bin = env!("CARGO_BIN_EXE_wdm");
    let dry = Command::new(bin).args(["run-sweep"]).arg(&cfg).args(["--dry-run", "--seeds", "3,4"]).output().unwrap();
    assert!(dry.status.success());
    let plan = String::from_utf8_lossy(&dry.stdout);
    assert!(plan.contains("8 cells"), "{plan}");
    assert!(!tmp.path().join("out").exists());

    let out = tmp.path().join("out");
    let run = Command::new(bin).args(["run-sweep"]).arg(&cfg).arg("--out-dir").arg(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rep = Command::new(bin).arg("report").arg(out.join("sweep.csv")).output().unwrap();
    assert!(rep.status.success());
    assert!(String::from_utf8_lossy(&rep.stdout).contains("| sweep | 3 | wpc |"));
    assert!(out.join("report.md").exists());

    let bad = write(tmp.path(), "bad.json", &CONFIG.replace("\"seeds\": [0, 1]", "\"seeds\": []"));
    let fail = Command::new(bin).arg("run-sweep").arg(&bad).output().unwrap();
    assert!(!fail.status.success());
    assert!(String::from_utf8_lossy(&fail.stderr).contains("line 6"));

    let spec = write(
        tmp.path(),
        "spec.json",
        r#"{"family": "glyph", "layout": "spatial", "alphabet_sizes": [55, 52], "grid": [1, 2], "cell_px": 8, "n_samples": 10, "seed": 1}"#,
    );
    let archive = tmp.path().join("d.wdm");
    let gen = Command::new(bin).arg("generate-dataset").arg(&spec).arg(&archive).output().unwrap();
    assert!(gen.status.success());
    let (header, data) = load_dataset(&archive).unwrap();
    assert!((header.mi_certificate - 2860f64.ln()).abs() < 1e-12);
    assert_eq!(data.image_shape, [8, 16, 1]);
}
