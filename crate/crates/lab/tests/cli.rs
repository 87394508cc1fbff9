use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plasticity_lab::config::RunConfig;
use plasticity_lab::formats::Table;
use plasticity_lab::run::{read_records, CONFIG_FILE, METRICS_FILE, RECORDS_FILE};
use tempfile::TempDir;

const SYNTHETIC: &str = "\
# tiny synthetic stream
environment = synthetic
layer_dims = 20,16,16,5
num_tasks = 3
steps_per_task = 40
samples_per_task = 200
eval_size = 100
compute_hessian_interval = 1
";

fn plab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plab")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = plab(args);
    assert!(out.status.success(), "plab {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.txt");
    fs::write(&p, text).unwrap();
    p
}

fn run_synthetic(tmp: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let cfg = write_config(tmp.path(), SYNTHETIC);
    let out = tmp.path().join(name);
    let mut args = vec!["run", s(&cfg), "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn minimal_synthetic_run_writes_three_files() {
    let tmp = TempDir::new().unwrap();
    let out = run_synthetic(&tmp, "r", &[]);
    let mut files: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files, [CONFIG_FILE, METRICS_FILE, RECORDS_FILE]);
    let records = read_records(&out.join(RECORDS_FILE)).unwrap();
    assert_eq!(records.iter().map(|r| r.task).collect::<Vec<_>>(), [0, 1, 2]);
    assert!(records.iter().all(|r| r.eps_rank.is_some() && r.eval_acc > 0.2));
    let metrics = fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 4);
}

#[test]
fn config_snapshot_round_trips() {
    let tmp = TempDir::new().unwrap();
    let out = run_synthetic(&tmp, "r", &["--set", "lr=0.05", "--set", "agent=l2_er"]);
    let snap = RunConfig::parse(&fs::read_to_string(out.join(CONFIG_FILE)).unwrap()).unwrap();
    let mut want = RunConfig::parse(SYNTHETIC).unwrap();
    want.set("lr", "0.05").unwrap();
    want.set("agent", "l2_er").unwrap();
    want.output_dir = out.clone();
    assert_eq!(snap, want);
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let a = run_synthetic(&tmp, "a", &[]);
    let first = fs::read(a.join(METRICS_FILE)).unwrap();
    let records = fs::read(a.join(RECORDS_FILE)).unwrap();
    run_synthetic(&tmp, "a", &[]);
    assert_eq!(fs::read(a.join(METRICS_FILE)).unwrap(), first);
    assert_eq!(fs::read(a.join(RECORDS_FILE)).unwrap(), records);
}

#[test]
fn resume_continues_at_the_interrupted_task() {
    let tmp = TempDir::new().unwrap();
    let full = run_synthetic(&tmp, "full", &[]);
    let part = run_synthetic(&tmp, "part", &["--stop-after-task", "0"]);
    assert_eq!(read_records(&part.join(RECORDS_FILE)).unwrap().len(), 1);
    let cfg = tmp.path().join("run.txt");
    ok(&["run", s(&cfg), "--out", s(&part), "--resume"]);
    let resumed = read_records(&part.join(RECORDS_FILE)).unwrap();
    assert_eq!(resumed.iter().map(|r| r.task).collect::<Vec<_>>(), [0, 1, 2]);
    assert_eq!(resumed, read_records(&full.join(RECORDS_FILE)).unwrap());
    assert_eq!(fs::read(part.join(METRICS_FILE)).unwrap(), fs::read(full.join(METRICS_FILE)).unwrap());
}

#[test]
fn parallel_seeds_get_their_own_directories() {
    let tmp = TempDir::new().unwrap();
    let out = run_synthetic(&tmp, "seeds", &["--set", "n_seeds=2", "--parallel-seeds", "2"]);
    for seed in ["seed_0", "seed_1"] {
        assert_eq!(read_records(&out.join(seed).join(RECORDS_FILE)).unwrap().len(), 3);
    }
    let a = fs::read(out.join("seed_0").join(METRICS_FILE)).unwrap();
    let b = fs::read(out.join("seed_1").join(METRICS_FILE)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "environment = synthetic\nnum_tasks = three\n");
    let out = plab(&["run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let cfg = write_config(tmp.path(), "learning_rate = 0.1\n");
    assert_eq!(plab(&["run", s(&cfg)]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), SYNTHETIC);
    assert_eq!(plab(&["run", s(&cfg), "--set", "lr=-1"]).status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("environment = permuted_mnist\ndata_dir = {}\n", tmp.path().join("nothing").display()),
    );
    let out = Command::new(env!("CARGO_BIN_EXE_plab"))
        .args(["run", s(&cfg), "--out", s(&tmp.path().join("r"))])
        .env_remove("PLAB_DATA")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(plab(&["run", s(&tmp.path().join("absent.txt"))]).status.code(), Some(3));
    assert_eq!(plab(&["plot", s(&tmp.path().join("absent"))]).status.code(), Some(3));
    assert_eq!(plab(&["spectrum", s(&tmp.path().join("absent.json"))]).status.code(), Some(3));
}

#[test]
fn plot_of_a_three_task_run() {
    let tmp = TempDir::new().unwrap();
    let run = run_synthetic(&tmp, "r", &[]);
    let fig = tmp.path().join("fig");
    ok(&["plot", s(&run), "--out", s(&fig)]);
    let acc = fs::read_to_string(fig.join("accuracy.svg")).unwrap();
    assert!(acc.starts_with("<svg") && acc.contains("<polyline"));
    let scatter = fs::read_to_string(fig.join("eps_rank_vs_accuracy.svg")).unwrap();
    assert!(scatter.contains("linear fit") && scatter.contains("stroke-dasharray"));
}

#[test]
fn toy_outputs_and_contours() {
    let tmp = TempDir::new().unwrap();
    let toy = tmp.path().join("toy");
    let summary = ok(&["toy", "--set", "toy_raster_points=41", "--out", s(&toy)]);
    assert!(summary.contains("curvreg_task2_steps"));
    for f in ["toy_gd.csv", "toy_curvreg.csv", "raster_task1.csv", "raster_task2.csv"] {
        assert!(toy.join(f).exists(), "{f}");
    }
    let raster = Table::read(&toy.join("raster_task1.csv")).unwrap();
    assert_eq!(raster.rows.len(), 41 * 41);
    let loss: Vec<f64> = raster.column("loss").unwrap().into_iter().map(Option::unwrap).collect();
    let lo = loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = loss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fig = tmp.path().join("fig");
    ok(&["plot", s(&toy), "--out", s(&fig)]);
    let svg = fs::read_to_string(fig.join("toy_task1.svg")).unwrap();
    assert!(svg.contains(&format!("loss min {lo:.4}")), "min {lo}");
    assert!(svg.contains(&format!("loss max {hi:.4}")), "max {hi}");
    assert!(svg.contains("<line"));
}

#[test]
fn spectrum_and_diagnose_from_a_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let run = run_synthetic(&tmp, "r", &[]);
    let ckpt = run.join("checkpoints/latest.json");
    let sp = tmp.path().join("sp");
    let text = ok(&["spectrum", s(&ckpt), "--steps", "40", "--probes", "4", "--exact", "--out", s(&sp)]);
    let field = |name: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(field("params"), (20 * 16 + 16 + 16 * 16 + 16 + 16 * 5 + 5) as f64);
    assert!(field("exact_eps_rank") >= 0.0 && field("slq_eps_rank") >= 0.0);
    for f in ["density", "ritz", "exact_density"] {
        assert!(sp.join(format!("spectrum_task_0002_{f}.csv")).exists());
    }

    let dg = tmp.path().join("dg");
    let text = ok(&["diagnose", s(&ckpt), "--task", "1", "--exact-rank", "--out", s(&dg)]);
    let field = |name: &str| -> usize {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(field("hessian_rank") <= field("hessian_rank_bound"));
    assert!(text.contains("guaranteed_dead_next_task"));
    assert!(dg.join("dead_task_0001.csv").exists());
    assert_eq!(plab(&["diagnose", s(&ckpt), "--task", "9"]).status.code(), Some(2));
}
