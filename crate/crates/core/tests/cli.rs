use std::path::Path;
use std::process::{Command, Output};

use qchannel::channel::{coherence_from_density, PauliBasis, StinespringModel};
use qchannel::dataset::{Trajectory, TrajectoryDataset};
use qchannel::experiment::{initial_state, ExperimentConfig};
use qchannel::io::{model_to_json, read_trajectories, write_trajectories, Manifest};
use qchannel::trainer::TrainReport;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PERIODIC: &str = r#"
scenario = "periodic_lindblad"
m = 5
r = 2
t_final = 20
seed = 4

[params]
e_z = 1.0
ratio_ex = 0.5
ratio_omega = 1.0
gamma = 0.01

[train]
lr = 0.002
gamma = 0.999
batch_size = 128
n_epochs = 400
d_e = 4
t_min = 1
t_max = 20
seed = 4
"#;

const DEVICE: &str = r#"
scenario = "device_emulation"
m = 2
r = 1
t_final = 20
eval_t_min = 11
seed = 2
init = "alternating"

[params]
v_zz = -0.002
shots_per_basis = 2000
n_subsets = 10

[train]
lr = 0.001
gamma = 0.98
batch_size = 256
n_epochs = 300
d_e = 2
t_min = 11
t_max = 20
seed = 2
"#;

fn qchannel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qchannel"))
        .args(args)
        .env_remove("QCHANNEL_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qchannel(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_counts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "periodic.toml", PERIODIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--config", &cfg, "--out", s(&a)]);
    ok(&["simulate", "--config", &cfg, "--out", s(&b)]);

    let train = read_trajectories(&std::fs::read_to_string(a.join("train.csv")).unwrap()).unwrap();
    let val = read_trajectories(&std::fs::read_to_string(a.join("validation.csv")).unwrap()).unwrap();
    assert_eq!(train.len(), 5);
    assert_eq!(val.len(), 2);
    for tr in train.trajectories.iter().chain(&val.trajectories) {
        assert_eq!(tr.times, (1..=20).collect::<Vec<_>>());
    }
    for name in ["config.toml", "train.csv", "validation.csv", "simulate.manifest.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(a.join("simulate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.data_seed, 4);
    assert_eq!(manifest.files.len(), 3);
}

#[test]
fn flag_overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "periodic.toml", PERIODIC);
    let out = dir.path().join("o");
    ok(&["simulate", "--config", &cfg, "--out", s(&out), "--m", "3", "--seed", "11", "--d-e", "2"]);
    let written = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!((written.m, written.seed, written.train.seed, written.train.d_e), (3, 11, 11, 2));
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fig.toml", PERIODIC);
    let root = dir.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_qchannel"))
        .args(["simulate", "--config", &cfg])
        .env("QCHANNEL_OUT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("fig").join("train.csv").exists());
}

#[test]
fn circuit_initial_rows_are_the_sampled_states() {
    let text = PERIODIC
        .replace("periodic_lindblad", "circuit_subsystem")
        .replace(
            "e_z = 1.0\nratio_ex = 0.5\nratio_omega = 1.0\ngamma = 0.01",
            "n_qubits = 14\nphi_x = 0.5\nphi_nn = 1.0\nsubsystem = 6",
        )
        .replace("m = 5", "m = 30")
        .replace("t_final = 20", "t_final = 3")
        .replace("t_max = 20", "t_max = 3")
        .replace("d_e = 4", "d_e = 16");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "circuit.toml", &text);
    let out = dir.path().join("c");
    ok(&["simulate", "--config", &cfg_path, "--out", s(&out)]);
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let train = read_trajectories(&std::fs::read_to_string(out.join("train.csv")).unwrap()).unwrap();
    assert_eq!(train.len(), 30);
    let basis = PauliBasis::new(2);
    for tr in &train.trajectories {
        let expected = coherence_from_density(&initial_state(&cfg, tr.id), &basis).unwrap();
        assert_eq!(tr.initial, expected, "trajectory {}", tr.id);
    }
}

#[test]
fn train_evaluate_and_report_on_exact_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "periodic.toml", PERIODIC);
    let out = dir.path().join("run");
    ok(&["simulate", "--config", &cfg, "--out", s(&out)]);
    ok(&["train", "--out", s(&out)]);
    let report: TrainReport = serde_json::from_str(&std::fs::read_to_string(out.join("train_report.json")).unwrap()).unwrap();
    assert_eq!(report.phases.len(), 1);
    assert_eq!(report.phases[0].losses.len(), 400);
    assert_eq!(report.phases[0].config.lr, 0.002);

    let stdout = ok(&["evaluate", "--out", s(&out)]);
    assert!(stdout.contains("epsilon"));
    let predictions = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert!(predictions.starts_with("trajectory_id,t,observable,exact,predicted,band_lo,band_hi\n"));
    // Two trajectories, 20 times, three components plus purity.
    assert_eq!(predictions.lines().count(), 1 + 2 * 20 * 4);

    let md = ok(&["report", "--out", s(&out)]);
    assert!(md.contains("## Training") && md.contains("## Evaluation"));
    let losses = std::fs::read_to_string(out.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 401);
}

#[test]
fn shot_data_selects_the_two_phase_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "device.toml", DEVICE);
    let out = dir.path().join("dev");
    ok(&["simulate", "--config", &cfg, "--out", s(&out)]);
    assert!(out.join("train_shots.csv").exists() && out.join("validation_shots.csv").exists());
    ok(&["train", "--out", s(&out)]);
    let report: TrainReport = serde_json::from_str(&std::fs::read_to_string(out.join("train_report.json")).unwrap()).unwrap();
    assert_eq!(report.phases.len(), 2);
    assert_eq!(report.phases[0].losses.len(), 300);
    assert_eq!(report.phases[1].losses.len(), 300);
    assert_eq!(report.phases[0].config.gamma, 1.0);
    assert_eq!(report.phases[1].config.gamma, 0.98);

    ok(&["evaluate", "--out", s(&out)]);
    let predictions = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    let zz = predictions.lines().find(|l| l.contains(",pearson_zz,")).unwrap();
    let cols: Vec<f64> = zz.split(',').skip(3).map(|x| x.parse().unwrap()).collect();
    assert!(cols[2] < cols[0] && cols[0] < cols[3], "band brackets the data: {zz}");
}

#[test]
fn corrupt_row_is_a_data_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "periodic.toml", PERIODIC);
    let out = dir.path().join("run");
    ok(&["simulate", "--config", &cfg, "--out", s(&out)]);
    let path = out.join("train.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let bad = lines.iter().position(|l| l.starts_with("0,3,")).unwrap();
    lines[bad] = lines[bad].replacen(",", ",x", 2);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let res = qchannel(&["train", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(&format!("line {}", bad + 1)), "{err}");
}

#[test]
fn missing_times_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "periodic.toml", PERIODIC);
    let out = dir.path().join("run");
    ok(&["simulate", "--config", &cfg, "--out", s(&out)]);
    let model = StinespringModel::identity(2, 1);
    std::fs::write(out.join("model.json"), model_to_json(&model)).unwrap();
    let res = qchannel(&["evaluate", "--out", s(&out), "--t-max", "22"]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("t=21") && err.contains("t=22"), "{err}");
}

#[test]
fn perfect_model_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let model = StinespringModel::random(2, 2, 0.4, &mut ChaCha8Rng::seed_from_u64(3));
    let basis = PauliBasis::new(1);
    let t = model.transfer_matrix(&basis).unwrap();
    let trajs = (0..4)
        .map(|i| {
            let rho = qchannel::channel::haar_random_pure_qubit(i);
            Trajectory::from_transfer(i as usize, &t, coherence_from_density(&rho, &basis).unwrap(), 10)
        })
        .collect();
    let ds = TrajectoryDataset::new(2, trajs).unwrap();
    std::fs::write(dir.path().join("validation.csv"), write_trajectories(&ds)).unwrap();
    std::fs::write(dir.path().join("model.json"), model_to_json(&model)).unwrap();
    ok(&["evaluate", "--out", s(dir.path())]);
    let eval: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("evaluation.json")).unwrap()).unwrap();
    assert!(eval["epsilon"].as_f64().unwrap() <= 1e-28, "{eval}");
}

#[test]
fn exit_codes_for_config_and_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", &PERIODIC.replace("d_e = 4", "d_e = 9"));
    assert_eq!(qchannel(&["simulate", "--config", &bad]).status.code(), Some(2));
    assert_eq!(qchannel(&["simulate"]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "periodic.toml", PERIODIC);
    let out = dir.path().join("run");
    ok(&["simulate", "--config", &cfg, "--out", s(&out)]);
    let path = out.join("train.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let poisoned: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with("0,1,") {
                let mut cols: Vec<&str> = l.split(',').collect();
                cols[3] = "1e4";
                cols.join(",")
            } else {
                l.to_string()
            }
        })
        .collect();
    std::fs::write(&path, poisoned.join("\n") + "\n").unwrap();
    let res = qchannel(&["train", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("train_report.json").exists());
}

#[test]
fn floquet_scan_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let verdicts = |csv: &str| -> Vec<String> {
        csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().to_string()).collect()
    };
    assert_eq!(verdicts(&ok(&["floquet-scan", "--out", out, "--ex", "0.5:0.5:1", "--omega", "1:1:1"])), ["exists"]);
    assert_eq!(verdicts(&ok(&["floquet-scan", "--out", out, "--transpose"])), ["absent"]);
    // Without drive the one-period map is the exponential of a fixed
    // Lindbladian.
    assert_eq!(verdicts(&ok(&["floquet-scan", "--out", out, "--ex", "0:0:1", "--omega", "0.7:0.7:1"])), ["exists"]);
    let grid = ok(&["floquet-scan", "--out", out, "--ex", "0.1:1.5:3", "--omega", "0.1:2:4"]);
    assert_eq!(grid.lines().count(), 13);
    assert_eq!(std::fs::read_to_string(dir.path().join("floquet.csv")).unwrap(), grid);
}

#[test]
fn fit_zz_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let text = DEVICE.replace("m = 2", "m = 6").replace("shots_per_basis = 2000", "shots_per_basis = 20000");
    let cfg = write_config(dir.path(), "device.toml", &text);
    let out = dir.path().join("dev");
    ok(&["simulate", "--config", &cfg, "--out", s(&out)]);
    let stdout = ok(&["fit-zz", "--out", s(&out), "--per-trajectory", "--pairs", "xx,yy,zz,xy,yx"]);
    assert!(stdout.starts_with("V = "));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("zz_fit.json")).unwrap()).unwrap();
    let v = report["joint"]["v"].as_f64().unwrap();
    assert!(v > -0.003 && v < -0.001, "{v}");
    assert_eq!(report["per_trajectory"].as_array().unwrap().len(), 6);
    assert_eq!((report["t_min"].as_u64(), report["t_max"].as_u64()), (Some(11), Some(20)));

    let res = qchannel(&["fit-zz", "--out", s(&out), "--pairs", "xq"]);
    assert_eq!(res.status.code(), Some(2));
}
