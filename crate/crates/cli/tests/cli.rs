use std::path::Path;
use std::process::{Command, Output};

use photon_lattice_cli::output::RunManifest;
use photon_lattice_cli::settings::Settings;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_photon-lattice"))
}

fn run_bin(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("PHOTON_LATTICE_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::read(&dir.join("manifest.json")).unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn quick_sweep_args(out: &Path) -> Vec<String> {
    [
        "sweep",
        "--sites",
        "4:10:3",
        "--u",
        "1",
        "--p",
        "4",
        "--realizations",
        "3",
        "--transient",
        "20",
        "--window",
        "10",
        "--seed",
        "7",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

#[test]
fn simulate_stable_reference_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run1");
    let code = photon_lattice_cli::run([
        "photon-lattice",
        "simulate",
        "--sites",
        "20",
        "--u",
        "1",
        "--p",
        "10",
        "--kappa",
        "1",
        "--t-end",
        "2000",
        "--ic",
        "zero",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(header(&out.join("trajectory.csv")), "t,re_alpha_N,im_alpha_N,abs_alpha_N");
    let rows = std::fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 20001);
    let m = manifest(&out);
    let sigma = m.summary["sigma"].as_f64().unwrap();
    assert!(sigma < 0.05, "sigma {sigma}");
    assert_eq!(m.command, "simulate");
    assert_eq!(m.exit_code, 0);
    for f in ["trajectory.csv", "histogram.csv"] {
        assert!(m.outputs.iter().any(|o| o == f), "{f} not listed");
        assert!(out.join(f).exists());
    }
}

#[test]
fn blow_up_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(
        &["simulate", "--sites", "3", "--p", "1e300", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run_bin(&[], None).status.code(), Some(1));
    assert_eq!(run_bin(&["launch"], None).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(run_bin(&["simulate", "--sites", "3,4", "--out", d], None).status.code(), Some(1));
    assert_eq!(run_bin(&["sweep", "--sites", "9:3:1", "--out", d], None).status.code(), Some(1));
    assert_eq!(run_bin(&["sweep", "--kappa", "-1", "--out", d], None).status.code(), Some(1));
    assert_eq!(run_bin(&["phase-diagram", "--out", d], None).status.code(), Some(1));
    assert_eq!(run_bin(&["--help"], None).status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "u = 1\nfoo=1\n").unwrap();
    let out = run_bin(
        &["simulate", "--config", conf.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# reference\nu = 1\nsites = 3\nt_end = 5\n").unwrap();
    let out = dir.path().join("o");
    let code = photon_lattice_cli::run([
        "photon-lattice",
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--u",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let m = manifest(&out);
    assert_eq!(m.parameters["u"], "2");
    assert_eq!(m.parameters["sites"], "3");
    assert_eq!(m.parameters["t_end"], "5");
}

#[test]
fn empty_config_resolves_to_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("empty.conf");
    std::fs::write(&conf, "").unwrap();
    let out = dir.path().join("o");
    let code = photon_lattice_cli::run([
        "photon-lattice",
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--t-end",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let mut expected = Settings::default();
    expected.apply("t_end", "1").unwrap();
    expected.apply("out", out.to_str().unwrap()).unwrap();
    assert_eq!(manifest(&out).parameters, expected.to_pairs());
}

#[test]
fn sweep_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(name);
        let args = quick_sweep_args(&out);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(run_bin(&args, Some(threads)).status.code(), Some(0));
        assert_eq!(header(&out.join("sweep.csv")), "N,mean_abs_alpha_N,sigma,n_realizations,n_failed");
        csvs.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(text.ends_with('\n') && !text.contains('\r'));
    assert_eq!(text.lines().count(), 1 + 3);
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let args = quick_sweep_args(&first);
    let args: Vec<&str> = std::iter::once("photon-lattice").chain(args.iter().map(String::as_str)).collect();
    assert_eq!(photon_lattice_cli::run(args), 0);
    let m = manifest(&first);
    assert!(m.outputs.iter().all(|f| first.join(f).exists()));

    let second = dir.path().join("second");
    let code = photon_lattice_cli::run([
        "photon-lattice",
        "sweep",
        "--manifest",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(first.join("sweep.csv")).unwrap(),
        std::fs::read(second.join("sweep.csv")).unwrap()
    );
}

#[test]
fn phase_diagram_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phase");
    let code = photon_lattice_cli::run([
        "photon-lattice",
        "phase-diagram",
        "--u-grid",
        "0.5",
        "--w-grid",
        "0,1",
        "--sites",
        "3:9:2",
        "--p",
        "2",
        "--configs",
        "2",
        "--realizations",
        "1",
        "--transient",
        "30",
        "--window",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(out.join("phase.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "U,W,classification,power_exponent,power_r2,exp_rate,exp_r2,n_points"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 8);
        assert!(["diffusive", "insulating", "inconclusive"].contains(&fields[2]));
        assert_eq!(fields[7], "4");
    }
}

#[test]
fn disorder_threshold_and_stability_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).display().to_string();

    let out = d("dis");
    let code = photon_lattice_cli::run([
        "photon-lattice", "disorder", "--widths", "0,2", "--sites", "3,5,7,9", "--p", "2", "--configs", "3",
        "--realizations", "1", "--transient", "30", "--window", "5", "--out", &out,
    ]);
    assert_eq!(code, 0);
    let dis = std::fs::read_to_string(Path::new(&out).join("disorder.csv")).unwrap();
    assert_eq!(dis.lines().count(), 1 + 8);
    let per = std::fs::read_to_string(Path::new(&out).join("disorder_configs.csv")).unwrap();
    // one clean configuration per length at W = 0, three at W = 2
    assert_eq!(per.lines().count(), 1 + 4 + 12);
    assert_eq!(std::fs::read_to_string(Path::new(&out).join("disorder_fit.csv")).unwrap().lines().count(), 3);

    let out = d("thr");
    let code = photon_lattice_cli::run([
        "photon-lattice", "threshold", "--sites", "3:6:1", "--p", "2", "--realizations", "2", "--transient", "30",
        "--window", "5", "--out", &out,
    ]);
    assert_eq!(code, 0);
    let thr = std::fs::read_to_string(Path::new(&out).join("threshold.csv")).unwrap();
    assert_eq!(thr.lines().next().unwrap(), "axis,value,N_t,N_t_end,sigma_star,refined");
    // a weakly driven short chain is stable: no threshold in range
    assert_eq!(thr.lines().nth(1).unwrap().split(',').nth(2).unwrap(), "");

    let out = d("stab");
    let code = photon_lattice_cli::run([
        "photon-lattice", "stability", "--sites", "2:6:2", "--u", "0.5", "--p", "3", "--spectrum", "true",
        "--out", &out,
    ]);
    assert_eq!(code, 0);
    let stab = std::fs::read_to_string(Path::new(&out).join("stability.csv")).unwrap();
    assert_eq!(stab.lines().count(), 1 + 3);
    for line in stab.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2], "true");
        assert!(f[1].parse::<f64>().unwrap() < 0.0);
    }
    let spec = std::fs::read_to_string(Path::new(&out).join("spectrum.csv")).unwrap();
    assert_eq!(spec.lines().count(), 1 + 4 + 8 + 12);
}
