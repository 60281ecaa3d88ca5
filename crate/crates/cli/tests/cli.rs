use std::path::PathBuf;
use std::process::{Command, Output};

use qrabi_cli::RunConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qrabi"));
    for (k, _) in std::env::vars() {
        if k.starts_with("QRABI_") {
            c.env_remove(k);
        }
    }
    c
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qrabi-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn empty_flux_grid_exits_2() {
    let cfg = scratch("empty.cfg", "flux.start = 1\nflux.stop = -1\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "transitions"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_key_reports_line() {
    let cfg = scratch("unknown.cfg", "# header\nqubit.ip_na = 360\nmode.1.colour = 3\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "transitions"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn malformed_peaks_csv_reports_line() {
    let peaks = scratch("bad_peaks.csv", "flux_mPhi0,freq_GHz,depth\n0,3.2,1\n0.5,abc,1\n");
    let o = run(&["fit", "--peaks", peaks.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_depths_csv_reports_line() {
    let depths = scratch("bad_depths.csv", "n,depth\n0,0.5\n1,0.3,9\n");
    let o = run(&["fit-thermal", "--depths", depths.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn uncoupled_transitions_are_bare_lines() {
    let cfg = scratch("g0.cfg", "mode.1.omega_ghz = 2.36\nmode.1.g_ghz = 0\nmode.1.nmax = 10\nflux.start = 0\nflux.stop = 0\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "transitions"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("0,g:0,g:1,2.36,1,rabi"), "{text}");
    assert!(text.contains("0,g:0,e:0,3.198,0,rabi"), "{text}");
    assert!(text.contains("0,g:0,g:2,4.72,0,rabi"), "{text}");
}

#[test]
fn outputs_are_deterministic() {
    let a = run(&["--jobs", "2", "transitions"]);
    let b = run(&["transitions"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bs_shift_columns_and_sign() {
    // with the full-RWA baseline the sign holds near the optimal point; further
    // out the dropped longitudinal term pulls chi_4 negative near 1 mPhi0
    let cfg = scratch("bs_near.cfg", "flux.start = -0.5\nflux.stop = 0.5\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "bs-shift"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("flux_mPhi0,N,chi_GHz"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 11 * 5);
    let ns: std::collections::BTreeSet<u32> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(ns.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() > 0.0));

    let cfg = scratch("bs_g0.cfg", "mode.1.omega_ghz = 2.36\nmode.1.g_ghz = 0\nflux.start = -0.5\nflux.stop = 0.5\nflux.step = 0.5\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "bs-shift"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn print_config_round_trips() {
    let cfg = scratch(
        "three.cfg",
        "mode.1.omega_ghz = 2.36\nmode.1.g_ghz = 0.265\nmode.3.omega_ghz = 7.078\nmode.3.g_ghz = 0.459\nmode.3.drive = 0.5\ndist.kind = coherent\n",
    );
    let o = bin()
        .args(["--config", cfg.to_str().unwrap(), "--print-config", "transitions"])
        .env("QRABI_FLUX_STEP", "0.25")
        .output()
        .unwrap();
    assert!(o.status.success());
    let echoed = RunConfig::parse(&stdout(&o)).unwrap();
    assert_eq!(echoed.flux_step, 0.25);
    assert_eq!(echoed.modes.len(), 2);
    assert_eq!(RunConfig::parse(&echoed.to_text()).unwrap(), echoed);
}

#[test]
fn bad_env_override_exits_2() {
    let o = bin().arg("transitions").env("QRABI_QUBIT_IP_NA", "lots").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_thermal_recovers_mean() {
    let mut csv = String::from("n,depth\n");
    for n in 0..8 {
        csv.push_str(&format!("{n},{}\n", 0.5 * (3.0f64 / 4.0).powi(n) / 4.0));
    }
    let depths = scratch("depths.csv", &csv);
    let o = run(&["fit-thermal", "--depths", depths.to_str().unwrap()]);
    assert!(o.status.success());
    let js: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((js["params"]["mean_n"]["value"].as_f64().unwrap() - 3.0).abs() < 1e-8);
    assert_eq!(js["converged"], serde_json::Value::Bool(true));
}

#[test]
fn fit_recovers_parameters_from_written_peaks() {
    use qrabi::fitsuite::{ground_transition_curves, write_peaks_csv, Peak, PeakList};
    let q = qrabi::QubitParams { persistent_current: 360.0, gap: 3.198 };
    let m = qrabi::ModeParams { mode_index: 1, omega_r: 2.36, coupling: 0.265, nmax: 15 };
    let mut entries = Vec::new();
    for k in 0..5 {
        let x = -1.0 + 0.5 * k as f64;
        for f in ground_transition_curves(x, &q, &[m], qrabi::ModelVariant::Rabi, 3).unwrap() {
            entries.push(Peak { flux: x, freq: f, depth: 1.0, n_tag: None });
        }
    }
    let mut buf = Vec::new();
    write_peaks_csv(&PeakList::new(entries).unwrap(), &mut buf).unwrap();
    let peaks = scratch("peaks.csv", std::str::from_utf8(&buf).unwrap());
    let cfg = scratch("fit.cfg", "qubit.ip_na = 400\nqubit.delta_ghz = 3.0\nmode.1.omega_ghz = 2.36\nmode.1.g_ghz = 0.3\nmode.1.nmax = 15\nfit.curves = 5\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "fit", "--peaks", peaks.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let js: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // the 12-significant-digit peak file limits recovery to about 1e-9
    assert!((js["params"]["Ip"]["value"].as_f64().unwrap() / 360.0 - 1.0).abs() < 1e-6);
    assert!((js["params"]["Delta"]["value"].as_f64().unwrap() / 3.198 - 1.0).abs() < 1e-6);
    assert!((js["params"]["g1"]["value"].as_f64().unwrap() / 0.265 - 1.0).abs() < 1e-6);
    assert_eq!(js["params"]["Ip"]["unit"], "nA");
}

#[test]
fn converge_meets_truncation_bound() {
    let o = run(&["converge"]);
    assert!(o.status.success());
    let js: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(js["nmax"]["1"].as_u64().unwrap() <= 40);
}

#[test]
fn spectrum_written_to_file() {
    let out = std::env::temp_dir().join(format!("qrabi-spectrum-{}.csv", std::process::id()));
    let cfg = scratch("spec.cfg", "flux.start = 0\nflux.stop = 0.2\nspectrum.freq_step_ghz = 0.01\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "spectrum"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "flux_mPhi0,freq_GHz,amplitude");
    assert_eq!(rows.len(), 1 + 3 * 151);
    let max = rows[1..].iter().map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert_eq!(max, 1.0);
}

#[test]
fn validate_passes_on_defaults() {
    let o = run(&["validate"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn validate_reports_first_counterexample() {
    // a configured truncation tolerance no solver can meet
    let o = bin().arg("validate").env("QRABI_CONVERGE_TOL_GHZ", "1e-30").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL truncation"));
}

#[test]
fn unwritable_output_exits_2() {
    let o = run(&["--out", "/nonexistent-dir/x.csv", "transitions"]);
    assert_eq!(o.status.code(), Some(2));
}
