use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pursuit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pursuit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(p: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines().skip(1).map(str::to_string).collect()
}

#[test]
fn fig9_stable_preset_writes_every_millisecond() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"system": {"kind": "benchmark", "id": "fig9"}, "delays": {"preset": "stable"},
            "sim": {"dt": 0.001, "horizon": 20}}"#,
    );
    let out = dir.path().join("o.csv");
    let r = pursuit(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    // these matrices are unstable at 0.8, so the round is lost, but every row is written
    assert_eq!(r.status.code(), Some(2));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 20001);
    assert!(rows[20000].starts_with("20,"), "{}", rows[20000]);
}

#[test]
fn unstable_preset_reports_divergence_time() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"system": {"kind": "benchmark", "id": "fig9"}, "delays": {"preset": "unstable"},
            "sim": {"horizon": 30}}"#,
    );
    let out = dir.path().join("o.csv");
    let r = pursuit(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let stdout = String::from_utf8(r.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("round lost at t = ")).expect(&stdout);
    let t: f64 = line["round lost at t = ".len()..].split(' ').next().unwrap().parse().unwrap();
    assert!(t > 0.0 && t < 30.0, "{line}");
}

#[test]
fn game_config_completes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.csv");
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/game.json");
    let r = pursuit(&["simulate", "--config", cfg, "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("t,xe,ye,xp,yp,ex,ey,dx,dy,tau1,tau2\n0,0.5,0.5,"));
    assert_eq!(text.lines().count(), 20002);
}

#[test]
fn malformed_config_exits_one_with_diagnostic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.json", "{\n  \"sim\": {\"dt\": 0.001,,}\n}\n");
    let out = dir.path().join("o.csv");
    let r = pursuit(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8(r.stderr).unwrap();
    assert!(err.contains("bad.json:2:"), "{err}");

    let cfg = write(&dir, "typo.json", r#"{"sim": {"horizn": 3}}"#);
    let r = pursuit(&["stability-map", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8(r.stderr).unwrap().contains("unknown field"));

    let r = pursuit(&["simulate", "--config", "/nonexistent.json", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(!r.stderr.is_empty());
}

#[test]
fn two_by_two_map_has_four_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"map": {"n1": 2, "n2": 2}}"#);
    let out = dir.path().join("m.csv");
    let r = pursuit(&["stability-map", "--config", s(&cfg), "--out", s(&out), "--family", "fig9"]);
    assert_eq!(r.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("tau1,tau2,abscissa,label"));
    assert_eq!(data_rows(&out).len(), 4);
}

#[test]
fn scalar_family_boundary_near_half_pi() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"map": {"n1": 41, "n2": 2}}"#);
    let out = dir.path().join("m.csv");
    let r = pursuit(&["stability-map", "--config", s(&cfg), "--out", s(&out), "--family", "scalar"]);
    assert_eq!(r.status.code(), Some(0));
    let stdout = String::from_utf8(r.stdout).unwrap();
    let line = stdout
        .lines()
        .find(|l| l.starts_with("stability boundary along tau1"))
        .expect(&stdout);
    let tau: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!((tau - std::f64::consts::FRAC_PI_2).abs() < 0.05, "{line}");
}

#[test]
fn fig9_default_map_reports_presets() {
    let dir = TempDir::new().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/fig9_map.json");
    let out = dir.path().join("m.csv");
    let r = pursuit(&["stability-map", "--config", cfg, "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(data_rows(&out).len(), 61 * 61);
    let stdout = String::from_utf8(r.stdout).unwrap();
    for name in ["unstable", "stable", "critical"] {
        assert!(
            stdout.lines().any(|l| l.split_whitespace().next() == Some(name)),
            "{stdout}"
        );
    }
}

#[test]
fn cursor_log_replay_is_bitwise_repeatable_and_follows_the_log() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"sim": {"horizon": 3}}"#);
    let log = write(&dir, "log.csv", "t,cx,cy\n0,0.5,0.5\n0.5,0.2,0.7\n");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let r = pursuit(&["simulate", "--config", s(&cfg), "--out", s(out), "--cursor-log", s(&log)]);
        assert_eq!(r.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let last = data_rows(&a).pop().unwrap();
    let cols: Vec<f64> = last.split(',').map(|c| c.parse().unwrap()).collect();
    // 2.5 s after the cursor jump the evader sits on it
    assert!((cols[1] - 0.2).abs() < 1e-6 && (cols[2] - 0.7).abs() < 1e-6, "{last}");

    let bad = write(&dir, "bad.csv", "t,cx,cy\n0,0.5\n");
    let r = pursuit(&["simulate", "--config", s(&cfg), "--out", s(&a), "--cursor-log", s(&bad)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8(r.stderr).unwrap().contains("bad.csv:2:"));
}
