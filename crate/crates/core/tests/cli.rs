use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tsvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsvar")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const DISCRETE: &str = "[catalog]\nname = \"discrete_action\"\n";
const LQ: &str = "[catalog]\nname = \"quantum_lq\"\n";
const LQ_UNDELAYED: &str = "[catalog]\nname = \"quantum_lq\"\n[catalog.params]\nalpha0 = 0\n";

#[test]
fn grid_tables() {
    let out = tsvar(&["grid", "--q", "1", "--h", "1", "--b", "5", "--steps", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,t,nu");
    assert_eq!(lines.len(), 7);
    for (j, line) in lines[1..].iter().enumerate() {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells, vec![j as f64, j as f64, 1.0]);
    }

    let out = tsvar(&["grid", "--q", "0.5", "--h", "0", "--b", "1", "--steps", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let t: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(t, vec![0.125, 0.25, 0.5, 1.0]);

    let out = tsvar(&["grid", "--q", "1", "--h", "0", "--b", "1", "--steps", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("degenerate time scale"));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(tsvar(&["grid", "--q", "abc", "--h", "0", "--b", "1", "--steps", "3"]).status.code(), Some(1));
    assert_eq!(tsvar(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tsvar(&["--help"]).status.code(), Some(0));
}

#[test]
fn solve_el_catalog_and_residual_overlay() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "d.toml", DISCRETE);
    let (rep, csv) = (dir.path().join("r.json"), dir.path().join("t.csv"));
    let out = tsvar(&["solve-el", "--config", s(&cfg), "--output", s(&rep), "--csv", s(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&rep);
    assert_eq!(r["converged"], true);
    assert_eq!(r["config"]["catalog"]["name"], "discrete_action");
    assert!(r["functional"].is_f64());
    assert!(r["iterations"].is_u64());
    for g in ["delayed_region", "tail_region", "boundary", "gradient"] {
        assert!(r["residuals"][g]["max"].as_f64().unwrap() <= 1e-8, "{g}");
        assert!(r["residuals"][g]["rms"].is_f64());
    }
    assert_eq!(r["trajectory"].as_array().unwrap().len(), 15);

    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("index,t,nu,y_1\n"));
    assert_eq!(text.lines().count(), 16);

    let out = tsvar(&["residuals", "--config", s(&cfg), "--trajectory", s(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    for g in ["delayed_region", "tail_region", "boundary", "gradient"] {
        assert!(r["residuals"][g]["max"].as_f64().unwrap() <= 1e-7, "{g}");
    }

    // One interior value moved by 0.1.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[8].split(',').map(String::from).collect();
    let v: f64 = cells[3].parse().unwrap();
    cells[3] = format!("{:.16e}", v + 0.1);
    lines[8] = cells.join(",");
    let bumped = write(&dir, "bumped.csv", &(lines.join("\n") + "\n"));
    let rep2 = dir.path().join("res.json");
    let out = tsvar(&["residuals", "--config", s(&cfg), "--trajectory", s(&bumped), "--output", s(&rep2)]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&rep2);
    let worst = ["delayed_region", "tail_region", "boundary"]
        .iter()
        .map(|g| r["residuals"][*g]["max"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert!(worst > 1e-3);

    // Dropping a row breaks the shape.
    lines.remove(5);
    let short = write(&dir, "short.csv", &(lines.join("\n") + "\n"));
    let out = tsvar(&["residuals", "--config", s(&cfg), "--trajectory", s(&short)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn explicit_config_matches_catalog() {
    let dir = TempDir::new().unwrap();
    let explicit = write(
        &dir,
        "e.toml",
        r#"lagrangian = "0.5*Dy1^2 - k*yd1^2"
prehistory = ["1"]
endpoint = [0.0]

[timescale]
q = 1.0
h = 1.0
[grid]
b = 12.0
steps = 14
[delay]
alpha0 = 2
[state]
n = 1
[params]
k = 0.5
"#,
    );
    let catalog = write(&dir, "c.toml", DISCRETE);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert_eq!(tsvar(&["solve-el", "--config", s(&explicit), "--output", s(&a)]).status.code(), Some(0));
    assert_eq!(tsvar(&["solve-el", "--config", s(&catalog), "--output", s(&b)]).status.code(), Some(0));
    let (ra, rb) = (json(&a), json(&b));
    let (ta, tb) = (ra["trajectory"].as_array().unwrap(), rb["trajectory"].as_array().unwrap());
    assert_eq!(ta.len(), tb.len());
    for (x, y) in ta.iter().zip(tb) {
        let (u, v) = (x["y"][0].as_f64().unwrap(), y["y"][0].as_f64().unwrap());
        assert!((u - v).abs() <= 1e-6, "{u} vs {v}");
    }
}

#[test]
fn solve_oc_catalog() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "lq.toml", LQ);
    let (rep, csv) = (dir.path().join("r.json"), dir.path().join("t.csv"));
    let out = tsvar(&["solve-oc", "--config", s(&cfg), "--output", s(&rep), "--csv", s(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&rep);
    for g in ["adjoint_delayed", "adjoint_tail", "control", "boundary", "dynamics", "stationarity"] {
        assert!(r["residuals"][g]["max"].as_f64().unwrap() <= 1e-9, "{g}");
    }
    let rows = r["trajectory"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].get("u").is_none());
    assert!(rows[7].get("u").is_none());
    for row in &rows[1..7] {
        let (u, l) = (row["u"][0].as_f64().unwrap(), row["lambda"][0].as_f64().unwrap());
        assert!((u - l).abs() <= 1e-10);
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("index,t,nu,y_1,u_1,lambda_1\n"));
    let out = tsvar(&["residuals", "--config", s(&cfg), "--trajectory", s(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["residuals"]["adjoint_delayed"]["max"].as_f64().unwrap() <= 1e-7);

    // solve-el refuses a control problem and vice versa.
    assert_eq!(tsvar(&["solve-el", "--config", s(&cfg), "--output", s(&rep)]).status.code(), Some(1));
    let d = write(&dir, "d.toml", DISCRETE);
    assert_eq!(tsvar(&["solve-oc", "--config", s(&d), "--output", s(&rep)]).status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    for (cmd, text) in [("solve-el", DISCRETE), ("solve-oc", LQ)] {
        let cfg = write(&dir, "c.toml", text);
        let mut outputs = Vec::new();
        for k in 0..2 {
            let (rep, csv) = (dir.path().join(format!("r{k}.json")), dir.path().join(format!("t{k}.csv")));
            assert_eq!(tsvar(&[cmd, "--config", s(&cfg), "--output", s(&rep), "--csv", s(&csv)]).status.code(), Some(0));
            outputs.push((std::fs::read(&rep).unwrap(), std::fs::read(&csv).unwrap()));
        }
        assert_eq!(outputs[0], outputs[1], "{cmd}");
    }
    let cfg = write(&dir, "s.toml", LQ_UNDELAYED);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let rep = dir.path().join(format!("s{k}.json"));
        let code = tsvar(&["limit-sweep", "--config", s(&cfg), "--q-list", "0.9,0.95,0.975", "--output", s(&rep)]).status.code();
        assert_eq!(code, Some(0));
        outputs.push(std::fs::read(&rep).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let rep = dir.path().join("r.json");
    let cases = [
        ("typo.toml", "[catalog]\nname = \"discrete_action\"\nbogus = 1\n"),
        ("unknown.toml", "[catalog]\nname = \"no_such_problem\"\n"),
        ("both.toml", "lagrangian = \"Dy1^2\"\n[catalog]\nname = \"discrete_action\"\n"),
        ("neither.toml", "[timescale]\nq = 1.0\nh = 1.0\n"),
        (
            "delay.toml",
            "lagrangian = \"Dy1^2\"\nprehistory = [\"1\"]\nendpoint = [0.0]\n[timescale]\nq = 1.0\nh = 1.0\n\
             [grid]\nb = 4.0\nsteps = 3\n[delay]\nalpha0 = 3\n[state]\nn = 1\n",
        ),
        (
            "ident.toml",
            "lagrangian = \"Dy1^2 + zz\"\nprehistory = [\"1\"]\nendpoint = [0.0]\n[timescale]\nq = 1.0\nh = 1.0\n\
             [grid]\nb = 4.0\nsteps = 3\n[delay]\nalpha0 = 0\n[state]\nn = 1\n",
        ),
        ("syntax.toml", "[catalog\nname = 1"),
    ];
    for (name, text) in cases {
        let cfg = write(&dir, name, text);
        let out = tsvar(&["solve-el", "--config", s(&cfg), "--output", s(&rep)]);
        assert_eq!(out.status.code(), Some(1), "{name}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(!err.is_empty(), "{name}");
        if name == "delay.toml" {
            assert!(err.contains("delay exceeds grid"), "{err}");
        }
    }
    let missing = dir.path().join("missing.toml");
    assert_eq!(tsvar(&["solve-el", "--config", s(&missing), "--output", s(&rep)]).status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two_with_partial_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m.toml", "[catalog]\nname = \"mixed_delay\"\n[solver]\nmax_iter = 1\ntol = 1e-14\n");
    let rep = dir.path().join("r.json");
    let out = tsvar(&["solve-el", "--config", s(&cfg), "--output", s(&rep)]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(&rep);
    assert_eq!(r["converged"], false);
    assert!(r["error"].as_str().unwrap().contains("converge"));
    assert_eq!(r["trajectory"].as_array().unwrap().len(), 13);
}

#[test]
fn limit_sweep_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.toml", LQ_UNDELAYED);
    let rep = dir.path().join("r.json");
    let qs: Vec<String> = (4..=9).map(|k| (1.0 - 0.5f64.powi(k)).to_string()).collect();
    let out = tsvar(&["limit-sweep", "--config", s(&cfg), "--q-list", &qs.join(","), "--output", s(&rep)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&rep);
    assert_eq!(r["verdict"], "converging");
    let levels = r["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 6);
    let devs: Vec<f64> = levels.iter().map(|l| l["deviation"].as_f64().unwrap()).collect();
    assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
    assert!(levels.iter().all(|l| l["steps"].as_u64().unwrap() > 0));

    let out = tsvar(&["limit-sweep", "--config", s(&cfg), "--q-list", "0.9", "--output", s(&rep)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&rep)["verdict"], "insufficient levels");

    let out = tsvar(&["limit-sweep", "--config", s(&cfg), "--q-list", "0.9,1.0", "--output", s(&rep)]);
    assert_eq!(out.status.code(), Some(1));

    let delayed = write(&dir, "delayed.toml", LQ);
    let out = tsvar(&["limit-sweep", "--config", s(&delayed), "--q-list", "0.9,0.95", "--output", s(&rep)]);
    assert_eq!(out.status.code(), Some(1));

    let wrong = write(&dir, "w.toml", DISCRETE);
    let out = tsvar(&["limit-sweep", "--config", s(&wrong), "--q-list", "0.9,0.95", "--output", s(&rep)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn limit_sweep_with_every_level_failing_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.toml", &format!("{LQ_UNDELAYED}[solver]\nmax_iter = 0\n"));
    let rep = dir.path().join("r.json");
    let out = tsvar(&["limit-sweep", "--config", s(&cfg), "--q-list", "0.9,0.95", "--output", s(&rep)]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(&rep);
    assert!(r["levels"].as_array().unwrap().iter().all(|l| l["error"].is_string()));
}
