use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pet-renorm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("pet-renorm-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

const RENDER: [&str; 13] =
    ["tile", "render", "--alpha", "1/5", "--beta", "2/7", "--x", "1/3", "--y", "1/7", "--window", "30x15", "--format=svg"];

#[test]
fn svg_matches_golden() {
    let o = run(&RENDER);
    assert_eq!(o.status.code(), Some(0));
    let golden = include_str!("golden/tile_30x15.svg");
    assert_eq!(stdout(&o), golden);
}

/// Decode the arc corners of every tile and compare with `τ = ω_m η_n` for
/// `ω_m = [frac(1/3 + m/5) < ½]`, `η_n = [frac(1/7 + 2n/7) < ½]`.
#[test]
fn svg_orientation_follows_product_signs() {
    let svg = stdout(&run(&RENDER));
    let ends: Vec<[f64; 4]> = svg
        .lines()
        .filter_map(|l| l.strip_prefix("<path d=\"M "))
        .map(|l| {
            let t: Vec<f64> = l.split(['"', ' ']).filter_map(|w| w.parse().ok()).collect();
            // M sx sy A r r 0 0 sweep ex ey
            [t[0], t[1], t[t.len() - 2], t[t.len() - 1]]
        })
        .collect();
    assert_eq!(ends.len(), 2 * 30 * 15);
    let omega = |m: i64| if (5 + 3 * m).rem_euclid(15) * 2 < 15 { 1 } else { -1 };
    let eta = |n: i64| if (1 + 2 * n).rem_euclid(7) * 2 < 7 { 1 } else { -1 };
    let mut class_of_tau = [None, None];
    for row in 0..15i64 {
        for col in 0..30i64 {
            let (x0, y0) = (20.0 * col as f64, 20.0 * row as f64);
            let mut diag = None;
            for p in &ends[(2 * (row * 30 + col)) as usize..][..2] {
                let on_grid = |v: f64| v.rem_euclid(20.0) == 0.0;
                let cx = if on_grid(p[0]) { p[0] } else { p[2] };
                let cy = if on_grid(p[1]) { p[1] } else { p[3] };
                let d = (cx - x0 == 0.0) == (cy - y0 == 0.0);
                assert!(diag.is_none_or(|x| x == d), "arcs of one tile sit on opposite corner pairs");
                diag = Some(d);
            }
            let tau = omega(col) * eta(14 - row);
            let slot = &mut class_of_tau[(tau == 1) as usize];
            assert!(slot.is_none_or(|c| c == diag.unwrap()), "tile ({col},{}) disagrees", 14 - row);
            *slot = diag;
        }
    }
    assert_ne!(class_of_tau[0], class_of_tau[1]);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["measure", "--depth", "2"]).status.code(), Some(0));
    assert_eq!(run(&["measure", "--alpha", "0.7"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["measure", "--format", "xml"]).status.code(), Some(2));
    let fault = run(&["verify", "--property", "return-time", "--inject-fault", "curve-sign"]);
    assert_eq!(fault.status.code(), Some(1));
    assert!(stdout(&fault).contains("\"passed\": false"));
    let cap = run(&["construct-small-measure", "--stages", "4", "--k-cap", "100"]);
    assert_eq!(cap.status.code(), Some(3));
    assert!(!cap.stderr.is_empty());
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let mc = |w: &str| stdout(&run(&["mc-periodic", "--alpha", "1/5", "--beta", "2/7", "--samples", "3000", "--seed", "9", "--workers", w]));
    assert_eq!(mc("1"), mc("4"));
    let sweep = |w: &str| stdout(&run(&["sweep", "--grid", "4", "--depth", "3", "--workers", w]));
    let a = sweep("1");
    assert_eq!(a, sweep("3"));
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 1 + 16);
}

#[test]
fn config_file_and_flag_precedence() {
    let d = scratch("cfg");
    let cfg = d.join("run.json");
    std::fs::write(&cfg, r#"{"alpha": "1/5", "beta": "2/7", "depth": 2}"#).unwrap();
    let rows = |o: &Output| stdout(o).lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).count();
    let from_file = run(&["--config", cfg.to_str().unwrap(), "measure"]);
    assert_eq!(rows(&from_file), 3);
    let overridden = run(&["--config", cfg.to_str().unwrap(), "measure", "--depth", "5"]);
    assert_eq!(rows(&overridden), 6);
    assert!(stdout(&from_file).starts_with("0,1/5,2/7") || stdout(&from_file).contains("\n0,1/5,2/7,"));
    std::fs::write(&cfg, r#"{"alpah": "1/5"}"#).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "measure"]).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(d);
}

#[test]
fn small_measure_files_round_trip_through_measure() {
    let d = scratch("small");
    let it = d.join("it.json");
    let cert = d.join("cert.json");
    let o = run(&[
        "construct-small-measure",
        "--eta",
        "1/2",
        "--stages",
        "2",
        "--out",
        it.to_str().unwrap(),
        "--certificate",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    let a1 = c["certificate"]["marks"][1].as_u64().unwrap();
    let m = run(&["measure", "--itinerary", it.to_str().unwrap(), "--depth", &a1.to_string(), "--format", "json"]);
    assert_eq!(m.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&m)).unwrap();
    assert_eq!(v["table"].as_array().unwrap().len() as u64, a1 + 1);
    let _ = std::fs::remove_dir_all(d);
}
