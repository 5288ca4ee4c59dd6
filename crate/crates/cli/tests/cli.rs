use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use valvemorph::nrrd::save_mask;
use valvemorph::phantom::{generate_phantom, PhantomParams};
use valvemorph::Label;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valvemorph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn phantom_analyze_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ph = tmp.path().join("ph");
    let out = run(&["phantom", "--out", s(&ph), "--d-cc", "32", "--d-ap", "28"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ph.join("phantom.nrrd").is_file());
    let truth = read_json(&ph.join("truth.json"));
    assert!((truth["d_cc_mm"].as_f64().unwrap() - 32.0).abs() < 1.0);

    let res = tmp.path().join("res");
    let out = run(&["analyze", s(&ph.join("phantom.nrrd")), "--out", s(&res)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "report.json",
        "annulus.obj",
        "anterior.obj",
        "posterior.obj",
        "landmarks.csv",
    ] {
        assert!(res.join(f).is_file(), "missing {f}");
    }
    let report = read_json(&res.join("report.json"));
    let prov = &report["provenance"];
    assert_eq!(prov["theta_offset_deg"], 15.0);
    assert_eq!(prov["tube_radius_mm"], 1.0);
    assert_eq!(prov["epsilon_mm"], 0.001);
    assert!(report["failures"].as_array().unwrap().is_empty());

    let csv_path = tmp.path().join("cmp.csv");
    let rp = res.join("report.json");
    let out = run(&["compare", s(&rp), s(&rp), "--out", s(&csv_path)]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for row in rows {
        let bias: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(bias, 0.0, "{row}");
    }

    let out = run(&["compare", s(&ph.join("truth.json")), s(&rp)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("d_cc_mm,1,"));
}

#[test]
fn missing_posterior_exits_with_leaflet_code() {
    let tmp = tempfile::tempdir().unwrap();
    let (vol, _) = generate_phantom(&PhantomParams::default()).unwrap();
    let input = tmp.path().join("no_post.nrrd");
    save_mask(&vol.without_label(Label::Posterior as u8), &input).unwrap();
    let res = tmp.path().join("res");
    let out = run(&["analyze", s(&input), "--out", s(&res)]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&res.join("report.json"));
    assert!(report["annulus"]["d_cc_mm"].as_f64().is_some());
    assert!(report["annulus"]["area_mm2"].as_f64().is_some());
    assert!(report["leaflets"]["posterior"]["area_mm2"].is_null());
    assert!(report["coaptation"].is_null());
    assert_eq!(report["failures"][0]["code"], 5);
}

#[test]
fn metrics_of_identical_volumes() {
    let tmp = tempfile::tempdir().unwrap();
    let ph = tmp.path().join("ph");
    assert_eq!(
        code(&run(&["phantom", "--out", s(&ph), "--spacing", "0.5"])),
        0
    );
    let nrrd = ph.join("phantom.nrrd");
    let out = run(&["metrics", s(&nrrd), s(&nrrd)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let scores: Value = serde_json::from_slice(&out.stdout).unwrap();
    for sc in scores.as_array().unwrap() {
        assert_eq!(sc["dice"], 1.0, "{sc}");
        assert_eq!(sc["msd_mm"], 0.0, "{sc}");
    }
}

#[test]
fn unreadable_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze",
        s(&tmp.path().join("absent.nrrd")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.nrrd"));
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(code(&run(&["analyze", "x.nrrd", "--label-map", "1,2"])), 2);
    assert_eq!(
        code(&run(&["analyze", "x.nrrd", "--atrial-hint", "0,0,a"])),
        2
    );
    assert_eq!(code(&run(&["compare", "a.json", "b.json", "c.json"])), 2);
}
