//! Acceptance suite. Runs every criterion in sequence (timings are measured
//! wall-clock, so nothing else may share the CPU), prints one PASS/FAIL line
//! each and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Isometry3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use valvemorph::annulus::{extract_skeleton, fit_skeleton_curve, fit_valve_frame};
use valvemorph::coaptation::find_coaptation_candidates;
use valvemorph::geometry::point_segment_distance;
use valvemorph::landmarks::cyclic_order_holds;
use valvemorph::metrics::{bland_altman, dice, msd, Selection};
use valvemorph::phantom::{generate_phantom, AnalyticTruth, PhantomParams};
use valvemorph::pipeline::{analyze_volume, Analysis, PipelineConfig};
use valvemorph::report::{compare, measurements};
use valvemorph::{LabelMap, LabeledVolume, Point};

struct Run {
    params: PhantomParams,
    volume: LabeledVolume,
    truth: AnalyticTruth,
    analysis: Analysis,
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// (D_CC, D_AP, h1, h2, prolapse bump).
const COHORT: [(f64, f64, f64, f64, f64); 8] = [
    (30.0, 26.0, 2.5, 1.0, 0.0),
    (32.0, 30.0, 3.0, 1.5, 0.0),
    (34.0, 28.0, 3.5, 1.5, 0.0),
    (36.0, 30.0, 3.0, 1.5, 0.0),
    (38.0, 34.0, 3.0, 2.0, 2.5),
    (40.0, 36.0, 4.0, 1.5, 0.0),
    (42.0, 40.0, 3.5, 1.0, 3.0),
    (44.0, 42.0, 4.0, 2.0, 0.0),
];

fn run(params: PhantomParams) -> Run {
    let (volume, truth) = generate_phantom(&params).expect("phantom");
    let analysis =
        analyze_volume(&volume, &PipelineConfig::default(), "phantom").expect("valid config");
    Run {
        params,
        volume,
        truth,
        analysis,
    }
}

fn table<T: serde::Serialize>(doc: &T) -> BTreeMap<String, f64> {
    measurements(&serde_json::to_value(doc).unwrap()).unwrap()
}

fn label(p: &PhantomParams) -> String {
    format!("{}x{}", p.d_cc, p.d_ap)
}

fn round_trip(cohort: &[Run], secs: f64) -> Outcome {
    // (name, tolerance, relative)
    let tolerances = [
        ("d_cc_mm", 0.8, false),
        ("d_ap_mm", 0.8, false),
        ("annulus_height_mm", 0.8, false),
        ("annulus_length_mm", 0.02, true),
        ("annulus_area_mm2", 0.03, true),
        ("anterior_length_mm", 1.0, false),
        ("posterior_length_mm", 1.0, false),
        ("anterior_area_mm2", 0.05, true),
        ("posterior_area_mm2", 0.05, true),
    ];
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut misses = Vec::new();
    for r in cohort {
        let got = table(&r.analysis.report);
        let want = table(&r.truth);
        for (name, tol, relative) in tolerances {
            let (Some(g), Some(w)) = (got.get(name), want.get(name)) else {
                misses.push(format!("{} {name} missing", label(&r.params)));
                continue;
            };
            let err = if relative {
                (g - w).abs() / w.abs()
            } else {
                (g - w).abs()
            };
            let e = worst.entry(name).or_insert(0.0);
            *e = e.max(err / tol);
            if err > tol {
                misses.push(format!("{} {name} {g:.3} vs {w:.3}", label(&r.params)));
            }
        }
    }
    let fraction = worst.values().fold(0.0f64, |a, &b| a.max(b));
    let pass = misses.is_empty() && secs < 300.0;
    outcome(
        pass,
        format!(
            "{} phantoms in {secs:.1} s, worst error {:.0}% of tolerance{}",
            cohort.len(),
            100.0 * fraction,
            if misses.is_empty() {
                String::new()
            } else {
                format!("; {}", misses.join("; "))
            }
        ),
    )
}

fn dense_curve(a: &Analysis) -> Vec<Point> {
    a.refined
        .as_ref()
        .unwrap()
        .curve
        .sample_by_arc_length(720)
        .into_iter()
        .map(|s| s.1)
        .collect()
}

fn gap_correction(reference: &Run) -> Outcome {
    let truth: Vec<Point> = (0..720)
        .map(|i| reference.params.centerline(TAU * i as f64 / 720.0))
        .collect();
    let full = dense_curve(&reference.analysis);
    let mut pass = true;
    let mut parts = Vec::new();
    for gap in [30.0, 60.0, 90.0] {
        let r = run(PhantomParams {
            gap_arc: gap,
            ..reference.params
        });
        let (Some(mesh), Some(_)) = (&r.analysis.annulus_mesh, &r.analysis.refined) else {
            pass = false;
            parts.push(format!("{gap}°: refinement failed"));
            continue;
        };
        let corrected = dense_curve(&r.analysis);
        let frame = fit_valve_frame(&mesh.vertices).unwrap();
        let raw_skeleton = extract_skeleton(mesh, &frame, 15.0).unwrap();
        let raw: Vec<Point> = fit_skeleton_curve(&raw_skeleton)
            .unwrap()
            .sample_by_arc_length(720)
            .into_iter()
            .map(|s| s.1)
            .collect();
        let to_full = msd(&corrected, &full).unwrap();
        let corrected_err = msd(&corrected, &truth).unwrap();
        let raw_err = msd(&raw, &truth).unwrap();
        let ok = to_full < 1.0 && corrected_err <= raw_err;
        pass &= ok;
        parts.push(format!(
            "{gap}°: to no-gap {to_full:.3} mm, to truth {corrected_err:.3} (raw {raw_err:.3})"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn brute_msd(s: &[Point], t: &[Point]) -> f64 {
    let near = |p: &Point, set: &[Point]| {
        set.iter()
            .map(|q| (p - q).norm())
            .fold(f64::INFINITY, f64::min)
    };
    let a: f64 = s.iter().map(|p| near(p, t)).sum();
    let b: f64 = t.iter().map(|p| near(p, s)).sum();
    (a + b) / (s.len() + t.len()) as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cloud = |rng: &mut ChaCha8Rng| -> Vec<Point> {
        let n = rng.random_range(1..=200);
        (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                )
            })
            .collect()
    };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (s, t) = (cloud(&mut rng), cloud(&mut rng));
        worst = worst.max((msd(&s, &t).unwrap() - brute_msd(&s, &t)).abs());
    }
    let vol = |raw: Vec<u8>| {
        LabeledVolume::from_raw(
            [2, 2, 2],
            [1.0; 3],
            Point::origin(),
            raw,
            &LabelMap::default(),
        )
        .unwrap()
    };
    let a = vol(vec![1, 1, 1, 1, 0, 0, 0, 0]);
    let b = vol(vec![0, 0, 1, 1, 1, 1, 0, 0]);
    let d = dice(&a, &b, Selection::Complete).unwrap();
    outcome(
        worst <= 1e-12 && d == 0.5,
        format!("max |msd - brute force| {worst:.1e} over 100 pairs, Dice {d}"),
    )
}

/// Centreline parameter of the phantom point nearest to `q`.
fn phantom_param(p: &PhantomParams, q: &Point) -> f64 {
    let n = 36_000;
    (0..n)
        .map(|i| TAU * i as f64 / n as f64)
        .min_by(|&a, &b| {
            (p.centerline(a) - q)
                .norm()
                .total_cmp(&(p.centerline(b) - q).norm())
        })
        .unwrap()
}

fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// SH, PAM and the two commissures from dense samples of the centreline
/// height: global maximum, half the perimeter away (snapped to a curvature
/// minimum within 10°), and the two lowest minima at least 60° apart.
fn landmark_oracle(p: &PhantomParams) -> [f64; 4] {
    let n = 36_000;
    let t: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    let pts: Vec<Point> = t.iter().map(|&s| p.centerline(s)).collect();
    let z: Vec<f64> = pts.iter().map(|q| q.z).collect();
    let sh = (0..n).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap();

    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| z[i] < z[(i + n - 1) % n] && z[i] <= z[(i + 1) % n])
        .collect();
    minima.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let c1 = minima[0];
    let c2 = *minima
        .iter()
        .find(|&&i| angle_between(t[i], t[c1]) >= 60f64.to_radians())
        .unwrap();

    let seg = |i: usize| (pts[(i + 1) % n] - pts[i]).norm();
    let perimeter: f64 = (0..n).map(seg).sum();
    let (mut k, mut walked) = (sh, 0.0);
    while walked + seg(k) < 0.5 * perimeter {
        walked += seg(k);
        k = (k + 1) % n;
    }
    let curvature = |i: usize| {
        let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
        2.0 * (b - a).cross(&(c - b)).norm() / ((b - a).norm() * (c - b).norm() * (c - a).norm())
    };
    let window = (10.0 / 360.0 * n as f64) as usize;
    let pam = (k + n - window..=k + n + window)
        .map(|i| i % n)
        .filter(|&i| {
            curvature(i) < curvature((i + n - 1) % n) && curvature(i) <= curvature((i + 1) % n)
        })
        .min_by_key(|&i| ((i + n - k) % n).min((k + n - i) % n))
        .unwrap_or(k);
    [t[sh], t[pam], t[c1], t[c2]]
}

fn landmarks(cohort: &[Run]) -> Outcome {
    let r = cohort
        .iter()
        .find(|r| r.params.h1 == 3.0 && r.params.h2 == 1.5)
        .unwrap();
    let Some(lm) = &r.analysis.landmarks else {
        return outcome(false, "no landmarks on the h1 = 3, h2 = 1.5 phantom");
    };
    let [sh, pam, c1, c2] = landmark_oracle(&r.params);
    let got = |q: &Point| phantom_param(&r.params, q);
    let (mc, lc) = (got(&lm.mc.point), got(&lm.lc.point));
    let commissures = (angle_between(mc, c1).max(angle_between(lc, c2)))
        .min(angle_between(mc, c2).max(angle_between(lc, c1)));
    let errs = [
        angle_between(got(&lm.sh.point), sh),
        angle_between(got(&lm.pam.point), pam),
        commissures,
    ]
    .map(f64::to_degrees);
    let ordered = cohort
        .iter()
        .filter(|r| {
            r.analysis
                .landmarks
                .as_ref()
                .is_some_and(cyclic_order_holds)
        })
        .count();
    outcome(
        errs.iter().all(|&e| e <= 3.0) && ordered == cohort.len(),
        format!(
            "SH {:.2}°, PAM {:.2}°, commissures {:.2}° from oracle; cyclic order on {ordered}/{}",
            errs[0],
            errs[1],
            errs[2],
            cohort.len()
        ),
    )
}

fn distance_to_polyline(q: &Point, line: &[Point]) -> f64 {
    line.windows(2)
        .map(|w| point_segment_distance(q, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Largest distance between the designed contact arc (outside the annulus
/// tube) and the fitted curve, each way over their common span.
fn coaptation_deviation(r: &Run) -> Option<f64> {
    let c = r.analysis.coaptation.as_ref()?;
    let p = &r.params;
    let ring: Vec<Point> = (0..=720)
        .map(|i| p.centerline(TAU * i as f64 / 720.0))
        .collect();
    let arc: Vec<Point> = r
        .truth
        .coaptation_arc
        .iter()
        .copied()
        .filter(|q| distance_to_polyline(q, &ring) > p.tube_radius)
        .collect();
    let u = |q: &Point| (q - c.origin).dot(&c.axis_u);
    let (lo, hi) = arc
        .iter()
        .map(u)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
            (l.min(x), h.max(x))
        });
    let [clo, chi] = c.u_range;
    let d1 = arc
        .iter()
        .filter(|q| (clo..=chi).contains(&u(q)))
        .map(|q| distance_to_polyline(q, &c.polyline.points))
        .fold(0.0, f64::max);
    let d2 = c
        .polyline
        .points
        .iter()
        .filter(|q| (lo..=hi).contains(&u(q)))
        .map(|q| distance_to_polyline(q, &arc))
        .fold(0.0, f64::max);
    Some(d1.max(d2))
}

fn coaptation(cohort: &[Run]) -> Outcome {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for r in cohort.iter().filter(|r| r.params.prolapse_bump == 0.0) {
        match coaptation_deviation(r) {
            Some(d) => {
                worst = worst.max(d);
                if d > 1.0 {
                    pass = false;
                    parts.push(format!("{} deviates {d:.2} mm", label(&r.params)));
                }
            }
            None => {
                pass = false;
                parts.push(format!("{} has no coaptation line", label(&r.params)));
            }
        }
    }
    let mut symmetric = 0;
    for r in cohort {
        let (Some(al), Some(pl)) = (&r.analysis.anterior.middle, &r.analysis.posterior.middle)
        else {
            continue;
        };
        let key = |p: &Point| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        let sorted = |a, b| {
            let c = find_coaptation_candidates(a, b, PipelineConfig::default().epsilon).unwrap();
            let mut k: Vec<_> = c.points.iter().map(key).collect();
            k.sort();
            (k, c.epsilon.to_bits())
        };
        if sorted(al, pl) == sorted(pl, al) {
            symmetric += 1;
        }
    }
    pass &= symmetric == cohort.len();
    outcome(
        pass,
        format!(
            "max deviation {worst:.2} mm on the no-prolapse phantoms; swap-symmetric on {symmetric}/{}{}",
            cohort.len(),
            if parts.is_empty() { String::new() } else { format!("; {}", parts.join("; ")) }
        ),
    )
}

/// Scalar leaves of the measurement sections of a report.
fn leaves(v: &Value, path: String, out: &mut BTreeMap<String, f64>) {
    match v {
        Value::Number(n) => {
            out.insert(path, n.as_f64().unwrap());
        }
        Value::Object(m) => m
            .iter()
            .for_each(|(k, x)| leaves(x, format!("{path}.{k}"), out)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, x)| leaves(x, format!("{path}[{i}]"), out)),
        _ => {}
    }
}

fn report_scalars(a: &Analysis) -> BTreeMap<String, f64> {
    let doc = serde_json::to_value(&a.report).unwrap();
    let mut out = BTreeMap::new();
    for section in ["annulus", "leaflets", "coaptation"] {
        leaves(&doc[section], section.to_string(), &mut out);
    }
    out
}

fn invariance(r: &Run) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let iso = Isometry3::new(
        Vector3::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        ),
        axis.normalize() * rng.random_range(0.2..3.0),
    );
    let moved = analyze_volume(
        &r.volume.transformed(&iso),
        &PipelineConfig::default(),
        "moved",
    )
    .unwrap();
    let (a, b) = (report_scalars(&r.analysis), report_scalars(&moved));
    let mut worst = 0.0f64;
    let mut worst_key = String::new();
    for (k, x) in &a {
        let Some(y) = b.get(k) else {
            return outcome(false, format!("{k} missing after the transform"));
        };
        let rel = (x - y).abs() / x.abs().max(f64::MIN_POSITIVE);
        if rel > worst {
            worst = rel;
            worst_key = k.clone();
        }
    }
    outcome(
        worst <= 1e-3 && a.len() == b.len(),
        format!(
            "{} values, worst relative change {worst:.1e} ({worst_key})",
            a.len()
        ),
    )
}

fn timing() -> Outcome {
    let (volume, _) = generate_phantom(&PhantomParams {
        dims: Some([160, 160, 160]),
        ..PhantomParams::default()
    })
    .unwrap();
    let t = Instant::now();
    let a = analyze_volume(&volume, &PipelineConfig::default(), "160").unwrap();
    let total = t.elapsed().as_secs_f64();
    let refine = a.report.timing_s.refinement_s;
    outcome(
        total < 60.0 && refine < 15.0 && a.report.failures.is_empty(),
        format!("160³ at 0.4 mm: total {total:.2} s, refinement {refine:.2} s"),
    )
}

fn agreement() -> Outcome {
    let pair = |a: f64, b: f64| {
        let m = |v: f64| BTreeMap::from([("d_cc_mm".to_string(), v)]);
        (m(a), m(b))
    };
    let single = compare(&[pair(36.24, 43.79)]).unwrap();
    let s = single[0].1;
    // 7.55 has no exact binary form; the bias must be the rounded difference.
    let bias_ok = s.bias == 43.79 - 36.24 && (s.bias - 7.55).abs() < 1e-12 && s.sd.is_none();

    let two = bland_altman(&[(1.0, 3.0), (2.0, 3.0)]).unwrap();
    // Differences 2 and 1: mean 1.5, sample SD sqrt(0.5).
    let sd = 0.5f64.sqrt();
    let two_ok = (two.bias - 1.5).abs() <= 1e-12
        && (two.sd.unwrap() - sd).abs() <= 1e-12
        && (two.loa_low.unwrap() - (1.5 - 1.96 * sd)).abs() <= 1e-12
        && (two.loa_high.unwrap() - (1.5 + 1.96 * sd)).abs() <= 1e-12;
    outcome(
        bias_ok && two_ok,
        format!(
            "single-pair bias {}, two-pair SD {} (hand {sd})",
            s.bias,
            two.sd.unwrap()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let cohort: Vec<Run> = COHORT
        .iter()
        .map(|&(d_cc, d_ap, h1, h2, prolapse_bump)| {
            run(PhantomParams {
                d_cc,
                d_ap,
                h1,
                h2,
                prolapse_bump,
                spacing: 0.4,
                ..PhantomParams::default()
            })
        })
        .collect();
    let cohort_secs = start.elapsed().as_secs_f64();
    let reference = cohort.iter().find(|r| r.params.d_cc == 36.0).unwrap();

    let results = [
        ("phantom round-trip", round_trip(&cohort, cohort_secs)),
        ("annulus gap correction", gap_correction(reference)),
        ("surface distance and Dice oracles", metric_oracles()),
        ("landmark positions and order", landmarks(&cohort)),
        ("coaptation recovery", coaptation(&cohort)),
        ("rigid-motion invariance", invariance(reference)),
        ("timing budget", timing()),
        ("Bland-Altman arithmetic", agreement()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "[{}] {} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += !o.pass as usize;
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
