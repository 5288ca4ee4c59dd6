//! Machine-readable analysis report and report comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::metrics::{bland_altman, AgreementStats};

/// Pipeline stages, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Io,
    Refinement,
    Landmarks,
    LeafletFeatures,
    Quantification,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Io => 2,
            Stage::Refinement => 3,
            Stage::Landmarks => 4,
            Stage::LeafletFeatures => 5,
            Stage::Quantification => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Io => "io",
            Stage::Refinement => "refinement",
            Stage::Landmarks => "landmarks",
            Stage::LeafletFeatures => "leaflet-features",
            Stage::Quantification => "quantification",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub code: i32,
    pub reason: String,
}

impl StageFailure {
    pub fn new(stage: Stage, reason: impl std::fmt::Display) -> Self {
        StageFailure {
            stage,
            code: stage.exit_code(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnulusReport {
    pub d_cc_mm: Option<f64>,
    pub d_ap_mm: Option<f64>,
    pub height_mm: Option<f64>,
    pub length_mm: Option<f64>,
    pub area_mm2: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafletReport {
    pub length_mm: Option<f64>,
    pub area_mm2: Option<f64>,
    pub height_min_mm: Option<f64>,
    pub height_max_mm: Option<f64>,
    pub height_mean_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafletsReport {
    pub anterior: LeafletReport,
    pub posterior: LeafletReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarksReport {
    pub sh: [f64; 3],
    pub pam: [f64; 3],
    pub mc: [f64; 3],
    pub lc: [f64; 3],
}

pub fn xyz(p: &Point) -> [f64; 3] {
    [p.x, p.y, p.z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaptationCoefficients {
    /// In-plane offset polynomial, constant term first.
    pub v: Vec<f64>,
    /// Height polynomial, constant term first.
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaptationReport {
    pub coefficients: CoaptationCoefficients,
    /// Inter-commissural range mapped onto [−1, 1] for the polynomials.
    pub u_range_mm: [f64; 2],
    pub rms_mm: f64,
    pub n_points: usize,
    pub epsilon_mm: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub refinement_s: f64,
    pub feature_extraction_s: f64,
    pub quantification_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: String,
    pub tool_version: String,
    pub theta_offset_deg: f64,
    pub tube_radius_mm: f64,
    pub grid_resolution_mm: f64,
    pub epsilon_mm: f64,
    pub smoothing_iterations: usize,
    pub smoothing_passband: f64,
    pub middle_surface_lambda: Option<f64>,
    pub middle_surface_bin_mm: Option<f64>,
    pub leaflet_length_on: String,
    pub atrial_hint: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub annulus: AnnulusReport,
    pub leaflets: LeafletsReport,
    pub landmarks: Option<LandmarksReport>,
    pub coaptation: Option<CoaptationReport>,
    pub timing_s: StageTiming,
    pub provenance: Provenance,
    /// Stages that failed, in pipeline order; null fields trace back here.
    pub failures: Vec<StageFailure>,
}

impl Report {
    /// Exit code of the first failed stage, or 0.
    pub fn exit_code(&self) -> i32 {
        self.failures.first().map_or(0, |f| f.code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Measurement names shared by reports and truth records, in table order.
pub const MEASUREMENTS: [&str; 11] = [
    "d_cc_mm",
    "d_ap_mm",
    "annulus_height_mm",
    "annulus_length_mm",
    "annulus_area_mm2",
    "anterior_length_mm",
    "posterior_length_mm",
    "anterior_area_mm2",
    "posterior_area_mm2",
    "anterior_height_max_mm",
    "posterior_height_max_mm",
];

/// Measurement name to value.
pub type Measurements = BTreeMap<String, f64>;

/// Flat measurement table of a report or truth JSON document. Missing or
/// null values are left out.
pub fn measurements(doc: &Value) -> Result<Measurements> {
    let get = |path: &[&str]| -> Option<f64> {
        let mut v = doc;
        for k in path {
            v = v.get(k)?;
        }
        v.as_f64()
    };
    let paths: Vec<(&str, Vec<&str>)> =
        if doc.get("annulus").is_some() && doc.get("leaflets").is_some() {
            vec![
                ("d_cc_mm", vec!["annulus", "d_cc_mm"]),
                ("d_ap_mm", vec!["annulus", "d_ap_mm"]),
                ("annulus_height_mm", vec!["annulus", "height_mm"]),
                ("annulus_length_mm", vec!["annulus", "length_mm"]),
                ("annulus_area_mm2", vec!["annulus", "area_mm2"]),
                (
                    "anterior_length_mm",
                    vec!["leaflets", "anterior", "length_mm"],
                ),
                (
                    "posterior_length_mm",
                    vec!["leaflets", "posterior", "length_mm"],
                ),
                (
                    "anterior_area_mm2",
                    vec!["leaflets", "anterior", "area_mm2"],
                ),
                (
                    "posterior_area_mm2",
                    vec!["leaflets", "posterior", "area_mm2"],
                ),
                (
                    "anterior_height_max_mm",
                    vec!["leaflets", "anterior", "height_max_mm"],
                ),
                (
                    "posterior_height_max_mm",
                    vec!["leaflets", "posterior", "height_max_mm"],
                ),
            ]
        } else if doc.get("d_cc_mm").is_some() && doc.get("annulus_area_mm2").is_some() {
            vec![
                ("d_cc_mm", vec!["d_cc_mm"]),
                ("d_ap_mm", vec!["d_ap_mm"]),
                ("annulus_height_mm", vec!["height_mm"]),
                ("annulus_length_mm", vec!["length_mm"]),
                ("annulus_area_mm2", vec!["annulus_area_mm2"]),
                ("anterior_length_mm", vec!["anterior_length_mm"]),
                ("posterior_length_mm", vec!["posterior_length_mm"]),
                ("anterior_area_mm2", vec!["anterior_area_mm2"]),
                ("posterior_area_mm2", vec!["posterior_area_mm2"]),
                ("posterior_height_max_mm", vec!["posterior_height_max_mm"]),
            ]
        } else {
            return Err(Error::InvalidInput(
                "document is neither an analysis report nor a truth record".into(),
            ));
        };
    Ok(paths
        .into_iter()
        .filter_map(|(name, path)| get(&path).map(|v| (name.to_string(), v)))
        .collect())
}

/// One agreement row per measurement present in every pair; differences
/// are `b − a`.
pub fn compare(pairs: &[(Measurements, Measurements)]) -> Result<Vec<(String, AgreementStats)>> {
    if pairs.is_empty() {
        return Err(Error::Empty("nothing to compare"));
    }
    let mut rows = Vec::new();
    for name in MEASUREMENTS {
        let values: Option<Vec<(f64, f64)>> = pairs
            .iter()
            .map(|(a, b)| Some((*a.get(name)?, *b.get(name)?)))
            .collect();
        if let Some(v) = values {
            rows.push((name.to_string(), bland_altman(&v)?));
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(
            "the documents share no measurement".into(),
        ));
    }
    Ok(rows)
}

/// `measurement,n,bias,sd,loa_low,loa_high` with empty cells for undefined
/// limits.
pub fn comparison_csv(rows: &[(String, AgreementStats)]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("measurement,n,bias,sd,loa_low,loa_high\n");
    for (name, st) in rows {
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{}",
            st.n,
            st.bias,
            opt(st.sd),
            opt(st.loa_low),
            opt(st.loa_high)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn report(d_cc: f64) -> Value {
        json!({
            "annulus": {"d_cc_mm": d_cc, "d_ap_mm": 30.0, "height_mm": 6.0, "length_mm": 100.0, "area_mm2": null},
            "leaflets": {"anterior": {"length_mm": 20.0}, "posterior": {}},
        })
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            [
                Stage::Io,
                Stage::Refinement,
                Stage::Landmarks,
                Stage::LeafletFeatures,
                Stage::Quantification
            ]
            .map(Stage::exit_code),
            [2, 3, 4, 5, 6]
        );
        assert_eq!(
            serde_json::to_value(Stage::LeafletFeatures).unwrap(),
            json!("leaflet-features")
        );
    }

    #[test]
    fn self_comparison_has_zero_bias() {
        let m = measurements(&report(36.0)).unwrap();
        assert!(!m.contains_key("annulus_area_mm2"));
        let rows = compare(&[(m.clone(), m)]).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|(_, s)| s.bias == 0.0));
    }

    #[test]
    fn single_pair_bias() {
        let rows = compare(&[(
            measurements(&report(36.24)).unwrap(),
            measurements(&report(43.79)).unwrap(),
        )])
        .unwrap();
        let (name, st) = &rows[0];
        assert_eq!(name, "d_cc_mm");
        assert!((st.bias - 7.55).abs() < 1e-12);
        let csv = comparison_csv(&rows);
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(&row[..2], ["d_cc_mm", "1"]);
        assert!((row[2].parse::<f64>().unwrap() - 7.55).abs() < 1e-12);
    }

    #[test]
    fn schema_mismatch() {
        assert!(measurements(&json!({"foo": 1})).is_err());
        let truth = json!({"d_cc_mm": 36.0, "annulus_area_mm2": 900.0});
        assert_eq!(measurements(&truth).unwrap().len(), 2);
        let a = measurements(&json!({"d_cc_mm": 1.0, "annulus_area_mm2": 2.0})).unwrap();
        let b: BTreeMap<String, f64> = [("posterior_length_mm".to_string(), 1.0)].into();
        assert!(compare(&[(a, b)]).is_err());
    }
}
