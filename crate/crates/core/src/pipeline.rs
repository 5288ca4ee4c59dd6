//! End-to-end analysis of a labeled valve volume.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annulus::{
    curve_frame, fit_valve_frame, orient_normal, orient_normal_toward, refine_annulus,
    RefineParams, RefinedAnnulus, ValveFrame,
};
use crate::coaptation::{
    find_coaptation_candidates, fit_coaptation_line, fit_middle_surface, CoaptationCandidates,
    CoaptationCurve, MiddleSurfaceParams, DEFAULT_EPSILON, DEFAULT_GRID_RESOLUTION, MAX_EPSILON,
};
use crate::error::{Error, Result};
use crate::geometry::{Plane, Point, Vector};
use crate::heightfield::HeightField;
use crate::landmarks::{detect_annular_landmarks, leaflet_tip, length_plane, AnnularLandmarks};
use crate::mesh::{extract_surface, smooth_windowed_sinc, SmoothingParams, TriangleMesh};
use crate::morphometry::{
    annular_diameters, annular_height, annular_length, leaflet_area, leaflet_height_field,
    leaflet_length, leaflet_length_on_mesh, orifice_surface, valve_grid,
};
use crate::report::{
    xyz, AnnulusReport, CoaptationCoefficients, CoaptationReport, LandmarksReport, LeafletReport,
    LeafletsReport, Provenance, Report, Stage, StageFailure, StageTiming,
};
use crate::volume::{Label, LabeledVolume};

/// Surface on which leaflet lengths are traced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthSurface {
    /// Fitted middle surface.
    #[default]
    Middle,
    /// Binned section of the leaflet mesh.
    Mesh,
}

impl LengthSurface {
    pub fn name(self) -> &'static str {
        match self {
            LengthSurface::Middle => "middle",
            LengthSurface::Mesh => "mesh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub refine: RefineParams,
    pub grid_resolution: f64,
    pub epsilon: f64,
    pub smoothing: SmoothingParams,
    pub middle_surface: MiddleSurfaceParams,
    pub leaflet_length_on: LengthSurface,
    /// Direction toward the atrium; when unset the leaflets decide.
    pub atrial_hint: Option<Vector>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            refine: RefineParams::default(),
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            epsilon: DEFAULT_EPSILON,
            smoothing: SmoothingParams::default(),
            middle_surface: MiddleSurfaceParams::default(),
            leaflet_length_on: LengthSurface::Middle,
            atrial_hint: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.refine.theta_offset_deg;
        if !(t > 0.0 && t <= 90.0) {
            return Err(Error::InvalidInput(format!(
                "theta offset must lie in (0, 90] degrees, got {t}"
            )));
        }
        let r = self.refine.tube_radius;
        if !(r > 0.0 && r <= 10.0) {
            return Err(Error::InvalidInput(format!(
                "tube radius must lie in (0, 10] mm, got {r}"
            )));
        }
        let g = self.grid_resolution;
        if !(0.05..=5.0).contains(&g) {
            return Err(Error::InvalidInput(format!(
                "grid resolution must lie in [0.05, 5] mm, got {g}"
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= MAX_EPSILON) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, {MAX_EPSILON}] mm, got {}",
                self.epsilon
            )));
        }
        let s = &self.smoothing;
        if s.iterations > 1000 || !(s.passband > 0.0 && s.passband <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "smoothing needs at most 1000 iterations and a passband in (0, 2], got {} and {}",
                s.iterations, s.passband
            )));
        }
        if let Some(h) = self.atrial_hint {
            if !(h.norm() > 0.0 && h.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidInput(
                    "atrial hint must be a non-zero vector".into(),
                ));
            }
        }
        Ok(())
    }

    fn provenance(&self, input: &str) -> Provenance {
        Provenance {
            input: input.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            theta_offset_deg: self.refine.theta_offset_deg,
            tube_radius_mm: self.refine.tube_radius,
            grid_resolution_mm: self.grid_resolution,
            epsilon_mm: self.epsilon,
            smoothing_iterations: self.smoothing.iterations,
            smoothing_passband: self.smoothing.passband,
            middle_surface_lambda: self.middle_surface.lambda,
            middle_surface_bin_mm: self.middle_surface.bin_size,
            leaflet_length_on: self.leaflet_length_on.name().to_string(),
            atrial_hint: self.atrial_hint.map(|v| [v.x, v.y, v.z]),
        }
    }
}

/// Per-leaflet intermediate results.
#[derive(Debug, Clone, Default)]
pub struct LeafletResult {
    pub mesh: Option<TriangleMesh>,
    pub tip: Option<Point>,
    pub middle: Option<HeightField>,
    /// Signed height above the orifice surface.
    pub height: Option<HeightField>,
}

/// Everything the pipeline produced, including partial results.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: Report,
    pub annulus_mesh: Option<TriangleMesh>,
    pub refined: Option<RefinedAnnulus>,
    pub frame: Option<ValveFrame>,
    pub landmarks: Option<AnnularLandmarks>,
    pub length_plane: Option<Plane>,
    pub anterior: LeafletResult,
    pub posterior: LeafletResult,
    pub orifice: Option<HeightField>,
    pub candidates: Option<CoaptationCandidates>,
    pub coaptation: Option<CoaptationCurve>,
}

impl Analysis {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }
}

fn surface(
    volume: &LabeledVolume,
    label: Label,
    smoothing: &SmoothingParams,
) -> Result<TriangleMesh> {
    let raw = extract_surface(volume, label.code())?;
    smooth_windowed_sinc(&raw, smoothing.iterations, smoothing.passband)
}

/// Runs every stage it can. Stage errors are recorded in the report and
/// switch off the stages that depend on them; only an invalid
/// configuration is returned as an error.
pub fn analyze_volume(
    volume: &LabeledVolume,
    config: &PipelineConfig,
    input: &str,
) -> Result<Analysis> {
    config.validate()?;
    let start = Instant::now();
    let mut timing = StageTiming::default();
    let mut failures = Vec::new();
    let mut out = Analysis {
        report: Report {
            annulus: AnnulusReport::default(),
            leaflets: LeafletsReport::default(),
            landmarks: None,
            coaptation: None,
            timing_s: timing,
            provenance: config.provenance(input),
            failures: Vec::new(),
        },
        annulus_mesh: None,
        refined: None,
        frame: None,
        landmarks: None,
        length_plane: None,
        anterior: LeafletResult::default(),
        posterior: LeafletResult::default(),
        orifice: None,
        candidates: None,
        coaptation: None,
    };

    // Refinement: surfaces, valve frame and corrected annulus.
    let t0 = Instant::now();
    let refined = (|| -> Result<()> {
        for (label, slot) in [
            (Label::Anterior, &mut out.anterior),
            (Label::Posterior, &mut out.posterior),
        ] {
            match surface(volume, label, &config.smoothing) {
                Ok(m) => slot.mesh = Some(m),
                Err(e) => failures.push(StageFailure::new(
                    Stage::LeafletFeatures,
                    format!("{} leaflet: {e}", label.name()),
                )),
            }
        }
        let annulus = surface(volume, Label::Annulus, &config.smoothing)?;
        let frame = fit_valve_frame(&annulus.vertices)?;
        let frame = match config.atrial_hint {
            Some(h) => orient_normal_toward(&frame, &h)?,
            None => {
                let leaflets: Vec<&TriangleMesh> = [&out.anterior.mesh, &out.posterior.mesh]
                    .into_iter()
                    .flatten()
                    .collect();
                if leaflets.is_empty() {
                    return Err(Error::InvalidInput(
                        "no leaflet to orient the valve axis; pass an atrial hint".into(),
                    ));
                }
                orient_normal(&frame, &leaflets)?
            }
        };
        let refined = refine_annulus(&annulus, &frame, &config.refine)?;
        out.frame = Some(curve_frame(&refined.curve, &refined.frame)?);
        out.annulus_mesh = Some(annulus);
        out.refined = Some(refined);
        Ok(())
    })();
    timing.refinement_s = t0.elapsed().as_secs_f64();
    if let Err(e) = refined {
        failures.insert(0, StageFailure::new(Stage::Refinement, e));
        return Ok(finish(out, failures, timing, start));
    }
    let frame = out.frame.unwrap();
    let curve = out.refined.as_ref().unwrap().curve.clone();

    // Feature extraction: landmarks, middle surfaces, coaptation.
    let t1 = Instant::now();
    let landmarks = match detect_annular_landmarks(&curve, &frame) {
        Ok(lm) => lm,
        Err(e) => {
            failures.push(StageFailure::new(Stage::Landmarks, e));
            timing.feature_extraction_s = t1.elapsed().as_secs_f64();
            quantify_annulus(
                &mut out,
                None,
                &frame,
                &curve,
                config,
                &mut failures,
                &mut timing,
            );
            return Ok(finish(out, failures, timing, start));
        }
    };
    out.landmarks = Some(landmarks);
    out.report.landmarks = Some(LandmarksReport {
        sh: xyz(&landmarks.sh.point),
        pam: xyz(&landmarks.pam.point),
        mc: xyz(&landmarks.mc.point),
        lc: xyz(&landmarks.lc.point),
    });

    let meshes: Vec<&TriangleMesh> = [&out.anterior.mesh, &out.posterior.mesh]
        .into_iter()
        .flatten()
        .collect();
    let grid = valve_grid(&curve, &frame, &meshes, config.grid_resolution);
    let plane = length_plane(&landmarks, &frame);
    match (&grid, &plane) {
        (Ok(grid), Ok(plane)) => {
            out.length_plane = Some(*plane);
            for (name, anchor, slot) in [
                ("anterior", landmarks.sh.point, &mut out.anterior),
                ("posterior", landmarks.pam.point, &mut out.posterior),
            ] {
                let Some(mesh) = &slot.mesh else { continue };
                match leaflet_tip(mesh, plane, &anchor) {
                    Ok(t) => slot.tip = Some(t),
                    Err(e) => failures.push(StageFailure::new(
                        Stage::LeafletFeatures,
                        format!("{name} tip: {e}"),
                    )),
                }
                match fit_middle_surface(mesh, &frame, grid, &config.middle_surface) {
                    Ok(f) => slot.middle = Some(f),
                    Err(e) => failures.push(StageFailure::new(
                        Stage::LeafletFeatures,
                        format!("{name} middle surface: {e}"),
                    )),
                }
            }
        }
        (Err(e), _) | (_, Err(e)) => failures.push(StageFailure::new(Stage::LeafletFeatures, e)),
    }
    match (&out.anterior.middle, &out.posterior.middle) {
        (Some(a), Some(p)) => {
            let fitted = find_coaptation_candidates(a, p, config.epsilon).and_then(|c| {
                if c.points.is_empty() {
                    return Err(Error::NoIntersection(format!(
                        "leaflets never come within {} mm of each other",
                        c.epsilon
                    )));
                }
                let line = fit_coaptation_line(&c.points, &landmarks, &frame);
                out.candidates = Some(c);
                line
            });
            match fitted {
                Ok(line) => {
                    out.report.coaptation = Some(CoaptationReport {
                        coefficients: CoaptationCoefficients {
                            v: line.coeff_v.clone(),
                            h: line.coeff_h.clone(),
                        },
                        u_range_mm: line.u_range,
                        rms_mm: line.rms,
                        n_points: line.n_points,
                        epsilon_mm: out
                            .candidates
                            .as_ref()
                            .map_or(config.epsilon, |c| c.epsilon),
                    });
                    out.coaptation = Some(line);
                }
                Err(e) => failures.push(StageFailure::new(
                    Stage::LeafletFeatures,
                    format!("coaptation: {e}"),
                )),
            }
        }
        _ => failures.push(StageFailure::new(
            Stage::LeafletFeatures,
            "coaptation needs both leaflet middle surfaces",
        )),
    }
    timing.feature_extraction_s = t1.elapsed().as_secs_f64();

    quantify_annulus(
        &mut out,
        Some(&landmarks),
        &frame,
        &curve,
        config,
        &mut failures,
        &mut timing,
    );
    Ok(finish(out, failures, timing, start))
}

fn quantify_annulus(
    out: &mut Analysis,
    landmarks: Option<&AnnularLandmarks>,
    frame: &ValveFrame,
    curve: &crate::spline::AnnulusCurve,
    config: &PipelineConfig,
    failures: &mut Vec<StageFailure>,
    timing: &mut StageTiming,
) {
    let t = Instant::now();
    let a = &mut out.report.annulus;
    a.length_mm = Some(annular_length(curve));
    a.height_mm = Some(annular_height(curve, frame));
    if let Some(lm) = landmarks {
        let (ap, cc) = annular_diameters(lm);
        a.d_ap_mm = Some(ap);
        a.d_cc_mm = Some(cc);
    }
    let meshes: Vec<&TriangleMesh> = [&out.anterior.mesh, &out.posterior.mesh]
        .into_iter()
        .flatten()
        .collect();
    let orifice = valve_grid(curve, frame, &meshes, config.grid_resolution)
        .and_then(|g| orifice_surface(curve, frame, &g));
    match orifice {
        Ok((field, area)) => {
            out.report.annulus.area_mm2 = Some(area);
            out.orifice = Some(field);
        }
        Err(e) => failures.push(StageFailure::new(
            Stage::Quantification,
            format!("orifice surface: {e}"),
        )),
    }

    if let (Some(lm), Some(plane)) = (landmarks, out.length_plane) {
        for (name, anchor, slot, rep) in [
            (
                "anterior",
                lm.sh.point,
                &mut out.anterior,
                &mut out.report.leaflets.anterior,
            ),
            (
                "posterior",
                lm.pam.point,
                &mut out.posterior,
                &mut out.report.leaflets.posterior,
            ),
        ] {
            if let Err(e) = quantify_leaflet(
                slot,
                rep,
                out.orifice.as_ref(),
                &plane,
                frame,
                &anchor,
                config,
            ) {
                failures.push(StageFailure::new(
                    Stage::Quantification,
                    format!("{name} leaflet: {e}"),
                ));
            }
        }
    }
    timing.quantification_s = t.elapsed().as_secs_f64();
}

fn quantify_leaflet(
    slot: &mut LeafletResult,
    rep: &mut LeafletReport,
    orifice: Option<&HeightField>,
    plane: &Plane,
    frame: &ValveFrame,
    anchor: &Point,
    config: &PipelineConfig,
) -> Result<()> {
    let Some(middle) = &slot.middle else {
        return Ok(());
    };
    rep.area_mm2 = Some(leaflet_area(middle)?);
    if let Some(tip) = &slot.tip {
        rep.length_mm = Some(match config.leaflet_length_on {
            LengthSurface::Middle => leaflet_length(middle, plane, anchor, tip)?,
            LengthSurface::Mesh => {
                let mesh = slot.mesh.as_ref().expect("middle surface implies a mesh");
                leaflet_length_on_mesh(mesh, plane, frame, anchor, tip, config.grid_resolution)?
            }
        });
    }
    if let Some(orifice) = orifice {
        let h = leaflet_height_field(middle, orifice)?;
        if let Some(s) = h.summary() {
            rep.height_min_mm = Some(s.min);
            rep.height_max_mm = Some(s.max);
            rep.height_mean_mm = Some(s.mean);
        }
        slot.height = Some(h);
    }
    Ok(())
}

fn finish(
    mut out: Analysis,
    mut failures: Vec<StageFailure>,
    mut timing: StageTiming,
    start: Instant,
) -> Analysis {
    timing.total_s = start.elapsed().as_secs_f64();
    failures.sort_by_key(|f| f.code);
    out.report.failures = failures;
    out.report.timing_s = timing;
    out
}

/// Writes the report, meshes, landmarks, coaptation line and height maps
/// into `dir`.
pub fn write_outputs(analysis: &Analysis, dir: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write as _;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.json", &analysis.report.to_json())?;
    let meshes = [
        ("annulus.obj", analysis.annulus_mesh.as_ref()),
        (
            "annulus_tube.obj",
            analysis.refined.as_ref().map(|r| &r.tube),
        ),
        ("anterior.obj", analysis.anterior.mesh.as_ref()),
        ("posterior.obj", analysis.posterior.mesh.as_ref()),
    ];
    for (name, mesh) in meshes {
        if let Some(m) = mesh {
            write(name, &m.to_obj())?;
        }
    }
    if let Some(lm) = &analysis.landmarks {
        let mut s = String::from("name,x,y,z\n");
        for (name, p) in lm.named() {
            let _ = writeln!(s, "{name},{},{},{}", p.x, p.y, p.z);
        }
        write("landmarks.csv", &s)?;
    }
    if let Some(r) = &analysis.refined {
        let mut s = String::from("theta,x,y,z\n");
        for (t, p) in r.skeleton.thetas.iter().zip(&r.skeleton.centers) {
            let _ = writeln!(s, "{t},{},{},{}", p.x, p.y, p.z);
        }
        write("skeleton.csv", &s)?;
    }
    if let Some(c) = &analysis.coaptation {
        let mut s = String::from("x,y,z\n");
        for p in &c.polyline.points {
            let _ = writeln!(s, "{},{},{}", p.x, p.y, p.z);
        }
        write("coaptation.csv", &s)?;
    }
    for (name, leaf) in [
        ("anterior", &analysis.anterior),
        ("posterior", &analysis.posterior),
    ] {
        if let (Some(h), Some(m)) = (&leaf.height, &leaf.middle) {
            write(&format!("{name}_height.csv"), &h.to_csv())?;
            let (mesh, scalars) = h.surface_mesh(m)?;
            write(&format!("{name}_height.obj"), &mesh.to_obj())?;
            let mut s = String::from("vertex,height\n");
            for (i, v) in scalars.iter().enumerate() {
                let _ = writeln!(s, "{},{v}", i + 1);
            }
            write(&format!("{name}_height_values.csv"), &s)?;
        }
    }
    Ok(())
}

/// Loads a mask file and analyzes it; load failures become an I/O stage
/// failure in the returned report.
pub fn analyze_file(
    path: impl AsRef<Path>,
    map: &crate::volume::LabelMap,
    config: &PipelineConfig,
) -> Result<Analysis> {
    let path = path.as_ref();
    let input = path.display().to_string();
    match crate::nrrd::load_mask_with_map(path, map) {
        Ok(v) => analyze_volume(&v, config, &input),
        Err(e) => {
            config.validate()?;
            let report = Report {
                annulus: AnnulusReport::default(),
                leaflets: LeafletsReport::default(),
                landmarks: None,
                coaptation: None,
                timing_s: StageTiming::default(),
                provenance: config.provenance(&input),
                failures: vec![StageFailure::new(Stage::Io, e)],
            };
            Ok(Analysis {
                report,
                annulus_mesh: None,
                refined: None,
                frame: None,
                landmarks: None,
                length_plane: None,
                anterior: LeafletResult::default(),
                posterior: LeafletResult::default(),
                orifice: None,
                candidates: None,
                coaptation: None,
            })
        }
    }
}
