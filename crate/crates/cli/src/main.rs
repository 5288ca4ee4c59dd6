use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use valvemorph::annulus::RefineParams;
use valvemorph::coaptation::{MiddleSurfaceParams, DEFAULT_EPSILON, DEFAULT_GRID_RESOLUTION};
use valvemorph::mesh::SmoothingParams;
use valvemorph::nrrd::{load_mask_with_map, save_mask};
use valvemorph::phantom::{generate_phantom, PhantomParams};
use valvemorph::pipeline::{analyze_file, write_outputs, LengthSurface, PipelineConfig};
use valvemorph::report::{compare, comparison_csv, measurements};
use valvemorph::{LabelMap, Vector};

/// Exit code for unreadable inputs, unwritable outputs and bad arguments.
const EXIT_IO: u8 = 2;

#[derive(Parser)]
#[command(
    name = "valvemorph",
    version,
    about = "Mitral valve morphometry from labeled segmentations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a label volume.
    Analyze(AnalyzeArgs),
    /// Dice and mean surface distance between two label volumes.
    Metrics(MetricsArgs),
    /// Write a synthetic valve volume and its analytic truth.
    Phantom(PhantomArgs),
    /// Agreement table between report/truth pairs.
    Compare(CompareArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Label volume (.nrrd or .nhdr).
    input: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "valvemorph-out")]
    out: PathBuf,
    /// Angle between consecutive section planes, degrees.
    #[arg(long, default_value_t = RefineParams::default().theta_offset_deg)]
    theta_offset: f64,
    /// Radius of the corrected annulus tube, mm.
    #[arg(long, default_value_t = RefineParams::default().tube_radius)]
    tube_radius: f64,
    /// Height-field grid spacing, mm.
    #[arg(long, default_value_t = DEFAULT_GRID_RESOLUTION)]
    grid_res: f64,
    /// Leaflet contact tolerance, mm.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = SmoothingParams::default().iterations)]
    smooth_iterations: usize,
    #[arg(long, default_value_t = SmoothingParams::default().passband)]
    smooth_passband: f64,
    /// Middle-surface ridge weight (default scales with the data).
    #[arg(long)]
    lambda: Option<f64>,
    /// Middle-surface vertex bin size, mm.
    #[arg(long, default_value_t = 1.0)]
    bin: f64,
    /// Source codes of annulus, anterior and posterior, e.g. `1,2,3`.
    #[arg(long, value_parser = parse_label_map)]
    label_map: Option<LabelMap>,
    /// Direction toward the left atrium in world coordinates, e.g. `0,0,1`.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    atrial_hint: Option<Vector>,
    /// Surface the leaflet lengths are traced on.
    #[arg(long, value_enum, default_value_t = LengthOn::Middle)]
    leaflet_length_on: LengthOn,
}

#[derive(Clone, Copy, ValueEnum)]
enum LengthOn {
    Middle,
    Mesh,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference volume.
    reference: PathBuf,
    /// Volume to score.
    candidate: PathBuf,
    /// Sample surfaces densely instead of using mesh vertices.
    #[arg(long)]
    dense: bool,
    #[arg(long, value_parser = parse_label_map)]
    label_map: Option<LabelMap>,
    /// Write JSON here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory; receives `phantom.nrrd` and `truth.json`.
    #[arg(short, long, default_value = "phantom")]
    out: PathBuf,
    /// JSON file of phantom parameters; flags below override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    d_cc: Option<f64>,
    #[arg(long)]
    d_ap: Option<f64>,
    #[arg(long)]
    h1: Option<f64>,
    #[arg(long)]
    h2: Option<f64>,
    #[arg(long)]
    spacing: Option<f64>,
    /// Width of the annulus gap, degrees.
    #[arg(long)]
    gap_arc: Option<f64>,
    #[arg(long)]
    gap_center: Option<f64>,
    #[arg(long)]
    prolapse_bump: Option<f64>,
    #[arg(long)]
    tube_radius: Option<f64>,
    #[arg(long)]
    leaflet_thickness: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Report or truth JSON files taken in pairs: `a1 b1 a2 b2 ...`.
    #[arg(required = true, num_args = 2..)]
    files: Vec<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(out)
}

fn parse_vector(s: &str) -> std::result::Result<Vector, String> {
    parse_triple(s).map(|v| Vector::new(v[0], v[1], v[2]))
}

fn parse_label_map(s: &str) -> std::result::Result<LabelMap, String> {
    let codes: Vec<u8> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u8>()
                .map_err(|_| format!("not a label code: {p:?}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match codes[..] {
        [annulus, anterior, posterior] => Ok(LabelMap {
            annulus,
            anterior,
            posterior,
        }),
        _ => Err(format!("expected three label codes, got {s:?}")),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn analyze(a: AnalyzeArgs) -> Result<u8> {
    let config = PipelineConfig {
        refine: RefineParams {
            theta_offset_deg: a.theta_offset,
            tube_radius: a.tube_radius,
        },
        grid_resolution: a.grid_res,
        epsilon: a.epsilon,
        smoothing: SmoothingParams {
            iterations: a.smooth_iterations,
            passband: a.smooth_passband,
        },
        middle_surface: MiddleSurfaceParams {
            lambda: a.lambda,
            bin_size: Some(a.bin),
        },
        leaflet_length_on: match a.leaflet_length_on {
            LengthOn::Middle => LengthSurface::Middle,
            LengthOn::Mesh => LengthSurface::Mesh,
        },
        atrial_hint: a.atrial_hint,
    };
    let map = a.label_map.unwrap_or_default();
    let analysis = analyze_file(&a.input, &map, &config)?;
    write_outputs(&analysis, &a.out)?;
    for f in &analysis.report.failures {
        eprintln!("stage {} failed: {}", f.stage.name(), f.reason);
    }
    log::info!(
        "{} analyzed in {:.2} s; outputs in {}",
        a.input.display(),
        analysis.report.timing_s.total_s,
        a.out.display()
    );
    Ok(analysis.exit_code() as u8)
}

fn metrics(a: MetricsArgs) -> Result<u8> {
    let map = a.label_map.unwrap_or_default();
    let reference = load_mask_with_map(&a.reference, &map)?;
    let candidate = load_mask_with_map(&a.candidate, &map)?;
    let scores = valvemorph::metrics::segmentation_scores(&reference, &candidate, a.dense)?;
    write_text(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&scores)? + "\n"),
    )?;
    Ok(0)
}

fn phantom(a: PhantomArgs) -> Result<u8> {
    let mut p: PhantomParams = match &a.params {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PhantomParams::default(),
    };
    let overrides = [
        (a.d_cc, &mut p.d_cc),
        (a.d_ap, &mut p.d_ap),
        (a.h1, &mut p.h1),
        (a.h2, &mut p.h2),
        (a.spacing, &mut p.spacing),
        (a.gap_arc, &mut p.gap_arc),
        (a.gap_center, &mut p.gap_center),
        (a.prolapse_bump, &mut p.prolapse_bump),
        (a.tube_radius, &mut p.tube_radius),
        (a.leaflet_thickness, &mut p.leaflet_thickness),
    ];
    for (value, field) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    let (volume, truth) = generate_phantom(&p)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_mask(&volume, a.out.join("phantom.nrrd"))?;
    write_text(
        Some(&a.out.join("truth.json")),
        &(serde_json::to_string_pretty(&truth)? + "\n"),
    )?;
    write_text(
        Some(&a.out.join("params.json")),
        &(serde_json::to_string_pretty(&p)? + "\n"),
    )?;
    Ok(0)
}

fn compare_cmd(a: CompareArgs) -> Result<u8> {
    if !a.files.len().is_multiple_of(2) {
        bail!("compare takes files in pairs, got {}", a.files.len());
    }
    let load = |p: &PathBuf| -> Result<_> {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        measurements(&doc).with_context(|| format!("reading measurements from {}", p.display()))
    };
    let pairs = a
        .files
        .chunks_exact(2)
        .map(|c| Ok((load(&c[0])?, load(&c[1])?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = compare(&pairs)?;
    write_text(a.out.as_deref(), &comparison_csv(&rows))?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Metrics(a) => metrics(a),
        Command::Phantom(a) => phantom(a),
        Command::Compare(a) => compare_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_IO)
        }
    }
}
