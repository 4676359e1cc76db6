//! `p2orm`: pixel-pair occlusion relationships from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use p2orm::derive::{
    boundary_from_prob_relation, boundary_from_relation, nms_thin, orientation_from_prob_relation,
    orientation_from_relation, threshold_boundary, BoundaryMap, OrientationMap,
    ProbOrientationMode,
};
use p2orm::geometry::{zdepth_to_raydist, CameraIntrinsics};
use p2orm::io;
use p2orm::metrics::{
    default_match_tolerance, default_thresholds, depth_metrics, edge_metrics, format_report,
    opr_curve, summarize,
};
use p2orm::refine::{refine_depth, RefineConfig};
use p2orm::relation::{compute_p2orm, estimate_normals, Connectivity};
use p2orm::synth::{oracle_relation, render, scene_by_name, scene_catalog, scene_from_str};
use p2orm::{DepthMap, Error, NormalMap, RelationMap};

#[derive(Parser)]
#[command(name = "p2orm", version, about = "Pixel-pair occlusion relationship toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute relation labels from a depth map (and normals).
    GenLabels(GenLabelsArgs),
    /// Derive an oriented occlusion boundary from relation labels.
    Derive(DeriveArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Refine a depth map against relation labels.
    Refine(RefineArgs),
    /// Render a synthetic scene with exact ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct CameraArgs {
    /// Horizontal field of view in degrees (alternative to explicit focals).
    #[arg(long)]
    hfov: Option<f64>,
    #[arg(long, requires_all = ["fy", "cx", "cy"])]
    fx: Option<f64>,
    #[arg(long)]
    fy: Option<f64>,
    #[arg(long)]
    cx: Option<f64>,
    #[arg(long)]
    cy: Option<f64>,
}

impl CameraArgs {
    fn resolve(&self, width: usize, height: usize) -> Result<CameraIntrinsics, CliError> {
        match (self.fx, self.hfov) {
            (Some(fx), None) => CameraIntrinsics::new(
                fx,
                self.fy.unwrap(),
                self.cx.unwrap(),
                self.cy.unwrap(),
                width,
                height,
            )
            .map_err(CliError::Data),
            (None, hfov) => Ok(CameraIntrinsics::with_hfov(
                width,
                height,
                hfov.unwrap_or(60.0),
            )),
            (Some(_), Some(_)) => Err(CliError::usage("pass either --hfov or --fx/--fy/--cx/--cy")),
        }
    }
}

#[derive(Args)]
struct GenLabelsArgs {
    /// Input depth map (.png 16-bit or .pfm).
    #[arg(long)]
    depth: PathBuf,
    /// png16 quantization in units per meter.
    #[arg(long, default_value_t = io::DEFAULT_DEPTH_SCALE)]
    depth_scale: f64,
    /// Input stores z-depth; convert to ray distance first.
    #[arg(long)]
    z_depth: bool,
    /// Normals file written by `synth`/`gen-labels` (raw f32, 3 channels).
    #[arg(long)]
    normals: Option<PathBuf>,
    /// Estimate normals from depth (plane fit over this odd window).
    #[arg(long, value_name = "WINDOW")]
    estimate_normals: Option<usize>,
    #[command(flatten)]
    camera: CameraArgs,
    #[arg(long, default_value_t = p2orm::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 4)]
    connectivity: u8,
    #[arg(long, default_value_t = 1)]
    order: u8,
    /// Output base path for the relation files (`<base>_h.png`, ...).
    #[arg(long)]
    out: PathBuf,
    /// Optional red/blue visualization PNG.
    #[arg(long)]
    viz: Option<PathBuf>,
}

#[derive(Args)]
struct DeriveArgs {
    /// Hard relation labels base path.
    #[arg(long, conflicts_with = "prob")]
    labels: Option<PathBuf>,
    /// Probabilistic relation file (raw f32).
    #[arg(long)]
    prob: Option<PathBuf>,
    /// Apply non-maximum suppression before thresholding.
    #[arg(long)]
    nms: bool,
    /// Threshold on the boundary probability; omit to keep it soft.
    #[arg(long)]
    threshold: Option<f64>,
    /// Output boundary PNG (8-bit grayscale).
    #[arg(long)]
    out_boundary: PathBuf,
    /// Output orientation file (raw f32, NaN where undefined).
    #[arg(long)]
    out_orientation: Option<PathBuf>,
    /// Optional orientation color-wheel PNG.
    #[arg(long)]
    viz_orientation: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted relation labels (repeatable; pairs with --gt-labels).
    #[arg(long)]
    pred_labels: Vec<PathBuf>,
    /// Predicted probabilistic relations, overriding hard labels
    /// (repeatable, same order).
    #[arg(long)]
    pred_prob: Vec<PathBuf>,
    /// Ground-truth relation labels (repeatable).
    #[arg(long)]
    gt_labels: Vec<PathBuf>,
    /// Match tolerance in pixels (default: 0.75% of the image diagonal).
    #[arg(long)]
    tol: Option<f64>,
    /// Truncation of the edge distance metrics, in pixels.
    #[arg(long, default_value_t = 10.0)]
    trunc: f64,
    /// Threshold used for the hard boundary behind the edge metrics.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Predicted depth map for depth metrics.
    #[arg(long, requires = "gt_depth")]
    pred_depth: Option<PathBuf>,
    /// Ground-truth depth map.
    #[arg(long)]
    gt_depth: Option<PathBuf>,
    #[arg(long, default_value_t = io::DEFAULT_DEPTH_SCALE)]
    depth_scale: f64,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    /// Input depth map (.png 16-bit or .pfm).
    #[arg(long)]
    depth: PathBuf,
    #[arg(long, default_value_t = io::DEFAULT_DEPTH_SCALE)]
    depth_scale: f64,
    /// Relation labels base path.
    #[arg(long)]
    labels: PathBuf,
    /// Normals file; estimated from depth when omitted.
    #[arg(long)]
    normals: Option<PathBuf>,
    #[command(flatten)]
    camera: CameraArgs,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = p2orm::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Refined depth output, written in the input's format.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-iteration trace (`iter total consistency regul step`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Catalog scene name.
    #[arg(long, conflicts_with = "scene_file")]
    scene: Option<String>,
    /// Plain-text scene description file.
    #[arg(long)]
    scene_file: Option<PathBuf>,
    /// Scene parameter (step height, tilt, ...), scene-specific.
    #[arg(long)]
    param: Option<f64>,
    /// List catalog scenes and exit.
    #[arg(long)]
    list: bool,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    #[arg(long, default_value_t = 60.0)]
    hfov: f64,
    #[arg(long)]
    out_depth: Option<PathBuf>,
    #[arg(long, default_value_t = io::DEFAULT_DEPTH_SCALE)]
    depth_scale: f64,
    #[arg(long)]
    out_normals: Option<PathBuf>,
    /// Base path for oracle relation labels.
    #[arg(long)]
    out_labels: Option<PathBuf>,
    #[arg(long, default_value_t = p2orm::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 4)]
    connectivity: u8,
}

enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Honor P2ORM_THREADS (0 or unset = automatic).
fn init_threads() -> Result<(), String> {
    match std::env::var("P2ORM_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| format!("P2ORM_THREADS must be a number, got '{v}'"))?;
            if n > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenLabels(args) => gen_labels(args),
        Command::Derive(args) => derive(args),
        Command::Eval(args) => eval(args),
        Command::Refine(args) => refine(args),
        Command::Synth(args) => synth(args),
    }
}

fn read_depth(path: &Path, scale: f64) -> Result<DepthMap, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => Ok(io::read_pfm(path)?),
        Some("png") => Ok(io::read_depth_png16(path, scale)?),
        other => Err(CliError::usage(format!(
            "unsupported depth format '{}'; use .png or .pfm",
            other.unwrap_or("")
        ))),
    }
}

fn write_depth(path: &Path, depth: &DepthMap, scale: f64) -> Result<(), CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => Ok(io::write_pfm(path, depth)?),
        Some("png") => Ok(io::write_depth_png16(path, depth, scale)?),
        other => Err(CliError::usage(format!(
            "unsupported depth format '{}'; use .png or .pfm",
            other.unwrap_or("")
        ))),
    }
}

fn parse_connectivity(v: u8) -> Result<Connectivity, CliError> {
    Connectivity::from_u8(v)
        .ok_or_else(|| CliError::usage(format!("connectivity must be 4 or 8, got {v}")))
}

fn gen_labels(args: GenLabelsArgs) -> Result<(), CliError> {
    let connectivity = parse_connectivity(args.connectivity)?;
    let mut depth = read_depth(&args.depth, args.depth_scale)?;
    let k = args.camera.resolve(depth.width(), depth.height())?;
    if args.z_depth {
        depth = zdepth_to_raydist(&depth, &k).0;
    }
    let normals: Option<NormalMap> = match (&args.normals, args.estimate_normals) {
        (Some(path), None) => Some(io::read_normals(path)?),
        (None, Some(window)) => Some(estimate_normals(&depth, &k, window)?),
        (None, None) if args.order == 1 => {
            return Err(CliError::usage(
                "--order 1 needs --normals or --estimate-normals",
            ))
        }
        (None, None) => None,
        (Some(_), Some(_)) => {
            return Err(CliError::usage(
                "pass either --normals or --estimate-normals, not both",
            ))
        }
    };
    let rel = compute_p2orm(
        &depth,
        normals.as_ref(),
        &k,
        args.delta,
        connectivity,
        args.order,
    )?;
    io::write_relation(&args.out, &rel)?;
    if let Some(viz) = &args.viz {
        io::relation_visualization(&rel)
            .save(viz)
            .map_err(|e| CliError::Data(e.into()))?;
    }
    println!("labels: {} nonzero pairs", rel.nonzero_count());
    Ok(())
}

fn derive(args: DeriveArgs) -> Result<(), CliError> {
    let (boundary, orientation): (BoundaryMap, OrientationMap) =
        match (&args.labels, &args.prob) {
            (Some(base), None) => {
                let rel = io::read_relation(base)?;
                (boundary_from_relation(&rel), orientation_from_relation(&rel))
            }
            (None, Some(path)) => {
                let prob = io::read_prob_relation(path)?;
                (
                    boundary_from_prob_relation(&prob),
                    orientation_from_prob_relation(&prob, ProbOrientationMode::Argmax),
                )
            }
            _ => return Err(CliError::usage("pass exactly one of --labels or --prob")),
        };
    let mut out = boundary;
    if args.nms {
        out = nms_thin(&out);
    }
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::usage(format!(
                "--threshold must be in [0, 1], got {t}"
            )));
        }
        out = threshold_boundary(&out, t);
    }
    io::boundary_visualization(&out)
        .save(&args.out_boundary)
        .map_err(|e| CliError::Data(e.into()))?;
    if let Some(path) = &args.out_orientation {
        let (w, h) = orientation.size();
        let data: Vec<f32> = orientation.grid().data().iter().map(|&v| v as f32).collect();
        io::write_raw_f32(path, w, h, &data)?;
    }
    if let Some(path) = &args.viz_orientation {
        io::orientation_visualization(&orientation, &out)
            .save(path)
            .map_err(|e| CliError::Data(e.into()))?;
    }
    println!("boundary: {} pixels on", out.on_pixels().len());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let mut entries: Vec<(&str, f64)> = Vec::new();
    let mut edge: Option<(f64, f64)> = None;

    if !args.pred_labels.is_empty() || !args.pred_prob.is_empty() {
        if args.gt_labels.is_empty() {
            return Err(CliError::usage("--gt-labels is required to score labels"));
        }
        let n_pred = if args.pred_prob.is_empty() {
            args.pred_labels.len()
        } else {
            args.pred_prob.len()
        };
        if n_pred != args.gt_labels.len() {
            return Err(CliError::usage(
                "prediction and ground-truth counts differ",
            ));
        }
        let thresholds = default_thresholds();
        let mut curves = Vec::new();
        let mut acc_sum = 0.0;
        let mut comp_sum = 0.0;
        for i in 0..n_pred {
            let gt_rel = io::read_relation(&args.gt_labels[i])?;
            let gt_b = boundary_from_relation(&gt_rel);
            let gt_o = orientation_from_relation(&gt_rel);
            let (pred_b, pred_o) = if args.pred_prob.is_empty() {
                let rel = io::read_relation(&args.pred_labels[i])?;
                (boundary_from_relation(&rel), orientation_from_relation(&rel))
            } else {
                let prob = io::read_prob_relation(&args.pred_prob[i])?;
                (
                    boundary_from_prob_relation(&prob),
                    orientation_from_prob_relation(&prob, ProbOrientationMode::Argmax),
                )
            };
            let (w, h) = gt_b.size();
            let tol = args.tol.unwrap_or_else(|| default_match_tolerance(w, h));
            curves.push(opr_curve(&pred_b, &pred_o, &gt_b, &gt_o, &thresholds, tol)?);
            let hard_pred = threshold_boundary(&pred_b, args.threshold);
            let hard_gt = threshold_boundary(&gt_b, args.threshold);
            let em = edge_metrics(&hard_pred, &hard_gt, args.trunc)?;
            acc_sum += em.eps_acc;
            comp_sum += em.eps_comp;
        }
        let s = summarize(curves)?;
        entries.push(("ods", s.ods));
        entries.push(("ois", s.ois));
        entries.push(("ap", s.ap));
        edge = Some((acc_sum / n_pred as f64, comp_sum / n_pred as f64));
    }
    if let (Some(acc), Some(comp)) = (edge.map(|e| e.0), edge.map(|e| e.1)) {
        entries.push(("eps_acc", acc));
        entries.push(("eps_comp", comp));
    }

    if let (Some(pred_path), Some(gt_path)) = (&args.pred_depth, &args.gt_depth) {
        let pred = read_depth(pred_path, args.depth_scale)?;
        let gt = read_depth(gt_path, args.depth_scale)?;
        let m = depth_metrics(&pred, &gt)?;
        entries.push(("rel", m.rel));
        entries.push(("log10", m.log10));
        entries.push(("rmse_lin", m.rmse_lin));
        entries.push(("rmse_log", m.rmse_log));
        entries.push(("sigma1", m.sigma1));
        entries.push(("sigma2", m.sigma2));
        entries.push(("sigma3", m.sigma3));
    }

    if entries.is_empty() {
        return Err(CliError::usage(
            "nothing to evaluate: pass label files and/or depth files",
        ));
    }
    let report = format_report(&entries);
    print!("{report}");
    if let Some(path) = &args.report {
        std::fs::write(path, &report).map_err(|e| CliError::Data(e.into()))?;
    }
    Ok(())
}

fn refine(args: RefineArgs) -> Result<(), CliError> {
    let depth = read_depth(&args.depth, args.depth_scale)?;
    let k = args.camera.resolve(depth.width(), depth.height())?;
    let labels: RelationMap = io::read_relation(&args.labels)?;
    let normals = match &args.normals {
        Some(path) => io::read_normals(path)?,
        None => estimate_normals(&depth, &k, 3)?,
    };
    let cfg = RefineConfig {
        loss: p2orm::losses::RefineLossConfig {
            delta: args.delta,
            lambda: args.lambda,
            ..Default::default()
        },
        step: args.step,
        max_iters: args.iters,
        ..Default::default()
    };
    let run = refine_depth(&labels, &depth, &normals, &k, cfg)?;
    write_depth(&args.out, &run.depth, args.depth_scale)?;
    if let Some(path) = &args.trace {
        let mut s = String::from("iter total consistency regularization step\n");
        for t in &run.trace {
            s.push_str(&format!(
                "{} {} {} {} {}\n",
                t.iter, t.total, t.consistency, t.regularization, t.step
            ));
        }
        std::fs::write(path, s).map_err(|e| CliError::Data(e.into()))?;
    }
    println!(
        "refine: loss {} -> {} in {} iterations (converged: {})",
        run.trace.first().map(|t| t.total).unwrap_or(0.0),
        run.trace.last().map(|t| t.total).unwrap_or(0.0),
        run.trace.last().map(|t| t.iter).unwrap_or(0),
        run.converged
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.list {
        for (name, _) in scene_catalog() {
            println!("{name}");
        }
        return Ok(());
    }
    let scene = match (&args.scene, &args.scene_file) {
        (Some(name), None) => scene_by_name(name, args.param).map_err(|e| match e {
            Error::UnknownScene(_) => CliError::usage(e.to_string()),
            other => CliError::Data(other),
        })?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(e.into()))?;
            scene_from_str(&text)?
        }
        _ => return Err(CliError::usage("pass exactly one of --scene or --scene-file")),
    };
    let k = CameraIntrinsics::with_hfov(args.width, args.height, args.hfov);
    let r = render(&scene, &k)?;
    if let Some(path) = &args.out_depth {
        write_depth(path, r.depth(), args.depth_scale)?;
    }
    if let Some(path) = &args.out_normals {
        io::write_normals(path, r.normals())?;
    }
    if let Some(base) = &args.out_labels {
        let connectivity = parse_connectivity(args.connectivity)?;
        let rel = oracle_relation(&r, &k, args.delta, connectivity);
        io::write_relation(base, &rel)?;
    }
    println!("synth: rendered {}x{}", args.width, args.height);
    Ok(())
}
