//! `tpmc` — remesh arbitrary triangle meshes into watertight manifold
//! dual-marching-cubes meshes, store them as compact `.tpmc` streams, and
//! score outputs against their sources.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use tpmc_core::codec;
use tpmc_core::field::FieldMode;
use tpmc_core::mesh::{
    self, check_watertight_manifold, connected_components, io::Format, io::SaveFormat,
    normalize_to_unit_cube, TriangleMesh,
};
use tpmc_core::metrics;
use tpmc_core::pipeline::{remesh, PipelineError, RemeshConfig, RemeshOutcome};

#[derive(Parser)]
#[command(
    name = "tpmc",
    version,
    about = "Feature-preserving remeshing to a dual-marching-cubes structure",
    long_about = "Converts arbitrary triangle meshes (open, self-intersecting, non-manifold \
                  soups included) into watertight, manifold, DMC-structured meshes with sharp \
                  edges preserved. Outputs can be stored as compact .tpmc record streams and \
                  evaluated against their sources.\n\nEvery flag can also be set through a \
                  TPMC_* environment variable; explicit flags win."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (0 = one per core). Outputs are identical for any value.
    #[arg(long, global = true, default_value_t = 0, env = "TPMC_THREADS")]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Remesh a mesh file into a watertight DMC mesh (.obj/.ply/.tpmc).
    Remesh(RemeshArgs),
    /// Produce a .tpmc stream from a mesh file (remesh + encode), or
    /// re-encode an existing .tpmc (bit-identical).
    Encode(CodecArgs),
    /// Decode a .tpmc stream to .obj/.ply, or to .tpmc (bit-identical).
    Decode(CodecArgs),
    /// Score a predicted mesh against a reference mesh (CD/F1/F1-sharp/ANC).
    Eval(EvalArgs),
    /// Remesh and evaluate every mesh in a directory; one JSON record each.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linf,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefineArg {
    Auto,
    On,
    Off,
}

#[derive(Args, Clone)]
struct RemeshFlags {
    /// Grid resolution (cells per axis, power of two in 32..=1024).
    #[arg(long, default_value_t = 256, env = "TPMC_RESOLUTION")]
    resolution: u32,
    /// Dilation radius in units of the corner spacing h = 2/resolution.
    #[arg(long, default_value_t = 1.5, env = "TPMC_EPSILON_H")]
    epsilon_h: f64,
    /// Bisection iterations per crossing edge (accuracy h * 2^-k).
    #[arg(long, default_value_t = 12, env = "TPMC_BISECT_ITERS")]
    bisect_iters: u32,
    /// Axis-sweep vertex refinement; auto = on below resolution 512.
    #[arg(long, value_enum, default_value_t = RefineArg::Auto, env = "TPMC_REFINE")]
    refine: RefineArg,
    /// Distance mode: linf preserves sharp features; l2 is the baseline.
    #[arg(long, value_enum, default_value_t = ModeArg::Linf, env = "TPMC_MODE")]
    mode: ModeArg,
    /// Normalization padding in [0, 0.5); default keeps the dilated band a
    /// full cell layer inside the domain.
    #[arg(long, env = "TPMC_PADDING")]
    padding: Option<f64>,
    /// Vertex welding tolerance at load (0 disables).
    #[arg(long, default_value_t = mesh::WELD_TOLERANCE, env = "TPMC_WELD")]
    weld: f64,
    /// Seed for downstream sampling (stats/eval); remeshing itself is
    /// deterministic.
    #[arg(long, default_value_t = 0, env = "TPMC_SEED")]
    seed: u64,
}

impl RemeshFlags {
    fn config(&self) -> RemeshConfig {
        RemeshConfig {
            resolution: self.resolution,
            epsilon_h: self.epsilon_h,
            bisect_iters: self.bisect_iters,
            refine: match self.refine {
                RefineArg::Auto => None,
                RefineArg::On => Some(true),
                RefineArg::Off => Some(false),
            },
            mode: match self.mode {
                ModeArg::Linf => FieldMode::Linf,
                ModeArg::L2 => FieldMode::L2,
            },
            padding: self.padding,
            seed: self.seed,
        }
    }

    fn weld(&self) -> Option<f64> {
        if self.weld > 0.0 {
            Some(self.weld)
        } else {
            None
        }
    }
}

#[derive(Args)]
struct RemeshArgs {
    /// Input mesh (.obj, .ply, .stl).
    input: PathBuf,
    /// Output path: .obj, .ply, or .tpmc.
    output: PathBuf,
    #[command(flatten)]
    flags: RemeshFlags,
    /// Dump band-corner classification (`i j k class g` lines) to a file.
    #[arg(long)]
    dump_corners: Option<PathBuf>,
}

#[derive(Args)]
struct CodecArgs {
    /// Input: mesh file or .tpmc stream (encode); .tpmc stream (decode).
    input: PathBuf,
    /// Output: .tpmc (encode); .obj/.ply/.tpmc (decode).
    output: PathBuf,
    #[command(flatten)]
    flags: RemeshFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted mesh.
    pred: PathBuf,
    /// Reference mesh; its normalization is applied to both.
    reference: PathBuf,
    /// Surface samples per mesh.
    #[arg(long, default_value_t = metrics::DEFAULT_SAMPLES, env = "TPMC_SAMPLES")]
    samples: usize,
    /// Match threshold in normalized units.
    #[arg(long, default_value_t = metrics::DEFAULT_TAU, env = "TPMC_TAU")]
    tau: f64,
    #[arg(long, default_value_t = 0, env = "TPMC_SEED")]
    seed: u64,
    /// Skip the sharp-edge metric even when the reference qualifies.
    #[arg(long)]
    no_sharp: bool,
    /// Emit a JSON record instead of the flat key-value line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Directory of mesh files (.obj/.ply/.stl). Omit with --demo.
    dir: Option<PathBuf>,
    /// Run on the built-in shape corpus instead of a directory.
    #[arg(long)]
    demo: bool,
    #[command(flatten)]
    flags: RemeshFlags,
    #[arg(long, default_value_t = 20_000, env = "TPMC_SAMPLES")]
    samples: usize,
    #[arg(long, default_value_t = metrics::DEFAULT_TAU, env = "TPMC_TAU")]
    tau: f64,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn runtime(e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Remesh(args) => cmd_remesh(args),
        Command::Encode(args) => cmd_codec(args, true),
        Command::Decode(args) => cmd_codec(args, false),
        Command::Eval(args) => cmd_eval(args),
        Command::Stats(args) => cmd_stats(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn map_pipeline_err(e: PipelineError) -> CliError {
    match &e {
        PipelineError::InvalidConfig(_) | PipelineError::Voxel(_) => CliError::Usage(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

fn load_input(path: &Path, weld: Option<f64>) -> Result<TriangleMesh, CliError> {
    mesh::load_mesh_with(path, Format::Auto, weld).map_err(CliError::runtime)
}

fn run_remesh(input: &Path, flags: &RemeshFlags) -> Result<RemeshOutcome, CliError> {
    let config = flags.config();
    config.validate().map_err(map_pipeline_err)?;
    let src = load_input(input, flags.weld())?;
    remesh(&src, &config).map_err(map_pipeline_err)
}

fn print_timings(t: &tpmc_core::pipeline::StageTimings, compression: Option<Duration>) {
    let s = |d: Duration| d.as_secs_f64();
    println!("stage voxelization {:.3}s", s(t.voxelization));
    println!("stage flood-fill {:.3}s", s(t.flood_fill));
    println!("stage sdf {:.3}s", s(t.sdf));
    println!("stage extraction {:.3}s", s(t.extraction));
    match compression {
        Some(d) => println!("stage compression {:.3}s", s(d)),
        None => println!("stage compression skipped"),
    }
}

fn print_mesh_stats(outcome: &RemeshOutcome, encoded: Option<usize>) {
    let m = &outcome.dmc.assembled;
    let report = check_watertight_manifold(m);
    println!("vertices {}", m.positions.len());
    println!("faces {}", m.triangles.len());
    println!("closed {}", report.closed);
    println!("edge_manifold {}", report.edge_manifold);
    println!("oriented {}", report.oriented);
    println!("euler_characteristic {}", report.euler_characteristic);
    if let Some(bytes) = encoded {
        println!("encoded_bytes {bytes}");
    }
}

fn write_output(
    outcome: &RemeshOutcome,
    output: &Path,
) -> Result<(Option<usize>, Option<Duration>), CliError> {
    let ext = output
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("tpmc") => {
            let t = Instant::now();
            let bytes = codec::encode(&outcome.dmc).map_err(CliError::runtime)?;
            let elapsed = t.elapsed();
            std::fs::write(output, &bytes).map_err(CliError::runtime)?;
            Ok((Some(bytes.len()), Some(elapsed)))
        }
        _ => {
            let format = SaveFormat::from_extension(output).ok_or_else(|| {
                CliError::Usage(format!(
                    "cannot infer output format of {} (use .obj, .ply, or .tpmc)",
                    output.display()
                ))
            })?;
            mesh::save_mesh(&outcome.dmc.assembled, output, format).map_err(CliError::runtime)?;
            Ok((None, None))
        }
    }
}

fn cmd_remesh(args: &RemeshArgs) -> Result<(), CliError> {
    let outcome = run_remesh(&args.input, &args.flags)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(dump) = &args.dump_corners {
        // The dump needs the grid; rebuild the classification from the
        // normalized mesh (the pipeline does not retain the grid).
        let config = args.flags.config();
        let field =
            tpmc_core::field::LinfField::build(&outcome.normalized, config.epsilon(), config.mode)
                .map_err(CliError::runtime)?;
        let (grid, _) =
            tpmc_core::voxel::classify_corners(&outcome.normalized, &field, config.resolution)
                .map_err(CliError::runtime)?;
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(dump).map_err(CliError::runtime)?);
        grid.dump_text(&mut f).map_err(CliError::runtime)?;
    }
    let (encoded, compression) = write_output(&outcome, &args.output)?;
    print_timings(&outcome.timings, compression);
    print_mesh_stats(&outcome, encoded);
    Ok(())
}

fn cmd_codec(args: &CodecArgs, encode: bool) -> Result<(), CliError> {
    let in_ext = args
        .input
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let out_ext = args
        .output
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());

    if encode && out_ext.as_deref() != Some("tpmc") {
        return Err(CliError::Usage("encode output must be .tpmc".into()));
    }
    if !encode && in_ext.as_deref() != Some("tpmc") {
        return Err(CliError::Usage("decode input must be .tpmc".into()));
    }

    let t = Instant::now();
    if in_ext.as_deref() == Some("tpmc") {
        // .tpmc in: decode, then rewrite. Re-encoding a decoded stream is
        // bit-identical, which makes encode/decode roundtrips exact at the
        // stream level.
        let bytes = std::fs::read(&args.input).map_err(CliError::runtime)?;
        let dmc = codec::decode_mesh(&bytes).map_err(CliError::runtime)?;
        match out_ext.as_deref() {
            Some("tpmc") => {
                let out = codec::encode(&dmc).map_err(CliError::runtime)?;
                std::fs::write(&args.output, &out).map_err(CliError::runtime)?;
                println!("encoded_bytes {}", out.len());
            }
            _ => {
                let format = SaveFormat::from_extension(&args.output).ok_or_else(|| {
                    CliError::Usage("decode output must be .obj, .ply, or .tpmc".into())
                })?;
                mesh::save_mesh(&dmc.assembled, &args.output, format).map_err(CliError::runtime)?;
                let report = check_watertight_manifold(&dmc.assembled);
                println!("vertices {}", dmc.assembled.positions.len());
                println!("faces {}", dmc.assembled.triangles.len());
                println!("closed {}", report.closed);
            }
        }
    } else {
        // Mesh input: remesh with the given flags, then encode.
        let outcome = run_remesh(&args.input, &args.flags)?;
        for w in &outcome.warnings {
            eprintln!("warning: {w}");
        }
        let bytes = codec::encode(&outcome.dmc).map_err(CliError::runtime)?;
        std::fs::write(&args.output, &bytes).map_err(CliError::runtime)?;
        println!("encoded_bytes {}", bytes.len());
    }
    println!("elapsed {:.3}s", t.elapsed().as_secs_f64());
    Ok(())
}

/// Bring both meshes into the reference's normalized frame and evaluate.
fn eval_pair_normalized(
    pred: &TriangleMesh,
    reference: &TriangleMesh,
    samples: usize,
    tau: f64,
    seed: u64,
    with_sharp: bool,
) -> Result<metrics::FidelityReport, CliError> {
    let (ref_norm, transform) =
        normalize_to_unit_cube(reference, 0.05).map_err(CliError::runtime)?;
    let mut pred_norm = pred.clone();
    for p in &mut pred_norm.positions {
        *p = transform.apply(*p);
    }
    let mut report = if with_sharp {
        metrics::evaluate_meshes(&pred_norm, &ref_norm, samples, tau, seed)
            .map_err(CliError::runtime)?
    } else {
        let ps = metrics::sample_surface(&pred_norm, samples, seed).map_err(CliError::runtime)?;
        let rs = metrics::sample_surface(&ref_norm, samples, seed.wrapping_add(1))
            .map_err(CliError::runtime)?;
        metrics::evaluate_pair(&ps, &rs, tau).map_err(CliError::runtime)?
    };
    report.sample_count = samples;
    Ok(report)
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let pred = load_input(&args.pred, Some(mesh::WELD_TOLERANCE))?;
    let reference = load_input(&args.reference, Some(mesh::WELD_TOLERANCE))?;
    let report = eval_pair_normalized(
        &pred,
        &reference,
        args.samples,
        args.tau,
        args.seed,
        !args.no_sharp,
    )?;
    if report.f1_sharp.is_none() && !args.no_sharp {
        eprintln!("note: reference has no sharp edges; f1_sharp omitted");
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string(&report).map_err(CliError::runtime)?
        );
    } else {
        println!("{report}");
    }
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<(), CliError> {
    let inputs: Vec<(String, TriangleMesh)> = if args.demo {
        tpmc_core::fixtures::corpus()
    } else {
        let dir = args.dir.as_ref().ok_or_else(|| {
            CliError::Usage("stats needs a directory (or --demo for the built-in corpus)".into())
        })?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(CliError::runtime)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension()
                        .and_then(|e| e.to_str())
                        .map(|e| e.to_ascii_lowercase())
                        .as_deref(),
                    Some("obj") | Some("ply") | Some("stl")
                )
            })
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            let m = load_input(&f, Some(mesh::WELD_TOLERANCE))?;
            out.push((f.display().to_string(), m));
        }
        out
    };
    if inputs.is_empty() {
        return Err(CliError::Usage("no mesh files found".into()));
    }

    let config = args.flags.config();
    config.validate().map_err(map_pipeline_err)?;
    for (name, src) in inputs {
        let t = Instant::now();
        let outcome = match remesh(&src, &config) {
            Ok(o) => o,
            Err(e) => {
                let rec = serde_json::json!({ "file": name, "error": e.to_string() });
                println!("{rec}");
                continue;
            }
        };
        let seconds = t.elapsed().as_secs_f64();
        let encoded = codec::encode(&outcome.dmc).map_err(CliError::runtime)?;
        let report = check_watertight_manifold(&outcome.dmc.assembled);

        // Evaluate in the pipeline's normalized frame: the assembled mesh
        // maps back through the same transform.
        let mut pred_norm = outcome.dmc.assembled.clone();
        for p in &mut pred_norm.positions {
            *p = outcome.dmc.transform.apply(*p);
        }
        let eval = metrics::evaluate_meshes(
            &pred_norm,
            &outcome.normalized,
            args.samples,
            args.tau,
            config.seed,
        )
        .map_err(CliError::runtime)?;

        let baseline = codec::baseline_triangle_bytes(&outcome.dmc.assembled);
        let rec = serde_json::json!({
            "file": name,
            "resolution": config.resolution,
            "vertices": outcome.dmc.assembled.positions.len(),
            "faces": outcome.dmc.assembled.triangles.len(),
            "closed": report.closed,
            "edge_manifold": report.edge_manifold,
            "oriented": report.oriented,
            "euler_characteristic": report.euler_characteristic,
            "components": connected_components(&outcome.dmc.assembled),
            "seconds": seconds,
            "tpmc_bytes": encoded.len(),
            "baseline_bytes": baseline,
            "ratio": encoded.len() as f64 / baseline as f64,
            "cd": eval.cd,
            "f1": eval.f1,
            "f1_sharp": eval.f1_sharp,
            "anc": eval.anc,
            "warnings": outcome.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        });
        println!("{rec}");
    }
    Ok(())
}
