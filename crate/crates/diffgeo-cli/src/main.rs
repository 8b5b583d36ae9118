//! Command-line front end for the diffgeo engine. Each subcommand is a thin
//! wrapper over `diffgeo::pipeline`: it parses flags into a `PipelineConfig`,
//! runs the stage, and writes JSON artifacts into `--out`. Stage outputs are
//! cached under a content hash of the configuration, so repeated invocations
//! with identical settings reuse earlier results byte-for-byte.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use diffgeo::cloud::{save_csv, ShapeSpec};
use diffgeo::engine::Engine;
use diffgeo::error::Error;
use diffgeo::features::FeatureConfig;
use diffgeo::frames::{TruncationConfig, DEFAULT_TAU};
use diffgeo::hodge::{assemble, solve};
use diffgeo::kernel::{build_markov, spectral_basis, Bandwidth, KernelConfig};
use diffgeo::pipeline::{
    load_cloud, run_basis, run_features, run_forms, run_hodge, run_singularity, InputSpec,
    PipelineConfig, SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(name = "diffgeo", version, about = "Spectral exterior calculus on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a point cloud from a shape spec and write it as CSV.
    Synth {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Estimate the generator and write the eigenvalue report.
    Basis {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Build form frames and Gram ranks up to --degree.
    Forms {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve the Hodge eigenproblem; report spectrum, Betti number, cup norms.
    Hodge {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-point metric spectra, singularity scores, and tangent directions.
    Singularity {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Assemble a geometric feature vector.
    Features {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
        #[command(flatten)]
        feat: FeatureArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Time the pipeline stages on torus clouds of increasing size.
    Bench {
        /// Ascending comma-separated point counts, e.g. 2000,4000,8000.
        #[arg(long, default_value = "2000,4000,8000")]
        sizes: String,
        /// Repetitions per size; means and standard deviations are reported.
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[command(flatten)]
        spectral: SpectralArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Clone)]
struct InputArgs {
    /// CSV file of points, one row per point.
    #[arg(long, conflicts_with = "shape_spec")]
    input: Option<PathBuf>,
    /// Generator spec: inline JSON, or a path to a JSON file.
    #[arg(long)]
    shape_spec: Option<String>,
    /// Override the seed inside the shape spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct SpectralArgs {
    /// Fixed squared kernel bandwidth; omitted selects it from the data.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Density renormalization exponent in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Optional symmetric k-NN truncation of the kernel.
    #[arg(long)]
    knn: Option<usize>,
    /// Function-basis size.
    #[arg(long, default_value_t = 20)]
    n0: usize,
    /// Coefficient-index limit of form frames; defaults to min(10, n0).
    #[arg(long)]
    n1: Option<usize>,
    /// Differential-index limit of form frames; defaults to min(4, n0).
    #[arg(long)]
    n2: Option<usize>,
    /// Relative rank threshold for Gram pseudo-inverses.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Hodge regularizer; omitted picks the trace-scaled default.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Form degree for the Hodge stage.
    #[arg(long, default_value_t = 1)]
    degree: usize,
    /// Number of Hodge eigenpairs to report.
    #[arg(long, default_value_t = 8)]
    num_eigs: usize,
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// Number of function-Laplacian eigenvalues to include.
    #[arg(long, default_value_t = 6)]
    f0: usize,
    /// Number of 1-form Hodge eigenvalues to include.
    #[arg(long, default_value_t = 4)]
    f1: usize,
    /// Comma-separated heat-trace times for the function spectrum.
    #[arg(long, default_value = "1,10,50")]
    heat_times0: String,
    /// Comma-separated heat-trace times for the 1-form spectrum.
    #[arg(long, default_value = "1,10")]
    heat_times1: String,
    /// Number of Dirichlet energies to include.
    #[arg(long, default_value_t = 4)]
    dirichlet: usize,
    /// Include <eigenform, dphi> inner products.
    #[arg(long, default_value_t = false)]
    inner_products: bool,
    /// Cup norms among the first this-many harmonic forms.
    #[arg(long, default_value_t = 0)]
    cup_pairs: usize,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage text; fold every parse problem into
            // exit code 1 (help/version requests stay 0).
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Numeric(_) | Error::DegenerateSpace(_) | Error::ResourceLimit { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> diffgeo::Result<()> {
    match cli.command {
        Command::Synth { input, out } => cmd_synth(&input, &out),
        Command::Basis { input, spectral, out } => cmd_basis(&input, &spectral, &out),
        Command::Forms { input, spectral, out } => cmd_forms(&input, &spectral, &out),
        Command::Hodge { input, spectral, out } => cmd_hodge(&input, &spectral, &out),
        Command::Singularity { input, spectral, out } => cmd_singularity(&input, &spectral, &out),
        Command::Features { input, spectral, feat, out } => {
            cmd_features(&input, &spectral, &feat, &out)
        }
        Command::Bench { sizes, reps, spectral, out } => cmd_bench(&sizes, reps, &spectral, &out),
    }
}

// ---------------------------------------------------------------------------
// configuration assembly

fn parse_shape_spec(raw: &str, seed: Option<u64>) -> diffgeo::Result<ShapeSpec> {
    let text = if raw.trim_start().starts_with('{') {
        raw.to_string()
    } else {
        std::fs::read_to_string(raw)?
    };
    let mut spec: ShapeSpec = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("bad shape spec: {e}")))?;
    if let Some(s) = seed {
        match &mut spec {
            ShapeSpec::Circle { seed, .. }
            | ShapeSpec::Torus { seed, .. }
            | ShapeSpec::SphereWithCircles { seed, .. }
            | ShapeSpec::Annulus { seed, .. }
            | ShapeSpec::Square { seed, .. }
            | ShapeSpec::Intersecting { seed, .. } => *seed = s,
        }
    }
    Ok(spec)
}

fn input_spec(input: &InputArgs) -> diffgeo::Result<InputSpec> {
    match (&input.input, &input.shape_spec) {
        (Some(path), _) => Ok(InputSpec::Path { path: path.display().to_string() }),
        (None, Some(raw)) => Ok(InputSpec::Shape(parse_shape_spec(raw, input.seed)?)),
        (None, None) => Err(Error::invalid("provide --input or --shape-spec")),
    }
}

fn truncation(spectral: &SpectralArgs) -> TruncationConfig {
    let n1 = spectral.n1.unwrap_or_else(|| spectral.n0.min(10));
    let n2 = spectral.n2.unwrap_or_else(|| spectral.n0.min(4));
    TruncationConfig::new(spectral.n0, n1, n2)
}

fn pipeline_config(input: &InputArgs, spectral: &SpectralArgs) -> diffgeo::Result<PipelineConfig> {
    let bandwidth = match spectral.bandwidth {
        Some(t) => Bandwidth::Fixed(t),
        None => Bandwidth::Auto,
    };
    let cfg = PipelineConfig {
        input: input_spec(input)?,
        kernel: KernelConfig {
            bandwidth,
            alpha: spectral.alpha,
            knn: spectral.knn,
            n0: spectral.n0,
        },
        trunc: truncation(spectral),
        tau: spectral.tau,
        epsilon: spectral.epsilon,
        degree: spectral.degree,
        num_eigs: spectral.num_eigs,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_times(raw: &str) -> diffgeo::Result<Vec<f64>> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad time list: {e}"))))
        .collect()
}

// ---------------------------------------------------------------------------
// caching

fn cache_dir(out: &Path) -> PathBuf {
    std::env::var_os("DIFFGEO_CACHE_DIR").map(PathBuf::from).unwrap_or_else(|| out.join(".cache"))
}

fn cache_key(stage: &str, config_json: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update(b"\0");
    hasher.update(config_json.as_bytes());
    hex::encode(hasher.finalize())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> diffgeo::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs `compute` unless an artifact for (stage, config) is already cached;
/// either way the result lands in `<out>/<stage>.json` and is echoed to
/// stdout. Cache entries are keyed by a hash of the serialized config, so a
/// changed configuration can never read a stale artifact.
fn cached_stage<C, F>(stage: &str, config: &C, out: &Path, compute: F) -> diffgeo::Result<()>
where
    C: Serialize,
    F: FnOnce() -> diffgeo::Result<String>,
{
    let config_json = serde_json::to_string(config)
        .map_err(|e| Error::invalid(format!("config serialization: {e}")))?;
    let key = cache_key(stage, &config_json);
    let cache_path = cache_dir(out).join(format!("{key}.json"));
    let body = if cache_path.is_file() {
        eprintln!("cache hit for {stage} ({key})");
        std::fs::read_to_string(&cache_path)?
    } else {
        let body = compute()?;
        atomic_write(&cache_path, body.as_bytes())?;
        body
    };
    let out_path = out.join(format!("{stage}.json"));
    atomic_write(&out_path, body.as_bytes())?;
    println!("{body}");
    eprintln!("wrote {}", out_path.display());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> diffgeo::Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::numeric(format!("serialization: {e}")))
}

// ---------------------------------------------------------------------------
// subcommands

#[derive(Serialize)]
struct SynthReport {
    schema_version: u32,
    n: usize,
    dim: usize,
    csv: String,
}

fn cmd_synth(input: &InputArgs, out: &OutArgs) -> diffgeo::Result<()> {
    let spec = input_spec(input)?;
    let pc = load_cloud(&spec)?;
    std::fs::create_dir_all(&out.out)?;
    let csv_path = out.out.join("points.csv");
    save_csv(&pc, &csv_path)?;
    let report = SynthReport {
        schema_version: SCHEMA_VERSION,
        n: pc.n(),
        dim: pc.dim(),
        csv: csv_path.display().to_string(),
    };
    let body = to_json(&report)?;
    atomic_write(&out.out.join("synth.json"), body.as_bytes())?;
    println!("{body}");
    Ok(())
}

fn cmd_basis(input: &InputArgs, spectral: &SpectralArgs, out: &OutArgs) -> diffgeo::Result<()> {
    let cfg = pipeline_config(input, spectral)?;
    cached_stage("basis", &cfg, &out.out, || {
        let (_, _, report) = run_basis(&cfg)?;
        to_json(&report)
    })
}

fn cmd_forms(input: &InputArgs, spectral: &SpectralArgs, out: &OutArgs) -> diffgeo::Result<()> {
    let cfg = pipeline_config(input, spectral)?;
    cached_stage("forms", &cfg, &out.out, || {
        let (_, report) = run_forms(&cfg)?;
        to_json(&report)
    })
}

fn cmd_hodge(input: &InputArgs, spectral: &SpectralArgs, out: &OutArgs) -> diffgeo::Result<()> {
    let cfg = pipeline_config(input, spectral)?;
    cached_stage("hodge", &cfg, &out.out, || {
        let (_, report) = run_hodge(&cfg)?;
        to_json(&report)
    })
}

fn cmd_singularity(
    input: &InputArgs,
    spectral: &SpectralArgs,
    out: &OutArgs,
) -> diffgeo::Result<()> {
    let cfg = pipeline_config(input, spectral)?;
    cached_stage("singularity", &cfg, &out.out, || {
        let report = run_singularity(&cfg)?;
        to_json(&report)
    })
}

fn cmd_features(
    input: &InputArgs,
    spectral: &SpectralArgs,
    feat: &FeatureArgs,
    out: &OutArgs,
) -> diffgeo::Result<()> {
    let cfg = pipeline_config(input, spectral)?;
    let feat_cfg = FeatureConfig {
        f0: feat.f0,
        heat_times0: parse_times(&feat.heat_times0)?,
        f1: feat.f1,
        heat_times1: parse_times(&feat.heat_times1)?,
        dirichlet: feat.dirichlet,
        inner_products: feat.inner_products,
        cup_pairs: feat.cup_pairs,
    };
    cached_stage("features", &(&cfg, &feat_cfg), &out.out, || {
        let report = run_features(&cfg, &feat_cfg)?;
        to_json(&report)
    })
}

// ---------------------------------------------------------------------------
// benchmark harness

#[derive(Serialize)]
struct BenchReport {
    schema_version: u32,
    n0: usize,
    n1: usize,
    n2: usize,
    reps: usize,
    rows: Vec<BenchRow>,
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    stages: Vec<StageTiming>,
}

#[derive(Serialize)]
struct StageTiming {
    stage: String,
    mean_seconds: f64,
    std_seconds: f64,
}

const BENCH_STAGES: [&str; 4] = ["kernel", "eigensolve", "tensors", "hodge"];

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn bench_one(n: usize, spectral: &SpectralArgs, rep: usize) -> diffgeo::Result<[f64; 4]> {
    let pc = diffgeo::cloud::gen_torus(n, 2.0, 0.5, 0.0, 7 + rep as u64)?;
    let kernel = KernelConfig {
        bandwidth: match spectral.bandwidth {
            Some(t) => Bandwidth::Fixed(t),
            None => Bandwidth::Auto,
        },
        alpha: spectral.alpha,
        knn: spectral.knn,
        n0: spectral.n0,
    };
    let trunc = truncation(spectral);

    let t = Instant::now();
    let op = build_markov(&pc, &kernel)?;
    let t_kernel = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let basis = spectral_basis(&op, spectral.n0)?;
    let t_eigen = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut engine = Engine::new(basis, trunc, spectral.tau)?;
    engine.ensure_degree(2.min(trunc.n2))?;
    let t_tensors = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let hodge_op = assemble(&engine, 1, spectral.epsilon)?;
    let _ = solve(&engine, &hodge_op, spectral.num_eigs)?;
    let t_hodge = t.elapsed().as_secs_f64();

    Ok([t_kernel, t_eigen, t_tensors, t_hodge])
}

fn cmd_bench(sizes: &str, reps: usize, spectral: &SpectralArgs, out: &OutArgs) -> diffgeo::Result<()> {
    let sizes: Vec<usize> = sizes
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>().map_err(|e| Error::invalid(format!("bad size: {e}"))))
        .collect::<diffgeo::Result<_>>()?;
    if sizes.is_empty() || reps == 0 {
        return Err(Error::invalid("need at least one size and one rep"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sizes must be strictly ascending"));
    }
    let mut rows = Vec::new();
    for &n in &sizes {
        let mut samples = [const { Vec::new() }; 4];
        for rep in 0..reps {
            let times = bench_one(n, spectral, rep)?;
            for (bucket, t) in samples.iter_mut().zip(times) {
                bucket.push(t);
            }
        }
        let stages = BENCH_STAGES
            .iter()
            .zip(&samples)
            .map(|(name, bucket)| {
                let (mean, std) = mean_std(bucket);
                StageTiming { stage: name.to_string(), mean_seconds: mean, std_seconds: std }
            })
            .collect();
        rows.push(BenchRow { n, stages });
        eprintln!("benchmarked n = {n}");
    }
    let trunc = truncation(spectral);
    let report = BenchReport {
        schema_version: SCHEMA_VERSION,
        n0: trunc.n0,
        n1: trunc.n1,
        n2: trunc.n2,
        reps,
        rows,
    };
    let body = to_json(&report)?;
    atomic_write(&out.out.join("bench.json"), body.as_bytes())?;
    let mut csv = String::from("n,stage,mean_seconds,std_seconds\n");
    for row in &report.rows {
        for s in &row.stages {
            csv.push_str(&format!("{},{},{},{}\n", row.n, s.stage, s.mean_seconds, s.std_seconds));
        }
    }
    atomic_write(&out.out.join("bench.csv"), csv.as_bytes())?;
    println!("{body}");
    Ok(())
}
