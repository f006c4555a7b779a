//! Command-line front end. Every subcommand writes a CSV table and a JSON
//! summary into `--out`; tensor-producing subcommands also write NPY.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::correlation::{self, LcrOptions, PatchSpec, Similarity};
use crate::dynamics::{self, DenoiserConfig, Schedule, StrengthMethod, TimestepDist};
use crate::eigen;
use crate::error::{invalid, Error, Result};
use crate::masking::{self, MaskToken, RatioSchedule};
use crate::npy::{self, AnyBatch};
use crate::report::{num, to_value, ArtifactWriter, Csv, InputRecord, Summary};
use crate::rng;
use crate::scalar::Scalar;
use crate::spectrum;
use crate::synth::{parse_list, SynthConfig};
use crate::tensor::{standardize, LatentBatch};

pub const THREADS_ENV: &str = "LATENT_SPECTRA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "latent-spectra", version, about = "Spectral analysis and shaping of video latents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic latent batch
    Synth(SynthArgs),
    /// Zigzag-binned power spectral density
    Psd(PsdArgs),
    /// Patch-local correlation and lagged autocorrelation
    Localcorr(LocalcorrArgs),
    /// Shape a batch by gradient descent on the local correlation hinge
    OptimizeLcr(OptimizeLcrArgs),
    /// Channel eigenspectrum
    Eigen(EigenArgs),
    /// Shape a batch by gradient descent on the eigenvalue tail
    OptimizeCovpen(OptimizeCovpenArgs),
    /// Expected mode strengths under a timestep law
    Modes(ModesArgs),
    /// Train a linear velocity predictor and track per-mode errors
    Simulate(SimulateArgs),
    /// Apply block masks drawn from a ratio schedule
    Mask(MaskArgs),
    /// Compare empirical and analytic output-input cross-correlation
    VerifyTheorem1(Theorem1Args),
    /// Check the Wiener-Khinchin identity on random signals
    WkCheck(WkArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for CSV, JSON and NPY artifacts
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// NPY file, directory of NPY files, or `-` for stdin
    #[arg(long)]
    pub input: PathBuf,
    /// Skip per-channel standardization
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Key = value configuration file
    #[arg(long, conflicts_with_all = ["kind", "dims", "batch", "seed", "dtype", "ar", "eigenvalues", "mixing", "normalize"])]
    pub config: Option<PathBuf>,
    /// white, ar or spectrum (implied by --ar or --eigenvalues)
    #[arg(long)]
    pub kind: Option<String>,
    /// T,H,W,C
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// f32 or f64
    #[arg(long)]
    pub dtype: Option<String>,
    /// rho_t,rho_h,rho_w
    #[arg(long)]
    pub ar: Option<String>,
    /// Descending channel eigenvalues
    #[arg(long)]
    pub eigenvalues: Option<String>,
    /// identity or hadamard
    #[arg(long)]
    pub mixing: Option<String>,
    /// Rescale eigenvalues to sum to C
    #[arg(long)]
    pub normalize: bool,
    /// Output NPY path, or `-` for stdout (default: <out>/synth.npy)
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PsdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Low-frequency band per axis for the summary fraction
    #[arg(long, default_value = "2,4,4")]
    pub band: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    #[arg(long, default_value_t = 2)]
    pub patch: usize,
    /// cosine or dot
    #[arg(long, default_value = "cosine")]
    pub similarity: String,
    /// Treat frame 0 like every other frame
    #[arg(long)]
    pub no_first_frame_spatial: bool,
}

impl PatchArgs {
    fn spec(&self) -> Result<PatchSpec> {
        if self.patch == 0 {
            return invalid("patch size must be at least 1");
        }
        Ok(PatchSpec {
            size: self.patch,
            first_frame_spatial: !self.no_first_frame_spatial,
            similarity: self.similarity.parse::<Similarity>()?,
        })
    }
}

#[derive(Debug, Args)]
pub struct LocalcorrArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub patch: PatchArgs,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    /// Largest lag per axis (default: 1, clamped to each axis)
    #[arg(long)]
    pub max_lag: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeLcrArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub patch: PatchArgs,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.02)]
    pub omega: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e4)]
    pub step_size: f64,
    #[arg(long, default_value = "2,4,4")]
    pub band: String,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeCovpenArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Fraction of each vector's tail component removed per step
    #[arg(long, default_value_t = 0.1)]
    pub step_size: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    /// Eigenvalues; alternatively take them from --input
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub lambdas: Option<String>,
    /// NPY input whose channel eigenvalues are used
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// logit-normal:MEAN,STD | uniform | fixed:T
    #[arg(long, default_value = "logit-normal:0,1")]
    pub dist: String,
    /// quadrature or mc
    #[arg(long, default_value = "quadrature")]
    pub method: String,
    #[arg(long, default_value_t = dynamics::DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Required for --method mc
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "logit-normal:0,1")]
    pub dist: String,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step_size: f64,
    /// Samples drawn per step
    #[arg(long, default_value_t = 256)]
    pub draws: usize,
    /// 1: W from zero; 2: W = W1·W2 from a small random start
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub init_scale: f64,
    /// Snapshot every N steps; 0 selects the 1-2-5 schedule
    #[arg(long, default_value_t = 10)]
    pub every: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "0,0.25,0.5,0.75")]
    pub ratios: String,
    #[arg(long, default_value = "0.7,0.1,0.1,0.1")]
    pub probs: String,
    /// Block edge in positions
    #[arg(long, default_value_t = 1)]
    pub unit: usize,
    /// Per-channel token values (default: zeros)
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct Theorem1Args {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub t_grid: String,
    /// Independent noise draws per position
    #[arg(long, default_value_t = 4)]
    pub noise_draws: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct WkArgs {
    #[arg(long, default_value_t = 100)]
    pub signals: usize,
    #[arg(long, default_value_t = 64)]
    pub length: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parses arguments, runs, and returns the process exit code: 0 on
/// success, 1 for invalid usage or input, 2 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|_| execute(cli.command)) {
        Ok(line) => {
            if !line.is_empty() {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        // A pool may already exist when running in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs one subcommand; returns the summary line.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Psd(a) => psd(a),
        Command::Localcorr(a) => localcorr(a),
        Command::OptimizeLcr(a) => optimize_lcr(a),
        Command::Eigen(a) => eigen_cmd(a),
        Command::OptimizeCovpen(a) => optimize_covpen(a),
        Command::Modes(a) => modes(a),
        Command::Simulate(a) => simulate(a),
        Command::Mask(a) => mask(a),
        Command::VerifyTheorem1(a) => theorem1(a),
        Command::WkCheck(a) => wk_check(a),
    }
}

fn load(path: &Path) -> Result<(AnyBatch, Vec<InputRecord>)> {
    let unreadable = |e: std::io::Error| Error::InvalidArgument(format!("cannot read {}: {e}", path.display()));
    if path.as_os_str() == "-" {
        let mut bytes = Vec::new();
        std::io::stdin().read_to_end(&mut bytes).map_err(unreadable)?;
        return Ok((npy::decode(&bytes)?, vec![InputRecord::new("-", &bytes)]));
    }
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(unreadable)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "npy"))
            .collect();
        files.sort();
        let mut records = Vec::with_capacity(files.len());
        for f in &files {
            let bytes = fs::read(f).map_err(unreadable)?;
            records.push(InputRecord::new(f.display().to_string(), &bytes));
        }
        return Ok((npy::read_tensor(path)?, records));
    }
    let bytes = fs::read(path).map_err(unreadable)?;
    Ok((npy::decode(&bytes)?, vec![InputRecord::new(path.display().to_string(), &bytes)]))
}

fn load_f64(input: &InputArgs) -> Result<(LatentBatch<f64>, Vec<InputRecord>)> {
    let (any, rec) = load(&input.input)?;
    let b = any.to_f64();
    Ok((if input.no_standardize { b } else { standardize(&b)?.0 }, rec))
}

fn triple(s: &str, what: &str) -> Result<[usize; 3]> {
    let v = parse_list::<usize>(s)?;
    v.try_into()
        .map_err(|_| Error::InvalidArgument(format!("{what} needs three comma-separated entries")))
}

pub fn parse_dist(s: &str) -> Result<TimestepDist> {
    let (kind, params) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "logit-normal" if params.is_empty() => Ok(TimestepDist::default()),
        "logit-normal" => match parse_list::<f64>(params)?[..] {
            [m, sd] => TimestepDist::logit_normal(m, sd),
            _ => invalid("logit-normal takes MEAN,STD"),
        },
        "uniform" if params.is_empty() => Ok(TimestepDist::Uniform),
        "fixed" => TimestepDist::fixed(params.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad timestep `{params}`")))?),
        _ => invalid(format!("unknown timestep law `{s}` (logit-normal:MEAN,STD, uniform, fixed:T)")),
    }
}

fn input_echo(input: &InputArgs) -> Value {
    json!({"input": input.input.display().to_string(), "standardize": !input.no_standardize})
}

fn synth(a: SynthArgs) -> Result<String> {
    let (text, inputs) = match &a.config {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", p.display())))?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| Error::InvalidArgument("config is not UTF-8".into()))?;
            (text, vec![InputRecord::new(p.display().to_string(), &bytes)])
        }
        None => {
            let seed = a.seed.ok_or_else(|| Error::InvalidArgument("--seed is required".into()))?;
            let kind = match (&a.kind, &a.ar, &a.eigenvalues) {
                (Some(k), _, _) => k.clone(),
                (None, Some(_), None) => "ar".into(),
                (None, None, Some(_)) => "spectrum".into(),
                (None, None, None) => "white".into(),
                (None, Some(_), Some(_)) => return invalid("--ar and --eigenvalues are mutually exclusive"),
            };
            let dims = a.dims.clone().ok_or_else(|| Error::InvalidArgument("--dims is required".into()))?;
            let mut text = format!("kind = {kind}\ndims = {dims}\nseed = {seed}\n");
            if let Some(b) = a.batch {
                text += &format!("batch = {b}\n");
            }
            if let Some(d) = &a.dtype {
                text += &format!("dtype = {d}\n");
            }
            if let Some(r) = &a.ar {
                text += &format!("rho = {r}\n");
            }
            if let Some(e) = &a.eigenvalues {
                text += &format!("eigenvalues = {e}\n");
            }
            if let Some(m) = &a.mixing {
                text += &format!("mixing = {m}\n");
            }
            if a.normalize {
                text += "normalize = true\n";
            }
            (text, Vec::new())
        }
    };
    let cfg = SynthConfig::parse(&text)?;
    let bytes = match cfg.dtype {
        crate::Dtype::F32 => npy::encode(&cfg.generate::<f32>()?),
        crate::Dtype::F64 => npy::encode(&cfg.generate::<f64>()?),
    };
    let to_stdout = a.output.as_ref().is_some_and(|p| p.as_os_str() == "-");
    let mut w = ArtifactWriter::new(&a.out.out)?;
    let output = match &a.output {
        Some(p) if to_stdout => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
            p.display().to_string()
        }
        Some(p) => {
            fs::write(p, &bytes)?;
            p.display().to_string()
        }
        None => {
            w.bytes("synth.npy", &bytes)?;
            a.out.out.join("synth.npy").display().to_string()
        }
    };
    let metrics = json!({"output": output, "bytes": bytes.len(), "sha256": crate::report::git_blob_sha256(&bytes)});
    let summary = Summary::new("synth", to_value(&cfg)?, inputs, metrics);
    w.finish("synth.json", summary)?;
    let line = format!("synth: {} x {} {} -> {output}", cfg.batch, cfg.dims, cfg.dtype);
    if to_stdout {
        // stdout carries the tensor.
        eprintln!("{line}");
        return Ok(String::new());
    }
    Ok(line)
}

fn psd(a: PsdArgs) -> Result<String> {
    let band = triple(&a.band, "--band")?;
    let (b, inputs) = load_f64(&a.input)?;
    let grid = spectrum::power_grid(&b);
    let curve = spectrum::psd_from_grid(&grid, a.bins)?;
    let lf = spectrum::low_freq_energy_clamped(&grid, band)?;
    let mut t = Csv::new(&["bin", "start", "end", "energy"]);
    for (i, (bin, e)) in curve.bins.iter().zip(&curve.energy).enumerate() {
        t.row(vec![i.to_string(), bin.start.to_string(), bin.end.to_string(), num(*e)?])?;
    }
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("psd.csv", &t)?;
    let mut config = input_echo(&a.input);
    config["bins"] = json!(a.bins);
    config["band"] = json!(band);
    let metrics = json!({
        "energy_sum": curve.energy.iter().sum::<f64>(),
        "bin0_energy": curve.energy[0],
        "low_freq_fraction": lf,
        "total_power": grid.total(),
    });
    w.finish("psd.json", Summary::new("psd", config, inputs, metrics))?;
    Ok(format!("psd: {} bins, bin 0 holds {:.6} of the energy", a.bins, curve.energy[0]))
}

fn localcorr(a: LocalcorrArgs) -> Result<String> {
    let spec = a.patch.spec()?;
    let (b, inputs) = load_f64(&a.input)?;
    let d = b.dims();
    let max_lag = match &a.max_lag {
        Some(s) => triple(s, "--max-lag")?,
        None => [1.min(d.t - 1), 1.min(d.h - 1), 1.min(d.w - 1)],
    };
    let lc = correlation::local_correlation(&b, &spec)?;
    let loss = correlation::lcr_loss(&b, a.alpha, &spec)?;
    let ac = correlation::autocorrelation(&b, max_lag)?;
    let mut t = Csv::new(&["lag_t", "lag_h", "lag_w", "cosine", "correlation", "count"]);
    for (i, &(x, y, z)) in ac.lags.iter().enumerate() {
        t.row(vec![
            x.to_string(),
            y.to_string(),
            z.to_string(),
            num(ac.values[i])?,
            num(ac.dot_values[i])?,
            ac.counts[i].to_string(),
        ])?;
    }
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("localcorr.csv", &t)?;
    let mut config = input_echo(&a.input);
    config["patch"] = to_value(&spec)?;
    config["alpha"] = json!(a.alpha);
    config["max_lag"] = json!(max_lag);
    let metrics = json!({
        "mean_local_corr": lc.mean,
        "lcr_loss": loss,
        "patches": lc.per_patch.len(),
    });
    w.finish("localcorr.json", Summary::new("localcorr", config, inputs, metrics))?;
    Ok(format!("localcorr: mean local correlation {:.6} over {} patches", lc.mean, lc.per_patch.len()))
}

fn optimize_lcr(a: OptimizeLcrArgs) -> Result<String> {
    let spec = a.patch.spec()?;
    let band = triple(&a.band, "--band")?;
    let (any, inputs) = load(&a.input.input)?;
    let mut config = input_echo(&a.input);
    config["patch"] = to_value(&spec)?;
    config["alpha"] = json!(a.alpha);
    config["omega"] = json!(a.omega);
    config["steps"] = json!(a.steps);
    config["step_size"] = json!(a.step_size);
    config["band"] = json!(band);
    config["bins"] = json!(a.bins);
    if a.input.no_standardize {
        return invalid("optimize-lcr always standardizes its input");
    }
    fn go<S: Scalar>(b: &LatentBatch<S>, a: &OptimizeLcrArgs, spec: PatchSpec, band: [usize; 3]) -> Result<(Vec<u8>, Csv, Value)> {
        let opts = LcrOptions {
            alpha: S::lit(a.alpha),
            omega: S::lit(a.omega),
            steps: a.steps,
            step_size: S::lit(a.step_size),
            patch: spec,
            band,
        };
        let bins = a.bins.min(b.dims().positions());
        let before = spectrum::psd(&standardize(b)?.0, bins)?;
        let (z, traj) = correlation::optimize_latent_lcr(b, &opts)?;
        let after = spectrum::psd(&z, bins)?;
        let mut t = Csv::new(&["step", "loss", "local_corr", "low_freq_fraction"]);
        for s in &traj {
            t.row(vec![
                s.step.to_string(),
                num(s.loss.to_f64_lossy())?,
                num(s.local_corr.to_f64_lossy())?,
                num(s.low_freq_fraction.to_f64_lossy())?,
            ])?;
        }
        let (first, last) = (traj[0], traj[traj.len() - 1]);
        let metrics = json!({
            "initial_local_corr": first.local_corr.to_f64_lossy(),
            "final_local_corr": last.local_corr.to_f64_lossy(),
            "initial_low_freq_fraction": first.low_freq_fraction.to_f64_lossy(),
            "final_low_freq_fraction": last.low_freq_fraction.to_f64_lossy(),
            "final_loss": last.loss.to_f64_lossy(),
            "initial_bin0_energy": before.energy[0].to_f64_lossy(),
            "final_bin0_energy": after.energy[0].to_f64_lossy(),
        });
        Ok((npy::encode(&z), t, metrics))
    }
    let (bytes, t, metrics) = match &any {
        AnyBatch::F32(b) => go(b, &a, spec, band)?,
        AnyBatch::F64(b) => go(b, &a, spec, band)?,
    };
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("optimize-lcr.csv", &t)?;
    w.bytes("optimized.npy", &bytes)?;
    let line = format!(
        "optimize-lcr: local correlation {:.4} -> {:.4}",
        metrics["initial_local_corr"].as_f64().unwrap_or(f64::NAN),
        metrics["final_local_corr"].as_f64().unwrap_or(f64::NAN)
    );
    w.finish("optimize-lcr.json", Summary::new("optimize-lcr", config, inputs, metrics))?;
    Ok(line)
}

fn eigen_cmd(a: EigenArgs) -> Result<String> {
    let (b, inputs) = load_f64(&a.input)?;
    let sigma = eigen::channel_autocorr(&b);
    let e = eigen::eigh(&sigma)?;
    let cev = eigen::cumulative_explained_variance(&e.values)?;
    let er = eigen::effective_rank(&e.values)?;
    let share = eigen::top_k_share(&e.values, a.k)?;
    let mut t = Csv::new(&["mode_index", "eigenvalue", "cumulative_explained_variance"]);
    for (l, (&v, &c)) in e.values.iter().zip(&cev).enumerate() {
        t.row(vec![(l + 1).to_string(), num(v)?, num(c)?])?;
    }
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("eigen.csv", &t)?;
    let mut config = input_echo(&a.input);
    config["k"] = json!(a.k);
    let metrics = json!({"effective_rank": er, "top_k_share": share, "trace": sigma.trace()});
    w.finish("eigen.json", Summary::new("eigen", config, inputs, metrics))?;
    Ok(format!("eigen: effective rank {er:.4}, top-{} share {share:.4}", a.k))
}

fn optimize_covpen(a: OptimizeCovpenArgs) -> Result<String> {
    if a.input.no_standardize {
        return invalid("optimize-covpen always standardizes its input");
    }
    let (any, inputs) = load(&a.input.input)?;
    let mut config = input_echo(&a.input);
    config["k"] = json!(a.k);
    config["steps"] = json!(a.steps);
    config["step_size"] = json!(a.step_size);
    fn go<S: Scalar>(b: &LatentBatch<S>, a: &OptimizeCovpenArgs) -> Result<(Vec<u8>, Csv, Value)> {
        let (z, traj) = eigen::optimize_latent_covpen(b, a.k, a.steps, S::lit(a.step_size))?;
        let mut t = Csv::new(&["step", "penalty", "effective_rank"]);
        for s in &traj {
            t.row(vec![
                s.step.to_string(),
                num(s.penalty.to_f64_lossy())?,
                num(s.effective_rank.to_f64_lossy())?,
            ])?;
        }
        let (first, last) = (traj[0], traj[traj.len() - 1]);
        let metrics = json!({
            "initial_penalty": first.penalty.to_f64_lossy(),
            "final_penalty": last.penalty.to_f64_lossy(),
            "initial_effective_rank": first.effective_rank.to_f64_lossy(),
            "final_effective_rank": last.effective_rank.to_f64_lossy(),
            "unreliable_gradient_steps": traj.iter().filter(|s| !s.gradient_reliable).count(),
        });
        Ok((npy::encode(&z), t, metrics))
    }
    let (bytes, t, metrics) = match &any {
        AnyBatch::F32(b) => go(b, &a)?,
        AnyBatch::F64(b) => go(b, &a)?,
    };
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("optimize-covpen.csv", &t)?;
    w.bytes("optimized.npy", &bytes)?;
    let line = format!(
        "optimize-covpen: effective rank {:.4} -> {:.4}",
        metrics["initial_effective_rank"].as_f64().unwrap_or(f64::NAN),
        metrics["final_effective_rank"].as_f64().unwrap_or(f64::NAN)
    );
    w.finish("optimize-covpen.json", Summary::new("optimize-covpen", config, inputs, metrics))?;
    Ok(line)
}

fn modes(a: ModesArgs) -> Result<String> {
    let dist = parse_dist(&a.dist)?;
    let (lambdas, inputs) = match (&a.lambdas, &a.input) {
        (Some(l), _) => (parse_list::<f64>(l)?, Vec::new()),
        (None, Some(p)) => {
            let (any, rec) = load(p)?;
            let b = standardize(&any.to_f64())?.0;
            let e = eigen::eigh(&eigen::channel_autocorr(&b))?;
            (e.values.iter().map(|v| v.max(0.0)).collect(), rec)
        }
        (None, None) => return invalid("give --lambdas or --input"),
    };
    let method = match a.method.as_str() {
        "quadrature" => StrengthMethod::Quadrature { nodes: a.nodes },
        "mc" => StrengthMethod::MonteCarlo {
            n: a.samples,
            seed: a.seed.ok_or_else(|| Error::InvalidArgument("--method mc requires --seed".into()))?,
        },
        other => return invalid(format!("unknown method `{other}` (quadrature or mc)")),
    };
    let curve = dynamics::expected_mode_strength(&lambdas, &dist, method)?;
    let mut t = Csv::new(&["mode", "lambda", "s_bar", "abs_s_bar"]);
    for l in 0..lambdas.len() {
        t.row(vec![(l + 1).to_string(), num(lambdas[l])?, num(curve.s_bar[l])?, num(curve.abs_s_bar[l])?])?;
    }
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("modes.csv", &t)?;
    let mut config = json!({"dist": to_value(&dist)?, "method": a.method, "lambdas": lambdas});
    match method {
        StrengthMethod::Quadrature { nodes } => config["nodes"] = json!(nodes),
        StrengthMethod::MonteCarlo { n, seed } => {
            config["samples"] = json!(n);
            config["seed"] = json!(seed);
        }
    }
    if let Some(p) = &a.input {
        config["input"] = json!(p.display().to_string());
    }
    let mut metrics = json!({"mean_t": curve.mean_t, "zero_crossing": curve.zero_crossing()});
    if let Some(se) = &curve.std_error {
        metrics["std_error"] = json!(se);
    }
    w.finish("modes.json", Summary::new("modes", config, inputs, metrics))?;
    Ok(format!("modes: {} modes, E[t] = {:.6}", lambdas.len(), curve.mean_t))
}

fn simulate(a: SimulateArgs) -> Result<String> {
    let dist = parse_dist(&a.dist)?;
    let (b, inputs) = load_f64(&a.input)?;
    let cfg = DenoiserConfig {
        dist,
        steps: a.steps,
        step_size: a.step_size,
        batch_draws: a.draws,
        depth: a.depth,
        init_scale: a.init_scale,
        schedule: if a.every == 0 { Schedule::Decades } else { Schedule::Every(a.every) },
        seed: a.seed,
    };
    let study = dynamics::convergence_study(&b, &cfg)?;
    let c = &study.curve;
    let mut t = Csv::new(&["step", "mode", "learned_strength", "rel_error"]);
    for (k, &step) in c.steps.iter().enumerate() {
        for l in 0..c.modes() {
            t.row(vec![step.to_string(), (l + 1).to_string(), num(c.learned[k][l])?, num(c.error[k][l])?])?;
        }
    }
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("simulate.csv", &t)?;
    let mut config = input_echo(&a.input);
    config["denoiser"] = to_value(&cfg)?;
    let metrics = json!({
        "spearman": study.spearman,
        "steps_to_half": study.steps_to_half,
        "mean_steps_to_half": study.mean_steps_to_half,
        "lambdas": study.lambdas,
        "s_bar": c.s_bar,
        "relative_error": c.relative,
    });
    let metrics = strip_nulls(metrics);
    w.finish("simulate.json", Summary::new("simulate", config, inputs, metrics))?;
    Ok(match study.spearman {
        Some(r) => format!("simulate: Spearman(|s_bar|, steps to 50%) = {r:.4}"),
        None => "simulate: Spearman undefined (constant ranks)".to_string(),
    })
}

/// Drops `null` members so optional metrics are simply absent.
fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.into_iter().filter(|(_, x)| !x.is_null()).collect()),
        other => other,
    }
}

fn mask(a: MaskArgs) -> Result<String> {
    let schedule = RatioSchedule::new(parse_list(&a.ratios)?, parse_list(&a.probs)?)?;
    let (any, inputs) = load(&a.input.input)?;
    let c = any.dims().c;
    let token_values: Option<Vec<f64>> = a.token.as_deref().map(parse_list).transpose()?;
    if let Some(v) = &token_values {
        if v.len() != c {
            return invalid(format!("--token has {} values, input has {c} channels", v.len()));
        }
    }
    fn go<S: Scalar>(b: &LatentBatch<S>, a: &MaskArgs, schedule: &RatioSchedule, token: Option<&[f64]>) -> Result<(Vec<u8>, Csv, Value)> {
        let z = if a.input.no_standardize { b.clone() } else { standardize(b)?.0 };
        let token = match token {
            Some(v) => MaskToken::new(v.iter().map(|&x| S::lit(x)).collect())?,
            None => MaskToken::zeros(z.dims().c),
        };
        let out = masking::masked_identity_pipeline(&z, schedule, &token, a.unit, a.seed)?;
        let mut t = Csv::new(&["item", "ratio_requested", "ratio_realized", "l1_perturbation"]);
        for i in 0..out.l1.len() {
            t.row(vec![
                i.to_string(),
                num(out.ratio_requested[i])?,
                num(out.ratio_realized[i])?,
                num(out.l1[i].to_f64_lossy())?,
            ])?;
        }
        let l1: Vec<f64> = out.l1.iter().map(|x| x.to_f64_lossy()).collect();
        let metrics = json!({
            "ratio_requested": out.ratio_requested,
            "ratio_realized": out.ratio_realized,
            "l1_perturbation": l1,
            "mean_l1_perturbation": out.mean_l1().to_f64_lossy(),
        });
        Ok((npy::encode(&out.batch), t, metrics))
    }
    let (bytes, t, metrics) = match &any {
        AnyBatch::F32(b) => go(b, &a, &schedule, token_values.as_deref())?,
        AnyBatch::F64(b) => go(b, &a, &schedule, token_values.as_deref())?,
    };
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("mask.csv", &t)?;
    w.bytes("masked.npy", &bytes)?;
    let mut config = input_echo(&a.input);
    config["schedule"] = to_value(&schedule)?;
    config["unit"] = json!(a.unit);
    config["token"] = match &token_values {
        Some(v) => json!(v),
        None => json!(vec![0.0; c]),
    };
    config["seed"] = json!(a.seed);
    let line = format!(
        "mask: {} items, mean L1 perturbation {:.6}",
        any.len(),
        metrics["mean_l1_perturbation"].as_f64().unwrap_or(f64::NAN)
    );
    w.finish("mask.json", Summary::new("mask", config, inputs, metrics))?;
    Ok(line)
}

fn theorem1(a: Theorem1Args) -> Result<String> {
    let grid = parse_list::<f64>(&a.t_grid)?;
    let (b, inputs) = load_f64(&a.input)?;
    let sigma = eigen::channel_autocorr(&b);
    let base = eigen::eigh(&sigma)?;
    let c = sigma.order();
    let mut t = Csv::new(&["t", "i", "j", "empirical", "analytic", "std_error", "z"]);
    let (mut max_z, mut exceed, mut entries, mut commutator, mut angle) = (0.0f64, 0usize, 0usize, 0.0f64, 0.0f64);
    for &tt in &grid {
        let analytic = dynamics::cross_corr_analytic(&sigma, tt)?;
        let est = dynamics::cross_corr_empirical(&b, tt, a.noise_draws, a.seed)?;
        let z = est.z_scores(&analytic);
        let mut k = 0;
        for i in 0..c {
            for j in i..c {
                let zz = z[k];
                t.row(vec![
                    num(tt)?,
                    i.to_string(),
                    j.to_string(),
                    num(est.matrix.get(i, j))?,
                    num(analytic.get(i, j))?,
                    num(est.std_error[i * c + j])?,
                    num(if zz.is_finite() { zz } else { f64::MAX })?,
                ])?;
                max_z = max_z.max(zz);
                exceed += usize::from(zz > 3.0);
                entries += 1;
                k += 1;
            }
        }
        commutator = commutator.max(sigma.commutator_max(&analytic));
        if tt > 0.0 && tt < 1.0 {
            let e = eigen::eigh(&est.matrix)?;
            angle = angle.max(dynamics::eigenbasis_angles(&base, &e).into_iter().fold(0.0, f64::max));
        }
    }
    if !max_z.is_finite() {
        return Err(Error::NonFinite("an entry with zero standard error disagrees with the analytic value".into()));
    }
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("verify-theorem1.csv", &t)?;
    let mut config = input_echo(&a.input);
    config["t_grid"] = json!(grid);
    config["noise_draws"] = json!(a.noise_draws);
    config["seed"] = json!(a.seed);
    let metrics = json!({
        "max_z": max_z,
        "entries": entries,
        "entries_beyond_3se": exceed,
        "commutator_max": commutator,
        "max_eigenbasis_angle_deg": angle,
        "samples_per_t": b.samples() * a.noise_draws,
    });
    w.finish("verify-theorem1.json", Summary::new("verify-theorem1", config, inputs, metrics))?;
    Ok(format!("verify-theorem1: max |z| {max_z:.3} over {entries} entries, {exceed} beyond 3 SE"))
}

fn wk_check(a: WkArgs) -> Result<String> {
    if a.signals == 0 {
        return invalid("--signals must be at least 1");
    }
    let mut t = Csv::new(&["signal", "max_rel_diff"]);
    let mut worst = 0.0f64;
    for i in 0..a.signals {
        let mut r = rng::stream(a.seed, i as u64);
        let mut x = vec![0.0; a.length];
        rng::fill_normal(&mut r, &mut x);
        let wk = spectrum::wiener_khinchin_check(&x)?;
        worst = worst.max(wk.max_rel_diff);
        t.row(vec![i.to_string(), num(wk.max_rel_diff)?])?;
    }
    let mut w = ArtifactWriter::new(&a.out.out)?;
    w.csv("wk-check.csv", &t)?;
    let config = json!({"signals": a.signals, "length": a.length, "seed": a.seed});
    w.finish("wk-check.json", Summary::new("wk-check", config, Vec::new(), json!({"max_rel_diff": worst})))?;
    Ok(format!("wk-check: max relative difference {worst:.3e} over {} signals", a.signals))
}
