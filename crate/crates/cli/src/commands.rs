//! Subcommand drivers: calibrate, compare, bitsweep, trsweep, alpha-sweep.
//!
//! All commands are non-interactive, deterministic under fixed seeds, and
//! write machine-readable report files next to the aligned tables they
//! print. The default output directory comes from `SQDIT_OUT_DIR`.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use sqdit_core::calib::{
    self, run_calibration, CalibrationSet, QuantConfig, Smoothing, TimeStepTable,
};
use sqdit_core::engine::{ExecutorKind, QuantizedExecutor};
use sqdit_core::model::{
    build_model, denoise, DiffusionSchedule, LatentVideo, ToyModel, ToyModelConfig,
};
use sqdit_core::quant::BitWidth;
use sqdit_core::Error as CoreError;

use crate::error::{CliError, Result};
use crate::metrics::{run_fidelity, FidelityReport, RunMetrics, SnrProbe};
use crate::report::{disp, render_table, write_atomic, ReportFile};
use crate::tablefile::{load_table, save_table};

pub const OUT_DIR_ENV: &str = "SQDIT_OUT_DIR";

/// Quantization scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Channel-wise weights + tensor-wise activations, no smoothing.
    CwTw,
    /// Aggregated smooth quantization (single time range).
    Asq,
    /// Time-step-wise smooth quantization with static per-range tables.
    TsqTsw,
    /// Per-token dynamic activation baseline (no table).
    Dynamic,
}

impl SchemeArg {
    fn flag_name(self) -> &'static str {
        match self {
            SchemeArg::CwTw => "cw-tw",
            SchemeArg::Asq => "asq",
            SchemeArg::TsqTsw => "tsq-tsw",
            SchemeArg::Dynamic => "dynamic",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Transformer block count.
    #[arg(long, default_value_t = 2)]
    pub n_blocks: usize,
    /// Model width.
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    /// Attention heads (must divide d_model).
    #[arg(long, default_value_t = 4)]
    pub n_heads: usize,
    /// Latent video frames.
    #[arg(long, default_value_t = 4)]
    pub frames: usize,
    /// Spatial tokens per frame.
    #[arg(long, default_value_t = 16)]
    pub spatial_tokens: usize,
    /// Conditioning vector width.
    #[arg(long, default_value_t = 32)]
    pub cond_dim: usize,
    /// Weight initialization seed.
    #[arg(long, default_value_t = 7)]
    pub model_seed: u64,
    /// Run the tiny output-scale fitting pass after initialization.
    #[arg(long, default_value_t = false)]
    pub fit: bool,
}

impl ModelArgs {
    pub fn to_config(&self) -> Result<ToyModelConfig> {
        let cfg = ToyModelConfig {
            n_blocks: self.n_blocks,
            d_model: self.d_model,
            n_heads: self.n_heads,
            frames: self.frames,
            spatial_tokens: self.spatial_tokens,
            cond_dim: self.cond_dim,
            seed: self.model_seed,
            fit: self.fit,
        };
        cfg.validate()
            .map_err(|e| CliError::Usage(format!("model flags: {e}")))?;
        Ok(cfg)
    }
}

/// Model overrides for commands that normally inherit the configuration
/// from a table file. Explicit values must agree with the table.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelOverrides {
    #[arg(long)]
    pub n_blocks: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub spatial_tokens: Option<usize>,
    #[arg(long)]
    pub cond_dim: Option<usize>,
    #[arg(long)]
    pub model_seed: Option<u64>,
}

impl ModelOverrides {
    /// Applies overrides onto `base`. When `strict` (a table supplied the
    /// base), any explicit flag that disagrees is a mismatch.
    fn resolve(&self, mut base: ToyModelConfig, strict: bool) -> Result<ToyModelConfig> {
        let apply = |name: &str, flag: Option<u64>, slot: &mut u64| -> Result<()> {
            if let Some(v) = flag {
                if strict && v != *slot {
                    return Err(CliError::Mismatch(format!(
                        "--{name}={v} does not match the table's model config ({})",
                        *slot
                    )));
                }
                *slot = v;
            }
            Ok(())
        };
        let mut n_blocks = base.n_blocks as u64;
        let mut d_model = base.d_model as u64;
        let mut n_heads = base.n_heads as u64;
        let mut frames = base.frames as u64;
        let mut spatial = base.spatial_tokens as u64;
        let mut cond_dim = base.cond_dim as u64;
        apply("n-blocks", self.n_blocks.map(|v| v as u64), &mut n_blocks)?;
        apply("d-model", self.d_model.map(|v| v as u64), &mut d_model)?;
        apply("n-heads", self.n_heads.map(|v| v as u64), &mut n_heads)?;
        apply("frames", self.frames.map(|v| v as u64), &mut frames)?;
        apply(
            "spatial-tokens",
            self.spatial_tokens.map(|v| v as u64),
            &mut spatial,
        )?;
        apply("cond-dim", self.cond_dim.map(|v| v as u64), &mut cond_dim)?;
        let mut seed = base.seed;
        apply("model-seed", self.model_seed, &mut seed)?;
        base.n_blocks = n_blocks as usize;
        base.d_model = d_model as usize;
        base.n_heads = n_heads as usize;
        base.frames = frames as usize;
        base.spatial_tokens = spatial as usize;
        base.cond_dim = cond_dim as usize;
        base.seed = seed;
        base.validate()
            .map_err(|e| CliError::Usage(format!("model flags: {e}")))?;
        Ok(base)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CalibArgs {
    /// Denoising steps of the schedule.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// Classifier-free guidance scale.
    #[arg(long, default_value_t = 7.0)]
    pub cfg_scale: f64,
    /// Calibration prompt count when synthesizing the set.
    #[arg(long, default_value_t = 10)]
    pub calib_prompts: usize,
    /// Seed of the synthetic calibration set.
    #[arg(long = "seed", default_value_t = 900)]
    pub calib_seed: u64,
    /// Calibration set fixture file (overrides the synthetic set).
    #[arg(long)]
    pub calib_set: Option<PathBuf>,
}

impl CalibArgs {
    fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.steps, self.cfg_scale)
            .map_err(|e| CliError::Usage(format!("--steps: {e}")))
    }

    fn calibration_set(&self, model: &ToyModelConfig) -> Result<CalibrationSet> {
        match &self.calib_set {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(CliError::io(path.display().to_string()))?;
                CalibrationSet::from_text(&text).map_err(CliError::Calibration)
            }
            None => CalibrationSet::synthetic(model, self.calib_prompts, self.calib_seed)
                .map_err(CliError::Calibration),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Evaluation prompt count.
    #[arg(long, default_value_t = 10)]
    pub eval_prompts: usize,
    /// Seed of the synthetic evaluation set.
    #[arg(long, default_value_t = 4242)]
    pub eval_seed: u64,
}

/// Resolves the output path: explicit flag, or default name inside
/// `SQDIT_OUT_DIR` (falling back to the working directory).
fn out_path(flag: &Option<PathBuf>, default_name: &str) -> PathBuf {
    match flag {
        Some(p) => p.clone(),
        None => {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            dir.join(default_name)
        }
    }
}

/// Builds the quantization config for a static scheme, applying the
/// per-scheme defaults and flag rules.
pub fn build_quant_config(
    scheme: SchemeArg,
    tr: Option<usize>,
    w_bits: u8,
    a_bits: u8,
    alpha: Option<f64>,
    momentum: f64,
    steps: usize,
) -> Result<QuantConfig> {
    let w = BitWidth::new(w_bits).map_err(|e| CliError::Usage(format!("--w-bits: {e}")))?;
    let a = BitWidth::new(a_bits).map_err(|e| CliError::Usage(format!("--a-bits: {e}")))?;
    let (smoothing, default_r, default_alpha) = match scheme {
        SchemeArg::CwTw => (Smoothing::None, 1, 0.0),
        SchemeArg::Asq => (Smoothing::Asq, 1, QuantConfig::ASQ_ALPHA),
        SchemeArg::TsqTsw => (Smoothing::Tsq, steps, QuantConfig::TSQ_ALPHA),
        SchemeArg::Dynamic => {
            return Err(CliError::Usage(
                "--scheme dynamic computes parameters at inference and produces no table".into(),
            ))
        }
    };
    let r = tr.unwrap_or(default_r);
    if scheme == SchemeArg::Asq && r != 1 {
        return Err(CliError::Usage(format!(
            "--tr {r} is invalid: --scheme asq forces a single time range"
        )));
    }
    if r == 0 || r > steps {
        return Err(CliError::Usage(format!(
            "--tr {r} outside [1, {steps}] (--steps)"
        )));
    }
    if scheme == SchemeArg::CwTw && alpha.is_some() {
        return Err(CliError::Usage(
            "--alpha has no effect with --scheme cw-tw".into(),
        ));
    }
    QuantConfig::new(w, a, smoothing, r, alpha.unwrap_or(default_alpha), momentum)
        .map_err(|e| CliError::Usage(format!("--alpha/--momentum: {e}")))
}

#[derive(Debug, Args)]
pub struct CalibrateCmd {
    /// Quantization scheme to calibrate.
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Time-range count (defaults: 1 for cw-tw/asq, --steps for tsq-tsw).
    #[arg(long)]
    pub tr: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub w_bits: u8,
    #[arg(long, default_value_t = 8)]
    pub a_bits: u8,
    /// Smoothing strength (defaults: 0.4 for asq, 0.2 for tsq-tsw).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Running-average momentum of the smoothing statistics.
    #[arg(long, default_value_t = QuantConfig::DEFAULT_MOMENTUM)]
    pub momentum: f64,
    /// Output table path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub calib: CalibArgs,
}

pub fn cmd_calibrate(args: &CalibrateCmd) -> Result<()> {
    let model_cfg = args.model.to_config()?;
    let schedule = args.calib.schedule()?;
    let quant_cfg = build_quant_config(
        args.scheme,
        args.tr,
        args.w_bits,
        args.a_bits,
        args.alpha,
        args.momentum,
        schedule.steps(),
    )?;
    let model =
        build_model(&model_cfg).map_err(|e| CliError::Usage(format!("model flags: {e}")))?;
    let set = args.calib.calibration_set(&model_cfg)?;
    let table =
        run_calibration(&model, &schedule, &set, &quant_cfg).map_err(CliError::Calibration)?;

    let default_name = format!(
        "table_{}_w{}a{}_{}tr.sqtb",
        args.scheme.flag_name(),
        args.w_bits,
        args.a_bits,
        quant_cfg.ranges
    );
    let path = out_path(&args.out, &default_name);
    let size = save_table(&table, &model_cfg, &path)?;
    println!("calibrated {table}");
    println!(
        "wrote {} ({} layers, {} ranges, {} bytes)",
        path.display(),
        table.layers().len(),
        table.partition().len(),
        size
    );
    Ok(())
}

/// Maps executor/table pairing failures to the mismatch exit code.
fn bind_checked(
    model: &ToyModel,
    table: &TimeStepTable,
    kind: ExecutorKind,
) -> Result<QuantizedExecutor> {
    QuantizedExecutor::bind(model, table, kind).map_err(|e| match e {
        CoreError::InvalidConfig(_)
        | CoreError::MissingLayer(_)
        | CoreError::PartitionMismatch(_)
        | CoreError::ShapeError(_) => CliError::Mismatch(e.to_string()),
        other => CliError::Core(other),
    })
}

fn parse_bit_pair(s: &str, flag: &str) -> Result<(u8, u8)> {
    let parts: Vec<&str> = s.split('/').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!(
            "{flag}: expected W/A (e.g. 8/8), got {s:?}"
        )));
    }
    let w = parts[0]
        .parse::<u8>()
        .map_err(|e| CliError::Usage(format!("{flag}: bad W in {s:?}: {e}")))?;
    let a = parts[1]
        .parse::<u8>()
        .map_err(|e| CliError::Usage(format!("{flag}: bad A in {s:?}: {e}")))?;
    Ok((w, a))
}

/// Shared evaluation context: float reference outputs over the eval set.
struct EvalContext {
    schedule: DiffusionSchedule,
    eval: CalibrationSet,
    reference: Vec<LatentVideo>,
}

impl EvalContext {
    fn new(model: &ToyModel, schedule: DiffusionSchedule, eval_args: &EvalArgs) -> Result<Self> {
        let eval =
            CalibrationSet::synthetic(model.config(), eval_args.eval_prompts, eval_args.eval_seed)
                .map_err(CliError::Calibration)?;
        let float = QuantizedExecutor::float_reference(model);
        let reference = eval
            .prompts()
            .iter()
            .map(|p| denoise(model, &schedule, &p.cond, p.seed, &float))
            .collect::<sqdit_core::Result<_>>()?;
        Ok(Self {
            schedule,
            eval,
            reference,
        })
    }

    fn run_static(&self, model: &ToyModel, table: &TimeStepTable) -> Result<RunMetrics> {
        let exec = bind_checked(model, table, ExecutorKind::StaticFakeQuant)?;
        let probe = SnrProbe::for_table(&exec, table);
        let outputs = self.generate(model, &probe)?;
        let (mse, cosine, psnr_db) = run_fidelity(&outputs, &self.reference);
        Ok(RunMetrics {
            scheme: table.scheme_tag(),
            w_bits: table.config().w_bits.bits(),
            a_bits: table.config().a_bits.bits(),
            mse,
            cosine,
            psnr_db,
            snr: probe.cells(),
        })
    }

    fn run_dynamic(&self, model: &ToyModel, w_bits: u8, a_bits: u8) -> Result<RunMetrics> {
        let w = BitWidth::new(w_bits).map_err(|e| CliError::Usage(format!("--dynamic: {e}")))?;
        let a = BitWidth::new(a_bits).map_err(|e| CliError::Usage(format!("--dynamic: {e}")))?;
        let exec = QuantizedExecutor::dynamic_baseline(model, w, a)?;
        let probe = SnrProbe::for_dynamic(&exec, a);
        let outputs = self.generate(model, &probe)?;
        let (mse, cosine, psnr_db) = run_fidelity(&outputs, &self.reference);
        Ok(RunMetrics {
            scheme: "Dynamic per-token".into(),
            w_bits,
            a_bits,
            mse,
            cosine,
            psnr_db,
            snr: probe.cells(),
        })
    }

    fn float_row(&self) -> RunMetrics {
        let (mse, cosine, psnr_db) = run_fidelity(&self.reference, &self.reference);
        RunMetrics {
            scheme: "FP64".into(),
            w_bits: 64,
            a_bits: 64,
            mse,
            cosine,
            psnr_db,
            snr: Vec::new(),
        }
    }

    fn generate(
        &self,
        model: &ToyModel,
        exec: &dyn sqdit_core::model::LayerExecutor,
    ) -> Result<Vec<LatentVideo>> {
        self.eval
            .prompts()
            .iter()
            .map(|p| {
                denoise(model, &self.schedule, &p.cond, p.seed, exec).map_err(|e| match e {
                    CoreError::StepCountMismatch(_) => CliError::Mismatch(e.to_string()),
                    other => CliError::Core(other),
                })
            })
            .collect()
    }
}

/// Arithmetic mean of one scheme's sweep rows.
#[derive(Debug, Clone)]
pub struct SchemeAverage {
    pub scheme: String,
    pub mse: f64,
    pub cosine: f64,
    pub psnr_db: f64,
}

fn print_fidelity(report: &FidelityReport, averages: &[SchemeAverage]) {
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.scheme.clone(),
                format!("{}/{}", r.w_bits, r.a_bits),
                disp(r.mse),
                disp(r.cosine),
                disp(r.psnr_db),
            ]
        })
        .collect();
    for avg in averages {
        rows.push(vec![
            format!("{} [avg]", avg.scheme),
            "-".into(),
            disp(avg.mse),
            disp(avg.cosine),
            disp(avg.psnr_db),
        ]);
    }
    print!(
        "{}",
        render_table(&["scheme", "W/A", "mse", "cosine", "psnr_db"], &rows)
    );
}

#[derive(Debug, Args)]
pub struct CompareCmd {
    /// Table files to evaluate (repeatable).
    #[arg(long = "table")]
    pub tables: Vec<PathBuf>,
    /// Skip the float reference row.
    #[arg(long, default_value_t = false)]
    pub no_fp: bool,
    /// Add the dynamic per-token baseline at the given W/A bits.
    #[arg(long, value_name = "W/A")]
    pub dynamic: Option<String>,
    /// Schedule steps (default: taken from the tables, else 20).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 7.0)]
    pub cfg_scale: f64,
    /// Report output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub eval: EvalArgs,
}

pub fn cmd_compare(args: &CompareCmd) -> Result<()> {
    let report = run_compare(args)?;
    let path = out_path(&args.out, "compare_report.txt");
    let mut file = ReportFile::new("compare");
    file.meta("eval_prompts", args.eval.eval_prompts)
        .meta("eval_seed", args.eval.eval_seed)
        .meta("cfg_scale", args.cfg_scale)
        .fidelity(&report);
    write_atomic(&path, file.finish().as_bytes())?;
    print_fidelity(&report, &[]);
    println!("report: {}", path.display());
    Ok(())
}

/// Compare driver, reusable by tests: loads tables, reconciles model
/// configs, evaluates every requested row.
pub fn run_compare(args: &CompareCmd) -> Result<FidelityReport> {
    let mut loaded = Vec::new();
    for path in &args.tables {
        let (table, cfg) = load_table(path)?;
        loaded.push((path.clone(), table, cfg));
    }
    if let Some(((first_path, _, first_cfg), rest)) = loaded.split_first() {
        for (path, _, cfg) in rest {
            if cfg != first_cfg {
                return Err(CliError::Mismatch(format!(
                    "{} and {} were calibrated for different model configurations",
                    first_path.display(),
                    path.display()
                )));
            }
        }
    }
    let strict = !loaded.is_empty();
    let base = loaded.first().map(|(_, _, cfg)| *cfg).unwrap_or_default();
    let model_cfg = args.model.resolve(base, strict)?;

    let steps = match args.steps {
        Some(s) => s,
        None => loaded
            .first()
            .map(|(_, t, _)| t.partition().total_steps())
            .unwrap_or(20),
    };
    let schedule = DiffusionSchedule::new(steps, args.cfg_scale)
        .map_err(|e| CliError::Usage(format!("--steps: {e}")))?;
    let model =
        build_model(&model_cfg).map_err(|e| CliError::Usage(format!("model flags: {e}")))?;
    let ctx = EvalContext::new(&model, schedule, &args.eval)?;

    let mut report = FidelityReport::default();
    if !args.no_fp {
        report.rows.push(ctx.float_row());
    }
    if let Some(bits) = &args.dynamic {
        let (w, a) = parse_bit_pair(bits, "--dynamic")?;
        report.rows.push(ctx.run_dynamic(&model, w, a)?);
    }
    for (_, table, _) in &loaded {
        report.rows.push(ctx.run_static(&model, table)?);
    }
    Ok(report)
}

#[derive(Debug, Args)]
pub struct BitsweepCmd {
    /// Schemes to sweep.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = [SchemeArg::TsqTsw, SchemeArg::Asq, SchemeArg::Dynamic])]
    pub schemes: Vec<SchemeArg>,
    /// W/A bit pairs, comma separated.
    #[arg(long, value_delimiter = ',',
          default_values_t = ["4/4", "4/6", "6/6", "4/8", "6/8", "8/8", "4/16", "6/16", "8/16"].map(String::from))]
    pub pairs: Vec<String>,
    /// Time-range count for tsq-tsw rows (default: --steps).
    #[arg(long)]
    pub tr: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub calib: CalibArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
}

pub fn cmd_bitsweep(args: &BitsweepCmd) -> Result<()> {
    let (report, averages) = run_bitsweep(args)?;
    let path = out_path(&args.out, "bitsweep_report.txt");
    let mut file = ReportFile::new("bitsweep");
    file.meta("eval_prompts", args.eval.eval_prompts)
        .meta("eval_seed", args.eval.eval_seed)
        .meta("calib_seed", args.calib.calib_seed)
        .fidelity(&report);
    for avg in &averages {
        file.record(
            "avg",
            &[
                avg.scheme.clone(),
                format!("{:?}", avg.mse),
                format!("{:?}", avg.cosine),
                format!("{:?}", avg.psnr_db),
            ],
        );
    }
    write_atomic(&path, file.finish().as_bytes())?;
    print_fidelity(&report, &averages);
    println!("report: {}", path.display());
    Ok(())
}

/// Bit-width robustness matrix: scheme rows x W/A pairs, plus per-scheme
/// arithmetic means.
pub fn run_bitsweep(args: &BitsweepCmd) -> Result<(FidelityReport, Vec<SchemeAverage>)> {
    let model_cfg = args.model.to_config()?;
    let schedule = args.calib.schedule()?;
    let model =
        build_model(&model_cfg).map_err(|e| CliError::Usage(format!("model flags: {e}")))?;
    let set = args.calib.calibration_set(&model_cfg)?;
    let ctx = EvalContext::new(&model, schedule.clone(), &args.eval)?;

    let pairs: Vec<(u8, u8)> = args
        .pairs
        .iter()
        .map(|p| parse_bit_pair(p, "--pairs"))
        .collect::<Result<_>>()?;
    if pairs.is_empty() {
        return Err(CliError::Usage(
            "--pairs: at least one W/A pair required".into(),
        ));
    }

    let mut report = FidelityReport::default();
    let mut averages = Vec::new();
    for &scheme in &args.schemes {
        let mut scheme_rows = Vec::new();
        for &(w, a) in &pairs {
            let row = match scheme {
                SchemeArg::Dynamic => ctx.run_dynamic(&model, w, a)?,
                _ => {
                    let cfg = build_quant_config(
                        scheme,
                        args.tr,
                        w,
                        a,
                        args.alpha,
                        QuantConfig::DEFAULT_MOMENTUM,
                        schedule.steps(),
                    )?;
                    let table = run_calibration(&model, &schedule, &set, &cfg)
                        .map_err(CliError::Calibration)?;
                    ctx.run_static(&model, &table)?
                }
            };
            scheme_rows.push(row);
        }
        let n = scheme_rows.len() as f64;
        averages.push(SchemeAverage {
            scheme: scheme_rows[0].scheme.clone(),
            mse: scheme_rows.iter().map(|r| r.mse).sum::<f64>() / n,
            cosine: scheme_rows.iter().map(|r| r.cosine).sum::<f64>() / n,
            psnr_db: scheme_rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        });
        report.rows.extend(scheme_rows);
    }
    Ok((report, averages))
}

#[derive(Debug, Args)]
pub struct TrsweepCmd {
    /// Time-range counts to sweep. 1 runs the aggregated scheme.
    #[arg(long = "tr-list", value_delimiter = ',', default_values_t = [1usize, 2, 4, 10, 20])]
    pub tr_list: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub w_bits: u8,
    #[arg(long, default_value_t = 8)]
    pub a_bits: u8,
    /// Smoothing strength override (defaults per scheme).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for the per-R table files (default: output directory).
    #[arg(long)]
    pub table_dir: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub calib: CalibArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
}

/// One granularity row: fidelity metrics plus the table-file size that
/// finer time ranges cost.
#[derive(Debug, Clone)]
pub struct TrRow {
    pub ranges: usize,
    pub metrics: RunMetrics,
    pub file_size: u64,
    pub table_path: PathBuf,
}

pub fn cmd_trsweep(args: &TrsweepCmd) -> Result<()> {
    let rows = run_trsweep(args)?;
    let path = out_path(&args.out, "trsweep_report.txt");
    let mut file = ReportFile::new("trsweep");
    file.meta("eval_prompts", args.eval.eval_prompts)
        .meta("eval_seed", args.eval.eval_seed)
        .meta("w_bits", args.w_bits)
        .meta("a_bits", args.a_bits);
    file.record(
        "columns",
        &["scheme", "ranges", "mse", "cosine", "psnr_db", "file_size"].map(String::from),
    );
    for row in &rows {
        file.record(
            "row",
            &[
                row.metrics.scheme.clone(),
                row.ranges.to_string(),
                format!("{:?}", row.metrics.mse),
                format!("{:?}", row.metrics.cosine),
                format!("{:?}", row.metrics.psnr_db),
                row.file_size.to_string(),
            ],
        );
    }
    write_atomic(&path, file.finish().as_bytes())?;

    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.metrics.scheme.clone(),
                r.ranges.to_string(),
                disp(r.metrics.mse),
                disp(r.metrics.cosine),
                disp(r.metrics.psnr_db),
                r.file_size.to_string(),
            ]
        })
        .collect();
    print!(
        "{}",
        render_table(
            &["scheme", "R", "mse", "cosine", "psnr_db", "bytes"],
            &table_rows
        )
    );
    println!("report: {}", path.display());
    Ok(())
}

pub fn run_trsweep(args: &TrsweepCmd) -> Result<Vec<TrRow>> {
    if args.tr_list.is_empty() {
        return Err(CliError::Usage(
            "--tr-list: at least one range count required".into(),
        ));
    }
    let model_cfg = args.model.to_config()?;
    let schedule = args.calib.schedule()?;
    let model =
        build_model(&model_cfg).map_err(|e| CliError::Usage(format!("model flags: {e}")))?;
    let set = args.calib.calibration_set(&model_cfg)?;
    let ctx = EvalContext::new(&model, schedule.clone(), &args.eval)?;

    let mut rows = Vec::new();
    for &r in &args.tr_list {
        let scheme = if r == 1 {
            SchemeArg::Asq
        } else {
            SchemeArg::TsqTsw
        };
        let cfg = build_quant_config(
            scheme,
            Some(r),
            args.w_bits,
            args.a_bits,
            args.alpha,
            QuantConfig::DEFAULT_MOMENTUM,
            schedule.steps(),
        )?;
        let table =
            run_calibration(&model, &schedule, &set, &cfg).map_err(CliError::Calibration)?;
        let name = format!("trsweep_w{}a{}_{}tr.sqtb", args.w_bits, args.a_bits, r);
        let table_path = match &args.table_dir {
            Some(dir) => dir.join(&name),
            None => out_path(&None, &name),
        };
        let file_size = save_table(&table, &model_cfg, &table_path)?;
        let metrics = ctx.run_static(&model, &table)?;
        rows.push(TrRow {
            ranges: r,
            metrics,
            file_size,
            table_path,
        });
    }
    Ok(rows)
}

#[derive(Debug, Args)]
pub struct AlphaSweepCmd {
    /// Scheme whose smoothing strength is searched (asq or tsq-tsw).
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub tr: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub w_bits: u8,
    #[arg(long, default_value_t = 8)]
    pub a_bits: u8,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub calib: CalibArgs,
}

pub fn cmd_alpha_sweep(args: &AlphaSweepCmd) -> Result<()> {
    let report = run_alpha_sweep(args)?;
    let path = out_path(&args.out, "alpha_sweep_report.txt");
    let mut file = ReportFile::new("alpha-sweep");
    file.meta("scheme", args.scheme.flag_name())
        .meta("w_bits", args.w_bits)
        .meta("a_bits", args.a_bits)
        .meta("selected_alpha", format!("{:?}", report.best_alpha));
    file.record("columns", &["alpha", "score"].map(String::from));
    for e in &report.entries {
        file.record("row", &[format!("{:?}", e.alpha), format!("{:?}", e.score)]);
    }
    write_atomic(&path, file.finish().as_bytes())?;

    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            let marker = if e.alpha == report.best_alpha {
                "*"
            } else {
                ""
            };
            vec![format!("{:.1}{marker}", e.alpha), disp(e.score)]
        })
        .collect();
    print!("{}", render_table(&["alpha", "score"], &rows));
    println!("selected alpha = {:.1}", report.best_alpha);
    println!("report: {}", path.display());
    Ok(())
}

/// Grid search over alpha scored by mean cosine similarity to the float
/// reference, generated over the calibration prompts.
pub fn run_alpha_sweep(args: &AlphaSweepCmd) -> Result<calib::AlphaSweepReport> {
    if !matches!(args.scheme, SchemeArg::Asq | SchemeArg::TsqTsw) {
        return Err(CliError::Usage(
            "--scheme: alpha search applies to the smoothing schemes (asq, tsq-tsw)".into(),
        ));
    }
    let model_cfg = args.model.to_config()?;
    let schedule = args.calib.schedule()?;
    let model =
        build_model(&model_cfg).map_err(|e| CliError::Usage(format!("model flags: {e}")))?;
    let set = args.calib.calibration_set(&model_cfg)?;
    let cfg = build_quant_config(
        args.scheme,
        args.tr,
        args.w_bits,
        args.a_bits,
        None,
        QuantConfig::DEFAULT_MOMENTUM,
        schedule.steps(),
    )?;

    let float = QuantizedExecutor::float_reference(&model);
    let reference: Vec<LatentVideo> = set
        .prompts()
        .iter()
        .map(|p| denoise(&model, &schedule, &p.cond, p.seed, &float))
        .collect::<sqdit_core::Result<_>>()?;
    let score = |outputs: &[LatentVideo]| -> f64 {
        outputs
            .iter()
            .zip(&reference)
            .map(|(o, r)| sqdit_core::tensor::cosine_similarity(&o.tensor, &r.tensor))
            .sum::<f64>()
            / reference.len() as f64
    };
    calib::alpha_sweep(&model, &schedule, &set, &cfg, &score).map_err(CliError::Calibration)
}
