//! Offline calibration: runs the float model over a prompt set, observes
//! every quantizable linear's input per denoising step, and freezes the
//! per-time-range quantization parameters into an immutable table.
//!
//! Statistics are collected per (layer, time range). Tensor-wise extrema
//! use plain running min/max; the smoothing abs-max statistics use a
//! momentum running average of per-pass channel maxima. When smoothing is
//! enabled the driver runs two passes: the first accumulates the abs-max
//! statistics that define the scales, the second observes the smoothed
//! activations that the frozen parameters must cover.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use crate::engine::{ExecutorKind, QuantizedExecutor};
use crate::error::{Error, Result};
use crate::model::{
    denoise, DiffusionSchedule, LatentVideo, LayerExecutor, LayerId, ToyModel, ToyModelConfig,
};
use crate::quant::{self, BitWidth, Granularity, QuantParams, QuantizedTensor};
use crate::smooth::{
    self, compute_scales, fold_weights, smooth_activation, update_running_absmax, ChannelAbsMax,
    SmoothScale,
};
use crate::tensor::Tensor2D;

/// Contiguous, disjoint step intervals covering `[0, total_steps)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeRangePartition {
    total_steps: usize,
    ranges: Vec<(usize, usize)>,
}

impl TimeRangePartition {
    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Half-open `[start, end)` bounds of range `r`.
    pub fn bounds(&self, r: usize) -> (usize, usize) {
        self.ranges[r]
    }

    /// Index of the range owning `step`.
    pub fn range_of(&self, step: usize) -> Result<usize> {
        if step >= self.total_steps {
            return Err(Error::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        Ok(self
            .ranges
            .iter()
            .position(|&(s, e)| step >= s && step < e)
            .expect("partition covers [0, total)"))
    }

    pub fn from_parts(total_steps: usize, ranges: Vec<(usize, usize)>) -> Result<Self> {
        let mut cursor = 0;
        for &(s, e) in &ranges {
            if s != cursor || e <= s {
                return Err(Error::InvalidPartition(format!(
                    "range [{s}, {e}) breaks coverage at {cursor}"
                )));
            }
            cursor = e;
        }
        if cursor != total_steps {
            return Err(Error::InvalidPartition(format!(
                "ranges cover [0, {cursor}), expected [0, {total_steps})"
            )));
        }
        Ok(Self {
            total_steps,
            ranges,
        })
    }
}

/// Splits `t` steps into `r` contiguous ranges with sizes differing by at
/// most one, larger ranges first.
pub fn partition_steps(t: usize, r: usize) -> Result<TimeRangePartition> {
    if r == 0 || r > t {
        return Err(Error::InvalidPartition(format!(
            "cannot split {t} steps into {r} ranges"
        )));
    }
    let base = t / r;
    let extra = t % r;
    let mut ranges = Vec::with_capacity(r);
    let mut start = 0;
    for i in 0..r {
        let size = base + usize::from(i < extra);
        ranges.push((start, start + size));
        start += size;
    }
    Ok(TimeRangePartition {
        total_steps: t,
        ranges,
    })
}

/// Smoothing variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// No smoothing: plain channel-wise / tensor-wise quantization.
    None,
    /// Aggregated: one scale column shared by all steps.
    Asq,
    /// Time-step-wise: one scale column per time range.
    Tsq,
}

/// Scheme selection and hyperparameters for one calibration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    pub w_bits: BitWidth,
    pub a_bits: BitWidth,
    pub smoothing: Smoothing,
    /// Time-range count R. 1 = aggregated, t = per-step.
    pub ranges: usize,
    pub alpha: f64,
    pub momentum: f64,
}

impl QuantConfig {
    pub const DEFAULT_MOMENTUM: f64 = 0.95;
    /// Default alpha for the aggregated scheme.
    pub const ASQ_ALPHA: f64 = 0.4;
    /// Default alpha for the time-step-wise scheme.
    pub const TSQ_ALPHA: f64 = 0.2;

    pub fn new(
        w_bits: BitWidth,
        a_bits: BitWidth,
        smoothing: Smoothing,
        ranges: usize,
        alpha: f64,
        momentum: f64,
    ) -> Result<Self> {
        if ranges == 0 {
            return Err(Error::InvalidConfig("range count must be >= 1".into()));
        }
        if smoothing == Smoothing::Asq && ranges != 1 {
            return Err(Error::InvalidConfig(format!(
                "aggregated smoothing forces a single range, got {ranges}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum {momentum} outside [0, 1)"
            )));
        }
        Ok(Self {
            w_bits,
            a_bits,
            smoothing,
            ranges,
            alpha,
            momentum,
        })
    }

    /// Channel-wise weights, tensor-wise activations, no smoothing.
    pub fn cw_tw(w_bits: BitWidth, a_bits: BitWidth) -> Self {
        Self::new(
            w_bits,
            a_bits,
            Smoothing::None,
            1,
            0.0,
            Self::DEFAULT_MOMENTUM,
        )
        .expect("static construction is valid")
    }

    /// Aggregated smooth quantization at its default alpha.
    pub fn asq(w_bits: BitWidth, a_bits: BitWidth) -> Self {
        Self::new(
            w_bits,
            a_bits,
            Smoothing::Asq,
            1,
            Self::ASQ_ALPHA,
            Self::DEFAULT_MOMENTUM,
        )
        .expect("static construction is valid")
    }

    /// Time-step-wise smooth quantization at its default alpha.
    pub fn tsq_tsw(w_bits: BitWidth, a_bits: BitWidth, ranges: usize) -> Result<Self> {
        Self::new(
            w_bits,
            a_bits,
            Smoothing::Tsq,
            ranges,
            Self::TSQ_ALPHA,
            Self::DEFAULT_MOMENTUM,
        )
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Human-readable scheme tag, following the usual method-row naming.
    pub fn scheme_tag(&self, total_steps: usize) -> String {
        match self.smoothing {
            Smoothing::None => {
                if self.ranges == 1 {
                    "CW+TW (*)".to_string()
                } else {
                    format!("*+TSW (={}TR)", self.ranges)
                }
            }
            Smoothing::Asq => "*+ASQ (=1TR)".to_string(),
            Smoothing::Tsq => {
                if self.ranges == total_steps {
                    format!("*+TSQ+TSW (={}TR)", self.ranges)
                } else {
                    format!("*+TSQ+{}TR", self.ranges)
                }
            }
        }
    }
}

/// Per-range accumulators of one layer.
#[derive(Debug, Clone)]
pub struct RangeStats {
    min: f64,
    max: f64,
    absmax: ChannelAbsMax,
    count: u64,
}

impl RangeStats {
    fn new(w_absmax: Vec<f64>) -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            absmax: ChannelAbsMax::new(w_absmax),
            count: 0,
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn absmax(&self) -> &ChannelAbsMax {
        &self.absmax
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Running statistics keyed by (layer, time range).
#[derive(Debug, Clone)]
pub struct CalibStats {
    partition: TimeRangePartition,
    momentum: f64,
    layers: BTreeMap<LayerId, Vec<RangeStats>>,
}

impl CalibStats {
    /// Fresh accumulators for the given layers; `w_absmax` carries each
    /// layer's per-input-channel weight magnitudes.
    pub fn new(
        layers: impl IntoIterator<Item = (LayerId, Vec<f64>)>,
        partition: TimeRangePartition,
        momentum: f64,
    ) -> Self {
        let n = partition.len();
        let layers = layers
            .into_iter()
            .map(|(id, w)| (id, (0..n).map(|_| RangeStats::new(w.clone())).collect()))
            .collect();
        Self {
            partition,
            momentum,
            layers,
        }
    }

    pub fn partition(&self) -> &TimeRangePartition {
        &self.partition
    }

    pub fn range_stats(&self, layer: &LayerId, range: usize) -> Option<&RangeStats> {
        self.layers.get(layer).and_then(|v| v.get(range))
    }

    /// Folds one activation tensor into the accumulator owning `step`.
    pub fn observe(&mut self, layer: &LayerId, step: usize, x: &Tensor2D) -> Result<()> {
        let range = self.partition.range_of(step)?;
        let momentum = self.momentum;
        let stats = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
        let rs = &mut stats[range];
        rs.min = rs.min.min(x.min());
        rs.max = rs.max.max(x.max());
        update_running_absmax(&mut rs.absmax, x, momentum)?;
        rs.count += 1;
        Ok(())
    }
}

/// One calibration prompt: a conditioning vector plus the latent seed the
/// denoise run will use.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibPrompt {
    pub id: u32,
    pub seed: u64,
    pub cond: Vec<f64>,
}

/// Ordered prompt set driving calibration or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    prompts: Vec<CalibPrompt>,
}

const CALIBSET_HEADER: &str = "sqdit-calibset/1";

impl CalibrationSet {
    pub fn new(prompts: Vec<CalibPrompt>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::EmptyCalibrationSet);
        }
        Ok(Self { prompts })
    }

    /// Seeded synthetic prompts; `n = 10` is the default fixture.
    pub fn synthetic(config: &ToyModelConfig, n: usize, seed: u64) -> Result<Self> {
        let data = crate::model::synth_dataset(config, n, seed)?;
        let prompts = data
            .into_iter()
            .enumerate()
            .map(|(i, (_, cond))| CalibPrompt {
                id: i as u32,
                seed: seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(i as u64 + 1)),
                cond,
            })
            .collect();
        Self::new(prompts)
    }

    pub fn prompts(&self) -> &[CalibPrompt] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Versioned text form, one record per prompt, full-precision values.
    pub fn to_text(&self) -> String {
        let mut out = String::from(CALIBSET_HEADER);
        out.push('\n');
        for p in &self.prompts {
            let cond: Vec<String> = p.cond.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&format!(
                "prompt id={} seed={} cond={}\n",
                p.id,
                p.seed,
                cond.join(",")
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == CALIBSET_HEADER => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "unsupported calibration set header {other:?}"
                )))
            }
        }
        let mut prompts = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "prompt" {
                return Err(Error::InvalidInput(format!(
                    "bad prompt record on line {}",
                    lineno + 2
                )));
            }
            let take = |prefix: &str, field: &str| -> Result<String> {
                field
                    .strip_prefix(prefix)
                    .map(str::to_string)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("expected {prefix}... on line {}", lineno + 2))
                    })
            };
            let id = take("id=", fields[1])?
                .parse::<u32>()
                .map_err(|e| Error::InvalidInput(format!("bad id: {e}")))?;
            let seed = take("seed=", fields[2])?
                .parse::<u64>()
                .map_err(|e| Error::InvalidInput(format!("bad seed: {e}")))?;
            let cond = take("cond=", fields[3])?
                .split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad cond value: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            prompts.push(CalibPrompt { id, seed, cond });
        }
        Self::new(prompts)
    }
}

/// Frozen per-layer quantization data of one calibrated layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTable {
    in_channels: usize,
    out_channels: usize,
    smooth: SmoothScale,
    act_params: Vec<QuantParams>,
    weight_params: Vec<QuantParams>,
    weights: Vec<QuantizedTensor>,
}

impl LayerTable {
    pub fn from_parts(
        in_channels: usize,
        out_channels: usize,
        smooth: SmoothScale,
        act_params: Vec<QuantParams>,
        weight_params: Vec<QuantParams>,
        weights: Vec<QuantizedTensor>,
    ) -> Result<Self> {
        let r = smooth.ranges();
        if act_params.len() != r || weight_params.len() != r || weights.len() != r {
            return Err(Error::PartitionMismatch(format!(
                "layer has {} scale columns but {}/{}/{} param sets",
                r,
                act_params.len(),
                weight_params.len(),
                weights.len()
            )));
        }
        if smooth.channels() != in_channels {
            return Err(Error::ShapeError(format!(
                "scales cover {} channels, layer has {in_channels}",
                smooth.channels()
            )));
        }
        for w in &weights {
            if w.rows() != out_channels || w.cols() != in_channels {
                return Err(Error::ShapeError(format!(
                    "folded weight is {}x{}, expected {out_channels}x{in_channels}",
                    w.rows(),
                    w.cols()
                )));
            }
        }
        Ok(Self {
            in_channels,
            out_channels,
            smooth,
            act_params,
            weight_params,
            weights,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn smooth(&self) -> &SmoothScale {
        &self.smooth
    }

    pub fn act_params(&self) -> &[QuantParams] {
        &self.act_params
    }

    pub fn weight_params(&self) -> &[QuantParams] {
        &self.weight_params
    }

    pub fn weights(&self) -> &[QuantizedTensor] {
        &self.weights
    }
}

/// The frozen calibration product: per-layer parameters for every time
/// range. Immutable once built; inference only reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStepTable {
    config: QuantConfig,
    model_fingerprint: u64,
    partition: TimeRangePartition,
    layers: BTreeMap<LayerId, LayerTable>,
}

impl TimeStepTable {
    pub fn from_parts(
        config: QuantConfig,
        model_fingerprint: u64,
        partition: TimeRangePartition,
        layers: BTreeMap<LayerId, LayerTable>,
    ) -> Result<Self> {
        if partition.len() != config.ranges {
            return Err(Error::PartitionMismatch(format!(
                "partition has {} ranges, config declares {}",
                partition.len(),
                config.ranges
            )));
        }
        for (id, layer) in &layers {
            if layer.smooth.ranges() != partition.len() {
                return Err(Error::PartitionMismatch(format!(
                    "layer {id} carries {} ranges, partition has {}",
                    layer.smooth.ranges(),
                    partition.len()
                )));
            }
        }
        Ok(Self {
            config,
            model_fingerprint,
            partition,
            layers,
        })
    }

    pub fn config(&self) -> &QuantConfig {
        &self.config
    }

    pub fn model_fingerprint(&self) -> u64 {
        self.model_fingerprint
    }

    pub fn partition(&self) -> &TimeRangePartition {
        &self.partition
    }

    pub fn layers(&self) -> &BTreeMap<LayerId, LayerTable> {
        &self.layers
    }

    pub fn layer(&self, id: &LayerId) -> Option<&LayerTable> {
        self.layers.get(id)
    }

    pub fn scheme_tag(&self) -> String {
        self.config.scheme_tag(self.partition.total_steps())
    }
}

impl fmt::Display for TimeStepTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} W{}A{} ({} layers, {} ranges over {} steps)",
            self.scheme_tag(),
            self.config.w_bits.bits(),
            self.config.a_bits.bits(),
            self.layers.len(),
            self.partition.len(),
            self.partition.total_steps()
        )
    }
}

/// Observer executor: records each linear input into the statistics and
/// then runs the float layer so the calibration trajectory stays exact.
struct Observing<'a> {
    model: &'a ToyModel,
    stats: Mutex<CalibStats>,
    /// Per-layer per-range reciprocal scales; present in the second pass,
    /// where the smoothed activation is what gets observed.
    recips: Option<BTreeMap<LayerId, Vec<Vec<f64>>>>,
}

impl LayerExecutor for Observing<'_> {
    fn execute_linear(&self, layer: &LayerId, step: usize, x: &Tensor2D) -> Result<Tensor2D> {
        let mut stats = self.stats.lock().expect("calibration driver is sequential");
        match &self.recips {
            None => stats.observe(layer, step, x)?,
            Some(recips) => {
                let range = stats.partition().range_of(step)?;
                let cols = recips
                    .get(layer)
                    .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
                let smoothed = smooth_activation(x, &cols[range])?;
                stats.observe(layer, step, &smoothed)?;
            }
        }
        drop(stats);
        let w = self
            .model
            .weight_of(layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
        x.matmul_wt(w)
    }
}

fn observe_all_prompts(
    model: &ToyModel,
    schedule: &DiffusionSchedule,
    set: &CalibrationSet,
    observer: &Observing<'_>,
) -> Result<()> {
    for prompt in set.prompts() {
        denoise(model, schedule, &prompt.cond, prompt.seed, observer)?;
    }
    Ok(())
}

/// Runs the full calibration pipeline and freezes the parameter table.
pub fn run_calibration(
    model: &ToyModel,
    schedule: &DiffusionSchedule,
    set: &CalibrationSet,
    config: &QuantConfig,
) -> Result<TimeStepTable> {
    if set.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    let partition = partition_steps(schedule.steps(), config.ranges)?;
    let layer_absmax: Vec<(LayerId, Vec<f64>)> = model
        .quantizable_layers()
        .into_iter()
        .map(|(id, w)| (id.clone(), smooth::weight_absmax(w)))
        .collect();

    // Pass 1: raw activations. Supplies the smoothing statistics, and the
    // final extrema when no smoothing is configured.
    let observer = Observing {
        model,
        stats: Mutex::new(CalibStats::new(
            layer_absmax.clone(),
            partition.clone(),
            config.momentum,
        )),
        recips: None,
    };
    observe_all_prompts(model, schedule, set, &observer)?;
    let raw_stats = observer.stats.into_inner().expect("observer lock is free");

    let mut scales: BTreeMap<LayerId, SmoothScale> = BTreeMap::new();
    for (id, w) in model.quantizable_layers() {
        let cols: Vec<Vec<f64>> = (0..partition.len())
            .map(|r| match config.smoothing {
                Smoothing::None => Ok(vec![1.0; w.cols()]),
                Smoothing::Asq | Smoothing::Tsq => {
                    let rs = raw_stats
                        .range_stats(id, r)
                        .ok_or_else(|| Error::UnknownLayer(id.to_string()))?;
                    compute_scales(rs.absmax(), config.alpha)
                }
            })
            .collect::<Result<_>>()?;
        scales.insert(id.clone(), SmoothScale::new(config.alpha, cols)?);
    }

    // Pass 2 (smoothing only): observe the smoothed activations, which are
    // what the frozen parameters must cover at inference.
    let act_stats = if config.smoothing == Smoothing::None {
        raw_stats
    } else {
        let recips: BTreeMap<LayerId, Vec<Vec<f64>>> = scales
            .iter()
            .map(|(id, s)| {
                let cols = (0..s.ranges())
                    .map(|r| s.column(r).iter().map(|v| 1.0 / v).collect())
                    .collect();
                (id.clone(), cols)
            })
            .collect();
        let observer = Observing {
            model,
            stats: Mutex::new(CalibStats::new(
                layer_absmax,
                partition.clone(),
                config.momentum,
            )),
            recips: Some(recips),
        };
        observe_all_prompts(model, schedule, set, &observer)?;
        observer.stats.into_inner().expect("observer lock is free")
    };

    let mut layers = BTreeMap::new();
    for (id, w) in model.quantizable_layers() {
        let smooth_scale = scales.remove(id).expect("scales cover every layer");
        let folded = fold_weights(w, &smooth_scale)?;
        let mut act_params = Vec::with_capacity(partition.len());
        let mut weight_params = Vec::with_capacity(partition.len());
        let mut weights = Vec::with_capacity(partition.len());
        for (r, folded_w) in folded.iter().enumerate() {
            let rs = act_stats
                .range_stats(id, r)
                .ok_or_else(|| Error::UnknownLayer(id.to_string()))?;
            if rs.count() == 0 {
                return Err(Error::InvalidInput(format!(
                    "range {r} of layer {id} received no observations"
                )));
            }
            let (delta, zero) = quant::params_from_minmax(rs.min(), rs.max(), config.a_bits)?;
            act_params.push(QuantParams::new(
                vec![delta],
                vec![zero],
                config.a_bits,
                Granularity::PerTensor,
            )?);
            let wp = quant::compute_params(folded_w, config.w_bits, Granularity::PerChannel)?;
            weights.push(quant::quantize(folded_w, &wp)?);
            weight_params.push(wp);
        }
        layers.insert(
            id.clone(),
            LayerTable::from_parts(
                w.cols(),
                w.rows(),
                smooth_scale,
                act_params,
                weight_params,
                weights,
            )?,
        );
    }

    TimeStepTable::from_parts(*config, model.config().fingerprint(), partition, layers)
}

/// One grid point of the alpha search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaScore {
    pub alpha: f64,
    pub score: f64,
}

/// Result of the alpha grid search: all ten scores plus the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweepReport {
    pub entries: Vec<AlphaScore>,
    pub best_alpha: f64,
    pub best_score: f64,
}

/// Grid-searches alpha over {0.1, ..., 1.0}: calibrates at each value,
/// generates with the static fake-quant executor over the prompt set, and
/// scores the outputs. Ties break toward the smaller alpha.
pub fn alpha_sweep(
    model: &ToyModel,
    schedule: &DiffusionSchedule,
    set: &CalibrationSet,
    config: &QuantConfig,
    score_fn: &dyn Fn(&[LatentVideo]) -> f64,
) -> Result<AlphaSweepReport> {
    let mut entries = Vec::with_capacity(10);
    let mut best: Option<AlphaScore> = None;
    for k in 1..=10u32 {
        let alpha = k as f64 / 10.0;
        let table = run_calibration(model, schedule, set, &config.with_alpha(alpha))?;
        let exec = QuantizedExecutor::bind(model, &table, ExecutorKind::StaticFakeQuant)?;
        let outputs: Vec<LatentVideo> = set
            .prompts()
            .iter()
            .map(|p| denoise(model, schedule, &p.cond, p.seed, &exec))
            .collect::<Result<_>>()?;
        let entry = AlphaScore {
            alpha,
            score: score_fn(&outputs),
        };
        if best.is_none_or(|b| entry.score > b.score) {
            best = Some(entry);
        }
        entries.push(entry);
    }
    let best = best.expect("grid is non-empty");
    Ok(AlphaSweepReport {
        entries,
        best_alpha: best.alpha,
        best_score: best.score,
    })
}
