//! Table-driven quantized execution.
//!
//! An executor is bound once: weights are already folded and quantized in
//! the table, reciprocal smoothing scales are precomputed here, and from
//! then on inference resolves parameters purely by `(layer, step)`. The
//! executor counts every linear call and every data-dependent statistic
//! computation; static kinds must report zero of the latter, which is the
//! checkable form of their deployability claim.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::calib::{TimeRangePartition, TimeStepTable};
use crate::error::{Error, Result};
use crate::model::{LayerExecutor, LayerId, ToyModel};
use crate::quant::{self, BitWidth, Granularity, QuantParams, QuantizedTensor};
use crate::smooth::smooth_activation;
use crate::tensor::Tensor2D;

/// Which linear-layer implementation a bound executor runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutorKind {
    /// Plain float matmul against the raw weights.
    FloatReference,
    /// Static table parameters, float-domain accumulation.
    StaticFakeQuant,
    /// Static table parameters, 64-bit integer accumulation.
    StaticInteger,
    /// Channel-wise static weights, per-token activation parameters
    /// computed at every call.
    DynamicBaseline,
}

impl fmt::Display for ExecutorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExecutorKind::FloatReference => "float-reference",
            ExecutorKind::StaticFakeQuant => "static-fake-quant",
            ExecutorKind::StaticInteger => "static-integer",
            ExecutorKind::DynamicBaseline => "dynamic-baseline",
        };
        f.write_str(s)
    }
}

/// Everything a static executor needs for one layer, resolved at bind
/// time: per-range activation params, pre-quantized folded weights and
/// reciprocal smoothing scales.
#[derive(Debug, Clone)]
struct BoundLayer {
    act_params: Vec<QuantParams>,
    weights: Vec<QuantizedTensor>,
    recip_scales: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum LayerBinding {
    Float(Tensor2D),
    Static(BoundLayer),
    Dynamic(QuantizedTensor),
}

/// Immutable bound executor; safe to share across concurrent denoise
/// calls. The audit counters are the only mutable state.
#[derive(Debug)]
pub struct QuantizedExecutor {
    kind: ExecutorKind,
    partition: Option<TimeRangePartition>,
    layers: BTreeMap<LayerId, LayerBinding>,
    a_bits: Option<BitWidth>,
    linear_calls: AtomicU64,
    stat_events: AtomicU64,
}

impl QuantizedExecutor {
    /// Binds a frozen table to the model for one of the static kinds.
    /// Read-only on the table; all per-range data is resolved eagerly.
    pub fn bind(model: &ToyModel, table: &TimeStepTable, kind: ExecutorKind) -> Result<Self> {
        if !matches!(
            kind,
            ExecutorKind::StaticFakeQuant | ExecutorKind::StaticInteger
        ) {
            return Err(Error::InvalidInput(format!(
                "kind {kind} does not take a table"
            )));
        }
        if table.model_fingerprint() != model.config().fingerprint() {
            return Err(Error::InvalidConfig(
                "table was calibrated for a different model configuration".into(),
            ));
        }
        let mut layers = BTreeMap::new();
        for (id, w) in model.quantizable_layers() {
            let entry = table
                .layer(id)
                .ok_or_else(|| Error::MissingLayer(id.to_string()))?;
            if entry.in_channels() != w.cols() || entry.out_channels() != w.rows() {
                return Err(Error::ShapeError(format!(
                    "layer {id}: table is {}x{}, model is {}x{}",
                    entry.out_channels(),
                    entry.in_channels(),
                    w.rows(),
                    w.cols()
                )));
            }
            let recip_scales = (0..entry.smooth().ranges())
                .map(|r| entry.smooth().column(r).iter().map(|s| 1.0 / s).collect())
                .collect();
            layers.insert(
                id.clone(),
                LayerBinding::Static(BoundLayer {
                    act_params: entry.act_params().to_vec(),
                    weights: entry.weights().to_vec(),
                    recip_scales,
                }),
            );
        }
        Ok(Self {
            kind,
            partition: Some(table.partition().clone()),
            layers,
            a_bits: Some(table.config().a_bits),
            linear_calls: AtomicU64::new(0),
            stat_events: AtomicU64::new(0),
        })
    }

    /// Plain float execution, the fidelity reference.
    pub fn float_reference(model: &ToyModel) -> Self {
        let layers = model
            .quantizable_layers()
            .into_iter()
            .map(|(id, w)| (id.clone(), LayerBinding::Float(w.clone())))
            .collect();
        Self {
            kind: ExecutorKind::FloatReference,
            partition: None,
            layers,
            a_bits: None,
            linear_calls: AtomicU64::new(0),
            stat_events: AtomicU64::new(0),
        }
    }

    /// The dynamic comparison baseline: weights quantized channel-wise
    /// once here, activations per token at every call.
    pub fn dynamic_baseline(model: &ToyModel, w_bits: BitWidth, a_bits: BitWidth) -> Result<Self> {
        let mut layers = BTreeMap::new();
        for (id, w) in model.quantizable_layers() {
            let wp = quant::compute_params(w, w_bits, Granularity::PerChannel)?;
            layers.insert(id.clone(), LayerBinding::Dynamic(quant::quantize(w, &wp)?));
        }
        Ok(Self {
            kind: ExecutorKind::DynamicBaseline,
            partition: None,
            layers,
            a_bits: Some(a_bits),
            linear_calls: AtomicU64::new(0),
            stat_events: AtomicU64::new(0),
        })
    }

    pub fn kind(&self) -> ExecutorKind {
        self.kind
    }

    /// Runtime-statistics audit over everything executed so far.
    pub fn audit_report(&self) -> AuditReport {
        AuditReport {
            kind: self.kind,
            linear_calls: self.linear_calls.load(Ordering::Relaxed),
            stat_events: self.stat_events.load(Ordering::Relaxed),
        }
    }
}

impl LayerExecutor for QuantizedExecutor {
    fn execute_linear(&self, layer: &LayerId, step: usize, x: &Tensor2D) -> Result<Tensor2D> {
        self.linear_calls.fetch_add(1, Ordering::Relaxed);
        let binding = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
        match binding {
            LayerBinding::Float(w) => x.matmul_wt(w),
            LayerBinding::Static(b) => {
                let partition = self
                    .partition
                    .as_ref()
                    .expect("static executors carry a partition");
                let r = partition.range_of(step)?;
                let xh = smooth_activation(x, &b.recip_scales[r])?;
                let xq = quant::quantize(&xh, &b.act_params[r])?;
                match self.kind {
                    ExecutorKind::StaticFakeQuant => quant::fake_linear_levels(&xq, &b.weights[r]),
                    ExecutorKind::StaticInteger => quant::integer_linear(&xq, &b.weights[r]),
                    _ => unreachable!("bind only produces static kinds"),
                }
            }
            LayerBinding::Dynamic(wq) => {
                self.stat_events.fetch_add(1, Ordering::Relaxed);
                let bits = self
                    .a_bits
                    .expect("dynamic executors carry activation bits");
                let (xq, _) = quant::dynamic_token_quant(x, bits)?;
                quant::fake_linear_levels(&xq, wq)
            }
        }
    }

    fn expected_steps(&self) -> Option<usize> {
        self.partition.as_ref().map(|p| p.total_steps())
    }
}

/// Counts from one or more runs on an executor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditReport {
    pub kind: ExecutorKind,
    /// Linear layer invocations.
    pub linear_calls: u64,
    /// Data-dependent quantization-parameter computations at inference.
    pub stat_events: u64,
}

impl AuditReport {
    /// True when inference computed no statistics, the property that makes
    /// a scheme deployable on hardware without runtime observers.
    pub fn is_static_clean(&self) -> bool {
        self.stat_events == 0
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} linear calls, {} runtime statistic computations",
            self.kind, self.linear_calls, self.stat_events
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{run_calibration, CalibrationSet, QuantConfig};
    use crate::model::{build_model, denoise, DiffusionSchedule, ToyModelConfig};
    use crate::quant::{compute_params, dequantize, quantize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bw(b: u8) -> BitWidth {
        BitWidth::new(b).unwrap()
    }

    fn setup(steps: usize) -> (ToyModel, DiffusionSchedule, CalibrationSet) {
        let cfg = ToyModelConfig {
            n_blocks: 1,
            d_model: 16,
            n_heads: 2,
            frames: 2,
            spatial_tokens: 4,
            cond_dim: 8,
            seed: 9,
            fit: false,
        };
        let model = build_model(&cfg).unwrap();
        let schedule = DiffusionSchedule::new(steps, 3.0).unwrap();
        let set = CalibrationSet::synthetic(&cfg, 2, 17).unwrap();
        (model, schedule, set)
    }

    #[test]
    fn bind_is_read_only_on_the_table() {
        let (model, schedule, set) = setup(6);
        let table =
            run_calibration(&model, &schedule, &set, &QuantConfig::asq(bw(8), bw(8))).unwrap();
        let before = table.clone();
        let _exec = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        assert_eq!(table, before);
    }

    #[test]
    fn bind_reports_missing_layer_by_name() {
        let (model, schedule, set) = setup(6);
        let table =
            run_calibration(&model, &schedule, &set, &QuantConfig::asq(bw(8), bw(8))).unwrap();
        let victim = model.layer_ids()[3].clone();
        let mut layers = table.layers().clone();
        layers.remove(&victim);
        let partial = TimeStepTable::from_parts(
            *table.config(),
            table.model_fingerprint(),
            table.partition().clone(),
            layers,
        )
        .unwrap();
        match QuantizedExecutor::bind(&model, &partial, ExecutorKind::StaticFakeQuant) {
            Err(Error::MissingLayer(id)) => assert_eq!(id, victim.to_string()),
            other => panic!("expected MissingLayer, got {other:?}"),
        }
    }

    #[test]
    fn bind_rejects_foreign_model() {
        let (model, schedule, set) = setup(6);
        let table =
            run_calibration(&model, &schedule, &set, &QuantConfig::asq(bw(8), bw(8))).unwrap();
        let other_cfg = ToyModelConfig {
            seed: 1234,
            ..*model.config()
        };
        let other = build_model(&other_cfg).unwrap();
        assert!(matches!(
            QuantizedExecutor::bind(&other, &table, ExecutorKind::StaticFakeQuant),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn aggregated_table_resolves_every_step_to_range_zero() {
        let (model, schedule, set) = setup(6);
        let table =
            run_calibration(&model, &schedule, &set, &QuantConfig::asq(bw(8), bw(8))).unwrap();
        let exec = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        let id = &model.layer_ids()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor2D::new(3, 16, (0..48).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
        let first = exec.execute_linear(id, 0, &x).unwrap();
        for step in 1..schedule.steps() {
            let out = exec.execute_linear(id, step, &x).unwrap();
            assert_eq!(out.data(), first.data());
        }
    }

    #[test]
    fn two_range_table_routes_late_steps_to_second_range() {
        let (model, schedule, set) = setup(20);
        let cfg = QuantConfig::tsq_tsw(bw(8), bw(8), 2).unwrap();
        let table = run_calibration(&model, &schedule, &set, &cfg).unwrap();
        assert_eq!(table.partition().range_of(19).unwrap(), 1);
        assert_eq!(table.partition().range_of(9).unwrap(), 0);
        let exec = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        let id = &model.layer_ids()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor2D::new(2, 16, (0..32).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
        // Steps within one range share parameters bit for bit.
        let a = exec.execute_linear(id, 10, &x).unwrap();
        let b = exec.execute_linear(id, 19, &x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn static_integer_matches_static_fake_quant() {
        let (model, schedule, set) = setup(6);
        let cfg = QuantConfig::tsq_tsw(bw(8), bw(8), 3).unwrap();
        let table = run_calibration(&model, &schedule, &set, &cfg).unwrap();
        let fake = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        let int = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticInteger).unwrap();
        let a = denoise(&model, &schedule, &set.prompts()[0].cond, 71, &fake).unwrap();
        let b = denoise(&model, &schedule, &set.prompts()[0].cond, 71, &int).unwrap();
        assert_eq!(a.tensor.data(), b.tensor.data());
    }

    #[test]
    fn sixteen_bit_layer_close_to_float() {
        let (model, schedule, set) = setup(6);
        let table =
            run_calibration(&model, &schedule, &set, &QuantConfig::asq(bw(16), bw(16))).unwrap();
        let exec = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        let float = QuantizedExecutor::float_reference(&model);
        let id = &model.layer_ids()[2];
        // Probe with an activation inside the calibrated range.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor2D::new(
            4,
            16,
            (0..64).map(|_| (rng.random::<f64>() - 0.5) * 0.5).collect(),
        )
        .unwrap();
        let q = exec.execute_linear(id, 0, &x).unwrap();
        let r = float.execute_linear(id, 0, &x).unwrap();
        let num: f64 = q
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(num / r.frob_norm().max(1e-12) <= 1e-3);
    }

    #[test]
    fn audit_counts_match_call_structure() {
        let (model, schedule, set) = setup(6);
        let table =
            run_calibration(&model, &schedule, &set, &QuantConfig::asq(bw(8), bw(8))).unwrap();
        let calls = (model.layer_ids().len() * schedule.steps() * 2) as u64;

        let fake = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        denoise(&model, &schedule, &set.prompts()[0].cond, 3, &fake).unwrap();
        let report = fake.audit_report();
        assert_eq!(report.linear_calls, calls);
        assert_eq!(report.stat_events, 0);
        assert!(report.is_static_clean());

        let dynamic = QuantizedExecutor::dynamic_baseline(&model, bw(8), bw(8)).unwrap();
        denoise(&model, &schedule, &set.prompts()[0].cond, 3, &dynamic).unwrap();
        let report = dynamic.audit_report();
        assert_eq!(report.linear_calls, calls);
        assert_eq!(report.stat_events, calls);

        let float = QuantizedExecutor::float_reference(&model);
        denoise(&model, &schedule, &set.prompts()[0].cond, 3, &float).unwrap();
        assert_eq!(float.audit_report().stat_events, 0);
    }

    #[test]
    fn step_count_mismatch_detected_by_denoise() {
        let (model, schedule, set) = setup(6);
        let table =
            run_calibration(&model, &schedule, &set, &QuantConfig::asq(bw(8), bw(8))).unwrap();
        let exec = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        let longer = DiffusionSchedule::new(8, 3.0).unwrap();
        assert!(matches!(
            denoise(&model, &longer, &set.prompts()[0].cond, 3, &exec),
            Err(Error::StepCountMismatch(_))
        ));
    }

    #[test]
    fn dynamic_fits_single_tensors_at_least_as_well_as_foreign_static() {
        // Static params calibrated on different (wider) data cannot fit a
        // heterogeneous tensor better than per-token dynamic params.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worse = 0;
        for _ in 0..20 {
            let rows = 6;
            let cols = 8;
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let scale = 0.2 + r as f64;
                for _ in 0..cols {
                    data.push((rng.random::<f64>() - 0.5) * scale);
                }
            }
            let x = Tensor2D::new(rows, cols, data).unwrap();
            let calib: Vec<f64> = x.data().iter().map(|v| v * 1.3).collect();
            let calib_t = Tensor2D::new(rows, cols, calib).unwrap();
            let static_params = compute_params(&calib_t, bw(8), Granularity::PerTensor).unwrap();
            let static_rt = dequantize(&quantize(&x, &static_params).unwrap());
            let (dq, _) = quant::dynamic_token_quant(&x, bw(8)).unwrap();
            let dyn_rt = dequantize(&dq);
            let mse = |a: &Tensor2D, b: &Tensor2D| {
                a.data()
                    .iter()
                    .zip(b.data())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    / a.data().len() as f64
            };
            if mse(&x, &dyn_rt) > mse(&x, &static_rt) {
                worse += 1;
            }
        }
        assert_eq!(worse, 0);

        // Equality case: calibration data = inference data, single token.
        let x = Tensor2D::new(1, 8, (0..8).map(|i| i as f64 / 3.0 - 1.0).collect()).unwrap();
        let sp = compute_params(&x, bw(8), Granularity::PerTensor).unwrap();
        let srt = dequantize(&quantize(&x, &sp).unwrap());
        let (dq, _) = quant::dynamic_token_quant(&x, bw(8)).unwrap();
        assert_eq!(srt.data(), dequantize(&dq).data());
    }
}
