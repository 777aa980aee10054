//! Fidelity measurement against the float reference: final-latent MSE,
//! cosine similarity and PSNR per run, plus per-layer per-step activation
//! quantization SNR collected by a probe wrapped around the executor.

use std::collections::BTreeMap;
use std::sync::Mutex;

use sqdit_core::calib::TimeStepTable;
use sqdit_core::engine::QuantizedExecutor;
use sqdit_core::model::{LatentVideo, LayerExecutor, LayerId};
use sqdit_core::quant::{self, BitWidth};
use sqdit_core::smooth::smooth_activation;
use sqdit_core::tensor::{cosine_similarity, mse, Tensor2D};
use sqdit_core::Result as CoreResult;

/// Caps the SNR/PSNR logarithms so an exact reconstruction stays finite.
const MIN_POWER: f64 = 1e-30;

/// Quantization SNR of one (layer, step) cell, in decibels.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrCell {
    pub layer: String,
    pub step: usize,
    pub snr_db: f64,
}

/// Metrics of one scheme run over the shared evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub scheme: String,
    pub w_bits: u8,
    pub a_bits: u8,
    pub mse: f64,
    pub cosine: f64,
    pub psnr_db: f64,
    pub snr: Vec<SnrCell>,
}

/// Report body shared by the compare/bitsweep/trsweep commands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FidelityReport {
    pub rows: Vec<RunMetrics>,
}

/// Aggregates final latents of one run against the float reference.
pub fn run_fidelity(outputs: &[LatentVideo], reference: &[LatentVideo]) -> (f64, f64, f64) {
    assert_eq!(outputs.len(), reference.len());
    let mut total_mse = 0.0;
    let mut total_cos = 0.0;
    let mut peak: f64 = 0.0;
    for (o, r) in outputs.iter().zip(reference) {
        total_mse += mse(&o.tensor, &r.tensor);
        total_cos += cosine_similarity(&o.tensor, &r.tensor);
        peak = peak.max(r.tensor.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let n = outputs.len() as f64;
    let avg_mse = total_mse / n;
    let avg_cos = total_cos / n;
    let psnr = 10.0 * ((peak * peak).max(MIN_POWER) / avg_mse.max(MIN_POWER)).log10();
    (avg_mse, avg_cos, psnr)
}

/// How the probe reconstructs the activation a layer would quantize.
enum ProbeMode<'a> {
    Static(&'a TimeStepTable),
    Dynamic(BitWidth),
}

/// Executor wrapper measuring the round-trip SNR of every activation the
/// quantizer sees. Pure reporting: delegates the actual computation to the
/// wrapped executor and never feeds anything back into it.
pub struct SnrProbe<'a> {
    inner: &'a QuantizedExecutor,
    mode: ProbeMode<'a>,
    cells: Mutex<BTreeMap<(LayerId, usize), (f64, f64)>>,
}

impl<'a> SnrProbe<'a> {
    pub fn for_table(inner: &'a QuantizedExecutor, table: &'a TimeStepTable) -> Self {
        Self {
            inner,
            mode: ProbeMode::Static(table),
            cells: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn for_dynamic(inner: &'a QuantizedExecutor, a_bits: BitWidth) -> Self {
        Self {
            inner,
            mode: ProbeMode::Dynamic(a_bits),
            cells: Mutex::new(BTreeMap::new()),
        }
    }

    /// Accumulated cells in (layer, step) order.
    pub fn cells(&self) -> Vec<SnrCell> {
        self.cells
            .lock()
            .unwrap()
            .iter()
            .map(|((layer, step), (sig, err))| SnrCell {
                layer: layer.to_string(),
                step: *step,
                snr_db: 10.0 * (sig.max(MIN_POWER) / err.max(MIN_POWER)).log10(),
            })
            .collect()
    }

    fn observe(&self, layer: &LayerId, step: usize, x: &Tensor2D) -> CoreResult<()> {
        let round_trip = match &self.mode {
            ProbeMode::Static(table) => {
                let entry = match table.layer(layer) {
                    Some(e) => e,
                    None => return Ok(()),
                };
                let r = table.partition().range_of(step)?;
                let recip: Vec<f64> = entry.smooth().column(r).iter().map(|s| 1.0 / s).collect();
                let xh = smooth_activation(x, &recip)?;
                let rt = quant::dequantize(&quant::quantize(&xh, &entry.act_params()[r])?);
                (xh, rt)
            }
            ProbeMode::Dynamic(bits) => {
                let (q, _) = quant::dynamic_token_quant(x, *bits)?;
                (x.clone(), quant::dequantize(&q))
            }
        };
        let (xh, rt) = round_trip;
        let sig: f64 = xh.data().iter().map(|v| v * v).sum();
        let err: f64 = xh
            .data()
            .iter()
            .zip(rt.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let mut cells = self.cells.lock().unwrap();
        let cell = cells.entry((layer.clone(), step)).or_insert((0.0, 0.0));
        cell.0 += sig;
        cell.1 += err;
        Ok(())
    }
}

impl LayerExecutor for SnrProbe<'_> {
    fn execute_linear(&self, layer: &LayerId, step: usize, x: &Tensor2D) -> CoreResult<Tensor2D> {
        self.observe(layer, step, x)?;
        self.inner.execute_linear(layer, step, x)
    }

    fn expected_steps(&self) -> Option<usize> {
        self.inner.expected_steps()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sqdit_core::calib::{run_calibration, CalibrationSet, QuantConfig};
    use sqdit_core::engine::ExecutorKind;
    use sqdit_core::model::{build_model, denoise, DiffusionSchedule, ToyModelConfig};

    #[test]
    fn identical_runs_score_perfectly() {
        let cfg = ToyModelConfig {
            n_blocks: 1,
            d_model: 8,
            n_heads: 2,
            frames: 2,
            spatial_tokens: 2,
            cond_dim: 4,
            seed: 1,
            fit: false,
        };
        let model = build_model(&cfg).unwrap();
        let schedule = DiffusionSchedule::new(3, 2.0).unwrap();
        let set = CalibrationSet::synthetic(&cfg, 2, 5).unwrap();
        let float = QuantizedExecutor::float_reference(&model);
        let outs: Vec<LatentVideo> = set
            .prompts()
            .iter()
            .map(|p| denoise(&model, &schedule, &p.cond, p.seed, &float).unwrap())
            .collect();
        let (m, c, p) = run_fidelity(&outs, &outs);
        assert_eq!(m, 0.0);
        assert_eq!(c, 1.0);
        assert!(p.is_finite());
    }

    #[test]
    fn probe_collects_full_grid_without_touching_audit() {
        let cfg = ToyModelConfig {
            n_blocks: 1,
            d_model: 8,
            n_heads: 2,
            frames: 2,
            spatial_tokens: 2,
            cond_dim: 4,
            seed: 1,
            fit: false,
        };
        let model = build_model(&cfg).unwrap();
        let schedule = DiffusionSchedule::new(3, 2.0).unwrap();
        let set = CalibrationSet::synthetic(&cfg, 2, 5).unwrap();
        let table = run_calibration(
            &model,
            &schedule,
            &set,
            &QuantConfig::asq(BitWidth::new(8).unwrap(), BitWidth::new(8).unwrap()),
        )
        .unwrap();
        let exec = QuantizedExecutor::bind(&model, &table, ExecutorKind::StaticFakeQuant).unwrap();
        let probe = SnrProbe::for_table(&exec, &table);
        denoise(&model, &schedule, &set.prompts()[0].cond, 9, &probe).unwrap();
        let cells = probe.cells();
        assert_eq!(cells.len(), model.layer_ids().len() * schedule.steps());
        assert!(cells.iter().all(|c| c.snr_db.is_finite()));
        // The probe measures, it does not compute executor-side statistics.
        assert_eq!(exec.audit_report().stat_events, 0);
    }
}
