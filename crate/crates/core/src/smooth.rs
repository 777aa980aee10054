//! Smooth quantization: per-input-channel scales that divide activations
//! and multiply weights, preserving the product `X . W` while moving
//! outlier channels into the weight where channel-wise quantization can
//! absorb them.
//!
//! `s_i = max(|X_i|)^alpha / max(|W_i|)^(1-alpha)`. The aggregated variant
//! keeps a single scale column maintained as a momentum running average
//! across all denoising steps; the time-step-wise variant keeps one column
//! per time range.

use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

/// Per-input-channel smoothing scales, one column per time range
/// (a single column in the aggregated case).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothScale {
    alpha: f64,
    /// `columns[r][i]` is the scale of input channel `i` in time range `r`.
    columns: Vec<Vec<f64>>,
}

impl SmoothScale {
    pub fn new(alpha: f64, columns: Vec<Vec<f64>>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
        }
        if columns.is_empty() {
            return Err(Error::InvalidInput(
                "scale matrix needs at least one range column".into(),
            ));
        }
        let channels = columns[0].len();
        for col in &columns {
            if col.len() != channels {
                return Err(Error::ShapeError(
                    "scale columns have unequal channel counts".into(),
                ));
            }
            if let Some((i, &v)) = col
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
            {
                return Err(Error::NonPositiveScale {
                    channel: i,
                    value: v,
                });
            }
        }
        Ok(Self { alpha, columns })
    }

    /// Identity scaling (all ones) for layers calibrated without smoothing.
    pub fn identity(channels: usize, ranges: usize) -> Self {
        Self {
            alpha: 0.0,
            columns: vec![vec![1.0; channels]; ranges],
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ranges(&self) -> usize {
        self.columns.len()
    }

    pub fn channels(&self) -> usize {
        self.columns[0].len()
    }

    /// Scale column of time range `r`.
    pub fn column(&self, r: usize) -> &[f64] {
        &self.columns[r]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// Running per-channel max-abs statistics for one layer: the activation
/// side aggregates across calibration batches, the weight side is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAbsMax {
    x_absmax: Vec<f64>,
    w_absmax: Vec<f64>,
    observations: u64,
}

impl ChannelAbsMax {
    /// Fresh accumulator for a layer with the given weight statistics.
    pub fn new(w_absmax: Vec<f64>) -> Self {
        let channels = w_absmax.len();
        Self {
            x_absmax: vec![0.0; channels],
            w_absmax,
            observations: 0,
        }
    }

    pub fn x_absmax(&self) -> &[f64] {
        &self.x_absmax
    }

    pub fn w_absmax(&self) -> &[f64] {
        &self.w_absmax
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }
}

/// Per input channel, the largest weight magnitude over all output rows.
pub fn weight_absmax(w: &Tensor2D) -> Vec<f64> {
    let mut out = vec![0.0f64; w.cols()];
    for r in 0..w.rows() {
        for (i, &v) in w.row(r).iter().enumerate() {
            out[i] = out[i].max(v.abs());
        }
    }
    out
}

/// Folds one batch of activations into the running max-abs state.
///
/// The batch statistic is the per-channel max-abs over all rows of the
/// batch; the state is then updated as
/// `momentum * old + (1 - momentum) * batch`, except that the first
/// observation initializes the state to the batch statistic directly.
pub fn update_running_absmax(
    state: &mut ChannelAbsMax,
    batch_x: &Tensor2D,
    momentum: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidInput(format!(
            "momentum {momentum} outside [0, 1)"
        )));
    }
    if batch_x.cols() != state.x_absmax.len() {
        return Err(Error::ShapeError(format!(
            "batch has {} channels, state has {}",
            batch_x.cols(),
            state.x_absmax.len()
        )));
    }
    let mut batch = vec![0.0f64; batch_x.cols()];
    for r in 0..batch_x.rows() {
        for (i, &v) in batch_x.row(r).iter().enumerate() {
            batch[i] = batch[i].max(v.abs());
        }
    }
    if state.observations == 0 {
        state.x_absmax = batch;
    } else {
        for (s, b) in state.x_absmax.iter_mut().zip(&batch) {
            *s = momentum * *s + (1.0 - momentum) * b;
        }
    }
    state.observations += 1;
    Ok(())
}

/// One scale per channel: `max(|X_i|)^alpha / max(|W_i|)^(1-alpha)`.
/// Channels with a zero statistic on either side get the neutral scale 1.
pub fn compute_scales(stats: &ChannelAbsMax, alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(stats
        .x_absmax
        .iter()
        .zip(&stats.w_absmax)
        .map(|(&x, &w)| {
            if x == 0.0 || w == 0.0 {
                1.0
            } else {
                x.powf(alpha) / w.powf(1.0 - alpha)
            }
        })
        .collect())
}

/// Divides activation columns by `s` and multiplies matching weight input
/// channels, so `X_hat . W_hat = X . W` in exact arithmetic.
pub fn apply_smoothing(x: &Tensor2D, w: &Tensor2D, s: &[f64]) -> Result<(Tensor2D, Tensor2D)> {
    if s.len() != x.cols() || s.len() != w.cols() {
        return Err(Error::ShapeError(format!(
            "scale length {} does not match x cols {} / w cols {}",
            s.len(),
            x.cols(),
            w.cols()
        )));
    }
    if let Some((i, &v)) = s
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonPositiveScale {
            channel: i,
            value: v,
        });
    }
    let mut xh = x.clone();
    for r in 0..xh.rows() {
        for (v, si) in xh.row_mut(r).iter_mut().zip(s) {
            *v /= si;
        }
    }
    let wh = scale_weight_columns(w, s);
    Ok((xh, wh))
}

/// `diag(s) . W` with `w` stored as `C_O x C_I`: column `i` scaled by `s_i`.
pub fn scale_weight_columns(w: &Tensor2D, s: &[f64]) -> Tensor2D {
    let mut wh = w.clone();
    for r in 0..wh.rows() {
        for (v, si) in wh.row_mut(r).iter_mut().zip(s) {
            *v *= si;
        }
    }
    wh
}

/// Divides activation columns by the scales, phrased as a multiplication
/// by precomputed reciprocals. Calibration and inference share this exact
/// routine so the observed and executed values agree bit for bit.
pub fn smooth_activation(x: &Tensor2D, recip_s: &[f64]) -> Result<Tensor2D> {
    if recip_s.len() != x.cols() {
        return Err(Error::ShapeError(format!(
            "reciprocal scale length {} does not match x cols {}",
            recip_s.len(),
            x.cols()
        )));
    }
    let mut xh = x.clone();
    for r in 0..xh.rows() {
        for (v, ri) in xh.row_mut(r).iter_mut().zip(recip_s) {
            *v *= ri;
        }
    }
    Ok(xh)
}

/// One folded weight per time range: `W_hat_r = diag(s[:, r]) . W`.
pub fn fold_weights(w: &Tensor2D, s: &SmoothScale) -> Result<Vec<Tensor2D>> {
    if s.channels() != w.cols() {
        return Err(Error::ShapeError(format!(
            "scales cover {} channels, weight has {}",
            s.channels(),
            w.cols()
        )));
    }
    Ok((0..s.ranges())
        .map(|r| scale_weight_columns(w, s.column(r)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor2D {
        let data = (0..rows * cols)
            .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
            .collect();
        Tensor2D::new(rows, cols, data).unwrap()
    }

    #[test]
    fn weight_absmax_identity_and_hand_case() {
        let mut id = Tensor2D::zeros(3, 3);
        for i in 0..3 {
            id.set(i, i, 1.0);
        }
        assert_eq!(weight_absmax(&id), vec![1.0, 1.0, 1.0]);

        let w = Tensor2D::new(2, 2, vec![-2.0, 0.5, 1.0, -3.0]).unwrap();
        assert_eq!(weight_absmax(&w), vec![2.0, 3.0]);

        let zero = Tensor2D::zeros(2, 4);
        assert_eq!(weight_absmax(&zero), vec![0.0; 4]);
    }

    #[test]
    fn running_absmax_initializes_then_averages() {
        let mut state = ChannelAbsMax::new(vec![1.0]);
        let b1 = Tensor2D::new(2, 1, vec![-4.0, 1.0]).unwrap();
        update_running_absmax(&mut state, &b1, 0.95).unwrap();
        assert_eq!(state.x_absmax(), &[4.0]);

        let b2 = Tensor2D::new(1, 1, vec![2.0]).unwrap();
        update_running_absmax(&mut state, &b2, 0.95).unwrap();
        assert_relative_eq!(state.x_absmax()[0], 3.9, max_relative = 1e-12);
    }

    #[test]
    fn running_absmax_momentum_zero_tracks_latest() {
        let mut state = ChannelAbsMax::new(vec![1.0]);
        for v in [5.0, 3.0, 0.5] {
            let b = Tensor2D::new(1, 1, vec![v]).unwrap();
            update_running_absmax(&mut state, &b, 0.0).unwrap();
            assert_eq!(state.x_absmax(), &[v]);
        }
    }

    #[test]
    fn running_absmax_fixpoint_converges_geometrically() {
        let mut state = ChannelAbsMax::new(vec![1.0]);
        let init = Tensor2D::new(1, 1, vec![10.0]).unwrap();
        update_running_absmax(&mut state, &init, 0.95).unwrap();
        let batch = Tensor2D::new(1, 1, vec![2.0]).unwrap();
        let mut err = 8.0;
        for _ in 0..30 {
            update_running_absmax(&mut state, &batch, 0.95).unwrap();
            let new_err: f64 = state.x_absmax()[0] - 2.0;
            assert_relative_eq!(new_err, err * 0.95, max_relative = 1e-9);
            err = new_err;
        }
    }

    #[test]
    fn scales_hand_case_and_boundaries() {
        let mut stats = ChannelAbsMax::new(vec![0.25]);
        let b = Tensor2D::new(1, 1, vec![4.0]).unwrap();
        update_running_absmax(&mut stats, &b, 0.95).unwrap();
        // 4^0.5 / 0.25^0.5 = 2 / 0.5 = 4
        assert_relative_eq!(
            compute_scales(&stats, 0.5).unwrap()[0],
            4.0,
            max_relative = 1e-12
        );
        // alpha = 0 -> 1 / max|W|
        assert_relative_eq!(
            compute_scales(&stats, 0.0).unwrap()[0],
            4.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn scales_zero_statistic_guard() {
        let stats = ChannelAbsMax::new(vec![0.25, 0.0]);
        let s = compute_scales(&stats, 0.5).unwrap();
        // x stats never observed (0) and w stat 0 both fall back to 1
        assert_eq!(s, vec![1.0, 1.0]);
    }

    #[test]
    fn scales_always_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = random_tensor(&mut rng, 4, 6, 2.0);
            let x = random_tensor(&mut rng, 5, 6, 7.0);
            let mut stats = ChannelAbsMax::new(weight_absmax(&w));
            update_running_absmax(&mut stats, &x, 0.95).unwrap();
            let alpha = rng.random::<f64>();
            assert!(compute_scales(&stats, alpha)
                .unwrap()
                .iter()
                .all(|&s| s > 0.0));
        }
    }

    #[test]
    fn smoothing_identity_scales_change_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, 4, 4, 1.0);
        let w = random_tensor(&mut rng, 4, 4, 1.0);
        let (xh, wh) = apply_smoothing(&x, &w, &[1.0; 4]).unwrap();
        assert_eq!(xh.data(), x.data());
        assert_eq!(wh.data(), w.data());
    }

    #[test]
    fn smoothing_preserves_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = random_tensor(&mut rng, 4, 4, 2.0);
            let w = random_tensor(&mut rng, 4, 4, 1.5);
            let s: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 10.0 + 0.01).collect();
            let (xh, wh) = apply_smoothing(&x, &w, &s).unwrap();
            let base = x.matmul_wt(&w).unwrap();
            let smoothed = xh.matmul_wt(&wh).unwrap();
            let diff: f64 = base
                .data()
                .iter()
                .zip(smoothed.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff / base.frob_norm().max(1e-30) <= 1e-6);
        }
    }

    #[test]
    fn alpha_one_normalizes_activation_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_tensor(&mut rng, 6, 5, 3.0);
        let w = random_tensor(&mut rng, 4, 5, 1.0);
        let mut stats = ChannelAbsMax::new(weight_absmax(&w));
        update_running_absmax(&mut stats, &x, 0.95).unwrap();
        let s = compute_scales(&stats, 1.0).unwrap();
        let (xh, _) = apply_smoothing(&x, &w, &s).unwrap();
        for i in 0..5 {
            let m = (0..6).map(|r| xh.get(r, i).abs()).fold(0.0f64, f64::max);
            assert_relative_eq!(m, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn smoothed_absmax_bound_when_product_small() {
        // max|X_hat_i| = (max|X_i| * max|W_i|)^(1-alpha), below 1 exactly
        // when the statistic product is below 1.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_tensor(&mut rng, 6, 5, 0.9);
        let w = random_tensor(&mut rng, 4, 5, 0.8);
        let mut stats = ChannelAbsMax::new(weight_absmax(&w));
        update_running_absmax(&mut stats, &x, 0.95).unwrap();
        let s = compute_scales(&stats, 0.4).unwrap();
        let (xh, _) = apply_smoothing(&x, &w, &s).unwrap();
        for i in 0..5 {
            let prod = stats.x_absmax()[i] * stats.w_absmax()[i];
            if prod < 1.0 && prod > 0.0 {
                let m = (0..6).map(|r| xh.get(r, i).abs()).fold(0.0f64, f64::max);
                assert!(m < 1.0 + 1e-12, "channel {i}: max {m} with product {prod}");
            }
        }
    }

    #[test]
    fn non_positive_scale_rejected() {
        let x = Tensor2D::zeros(2, 2);
        let w = Tensor2D::zeros(2, 2);
        assert!(matches!(
            apply_smoothing(&x, &w, &[1.0, 0.0]),
            Err(Error::NonPositiveScale { channel: 1, .. })
        ));
    }

    #[test]
    fn fold_single_range_matches_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_tensor(&mut rng, 3, 4, 1.0);
        let w = random_tensor(&mut rng, 4, 4, 1.0);
        let s: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.5).collect();
        let scale = SmoothScale::new(0.5, vec![s.clone()]).unwrap();
        let folded = fold_weights(&w, &scale).unwrap();
        let (_, wh) = apply_smoothing(&x, &w, &s).unwrap();
        assert_eq!(folded.len(), 1);
        assert_eq!(folded[0].data(), wh.data());
    }

    #[test]
    fn fold_duplicate_columns_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let w = random_tensor(&mut rng, 4, 4, 1.0);
        let s: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.5).collect();
        let scale = SmoothScale::new(0.5, vec![s.clone(), s]).unwrap();
        let folded = fold_weights(&w, &scale).unwrap();
        assert_eq!(folded[0].data(), folded[1].data());
    }

    #[test]
    fn fold_many_ranges_matches_per_range_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let w = random_tensor(&mut rng, 6, 5, 1.0);
        let cols: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..5).map(|_| rng.random::<f64>() * 4.0 + 0.1).collect())
            .collect();
        let scale = SmoothScale::new(0.2, cols.clone()).unwrap();
        let folded = fold_weights(&w, &scale).unwrap();
        for (r, col) in cols.iter().enumerate() {
            let expect = scale_weight_columns(&w, col);
            assert_eq!(folded[r].data(), expect.data());
        }
    }
}
