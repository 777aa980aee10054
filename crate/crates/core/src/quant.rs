//! Min-max quantization: parameter computation, quantize/dequantize, and
//! the float and integer execution paths of a quantized linear layer.
//!
//! Bin sizes divide the range by `2^b` (not `2^b - 1`); the top value of a
//! channel therefore lands one level past the grid and is clamped into
//! `2^b - 1`. Zero points are the rounded level index of the channel
//! minimum, so `level = round(v / delta) - zero` and
//! `v_hat = (level + zero) * delta`. Rounding is round-half-to-even
//! throughout.

use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

/// Bin size assigned to a degenerate (constant) channel.
pub const DELTA_FLOOR: f64 = 1e-8;

/// Integer bit width, 2 to 16 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitWidth(u8);

impl BitWidth {
    pub fn new(bits: u8) -> Result<Self> {
        if !(2..=16).contains(&bits) {
            return Err(Error::InvalidInput(format!(
                "bit width {bits} outside [2, 16]"
            )));
        }
        Ok(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Number of representable levels, `2^b`.
    pub fn levels(self) -> u32 {
        1u32 << self.0
    }

    /// Largest storable level, `2^b - 1`.
    pub fn max_level(self) -> u32 {
        self.levels() - 1
    }
}

/// Whether parameters are shared per tensor or kept per channel (rows of
/// the tensor as stored: output channels for weights, tokens for the
/// dynamic per-token baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    PerChannel,
    PerTensor,
}

/// Frozen bin sizes and zero points at a given granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantParams {
    delta: Vec<f64>,
    zero: Vec<i64>,
    bits: BitWidth,
    granularity: Granularity,
}

impl QuantParams {
    /// Builds validated parameters. Every `delta` must be positive and
    /// every zero point must fit in a signed 32-bit word (the integer
    /// execution path's register width).
    pub fn new(
        delta: Vec<f64>,
        zero: Vec<i64>,
        bits: BitWidth,
        granularity: Granularity,
    ) -> Result<Self> {
        if delta.is_empty() || delta.len() != zero.len() {
            return Err(Error::ShapeError(format!(
                "delta ({}) and zero ({}) lengths disagree or are empty",
                delta.len(),
                zero.len()
            )));
        }
        if granularity == Granularity::PerTensor && delta.len() != 1 {
            return Err(Error::ShapeError(format!(
                "per-tensor params must have one entry, got {}",
                delta.len()
            )));
        }
        if let Some(d) = delta.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidInput(format!("non-positive bin size {d}")));
        }
        if let Some(z) = zero
            .iter()
            .find(|z| **z > i32::MAX as i64 || **z < i32::MIN as i64)
        {
            return Err(Error::InvalidInput(format!(
                "zero point {z} exceeds signed 32-bit range"
            )));
        }
        Ok(Self {
            delta,
            zero,
            bits,
            granularity,
        })
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn zero(&self) -> &[i64] {
        &self.zero
    }

    pub fn bits(&self) -> BitWidth {
        self.bits
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Bin size and zero point governing row `r` of the paired tensor.
    pub fn for_row(&self, r: usize) -> (f64, i64) {
        match self.granularity {
            Granularity::PerTensor => (self.delta[0], self.zero[0]),
            Granularity::PerChannel => (self.delta[r], self.zero[r]),
        }
    }

    /// Smallest and largest exactly representable value for row `r`.
    /// Values inside this interval round-trip within `delta / 2`.
    pub fn representable_range(&self, r: usize) -> (f64, f64) {
        let (delta, zero) = self.for_row(r);
        let lo = zero as f64 * delta;
        let hi = (zero + self.bits.max_level() as i64) as f64 * delta;
        (lo, hi)
    }
}

/// Integer levels of a quantized tensor together with its parameters.
/// Levels are whole words, never bit-packed.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    levels: Vec<u32>,
    params: QuantParams,
}

impl QuantizedTensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn params(&self) -> &QuantParams {
        &self.params
    }

    /// Rebuilds a quantized tensor from stored levels, revalidating the
    /// level-range invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        levels: Vec<u32>,
        params: QuantParams,
    ) -> Result<Self> {
        if levels.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::ShapeError(format!(
                "level count {} does not match {rows}x{cols}",
                levels.len()
            )));
        }
        let max = params.bits().max_level();
        if levels.iter().any(|&l| l > max) {
            return Err(Error::InvalidInput(format!(
                "level exceeds 2^b - 1 = {max}"
            )));
        }
        match params.granularity() {
            Granularity::PerTensor => {}
            Granularity::PerChannel => {
                if params.delta().len() != rows {
                    return Err(Error::ShapeError(format!(
                        "per-channel params have {} entries for {} rows",
                        params.delta().len(),
                        rows
                    )));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            levels,
            params,
        })
    }
}

/// Bin size and zero point for one channel from its observed extrema.
pub(crate) fn params_from_minmax(min: f64, max: f64, bits: BitWidth) -> Result<(f64, i64)> {
    if !(min.is_finite() && max.is_finite()) || min > max {
        return Err(Error::InvalidInput(format!(
            "bad value range [{min}, {max}]"
        )));
    }
    let delta = if max > min {
        (max - min) / bits.levels() as f64
    } else {
        // Constant channel. The fixed floor applies unless the value is so
        // large that its zero point would not fit a signed 32-bit word, in
        // which case the floor widens just enough to keep it representable.
        DELTA_FLOOR.max(min.abs() / (i32::MAX as f64 - 1.0))
    };
    let zero = (min / delta).round_ties_even();
    if zero.abs() > i32::MAX as f64 {
        return Err(Error::InvalidInput(format!(
            "zero point {zero} for range [{min}, {max}] exceeds signed 32-bit range"
        )));
    }
    Ok((delta, zero as i64))
}

/// Computes bin sizes and zero points from the value extrema, per channel
/// (row of the tensor as stored) or for the whole tensor.
pub fn compute_params(
    values: &Tensor2D,
    bits: BitWidth,
    granularity: Granularity,
) -> Result<QuantParams> {
    match granularity {
        Granularity::PerTensor => {
            let (delta, zero) = params_from_minmax(values.min(), values.max(), bits)?;
            QuantParams::new(vec![delta], vec![zero], bits, granularity)
        }
        Granularity::PerChannel => {
            let mut delta = Vec::with_capacity(values.rows());
            let mut zero = Vec::with_capacity(values.rows());
            for r in 0..values.rows() {
                let row = values.row(r);
                let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (d, z) = params_from_minmax(min, max, bits)?;
                delta.push(d);
                zero.push(z);
            }
            QuantParams::new(delta, zero, bits, granularity)
        }
    }
}

/// Maps values to levels: `clamp(round(v / delta) - zero, 0, 2^b - 1)`.
pub fn quantize(values: &Tensor2D, params: &QuantParams) -> Result<QuantizedTensor> {
    if params.granularity() == Granularity::PerChannel && params.delta().len() != values.rows() {
        return Err(Error::ShapeError(format!(
            "per-channel params have {} entries for {} rows",
            params.delta().len(),
            values.rows()
        )));
    }
    let max_level = params.bits().max_level() as i64;
    let mut levels = Vec::with_capacity(values.rows() * values.cols());
    for r in 0..values.rows() {
        let (delta, zero) = params.for_row(r);
        for &v in values.row(r) {
            let l = (v / delta).round_ties_even() as i64 - zero;
            levels.push(l.clamp(0, max_level) as u32);
        }
    }
    Ok(QuantizedTensor {
        rows: values.rows(),
        cols: values.cols(),
        levels,
        params: params.clone(),
    })
}

/// Reconstructs values from levels: `v_hat = (level + zero) * delta`.
pub fn dequantize(q: &QuantizedTensor) -> Tensor2D {
    let mut out = Tensor2D::zeros(q.rows, q.cols);
    for r in 0..q.rows {
        let (delta, zero) = q.params.for_row(r);
        let row = out.row_mut(r);
        for (c, slot) in row.iter_mut().enumerate() {
            let l = q.levels[r * q.cols + c] as i64;
            *slot = (l + zero) as f64 * delta;
        }
    }
    out
}

/// Largest zero-adjusted level magnitude, used by the overflow guard and
/// the float/integer agreement bound.
fn max_adjusted_level(q: &QuantizedTensor) -> i64 {
    let mut max = 0i64;
    for r in 0..q.rows {
        let (_, zero) = q.params.for_row(r);
        for c in 0..q.cols {
            let a = (q.levels[r * q.cols + c] as i64 + zero).abs();
            max = max.max(a);
        }
    }
    max
}

/// Shared shape check for the two linear execution paths.
fn check_linear_shapes(xq: &QuantizedTensor, wq: &QuantizedTensor) -> Result<()> {
    if xq.cols != wq.cols {
        return Err(Error::ShapeError(format!(
            "inner dimensions disagree: x is {}x{}, w is {}x{}",
            xq.rows, xq.cols, wq.rows, wq.cols
        )));
    }
    Ok(())
}

/// Float-domain linear layer over already-quantized operands.
///
/// Accumulates the zero-adjusted level products in `f64` and applies the
/// `delta_x * delta_w` scaling once per output element. Fixing this order
/// makes the result bit-identical to [`integer_linear`] whenever the
/// accumulated integers stay exactly representable.
pub fn fake_linear_levels(xq: &QuantizedTensor, wq: &QuantizedTensor) -> Result<Tensor2D> {
    check_linear_shapes(xq, wq)?;
    let mut out = Tensor2D::zeros(xq.rows, wq.rows);
    for t in 0..xq.rows {
        let (dx, zx) = xq.params.for_row(t);
        let xrow = &xq.levels[t * xq.cols..(t + 1) * xq.cols];
        let orow = out.row_mut(t);
        for (o, slot) in orow.iter_mut().enumerate() {
            let (dw, zw) = wq.params.for_row(o);
            let wrow = &wq.levels[o * wq.cols..(o + 1) * wq.cols];
            let mut acc = 0.0f64;
            for i in 0..xrow.len() {
                let a = (xrow[i] as i64 + zx) as f64;
                let b = (wrow[i] as i64 + zw) as f64;
                acc += a * b;
            }
            *slot = acc * (dx * dw);
        }
    }
    Ok(out)
}

/// Simulated quantized linear layer: quantizes both operands and runs the
/// float-domain path. Pure function of its inputs.
pub fn fake_quant_linear(
    x: &Tensor2D,
    w: &Tensor2D,
    wq: &QuantParams,
    xq: &QuantParams,
) -> Result<Tensor2D> {
    let xl = quantize(x, xq)?;
    let wl = quantize(w, wq)?;
    fake_linear_levels(&xl, &wl)
}

/// Integer execution path: accumulates `(x_lvl + z_x) * (w_lvl + z_w)` in
/// 64-bit integers and applies `delta_x * delta_w` once per output element.
pub fn integer_linear(xq: &QuantizedTensor, wq: &QuantizedTensor) -> Result<Tensor2D> {
    check_linear_shapes(xq, wq)?;
    let mx = max_adjusted_level(xq) as i128;
    let mw = max_adjusted_level(wq) as i128;
    let bound = xq.cols as i128 * mx * mw;
    if bound > i64::MAX as i128 {
        return Err(Error::OverflowRisk(format!(
            "C_I * max|x_lvl + z_x| * max|w_lvl + z_w| = {bound} exceeds i64"
        )));
    }
    let mut out = Tensor2D::zeros(xq.rows, wq.rows);
    for t in 0..xq.rows {
        let (dx, zx) = xq.params.for_row(t);
        let xrow = &xq.levels[t * xq.cols..(t + 1) * xq.cols];
        let orow = out.row_mut(t);
        for (o, slot) in orow.iter_mut().enumerate() {
            let (dw, zw) = wq.params.for_row(o);
            let wrow = &wq.levels[o * wq.cols..(o + 1) * wq.cols];
            let mut acc = 0i64;
            for i in 0..xrow.len() {
                acc += (xrow[i] as i64 + zx) * (wrow[i] as i64 + zw);
            }
            *slot = acc as f64 * (dx * dw);
        }
    }
    Ok(out)
}

/// Per-token (per-row) dynamic quantization, the comparison baseline.
/// Computes fresh parameters for every row at call time; nothing here is
/// ever serialized into a static table.
pub fn dynamic_token_quant(x: &Tensor2D, bits: BitWidth) -> Result<(QuantizedTensor, QuantParams)> {
    let params = compute_params(x, bits, Granularity::PerChannel)?;
    let q = quantize(x, &params)?;
    Ok((q, params))
}
