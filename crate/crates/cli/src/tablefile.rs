//! Binary parameter-table file.
//!
//! Layout (all integers little-endian, floats as IEEE-754 bit patterns):
//!
//! ```text
//! magic "SQTB" | version u32
//! quant config:  w_bits u8 | a_bits u8 | smoothing u8 | ranges u32
//!                | alpha f64 | momentum f64
//! model config:  n_blocks u32 | d_model u32 | n_heads u32 | frames u32
//!                | spatial_tokens u32 | cond_dim u32 | seed u64 | fit u8
//! fingerprint:   u64 (must match the model config block)
//! partition:     total_steps u32 | n_ranges u32 | (start u32, end u32)*
//! layers:        n_layers u32, then per layer:
//!                  id_len u32 | id utf8
//!                  out_channels u32 | in_channels u32
//!                  per range: smooth scales f64 * in_channels
//!                  per range: activation params, weight params
//!                             (bits u8 | granularity u8 | n u32
//!                              | delta f64 * n | zero i64 * n)
//!                  per range: payload
//!                             (packing u8 [0 = whole words]
//!                              | n u32 | levels u32 * n)
//! checksum:      sha256 of every preceding byte
//! ```
//!
//! Loading verifies the checksum first, so any single corrupted byte is
//! rejected before parsing. Unknown versions and unknown packing values
//! are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use sqdit_core::calib::{LayerTable, QuantConfig, Smoothing, TimeRangePartition, TimeStepTable};
use sqdit_core::model::{LayerId, ToyModelConfig};
use sqdit_core::quant::{BitWidth, Granularity, QuantParams, QuantizedTensor};
use sqdit_core::smooth::SmoothScale;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"SQTB";
const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;
/// Only packing 0 (whole integer words) is defined; the field is reserved
/// for packed encodings.
const PACKING_RAW_WORDS: u8 = 0;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt("truncated table file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn corrupt(msg: &str) -> CliError {
    CliError::Mismatch(format!("invalid table file: {msg}"))
}

fn smoothing_code(s: Smoothing) -> u8 {
    match s {
        Smoothing::None => 0,
        Smoothing::Asq => 1,
        Smoothing::Tsq => 2,
    }
}

fn smoothing_from(code: u8) -> Result<Smoothing> {
    match code {
        0 => Ok(Smoothing::None),
        1 => Ok(Smoothing::Asq),
        2 => Ok(Smoothing::Tsq),
        other => Err(corrupt(&format!("unknown smoothing code {other}"))),
    }
}

fn write_params(w: &mut Writer, p: &QuantParams) {
    w.u8(p.bits().bits());
    w.u8(match p.granularity() {
        Granularity::PerChannel => 0,
        Granularity::PerTensor => 1,
    });
    w.u32(p.delta().len() as u32);
    for d in p.delta() {
        w.f64(*d);
    }
    for z in p.zero() {
        w.i64(*z);
    }
}

fn read_params(r: &mut Reader<'_>) -> Result<QuantParams> {
    let bits = BitWidth::new(r.u8()?).map_err(|e| corrupt(&e.to_string()))?;
    let granularity = match r.u8()? {
        0 => Granularity::PerChannel,
        1 => Granularity::PerTensor,
        other => return Err(corrupt(&format!("unknown granularity code {other}"))),
    };
    let n = r.u32()? as usize;
    let mut delta = Vec::with_capacity(n);
    for _ in 0..n {
        delta.push(r.f64()?);
    }
    let mut zero = Vec::with_capacity(n);
    for _ in 0..n {
        zero.push(r.i64()?);
    }
    QuantParams::new(delta, zero, bits, granularity).map_err(|e| corrupt(&e.to_string()))
}

/// Serializes a frozen table together with the model configuration it was
/// calibrated against.
pub fn encode_table(table: &TimeStepTable, model: &ToyModelConfig) -> Vec<u8> {
    assert_eq!(
        model.fingerprint(),
        table.model_fingerprint(),
        "table belongs to the encoded model config"
    );
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);

    let cfg = table.config();
    w.u8(cfg.w_bits.bits());
    w.u8(cfg.a_bits.bits());
    w.u8(smoothing_code(cfg.smoothing));
    w.u32(cfg.ranges as u32);
    w.f64(cfg.alpha);
    w.f64(cfg.momentum);

    w.u32(model.n_blocks as u32);
    w.u32(model.d_model as u32);
    w.u32(model.n_heads as u32);
    w.u32(model.frames as u32);
    w.u32(model.spatial_tokens as u32);
    w.u32(model.cond_dim as u32);
    w.u64(model.seed);
    w.u8(model.fit as u8);
    w.u64(table.model_fingerprint());

    let partition = table.partition();
    w.u32(partition.total_steps() as u32);
    w.u32(partition.len() as u32);
    for r in 0..partition.len() {
        let (s, e) = partition.bounds(r);
        w.u32(s as u32);
        w.u32(e as u32);
    }

    w.u32(table.layers().len() as u32);
    for (id, layer) in table.layers() {
        let id_bytes = id.as_str().as_bytes();
        w.u32(id_bytes.len() as u32);
        w.bytes(id_bytes);
        w.u32(layer.out_channels() as u32);
        w.u32(layer.in_channels() as u32);
        for r in 0..partition.len() {
            for s in layer.smooth().column(r) {
                w.f64(*s);
            }
        }
        for r in 0..partition.len() {
            write_params(&mut w, &layer.act_params()[r]);
            write_params(&mut w, &layer.weight_params()[r]);
        }
        for q in layer.weights() {
            w.u8(PACKING_RAW_WORDS);
            w.u32(q.levels().len() as u32);
            for l in q.levels() {
                w.u32(*l);
            }
        }
    }

    let checksum = Sha256::digest(&w.buf);
    w.bytes(&checksum);
    w.buf
}

/// Parses and validates a table file image.
pub fn decode_table(bytes: &[u8]) -> Result<(TimeStepTable, ToyModelConfig)> {
    if bytes.len() < CHECKSUM_LEN + MAGIC.len() {
        return Err(corrupt("file too short"));
    }
    let (payload, stored_sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let computed = Sha256::digest(payload);
    if computed.as_slice() != stored_sum {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader::new(payload);
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }

    let w_bits = BitWidth::new(r.u8()?).map_err(|e| corrupt(&e.to_string()))?;
    let a_bits = BitWidth::new(r.u8()?).map_err(|e| corrupt(&e.to_string()))?;
    let smoothing = smoothing_from(r.u8()?)?;
    let ranges = r.u32()? as usize;
    let alpha = r.f64()?;
    let momentum = r.f64()?;
    let config = QuantConfig::new(w_bits, a_bits, smoothing, ranges, alpha, momentum)
        .map_err(|e| corrupt(&e.to_string()))?;

    let model = ToyModelConfig {
        n_blocks: r.u32()? as usize,
        d_model: r.u32()? as usize,
        n_heads: r.u32()? as usize,
        frames: r.u32()? as usize,
        spatial_tokens: r.u32()? as usize,
        cond_dim: r.u32()? as usize,
        seed: r.u64()?,
        fit: r.u8()? != 0,
    };
    let fingerprint = r.u64()?;
    if fingerprint != model.fingerprint() {
        return Err(corrupt(
            "fingerprint does not match the stored model config",
        ));
    }

    let total_steps = r.u32()? as usize;
    let n_ranges = r.u32()? as usize;
    let mut bounds = Vec::with_capacity(n_ranges);
    for _ in 0..n_ranges {
        let s = r.u32()? as usize;
        let e = r.u32()? as usize;
        bounds.push((s, e));
    }
    let partition =
        TimeRangePartition::from_parts(total_steps, bounds).map_err(|e| corrupt(&e.to_string()))?;

    let n_layers = r.u32()? as usize;
    let mut layers = BTreeMap::new();
    for _ in 0..n_layers {
        let id_len = r.u32()? as usize;
        if id_len > 4096 {
            return Err(corrupt("layer id too long"));
        }
        let id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| corrupt("layer id is not utf-8"))?
            .to_string();
        let out_channels = r.u32()? as usize;
        let in_channels = r.u32()? as usize;
        if in_channels == 0 || out_channels == 0 || in_channels > 1 << 20 || out_channels > 1 << 20
        {
            return Err(corrupt("implausible layer dimensions"));
        }
        let mut columns = Vec::with_capacity(n_ranges);
        for _ in 0..n_ranges {
            let mut col = Vec::with_capacity(in_channels);
            for _ in 0..in_channels {
                col.push(r.f64()?);
            }
            columns.push(col);
        }
        let smooth = SmoothScale::new(alpha, columns).map_err(|e| corrupt(&e.to_string()))?;

        let mut act_params = Vec::with_capacity(n_ranges);
        let mut weight_params = Vec::with_capacity(n_ranges);
        for _ in 0..n_ranges {
            act_params.push(read_params(&mut r)?);
            weight_params.push(read_params(&mut r)?);
        }
        let mut weights = Vec::with_capacity(n_ranges);
        for params in &weight_params {
            let packing = r.u8()?;
            if packing != PACKING_RAW_WORDS {
                return Err(corrupt(&format!("unknown packing code {packing}")));
            }
            let n = r.u32()? as usize;
            if n != out_channels * in_channels {
                return Err(corrupt("payload size does not match layer dimensions"));
            }
            let mut levels = Vec::with_capacity(n);
            for _ in 0..n {
                levels.push(r.u32()?);
            }
            let q = QuantizedTensor::from_parts(out_channels, in_channels, levels, params.clone())
                .map_err(|e| corrupt(&e.to_string()))?;
            weights.push(q);
        }
        let layer = LayerTable::from_parts(
            in_channels,
            out_channels,
            smooth,
            act_params,
            weight_params,
            weights,
        )
        .map_err(|e| corrupt(&e.to_string()))?;
        layers.insert(LayerId::new(id), layer);
    }
    if !r.done() {
        return Err(corrupt("trailing bytes after layer records"));
    }

    let table = TimeStepTable::from_parts(config, fingerprint, partition, layers)
        .map_err(|e| corrupt(&e.to_string()))?;
    Ok((table, model))
}

/// Atomic save: writes to a sibling temp file and renames into place.
pub fn save_table(table: &TimeStepTable, model: &ToyModelConfig, path: &Path) -> Result<u64> {
    let bytes = encode_table(table, model);
    crate::report::write_atomic(path, &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn load_table(path: &Path) -> Result<(TimeStepTable, ToyModelConfig)> {
    let bytes = std::fs::read(path).map_err(CliError::io(path.display().to_string()))?;
    decode_table(&bytes)
}
