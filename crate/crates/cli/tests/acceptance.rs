//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`). Every
//! bound is asserted exactly as stated; trend criteria assert ordering
//! only, never absolute targets.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqdit_cli::tablefile::{decode_table, encode_table};
use sqdit_core::calib::{
    partition_steps, run_calibration, CalibStats, CalibrationSet, QuantConfig, Smoothing,
    TimeStepTable,
};
use sqdit_core::engine::{ExecutorKind, QuantizedExecutor};
use sqdit_core::model::{build_model, denoise, DiffusionSchedule, LayerId, ToyModelConfig};
use sqdit_core::quant::{
    compute_params, dequantize, fake_linear_levels, integer_linear, quantize, BitWidth, Granularity,
};
use sqdit_core::smooth::{
    apply_smoothing, compute_scales, update_running_absmax, weight_absmax, ChannelAbsMax,
};
use sqdit_core::tensor::{cosine_similarity, Tensor2D};

fn bw(b: u8) -> BitWidth {
    BitWidth::new(b).unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor2D {
    let data = (0..rows * cols)
        .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
        .collect();
    Tensor2D::new(rows, cols, data).unwrap()
}

/// Criterion 1: for 10,000 random tensors across b in {4, 6, 8}, every
/// element inside the representable interval round-trips within delta/2,
/// with no tolerance. Runtime < 10 s.
#[test]
fn criterion_1_round_trip_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let bits = [4u8, 6, 8];
    for i in 0..10_000 {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(1..=12);
        let scale = 10f64.powf(rng.random::<f64>() * 3.0 - 1.5);
        let t = random_tensor(&mut rng, rows, cols, scale);
        let b = bw(bits[i % bits.len()]);
        let granularity = if i % 3 == 0 {
            Granularity::PerChannel
        } else {
            Granularity::PerTensor
        };
        let p = compute_params(&t, b, granularity).unwrap();
        let d = dequantize(&quantize(&t, &p).unwrap());
        for r in 0..t.rows() {
            let (delta, _) = p.for_row(r);
            let (lo, hi) = p.representable_range(r);
            for (v, vh) in t.row(r).iter().zip(d.row(r)) {
                if *v >= lo && *v <= hi {
                    assert!(
                        (v - vh).abs() <= delta / 2.0,
                        "in-range element {v} reconstructed as {vh} with delta {delta}"
                    );
                } else {
                    let clamp_dist = (v - v.clamp(lo, hi)).abs();
                    assert!((v - vh).abs() <= delta / 2.0 + clamp_dist);
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 1 round-trip bound: PASS (10000 tensors, {elapsed:.2?})");
}

/// Criterion 2: smoothing preserves X.W within 1e-6 relative Frobenius
/// error for 1,000 random (X, W, alpha) triples. Runtime < 5 s.
#[test]
fn criterion_2_smoothing_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    for _ in 0..1_000 {
        let t = rng.random_range(2..=10);
        let ci = rng.random_range(2..=12);
        let co = rng.random_range(2..=10);
        let x = random_tensor(&mut rng, t, ci, 5.0);
        let w = random_tensor(&mut rng, co, ci, 2.0);
        let alpha = rng.random::<f64>();
        let mut stats = ChannelAbsMax::new(weight_absmax(&w));
        update_running_absmax(&mut stats, &x, 0.95).unwrap();
        let s = compute_scales(&stats, alpha).unwrap();
        let (xh, wh) = apply_smoothing(&x, &w, &s).unwrap();
        let base = x.matmul_wt(&w).unwrap();
        let smoothed = xh.matmul_wt(&wh).unwrap();
        let err: f64 = base
            .data()
            .iter()
            .zip(smoothed.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rel = err / base.frob_norm().max(1e-300);
        assert!(rel <= 1e-6, "relative Frobenius error {rel}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("ACCEPTANCE 2 smoothing exactness: PASS (1000 triples, {elapsed:.2?})");
}

/// Criterion 3: the integer path agrees with the float fake-quant path
/// exactly, 1,000 random trials up to 32x32 at b in {2, 4, 8}.
/// Runtime < 10 s.
#[test]
fn criterion_3_integer_fake_quant_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let bits = [2u8, 4, 8];
    for i in 0..1_000 {
        let t = rng.random_range(1..=32);
        let ci = rng.random_range(1..=32);
        let co = rng.random_range(1..=32);
        let x = random_tensor(&mut rng, t, ci, 4.0);
        let w = random_tensor(&mut rng, co, ci, 2.0);
        let b = bw(bits[i % bits.len()]);
        let xp = compute_params(&x, b, Granularity::PerTensor).unwrap();
        let wp = compute_params(&w, b, Granularity::PerChannel).unwrap();
        let xq = quantize(&x, &xp).unwrap();
        let wq = quantize(&w, &wp).unwrap();
        let fake = fake_linear_levels(&xq, &wq).unwrap();
        let int = integer_linear(&xq, &wq).unwrap();
        assert_eq!(fake.data(), int.data(), "paths diverged on trial {i}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 3 integer/fake-quant equivalence: PASS (1000 trials, {elapsed:.2?})");
}

fn small_setup() -> (
    sqdit_core::model::ToyModel,
    DiffusionSchedule,
    CalibrationSet,
) {
    let cfg = ToyModelConfig {
        n_blocks: 1,
        d_model: 16,
        n_heads: 2,
        frames: 2,
        spatial_tokens: 4,
        cond_dim: 8,
        seed: 5,
        fit: false,
    };
    let model = build_model(&cfg).unwrap();
    let schedule = DiffusionSchedule::new(8, 3.0).unwrap();
    let set = CalibrationSet::synthetic(&cfg, 1, 33).unwrap();
    (model, schedule, set)
}

/// Criterion 4: degeneracy identities, all exact.
/// (a) R=1 TSQ with momentum 0 over a single calibration pass produces
///     bitwise the same scales as ASQ.
/// (b) the R=t partition routes each step to its own accumulator.
/// (c) coarse-range extrema equal the fold of member-step extrema.
#[test]
fn criterion_4_degeneracy_identities() {
    // (a)
    let (model, schedule, set) = small_setup();
    let tsq = QuantConfig::new(bw(8), bw(8), Smoothing::Tsq, 1, 0.3, 0.0).unwrap();
    let asq = QuantConfig::new(bw(8), bw(8), Smoothing::Asq, 1, 0.3, 0.0).unwrap();
    let ta = run_calibration(&model, &schedule, &set, &tsq).unwrap();
    let tb = run_calibration(&model, &schedule, &set, &asq).unwrap();
    for (id, la) in ta.layers() {
        let lb = tb.layer(id).unwrap();
        assert_eq!(
            la.smooth().columns(),
            lb.smooth().columns(),
            "scales differ on {id}"
        );
        assert_eq!(la.act_params(), lb.act_params());
        assert_eq!(la.weights(), lb.weights());
    }

    // (b)
    let id = LayerId::from("probe");
    let t = 20;
    let mut stats = CalibStats::new(
        [(id.clone(), vec![1.0; 2])],
        partition_steps(t, t).unwrap(),
        0.95,
    );
    for step in 0..t {
        let x = Tensor2D::new(1, 2, vec![step as f64, -(step as f64)]).unwrap();
        stats.observe(&id, step, &x).unwrap();
        for r in 0..t {
            assert_eq!(
                stats.range_stats(&id, r).unwrap().count(),
                u64::from(r <= step)
            );
        }
    }
    for step in 0..t {
        let rs = stats.range_stats(&id, step).unwrap();
        assert_eq!(rs.count(), 1);
        assert_eq!(rs.max(), step as f64);
    }

    // (c)
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let coarse_part = partition_steps(t, 4).unwrap();
    let mut coarse = CalibStats::new([(id.clone(), vec![1.0; 3])], coarse_part.clone(), 0.95);
    let mut fine = CalibStats::new(
        [(id.clone(), vec![1.0; 3])],
        partition_steps(t, t).unwrap(),
        0.95,
    );
    for step in 0..t {
        for _ in 0..3 {
            let x = random_tensor(&mut rng, 2, 3, 4.0);
            coarse.observe(&id, step, &x).unwrap();
            fine.observe(&id, step, &x).unwrap();
        }
    }
    for r in 0..coarse_part.len() {
        let (s, e) = coarse_part.bounds(r);
        let fold_min = (s..e)
            .map(|k| fine.range_stats(&id, k).unwrap().min())
            .fold(f64::INFINITY, f64::min);
        let fold_max = (s..e)
            .map(|k| fine.range_stats(&id, k).unwrap().max())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(coarse.range_stats(&id, r).unwrap().min(), fold_min);
        assert_eq!(coarse.range_stats(&id, r).unwrap().max(), fold_max);
    }
    println!("ACCEPTANCE 4 degeneracy identities: PASS");
}

/// Criterion 5: a full 20-step denoise reports exactly zero runtime
/// statistic computations for both static kinds; the dynamic baseline
/// reports exactly one per quantized linear call (28 x 20 x 2 = 1120).
#[test]
fn criterion_5_zero_runtime_statistics_audit() {
    let cfg = ToyModelConfig::default();
    let model = build_model(&cfg).unwrap();
    let schedule = DiffusionSchedule::default();
    let set = CalibrationSet::synthetic(&cfg, 2, 900).unwrap();
    let table = run_calibration(
        &model,
        &schedule,
        &set,
        &QuantConfig::tsq_tsw(bw(8), bw(8), schedule.steps()).unwrap(),
    )
    .unwrap();
    let expected_calls = (model.layer_ids().len() * schedule.steps() * 2) as u64;
    assert_eq!(expected_calls, 1120);

    let cond = &set.prompts()[0].cond;
    for kind in [ExecutorKind::StaticFakeQuant, ExecutorKind::StaticInteger] {
        let exec = QuantizedExecutor::bind(&model, &table, kind).unwrap();
        denoise(&model, &schedule, cond, 1, &exec).unwrap();
        let report = exec.audit_report();
        assert_eq!(report.linear_calls, expected_calls);
        assert_eq!(
            report.stat_events, 0,
            "{kind} computed statistics at inference"
        );
    }

    let dynamic = QuantizedExecutor::dynamic_baseline(&model, bw(8), bw(8)).unwrap();
    denoise(&model, &schedule, cond, 1, &dynamic).unwrap();
    let report = dynamic.audit_report();
    assert_eq!(report.linear_calls, expected_calls);
    assert_eq!(report.stat_events, expected_calls);

    let float = QuantizedExecutor::float_reference(&model);
    denoise(&model, &schedule, cond, 1, &float).unwrap();
    assert_eq!(float.audit_report().stat_events, 0);
    println!(
        "ACCEPTANCE 5 zero-runtime-statistics audit: PASS (0/0 static, {expected_calls} dynamic)"
    );
}

struct Fixture {
    model: sqdit_core::model::ToyModel,
    schedule: DiffusionSchedule,
    calib: CalibrationSet,
    eval: CalibrationSet,
    reference: Vec<sqdit_core::model::LatentVideo>,
}

fn default_fixture() -> Fixture {
    let cfg = ToyModelConfig::default();
    let model = build_model(&cfg).unwrap();
    let schedule = DiffusionSchedule::default();
    let calib = CalibrationSet::synthetic(&cfg, 4, 900).unwrap();
    let eval = CalibrationSet::synthetic(&cfg, 2, 4242).unwrap();
    let float = QuantizedExecutor::float_reference(&model);
    let reference = eval
        .prompts()
        .iter()
        .map(|p| denoise(&model, &schedule, &p.cond, p.seed, &float).unwrap())
        .collect();
    Fixture {
        model,
        schedule,
        calib,
        eval,
        reference,
    }
}

fn fixture_cosine(f: &Fixture, config: &QuantConfig) -> f64 {
    let table = run_calibration(&f.model, &f.schedule, &f.calib, config).unwrap();
    let exec = QuantizedExecutor::bind(&f.model, &table, ExecutorKind::StaticFakeQuant).unwrap();
    let mut total = 0.0;
    for (p, r) in f.eval.prompts().iter().zip(&f.reference) {
        let out = denoise(&f.model, &f.schedule, &p.cond, p.seed, &exec).unwrap();
        total += cosine_similarity(&out.tensor, &r.tensor);
    }
    total / f.eval.len() as f64
}

/// Criterion 6: W16A16 static output reaches cosine >= 0.999 against the
/// float reference on the pinned seeds.
#[test]
fn criterion_6_near_lossless_limit() {
    let f = default_fixture();
    let c = fixture_cosine(&f, &QuantConfig::asq(bw(16), bw(16)));
    assert!(c >= 0.999, "W16A16 cosine {c}");
    println!("ACCEPTANCE 6 near-lossless limit: PASS (cosine {c:.6})");
}

/// Criterion 7: trend reproduction on the pinned toy seed. Per scheme,
/// cosine-to-float is non-increasing as bits drop (8,8) -> (6,6) -> (4,4),
/// and at (8,8) both smoothing schemes reach at least the no-smoothing
/// baseline. Trend assertions only. Runtime < 2 min.
#[test]
fn criterion_7_trend_reproduction() {
    let start = Instant::now();
    let f = default_fixture();
    type ConfigAt = fn(u8) -> QuantConfig;
    let schemes: [(&str, ConfigAt); 3] = [
        ("CW+TW", |b| QuantConfig::cw_tw(bw(b), bw(b))),
        ("*+ASQ", |b| QuantConfig::asq(bw(b), bw(b))),
        ("*+TSQ+TSW", |b| {
            QuantConfig::tsq_tsw(bw(b), bw(b), 20).unwrap()
        }),
    ];
    let mut at_8 = Vec::new();
    for (name, cfg) in &schemes {
        let c8 = fixture_cosine(&f, &cfg(8));
        let c6 = fixture_cosine(&f, &cfg(6));
        let c4 = fixture_cosine(&f, &cfg(4));
        assert!(
            c8 >= c6 && c6 >= c4,
            "{name}: cosine not non-increasing as bits drop: 8/8={c8} 6/6={c6} 4/4={c4}"
        );
        at_8.push((name, c8));
    }
    let base = at_8[0].1;
    assert!(
        at_8[1].1 >= base,
        "*+ASQ at 8/8 ({}) below CW+TW ({base})",
        at_8[1].1
    );
    assert!(
        at_8[2].1 >= base,
        "*+TSQ+TSW at 8/8 ({}) below CW+TW ({base})",
        at_8[2].1
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "sweep took {elapsed:?}");
    println!(
        "ACCEPTANCE 7 trend reproduction: PASS (8/8 cosines: CW+TW {:.6}, ASQ {:.6}, TSQ+TSW {:.6}; {elapsed:.1?})",
        at_8[0].1, at_8[1].1, at_8[2].1
    );
}

/// Criterion 8: 100 table save/load round trips are byte-exact and any
/// single corrupted byte is rejected.
#[test]
fn criterion_8_table_file_integrity() {
    let (model, schedule, set) = small_setup();
    let cfg = QuantConfig::tsq_tsw(bw(8), bw(8), 4).unwrap();
    let table = run_calibration(&model, &schedule, &set, &cfg).unwrap();
    let model_cfg = *model.config();

    let original = encode_table(&table, &model_cfg);
    let mut current: TimeStepTable = table;
    for round in 0..100 {
        let bytes = encode_table(&current, &model_cfg);
        assert_eq!(bytes, original, "round {round} drifted");
        let (decoded, decoded_cfg) = decode_table(&bytes).unwrap();
        assert_eq!(decoded_cfg, model_cfg);
        current = decoded;
    }

    let mut positions: Vec<usize> = (0..original.len()).step_by(31).collect();
    positions.extend([0, 3, 4, original.len() - 33, original.len() - 1]);
    for pos in positions {
        let mut corrupt = original.clone();
        corrupt[pos] ^= 0x20;
        assert!(
            decode_table(&corrupt).is_err(),
            "corruption at byte {pos} accepted"
        );
    }
    println!("ACCEPTANCE 8 table-file integrity: PASS (100 round trips, corruption rejected)");
}

/// Criterion 9: two full calibrate + compare runs with identical seeds
/// produce byte-identical table files and reports.
#[test]
fn criterion_9_run_determinism() {
    let bin = env!("CARGO_BIN_EXE_sqdit");
    let run = |dir: &Path| {
        let model: &[&str] = &[
            "--n-blocks",
            "1",
            "--d-model",
            "16",
            "--n-heads",
            "2",
            "--frames",
            "2",
            "--spatial-tokens",
            "4",
            "--cond-dim",
            "8",
        ];
        let mut cal = vec![
            "calibrate",
            "--scheme",
            "tsq-tsw",
            "--steps",
            "6",
            "--calib-prompts",
            "2",
            "--out",
            "table.sqtb",
        ];
        cal.extend_from_slice(model);
        let out = Command::new(bin)
            .args(&cal)
            .env("SQDIT_OUT_DIR", dir)
            .current_dir(dir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let out = Command::new(bin)
            .args([
                "compare",
                "--table",
                "table.sqtb",
                "--dynamic",
                "8/8",
                "--eval-prompts",
                "2",
                "--out",
                "report.txt",
            ])
            .env("SQDIT_OUT_DIR", dir)
            .current_dir(dir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (
            std::fs::read(dir.join("table.sqtb")).unwrap(),
            std::fs::read(dir.join("report.txt")).unwrap(),
        )
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (table_a, report_a) = run(dir_a.path());
    let (table_b, report_b) = run(dir_b.path());
    assert_eq!(
        table_a, table_b,
        "table files differ between identical runs"
    );
    assert_eq!(report_a, report_b, "reports differ between identical runs");
    println!("ACCEPTANCE 9 determinism: PASS (byte-identical tables and reports)");
}
