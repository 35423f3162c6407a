//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p respenc --test acceptance -- 3 7` runs a subset. The exit
//! status is non-zero if any criterion fails that is not listed in
//! `KNOWN_RED`; known-red failures still print FAIL with their reason.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use respenc::augment::{add_noise_with_snr, mask_block, polarity_invert, sample_snr};
use respenc::cost::{count_params, window_table, REFERENCE_ARCHITECTURES};
use respenc::encoder::{EncoderConfig, ARCHITECTURE_GRID};
use respenc::fusion::{argmax, gumbel_hard, gumbel_noise, FusionRegistry, GateParams, DEFAULT_FUSION, GATE_WIDTH};
use respenc::model::{ModelConfig, PreparedInput, Preprocess, RespModel};
use respenc::numerics::{softmax, GradTape, Tensor};
use respenc::signal::{pad_samples, segment_samples, synth_dataset, BandPass};
use respenc::training::{lr_at_epoch, smoothed_ce_loss, train, TrainConfig, TrainOutcome};

/// Criteria expected to fail, with the reason printed next to the FAIL line.
const KNOWN_RED: &[(u32, &str)] = &[(
    4,
    "T=4 and T=5 both cover 1150 samples with 3 windows and T=4 windows are shorter, \
     so any count that grows with window length puts T=4 below T=5 \
     (the published table agrees: 4.93 G at T=4 vs 4.94 G at T=5)",
)];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "gradient check", c1_gradients),
        (2, "attention oracle", c2_attention),
        (3, "parameter accounting", c3_params),
        (4, "FLOP ordering", c4_flops),
        (5, "windowing and padding", c5_windowing),
        (6, "filter response", c6_filter),
        (7, "gate contract", c7_gate),
        (8, "augmentation statistics", c8_augment),
        (9, "determinism", c9_determinism),
        (10, "desk-scale learning", c10_learning),
        (11, "loss and schedule", c11_loss),
    ];
    let mut unexpected = 0;
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:>2} {name}: {} [{secs:.1}s]", v.detail);
        if v.pass {
            passed += 1;
        } else if let Some((_, why)) = KNOWN_RED.iter().find(|(k, _)| *k == id) {
            println!("     known red: {why}");
        } else {
            unexpected += 1;
        }
    }
    println!("acceptance: {passed}/{ran} PASS, {unexpected} unexpected FAIL");
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------- 1 ----------

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        n_latents: 3,
        model_dim: 4,
        fourier_bands: 2,
        ffn_expansion: 2,
        dropout: 0.0,
        out_dim: 4,
        ..EncoderConfig::with_blocks(1, 1, 0)
    }
}

fn toy_input() -> PreparedInput {
    let full: Vec<f64> = (0..20)
        .map(|i| {
            let t = i as f64 / 20.0;
            (6.0 * t).sin() + 0.3 * (17.0 * t).cos() + 0.1 * t
        })
        .collect();
    PreparedInput {
        windows: full.chunks(10).map(<[f64]>::to_vec).collect(),
        full,
    }
}

const GATE_PARAM: &str = "fusion.gate";

struct GradCheck {
    worst: f64,
    worst_at: String,
    compared: usize,
}

/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// structurally zero gradients from dividing roundoff by roundoff.
fn gradient_check(fusion: &str) -> GradCheck {
    let mut model = RespModel::new(ModelConfig::new(tiny_encoder(), fusion, 2), 5).unwrap();
    common::randomize(&mut model.store, &mut ChaCha8Rng::seed_from_u64(6));
    let input = toy_input();
    // for the gated head, pick a draw that routes through the average so
    // every head receives gradient
    let seed = (0..)
        .find(|s| {
            let g = model.loss_and_grads(&input, 1, 0.1, &mut ChaCha8Rng::seed_from_u64(*s)).unwrap();
            g.selected.is_none_or(|i| i == GATE_WIDTH - 1)
        })
        .unwrap();
    let loss = |m: &RespModel| {
        m.loss_and_grads(&input, 1, 0.1, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
            .loss
    };
    let analytic = model
        .loss_and_grads(&input, 1, 0.1, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap();
    let h = 1e-4;
    let mut check = GradCheck {
        worst: 0.0,
        worst_at: String::new(),
        compared: 0,
    };
    let ids: Vec<_> = model.store.ids().collect();
    for (p, id) in ids.into_iter().enumerate() {
        if model.store.name(id) == GATE_PARAM {
            continue;
        }
        let base = model.store.get(id).clone();
        for k in 0..base.len() {
            let mut bumped = |delta: f64| {
                let mut data = base.to_vec();
                data[k] += delta;
                model.store.set(id, Tensor::new(base.shape(), data).unwrap()).unwrap();
                loss(&model)
            };
            let numeric = (bumped(h) - bumped(-h)) / (2.0 * h);
            let a = analytic.grads[p].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > check.worst {
                check.worst = rel;
                check.worst_at = format!("{}[{k}] (analytic {a:.1e}, numeric {numeric:.1e})", model.store.name(id));
            }
            check.compared += 1;
        }
        model.store.set(id, base).unwrap();
    }
    check
}

fn c1_gradients() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut total = 0;
    let mut parts = Vec::new();
    for name in FusionRegistry::builtin().names() {
        let c = gradient_check(name);
        if c.worst > worst {
            worst = c.worst;
            worst_at = format!("{name} {}", c.worst_at);
        }
        total += c.compared;
        parts.push(format!("{name} {:.1e}", c.worst));
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-3 && elapsed < Duration::from_secs(60),
        format!(
            "max rel err {worst:.2e} over {total} elements, all fusion heads ({}); worst at {worst_at}; {GATE_PARAM} excluded \
             (hard selection is piecewise constant, its gradient is the straight-through surrogate, see 7); {:.1}s",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------- 2 ----------

fn c2_attention() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cross_shapes = common::small_cross_shapes();
    let self_shapes = common::small_self_shapes();
    let cross = common::cross_attention_worst(&cross_shapes, 100, &mut rng);
    let slf = common::self_attention_worst(&self_shapes, 100, &mut rng);
    verdict(
        cross < 1e-5 && slf < 1e-5,
        format!(
            "cross max |err| {cross:.1e} over {} shapes, self {slf:.1e} over {} shapes, 100 draws each",
            cross_shapes.len(),
            self_shapes.len()
        ),
    )
}

// ---------- 3 ----------

fn c3_params() -> Verdict {
    let n_windows = Preprocess::default().n_windows().unwrap();
    let mut counts = Vec::new();
    let mut exact = true;
    for &(depth, cross, slf) in &ARCHITECTURE_GRID {
        let cfg = ModelConfig::new(EncoderConfig::with_blocks(depth, cross, slf), DEFAULT_FUSION, n_windows);
        let analytic: u64 = count_params(&cfg).unwrap().iter().map(|(_, v)| v).sum();
        let enumerated = RespModel::new(cfg, 0).unwrap().store.num_scalars() as u64;
        exact &= analytic == enumerated;
        counts.push(analytic);
    }
    let ascending = counts.windows(2).all(|w| w[0] < w[1]);
    let reference = REFERENCE_ARCHITECTURES[0].1 * 1e6;
    let dev = (counts[0] as f64 - reference) / reference;
    let listing: Vec<String> = counts.iter().map(|c| format!("{:.2}", *c as f64 / 1e6)).collect();
    verdict(
        exact && ascending && dev.abs() <= 0.15,
        format!(
            "analytic == enumerated: {exact}; counts {} M ascending: {ascending}; (1,1,0) {} vs 3.62M, deviation {:+.1}%",
            listing.join(" < "),
            counts[0],
            dev * 100.0
        ),
    )
}

// ---------- 4 ----------

fn c4_flops() -> Verdict {
    let rows = window_table(&EncoderConfig::default(), "add", 1150, 100.0).unwrap();
    let g: Vec<f64> = rows.iter().map(|r| r.report.flops_forward as f64 / 1e9).collect();
    let reference: Vec<f64> = rows.iter().map(|r| r.reference_flops_g).collect();
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|a, b| v[*b].total_cmp(&v[*a]));
        idx.iter().map(|i| i + 1).collect::<Vec<_>>()
    };
    let same_order = rank(&g) == rank(&reference);
    let t1_max = argmax(&g) == 0;
    let t5_min = g.iter().cloned().fold(f64::INFINITY, f64::min) == g[4];
    let listing: Vec<String> = g.iter().enumerate().map(|(i, v)| format!("T{}={v:.2}G", i + 1)).collect();
    verdict(
        same_order && t1_max && t5_min,
        format!(
            "{}; descending order {:?} (published {:?}) matches: {same_order}; T=1 maximal: {t1_max}; T=5 minimal: {t5_min}",
            listing.join(" "),
            rank(&g),
            rank(&reference)
        ),
    )
}

// ---------- 5 ----------

fn c5_windowing() -> Verdict {
    let x: Vec<f64> = (0..1000).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    let pre = Preprocess {
        filter: false,
        ..Preprocess::default()
    };
    let prepared = pre.prepare(&x).unwrap();
    let padded = pad_samples(&x, 1150).unwrap();
    let segmented = segment_samples(&padded, 500);
    let last = &prepared.windows[prepared.windows.len() - 1];
    let trailing = last.iter().rev().take_while(|v| **v == 0.0).count();
    let rebuilt: Vec<f64> = prepared.windows.concat()[..1150].to_vec();
    let ok = prepared.full.len() == 1150
        && prepared.full[..1000] == x[..]
        && prepared.full[1000..].iter().all(|v| *v == 0.0)
        && prepared.windows.len() == 3
        && prepared.windows.iter().all(|w| w.len() == 500)
        && last[350..].iter().all(|v| *v == 0.0)
        && rebuilt == prepared.full
        && segmented == prepared.windows
        && pre.n_windows().unwrap() == 3;
    verdict(
        ok,
        format!(
            "1000 -> {} samples, S={} windows of {}, last window ends in {trailing} zeros ({} past the padded signal), reconstruction exact: {}",
            prepared.full.len(),
            prepared.windows.len(),
            last.len(),
            3 * 500 - 1150,
            rebuilt == prepared.full
        ),
    )
}

// ---------- 6 ----------

fn c6_filter() -> Verdict {
    const FS: f64 = 100.0;
    const N: usize = 6000;
    let bp = BandPass::new(0.05, 0.5, FS).unwrap();
    let bin = |f: f64| (f * N as f64 / FS).round() as usize;
    let pass = common::sinusoid(0.25, FS, N);
    let pass_out = bp.filtfilt(&pass);
    let gain = common::bin_gain(&pass, &pass_out, bin(0.25));
    let stop = common::sinusoid(5.0, FS, N);
    let stop_db = 20.0 * common::bin_gain(&stop, &bp.filtfilt(&stop), bin(5.0)).log10();
    let drift: Vec<f64> = (0..N).map(|i| -1.0 + 2.0 * i as f64 / (N - 1) as f64).collect();
    let drift_db = common::energy_ratio_db(&drift, &bp.filtfilt(&drift));
    let lag = common::best_lag(&pass, &pass_out, 50);
    verdict(
        gain >= 0.9 && stop_db <= -20.0 && drift_db <= -20.0 && lag.abs() <= 1,
        format!(
            "0.25 Hz gain {gain:.4}; 5 Hz {stop_db:.1} dB; linear drift {drift_db:.1} dB; passband lag {lag} samples (60 s at 100 Hz, FFT)"
        ),
    )
}

// ---------- 7 ----------

fn library_frequencies(logits: &[f64; GATE_WIDTH], tau: f64, draws: usize, rng: &mut ChaCha8Rng) -> Option<[f64; GATE_WIDTH]> {
    let mut counts = [0usize; GATE_WIDTH];
    for _ in 0..draws {
        let tape = GradTape::new();
        let g = tape.leaf(Tensor::row(logits).unwrap());
        let d = gumbel_hard(g, tau, true, rng).unwrap();
        let w = d.weights.value().to_vec();
        let one_hot = w.iter().all(|v| *v == 0.0 || *v == 1.0) && w.iter().sum::<f64>() == 1.0 && w[d.index] == 1.0;
        if !one_hot {
            return None;
        }
        counts[d.index] += 1;
    }
    Some(counts.map(|c| c as f64 / draws as f64))
}

fn oracle_frequencies(logits: &[f64; GATE_WIDTH], tau: f64, draws: usize, rng: &mut ChaCha8Rng) -> [f64; GATE_WIDTH] {
    let gumbel = Gumbel::new(0.0, 1.0).unwrap();
    let mut counts = [0usize; GATE_WIDTH];
    for _ in 0..draws {
        let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
        for (i, g) in logits.iter().enumerate() {
            let v = (g + gumbel.sample(rng)) / tau;
            if v > best_v {
                (best, best_v) = (i, v);
            }
        }
        counts[best] += 1;
    }
    counts.map(|c| c as f64 / draws as f64)
}

fn c7_gate() -> Verdict {
    // inference: argmax(g), no randomness consumed
    let mut infer_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..1000 {
        let logits: [f64; GATE_WIDTH] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let mut probe = ChaCha8Rng::seed_from_u64(rng.random());
        let before = probe.clone();
        let tape = GradTape::new();
        let d = gumbel_hard(tape.leaf(Tensor::row(&logits).unwrap()), 1.0, false, &mut probe).unwrap();
        let gate = GateParams { logits, tau: 1.0 };
        infer_ok &= d.index == argmax(&logits)
            && gate.select(false, &mut probe) == d.index
            && probe == before
            && d.weights.value().to_vec() == GateParams::one_hot(d.index);
    }

    let settings: [([f64; GATE_WIDTH], f64); 2] = [([0.0; GATE_WIDTH], 1.0), ([0.5, -0.3, 1.2, 0.0], 0.7)];
    let mut one_hot = true;
    let mut worst: f64 = 0.0;
    let mut lib_rng = ChaCha8Rng::seed_from_u64(71);
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(72);
    for (logits, tau) in settings {
        match library_frequencies(&logits, tau, 10_000, &mut lib_rng) {
            Some(freq) => {
                let oracle = oracle_frequencies(&logits, tau, 1_000_000, &mut oracle_rng);
                for (a, b) in freq.iter().zip(oracle) {
                    worst = worst.max((a - b).abs());
                }
            }
            None => one_hot = false,
        }
    }
    let st = straight_through_error();
    verdict(
        infer_ok && one_hot && worst <= 0.02 && st < 1e-6,
        format!(
            "inference argmax and draw-free: {infer_ok}; training weights exactly one-hot: {one_hot}; \
             max |freq - oracle| {worst:.4} (10^4 draws vs 10^6-draw Gumbel-argmax oracle, 2 settings); \
             straight-through gradient vs finite differences of the soft relaxation max |err| {st:.1e}"
        ),
    )
}

/// The backward pass of the hard gate must equal the gradient of
/// `softmax((g + G) / tau) . c` for the same noise `G`.
fn straight_through_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let g: [f64; GATE_WIDTH] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let c: [f64; GATE_WIDTH] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let tau = rng.random_range(0.3..2.0);
        let mut draw = ChaCha8Rng::seed_from_u64(rng.random());
        let noise = gumbel_noise(&mut draw.clone(), GATE_WIDTH);
        let tape = GradTape::new();
        let logits = tape.param(&Tensor::row(&g).unwrap());
        let d = gumbel_hard(logits, tau, true, &mut draw).unwrap();
        let weighted = tape.mul(d.weights, tape.constant(Tensor::row(&c).unwrap())).unwrap();
        let analytic = tape.backward(tape.sum_all(weighted)).unwrap().wrt(logits).to_vec();
        let soft = |g: &[f64]| {
            let z: Vec<f64> = g.iter().zip(&noise).map(|(a, e)| (a + e) / tau).collect();
            softmax(&z).iter().zip(&c).map(|(p, w)| p * w).sum::<f64>()
        };
        for k in 0..GATE_WIDTH {
            let h = 1e-5;
            let (mut up, mut down) = (g.to_vec(), g.to_vec());
            up[k] += h;
            down[k] -= h;
            worst = worst.max((analytic[k] - (soft(&up) - soft(&down)) / (2.0 * h)).abs());
        }
    }
    worst
}

// ---------- 8 ----------

fn c8_augment() -> Verdict {
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let ones = vec![1.0; 1000];
    let mut fraction_ok = true;
    let mut anchors = [0usize; 3];
    for _ in 0..DRAWS {
        let y = mask_block(&ones, &mut rng).unwrap();
        let start = y.iter().position(|v| *v == 0.0).unwrap_or(0);
        let block = y.iter().filter(|v| **v == 0.0).count();
        fraction_ok &= (0.10..=0.30).contains(&(block as f64 / 1000.0))
            && y[start..start + block].iter().all(|v| *v == 0.0);
        let slot = if start == 0 {
            0
        } else if start + block == 1000 {
            2
        } else {
            1
        };
        anchors[slot] += 1;
    }
    let expected = DRAWS as f64 / 3.0;
    let sigma = (DRAWS as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
    let worst_z = anchors.iter().map(|c| (*c as f64 - expected).abs() / sigma).fold(0.0, f64::max);

    // unit power: alternating ±1
    let unit: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let noise_ratio = |x: &[f64], rng: &mut ChaCha8Rng| {
        let snr = sample_snr(rng, [1.0, 1000.0]);
        let y = add_noise_with_snr(x, snr, rng);
        let power = y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
        power * snr
    };
    let mean_ratio = (0..DRAWS).map(|_| noise_ratio(&unit, &mut rng)).sum::<f64>() / DRAWS as f64;
    let long: Vec<f64> = (0..100_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let worst_long = (0..100)
        .map(|_| (noise_ratio(&long, &mut rng) - 1.0).abs())
        .fold(0.0, f64::max);

    let mut identity = true;
    for _ in 0..DRAWS / 100 {
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-1e3..1e3)).collect();
        identity &= polarity_invert(&polarity_invert(&x)) == x;
    }
    verdict(
        fraction_ok && worst_z <= 3.0 && (mean_ratio - 1.0).abs() <= 0.05 && worst_long <= 0.05 && identity,
        format!(
            "mask fraction in [0.10, 0.30]: {fraction_ok}; anchors begin/center/end {anchors:?}, max |z| {worst_z:.2}; \
             noise power x SNR mean {mean_ratio:.4} over 10^5 draws, worst single 10^5-sample draw off by {:.2}%; \
             double inversion exact: {identity}",
            worst_long * 100.0
        ),
    )
}

// ---------- 9, 10 ----------

fn desk_config() -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        ..TrainConfig::default()
    }
}

struct DeskRuns {
    first: TrainOutcome,
    first_secs: f64,
    second_log: String,
}

fn desk_run() -> (TrainOutcome, f64) {
    let cfg = desk_config();
    let preprocess = Preprocess::default();
    let train_set = synth_dataset(30, 10.0, 100.0, 1);
    let val_set = synth_dataset(15, 10.0, 100.0, 2);
    let model_cfg = ModelConfig::new(EncoderConfig::desk_scale(), &cfg.fusion, preprocess.n_windows().unwrap());
    let mut model = RespModel::new(model_cfg, cfg.seed).unwrap();
    let start = Instant::now();
    let out = train(&mut model, &preprocess, &train_set, &val_set, &cfg, &mut |_, _| Ok(())).unwrap();
    (out, start.elapsed().as_secs_f64())
}

fn desk_runs() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (first, first_secs) = desk_run();
        let (second, _) = desk_run();
        DeskRuns {
            first,
            first_secs,
            second_log: second.metrics_log(),
        }
    })
}

fn c9_determinism() -> Verdict {
    let runs = desk_runs();
    let a = runs.first.metrics_log();
    let same = a.as_bytes() == runs.second_log.as_bytes();
    verdict(
        same,
        format!(
            "two full {}-epoch runs, seed {}: metrics logs byte-identical: {same} ({} bytes)",
            desk_config().epochs,
            desk_config().seed,
            a.len()
        ),
    )
}

fn c10_learning() -> Verdict {
    let runs = desk_runs();
    let last = runs.first.history.last().unwrap();
    let best = &runs.first.history[runs.first.best_epoch];
    let acc = last.val.macro_accuracy;
    verdict(
        acc >= 0.90 && runs.first_secs < 15.0 * 60.0,
        format!(
            "desk-scale (1,1,0), T=5, {DEFAULT_FUSION}, 30/15 per class, {} epochs: final val macro accuracy {acc:.3} \
             (best {:.3} at epoch {}); one run {:.0}s",
            runs.first.history.len(),
            best.val.macro_accuracy,
            runs.first.best_epoch,
            runs.first_secs
        ),
    )
}

// ---------- 11 ----------

fn c11_loss() -> Verdict {
    let mut worst: f64 = 0.0;
    for smoothing in [0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 0.99] {
        for level in [-40.0, -1.0, 0.0, 3.5, 250.0] {
            for target in 0..3 {
                let loss = smoothed_ce_loss(&[level; 3], target, smoothing).unwrap();
                worst = worst.max((loss - 3f64.ln()).abs());
                let tape = GradTape::new();
                let logits = tape.leaf(Tensor::row(&[level; 3]).unwrap());
                let on_tape = tape.smoothed_cross_entropy(logits, target, smoothing).unwrap();
                worst = worst.max((on_tape.value().item().unwrap() - 3f64.ln()).abs());
            }
        }
    }

    // piecewise linear through (-1, 0), (W-1, lr), (E-C, lr), (E, 0)
    let oracle = |e: usize, cfg: &TrainConfig| {
        let e = e as f64;
        let up = (e + 1.0) / cfg.warmup_epochs.max(1) as f64;
        let down = (cfg.epochs as f64 - e) / cfg.cooldown_epochs.max(1) as f64;
        cfg.lr * up.min(down).min(1.0)
    };
    let configs = [
        desk_config(),
        TrainConfig::default(),
        TrainConfig {
            epochs: 7,
            warmup_epochs: 3,
            cooldown_epochs: 4,
            ..TrainConfig::default()
        },
        TrainConfig {
            epochs: 5,
            warmup_epochs: 0,
            cooldown_epochs: 0,
            ..TrainConfig::default()
        },
    ];
    let mut schedule_err: f64 = 0.0;
    let mut epochs = 0;
    for cfg in &configs {
        for e in 0..cfg.epochs {
            schedule_err = schedule_err.max((lr_at_epoch(e, cfg).unwrap() - oracle(e, cfg)).abs() / cfg.lr);
            epochs += 1;
        }
    }
    verdict(
        worst <= 1e-6 && schedule_err <= 1e-12,
        format!(
            "uniform logits |loss - ln 3| max {worst:.1e} over 7 smoothings x 5 levels x 3 targets; \
             lr schedule max rel err {schedule_err:.1e} over {epochs} epochs in 4 configs"
        ),
    )
}
