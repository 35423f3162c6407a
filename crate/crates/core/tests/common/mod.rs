//! Independent oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use respenc::encoder::{CrossAttention, LayerNorm, Linear, SelfAttention};
use respenc::numerics::{GradTape, Tensor, LAYER_NORM_EPS};
use respenc::params::{Forward, ParamStore};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

// ---------- attention ----------

type Matrix = Vec<Vec<f64>>;

fn rows_of(t: &Tensor) -> Matrix {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn ln_rows(x: &Matrix, store: &ParamStore, ln: &LayerNorm) -> Matrix {
    let g = store.get(ln.gain).data();
    let b = store.get(ln.bias).data();
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + LAYER_NORM_EPS).sqrt() * g[j] + b[j])
                .collect()
        })
        .collect()
}

fn linear_rows(x: &Matrix, store: &ParamStore, lin: &Linear) -> Matrix {
    let w = store.get(lin.weight);
    let b = store.get(lin.bias).data();
    x.iter()
        .map(|row| {
            (0..lin.out_dim)
                .map(|o| {
                    let mut acc = b[o];
                    for (i, v) in row.iter().enumerate() {
                        acc += v * w.get(i, o);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Per-element single-head attention followed by the output projection.
fn attend(q: &Matrix, k: &Matrix, v: &Matrix, dim: usize) -> Matrix {
    q.iter()
        .map(|qi| {
            let scores: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / (dim as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..dim)
                .map(|c| e.iter().zip(v).map(|(a, vj)| a / z * vj[c]).sum())
                .collect()
        })
        .collect()
}

pub fn cross_attention_oracle(ca: &CrossAttention, store: &ParamStore, latents: &Tensor, tokens: &Tensor) -> Matrix {
    let lat = rows_of(latents);
    let qn = ln_rows(&lat, store, &ca.norm_latents);
    let kn = ln_rows(&rows_of(tokens), store, &ca.norm_tokens);
    let q = linear_rows(&qn, store, &ca.proj.query);
    let k = linear_rows(&kn, store, &ca.proj.key);
    let v = linear_rows(&kn, store, &ca.proj.value);
    let mixed = attend(&q, &k, &v, ca.proj.query.out_dim);
    let out = linear_rows(&mixed, store, &ca.proj.output);
    residual(&lat, &out)
}

pub fn self_attention_oracle(sa: &SelfAttention, store: &ParamStore, latents: &Tensor) -> Matrix {
    let lat = rows_of(latents);
    let xn = ln_rows(&lat, store, &sa.norm);
    let q = linear_rows(&xn, store, &sa.proj.query);
    let k = linear_rows(&xn, store, &sa.proj.key);
    let v = linear_rows(&xn, store, &sa.proj.value);
    let mixed = attend(&q, &k, &v, sa.proj.query.out_dim);
    let out = linear_rows(&mixed, store, &sa.proj.output);
    residual(&lat, &out)
}

fn residual(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn random_tensor(rng: &mut dyn RngCore, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Replaces every parameter, layer-norm gains and biases included, with a fresh draw.
pub fn randomize(store: &mut ParamStore, rng: &mut dyn RngCore) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        store.set(id, random_tensor(rng, &shape)).unwrap();
    }
}

fn max_diff(got: &Tensor, want: &Matrix) -> f64 {
    want.iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, v)| (got.get(r, c) - v).abs()))
        .fold(0.0, f64::max)
}

/// Worst absolute deviation of the library cross-attention from the oracle
/// over `draws` parameter draws at each `(n_latents, tokens, token_dim, dim)`.
pub fn cross_attention_worst(shapes: &[(usize, usize, usize, usize)], draws: usize, rng: &mut dyn RngCore) -> f64 {
    let mut worst: f64 = 0.0;
    for &(n, t, k, d) in shapes {
        let mut store = ParamStore::new();
        let ca = CrossAttention::new(&mut store, "ca", k, d, 0.0, rng);
        for _ in 0..draws {
            randomize(&mut store, rng);
            let latents = random_tensor(rng, &[n, d]);
            let tokens = random_tensor(rng, &[t, k]);
            let tape = GradTape::new();
            let bound = store.bind(&tape);
            let mut idle = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let mut f = Forward {
                tape: &tape,
                params: &bound,
                training: false,
                rng: &mut idle,
            };
            let lat = tape.constant(latents.clone());
            let tok = tape.constant(tokens.clone());
            let out = ca.forward(&mut f, lat, tok).unwrap().value();
            worst = worst.max(max_diff(&out, &cross_attention_oracle(&ca, &store, &latents, &tokens)));
        }
    }
    worst
}

pub fn self_attention_worst(shapes: &[(usize, usize)], draws: usize, rng: &mut dyn RngCore) -> f64 {
    let mut worst: f64 = 0.0;
    for &(n, d) in shapes {
        let mut store = ParamStore::new();
        let sa = SelfAttention::new(&mut store, "sa", d, 0.0, rng);
        for _ in 0..draws {
            randomize(&mut store, rng);
            let latents = random_tensor(rng, &[n, d]);
            let tape = GradTape::new();
            let bound = store.bind(&tape);
            let mut idle = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let mut f = Forward {
                tape: &tape,
                params: &bound,
                training: false,
                rng: &mut idle,
            };
            let lat = tape.constant(latents.clone());
            let out = sa.forward(&mut f, lat).unwrap().value();
            worst = worst.max(max_diff(&out, &self_attention_oracle(&sa, &store, &latents)));
        }
    }
    worst
}

/// Every shape with at most 3 latents, 4 tokens and width 4.
pub fn small_cross_shapes() -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for n in 1..=3 {
        for t in 1..=4 {
            for k in 1..=4 {
                for d in 1..=4 {
                    out.push((n, t, k, d));
                }
            }
        }
    }
    out
}

pub fn small_self_shapes() -> Vec<(usize, usize)> {
    (1..=3).flat_map(|n| (1..=4).map(move |d| (n, d))).collect()
}

// ---------- spectra ----------

pub fn spectrum(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Output/input magnitude ratio at FFT bin `bin`.
pub fn bin_gain(input: &[f64], output: &[f64], bin: usize) -> f64 {
    spectrum(output)[bin].norm() / spectrum(input)[bin].norm()
}

/// Output/input spectral energy ratio in dB.
pub fn energy_ratio_db(input: &[f64], output: &[f64]) -> f64 {
    let e = |x: &[f64]| spectrum(x).iter().map(|c| c.norm_sqr()).sum::<f64>();
    10.0 * (e(output) / e(input)).log10()
}

pub fn sinusoid(freq_hz: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * freq_hz * i as f64 / fs).sin()).collect()
}

/// Lag (in samples) maximising the cross-correlation of `b` against `a`.
pub fn best_lag(a: &[f64], b: &[f64], max_lag: i64) -> i64 {
    let n = a.len() as i64;
    let score = |lag: i64| {
        (0..n)
            .filter_map(|i| {
                let j = i + lag;
                (0..n).contains(&j).then(|| a[i as usize] * b[j as usize])
            })
            .sum::<f64>()
    };
    (-max_lag..=max_lag)
        .max_by(|x, y| score(*x).total_cmp(&score(*y)))
        .unwrap()
}
