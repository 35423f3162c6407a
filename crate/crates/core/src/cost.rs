//! Closed-form parameter and FLOP counts.
//!
//! FLOP convention for one forward pass in inference mode:
//!
//! | operation                         | FLOPs                    |
//! |-----------------------------------|--------------------------|
//! | `m×k` by `k×n` matrix product     | `2·m·k·n`                |
//! | bias add, residual add, scaling,  | 1 per element            |
//! | element-wise product, pooling     |                          |
//! | softmax                           | 5 per element            |
//! | layer norm                        | 8 per element            |
//! | GELU                              | 8 per element            |
//!
//! Fourier feature construction and filtering are preprocessing and are
//! not counted. Dropout is inactive at inference.

use serde::Serialize;
use thiserror::Error;

use crate::encoder::{token_dim, EncoderConfig, ARCHITECTURE_GRID};
use crate::fusion::{FusionError, FusionRegistry};
use crate::model::ModelConfig;
use crate::signal::window_count;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

pub const SOFTMAX_FLOPS: u64 = 5;
pub const NORM_FLOPS: u64 = 8;
pub const GELU_FLOPS: u64 = 8;

/// `2·m·k·n`: one multiply and one add per multiply-accumulate.
pub fn matmul_flops(m: usize, k: usize, n: usize) -> u64 {
    2 * (m * k * n) as u64
}

fn linear_flops(rows: usize, in_dim: usize, out_dim: usize) -> u64 {
    matmul_flops(rows, in_dim, out_dim) + (rows * out_dim) as u64
}

/// Parameter and FLOP breakdown of a full pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub config: EncoderConfig,
    pub fusion: String,
    pub params_total: u64,
    pub params_by_component: Vec<(String, u64)>,
    pub input_length: usize,
    pub window_length: usize,
    pub n_windows: usize,
    /// One encoder pass over a single window.
    pub flops_per_window: u64,
    /// All window passes together.
    pub flops_windows: u64,
    /// Encoder pass over the whole padded input; zero if the head ignores it.
    pub flops_full: u64,
    pub flops_head: u64,
    pub flops_forward: u64,
}

fn check(cfg: &EncoderConfig) -> Result<(), CostError> {
    cfg.validate().map_err(|e| CostError::InvalidConfig(e.to_string()))
}

/// Learnable scalars per encoder component, in construction order.
pub fn encoder_params(cfg: &EncoderConfig) -> Result<Vec<(String, u64)>, CostError> {
    check(cfg)?;
    let d = cfg.model_dim as u64;
    let t = token_dim(cfg.fourier_bands) as u64;
    let h = (cfg.ffn_expansion * cfg.model_dim) as u64;
    let n = cfg.n_latents as u64;
    let crosses = (cfg.depth * cfg.cross_per_block) as u64;
    let selfs = crosses * cfg.self_per_block as u64;
    let ffns = crosses + selfs;

    // two norms, Q and O on d, K and V from the token width
    let cross = 2 * d + 2 * t + 2 * (d * d + d) + 2 * (t * d + d);
    // one norm and four d×d projections
    let self_attn = 2 * d + 4 * (d * d + d);
    // norm, up and gate d→h, down h→d
    let ffn = 2 * d + 2 * (d * h + h) + (h * d + d);
    let projection = d * cfg.out_dim as u64 + cfg.out_dim as u64;

    Ok(vec![
        ("latents".to_string(), n * d),
        ("cross_attention".to_string(), crosses * cross),
        ("self_attention".to_string(), selfs * self_attn),
        ("feed_forward".to_string(), ffns * ffn),
        ("projection".to_string(), projection),
    ])
}

/// Analytic parameter count of encoder plus fusion head.
pub fn count_params(model: &ModelConfig) -> Result<Vec<(String, u64)>, CostError> {
    let mut parts = encoder_params(&model.encoder)?;
    let head = FusionRegistry::builtin().cost(&model.fusion, model.fusion_dims())?;
    parts.push(("fusion_head".to_string(), head.params as u64));
    Ok(parts)
}

/// FLOPs of one encoder pass over `len` samples.
pub fn encoder_flops(cfg: &EncoderConfig, len: usize) -> Result<u64, CostError> {
    check(cfg)?;
    if len == 0 {
        return Err(CostError::InvalidSize("input length must be at least 1".into()));
    }
    let (n, d, t, l) = (cfg.n_latents, cfg.model_dim, token_dim(cfg.fourier_bands), len);
    let h = cfg.ffn_expansion * d;
    let nd = (n * d) as u64;

    let cross = NORM_FLOPS * nd
        + NORM_FLOPS * (l * t) as u64
        + linear_flops(n, d, d)
        + 2 * linear_flops(l, t, d)
        + matmul_flops(n, d, l)
        + (n * l) as u64
        + SOFTMAX_FLOPS * (n * l) as u64
        + matmul_flops(n, l, d)
        + linear_flops(n, d, d)
        + nd;
    let self_attn = NORM_FLOPS * nd
        + 4 * linear_flops(n, d, d)
        + matmul_flops(n, d, n)
        + (n * n) as u64
        + SOFTMAX_FLOPS * (n * n) as u64
        + matmul_flops(n, n, d)
        + nd;
    let ffn = NORM_FLOPS * nd
        + 2 * linear_flops(n, d, h)
        + GELU_FLOPS * (n * h) as u64
        + (n * h) as u64
        + linear_flops(n, h, d)
        + nd;
    let pool = nd;
    let projection = linear_flops(1, d, cfg.out_dim);

    let crosses = (cfg.depth * cfg.cross_per_block) as u64;
    let selfs = crosses * cfg.self_per_block as u64;
    Ok(crosses * cross + selfs * self_attn + (crosses + selfs) * ffn + pool + projection)
}

/// Full cost of classifying one `input_length`-sample input cut into
/// windows of `window_length` samples.
pub fn cost_report(model: &ModelConfig, input_length: usize, window_length: usize) -> Result<CostReport, CostError> {
    if input_length == 0 || window_length == 0 {
        return Err(CostError::InvalidSize("input and window length must be at least 1".into()));
    }
    let n_windows = window_count(input_length, window_length);
    if n_windows != model.n_windows {
        return Err(CostError::InvalidSize(format!(
            "{input_length} samples in windows of {window_length} give {n_windows} windows, model expects {}",
            model.n_windows
        )));
    }
    let registry = FusionRegistry::builtin();
    let head = registry.cost(&model.fusion, model.fusion_dims())?;
    let uses_full = registry.uses_full_signal(&model.fusion)?;

    let params_by_component = count_params(model)?;
    let params_total = params_by_component.iter().map(|(_, v)| v).sum();
    let flops_per_window = encoder_flops(&model.encoder, window_length)?;
    let flops_windows = n_windows as u64 * flops_per_window;
    let flops_full = if uses_full {
        encoder_flops(&model.encoder, input_length)?
    } else {
        0
    };
    Ok(CostReport {
        config: model.encoder.clone(),
        fusion: model.fusion.clone(),
        params_total,
        params_by_component,
        input_length,
        window_length,
        n_windows,
        flops_per_window,
        flops_windows,
        flops_full,
        flops_head: head.flops,
        flops_forward: flops_windows + flops_full + head.flops,
    })
}

/// Published parameter (M) and FLOP (G) figures per `(depth, cross, self)`.
pub const REFERENCE_ARCHITECTURES: [((usize, usize, usize), f64, f64); 6] = [
    ((1, 1, 0), 3.62, 1.65),
    ((2, 1, 0), 6.84, 3.30),
    ((1, 1, 1), 7.82, 3.80),
    ((1, 1, 2), 12.02, 5.94),
    ((2, 1, 1), 15.24, 7.60),
    ((2, 1, 2), 23.64, 11.88),
];

/// Published pipeline FLOPs (G) per window size in seconds.
pub const REFERENCE_WINDOW_FLOPS: [(usize, f64); 5] = [(1, 19.74), (2, 9.87), (3, 6.58), (4, 4.93), (5, 4.94)];

/// One row of the architecture table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchitectureRow {
    pub blocks: (usize, usize, usize),
    pub params: u64,
    /// One encoder pass over one window.
    pub flops_encoder: u64,
    pub reference_params_m: f64,
    pub reference_flops_g: f64,
}

impl ArchitectureRow {
    /// Signed deviation of the parameter count from the published figure.
    pub fn params_deviation(&self) -> f64 {
        self.params as f64 / (self.reference_params_m * 1e6) - 1.0
    }

    pub fn flops_deviation(&self) -> f64 {
        self.flops_encoder as f64 / (self.reference_flops_g * 1e9) - 1.0
    }
}

/// Cost of the six block configurations at the given widths.
pub fn architecture_table(base: &EncoderConfig, fusion: &str, window_length: usize) -> Result<Vec<ArchitectureRow>, CostError> {
    ARCHITECTURE_GRID
        .iter()
        .zip(REFERENCE_ARCHITECTURES)
        .map(|(&(depth, cross, slf), (_, pp, pf))| {
            let enc = EncoderConfig {
                depth,
                cross_per_block: cross,
                self_per_block: slf,
                ..base.clone()
            };
            let model = ModelConfig::new(enc.clone(), fusion, 1);
            let params = count_params(&model)?.iter().map(|(_, v)| v).sum();
            Ok(ArchitectureRow {
                blocks: (depth, cross, slf),
                params,
                flops_encoder: encoder_flops(&enc, window_length)?,
                reference_params_m: pp,
                reference_flops_g: pf,
            })
        })
        .collect()
}

/// One row of the window-size table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRow {
    pub window_seconds: usize,
    pub report: CostReport,
    pub reference_flops_g: f64,
}

/// Pipeline cost for window sizes of 1 to 5 seconds.
pub fn window_table(
    encoder: &EncoderConfig,
    fusion: &str,
    input_length: usize,
    sample_rate_hz: f64,
) -> Result<Vec<WindowRow>, CostError> {
    REFERENCE_WINDOW_FLOPS
        .iter()
        .map(|&(t, reference)| {
            let window_length = (t as f64 * sample_rate_hz).round() as usize;
            let model = ModelConfig::new(encoder.clone(), fusion, window_count(input_length, window_length));
            Ok(WindowRow {
                window_seconds: t,
                report: cost_report(&model, input_length, window_length)?,
                reference_flops_g: reference,
            })
        })
        .collect()
}

/// Aligned text table of the block configurations.
pub fn render_architectures(arch: &[ArchitectureRow], window_length: usize) -> String {
    let mut s = format!("Module configurations (FLOPS: one encoder pass over {window_length} samples)\n");
    s.push_str(&format!(
        "{:>5} {:>5} {:>4} {:>11} {:>10} {:>9} {:>10} {:>10} {:>9}\n",
        "Depth", "Cross", "Self", "Params (M)", "Ref (M)", "Dev", "FLOPS (G)", "Ref (G)", "Dev"
    ));
    for r in arch {
        let (depth, cross, slf) = r.blocks;
        let slf = if slf == 0 { "--".to_string() } else { slf.to_string() };
        s.push_str(&format!(
            "{:>5} {:>5} {:>4} {:>11.2} {:>10.2} {:>+8.1}% {:>10.2} {:>10.2} {:>+8.1}%\n",
            depth,
            cross,
            slf,
            r.params as f64 / 1e6,
            r.reference_params_m,
            100.0 * r.params_deviation(),
            r.flops_encoder as f64 / 1e9,
            r.reference_flops_g,
            100.0 * r.flops_deviation(),
        ));
    }
    s
}

/// Aligned text table of pipeline cost per window size.
pub fn render_windows(windows: &[WindowRow]) -> String {
    let fusion = windows.first().map_or("", |w| w.report.fusion.as_str());
    let input = windows.first().map_or(0, |w| w.report.input_length);
    let mut s = format!("Window sizes ({input}-sample input, fusion {fusion})\n");
    s.push_str(&format!(
        "{:>3} {:>7} {:>4} {:>12} {:>10} {:>9} {:>10} {:>10}\n",
        "T", "Samples", "S", "Windows (G)", "Full (G)", "Head", "Total (G)", "Ref (G)"
    ));
    for w in windows {
        let r = &w.report;
        s.push_str(&format!(
            "{:>3} {:>7} {:>4} {:>12.3} {:>10.3} {:>9} {:>10.3} {:>10.2}\n",
            w.window_seconds,
            r.window_length,
            r.n_windows,
            r.flops_windows as f64 / 1e9,
            r.flops_full as f64 / 1e9,
            r.flops_head,
            r.flops_forward as f64 / 1e9,
            w.reference_flops_g,
        ));
    }
    s
}

/// Parameter breakdown of one pipeline.
pub fn render_components(report: &CostReport) -> String {
    let mut s = format!("Parameters by component (fusion {})\n", report.fusion);
    for (name, count) in &report.params_by_component {
        s.push_str(&format!("{name:>16} {count:>12}\n"));
    }
    s.push_str(&format!("{:>16} {:>12}\n", "total", report.params_total));
    s
}
