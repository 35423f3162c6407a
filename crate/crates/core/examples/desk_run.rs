//! Desk-scale end-to-end run on synthetic data.
//!
//! Usage: `desk_run [epochs] [lr] [augment:0|1]`

use std::time::Instant;

use respenc::augment::AugmentConfig;
use respenc::encoder::EncoderConfig;
use respenc::model::{ModelConfig, Preprocess, RespModel};
use respenc::signal::synth_dataset;
use respenc::training::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map_or(200, |s| s.parse().expect("epochs"));
    let lr: f64 = args.get(2).map_or(1e-3, |s| s.parse().expect("lr"));
    let augment = args.get(3).is_none_or(|s| s == "1");

    let train_set = synth_dataset(30, 10.0, 100.0, 1);
    let val_set = synth_dataset(15, 10.0, 100.0, 2);
    let preprocess = Preprocess::default();
    let cfg = TrainConfig {
        epochs,
        lr,
        warmup_epochs: (epochs / 4).min(50),
        cooldown_epochs: (epochs / 20).min(10),
        augment: if augment { AugmentConfig::default() } else { AugmentConfig::disabled() },
        ..TrainConfig::default()
    };
    let model_cfg = ModelConfig::new(EncoderConfig::desk_scale(), &cfg.fusion, preprocess.n_windows().unwrap());
    let mut model = RespModel::new(model_cfg, cfg.seed).unwrap();
    let start = Instant::now();
    let out = train(&mut model, &preprocess, &train_set, &val_set, &cfg, &mut |r, _| {
        println!("{}", r.tsv_line());
        Ok(())
    })
    .unwrap();
    println!(
        "best epoch {} ({:.3}); {:.1}s",
        out.best_epoch,
        out.history[out.best_epoch].val.macro_accuracy,
        start.elapsed().as_secs_f64()
    );
}
