use keyactor::features::{synth_dataset, Clip, SynthConfig};
use keyactor::model::{init_params, Mode, ModelConfig};
use keyactor::training::{batch_gradient, train, TrainConfig};

fn clean_clips(n: usize, seed: u64) -> Vec<Clip> {
    synth_dataset(&SynthConfig {
        num_classes: 5,
        num_clips: n,
        players_min: 6,
        players_max: 6,
        d_app: 16,
        d_frame: 16,
        spatial_levels: vec![4, 2],
        noise_sigma: 0.0,
        jitter: 0.0,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .clips
}

fn model() -> ModelConfig {
    ModelConfig {
        d_frame: 16,
        d_app: 16,
        spatial_levels: vec![4, 2],
        hidden_dim: 32,
        embed_dim: 32,
        attn_dim: 16,
        num_classes: 5,
        mode: Mode::AttnNoTrack,
        ..ModelConfig::default()
    }
}

fn mean_loss(clips: &[Clip], params: &keyactor::math::ParamSet, cfg: &ModelConfig) -> f64 {
    let refs: Vec<&Clip> = clips.iter().collect();
    batch_gradient(&refs, params, cfg).unwrap().0
}

#[test]
fn loss_falls_by_ninety_percent_on_clean_data() {
    let clips = clean_clips(50, 5);
    let cfg = model();
    let train_cfg = TrainConfig {
        max_steps: 500,
        eval_every: 500,
        seed: 3,
        ..TrainConfig::default()
    };
    let before = mean_loss(&clips, &init_params(&cfg, train_cfg.seed).unwrap(), &cfg);
    let out = train(&clips, &clips, &cfg, &train_cfg).unwrap();
    assert_eq!(out.best.step, 500);
    let after = mean_loss(&clips, &out.best.params, &cfg);
    assert!(after <= 0.1 * before, "loss {before} -> {after}");
}

#[test]
fn same_seed_same_checkpoint() {
    let clips = clean_clips(12, 9);
    let cfg = ModelConfig {
        hidden_dim: 6,
        embed_dim: 6,
        attn_dim: 4,
        ..model()
    };
    let train_cfg = TrainConfig {
        max_steps: 15,
        batch_size: 4,
        eval_every: 5,
        seed: 11,
        ..TrainConfig::default()
    };
    let a = train(&clips, &clips, &cfg, &train_cfg).unwrap();
    let b = train(
        &clips,
        &clips,
        &cfg,
        &TrainConfig {
            workers: 2,
            ..train_cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(a.best.params, b.best.params);
    assert_eq!(a.best.history, b.best.history);
    assert_eq!(a.losses, b.losses);
    let c = train(&clips, &clips, &cfg, &TrainConfig { seed: 12, ..train_cfg }).unwrap();
    assert_ne!(a.losses, c.losses);
}
