//! Command line front end.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    class_name, classify_eval, detect_eval, heatmap, homography_dlt, score_clips, shooter_eval, sliding_detect,
    windowed_training_set, EvalReport, Homography,
};
use crate::features::{read_dataset, synth_dataset, synth_timeline, write_dataset, Dataset, Label, SynthConfig};
use crate::model::{Mode, ModelConfig};
use crate::tracker::{gt_agreement, link_tracks};
use crate::training::{load_checkpoint, save_checkpoint, train, worker_pool, Checkpoint, EvalPoint};

pub use config::{EvalParams, RunConfig, SplitConfig};

#[derive(Debug, Parser)]
#[command(name = "keyactor", version, about = "Attention-based multi-person event recognition")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test splits of planted-key-player clips.
    Synth,
    /// Link detections into tracks.
    Track {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train a model and save the best checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Also score this split with the selected checkpoint.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Train every mode and write a comparison table.
        #[arg(long)]
        ablation: bool,
    },
    /// Clip classification mAP.
    EvalClassify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Sliding-window detection on synthetic untrimmed sequences.
    Detect {
        /// Skip training and use this background-aware checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Key-player mAP of the attention weights.
    EvalAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Court heatmaps of the most attended player.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// JSON object mapping clip ids to `{"image": [[x, y], ...], "court": [[x, y], ...]}`.
        /// Clips without an entry use the identity court landmarks.
        #[arg(long)]
        landmarks: Option<PathBuf>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Config file plus flag overrides.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.train.workers = w;
    }
    if let Some(mode) = common.mode {
        cfg.model.mode = mode;
    }
    cfg.validate()?;
    log::info!("resolved configuration:\n{}", cfg.to_toml());
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<PathBuf> {
    let cfg = resolve_config(&cli.common)?;
    let out = cli.common.out.clone();
    let pool = worker_pool(cfg.train.workers)?;
    pool.install(|| match &cli.command {
        Command::Synth => cmd_synth(&cfg, &required(out, "synth")?),
        Command::Track { input } => cmd_track(&cfg, input, &required(out, "track")?),
        Command::Train {
            train,
            val,
            test,
            ablation,
        } => {
            let out = required(out, "train")?;
            if *ablation {
                cmd_ablation(&cfg, train, val, test.as_deref(), &out)
            } else {
                cmd_train(&cfg, train, val, test.as_deref(), &out)
            }
        }
        Command::EvalClassify { checkpoint, data } => {
            cmd_eval_classify(&cfg, checkpoint, data, &required(out, "eval-classify")?)
        }
        Command::Detect { checkpoint } => cmd_detect(&cfg, checkpoint.as_deref(), &required(out, "detect")?),
        Command::EvalAttention { checkpoint, data } => {
            cmd_eval_attention(&cfg, checkpoint, data, &required(out, "eval-attention")?)
        }
        Command::Heatmap {
            checkpoint,
            data,
            landmarks,
        } => cmd_heatmap(&cfg, checkpoint, data, landmarks.as_deref(), &required(out, "heatmap")?),
    })
}

fn required(out: Option<PathBuf>, command: &str) -> Result<PathBuf> {
    out.ok_or_else(|| Error::Config(format!("{command} needs --out")))
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Seeds of the three splits; distinct for every base seed.
pub fn split_seeds(base: u64) -> [u64; 3] {
    let b = base.wrapping_mul(3);
    [b, b.wrapping_add(1), b.wrapping_add(2)]
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let counts = cfg.split.counts(cfg.synth.num_clips)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let seeds = split_seeds(cfg.synth.seed);
    for ((name, n), seed) in ["train", "val", "test"].iter().zip(counts).zip(seeds) {
        let synth = SynthConfig {
            num_clips: n,
            seed,
            ..cfg.synth.clone()
        };
        let data = synth_dataset(&synth)?;
        let mut hist = vec![0usize; synth.num_classes];
        for c in &data.clips {
            if let Some(k) = c.label.event() {
                hist[k] += 1;
            }
        }
        eprintln!("{name}: {n} clips, class histogram {hist:?}");
        write_dataset(&data, out.join(format!("{name}.jsonl")))?;
    }
    Ok(out.to_path_buf())
}

pub fn cmd_track(cfg: &RunConfig, input: &Path, out: &Path) -> Result<PathBuf> {
    let mut data = read_dataset(input)?;
    let mut tracks = 0;
    let mut agreement = Vec::new();
    for clip in &mut data.clips {
        tracks += link_tracks(clip, &cfg.tracker).len();
        if let Some(a) = gt_agreement(clip) {
            agreement.push(a);
        }
    }
    eprintln!("{} clips, {tracks} tracks", data.clips.len());
    if agreement.is_empty() {
        eprintln!("gt-agreement: n/a");
    } else {
        eprintln!(
            "gt-agreement: {:.4}",
            agreement.iter().sum::<f64>() / agreement.len() as f64
        );
    }
    write_dataset(&data, out)?;
    Ok(out.to_path_buf())
}

fn load_split(path: &Path, model: &ModelConfig) -> Result<Dataset> {
    let data = read_dataset(path)?;
    model.check_header(&data.header)?;
    Ok(data)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub steps_run: u64,
    pub best_step: u64,
    pub best_val_map: f64,
    pub test_map: Option<f64>,
    pub history: Vec<EvalPoint>,
    pub checkpoint: PathBuf,
    pub config: serde_json::Value,
}

fn train_one(
    cfg: &RunConfig,
    model: &ModelConfig,
    train_path: &Path,
    val_path: &Path,
    test: Option<&Path>,
    out: &Path,
) -> Result<TrainReport> {
    let train_set = load_split(train_path, model)?;
    let val = load_split(val_path, model)?;
    let outcome = train(&train_set.clips, &val.clips, model, &cfg.train)?;
    let ckpt_dir = out.join("checkpoint");
    save_checkpoint(&outcome.best, &ckpt_dir)?;
    let best_val_map = outcome
        .best
        .history
        .iter()
        .find(|p| p.step == outcome.best.step)
        .map_or(f64::NAN, |p| p.val_map);
    let test_map = match test {
        Some(path) => {
            let data = load_split(path, model)?;
            Some(classify_eval(&outcome.best.params, model, &data.clips)?.map)
        }
        None => None,
    };
    let mut resolved = cfg.clone();
    resolved.model = model.clone();
    Ok(TrainReport {
        mode: model.mode,
        steps_run: outcome.steps_run,
        best_step: outcome.best.step,
        best_val_map,
        test_map,
        history: outcome.best.history,
        checkpoint: ckpt_dir,
        config: config_json(&resolved),
    })
}

pub fn cmd_train(cfg: &RunConfig, train_path: &Path, val: &Path, test: Option<&Path>, out: &Path) -> Result<PathBuf> {
    let report = train_one(cfg, &cfg.model, train_path, val, test, out)?;
    let path = out.join("train_report.json");
    write_json(&report, &path)?;
    Ok(path)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub best_val_map: f64,
    pub test_map: Option<f64>,
    pub best_step: u64,
}

/// Trains every mode on the same splits. Splits without track ids are linked first.
pub fn cmd_ablation(
    cfg: &RunConfig,
    train_path: &Path,
    val: &Path,
    test: Option<&Path>,
    out: &Path,
) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let tracked_dir = out.join("tracked");
    let tracked = |path: &Path, name: &str| -> Result<PathBuf> {
        let data = read_dataset(path)?;
        if data.clips.iter().all(|c| c.is_tracked()) {
            return Ok(path.to_path_buf());
        }
        fs::create_dir_all(&tracked_dir).map_err(|e| Error::io(&tracked_dir, e))?;
        let dest = tracked_dir.join(format!("{name}.jsonl"));
        cmd_track(cfg, path, &dest)
    };
    let train_t = tracked(train_path, "train")?;
    let val_t = tracked(val, "val")?;
    let test_t = test.map(|p| tracked(p, "test")).transpose()?;

    let mut rows = Vec::new();
    for mode in Mode::ALL {
        let model = ModelConfig {
            mode,
            ..cfg.model.clone()
        };
        let dir = out.join(mode.as_str());
        let report = train_one(cfg, &model, &train_t, &val_t, test_t.as_deref(), &dir)?;
        write_json(&report, &dir.join("train_report.json"))?;
        rows.push(AblationRow {
            mode,
            best_val_map: report.best_val_map,
            test_map: report.test_map,
            best_step: report.best_step,
        });
    }
    eprintln!("{:<14} {:>8} {:>8}", "mode", "val mAP", "test mAP");
    for r in &rows {
        let test = r.test_map.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!("{:<14} {:>8.4} {:>8}", r.mode.as_str(), r.best_val_map, test);
    }
    let path = out.join("ablation.json");
    write_json(&serde_json::json!({ "rows": rows, "config": config_json(cfg) }), &path)?;
    Ok(path)
}

fn load_model(checkpoint: &Path) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(checkpoint)?;
    log::info!(
        "loaded {} (step {}, mode {})",
        checkpoint.display(),
        ckpt.step,
        ckpt.model.mode
    );
    Ok(ckpt)
}

pub fn cmd_eval_classify(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<PathBuf> {
    let ckpt = load_model(checkpoint)?;
    let data = load_split(data, &ckpt.model)?;
    let ap = classify_eval(&ckpt.params, &ckpt.model, &data.clips)?;
    let mut report = EvalReport::from_class_ap(&ap);
    report.config = config_json(cfg);
    write_json(&report, out)?;
    Ok(out.to_path_buf())
}

pub fn cmd_eval_attention(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<PathBuf> {
    let ckpt = load_model(checkpoint)?;
    if !ckpt.model.mode.attends() {
        return Err(Error::Config(format!("mode {} has no attention", ckpt.model.mode)));
    }
    let data = load_split(data, &ckpt.model)?;
    let outputs = score_clips(&ckpt.params, &ckpt.model, &data.clips)?;
    let attention: Vec<_> = outputs.into_iter().map(|o| o.attention).collect();
    let r = shooter_eval(&attention, &data.clips, ckpt.model.event_classes())?;
    let report = EvalReport {
        per_class: r
            .per_class
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (class_name(k), v)))
            .collect(),
        map: r.map,
        skipped: (0..r.per_class.len())
            .filter(|&k| r.per_class[k].is_none())
            .map(class_name)
            .collect(),
        extra: BTreeMap::from([
            ("chance_map".to_string(), r.chance_map),
            ("frames".to_string(), r.frames as f64),
        ]),
        config: config_json(cfg),
    };
    write_json(&report, out)?;
    Ok(out.to_path_buf())
}

/// Five landmarks of the canonical court.
pub const COURT_LANDMARKS: [[f64; 2]; 5] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Landmarks {
    image: Vec<[f64; 2]>,
    court: Vec<[f64; 2]>,
}

pub fn cmd_heatmap(
    cfg: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    landmarks: Option<&Path>,
    out: &Path,
) -> Result<PathBuf> {
    let ckpt = load_model(checkpoint)?;
    if !ckpt.model.mode.attends() {
        return Err(Error::Config(format!("mode {} has no attention", ckpt.model.mode)));
    }
    let data = load_split(data, &ckpt.model)?;
    let table: BTreeMap<String, Landmarks> = match landmarks {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => BTreeMap::new(),
    };
    let (identity, _) = homography_dlt(&COURT_LANDMARKS, &COURT_LANDMARKS)?;
    let mut homographies = Vec::with_capacity(data.clips.len());
    for clip in &data.clips {
        let h: Homography = match table.get(&clip.clip_id) {
            Some(l) => {
                let (h, rms) = homography_dlt(&l.image, &l.court)?;
                log::info!("clip {}: court reprojection RMS {rms:.3e}", clip.clip_id);
                h
            }
            None => identity,
        };
        homographies.push(h);
    }
    let outputs = score_clips(&ckpt.params, &ckpt.model, &data.clips)?;
    let attention: Vec<_> = outputs.into_iter().map(|o| o.attention).collect();
    let map = heatmap(
        &attention,
        &data.clips,
        &homographies,
        ckpt.model.event_classes(),
        cfg.eval.heatmap_grid,
        cfg.eval.heatmap_phases,
    )?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(out).map_err(|e| Error::io(out, e))?;
    map.write_csv(std::io::BufWriter::new(file))
        .map_err(|e| Error::io(out, e))?;
    Ok(out.to_path_buf())
}

/// Trains (unless given a checkpoint) and evaluates a background-aware model on synthetic timelines.
pub fn cmd_detect(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let k = cfg.synth.num_classes;
    let seeds = split_seeds(cfg.synth.seed);
    let timeline = |seed: u64, seconds: f64| {
        synth_timeline(
            &SynthConfig {
                seed,
                ..cfg.synth.clone()
            },
            seconds,
            cfg.eval.event_prob,
        )
    };
    let ckpt = match checkpoint {
        Some(path) => load_model(path)?,
        None => {
            let model = ModelConfig {
                num_classes: k + 1,
                negative_class: true,
                ..cfg.model.clone()
            };
            let train_tl = timeline(seeds[0], cfg.eval.train_timeline_seconds)?;
            let val_tl = timeline(seeds[1], cfg.eval.val_timeline_seconds)?;
            let train_set = windowed_training_set(&train_tl, k);
            let val_set = windowed_training_set(&val_tl, k);
            let negatives = train_set.iter().filter(|c| c.label == Label::Negative).count();
            eprintln!("{} training windows ({negatives} negative)", train_set.len());
            write_dataset(
                &Dataset {
                    header: cfg.synth.header(),
                    clips: train_set.clone(),
                },
                out.join("windows_train.jsonl"),
            )?;
            let outcome = train(&train_set, &val_set, &model, &cfg.train)?;
            save_checkpoint(&outcome.best, &out.join("checkpoint"))?;
            outcome.best
        }
    };
    if !ckpt.model.negative_class {
        return Err(Error::Config(
            "detection needs a checkpoint trained with the NEGATIVE class".into(),
        ));
    }
    let test_tl = timeline(seeds[2], cfg.eval.timeline_seconds)?;
    let windows = sliding_detect(&test_tl, &ckpt.params, &ckpt.model)?;
    let ap = detect_eval(&[(windows.clone(), &test_tl.events[..])], ckpt.model.event_classes())?;
    let mut report = EvalReport::from_class_ap(&ap);
    report.extra.insert("windows".into(), windows.len() as f64);
    report.extra.insert("events".into(), test_tl.events.len() as f64);
    report.config = config_json(cfg);
    let path = out.join("detect_report.json");
    write_json(&report, &path)?;
    Ok(path)
}
