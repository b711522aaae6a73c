use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SynthConfig;
use crate::model::ModelConfig;
use crate::tracker::TrackerParams;
use crate::training::TrainConfig;

/// Relative sizes of the train/validation/test splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 212,
            val: 12,
            test: 33,
        }
    }
}

impl SplitConfig {
    /// Splits `total` clips by the ratios; every split gets at least one clip.
    pub fn counts(&self, total: usize) -> Result<[usize; 3]> {
        let sum = self.train + self.val + self.test;
        if sum == 0 || self.train == 0 || self.val == 0 || self.test == 0 {
            return Err(Error::Config("split ratios must be positive".into()));
        }
        if total < 3 {
            return Err(Error::Config(format!("{total} clips cannot fill three splits")));
        }
        let scale = |r: usize| ((total * r) as f64 / sum as f64).round().max(1.0) as usize;
        let val = scale(self.val);
        let test = scale(self.test);
        let train = total
            .checked_sub(val + test)
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{total} clips cannot fill three splits")))?;
        Ok([train, val, test])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub heatmap_grid: usize,
    pub heatmap_phases: usize,
    /// Length of the untrimmed test sequence for detection, in seconds.
    pub timeline_seconds: f64,
    pub train_timeline_seconds: f64,
    pub val_timeline_seconds: f64,
    /// Chance of starting an event at each free 2 s slot of a timeline.
    pub event_prob: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            heatmap_grid: 10,
            heatmap_phases: 3,
            timeline_seconds: 600.0,
            train_timeline_seconds: 1800.0,
            val_timeline_seconds: 300.0,
            event_prob: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub tracker: TrackerParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalParams,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_scaled() {
        let s = SplitConfig::default();
        assert_eq!(s.counts(257).unwrap(), [212, 12, 33]);
        let [train, val, test] = s.counts(600).unwrap();
        assert_eq!(train + val + test, 600);
        assert_eq!((val, test), (28, 77));
        assert!(s.counts(2).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[model]\nhiden_dim = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::from_toml("colour = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg =
            RunConfig::from_toml("[model]\nhidden_dim = 8\nmode = \"avg-player\"\n[train]\nmax_steps = 3\n").unwrap();
        assert_eq!(cfg.model.hidden_dim, 8);
        assert_eq!(cfg.model.mode, crate::model::Mode::AvgPlayer);
        assert_eq!(cfg.train.max_steps, 3);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
