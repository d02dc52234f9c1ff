//! Run configuration: one JSON document describing the data, both models,
//! and the three training stages, plus the step-decay learning-rate rule and
//! a stable hash for checkpoint/config consistency checks.

use serde::{Deserialize, Serialize};

use crate::depth::SynthSpec;
use crate::diif::DmdConfig;
use crate::error::{Error, Result};
use crate::metrics::LossWeights;
use crate::recognizer::LdnfConfig;

/// Schedule for one training stage. The optimizer is fixed per stage (Adam
/// for the denoiser, SGD with momentum for the recognizer stages); only the
/// fields that stage reads are meaningful.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StageSchedule {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Learning rate is multiplied by this every `lr_period` epochs.
    pub lr_factor: f64,
    pub lr_period: usize,
    /// Momentum for the SGD stages; ignored by the Adam stage.
    pub momentum: f64,
    /// Optional cap on optimizer steps; the stage stops once reached.
    pub max_steps: Option<u64>,
    /// Denoiser only: stop once the mean PSNR gain over the degraded inputs
    /// (measured on a training subset at epoch end) reaches this many dB.
    pub target_psnr_gain: Option<f64>,
}

impl StageSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::config("stage epochs and batch must be >= 1"));
        }
        if self.lr <= 0.0 || self.lr_factor <= 0.0 || self.lr_period == 0 {
            return Err(Error::config(
                "stage lr and lr_factor must be positive, lr_period >= 1",
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Recognizer shape without the class count, which is determined by the
/// training split.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RecognizerShape {
    pub input_size: usize,
    pub channels: [usize; 4],
    pub fusion_groups: usize,
    pub normal_gain: f64,
}

impl RecognizerShape {
    pub fn to_ldnf(&self, num_classes: usize) -> LdnfConfig {
        LdnfConfig {
            input_size: self.input_size,
            channels: self.channels,
            fusion_groups: self.fusion_groups,
            num_classes,
            normal_gain: self.normal_gain,
        }
    }
}

/// The whole run: dataset, models, loss, and per-stage schedules.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: SynthSpec,
    pub dmd: DmdConfig,
    pub recognizer: RecognizerShape,
    pub loss: LossWeights,
    pub denoiser: StageSchedule,
    pub pretrain: StageSchedule,
    pub finetune: StageSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: SynthSpec::default(),
            dmd: DmdConfig::default(),
            recognizer: RecognizerShape {
                input_size: 128,
                channels: [32, 64, 128, 256],
                fusion_groups: 32,
                normal_gain: 0.05,
            },
            loss: LossWeights::default(),
            denoiser: StageSchedule {
                epochs: 100,
                batch: 64,
                lr: 1e-4,
                lr_factor: 0.5,
                lr_period: 20,
                momentum: 0.0,
                max_steps: None,
                target_psnr_gain: None,
            },
            pretrain: StageSchedule {
                epochs: 100,
                batch: 384,
                lr: 1e-2,
                lr_factor: 1.0,
                lr_period: 1,
                momentum: 0.9,
                max_steps: None,
                target_psnr_gain: None,
            },
            finetune: StageSchedule {
                epochs: 50,
                batch: 384,
                lr: 5e-3,
                lr_factor: 1.0,
                lr_period: 1,
                momentum: 0.9,
                max_steps: None,
                target_psnr_gain: None,
            },
        }
    }
}

impl RunConfig {
    /// Full-size configuration.
    pub fn paper() -> Self {
        Self::default()
    }

    /// Shrunk configuration that trains in minutes on one CPU core: 32x32
    /// working resolution, narrow models, short schedules, small batches.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.dmd = DmdConfig {
            channels: 16,
            n_res: 2,
            n_pe: 16,
            grid: 32,
            normal_gain: 0.05,
        };
        c.recognizer = RecognizerShape {
            input_size: 32,
            channels: [8, 16, 32, 64],
            fusion_groups: 8,
            normal_gain: 0.05,
        };
        c.denoiser.epochs = 30;
        c.denoiser.batch = 8;
        c.denoiser.lr_period = 10;
        c.pretrain.epochs = 30;
        c.pretrain.batch = 16;
        c.finetune.epochs = 15;
        c.finetune.batch = 16;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.dmd.validate()?;
        self.loss.validate()?;
        self.denoiser.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        // class count is unknown here; shape checks only
        self.recognizer.to_ldnf(1).validate()?;
        if self.recognizer.input_size != self.dmd.grid {
            return Err(Error::config(format!(
                "recognizer input size {} must match the denoiser grid {}",
                self.recognizer.input_size, self.dmd.grid
            )));
        }
        if self.data.train_identities == 0 {
            return Err(Error::config("training needs at least one identity"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("config is not valid: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization")
    }

    /// Like [`RunConfig::hash`], but ignoring the fields that only decide
    /// when the denoiser stage stops, so an interrupted run can resume under
    /// a longer schedule.
    pub fn resume_hash(&self) -> String {
        let mut c = self.clone();
        c.denoiser.epochs = 1;
        c.denoiser.max_steps = None;
        c.denoiser.target_psnr_gain = None;
        c.hash()
    }

    /// Stable 64-bit hash of the serialized config, hex-encoded. Used to
    /// refuse resuming a checkpoint under a different configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialization");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Learning rate at `epoch` under step decay.
pub fn lr_at(base: f64, factor: f64, period: usize, epoch: usize) -> f64 {
    base * factor.powi((epoch / period) as i32)
}

/// Apply one `--set key.path=value` override onto a JSON document. The value
/// is parsed as JSON when possible and treated as a string otherwise.
/// Intermediate objects must already exist.
pub fn set_by_path(doc: &mut serde_json::Value, path: &str, raw: &str) -> Result<()> {
    let mut cur = &mut *doc;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("bad override path {path:?}")));
    }
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .as_object_mut()
            .and_then(|m| m.get_mut(*part))
            .ok_or_else(|| Error::config(format!("unknown config key {part:?} in {path:?}")))?;
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::config(format!("{path:?} does not address an object field")))?;
    let last = parts[parts.len() - 1];
    if !obj.contains_key(last) {
        return Err(Error::config(format!("unknown config key {last:?} in {path:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
    obj.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_reference_points() {
        assert!((lr_at(1e-4, 0.5, 20, 0) - 1e-4).abs() < 1e-18);
        assert!((lr_at(1e-4, 0.5, 20, 20) - 5e-5).abs() < 1e-18);
        assert!((lr_at(1e-4, 0.5, 20, 45) - 2.5e-5).abs() < 1e-18);
        assert!((lr_at(3e-3, 1.0, 1, 70) - 3e-3).abs() < 1e-18);
        assert!((lr_at(1.0, 0.5, 1, 10) - 1.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn default_profiles_validate() {
        RunConfig::paper().validate().unwrap();
        RunConfig::desk().validate().unwrap();
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let mut c = RunConfig::desk();
        c.recognizer.input_size = 64;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn json_roundtrip_and_unknown_field() {
        let c = RunConfig::desk();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        let mut doc: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        doc["no_such_field"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn hash_is_sensitive_to_any_field() {
        let a = RunConfig::desk();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), RunConfig::desk().hash());
    }

    #[test]
    fn set_by_path_overrides() {
        let mut doc: serde_json::Value =
            serde_json::from_str(&RunConfig::desk().to_json()).unwrap();
        set_by_path(&mut doc, "denoiser.lr", "0.01").unwrap();
        set_by_path(&mut doc, "seed", "7").unwrap();
        let c = RunConfig::from_json(&doc.to_string()).unwrap();
        assert_eq!(c.denoiser.lr, 0.01);
        assert_eq!(c.seed, 7);
        assert!(set_by_path(&mut doc, "nope.lr", "1").is_err());
        assert!(set_by_path(&mut doc, "denoiser.nope", "1").is_err());
    }
}
