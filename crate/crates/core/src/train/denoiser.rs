//! Denoiser training: Adam over the combined objective on full-grid batches,
//! with step-decayed learning rate, JSONL logging, per-epoch checkpoints,
//! and bit-identical resume.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::autodiff::{Scalar, Var};
use crate::depth::{mix_seed, DatasetManifest, Split};
use crate::diif::{denoise, model_inputs, DmdConfig, DmdNet};
use crate::error::{Error, Result};
use crate::metrics::{psnr, total_denoise_loss, PerceptualExtractor};
use crate::nn::{checkpoint, Adam, ParamStore, Session};
use crate::recognizer::{LdnfConfig, LdnfNet, LdnfPerceptual};

use super::config::{lr_at, RunConfig};
use super::data::{load_split, Sample};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub steps: u64,
    pub final_loss: f64,
    /// Mean PSNR gain over the degraded inputs on the monitoring subset, in
    /// dB, when it was measured.
    pub psnr_gain_db: Option<f64>,
    pub stopped_early: bool,
}

/// Construct a recognizer inside `store` from a checkpoint, with every
/// parameter frozen. The checkpoint sidecar must carry the recognizer config
/// under `"ldnf"`.
pub fn attach_frozen_recognizer<T: Scalar>(
    store: &mut ParamStore<T>,
    ckpt: &Path,
    expect_input: usize,
) -> Result<LdnfPerceptual> {
    let (tensors, sidecar) = checkpoint::load(ckpt)?;
    let ldnf_cfg: LdnfConfig = serde_json::from_value(sidecar["ldnf"].clone())
        .map_err(|e| Error::format(format!("checkpoint has no recognizer config: {e}")))?;
    if ldnf_cfg.input_size != expect_input {
        return Err(Error::config(format!(
            "frozen recognizer expects {} inputs, denoiser works at {}",
            ldnf_cfg.input_size, expect_input
        )));
    }
    let before = store.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = LdnfNet::new(store, &mut rng, "ldnf", ldnf_cfg)?;
    for id in store.ids() {
        if id.0 < before {
            continue;
        }
        let name = store.name(id).to_string();
        let src = tensors
            .get(&name)
            .ok_or_else(|| Error::format(format!("checkpoint is missing tensor {name}")))?;
        if src.shape() != store.value(id).shape() {
            return Err(Error::format(format!(
                "checkpoint tensor {name} has shape {:?}, expected {:?}",
                src.shape(),
                store.value(id).shape()
            )));
        }
        *store.value_mut(id) = src.mapv(T::from_f64);
        store.set_trainable(id, false);
    }
    Ok(LdnfPerceptual { net })
}

/// Mean PSNR gain of denoised over degraded inputs, in dB, on `samples`.
pub fn mean_psnr_gain<T: Scalar>(
    net: &DmdNet,
    store: &mut ParamStore<T>,
    samples: &[Sample],
) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for s in samples {
        let den = denoise(net, store, &s.degraded)?;
        let clean = s.clean.values.mapv(|v| v as f64 / 255.0);
        let deg = s.degraded.values.mapv(|v| v as f64 / 255.0);
        let out = den.values.mapv(|v| v as f64 / 255.0);
        let before = psnr(&deg, &clean)?;
        let after = psnr(&out, &clean)?;
        if before.is_finite() && after.is_finite() {
            acc += after - before;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::data("psnr gain is undefined on identical pairs"));
    }
    Ok(acc / n as f64)
}

fn sample_loss<T: Scalar>(
    sess: &mut Session<T>,
    net: &DmdNet,
    s: &Sample,
    cfg: &RunConfig,
    px: Option<&dyn PerceptualExtractor<T>>,
) -> Result<Var> {
    let (depth_in, normal_in) = model_inputs::<T>(&s.degraded, net.cfg.normal_gain);
    let y = net.forward(sess, &depth_in, &normal_in)?;
    let shifted = sess.tape.add_scalar(y, T::one());
    let pred01 = sess.tape.mul_scalar(shifted, T::from_f64(0.5));
    let grid = net.cfg.grid;
    let gt = ArrayD::from_shape_fn(IxDyn(&[1, 1, grid, grid]), |ix| {
        T::from_f64(s.clean.values[[ix[2], ix[3]]] as f64 / 255.0)
    });
    let gt01 = sess.constant(gt);
    total_denoise_loss(sess, pred01, gt01, Some(&s.degraded.mask), &cfg.loss, px)
}

fn save_checkpoint(
    out: &Path,
    store: &ParamStore<f32>,
    adam: &Adam<f32>,
    dmd: &DmdConfig,
    cfg_hash: &str,
    epoch: usize,
    steps: u64,
) -> Result<()> {
    let mut tensors = store.export();
    tensors.extend(adam.export(store));
    checkpoint::save(
        out,
        &tensors,
        json!({
            "stage": "denoiser",
            "epoch": epoch,
            "steps": steps,
            "dmd": dmd,
            "config_hash": cfg_hash,
        }),
    )
}

/// Rebuild a trained denoiser from its checkpoint.
pub fn load_denoiser(ckpt: &Path) -> Result<(ParamStore<f32>, DmdNet)> {
    let (tensors, sidecar) = checkpoint::load(ckpt)?;
    if sidecar["stage"] != "denoiser" {
        return Err(Error::config(format!(
            "expected a denoiser checkpoint, found stage {}",
            sidecar["stage"]
        )));
    }
    let dmd: DmdConfig = serde_json::from_value(sidecar["dmd"].clone())
        .map_err(|e| Error::format(format!("checkpoint has no denoiser config: {e}")))?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = DmdNet::new(&mut store, &mut rng, dmd)?;
    store.import(&tensors)?;
    Ok((store, net))
}

/// Train the denoiser on the training split under `data_dir`, writing the
/// checkpoint to `out_dir/denoiser.ckpt` after every epoch and JSONL
/// progress to `log`. `perceptual_ckpt` is required exactly when the
/// perceptual weight is positive; `resume` continues from an earlier
/// checkpoint of the same configuration, bit-identically.
pub fn train_denoiser(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    perceptual_ckpt: Option<&Path>,
    resume: Option<&Path>,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let stage = &cfg.denoiser;
    let manifest = DatasetManifest::load(&data_dir.join("manifest.json"))?;
    let samples = load_split(data_dir, &manifest, Split::Train, cfg.dmd.grid, Some(&cfg.data))?;
    std::fs::create_dir_all(out_dir)?;

    let mut store = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0x10]));
    let net = DmdNet::new(&mut store, &mut rng, cfg.dmd.clone())?;
    let px: Option<LdnfPerceptual> = if cfg.loss.perceptual > 0.0 {
        let path = perceptual_ckpt.ok_or_else(|| {
            Error::config("perceptual weight > 0 requires a recognizer checkpoint")
        })?;
        Some(attach_frozen_recognizer(&mut store, path, cfg.dmd.grid)?)
    } else {
        None
    };

    let mut adam = Adam::<f32>::new(store.len());
    let cfg_hash = cfg.resume_hash();
    let mut start_epoch = 0usize;
    let mut steps = 0u64;
    if let Some(path) = resume {
        let (tensors, sidecar) = checkpoint::load(path)?;
        if sidecar["stage"] != "denoiser" {
            return Err(Error::config("resume checkpoint is not a denoiser checkpoint"));
        }
        if sidecar["config_hash"] != cfg_hash.as_str() {
            return Err(Error::config(
                "resume checkpoint was written under a different configuration",
            ));
        }
        store.import(&tensors)?;
        adam.import(&store, &tensors)?;
        start_epoch = sidecar["epoch"].as_u64().unwrap_or(0) as usize + 1;
        steps = sidecar["steps"].as_u64().unwrap_or(0);
    }

    let ckpt_path = out_dir.join("denoiser.ckpt");
    let monitor = samples.len().min(8);
    let mut final_loss = f64::NAN;
    let mut psnr_gain_db = None;
    let mut stopped_early = false;
    let mut epochs_run = start_epoch;

    'epochs: for epoch in start_epoch..stage.epochs {
        let lr = lr_at(stage.lr, stage.lr_factor, stage.lr_period, epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut erng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0x11, epoch as u64]));
        order.shuffle(&mut erng);

        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(stage.batch) {
            if let Some(cap) = stage.max_steps {
                if steps >= cap {
                    stopped_early = true;
                    break 'epochs;
                }
            }
            let mut sess = Session::new(&mut store, true);
            let mut total: Option<Var> = None;
            for &i in chunk {
                let l = sample_loss(
                    &mut sess,
                    &net,
                    &samples[i],
                    cfg,
                    px.as_ref().map(|p| p as &dyn PerceptualExtractor<f32>),
                )?;
                total = Some(match total {
                    None => l,
                    Some(acc) => sess.tape.add(acc, l),
                });
            }
            let total = total.expect("non-empty batch");
            let mean = sess
                .tape
                .mul_scalar(total, f32::from_f64(1.0 / chunk.len() as f64));
            let loss_val = sess.tape.value(mean)[[0]] as f64;
            let mut grads = sess.tape.backward(mean);
            let grads = sess.param_grads(&mut grads);
            drop(sess);
            adam.step(&mut store, &grads, lr);
            steps += 1;
            final_loss = loss_val;
            epoch_loss += loss_val;
            epoch_batches += 1;
            writeln!(
                log,
                "{}",
                json!({"stage": "denoiser", "epoch": epoch, "step": steps, "lr": lr, "loss": loss_val})
            )?;
        }
        epochs_run = epoch + 1;
        if epoch_batches > 0 {
            writeln!(
                log,
                "{}",
                json!({"stage": "denoiser", "epoch": epoch, "mean_loss": epoch_loss / epoch_batches as f64})
            )?;
        }
        save_checkpoint(&ckpt_path, &store, &adam, &cfg.dmd, &cfg_hash, epoch, steps)?;
        if let Some(target) = stage.target_psnr_gain {
            let gain = mean_psnr_gain(&net, &mut store, &samples[..monitor])?;
            psnr_gain_db = Some(gain);
            writeln!(
                log,
                "{}",
                json!({"stage": "denoiser", "epoch": epoch, "psnr_gain_db": gain})
            )?;
            if gain >= target {
                stopped_early = true;
                break;
            }
        }
    }

    if psnr_gain_db.is_none() {
        psnr_gain_db = mean_psnr_gain(&net, &mut store, &samples[..monitor]).ok();
    }
    // the early-stop paths above leave the latest epoch checkpointed already;
    // save once more so max_steps interruptions persist their state too
    save_checkpoint(
        &ckpt_path,
        &store,
        &adam,
        &cfg.dmd,
        &cfg_hash,
        epochs_run.saturating_sub(1),
        steps,
    )?;
    Ok(TrainOutcome {
        epochs_run,
        steps,
        final_loss,
        psnr_gain_db,
        stopped_early,
    })
}
