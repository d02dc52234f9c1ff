//! Recognizer training: pretraining on clean maps and finetuning on
//! materialized denoised maps, both with momentum SGD over the three-path
//! classification loss.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::depth::{mix_seed, save_dmf, DatasetManifest, DepthMap, Split};
use crate::diif::denoise;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, ParamStore, SgdMomentum, Session};
use crate::recognizer::{batch_inputs, LdnfConfig, LdnfNet};

use super::config::{lr_at, RunConfig, StageSchedule};
use super::data::{class_index, class_of, load_split, Sample};
use super::denoiser::{load_denoiser, TrainOutcome};

fn run_sgd_stage(
    store: &mut ParamStore<f32>,
    net: &LdnfNet,
    maps: &[(DepthMap, usize)],
    stage: &StageSchedule,
    seed: u64,
    salt: u64,
    name: &str,
    log: &mut dyn Write,
) -> Result<(u64, f64, usize)> {
    let mut sgd = SgdMomentum::<f32>::new(store.len(), stage.momentum);
    let mut steps = 0u64;
    let mut final_loss = f64::NAN;
    let mut epochs_run = 0usize;
    'epochs: for epoch in 0..stage.epochs {
        let lr = lr_at(stage.lr, stage.lr_factor, stage.lr_period, epoch);
        let mut order: Vec<usize> = (0..maps.len()).collect();
        let mut erng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[salt, epoch as u64]));
        order.shuffle(&mut erng);
        for chunk in order.chunks(stage.batch) {
            if let Some(cap) = stage.max_steps {
                if steps >= cap {
                    break 'epochs;
                }
            }
            let batch: Vec<&DepthMap> = chunk.iter().map(|&i| &maps[i].0).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| maps[i].1).collect();
            let (depth, normal) = batch_inputs::<f32>(&batch, &net.cfg)?;
            let mut sess = Session::new(store, true);
            let dv = sess.constant(depth);
            let nv = sess.constant(normal);
            let out = net.forward(&mut sess, dv, nv, true)?;
            let loss = net.loss(&mut sess, &out, &targets);
            let loss_val = sess.tape.value(loss)[[0]] as f64;
            let mut grads = sess.tape.backward(loss);
            let grads = sess.param_grads(&mut grads);
            drop(sess);
            sgd.step(store, &grads, lr);
            steps += 1;
            final_loss = loss_val;
            writeln!(
                log,
                "{}",
                json!({"stage": name, "epoch": epoch, "step": steps, "lr": lr, "loss": loss_val})
            )?;
        }
        epochs_run = epoch + 1;
    }
    Ok((steps, final_loss, epochs_run))
}

fn save_recognizer(
    path: &Path,
    store: &ParamStore<f32>,
    cfg: &LdnfConfig,
    classes: &[u32],
    stage: &str,
    cfg_hash: &str,
) -> Result<()> {
    checkpoint::save(
        path,
        &store.export(),
        json!({
            "stage": stage,
            "ldnf": cfg,
            "classes": classes,
            "config_hash": cfg_hash,
        }),
    )
}

/// Rebuild a trained recognizer and its identity-to-class mapping.
pub fn load_recognizer(ckpt: &Path) -> Result<(ParamStore<f32>, LdnfNet, Vec<u32>)> {
    let (tensors, sidecar) = checkpoint::load(ckpt)?;
    let stage = sidecar["stage"].as_str().unwrap_or("");
    if stage != "pretrain" && stage != "finetune" {
        return Err(Error::config(format!(
            "expected a recognizer checkpoint, found stage {stage:?}"
        )));
    }
    let cfg: LdnfConfig = serde_json::from_value(sidecar["ldnf"].clone())
        .map_err(|e| Error::format(format!("checkpoint has no recognizer config: {e}")))?;
    let classes: Vec<u32> = serde_json::from_value(sidecar["classes"].clone())
        .map_err(|e| Error::format(format!("checkpoint has no class list: {e}")))?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = LdnfNet::new(&mut store, &mut rng, "ldnf", cfg)?;
    store.import(&tensors)?;
    Ok((store, net, classes))
}

/// Pretrain the recognizer on the clean training maps. Writes
/// `out_dir/recognizer_pretrain.ckpt`.
pub fn pretrain_recognizer(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(&data_dir.join("manifest.json"))?;
    let samples = load_split(data_dir, &manifest, Split::Train, cfg.recognizer.input_size, Some(&cfg.data))?;
    std::fs::create_dir_all(out_dir)?;
    let classes = class_index(&samples);
    let ldnf = cfg.recognizer.to_ldnf(classes.len());

    let mut store = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0x20]));
    let net = LdnfNet::new(&mut store, &mut rng, "ldnf", ldnf.clone())?;

    let maps: Vec<(DepthMap, usize)> = samples
        .iter()
        .map(|s| Ok((s.clean.clone(), class_of(&classes, s.id)?)))
        .collect::<Result<_>>()?;
    let (steps, final_loss, epochs_run) = run_sgd_stage(
        &mut store,
        &net,
        &maps,
        &cfg.pretrain,
        cfg.seed,
        0x21,
        "pretrain",
        log,
    )?;
    save_recognizer(
        &out_dir.join("recognizer_pretrain.ckpt"),
        &store,
        &ldnf,
        &classes,
        "pretrain",
        &cfg.hash(),
    )?;
    Ok(TrainOutcome {
        epochs_run,
        steps,
        final_loss,
        psnr_gain_db: None,
        stopped_early: false,
    })
}

/// Materialize denoised copies of the degraded training maps under
/// `out_dir/denoised/` and return them with class labels.
pub fn materialize_denoised(
    samples: &[Sample],
    classes: &[u32],
    denoiser_ckpt: &Path,
    out_dir: &Path,
) -> Result<Vec<(DepthMap, usize)>> {
    let (mut dstore, dnet) = load_denoiser(denoiser_ckpt)?;
    let dir = out_dir.join("denoised");
    std::fs::create_dir_all(&dir)?;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let den = denoise(&dnet, &mut dstore, &s.degraded)?;
        save_dmf(&dir.join(format!("{}_den.dmf", s.name)), &den)?;
        out.push((den, class_of(classes, s.id)?));
    }
    Ok(out)
}

/// Finetune the pretrained recognizer on denoised training maps. Enforces
/// stage order: both the denoiser and pretraining checkpoints must exist and
/// carry their respective stages. Writes `out_dir/recognizer.ckpt`.
pub fn finetune_recognizer(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    denoiser_ckpt: &Path,
    pretrain_ckpt: &Path,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(&data_dir.join("manifest.json"))?;
    let samples = load_split(data_dir, &manifest, Split::Train, cfg.recognizer.input_size, Some(&cfg.data))?;
    std::fs::create_dir_all(out_dir)?;

    let (mut store, net, classes) = load_recognizer(pretrain_ckpt)?;
    let (_, sidecar) = checkpoint::load(pretrain_ckpt)?;
    if sidecar["stage"] != "pretrain" {
        return Err(Error::config(
            "finetuning must start from a pretraining checkpoint",
        ));
    }
    if net.cfg != cfg.recognizer.to_ldnf(classes.len()) {
        return Err(Error::config(
            "pretraining checkpoint does not match the configured recognizer shape",
        ));
    }

    let maps = materialize_denoised(&samples, &classes, denoiser_ckpt, out_dir)?;
    let (steps, final_loss, epochs_run) = run_sgd_stage(
        &mut store,
        &net,
        &maps,
        &cfg.finetune,
        cfg.seed,
        0x31,
        "finetune",
        log,
    )?;
    save_recognizer(
        &out_dir.join("recognizer.ckpt"),
        &store,
        &net.cfg,
        &classes,
        "finetune",
        &cfg.hash(),
    )?;
    Ok(TrainOutcome {
        epochs_run,
        steps,
        final_loss,
        psnr_gain_db: None,
        stopped_early: false,
    })
}

/// Path helpers shared by the CLI and tests.
pub fn pretrain_ckpt_path(out_dir: &Path) -> PathBuf {
    out_dir.join("recognizer_pretrain.ckpt")
}

pub fn finetune_ckpt_path(out_dir: &Path) -> PathBuf {
    out_dir.join("recognizer.ckpt")
}

pub fn denoiser_ckpt_path(out_dir: &Path) -> PathBuf {
    out_dir.join("denoiser.ckpt")
}
