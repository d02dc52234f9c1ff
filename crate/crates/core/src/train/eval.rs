//! Test-split evaluation: denoising quality metrics per sample and rank-one
//! identification of denoised probes against a clean neutral gallery.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use crate::depth::{DatasetManifest, DepthMap, Split, Variation, ALL_VARIATIONS};
use crate::diif::denoise;
use crate::error::{Error, Result};
use crate::metrics::{psnr, rank_one, rmse, ssim, write_report, SampleMetrics};
use crate::nn::checkpoint;
use crate::par::{map_with, ExecMode};
use crate::recognizer::embed_map;

use super::config::RunConfig;
use super::data::load_split;
use super::denoiser::load_denoiser;
use super::recognizer::load_recognizer;

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_rmse: f64,
    /// Mean PSNR improvement of denoised over degraded inputs, in dB.
    pub psnr_gain_db: f64,
    pub rank_one_overall: f64,
    pub rank_one_by_variation: BTreeMap<String, f64>,
}

fn unit(values: &ndarray::Array2<f32>) -> Array2<f64> {
    values.mapv(|v| v as f64 / 255.0)
}

/// Evaluate a trained denoiser and recognizer on the test split. Writes
/// `report.csv` (per-sample metrics), `embeddings.ckpt` (probe and gallery
/// embeddings), and `eval.json` (the returned summary) under `out_dir`.
pub fn evaluate(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    denoiser_ckpt: &Path,
    recognizer_ckpt: &Path,
    mode: ExecMode,
) -> Result<EvalSummary> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(&data_dir.join("manifest.json"))?;
    let samples = load_split(data_dir, &manifest, Split::Test, cfg.dmd.grid, Some(&cfg.data))?;
    std::fs::create_dir_all(out_dir)?;

    let (mut dstore, dnet) = load_denoiser(denoiser_ckpt)?;
    if dnet.cfg != cfg.dmd {
        return Err(Error::config(
            "denoiser checkpoint does not match the configured model",
        ));
    }
    let denoised: Vec<DepthMap> = samples
        .iter()
        .map(|s| denoise(&dnet, &mut dstore, &s.degraded))
        .collect::<Result<_>>()?;

    let grids: Vec<(Array2<f64>, Array2<f64>, Array2<f64>)> = samples
        .iter()
        .zip(&denoised)
        .map(|(s, d)| (unit(&s.clean.values), unit(&d.values), unit(&s.degraded.values)))
        .collect();
    let per_sample: Vec<Result<(f64, f64, f64, f64)>> =
        map_with(mode, grids, |(clean, den, deg)| {
            Ok((
                psnr(&den, &clean)?,
                ssim(&den, &clean)?,
                rmse(&den, &clean)?,
                psnr(&deg, &clean)?,
            ))
        });

    let mut rows = Vec::with_capacity(samples.len());
    let mut gain_acc = 0.0;
    let mut gain_n = 0usize;
    for (s, r) in samples.iter().zip(per_sample) {
        let (p, ss, rm, p_before) = r?;
        if p.is_finite() && p_before.is_finite() {
            gain_acc += p - p_before;
            gain_n += 1;
        }
        rows.push(SampleMetrics {
            sample_id: s.name.clone(),
            psnr_db: p,
            ssim: ss,
            rmse: rm,
        });
    }
    write_report(&out_dir.join("report.csv"), &rows)?;

    let (mut rstore, rnet, _classes) = load_recognizer(recognizer_ckpt)?;
    if rnet.cfg.input_size != cfg.dmd.grid {
        return Err(Error::config(
            "recognizer checkpoint does not match the working resolution",
        ));
    }

    // gallery: the first neutral clean map of each test identity
    let mut gallery: Vec<(Vec<f64>, u32)> = Vec::new();
    let mut gallery_names: Vec<String> = Vec::new();
    for s in &samples {
        if s.variation == Variation::Neutral && gallery.iter().all(|&(_, id)| id != s.id) {
            gallery.push((embed_map(&rnet, &mut rstore, &s.clean)?, s.id));
            gallery_names.push(s.name.clone());
        }
    }
    if gallery.is_empty() {
        return Err(Error::data("test split has no neutral gallery samples"));
    }
    let probes: Vec<(Vec<f64>, u32)> = samples
        .iter()
        .zip(&denoised)
        .map(|(s, d)| Ok((embed_map(&rnet, &mut rstore, d)?, s.id)))
        .collect::<Result<_>>()?;

    let rank_one_overall = rank_one(&gallery, &probes)?;
    let mut rank_one_by_variation = BTreeMap::new();
    for v in ALL_VARIATIONS {
        let subset: Vec<(Vec<f64>, u32)> = samples
            .iter()
            .zip(&probes)
            .filter(|(s, _)| s.variation == v)
            .map(|(_, p)| p.clone())
            .collect();
        if !subset.is_empty() {
            rank_one_by_variation.insert(v.to_string(), rank_one(&gallery, &subset)?);
        }
    }

    let mut tensors: Vec<(String, ndarray::ArrayD<f64>)> = Vec::new();
    let mut ids = serde_json::Map::new();
    for ((emb, id), stem) in gallery.iter().zip(&gallery_names) {
        let name = format!("gallery/{stem}");
        tensors.push((
            name.clone(),
            ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[emb.len()]), emb.clone()).unwrap(),
        ));
        ids.insert(name, json!(id));
    }
    for ((emb, id), s) in probes.iter().zip(&samples) {
        let name = format!("probe/{}", s.name);
        tensors.push((
            name.clone(),
            ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[emb.len()]), emb.clone()).unwrap(),
        ));
        ids.insert(name, json!(id));
    }
    checkpoint::save(
        &out_dir.join("embeddings.ckpt"),
        &tensors,
        json!({"kind": "embeddings", "ids": ids}),
    )?;

    let summary = EvalSummary {
        mean_psnr_db: finite_mean(rows.iter().map(|r| r.psnr_db)),
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / rows.len() as f64,
        mean_rmse: rows.iter().map(|r| r.rmse).sum::<f64>() / rows.len() as f64,
        psnr_gain_db: if gain_n > 0 {
            gain_acc / gain_n as f64
        } else {
            0.0
        },
        rank_one_overall,
        rank_one_by_variation,
    };
    std::fs::write(
        out_dir.join("eval.json"),
        serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )?;
    Ok(summary)
}

fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for v in values {
        if v.is_finite() {
            acc += v;
            n += 1;
        }
    }
    if n > 0 {
        acc / n as f64
    } else {
        f64::INFINITY
    }
}
