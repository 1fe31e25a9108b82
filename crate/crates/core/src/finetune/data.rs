use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{make_sample, LabelKind, NormStats, SkippedRegion, TrainConfig, TrainSample};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::maskio::{load_mask_png, MaskEncoding};

/// One line of a JSON-lines dataset manifest. Relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub label_kind: LabelKind,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut e: ManifestEntry = serde_json::from_str(&line).map_err(|err| Error::Manifest {
            message: format!("line {}: {err}", n + 1),
            paths: vec![path.to_path_buf()],
        })?;
        e.image_path = base.join(&e.image_path);
        e.mask_path = base.join(&e.mask_path);
        out.push(e);
    }
    Ok(out)
}

/// Sidecar file holding a split's standardization statistics.
pub fn stats_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("stats.json")
}

/// Load every manifest entry as training samples.
///
/// Standardization statistics are read from the manifest's stats sidecar;
/// when it is absent they are computed over the split's images at the
/// training resolution and written there.
pub fn load_training_set(manifest: &Path, config: &TrainConfig) -> Result<(Vec<TrainSample>, Vec<SkippedRegion>, NormStats)> {
    let (entries, images) = load_images(manifest, config)?;
    let sp = stats_path(manifest);
    let stats = if sp.is_file() {
        serde_json::from_reader(BufReader::new(File::open(&sp).map_err(|e| Error::io(&sp, e))?))?
    } else {
        let stats = NormStats::compute(&images);
        std::fs::write(&sp, serde_json::to_vec_pretty(&stats)?).map_err(|e| Error::io(&sp, e))?;
        stats
    };
    let (samples, skipped) = build_samples(&entries, &images, &stats, config)?;
    Ok((samples, skipped, stats))
}

/// Load a held-out split standardized with the training split's `stats`.
pub fn load_validation_set(
    manifest: &Path,
    config: &TrainConfig,
    stats: &NormStats,
) -> Result<(Vec<TrainSample>, Vec<SkippedRegion>)> {
    let (entries, images) = load_images(manifest, config)?;
    build_samples(&entries, &images, stats, config)
}

fn load_images(manifest: &Path, config: &TrainConfig) -> Result<(Vec<ManifestEntry>, Vec<Frame>)> {
    let entries = load_manifest(manifest)?;
    let missing: Vec<PathBuf> = entries
        .iter()
        .flat_map(|e| [&e.image_path, &e.mask_path])
        .filter(|p| !p.is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Manifest {
            message: "manifest references missing files".into(),
            paths: missing,
        });
    }
    let images = entries
        .iter()
        .enumerate()
        .map(|(i, e)| Frame::load_png(i as u64, 0.0, &e.image_path)?.resized(config.input_hw()))
        .collect::<Result<Vec<_>>>()?;
    Ok((entries, images))
}

fn build_samples(
    entries: &[ManifestEntry],
    images: &[Frame],
    stats: &NormStats,
    config: &TrainConfig,
) -> Result<(Vec<TrainSample>, Vec<SkippedRegion>)> {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (i, (e, img)) in entries.iter().zip(images).enumerate() {
        let encoding = match e.label_kind {
            LabelKind::Instance => MaskEncoding::Paletted,
            LabelKind::Binary => MaskEncoding::Binary,
        };
        let masks = load_mask_png(&e.mask_path, encoding, i as u64)?;
        let masks = if masks.hw() == img.hw() {
            masks
        } else {
            let mut m = crate::mask::InstanceMaskSet::new(i as u64, img.height(), img.width());
            for (id, bm) in masks.iter() {
                m.insert(id, bm.resized_nearest(img.hw()))?;
            }
            m
        };
        let (s, k) = make_sample(img, &masks, e.label_kind, stats, config, config.seed.wrapping_add(i as u64 * 1009))?;
        samples.extend(s);
        skipped.extend(k);
    }
    Ok((samples, skipped))
}
