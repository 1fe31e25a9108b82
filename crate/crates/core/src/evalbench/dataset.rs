use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::InstanceMaskSet;
use crate::maskio::{load_mask_png, MaskEncoding};
use crate::video::frame_number;

/// Where a video's frames and masks live under a dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetLayout {
    pub frames_dir: PathBuf,
    pub masks_dir: PathBuf,
    pub mask_encoding: MaskEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFrame {
    pub index: u64,
    pub frame_path: PathBuf,
    pub mask_path: PathBuf,
}

/// Frame/mask pairs aligned by frame number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub frames_dir: PathBuf,
    pub encoding: MaskEncoding,
    pub pairs: Vec<LabeledFrame>,
}

impl Dataset {
    pub fn mask(&self, pair: &LabeledFrame) -> Result<InstanceMaskSet> {
        load_mask_png(&pair.mask_path, self.encoding, pair.index)
    }

    /// Decode every mask, keyed by frame index.
    pub fn ground_truth(&self) -> Result<BTreeMap<u64, InstanceMaskSet>> {
        self.pairs.iter().map(|p| Ok((p.index, self.mask(p)?))).collect()
    }
}

fn numbered_pngs(dir: &Path) -> Result<(BTreeMap<u64, PathBuf>, Vec<PathBuf>)> {
    let mut numbered = BTreeMap::new();
    let mut stray = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        match frame_number(&path) {
            Some(n) => {
                numbered.insert(n, path);
            }
            None => stray.push(path),
        }
    }
    Ok((numbered, stray))
}

/// Pair every `frame_%06d.png` under `frames_dir` with the same-named file
/// under `masks_dir`.
pub fn ingest_dataset(root: &Path, layout: &DatasetLayout) -> Result<Dataset> {
    let frames_dir = root.join(&layout.frames_dir);
    let masks_dir = root.join(&layout.masks_dir);
    for d in [&frames_dir, &masks_dir] {
        if !d.is_dir() {
            return Err(Error::Manifest {
                message: "dataset directory does not exist".into(),
                paths: vec![d.clone()],
            });
        }
    }
    let (frames, stray_frames) = numbered_pngs(&frames_dir)?;
    let (mut masks, stray_masks) = numbered_pngs(&masks_dir)?;
    let mut orphans: Vec<PathBuf> = stray_frames.into_iter().chain(stray_masks).collect();
    let mut pairs = Vec::new();
    for (index, frame_path) in frames {
        match masks.remove(&index) {
            Some(mask_path) => pairs.push(LabeledFrame {
                index,
                frame_path,
                mask_path,
            }),
            None => orphans.push(frame_path),
        }
    }
    orphans.extend(masks.into_values());
    if !orphans.is_empty() {
        orphans.sort();
        return Err(Error::Manifest {
            message: "frames and masks do not pair up".into(),
            paths: orphans,
        });
    }
    Ok(Dataset {
        frames_dir,
        encoding: layout.mask_encoding,
        pairs,
    })
}
