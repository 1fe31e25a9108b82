use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use tapseg_core::finetune::{LabelKind, ManifestEntry};
use tapseg_core::maskio::save_paletted_png;
use tapseg_core::synthetic::Scene;
use tapseg_core::video::frame_file_name;
use tapseg_core::Point;

use crate::{Classify, CmdResult};

#[derive(Clone, Copy, ValueEnum)]
pub enum ScenePreset {
    /// One textured disk drifting diagonally.
    MovingDisk,
    /// A second disk enters at frame 30.
    TwoObjects,
    /// The disk passes behind an occluder on frames 30..38.
    Occlusion,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "moving-disk")]
    pub scene: ScenePreset,

    /// Frame count (default 100, 50 for two-objects, 60 for occlusion).
    #[arg(long)]
    pub frames: Option<u64>,

    /// Destination: `scene.json`, `frames/`, `masks/` and `manifest.jsonl`.
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn build_scene(preset: ScenePreset, frames: Option<u64>) -> Scene {
    match preset {
        ScenePreset::MovingDisk => Scene::moving_disk(frames.unwrap_or(100), Point::new(1.0, 0.5)),
        ScenePreset::TwoObjects => Scene::two_objects(frames.unwrap_or(50)),
        ScenePreset::Occlusion => Scene::occluded_disk(frames.unwrap_or(60)),
    }
}

fn write_scene(scene: &Scene, out: &Path) -> anyhow::Result<()> {
    let frames = out.join("frames");
    let masks = out.join("masks");
    for d in [&frames, &masks] {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    fs::write(out.join("scene.json"), serde_json::to_vec_pretty(scene)?)?;
    let mut manifest = BufWriter::new(File::create(out.join("manifest.jsonl"))?);
    for t in 0..scene.frames {
        let name = frame_file_name(t);
        scene.render(t).to_rgb_image().save(frames.join(&name))?;
        save_paletted_png(&scene.ground_truth(t), &masks.join(&name))?;
        let entry = ManifestEntry {
            image_path: Path::new("frames").join(&name),
            mask_path: Path::new("masks").join(&name),
            label_kind: LabelKind::Instance,
        };
        serde_json::to_writer(&mut manifest, &entry)?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    Ok(())
}

pub fn cmd_synth(args: SynthArgs) -> CmdResult {
    let scene = build_scene(args.scene, args.frames);
    scene.validate().usage()?;
    write_scene(&scene, &args.out).runtime()?;
    println!("{} frames of {}x{} -> {}", scene.frames, scene.width, scene.height, args.out.display());
    Ok(())
}
