use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use tapseg_core::config::ExperimentConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterVersion {
    pub name: String,
    pub version: String,
}

impl AdapterVersion {
    fn local(name: &str) -> Self {
        AdapterVersion {
            name: name.into(),
            version: tapseg_core::VERSION.into(),
        }
    }

    /// Remote backends are identified by their address.
    fn of(name: &str, addr: Option<&str>) -> Self {
        match addr {
            Some(a) if name == "remote" => AdapterVersion {
                name: name.into(),
                version: format!("remote@{a}"),
            },
            _ => Self::local(name),
        }
    }
}

/// Everything needed to reproduce a command's outputs. Written once, before
/// any output, and never modified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tapseg_version: String,
    pub seed: u64,
    pub adapters: BTreeMap<String, AdapterVersion>,
    pub started_at: String,
    pub out_dir: PathBuf,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, out_dir: &Path) -> Self {
        let mut adapters = BTreeMap::new();
        if command != "finetune" {
            adapters.insert(
                "tracker".into(),
                AdapterVersion::of(&config.tracker.name, config.tracker.addr.as_deref()),
            );
            adapters.insert(
                "segmenter".into(),
                AdapterVersion::of(&config.segmenter.name, config.segmenter.addr.as_deref()),
            );
        } else {
            adapters.insert("model".into(), AdapterVersion::local("linear_toy"));
        }
        RunManifest {
            command: command.into(),
            tapseg_version: tapseg_core::VERSION.into(),
            seed: config.sampling.seed,
            adapters,
            started_at: now(),
            out_dir: out_dir.to_path_buf(),
            config: config.clone(),
        }
    }

    /// Write `manifest.json` into `dir` via a same-directory rename, then
    /// mark it read-only.
    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write into {}", dir.display()))?;
        serde_json::to_writer_pretty(&mut tmp, self)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        if path.exists() {
            // a previous run into the same directory left its manifest read-only
            let mut perms = fs::metadata(&path)?.permissions();
            #[allow(clippy::permissions_set_readonly_false)]
            perms.set_readonly(false);
            fs::set_permissions(&path, perms)?;
        }
        tmp.persist(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut perms = fs::metadata(&path)?.permissions();
        perms.set_readonly(true);
        fs::set_permissions(&path, perms)?;
        Ok(path)
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn written_manifest_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::default();
        config.set_seed(9);
        let m = RunManifest::new("run", &config, dir.path());
        let path = m.write(dir.path()).unwrap();
        let back: RunManifest = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.seed, 9);
        assert_eq!(back.adapters["tracker"].name, "ncc");
        assert!(fs::metadata(&path).unwrap().permissions().readonly());
        // rerunning into the same directory replaces it
        m.write(dir.path()).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn remote_adapters_record_their_address() {
        let v = AdapterVersion::of("remote", Some("10.0.0.2:7000"));
        assert_eq!(v.version, "remote@10.0.0.2:7000");
        assert_eq!(AdapterVersion::of("ncc", None).version, tapseg_core::VERSION);
    }
}
