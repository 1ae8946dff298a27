//! Output directories and manifests.
//!
//! A command writes into `<output_dir>/run-<hash>/<leaf>.partial/` and renames
//! it to `<leaf>/` once every file is in place. Dropping an unfinished stage
//! removes the partial directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Root of one run: `<output_dir>/run-<config hash>`.
pub fn run_root(config: &RunConfig) -> PathBuf {
    config.paths.output_dir.join(format!("run-{}", config.hash()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(Self { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(&bytes)) })
    }
}

/// Command-line values that change a command's behavior but not the run hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub seeds: Vec<(String, u64)>,
    pub overrides: Overrides,
    pub versions: Vec<(String, String)>,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, overrides: &Overrides) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            seeds: config.seeds(),
            overrides: overrides.clone(),
            versions: vec![
                ("ebmddg".into(), env!("CARGO_PKG_VERSION").into()),
                ("checkpoint_format".into(), "1".into()),
            ],
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// An output directory under construction.
#[derive(Debug)]
pub struct Stage {
    partial: PathBuf,
    target: PathBuf,
    done: bool,
}

impl Stage {
    pub fn begin(target: PathBuf) -> Result<Self, CliError> {
        let name = target.file_name().ok_or_else(|| CliError::internal("stage path has no name"))?;
        let partial = target.with_file_name(format!("{}.partial", name.to_string_lossy()));
        if partial.exists() {
            fs::remove_dir_all(&partial)?;
        }
        fs::create_dir_all(&partial)?;
        Ok(Self { partial, target, done: false })
    }

    /// Path of an output file inside the stage.
    pub fn file(&self, name: &str) -> PathBuf {
        self.partial.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.file(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(CliError::internal)?;
        }
        let bytes = w.into_inner().map_err(CliError::internal)?;
        self.write(name, bytes)
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Writes the manifest (listing every file in the stage) and publishes the directory.
    pub fn commit(mut self, mut manifest: Manifest) -> Result<PathBuf, CliError> {
        let mut outputs = Vec::new();
        list_files(&self.partial, &self.partial, &mut outputs)?;
        outputs.sort();
        manifest.outputs = outputs;
        self.write_json(MANIFEST, &manifest)?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target)?;
        }
        fs::rename(&self.partial, &self.target)?;
        self.done = true;
        Ok(self.target.clone())
    }
}

impl Drop for Stage {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.partial);
        }
    }
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("inside root").to_string_lossy().into_owned());
        }
    }
    Ok(())
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
