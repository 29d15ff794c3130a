use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance shared by every file of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: String,
    pub command: &'static str,
}

impl Meta {
    /// `config` is the first 16 hex digits of the SHA-256 of the resolved settings.
    pub fn new<T: Serialize>(command: &'static str, resolved: &T) -> Result<Self, CliError> {
        let bytes = serde_json::to_vec(resolved).map_err(|e| CliError::Estimation(e.to_string()))?;
        let digest = Sha256::digest(&bytes);
        Ok(Meta { tool: "survfair", version: VERSION, config: hex::encode(digest)[..16].to_string(), command })
    }

    pub fn comment(&self) -> String {
        format!("{} {} config={}", self.tool, self.version, self.config)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files produced by one command, written together at the end.
pub struct Outputs {
    dir: PathBuf,
    meta: Meta,
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

impl Outputs {
    pub fn new(dir: &Path, meta: Meta) -> Self {
        Outputs { dir: dir.to_path_buf(), meta, files: Vec::new() }
    }

    /// A CSV body produced by `f`, which receives the header comment lines.
    pub fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>, &[String]) -> survfair::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf, &[self.meta.comment()])?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    /// A JSON object with a leading `meta` field; `body` must serialize to an object.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&WithMeta { meta: &self.meta, body }).map_err(|e| CliError::Estimation(e.to_string()))?;
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
        Ok(())
    }

    pub fn write(self) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", self.dir.display())))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::Estimation(format!("cannot write {}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}
