//! Stage artifacts and their sidecar manifests.
//!
//! Every artifact `x` is written next to `x.manifest.json`. The manifest
//! names the producing stage, its parameters, the version strings it
//! depended on and the manifests of every upstream artifact, transitively.
//! A stage can be skipped when its manifest still matches what would be
//! written now and the artifact's bytes still hash to the recorded value.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    /// Path of the artifact relative to the output directory.
    pub artifact: String,
    pub artifact_sha256: String,
    pub params: BTreeMap<String, String>,
    /// Source files read directly by the stage, with their hashes.
    pub inputs: BTreeMap<String, String>,
    /// Upstream manifests (relative path to hash), closed under "consumed".
    pub upstream: BTreeMap<String, String>,
    /// Counts and other facts about the artifact.
    pub summary: BTreeMap<String, String>,
}

impl Manifest {
    /// Everything except the artifact hash and summary: if this matches, the
    /// stage would produce the same artifact.
    fn fingerprint(&self) -> (&str, &str, &BTreeMap<String, String>, &BTreeMap<String, String>, &BTreeMap<String, String>) {
        (&self.stage, &self.artifact, &self.params, &self.inputs, &self.upstream)
    }
}

/// What a stage is about to do; becomes a [`Manifest`] once written.
#[derive(Debug, Clone, Default)]
pub struct StageSpec {
    pub stage: String,
    pub params: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub upstream: BTreeMap<String, String>,
}

impl StageSpec {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input_file(mut self, path: &Path) -> io::Result<Self> {
        let bytes = fs::read(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(self)
    }

    /// Cites `upstream` and, through it, everything it cites.
    pub fn after(mut self, upstream: &Written) -> Self {
        self.upstream.extend(upstream.manifest.upstream.clone());
        self.upstream
            .insert(upstream.manifest_path.clone(), upstream.manifest_sha256.clone());
        self
    }
}

/// A written (or reused) artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written {
    pub manifest: Manifest,
    pub manifest_path: String,
    pub manifest_sha256: String,
    pub reused: bool,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

fn manifest_path(rel: &str) -> String {
    format!("{rel}.manifest.json")
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// The existing artifact if its manifest matches `spec` and its bytes
    /// are intact.
    pub fn reusable(&self, rel: &str, spec: &StageSpec) -> Option<(Vec<u8>, Written)> {
        let mpath = manifest_path(rel);
        let mbytes = fs::read(self.path(&mpath)).ok()?;
        let manifest: Manifest = serde_json::from_slice(&mbytes).ok()?;
        let expected = Manifest {
            stage: spec.stage.clone(),
            artifact: rel.to_string(),
            artifact_sha256: String::new(),
            params: spec.params.clone(),
            inputs: spec.inputs.clone(),
            upstream: spec.upstream.clone(),
            summary: BTreeMap::new(),
        };
        if manifest.fingerprint() != expected.fingerprint() {
            return None;
        }
        let bytes = fs::read(self.path(rel)).ok()?;
        if sha256_hex(&bytes) != manifest.artifact_sha256 {
            return None;
        }
        Some((
            bytes,
            Written {
                manifest,
                manifest_sha256: sha256_hex(&mbytes),
                manifest_path: mpath,
                reused: true,
            },
        ))
    }

    pub fn write(
        &self,
        rel: &str,
        bytes: &[u8],
        spec: StageSpec,
        summary: BTreeMap<String, String>,
    ) -> io::Result<Written> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        let manifest = Manifest {
            stage: spec.stage,
            artifact: rel.to_string(),
            artifact_sha256: sha256_hex(bytes),
            params: spec.params,
            inputs: spec.inputs,
            upstream: spec.upstream,
            summary,
        };
        let mut mbytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        mbytes.push(b'\n');
        let mpath = manifest_path(rel);
        fs::write(self.path(&mpath), &mbytes)?;
        Ok(Written {
            manifest,
            manifest_sha256: sha256_hex(&mbytes),
            manifest_path: mpath,
            reused: false,
        })
    }

    /// Reuses the artifact when possible, otherwise runs `produce` and writes
    /// its output. `produce` returns the bytes plus summary entries.
    pub fn stage<E>(
        &self,
        rel: &str,
        spec: StageSpec,
        produce: impl FnOnce() -> Result<(Vec<u8>, BTreeMap<String, String>), E>,
    ) -> Result<(Vec<u8>, Written), StageFailure<E>> {
        if let Some(hit) = self.reusable(rel, &spec) {
            return Ok(hit);
        }
        let (bytes, summary) = produce().map_err(StageFailure::Stage)?;
        let written = self.write(rel, &bytes, spec, summary).map_err(StageFailure::Io)?;
        Ok((bytes, written))
    }

    /// Sorted `sha256  path` lines over `artifacts` and their manifests,
    /// followed by a digest of those lines.
    pub fn bundle_listing(&self, artifacts: &[String]) -> io::Result<(String, String)> {
        let mut files: Vec<String> = artifacts
            .iter()
            .flat_map(|a| [a.clone(), manifest_path(a)])
            .collect();
        files.sort();
        files.dedup();
        let mut listing = String::new();
        for rel in &files {
            let bytes = fs::read(self.root.join(rel))?;
            listing.push_str(&format!("{}  {}\n", sha256_hex(&bytes), rel));
        }
        let digest = sha256_hex(listing.as_bytes());
        Ok((listing, digest))
    }
}

#[derive(Debug)]
pub enum StageFailure<E> {
    Stage(E),
    Io(io::Error),
}

impl<E: std::fmt::Display> std::fmt::Display for StageFailure<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageFailure::Stage(e) => e.fmt(f),
            StageFailure::Io(e) => write!(f, "writing artifact: {e}"),
        }
    }
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("item serializes");
        out.push(b'\n');
    }
    out
}

pub fn from_jsonl<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
