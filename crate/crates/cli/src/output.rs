//! Output directories written in a staging location and moved into place
//! once complete, with a manifest of content hashes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use longpeer::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct Hashed {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    inputs: Vec<Hashed>,
    outputs: Vec<Hashed>,
}

pub struct Staging {
    tmp: PathBuf,
    target: PathBuf,
    inputs: Vec<Hashed>,
}

impl Staging {
    pub fn new(target: &Path, force: bool) -> Result<Self> {
        if target.exists() {
            let empty = target.is_dir()
                && fs::read_dir(target)
                    .map_err(|e| io(target, e))?
                    .next()
                    .is_none();
            if !empty && !force {
                return Err(Error::InvalidInput(format!(
                    "output directory {} exists and is not empty (use --force)",
                    target.display()
                )));
            }
        }
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let parent = target
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| io(&tmp, e))?;
        Ok(Self {
            tmp,
            target: target.to_path_buf(),
            inputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.tmp
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Hashed {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Records an input that is not a file, such as a preset name.
    pub fn add_named_input(&mut self, name: &str, content: &[u8]) {
        self.inputs.push(Hashed {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(content)),
        });
    }

    pub fn create(&self, rel: &str) -> Result<BufWriter<fs::File>> {
        let path = self.tmp.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| io(&path, e))
    }

    pub fn write(&self, rel: &str, content: &str) -> Result<()> {
        let mut f = self.create(rel)?;
        f.write_all(content.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| io(&self.tmp.join(rel), e))
    }

    /// Writes the manifest and moves the directory into place.
    pub fn finish(mut self, command: &str, seed: Option<u64>) -> Result<PathBuf> {
        let mut files = Vec::new();
        collect_files(&self.tmp, &self.tmp, &mut files)?;
        files.sort();
        let outputs = files
            .iter()
            .map(|rel| {
                Ok(Hashed {
                    path: rel.clone(),
                    sha256: sha256_file(&self.tmp.join(rel))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: "longpeer",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            inputs: std::mem::take(&mut self.inputs),
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.tmp.join("manifest.json");
        fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| io(&self.target, e))?;
        }
        fs::rename(&self.tmp, &self.target).map_err(|e| io(&self.target, e))?;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.tmp.exists() {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let entry = entry.map_err(|e| io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("inside root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
