use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use bigsel::alloc::{allocated_bytes, counting_enabled, peak_rss_bytes};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> anyhow::Result<FileDigest> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut bytes = 0u64;
    loop {
        let got = file.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if got == 0 {
            break;
        }
        hasher.update(&buf[..got]);
        bytes += got as u64;
    }
    let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(FileDigest {
        path: path.to_path_buf(),
        bytes,
        sha256,
    })
}

#[derive(Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Outcome {
    pub status: &'static str,
    pub exit_code: i32,
    pub message: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Memory {
    pub counting_allocator: bool,
    pub cum_alloc_bytes: u64,
    pub peak_rss_bytes: Option<u64>,
}

/// One record per invocation: what ran, on which inputs, how long it took
/// and how it ended.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub started_unix: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stages: Vec<Stage>,
    pub stats: Option<serde_json::Value>,
    pub memory: Option<Memory>,
    pub outcome: Option<Outcome>,
    #[serde(skip)]
    path: Option<PathBuf>,
    #[serde(skip)]
    clock: Instant,
    #[serde(skip)]
    alloc_start: u64,
}

impl RunManifest {
    pub fn new(command: &'static str, path: Option<PathBuf>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
            stats: None,
            memory: None,
            outcome: None,
            path,
            clock: Instant::now(),
            alloc_start: allocated_bytes(),
        }
    }

    pub fn echo<T: Serialize>(&mut self, config: &T) {
        self.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
    }

    /// Runs `f` as a named, timed stage.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> anyhow::Result<T>) -> anyhow::Result<T> {
        let start = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let d = self.stage(&format!("digest {}", path.display()), || digest_file(path))?;
        self.inputs.push(d);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.outputs.push(digest_file(path)?);
        Ok(())
    }

    /// Stamps the outcome and writes the manifest, if it has a destination.
    pub fn finish(mut self, result: &anyhow::Result<()>, exit_code: i32) -> anyhow::Result<Option<PathBuf>> {
        self.stages.push(Stage {
            name: "total".into(),
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.memory = Some(Memory {
            counting_allocator: counting_enabled(),
            cum_alloc_bytes: allocated_bytes() - self.alloc_start,
            peak_rss_bytes: peak_rss_bytes(),
        });
        self.outcome = Some(match result {
            Ok(()) => Outcome {
                status: "ok",
                exit_code: 0,
                message: None,
            },
            Err(e) => Outcome {
                status: "error",
                exit_code,
                message: Some(format!("{e:#}")),
            },
        });
        let Some(path) = self.path.clone() else {
            return Ok(None);
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let body = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, body + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(Some(path))
    }
}
