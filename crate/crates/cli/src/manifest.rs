use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::settings::Settings;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Peak resident set in KiB, when the platform exposes it.
pub fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub config_hash: String,
    pub seed: u64,
    /// `(role, path, sha256)`.
    pub inputs: Vec<(String, String, String)>,
    /// `(role, path)`.
    pub outputs: Vec<(String, String)>,
    /// Command-specific facts, such as the checksum of the loaded graph.
    pub extra: Vec<(String, String)>,
    pub seconds: f64,
    pub peak_rss_kib: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings) -> Self {
        Self {
            command: command.to_string(),
            config: settings.to_kv(),
            config_hash: settings.hash(),
            seed: settings.train.seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: Vec::new(),
            seconds: 0.0,
            peak_rss_kib: None,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let sum = sha256_file(path)?;
        self.inputs.push((role.into(), path.display().to_string(), sum));
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs.push((role.into(), path.display().to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        for (role, path, sum) in &self.inputs {
            let _ = writeln!(s, "input.{role} = {path}");
            let _ = writeln!(s, "input.{role}.sha256 = {sum}");
        }
        for (role, path) in &self.outputs {
            let _ = writeln!(s, "output.{role} = {path}");
        }
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "seconds = {:.3}", self.seconds);
        if let Some(kib) = self.peak_rss_kib {
            let _ = writeln!(s, "peak_rss_kib = {kib}");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.render().as_bytes())
    }

    /// Value of `key` in a rendered manifest.
    pub fn lookup(text: &str, key: &str) -> Option<String> {
        text.lines().find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.trim().to_string())
        })
    }
}
