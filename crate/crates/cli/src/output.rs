//! Artifact writers. Every file carries the same provenance block: as `#`
//! comment lines in CSVs and as a `provenance` object in JSON.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Bumped whenever the layout of an output file changes.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub artifact_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub config: serde_json::Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

impl Provenance {
    pub fn new(run: &RunConfig) -> CliResult<Self> {
        let config = serde_json::to_value(run).map_err(|e| CliError::Internal(e.to_string()))?;
        let canonical = serde_json::to_vec(&config).map_err(|e| CliError::Internal(e.to_string()))?;
        let input_sha256 = match &run.input {
            Some(p) => Some(file_sha256(p).map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?),
            None => None,
        };
        Ok(Provenance {
            tool: "drofolio",
            version: env!("CARGO_PKG_VERSION"),
            artifact_version: ARTIFACT_VERSION,
            command: run.command.as_str(),
            seed: run.seed,
            config_sha256: hex(&Sha256::digest(&canonical)),
            input_sha256,
            config,
        })
    }

    pub fn comment_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("{} {} artifact {}", self.tool, self.version, self.artifact_version),
            format!("command {}", self.command),
            format!("seed {}", self.seed),
            format!("config_sha256 {}", self.config_sha256),
        ];
        if let Some(h) = &self.input_sha256 {
            lines.push(format!("input_sha256 {h}"));
        }
        lines.push(format!("config {}", self.config));
        lines
    }
}

/// Writes artifacts into one output directory.
pub struct ArtifactDir {
    root: PathBuf,
    provenance: Provenance,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    result: &'a T,
}

impl ArtifactDir {
    pub fn create(root: &Path, provenance: Provenance) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        Ok(ArtifactDir {
            root: root.to_path_buf(),
            provenance,
        })
    }

    fn open(&self, name: &str) -> CliResult<(PathBuf, BufWriter<File>)> {
        let path = self.root.join(name);
        let f = File::create(&path).map_err(|e| CliError::output(&path, e))?;
        Ok((path, BufWriter::new(f)))
    }

    pub fn json<T: Serialize>(&self, name: &str, result: &T) -> CliResult<PathBuf> {
        let (path, mut w) = self.open(name)?;
        let env = Envelope {
            provenance: &self.provenance,
            result,
        };
        serde_json::to_writer_pretty(&mut w, &env).map_err(|e| CliError::output(&path, e))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::output(&path, e))?;
        tracing::info!(path = %path.display(), "wrote artifact");
        Ok(path)
    }

    /// Hands a writer positioned after the provenance comments to `body`.
    pub fn csv<F>(&self, name: &str, body: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>, &[String]) -> drofolio::Result<()>,
    {
        let (path, mut w) = self.open(name)?;
        body(&mut w, &self.provenance.comment_lines()).map_err(|e| CliError::output(&path, e))?;
        w.flush().map_err(|e| CliError::output(&path, e))?;
        tracing::info!(path = %path.display(), "wrote artifact");
        Ok(path)
    }

    /// CSV with a header row and string cells.
    pub fn table(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        self.csv(name, |w, comments| {
            for c in comments {
                writeln!(w, "# {c}")?;
            }
            let mut out = csv::Writer::from_writer(w);
            out.write_record(header)?;
            for r in rows {
                out.write_record(r)?;
            }
            out.flush()?;
            Ok(())
        })
    }
}
