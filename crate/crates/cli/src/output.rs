use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use spkalign::data::format::config_hash;
use spkalign::data::ArtifactMeta;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit code 2.
    Usage(String),
    /// Unreadable, inconsistent or insufficient data; exit code 1.
    Data(spkalign::Error),
    /// The command ran but its check failed; exit code 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<spkalign::Error> for CliError {
    fn from(e: spkalign::Error) -> Self {
        match e {
            spkalign::Error::ConfigInvalid(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Destination of a command's primary output.
pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    pub fn resolve(out: Option<PathBuf>, stdout: bool, what: &str) -> CliResult<Sink> {
        match (out, stdout) {
            (Some(_), true) => Err(usage(format!("--out and --stdout both given for the {what}"))),
            (Some(p), false) => Ok(Sink::File(p)),
            (None, true) => Ok(Sink::Stdout),
            (None, false) => Err(usage(format!("the {what} needs --out or --stdout"))),
        }
    }

    pub fn write_with(&self, f: impl FnOnce(&mut dyn Write) -> spkalign::Result<()>) -> CliResult<()> {
        let io_err = |path: &Path, e: io::Error| {
            CliError::Data(spkalign::Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        };
        match self {
            Sink::Stdout => {
                let mut w = io::stdout().lock();
                f(&mut w)?;
                w.flush().map_err(|e| io_err(Path::new("<stdout>"), e))
            }
            Sink::File(p) => {
                let file = File::create(p).map_err(|e| io_err(p, e))?;
                let mut w = BufWriter::new(file);
                f(&mut w).map_err(|e| match e {
                    spkalign::Error::Io { source, .. } => io_err(p, source),
                    other => other.into(),
                })?;
                w.flush().map_err(|e| io_err(p, e))
            }
        }
    }

    pub fn write_str(&self, text: &str) -> CliResult<()> {
        self.write_with(|w| {
            w.write_all(text.as_bytes())
                .map_err(|e| spkalign::Error::Io { path: "<stream>".into(), source: e })
        })
    }
}

/// Provenance for a command run: the hash covers the command name and its
/// effective parameters, never file paths.
pub fn meta_for<P: Serialize>(command: &str, params: &P, seed: u64) -> ArtifactMeta {
    let canonical = serde_json::json!({ "command": command, "params": params });
    ArtifactMeta::new(seed, config_hash(canonical.to_string().as_bytes()))
}

pub fn read_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<C> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}
