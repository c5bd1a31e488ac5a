//! Text formats.
//!
//! * embeddings: UTF-8 JSONL, one record per line,
//!   `{"speaker_id","utterance_id","model_id","split","vector"}`
//! * profiles: UTF-8 JSONL, `{"speaker_id","model_id","vector"}`
//! * trials: TSV `enroll_speaker_id \t test_utterance_id \t target|imposter`
//! * scores: trial columns plus a fourth score column
//!
//! Vector components and scores are written with 9 significant digits. JSONL
//! files may start with a `{"_meta": {...}}` line and TSV files with `#` comment
//! lines; readers skip both.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{fmt_list, fmt_sig, VECTOR_DIGITS};
use super::{Corpus, EmbeddingRecord, Label, Split, Trial, TrialSet, VoiceProfile};
use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Provenance stamped into every file the tools write.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl ArtifactMeta {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        ArtifactMeta {
            tool_version: crate::TOOL_VERSION.to_string(),
            seed,
            config_hash: config_hash.into(),
        }
    }

    fn jsonl_line(&self) -> String {
        format!(
            "{{\"_meta\":{}}}\n",
            serde_json::to_string(self).expect("meta serializes")
        )
    }

    fn tsv_line(&self) -> String {
        format!(
            "# tool_version={}\tseed={}\tconfig_hash={}\n",
            self.tool_version, self.seed, self.config_hash
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    speaker_id: String,
    utterance_id: String,
    model_id: String,
    split: Split,
    vector: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    speaker_id: String,
    model_id: String,
    vector: Vec<f64>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Yields `(line_number, line)` for content lines, skipping blanks and metadata.
fn content_lines<'a, R: BufRead + 'a>(
    path: &'a Path,
    reader: R,
    is_meta: fn(&str) -> bool,
) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| {
            let n = i + 1;
            match line {
                Err(e) => Some(Err(Error::io(path, e))),
                Ok(l) => {
                    if n == 1 && l.starts_with('\u{feff}') {
                        return Some(Err(parse_err(path, n, "byte-order mark not allowed")));
                    }
                    if l.ends_with('\r') {
                        return Some(Err(parse_err(path, n, "CRLF line ending not allowed")));
                    }
                    if l.trim().is_empty() || is_meta(&l) {
                        None
                    } else {
                        Some(Ok((n, l)))
                    }
                }
            }
        })
}

fn is_json_meta(l: &str) -> bool {
    l.starts_with("{\"_meta\"")
}

fn is_tsv_comment(l: &str) -> bool {
    l.starts_with('#')
}

const STREAM: &str = "<stream>";

fn write_all<W: Write + ?Sized>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(s.as_bytes()).map_err(|e| Error::io(STREAM, e))
}

/// Runs a stream writer against a new file, reporting io errors against `path`.
fn to_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    write(&mut w)
        .and_then(|_| w.flush().map_err(|e| Error::io(STREAM, e)))
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn finite_vector(path: &Path, line: usize, v: Vec<f64>) -> Result<Vector<f64>> {
    Vector::try_new(v).map_err(|_| parse_err(path, line, "non-finite vector component"))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut records = Vec::new();
    for item in content_lines(path, open(path)?, is_json_meta) {
        let (n, line) = item?;
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(path, n, e.to_string()))?;
        records.push(EmbeddingRecord {
            speaker_id: raw.speaker_id,
            utterance_id: raw.utterance_id,
            model_id: raw.model_id,
            split: raw.split,
            vector: finite_vector(path, n, raw.vector)?,
        });
    }
    Corpus::from_records(records)
}

pub fn save_embeddings(
    corpus: &Corpus,
    path: impl AsRef<Path>,
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    to_file(path.as_ref(), |w| write_embeddings(corpus, w, meta))
}

pub fn write_embeddings<W: Write + ?Sized>(corpus: &Corpus, w: &mut W, meta: Option<&ArtifactMeta>) -> Result<()> {
    if let Some(m) = meta {
        write_all(w, &m.jsonl_line())?;
    }
    for r in corpus.records() {
        let line = format!(
            "{{\"speaker_id\":{},\"utterance_id\":{},\"model_id\":{},\"split\":\"{}\",\"vector\":{}}}\n",
            json_str(&r.speaker_id),
            json_str(&r.utterance_id),
            json_str(&r.model_id),
            r.split.as_str(),
            fmt_list(r.vector.iter().copied(), VECTOR_DIGITS)
        );
        write_all(w, &line)?;
    }
    Ok(())
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<VoiceProfile>> {
    let path = path.as_ref();
    let mut out: Vec<VoiceProfile> = Vec::new();
    for item in content_lines(path, open(path)?, is_json_meta) {
        let (n, line) = item?;
        let raw: RawProfile =
            serde_json::from_str(&line).map_err(|e| parse_err(path, n, e.to_string()))?;
        if let Some(first) = out.first() {
            if first.vector.dim() != raw.vector.len() {
                return Err(Error::dim(
                    format!("profile {}", raw.speaker_id),
                    first.vector.dim(),
                    raw.vector.len(),
                ));
            }
        }
        out.push(VoiceProfile {
            speaker_id: raw.speaker_id,
            model_id: raw.model_id,
            vector: finite_vector(path, n, raw.vector)?,
        });
    }
    Ok(out)
}

pub fn save_profiles(
    profiles: &[VoiceProfile],
    path: impl AsRef<Path>,
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    to_file(path.as_ref(), |w| write_profiles(profiles, w, meta))
}

pub fn write_profiles<W: Write + ?Sized>(profiles: &[VoiceProfile], w: &mut W, meta: Option<&ArtifactMeta>) -> Result<()> {
    if let Some(m) = meta {
        write_all(w, &m.jsonl_line())?;
    }
    for p in profiles {
        let line = format!(
            "{{\"speaker_id\":{},\"model_id\":{},\"vector\":{}}}\n",
            json_str(&p.speaker_id),
            json_str(&p.model_id),
            fmt_list(p.vector.iter().copied(), VECTOR_DIGITS)
        );
        write_all(w, &line)?;
    }
    Ok(())
}

fn parse_trial(path: &Path, n: usize, fields: &[&str]) -> Result<Trial> {
    let label = fields[2]
        .parse::<Label>()
        .map_err(|_| Error::UnknownLabel {
            label: fields[2].to_string(),
            line: n,
        })?;
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err(parse_err(path, n, "empty id field"));
    }
    Ok(Trial {
        enroll_speaker_id: fields[0].to_string(),
        test_utterance_id: fields[1].to_string(),
        label,
    })
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<TrialSet> {
    let path = path.as_ref();
    let mut trials = Vec::new();
    for item in content_lines(path, open(path)?, is_tsv_comment) {
        let (n, line) = item?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                n,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        trials.push(parse_trial(path, n, &fields)?);
    }
    Ok(TrialSet::new(trials))
}

pub fn save_trials(
    trials: &TrialSet,
    path: impl AsRef<Path>,
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    to_file(path.as_ref(), |w| write_trials(trials, w, meta))
}

pub fn write_trials<W: Write + ?Sized>(trials: &TrialSet, w: &mut W, meta: Option<&ArtifactMeta>) -> Result<()> {
    if let Some(m) = meta {
        write_all(w, &m.tsv_line())?;
    }
    for t in &trials.trials {
        let line = format!(
            "{}\t{}\t{}\n",
            t.enroll_speaker_id,
            t.test_utterance_id,
            t.label.as_str()
        );
        write_all(w, &line)?;
    }
    Ok(())
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<TrialSet> {
    let path = path.as_ref();
    let mut trials = Vec::new();
    let mut scores = Vec::new();
    for item in content_lines(path, open(path)?, is_tsv_comment) {
        let (n, line) = item?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                n,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        trials.push(parse_trial(path, n, &fields)?);
        let s: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(path, n, format!("bad score {:?}", fields[3])))?;
        if !s.is_finite() {
            return Err(parse_err(path, n, "non-finite score"));
        }
        scores.push(s);
    }
    TrialSet::with_scores(trials, scores)
}

pub fn save_scores(
    trials: &TrialSet,
    path: impl AsRef<Path>,
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    to_file(path.as_ref(), |w| write_scores(trials, w, meta))
}

pub fn write_scores<W: Write + ?Sized>(trials: &TrialSet, w: &mut W, meta: Option<&ArtifactMeta>) -> Result<()> {
    let scores = trials
        .scores
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("trial set carries no scores".into()))?;
    if let Some(m) = meta {
        write_all(w, &m.tsv_line())?;
    }
    for (t, &s) in trials.trials.iter().zip(scores) {
        let line = format!(
            "{}\t{}\t{}\t{}\n",
            t.enroll_speaker_id,
            t.test_utterance_id,
            t.label.as_str(),
            fmt_sig(s, VECTOR_DIGITS)
        );
        write_all(w, &line)?;
    }
    Ok(())
}
