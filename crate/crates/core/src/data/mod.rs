//! Embeddings, voice profiles, verification trials and their file formats.

pub mod format;
mod io;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{length_normalize, Vector};
use crate::Vec64;

pub use io::{
    load_embeddings, load_profiles, load_scores, load_trials, save_embeddings, save_profiles,
    save_scores, save_trials, write_embeddings, write_profiles, write_scores, write_trials,
    ArtifactMeta,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Enroll,
    Runtime,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Enroll => "enroll",
            Split::Runtime => "runtime",
        }
    }
}

/// One utterance-level embedding produced by one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub speaker_id: String,
    pub utterance_id: String,
    pub model_id: String,
    pub split: Split,
    pub vector: Vec64,
}

/// Unit-norm average of a speaker's enrollment embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub speaker_id: String,
    pub model_id: String,
    pub vector: Vec64,
}

/// Builds a voice profile: each enrollment embedding is length-normalized, the
/// results are averaged, and the mean is normalized again.
pub fn build_voice_profile<'a, I>(records: I) -> Result<VoiceProfile>
where
    I: IntoIterator<Item = &'a EmbeddingRecord>,
{
    let mut iter = records.into_iter();
    let first = iter.next().ok_or(Error::EmptyEnrollment)?;
    let check = |r: &EmbeddingRecord| -> Result<()> {
        if r.split != Split::Enroll {
            return Err(Error::MixedEnrollment {
                field: "split",
                a: "enroll".into(),
                b: r.split.as_str().into(),
            });
        }
        if r.speaker_id != first.speaker_id {
            return Err(Error::MixedEnrollment {
                field: "speaker_id",
                a: first.speaker_id.clone(),
                b: r.speaker_id.clone(),
            });
        }
        if r.model_id != first.model_id {
            return Err(Error::MixedEnrollment {
                field: "model_id",
                a: first.model_id.clone(),
                b: r.model_id.clone(),
            });
        }
        Ok(())
    };
    check(first)?;
    let dim = first.vector.dim();
    let mut sum = length_normalize(&first.vector)?.into_inner();
    let mut count = 1usize;
    for r in iter {
        check(r)?;
        if r.vector.dim() != dim {
            return Err(Error::dim(
                format!("enrollment utterance {}", r.utterance_id),
                dim,
                r.vector.dim(),
            ));
        }
        let u = length_normalize(&r.vector)?;
        for (s, x) in sum.iter_mut().zip(u.iter()) {
            *s += x;
        }
        count += 1;
    }
    let mean = Vector(sum.into_iter().map(|s| s / count as f64).collect());
    Ok(VoiceProfile {
        speaker_id: first.speaker_id.clone(),
        model_id: first.model_id.clone(),
        vector: length_normalize(&mean)?,
    })
}

/// Embedding records of one or more models plus the voice profiles derived from them.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<EmbeddingRecord>,
    profiles: Vec<VoiceProfile>,
    dims: BTreeMap<String, usize>,
    record_index: HashMap<(String, String, Split), usize>,
    runtime_index: HashMap<(String, String), usize>,
    profile_index: HashMap<(String, String), usize>,
}

impl Corpus {
    /// Validates `records` and builds one profile per (model, speaker) with enrollment data.
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for (i, r) in records.iter().enumerate() {
            if !r.vector.is_finite() {
                return Err(Error::NonFinite(format!("utterance {}", r.utterance_id)));
            }
            let d = *corpus
                .dims
                .entry(r.model_id.clone())
                .or_insert(r.vector.dim());
            if r.vector.dim() != d {
                return Err(Error::dim(
                    format!("utterance {} (model {})", r.utterance_id, r.model_id),
                    d,
                    r.vector.dim(),
                ));
            }
            let key = (r.model_id.clone(), r.utterance_id.clone(), r.split);
            if corpus.record_index.insert(key, i).is_some() {
                return Err(Error::DuplicateRecord(format!(
                    "{}/{}/{}",
                    r.model_id,
                    r.utterance_id,
                    r.split.as_str()
                )));
            }
            if r.split == Split::Runtime {
                corpus
                    .runtime_index
                    .insert((r.model_id.clone(), r.utterance_id.clone()), i);
            }
        }

        // group enrollment records by (model, speaker) in first-appearance order
        let mut order: Vec<(String, String)> = Vec::new();
        let mut groups: HashMap<(String, String), Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.split != Split::Enroll {
                continue;
            }
            let key = (r.model_id.clone(), r.speaker_id.clone());
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(i);
        }
        for key in order {
            let idx = &groups[&key];
            let profile = build_voice_profile(idx.iter().map(|&i| &records[i]))?;
            corpus.profile_index.insert(key, corpus.profiles.len());
            corpus.profiles.push(profile);
        }
        corpus.records = records;
        Ok(corpus)
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn profiles(&self) -> &[VoiceProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Embedding dimension of `model_id`, if the corpus holds records of that model.
    pub fn dimension(&self, model_id: &str) -> Option<usize> {
        self.dims.get(model_id).copied()
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.dims.keys().map(String::as_str)
    }

    /// The single model id of a one-model corpus.
    pub fn sole_model(&self) -> Result<&str> {
        let mut ids = self.model_ids();
        match (ids.next(), ids.next()) {
            (Some(id), None) => Ok(id),
            (None, _) => Err(Error::InsufficientData("corpus is empty".into())),
            (Some(a), Some(b)) => Err(Error::ModelMismatch {
                expected: a.to_string(),
                got: b.to_string(),
            }),
        }
    }

    pub fn profile(&self, model_id: &str, speaker_id: &str) -> Option<&VoiceProfile> {
        self.profile_index
            .get(&(model_id.to_string(), speaker_id.to_string()))
            .map(|&i| &self.profiles[i])
    }

    pub fn runtime(&self, model_id: &str, utterance_id: &str) -> Option<&EmbeddingRecord> {
        self.runtime_index
            .get(&(model_id.to_string(), utterance_id.to_string()))
            .map(|&i| &self.records[i])
    }

    pub fn record(&self, model_id: &str, utterance_id: &str, split: Split) -> Option<&EmbeddingRecord> {
        self.record_index
            .get(&(model_id.to_string(), utterance_id.to_string(), split))
            .map(|&i| &self.records[i])
    }

    pub fn runtime_records<'a>(&'a self, model_id: &'a str) -> impl Iterator<Item = &'a EmbeddingRecord> {
        self.records
            .iter()
            .filter(move |r| r.split == Split::Runtime && r.model_id == model_id)
    }

    /// Speakers of `model_id` in first-appearance order.
    pub fn speakers(&self, model_id: &str) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| r.model_id == model_id)
            .filter(|r| seen.insert(r.speaker_id.as_str()))
            .map(|r| r.speaker_id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Imposter,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Imposter => "imposter",
        }
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }
}

impl std::str::FromStr for Label {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "target" => Ok(Label::Target),
            "imposter" => Ok(Label::Imposter),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trial {
    pub enroll_speaker_id: String,
    pub test_utterance_id: String,
    pub label: Label,
}

/// Ordered verification trials with an optional parallel score column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub scores: Option<Vec<f64>>,
}

impl TrialSet {
    pub fn new(trials: Vec<Trial>) -> Self {
        TrialSet {
            trials,
            scores: None,
        }
    }

    pub fn with_scores(trials: Vec<Trial>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != trials.len() {
            return Err(Error::dim("score column", trials.len(), scores.len()));
        }
        Ok(TrialSet {
            trials,
            scores: Some(scores),
        })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.trials.iter().map(|t| t.label.is_target()).collect()
    }

    /// Checks that every trial resolves to a profile and a runtime utterance of `model_id`.
    pub fn validate_against(&self, corpus: &Corpus, model_id: &str) -> Result<()> {
        for t in &self.trials {
            if corpus.profile(model_id, &t.enroll_speaker_id).is_none() {
                return Err(Error::UnknownId(t.enroll_speaker_id.clone()));
            }
            if corpus.runtime(model_id, &t.test_utterance_id).is_none() {
                return Err(Error::UnknownId(t.test_utterance_id.clone()));
            }
        }
        Ok(())
    }
}
