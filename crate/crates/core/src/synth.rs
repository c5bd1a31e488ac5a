//! Synthetic two-model corpora.
//!
//! Speakers are unit latent vectors. Every utterance is a noisy copy of its
//! speaker's latent and is observed by both models: model Y sees
//! `normalize(z + σ_lo·ε)` and model X (the noisier one) additionally sees
//! `sqrt(σ_hi² − σ_lo²)·ε'`, so both corpora share utterance ids and the worse
//! view is a degraded observation of the better one. Each view then passes
//! through its model's distortion map.
//!
//! Distortion parameters come from `model_seed`, speakers and utterances from
//! `seed`; two corpora generated with the same `model_seed` and different
//! `seed` share the two "models" but have disjoint speakers.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, EmbeddingRecord, Label, Split, Trial, TrialSet};
use crate::error::{Error, Result};
use crate::numerics::{length_normalize, matvec, Matrix, Prng, Vector};
use crate::Vec64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Identity,
    Orthogonal,
    Affine,
    MlpNonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub n_enroll_utts: usize,
    pub n_runtime_utts: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub within_noise_x: f64,
    pub within_noise_y: f64,
    pub distortion_x: DistortionKind,
    pub distortion_y: DistortionKind,
    /// Ratio of largest to smallest singular value of the linear part of an
    /// affine or nonlinear distortion; 1 keeps it isometric.
    pub anisotropy_x: f64,
    pub anisotropy_y: f64,
    /// Input gain of the tanh layer in `mlp_nonlinear` distortions.
    pub nonlinear_gain: f64,
    pub seed: u64,
    pub model_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_speakers: 2000,
            n_enroll_utts: 5,
            n_runtime_utts: 5,
            latent_dim: 32,
            embed_dim: 32,
            within_noise_x: 2.0,
            within_noise_y: 1.5,
            distortion_x: DistortionKind::Orthogonal,
            distortion_y: DistortionKind::Orthogonal,
            anisotropy_x: 1.0,
            anisotropy_y: 1.0,
            nonlinear_gain: 2.0,
            seed: 0,
            model_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.n_speakers == 0 || self.n_enroll_utts == 0 || self.n_runtime_utts == 0 {
            return bad("speaker and utterance counts must be at least 1");
        }
        if self.latent_dim == 0 || self.embed_dim == 0 {
            return bad("dimensions must be at least 1");
        }
        for s in [self.within_noise_x, self.within_noise_y] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("noise std-devs must be finite and non-negative");
            }
        }
        for a in [self.anisotropy_x, self.anisotropy_y] {
            if !(a >= 1.0 && a.is_finite()) {
                return bad("anisotropy must be a finite ratio >= 1");
            }
        }
        if !(self.nonlinear_gain > 0.0 && self.nonlinear_gain.is_finite()) {
            return bad("nonlinear_gain must be positive");
        }
        for k in [self.distortion_x, self.distortion_y] {
            match k {
                DistortionKind::Identity if self.latent_dim != self.embed_dim => {
                    return bad("identity distortion needs latent_dim == embed_dim")
                }
                DistortionKind::Orthogonal if self.latent_dim > self.embed_dim => {
                    return bad("orthogonal distortion needs latent_dim <= embed_dim")
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// A model's map from latent utterance space to its embedding space.
#[derive(Debug, Clone, PartialEq)]
pub enum Distortion {
    Identity,
    /// `normalize(a·u + b)`.
    Linear { a: Matrix<f64>, b: Vec<f64> },
    /// `normalize(a2·tanh(a1·u))`. Odd, so no constant offset is added to
    /// every embedding.
    Tanh { a1: Matrix<f64>, a2: Matrix<f64> },
}

impl Distortion {
    fn sample(kind: DistortionKind, l: usize, d: usize, anisotropy: f64, gain: f64, rng: &mut Prng) -> Self {
        match kind {
            DistortionKind::Identity => Distortion::Identity,
            DistortionKind::Orthogonal => Distortion::Linear {
                a: random_orthonormal(d, l, rng),
                b: vec![0.0; d],
            },
            DistortionKind::Affine => Distortion::Linear {
                a: spread_matrix(d, l, anisotropy, rng),
                b: scaled_normal(rng, d, 0.3),
            },
            DistortionKind::MlpNonlinear => {
                let h = 2 * l.max(d);
                let a1 = Matrix::from_vec(h, l, scaled_normal(rng, h * l, gain)).expect("shape");
                let a2 = spread_matrix(d, h, anisotropy, rng);
                Distortion::Tanh { a1, a2 }
            }
        }
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec64> {
        match self {
            Distortion::Identity => Ok(Vector::new(u.to_vec())),
            Distortion::Linear { a, b } => {
                let mut y = matvec(a, u)?.into_inner();
                y.iter_mut().zip(b).for_each(|(y, b)| *y += b);
                unit(y)
            }
            Distortion::Tanh { a1, a2 } => {
                let mut h = matvec(a1, u)?.into_inner();
                h.iter_mut().for_each(|h| *h = h.tanh());
                unit(matvec(a2, &h)?.into_inner())
            }
        }
    }
}

/// Latent identities and the two models' distortion maps behind a generated corpus pair.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub speaker_ids: Vec<String>,
    /// Unit-norm latent identity per speaker, in `speaker_ids` order.
    pub latents: Vec<Vec64>,
    pub distortion_x: Distortion,
    pub distortion_y: Distortion,
}

fn unit(v: Vec<f64>) -> Result<Vec64> {
    length_normalize(&Vector::new(v))
}

fn scaled_normal(rng: &mut Prng, n: usize, std: f64) -> Vec<f64> {
    rng.standard_normal(n).into_iter().map(|x| x * std).collect()
}

/// `rows × cols` matrix with orthonormal columns (or rows, when `rows < cols`),
/// by Gram–Schmidt applied twice to a Gaussian matrix.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut Prng) -> Matrix<f64> {
    let (n, k) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = rng.standard_normal(n);
        for _ in 0..2 {
            for q in &basis {
                let p: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
            }
        }
        if let Ok(u) = unit(v) {
            basis.push(u.into_inner());
        }
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, q) in basis.iter().enumerate() {
        for (i, &x) in q.iter().enumerate() {
            if rows >= cols {
                m[(i, j)] = x;
            } else {
                m[(j, i)] = x;
            }
        }
    }
    m
}

/// `U·diag(s)·Vᵀ` with random orthonormal factors and singular values spaced
/// geometrically from 1 down to `1 / anisotropy`.
fn spread_matrix(rows: usize, cols: usize, anisotropy: f64, rng: &mut Prng) -> Matrix<f64> {
    let k = rows.min(cols);
    let u = random_orthonormal(rows, k, rng);
    let v = random_orthonormal(cols, k, rng);
    let s: Vec<f64> = (0..k)
        .map(|i| {
            let t = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 };
            anisotropy.powf(-t)
        })
        .collect();
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = (0..k).map(|c| u[(i, c)] * s[c] * v[(j, c)]).sum();
        }
    }
    m
}

/// Generates utterance-paired corpora for models "X" and "Y".
pub fn generate(config: &SynthConfig) -> Result<(Corpus, Corpus, GroundTruth)> {
    config.validate()?;
    let (l, d) = (config.latent_dim, config.embed_dim);
    let mut model_rng = Prng::with_stream(config.model_seed, 1);
    let distortion_x = Distortion::sample(
        config.distortion_x,
        l,
        d,
        config.anisotropy_x,
        config.nonlinear_gain,
        &mut model_rng,
    );
    let distortion_y = Distortion::sample(
        config.distortion_y,
        l,
        d,
        config.anisotropy_y,
        config.nonlinear_gain,
        &mut model_rng,
    );

    let (sx, sy) = (config.within_noise_x, config.within_noise_y);
    let base = sx.min(sy);
    let extra = (sx.max(sy).powi(2) - base * base).sqrt();
    let per_dim = 1.0 / (l as f64).sqrt();

    let mut rng = Prng::with_stream(config.seed, 0);
    let n_utts = config.n_speakers * (config.n_enroll_utts + config.n_runtime_utts);
    let mut recs_x = Vec::with_capacity(n_utts);
    let mut recs_y = Vec::with_capacity(n_utts);
    let mut speaker_ids = Vec::with_capacity(config.n_speakers);
    let mut latents = Vec::with_capacity(config.n_speakers);

    for s in 0..config.n_speakers {
        let speaker_id = format!("s{}-{:05}", config.seed, s);
        let z = loop {
            if let Ok(z) = unit(rng.standard_normal(l)) {
                break z;
            }
        };
        let splits = std::iter::repeat_n(Split::Enroll, config.n_enroll_utts)
            .chain(std::iter::repeat_n(Split::Runtime, config.n_runtime_utts));
        for (j, split) in splits.enumerate() {
            let tag = if split == Split::Enroll { 'e' } else { 'r' };
            let j = if split == Split::Enroll { j } else { j - config.n_enroll_utts };
            let utterance_id = format!("{speaker_id}-{tag}{j}");
            let shared = rng.standard_normal(l);
            let private = rng.standard_normal(l);
            let clean: Vec<f64> = z
                .iter()
                .zip(&shared)
                .map(|(z, e)| z + base * per_dim * e)
                .collect();
            let noisy: Vec<f64> = clean
                .iter()
                .zip(&private)
                .map(|(c, e)| c + extra * per_dim * e)
                .collect();
            let (ux, uy) = if sx >= sy { (&noisy, &clean) } else { (&clean, &noisy) };
            for (model, u, dist, out) in [
                ("X", ux, &distortion_x, &mut recs_x),
                ("Y", uy, &distortion_y, &mut recs_y),
            ] {
                let u = unit(u.clone())?;
                out.push(EmbeddingRecord {
                    speaker_id: speaker_id.clone(),
                    utterance_id: utterance_id.clone(),
                    model_id: model.to_string(),
                    split,
                    vector: dist.apply(&u)?,
                });
            }
        }
        speaker_ids.push(speaker_id);
        latents.push(z);
    }

    Ok((
        Corpus::from_records(recs_x)?,
        Corpus::from_records(recs_y)?,
        GroundTruth {
            speaker_ids,
            latents,
            distortion_x,
            distortion_y,
        },
    ))
}

/// Draws distinct target and imposter trials from a single-model corpus.
///
/// Targets pair a speaker's profile with one of its own runtime utterances;
/// imposters pair it with a runtime utterance of another speaker, uniformly
/// over all such pairs. The returned list is shuffled.
pub fn make_trials(corpus: &Corpus, n_target: usize, n_imposter: usize, seed: u64) -> Result<TrialSet> {
    let model = corpus.sole_model()?;
    let speakers: Vec<&str> = corpus
        .speakers(model)
        .into_iter()
        .filter(|s| corpus.profile(model, s).is_some())
        .collect();
    let runtime: Vec<(&str, &str)> = corpus
        .runtime_records(model)
        .filter(|r| corpus.profile(model, &r.speaker_id).is_some())
        .map(|r| (r.speaker_id.as_str(), r.utterance_id.as_str()))
        .collect();
    if speakers.len() < 2 || runtime.is_empty() {
        return Err(Error::InsufficientData(
            "need at least two enrolled speakers with runtime utterances".into(),
        ));
    }
    let n_imposter_pairs: usize = {
        let mut per_speaker = std::collections::HashMap::new();
        for (s, _) in &runtime {
            *per_speaker.entry(*s).or_insert(0usize) += 1;
        }
        speakers
            .iter()
            .map(|s| runtime.len() - per_speaker.get(s).copied().unwrap_or(0))
            .sum()
    };
    if n_target > runtime.len() {
        return Err(Error::InsufficientData(format!(
            "{n_target} target trials requested, {} available",
            runtime.len()
        )));
    }
    if n_imposter > n_imposter_pairs {
        return Err(Error::InsufficientData(format!(
            "{n_imposter} imposter trials requested, {n_imposter_pairs} available"
        )));
    }

    let mut rng = Prng::with_stream(seed, 7);
    let trial = |spk: &str, utt: &str, label| Trial {
        enroll_speaker_id: spk.to_string(),
        test_utterance_id: utt.to_string(),
        label,
    };
    let mut trials: Vec<Trial> = rng
        .sample_indices(runtime.len(), n_target)
        .into_iter()
        .map(|i| trial(runtime[i].0, runtime[i].1, Label::Target))
        .collect();

    if 2 * n_imposter <= n_imposter_pairs {
        let mut seen = HashSet::with_capacity(n_imposter);
        while seen.len() < n_imposter {
            let s = rng.index(speakers.len());
            let u = rng.index(runtime.len());
            if runtime[u].0 != speakers[s] && seen.insert((s, u)) {
                trials.push(trial(speakers[s], runtime[u].1, Label::Imposter));
            }
        }
    } else {
        let all: Vec<(usize, usize)> = (0..speakers.len())
            .flat_map(|s| (0..runtime.len()).map(move |u| (s, u)))
            .filter(|&(s, u)| runtime[u].0 != speakers[s])
            .collect();
        for i in rng.sample_indices(all.len(), n_imposter) {
            let (s, u) = all[i];
            trials.push(trial(speakers[s], runtime[u].1, Label::Imposter));
        }
    }
    rng.shuffle(&mut trials);
    Ok(TrialSet::new(trials))
}
