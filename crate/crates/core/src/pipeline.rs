//! Scorer dispatch and experiment plumbing shared by the command-line tool and
//! the acceptance experiments.
//!
//! Trials pair a speaker's enrollment profile with a runtime utterance. The
//! profile side always comes from the X corpus and the runtime side from the Y
//! corpus, except for the two symmetric scorers.

use std::collections::HashMap;

use crate::data::{Corpus, TrialSet};
use crate::error::{Error, Result};
use crate::logit::{build_weight_matrix, compute_fusion_transform, FusionTransform};
use crate::metrics::score_trials;
use crate::nessa::{Checkpoint, PairedData, Variant};
use crate::numerics::{cosine_similarity, Matrix, Prng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScorerKind {
    CosineSymX,
    CosineSymY,
    CosineAsymRaw,
    LogitFused,
    NessaM1,
    NessaM2,
    NessaM3,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 7] = [
        ScorerKind::CosineSymX,
        ScorerKind::CosineSymY,
        ScorerKind::CosineAsymRaw,
        ScorerKind::LogitFused,
        ScorerKind::NessaM1,
        ScorerKind::NessaM2,
        ScorerKind::NessaM3,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ScorerKind::CosineSymX => "cosine-sym-x",
            ScorerKind::CosineSymY => "cosine-sym-y",
            ScorerKind::CosineAsymRaw => "cosine-asym-raw",
            ScorerKind::LogitFused => "logit-fused",
            ScorerKind::NessaM1 => "nessa-m1",
            ScorerKind::NessaM2 => "nessa-m2",
            ScorerKind::NessaM3 => "nessa-m3",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            ScorerKind::NessaM1 => Some(Variant::M1),
            ScorerKind::NessaM2 => Some(Variant::M2),
            ScorerKind::NessaM3 => Some(Variant::M3),
            _ => None,
        }
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown scorer {s:?}")))
    }
}

/// Trained artifacts a scorer may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct Aligners<'a> {
    pub fusion: Option<&'a FusionTransform<f64>>,
    pub checkpoint: Option<&'a Checkpoint<f64>>,
}

type Lookup = HashMap<String, Vec<f64>>;

fn profile_table(corpus: &Corpus, model: &str) -> (Vec<String>, Matrix<f64>) {
    let profiles: Vec<_> = corpus.profiles().iter().filter(|p| p.model_id == model).collect();
    let d = corpus.dimension(model).unwrap_or(0);
    let ids = profiles.iter().map(|p| p.speaker_id.clone()).collect();
    let values = profiles.iter().flat_map(|p| p.vector.iter().copied()).collect();
    (ids, Matrix::from_vec(profiles.len(), d, values).expect("profile shape"))
}

fn runtime_table(corpus: &Corpus, model: &str) -> (Vec<String>, Matrix<f64>) {
    let recs: Vec<_> = corpus.runtime_records(model).collect();
    let d = corpus.dimension(model).unwrap_or(0);
    let ids = recs.iter().map(|r| r.utterance_id.clone()).collect();
    let values = recs.iter().flat_map(|r| r.vector.iter().copied()).collect();
    (ids, Matrix::from_vec(recs.len(), d, values).expect("runtime shape"))
}

fn lookup(ids: Vec<String>, m: &Matrix<f64>) -> Lookup {
    ids.into_iter().enumerate().map(|(i, id)| (id, m.row(i).to_vec())).collect()
}

fn map_rows(m: &Matrix<f64>, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Matrix<f64>> {
    let mut values = Vec::with_capacity(m.rows() * m.cols());
    let mut cols = m.cols();
    for i in 0..m.rows() {
        let v = f(m.row(i))?;
        cols = v.len();
        values.extend(v);
    }
    Matrix::from_vec(m.rows(), cols, values)
}

/// Scores `trials` with one of the scorers. `cx` and `cy` are the single-model
/// evaluation corpora of X and Y.
pub fn score_with(
    kind: ScorerKind,
    trials: &TrialSet,
    cx: &Corpus,
    cy: &Corpus,
    aligners: Aligners<'_>,
) -> Result<TrialSet> {
    let mx = cx.sole_model()?;
    let my = cy.sole_model()?;
    let (enroll_src, runtime_src) = match kind {
        ScorerKind::CosineSymX => ((cx, mx), (cx, mx)),
        ScorerKind::CosineSymY => ((cy, my), (cy, my)),
        _ => ((cx, mx), (cy, my)),
    };
    let (e_ids, e) = profile_table(enroll_src.0, enroll_src.1);
    let (r_ids, r) = runtime_table(runtime_src.0, runtime_src.1);

    let (e, r) = match kind {
        ScorerKind::CosineSymX | ScorerKind::CosineSymY | ScorerKind::CosineAsymRaw => (e, r),
        ScorerKind::LogitFused => {
            let f = aligners
                .fusion
                .ok_or_else(|| Error::ConfigInvalid("logit-fused scoring needs a fusion transform".into()))?;
            (
                map_rows(&e, |v| f.project_enroll(v))?,
                map_rows(&r, |v| f.project_runtime(v))?,
            )
        }
        ScorerKind::NessaM1 | ScorerKind::NessaM2 | ScorerKind::NessaM3 => {
            let ck = aligners
                .checkpoint
                .ok_or_else(|| Error::ConfigInvalid(format!("{} scoring needs a checkpoint", kind.id())))?;
            let want = kind.variant().expect("nessa scorer");
            if ck.variant != want {
                return Err(Error::VariantMismatch {
                    expected: want.as_str().into(),
                    got: ck.variant.as_str().into(),
                });
            }
            (ck.map_enroll(&e)?, ck.map_runtime(&r)?)
        }
    };
    let (e, r) = (lookup(e_ids, &e), lookup(r_ids, &r));
    score_trials(
        trials,
        |s| e.get(s).map(Vec::as_slice),
        |u| r.get(u).map(Vec::as_slice),
        |_, a, b| cosine_similarity(a, b),
    )
}

/// Fusion transform over `n` speakers drawn uniformly without replacement
/// from those with profiles in both corpora. Returns the transform and the
/// chosen speaker order.
pub fn fit_logit(cx: &Corpus, cy: &Corpus, n: usize, seed: u64) -> Result<(FusionTransform<f64>, Vec<String>)> {
    let mx = cx.sole_model()?;
    let my = cy.sole_model()?;
    let shared: Vec<String> = cx
        .profiles()
        .iter()
        .filter(|p| cy.profile(my, &p.speaker_id).is_some())
        .map(|p| p.speaker_id.clone())
        .collect();
    if n == 0 || n > shared.len() {
        return Err(Error::InsufficientData(format!(
            "{n} alignment speakers requested, {} shared",
            shared.len()
        )));
    }
    let mut rng = Prng::with_stream(seed, 9);
    let order: Vec<String> = rng.sample_indices(shared.len(), n).into_iter().map(|i| shared[i].clone()).collect();
    let wx = build_weight_matrix::<f64>(cx.profiles(), &order)?;
    let wy = build_weight_matrix::<f64>(cy.profiles(), &order)?;
    debug_assert_eq!(wx.model_id, mx);
    Ok((compute_fusion_transform(&wx, &wy)?, order))
}

/// Training and validation data from paired training corpora, holding out
/// `val_fraction` of the speakers.
pub fn training_data(
    cx: &Corpus,
    cy: &Corpus,
    val_fraction: f64,
    seed: u64,
) -> Result<(PairedData<f64>, PairedData<f64>)> {
    PairedData::from_corpora(cx, cy)?.split_validation(val_fraction, seed)
}
