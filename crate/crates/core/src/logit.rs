//! Scoring in a shared speaker-logit space.
//!
//! Each model's embedding is turned into a vector of similarities against the
//! same `N` reference speakers (`l = W·r`, one voice profile per row of `W`), and
//! the two logit vectors are compared by cosine. Stacking the weight matrices
//! side by side into `W̃ = [W_X, W_Y]` (N × 2d) and factoring `W̃ᵀW̃ = M̃ᵀM̃` with an
//! upper-triangular `M̃` gives the same score as `cos(M̃·[e; 0], M̃·[0; r])`, whose
//! cost no longer depends on `N`.

use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use crate::data::format::{to_json_fixed, PARAM_DIGITS};
use crate::data::{ArtifactMeta, VoiceProfile};
use crate::error::{Error, Result};
use crate::numerics::{cholesky_upper, cosine_similarity, matvec, Matrix};
use crate::scalar::Scalar;

/// Post-hoc classification weights: row `i` is the voice profile of `speaker_order[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    pub model_id: String,
    pub speaker_order: Vec<String>,
    pub w: Matrix<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn n_speakers(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    /// Size tag in the `1K` / `10K` / `200K` style used to name logit-alignment settings.
    pub fn size_tag(&self) -> String {
        let n = self.n_speakers();
        if n >= 1000 && n.is_multiple_of(1000) {
            format!("{}K", n / 1000)
        } else {
            n.to_string()
        }
    }
}

pub fn build_weight_matrix<T: Scalar>(
    profiles: &[VoiceProfile],
    speaker_order: &[String],
) -> Result<WeightMatrix<T>> {
    let mut seen = std::collections::HashSet::new();
    for s in speaker_order {
        if !seen.insert(s.as_str()) {
            return Err(Error::DuplicateRecord(format!("speaker {s} listed twice")));
        }
    }
    let by_speaker: std::collections::HashMap<&str, &VoiceProfile> = profiles
        .iter()
        .map(|p| (p.speaker_id.as_str(), p))
        .collect();
    let model_id = profiles
        .first()
        .map(|p| p.model_id.clone())
        .unwrap_or_default();
    if let Some(p) = profiles.iter().find(|p| p.model_id != model_id) {
        return Err(Error::ModelMismatch {
            expected: model_id,
            got: p.model_id.clone(),
        });
    }
    let dim = profiles.first().map_or(0, |p| p.vector.dim());
    let mut values = Vec::with_capacity(speaker_order.len() * dim);
    for s in speaker_order {
        let p = by_speaker
            .get(s.as_str())
            .ok_or_else(|| Error::MissingSpeaker(s.clone()))?;
        if p.vector.dim() != dim {
            return Err(Error::dim(format!("profile {s}"), dim, p.vector.dim()));
        }
        values.extend(p.vector.iter().map(|&v| T::lit(v)));
    }
    Ok(WeightMatrix {
        model_id,
        speaker_order: speaker_order.to_vec(),
        w: Matrix::from_vec(speaker_order.len(), dim, values)?,
    })
}

fn check_pair<T: Scalar>(wx: &WeightMatrix<T>, wy: &WeightMatrix<T>) -> Result<()> {
    if wx.speaker_order != wy.speaker_order {
        return Err(Error::SpeakerOrderMismatch);
    }
    if wx.dim() != wy.dim() {
        return Err(Error::dim("embedding dimension of W_Y", wx.dim(), wy.dim()));
    }
    Ok(())
}

/// `cos(W_X·e, W_Y·r)` computed in the full `N`-dimensional logit space.
pub fn logit_score_direct<T: Scalar>(
    e_x: &[T],
    r_y: &[T],
    wx: &WeightMatrix<T>,
    wy: &WeightMatrix<T>,
) -> Result<T> {
    check_pair(wx, wy)?;
    let le = matvec(&wx.w, e_x)?;
    let lr = matvec(&wy.w, r_y)?;
    cosine_similarity(&le, &lr)
}

/// Upper-triangular `M̃` (2d × 2d) with `M̃ᵀM̃ = W̃ᵀW̃ + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTransform<T> {
    pub m: Matrix<T>,
    pub d: usize,
    pub n_speakers: usize,
    pub jitter_applied: T,
}

pub fn compute_fusion_transform<T: Scalar>(
    wx: &WeightMatrix<T>,
    wy: &WeightMatrix<T>,
) -> Result<FusionTransform<T>> {
    check_pair(wx, wy)?;
    let (n, d) = (wx.n_speakers(), wx.dim());
    let mut stacked = Matrix::zeros(n, 2 * d);
    for i in 0..n {
        let row = stacked.row_mut(i);
        row[..d].copy_from_slice(wx.w.row(i));
        row[d..].copy_from_slice(wy.w.row(i));
    }
    let factor = cholesky_upper(&stacked.gram())?;
    Ok(FusionTransform {
        m: factor.upper,
        d,
        n_speakers: n,
        jitter_applied: factor.jitter,
    })
}

impl<T: Scalar> FusionTransform<T> {
    /// `M̃·[e; 0]`. Only the top-left block of `M̃` contributes.
    pub fn project_enroll(&self, e_x: &[T]) -> Result<Vec<T>> {
        self.project(e_x, 0)
    }

    /// `M̃·[0; r]`.
    pub fn project_runtime(&self, r_y: &[T]) -> Result<Vec<T>> {
        self.project(r_y, self.d)
    }

    fn project(&self, v: &[T], offset: usize) -> Result<Vec<T>> {
        if v.len() != self.d {
            return Err(Error::dim("fusion transform input", self.d, v.len()));
        }
        let n = 2 * self.d;
        // rows below offset + d are zero for the enroll half (upper-triangular)
        let live_rows = (offset + self.d).min(n);
        let mut out = vec![T::zero(); n];
        for (i, o) in out.iter_mut().enumerate().take(live_rows) {
            let row = &self.m.row(i)[offset..offset + self.d];
            let mut acc = T::zero();
            for (&a, &b) in row.iter().zip(v) {
                acc += a * b;
            }
            *o = acc;
        }
        Ok(out)
    }

    pub fn to_json(&self, meta: Option<&ArtifactMeta>) -> String {
        let mut v = json!({
            "d": self.d,
            "N": self.n_speakers,
            "jitter_applied": self.jitter_applied.to_f64_lossy(),
            "m": self.m.as_slice().iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>(),
        });
        if let Some(meta) = meta {
            v["meta"] = serde_json::to_value(meta).expect("meta serializes");
        }
        to_json_fixed(&v, PARAM_DIGITS)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            d: usize,
            #[serde(rename = "N")]
            n: usize,
            jitter_applied: f64,
            m: Vec<f64>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let m = Matrix::from_vec(
            2 * raw.d,
            2 * raw.d,
            raw.m.into_iter().map(T::lit).collect(),
        )?;
        if !m.is_upper_triangular() {
            return Err(Error::ShapeMismatch("fusion matrix is not upper-triangular".into()));
        }
        Ok(FusionTransform {
            m,
            d: raw.d,
            n_speakers: raw.n,
            jitter_applied: T::lit(raw.jitter_applied),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: Option<&ArtifactMeta>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json(meta) + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// `cos(M̃·[e; 0], M̃·[0; r])`.
pub fn logit_score_fused<T: Scalar>(e_x: &[T], r_y: &[T], f: &FusionTransform<T>) -> Result<T> {
    let a = f.project_enroll(e_x)?;
    let b = f.project_runtime(r_y)?;
    cosine_similarity(&a, &b)
}
