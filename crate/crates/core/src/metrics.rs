//! Verification metrics: detection sweep, FRR at fixed FAR, EER and the
//! relative-impact figures used to compare systems against a baseline.
//!
//! A trial is accepted when `score >= threshold`.

use serde::{Deserialize, Serialize};

use crate::data::{Trial, TrialSet};
use crate::error::{Error, Result};

/// Operating points reported by default: 12.5%, 5% and 2% FAR.
pub const REPORT_FARS: [f64; 3] = [0.125, 0.05, 0.02];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Empirical FAR/FRR trade-off, ordered by increasing threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_target: usize,
    pub n_imposter: usize,
}

/// Scores every trial; `profile_of` and `runtime_of` resolve ids to vectors.
pub fn score_trials<'a, P, R, S>(
    trials: &TrialSet,
    profile_of: P,
    runtime_of: R,
    mut scorer: S,
) -> Result<TrialSet>
where
    P: Fn(&str) -> Option<&'a [f64]>,
    R: Fn(&str) -> Option<&'a [f64]>,
    S: FnMut(&Trial, &[f64], &[f64]) -> Result<f64>,
{
    let mut scores = Vec::with_capacity(trials.len());
    for t in &trials.trials {
        let e = profile_of(&t.enroll_speaker_id)
            .ok_or_else(|| Error::UnknownId(t.enroll_speaker_id.clone()))?;
        let r = runtime_of(&t.test_utterance_id)
            .ok_or_else(|| Error::UnknownId(t.test_utterance_id.clone()))?;
        scores.push(scorer(t, e, r)?);
    }
    TrialSet::with_scores(trials.trials.clone(), scores)
}

/// Exact empirical curve: one point per distinct score plus a final reject-all point.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::dim("labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let n_target = labels.iter().filter(|&&l| l).count();
    let n_imposter = labels.len() - n_target;
    if n_target == 0 || n_imposter == 0 {
        return Err(Error::DegenerateTrialSet);
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (nt, ni) = (n_target as f64, n_imposter as f64);
    let mut points = Vec::new();
    // counts of trials strictly below the current threshold
    let mut targets_below = 0usize;
    let mut imposters_below = 0usize;
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        points.push(RocPoint {
            threshold: s,
            far: (n_imposter - imposters_below) as f64 / ni,
            frr: targets_below as f64 / nt,
        });
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                targets_below += 1;
            } else {
                imposters_below += 1;
            }
            i += 1;
        }
    }
    let top = pairs.last().expect("non-empty").0;
    points.push(RocPoint {
        threshold: top.next_up(),
        far: 0.0,
        frr: 1.0,
    });
    Ok(RocCurve {
        points,
        n_target,
        n_imposter,
    })
}

/// Lowest-FRR operating point whose FAR does not exceed `target_far`.
pub fn operating_point_at_far(curve: &RocCurve, target_far: f64) -> RocPoint {
    // FAR is non-increasing along the curve, so the first admissible point has the lowest FRR
    *curve
        .points
        .iter()
        .find(|p| p.far <= target_far)
        .expect("reject-all point has FAR 0")
}

pub fn frr_at_far(curve: &RocCurve, target_far: f64) -> f64 {
    operating_point_at_far(curve, target_far).frr
}

/// Equal error rate, linearly interpolated between the two points that bracket FAR = FRR.
pub fn eer(curve: &RocCurve) -> f64 {
    let pts = &curve.points;
    let mut prev = pts[0];
    for &p in pts {
        let d = p.frr - p.far;
        if d >= 0.0 {
            if d == 0.0 {
                return p.far;
            }
            let d_prev = prev.frr - prev.far;
            let t = d_prev / (d_prev - d);
            return prev.far + t * (p.far - prev.far);
        }
        prev = p;
    }
    unreachable!("curve ends at FRR = 1, FAR = 0")
}

/// `100 · (frr_base - frr_sys) / frr_base`, in percent.
pub fn relative_impact(frr_base: f64, frr_sys: f64) -> Result<f64> {
    if !(frr_base > 0.0) {
        return Err(Error::BaselineZero);
    }
    Ok(100.0 * (frr_base - frr_sys) / frr_base)
}

/// Fraction of the symmetric candidate's impact achieved by a system.
pub fn gap_recovery(impact_sys: f64, impact_candidate_symmetric: f64) -> Result<f64> {
    if !(impact_candidate_symmetric > 0.0) {
        return Err(Error::DegenerateGap(impact_candidate_symmetric));
    }
    Ok(impact_sys / impact_candidate_symmetric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarEntry {
    pub target_far: f64,
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    /// Present when the report was computed against a baseline.
    pub relative_impact: Option<f64>,
}

/// Evaluation summary of one scored trial list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer_id: String,
    pub n_target: usize,
    pub n_imposter: usize,
    pub eer: f64,
    pub per_far: Vec<FarEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gap_recovery: Option<f64>,
}

impl EvalReport {
    pub fn from_scores(
        scorer_id: &str,
        scores: &[f64],
        labels: &[bool],
        target_fars: &[f64],
        baseline: Option<&EvalReport>,
    ) -> Result<Self> {
        let curve = roc(scores, labels)?;
        let mut per_far = Vec::with_capacity(target_fars.len());
        for &target in target_fars {
            if !(target > 0.0 && target < 1.0) {
                return Err(Error::ConfigInvalid(format!("target FAR {target} outside (0, 1)")));
            }
            let p = operating_point_at_far(&curve, target);
            let relative_impact = match baseline {
                Some(b) => Some(relative_impact(b.frr_at(target)?, p.frr)?),
                None => None,
            };
            per_far.push(FarEntry {
                target_far: target,
                threshold: p.threshold,
                far: p.far,
                frr: p.frr,
                relative_impact,
            });
        }
        Ok(EvalReport {
            scorer_id: scorer_id.to_string(),
            n_target: curve.n_target,
            n_imposter: curve.n_imposter,
            eer: eer(&curve),
            per_far,
            gap_recovery: None,
        })
    }

    pub fn frr_at(&self, target_far: f64) -> Result<f64> {
        self.entry(target_far).map(|e| e.frr)
    }

    pub fn impact_at(&self, target_far: f64) -> Result<f64> {
        self.entry(target_far)?
            .relative_impact
            .ok_or_else(|| Error::InsufficientData("report has no baseline impacts".into()))
    }

    fn entry(&self, target_far: f64) -> Result<&FarEntry> {
        self.per_far
            .iter()
            .find(|e| (e.target_far - target_far).abs() < 1e-12)
            .ok_or_else(|| Error::InsufficientData(format!("no entry for FAR {target_far}")))
    }

    /// Sets `gap_recovery` from this report's impact and the symmetric candidate's at `target_far`.
    pub fn attach_gap_recovery(&mut self, candidate: &EvalReport, target_far: f64) -> Result<()> {
        self.gap_recovery = Some(gap_recovery(
            self.impact_at(target_far)?,
            candidate.impact_at(target_far)?,
        )?);
        Ok(())
    }
}
