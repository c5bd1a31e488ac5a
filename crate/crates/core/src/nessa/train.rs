use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::data::{gather_rows, sample_negative_bank, NegativeBank, PairBatch, PairedData};
use super::loss::{loss_m1, loss_m2, loss_m3, LossWeights};
use crate::data::format::{to_json_fixed, PARAM_DIGITS};
use crate::data::{ArtifactMeta, VoiceProfile};
use crate::error::{Error, Result};
use crate::nn::{Adam, LrSchedule, Mlp};
use crate::numerics::{Matrix, Prng, Vector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Maps runtime embeddings of Y into X.
    M1,
    /// Maps enrollment profiles of X into Y.
    M2,
    /// Maps both sides into a new space with a contrastive loss.
    M3,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::M1 => "m1",
            Variant::M2 => "m2",
            Variant::M3 => "m3",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m1" => Ok(Variant::M1),
            "m2" => Ok(Variant::M2),
            "m3" => Ok(Variant::M3),
            _ => Err(Error::ConfigInvalid(format!("unknown variant {s:?}"))),
        }
    }
}

/// Training configuration. Defaults are the full-scale settings; desk-scale
/// runs override dims, batch, steps and bank size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NessaConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub w_init: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub bank_size: usize,
    /// Widths of the two hidden layers.
    pub hidden: [usize; 2],
    pub lr0: f64,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for NessaConfig {
    fn default() -> Self {
        NessaConfig {
            variant: Variant::M3,
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.1,
            w_init: 5.0,
            epochs: 50,
            steps_per_epoch: 2000,
            batch_size: 1024,
            bank_size: 50_000,
            hidden: [800, 800],
            lr0: 1e-3,
            lr_decay: 0.96,
            seed: 0,
        }
    }
}

impl NessaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !self.w_init.is_finite() {
            return bad("w_init must be finite".into());
        }
        if self.steps_per_epoch == 0 || self.batch_size == 0 {
            return bad("steps_per_epoch and batch_size must be at least 1".into());
        }
        if self.variant == Variant::M3 && self.batch_size < 2 && self.bank_size == 0 {
            return bad("contrastive training needs batch_size >= 2 or a bank".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be at least 1".into());
        }
        if !self.schedule().is_valid() {
            return bad("learning-rate schedule needs lr0 > 0 and 0 < decay <= 1".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr0: self.lr0,
            decay: self.lr_decay,
            steps_per_epoch: self.steps_per_epoch,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    fn dims(&self, d: usize) -> [usize; 4] {
        [d, self.hidden[0], self.hidden[1], d]
    }
}

/// A trained aligner: `f` is F (M1, M2) or F1 (M3); `f2` is present for M3 only.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub variant: Variant,
    pub weights: LossWeights,
    pub f: Mlp<T>,
    pub f2: Option<Mlp<T>>,
    pub w: Option<T>,
}

impl<T: Scalar> PartialEq for Checkpoint<T> {
    fn eq(&self, other: &Self) -> bool {
        self.variant == other.variant
            && self.weights == other.weights
            && self.f == other.f
            && self.f2 == other.f2
            && self.w == other.w
    }
}

/// Which side of a trial a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Enroll,
    Runtime,
}

impl<T: Scalar> Checkpoint<T> {
    /// Maps enrollment vectors of X (rows) into the scoring space.
    pub fn map_enroll(&self, e_x: &Matrix<T>) -> Result<Matrix<T>> {
        match self.variant {
            Variant::M1 => Ok(e_x.clone()),
            Variant::M2 | Variant::M3 => Ok(self.f.forward_batch(e_x)?.0),
        }
    }

    /// Maps runtime vectors of Y (rows) into the scoring space.
    pub fn map_runtime(&self, r_y: &Matrix<T>) -> Result<Matrix<T>> {
        match self.variant {
            Variant::M1 => Ok(self.f.forward_batch(r_y)?.0),
            Variant::M2 => Ok(r_y.clone()),
            Variant::M3 => Ok(self.f2.as_ref().expect("m3 checkpoint has F2").forward_batch(r_y)?.0),
        }
    }

    pub fn to_json_value(&self) -> Value {
        let mut v = json!({
            "variant": self.variant.as_str(),
            "alpha": self.weights.alpha,
            "beta": self.weights.beta,
            "gamma": self.weights.gamma,
            "w": self.w.map(|w| w.to_f64_lossy()),
        });
        let obj = v.as_object_mut().expect("object");
        match &self.f2 {
            None => {
                obj.insert("f".into(), self.f.to_json_value());
            }
            Some(f2) => {
                obj.insert("f1".into(), self.f.to_json_value());
                obj.insert("f2".into(), f2.to_json_value());
            }
        }
        v
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        let field = |k: &str| v.get(k).ok_or_else(|| Error::ConfigInvalid(format!("checkpoint lacks {k:?}")));
        let num = |k: &str| -> Result<f64> {
            field(k)?
                .as_f64()
                .ok_or_else(|| Error::ConfigInvalid(format!("checkpoint field {k:?} is not a number")))
        };
        let variant: Variant = field("variant")?
            .as_str()
            .ok_or_else(|| Error::ConfigInvalid("variant is not a string".into()))?
            .parse()?;
        let weights = LossWeights {
            alpha: num("alpha")?,
            beta: num("beta")?,
            gamma: num("gamma")?,
        };
        let w = v.get("w").and_then(Value::as_f64).map(T::lit);
        let (f, f2) = if variant == Variant::M3 {
            (
                Mlp::from_json_value(field("f1")?)?,
                Some(Mlp::from_json_value(field("f2")?)?),
            )
        } else {
            (Mlp::from_json_value(field("f")?)?, None)
        };
        if variant == Variant::M3 && w.is_none() {
            return Err(Error::ConfigInvalid("m3 checkpoint lacks w".into()));
        }
        Ok(Checkpoint {
            variant,
            weights,
            f,
            f2,
            w,
        })
    }

    pub fn to_json(&self, meta: Option<&ArtifactMeta>) -> String {
        let mut v = self.to_json_value();
        if let Some(m) = meta {
            v["meta"] = serde_json::to_value(m).expect("meta serializes");
        }
        to_json_fixed(&v, PARAM_DIGITS)
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: Option<&ArtifactMeta>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json(meta) + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_value(&serde_json::from_str(&text)?)
    }
}

/// Maps vectors of one trial side with a checkpoint of the expected variant.
pub fn apply_aligner<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    expected: Variant,
    side: Side,
    vectors: &Matrix<T>,
) -> Result<Matrix<T>> {
    if checkpoint.variant != expected {
        return Err(Error::VariantMismatch {
            expected: expected.as_str().into(),
            got: checkpoint.variant.as_str().into(),
        });
    }
    match side {
        Side::Enroll => checkpoint.map_enroll(vectors),
        Side::Runtime => checkpoint.map_runtime(vectors),
    }
}

/// Offline enrollment mapping: transforms X profiles into the target space,
/// keeping order, and tags them `"<source>→<target_model>"`.
pub fn align_profiles(
    checkpoint: &Checkpoint<f64>,
    profiles: &[VoiceProfile],
    target_model: &str,
) -> Result<Vec<VoiceProfile>> {
    if checkpoint.variant == Variant::M1 {
        return Err(Error::VariantMismatch {
            expected: "m2 or m3".into(),
            got: "m1".into(),
        });
    }
    if profiles.is_empty() {
        return Ok(Vec::new());
    }
    let d = profiles[0].vector.dim();
    let mut values = Vec::with_capacity(profiles.len() * d);
    for p in profiles {
        if p.vector.dim() != d {
            return Err(Error::dim(format!("profile {}", p.speaker_id), d, p.vector.dim()));
        }
        values.extend_from_slice(&p.vector);
    }
    let mapped = checkpoint.map_enroll(&Matrix::from_vec(profiles.len(), d, values)?)?;
    profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(VoiceProfile {
                speaker_id: p.speaker_id.clone(),
                model_id: format!("{}→{}", p.model_id, target_model),
                vector: Vector::new(mapped.row(i).to_vec()).length_normalize()?,
            })
        })
        .collect()
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Checkpoint with the lowest validation loss (the initial one if no epoch improved on it).
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<EpochLog>,
    pub initial_val_loss: f64,
    pub best_epoch: Option<usize>,
}

struct Validator<T> {
    batches: Vec<(PairBatch<T>, NegativeBank<T>)>,
}

impl<T: Scalar> Validator<T> {
    /// Fixed validation material: every speaker with its first runtime
    /// utterance, in chunks of the training batch size, each with a fixed bank
    /// drawn from the remaining validation speakers.
    fn new(cfg: &NessaConfig, val: &PairedData<T>) -> Result<Self> {
        let n = val.n_speakers();
        let mut rng = Prng::with_stream(cfg.seed, 3);
        let mut batches = Vec::new();
        let chunk = cfg.batch_size.max(1);
        let mut start = 0;
        while start < n {
            let speakers: Vec<usize> = (start..(start + chunk).min(n)).collect();
            let utts: Vec<usize> = speakers.iter().map(|&s| val.speaker_utts[s][0]).collect();
            let batch = PairBatch::gather(val, &speakers, &utts);
            let bank = if cfg.variant == Variant::M3 {
                let m = cfg.bank_size.min(n - speakers.len());
                sample_negative_bank(val, &speakers, m, &mut rng)?
            } else {
                NegativeBank::empty(val.dim())
            };
            batches.push((batch, bank));
            start += chunk;
        }
        Ok(Validator { batches })
    }

    fn loss(&self, cfg: &NessaConfig, ck: &Checkpoint<T>, val: &PairedData<T>) -> Result<f64> {
        match ck.variant {
            Variant::M1 => {
                let (y, _) = ck.f.forward_batch(&val.r_y)?;
                Ok(mean_sq_diff(&y, &val.r_x))
            }
            Variant::M2 => {
                let (y, _) = ck.f.forward_batch(&val.e_x)?;
                Ok(mean_sq_diff(&y, &val.e_y))
            }
            Variant::M3 => {
                let f2 = ck.f2.as_ref().expect("m3 has F2");
                let w = ck.w.expect("m3 has w");
                let mut total = 0.0;
                let mut count = 0;
                for (batch, bank) in &self.batches {
                    let out = loss_m3(&ck.f, f2, w, batch, bank, &cfg.weights())?;
                    total += out.loss.to_f64_lossy() * batch.len() as f64;
                    count += batch.len();
                }
                Ok(total / count as f64)
            }
        }
    }
}

fn mean_sq_diff<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> f64 {
    let n = a.as_slice().len().max(1) as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x - y).to_f64_lossy().powi(2))
        .sum::<f64>()
        / n
}

/// Trains the configured variant with Adam and per-epoch learning-rate decay,
/// keeping the checkpoint with the best validation loss.
///
/// Each step draws a batch of distinct training speakers with one random
/// runtime utterance each; for M3 a fresh negative bank of other training
/// speakers is drawn every step.
pub fn train<T: Scalar>(cfg: &NessaConfig, train: &PairedData<T>, val: &PairedData<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let d = train.dim();
    if val.dim() != d {
        return Err(Error::dim("validation data", d, val.dim()));
    }
    if val.n_speakers() == 0 {
        return Err(Error::InsufficientData("empty validation set".into()));
    }
    let batch_size = cfg.batch_size.min(train.n_speakers());
    if cfg.variant == Variant::M3 && batch_size + cfg.bank_size > train.n_speakers() {
        return Err(Error::InsufficientData(format!(
            "batch {batch_size} + bank {} exceeds {} training speakers",
            cfg.bank_size,
            train.n_speakers()
        )));
    }
    let dims = cfg.dims(d);
    let mut ck = Checkpoint {
        variant: cfg.variant,
        weights: cfg.weights(),
        f: Mlp::init(&dims, cfg.seed)?,
        f2: match cfg.variant {
            Variant::M3 => Some(Mlp::init(&dims, cfg.seed.wrapping_add(1))?),
            _ => None,
        },
        w: match cfg.variant {
            Variant::M3 => Some(T::lit(cfg.w_init)),
            _ => None,
        },
    };
    let validator = Validator::new(cfg, val)?;
    let initial_val_loss = validator.loss(cfg, &ck, val)?;
    let mut best = (initial_val_loss, ck.clone(), None);

    let mut shapes: Vec<usize> = ck.f.param_slices_mut().iter().map(|s| s.len()).collect();
    if let Some(f2) = ck.f2.as_mut() {
        shapes.extend(f2.param_slices_mut().iter().map(|s| s.len()));
        shapes.push(1);
    }
    let mut adam = Adam::<T>::new(&shapes);
    let mut rng = Prng::with_stream(cfg.seed, 2);
    let schedule = cfg.schedule();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = schedule.lr_at(epoch);
        let mut loss_sum = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let batch = PairBatch::sample(train, batch_size, &mut rng)?;
            match cfg.variant {
                Variant::M1 | Variant::M2 => {
                    let (loss, g) = if cfg.variant == Variant::M1 {
                        loss_m1(&ck.f, &batch)?
                    } else {
                        loss_m2(&ck.f, &batch)?
                    };
                    loss_sum += loss.to_f64_lossy();
                    adam.step(&mut ck.f.param_slices_mut(), &g.slices(), T::lit(lr))?;
                }
                Variant::M3 => {
                    let bank = sample_negative_bank(train, &batch.speakers, cfg.bank_size, &mut rng)?;
                    let f2 = ck.f2.as_mut().expect("m3 has F2");
                    let w = ck.w.as_mut().expect("m3 has w");
                    let out = loss_m3(&ck.f, f2, *w, &batch, &bank, &cfg.weights())?;
                    loss_sum += out.loss.to_f64_lossy();
                    let dw = [out.dw];
                    let mut grads = out.grads_f1.slices();
                    grads.extend(out.grads_f2.slices());
                    grads.push(&dw);
                    let mut params = ck.f.param_slices_mut();
                    params.extend(f2.param_slices_mut());
                    params.push(std::slice::from_mut(w));
                    adam.step(&mut params, &grads, T::lit(lr))?;
                }
            }
        }
        ck.f.trained_epochs = epoch + 1;
        if let Some(f2) = ck.f2.as_mut() {
            f2.trained_epochs = epoch + 1;
        }
        let train_loss = loss_sum / cfg.steps_per_epoch as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let val_loss = validator.loss(cfg, &ck, val)?;
        if val_loss < best.0 {
            best = (val_loss, ck.clone(), Some(epoch));
        }
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_loss,
            w: ck.w.map(|w| w.to_f64_lossy()),
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
    Ok(TrainOutcome {
        checkpoint: best.1,
        log,
        initial_val_loss,
        best_epoch: best.2,
    })
}

/// Aligned copies of every profile and runtime vector of paired data, for
/// inspection and tests.
pub fn map_paired<T: Scalar>(ck: &Checkpoint<T>, data: &PairedData<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let all: Vec<usize> = (0..data.n_pairs()).collect();
    Ok((ck.map_enroll(&data.e_x)?, ck.map_runtime(&gather_rows(&data.r_y, &all))?))
}
