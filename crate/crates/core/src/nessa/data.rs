use std::collections::HashSet;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Prng};
use crate::scalar::Scalar;

/// Utterance-paired training material from two single-model corpora.
///
/// Speakers index the profile matrices; runtime utterances index the `r_*`
/// matrices. Every vector is unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedData<T> {
    pub speakers: Vec<String>,
    pub e_x: Matrix<T>,
    pub e_y: Matrix<T>,
    pub r_x: Matrix<T>,
    pub r_y: Matrix<T>,
    /// Runtime row indices of each speaker.
    pub speaker_utts: Vec<Vec<usize>>,
}

fn unit_row<T: Scalar>(v: &[f64]) -> Result<Vec<T>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= crate::numerics::EPS_NORM {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| T::lit(x / n)).collect())
}

impl<T: Scalar> PairedData<T> {
    /// Pairs speakers with profiles in both corpora and their runtime
    /// utterances, in the X corpus's record order.
    pub fn from_corpora(cx: &Corpus, cy: &Corpus) -> Result<Self> {
        let mx = cx.sole_model()?;
        let my = cy.sole_model()?;
        let (dx, dy) = (cx.dimension(mx).unwrap_or(0), cy.dimension(my).unwrap_or(0));
        if dx != dy {
            return Err(Error::dim("paired corpora", dx, dy));
        }
        let mut speakers = Vec::new();
        let (mut e_x, mut e_y, mut r_x, mut r_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut speaker_utts: Vec<Vec<usize>> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for s in cx.speakers(mx) {
            let (Some(px), Some(py)) = (cx.profile(mx, s), cy.profile(my, s)) else {
                continue;
            };
            index.insert(s.to_string(), speakers.len());
            speakers.push(s.to_string());
            e_x.extend(unit_row::<T>(&px.vector)?);
            e_y.extend(unit_row::<T>(&py.vector)?);
            speaker_utts.push(Vec::new());
        }
        let mut n_utts = 0;
        for rec in cx.runtime_records(mx) {
            let Some(&s) = index.get(&rec.speaker_id) else {
                continue;
            };
            let other = cy
                .runtime(my, &rec.utterance_id)
                .ok_or_else(|| Error::UnknownId(rec.utterance_id.clone()))?;
            if other.speaker_id != rec.speaker_id {
                return Err(Error::UnknownId(format!(
                    "{} belongs to different speakers in the two corpora",
                    rec.utterance_id
                )));
            }
            r_x.extend(unit_row::<T>(&rec.vector)?);
            r_y.extend(unit_row::<T>(&other.vector)?);
            speaker_utts[s].push(n_utts);
            n_utts += 1;
        }
        // speakers without runtime utterances cannot form pairs
        let keep: Vec<usize> = (0..speakers.len()).filter(|&s| !speaker_utts[s].is_empty()).collect();
        let n = speakers.len();
        let data = PairedData {
            speakers,
            e_x: Matrix::from_vec(n, dx, e_x)?,
            e_y: Matrix::from_vec(n, dx, e_y)?,
            r_x: Matrix::from_vec(n_utts, dx, r_x)?,
            r_y: Matrix::from_vec(n_utts, dx, r_y)?,
            speaker_utts,
        };
        if keep.is_empty() {
            return Err(Error::InsufficientData("no paired speakers with runtime utterances".into()));
        }
        Ok(if keep.len() == n { data } else { data.subset(&keep) })
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.r_x.rows()
    }

    pub fn dim(&self) -> usize {
        self.e_x.cols()
    }

    /// The speakers at `idx` (in that order) with all their utterances.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let d = self.dim();
        let mut out = PairedData {
            speakers: Vec::with_capacity(idx.len()),
            e_x: gather_rows(&self.e_x, idx),
            e_y: gather_rows(&self.e_y, idx),
            r_x: Matrix::zeros(0, d),
            r_y: Matrix::zeros(0, d),
            speaker_utts: Vec::with_capacity(idx.len()),
        };
        let mut utts = Vec::new();
        for &s in idx {
            out.speakers.push(self.speakers[s].clone());
            let start = utts.len();
            utts.extend_from_slice(&self.speaker_utts[s]);
            out.speaker_utts.push((start..utts.len()).collect());
        }
        out.r_x = gather_rows(&self.r_x, &utts);
        out.r_y = gather_rows(&self.r_y, &utts);
        out
    }

    /// Holds out `round(fraction · n)` randomly chosen speakers (at least one).
    pub fn split_validation(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let n = self.n_speakers();
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::ConfigInvalid(format!("validation fraction {fraction}")));
        }
        let n_val = ((fraction * n as f64).round() as usize).max(1);
        if n_val >= n {
            return Err(Error::InsufficientData(format!(
                "{n} speakers cannot be split into training and validation"
            )));
        }
        let mut rng = Prng::with_stream(seed, 5);
        let mut val = rng.sample_indices(n, n_val);
        val.sort_unstable();
        let held: HashSet<usize> = val.iter().copied().collect();
        let train: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
        Ok((self.subset(&train), self.subset(&val)))
    }
}

pub(crate) fn gather_rows<T: Scalar>(m: &Matrix<T>, idx: &[usize]) -> Matrix<T> {
    let mut values = Vec::with_capacity(idx.len() * m.cols());
    for &i in idx {
        values.extend_from_slice(m.row(i));
    }
    Matrix::from_vec(idx.len(), m.cols(), values).expect("gathered shape")
}

/// One minibatch: item `i` holds speaker `speakers[i]`'s profiles in both
/// spaces and one of its runtime utterances in both spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch<T> {
    pub speakers: Vec<usize>,
    pub e_x: Matrix<T>,
    pub e_y: Matrix<T>,
    pub r_x: Matrix<T>,
    pub r_y: Matrix<T>,
}

impl<T: Scalar> PairBatch<T> {
    /// Builds a batch from speaker indices and, per speaker, a runtime row index.
    pub fn gather(data: &PairedData<T>, speakers: &[usize], utts: &[usize]) -> Self {
        PairBatch {
            speakers: speakers.to_vec(),
            e_x: gather_rows(&data.e_x, speakers),
            e_y: gather_rows(&data.e_y, speakers),
            r_x: gather_rows(&data.r_x, utts),
            r_y: gather_rows(&data.r_y, utts),
        }
    }

    /// Random batch of `size` distinct speakers, each with a random utterance.
    pub fn sample(data: &PairedData<T>, size: usize, rng: &mut Prng) -> Result<Self> {
        if size > data.n_speakers() {
            return Err(Error::InsufficientData(format!(
                "batch of {size} from {} speakers",
                data.n_speakers()
            )));
        }
        let speakers = rng.sample_indices(data.n_speakers(), size);
        let utts: Vec<usize> = speakers
            .iter()
            .map(|&s| {
                let u = &data.speaker_utts[s];
                u[rng.index(u.len())]
            })
            .collect();
        Ok(Self::gather(data, &speakers, &utts))
    }

    pub fn len(&self) -> usize {
        self.e_x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.e_x.cols()
    }
}

/// Extra voice profiles enlarging the contrastive denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeBank<T> {
    pub speakers: Vec<usize>,
    pub e_x: Matrix<T>,
    pub e_y: Matrix<T>,
}

impl<T: Scalar> NegativeBank<T> {
    pub fn empty(dim: usize) -> Self {
        NegativeBank {
            speakers: Vec::new(),
            e_x: Matrix::zeros(0, dim),
            e_y: Matrix::zeros(0, dim),
        }
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }
}

/// Uniform sample without replacement of `m` speakers not in `batch_speakers`.
pub fn sample_negative_bank<T: Scalar>(
    data: &PairedData<T>,
    batch_speakers: &[usize],
    m: usize,
    rng: &mut Prng,
) -> Result<NegativeBank<T>> {
    if m == 0 {
        return Ok(NegativeBank::empty(data.dim()));
    }
    let taken: HashSet<usize> = batch_speakers.iter().copied().collect();
    let pool: Vec<usize> = (0..data.n_speakers()).filter(|s| !taken.contains(s)).collect();
    if m > pool.len() {
        return Err(Error::InsufficientData(format!(
            "negative bank of {m} from {} non-batch speakers",
            pool.len()
        )));
    }
    let speakers: Vec<usize> = rng.sample_indices(pool.len(), m).into_iter().map(|i| pool[i]).collect();
    Ok(NegativeBank {
        e_x: gather_rows(&data.e_x, &speakers),
        e_y: gather_rows(&data.e_y, &speakers),
        speakers,
    })
}
