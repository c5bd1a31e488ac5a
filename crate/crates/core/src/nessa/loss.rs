use serde::{Deserialize, Serialize};

use super::data::{NegativeBank, PairBatch};
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpGrads};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Weights of the contrastive term and the two anchoring terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.1,
        }
    }
}

/// Loss value and gradients of the contrastive objective.
#[derive(Debug, Clone)]
pub struct M3Loss<T> {
    pub loss: T,
    pub contrastive: T,
    pub anchor_enroll: T,
    pub anchor_runtime: T,
    pub grads_f1: MlpGrads<T>,
    pub grads_f2: MlpGrads<T>,
    pub dw: T,
}

fn check_io<T: Scalar>(f: &Mlp<T>, d_in: usize, d_out: usize, name: &str) -> Result<()> {
    if f.input_dim() != d_in {
        return Err(Error::dim(format!("{name} input"), f.input_dim(), d_in));
    }
    if f.output_dim() != d_out {
        return Err(Error::dim(format!("{name} output"), f.output_dim(), d_out));
    }
    Ok(())
}

/// Mean over rows and columns of the squared difference, and its gradient w.r.t. `y`.
fn mse<T: Scalar>(y: &Matrix<T>, target: &Matrix<T>) -> (T, Matrix<T>) {
    let n = T::lit((y.rows() * y.cols()) as f64);
    let two = T::lit(2.0);
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    let mut loss = T::zero();
    for ((g, &a), &b) in grad.as_mut_slice().iter_mut().zip(y.as_slice()).zip(target.as_slice()) {
        let diff = a - b;
        loss += diff * diff;
        *g = two * diff / n;
    }
    (loss / n, grad)
}

fn regression<T: Scalar>(f: &Mlp<T>, input: &Matrix<T>, target: &Matrix<T>) -> Result<(T, MlpGrads<T>)> {
    check_io(f, input.cols(), target.cols(), "aligner")?;
    let (y, cache) = f.forward_batch(input)?;
    let (loss, dy) = mse(&y, target);
    let (grads, _) = f.backward(&cache, &dy)?;
    Ok((loss, grads))
}

/// Runtime-side regression: `MSE(F(r_Y), r_X)`.
pub fn loss_m1<T: Scalar>(f: &Mlp<T>, batch: &PairBatch<T>) -> Result<(T, MlpGrads<T>)> {
    regression(f, &batch.r_y, &batch.r_x)
}

/// Enrollment-side regression: `MSE(F(e_X), e_Y)`.
pub fn loss_m2<T: Scalar>(f: &Mlp<T>, batch: &PairBatch<T>) -> Result<(T, MlpGrads<T>)> {
    regression(f, &batch.e_x, &batch.e_y)
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows<T: Scalar>(z: &Matrix<T>) -> Matrix<T> {
    let mut p = z.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
    p
}

/// Unit rows and the original row norms.
fn normalize_rows<T: Scalar>(m: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let n = row.iter().map(|&x| x * x).sum::<T>().sqrt();
        if n.to_f64_lossy() <= crate::numerics::EPS_NORM {
            return Err(Error::ZeroVector { norm: n.to_f64_lossy() });
        }
        row.iter_mut().for_each(|x| *x /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Pulls a gradient w.r.t. unit rows back to the unnormalized rows:
/// `(g − (g·û)û) / |u|`.
fn unnormalize_grad<T: Scalar>(g: &mut Matrix<T>, unit: &Matrix<T>, norms: &[T]) {
    for i in 0..g.rows() {
        let u = unit.row(i);
        let gi = g.row_mut(i);
        let p: T = gi.iter().zip(u).map(|(&a, &b)| a * b).sum();
        for (x, &ui) in gi.iter_mut().zip(u) {
            *x = (*x - p * ui) / norms[i];
        }
    }
}

fn vstack<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::dim("bank profiles", a.cols(), b.cols()));
    }
    let mut v = a.as_slice().to_vec();
    v.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), v)
}

/// Contrastive objective with anchoring terms.
///
/// Candidates are `F1(e_X)` for the batch followed by the bank; each batch
/// runtime embedding `F2(r_Y^i)` is classified among them with logits
/// `w · cos`, its own speaker at `j = i`.
pub fn loss_m3<T: Scalar>(
    f1: &Mlp<T>,
    f2: &Mlp<T>,
    w: T,
    batch: &PairBatch<T>,
    bank: &NegativeBank<T>,
    weights: &LossWeights,
) -> Result<M3Loss<T>> {
    let nb = batch.len();
    if nb == 0 || nb + bank.len() < 2 {
        return Err(Error::InsufficientData(
            "contrastive loss needs at least one negative candidate".into(),
        ));
    }
    if let Some(s) = bank.speakers.iter().find(|s| batch.speakers.contains(s)) {
        return Err(Error::DisjointnessViolation(format!("bank speaker index {s} is in the batch")));
    }
    let d = batch.dim();
    check_io(f1, d, d, "F1")?;
    check_io(f2, d, d, "F2")?;
    let (alpha, beta, gamma) = (T::lit(weights.alpha), T::lit(weights.beta), T::lit(weights.gamma));

    let enroll = vstack(&batch.e_x, &bank.e_x)?;
    let (a, cache1) = f1.forward_batch(&enroll)?;
    let (b, cache2) = f2.forward_batch(&batch.r_y)?;
    let (a_hat, a_norm) = normalize_rows(&a)?;
    let (b_hat, b_norm) = normalize_rows(&b)?;

    let nc = a.rows();
    let mut s = Matrix::zeros(nb, nc);
    for i in 0..nb {
        for j in 0..nc {
            s[(i, j)] = b_hat.row(i).iter().zip(a_hat.row(j)).map(|(&x, &y)| x * y).sum();
        }
    }
    let mut z = s.clone();
    z.as_mut_slice().iter_mut().for_each(|x| *x *= w);
    let p = softmax_rows(&z);

    let nb_t = T::lit(nb as f64);
    let mut contrastive = T::zero();
    for i in 0..nb {
        // log p_ii = z_ii − max − log Σ exp(z − max)
        let row = z.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        contrastive -= row[i] - lse;
    }
    contrastive = alpha * contrastive / nb_t;

    // dL/dz = α/N_b · (p − δ); dL/ds = w · dL/dz; dL/dw = Σ dL/dz ⊙ s
    let mut dw = T::zero();
    let mut ds = Matrix::zeros(nb, nc);
    for i in 0..nb {
        for j in 0..nc {
            let delta = if i == j { T::one() } else { T::zero() };
            let g = alpha / nb_t * (p[(i, j)] - delta);
            dw += g * s[(i, j)];
            ds[(i, j)] = w * g;
        }
    }
    let mut da = Matrix::zeros(nc, d);
    let mut db = Matrix::zeros(nb, d);
    for i in 0..nb {
        for j in 0..nc {
            let g = ds[(i, j)];
            if g == T::zero() {
                continue;
            }
            for k in 0..d {
                da[(j, k)] += g * b_hat[(i, k)];
                db[(i, k)] += g * a_hat[(j, k)];
            }
        }
    }
    unnormalize_grad(&mut da, &a_hat, &a_norm);
    unnormalize_grad(&mut db, &b_hat, &b_norm);

    let a_batch = Matrix::from_vec(nb, d, a.as_slice()[..nb * d].to_vec())?;
    let (mse_e, g_e) = mse(&a_batch, &batch.e_y);
    for (x, &g) in da.as_mut_slice()[..nb * d].iter_mut().zip(g_e.as_slice()) {
        *x += beta * g;
    }
    let (mse_r, g_r) = mse(&b, &batch.r_y);
    for (x, &g) in db.as_mut_slice().iter_mut().zip(g_r.as_slice()) {
        *x += gamma * g;
    }

    let (grads_f1, _) = f1.backward(&cache1, &da)?;
    let (grads_f2, _) = f2.backward(&cache2, &db)?;
    let anchor_enroll = beta * mse_e;
    let anchor_runtime = gamma * mse_r;
    Ok(M3Loss {
        loss: contrastive + anchor_enroll + anchor_runtime,
        contrastive,
        anchor_enroll,
        anchor_runtime,
        grads_f1,
        grads_f2,
        dw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, Dense};
    use crate::numerics::{cosine_similarity, Prng};

    fn rand_matrix(rng: &mut Prng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_vec(r, c, rng.standard_normal(r * c)).unwrap()
    }

    fn toy_batch(rng: &mut Prng, n: usize, d: usize) -> PairBatch<f64> {
        PairBatch {
            speakers: (0..n).collect(),
            e_x: rand_matrix(rng, n, d),
            e_y: rand_matrix(rng, n, d),
            r_x: rand_matrix(rng, n, d),
            r_y: rand_matrix(rng, n, d),
        }
    }

    fn toy_bank(rng: &mut Prng, m: usize, d: usize, first: usize) -> NegativeBank<f64> {
        NegativeBank {
            speakers: (first..first + m).collect(),
            e_x: rand_matrix(rng, m, d),
            e_y: rand_matrix(rng, m, d),
        }
    }

    /// The m3 objective evaluated term by term from single-vector forwards.
    fn m3_oracle(
        f1: &Mlp<f64>,
        f2: &Mlp<f64>,
        w: f64,
        batch: &PairBatch<f64>,
        bank: &NegativeBank<f64>,
        lw: &LossWeights,
    ) -> f64 {
        let nb = batch.len();
        let mut cands: Vec<Vec<f64>> = (0..nb).map(|j| f1.forward(batch.e_x.row(j)).unwrap().into_inner()).collect();
        for j in 0..bank.len() {
            cands.push(f1.forward(bank.e_x.row(j)).unwrap().into_inner());
        }
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        let mut t3 = 0.0;
        let d = batch.dim() as f64;
        for i in 0..nb {
            let q = f2.forward(batch.r_y.row(i)).unwrap();
            let logits: Vec<f64> = cands.iter().map(|c| w * cosine_similarity(c, &q).unwrap()).collect();
            let denom: f64 = logits.iter().map(|l| l.exp()).sum();
            t1 += -(logits[i].exp() / denom).ln();
            t2 += cands[i].iter().zip(batch.e_y.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d;
            t3 += q.iter().zip(batch.r_y.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d;
        }
        let n = nb as f64;
        lw.alpha * t1 / n + lw.beta * t2 / n + lw.gamma * t3 / n
    }

    fn flat3(f1: &Mlp<f64>, f2: &Mlp<f64>, w: f64) -> Vec<f64> {
        let mut p = f1.flatten_params();
        p.extend(f2.flatten_params());
        p.push(w);
        p
    }

    #[test]
    fn identity_map_on_equal_views_is_zero() {
        let mut rng = Prng::new(1);
        let mut b = toy_batch(&mut rng, 4, 3);
        b.r_x = b.r_y.clone();
        b.e_y = b.e_x.clone();
        let f = Mlp::identity(3);
        assert!(loss_m1(&f, &b).unwrap().0.abs() < 1e-15);
        assert!(loss_m2(&f, &b).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn single_item_mse_by_hand() {
        // one linear layer: F(x) = x + c, so o = r_y + c
        let f = Mlp::from_layers(
            vec![Dense {
                w: Matrix::identity(2),
                b: vec![0.5, -1.0],
            }],
            0,
        )
        .unwrap();
        let b = PairBatch {
            speakers: vec![0],
            e_x: Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap(),
            e_y: Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap(),
            r_x: Matrix::from_vec(1, 2, vec![3.0, 1.0]).unwrap(),
            r_y: Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap(),
        };
        // o = (1.5, 0), t = (3, 1): ((1.5)² + 1²) / 2
        assert!((loss_m1::<f64>(&f, &b).unwrap().0 - (2.25 + 1.0) / 2.0).abs() < 1e-15);
        // o = (1.5, 1), t = 0
        assert!((loss_m2::<f64>(&f, &b).unwrap().0 - (2.25 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn regression_dimension_errors() {
        let mut rng = Prng::new(1);
        let b = toy_batch(&mut rng, 2, 3);
        let f = Mlp::<f64>::init(&[4, 5, 5, 3], 0).unwrap();
        assert!(matches!(loss_m2(&f, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn uniform_softmax_gives_log_count() {
        // zero output weights with a shared bias map everything to the same point
        let d = 3;
        let collapse = |seed| {
            let mut m = Mlp::<f64>::init(&[d, 4, 4, d], seed).unwrap();
            let mut p = m.flatten_params();
            let n = p.len();
            // parameters end with the output layer's d×4 weights and d biases
            for x in &mut p[n - d - 4 * d..n - d] {
                *x = 0.0;
            }
            p[n - d..].copy_from_slice(&[1.0, 2.0, 3.0]);
            m.set_flat_params(&p).unwrap();
            m
        };
        let (f1, f2) = (collapse(1), collapse(2));
        let mut rng = Prng::new(4);
        let b = toy_batch(&mut rng, 3, d);
        let bank = toy_bank(&mut rng, 2, d, 10);
        let lw = LossWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let out = loss_m3(&f1, &f2, 5.0, &b, &bank, &lw).unwrap();
        assert!((out.contrastive - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_reduces_to_anchors() {
        let mut rng = Prng::new(5);
        let b = toy_batch(&mut rng, 4, 3);
        let bank = toy_bank(&mut rng, 2, 3, 10);
        let f1 = Mlp::init(&[3, 16, 16, 3], 1).unwrap();
        let f2 = Mlp::init(&[3, 16, 16, 3], 2).unwrap();
        let lw = LossWeights {
            alpha: 0.0,
            ..LossWeights::default()
        };
        let out = loss_m3(&f1, &f2, 5.0, &b, &bank, &lw).unwrap();
        let m2 = loss_m2(&f1, &b).unwrap().0;
        let self_b = PairBatch {
            e_x: b.r_y.clone(),
            e_y: b.r_y.clone(),
            ..b.clone()
        };
        let self_mse = loss_m2(&f2, &self_b).unwrap().0;
        assert!((out.loss - (0.5 * m2 + 0.1 * self_mse)).abs() < 1e-12);
        assert_eq!(out.dw, 0.0);
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut rng = Prng::new(6);
        let b = toy_batch(&mut rng, 2, 3);
        let bank = toy_bank(&mut rng, 1, 3, 5);
        let f1 = Mlp::init(&[3, 4, 4, 3], 3).unwrap();
        let f2 = Mlp::init(&[3, 4, 4, 3], 4).unwrap();
        let lw = LossWeights::default();
        let out = loss_m3(&f1, &f2, 5.0, &b, &bank, &lw).unwrap();
        assert!((out.loss - m3_oracle(&f1, &f2, 5.0, &b, &bank, &lw)).abs() < 1e-12);
        // without a bank the in-batch negative suffices
        let empty = NegativeBank::empty(3);
        let out = loss_m3(&f1, &f2, 2.0, &b, &empty, &lw).unwrap();
        assert!((out.loss - m3_oracle(&f1, &f2, 2.0, &b, &empty, &lw)).abs() < 1e-12);
    }

    #[test]
    fn dropping_anchors_removes_exactly_their_terms() {
        let mut rng = Prng::new(7);
        let b = toy_batch(&mut rng, 5, 4);
        let bank = toy_bank(&mut rng, 3, 4, 20);
        let f1 = Mlp::init(&[4, 8, 8, 4], 5).unwrap();
        let f2 = Mlp::init(&[4, 8, 8, 4], 6).unwrap();
        let full = loss_m3(&f1, &f2, 5.0, &b, &bank, &LossWeights::default()).unwrap();
        let bare = loss_m3(
            &f1,
            &f2,
            5.0,
            &b,
            &bank,
            &LossWeights {
                beta: 0.0,
                gamma: 0.0,
                ..LossWeights::default()
            },
        )
        .unwrap();
        assert!((full.loss - bare.loss - full.anchor_enroll - full.anchor_runtime).abs() < 1e-12);
    }

    #[test]
    fn contract_errors() {
        let mut rng = Prng::new(8);
        let b = toy_batch(&mut rng, 3, 3);
        let f = Mlp::init(&[3, 4, 4, 3], 0).unwrap();
        let clash = toy_bank(&mut rng, 2, 3, 2);
        assert!(matches!(
            loss_m3(&f, &f, 5.0, &b, &clash, &LossWeights::default()),
            Err(Error::DisjointnessViolation(_))
        ));
        let one = toy_batch(&mut rng, 1, 3);
        assert!(matches!(
            loss_m3(&f, &f, 5.0, &one, &NegativeBank::empty(3), &LossWeights::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Prng::new(9);
        let mut z = rand_matrix(&mut rng, 20, 50);
        z.as_mut_slice().iter_mut().for_each(|x| *x *= 300.0);
        let p = softmax_rows(&z);
        for i in 0..20 {
            let s: f64 = p.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_gradients_pass_finite_differences() {
        let mut rng = Prng::new(10);
        let b = toy_batch(&mut rng, 4, 6);
        let f = Mlp::init(&[6, 10, 10, 6], 11).unwrap();
        for (name, loss) in [
            ("m1", loss_m1 as fn(&Mlp<f64>, &PairBatch<f64>) -> Result<(f64, MlpGrads<f64>)>),
            ("m2", loss_m2),
        ] {
            let (_, g) = loss(&f, &b).unwrap();
            let mut probe = f.clone();
            let report = gradient_check(
                &f.flatten_params(),
                &g.flatten(),
                |p| {
                    probe.set_flat_params(p).unwrap();
                    loss(&probe, &b).unwrap().0
                },
                1e-5,
                10_000,
                0,
            );
            assert!(report.max_rel_error <= 1e-4, "{name}: {report:?}");
        }
    }

    #[test]
    fn contrastive_gradients_pass_finite_differences() {
        let mut rng = Prng::new(12);
        let b = toy_batch(&mut rng, 4, 6);
        let bank = toy_bank(&mut rng, 3, 6, 10);
        let f1 = Mlp::init(&[6, 10, 10, 6], 13).unwrap();
        let f2 = Mlp::init(&[6, 10, 10, 6], 14).unwrap();
        let w = 5.0;
        let lw = LossWeights::default();
        let out = loss_m3(&f1, &f2, w, &b, &bank, &lw).unwrap();
        let mut analytic = out.grads_f1.flatten();
        analytic.extend(out.grads_f2.flatten());
        analytic.push(out.dw);
        let n1 = f1.param_count();
        let n2 = f2.param_count();
        let (mut p1, mut p2) = (f1.clone(), f2.clone());
        let report = gradient_check(
            &flat3(&f1, &f2, w),
            &analytic,
            |p| {
                p1.set_flat_params(&p[..n1]).unwrap();
                p2.set_flat_params(&p[n1..n1 + n2]).unwrap();
                loss_m3(&p1, &p2, p[n1 + n2], &b, &bank, &lw).unwrap().loss
            },
            1e-5,
            10_000,
            0,
        );
        assert_eq!(report.checked, n1 + n2 + 1);
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}
