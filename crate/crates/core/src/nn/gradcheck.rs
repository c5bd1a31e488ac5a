//! Central finite-difference gradient checking.

use crate::numerics::Prng;
use crate::scalar::Scalar;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_SAMPLE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter index attaining the maximum.
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` on a sample of
/// parameter coordinates (all of them when there are at most `sample`).
///
/// The error for coordinate `k` is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn gradient_check<T, F>(
    params: &[T],
    analytic: &[T],
    mut loss: F,
    h: f64,
    sample: usize,
    seed: u64,
) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let indices: Vec<usize> = if params.len() <= sample {
        (0..params.len()).collect()
    } else {
        Prng::new(seed).sample_indices(params.len(), sample)
    };
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: indices.len(),
    };
    for &k in &indices {
        let orig = work[k];
        work[k] = orig + T::lit(h);
        let up = loss(&work).to_f64_lossy();
        work[k] = orig - T::lit(h);
        let down = loss(&work).to_f64_lossy();
        work[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[k].to_f64_lossy();
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = k;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mlp;
    use crate::numerics::Matrix;

    fn linear_mse(m: &Mlp<f64>, x: &Matrix<f64>, t: &Matrix<f64>) -> (f64, Vec<f64>) {
        let (y, cache) = m.forward_batch(x).unwrap();
        let n = (y.rows() * y.cols()) as f64;
        let mut dy = Matrix::zeros(y.rows(), y.cols());
        let mut loss = 0.0;
        for (i, (&a, &b)) in y.as_slice().iter().zip(t.as_slice()).enumerate() {
            loss += (a - b) * (a - b) / n;
            dy.as_mut_slice()[i] = 2.0 * (a - b) / n;
        }
        let (g, _) = m.backward(&cache, &dy).unwrap();
        (loss, g.flatten())
    }

    fn setup() -> (Mlp<f64>, Matrix<f64>, Matrix<f64>) {
        let m = Mlp::<f64>::init(&[4, 5], 1).unwrap();
        let mut rng = Prng::new(2);
        let x = Matrix::from_vec(3, 4, rng.standard_normal(12)).unwrap();
        let t = Matrix::from_vec(3, 5, rng.standard_normal(15)).unwrap();
        (m, x, t)
    }

    #[test]
    fn linear_network_mse_is_exact() {
        let (m, x, t) = setup();
        let (_, g) = linear_mse(&m, &x, &t);
        let params = m.flatten_params();
        let mut probe = m.clone();
        let report = gradient_check(
            &params,
            &g,
            |p| {
                probe.set_flat_params(p).unwrap();
                linear_mse(&probe, &x, &t).0
            },
            DEFAULT_STEP,
            DEFAULT_SAMPLE,
            0,
        );
        assert_eq!(report.checked, 25);
        assert!(report.max_rel_error <= 1e-7, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let (m, x, t) = setup();
        let (_, mut g) = linear_mse(&m, &x, &t);
        let k = g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        g[k] *= 1.01;
        let params = m.flatten_params();
        let mut probe = m.clone();
        let report = gradient_check(
            &params,
            &g,
            |p| {
                probe.set_flat_params(p).unwrap();
                linear_mse(&probe, &x, &t).0
            },
            DEFAULT_STEP,
            DEFAULT_SAMPLE,
            0,
        );
        // |1.01a - a| / (|1.01a| + |a|) = 0.01 / 2.01
        assert!((report.max_rel_error - 0.01 / 2.01).abs() < 1e-6, "{report:?}");
        assert!(report.max_rel_error > 1e-4);
        assert_eq!(report.worst_index, k);
    }
}
