use super::data::{NegativeBank, PairBatch};
use super::loss::{loss_m1, loss_m2, loss_m3, LossWeights};
use crate::error::Result;
use crate::nn::{gradient_check, GradCheckReport, Mlp, DEFAULT_STEP};
use crate::numerics::{Matrix, Prng};

/// Result of checking one loss at one random parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCheck {
    pub loss: &'static str,
    pub point: usize,
    pub report: GradCheckReport,
}

// finite differences straddling a ReLU kink are meaningless; such points are redrawn
const MIN_MARGIN: f64 = 1e-3;

fn rand_matrix(rng: &mut Prng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::from_vec(r, c, rng.standard_normal(r * c)).expect("shape")
}

fn smooth_net(dims: &[usize], inputs: &[&Matrix<f64>], seed: &mut u64) -> Result<Mlp<f64>> {
    loop {
        let m = Mlp::init(dims, *seed)?;
        *seed += 1;
        let mut ok = true;
        for x in inputs {
            ok &= m.min_relu_margin(x)? > MIN_MARGIN;
        }
        if ok {
            return Ok(m);
        }
    }
}

/// Finite-difference checks of all three losses (M3 including `dL/dw`) at
/// `points` random parameter points, on toy dims `d → h → h → d`. Every
/// parameter is checked.
pub fn check_all_losses(d: usize, h: usize, points: usize, seed: u64) -> Result<Vec<LossCheck>> {
    let dims = [d, h, h, d];
    let lw = LossWeights::default();
    let mut rng = Prng::with_stream(seed, 11);
    let mut net_seed = seed;
    let mut out = Vec::new();
    for point in 0..points {
        let batch = PairBatch {
            speakers: (0..4).collect(),
            e_x: rand_matrix(&mut rng, 4, d),
            e_y: rand_matrix(&mut rng, 4, d),
            r_x: rand_matrix(&mut rng, 4, d),
            r_y: rand_matrix(&mut rng, 4, d),
        };
        let bank = NegativeBank {
            speakers: vec![10, 11, 12],
            e_x: rand_matrix(&mut rng, 3, d),
            e_y: rand_matrix(&mut rng, 3, d),
        };
        let w = 5.0 + rng.next_normal();

        for (name, input) in [("m1", &batch.r_y), ("m2", &batch.e_x)] {
            let f = smooth_net(&dims, &[input], &mut net_seed)?;
            let loss = if name == "m1" { loss_m1 } else { loss_m2 };
            let (_, g) = loss(&f, &batch)?;
            let mut probe = f.clone();
            let report = gradient_check(
                &f.flatten_params(),
                &g.flatten(),
                |p| {
                    probe.set_flat_params(p).expect("length");
                    loss(&probe, &batch).expect("loss").0
                },
                DEFAULT_STEP,
                usize::MAX,
                seed,
            );
            out.push(LossCheck { loss: name, point, report });
        }

        let mut enroll = batch.e_x.as_slice().to_vec();
        enroll.extend_from_slice(bank.e_x.as_slice());
        let enroll = Matrix::from_vec(7, d, enroll)?;
        let f1 = smooth_net(&dims, &[&enroll], &mut net_seed)?;
        let f2 = smooth_net(&dims, &[&batch.r_y], &mut net_seed)?;
        let m3 = loss_m3(&f1, &f2, w, &batch, &bank, &lw)?;
        let mut analytic = m3.grads_f1.flatten();
        analytic.extend(m3.grads_f2.flatten());
        analytic.push(m3.dw);
        let mut params = f1.flatten_params();
        params.extend(f2.flatten_params());
        params.push(w);
        let (n1, n2) = (f1.param_count(), f2.param_count());
        let (mut p1, mut p2) = (f1.clone(), f2.clone());
        let report = gradient_check(
            &params,
            &analytic,
            |p| {
                p1.set_flat_params(&p[..n1]).expect("length");
                p2.set_flat_params(&p[n1..n1 + n2]).expect("length");
                loss_m3(&p1, &p2, p[n1 + n2], &batch, &bank, &lw).expect("loss").loss
            },
            DEFAULT_STEP,
            usize::MAX,
            seed,
        );
        out.push(LossCheck { loss: "m3", point, report });
    }
    Ok(out)
}
