//! Acceptance criteria, run sequentially so that the timing criteria are not
//! disturbed by other tests. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::hint::black_box;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use spkalign::data::{Corpus, TrialSet, VoiceProfile};
use spkalign::logit::{build_weight_matrix, compute_fusion_transform, logit_score_direct, logit_score_fused};
use spkalign::metrics::{frr_at_far, relative_impact, roc, EvalReport, REPORT_FARS};
use spkalign::nessa::{check_all_losses, train, NessaConfig, Variant};
use spkalign::numerics::Prng;
use spkalign::pipeline::{fit_logit, score_with, training_data, Aligners, ScorerKind};
use spkalign::synth::{generate, make_trials, DistortionKind, SynthConfig};
use spkalign::Vec64;

const FAR: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn unit_profiles(rng: &mut Prng, model: &str, n: usize, d: usize) -> Vec<VoiceProfile> {
    (0..n)
        .map(|i| VoiceProfile {
            speaker_id: format!("s{i}"),
            model_id: model.into(),
            vector: Vec64::new(rng.standard_normal(d)).length_normalize().unwrap(),
        })
        .collect()
}

fn fusion_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = Prng::new(2024);
    let (mut worst, mut cases, mut jittered) = (0.0f64, 0, 0);
    for case in 0..1000 {
        let d = if case % 2 == 0 { 8 } else { 32 };
        let n = 2 * d + 4 + rng.index(2 * d);
        let order: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let wx = build_weight_matrix::<f64>(&unit_profiles(&mut rng, "X", n, d), &order).unwrap();
        let wy = build_weight_matrix::<f64>(&unit_profiles(&mut rng, "Y", n, d), &order).unwrap();
        let f = compute_fusion_transform(&wx, &wy).unwrap();
        if f.jitter_applied != 0.0 {
            jittered += 1;
            continue;
        }
        let e = rng.standard_normal(d);
        let r = rng.standard_normal(d);
        let diff = (logit_score_fused(&e, &r, &f).unwrap() - logit_score_direct(&e, &r, &wx, &wy).unwrap()).abs();
        worst = worst.max(diff);
        cases += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        cases == 1000 && worst <= 1e-6 && secs < 10.0,
        format!("{cases} unjittered cases ({jittered} jittered), max |fused - direct| = {worst:.2e} (tol 1e-6), {secs:.2}s (limit 10s)"),
    )
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let checks = check_all_losses(6, 10, 3, 0).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    let m3_with_w = checks.iter().filter(|c| c.loss == "m3").all(|c| c.report.checked == 2 * 246 + 1);
    outcome(
        checks.len() == 9 && m3_with_w && worst <= 1e-4 && secs < 30.0,
        format!("{} checks (m1, m2, m3 incl. dL/dw at 3 points), max rel error {worst:.2e} (tol 1e-4), {secs:.2}s (limit 30s)", checks.len()),
    )
}

/// Accept iff score >= threshold, enumerated over every distinct score plus
/// a reject-all threshold above the maximum.
fn enumerate_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let nt = labels.iter().filter(|&&l| l).count() as f64;
    let ni = labels.len() as f64 - nt;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds
        .iter()
        .map(|&t| {
            let fa = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64;
            let fr = scores.iter().zip(labels).filter(|(&s, &l)| l && s < t).count() as f64;
            (fa / ni, fr / nt)
        })
        .collect()
}

fn metric_oracles() -> Outcome {
    let mut rng = Prng::new(77);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = 2 + rng.index(19);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        // coarse grid so that ties occur
        let scores: Vec<f64> = (0..n).map(|_| rng.index(8) as f64 / 4.0 - 1.0).collect();
        let curve = roc(&scores, &labels).unwrap();
        let mut got: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.far, p.frr)).collect();
        let mut want = enumerate_points(&scores, &labels);
        got.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if got != want {
            mismatches += 1;
            continue;
        }
        for target in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, rng.next_f64()] {
            let best = want
                .iter()
                .filter(|p| p.0 <= target)
                .map(|p| p.1)
                .fold(f64::INFINITY, f64::min);
            if frr_at_far(&curve, target) != best {
                mismatches += 1;
            }
        }
    }
    let parity = relative_impact(0.1, 0.1).unwrap();
    let six_fold = relative_impact(0.1, 0.6).unwrap();
    let anchors = parity == 0.0 && (six_fold + 500.0).abs() < 1e-9;
    outcome(
        mismatches == 0 && anchors,
        format!("200 trial sets vs exhaustive enumeration: {mismatches} mismatches; impact at parity {parity}, at six-fold FRR {six_fold:.6}"),
    )
}

struct Corpora {
    train_x: Corpus,
    train_y: Corpus,
    eval_x: Corpus,
    eval_y: Corpus,
    trials: TrialSet,
}

fn corpora(base: &SynthConfig, n_train: usize, seed: u64) -> Corpora {
    let train_cfg = SynthConfig {
        n_speakers: n_train,
        seed: seed * 100,
        model_seed: seed,
        ..base.clone()
    };
    let eval_cfg = SynthConfig {
        n_speakers: 500,
        seed: seed * 100 + 1,
        ..train_cfg.clone()
    };
    let (train_x, train_y, _) = generate(&train_cfg).unwrap();
    let (eval_x, eval_y, _) = generate(&eval_cfg).unwrap();
    let trials = make_trials(&eval_y, 2500, 25_000, seed).unwrap();
    Corpora {
        train_x,
        train_y,
        eval_x,
        eval_y,
        trials,
    }
}

fn desk_corpus(distortion: DistortionKind) -> SynthConfig {
    SynthConfig {
        n_enroll_utts: 20,
        n_runtime_utts: 5,
        latent_dim: 32,
        embed_dim: 32,
        within_noise_x: 2.0,
        within_noise_y: 1.5,
        distortion_x: distortion,
        distortion_y: distortion,
        nonlinear_gain: 1.0,
        ..SynthConfig::default()
    }
}

fn desk_nessa(variant: Variant, seed: u64) -> NessaConfig {
    NessaConfig {
        variant,
        epochs: 20,
        steps_per_epoch: 100,
        batch_size: 256,
        bank_size: 256,
        hidden: [64, 64],
        seed,
        ..NessaConfig::default()
    }
}

fn evaluate(c: &Corpora, kind: ScorerKind, aligners: Aligners<'_>, id: &str, baseline: Option<&EvalReport>) -> EvalReport {
    let scored = score_with(kind, &c.trials, &c.eval_x, &c.eval_y, aligners).unwrap();
    EvalReport::from_scores(id, scored.scores.as_ref().unwrap(), &c.trials.labels(), &REPORT_FARS, baseline).unwrap()
}

fn trained(c: &Corpora, cfg: &NessaConfig, id: &str, baseline: &EvalReport) -> EvalReport {
    let (tr, va) = training_data(&c.train_x, &c.train_y, 0.1, cfg.seed).unwrap();
    let out = train(cfg, &tr, &va).unwrap();
    let kind = match cfg.variant {
        Variant::M1 => ScorerKind::NessaM1,
        Variant::M2 => ScorerKind::NessaM2,
        Variant::M3 => ScorerKind::NessaM3,
    };
    let aligners = Aligners {
        fusion: None,
        checkpoint: Some(&out.checkpoint),
    };
    evaluate(c, kind, aligners, id, Some(baseline))
}

fn linear_recovery() -> Outcome {
    let t0 = Instant::now();
    let c = corpora(&desk_corpus(DistortionKind::Orthogonal), 2000, 1);
    let none = Aligners::default();
    let sym_x = evaluate(&c, ScorerKind::CosineSymX, none, "cosine-sym-x", None);
    let sym_y = evaluate(&c, ScorerKind::CosineSymY, none, "cosine-sym-y", None);
    let raw = evaluate(&c, ScorerKind::CosineAsymRaw, none, "cosine-asym-raw", None);
    let m2 = trained(&c, &desk_nessa(Variant::M2, 1), "nessa-m2", &sym_x);
    let secs = t0.elapsed().as_secs_f64();
    let pass = m2.eer <= sym_x.eer
        && (m2.eer - sym_y.eer).abs() <= 0.015
        && (0.40..=0.60).contains(&raw.eer)
        && secs < 600.0;
    outcome(
        pass,
        format!(
            "EER sym-x {:.2}%, sym-y {:.2}%, m2 {:.2}% (|m2 - sym-y| {:.2} pts, tol 1.5), raw {:.2}% (want 40-60%), {secs:.0}s (limit 600s)",
            100.0 * sym_x.eer,
            100.0 * sym_y.eer,
            100.0 * m2.eer,
            100.0 * (m2.eer - sym_y.eer).abs(),
            100.0 * raw.eer
        ),
    )
}

/// Impacts at 5% FAR relative to cosine-sym-x on the nonlinear corpus.
struct SeedRun {
    seed: u64,
    sym_y: f64,
    raw: f64,
    logit: f64,
    m1: f64,
    m2: f64,
    m3: f64,
    alpha0: f64,
    beta_gamma0: f64,
    gap_m2: f64,
    gap_m3: f64,
}

fn nonlinear_run(seed: u64) -> SeedRun {
    let c = corpora(&desk_corpus(DistortionKind::MlpNonlinear), 5000, seed);
    let none = Aligners::default();
    let base = evaluate(&c, ScorerKind::CosineSymX, none, "cosine-sym-x", None);
    let sym_y = evaluate(&c, ScorerKind::CosineSymY, none, "cosine-sym-y", Some(&base));
    let raw = evaluate(&c, ScorerKind::CosineAsymRaw, none, "cosine-asym-raw", Some(&base));
    let (fusion, _) = fit_logit(&c.train_x, &c.train_y, 1000, seed).unwrap();
    let logit = evaluate(
        &c,
        ScorerKind::LogitFused,
        Aligners {
            fusion: Some(&fusion),
            checkpoint: None,
        },
        "logit-fused",
        Some(&base),
    );
    let m1 = trained(&c, &desk_nessa(Variant::M1, seed), "nessa-m1", &base);
    let mut m2 = trained(&c, &desk_nessa(Variant::M2, seed), "nessa-m2", &base);
    let mut m3 = trained(&c, &desk_nessa(Variant::M3, seed), "nessa-m3", &base);
    let alpha0 = trained(&c, &NessaConfig { alpha: 0.0, ..desk_nessa(Variant::M3, seed) }, "m3-alpha0", &base);
    let beta_gamma0 = trained(
        &c,
        &NessaConfig {
            beta: 0.0,
            gamma: 0.0,
            ..desk_nessa(Variant::M3, seed)
        },
        "m3-beta0-gamma0",
        &base,
    );
    m2.attach_gap_recovery(&sym_y, FAR).unwrap();
    m3.attach_gap_recovery(&sym_y, FAR).unwrap();
    let at = |r: &EvalReport| r.impact_at(FAR).unwrap();
    SeedRun {
        seed,
        sym_y: at(&sym_y),
        raw: at(&raw),
        logit: at(&logit),
        m1: at(&m1),
        m2: at(&m2),
        m3: at(&m3),
        alpha0: at(&alpha0),
        beta_gamma0: at(&beta_gamma0),
        gap_m2: m2.gap_recovery.unwrap(),
        gap_m3: m3.gap_recovery.unwrap(),
    }
}

fn ordering(runs: &[SeedRun]) -> Outcome {
    let primary = &runs[0];
    let hard = primary.raw < primary.logit
        && primary.m2 <= primary.m3
        && primary.gap_m2 >= 0.6
        && primary.gap_m3 >= 0.6;
    let soft = runs.iter().filter(|r| r.logit < r.m1 && r.m1 < r.m2).count();
    let detail = format!(
        "seed {}: raw {:.1} < logit {:.1} < m1 {:.1} < m2 {:.1} <= m3 {:.1}, gap recovery m2 {:.2} m3 {:.2} (min 0.60); strict logit < m1 < m2 on {soft}/3 seeds (min 2)",
        primary.seed, primary.raw, primary.logit, primary.m1, primary.m2, primary.m3, primary.gap_m2, primary.gap_m3
    );
    outcome(hard && soft >= 2, detail)
}

fn ablation(runs: &[SeedRun]) -> Outcome {
    let alpha_ok = runs.iter().filter(|r| r.alpha0 <= r.m3).count();
    let anchor_ok = runs.iter().filter(|r| r.beta_gamma0 < r.m3).count();
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: m3 {:.1}, alpha=0 {:.1}, beta=gamma=0 {:.1}", r.seed, r.m3, r.alpha0, r.beta_gamma0))
        .collect();
    outcome(
        alpha_ok >= 2 && anchor_ok >= 2,
        format!(
            "alpha=0 <= m3 on {alpha_ok}/3, beta=gamma=0 < m3 on {anchor_ok}/3 (min 2 each); {}",
            per_seed.join("; ")
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_spkalign"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "spkalign {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let dims = ["--latent-dim", "16", "--embed-dim", "16", "--model-seed", "5", "--distortion-x", "mlp_nonlinear", "--distortion-y", "mlp_nonlinear"];
    let with = |a: &[&'static str]| -> Vec<&'static str> { a.iter().chain(dims.iter()).copied().collect() };
    run_cli(dir, &with(&["synth", "--out-x", "tx.jsonl", "--out-y", "ty.jsonl", "--n-speakers", "400", "--seed", "11"]));
    run_cli(
        dir,
        &with(&[
            "synth", "--out-x", "ex.jsonl", "--out-y", "ey.jsonl", "--trials", "trials.tsv", "--n-speakers", "100",
            "--seed", "12", "--n-target", "300", "--n-imposter", "3000",
        ]),
    );
    run_cli(dir, &["profile", "--embeddings", "ex.jsonl", "--out", "profiles.jsonl", "--seed", "5"]);
    run_cli(
        dir,
        &[
            "train", "--x", "tx.jsonl", "--y", "ty.jsonl", "--variant", "m3", "--epochs", "3", "--steps-per-epoch", "30",
            "--batch-size", "64", "--bank-size", "64", "--hidden", "32,32", "--seed", "5", "--out", "m3.json", "--log", "m3.log",
        ],
    );
    for scorer in ["cosine-sym-x", "nessa-m3"] {
        let out = format!("{scorer}.tsv");
        run_cli(
            dir,
            &["score", "--scorer", scorer, "--x", "ex.jsonl", "--y", "ey.jsonl", "--trials", "trials.tsv", "--checkpoint", "m3.json", "--seed", "5", "--out", &out],
        );
    }
    run_cli(dir, &["eval", "--scores", "cosine-sym-x.tsv", "--scorer-id", "cosine-sym-x", "--seed", "5", "--out", "base.json"]);
    run_cli(
        dir,
        &["eval", "--scores", "nessa-m3.tsv", "--scorer-id", "nessa-m3", "--baseline-report", "base.json", "--seed", "5", "--out", "report.json"],
    );
    ["profiles.jsonl", "m3.json", "nessa-m3.tsv", "report.json"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (pipeline(a.path()), pipeline(b.path()));
    let differing: Vec<&str> = ra.iter().zip(&rb).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    let report = &ra.iter().find(|(n, _)| n == "report.json").unwrap().1;
    outcome(
        differing.is_empty() && !report.is_empty(),
        format!(
            "synth -> profile -> train m3 -> score -> eval twice: report {} bytes, differing artifacts {:?}",
            report.len(),
            differing
        ),
    )
}

fn time_fused_scoring(n: usize, rng: &mut Prng) -> Duration {
    let d = 32;
    let order: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let wx = build_weight_matrix::<f64>(&unit_profiles(rng, "X", n, d), &order).unwrap();
    let wy = build_weight_matrix::<f64>(&unit_profiles(rng, "Y", n, d), &order).unwrap();
    let f = compute_fusion_transform(&wx, &wy).unwrap();
    let pool = 1000;
    let enroll: Vec<Vec<f64>> = (0..pool).map(|_| rng.standard_normal(d)).collect();
    let runtime: Vec<Vec<f64>> = (0..pool).map(|_| rng.standard_normal(d)).collect();
    (0..3)
        .map(|_| {
            let t0 = Instant::now();
            let mut acc = 0.0;
            for i in 0..100_000 {
                acc += logit_score_fused(&enroll[i % pool], &runtime[(i * 7 + 3) % pool], &f).unwrap();
            }
            black_box(acc);
            t0.elapsed()
        })
        .min()
        .unwrap()
}

fn n_independence() -> Outcome {
    let mut rng = Prng::new(8);
    let small = time_fused_scoring(1_000, &mut rng);
    let large = time_fused_scoring(10_000, &mut rng);
    let ratio = large.as_secs_f64() / small.as_secs_f64();
    outcome(
        ratio <= 2.0,
        format!(
            "1e5 fused scores: N=1e3 {:.1} ms, N=1e4 {:.1} ms, ratio {ratio:.2} (max 2)",
            1e3 * small.as_secs_f64(),
            1e3 * large.as_secs_f64()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, o: Outcome| {
        failed += usize::from(!o.pass);
        println!("{} {id}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "fusion oracle equivalence", fusion_oracle());
    report(2, "gradient correctness", gradient_checks());
    report(3, "metric oracles", metric_oracles());
    report(4, "linear recovery", linear_recovery());
    let runs: Vec<SeedRun> = (1..=3).map(nonlinear_run).collect();
    for r in &runs {
        println!(
            "     seed {} impact@5%FAR: sym-y {:.1}, raw {:.1}, logit {:.1}, m1 {:.1}, m2 {:.1}, m3 {:.1}, alpha=0 {:.1}, beta=gamma=0 {:.1}; gap m2 {:.2}, m3 {:.2}",
            r.seed, r.sym_y, r.raw, r.logit, r.m1, r.m2, r.m3, r.alpha0, r.beta_gamma0, r.gap_m2, r.gap_m3
        );
    }
    report(5, "ordering reproduction", ordering(&runs));
    report(6, "ablation direction", ablation(&runs));
    report(7, "determinism", determinism());
    report(8, "fused scoring N-independence", n_independence());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
