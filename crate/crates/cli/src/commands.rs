use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;
use spkalign::data::format::{to_json_fixed, VECTOR_DIGITS};
use spkalign::data::{
    load_embeddings, load_scores, load_trials, write_embeddings, write_profiles,
    write_scores, write_trials, ArtifactMeta,
};
use spkalign::logit::FusionTransform;
use spkalign::metrics::EvalReport;
use spkalign::nessa::{align_profiles, check_all_losses, train as train_aligner, Checkpoint, NessaConfig, Variant};
use spkalign::pipeline::{fit_logit, score_with, training_data, Aligners, ScorerKind};
use spkalign::synth::{generate, make_trials, DistortionKind, SynthConfig};

use crate::output::{meta_for, read_config, usage, CliError, CliResult, Sink};
use crate::{EvalArgs, GradcheckArgs, LogitArgs, ProfileArgs, ScoreArgs, SynthArgs, TrainArgs};

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn distortion(s: &str) -> CliResult<DistortionKind> {
    serde_json::from_value(json!(s)).map_err(|_| usage(format!("unknown distortion {s:?}")))
}

fn file_sink(path: &std::path::Path) -> Sink {
    Sink::File(path.to_path_buf())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthParams {
    corpus: SynthConfig,
    n_target: usize,
    n_imposter: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            corpus: SynthConfig::default(),
            n_target: 1000,
            n_imposter: 10_000,
        }
    }
}

pub fn synth(a: SynthArgs, stdout: bool) -> CliResult<()> {
    if stdout {
        return Err(usage("synth writes several files; --stdout is not supported"));
    }
    let mut p: SynthParams = read_config(a.config.as_deref())?;
    let c = &mut p.corpus;
    set(&mut c.seed, a.seed);
    set(&mut c.model_seed, a.model_seed);
    set(&mut c.n_speakers, a.n_speakers);
    set(&mut c.n_enroll_utts, a.n_enroll_utts);
    set(&mut c.n_runtime_utts, a.n_runtime_utts);
    set(&mut c.latent_dim, a.latent_dim);
    set(&mut c.embed_dim, a.embed_dim);
    set(&mut c.within_noise_x, a.within_noise_x);
    set(&mut c.within_noise_y, a.within_noise_y);
    set(&mut c.distortion_x, a.distortion_x.as_deref().map(distortion).transpose()?);
    set(&mut c.distortion_y, a.distortion_y.as_deref().map(distortion).transpose()?);
    set(&mut c.anisotropy_x, a.anisotropy_x);
    set(&mut c.anisotropy_y, a.anisotropy_y);
    set(&mut c.nonlinear_gain, a.nonlinear_gain);
    set(&mut p.n_target, a.n_target);
    set(&mut p.n_imposter, a.n_imposter);
    p.corpus.validate()?;

    let meta = meta_for("synth", &p, p.corpus.seed);
    let (x, y, _) = generate(&p.corpus)?;
    file_sink(&a.out_x).write_with(|w| write_embeddings(&x, w, Some(&meta)))?;
    file_sink(&a.out_y).write_with(|w| write_embeddings(&y, w, Some(&meta)))?;
    if let Some(path) = &a.trials {
        let trials = make_trials(&y, p.n_target, p.n_imposter, p.corpus.seed)?;
        file_sink(path).write_with(|w| write_trials(&trials, w, Some(&meta)))?;
    }
    eprintln!(
        "synth: {} speakers, {} records per model",
        p.corpus.n_speakers,
        x.len()
    );
    Ok(())
}

pub fn profile(a: ProfileArgs, stdout: bool) -> CliResult<()> {
    let sink = Sink::resolve(a.out, stdout, "profile file")?;
    let corpus = load_embeddings(&a.embeddings)?;
    let (profiles, params) = match &a.checkpoint {
        None => (corpus.profiles().to_vec(), json!({ "mapped": false })),
        Some(path) => {
            let ck = Checkpoint::<f64>::load(path)?;
            let mapped = align_profiles(&ck, corpus.profiles(), &a.target_model)?;
            let params = json!({
                "mapped": true,
                "variant": ck.variant.as_str(),
                "target_model": a.target_model,
            });
            (mapped, params)
        }
    };
    let meta = meta_for("profile", &params, a.seed);
    sink.write_with(|w| write_profiles(&profiles, w, Some(&meta)))?;
    eprintln!("profile: {} profiles", profiles.len());
    Ok(())
}

pub fn logit_align(a: LogitArgs, stdout: bool) -> CliResult<()> {
    let sink = Sink::resolve(a.out, stdout, "fusion transform")?;
    let (cx, cy) = (load_embeddings(&a.x)?, load_embeddings(&a.y)?);
    let (fusion, _) = fit_logit(&cx, &cy, a.n_speakers, a.seed)?;
    let meta = meta_for("logit-align", &json!({ "n_speakers": a.n_speakers }), a.seed);
    sink.write_str(&(fusion.to_json(Some(&meta)) + "\n"))?;
    eprintln!(
        "logit-align: N = {}, d = {}, jitter {:e}",
        fusion.n_speakers, fusion.d, fusion.jitter_applied
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainParams {
    nessa: NessaConfig,
    val_fraction: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            nessa: NessaConfig::default(),
            val_fraction: 0.1,
        }
    }
}

pub fn train(a: TrainArgs, stdout: bool) -> CliResult<()> {
    let sink = Sink::resolve(a.out, stdout, "checkpoint")?;
    let mut p: TrainParams = read_config(a.config.as_deref())?;
    let c = &mut p.nessa;
    if let Some(v) = &a.variant {
        c.variant = v.parse::<Variant>()?;
    }
    set(&mut c.alpha, a.alpha);
    set(&mut c.beta, a.beta);
    set(&mut c.gamma, a.gamma);
    set(&mut c.w_init, a.w_init);
    set(&mut c.bank_size, a.bank_size);
    set(&mut c.batch_size, a.batch_size);
    set(&mut c.epochs, a.epochs);
    set(&mut c.steps_per_epoch, a.steps_per_epoch);
    if let Some(h) = &a.hidden {
        let [h1, h2] = h[..] else {
            return Err(usage("--hidden takes exactly two widths"));
        };
        c.hidden = [h1, h2];
    }
    set(&mut c.lr0, a.lr0);
    set(&mut c.lr_decay, a.lr_decay);
    set(&mut c.seed, a.seed);
    set(&mut p.val_fraction, a.val_fraction);
    p.nessa.validate()?;

    let (cx, cy) = (load_embeddings(&a.x)?, load_embeddings(&a.y)?);
    let (tr, va) = training_data(&cx, &cy, p.val_fraction, p.nessa.seed)?;
    eprintln!(
        "train {}: {} training / {} validation speakers",
        p.nessa.variant.as_str(),
        tr.n_speakers(),
        va.n_speakers()
    );
    let outcome = train_aligner(&p.nessa, &tr, &va)?;
    eprintln!("epoch 0 val {:.6}", outcome.initial_val_loss);
    for e in &outcome.log {
        eprintln!(
            "epoch {} lr {:.3e} train {:.6} val {:.6}{}",
            e.epoch,
            e.lr,
            e.train_loss,
            e.val_loss,
            e.w.map(|w| format!(" w {w:.4}")).unwrap_or_default()
        );
    }
    let meta = meta_for("train", &p, p.nessa.seed);
    sink.write_str(&(outcome.checkpoint.to_json(Some(&meta)) + "\n"))?;
    if let Some(path) = &a.log {
        let log = &outcome.log;
        file_sink(path).write_with(|w| write_log(w, &meta, log))?;
    }
    Ok(())
}

fn write_log(w: &mut dyn Write, meta: &ArtifactMeta, log: &[spkalign::nessa::EpochLog]) -> spkalign::Result<()> {
    let io = |e| spkalign::Error::Io { path: "<stream>".into(), source: e };
    writeln!(w, "{}", json!({ "_meta": meta })).map_err(io)?;
    for e in log {
        writeln!(w, "{}", serde_json::to_string(e)?).map_err(io)?;
    }
    Ok(())
}

pub fn score(a: ScoreArgs, stdout: bool) -> CliResult<()> {
    let sink = Sink::resolve(a.out, stdout, "score file")?;
    let kind: ScorerKind = a.scorer.parse()?;
    let fusion = match (&a.fusion, kind) {
        (Some(p), ScorerKind::LogitFused) => Some(FusionTransform::<f64>::load(p)?),
        (None, ScorerKind::LogitFused) => return Err(usage("logit-fused needs --fusion")),
        _ => None,
    };
    let checkpoint = match (&a.checkpoint, kind.variant()) {
        (Some(p), Some(_)) => Some(Checkpoint::<f64>::load(p)?),
        (None, Some(_)) => return Err(usage(format!("{} needs --checkpoint", kind.id()))),
        _ => None,
    };
    let (cx, cy) = (load_embeddings(&a.x)?, load_embeddings(&a.y)?);
    let trials = load_trials(&a.trials)?;
    let aligners = Aligners {
        fusion: fusion.as_ref(),
        checkpoint: checkpoint.as_ref(),
    };
    let scored = score_with(kind, &trials, &cx, &cy, aligners)?;
    let meta = meta_for("score", &json!({ "scorer": kind.id() }), a.seed);
    sink.write_with(|w| write_scores(&scored, w, Some(&meta)))?;
    eprintln!("score: {} trials with {}", scored.len(), kind.id());
    Ok(())
}

fn read_report(path: &std::path::Path) -> CliResult<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Data(spkalign::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    Ok(serde_json::from_str(&text).map_err(spkalign::Error::from)?)
}

pub fn eval(a: EvalArgs, stdout: bool) -> CliResult<()> {
    let sink = Sink::resolve(a.out, stdout, "report")?;
    let scored = load_scores(&a.scores)?;
    let scores = scored.scores.as_deref().expect("score files carry scores");
    let baseline = a.baseline_report.as_deref().map(read_report).transpose()?;
    let mut report = EvalReport::from_scores(&a.scorer_id, scores, &scored.labels(), &a.fars, baseline.as_ref())?;
    if let Some(path) = &a.candidate_report {
        report.attach_gap_recovery(&read_report(path)?, a.gap_far)?;
    }
    let params = json!({
        "scorer_id": a.scorer_id,
        "fars": a.fars,
        "gap_far": a.gap_far,
        "baseline": baseline.is_some(),
        "candidate": a.candidate_report.is_some(),
    });
    let meta = meta_for("eval", &params, a.seed);
    let mut v = serde_json::to_value(&report).map_err(spkalign::Error::from)?;
    v["meta"] = serde_json::to_value(&meta).map_err(spkalign::Error::from)?;
    sink.write_str(&(to_json_fixed(&v, VECTOR_DIGITS) + "\n"))?;
    eprintln!("eval {}: EER {:.2}%", report.scorer_id, 100.0 * report.eer);
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs, stdout: bool) -> CliResult<()> {
    if a.d == 0 || a.hidden == 0 || a.points == 0 {
        return Err(usage("--d, --hidden and --points must be positive"));
    }
    let checks = check_all_losses(a.d, a.hidden, a.points, a.seed)?;
    let mut failed = 0;
    let mut lines = String::new();
    for c in &checks {
        let ok = c.report.max_rel_error <= a.tolerance;
        failed += usize::from(!ok);
        lines.push_str(&format!(
            "{} point {} checked {} max_rel_error {:.3e} {}\n",
            c.loss,
            c.point,
            c.report.checked,
            c.report.max_rel_error,
            if ok { "PASS" } else { "FAIL" }
        ));
    }
    if stdout {
        Sink::Stdout.write_str(&lines)?;
    } else {
        eprint!("{lines}");
    }
    if failed > 0 {
        return Err(CliError::Failed(format!(
            "{failed} of {} gradient checks above {:e}",
            checks.len(),
            a.tolerance
        )));
    }
    Ok(())
}
