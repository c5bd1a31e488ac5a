use spkalign::data::{
    load_embeddings, load_profiles, load_scores, load_trials, save_embeddings, save_profiles, save_scores,
    save_trials, ArtifactMeta,
};
use spkalign::metrics::{eer, roc};
use spkalign::nessa::{train, Checkpoint, NessaConfig, Variant};
use spkalign::pipeline::{fit_logit, score_with, training_data, Aligners, ScorerKind};
use spkalign::synth::{generate, make_trials, DistortionKind, SynthConfig};

fn small(distortion: DistortionKind, n_speakers: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_speakers,
        n_enroll_utts: 5,
        n_runtime_utts: 3,
        latent_dim: 8,
        embed_dim: 8,
        within_noise_x: 1.0,
        within_noise_y: 0.6,
        distortion_x: distortion,
        distortion_y: distortion,
        seed,
        model_seed: 1,
        ..SynthConfig::default()
    }
}

fn scores_eer(t: &spkalign::data::TrialSet) -> f64 {
    eer(&roc(t.scores.as_ref().unwrap(), &t.labels()).unwrap())
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ArtifactMeta::new(7, "h");
    let (x, _, _) = generate(&small(DistortionKind::Affine, 20, 3)).unwrap();
    let p = dir.path().join("x.jsonl");
    save_embeddings(&x, &p, Some(&meta)).unwrap();
    let back = load_embeddings(&p).unwrap();
    assert_eq!(back.len(), x.len());
    for (a, b) in x.records().iter().zip(back.records()) {
        assert_eq!((&a.speaker_id, &a.utterance_id, a.split), (&b.speaker_id, &b.utterance_id, b.split));
        for (u, v) in a.vector.iter().zip(b.vector.iter()) {
            assert!((u - v).abs() <= 1e-9, "{u} vs {v}");
        }
    }

    let pp = dir.path().join("p.jsonl");
    save_profiles(x.profiles(), &pp, Some(&meta)).unwrap();
    assert_eq!(load_profiles(&pp).unwrap().len(), 20);

    let trials = make_trials(&x, 20, 60, 1).unwrap();
    let tp = dir.path().join("t.tsv");
    save_trials(&trials, &tp, Some(&meta)).unwrap();
    assert_eq!(load_trials(&tp).unwrap(), trials);

    let scored = score_with(ScorerKind::CosineSymX, &trials, &x, &x, Aligners::default()).unwrap();
    let sp = dir.path().join("s.tsv");
    save_scores(&scored, &sp, Some(&meta)).unwrap();
    let back = load_scores(&sp).unwrap();
    assert_eq!(back.trials, scored.trials);
    for (a, b) in scored.scores.unwrap().iter().zip(back.scores.unwrap()) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn identical_views_make_asymmetric_scoring_symmetric() {
    let cfg = SynthConfig {
        within_noise_x: 0.6,
        ..small(DistortionKind::Identity, 40, 5)
    };
    let (x, y, _) = generate(&cfg).unwrap();
    let trials = make_trials(&y, 40, 200, 2).unwrap();
    let raw = score_with(ScorerKind::CosineAsymRaw, &trials, &x, &y, Aligners::default()).unwrap();
    let sym = score_with(ScorerKind::CosineSymY, &trials, &x, &y, Aligners::default()).unwrap();
    for (a, b) in raw.scores.unwrap().iter().zip(sym.scores.unwrap()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn aligners_beat_raw_scoring_under_rotation() {
    let (tx, ty, _) = generate(&small(DistortionKind::Orthogonal, 600, 10)).unwrap();
    let (ex, ey, _) = generate(&small(DistortionKind::Orthogonal, 150, 11)).unwrap();
    let trials = make_trials(&ey, 300, 3000, 4).unwrap();
    let raw = scores_eer(&score_with(ScorerKind::CosineAsymRaw, &trials, &ex, &ey, Aligners::default()).unwrap());
    let sym_x = scores_eer(&score_with(ScorerKind::CosineSymX, &trials, &ex, &ey, Aligners::default()).unwrap());
    assert!(raw > 0.35, "{raw}");

    let (fusion, order) = fit_logit(&tx, &ty, 300, 1).unwrap();
    assert_eq!(order.len(), 300);
    let fused = Aligners {
        fusion: Some(&fusion),
        checkpoint: None,
    };
    let logit = scores_eer(&score_with(ScorerKind::LogitFused, &trials, &ex, &ey, fused).unwrap());
    assert!(logit < raw - 0.1, "logit {logit} raw {raw}");

    let (tr, va) = training_data(&tx, &ty, 0.1, 1).unwrap();
    let cfg = NessaConfig {
        variant: Variant::M2,
        epochs: 8,
        steps_per_epoch: 40,
        batch_size: 64,
        bank_size: 64,
        hidden: [32, 32],
        seed: 1,
        ..NessaConfig::default()
    };
    let out = train(&cfg, &tr, &va).unwrap();
    let ck = Aligners {
        fusion: None,
        checkpoint: Some(&out.checkpoint),
    };
    let scored = score_with(ScorerKind::NessaM2, &trials, &ex, &ey, ck).unwrap();
    let m2 = scores_eer(&scored);
    assert!(m2 < sym_x + 0.02, "m2 {m2} sym-x {sym_x}");

    // a reloaded checkpoint scores identically
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m2.json");
    out.checkpoint.save(&path, None).unwrap();
    let loaded = Checkpoint::<f64>::load(&path).unwrap();
    let again = score_with(
        ScorerKind::NessaM2,
        &trials,
        &ex,
        &ey,
        Aligners {
            fusion: None,
            checkpoint: Some(&loaded),
        },
    )
    .unwrap();
    assert_eq!(again.scores, scored.scores);
}
