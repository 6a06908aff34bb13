use affectgan_core::affect_metrics::AffectEstimate;
use affectgan_core::audio_features::LldVector;
use affectgan_core::data_pipeline::{
    generate_synthetic_dataset, Batch, FrameDataset, Image, LldSource, NoiseSpec, SynthConfig, TRAIN_SPLIT, VAL_SPLIT,
};
use affectgan_core::models::{load_checkpoint, AegSpec, CdSpec, Model, ModelSpec};
use affectgan_core::training::{
    evaluate_model, gradient_audit, loss_gradients, train, AdvLoss, AuditOptions, EvalOptions, Mode, Phase,
    TrainConfig, TrainError, Trainer, HISTORY_HEADER,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LLD: usize = 12;

fn random_batch(n: usize, size: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = |rng: &mut ChaCha8Rng| Image::from_planar(size, size, (0..3 * size * size).map(|_| rng.gen::<f32>()).collect());
    let clean: Vec<Image> = (0..n).map(|_| img(&mut rng)).collect();
    let noisy: Vec<Image> = (0..n).map(|_| img(&mut rng)).collect();
    let lld = (0..n).map(|_| LldVector::new((0..LLD).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()).collect();
    let labels = (0..n).map(|_| AffectEstimate::new(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9))).collect();
    let keys = (0..n).map(|i| ("c".to_owned(), i)).collect();
    Batch { noisy, clean, lld, labels, keys }
}

fn cfg(mode: Mode) -> TrainConfig {
    TrainConfig { mode, n_bins: 4, ..TrainConfig::default() }
}

#[test]
fn gradient_audit_all_terms() {
    let model = Model::<f64>::new(ModelSpec::tiny(LLD), 3).unwrap();
    let batch = random_batch(4, 8, 11);
    for mode in Mode::ALL {
        for adv_loss in [AdvLoss::NonsaturatingLog, AdvLoss::LeastSquares] {
            let c = TrainConfig { adv_loss, ..cfg(mode) };
            let report = gradient_audit(&model, &batch, &c, &AuditOptions::default()).unwrap();
            for t in &report.terms {
                assert!(t.max_rel_err < 1e-4, "{mode} {adv_loss:?} {:?}: {}", t.term, t.max_rel_err);
                assert!(t.max_abs_grad > 0.0, "{mode} {:?} has no gradient", t.term);
            }
            let expected = if mode == Mode::Disc { 2 } else { 7 };
            assert_eq!(report.terms.len(), expected);
        }
    }
}

#[test]
fn gradient_audit_is_deterministic() {
    let model = Model::<f64>::new(ModelSpec::tiny(LLD), 5).unwrap();
    let batch = random_batch(3, 8, 2);
    let opts = AuditOptions { n_params: 6, ..AuditOptions::default() };
    let a = gradient_audit(&model, &batch, &cfg(Mode::AegCdSz), &opts).unwrap();
    let b = gradient_audit(&model, &batch, &cfg(Mode::AegCdSz), &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_loss_configuration_has_zero_gradients() {
    let mut model = Model::<f64>::new(ModelSpec::tiny(LLD), 1).unwrap();
    let batch = random_batch(4, 8, 4);
    // supervised-only D with no affect weight
    let c = TrainConfig { lambda_afc: 0.0, ..cfg(Mode::Disc) };
    let (v, grads) = loss_gradients(&model, &batch, &c, Phase::D).unwrap();
    assert_eq!(v, 0.0);
    assert!(grads.iter().all(|t| t.data().iter().all(|&g| g == 0.0)));

    // least-squares G term is zero when every patch score is exactly 1
    let cd = model.cd.params_mut();
    let w = cd.find("cd.patch.weight").unwrap();
    cd.get_mut(w).data_mut().fill(0.0);
    let b = cd.find("cd.patch.bias").unwrap();
    cd.get_mut(b).data_mut().fill(1.0);
    let c = TrainConfig { lambda_afc: 0.0, lambda_rec: 0.0, adv_loss: AdvLoss::LeastSquares, ..cfg(Mode::AegCdSz) };
    let (v, grads) = loss_gradients(&model, &batch, &c, Phase::G).unwrap();
    assert_eq!(v, 0.0);
    assert!(grads.iter().all(|t| t.data().iter().all(|&g| g == 0.0)));
}

#[test]
fn steps_isolate_parameters_and_recompose() {
    let batch = random_batch(4, 8, 9);
    for mode in [Mode::AegCd, Mode::AegCdSz] {
        let c = cfg(mode);
        let model = Model::<f32>::new(ModelSpec::tiny(LLD), 7).unwrap();
        let mut t = Trainer::new(model, c.clone(), &batch.labels).unwrap();
        let (aeg0, cd0) = (t.model.aeg.params().checksum(), t.model.cd.params().checksum());
        let d = t.d_step(&batch).unwrap();
        assert_eq!(t.model.aeg.params().checksum(), aeg0);
        assert_ne!(t.model.cd.params().checksum(), cd0);
        assert!((d.recompose(&c) - d.l_d).abs() < 1e-6);
        let cd1 = t.model.cd.params().checksum();
        let g = t.g_step(&batch).unwrap();
        assert_eq!(t.model.cd.params().checksum(), cd1);
        assert_ne!(t.model.aeg.params().checksum(), aeg0);
        assert!((g.recompose(&c) - g.l_g).abs() < 1e-6);
        assert_eq!((d.step, g.step, t.steps()), (0, 1, 2));
        assert!([d.l_adv, d.l_afc_r, g.l_adv, g.l_afc_f, g.l_rec].iter().all(|v| v.is_finite() && *v > 0.0));
    }
}

#[test]
fn degenerate_weights_leave_single_terms() {
    let batch = random_batch(4, 8, 1);
    let c = TrainConfig { lambda_afc: 0.0, lambda_rec: 0.0, ..cfg(Mode::AegCdSz) };
    let mut t = Trainer::new(Model::<f32>::new(ModelSpec::tiny(LLD), 2).unwrap(), c, &batch.labels).unwrap();
    let d = t.d_step(&batch).unwrap();
    assert_eq!(d.l_d, d.l_adv);
    let g = t.g_step(&batch).unwrap();
    assert_eq!(g.l_g, g.l_adv);

    let mut t = Trainer::new(Model::<f32>::new(ModelSpec::tiny(LLD), 2).unwrap(), cfg(Mode::Disc), &batch.labels).unwrap();
    let d = t.d_step(&batch).unwrap();
    assert_eq!((d.l_adv, d.l_d), (0.0, d.l_afc_r));
    let aeg = t.model.aeg.params().checksum();
    assert!(matches!(t.g_step(&batch), Err(TrainError::NoGenerator)));
    assert_eq!(t.model.aeg.params().checksum(), aeg);
}

#[test]
fn short_batches_are_rejected() {
    let batch = random_batch(1, 8, 1);
    let mut t = Trainer::new(Model::<f32>::new(ModelSpec::tiny(LLD), 2).unwrap(), cfg(Mode::AegCd), &batch.labels).unwrap();
    assert!(matches!(t.d_step(&batch), Err(TrainError::InvalidConfig(_))));
}

fn small_spec(lld_len: usize) -> ModelSpec {
    ModelSpec {
        aeg: AegSpec { image_size: 16, encoder_channels: vec![6, 8], ..AegSpec::default() },
        cd: CdSpec {
            image_size: 16,
            lld_len,
            trunk_channels: vec![8, 8],
            z_channels: 8,
            post_channels: vec![],
            ..CdSpec::default()
        },
    }
}

fn smoke_data(dir: &std::path::Path) -> (FrameDataset, FrameDataset) {
    let synth = SynthConfig { n_subjects: 4, clips_per_subject: 1, frames_per_clip: 16, image_size: 16, val_fraction: 0.25, ..SynthConfig::default() };
    let manifest = generate_synthetic_dataset(&synth, dir).unwrap();
    let train = FrameDataset::load(&manifest, TRAIN_SPLIT, &LldSource::Fallback).unwrap();
    let val = FrameDataset::load(&manifest, VAL_SPLIT, &LldSource::Fallback).unwrap();
    (train, val)
}

#[test]
fn smoke_training_is_deterministic_and_reproducible_from_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (train_ds, val_ds) = smoke_data(&tmp.path().join("data"));
    assert_eq!(train_ds.len() + val_ds.len(), 64);
    let spec = small_spec(train_ds.lld_len());
    let noise = NoiseSpec::default();
    let c = TrainConfig { epochs: 2, batch_size: 8, seed: 3, ..TrainConfig::default() };
    let a = train(&train_ds, &val_ds, &noise, &c, &spec, &tmp.path().join("a")).unwrap();
    let b = train(&train_ds, &val_ds, &noise, &c, &spec, &tmp.path().join("b")).unwrap();

    let ha = std::fs::read(&a.history_path).unwrap();
    assert_eq!(ha, std::fs::read(&b.history_path).unwrap());
    assert_eq!(a.checksums(), b.checksums());
    let text = String::from_utf8(ha).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HISTORY_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("1,train,") && lines[2].starts_with("1,val,"));
    assert!(a.last_checkpoint.is_file() && a.best_checkpoint.is_file());

    // the final checkpoint reproduces the last logged validation row
    let ck = load_checkpoint(&a.last_checkpoint).unwrap();
    assert_eq!(ck.model.cd.params().checksum(), a.model.cd.params().checksum());
    assert_eq!(ck.metadata["epoch"], "2");
    let opts = EvalOptions { seed: c.seed, ..EvalOptions::default() };
    let report = evaluate_model(&ck.model, c.mode, &val_ds, &noise, &opts).unwrap();
    let logged = a.history.last().unwrap();
    assert_eq!(report, logged.metrics);
}

#[test]
fn latent_ablation_changes_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let (train_ds, val_ds) = smoke_data(tmp.path());
    let model = Model::<f32>::new(small_spec(train_ds.lld_len()), 0).unwrap();
    let noise = NoiseSpec::default();
    let live = affectgan_core::training::predict(&model, Mode::AegCdSz, &val_ds, &noise, &EvalOptions::default()).unwrap();
    let off = EvalOptions { zero_latent: true, ..EvalOptions::default() };
    let zeroed = affectgan_core::training::predict(&model, Mode::AegCdSz, &val_ds, &noise, &off).unwrap();
    assert_eq!(live.len(), val_ds.len());
    assert_ne!(live, zeroed);
    // aeg_cd never sees z, so the ablation is a no-op there
    let a = affectgan_core::training::predict(&model, Mode::AegCd, &val_ds, &noise, &EvalOptions::default()).unwrap();
    let b = affectgan_core::training::predict(&model, Mode::AegCd, &val_ds, &noise, &off).unwrap();
    assert_eq!(a, b);
}

#[test]
fn incompatible_dataset_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let (train_ds, val_ds) = smoke_data(&tmp.path().join("data"));
    let c = TrainConfig { epochs: 1, batch_size: 8, ..TrainConfig::default() };
    let err = train(&train_ds, &val_ds, &NoiseSpec::default(), &c, &ModelSpec::default(), tmp.path()).unwrap_err();
    assert!(matches!(err, TrainError::Incompatible(_)), "{err}");
}
