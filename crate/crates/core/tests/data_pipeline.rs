use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use affectgan_core::audio_features::{fallback_vectors, write_lld_vectors};
use affectgan_core::data_pipeline::{
    corrupt, frame_seed, generate_synthetic_dataset, load_clip, load_manifest, save_manifest, DataError,
    FrameDataset, LldSource, NoiseSpec, SynthConfig, TRAIN_SPLIT, VAL_SPLIT,
};
use sha2::{Digest, Sha256};

fn small() -> SynthConfig {
    SynthConfig { n_subjects: 4, clips_per_subject: 2, frames_per_clip: 12, image_size: 32, seed: 5, ..SynthConfig::default() }
}

fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, format!("{:x}", Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

#[test]
fn generation_is_deterministic_and_loadable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_synthetic_dataset(&small(), a.path()).unwrap();
    let mb = generate_synthetic_dataset(&small(), b.path()).unwrap();
    assert_eq!(ma.clips, mb.clips);
    let (ha, hb) = (tree_hashes(a.path()), tree_hashes(b.path()));
    assert_eq!(ha.len(), 8 * (12 + 2) + 1);
    assert_eq!(ha, hb);

    let c = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&SynthConfig { seed: 6, ..small() }, c.path()).unwrap();
    assert_ne!(ha, tree_hashes(c.path()));

    let loaded = load_manifest(&a.path().join("manifest.json")).unwrap();
    assert_eq!(loaded.clips, ma.clips);
    assert_eq!(loaded.splits().into_iter().collect::<Vec<_>>(), vec![TRAIN_SPLIT, VAL_SPLIT]);
    // subject-disjoint splits
    let val_subjects: Vec<&str> = loaded.clips_in(VAL_SPLIT).map(|c| c.subject.as_str()).collect();
    assert!(loaded.clips_in(TRAIN_SPLIT).all(|c| !val_subjects.contains(&c.subject.as_str())));

    let clip = load_clip(&loaded.root, &loaded.clips[0]).unwrap();
    assert_eq!(clip.frames.len(), 12);
    assert_eq!(clip.labels.len(), 12);
    assert!(clip.labels.iter().all(|l| l.valence.abs() <= 1.0 && l.arousal.abs() <= 1.0));
    assert_eq!(clip.audio.sample_rate(), 16000);
    assert_eq!(clip.audio.len(), 12 * 640);
}

#[test]
fn manifest_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic_dataset(&small(), dir.path()).unwrap();
    let path = dir.path().join("copy.json");
    save_manifest(&m, &path).unwrap();
    assert_eq!(load_manifest(&path).unwrap(), m);

    let mut dup = m.clone();
    dup.clips[1].id = dup.clips[0].id.clone();
    save_manifest(&dup, &path).unwrap();
    match load_manifest(&path) {
        Err(DataError::DuplicateClip(id)) => assert_eq!(id, m.clips[0].id),
        other => panic!("unexpected {other:?}"),
    }

    let victim = &m.clips[3];
    fs::remove_file(m.root.join(&victim.labels)).unwrap();
    save_manifest(&m, &path).unwrap();
    match load_manifest(&path) {
        Err(DataError::MissingFile { clip, path }) => {
            assert_eq!(clip, victim.id);
            assert!(path.ends_with("labels.csv"));
        }
        other => panic!("unexpected {other:?}"),
    }
    let msg = load_manifest(&path).unwrap_err().to_string();
    assert!(msg.contains(&victim.id), "{msg}");

    fs::write(&path, "{\"root\": \".\", \"clips\": [{\"id\": 3}]}").unwrap();
    assert!(matches!(load_manifest(&path), Err(DataError::Json(_))));
}

#[test]
fn batch_stream_contract() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic_dataset(&small(), dir.path()).unwrap();
    let ds = FrameDataset::load(&m, TRAIN_SPLIT, &LldSource::Fallback).unwrap();
    assert_eq!(ds.len(), m.total_frames(TRAIN_SPLIT));
    assert_eq!(ds.lld_len(), 12);
    let spec = NoiseSpec::default();

    assert!(matches!(ds.batches(1, 0, 0, &spec), Err(DataError::BatchTooSmall(1))));

    let keys = |epoch| -> Vec<Vec<(String, usize)>> { ds.batches(10, 9, epoch, &spec).unwrap().map(|b| b.keys).collect() };
    let e0 = keys(0);
    assert_eq!(e0, keys(0));
    assert_ne!(e0, keys(1));
    let sizes: Vec<usize> = e0.iter().map(Vec::len).collect();
    assert_eq!(sizes.iter().sum::<usize>(), ds.len());
    assert_eq!(*sizes.last().unwrap(), ds.len() % 10);
    let mut all: Vec<_> = e0.concat();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), ds.len());

    for batch in ds.batches(7, 9, 3, &spec).unwrap().take(2) {
        for i in 0..batch.len() {
            let (clip, f) = &batch.keys[i];
            let expected = corrupt(&batch.clean[i], &spec, frame_seed(9, 3, clip, *f));
            assert_eq!(batch.noisy[i], expected);
        }
    }

    let eval: Vec<_> = ds.eval_batches(16, 9, &spec).unwrap().flat_map(|b| b.keys).collect();
    let mut sorted = eval.clone();
    sorted.sort();
    assert_eq!(eval, sorted);
}

#[test]
fn vector_file_source_matches_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic_dataset(&small(), dir.path()).unwrap();
    let feats = dir.path().join("features");
    fs::create_dir(&feats).unwrap();
    for entry in m.clips_in(VAL_SPLIT) {
        let clip = load_clip(&m.root, entry).unwrap();
        write_lld_vectors(&feats.join(format!("{}.csv", clip.clip_id)), &fallback_vectors(&clip.audio, clip.fps, 12).unwrap())
            .unwrap();
    }
    let a = FrameDataset::load(&m, VAL_SPLIT, &LldSource::Fallback).unwrap();
    let b = FrameDataset::load(&m, VAL_SPLIT, &LldSource::Vectors(feats.clone())).unwrap();
    let spec = NoiseSpec::identity();
    for (x, y) in a.eval_batches(8, 0, &spec).unwrap().zip(b.eval_batches(8, 0, &spec).unwrap()) {
        for (u, v) in x.lld.iter().zip(&y.lld) {
            for (p, q) in u.values().iter().zip(v.values()) {
                assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
            }
        }
    }
    match FrameDataset::load(&m, TRAIN_SPLIT, &LldSource::Vectors(feats)) {
        Err(DataError::MissingFile { clip, .. }) => assert!(clip.starts_with('s')),
        other => panic!("unexpected {other:?}"),
    }
}
