use frelic::dataset::{crop_offset, load_training_set, sample_batch};
use frelic::synthetic::{scenes, write_scenes};
use frelic::{Checkpoint, TrainConfig, Trainer};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(steps: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 2,
        log_every: 0,
        seed: 17,
        ..TrainConfig::default()
    }
}

fn bits(t: &Trainer) -> Vec<u32> {
    t.model
        .params
        .iter()
        .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let images = scenes(3, 64, 2);
    let mut straight = Trainer::new(config(6), images.clone()).unwrap();
    let full = straight.run(None, |_| Ok(())).unwrap();

    let mut first = Trainer::new(config(6), images.clone()).unwrap();
    for _ in 0..3 {
        first.step_once().unwrap();
    }
    let saved = Checkpoint::from_bytes(&first.checkpoint().to_bytes()).unwrap();
    let mut resumed = Trainer::resume(&saved, images).unwrap();
    let tail = resumed.run(None, |_| Ok(())).unwrap();

    assert_eq!(tail, full[3..]);
    assert_eq!(bits(&resumed), bits(&straight));
}

#[test]
fn checkpoint_files_preserve_the_codec() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(config(2), scenes(2, 64, 4)).unwrap();
    t.run(None, |_| Ok(())).unwrap();
    let path = dir.path().join("m.ck");
    t.checkpoint().save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.to_bytes(), t.checkpoint().to_bytes());
    let m = back.model().unwrap();
    assert_eq!(m.model_id(), t.model.model_id());
    let x = scenes(1, 64, 9).remove(0).pixels;
    assert_eq!(
        m.compress(&x).unwrap().to_bytes(),
        t.model.compress(&x).unwrap().to_bytes()
    );
}

#[test]
fn training_directory_skips_small_images() {
    let dir = tempfile::tempdir().unwrap();
    write_scenes(dir.path(), 2, 64, 1).unwrap();
    frelic::image_io::write_ppm(&dir.path().join("small.ppm"), &scenes(1, 32, 1)[0].pixels)
        .unwrap();
    let set = load_training_set(dir.path(), 64).unwrap();
    assert_eq!(set.len(), 2);
    assert!(set.iter().all(|i| i.dims() == (64, 64)));
    assert!(load_training_set(dir.path(), 128).is_err());
}

#[test]
fn crop_offsets_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w, size) = (20, 20, 16);
    let mut counts = [0u32; 25];
    let n = 10_000;
    for _ in 0..n {
        let (t, l) = crop_offset(h, w, size, &mut rng);
        counts[t * 5 + l] += 1;
    }
    let e = n as f64 / 25.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 24 degrees of freedom, 0.1% upper tail
    assert!(chi2 < 51.18, "chi-square {chi2}");
}

#[test]
fn fixed_seed_batches_repeat() {
    let images = scenes(4, 96, 6);
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        (0..3)
            .map(|_| sample_batch(&images, 2, 64, &mut rng))
            .collect::<Vec<_>>()
    };
    let (a, b) = (draw(), draw());
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
}

#[test]
fn training_log_rows_parse() {
    let mut t = Trainer::new(config(3), scenes(2, 64, 5)).unwrap();
    let mut out = Vec::new();
    t.run(Some(&mut out), |_| Ok(())).unwrap();
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], frelic::trainer::LOG_HEADER);
    assert_eq!(rows.len(), 1);
    let mut t = Trainer::new(
        TrainConfig {
            log_every: 1,
            ..config(3)
        },
        scenes(2, 64, 5),
    )
    .unwrap();
    let mut out = Vec::new();
    t.run(Some(&mut out), |_| Ok(())).unwrap();
    for (i, row) in String::from_utf8(out).unwrap().lines().skip(1).enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 6);
        assert_eq!(f[0].parse::<usize>().unwrap(), i + 1);
        assert!(f[1..].iter().all(|v| v.parse::<f64>().is_ok()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn train_config_round_trips(
        lambda in 1e-4f64..1.0,
        steps in 1u64..100_000,
        seed in 0u64..=i64::MAX as u64,
        lf in any::<bool>(),
        casa in any::<bool>(),
        ffn in prop::sample::select(vec!["mlgffn", "plain", "mlgffn_no_local", "mlgffn_no_global"]),
    ) {
        let cfg = TrainConfig {
            lambda,
            steps,
            seed,
            lf_enabled: lf,
            hf_enabled: true,
            casa_enabled: casa,
            ffn: ffn.to_string(),
            ..TrainConfig::default()
        };
        prop_assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
