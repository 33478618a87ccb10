use frelic_core::gradcheck::{check_case, check_model, op_suite};
use frelic_core::{Model, ModelConfig, Tensor};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_op_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    for case in op_suite(&mut rng) {
        let err = check_case(&case, &mut rng).unwrap();
        if err > 1e-4 {
            failures.push(format!("{}: {err:e}", case.name));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn full_pipeline_matches_central_differences() {
    let mut model: Model<f64> =
        Model::new(ModelConfig::tiny(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut s = 0u32;
    let x = Tensor::from_fn(&[1, 64, 64, 3], |i| {
        s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
        0.5 + 0.3 * ((i % 17) as f64 / 17.0 - 0.5) + 0.2 * (s >> 8) as f64 / (1u32 << 24) as f64
    });
    let report = check_model::<ChaCha8Rng>(&mut model, &x, 0.013, 5, 3).unwrap();
    let bad: Vec<_> = report.iter().filter(|r| r.relative_error > 1e-3).collect();
    assert!(bad.is_empty(), "{bad:#?}");
}
