use frelic_core::entropy::likelihood::gaussian_mass;
use frelic_core::entropy::EntropyModel;
use frelic_core::params::Init;
use frelic_core::{Error, Graph, ModelConfig, ParamSet, Tensor, Var};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Φ from its Taylor series, independent of libm's erf.
fn phi(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / (2.0 * n as f64);
        sum += term / (2 * n + 1) as f64;
    }
    0.5 + sum / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn discretized_gaussian_normalizes() {
    for sigma in [0.04, 0.5, 1.0, 10.0] {
        let s: f64 = (-200..=200).map(|k| gaussian_mass(k as f64, sigma)).sum();
        assert!((s - 1.0).abs() <= 1e-6, "sigma {sigma}: {s}");
    }
    let p = gaussian_mass(0.0f64, 1.0);
    assert!((p - 0.3829249).abs() <= 1e-6);
    assert!((p - (phi(0.5) - phi(-0.5))).abs() <= 1e-12);
}

fn setup(chunks: Vec<usize>) -> (ModelConfig, ParamSet<f32>, EntropyModel) {
    let mut cfg = ModelConfig::tiny();
    cfg.latent_channels = chunks.iter().sum();
    cfg.chunks = chunks;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut init = Init::new(&mut rng);
    let mut ps = ParamSet::new();
    let em = EntropyModel::new(&mut ps, &mut init, &cfg).unwrap();
    (cfg, ps, em)
}

fn all_params(
    em: &EntropyModel,
    ps: &ParamSet<f32>,
    y: &Tensor<f32>,
    hyper: &Tensor<f32>,
) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut g = Graph::inference();
    let hv = g.constant(hyper.clone());
    let sizes = em.schedule.sizes().to_vec();
    let decoded: Vec<Var> = (0..sizes.len())
        .map(|i| g.constant(y.channel_slice(em.schedule.offset(i), sizes[i])))
        .collect();
    (0..sizes.len())
        .map(|i| {
            let (mu, sigma) = em.chunk_params(&mut g, ps, &decoded[..i], hv, i).unwrap();
            let bits = |v: Var| {
                g.value(v)
                    .data()
                    .iter()
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>()
            };
            (bits(mu), bits(sigma))
        })
        .collect()
}

fn check_causality(chunks: Vec<usize>) {
    let (cfg, ps, em) = setup(chunks);
    let m = cfg.latent_channels;
    let (h, w) = (4, 4);
    let y = Tensor::from_fn(&[1, h, w, m], |i| {
        ((i * 37 % 101) as f32 / 10.0).round() - 5.0
    });
    let hyper = Tensor::from_fn(&[1, h, w, 2 * m], |i| ((i * 13 % 29) as f32 - 14.0) / 7.0);
    let base = all_params(&em, &ps, &y, &hyper);
    for j in 0..em.schedule.len() {
        let (off, len) = (em.schedule.offset(j), em.schedule.sizes()[j]);
        let mut y2 = y.clone();
        for (i, v) in y2.data_mut().iter_mut().enumerate() {
            let c = i % m;
            if c >= off && c < off + len {
                *v += 3.0;
            }
        }
        let pert = all_params(&em, &ps, &y2, &hyper);
        for i in 0..=j {
            assert_eq!(
                pert[i], base[i],
                "chunk {i} changed after perturbing chunk {j}"
            );
        }
        if j + 1 < em.schedule.len() {
            assert_ne!(
                pert[j + 1],
                base[j + 1],
                "chunk {} ignores chunk {j}",
                j + 1
            );
        }
    }
}

#[test]
fn context_is_causal_tiny_schedule() {
    check_causality(vec![4, 4, 8]);
}

#[test]
fn context_is_causal_full_schedule() {
    check_causality(vec![16, 16, 32, 64, 192]);
}

#[test]
fn chunks_out_of_order_are_rejected() {
    let (_, ps, em) = setup(vec![4, 4, 8]);
    let mut g = Graph::inference();
    let hyper = g.constant(Tensor::zeros(&[1, 2, 2, 32]));
    assert!(matches!(
        em.chunk_params(&mut g, &ps, &[], hyper, 1),
        Err(Error::ChunkOrder {
            expected: 1,
            got: 0
        })
    ));
}

#[test]
fn sigma_respects_floor() {
    let (_, ps, em) = setup(vec![4, 4, 8]);
    let mut g = Graph::inference();
    let hyper = g.constant(Tensor::full(&[1, 2, 2, 32], -50.0));
    let (_, sigma) = em.chunk_params(&mut g, &ps, &[], hyper, 0).unwrap();
    assert!(g.value(sigma).data().iter().all(|&s| s >= 0.04));
}
