use frelic_core::coder::cdf::gaussian_support;
use frelic_core::coder::{
    range_decode, range_encode, QuantizedCdf, RangeDecoder, RangeEncoder, SymbolTable, TOTAL,
};
use frelic_core::entropy::likelihood::{gaussian_mass, logistic_mass};
use frelic_core::{Graph, ModelConfig, Tensor};
use proptest::prelude::*;

fn table_from(weights: &[u32]) -> QuantizedCdf {
    let total: f64 = weights.iter().map(|&w| w as f64).sum();
    QuantizedCdf::from_masses(
        &weights
            .iter()
            .map(|&w| w as f64 / total)
            .collect::<Vec<_>>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_merge_round_trip(b in 1usize..3, nh in 1usize..4, nw in 1usize..4, win in 1usize..5, c in 1usize..4) {
        let (h, w) = (nh * win, nw * win);
        let x = Tensor::from_fn(&[b, h, w, c], |i| i as f64);
        let mut g = Graph::inference();
        let v = g.constant(x.clone());
        let p = g.window_partition(v, win).unwrap();
        prop_assert_eq!(g.shape(p), &[b * nh * nw, win * win, c][..]);
        let m = g.window_merge(p, b, h, w, win).unwrap();
        prop_assert_eq!(g.value(m), &x);
    }

    #[test]
    fn pad_then_crop_is_identity(h in 2usize..20, w in 2usize..20, ph in 0usize..40, pw in 0usize..40) {
        let x = Tensor::from_fn(&[1, h, w, 3], |i| (i * 7 % 11) as f32);
        let p = x.reflect_pad(h + ph, w + pw).unwrap();
        prop_assert_eq!(p.crop(h, w).unwrap(), x);
    }

    #[test]
    fn cdf_invariants(sigma in 0.04f64..60.0) {
        let t = SymbolTable::gaussian(sigma, 255);
        let cum = t.cdf.cumulative();
        prop_assert_eq!(cum[0], 0);
        prop_assert_eq!(*cum.last().unwrap(), TOTAL);
        prop_assert!(cum.windows(2).all(|p| p[1] > p[0]));
        prop_assert_eq!(t.half_width, gaussian_support(sigma, 255));
    }

    #[test]
    fn coder_round_trips(
        weights in prop::collection::vec(prop::collection::vec(1u32..1000, 1..40), 1..8),
        picks in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..3000),
    ) {
        let tables: Vec<QuantizedCdf> = weights.iter().map(|w| table_from(w)).collect();
        let mut cdfs = Vec::new();
        let mut syms = Vec::new();
        for (ti, si) in &picks {
            let t = &tables[ti.index(tables.len())];
            cdfs.push(t);
            syms.push(si.index(t.num_symbols()));
        }
        let bytes = range_encode(&syms, &cdfs).unwrap();
        prop_assert_eq!(range_decode(&bytes, &cdfs).unwrap(), syms.clone());
        let ideal: f64 = syms.iter().zip(&cdfs).map(|(&s, c)| -((c.freq(s) as f64) / TOTAL as f64).log2()).sum();
        prop_assert!(bytes.len() as f64 <= (ideal / 8.0).ceil() + 16.0);
    }

    #[test]
    fn values_round_trip_with_escapes(
        values in prop::collection::vec(prop_oneof![-6i32..6, any::<i16>().prop_map(i32::from)], 0..500),
        sigma in 0.04f64..4.0,
    ) {
        let t = SymbolTable::gaussian(sigma, 255);
        let mut enc = RangeEncoder::new();
        for &v in &values {
            enc.encode_value(v, &t);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        for &v in &values {
            prop_assert_eq!(dec.decode_value(&t).unwrap(), v);
        }
    }

    #[test]
    fn gaussian_mass_normalizes(mu in -3.0f64..3.0, sigma in 0.04f64..10.0) {
        let s: f64 = (-400..=400).map(|k| gaussian_mass(k as f64 - mu, sigma)).sum();
        prop_assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn logistic_mass_normalizes(loc in -3.0f64..3.0, scale in 0.01f64..2.0) {
        let s: f64 = (-100..=100).map(|k| logistic_mass(k as f64 - loc, scale)).sum();
        prop_assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn config_text_round_trips(c in 1usize..6, lf in any::<bool>(), casa in any::<bool>()) {
        let mut cfg = ModelConfig::tiny();
        cfg.embed_channels = 4 * c;
        cfg.lf_enabled = lf;
        cfg.hf_enabled = true;
        cfg.casa_enabled = casa;
        let back = ModelConfig::from_kv(&cfg.to_kv()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn uniform_table_costs_eight_bits_per_symbol() {
    let cdf = QuantizedCdf::from_frequencies(&[256; 256]).unwrap();
    let syms: Vec<usize> = (0..1000).map(|i| (i * 97 + 31) % 256).collect();
    let bytes = range_encode(&syms, &vec![&cdf; 1000]).unwrap();
    assert!(bytes.len().abs_diff(1000) <= 16, "{} bytes", bytes.len());
}

#[test]
fn hundred_thousand_symbols_over_many_tables() {
    let tables: Vec<SymbolTable> = (0..128)
        .map(|i| SymbolTable::gaussian(0.04 + i as f64 * 0.37, 255))
        .collect();
    let mut state = 0x2545_F491_4F6C_DD1Du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let mut pairs = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        let t = (next() % 128) as usize;
        let half = tables[t].half_width as u64;
        let v = (next() % (2 * half + 9)) as i32 - half as i32 - 4;
        pairs.push((t, v));
    }
    let mut enc = RangeEncoder::new();
    for &(t, v) in &pairs {
        enc.encode_value(v, &tables[t]);
    }
    let bytes = enc.finish();
    let mut dec = RangeDecoder::new(&bytes).unwrap();
    let mismatches = pairs
        .iter()
        .filter(|&&(t, v)| dec.decode_value(&tables[t]).unwrap() != v)
        .count();
    assert_eq!(mismatches, 0);
}
