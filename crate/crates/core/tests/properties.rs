mod common;

use std::path::Path;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use pgan_core::eval::{diversity_from_counts, frechet_distance, FeatureStats};
use pgan_core::gan::{strategy_forward_weights, StrategyKind, TrainConfig};
use pgan_core::harness::{
    encode_idx, format_sig6, image_grid, parse_idx_images, parse_idx_labels, pool_2x2,
    train_config_from_kv, train_config_to_kv, GrayImage, KvConfig,
};
use pgan_core::nn::{
    decode_checkpoint, encode_checkpoint, forward, Activation, DenseNet, Exec, HardwareExec,
    NetRole,
};
use pgan_core::noise_sources::{
    autocorrelation, sample_latent, LatentSourceConfig, RandomSequence,
};
use pgan_core::pmmc::{
    clamp_gamma, dense_matvec, map_weights, quantize, tiled_matvec, unmap, LayerMapping,
    ModeReadout, NoiseRegime, NoiseSpec, TensorCore,
};
use pgan_core::rng;

use common::max_abs_diff;

fn matrix(rows: usize, cols: usize, seed: u64, scale: f64) -> Array2<f64> {
    use rand::Rng;
    let mut r = rng::stream(seed, 9);
    Array2::from_shape_simple_fn((rows, cols), || scale * (2.0 * r.random::<f64>() - 1.0))
}

/// Random SPD matrix `A Aᵀ + εI` of size `d`.
fn spd(d: usize, seed: u64) -> Array2<f64> {
    let a = matrix(d, d + 2, seed, 1.0);
    let mut s = a.dot(&a.t());
    for i in 0..d {
        s[[i, i]] += 0.05;
    }
    let t = s.t().to_owned();
    (&s + &t) * 0.5
}

fn stats(d: usize, seed: u64) -> FeatureStats {
    let mu = Array1::from_iter(matrix(1, d, seed + 100, 2.0).iter().copied());
    FeatureStats::new(mu, spd(d, seed), 1000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn latent_sampling_is_deterministic(seed in any::<u64>(), n in 1usize..400, ase in any::<bool>()) {
        let cfg = if ase {
            LatentSourceConfig::ase(0.2, 64, 1, seed)
        } else {
            LatentSourceConfig::ideal(0.2, seed)
        };
        let a = sample_latent(&cfg, n).unwrap();
        let b = sample_latent(&cfg, n).unwrap();
        prop_assert_eq!(a.values.len(), n);
        prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn autocorrelation_is_bounded(seed in any::<u64>(), n in 20usize..500) {
        let seq = sample_latent(&LatentSourceConfig::ideal(1.0, seed), n).unwrap();
        let lags = n / 2;
        let r = autocorrelation(&seq, lags).unwrap();
        prop_assert_eq!(r.len(), lags);
        prop_assert!(r.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn ase_output_has_exact_zero_mean(seed in any::<u64>(), n in 100usize..3000) {
        let seq = sample_latent(&LatentSourceConfig::ase(0.2, 64, 1, seed), n).unwrap();
        let mean = seq.values.iter().sum::<f64>() / n as f64;
        prop_assert!(mean.abs() < 1e-12 * 0.2, "mean {}", mean);
    }

    #[test]
    fn mode_readout_ranges(p0 in 0.0f64..10.0, p1 in 0.0f64..10.0) {
        prop_assume!(p0 + p1 > 1e-9);
        let m = ModeReadout::new(p0, p1).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.purity_te0()));
        prop_assert!((m.purity_te0() + m.purity_te1() - 1.0).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&m.contrast()));
    }

    #[test]
    fn weight_mapping_round_trip(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8, gmax in 0.05f64..=1.0) {
        let w = matrix(rows, cols, seed, 3.0);
        prop_assume!(w.iter().any(|v| *v != 0.0));
        let m = LayerMapping::from_weights(&w, gmax).unwrap();
        let g = map_weights(&w, &m).unwrap();
        prop_assert!(g.iter().all(|v| v.abs() <= gmax + 1e-12));
        prop_assert!(max_abs_diff(&unmap(&g, &m), &w) < 1e-12);
    }

    #[test]
    fn quantization_lands_on_grid(g in -1.5f64..1.5, bits in 1u32..10) {
        let q = quantize(g, bits);
        let step = 2.0 / ((1u64 << bits) - 1) as f64;
        let k = (q + 1.0) / step;
        prop_assert!((k - k.round()).abs() < 1e-9);
        prop_assert!(q.abs() <= 1.0);
        prop_assert!((q - clamp_gamma(g)).abs() <= step / 2.0 + 1e-12);
    }

    #[test]
    fn zero_noise_tiled_product_is_dense(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20) {
        let w = matrix(rows, cols, seed, 2.0);
        let x: Vec<f64> = matrix(1, cols, seed ^ 1, 1.0).iter().copied().collect();
        let m = LayerMapping::from_weights(&w, 1.0).unwrap();
        let mut core = TensorCore::prototype(NoiseSpec::noiseless(), seed);
        let y = tiled_matvec(&mut core, &w, &x, &m).unwrap();
        let d = dense_matvec(&w, &x);
        prop_assert!(y.iter().zip(&d).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn zero_noise_hardware_forward_is_exact(seed in any::<u64>(), batch in 1usize..6, fixed in any::<bool>()) {
        let net = TrainConfig { gen_hidden: vec![12, 9], ..TrainConfig::default() }
            .build_generator(&mut rng::stream(seed, 0))
            .unwrap();
        let z = matrix(batch, net.in_dim(), seed, 0.4);
        let regime = if fixed { NoiseRegime::FixedPerDeployment } else { NoiseRegime::FreshPerUse };
        let hw = HardwareExec::new(TensorCore::prototype(NoiseSpec::new(0.0, 0.0, regime).unwrap(), seed), 1.0);
        let a = forward(&net, &z, &Exec::Exact).unwrap().into_output();
        let b = forward(&net, &z, &Exec::Hardware(&hw)).unwrap().into_output();
        prop_assert!(max_abs_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn clean_strategies_return_clean_weights(seed in any::<u64>()) {
        let net = TrainConfig { gen_hidden: vec![6], ..TrainConfig::default() }
            .build_generator(&mut rng::stream(seed, 0))
            .unwrap();
        let mut r = rng::stream(seed, 5);
        for s in [StrategyKind::NF, StrategyKind::IC { train_sigma: 0.5 }, StrategyKind::WC { weight_noise_std: 0.0 },
                  StrategyKind::CR { weight_noise_std: 0.0, lambda: 1.0 }] {
            prop_assert_eq!(strategy_forward_weights(&net, &s, 1.0, &mut r).unwrap(), net.weights());
        }
    }

    #[test]
    fn frechet_symmetric_and_self_zero(d in 1usize..6, sa in any::<u32>(), sb in any::<u32>()) {
        let a = stats(d, sa as u64);
        let b = stats(d, sb as u64 + 7);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-8 * (1.0 + ab.abs()), "{} vs {}", ab, ba);
        prop_assert!(ab >= -1e-8);
        prop_assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-8);
    }

    #[test]
    fn frechet_one_dimensional_closed_form(m1 in -5.0f64..5.0, m2 in -5.0f64..5.0, s1 in 0.01f64..4.0, s2 in 0.01f64..4.0) {
        let a = FeatureStats::new(Array1::from(vec![m1]), Array2::from_elem((1, 1), s1 * s1), 10).unwrap();
        let b = FeatureStats::new(Array1::from(vec![m2]), Array2::from_elem((1, 1), s2 * s2), 10).unwrap();
        let want = (m1 - m2).powi(2) + (s1 - s2).powi(2);
        prop_assert!((frechet_distance(&a, &b).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn diversity_is_bounded(counts in proptest::collection::vec(0usize..1000, 10)) {
        let d = diversity_from_counts(&counts);
        prop_assert!((0.0..=30.0 + 1e-9).contains(&d));
    }

    #[test]
    fn idx_round_trip_and_pooling(seed in any::<u64>(), n in 1usize..5) {
        use rand::Rng;
        let mut r = rng::stream(seed, 3);
        let raw: Vec<u8> = (0..n * 784).map(|_| r.random()).collect();
        let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..10)).collect();
        let (img, lbl) = encode_idx(&raw, &labels);
        let (count, back) = parse_idx_images(Path::new("mem"), &img).unwrap();
        prop_assert_eq!(count, n);
        prop_assert_eq!(&back, &raw);
        prop_assert_eq!(parse_idx_labels(Path::new("mem"), &lbl).unwrap(), labels);
        for k in 0..n {
            let im = &raw[k * 784..(k + 1) * 784];
            let pooled = pool_2x2(im);
            let m_raw = im.iter().map(|v| *v as f64).sum::<f64>() / 784.0;
            let m_pool = pooled.iter().sum::<f64>() / 196.0;
            prop_assert!((m_raw - m_pool).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_round_trip(seed in any::<u64>(), n in 1usize..50) {
        let imgs = matrix(n, 196, seed, 1.0).mapv(|v| v.abs());
        let g = image_grid(&imgs).unwrap();
        let bytes = g.to_pgm();
        let back = GrayImage::from_pgm(&bytes, "mem").unwrap();
        prop_assert_eq!(back.to_pgm(), bytes);
    }

    #[test]
    fn sig6_is_idempotent(v in proptest::num::f64::NORMAL) {
        let s = format_sig6(v);
        let again = format_sig6(s.parse::<f64>().unwrap());
        prop_assert_eq!(s, again);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), h in 1usize..12) {
        let net = DenseNet::mlp(
            NetRole::Discriminator,
            &[5, h, 1],
            &[Activation::LeakyRelu(0.2), Activation::Sigmoid],
            &mut rng::stream(seed, 0),
        ).unwrap();
        let text = encode_checkpoint(&net);
        let back = decode_checkpoint(&text, "mem").unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(encode_checkpoint(&back), text);
    }

    #[test]
    fn manifest_round_trip(seed in any::<u64>(), epochs in 0usize..500, w in 0.0f64..0.2) {
        let cfg = TrainConfig {
            seed,
            epochs,
            strategy: StrategyKind::WC { weight_noise_std: w },
            ..TrainConfig::default()
        };
        let text = train_config_to_kv(&cfg).to_text();
        let back = train_config_from_kv(&KvConfig::parse(&text, "m").unwrap(), &TrainConfig::default()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn ideal_source_ks_band() {
    // Pass rate of KS < 1.63/sqrt(n) over 100 seeds; the 99% quantile makes ~1 failure typical.
    let n = 10_000;
    let passes = (0..100u64)
        .filter(|s| {
            let seq: RandomSequence =
                sample_latent(&LatentSourceConfig::ideal(0.2, *s), n).unwrap();
            pgan_core::noise_sources::ks_statistic(&seq.values, 0.0, 0.2) < 1.63 / (n as f64).sqrt()
        })
        .count();
    assert!(passes >= 95, "{passes}/100 seeds inside the 99% KS band");
}
