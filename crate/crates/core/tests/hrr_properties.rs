use holosub::hrr::*;
use holosub::loss::{decode, hrr_loss, BatchPrediction, Codebook};
use holosub::rng::CounterRng;
use proptest::prelude::*;

fn vector(seed: u64, dim: usize) -> HrrVector {
    sample_vector(dim, &mut CounterRng::new(seed)).unwrap()
}

fn max_diff(a: &HrrVector, b: &HrrVector) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dims() -> impl Strategy<Value = usize> {
    prop_oneof![Just(8usize), Just(64), Just(100), 2usize..40]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unbinding_a_projected_key_recovers_the_value(seed in any::<u64>(), dim in dims()) {
        let k = project(&vector(seed, dim)).unwrap();
        let v = vector(seed ^ 0x9e37, dim);
        let back = unbind(&bind(&k, &v).unwrap(), &k).unwrap();
        prop_assert!(max_diff(&back, &v) < 1e-6);
    }

    #[test]
    fn bind_distributes_over_addition(seed in any::<u64>(), dim in dims()) {
        let (x, y, z) = (vector(seed, dim), vector(seed + 1, dim), vector(seed + 2, dim));
        let lhs = bind(&x, &y.add(&z).unwrap()).unwrap();
        let rhs = bind(&x, &y).unwrap().add(&bind(&x, &z).unwrap()).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn projected_vectors_have_matching_inverses(seed in any::<u64>(), dim in dims()) {
        let p = project(&vector(seed, dim)).unwrap();
        prop_assert!(p.is_projected(1e-9));
        prop_assert!(max_diff(&exact_inverse(&p).unwrap(), &pseudo_inverse(&p)) < 1e-9);
    }

    #[test]
    fn projected_keys_preserve_norm(seed in any::<u64>(), dim in dims()) {
        let p = project(&vector(seed, dim)).unwrap();
        let y = vector(seed.wrapping_mul(3), dim);
        prop_assert!((bind(&p, &y).unwrap().norm() - y.norm()).abs() < 1e-9);
    }

    #[test]
    fn decode_ignores_positive_scaling(seed in any::<u64>(), scale in 1e-3f64..1.0) {
        let book = Codebook::new(6, 64, seed).unwrap();
        let raw = vector(seed ^ 0x55, 64).into_values();
        // predictions live in the tanh range
        let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let row: Vec<f64> = raw.iter().map(|v| v / peak).collect();
        let a = decode(&BatchPrediction::new(64, row.clone()).unwrap(), &book).unwrap();
        let scaled = row.iter().map(|v| v * scale).collect();
        let b = decode(&BatchPrediction::new(64, scaled).unwrap(), &book).unwrap();
        prop_assert_eq!(a.argmax, b.argmax);
    }
}

#[test]
fn targets_decode_to_their_class_for_many_seeds() {
    for seed in 0..100 {
        let book = Codebook::new(6, 64, seed).unwrap();
        let data: Vec<f64> = book.targets().iter().flat_map(|t| t.values().to_vec()).collect();
        let d = decode(&BatchPrediction::new(64, data).unwrap(), &book).unwrap();
        assert_eq!(d.argmax, (0..6).collect::<Vec<_>>(), "seed {seed}");
    }
}

#[test]
fn interpolating_towards_targets_lowers_loss() {
    let weights: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    for seed in 0..100u64 {
        let book = Codebook::new(6, 64, seed).unwrap();
        let c = (seed % 6) as usize;
        let start = vector(seed + 1000, 64);
        let target = &book.targets()[c];
        let mut last_loss = f64::INFINITY;
        let mut last_hit = false;
        for &w in &weights {
            let row: Vec<f64> = start.values().iter().zip(target.values()).map(|(s, t)| (1.0 - w) * s + w * t).collect();
            let pred = BatchPrediction::new(64, row).unwrap();
            let loss = hrr_loss(&pred, &[c], &book).unwrap().loss;
            assert!(loss < last_loss, "seed {seed} w {w}");
            last_loss = loss;
            let hit = decode(&pred, &book).unwrap().argmax[0] == c;
            if w > 0.9 {
                assert!(hit || !last_hit, "seed {seed}: accuracy dropped at w {w}");
                assert!(hit, "seed {seed}: miss at w {w}");
            }
            last_hit = hit;
        }
    }
}
