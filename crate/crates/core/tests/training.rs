use holosub::datagen::{build_dataset, DatasetConfig, Profile, VariantId};
use holosub::loss::{Codebook, ResidualNorm};
use holosub::nn::optim::OptimizerKind;
use holosub::nn::train::{accuracy, classify, train, LrSchedule, Objective, TrainConfig};
use holosub::nn::{Head, ModelSpec, ModelState};

fn circles(n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let ds = build_dataset(&DatasetConfig::new(VariantId::TrainCircles, Profile::Desk, 3)).unwrap();
    let mut x: Vec<Vec<f64>> = ds.pixels().iter().map(|p| p.to_vec()).collect();
    let mut y = ds.class_indices();
    x.truncate(n);
    y.truncate(n);
    (x, y)
}

fn config() -> TrainConfig {
    TrainConfig {
        epochs: 50,
        batch_size: 8,
        schedule: LrSchedule::parse("0:2e-3,40:2e-4").unwrap(),
        optimizer: OptimizerKind::default(),
        seed: 11,
        stop_when_fit: true,
    }
}

fn fit(head: Head, obj: &Objective) {
    let (x, y) = circles(60);
    for c in 0..6 {
        assert_eq!(y.iter().filter(|&&l| l == c).count(), 10);
    }
    let mut state = ModelState::init(&ModelSpec::cnn(32, head), 11).unwrap();
    let logs = train(&mut state, &x, &y, &config(), obj, |_| {}).unwrap();
    let last = logs.last().unwrap();
    assert!(logs.len() <= 50);
    assert_eq!(last.train_accuracy, 1.0, "after {} epochs", logs.len());
    assert_eq!(accuracy(&classify(&state, obj, &x).unwrap(), &y), 1.0);
}

#[test]
fn small_cnn_fits_sixty_circles_with_hrr() {
    let obj = Objective::Hrr {
        book: Codebook::new(6, 64, 0).unwrap(),
        residual: ResidualNorm::L2,
    };
    fit(Head::Hrr { feature_dim: 64 }, &obj);
}

#[test]
fn small_cnn_fits_sixty_circles_with_ce() {
    fit(Head::Ce { num_classes: 6 }, &Objective::Ce { num_classes: 6 });
}

#[test]
fn hrr_head_starts_near_target_scale() {
    let book = Codebook::new(6, 64, 0).unwrap();
    let target_rms = {
        let t = book.targets();
        let sq: f64 = t.iter().flat_map(|v| v.values().iter()).map(|x| x * x).sum();
        (sq / (6.0 * 64.0)).sqrt()
    };
    let (x, _) = circles(60);
    for seed in 0..5 {
        let state = ModelState::init(&ModelSpec::cnn(32, Head::Hrr { feature_dim: 64 }), seed).unwrap();
        let out = state.predict(&x).unwrap();
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
        assert!(rms < 4.0 * target_rms, "seed {seed}: output rms {rms} vs target rms {target_rms}");
    }
}
