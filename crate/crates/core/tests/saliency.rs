use holosub::datagen::raster::ImageGray;
use holosub::datagen::{build_dataset, DatasetConfig, Profile, VariantId};
use holosub::loss::{self, Codebook, DecodeMode, ResidualNorm};
use holosub::nn::train::Objective;
use holosub::nn::{Head, ModelSpec, ModelState};
use holosub::saliency::{saliency_map, SaliencyError};

fn hrr() -> (Head, Objective) {
    let book = Codebook::new(6, 64, 5).unwrap();
    (
        Head::Hrr { feature_dim: 64 },
        Objective::Hrr {
            book,
            residual: ResidualNorm::L2,
        },
    )
}

fn ce() -> (Head, Objective) {
    (Head::Ce { num_classes: 6 }, Objective::Ce { num_classes: 6 })
}

fn images() -> Vec<ImageGray> {
    build_dataset(&DatasetConfig::new(VariantId::TrainCircles, Profile::Desk, 21)).unwrap().images
}

/// Score of a fixed class, so a perturbation cannot switch the winner.
fn class_score(state: &ModelState, obj: &Objective, pixels: &[f64], class: usize) -> f64 {
    let y = state.predict(&[pixels]).unwrap();
    match obj {
        Objective::Ce { .. } => y[class],
        Objective::Hrr { book, .. } => loss::score_and_gradient(&y, book, class, DecodeMode::ExactInverse).unwrap().0,
    }
}

#[test]
fn most_salient_pixel_moves_the_score_more_than_least_salient() {
    let imgs = images();
    let step = 1e-3;
    let mut wins = 0;
    for pair in 0..50u64 {
        let (head, obj) = if pair % 2 == 0 { hrr() } else { ce() };
        let state = ModelState::init(&ModelSpec::cnn(32, head), 100 + pair).unwrap();
        let img = &imgs[(pair as usize * 7) % imgs.len()];
        let s = saliency_map(&state, img, &obj).unwrap();
        let hi = s.map.argmax();
        let lo = (0..s.map.values.len())
            .min_by(|&a, &b| s.map.values[a].total_cmp(&s.map.values[b]))
            .unwrap();
        let change = |px: usize| {
            let mut up = img.pixels.clone();
            let mut down = img.pixels.clone();
            up[px] += step;
            down[px] -= step;
            (class_score(&state, &obj, &up, s.predicted) - class_score(&state, &obj, &down, s.predicted)).abs()
        };
        if change(hi) > change(lo) {
            wins += 1;
        }
    }
    assert!(wins >= 45, "{wins}/50 pairs");
}

#[test]
fn map_is_normalized_and_deterministic() {
    let imgs = images();
    for (k, (head, obj)) in [hrr(), ce()].into_iter().enumerate() {
        let state = ModelState::init(&ModelSpec::cnn(32, head), k as u64).unwrap();
        for img in imgs.iter().take(6) {
            let a = saliency_map(&state, img, &obj).unwrap();
            let b = saliency_map(&state, img, &obj).unwrap();
            assert_eq!(a, b);
            assert!(a.map.values.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(a.map.max(), 1.0);
        }
    }
}

#[test]
fn zero_weight_model_gives_zero_map() {
    let img = &images()[3];
    for (head, obj) in [hrr(), ce()] {
        let mut state = ModelState::init(&ModelSpec::cnn(32, head), 9).unwrap();
        let n = state.params().len();
        for (i, t) in state.params_mut().iter_mut().enumerate() {
            // keep a nonzero head bias so the HRR output is not the zero vector
            let fill = if i == n - 1 { 0.1 } else { 0.0 };
            t.data_mut().iter_mut().for_each(|v| *v = fill);
        }
        let s = saliency_map(&state, img, &obj).unwrap();
        assert!(s.map.values.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn rejects_wrong_image_size() {
    let (head, obj) = ce();
    let state = ModelState::init(&ModelSpec::cnn(32, head), 0).unwrap();
    let img = ImageGray::filled(16, 16, 0.0);
    assert!(matches!(saliency_map(&state, &img, &obj), Err(SaliencyError::Shape { .. })));
}
