use std::path::Path;

use deap_core::cnn::{deap_infer, evaluate, Backend};
use deap_core::conv::DeapConfig;
use deap_core::io::mnist::{load_split, Split};
use deap_core::io::model::load_model;
use deap_core::quant::QuantSpec;

fn root() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

#[test]
fn bundled_test_split_loads() {
    let test = load_split(&root().join("data/mnist"), Split::Test).unwrap();
    assert_eq!(test.len(), 500);
    assert!(test.images.iter().all(|im| im.dims() == (28, 28, 1)));
    assert!(test.labels.iter().all(|&l| l <= 9));
}

#[test]
fn backends_agree_on_real_digits() {
    let model = load_model(&root().join("models/mnist_reference.json")).unwrap();
    let test = load_split(&root().join("data/mnist"), Split::Test).unwrap().head(5);
    let exact = Backend::Photonic(DeapConfig::default().with_quant(QuantSpec::off()));
    for image in &test.images {
        let d = deap_infer(&model, image, &Backend::Digital).unwrap();
        let p = deap_infer(&model, image, &exact).unwrap();
        for (a, b) in d.iter().zip(&p) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn shipped_model_classifies_a_sample() {
    let model = load_model(&root().join("models/mnist_reference.json")).unwrap();
    let test = load_split(&root().join("data/mnist"), Split::Test).unwrap().head(50);
    let e = evaluate(&model, &test, &Backend::Digital).unwrap();
    assert!(e.accuracy >= 0.9, "{}", e.accuracy);
}
