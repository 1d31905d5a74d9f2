use deap_core::cnn::CnnModel;
use deap_core::io::deepbench::parse_deepbench;
use deap_core::io::mnist::{encode_images, encode_labels, parse_images, parse_labels, IMAGE_MAGIC};
use deap_core::io::model::{model_from_str, model_to_string};
use deap_core::tensor::{Tensor3, Tensor4};
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn idx_parsers_are_total(bytes in vec(any::<u8>(), 0..2000)) {
        let _ = parse_images(&bytes);
        let _ = parse_labels(&bytes);
    }

    #[test]
    fn idx_parser_survives_hostile_headers(count in any::<u32>(), tail in vec(any::<u8>(), 0..3200)) {
        let mut bytes = Vec::new();
        for v in [IMAGE_MAGIC, count, 28, 28] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        bytes.extend(tail);
        let ok = parse_images(&bytes).is_ok();
        prop_assert_eq!(ok, (bytes.len() - 16) as u64 == u64::from(count) * 784);
    }

    #[test]
    fn idx_round_trip(pixels in vec(any::<u8>(), 784), labels in vec(0u8..10, 1..20)) {
        let image = Tensor3::from_vec(28, 28, 1, pixels.iter().map(|&b| f64::from(b) / 255.0).collect()).unwrap();
        let back = parse_images(&encode_images(std::slice::from_ref(&image))).unwrap();
        prop_assert_eq!(&back[0], &image);
        prop_assert_eq!(parse_labels(&encode_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn model_parser_is_total(text in ".{0,300}") {
        let _ = model_from_str(&text);
    }

    #[test]
    fn deepbench_parser_is_total(text in "[0-9a-z,#\n .-]{0,300}") {
        let _ = parse_deepbench(&text);
    }

    #[test]
    fn tensor_json_round_trip(data in vec(-1e6f64..1e6, 24)) {
        let t = Tensor4::from_vec(2, 3, 2, 2, data).unwrap();
        let back: Tensor4 = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn model_round_trip_is_bit_exact(values in vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 16)) {
        let mut m = CnnModel::zeros();
        for (i, v) in values.iter().enumerate() {
            m.fc1.data_mut()[i * 97] = *v;
            m.conv2.data_mut()[i * 13] = -*v;
        }
        let text = model_to_string(&m).unwrap();
        let back = model_from_str(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(model_to_string(&back).unwrap(), text);
    }
}

#[test]
fn shipped_model_is_byte_stable() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/mnist_reference.json");
    let text = std::fs::read_to_string(path).unwrap();
    let model = model_from_str(&text).unwrap();
    assert_eq!(model_to_string(&model).unwrap(), text);
}
