use deap_core::pwb::*;
use deap_core::quant::QuantSpec;
use proptest::collection::vec;
use proptest::prelude::*;

fn weights_and_inputs(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| (vec(-3.0f64..3.0, n), vec(0.0f64..=1.0, n)))
}

fn exact_dot(w: &[f64], mu: &[f64]) -> f64 {
    w.iter().zip(mu).map(|(a, b)| a * b).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn unquantized_dot_matches_oracle((w, mu) in weights_and_inputs(100)) {
        let cfg = PwbConfig::new(w.clone()).with_quant(QuantSpec::off());
        let got = pwb_dot(&EnvelopeVector::new(mu.clone()).unwrap(), &cfg).unwrap();
        prop_assert!((got - exact_dot(&w, &mu)).abs() < 1e-9);
    }

    #[test]
    fn quantized_dot_error_is_bounded((w, mu) in weights_and_inputs(100)) {
        let cfg = PwbConfig::new(w.clone());
        let got = pwb_dot(&EnvelopeVector::new(mu.clone()).unwrap(), &cfg).unwrap();
        let g = normalize_weights(&w).g_tia;
        let bound = g * w.len() as f64 * (2f64.powi(-6) + 2f64.powi(-14));
        prop_assert!((got - exact_dot(&w, &mu)).abs() <= bound);
    }

    #[test]
    fn normalization_is_scale_invariant(w in vec(-5.0f64..5.0, 1..50), alpha in 0.01f64..100.0) {
        let a = normalize_weights(&w);
        let scaled: Vec<f64> = w.iter().map(|v| alpha * v).collect();
        let b = normalize_weights(&scaled);
        for (x, y) in a.f_star.iter().zip(&b.f_star) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((b.g_tia - alpha * a.g_tia).abs() <= 1e-9 * b.g_tia.max(1.0));
        prop_assert!(a.f_star.iter().all(|f| (-1.0..=1.0).contains(f)));
    }

    #[test]
    fn dot_is_homogeneous_in_weights((w, mu) in weights_and_inputs(30), alpha in 0.1f64..10.0) {
        let env = EnvelopeVector::new(mu).unwrap();
        let base = pwb_dot(&env, &PwbConfig::new(w.clone()).with_quant(QuantSpec::off())).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| alpha * v).collect();
        let got = pwb_dot(&env, &PwbConfig::new(scaled).with_quant(QuantSpec::off())).unwrap();
        prop_assert!((got - alpha * base).abs() < 1e-8 * alpha.max(1.0));
    }

    #[test]
    fn signed_inputs((w, mu) in weights_and_inputs(50)) {
        let x: Vec<f64> = mu.iter().map(|m| 2.0 * m - 1.0).collect();
        let cfg = PwbConfig::new(w.clone()).with_quant(QuantSpec::off());
        let got = signed_pwb_dot(&x, &cfg).unwrap();
        prop_assert!((got - exact_dot(&w, &x)).abs() < 1e-8);
    }
}
