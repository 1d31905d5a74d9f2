use deap_core::conv::*;
use deap_core::quant::QuantSpec;
use deap_core::tensor::{Tensor3, Tensor4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Input in `[0, 1]`, kernels in `[-2, 2]`, `R <= 5`, `D <= 8`, `S <= 3`.
fn random_case(seed: u64) -> (Tensor3, Tensor4, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(1..=5);
    let d = rng.gen_range(1..=8);
    let k = rng.gen_range(1..=3);
    let s = rng.gen_range(1..=3);
    let h = rng.gen_range(r..=r + 8);
    let w = rng.gen_range(r..=r + 8);
    let a = Tensor3::from_fn(h, w, d, |_, _, _| rng.gen());
    let f = Tensor4::from_fn(r, r, d, k, |_, _, _, _| rng.gen_range(-2.0..2.0));
    (a, f, s)
}

fn exact() -> DeapConfig {
    DeapConfig::default().with_quant(QuantSpec::off())
}

fn kernel_gain(f: &Tensor4) -> f64 {
    f.data().iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_oracle_without_quantization(seed in any::<u64>()) {
        let (a, f, s) = random_case(seed);
        let got = deap_convolve(&a, &f, s, &exact()).unwrap().out;
        let want = oracle_convolve(&a, &f, s).unwrap();
        prop_assert!(got.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn quantized_error_is_bounded(seed in any::<u64>()) {
        let (a, f, s) = random_case(seed);
        let (rh, rw, d, _) = f.dims();
        let got = deap_convolve(&a, &f, s, &DeapConfig::default()).unwrap().out;
        let want = oracle_convolve(&a, &f, s).unwrap();
        let bound = kernel_gain(&f) * (rh * rw * d) as f64 * (2f64.powi(-6) + 2f64.powi(-14));
        prop_assert!(got.max_abs_diff(&want) <= bound);
    }

    #[test]
    fn unit_count_changes_cycles_not_values(seed in any::<u64>()) {
        let (a, f, s) = random_case(seed);
        let base = deap_convolve(&a, &f, s, &DeapConfig::default()).unwrap();
        let pixels = output_dims(&ConvShape::of(&a, &f, s)).unwrap().pixels();
        for n in [1, 2, 4] {
            let o = deap_convolve(&a, &f, s, &DeapConfig::default().with_n_conv(n)).unwrap();
            prop_assert_eq!(&o.out, &base.out);
            prop_assert_eq!(o.cycles, f.kernels() as u64 * pixels.div_ceil(n) as u64);
        }
    }

    #[test]
    fn linear_in_kernels(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let (a, f, s) = random_case(seed);
        let base = deap_convolve(&a, &f, s, &exact()).unwrap().out;
        let scaled = deap_convolve(&a, &f.scaled(alpha), s, &exact()).unwrap().out;
        prop_assert!(scaled.max_abs_diff(&base.map(|v| alpha * v)) < 1e-8);
    }

    #[test]
    fn schedule_covers_every_pixel_once(p in 1usize..500, n in 1usize..8) {
        let mut seen = vec![false; p];
        for px in 0..p {
            let (unit, cycle) = pixel_schedule(px, n);
            prop_assert!(unit < n && cycle < p.div_ceil(n));
            prop_assert!(!seen[cycle * n + unit]);
            seen[cycle * n + unit] = true;
        }
    }
}

#[test]
fn padding_keeps_the_spatial_size() {
    let a = Tensor3::from_fn(6, 6, 2, |i, j, c| ((i + j + c) % 3) as f64 / 2.0);
    let f = Tensor4::from_fn(3, 3, 2, 1, |m, n, _, _| if m == 1 && n == 1 { 1.0 } else { 0.0 });
    let out = deap_convolve(&zero_pad(&a, 1), &f, 1, &exact()).unwrap().out;
    assert_eq!(out.dims(), (6, 6, 1));
    for i in 0..6 {
        for j in 0..6 {
            let want = a.get(i, j, 0) + a.get(i, j, 1);
            assert!((out.get(i, j, 0) - want).abs() < 1e-9);
        }
    }
}

#[test]
fn stride_two_with_uneven_remainder() {
    let shape = ConvShape { n: 4, h: 161, w: 700, d: 1, rh: 20, rw: 5, k: 32, s: 2 };
    let dims = output_dims(&shape).unwrap();
    assert_eq!((dims.ceil_rows, dims.rows), (72, 71));
    assert_eq!((dims.ceil_cols, dims.cols), (349, 348));
}
