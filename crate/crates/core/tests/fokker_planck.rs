use proptest::prelude::*;
use sqctl::fokker_planck::*;
use sqctl::*;

fn params(p: f64, k: f64, g: f64) -> ChannelParams {
    ChannelParams::new(p, k, g).unwrap()
}

#[test]
fn constants_small_rates() {
    let m = predict_constants(&params(0.6, 0.2, 0.2)).unwrap();
    assert!((m.pc - 0.5).abs() < 1e-15);
    assert!((m.vbar + 0.08).abs() < 1e-15);
    assert!((m.diffusion - 0.0768).abs() < 1e-15);
    assert!((m.xi - 0.08 / 0.0768).abs() < 1e-14);
    assert!((m.xi - 1.041_67).abs() < 1e-5);
}

#[test]
fn zero_drift_at_pc() {
    let pc = 0.3 / (0.3 + 0.7);
    let m = predict_constants(&params(pc, 0.3, 0.7)).unwrap();
    assert!(m.vbar.abs() < 1e-15);
    let laws = m.critical_laws().unwrap();
    assert_eq!((laws.rho00_time_exponent, laws.rho00_cutoff_exponent), (0.5, 1.0));
    assert!(predict_constants(&params(0.6, 0.3, 0.7)).unwrap().critical_laws().is_err());
}

#[test]
fn drift_sign_and_degenerate_flag() {
    assert!(predict_constants(&params(0.2, 0.5, 0.5)).unwrap().vbar > 0.0);
    assert!(predict_constants(&params(0.8, 0.5, 0.5)).unwrap().vbar < 0.0);
    assert!(predict_constants(&params(0.0, 0.5, 0.5)).unwrap().degenerate);
    assert!(predict_constants(&params(1.0, 0.5, 0.5)).unwrap().degenerate);
    assert!(!predict_constants(&params(0.4, 0.5, 0.5)).unwrap().degenerate);
}

#[test]
fn xi_increases_above_pc() {
    let mut last = 0.0;
    for k in 1..100 {
        let p = 0.5 + 0.5 * k as f64 / 100.0;
        let xi = predict_constants(&params(p, 0.2, 0.2)).unwrap().xi;
        assert!(xi > last);
        last = xi;
    }
}

#[test]
fn diffusion_forms_agree() {
    for &(p, k, g) in &[(0.3, 0.1, 0.2), (0.7, 0.962, 0.962), (0.55, 2.0, 0.01)] {
        let a = predict_constants(&params(p, k, g)).unwrap().diffusion;
        let b = diffusion_rate_form(&params(p, k, g));
        assert!((a - b).abs() <= 1e-13 * a);
    }
}

#[test]
fn stationary_density_normalizes() {
    let m = predict_constants(&params(0.6, 0.2, 0.2)).unwrap();
    assert!((steady_state_normalization(&m).unwrap() - 1.0).abs() < 1e-10);
    let (a, b) = (10.0, 1e4);
    let slope = (m.steady_state_density(b).unwrap().ln() - m.steady_state_density(a).unwrap().ln()) / (b / a).ln();
    assert!((slope - m.tail_slope().unwrap()).abs() < 1e-12);
    assert!(predict_constants(&params(0.4, 0.2, 0.2)).unwrap().steady_state_density(1.0).is_err());
}

#[test]
fn transient_moments() {
    let m = predict_constants(&params(0.3, 0.1, 0.1)).unwrap();
    let (y0, t) = (0.0, 50.0);
    let c = y0 + m.vbar * t;
    let q = |f: &dyn Fn(f64) -> f64| {
        quadrature::double_exponential::integrate(|y| f(y) * m.transient_density(y0, y, t), c - 20.0, c + 20.0, 1e-12).integral
    };
    let mean = q(&|y| y);
    let var = q(&|y| (y - mean).powi(2));
    assert!((q(&|_| 1.0) - 1.0).abs() < 1e-10);
    assert!((mean - m.vbar * t).abs() < 1e-9);
    assert!((var - 2.0 * m.diffusion * t).abs() < 1e-9);
    let var2 = 2.0 * m.diffusion * 2.0 * t;
    assert!((var2 / var - 2.0).abs() < 1e-9);
    assert!((m.transient_cdf(y0, m.vbar * t, t) - 0.5).abs() < 1e-15);
}

#[test]
fn threshold_examples() {
    let expect = (0.2f64.exp() - 1.0) / (0.2f64.exp() - (-0.2f64).exp());
    assert!((p_star(1.0, 0.2, 0.2) - expect).abs() < 1e-15);
    assert!((p_star(1.0, 0.2, 0.2) - 0.5498).abs() < 1e-4);
    assert!((p_star(1e-9, 0.3, 0.7) - 0.3).abs() < 1e-8);
    assert!((p_star(0.0, 0.3, 0.7) - 0.3).abs() < 1e-15);
}

#[test]
fn fp_threshold_solves_xi_equals_n() {
    for n in 1..=5 {
        let (k, g) = (0.05, 0.08);
        let p = p_fp(n, k, g);
        let xi = predict_constants(&params(p, k, g)).unwrap().xi;
        assert!((xi - n as f64).abs() < 1e-10, "{n} {xi}");
    }
}

#[test]
fn spectral_and_fp_thresholds_agree_to_first_order() {
    let k = 1e-3;
    for row in moment_thresholds(k, k, 5).unwrap() {
        assert!((row.p_star_2n - row.p_fp_2n).abs() <= 10.0 * k * k, "{row:?}");
        let lin = 0.5 + 0.5 * row.n as f64 * k;
        assert!((row.p_fp_2n_linear - lin).abs() < 1e-15);
    }
}

#[test]
fn refined_model_examples() {
    let pr = params(0.6, 0.3, 0.5);
    let m = RefinedFPModel::new(&pr).unwrap();
    assert_eq!(m.h(2.0 * m.kappa), 0.0);
    assert!((m.h(-2.0 * m.gamma) - 1.0).abs() < 1e-15);
    assert!((m.r(0.0) - pr.pc()).abs() < 1e-15);
    assert!((m.v(40.0) - m.vbar).abs() < 1e-12);
    assert!((m.r(40.0) - 1.0).abs() < 1e-15);
    assert!(m.z_of_x((0.5 * m.lambda).ln()).is_err());
    let c = refined_coefficients(&pr, -5.0).unwrap();
    assert!(c.z.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn thresholds_increase(k in 0.001f64..3.0, g in 0.001f64..3.0, n in 1u32..8) {
        let pc = k / (k + g);
        let a = p_star(n as f64, k, g);
        let b = p_star(n as f64 + 1.0, k, g);
        prop_assert!(a > pc && b > a);
    }

    #[test]
    fn z_map_round_trip(k in 0.01f64..2.0, g in 0.01f64..2.0, p in 0.05f64..0.95, x in -0.5f64..30.0) {
        let m = RefinedFPModel::new(&params(p, k, g)).unwrap();
        if let Ok(z) = m.z_of_x(x) {
            prop_assert!((m.x_of_z(z) - x).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn fp_thresholds_increase(k in 0.001f64..0.5, g in 0.001f64..0.5) {
        let rows = moment_thresholds(k, g, 6).unwrap();
        for w in rows.windows(2) {
            prop_assert!(w[1].p_fp_2n > w[0].p_fp_2n && w[1].p_star_n > w[0].p_star_n);
        }
    }
}
