use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use sqctl::fokker_planck::p_star;
use sqctl::spectrum::*;
use sqctl::*;
use twofloat::TwoFloat;

fn rat(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn exact_params() -> Vec<SpectrumParams<BigRational>> {
    vec![
        SpectrumParams::exact((1, 3), (2, 1), (1, 2)),
        SpectrumParams::exact((3, 5), (3, 2), (2, 3)),
        SpectrumParams::exact((7, 9), (5, 4), (1, 3)),
    ]
}

#[test]
fn normal_order_transform_inverts_exactly() {
    let t = NormalOrderTransform::<BigRational>::new(20);
    let prod = mat_mul(&t.a, &t.a_inv);
    for (i, row) in prod.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            assert_eq!(*x, if i == j { BigRational::one() } else { BigRational::zero() });
        }
        assert!(t.a[i][i].is_one());
    }
    // (v̂₊)⁴ = :v⁴: + 3·:v²: + ¾
    assert_eq!(t.a[4][2], rat(3, 1));
    assert_eq!(t.a[4][0], rat(3, 4));
    assert_eq!(t.a_inv[4][2], rat(-3, 1));
}

#[test]
fn channel_matrix_structure() {
    let params = ChannelParams::new(0.4, 0.7, 0.3).unwrap();
    let m = channel_matrix(&params, 10).unwrap();
    assert!((m.m[0][0] - 1.0).abs() < 1e-15);
    let l1 = 0.6 * 0.7f64.exp() + 0.4 * (-0.3f64).exp();
    assert!((m.m[1][1] - l1).abs() < 1e-15);
    for (k, d) in m.diagonal().iter().enumerate() {
        assert!((d - eigenvalue(k, &params)).abs() <= 1e-13 * d.abs());
        for j in k + 1..=10 {
            assert_eq!(m.m[k][j], 0.0);
        }
    }
    assert!(channel_matrix(&params, 0).is_err());
}

#[test]
fn lowest_eigenoperators() {
    let params = ChannelParams::new(0.35, 0.5, 0.8).unwrap();
    assert_eq!(build_z(0, &params).unwrap().coeffs[0], 1.0);
    let z1 = build_z(1, &params).unwrap();
    assert_eq!(z1.coeffs[..2], [0.0, 1.0]);
    let z2 = build_z(2, &params).unwrap();
    // 𝕋[v²] = λ₂v² + p(1−e^{−2γ})/2 and 𝕋[1] = 1, so v² + α is an eigenoperator
    // exactly when α = p(1−e^{−2γ})/2 / (λ₂ − λ₀)
    let (p, g) = (0.35f64, 0.8f64);
    let l2 = eigenvalue(2, &params);
    let alpha = p * (1.0 - (-2.0 * g).exp()) * 0.5 / (l2 - 1.0);
    assert!((z2.coeffs[0] - alpha).abs() < 1e-14 * alpha.abs());
    assert_eq!(z2.coeffs[2], 1.0);
}

#[test]
fn eigenvalue_examples() {
    let params = ChannelParams::new(0.3, 0.4, 0.6).unwrap();
    assert_eq!(eigenvalue(0, &params), 1.0);
    for n in 1..8 {
        let ps = p_star(n as f64, 0.4, 0.6);
        let lam = eigenvalue(n, &params.with_p(ps).unwrap());
        assert!((lam - 1.0).abs() < 1e-13);
        let mut last = f64::INFINITY;
        for k in 0..=20 {
            let l = eigenvalue(n, &params.with_p(k as f64 / 20.0).unwrap());
            assert!(l < last);
            last = l;
        }
    }
}

#[test]
fn rational_tower_is_exact() {
    for sp in exact_params() {
        let tower = EigenTower::build(sp, 12).unwrap();
        for n in 0..=12 {
            assert!(tower.residual_vector(n).iter().all(|x| x.is_zero()), "n = {n}");
            let z = &tower.z[n];
            assert!(z.is_monic());
            assert_eq!(z.degree(), Some(n));
            assert_eq!(z.parity(), Some(if n % 2 == 0 { Parity::Even } else { Parity::Odd }));
        }
    }
}

#[test]
fn routes_agree_in_rationals() {
    for sp in exact_params() {
        let tower = EigenTower::build(sp, 12).unwrap();
        for n in 0..=12 {
            assert_eq!(eigenvector_by_substitution(&tower.matrix, n).unwrap(), tower.z[n]);
        }
    }
}

#[test]
fn expansion_round_trip() {
    let tower = EigenTower::build(exact_params().remove(1), 12).unwrap();
    for n in 0..=12 {
        let back = tower.assemble(&tower.expand_power(n));
        for (k, c) in back.coeffs.iter().enumerate() {
            assert_eq!(*c, if k == n { BigRational::one() } else { BigRational::zero() });
        }
    }
    assert_eq!(tower.expand_power(1)[1], BigRational::one());
}

#[test]
fn evolution_two_paths() {
    let tower = EigenTower::build(exact_params().remove(0), 10).unwrap();
    for n in [3usize, 6, 10] {
        let mut c = vec![BigRational::zero(); 11];
        c[n] = BigRational::one();
        let w = tower.expand_power(n);
        for t in 0..5 {
            let spectral: Vec<BigRational> = w
                .iter()
                .enumerate()
                .map(|(k, x)| x.clone() * tower.eigenvalue(k).pow(t))
                .collect();
            assert_eq!(tower.assemble(&spectral).coeffs, c);
            c = tower.matrix.apply(&c);
        }
    }
}

#[test]
fn degeneracy_is_reported() {
    let (k, g) = (0.4, 0.6);
    let params = ChannelParams::new(p_star(2.0, k, g), k, g).unwrap();
    assert!(matches!(build_z(2, &params), Err(Error::Degenerate { .. })));
}

#[test]
fn spectral_threshold_matches_closed_form() {
    for &(k, g) in &[(0.962, 0.962), (0.2, 0.2), (0.05, 1.3), (1.5, 0.1)] {
        for n in 1..=8 {
            let a = spectral_threshold(n, k, g).unwrap();
            assert!((a - p_star(n as f64, k, g)).abs() < 1e-10, "{n} {k} {g}");
        }
    }
}

#[test]
fn second_moment_matches_gaussian_trajectories() {
    let params = ChannelParams::new(0.8, 0.3, 0.5).unwrap();
    let z2 = build_z(2, &params).unwrap();
    let (alpha, l2) = (z2.coeffs[0], eigenvalue(2, &params));
    let mut cfg = EnsembleConfig::new(params, 20_000, 30, 8);
    cfg.record_every = 5;
    let st = run_ensemble(&cfg).unwrap();
    for (k, &t) in st.times.iter().enumerate() {
        let predicted = l2.powi(t as i32) * (0.5 + alpha) - alpha;
        let err = 3.0 * st.sigma_plus_stderr[k] + 1e-12;
        assert!((st.mean_sigma_plus[k] - predicted).abs() <= err, "t = {t}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn double_double_residual(p in 0.0f64..1.0, k in 0.05f64..1.0, g in 0.05f64..1.0) {
        let sp = SpectrumParams {
            p: TwoFloat::from(p),
            stretch: TwoFloat::from(k.exp()),
            contract: TwoFloat::from((-g).exp()),
        };
        if let Ok(tower) = EigenTower::build(sp, 10) {
            for n in 0..=10 {
                prop_assert!(tower.residual(n) <= 1e-10);
            }
        }
    }

    #[test]
    fn routes_agree_in_floating_point(p in 0.0f64..1.0, k in 0.05f64..1.0, g in 0.05f64..1.0) {
        let sp = SpectrumParams::from_channel(&ChannelParams::new(p, k, g).unwrap());
        if let Ok(tower) = EigenTower::build_f64(sp, 8) {
            for n in 0..=8 {
                let b = eigenvector_by_substitution(&tower.matrix, n).unwrap();
                for (x, y) in b.coeffs.iter().zip(&tower.z[n].coeffs) {
                    prop_assert!((x - y).abs() <= 1e-7 * (1.0 + y.abs()));
                }
            }
        }
    }
}
