use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use sqctl::catmap::*;
use sqctl::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_state(n: usize, seed: u64) -> PureState {
    let mut rng = sqctl::rng::trajectory_rng(seed, 0);
    let mut s = PureState { amps: (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect() };
    s.normalize();
    s
}

#[test]
fn dimension_must_be_even() {
    assert!(CatMapSystem::new(7).is_err());
    assert!(CatMapSystem::new(2).is_err());
    assert!(CatMapSystem::new(8).is_ok());
}

#[test]
fn propagator_is_unitary() {
    for n in [64, 128, 256] {
        let s = CatMapSystem::new(n).unwrap();
        assert!(s.unitarity_defect() <= 1e-10, "{n}");
    }
}

#[test]
fn factorized_propagator_matches_dense() {
    let n = 96;
    let s = CatMapSystem::new(n).unwrap();
    let u = s.propagator();
    let psi = random_state(n, 3);
    let pos = s.to_position(&psi.amps);
    let dense = &u * DVector::from_vec(pos.clone());
    let mut fast = pos;
    let mut scratch = vec![Complex64::default(); s.fft_scratch_len()];
    s.apply_propagator(&mut fast, &mut scratch);
    for (a, b) in fast.iter().zip(dense.iter()) {
        assert!((a - b).norm() < 1e-13);
    }
}

#[test]
fn propagator_entries_follow_closed_form() {
    let n = 10;
    let u = CatMapSystem::new(n).unwrap().propagator();
    let pre = (c(0.0, 1.0) / n as f64).sqrt();
    for q1 in 0..n {
        for q2 in 0..n {
            let (a, b) = (q1 as f64, q2 as f64);
            let ph = std::f64::consts::PI / n as f64 * (a * a + (b - a) * (b - a));
            let want = pre * c(ph.cos(), ph.sin());
            assert!((u[(q1, q2)] - want).norm() < 1e-13);
        }
    }
}

#[test]
fn classical_map_stretch_rate() {
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((ev[1] - phi * phi).abs() < 1e-14 && (ev[0] - phi.powi(-2)).abs() < 1e-14);
    assert!((cat_map_kappa() - ev[1].ln()).abs() < 1e-14);
}

#[test]
fn number_basis_diagonalizes_h() {
    let n = 64;
    let s = CatMapSystem::new(n).unwrap();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for q in 0..n {
        h[(q, q)] = 2.0 - (2.0 * std::f64::consts::PI * q as f64 / n as f64).cos();
        h[(q, (q + 1) % n)] -= 0.5;
        h[((q + 1) % n, q)] -= 0.5;
    }
    let v = s.basis();
    let e = DMatrix::from_diagonal(&DVector::from_vec(s.energies().to_vec()));
    assert!((&h * &v - &v * e).amax() < 1e-12);
    assert!(s.orthonormality_defect() < 1e-12);
    assert!(s.energies().windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn ground_state_sits_at_the_origin() {
    let n = 128;
    let s = CatMapSystem::new(n).unwrap();
    let (x, p) = s.phase_space_centre(0);
    assert!(x.abs() < 1e-12 && p.abs() < 1e-12);
    let r0 = s.number_state_x2_plus_p2(0);
    for k in 1..n {
        assert!(s.number_state_x2_plus_p2(k) > r0);
    }
    // vacuum spread ⟨x²⟩ + ⟨p²⟩ = ħ in the harmonic region
    assert!((r0 / s.hbar() - 1.0).abs() < 1e-2);
}

#[test]
fn kraus_elements_match_ladder_construction() {
    let (n, theta) = (24, 0.7f64);
    let k = KrausSet::new(theta, n).unwrap();
    let mut fact = 1.0;
    for m in 0..n {
        if m > 0 {
            fact *= m as f64;
        }
        let phase = c(0.0, -1.0).powu(m as u32);
        for level in m..n {
            // (−i)^m/√m! sin^mθ cos^{â†â}θ â^m |level⟩
            let mut st = PureState::number_state(n, level);
            for _ in 0..m {
                st = st.lower();
            }
            let amp = st.amps[level - m] * theta.sin().powi(m as i32) * theta.cos().powi((level - m) as i32) / fact.sqrt();
            let want = phase * amp;
            assert!((k.element(m, level) - want).norm() < 1e-12 * (1.0 + want.norm()), "{m} {level}");
        }
    }
}

#[test]
fn kraus_completeness() {
    let n = 16;
    let k = KrausSet::new(1.1, n).unwrap();
    let mut sum = DMatrix::<Complex64>::zeros(n, n);
    for m in 0..n {
        let km = k.matrix(m);
        sum += km.adjoint() * &km;
    }
    let defect = (sum - DMatrix::<Complex64>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(defect < 1e-13);
    for theta in [0.2, 0.8, 1.2, std::f64::consts::FRAC_PI_2] {
        let big = KrausSet::new(theta, 1024).unwrap();
        let cut = 1024usize.saturating_sub((3.0 * theta * 1024.0 / std::f64::consts::PI).ceil() as usize);
        assert!(big.completeness_defect(cut) <= 1e-8);
        // the level-by-level identity holds on the whole space
        assert!(big.completeness_defect(1024) <= 1e-10);
    }
    assert!(KrausSet::new(0.0, 8).is_err());
}

#[test]
fn ladder_operators() {
    let n = 8;
    let s = PureState::number_state(n, 3).lower();
    assert!((s.amps[2].re - 3f64.sqrt()).abs() < 1e-15);
    let r = PureState::number_state(n, 3).raise();
    assert!((r.amps[4].re - 2.0).abs() < 1e-15);
    assert_eq!(PureState::number_state(n, n - 1).raise().norm(), 0.0);
}

#[test]
fn control_examples() {
    let (n, theta) = (16, 0.6f64);
    let k = KrausSet::new(theta, n).unwrap();
    let mut rng = sqctl::rng::trajectory_rng(1, 0);
    let vac = PureState::number_state(n, 0);
    for _ in 0..100 {
        let (next, out) = control_step(&vac, &k, &mut rng);
        assert_eq!(out.m, 0);
        assert!((next.rho00() - 1.0).abs() < 1e-15);
    }
    let one = PureState::number_state(n, 1);
    let w = k.born_weights(&one);
    assert!((w[0] - theta.cos().powi(2)).abs() < 1e-15 && (w[1] - theta.sin().powi(2)).abs() < 1e-15);
    let trials = 20_000;
    let hits = (0..trials).filter(|_| control_step(&one, &k, &mut rng).1.m == 1).count() as f64;
    let q = theta.sin().powi(2);
    assert!((hits / trials as f64 - q).abs() < 4.0 * (q * (1.0 - q) / trials as f64).sqrt());
}

#[test]
fn born_sampling_follows_weights() {
    let n = 12;
    let k = KrausSet::new(0.9, n).unwrap();
    let psi = random_state(n, 5);
    let w = k.born_weights(&psi);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    let mut counts = vec![0usize; n];
    let mut rng = sqctl::rng::trajectory_rng(2, 0);
    let trials = 40_000;
    for _ in 0..trials {
        counts[control_step(&psi, &k, &mut rng).1.m] += 1;
    }
    for m in 0..n {
        let f = counts[m] as f64 / trials as f64;
        assert!((f - w[m]).abs() <= 5.0 * (w[m] * (1.0 - w[m]) / trials as f64).sqrt() + 1e-4, "{m}");
    }
}

#[test]
fn full_control_holds_the_vacuum() {
    let s = CatMapSystem::new(32).unwrap();
    let st = run_catmap_ensemble(&s, &CatMapConfig::new(0.7, 1.0, 20, 50, 1)).unwrap();
    assert!(st.rho00_mean.iter().all(|&r| (r - 1.0).abs() < 1e-12));
}

#[test]
fn full_control_is_monotone_from_excited_states() {
    let s = CatMapSystem::new(32).unwrap();
    let mut cfg = CatMapConfig::new(0.5, 1.0, 200, 40, 4);
    cfg.init_level = 9;
    let st = run_catmap_ensemble(&s, &cfg).unwrap();
    for w in st.rho00_mean[1..].windows(2) {
        assert!(w[1] >= w[0] - 1e-12);
    }
    cfg.init_level = 32;
    assert!(run_catmap_ensemble(&s, &cfg).is_err());
}

#[test]
fn trajectories_are_reproducible_and_normalized() {
    let s = CatMapSystem::new(64).unwrap();
    let cfg = CatMapConfig::new(0.8, 0.6, 1, 300, 99);
    let a = run_trajectory(&s, &cfg, 3).unwrap();
    let b = run_trajectory(&s, &cfg, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.outcomes, run_trajectory(&s, &cfg, 4).unwrap().outcomes);
    assert!(a.max_norm_error < 1e-12);
    assert!(!a.truncated);
    assert!(a.rho00.iter().all(|r| (0.0..=1.0).contains(r)));
    let st1 = run_catmap_ensemble(&s, &CatMapConfig::new(0.8, 0.6, 70, 50, 5)).unwrap();
    let st2 = run_catmap_ensemble(&s, &CatMapConfig::new(0.8, 0.6, 70, 50, 5)).unwrap();
    assert_eq!(st1, st2);
}

#[test]
fn unitary_step_preserves_norm() {
    let s = CatMapSystem::new(128).unwrap();
    let mut psi = random_state(128, 8);
    for _ in 0..50 {
        psi = s.apply_unitary(&psi);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn observable_windows() {
    let s = CatMapSystem::new(32).unwrap();
    let mut cfg = CatMapConfig::new(0.8, 0.7, 40, 100, 6);
    cfg.record_every = 10;
    let st = run_catmap_ensemble(&s, &cfg).unwrap();
    assert_eq!(st.obs_times, (0..=100).step_by(10).collect::<Vec<_>>());
    assert_eq!(st.tail_start_step, 75);
    assert_eq!(st.window_log_n.len(), 40);
    assert_eq!(st.window_log_n[0].len(), 3);
    assert_eq!(st.var_log_n[0], 0.0);
    // at t = 0 every trajectory is in the ground state
    assert!((st.mean_log_n[0] - 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn pc_estimate_needs_a_wide_grid() {
    let s = CatMapSystem::new(16).unwrap();
    let cfg = CatMapConfig::new(0.8, 0.5, 10, 20, 1);
    let ps: Vec<f64> = (0..10).map(|k| 0.1 + 0.05 * k as f64).collect();
    assert!(estimate_pc(&s, 0.8, &ps, &cfg, LogObservable::NumberPlusHalf, 10).is_err());
}

#[test]
fn strong_control_gives_small_pc() {
    let s = CatMapSystem::new(64).unwrap();
    let mut cfg = CatMapConfig::new(1.5, 0.5, 100, 100, 3);
    cfg.record_every = 5;
    let ps: Vec<f64> = (1..=19).map(|k| 0.05 * k as f64).collect();
    let est = estimate_pc(&s, 1.5, &ps, &cfg, LogObservable::NumberPlusHalf, 50).unwrap();
    assert!(est.pc <= 0.4, "{est:?}");
    let at_one = est.profile.last().unwrap().1;
    let peak = est.profile.iter().map(|x| x.1).fold(0.0, f64::max);
    assert!(at_one < peak);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn basis_round_trip(seed in 0u64..1000, half in 2usize..40) {
        let n = 2 * half;
        let s = CatMapSystem::new(n).unwrap();
        let psi = random_state(n, seed);
        let back = s.to_number(&s.to_position(&psi.amps));
        for (a, b) in back.iter().zip(&psi.amps) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn control_renormalizes(seed in 0u64..1000, theta in 0.05f64..1.5) {
        let n = 20;
        let k = KrausSet::new(theta, n).unwrap();
        let psi = random_state(n, seed);
        let mut rng = sqctl::rng::trajectory_rng(seed, 1);
        let (next, out) = control_step(&psi, &k, &mut rng);
        prop_assert!((next.norm() - 1.0).abs() < 1e-13);
        prop_assert!((out.born_total - 1.0).abs() < 1e-12);
        prop_assert!(!out.truncated);
    }
}

#[test]
fn crossover_sharpens_with_size() {
    let ps: Vec<f64> = (0..=10).map(|k| 0.5 + 0.05 * k as f64).collect();
    let mut slopes = Vec::new();
    // widely spaced sizes keep the growth well above the slope noise
    for n in [16usize, 32, 128] {
        let s = CatMapSystem::new(n).unwrap();
        let rho: Vec<f64> = ps
            .iter()
            .map(|&p| run_catmap_ensemble(&s, &CatMapConfig::new(0.8, p, 300, 200, 17)).unwrap().late_rho00)
            .collect();
        let slope = rho.windows(2).map(|w| (w[1] - w[0]) / 0.05).fold(0.0, f64::max);
        slopes.push(slope);
    }
    assert!(slopes.windows(2).all(|w| w[1] > w[0]), "{slopes:?}");
}
