//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test -p sqctl-core --test acceptance -- 3 7` runs a subset.
//! The exit code is 0 unless `SQCTL_ACCEPTANCE_STRICT` is set, in which case
//! any failing criterion makes it 1.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use twofloat::TwoFloat;

use sqctl::catmap::*;
use sqctl::classical::equivalence_suite;
use sqctl::fokker_planck::{moment_thresholds, p_star, predict_constants};
use sqctl::grid::rho00_vs_p;
use sqctl::rng::trajectory_rng;
use sqctl::scaling::*;
use sqctl::spectrum::*;
use sqctl::stats::ks_distance;
use sqctl::*;

type Outcome = std::result::Result<(bool, String), String>;

const PHI_KAPPA: f64 = 0.962;
const SIZES: [u32; 5] = [10, 20, 30, 40, 50];

fn e<E: std::fmt::Debug>(x: E) -> String {
    format!("{x:?}")
}

fn p_lattice() -> Vec<f64> {
    (0..=20).map(|i| 0.4 + 0.01 * i as f64).collect()
}

fn crossing(kappa: f64) -> std::result::Result<(CrossingEstimate, Vec<SizeCurve>), String> {
    let rows = rho00_vs_p(kappa, kappa, &p_lattice(), &SIZES, 4, SolverOptions::default()).map_err(e)?;
    let curves = SizeCurve::from_rows(&rows);
    Ok((crossing_pc(&curves, 1.0).map_err(e)?, curves))
}

fn critical_point() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    for k in [PHI_KAPPA, 0.42] {
        let (est, _) = crossing(k)?;
        ok &= (est.pc - 0.5).abs() <= 0.03;
        msg.push(format!("kappa={k}: p_c={:.4}", est.pc));
    }
    Ok((ok, msg.join(", ")))
}

fn exponents() -> Outcome {
    let k = PHI_KAPPA;
    let at_pc = ChannelParams::new(0.5, k, k).map_err(e)?;
    let size_scan = [10u32, 13, 16, 20, 25, 32, 40, 50, 63, 80, 100]
        .iter()
        .map(|&l| {
            let ss = steady_state(&at_pc, GridSpec::new(l, 4)?, SolverOptions::default(), None)?;
            Ok((l as f64, ss.rho00))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(e)?;
    // cutoff wide enough that ρ̄₀₀(t) never feels the upper wall before t = 1000
    let spec = GridSpec::new(100, 4).map_err(e)?;
    let (_, pts) = sqctl::grid::evolve(&at_pc, &DistributionGrid::point_mass_at_vacuum(spec), 1000, 1).map_err(e)?;
    let time_series = pts.iter().filter(|p| p.t >= 10).map(|p| (p.t as f64, p.rho00)).collect();
    let (_, curves) = crossing(k)?;
    let fit = fit_exponents(&ScalingTables { pc: 0.5, size_scan, time_series, curves, nu_range: (0.5, 2.0) })
        .map_err(e)?;
    let ok = (0.85..=1.10).contains(&fit.beta) && (1.8..=2.2).contains(&fit.z) && (0.8..=1.2).contains(&fit.nu);
    Ok((ok, format!("beta={:.3} z={:.3} nu={:.3}", fit.beta, fit.z, fit.nu)))
}

fn power_law_tail() -> Outcome {
    let params = ChannelParams::new(0.6, 0.2, 0.2).map_err(e)?;
    let expect = predict_constants(&params).map_err(e)?.tail_slope().map_err(e)?;
    let ss = steady_state(&params, GridSpec::new(50, 16).map_err(e)?, SolverOptions::default(), None).map_err(e)?;
    let (x, y): (Vec<f64>, Vec<f64>) =
        ss.grid.density_plus().into_iter().filter(|d| (1e2..=1e6).contains(&d.0)).unzip();
    let slope = power_law_fit(&x, &y).map_err(e)?.slope;
    Ok(((slope - expect).abs() <= 0.1, format!("slope={slope:.4} expected={expect:.4}")))
}

fn lognormal_transient() -> Outcome {
    // start deep in the linear regime so one control step is a pure shift of ln σ₊
    let (y0, t) = (20.0f64, 400usize);
    let mut ok = true;
    let mut msg = Vec::new();
    for (p, k, g) in [(0.3, 0.1, 0.1), (0.2, 0.05, 0.08)] {
        let params = ChannelParams::new(p, k, g).map_err(e)?;
        let m = predict_constants(&params).map_err(e)?;
        let mut cfg = EnsembleConfig::new(params, 100_000, t, 41);
        cfg.init = GaussianState::centered(y0.exp(), 0.25 * (-y0).exp(), 0.0).map_err(e)?;
        let mut ys: Vec<f64> = final_states(&cfg).map_err(e)?.iter().map(|s| s.log_sigma_plus()).collect();
        let d = ks_distance(&mut ys, |y| m.transient_cdf(y0, y, t as f64));
        ok &= d <= 0.05 && m.far_from_boundary(y0, t as f64);
        msg.push(format!("(p={p},k={k},g={g}) KS={d:.4}"));
    }
    Ok((ok, msg.join(", ")))
}

fn rat(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn eigenoperators() -> Outcome {
    let mut rng = trajectory_rng(5, 0);
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    for _ in 0..100 {
        let (p, k, g): (f64, f64, f64) = (rng.random(), rng.random_range(0.01..1.5), rng.random_range(0.01..1.5));
        let sp = SpectrumParams { p: TwoFloat::from(p), stretch: TwoFloat::from(k.exp()), contract: TwoFloat::from((-g).exp()) };
        match EigenTower::build(sp, 10) {
            Ok(t) => worst = (0..=10).map(|n| t.residual(n)).fold(worst, f64::max),
            Err(_) => degenerate += 1,
        }
    }
    let mut exact = true;
    for (p, s, c) in [((1, 3), (2, 1), (1, 2)), ((3, 5), (3, 2), (2, 3)), ((7, 9), (5, 4), (1, 3))] {
        let t = EigenTower::build(SpectrumParams::exact(p, s, c), 12).map_err(e)?;
        exact &= (0..=12).all(|n| t.residual_vector(n).iter().all(|x| x.is_zero()));
        exact &= t.eigenvalue(0) == rat(1, 1);
    }
    Ok((
        worst <= 1e-10 && exact && degenerate == 0,
        format!("max residual={worst:.2e}, rational exact={exact}, degenerate draws={degenerate}"),
    ))
}

fn thresholds() -> Outcome {
    let mut spectral = 0.0f64;
    for &(k, g) in &[(0.962, 0.962), (0.42, 0.42), (0.2, 0.2), (0.05, 1.3), (1.5, 0.1)] {
        for n in 1..=8 {
            spectral = spectral.max((spectral_threshold(n, k, g).map_err(e)? - p_star(n as f64, k, g)).abs());
        }
    }
    let mut rng = trajectory_rng(6, 0);
    let mut ordered = 0;
    for _ in 0..1000 {
        let (k, g): (f64, f64) = (rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));
        let pc = k / (k + g);
        let ladder: Vec<f64> = (1..=10).map(|n| p_star(n as f64, k, g)).collect();
        if ladder[0] > pc && ladder.windows(2).all(|w| w[1] > w[0]) {
            ordered += 1;
        }
    }
    let k = 1e-3;
    let fp = moment_thresholds(k, k, 5).map_err(e)?.iter().map(|r| (r.p_star_2n - r.p_fp_2n).abs()).fold(0.0, f64::max);
    Ok((
        spectral <= 1e-10 && ordered == 1000 && fp <= 10.0 * k * k,
        format!("spectral-closed={spectral:.2e}, ordered={ordered}/1000, |p*_2n - p_fp|={fp:.2e} (bound {:.0e})", 10.0 * k * k),
    ))
}

fn cat_map() -> Outcome {
    let kappa = cat_map_kappa();
    let sys = CatMapSystem::new(512).map_err(e)?;
    let mut ok = true;
    let mut msg = Vec::new();
    for (theta, p) in [(0.8, 0.88), (0.8, 0.95), (1.2, 0.64), (1.2, 0.75), (1.2, 0.9)] {
        let params = ChannelParams::from_theta(p, kappa, theta).map_err(e)?;
        ok &= p >= params.pc() + 0.15;
        let mut cfg = CatMapConfig::new(theta, p, 2000, 300, 71);
        cfg.record_every = 5;
        let cat = run_catmap_ensemble(&sys, &cfg).map_err(e)?;
        let iho = steady_state(&params, GridSpec::new(30, 8).map_err(e)?, SolverOptions::default(), None).map_err(e)?;
        let d = (cat.late_rho00 - iho.rho00).abs();
        ok &= d <= 0.05;
        msg.push(format!("th={theta},p={p}: cat={:.4} iho={:.4}", cat.late_rho00, iho.rho00));
    }
    let ps: Vec<f64> = (1..=19).map(|k| 0.05 * k as f64).collect();
    for theta in [0.4, 0.8, 1.2] {
        let pc = ChannelParams::from_theta(0.5, kappa, theta).map_err(e)?.pc();
        let mut template = CatMapConfig::new(theta, 0.5, 300, 200, 72);
        template.record_every = 5;
        let est = estimate_pc(&sys, theta, &ps, &template, LogObservable::X2P2, 200).map_err(e)?;
        ok &= (est.pc - pc).abs() <= 0.07;
        msg.push(format!("th={theta}: p_c est={:.2}±{:.2} eq={pc:.3}", est.pc, est.stderr));
    }
    Ok((ok, msg.join("; ")))
}

fn structural() -> Outcome {
    let mut unitarity = 0.0f64;
    let mut completeness = 0.0f64;
    for n in [64usize, 128, 256, 512, 1024] {
        unitarity = unitarity.max(CatMapSystem::new(n).map_err(e)?.unitarity_defect());
        for theta in [0.4, 0.8, 1.2, std::f64::consts::FRAC_PI_2] {
            let cut = n.saturating_sub((3.0 * theta * n as f64 / std::f64::consts::PI).ceil() as usize);
            completeness = completeness.max(KrausSet::new(theta, n).map_err(e)?.completeness_defect(cut.max(1)));
        }
    }

    let mut worst = f64::INFINITY;
    for chunk in 0..1000u64 {
        let mut rng = trajectory_rng(8, chunk);
        for _ in 0..1000 {
            let params = ChannelParams::new(rng.random(), rng.random_range(0.001..2.0), rng.random_range(0.001..3.0)).map_err(e)?;
            let mut s = GaussianState::vacuum();
            for _ in 0..rng.random_range(1..40) {
                s = step_stochastic(&s, &params, &mut rng);
                worst = worst.min(s.uncertainty());
            }
        }
    }

    let mut agree = 0;
    let mut details = Vec::new();
    for (i, &(p, k, g)) in [(0.75, 0.962, 0.962), (0.9, 0.962, 0.962), (0.7, 0.2, 0.2), (0.6, 0.5, 1.0), (0.9, 1.0, 0.3)]
        .iter()
        .enumerate()
    {
        let params = ChannelParams::new(p, k, g).map_err(e)?;
        let coarse = steady_state(&params, GridSpec::new(30, 8).map_err(e)?, SolverOptions::default(), None).map_err(e)?;
        let fine = steady_state(&params, GridSpec::new(30, 16).map_err(e)?, SolverOptions::default(), None).map_err(e)?;
        let mut cfg = EnsembleConfig::new(params, 4000, 2000, 90 + i as u64);
        cfg.record_every = 10;
        cfg.tail_fraction = 0.8;
        let mc = run_ensemble(&cfg).map_err(e)?;
        let tol = 3.0 * mc.late_rho00_stderr + (fine.rho00 - coarse.rho00).abs();
        let d = (fine.rho00 - mc.late_rho00).abs();
        if d <= tol {
            agree += 1;
        }
        details.push(format!("{d:.1e}/{tol:.1e}"));
    }
    let ok = unitarity <= 1e-10 && completeness <= 1e-8 && worst >= 0.25 * (1.0 - 1e-12) && agree == 5;
    Ok((
        ok,
        format!(
            "unitarity={unitarity:.1e}, completeness={completeness:.1e}, min det={worst:.15}, mc-vs-grid {agree}/5 [{}]",
            details.join(" ")
        ),
    ))
}

fn equivalence() -> Outcome {
    let params = ChannelParams::new(0.55, PHI_KAPPA, PHI_KAPPA).map_err(e)?;
    let exact = equivalence_suite(&params, 0.5, 1000, 500, 9).map_err(e)?;
    let noisy = equivalence_suite(&params, 1.0, 1000, 500, 9).map_err(e)?;
    Ok((
        exact.max_trajectory_deviation <= 1e-12 && noisy.max_trajectory_deviation > 1e-3,
        format!("D/g=1/2: {:.1e}, D/g=1: {:.2e}", exact.max_trajectory_deviation, noisy.max_trajectory_deviation),
    ))
}

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("critical point", critical_point),
        ("critical exponents", exponents),
        ("power-law tail", power_law_tail),
        ("log-normal transient", lognormal_transient),
        ("eigenoperator exactness", eigenoperators),
        ("threshold ladder", thresholds),
        ("cat-map correspondence", cat_map),
        ("structural identities", structural),
        ("classical equivalence", equivalence),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !picked.is_empty() && !picked.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let (ok, detail) = f().unwrap_or_else(|err| (false, format!("error: {err}")));
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} ({:.1}s) {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 && std::env::var_os("SQCTL_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
