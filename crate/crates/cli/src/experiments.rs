//! One function per experiment kind, each turning a config into tables.

use serde_json::{json, Value};
use sqctl::catmap::{estimate_pc, run_catmap_ensemble, CatMapConfig, CatMapSystem};
use sqctl::classical::{equivalence_suite, OUParams};
use sqctl::fokker_planck::{moment_thresholds, predict_constants};
use sqctl::grid::{evolve, rho00_vs_p};
use sqctl::scaling::{crossing_pc, fit_exponents, ScalingTables, SizeCurve};
use sqctl::spectrum::{spectral_threshold, EigenTower, SpectrumParams};
use sqctl::stats::LogBins;
use sqctl::{
    cat_map_kappa, run_ensemble, steady_state, ChannelParams, DistributionGrid, EnsembleConfig, GaussianState,
    GridSpec, SolverOptions,
};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{f, opt, Bundle, Table};
use crate::CliError;

/// Earliest step used in the ρ̄₀₀ ∝ t^{−1/z} fit.
pub const Z_FIT_T_MIN: usize = 10;
/// Top of the histogram range when trajectories run without walls.
const FREE_HISTOGRAM_CUTOFF: u32 = 128;

pub fn execute(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    match cfg.experiment {
        ExperimentKind::Trajectories => trajectories(cfg),
        ExperimentKind::FixedPoint => fixed_point(cfg),
        ExperimentKind::FpPredict => fp_predict(cfg),
        ExperimentKind::Eigenops => eigenops(cfg),
        ExperimentKind::Catmap => catmap(cfg),
        ExperimentKind::ClassicalOu => classical(cfg, false),
        ExperimentKind::Equivalence => classical(cfg, true),
    }
}

fn solver(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions { tol: cfg.settings.tol, max_iter: cfg.settings.max_iter }
}

fn kgp(cfg: &ExperimentConfig) -> Vec<(f64, f64, f64)> {
    let s = &cfg.sweep;
    let mut out = Vec::new();
    for &k in &s.kappa {
        for &g in &s.gamma {
            for &p in &s.p {
                out.push((k, g, p));
            }
        }
    }
    out
}

fn trajectories(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    let st = &cfg.settings;
    let mut data = Table::new(
        "data",
        &[
            "kappa",
            "gamma",
            "p",
            "cutoff",
            "t",
            "rho00",
            "mean_log_sigma_plus",
            "var_log_sigma_plus",
            "mean_sigma_plus",
            "sigma_plus_stderr",
            "mean_abs_sigma12",
        ],
    );
    let mut summary = Table::new(
        "summary",
        &["kappa", "gamma", "p", "cutoff", "pc", "late_rho00", "late_rho00_stderr", "tail_start_step", "saturated", "n_traj"],
    );
    let mut hist =
        Table::new("histogram", &["kappa", "gamma", "p", "cutoff", "t", "log_sigma_plus", "probability", "density"]);
    let cutoffs: Vec<Option<u32>> =
        if cfg.sweep.cutoff.is_empty() { vec![None] } else { cfg.sweep.cutoff.iter().map(|&l| Some(l)).collect() };
    for (k, g, p) in kgp(cfg) {
        let params = ChannelParams::new(p, k, g)?;
        for &cut in &cutoffs {
            let mut ec = EnsembleConfig::new(params, st.n_traj, st.n_steps, cfg.seed);
            ec.record_every = cfg.record_every;
            ec.cutoff = cut;
            ec.init = GaussianState::centered(st.init_sigma_plus, st.init_sigma_minus, 0.0)?;
            if let Some(tf) = st.tail_fraction {
                ec.tail_fraction = tf;
            }
            if st.histogram {
                ec.histogram = Some(LogBins::plus_axis(cut.unwrap_or(FREE_HISTOGRAM_CUTOFF), st.bins_per_octave));
            }
            let r = run_ensemble(&ec)?;
            let head = vec![f(k), f(g), f(p), opt(cut)];
            for (i, &t) in r.times.iter().enumerate() {
                let mut row = head.clone();
                row.extend([
                    t.to_string(),
                    f(r.rho00_mean[i]),
                    f(r.mean_log_sigma_plus[i]),
                    f(r.var_log[i]),
                    f(r.mean_sigma_plus[i]),
                    f(r.sigma_plus_stderr[i]),
                    f(r.mean_abs_sigma12[i]),
                ]);
                data.push(row);
            }
            for (h, &t) in r.log_sigma_plus_hist.iter().zip(&r.times) {
                for (b, prob) in h.normalized().into_iter().enumerate() {
                    if prob > 0.0 {
                        let mut row = head.clone();
                        row.extend([t.to_string(), f(h.bins.center(b)), f(prob), f(prob / h.bins.width)]);
                        hist.push(row);
                    }
                }
            }
            let mut row = head;
            row.extend([
                f(params.pc()),
                f(r.late_rho00),
                f(r.late_rho00_stderr),
                r.tail_start_step.to_string(),
                r.saturated_trajectories.to_string(),
                r.n_traj.to_string(),
            ]);
            summary.push(row);
        }
    }
    let mut tables = vec![data, summary];
    if st.histogram {
        tables.push(hist);
    }
    Ok(Bundle { tables, results: json!({ "common_random_numbers": true }) })
}

/// Roughly log-spaced integer cutoffs from `lo` to `10·lo`.
fn decade_of_cutoffs(lo: u32) -> Vec<u32> {
    let mut out: Vec<u32> = (0..=10).map(|k| (lo as f64 * 10f64.powf(k as f64 / 10.0)).round() as u32).collect();
    out.dedup();
    out
}

fn fixed_point(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    let st = &cfg.settings;
    let opts = solver(cfg);
    let mut data = Table::new(
        "data",
        &["kappa", "gamma", "p", "cutoff", "bins_per_octave", "rho00", "iterations", "residual", "clamped_mass"],
    );
    let mut dist =
        Table::new("distribution", &["kappa", "gamma", "p", "cutoff", "log_sigma_plus", "sigma_plus", "mass", "density"]);
    let mut scaling = Table::new("scaling", &["kappa", "gamma", "kind", "x", "rho00"]);
    let mut results = Vec::new();
    for &k in &cfg.sweep.kappa {
        for &g in &cfg.sweep.gamma {
            let rows = rho00_vs_p(k, g, &cfg.sweep.p, &cfg.sweep.cutoff, st.bins_per_octave, opts)?;
            for r in &rows {
                data.push(vec![
                    f(k),
                    f(g),
                    f(r.p),
                    r.cutoff.to_string(),
                    st.bins_per_octave.to_string(),
                    f(r.rho00),
                    r.t.to_string(),
                    f(r.residual),
                    f(r.clamped_mass),
                ]);
            }
            let mut entry = json!({ "kappa": k, "gamma": g });
            if st.distribution {
                let mut fps = Vec::new();
                for &p in &cfg.sweep.p {
                    let params = ChannelParams::new(p, k, g)?;
                    for &l in &cfg.sweep.cutoff {
                        let spec = GridSpec::new(l, st.bins_per_octave)?;
                        let ss = steady_state(&params, spec, opts, None)?;
                        let m = ss.grid.marginal_plus();
                        for (i, (sigma, dens)) in ss.grid.density_plus().into_iter().enumerate() {
                            dist.push(vec![
                                f(k),
                                f(g),
                                f(p),
                                l.to_string(),
                                f(spec.log_sigma_plus(i)),
                                f(sigma),
                                f(m[i]),
                                f(dens),
                            ]);
                        }
                    }
                    let fp = predict_constants(&params)?;
                    fps.push(json!({
                        "p": p, "xi": fp.xi, "vbar": fp.vbar, "diffusion": fp.diffusion,
                        "tail_slope": fp.tail_slope().ok(),
                    }));
                }
                entry["fp"] = json!(fps);
            }
            if st.exponents {
                entry["exponents"] = exponents(cfg, k, g, &rows, &mut scaling)?;
            }
            results.push(entry);
        }
    }
    let mut tables = vec![data];
    if st.distribution {
        tables.push(dist);
    }
    if st.exponents {
        tables.push(scaling);
    }
    Ok(Bundle { tables, results: json!({ "per_pair": results }) })
}

fn exponents(
    cfg: &ExperimentConfig,
    k: f64,
    g: f64,
    rows: &[sqctl::grid::SweepRow],
    scaling: &mut Table,
) -> Result<Value, CliError> {
    let st = &cfg.settings;
    let opts = solver(cfg);
    let at_pc = ChannelParams::new(k / (k + g), k, g)?;
    let lo = *cfg.sweep.cutoff.iter().min().expect("validated non-empty");
    let sizes = decade_of_cutoffs(lo);
    let mut size_scan = Vec::new();
    for &l in &sizes {
        let ss = steady_state(&at_pc, GridSpec::new(l, st.bins_per_octave)?, opts, None)?;
        size_scan.push((l as f64, ss.rho00));
        scaling.push(vec![f(k), f(g), "size".into(), l.to_string(), f(ss.rho00)]);
    }
    let top = *sizes.last().expect("non-empty");
    let start = DistributionGrid::point_mass_at_vacuum(GridSpec::new(top, st.bins_per_octave)?);
    let (_, pts) = evolve(&at_pc, &start, st.n_steps, 1)?;
    let mut time_series = Vec::new();
    for pt in pts.iter().filter(|x| x.t >= Z_FIT_T_MIN) {
        time_series.push((pt.t as f64, pt.rho00));
        scaling.push(vec![f(k), f(g), "time".into(), pt.t.to_string(), f(pt.rho00)]);
    }
    let curves = SizeCurve::from_rows(rows);
    let fit = fit_exponents(&ScalingTables { pc: at_pc.p(), size_scan, time_series, curves: curves.clone(), nu_range: (0.5, 2.0) })?;
    let crossing = crossing_pc(&curves, 1.0).ok();
    Ok(json!({
        "pc": at_pc.p(),
        "beta": fit.beta,
        "z": fit.z,
        "nu": fit.nu,
        "beta_fit": fit.beta_fit,
        "z_fit": fit.z_fit,
        "z_fit_t_min": Z_FIT_T_MIN,
        "collapse_residual": fit.collapse_residual,
        "crossing_pc": crossing.as_ref().map(|c| c.pc),
        "crossings": crossing.map(|c| c.crossings),
    }))
}

fn fp_predict(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    let mut data =
        Table::new("data", &["kappa", "gamma", "p", "pc", "vbar", "diffusion", "xi", "tail_slope", "degenerate"]);
    let mut thr = Table::new("thresholds", &["kappa", "gamma", "n", "p_star_n", "p_star_2n", "p_fp_2n", "p_fp_2n_linear"]);
    for (k, g, p) in kgp(cfg) {
        let m = predict_constants(&ChannelParams::new(p, k, g)?)?;
        data.push(vec![
            f(k),
            f(g),
            f(p),
            f(m.pc),
            f(m.vbar),
            f(m.diffusion),
            f(m.xi),
            opt(m.tail_slope().ok().map(f)),
            m.degenerate.to_string(),
        ]);
    }
    let n_max = cfg.settings.n_max.max(1) as u32;
    for &k in &cfg.sweep.kappa {
        for &g in &cfg.sweep.gamma {
            for r in moment_thresholds(k, g, n_max)? {
                thr.push(vec![f(k), f(g), r.n.to_string(), f(r.p_star_n), f(r.p_star_2n), f(r.p_fp_2n), f(r.p_fp_2n_linear)]);
            }
        }
    }
    Ok(Bundle { tables: vec![data, thr], results: Value::Null })
}

fn eigenops(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    let n_max = cfg.settings.n_max;
    let mut data = Table::new("data", &["kappa", "gamma", "p", "n", "lambda", "residual", "coefficients"]);
    let mut thr = Table::new("thresholds", &["kappa", "gamma", "n", "p_star", "spectral_threshold"]);
    for (k, g, p) in kgp(cfg) {
        let params = ChannelParams::new(p, k, g)?;
        let tower = EigenTower::build_f64(SpectrumParams::from_channel(&params), n_max)?;
        for n in 0..=n_max {
            let coeffs: Vec<String> = tower.z[n].coeffs[..=n].iter().map(|c| f(*c)).collect();
            data.push(vec![f(k), f(g), f(p), n.to_string(), f(tower.eigenvalue(n)), f(tower.residual(n)), coeffs.join(" ")]);
        }
    }
    for &k in &cfg.sweep.kappa {
        for &g in &cfg.sweep.gamma {
            for n in 1..=n_max.max(1) {
                let closed = sqctl::fokker_planck::p_star(n as f64, k, g);
                thr.push(vec![f(k), f(g), n.to_string(), f(closed), f(spectral_threshold(n, k, g)?)]);
            }
        }
    }
    Ok(Bundle { tables: vec![data, thr], results: Value::Null })
}

fn catmap(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    let st = &cfg.settings;
    let kappa = cat_map_kappa();
    let mut data = Table::new(
        "data",
        &[
            "n",
            "theta",
            "p",
            "kappa",
            "gamma",
            "pc",
            "late_rho00",
            "late_rho00_stderr",
            "late_var_log_n",
            "late_var_log_x2p2",
            "iho_cutoff",
            "iho_rho00",
            "truncated",
            "n_traj",
        ],
    );
    let mut series = Table::new("timeseries", &["n", "theta", "p", "t", "rho00"]);
    let mut pcs = Table::new("pc_estimate", &["n", "theta", "observable", "pc_estimate", "stderr", "pc"]);
    let mut profile = Table::new("pc_profile", &["n", "theta", "p", "variance"]);
    for &n in &cfg.sweep.n {
        let sys = CatMapSystem::new(n)?;
        // N = 2^L states: the IHO comparison runs with walls at the same L
        let cutoff = (usize::BITS - 1 - n.leading_zeros()).max(1);
        for &theta in &cfg.sweep.theta {
            for &p in &cfg.sweep.p {
                let params = ChannelParams::from_theta(p, kappa, theta)?;
                let mut cc = CatMapConfig::new(theta, p, st.n_traj, st.n_steps, cfg.seed);
                cc.record_every = cfg.record_every;
                cc.init_level = st.init_level;
                if let Some(tf) = st.tail_fraction {
                    cc.tail_fraction = tf;
                }
                let r = run_catmap_ensemble(&sys, &cc)?;
                let iho = steady_state(&params, GridSpec::new(cutoff, st.bins_per_octave)?, solver(cfg), None)?;
                data.push(vec![
                    n.to_string(),
                    f(theta),
                    f(p),
                    f(kappa),
                    f(params.gamma()),
                    f(params.pc()),
                    f(r.late_rho00),
                    f(r.late_rho00_stderr),
                    f(r.late_var_log_n),
                    f(r.late_var_log_x2p2),
                    cutoff.to_string(),
                    f(iho.rho00),
                    r.truncated_trajectories.to_string(),
                    r.n_traj.to_string(),
                ]);
                for (t, rho) in r.rho00_mean.iter().enumerate().step_by(cfg.record_every.max(1)) {
                    series.push(vec![n.to_string(), f(theta), f(p), t.to_string(), f(*rho)]);
                }
            }
            if st.estimate_pc {
                let mut template = CatMapConfig::new(theta, 0.5, st.n_traj, st.n_steps, cfg.seed);
                template.record_every = cfg.record_every;
                template.init_level = st.init_level;
                if let Some(tf) = st.tail_fraction {
                    template.tail_fraction = tf;
                }
                let est = estimate_pc(&sys, theta, &cfg.sweep.p, &template, st.observable, st.bootstrap)?;
                let pc = ChannelParams::from_theta(0.5, kappa, theta)?.pc();
                let obs = serde_json::to_value(st.observable).expect("enum serializes");
                pcs.push(vec![
                    n.to_string(),
                    f(theta),
                    obs.as_str().unwrap_or_default().to_string(),
                    f(est.pc),
                    f(est.stderr),
                    f(pc),
                ]);
                for (p, v) in est.profile {
                    profile.push(vec![n.to_string(), f(theta), f(p), f(v)]);
                }
            }
        }
    }
    let mut tables = vec![data, series];
    if st.estimate_pc {
        tables.push(pcs);
        tables.push(profile);
    }
    Ok(Bundle { tables, results: json!({ "kappa": kappa }) })
}

fn classical(cfg: &ExperimentConfig, compare: bool) -> Result<Bundle, CliError> {
    let st = &cfg.settings;
    let cols: &[&'static str] = if compare {
        &["kappa", "gamma", "p", "d_over_gamma", "t", "classical_overlap", "quantum_rho00", "difference"]
    } else {
        &["kappa", "gamma", "p", "d_over_gamma", "t", "classical_overlap"]
    };
    let mut data = Table::new("data", cols);
    let mut summary = Table::new(
        "summary",
        &["kappa", "gamma", "p", "d_over_gamma", "stationary_variance", "max_trajectory_deviation", "max_mean_deviation"],
    );
    for (k, g, p) in kgp(cfg) {
        let params = ChannelParams::new(p, k, g)?;
        for &ratio in &cfg.sweep.d_over_gamma {
            let r = equivalence_suite(&params, ratio, st.n_traj, st.n_steps, cfg.seed)?;
            let head = vec![f(k), f(g), f(p), f(ratio)];
            for t in (0..=st.n_steps).step_by(cfg.record_every.max(1)) {
                let mut row = head.clone();
                row.extend([t.to_string(), f(r.classical_mean[t])]);
                if compare {
                    row.extend([f(r.quantum_mean[t]), f(r.classical_mean[t] - r.quantum_mean[t])]);
                }
                data.push(row);
            }
            let mut row = head;
            row.extend([
                f(OUParams::matched(g, ratio)?.stationary_variance()),
                f(r.max_trajectory_deviation),
                f(r.max_mean_deviation),
            ]);
            summary.push(row);
        }
    }
    Ok(Bundle { tables: vec![data, summary], results: json!({ "shared_draws": true }) })
}
