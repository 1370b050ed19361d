//! Experiment runner behind the `mhdlab` binary: parses configs, dispatches
//! subcommands, and writes CSV/JSON/binary artifacts plus a manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::carleman::sweeps::{
    elliptic_carleman_check, parabolic_carleman_check, region_restricted_check,
    sweep_theorem, EllipticInstance, ParabolicInstance, ParabolicKind, SweepResult, SystemInstance,
    TheoremKind,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{omega_epsilon, Domain};
use crate::inverse::experiments::{holder_experiment, lipschitz_experiment, NoiseOptions};
use crate::inverse::reconstruct::reconstruct_f;
use crate::inverse::{ObsMode, ObsOperator};
use crate::manufactured::{
    cos_pressure_spec, manufacture, random_dirichlet_scalar, random_solenoidal, CoeffSpecs,
    ScalarSpacetime, TimeFactor,
};
use crate::artifacts::ArtifactWriter;
use crate::solver::{
    check_weak_div_conditions, solve_forward, ForwardProblem, SourceModel,
};
use crate::weights::{
    build_cutoffs, build_d, build_l, default_beta, interior_peak_generator, regular_weight,
    singular_weight, validate_d,
};

pub const SUBCOMMANDS: [&str; 8] = [
    "weights",
    "forward",
    "carleman-check",
    "elliptic-check",
    "parabolic-check",
    "invert",
    "stability",
    "plots",
];

/// Run one subcommand against a config file. The output root is, in order of
/// precedence: the explicit override, `MHDLAB_OUT`, or the config's `run.out_dir`.
pub fn run(subcommand: &str, config_path: &Path, out_override: Option<PathBuf>) -> Result<()> {
    if subcommand == "plots" {
        // plots reshapes an existing artifact directory; the "config path"
        // argument is that directory
        return emit_plots_data(config_path);
    }
    let cfg = ExperimentConfig::from_path(config_path)?;
    let root = out_override
        .or_else(|| std::env::var_os("MHDLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
    let dir = root.join(subcommand);
    let runner = || dispatch(subcommand, &cfg, &dir);
    if cfg.run.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(runner)
    } else {
        runner()
    }
}

fn dispatch(subcommand: &str, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    match subcommand {
        "weights" => run_weights(cfg, dir),
        "forward" => run_forward(cfg, dir),
        "carleman-check" => run_carleman_check(cfg, dir),
        "elliptic-check" => run_elliptic_check(cfg, dir),
        "parabolic-check" => run_parabolic_check(cfg, dir),
        "invert" => run_invert(cfg, dir),
        "stability" => run_stability(cfg, dir),
        other => Err(Error::Config(format!(
            "unknown subcommand `{other}` (expected one of {SUBCOMMANDS:?})"
        ))),
    }
}

fn build_forward_problem(cfg: &ExperimentConfig, domain: &Domain) -> ForwardProblem {
    let coeffs = cfg.build_coefficients(domain);
    let mut problem = ForwardProblem::new(domain.clone(), coeffs);
    problem.t0 = cfg.weights.t0;
    problem.tol.cg_tol = cfg.run.solver_cg_tol;
    problem.source =
        Some(SourceModel { r: cfg.build_r_profile(), f: cfg.build_f(domain) });
    problem
}

fn obs_mode(cfg: &ExperimentConfig, domain: &Domain) -> Result<ObsMode> {
    let gamma = cfg.build_gamma(domain)?;
    Ok(if gamma.is_whole_boundary() { ObsMode::Full } else { ObsMode::Partial(gamma) })
}

// --- weights ---

fn run_weights(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = ArtifactWriter::new(dir)?;
    let t = Instant::now();
    let domain = cfg.build_domain()?;
    let gamma = cfg.build_gamma(&domain)?;
    let d = Arc::new(build_d(&domain, &gamma, cfg.weights.kind)?);
    let report = validate_d(&d);
    w.write_json("validation.json", &report)?;

    let lambda = cfg.weights.lambdas.first().copied().unwrap_or(1.0);
    let s0 = cfg.weights.s_grid_singular.lo;
    let profile = build_l(domain.t_final, cfg.weights.t0)?;
    let sw = singular_weight(d.clone(), profile.clone(), lambda, s0)?;
    let beta = cfg
        .weights
        .beta_override
        .unwrap_or_else(|| default_beta(&d, cfg.weights.t0, domain.t_final));
    let rw = regular_weight(d.clone(), cfg.weights.t0, beta, lambda, s0)?;

    let meta = serde_json::json!({
        "lambda": lambda, "s": s0, "t0": cfg.weights.t0, "beta": beta,
        "eps": cfg.weights.eps, "catalog": format!("{:?}", cfg.weights.kind),
    });
    w.write_scalar_field("d", &d.values(), meta.clone())?;

    // weight fields over the space-time lattice, node-major
    let nc = domain.cell_count();
    let mut e2sa = vec![0.0; (domain.nt + 1) * nc];
    let mut psi = vec![0.0; (domain.nt + 1) * nc];
    for node in 0..=domain.nt {
        for cell in 0..nc {
            e2sa[node * nc + cell] = sw.weight(cell, node);
            psi[node * nc + cell] = rw.psi(cell, node);
        }
    }
    let st_shape = [domain.nt + 1, domain.n[0], domain.n[1], domain.n[2]];
    w.write_field("singular_weight", &e2sa, &st_shape, meta.clone())?;
    w.write_field("psi", &psi, &st_shape, meta.clone())?;

    let om = omega_epsilon(&domain, &d.values(), cfg.weights.eps);
    w.write_space_mask("omega_eps", &om, serde_json::json!({"beta": beta, "t0": cfg.weights.t0}))?;
    let q = rw.q_epsilon_mask(cfg.weights.eps);
    w.write_spacetime_mask("q_eps", &q, serde_json::json!({"beta": beta, "t0": cfg.weights.t0}))?;
    let cut = build_cutoffs(&rw, cfg.weights.eps)?;
    w.write_field("chi", &cut.chi, &st_shape, meta.clone())?;

    // quick invariant summary over the configured lambda list
    let mut alpha_neg = true;
    let mut endpoint_zero = true;
    for &lam in &cfg.weights.lambdas {
        let swl = singular_weight(d.clone(), profile.clone(), lam, s0)?;
        for cell in 0..nc {
            endpoint_zero &= swl.weight(cell, 0) == 0.0 && swl.weight(cell, domain.nt) == 0.0;
            for node in 1..domain.nt {
                alpha_neg &= swl.alpha(cell, node) < 0.0;
            }
        }
    }
    let peak_node = domain.nearest_time_node(cfg.weights.t0);
    let argmax = rw.argmax();
    w.write_json(
        "invariants.json",
        &serde_json::json!({
            "alpha_negative_inside": alpha_neg,
            "weight_zero_at_time_endpoints": endpoint_zero,
            "profile_peak": profile.peak_value(),
            "regular_argmax_cell": argmax.0,
            "regular_argmax_node": argmax.1,
            "expected_argmax_node": peak_node,
            "validation_pass": report.pass,
        }),
    )?;
    w.record_timing("weights", t.elapsed().as_millis());
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    Ok(())
}

// --- forward ---

fn run_forward(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = ArtifactWriter::new(dir)?;
    let t = Instant::now();
    let domain = cfg.build_domain()?;
    let problem = build_forward_problem(cfg, &domain);
    let (traj, bundle) = solve_forward(&problem, 3)?;
    let weak = check_weak_div_conditions(&traj);
    w.write_json("weak_div.json", &weak)?;
    w.write_json(
        "run_summary.json",
        &serde_json::json!({"max_div": traj.max_div, "states": traj.states.len()}),
    )?;

    let nb = domain.total_boundary_cells();
    let tr_shape = [domain.nt + 1, nb];
    for c in 0..3 {
        w.write_field(&format!("trace_dn_u{c}"), &bundle.orders[0].dn_u[c], &tr_shape, serde_json::json!({}))?;
        w.write_field(&format!("trace_dn_h{c}"), &bundle.orders[0].dn_h[c], &tr_shape, serde_json::json!({}))?;
    }
    w.write_field("trace_p", &bundle.orders[0].p_wall, &tr_shape, serde_json::json!({}))?;
    w.write_scalar_field("snapshot_p", &bundle.snapshot.p, serde_json::json!({"node": bundle.snapshot.node}))?;
    for c in 0..3 {
        let u = ScalarField { n: domain.n, data: bundle.snapshot.u_cc.comp[c].clone() };
        w.write_scalar_field(&format!("snapshot_u{c}"), &u, serde_json::json!({"node": bundle.snapshot.node}))?;
        let h = ScalarField { n: domain.n, data: bundle.snapshot.h.comp[c].clone() };
        w.write_scalar_field(&format!("snapshot_h{c}"), &h, serde_json::json!({"node": bundle.snapshot.node}))?;
    }
    if cfg.run.export_trajectory {
        for (k, st) in traj.states.iter().enumerate() {
            w.write_scalar_field(&format!("traj/p_{k:04}"), &st.p, serde_json::json!({"t": st.t}))?;
        }
    }
    w.record_timing("forward", t.elapsed().as_millis());
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    Ok(())
}

// --- manufactured instance helpers shared by the sweep subcommands ---

/// Build one random manufactured system instance. `windowed` selects the
/// zero-time-boundary family.
pub fn manufactured_system_instance(
    domain: &Domain,
    coeffs: &CoeffSpecs,
    rng: &mut ChaCha8Rng,
    t0: f64,
    windowed: bool,
) -> SystemInstance {
    let pi = std::f64::consts::PI;
    let mk_time = |rng: &mut ChaCha8Rng| -> TimeFactor {
        if windowed {
            TimeFactor::window_sin2(domain.t_final, 0.1 + 0.3 * rng.random::<f64>(), 1.0 + 3.0 * rng.random::<f64>())
        } else {
            TimeFactor::poly_trig(
                0.8 + 0.4 * rng.random::<f64>(),
                0.4 * (rng.random::<f64>() - 0.5),
                0.3 * rng.random::<f64>(),
                1.0 + 3.0 * rng.random::<f64>(),
            )
        }
    };
    let tu = mk_time(rng);
    let u = random_solenoidal(rng, domain.lengths, 3, 3, tu);
    let th = mk_time(rng);
    let h = random_solenoidal(rng, domain.lengths, 3, 3, th);
    let tp = mk_time(rng);
    let p = cos_pressure_spec(
        0.3 + 0.4 * rng.random::<f64>(),
        [pi / domain.lengths[0], pi / domain.lengths[1], pi / domain.lengths[2]],
        tp,
    );
    let m = manufacture(u, p, h, coeffs.clone());
    SystemInstance::from_manufactured(domain, &m, t0)
}

fn parabolic_instance_from_scalar(y: &ScalarSpacetime, nu: f64) -> ParabolicInstance {
    ParabolicInstance {
        y: y.value.clone(),
        y_dt: y.dt.clone(),
        grad_y: y.grad.clone(),
        hess_y: y.hess.clone(),
        nu,
        b: [0.3, -0.2, 0.1],
        c: 0.5,
    }
}

#[derive(serde::Serialize)]
struct SweepVerdict {
    kind: String,
    sample: usize,
    lambda: f64,
    sup_ratio: f64,
    growth_top_half: f64,
    prefactor_exponent: f64,
    degenerate: bool,
    passed: bool,
}

fn summarize(sweeps: &[(usize, SweepResult)], threshold: f64) -> Vec<SweepVerdict> {
    sweeps
        .iter()
        .map(|(i, s)| SweepVerdict {
            kind: s.kind.clone(),
            sample: *i,
            lambda: s.lambda,
            sup_ratio: s.sup_ratio,
            growth_top_half: s.growth_top_half,
            prefactor_exponent: s.prefactor_exponent,
            degenerate: s.degenerate,
            passed: s.bounded(threshold),
        })
        .collect()
}

// --- carleman-check (system estimates) ---

fn run_carleman_check(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = ArtifactWriter::new(dir)?;
    let t = Instant::now();
    let domain = cfg.build_domain()?;
    let gamma = cfg.build_gamma(&domain)?;
    let d = Arc::new(build_d(&domain, &gamma, cfg.weights.kind)?);
    let coeffs = CoeffSpecs::standard(cfg.coefficients.nu, cfg.coefficients.kappa);
    let mode = cfg.run.half_norm.to_mode();
    let lam_sing = cfg.weights.lambdas.first().copied().unwrap_or(1.0);
    let lam_reg = cfg.weights.lambdas.get(1).copied().unwrap_or(2.0);
    let s_sing = cfg.s_values_singular();
    let s_reg = cfg.s_values();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.source.seed);
    let mut all = Vec::new();
    for i in 0..cfg.run.n_samples {
        let inst = manufactured_system_instance(&domain, &coeffs, &mut rng, cfg.weights.t0, false);
        let sweep = sweep_theorem(
            TheoremKind::SingularDivFree,
            &inst,
            d.clone(),
            cfg.weights.t0,
            cfg.weights.beta_override,
            lam_sing,
            &s_sing,
            mode,
        )?;
        w.write_sweep_csv(&format!("sweep_singular_{i:02}.csv"), &sweep)?;
        all.push((i, sweep));

        let inst = manufactured_system_instance(&domain, &coeffs, &mut rng, cfg.weights.t0, true);
        let sweep = sweep_theorem(
            TheoremKind::RegularZeroTimeBoundary,
            &inst,
            d.clone(),
            cfg.weights.t0,
            cfg.weights.beta_override,
            lam_reg,
            &s_reg,
            mode,
        )?;
        w.write_sweep_csv(&format!("sweep_regular_{i:02}.csv"), &sweep)?;
        all.push((i, sweep));
    }
    let verdicts = summarize(&all, cfg.run.growth_threshold);
    let all_passed = verdicts.iter().all(|v| v.passed);
    w.write_json(
        "verdict.json",
        &serde_json::json!({"sweeps": verdicts, "all_passed": all_passed}),
    )?;
    w.record_timing("carleman_check", t.elapsed().as_millis());
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    if all_passed {
        Ok(())
    } else {
        Err(Error::Hypothesis("bounded-ratio verdict failed; see verdict.json".into()))
    }
}

// --- elliptic-check ---

fn run_elliptic_check(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = ArtifactWriter::new(dir)?;
    let t = Instant::now();
    let domain = cfg.build_domain()?;
    let gamma = cfg.build_gamma(&domain)?;
    let d_good = build_d(&domain, &gamma, cfg.weights.kind)?;
    let d_bad = interior_peak_generator(&domain, &gamma);
    let lambda = cfg.weights.lambdas.get(1).copied().unwrap_or(2.0);
    let s_grid = cfg.s_values();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.source.seed);
    let mut goods = Vec::new();
    let mut bads = Vec::new();
    for i in 0..cfg.run.n_samples {
        let y = random_dirichlet_scalar(&mut rng, domain.lengths, TimeFactor::one());
        let inst = elliptic_instance_from_scalar(&y);
        let good = elliptic_carleman_check(&domain, &inst, &d_good, lambda, &s_grid)?;
        w.write_sweep_csv(&format!("sweep_good_{i:02}.csv"), &good)?;
        let bad = elliptic_carleman_check(&domain, &inst, &d_bad, lambda, &s_grid)?;
        w.write_sweep_csv(&format!("sweep_control_{i:02}.csv"), &bad)?;
        goods.push((i, good));
        bads.push((i, bad));
    }
    let good_v = summarize(&goods, cfg.run.growth_threshold);
    let bad_over = bads.iter().filter(|(_, s)| s.growth_top_half > 1.5).count();
    let all_good = good_v.iter().all(|v| v.passed);
    w.write_json(
        "verdict.json",
        &serde_json::json!({
            "good": good_v,
            "control_growths": bads.iter().map(|(_, s)| s.growth_top_half).collect::<Vec<_>>(),
            "control_broken_count": bad_over,
            "all_good_bounded": all_good,
        }),
    )?;
    w.record_timing("elliptic_check", t.elapsed().as_millis());
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    if all_good {
        Ok(())
    } else {
        Err(Error::Hypothesis("elliptic bounded-ratio verdict failed".into()))
    }
}

/// Static elliptic instance from a scalar space-time spec evaluated at t = 0.
pub fn elliptic_instance_from_scalar(y: &ScalarSpacetime) -> EllipticInstance {
    let yv = y.value.clone();
    let yg = y.grad.clone();
    EllipticInstance::from_solution(
        Arc::new(move |x| yv(x, 0.0)),
        Arc::new(move |x| yg(x, 0.0)),
        [0.3, -0.2, 0.1],
    )
}

// --- parabolic-check ---

fn run_parabolic_check(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = ArtifactWriter::new(dir)?;
    let t = Instant::now();
    let domain = cfg.build_domain()?;
    let gamma = cfg.build_gamma(&domain)?;
    let d = Arc::new(build_d(&domain, &gamma, cfg.weights.kind)?);
    let lam_sing = cfg.weights.lambdas.first().copied().unwrap_or(1.0);
    let lam_reg = cfg.weights.lambdas.get(1).copied().unwrap_or(2.0);
    let s_sing = cfg.s_values_singular();
    let s_reg = cfg.s_values();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.source.seed);
    let mut all = Vec::new();
    for i in 0..cfg.run.n_samples {
        let y = random_dirichlet_scalar(
            &mut rng,
            domain.lengths,
            TimeFactor::poly_trig(1.0, 0.3, 0.4, 3.0),
        );
        let inst = parabolic_instance_from_scalar(&y, cfg.coefficients.nu);
        let sweep = parabolic_carleman_check(
            &domain,
            ParabolicKind::Singular,
            &inst,
            d.clone(),
            cfg.weights.t0,
            lam_sing,
            &s_sing,
        )?;
        w.write_sweep_csv(&format!("sweep_singular_{i:02}.csv"), &sweep)?;
        all.push((i, sweep));

        let yw = random_dirichlet_scalar(
            &mut rng,
            domain.lengths,
            TimeFactor::window_sin2(domain.t_final, 0.3, 2.0),
        );
        let instw = parabolic_instance_from_scalar(&yw, cfg.coefficients.nu);
        for tau in [0u32, 1] {
            let sweep = parabolic_carleman_check(
                &domain,
                ParabolicKind::Regular { tau },
                &instw,
                d.clone(),
                cfg.weights.t0,
                lam_reg,
                &s_reg,
            )?;
            w.write_sweep_csv(&format!("sweep_regular_tau{tau}_{i:02}.csv"), &sweep)?;
            all.push((i, sweep));
        }
    }
    let verdicts = summarize(&all, cfg.run.growth_threshold);
    let all_passed = verdicts.iter().all(|v| v.passed);
    w.write_json(
        "verdict.json",
        &serde_json::json!({"sweeps": verdicts, "all_passed": all_passed}),
    )?;
    w.record_timing("parabolic_check", t.elapsed().as_millis());
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    if all_passed {
        Ok(())
    } else {
        Err(Error::Hypothesis("parabolic bounded-ratio verdict failed".into()))
    }
}

// --- invert ---

fn run_invert(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = ArtifactWriter::new(dir)?;
    let t = Instant::now();
    let domain = cfg.build_domain()?;
    let problem = build_forward_problem(cfg, &domain);
    let mode = obs_mode(cfg, &domain)?;
    let op = ObsOperator::new(problem, mode, cfg.run.half_norm.to_mode())?;
    let f_true = cfg.build_f(&domain);
    let data = op.apply(&f_true)?;
    let (f_hat, report) = reconstruct_f(&op, &data, cfg.run.reg, cfg.run.cg_tol, cfg.run.cg_max_iter)?;
    let vol = domain.cell_volume();
    let mut diff = f_hat.clone();
    diff.axpy(-1.0, &f_true);
    let err = (crate::reduce::pairwise_dot(&diff.data, &diff.data) * vol).sqrt();
    let nrm = (crate::reduce::pairwise_dot(&f_true.data, &f_true.data) * vol).sqrt();
    w.write_scalar_field("f_true", &f_true, serde_json::json!({}))?;
    w.write_scalar_field("f_hat", &f_hat, serde_json::json!({}))?;
    w.write_json(
        "recon.json",
        &serde_json::json!({
            "relative_l2_error": if nrm > 0.0 { err / nrm } else { err },
            "iterations": report.iterations,
            "final_rel_residual": report.final_rel_residual,
            "reg": report.reg,
        }),
    )?;
    w.write_csv(
        "residual_history.csv",
        &["iteration", "rel_residual"],
        &report
            .residual_history
            .iter()
            .enumerate()
            .map(|(i, r)| vec![i as f64, *r])
            .collect::<Vec<_>>(),
    )?;
    w.record_timing("invert", t.elapsed().as_millis());
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    Ok(())
}

// --- stability ---

fn run_stability(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = ArtifactWriter::new(dir)?;
    let t = Instant::now();
    let domain = cfg.build_domain()?;
    let problem = build_forward_problem(cfg, &domain);
    let mode = obs_mode(cfg, &domain)?;
    let half = cfg.run.half_norm.to_mode();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.source.seed);
    let report = match &mode {
        ObsMode::Full => {
            let op = ObsOperator::new(problem, mode.clone(), half)?;
            let noise = NoiseOptions { levels: cfg.run.noise_levels.clone(), ..Default::default() };
            lipschitz_experiment(&op, cfg.run.n_samples, &noise, &mut rng)?
        }
        ObsMode::Partial(gamma) => {
            let d = build_d(&domain, gamma, cfg.weights.kind)?;
            let op = ObsOperator::new(problem, mode.clone(), half)?;
            holder_experiment(
                &op,
                &d,
                cfg.weights.eps,
                cfg.run.n_samples,
                &mut rng,
                half,
                1e-8,
                true,
            )?
        }
    };
    w.write_json("stability_report.json", &report)?;
    let rows: Vec<Vec<f64>> = report
        .samples
        .iter()
        .map(|s| vec![s.id as f64, s.f_norm, s.d_norm, s.m_norm, s.ratio])
        .collect();
    w.write_csv("samples.csv", &["id", "f_norm", "d_norm", "m_norm", "ratio"], &rows)?;
    w.record_timing("stability", t.elapsed().as_millis());
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    Ok(())
}

// --- plots ---

/// Reshape completed artifacts into tidy per-figure CSVs.
pub fn emit_plots_data(artifact_dir: &Path) -> Result<()> {
    if !artifact_dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", artifact_dir.display())));
    }
    let mut produced = 0usize;
    // ratio-vs-s: gather every sweep CSV under the directory tree
    let mut ratio_rows: Vec<(String, f64, f64)> = Vec::new();
    let mut stack = vec![artifact_dir.to_path_buf()];
    let mut stability_jsons = Vec::new();
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let entry = entry?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Some(name) = p.file_name().and_then(|n| n.to_str()) {
                if name.starts_with("sweep_") && name.ends_with(".csv") {
                    let text = std::fs::read_to_string(&p)?;
                    let mut lines = text.lines();
                    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
                    let s_i = header.iter().position(|h| *h == "s");
                    let r_i = header.iter().position(|h| *h == "ratio");
                    if let (Some(si), Some(ri)) = (s_i, r_i) {
                        for line in lines {
                            let cells: Vec<&str> = line.split(',').collect();
                            if cells.len() > si.max(ri) {
                                if let (Ok(s), Ok(r)) =
                                    (cells[si].parse::<f64>(), cells[ri].parse::<f64>())
                                {
                                    ratio_rows.push((name.trim_end_matches(".csv").into(), s, r));
                                }
                            }
                        }
                    }
                } else if name == "stability_report.json" {
                    stability_jsons.push(p.clone());
                }
            }
        }
    }
    if !ratio_rows.is_empty() {
        let mut text = String::from("sweep,s,ratio\n");
        for (id, s, r) in &ratio_rows {
            text.push_str(&format!("{id},{s:.17e},{r:.17e}\n"));
        }
        std::fs::write(artifact_dir.join("plot_ratio_vs_s.csv"), text)?;
        produced += 1;
    }
    for path in &stability_jsons {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{e}")))?;
        if let Some(noise) = v.get("noise").and_then(|n| n.as_object()) {
            let levels = noise["levels"].as_array().cloned().unwrap_or_default();
            let errors = noise["errors"].as_array().cloned().unwrap_or_default();
            let mut text = String::from("noise_level,rel_error\n");
            for (l, e) in levels.iter().zip(errors.iter()) {
                text.push_str(&format!("{},{}\n", l, e));
            }
            std::fs::write(artifact_dir.join("plot_error_vs_noise.csv"), text)?;
            produced += 1;
        }
        if v.get("holder").map(|h| !h.is_null()).unwrap_or(false) {
            let samples = v["samples"].as_array().cloned().unwrap_or_default();
            let mut text = String::from("id,log_f_over_m,log_d_over_m\n");
            for s in &samples {
                let f = s["f_norm"].as_f64().unwrap_or(f64::NAN);
                let dn = s["d_norm"].as_f64().unwrap_or(f64::NAN);
                let m = s["m_norm"].as_f64().unwrap_or(f64::NAN);
                text.push_str(&format!(
                    "{},{:.17e},{:.17e}\n",
                    s["id"],
                    (f / m).ln(),
                    (dn / m).ln()
                ));
            }
            std::fs::write(artifact_dir.join("plot_holder_fit.csv"), text)?;
            produced += 1;
        }
    }
    if produced == 0 {
        return Err(Error::Config(format!(
            "no plottable artifacts under {}: expected sweep_*.csv files or \
             stability_report.json",
            artifact_dir.display()
        )));
    }
    Ok(())
}

/// Simple sweep over one lemma diagnostic left available to callers.
#[allow(clippy::too_many_arguments)]
pub fn run_region_diagnostic(
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<SweepResult> {
    let mut w = ArtifactWriter::new(dir)?;
    let domain = cfg.build_domain()?;
    let gamma = cfg.build_gamma(&domain)?;
    let d = Arc::new(build_d(&domain, &gamma, cfg.weights.kind)?);
    let problem = build_forward_problem(cfg, &domain);
    let f = cfg.build_f(&domain);
    let mut p2 = problem.clone();
    if let Some(src) = p2.source.as_mut() {
        src.f = f.clone();
    }
    let (traj, bundle) = solve_forward(&p2, 2)?;
    let lam = cfg.weights.lambdas.get(1).copied().unwrap_or(2.0);
    let sweep = region_restricted_check(
        &traj,
        &f,
        d,
        &gamma,
        &bundle,
        cfg.weights.t0,
        lam,
        cfg.weights.eps,
        &cfg.s_values(),
        cfg.run.half_norm.to_mode(),
    )?;
    w.write_sweep_csv("sweep_region_restricted.csv", &sweep)?;
    w.finalize(&cfg.canonical_string(), cfg.source.seed)?;
    Ok(sweep)
}

/// Used by the determinism harness: run a light pipeline (weights + a sweep +
/// a coarse inversion) into `dir` and return the manifest checksums.
pub fn determinism_pipeline(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<(String, String)>> {
    run_weights(cfg, &dir.join("weights"))?;
    run_elliptic_check(cfg, &dir.join("elliptic"))?;
    run_invert(cfg, &dir.join("invert"))?;
    let mut sums = Vec::new();
    for sub in ["weights", "elliptic", "invert"] {
        let manifest_path = dir.join(sub).join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{e}")))?;
        if let Some(outputs) = v["outputs"].as_array() {
            for o in outputs {
                let path = o["path"].as_str().unwrap_or("?");
                // manifests time-stamp themselves; only numeric outputs count
                if path.ends_with(".bin") || path.ends_with(".csv") {
                    sums.push((
                        format!("{sub}/{path}"),
                        o["fnv64"].as_str().unwrap_or("").to_string(),
                    ));
                }
            }
        }
    }
    sums.sort();
    Ok(sums)
}

// re-exported for the thin binary
pub fn usage() -> String {
    format!(
        "usage: mhdlab <subcommand> <config.toml|artifact-dir> [--out DIR]\n\
         subcommands: {}\n\
         `plots` takes an artifact directory instead of a config file;\n\
         MHDLAB_OUT overrides the default output root.",
        SUBCOMMANDS.join(", ")
    )
}
