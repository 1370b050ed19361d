//! Forward solve of the linearized system with a separable source, printing
//! divergence, energy and trace summaries.
//!
//! Run with: cargo run --release --example forward_mhd

use std::sync::Arc;

use mhd_carleman::geometry::build_box_domain;
use mhd_carleman::manufactured::CoeffSpecs;
use mhd_carleman::reduce::pairwise_dot;
use mhd_carleman::solver::*;

fn main() -> mhd_carleman::Result<()> {
    let domain = build_box_domain([1.0; 3], [12, 12, 12], 0.5, 32)?;
    let coeffs = CoeffSpecs::standard(0.15, 0.1).sample(&domain);
    let r = RProfile {
        value: Arc::new(|x: [f64; 3], t: f64| {
            [1.0 + 0.2 * x[0] + 0.1 * t, 0.6 - 0.1 * x[2], 0.8 + 0.15 * x[1]]
        }),
        dt: Arc::new(|_, _| [0.1, 0.0, 0.0]),
        dtt: Arc::new(|_, _| [0.0; 3]),
    };
    let (ok, c0) = check_r_assumption(&r, &domain, 0.25);
    println!("source profile nonvanishing at t0: {ok} (min magnitude {c0:.3})");

    let f = domain.sample_cells(|x| {
        (std::f64::consts::PI * x[0]).sin()
            * (std::f64::consts::PI * x[1]).sin()
            * (std::f64::consts::PI * x[2]).sin()
    });
    let mut problem = ForwardProblem::new(domain.clone(), coeffs);
    problem.t0 = 0.25;
    problem.source = Some(SourceModel { r, f });

    let (traj, traces) = solve_forward(&problem, 2)?;
    println!("max |div u| over the run: {:.2e}", traj.max_div);

    let energy = |s: &State| -> f64 {
        (0..3)
            .map(|c| pairwise_dot(&s.u.comp[c], &s.u.comp[c]) + pairwise_dot(&s.h.comp[c], &s.h.comp[c]))
            .sum()
    };
    println!(
        "energy: t=0: {:.3e}, t=T/2: {:.3e}, t=T: {:.3e}",
        energy(&traj.states[0]),
        energy(&traj.states[domain.nt / 2]),
        energy(&traj.states[domain.nt])
    );

    let weak = check_weak_div_conditions(&traj);
    println!(
        "weak-divergence residuals: |div du/dt| = {:.2e}, |div lap u| = {:.2e}",
        weak.max_div_dt, weak.max_div_lap
    );

    let nb = domain.total_boundary_cells();
    let dn_scale: f64 = (0..3)
        .map(|c| pairwise_dot(&traces.orders[0].dn_u[c], &traces.orders[0].dn_u[c]))
        .sum::<f64>()
        / (nb * (domain.nt + 1)) as f64;
    println!("normal-derivative trace RMS: {:.3e}", dn_scale.sqrt());
    println!("snapshot node: {}", traces.snapshot.node);
    Ok(())
}
