//! Manufactured-solution convergence of the staggered IMEX solver: the time
//! step is refined with the square of the mesh so the fitted slope reflects
//! the spatial order.
//!
//! Run with: cargo run --release --example manufactured_convergence

use std::sync::Arc;

use mhd_carleman::geometry::build_box_domain;
use mhd_carleman::manufactured::{self, CoeffSpecs, TimeFactor, TrigMode};
use mhd_carleman::solver::*;

fn error_on(n: usize, nt: usize) -> mhd_carleman::Result<f64> {
    let domain = build_box_domain([1.0; 3], [n; 3], 0.25, nt)?;
    let pi = std::f64::consts::PI;
    let u = manufactured::trig_vec_spec(
        vec![
            TrigMode { amp: [1.0, -0.5, -0.5], kappa: [pi, pi, pi] },
            TrigMode { amp: [0.0, 0.3, -0.3], kappa: [2.0 * pi, pi, pi] },
        ],
        TimeFactor::poly_trig(1.0, 0.4, 0.2, 3.0),
    );
    let p = manufactured::cos_pressure_spec(0.6, [pi; 3], TimeFactor::poly_trig(1.0, 0.2, 0.0, 1.0));
    let h = manufactured::trig_vec_spec(
        vec![TrigMode { amp: [0.4, 0.4, -0.8], kappa: [pi, pi, pi] }],
        TimeFactor::poly_trig(0.8, -0.2, 0.15, 2.0),
    );
    let m = manufactured::manufacture(u, p, h, CoeffSpecs::standard(0.15, 0.1));
    let mut problem = ForwardProblem::new(domain.clone(), m.coeffs.sample(&domain));
    let (uv, hv) = (m.u.value.clone(), m.h.value.clone());
    let (uv2, hv2) = (m.u.value.clone(), m.h.value.clone());
    problem.bc = Bc::Analytic { u: Arc::new(move |x, t| uv(x, t)), h: Arc::new(move |x, t| hv(x, t)) };
    problem.initial =
        InitialData::Analytic { u: Arc::new(move |x, t| uv2(x, t)), h: Arc::new(move |x, t| hv2(x, t)) };
    problem.f_extra = Some(m.forcing_u.clone());
    problem.g_extra = Some(m.forcing_h.clone());
    let (final_state, _) = solve_final(&problem)?;
    let exact = sample_face_closure(&domain, &m.u.value, domain.t_final);
    Ok(relative_interior_face_error(&domain, &final_state.u, &exact))
}

fn main() -> mhd_carleman::Result<()> {
    let runs = [(8usize, 16usize), (16, 64), (32, 256)];
    let mut errors = Vec::new();
    for (n, nt) in runs {
        let e = error_on(n, nt)?;
        println!("n = {n:2}, nt = {nt:3}: relative velocity error {e:.4e}");
        errors.push(e);
    }
    for i in 1..errors.len() {
        println!("observed order {} -> {}: {:.2}", runs[i - 1].0, runs[i].0, (errors[i - 1] / errors[i]).log2());
    }
    Ok(())
}
