//! Build and validate the weight ingredients: the generator function d, the
//! temporal profile, singular and regular weights, level-set masks and the
//! cut-offs.
//!
//! Run with: cargo run --release --example validate_weights

use std::sync::Arc;

use mhd_carleman::geometry::{build_box_domain, check_inclusion, omega_epsilon, Face, SubBoundary};
use mhd_carleman::weights::*;

fn main() -> mhd_carleman::Result<()> {
    let domain = build_box_domain([1.0; 3], [16, 16, 16], 1.0, 64)?;
    let t0 = 0.5;

    for (kind, gamma) in [
        (DKind::WholeBoundaryAffine, SubBoundary::whole_boundary(&domain)),
        (DKind::FaceLinear, SubBoundary::all_but(&domain, Face::ZMin)),
    ] {
        let d = Arc::new(build_d(&domain, &gamma, kind)?);
        let report = validate_d(&d);
        println!(
            "{kind:?}: sup|d| = {:.3}, c_min = {:.3}, boundary violation = {:.1e}, pass = {}",
            d.sup_norm, report.c_min, report.boundary_violation, report.pass
        );

        let profile = build_l(domain.t_final, t0)?;
        println!("  l(t0) = {:.4} (strict max)", profile.peak_value());

        for lambda in [1.0, 2.0, 4.0] {
            let sw = singular_weight(d.clone(), profile.clone(), lambda, 4.0)?;
            let mut neg = true;
            for cell in 0..domain.cell_count() {
                for node in 1..domain.nt {
                    neg &= sw.alpha(cell, node) < 0.0;
                }
                neg &= sw.weight(cell, 0) == 0.0 && sw.weight(cell, domain.nt) == 0.0;
            }
            println!("  lambda = {lambda}: alpha < 0 inside and weight = 0 at endpoints: {neg}");
        }

        let beta = default_beta(&d, t0, domain.t_final);
        let rw = regular_weight(d.clone(), t0, beta, 2.0, 4.0)?;
        let eps = 0.1;
        let q = rw.q_epsilon_mask(eps);
        let om = omega_epsilon(&domain, &d.values(), eps);
        println!(
            "  beta = {beta:.2}: |Omega_eps| = {:.3}, |Q_eps| = {:.3}, inclusion: {}",
            om.measure,
            q.measure,
            check_inclusion(&q, &om)?
        );

        let cut = build_cutoffs(&rw, eps)?;
        println!("  cutoff: delta0 = {:.4}, degenerate = {}", cut.delta0, cut.degenerate);
    }

    // the negative control deliberately violates the gradient condition
    let gamma = SubBoundary::all_but(&domain, Face::ZMin);
    let bad = interior_peak_generator(&domain, &gamma);
    println!("interior-peak control passes validation: {}", validate_d(&bad).pass);
    Ok(())
}
