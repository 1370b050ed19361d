//! Scalar parabolic estimates: the singular-weight inequality and the
//! regular-weight family (both polynomial powers) on heat-type solutions.
//!
//! Run with: cargo run --release --example parabolic_carleman

use std::sync::Arc;

use mhd_carleman::carleman::sweeps::*;
use mhd_carleman::geometry::{build_box_domain, Face, SubBoundary};
use mhd_carleman::manufactured::{random_dirichlet_scalar, ScalarSpacetime, TimeFactor};
use mhd_carleman::weights::{build_d, DKind};
use rand::SeedableRng;

fn instance(y: &ScalarSpacetime) -> ParabolicInstance {
    ParabolicInstance {
        y: y.value.clone(),
        y_dt: y.dt.clone(),
        grad_y: y.grad.clone(),
        hess_y: y.hess.clone(),
        nu: 0.2,
        b: [0.3, -0.2, 0.1],
        c: 0.5,
    }
}

fn main() -> mhd_carleman::Result<()> {
    let domain = build_box_domain([1.0; 3], [12, 12, 12], 1.0, 48)?;
    let gamma = SubBoundary::all_but(&domain, Face::ZMin);
    let d = Arc::new(build_d(&domain, &gamma, DKind::FaceLinear)?);
    let t0 = 0.5;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);

    let y = random_dirichlet_scalar(&mut rng, domain.lengths, TimeFactor::poly_trig(1.0, 0.3, 0.4, 3.0));
    let sweep = parabolic_carleman_check(
        &domain,
        ParabolicKind::Singular,
        &instance(&y),
        d.clone(),
        t0,
        1.0,
        &geometric_s_grid(2.0, 24.0, 12),
    )?;
    println!(
        "singular kind: sup ratio {:.3e}, growth {:.3}, bounded: {}",
        sweep.sup_ratio, sweep.growth_top_half, sweep.bounded(1.2)
    );

    let yw = random_dirichlet_scalar(&mut rng, domain.lengths, TimeFactor::window_sin2(1.0, 0.3, 2.0));
    for tau in [0u32, 1] {
        let sweep = parabolic_carleman_check(
            &domain,
            ParabolicKind::Regular { tau },
            &instance(&yw),
            d.clone(),
            t0,
            2.0,
            &geometric_s_grid(4.0, 64.0, 12),
        )?;
        println!(
            "regular kind, tau = {tau}: sup ratio {:.3e}, growth {:.3}, fitted prefactor {:.2}",
            sweep.sup_ratio, sweep.growth_top_half, sweep.prefactor_exponent
        );
    }

    // the regular kind rejects instances with nonzero time-boundary data
    let bad = random_dirichlet_scalar(&mut rng, domain.lengths, TimeFactor::one());
    let err = parabolic_carleman_check(
        &domain,
        ParabolicKind::Regular { tau: 0 },
        &instance(&bad),
        d,
        t0,
        2.0,
        &geometric_s_grid(4.0, 64.0, 6),
    );
    println!("non-vanishing instance rejected: {}", err.is_err());
    Ok(())
}
