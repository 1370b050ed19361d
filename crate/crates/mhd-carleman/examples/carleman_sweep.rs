//! Ratio sweeps of the two weighted system estimates on manufactured
//! solutions: bounded LHS/RHS ratios over the large-parameter range.
//!
//! Run with: cargo run --release --example carleman_sweep

use std::sync::Arc;

use mhd_carleman::carleman::sweeps::*;
use mhd_carleman::carleman::trace_norm::HalfNormMode;
use mhd_carleman::cli::manufactured_system_instance;
use mhd_carleman::geometry::{build_box_domain, Face, SubBoundary};
use mhd_carleman::manufactured::CoeffSpecs;
use mhd_carleman::weights::{build_d, DKind};
use rand::SeedableRng;

fn main() -> mhd_carleman::Result<()> {
    let domain = build_box_domain([1.0; 3], [12, 12, 12], 1.0, 48)?;
    let gamma = SubBoundary::all_but(&domain, Face::ZMin);
    let d = Arc::new(build_d(&domain, &gamma, DKind::FaceLinear)?);
    let coeffs = CoeffSpecs::standard(0.2, 0.15);
    let t0 = 0.5;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);

    let inst = manufactured_system_instance(&domain, &coeffs, &mut rng, t0, false);
    let sweep = sweep_theorem(
        TheoremKind::SingularDivFree,
        &inst,
        d.clone(),
        t0,
        None,
        1.0,
        &geometric_s_grid(2.0, 24.0, 12),
        HalfNormMode::Spectral,
    )?;
    println!("singular weight (solenoidal instance, hypothesis residuals: div {:.1e}, eq {:.1e}):",
        sweep.hypothesis.div_linf, sweep.hypothesis.momentum_residual_rel);
    for i in 0..sweep.s_values.len() {
        println!("  s = {:6.2}: ratio = {:.3e}", sweep.s_values[i], sweep.ratio[i]);
    }
    println!("  growth over top half: {:.3} (bounded at 1.2: {})\n", sweep.growth_top_half, sweep.bounded(1.2));

    let inst = manufactured_system_instance(&domain, &coeffs, &mut rng, t0, true);
    let sweep = sweep_theorem(
        TheoremKind::RegularZeroTimeBoundary,
        &inst,
        d,
        t0,
        None,
        2.0,
        &geometric_s_grid(4.0, 64.0, 12),
        HalfNormMode::Spectral,
    )?;
    println!("regular weight (zero time-boundary instance):");
    for i in 0..sweep.s_values.len() {
        println!("  s = {:6.2}: ratio = {:.3e}", sweep.s_values[i], sweep.ratio[i]);
    }
    println!(
        "  growth over top half: {:.3}, fitted trace prefactor slope: {:.2}",
        sweep.growth_top_half, sweep.prefactor_exponent
    );
    Ok(())
}
