//! The two stability experiments: Lipschitz ratios with full-boundary data
//! and the Hoelder fit with one face unobserved.
//!
//! Run with: cargo run --release --example stability_experiments

use std::sync::Arc;

use mhd_carleman::carleman::trace_norm::HalfNormMode;
use mhd_carleman::field::ScalarField;
use mhd_carleman::geometry::{build_box_domain, Face, SubBoundary};
use mhd_carleman::inverse::experiments::{holder_experiment, lipschitz_experiment, NoiseOptions};
use mhd_carleman::inverse::{ObsMode, ObsOperator};
use mhd_carleman::manufactured::CoeffSpecs;
use mhd_carleman::solver::{ForwardProblem, RProfile, SourceModel};
use mhd_carleman::weights::{build_d, DKind};
use rand::SeedableRng;

fn main() -> mhd_carleman::Result<()> {
    let domain = build_box_domain([1.0; 3], [8, 8, 8], 0.5, 32)?;
    let coeffs = CoeffSpecs::standard(0.12, 0.1).sample(&domain);
    let r = RProfile {
        value: Arc::new(|x: [f64; 3], t: f64| {
            [1.0 + 0.2 * x[0] + 0.1 * t, 0.6 - 0.1 * x[2], 0.8 + 0.15 * x[1]]
        }),
        dt: Arc::new(|_, _| [0.1, 0.0, 0.0]),
        dtt: Arc::new(|_, _| [0.0; 3]),
    };
    let mut problem = ForwardProblem::new(domain.clone(), coeffs);
    problem.t0 = 0.25;
    problem.source = Some(SourceModel { r, f: ScalarField::zeros(domain.n) });

    // full-boundary mode: ratio ||f1 - f2|| / D(data1 - data2) and the
    // noise-response slope
    let op = ObsOperator::new(problem.clone(), ObsMode::Full, HalfNormMode::Spectral)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2025);
    let noise = NoiseOptions { levels: vec![1e-3, 1e-2], ..Default::default() };
    let rep = lipschitz_experiment(&op, 5, &noise, &mut rng)?;
    println!("Lipschitz mode ({} pairs):", rep.samples.len());
    println!("  largest ratio (fitted constant): {:.3e}", rep.lipschitz_c.unwrap());
    let nr = rep.noise.unwrap();
    println!("  noise response {:?} -> errors {:?}", nr.levels, nr.errors);
    println!("  log-log slope: {:.3}", nr.slope);

    // partial mode: one face hidden, observable region from the catalog
    // generator, two-parameter log fit
    let gamma = SubBoundary::all_but(&domain, Face::ZMin);
    let d = build_d(&domain, &gamma, DKind::FaceLinear)?;
    let op = ObsOperator::new(problem, ObsMode::Partial(gamma), HalfNormMode::Spectral)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(777);
    let rep = holder_experiment(&op, &d, 0.1, 8, &mut rng, HalfNormMode::Spectral, 1e-8, true)?;
    let h = rep.holder.unwrap();
    println!("Hoelder mode ({} samples):", rep.samples.len());
    println!("  fitted exponent: {:.3} (clamped {:.3})", h.theta_raw, h.theta_clamped);
    println!("  fit R^2: {:.3}, case split holds: {}", h.r_squared, h.case_split_holds);
    println!("  zero-data control region norm: {:?}", h.zero_branch_floor);
    Ok(())
}
