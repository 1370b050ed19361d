//! Inverse crime: reconstruct the spatial source factor from noiseless
//! full-boundary traces plus the interior snapshot, by conjugate gradients on
//! the normal equations of the weighted observation map.
//!
//! Run with: cargo run --release --example reconstruct_source

use std::sync::Arc;

use mhd_carleman::carleman::trace_norm::HalfNormMode;
use mhd_carleman::field::ScalarField;
use mhd_carleman::geometry::build_box_domain;
use mhd_carleman::inverse::reconstruct::reconstruct_f;
use mhd_carleman::inverse::{ObsMode, ObsOperator};
use mhd_carleman::manufactured::{band_limited_f, CoeffSpecs};
use mhd_carleman::reduce::pairwise_dot;
use mhd_carleman::solver::{ForwardProblem, RProfile, SourceModel};
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
    problem.tol.cg_tol = 1e-14;
    problem.source = Some(SourceModel { r, f: ScalarField::zeros(domain.n) });
    let op = ObsOperator::new(problem, ObsMode::Full, HalfNormMode::Spectral)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(321);
    let f_true = band_limited_f(&mut rng, &domain, 2, 0.6);
    println!("generating noiseless observations of a band-limited source ...");
    let data = op.apply(&f_true)?;
    println!("weighted observation vector: {} entries", data.len());

    let (f_hat, report) = reconstruct_f(&op, &data, 1e-12, 1e-10, 2500)?;
    let mut diff = f_hat.clone();
    diff.axpy(-1.0, &f_true);
    let rel = (pairwise_dot(&diff.data, &diff.data) / pairwise_dot(&f_true.data, &f_true.data)).sqrt();
    println!(
        "CG on the normal equations: {} iterations, residual {:.2e}",
        report.iterations, report.final_rel_residual
    );
    println!("relative L2 reconstruction error: {rel:.3e}");
    Ok(())
}
