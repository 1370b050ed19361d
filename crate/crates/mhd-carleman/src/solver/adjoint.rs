//! Exact discrete transpose of the forward map `f -> trajectory outputs`.
//!
//! The forward step is a composition of linear operators (explicit stencils,
//! symmetric Helmholtz solves, the symmetric projection); this module runs the
//! composition backwards. Helmholtz and Poisson solves are self-adjoint, so
//! the reverse sweep reuses the same solvers; the explicit stencils use the
//! hand-written transposes from `stencil`. Valid for the observation setting:
//! zero initial data and homogeneous Dirichlet walls.

use crate::error::{Error, Result};
use crate::field::{FaceField, ScalarField, VecField};
use crate::solver::{
    apply_l1_t, apply_l2_t, interp_c2f_t, source_to_faces_t, stencil, ForwardProblem,
};

/// Cotangent of one trajectory node, expressed against the fields the
/// observation operator actually reads: the cell-interpolated velocity, the
/// magnetic field, and the pressure.
#[derive(Debug, Clone)]
pub struct NodeCotangent {
    pub ucc: VecField,
    pub h: VecField,
    pub p: ScalarField,
}

impl NodeCotangent {
    pub fn zeros(n: [usize; 3]) -> NodeCotangent {
        NodeCotangent { ucc: VecField::zeros(n), h: VecField::zeros(n), p: ScalarField::zeros(n) }
    }
}

/// Transpose of `u_cc = to_cell_vector(u)` followed by wall zeroing.
fn spread_ucc(v: &VecField) -> FaceField {
    let mut f = FaceField::spread_from_cell_vector(v);
    stencil::zero_walls(&mut f);
    f
}

/// Transpose of the explicit momentum terms with respect to `u_cc` and `H`.
fn explicit_u_terms_t(
    problem: &ForwardProblem,
    abar: &VecField,
) -> (VecField /* ucc_bar */, VecField /* h_bar */) {
    let domain = &problem.domain;
    let n = domain.n;
    let hs = domain.h;
    let coeffs = &problem.coeffs;
    let mut ucc_bar = stencil::advect_t(n, hs, &coeffs.b1.vals, abar);
    ucc_bar.axpy(1.0, &stencil::reaction_t(&coeffs.b2.grad, abar));
    let h_bar = apply_l1_t(abar, coeffs, domain);
    (ucc_bar, h_bar)
}

/// Transpose of the explicit induction terms with respect to `u_cc` and `H`.
fn explicit_h_terms_t(
    problem: &ForwardProblem,
    abar: &VecField,
) -> (VecField /* ucc_bar */, VecField /* h_bar */) {
    let domain = &problem.domain;
    let n = domain.n;
    let hs = domain.h;
    let coeffs = &problem.coeffs;
    let mut h_bar = stencil::advect_t(n, hs, &coeffs.d1.vals, abar);
    h_bar.axpy(1.0, &stencil::reaction_t(&coeffs.d2.grad, abar));
    let ucc_bar = apply_l2_t(abar, coeffs, domain);
    (ucc_bar, h_bar)
}

/// Accumulate `f_bar = (d outputs / d f)^T . cots` by a reverse time sweep.
///
/// `cots[k]` is the cotangent injected at node `k` (0..=nt). The problem must
/// use zero initial data and homogeneous walls; the source profile `R` must be
/// present (it defines the `f -> forcing` map being transposed).
pub fn adjoint_source_gradient(
    problem: &ForwardProblem,
    cots: &[NodeCotangent],
) -> Result<ScalarField> {
    let domain = &problem.domain;
    if !problem.bc.is_homogeneous() {
        return Err(Error::Hypothesis("adjoint sweep requires homogeneous walls".into()));
    }
    if !matches!(problem.initial, crate::solver::InitialData::Zero) {
        return Err(Error::Hypothesis("adjoint sweep requires zero initial data".into()));
    }
    let src = problem
        .source
        .as_ref()
        .ok_or_else(|| Error::Hypothesis("adjoint sweep needs a source model".into()))?;
    if cots.len() != domain.nt + 1 {
        return Err(Error::DomainMismatch(format!(
            "expected {} node cotangents, got {}",
            domain.nt + 1,
            cots.len()
        )));
    }
    let n = domain.n;
    let hs = domain.h;
    let dt = domain.dt();
    let tol = &problem.tol;

    let mut fbar = ScalarField::zeros(n);
    // running cotangents of the state at the node being processed
    let mut ubar = spread_ucc(&cots[domain.nt].ucc);
    let mut hbar = cots[domain.nt].h.clone();
    let mut pbar = cots[domain.nt].p.clone();

    for k in (0..domain.nt).rev() {
        let t_k = domain.time_node(k);

        // --- transpose of the projection + pressure output ---
        // u^{k+1} = P u*, p^{k+1} = PN(div u*)/dt with PN = poisson_neumann.
        // w = P ubar - grad(PN(pbar))/dt is the cotangent of u*.
        let mut w = {
            let (proj, _) = crate::solver::project_div_free(domain, &ubar, tol)?;
            proj
        };
        if crate::reduce::max_abs(&pbar.data) > 0.0 {
            let pn = crate::solver::dct::poisson_dct(n, hs, &pbar);
            let g = stencil::grad_to_faces(n, hs, &pn);
            w.axpy(-1.0 / dt, &g);
        }

        // --- transpose of the componentwise Helmholtz solves (direct,
        // exactly self-adjoint) ---
        let mut g = FaceField::zeros(n);
        for c in 0..3 {
            g.comp[c] =
                crate::solver::dct::helmholtz_face_dst(n, hs, c, problem.coeffs.nu * dt, &w.comp[c]);
        }
        stencil::zero_walls(&mut g);

        // --- transpose of rhs_u = Z u^k - dt interp(adv) + dt S_k f ---
        let mut ubar_prev = g.clone();
        let abar = interp_c2f_t(&g).scaled(-dt);
        let (ucc_from_u, h_from_u) = explicit_u_terms_t(problem, &abar);
        ubar_prev.axpy(1.0, &spread_ucc(&ucc_from_u));
        let mut hbar_prev = h_from_u;
        fbar.axpy(dt, &source_to_faces_t(domain, &src.r, &g, t_k));

        // --- transpose of the induction update ---
        let mut gh = VecField::zeros(n);
        for c in 0..3 {
            gh.comp[c] = crate::solver::dct::helmholtz_cell_dst(
                n,
                hs,
                problem.coeffs.kappa * dt,
                &hbar.comp[c],
            );
        }
        hbar_prev.axpy(1.0, &gh);
        let abar_h = gh.scaled(-dt);
        let (ucc_from_h, h_from_h) = explicit_h_terms_t(problem, &abar_h);
        ubar_prev.axpy(1.0, &spread_ucc(&ucc_from_h));
        hbar_prev.axpy(1.0, &h_from_h);

        // inject the node-k observation cotangent
        ubar = ubar_prev;
        ubar.axpy(1.0, &spread_ucc(&cots[k].ucc));
        hbar = hbar_prev;
        hbar.axpy(1.0, &cots[k].h);
        pbar = cots[k].p.clone();
    }

    // node 0: zero initial data kills ubar/hbar; p^0 = PN(div(S_0 f)).
    if crate::reduce::max_abs(&pbar.data) > 0.0 {
        let pn = crate::solver::dct::poisson_dct(n, hs, &pbar);
        let g = stencil::grad_to_faces(n, hs, &pn).scaled(-1.0);
        fbar.axpy(1.0, &source_to_faces_t(domain, &src.r, &g, domain.time_node(0)));
    }
    Ok(fbar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_box_domain;
    use crate::reduce::pairwise_dot;
    use crate::solver::{solve_trajectory, CoeffField, CoefficientSet, RProfile, SourceModel};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn rand_scalar(rng: &mut rand_chacha::ChaCha8Rng, n: [usize; 3]) -> ScalarField {
        let mut f = ScalarField::zeros(n);
        for v in f.data.iter_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        f
    }

    fn rand_vecfield(rng: &mut rand_chacha::ChaCha8Rng, n: [usize; 3]) -> VecField {
        let mut f = VecField::zeros(n);
        for c in 0..3 {
            for v in f.comp[c].iter_mut() {
                *v = rng.random::<f64>() - 0.5;
            }
        }
        f
    }

    /// <outputs(f), cots> = <f, adjoint(cots)> through the full time loop.
    #[test]
    fn full_sweep_adjoint_identity() {
        let domain = build_box_domain([1.0; 3], [4, 4, 4], 0.5, 6).unwrap();
        let mut coeffs = CoefficientSet::diffusion_only(&domain, 0.08, 0.05);
        coeffs.b1 = CoeffField::constant(&domain, [0.4, -0.2, 0.1]);
        coeffs.b2 = CoeffField::from_analytic(
            &domain,
            |x| [0.1 * x[1], -0.2 * x[2], 0.15 * x[0]],
            |_| [[0.0, 0.1, 0.0], [0.0, 0.0, -0.2], [0.15, 0.0, 0.0]],
        );
        coeffs.c1 = CoeffField::constant(&domain, [0.2, 0.1, -0.1]);
        coeffs.c3 = CoeffField::from_analytic(
            &domain,
            |x| [0.1 * x[0], 0.05 * x[1], -0.1 * x[2]],
            |_| [[0.1, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, -0.1]],
        );
        coeffs.c4 = CoeffField::constant(&domain, [-0.15, 0.2, 0.1]);
        coeffs.c5 = CoeffField::from_analytic(
            &domain,
            |x| [0.08 * x[2], 0.0, 0.12 * x[0]],
            |_| [[0.0, 0.0, 0.08], [0.0; 3], [0.12, 0.0, 0.0]],
        );
        coeffs.d1 = CoeffField::constant(&domain, [0.1, -0.3, 0.2]);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let f = rand_scalar(&mut rng, domain.n);
        let r = RProfile {
            value: Arc::new(|x: [f64; 3], t: f64| {
                [1.0 + 0.3 * x[0] + 0.2 * t, 0.5 - 0.1 * x[2], 0.8 + 0.2 * x[1] * t]
            }),
            dt: Arc::new(|x, _| [0.2, 0.0, 0.2 * x[1]]),
            dtt: Arc::new(|_, _| [0.0; 3]),
        };

        let mut problem = crate::solver::ForwardProblem::new(domain.clone(), coeffs);
        problem.source = Some(SourceModel { r, f: f.clone() });
        problem.tol.cg_tol = 1e-14;

        let traj = solve_trajectory(&problem).unwrap();

        let cots: Vec<NodeCotangent> = (0..=domain.nt)
            .map(|_| NodeCotangent {
                ucc: rand_vecfield(&mut rng, domain.n),
                h: rand_vecfield(&mut rng, domain.n),
                p: rand_scalar(&mut rng, domain.n),
            })
            .collect();

        // <outputs, cots>
        let mut lhs = 0.0;
        for (k, state) in traj.states.iter().enumerate() {
            let ucc = state.u.to_cell_vector();
            for c in 0..3 {
                lhs += pairwise_dot(&ucc.comp[c], &cots[k].ucc.comp[c]);
                lhs += pairwise_dot(&state.h.comp[c], &cots[k].h.comp[c]);
            }
            lhs += pairwise_dot(&state.p.data, &cots[k].p.data);
        }

        let fbar = adjoint_source_gradient(&problem, &cots).unwrap();
        let rhs = pairwise_dot(&f.data, &fbar.data);
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        assert!(
            ((lhs - rhs) / scale).abs() < 1e-10,
            "adjoint identity violated: {lhs} vs {rhs} (rel {})",
            ((lhs - rhs) / scale).abs()
        );
    }
}
