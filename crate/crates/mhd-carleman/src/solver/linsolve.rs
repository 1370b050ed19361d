//! Conjugate-gradient solves for the implicit diffusion (Helmholtz) and
//! pressure Poisson systems.

use crate::error::{Error, Result};
use crate::field::{FaceField, ScalarField};
use crate::reduce::{pairwise_dot, pairwise_sum};
use crate::solver::stencil;

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Matrix-free CG for SPD operators. `tol` is relative to `||b||`; a zero
/// right-hand side returns the zero solution immediately.
pub fn cg<A>(apply: A, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgReport)>
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let bnorm = pairwise_dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; b.len()], CgReport { iterations: 0, rel_residual: 0.0 }));
    }
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = pairwise_dot(&r, &r);
    for it in 0..max_iter {
        if rs.sqrt() <= tol * bnorm {
            return Ok((x, CgReport { iterations: it, rel_residual: rs.sqrt() / bnorm }));
        }
        let ap = apply(&p);
        let pap = pairwise_dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged(format!(
                "CG: operator lost positive definiteness (pAp = {pap:.3e} at iter {it})"
            )));
        }
        let alpha = rs / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = pairwise_dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    let rel = rs.sqrt() / bnorm;
    if rel <= tol * 10.0 {
        // Close enough that downstream tolerances still hold; report honestly.
        return Ok((x, CgReport { iterations: max_iter, rel_residual: rel }));
    }
    Err(Error::SolverDiverged(format!(
        "CG: residual {rel:.3e} after {max_iter} iterations (tol {tol:.1e})"
    )))
}

/// Solve `(I - coef * Lap_cell) x = rhs` on the cell lattice (homogeneous core).
pub fn helmholtz_cell(
    n: [usize; 3],
    h: [f64; 3],
    coef: f64,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgReport)> {
    cg(
        |x| {
            let lap = stencil::lap_cell(n, h, x);
            x.iter().zip(&lap).map(|(xi, li)| xi - coef * li).collect()
        },
        rhs,
        tol,
        max_iter,
    )
}

/// Solve `(I - coef * Lap_face_c) x = rhs` for one velocity component.
/// Pinned wall entries of both `rhs` and the solution are zero.
pub fn helmholtz_face(
    n: [usize; 3],
    h: [f64; 3],
    c: usize,
    coef: f64,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgReport)> {
    let d = FaceField::dims(n, c);
    let wall_mask: Vec<bool> = {
        let mut m = vec![false; d[0] * d[1] * d[2]];
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        m[(i * d[1] + j) * d[2] + k] = true;
                    }
                }
            }
        }
        m
    };
    cg(
        |x| {
            let lap = stencil::lap_face(n, h, c, x);
            x.iter()
                .zip(&lap)
                .zip(&wall_mask)
                .map(|((xi, li), &wall)| if wall { *xi } else { xi - coef * li })
                .collect()
        },
        rhs,
        tol,
        max_iter,
    )
}

/// Pressure Poisson solve `-Lap phi = -div_rhs` on the mean-zero subspace.
///
/// The cell Laplacian assembled as `div . grad` with wall-normal faces pinned
/// is the pure-Neumann operator; its kernel (constants) is removed by mean
/// projection of both the right-hand side and the solution.
pub fn poisson_neumann(
    n: [usize; 3],
    h: [f64; 3],
    rhs: &ScalarField,
    tol: f64,
    max_iter: usize,
) -> Result<(ScalarField, CgReport)> {
    let len = rhs.data.len();
    let mean = pairwise_sum(&rhs.data) / len as f64;
    let b: Vec<f64> = rhs.data.iter().map(|v| -(v - mean)).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        let p = ScalarField { n, data: x.to_vec() };
        let g = stencil::grad_to_faces(n, h, &p);
        let div = stencil::div_faces(n, h, &g);
        // -div grad is symmetric positive semidefinite with kernel = constants
        div.data.iter().map(|v| -v).collect()
    };
    let (mut x, rep) = cg(apply, &b, tol, max_iter)?;
    let xm = pairwise_sum(&x) / len as f64;
    for v in &mut x {
        *v -= xm;
    }
    Ok((ScalarField { n, data: x }, rep))
}
