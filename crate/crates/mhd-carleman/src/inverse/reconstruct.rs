//! Tikhonov least squares for the source factor: conjugate gradients on the
//! normal equations `(A^T A + reg I) f = A^T data`, matrix-free (one forward
//! and one adjoint solve per iteration).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::inverse::ObsOperator;
use crate::reduce::pairwise_dot;

#[derive(Debug, Clone, Serialize)]
pub struct ReconReport {
    pub iterations: usize,
    pub final_rel_residual: f64,
    pub residual_history: Vec<f64>,
    pub reg: f64,
}

/// Solve the regularized normal equations from a weighted data vector.
/// `data = 0` returns the exact zero field without touching the solver.
pub fn reconstruct_f(
    op: &ObsOperator,
    data_vec: &[f64],
    reg: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(ScalarField, ReconReport)> {
    let n = op.domain().n;
    let rhs = op.apply_t(data_vec)?;
    let bnorm = pairwise_dot(&rhs.data, &rhs.data).sqrt();
    if bnorm == 0.0 {
        return Ok((
            ScalarField::zeros(n),
            ReconReport { iterations: 0, final_rel_residual: 0.0, residual_history: vec![], reg },
        ));
    }
    let normal_apply = |f: &ScalarField| -> Result<ScalarField> {
        let af = op.apply(f)?;
        let mut ataf = op.apply_t(&af)?;
        ataf.axpy(reg, f);
        Ok(ataf)
    };
    let mut x = ScalarField::zeros(n);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs = pairwise_dot(&r.data, &r.data);
    let mut history = vec![rs.sqrt() / bnorm];
    for it in 0..max_iter {
        if rs.sqrt() <= tol * bnorm {
            return Ok((
                x,
                ReconReport {
                    iterations: it,
                    final_rel_residual: rs.sqrt() / bnorm,
                    residual_history: history,
                    reg,
                },
            ));
        }
        let ap = normal_apply(&p)?;
        let pap = pairwise_dot(&p.data, &ap.data);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged(format!(
                "normal-equation CG lost positivity (pAp = {pap:.3e} at iteration {it})"
            )));
        }
        let alpha = rs / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rs_new = pairwise_dot(&r.data, &r.data);
        history.push(rs_new.sqrt() / bnorm);
        let beta = rs_new / rs;
        rs = rs_new;
        let mut p_next = r.clone();
        p_next.axpy(beta, &p);
        p = p_next;
    }
    // stagnation is reported with the full history rather than silently accepted
    Err(Error::SolverDiverged(format!(
        "normal-equation CG stalled at relative residual {:.3e} after {max_iter} iterations \
         (history: first {:.1e}, last {:.1e})",
        rs.sqrt() / bnorm,
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN),
    )))
}
