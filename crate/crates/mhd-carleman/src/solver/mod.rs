//! Forward solver for the linearized incompressible MHD system on a MAC
//! staggered grid.
//!
//! Velocity components live on faces, pressure and the magnetic field at cell
//! centers. Time stepping is first-order IMEX: diffusion implicit (Helmholtz
//! solves), advection/coupling/source explicit, followed by a pressure
//! projection that enforces the discrete divergence constraint.

pub mod adjoint;
pub mod dct;
pub mod linsolve;
pub mod stencil;
pub mod traces;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{FaceField, ScalarField, VecField};
use crate::geometry::Domain;
use crate::reduce::pairwise_sum_indexed;

pub use traces::{SnapshotData, TraceBundle};

pub type VecClosure = Arc<dyn Fn([f64; 3], f64) -> [f64; 3] + Send + Sync>;

/// One vector coefficient field with analytic gradients, sampled at cells.
#[derive(Debug, Clone)]
pub struct CoeffField {
    pub vals: [Vec<f64>; 3],
    /// grad[m][d] = d_d (component m).
    pub grad: [[Vec<f64>; 3]; 3],
    pub max_abs: [f64; 3],
}

impl CoeffField {
    pub fn from_analytic<V, G>(domain: &Domain, value: V, gradient: G) -> CoeffField
    where
        V: Fn([f64; 3]) -> [f64; 3],
        G: Fn([f64; 3]) -> [[f64; 3]; 3],
    {
        let n = domain.n;
        let nc = domain.cell_count();
        let mut vals: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; nc]);
        let mut grad: [[Vec<f64>; 3]; 3] =
            std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; nc]));
        let mut max_abs = [0.0f64; 3];
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let id = domain.cell_index(i, j, k);
                    let x = domain.cell_center(i, j, k);
                    let v = value(x);
                    let g = gradient(x);
                    for m in 0..3 {
                        vals[m][id] = v[m];
                        max_abs[m] = max_abs[m].max(v[m].abs());
                        for d in 0..3 {
                            grad[m][d][id] = g[m][d];
                        }
                    }
                }
            }
        }
        CoeffField { vals, grad, max_abs }
    }

    pub fn zero(domain: &Domain) -> CoeffField {
        Self::from_analytic(domain, |_| [0.0; 3], |_| [[0.0; 3]; 3])
    }

    pub fn constant(domain: &Domain, v: [f64; 3]) -> CoeffField {
        Self::from_analytic(domain, move |_| v, |_| [[0.0; 3]; 3])
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs.iter().all(|&m| m == 0.0)
    }
}

/// All coefficients of the linearized system. Time-independent by default so
/// that the time-differentiated systems share them.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub nu: f64,
    pub kappa: f64,
    pub b1: CoeffField,
    pub b2: CoeffField,
    pub c1: CoeffField,
    pub c2: CoeffField,
    pub c3: CoeffField,
    pub c4: CoeffField,
    pub c5: CoeffField,
    pub d1: CoeffField,
    pub d2: CoeffField,
}

impl CoefficientSet {
    pub fn diffusion_only(domain: &Domain, nu: f64, kappa: f64) -> CoefficientSet {
        let z = || CoeffField::zero(domain);
        CoefficientSet {
            nu,
            kappa,
            b1: z(),
            b2: z(),
            c1: z(),
            c2: z(),
            c3: z(),
            c4: z(),
            c5: z(),
            d1: z(),
            d2: z(),
        }
    }

    /// Max advective speed per axis over the first-order transport terms.
    pub fn max_advection(&self) -> [f64; 3] {
        let mut m = [0.0f64; 3];
        for f in [&self.b1, &self.c1, &self.c4, &self.d1] {
            for a in 0..3 {
                m[a] = m[a].max(f.max_abs[a]);
            }
        }
        m
    }
}

/// Known space-time profile `R` of the source `R f`, with analytic time
/// derivatives (used by the data-norm bundles).
#[derive(Clone)]
pub struct RProfile {
    pub value: VecClosure,
    pub dt: VecClosure,
    pub dtt: VecClosure,
}

impl std::fmt::Debug for RProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RProfile { .. }")
    }
}

impl RProfile {
    pub fn constant(v: [f64; 3]) -> RProfile {
        RProfile {
            value: Arc::new(move |_, _| v),
            dt: Arc::new(|_, _| [0.0; 3]),
            dtt: Arc::new(|_, _| [0.0; 3]),
        }
    }
}

/// `R(x,t) f(x)` source model: the unknown of the inverse problem is `f`.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub r: RProfile,
    pub f: ScalarField,
}

/// True iff `min_x |R(x, t0)| > 0`; also returns that minimum magnitude.
pub fn check_r_assumption(r: &RProfile, domain: &Domain, t0: f64) -> (bool, f64) {
    let mut min_mag = f64::INFINITY;
    for i in 0..domain.n[0] {
        for j in 0..domain.n[1] {
            for k in 0..domain.n[2] {
                let v = (r.value)(domain.cell_center(i, j, k), t0);
                let mag = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                min_mag = min_mag.min(mag);
            }
        }
    }
    (min_mag > 0.0, min_mag)
}

/// Dirichlet boundary data for the forward run.
#[derive(Clone)]
pub enum Bc {
    Homogeneous,
    Analytic { u: VecClosure, h: VecClosure },
}

impl std::fmt::Debug for Bc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bc::Homogeneous => f.write_str("Bc::Homogeneous"),
            Bc::Analytic { .. } => f.write_str("Bc::Analytic { .. }"),
        }
    }
}

impl Bc {
    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Bc::Homogeneous)
    }

    pub fn u_at(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        match self {
            Bc::Homogeneous => [0.0; 3],
            Bc::Analytic { u, .. } => u(x, t),
        }
    }

    pub fn h_at(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        match self {
            Bc::Homogeneous => [0.0; 3],
            Bc::Analytic { h, .. } => h(x, t),
        }
    }
}

#[derive(Clone)]
pub enum InitialData {
    Zero,
    Analytic { u: VecClosure, h: VecClosure },
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialData::Zero => f.write_str("InitialData::Zero"),
            InitialData::Analytic { .. } => f.write_str("InitialData::Analytic { .. }"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Max-norm bound the discrete divergence must satisfy after projection.
    pub div_tol: f64,
    pub cfl_safety: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { cg_tol: 1e-13, cg_max_iter: 20_000, div_tol: 1e-10, cfl_safety: 0.95 }
    }
}

/// Full description of a forward run.
#[derive(Clone)]
pub struct ForwardProblem {
    pub domain: Domain,
    pub coeffs: CoefficientSet,
    pub source: Option<SourceModel>,
    /// Extra momentum forcing (manufactured solutions).
    pub f_extra: Option<VecClosure>,
    /// Extra induction forcing.
    pub g_extra: Option<VecClosure>,
    pub bc: Bc,
    pub initial: InitialData,
    pub t0: f64,
    pub tol: Tolerances,
}

impl ForwardProblem {
    pub fn new(domain: Domain, coeffs: CoefficientSet) -> ForwardProblem {
        let t0 = domain.t_final / 2.0;
        ForwardProblem {
            domain,
            coeffs,
            source: None,
            f_extra: None,
            g_extra: None,
            bc: Bc::Homogeneous,
            initial: InitialData::Zero,
            t0,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct State {
    pub u: FaceField,
    pub p: ScalarField,
    pub h: VecField,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub domain: Domain,
    pub states: Vec<State>,
    pub max_div: f64,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.domain.dt()
    }

    pub fn state(&self, node: usize) -> &State {
        &self.states[node]
    }
}

/// `L1(H) = (C1 . grad) H + (H . grad) C2 + grad (C3 . H)`, cell lattice,
/// homogeneous ghost core.
pub fn apply_l1(h_field: &VecField, coeffs: &CoefficientSet, domain: &Domain) -> VecField {
    let n = domain.n;
    let hs = domain.h;
    let mut out = stencil::advect(n, hs, &coeffs.c1.vals, h_field);
    out.axpy(1.0, &stencil::reaction(&coeffs.c2.grad, h_field));
    out.axpy(1.0, &stencil::grad_of_dot(n, hs, &coeffs.c3.vals, &coeffs.c3.grad, h_field));
    out
}

/// `L2(u) = (C4 . grad) u + (u . grad) C5` on the cell lattice.
pub fn apply_l2(u_cc: &VecField, coeffs: &CoefficientSet, domain: &Domain) -> VecField {
    let mut out = stencil::advect(domain.n, domain.h, &coeffs.c4.vals, u_cc);
    out.axpy(1.0, &stencil::reaction(&coeffs.c5.grad, u_cc));
    out
}

/// Transposes of the coupling operators (homogeneous core).
pub fn apply_l1_t(v: &VecField, coeffs: &CoefficientSet, domain: &Domain) -> VecField {
    let n = domain.n;
    let hs = domain.h;
    let mut out = stencil::advect_t(n, hs, &coeffs.c1.vals, v);
    out.axpy(1.0, &stencil::reaction_t(&coeffs.c2.grad, v));
    out.axpy(1.0, &stencil::grad_of_dot_t(n, hs, &coeffs.c3.vals, &coeffs.c3.grad, v));
    out
}

pub fn apply_l2_t(v: &VecField, coeffs: &CoefficientSet, domain: &Domain) -> VecField {
    let mut out = stencil::advect_t(domain.n, domain.h, &coeffs.c4.vals, v);
    out.axpy(1.0, &stencil::reaction_t(&coeffs.c5.grad, v));
    out
}

/// Interpolate a cell vector to interior faces (walls get zero).
pub fn interp_c2f(v: &VecField) -> FaceField {
    let n = v.n;
    let mut out = FaceField::zeros(n);
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        continue;
                    }
                    let mut lo = p;
                    lo[c] -= 1;
                    let id = out.fidx(c, i, j, k);
                    out.comp[c][id] = 0.5
                        * (v.comp[c][v.idx(lo[0], lo[1], lo[2])]
                            + v.comp[c][v.idx(p[0], p[1], p[2])]);
                }
            }
        }
    }
    out
}

/// Transpose of `interp_c2f`.
pub fn interp_c2f_t(u: &FaceField) -> VecField {
    let n = u.n;
    let mut out = VecField::zeros(n);
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        continue;
                    }
                    let val = 0.5 * u.comp[c][u.fidx(c, i, j, k)];
                    let mut lo = p;
                    lo[c] -= 1;
                    let idlo = out.idx(lo[0], lo[1], lo[2]);
                    let idhi = out.idx(p[0], p[1], p[2]);
                    out.comp[c][idlo] += val;
                    out.comp[c][idhi] += val;
                }
            }
        }
    }
    out
}

/// Sample the `R f` source onto interior faces at time `t` (f is averaged to
/// the face, R is evaluated at the face center).
pub fn source_to_faces(domain: &Domain, r: &RProfile, f: &ScalarField, t: f64) -> FaceField {
    let n = domain.n;
    let mut out = FaceField::zeros(n);
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        continue;
                    }
                    let mut lo = p;
                    lo[c] -= 1;
                    let favg = 0.5 * (f.at(lo[0], lo[1], lo[2]) + f.at(p[0], p[1], p[2]));
                    let mut x = domain.cell_center(p[0], p[1], p[2]);
                    x[c] = p[c] as f64 * domain.h[c];
                    let rv = (r.value)(x, t);
                    let id = out.fidx(c, i, j, k);
                    out.comp[c][id] = rv[c] * favg;
                }
            }
        }
    }
    out
}

/// Transpose of `source_to_faces` with respect to `f`.
pub fn source_to_faces_t(domain: &Domain, r: &RProfile, ubar: &FaceField, t: f64) -> ScalarField {
    let n = domain.n;
    let mut out = ScalarField::zeros(n);
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        continue;
                    }
                    let mut lo = p;
                    lo[c] -= 1;
                    let mut x = domain.cell_center(p[0], p[1], p[2]);
                    x[c] = p[c] as f64 * domain.h[c];
                    let rv = (r.value)(x, t);
                    let w = 0.5 * rv[c] * ubar.comp[c][ubar.fidx(c, i, j, k)];
                    let idlo = out.idx(lo[0], lo[1], lo[2]);
                    let idhi = out.idx(p[0], p[1], p[2]);
                    out.data[idlo] += w;
                    out.data[idhi] += w;
                }
            }
        }
    }
    out
}

/// Dirichlet corrections for the advection stencils of the explicit terms.
fn advect_bc_add(
    domain: &Domain,
    coef: &CoeffField,
    wall: &dyn Fn(usize, bool, usize, usize) -> [f64; 3],
    out: &mut VecField,
) {
    let n = domain.n;
    for m in 0..3 {
        for d in 0..3 {
            let mut corr = vec![0.0; out.comp[m].len()];
            stencil::dcell_bc_add(
                n,
                domain.h,
                d,
                |a, b| wall(d, true, a, b)[m],
                |a, b| wall(d, false, a, b)[m],
                &mut corr,
            );
            for (o, (cv, cr)) in out.comp[m].iter_mut().zip(coef.vals[d].iter().zip(&corr)) {
                *o += cv * cr;
            }
        }
    }
}

/// Dirichlet corrections for the finite-difference part of `grad (C3 . H)`.
fn grad_of_dot_bc_add(
    domain: &Domain,
    coef: &CoeffField,
    wall: &dyn Fn(usize, bool, usize, usize) -> [f64; 3],
    out: &mut VecField,
) {
    let n = domain.n;
    for m in 0..3 {
        for d in 0..3 {
            let mut corr = vec![0.0; out.comp[m].len()];
            stencil::dcell_bc_add(
                n,
                domain.h,
                m,
                |a, b| wall(m, true, a, b)[d],
                |a, b| wall(m, false, a, b)[d],
                &mut corr,
            );
            for (o, (cv, cr)) in out.comp[m].iter_mut().zip(coef.vals[d].iter().zip(&corr)) {
                *o += cv * cr;
            }
        }
    }
}

/// Wall sampler at cell-wall positions for a vector closure.
fn wall_sampler<'a>(
    domain: &'a Domain,
    g: &'a (dyn Fn([f64; 3], f64) -> [f64; 3] + Send + Sync),
    t: f64,
) -> impl Fn(usize, bool, usize, usize) -> [f64; 3] + 'a {
    move |axis: usize, is_min: bool, a: usize, b: usize| {
        let (ta, tb) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut x = [0.0; 3];
        x[axis] = if is_min { 0.0 } else { domain.lengths[axis] };
        x[ta] = (a as f64 + 0.5) * domain.h[ta];
        x[tb] = (b as f64 + 0.5) * domain.h[tb];
        g(x, t)
    }
}

/// Explicit momentum terms at cells: advection + reaction + magnetic coupling.
fn explicit_u_terms(
    domain: &Domain,
    coeffs: &CoefficientSet,
    u_cc: &VecField,
    h_field: &VecField,
    bc: &Bc,
    t: f64,
) -> VecField {
    let n = domain.n;
    let hs = domain.h;
    let mut adv = stencil::advect(n, hs, &coeffs.b1.vals, u_cc);
    adv.axpy(1.0, &stencil::reaction(&coeffs.b2.grad, u_cc));
    adv.axpy(1.0, &apply_l1(h_field, coeffs, domain));
    if let Bc::Analytic { u, h } = bc {
        let uw = wall_sampler(domain, u.as_ref(), t);
        advect_bc_add(domain, &coeffs.b1, &uw, &mut adv);
        let hw = wall_sampler(domain, h.as_ref(), t);
        advect_bc_add(domain, &coeffs.c1, &hw, &mut adv);
        grad_of_dot_bc_add(domain, &coeffs.c3, &hw, &mut adv);
    }
    adv
}

/// Explicit induction terms at cells.
fn explicit_h_terms(
    domain: &Domain,
    coeffs: &CoefficientSet,
    u_cc: &VecField,
    h_field: &VecField,
    bc: &Bc,
    t: f64,
) -> VecField {
    let n = domain.n;
    let hs = domain.h;
    let mut adv = stencil::advect(n, hs, &coeffs.d1.vals, h_field);
    adv.axpy(1.0, &stencil::reaction(&coeffs.d2.grad, h_field));
    adv.axpy(1.0, &apply_l2(u_cc, coeffs, domain));
    if let Bc::Analytic { u, h } = bc {
        let hw = wall_sampler(domain, h.as_ref(), t);
        advect_bc_add(domain, &coeffs.d1, &hw, &mut adv);
        let uw = wall_sampler(domain, u.as_ref(), t);
        advect_bc_add(domain, &coeffs.c4, &uw, &mut adv);
    }
    adv
}

pub fn sample_face_closure(domain: &Domain, g: &VecClosure, t: f64) -> FaceField {
    let n = domain.n;
    let mut out = FaceField::zeros(n);
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        continue;
                    }
                    let mut x = domain.cell_center(
                        p[0].min(n[0] - 1),
                        p[1].min(n[1] - 1),
                        p[2].min(n[2] - 1),
                    );
                    x[c] = p[c] as f64 * domain.h[c];
                    let id = out.fidx(c, i, j, k);
                    out.comp[c][id] = g(x, t)[c];
                }
            }
        }
    }
    out
}

pub fn sample_cell_closure(domain: &Domain, g: &VecClosure, t: f64) -> VecField {
    let n = domain.n;
    let mut out = VecField::zeros(n);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let id = out.idx(i, j, k);
                let v = g(domain.cell_center(i, j, k), t);
                for c in 0..3 {
                    out.comp[c][id] = v[c];
                }
            }
        }
    }
    out
}

/// Set the pinned wall-normal faces of `u` from the boundary data at time `t`.
pub fn impose_normal_bc(domain: &Domain, u: &mut FaceField, bc: &Bc, t: f64) {
    let n = domain.n;
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] != 0 && p[c] != d[c] - 1 {
                        continue;
                    }
                    let (ta, tb) = ((c + 1) % 3, (c + 2) % 3);
                    let mut x = [0.0; 3];
                    x[c] = p[c] as f64 * domain.h[c];
                    x[ta] = (p[ta] as f64 + 0.5) * domain.h[ta];
                    x[tb] = (p[tb] as f64 + 0.5) * domain.h[tb];
                    let id = u.fidx(c, i, j, k);
                    u.comp[c][id] = bc.u_at(x, t)[c];
                }
            }
        }
    }
}

/// Dirichlet contributions to the face Helmholtz right-hand side at time `t`.
fn helmholtz_face_bc_rhs(domain: &Domain, c: usize, bc: &Bc, t: f64, coef: f64) -> Vec<f64> {
    let n = domain.n;
    let hs = domain.h;
    let d = FaceField::dims(n, c);
    let mut out = vec![0.0; d[0] * d[1] * d[2]];
    if bc.is_homogeneous() {
        return out;
    }
    let face_pos = |p: [usize; 3]| -> [f64; 3] {
        let mut x = [0.0; 3];
        x[c] = p[c] as f64 * hs[c];
        let (ta, tb) = ((c + 1) % 3, (c + 2) % 3);
        x[ta] = (p[ta] as f64 + 0.5) * hs[ta];
        x[tb] = (p[tb] as f64 + 0.5) * hs[tb];
        x
    };
    for i in 0..d[0] {
        for j in 0..d[1] {
            for k in 0..d[2] {
                let p = [i, j, k];
                if p[c] == 0 || p[c] == d[c] - 1 {
                    continue;
                }
                let id = (i * d[1] + j) * d[2] + k;
                if p[c] == 1 {
                    let mut q = p;
                    q[c] = 0;
                    out[id] += bc.u_at(face_pos(q), t)[c] * coef / (hs[c] * hs[c]);
                }
                if p[c] == d[c] - 2 {
                    let mut q = p;
                    q[c] = d[c] - 1;
                    out[id] += bc.u_at(face_pos(q), t)[c] * coef / (hs[c] * hs[c]);
                }
                for a in 0..3 {
                    if a == c {
                        continue;
                    }
                    if p[a] == 0 || p[a] == d[a] - 1 {
                        let mut x = face_pos(p);
                        x[a] = if p[a] == 0 { 0.0 } else { domain.lengths[a] };
                        out[id] += 2.0 * bc.u_at(x, t)[c] * coef / (hs[a] * hs[a]);
                    }
                }
            }
        }
    }
    out
}

/// Dirichlet contributions to the cell Helmholtz right-hand side for H.
fn helmholtz_cell_bc_rhs(domain: &Domain, bc: &Bc, t: f64, coef: f64, comp: usize) -> Vec<f64> {
    let n = domain.n;
    let mut out = vec![0.0; domain.cell_count()];
    if bc.is_homogeneous() {
        return out;
    }
    stencil::lap_cell_bc_add(
        n,
        domain.h,
        |axis, is_min, a, b| {
            let (ta, tb) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut x = [0.0; 3];
            x[axis] = if is_min { 0.0 } else { domain.lengths[axis] };
            x[ta] = (a as f64 + 0.5) * domain.h[ta];
            x[tb] = (b as f64 + 0.5) * domain.h[tb];
            bc.h_at(x, t)[comp] * coef
        },
        &mut out,
    );
    out
}

pub struct StepDiagnostics {
    pub div_linf: f64,
    pub cg_iterations: usize,
}

/// Project a face field onto the discrete divergence-free space; returns the
/// projected field and the pressure-like potential (mean zero).
pub fn project_div_free(
    domain: &Domain,
    u_star: &FaceField,
    tol: &Tolerances,
) -> Result<(FaceField, ScalarField)> {
    let n = domain.n;
    let hs = domain.h;
    let _ = tol;
    let div = stencil::div_faces(n, hs, u_star);
    let phi = dct::poisson_dct(n, hs, &div);
    let grad = stencil::grad_to_faces(n, hs, &phi);
    let mut u = u_star.clone();
    u.axpy(-1.0, &grad);
    Ok((u, phi))
}

/// One IMEX step from `state.t` to `state.t + dt`.
pub fn step_forward(
    problem: &ForwardProblem,
    state: &State,
    dt: f64,
) -> Result<(State, StepDiagnostics)> {
    let domain = &problem.domain;
    let n = domain.n;
    let hs = domain.h;
    let t_old = state.t;
    let t_new = t_old + dt;

    let adv = problem.coeffs.max_advection();
    for a in 0..3 {
        if dt * adv[a] / hs[a] > problem.tol.cfl_safety {
            return Err(Error::Cfl(format!(
                "dt = {dt:.3e} violates the advective bound on axis {a}: \
                 speed {:.3e}, h = {:.3e}",
                adv[a], hs[a]
            )));
        }
    }

    let u_cc = state.u.to_cell_vector();

    // --- momentum predictor ---
    let adv_u = explicit_u_terms(domain, &problem.coeffs, &u_cc, &state.h, &problem.bc, t_old);
    let mut rhs_u = state.u.clone();
    stencil::zero_walls(&mut rhs_u);
    rhs_u.axpy(-dt, &interp_c2f(&adv_u));
    if let Some(src) = &problem.source {
        rhs_u.axpy(dt, &source_to_faces(domain, &src.r, &src.f, t_old));
    }
    if let Some(fx) = &problem.f_extra {
        rhs_u.axpy(dt, &sample_face_closure(domain, fx, t_old));
    }

    let mut u_star = FaceField::zeros(n);
    let iters = 0usize;
    for c in 0..3 {
        let mut rhs_c = rhs_u.comp[c].clone();
        let bc_terms = helmholtz_face_bc_rhs(domain, c, &problem.bc, t_new, problem.coeffs.nu * dt);
        for (r, b) in rhs_c.iter_mut().zip(&bc_terms) {
            *r += b;
        }
        u_star.comp[c] = dct::helmholtz_face_dst(n, hs, c, problem.coeffs.nu * dt, &rhs_c);
    }
    impose_normal_bc(domain, &mut u_star, &problem.bc, t_new);

    // --- projection ---
    let (u_new, phi) = project_div_free(domain, &u_star, &problem.tol)?;
    let p_new = phi.scaled(1.0 / dt);
    let div_after = stencil::div_faces(n, hs, &u_new);
    let div_linf = crate::reduce::max_abs(&div_after.data);
    if div_linf > problem.tol.div_tol {
        return Err(Error::SolverDiverged(format!(
            "projection left div u = {div_linf:.3e} > {:.1e}",
            problem.tol.div_tol
        )));
    }

    // --- induction update ---
    let adv_h = explicit_h_terms(domain, &problem.coeffs, &u_cc, &state.h, &problem.bc, t_old);
    let mut rhs_h = state.h.clone();
    rhs_h.axpy(-dt, &adv_h);
    if let Some(gx) = &problem.g_extra {
        rhs_h.axpy(dt, &sample_cell_closure(domain, gx, t_old));
    }
    let mut h_new = VecField::zeros(n);
    for c in 0..3 {
        let mut rhs_c = rhs_h.comp[c].clone();
        let bc_terms =
            helmholtz_cell_bc_rhs(domain, &problem.bc, t_new, problem.coeffs.kappa * dt, c);
        for (r, b) in rhs_c.iter_mut().zip(&bc_terms) {
            *r += b;
        }
        h_new.comp[c] = dct::helmholtz_cell_dst(n, hs, problem.coeffs.kappa * dt, &rhs_c);
    }

    Ok((
        State { u: u_new, p: p_new, h: h_new, t: t_new },
        StepDiagnostics { div_linf, cg_iterations: iters },
    ))
}

/// Assemble the initial state: sample (or zero) fields, impose boundary data,
/// project the velocity, and solve a consistent initial pressure.
pub fn initial_state(problem: &ForwardProblem) -> Result<State> {
    let domain = &problem.domain;
    let n = domain.n;
    let hs = domain.h;
    let (mut u, h_field) = match &problem.initial {
        InitialData::Zero => (FaceField::zeros(n), VecField::zeros(n)),
        InitialData::Analytic { u, h } => {
            let mut uf = sample_face_closure(domain, u, 0.0);
            impose_normal_bc(domain, &mut uf, &problem.bc, 0.0);
            (uf, sample_cell_closure(domain, h, 0.0))
        }
    };
    if !matches!(problem.initial, InitialData::Zero) {
        let (proj, _) = project_div_free(domain, &u, &problem.tol)?;
        u = proj;
        impose_normal_bc(domain, &mut u, &problem.bc, 0.0);
    }

    // consistent initial pressure: Lap p0 = div(explicit momentum forcing at t=0)
    let u_cc = u.to_cell_vector();
    let adv_u = explicit_u_terms(domain, &problem.coeffs, &u_cc, &h_field, &problem.bc, 0.0);
    let mut forcing = interp_c2f(&adv_u).scaled(-1.0);
    if let Some(src) = &problem.source {
        forcing.axpy(1.0, &source_to_faces(domain, &src.r, &src.f, 0.0));
    }
    if let Some(fx) = &problem.f_extra {
        forcing.axpy(1.0, &sample_face_closure(domain, fx, 0.0));
    }
    for c in 0..3 {
        let bc_terms = helmholtz_face_bc_rhs(domain, c, &problem.bc, 0.0, problem.coeffs.nu);
        let lap = stencil::lap_face(n, hs, c, &u.comp[c]);
        for ((f, l), b) in forcing.comp[c].iter_mut().zip(&lap).zip(&bc_terms) {
            *f += problem.coeffs.nu * l + b;
        }
    }
    let div = stencil::div_faces(n, hs, &forcing);
    let p0 = dct::poisson_dct(n, hs, &div);
    Ok(State { u, p: p0, h: h_field, t: 0.0 })
}

/// March the full time interval, storing every state.
pub fn solve_trajectory(problem: &ForwardProblem) -> Result<Trajectory> {
    let domain = &problem.domain;
    let dt = domain.dt();
    let mut states = Vec::with_capacity(domain.nt + 1);
    let mut state = initial_state(problem)?;
    let mut max_div = 0.0f64;
    states.push(state.clone());
    for _ in 0..domain.nt {
        let (next, diag) = step_forward(problem, &state, dt)?;
        max_div = max_div.max(diag.div_linf);
        state = next;
        states.push(state.clone());
    }
    Ok(Trajectory { domain: domain.clone(), states, max_div })
}

/// March without storing intermediate states (memory-lean manufactured runs).
pub fn solve_final(problem: &ForwardProblem) -> Result<(State, f64)> {
    let domain = &problem.domain;
    let dt = domain.dt();
    let mut state = initial_state(problem)?;
    let mut max_div = 0.0f64;
    for _ in 0..domain.nt {
        let (next, diag) = step_forward(problem, &state, dt)?;
        max_div = max_div.max(diag.div_linf);
        state = next;
    }
    Ok((state, max_div))
}

/// Full forward observation run: trajectory plus boundary/snapshot traces with
/// time-derivative channels up to `max_dt_order`.
pub fn solve_forward(
    problem: &ForwardProblem,
    max_dt_order: usize,
) -> Result<(Trajectory, TraceBundle)> {
    let traj = solve_trajectory(problem)?;
    let bundle = traces::extract_traces(&traj, &problem.bc, problem.t0, max_dt_order);
    Ok((traj, bundle))
}

/// Relative L2 distance between two face fields over interior faces (wall
/// faces are pinned boundary data, not solver unknowns).
pub fn relative_interior_face_error(domain: &Domain, a: &FaceField, b: &FaceField) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..3 {
        let d = FaceField::dims(domain.n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        continue;
                    }
                    let av = a.at(c, i, j, k);
                    let bv = b.at(c, i, j, k);
                    num += (av - bv) * (av - bv);
                    den += bv * bv;
                }
            }
        }
    }
    (num / den.max(1e-300)).sqrt()
}

/// Residual report for the weak divergence conditions along a trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WeakDivReport {
    /// max over steps of || div (u^{k+1}-u^k)/dt ||_L2.
    pub max_div_dt: f64,
    /// max over nodes of || div lap u ||_L2 on the 2-cell-eroded core.
    pub max_div_lap: f64,
    /// max over nodes of || div u ||_inf.
    pub max_div: f64,
}

/// Discrete check of the conditions `div du/dt = 0` and `div lap u = 0`.
/// Derivative quantities are evaluated on an interior core where no boundary
/// closure enters, so on smooth fields both residuals are pure truncation.
pub fn check_weak_div_conditions(traj: &Trajectory) -> WeakDivReport {
    let domain = &traj.domain;
    let n = domain.n;
    let hs = domain.h;
    let dt = traj.dt();
    let vol = domain.cell_volume();
    let mut max_div_dt = 0.0f64;
    let mut max_div = 0.0f64;
    let mut prev_div: Option<ScalarField> = None;
    let mut max_div_lap = 0.0f64;
    for state in &traj.states {
        let div = stencil::div_faces(n, hs, &state.u);
        max_div = max_div.max(crate::reduce::max_abs(&div.data));
        if let Some(pd) = &prev_div {
            let l2 = pairwise_sum_indexed(div.data.len(), &|i| {
                let v = (div.data[i] - pd.data[i]) / dt;
                v * v * vol
            })
            .sqrt();
            max_div_dt = max_div_dt.max(l2);
        }
        prev_div = Some(div);

        let mut lap = FaceField::zeros(n);
        for c in 0..3 {
            lap.comp[c] = stencil::lap_face(n, hs, c, &state.u.comp[c]);
        }
        if n.iter().all(|&m| m >= 6) {
            let mut acc = 0.0;
            for i in 2..n[0] - 2 {
                for j in 2..n[1] - 2 {
                    for k in 2..n[2] - 2 {
                        let mut dv = 0.0;
                        for c in 0..3 {
                            let mut hi = [i, j, k];
                            hi[c] += 1;
                            dv += (lap.at(c, hi[0], hi[1], hi[2]) - lap.at(c, i, j, k)) / hs[c];
                        }
                        acc += dv * dv * vol;
                    }
                }
            }
            max_div_lap = max_div_lap.max(acc.sqrt());
        }
    }
    WeakDivReport { max_div_dt, max_div_lap, max_div }
}

#[cfg(test)]
mod tests;
