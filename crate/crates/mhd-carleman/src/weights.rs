//! Weight-function construction and validation.
//!
//! The Carleman machinery runs on a generator function `d` (positive inside
//! the domain, nonvanishing gradient, zero on the unobserved boundary part),
//! a temporal profile `l` peaked at the observation time, the singular pair
//! `(phi0, alpha)` built from `e^{lambda d}/l`, the regular pair `(psi, phi)`
//! built from `d - beta (t - t0)^2`, and C^2 cut-offs used to localize onto
//! superlevel sets of `psi`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{q_epsilon, Domain, SpaceTimeMask, SubBoundary, ALL_FACES};

/// Quintic C^2 ramp: 0 below 0, 1 above 1, `6x^5 - 15x^4 + 10x^3` between.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

pub fn smoothstep_d1(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        30.0 * x * x * (x - 1.0) * (x - 1.0)
    }
}

pub fn smoothstep_d2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        60.0 * x * (2.0 * x - 1.0) * (x - 1.0)
    }
}

/// Antiderivative of `smoothstep` on [0, 1] with value 0 at 0.
fn smoothstep_int(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(4) * (2.5 + x * (-3.0 + x))
}

/// C^2 bump `64 x^3 (1-x)^3`, peak value 1 at x = 1/2.
fn bump(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        let y = x * (1.0 - x);
        64.0 * y * y * y
    }
}

/// Antiderivative of `bump`; `bump_int(1) = 16/35`.
fn bump_int(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    64.0 * (x.powi(4) / 4.0 - 0.6 * x.powi(5) + 0.5 * x.powi(6) - x.powi(7) / 7.0)
}

const BUMP_MASS: f64 = 16.0 / 35.0;

/// Catalog of generator functions with analytic gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DKind {
    /// `d = x3 + 1`: valid when the whole boundary is observed (the zero set
    /// condition is vacuous).
    WholeBoundaryAffine,
    /// `d = distance coordinate from the one unobserved face`, e.g. `d = x3`
    /// when the z_min face is excluded.
    FaceLinear,
}

/// Generator function `d` sampled on the lattices the laboratory evaluates on:
/// cell centers, boundary face centers, and (gradient only) cell vertices.
#[derive(Debug, Clone)]
pub struct WeightGenerator {
    pub domain: Domain,
    pub gamma: SubBoundary,
    pub cell_values: Vec<f64>,
    pub cell_grad: [Vec<f64>; 3],
    /// Hessian entries ordered xx, yy, zz, yz, xz, xy.
    pub cell_hess: [Vec<f64>; 6],
    pub bnd_values: Vec<f64>,
    pub bnd_grad: [Vec<f64>; 3],
    /// min |grad d| over cell vertices (catches interior critical planes that
    /// fall between cell centers).
    vertex_grad_min: f64,
    pub sup_norm: f64,
}

/// Per-condition report from `validate_d`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DValidation {
    /// min of d over interior cell centers.
    pub positivity_margin: f64,
    /// min |grad d| over cell centers, vertices and boundary face centers.
    pub c_min: f64,
    /// max |d| over boundary face centers outside Gamma.
    pub boundary_violation: f64,
    pub positive_inside: bool,
    pub gradient_nonvanishing: bool,
    pub zero_outside_gamma: bool,
    pub pass: bool,
}

pub const BOUNDARY_ZERO_TOL: f64 = 1e-12;

impl WeightGenerator {
    /// Sample an analytic generator. `hess` returns the six entries ordered
    /// xx, yy, zz, yz, xz, xy.
    pub fn from_analytic<V, G, H>(
        domain: &Domain,
        gamma: &SubBoundary,
        value: V,
        grad: G,
        hess: H,
    ) -> WeightGenerator
    where
        V: Fn([f64; 3]) -> f64,
        G: Fn([f64; 3]) -> [f64; 3],
        H: Fn([f64; 3]) -> [f64; 6],
    {
        let n = domain.n;
        let nc = domain.cell_count();
        let mut cell_values = vec![0.0; nc];
        let mut cell_grad = [vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]];
        let mut cell_hess: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; nc]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let id = domain.cell_index(i, j, k);
                    let x = domain.cell_center(i, j, k);
                    cell_values[id] = value(x);
                    let g = grad(x);
                    let hs = hess(x);
                    for c in 0..3 {
                        cell_grad[c][id] = g[c];
                    }
                    for c in 0..6 {
                        cell_hess[c][id] = hs[c];
                    }
                }
            }
        }
        let nb = domain.total_boundary_cells();
        let mut bnd_values = vec![0.0; nb];
        let mut bnd_grad = [vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]];
        for &f in ALL_FACES.iter() {
            let (na, nbb) = domain.face_dims(f);
            for a in 0..na {
                for b in 0..nbb {
                    let id = domain.boundary_index(f, a, b);
                    let x = domain.face_center(f, a, b);
                    bnd_values[id] = value(x);
                    let g = grad(x);
                    for c in 0..3 {
                        bnd_grad[c][id] = g[c];
                    }
                }
            }
        }
        let mut vertex_grad_min = f64::INFINITY;
        for i in 0..=n[0] {
            for j in 0..=n[1] {
                for k in 0..=n[2] {
                    let x = [i as f64 * domain.h[0], j as f64 * domain.h[1], k as f64 * domain.h[2]];
                    let g = grad(x);
                    let mag = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                    vertex_grad_min = vertex_grad_min.min(mag);
                }
            }
        }
        let sup_norm = cell_values
            .iter()
            .chain(bnd_values.iter())
            .cloned()
            .fold(f64::MIN, f64::max);
        WeightGenerator {
            domain: domain.clone(),
            gamma: gamma.clone(),
            cell_values,
            cell_grad,
            cell_hess,
            bnd_values,
            bnd_grad,
            vertex_grad_min,
            sup_norm,
        }
    }

    pub fn values(&self) -> ScalarField {
        ScalarField { n: self.domain.n, data: self.cell_values.clone() }
    }

    #[inline]
    pub fn value(&self, cell: usize) -> f64 {
        self.cell_values[cell]
    }

    #[inline]
    pub fn grad(&self, cell: usize) -> [f64; 3] {
        [self.cell_grad[0][cell], self.cell_grad[1][cell], self.cell_grad[2][cell]]
    }

    #[inline]
    pub fn hess(&self, cell: usize) -> [f64; 6] {
        std::array::from_fn(|c| self.cell_hess[c][cell])
    }

    pub fn max_cell(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.cell_values.iter().enumerate() {
            if v > self.cell_values[best] {
                best = i;
            }
        }
        let _ = best;
        self.cell_values
            .iter()
            .enumerate()
            .fold(0usize, |b, (i, &v)| if v > self.cell_values[b] { i } else { b })
    }
}

/// Check the three generator conditions on the grid. Failures are report
/// entries, never errors.
pub fn validate_d(d: &WeightGenerator) -> DValidation {
    let positivity_margin = d.cell_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mag = |g: [&Vec<f64>; 3], i: usize| -> f64 {
        (g[0][i] * g[0][i] + g[1][i] * g[1][i] + g[2][i] * g[2][i]).sqrt()
    };
    let mut c_min = d.vertex_grad_min;
    for i in 0..d.cell_values.len() {
        c_min = c_min.min(mag([&d.cell_grad[0], &d.cell_grad[1], &d.cell_grad[2]], i));
    }
    for i in 0..d.bnd_values.len() {
        c_min = c_min.min(mag([&d.bnd_grad[0], &d.bnd_grad[1], &d.bnd_grad[2]], i));
    }
    let mut boundary_violation = 0.0_f64;
    for (i, &v) in d.bnd_values.iter().enumerate() {
        if !d.gamma.mask[i] {
            boundary_violation = boundary_violation.max(v.abs());
        }
    }
    let positive_inside = positivity_margin > 0.0;
    let gradient_nonvanishing = c_min > 0.0;
    let zero_outside_gamma = boundary_violation <= BOUNDARY_ZERO_TOL;
    DValidation {
        positivity_margin,
        c_min,
        boundary_violation,
        positive_inside,
        gradient_nonvanishing,
        zero_outside_gamma,
        pass: positive_inside && gradient_nonvanishing && zero_outside_gamma,
    }
}

/// Build a catalog generator for the given observed sub-boundary.
pub fn build_d(domain: &Domain, gamma: &SubBoundary, kind: DKind) -> Result<WeightGenerator> {
    let d = match kind {
        DKind::WholeBoundaryAffine => {
            if !gamma.is_whole_boundary() {
                return Err(Error::Weight(
                    "whole_boundary_affine requires Gamma = the whole boundary: with a proper \
                     sub-boundary the generator would have to vanish on the unobserved part, \
                     and x3 + 1 does not"
                        .into(),
                ));
            }
            WeightGenerator::from_analytic(
                domain,
                gamma,
                |x| x[2] + 1.0,
                |_| [0.0, 0.0, 1.0],
                |_| [0.0; 6],
            )
        }
        DKind::FaceLinear => {
            let excluded = gamma.excluded_faces();
            if excluded.len() != 1 {
                return Err(Error::Weight(format!(
                    "face_linear requires Gamma = boundary minus exactly one face (got {} \
                     excluded); the generator must vanish on the unobserved part while keeping \
                     |grad d| > 0, which a single linear coordinate can only do for one face",
                    excluded.len()
                )));
            }
            let f = excluded[0];
            let ax = f.axis();
            let len = domain.lengths[ax];
            if f.is_min() {
                WeightGenerator::from_analytic(
                    domain,
                    gamma,
                    move |x| x[ax],
                    move |_| {
                        let mut g = [0.0; 3];
                        g[ax] = 1.0;
                        g
                    },
                    |_| [0.0; 6],
                )
            } else {
                WeightGenerator::from_analytic(
                    domain,
                    gamma,
                    move |x| len - x[ax],
                    move |_| {
                        let mut g = [0.0; 3];
                        g[ax] = -1.0;
                        g
                    },
                    |_| [0.0; 6],
                )
            }
        }
    };
    let report = validate_d(&d);
    if !report.pass {
        return Err(Error::Weight(format!(
            "catalog generator failed validation: positivity_margin={:.3e}, c_min={:.3e}, \
             boundary_violation={:.3e}",
            report.positivity_margin, report.c_min, report.boundary_violation
        )));
    }
    Ok(d)
}

/// Negative-control generator with an interior critical plane
/// (`d = 4 x3 (L3 - x3) / L3`). Fails `validate_d` by construction; used to
/// demonstrate that the ratio checks break when the gradient condition does.
pub fn interior_peak_generator(domain: &Domain, gamma: &SubBoundary) -> WeightGenerator {
    let l3 = domain.lengths[2];
    WeightGenerator::from_analytic(
        domain,
        gamma,
        move |x| 4.0 * x[2] * (l3 - x[2]) / l3,
        move |x| [0.0, 0.0, 4.0 * (l3 - 2.0 * x[2]) / l3],
        move |_| [0.0, 0.0, -8.0 / l3, 0.0, 0.0, 0.0],
    )
}

/// Temporal profile: `l(t) = t` near 0, `T - t` near T, C^2 in between with a
/// single strict maximum at `t0`. The interior blend is a quintic smoothstep
/// plus a polynomial bump whose mass balances the two linear pieces when `t0`
/// is off-center.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfile {
    pub t_final: f64,
    pub t0: f64,
    pub delta: f64,
    ramp_lo: f64,
    ramp_hi: f64,
    w_up: f64,
    w_down: f64,
    peak: f64,
}

pub fn build_l(t_final: f64, t0: f64) -> Result<TemporalProfile> {
    if !(t0 > 0.0 && t0 < t_final) {
        return Err(Error::Weight(format!("t0 = {t0} must lie strictly inside (0, {t_final})")));
    }
    let delta = t0.min(t_final - t0);
    let a = 0.5 * delta;
    let b = t_final - 0.5 * delta;
    let du = t0 - a;
    let dd = b - t0;
    // Choose bump weights so l is continuous at b: the rise over [a, t0] must
    // equal the fall over [t0, b].
    let (w_up, w_down) = if du >= dd {
        (0.0, 0.5 * (du - dd) / (BUMP_MASS * dd))
    } else {
        (0.5 * (dd - du) / (BUMP_MASS * du), 0.0)
    };
    let peak = a + du * (0.5 + w_up * BUMP_MASS);
    Ok(TemporalProfile { t_final, t0, delta, ramp_lo: a, ramp_hi: b, w_up, w_down, peak })
}

impl TemporalProfile {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.ramp_lo {
            t
        } else if t >= self.ramp_hi {
            self.t_final - t
        } else if t <= self.t0 {
            let du = self.t0 - self.ramp_lo;
            let xi = (t - self.ramp_lo) / du;
            self.ramp_lo + du * (xi - smoothstep_int(xi) + self.w_up * bump_int(xi))
        } else {
            let dd = self.ramp_hi - self.t0;
            let eta = (t - self.t0) / dd;
            self.peak - dd * (smoothstep_int(eta) + self.w_down * bump_int(eta))
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        if t <= self.ramp_lo {
            1.0
        } else if t >= self.ramp_hi {
            -1.0
        } else if t <= self.t0 {
            let xi = (t - self.ramp_lo) / (self.t0 - self.ramp_lo);
            1.0 - smoothstep(xi) + self.w_up * bump(xi)
        } else {
            let eta = (t - self.t0) / (self.ramp_hi - self.t0);
            -smoothstep(eta) - self.w_down * bump(eta)
        }
    }

    pub fn peak_value(&self) -> f64 {
        self.peak
    }
}

/// Singular weight `e^{2 s alpha}` with
/// `alpha = (e^{lambda d} - e^{2 lambda ||d||}) / l(t)`. The weight is defined
/// to be exactly zero at the time endpoints (the analytic limit).
#[derive(Debug, Clone)]
pub struct SingularWeight {
    pub d: Arc<WeightGenerator>,
    pub profile: TemporalProfile,
    pub lambda: f64,
    pub s: f64,
    /// e^{lambda d} per cell.
    exp_d: Vec<f64>,
    /// e^{2 lambda ||d||}.
    top: f64,
}

pub fn singular_weight(
    d: Arc<WeightGenerator>,
    profile: TemporalProfile,
    lambda: f64,
    s: f64,
) -> Result<SingularWeight> {
    if lambda < 1.0 {
        return Err(Error::Weight(format!("lambda = {lambda} must be >= 1")));
    }
    if !(s > 0.0) {
        return Err(Error::Weight(format!("s = {s} must be positive")));
    }
    let report = validate_d(&d);
    if !report.pass {
        return Err(Error::Weight("generator failed validation; refusing to build weight".into()));
    }
    singular_weight_unchecked(d, profile, lambda, s)
}

/// Negative-control path: builds the weight without requiring the generator
/// to pass validation (the ratio checks use this to demonstrate breakage).
pub fn singular_weight_unchecked(
    d: Arc<WeightGenerator>,
    profile: TemporalProfile,
    lambda: f64,
    s: f64,
) -> Result<SingularWeight> {
    if lambda < 1.0 || !(s > 0.0) {
        return Err(Error::Weight(format!("lambda = {lambda}, s = {s} out of range")));
    }
    if (profile.t_final - d.domain.t_final).abs() > 1e-12 {
        return Err(Error::DomainMismatch("temporal profile built for a different T".into()));
    }
    let exp_d: Vec<f64> = d.cell_values.iter().map(|&v| (lambda * v).exp()).collect();
    let top = (2.0 * lambda * d.sup_norm).exp();
    Ok(SingularWeight { d, profile, lambda, s, exp_d, top })
}

impl SingularWeight {
    #[inline]
    pub fn domain(&self) -> &Domain {
        &self.d.domain
    }

    /// `alpha` at a lattice point; `-inf` at the time endpoints.
    #[inline]
    pub fn alpha(&self, cell: usize, node: usize) -> f64 {
        if node == 0 || node == self.domain().nt {
            return f64::NEG_INFINITY;
        }
        let l = self.profile.eval(self.domain().time_node(node));
        (self.exp_d[cell] - self.top) / l
    }

    /// `phi0 = e^{lambda d} / l(t)`; callers only evaluate at interior nodes.
    #[inline]
    pub fn phi0(&self, cell: usize, node: usize) -> f64 {
        debug_assert!(node > 0 && node < self.domain().nt, "phi0 requested at a time endpoint");
        let l = self.profile.eval(self.domain().time_node(node));
        self.exp_d[cell] / l
    }

    /// `log e^{2 s alpha}` (i.e. `2 s alpha`); `-inf` at the endpoints.
    #[inline]
    pub fn log_weight(&self, cell: usize, node: usize) -> f64 {
        let a = self.alpha(cell, node);
        if a == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            2.0 * self.s * a
        }
    }

    /// `e^{2 s alpha}`, exactly 0 at the time endpoints. Underflow clamps to 0.
    #[inline]
    pub fn weight(&self, cell: usize, node: usize) -> f64 {
        let lw = self.log_weight(cell, node);
        if lw == f64::NEG_INFINITY {
            0.0
        } else {
            lw.exp()
        }
    }
}

/// `beta = ||d|| / delta^2` with `delta = min(t0, T - t0)`.
pub fn default_beta(d: &WeightGenerator, t0: f64, t_final: f64) -> f64 {
    let delta = t0.min(t_final - t0);
    d.sup_norm / (delta * delta)
}

/// Regular weight `e^{2 s phi}` with `psi = d - beta (t-t0)^2`, `phi = e^{lambda psi}`.
/// Never vanishes; evaluated through a shifted exponent so large `s` sweeps do
/// not overflow.
#[derive(Debug, Clone)]
pub struct RegularWeight {
    pub d: Arc<WeightGenerator>,
    pub lambda: f64,
    pub s: f64,
    pub beta: f64,
    pub t0: f64,
    /// max of phi over the (cell, node) lattice.
    phi_max: f64,
}

pub fn regular_weight(
    d: Arc<WeightGenerator>,
    t0: f64,
    beta: f64,
    lambda: f64,
    s: f64,
) -> Result<RegularWeight> {
    if !(beta > 0.0) {
        return Err(Error::Weight(format!("beta = {beta} must be positive")));
    }
    if lambda < 1.0 {
        return Err(Error::Weight(format!("lambda = {lambda} must be >= 1")));
    }
    if !(s > 0.0) {
        return Err(Error::Weight(format!("s = {s} must be positive")));
    }
    let report = validate_d(&d);
    if !report.pass {
        return Err(Error::Weight("generator failed validation; refusing to build weight".into()));
    }
    regular_weight_unchecked(d, t0, beta, lambda, s)
}

/// Negative-control path of [`regular_weight`], skipping generator validation.
pub fn regular_weight_unchecked(
    d: Arc<WeightGenerator>,
    t0: f64,
    beta: f64,
    lambda: f64,
    s: f64,
) -> Result<RegularWeight> {
    if !(beta > 0.0) || lambda < 1.0 || !(s > 0.0) {
        return Err(Error::Weight(format!(
            "beta = {beta}, lambda = {lambda}, s = {s} out of range"
        )));
    }
    let domain = d.domain.clone();
    let mut psi_max = f64::MIN;
    for node in 0..=domain.nt {
        let t = domain.time_node(node);
        let shift = beta * (t - t0) * (t - t0);
        for &v in &d.cell_values {
            psi_max = psi_max.max(v - shift);
        }
    }
    let phi_max = (lambda * psi_max).exp();
    Ok(RegularWeight { d, lambda, s, beta, t0, phi_max })
}

impl RegularWeight {
    #[inline]
    pub fn domain(&self) -> &Domain {
        &self.d.domain
    }

    #[inline]
    pub fn psi_at(&self, dval: f64, t: f64) -> f64 {
        dval - self.beta * (t - self.t0) * (t - self.t0)
    }

    #[inline]
    pub fn psi(&self, cell: usize, node: usize) -> f64 {
        self.psi_at(self.d.cell_values[cell], self.domain().time_node(node))
    }

    #[inline]
    pub fn phi(&self, cell: usize, node: usize) -> f64 {
        (self.lambda * self.psi(cell, node)).exp()
    }

    /// ln of the common scale `e^{2 s phi_max}` factored out of every integral.
    pub fn log_scale(&self) -> f64 {
        2.0 * self.s * self.phi_max
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    /// `e^{2 s phi} / e^{2 s phi_max}`, in (0, 1] on the lattice.
    #[inline]
    pub fn scaled_weight(&self, cell: usize, node: usize) -> f64 {
        (2.0 * self.s * (self.phi(cell, node) - self.phi_max)).exp()
    }

    /// Superlevel-set mask of psi.
    pub fn q_epsilon_mask(&self, eps: f64) -> SpaceTimeMask {
        let dom = self.domain().clone();
        q_epsilon(&dom, |cell, node| self.psi(cell, node), eps)
    }

    /// Lattice argmax of phi as (cell, node); first strict maximum wins.
    pub fn argmax(&self) -> (usize, usize) {
        let dom = self.domain();
        let mut best = (0usize, 0usize);
        let mut best_v = f64::MIN;
        for node in 0..=dom.nt {
            for cell in 0..dom.cell_count() {
                let v = self.psi(cell, node);
                if v > best_v {
                    best_v = v;
                    best = (cell, node);
                }
            }
        }
        best
    }
}

/// Space-time cut-off `chi` (1 on the closure of Q_{2eps}, 0 outside Q_eps)
/// and time-only cut-off `chi0`. Derivatives are analytic compositions via
/// the chain rule on psi, so they vanish identically wherever chi is locally
/// constant.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub eps: f64,
    pub delta0: f64,
    /// chi over (node-major) lattice.
    pub chi: Vec<f64>,
    /// Spatial gradient of chi.
    pub chi_grad: [Vec<f64>; 3],
    /// Time derivative of chi.
    pub chi_dt: Vec<f64>,
    /// Sum over all first and second derivative channels of |d^a chi|^2
    /// (t, x_i, tt, t x_i, x_i x_j); drives the localized-residual budgets.
    pub deriv_sq: Vec<f64>,
    /// chi0 at each time node.
    pub chi0: Vec<f64>,
    pub chi0_dt: Vec<f64>,
    /// True when Q_{2eps} was empty and a zero cut-off was returned.
    pub degenerate: bool,
}

pub fn build_cutoffs(regw: &RegularWeight, eps: f64) -> Result<Cutoff> {
    if !(eps > 0.0) {
        return Err(Error::Weight(format!("eps = {eps} must be positive")));
    }
    let dom = regw.domain().clone();
    let nc = dom.cell_count();
    let nn = dom.nt + 1;
    let delta0 = (eps / regw.beta).sqrt();

    let q2 = regw.q_epsilon_mask(2.0 * eps);
    let degenerate = q2.measure == 0.0;

    let mut chi = vec![0.0; nc * nn];
    let mut chi_grad = [vec![0.0; nc * nn], vec![0.0; nc * nn], vec![0.0; nc * nn]];
    let mut chi_dt = vec![0.0; nc * nn];
    let mut deriv_sq = vec![0.0; nc * nn];

    if !degenerate {
        for node in 0..nn {
            let t = dom.time_node(node);
            let dpsi_dt = -2.0 * regw.beta * (t - regw.t0);
            let d2psi_dt2 = -2.0 * regw.beta;
            for cell in 0..nc {
                let psi = regw.psi_at(regw.d.cell_values[cell], t);
                let xi = (psi - eps) / eps;
                let s0 = smoothstep(xi);
                let s1 = smoothstep_d1(xi) / eps;
                let s2 = smoothstep_d2(xi) / (eps * eps);
                let id = node * nc + cell;
                chi[id] = s0;
                let g = regw.d.grad(cell);
                let hs = regw.d.hess(cell);
                for c in 0..3 {
                    chi_grad[c][id] = s1 * g[c];
                }
                chi_dt[id] = s1 * dpsi_dt;
                // First and second derivative magnitude budget.
                let mut acc = 0.0;
                acc += chi_dt[id] * chi_dt[id];
                for c in 0..3 {
                    acc += chi_grad[c][id] * chi_grad[c][id];
                }
                // d_t^2 chi
                let ctt = s2 * dpsi_dt * dpsi_dt + s1 * d2psi_dt2;
                acc += ctt * ctt;
                // d_t d_xi chi (psi has no mixed t-x second derivative)
                for c in 0..3 {
                    let ctx = s2 * dpsi_dt * g[c];
                    acc += ctx * ctx;
                }
                // d_xi d_xj chi
                let hmat = [
                    [hs[0], hs[5], hs[4]],
                    [hs[5], hs[1], hs[3]],
                    [hs[4], hs[3], hs[2]],
                ];
                for ci in 0..3 {
                    for cj in 0..3 {
                        let cxx = s2 * g[ci] * g[cj] + s1 * hmat[ci][cj];
                        acc += cxx * cxx;
                    }
                }
                deriv_sq[id] = acc;
            }
        }
    }

    let mut chi0 = vec![0.0; nn];
    let mut chi0_dt = vec![0.0; nn];
    for node in 0..nn {
        let t = dom.time_node(node);
        let dist = (t - regw.t0).abs();
        let xi = (delta0 - dist) / (0.5 * delta0);
        chi0[node] = smoothstep(xi);
        let sgn = if t >= regw.t0 { 1.0 } else { -1.0 };
        chi0_dt[node] = smoothstep_d1(xi) * (-sgn) / (0.5 * delta0);
    }

    Ok(Cutoff { eps, delta0, chi, chi_grad, chi_dt, deriv_sq, chi0, chi0_dt, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_box_domain, check_inclusion, omega_epsilon, Face};

    fn unit_domain(n: usize, nt: usize) -> Domain {
        build_box_domain([1.0; 3], [n; 3], 1.0, nt).unwrap()
    }

    #[test]
    fn catalog_whole_boundary_affine() {
        let dom = unit_domain(8, 8);
        let gamma = SubBoundary::whole_boundary(&dom);
        let d = build_d(&dom, &gamma, DKind::WholeBoundaryAffine).unwrap();
        assert!((d.sup_norm - 2.0).abs() < 1e-14);
        let rep = validate_d(&d);
        assert!(rep.pass);
        assert!((rep.c_min - 1.0).abs() < 1e-14);
    }

    #[test]
    fn catalog_face_linear_vanishes_on_excluded_face() {
        let dom = unit_domain(8, 8);
        let gamma = SubBoundary::all_but(&dom, Face::ZMin);
        let d = build_d(&dom, &gamma, DKind::FaceLinear).unwrap();
        assert!((d.sup_norm - 1.0).abs() < 1e-14);
        let rep = validate_d(&d);
        assert!(rep.pass, "{rep:?}");
        assert!((rep.c_min - 1.0).abs() < 1e-14);
        assert_eq!(rep.boundary_violation, 0.0);
        // d is exactly zero on every z_min face center.
        let (na, nb) = dom.face_dims(Face::ZMin);
        for a in 0..na {
            for b in 0..nb {
                assert_eq!(d.bnd_values[dom.boundary_index(Face::ZMin, a, b)], 0.0);
            }
        }
    }

    #[test]
    fn incompatible_kind_gamma_pairs_rejected() {
        let dom = unit_domain(8, 8);
        let one_face = SubBoundary::from_faces(&dom, &[Face::ZMin]);
        assert!(build_d(&dom, &one_face, DKind::FaceLinear).is_err());
        let partial = SubBoundary::all_but(&dom, Face::ZMin);
        assert!(build_d(&dom, &partial, DKind::WholeBoundaryAffine).is_err());
    }

    #[test]
    fn validate_catches_interior_critical_plane() {
        let dom = unit_domain(8, 8);
        let gamma = SubBoundary::whole_boundary(&dom);
        let d = WeightGenerator::from_analytic(
            &dom,
            &gamma,
            |x| x[2] * (1.0 - x[2]),
            |x| [0.0, 0.0, 1.0 - 2.0 * x[2]],
            |_| [0.0, 0.0, -2.0, 0.0, 0.0, 0.0],
        );
        let rep = validate_d(&d);
        assert!(!rep.gradient_nonvanishing, "gradient vanishes at x3 = 1/2: {rep:?}");
        assert!(!rep.pass);
    }

    #[test]
    fn validate_fails_constant_field() {
        let dom = unit_domain(8, 8);
        let gamma = SubBoundary::whole_boundary(&dom);
        let d = WeightGenerator::from_analytic(&dom, &gamma, |_| 1.0, |_| [0.0; 3], |_| [0.0; 6]);
        let rep = validate_d(&d);
        assert_eq!(rep.c_min, 0.0);
        assert!(!rep.pass);
    }

    #[test]
    fn negative_control_generator_fails_validation() {
        let dom = unit_domain(8, 8);
        let gamma = SubBoundary::all_but(&dom, Face::ZMin);
        let rep = validate_d(&interior_peak_generator(&dom, &gamma));
        assert!(!rep.pass);
    }

    #[test]
    fn temporal_profile_linear_pieces() {
        let l = build_l(1.0, 0.5).unwrap();
        assert_eq!(l.delta, 0.5);
        assert!((l.eval(0.1) - 0.1).abs() < 1e-15);
        assert!((l.eval(0.9) - 0.1).abs() < 1e-15);
        assert!((l.eval(0.25) - 0.25).abs() < 1e-15);
        let l = build_l(1.0, 0.25).unwrap();
        assert_eq!(l.delta, 0.25);
        assert!((l.eval(0.1) - 0.1).abs() < 1e-15);
        assert!(build_l(1.0, 0.0).is_err());
        assert!(build_l(1.0, 1.0).is_err());
    }

    #[test]
    fn temporal_profile_strict_max_and_positivity() {
        for &t0 in &[0.5, 0.25, 0.7] {
            let l = build_l(1.0, t0).unwrap();
            let peak = l.eval(t0);
            assert!((peak - l.peak_value()).abs() < 1e-13);
            for k in 1..400 {
                let t = k as f64 / 400.0;
                assert!(l.eval(t) > 0.0, "l must be positive inside (0,T)");
                if (t - t0).abs() > 1e-12 {
                    assert!(l.eval(t) < peak, "t0={t0}, t={t}: {} !< {}", l.eval(t), peak);
                }
            }
            // endpoints from the linear pieces
            assert_eq!(l.eval(0.0), 0.0);
            assert!(l.eval(1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn temporal_profile_is_c2() {
        // second differences of l' stay bounded through the junction points
        for &t0 in &[0.5, 0.3, 0.65] {
            let l = build_l(1.0, t0).unwrap();
            let eps = 1e-5;
            for &t in &[0.5 * l.delta, t0, 1.0 - 0.5 * l.delta] {
                let dm = (l.deriv(t) - l.deriv(t - eps)) / eps;
                let dp = (l.deriv(t + eps) - l.deriv(t)) / eps;
                assert!(
                    (dm - dp).abs() < 1e-3,
                    "l'' jump at t={t}: {dm} vs {dp} (t0={t0})"
                );
            }
            // l' consistent with l by finite differences
            for k in 1..100 {
                let t = k as f64 / 100.0 * 0.98 + 0.01;
                let fd = (l.eval(t + eps) - l.eval(t - eps)) / (2.0 * eps);
                assert!((fd - l.deriv(t)).abs() < 1e-6);
            }
        }
    }

    fn face_linear_setup(n: usize, nt: usize) -> (Domain, Arc<WeightGenerator>) {
        let dom = unit_domain(n, nt);
        let gamma = SubBoundary::all_but(&dom, Face::ZMin);
        let d = Arc::new(build_d(&dom, &gamma, DKind::FaceLinear).unwrap());
        (dom, d)
    }

    #[test]
    fn phi0_direct_value() {
        // Pick a lattice point with d = 0.5 and l(t) = 0.5 exactly:
        // T = 2 puts t = 0.5 on the initial linear piece.
        let dom = build_box_domain([1.0; 3], [5, 5, 5], 2.0, 8).unwrap();
        let gamma = SubBoundary::all_but(&dom, Face::ZMin);
        let d = Arc::new(build_d(&dom, &gamma, DKind::FaceLinear).unwrap());
        let prof = build_l(2.0, 1.0).unwrap();
        let w = singular_weight(d.clone(), prof, 1.0, 4.0).unwrap();
        // cell with center x3 = 0.5 -> d = 0.5; node 2 -> t = 0.5 -> l = 0.5
        let cell = dom.cell_index(0, 0, 2);
        assert!((d.cell_values[cell] - 0.5).abs() < 1e-15);
        let node = 2;
        assert!((dom.time_node(node) - 0.5).abs() < 1e-15);
        let phi0 = w.phi0(cell, node);
        assert!((phi0 - 0.5f64.exp() / 0.5).abs() < 1e-12, "phi0 = {phi0}");
        assert!((phi0 - 3.29744254140026).abs() < 1e-10);
    }

    #[test]
    fn singular_weight_zero_at_endpoints_negative_inside() {
        let (dom, d) = face_linear_setup(6, 16);
        let prof = build_l(1.0, 0.5).unwrap();
        let w = singular_weight(d, prof, 2.0, 8.0).unwrap();
        for cell in 0..dom.cell_count() {
            assert_eq!(w.weight(cell, 0), 0.0);
            assert_eq!(w.weight(cell, dom.nt), 0.0);
            for node in 1..dom.nt {
                assert!(w.alpha(cell, node) < 0.0);
            }
        }
    }

    #[test]
    fn singular_alpha_ordering_properties() {
        let (dom, d) = face_linear_setup(6, 20);
        let prof = build_l(1.0, 0.5).unwrap();
        let w = singular_weight(d.clone(), prof, 1.0, 4.0).unwrap();
        let node0 = dom.nearest_time_node(0.5);
        for cell in 0..dom.cell_count() {
            for node in 1..dom.nt {
                // alpha(x, t) <= alpha(x, t0)
                assert!(w.alpha(cell, node) <= w.alpha(cell, node0) + 1e-13);
            }
        }
        // monotone in d at fixed t: compare two cells in the same column
        let lo = dom.cell_index(2, 2, 1);
        let hi = dom.cell_index(2, 2, 4);
        assert!(d.cell_values[lo] < d.cell_values[hi]);
        for node in 1..dom.nt {
            assert!(w.alpha(lo, node) < w.alpha(hi, node));
        }
    }

    #[test]
    fn default_beta_arithmetic() {
        let (_, d) = face_linear_setup(6, 8);
        assert!((default_beta(&d, 0.5, 1.0) - 4.0).abs() < 1e-14);
        assert!((default_beta(&d, 0.25, 1.0) - 16.0).abs() < 1e-14);
        let dom = unit_domain(6, 8);
        let gamma = SubBoundary::whole_boundary(&dom);
        let d2 = build_d(&dom, &gamma, DKind::WholeBoundaryAffine).unwrap();
        assert!((default_beta(&d2, 0.5, 1.0) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn regular_weight_psi_properties() {
        let (dom, d) = face_linear_setup(8, 32);
        let beta = default_beta(&d, 0.5, 1.0);
        let w = regular_weight(d.clone(), 0.5, beta, 2.0, 4.0).unwrap();
        // psi = d at t = t0
        let node0 = dom.nearest_time_node(0.5);
        for cell in 0..dom.cell_count() {
            assert!((w.psi(cell, node0) - d.cell_values[cell]).abs() < 1e-14);
            // psi <= d everywhere
            for node in 0..=dom.nt {
                assert!(w.psi(cell, node) <= d.cell_values[cell] + 1e-15);
            }
            // default beta makes the weight small at the endpoints
            assert!(w.psi(cell, 0) <= 0.0);
            assert!(w.psi(cell, dom.nt) <= 0.0);
        }
        // boundary-point formula: d = 1 at the top face, t = t0 -> psi = 1, phi = e^lambda
        assert!((w.psi_at(1.0, 0.5) - 1.0).abs() < 1e-15);
        assert!(((w.lambda * w.psi_at(1.0, 0.5)).exp() - (2.0f64).exp()).abs() < 1e-12);
        // argmax at (argmax d, node nearest t0)
        let (cell, node) = w.argmax();
        assert_eq!(node, node0);
        assert_eq!(cell, d.max_cell());
        // positive lower bound for phi
        for node in 0..=dom.nt {
            for cell in 0..dom.cell_count() {
                assert!(w.phi(cell, node) > 0.0);
            }
        }
    }

    #[test]
    fn q_eps_time_extent_and_inclusion() {
        let (dom, d) = face_linear_setup(8, 32);
        let t0 = 0.5;
        let beta = default_beta(&d, t0, 1.0);
        let delta = 0.5;
        let w = regular_weight(d.clone(), t0, beta, 1.0, 1.0).unwrap();
        for &eps in &[0.1, 0.2, 0.3] {
            let q = w.q_epsilon_mask(eps);
            let om = omega_epsilon(&dom, &d.values(), eps);
            assert!(check_inclusion(&q, &om).unwrap(), "eps = {eps}");
            // no masked node outside (t0 - delta, t0 + delta)
            for node in 0..=dom.nt {
                let t = dom.time_node(node);
                if (t - t0).abs() >= delta {
                    for cell in 0..dom.cell_count() {
                        assert!(!q.at(cell, node));
                    }
                }
            }
        }
        // beta = 0 degenerate: psi = d independent of t, inclusion still holds
        let q0 = q_epsilon(&dom, |cell, _| d.cell_values[cell], 0.3);
        let om = omega_epsilon(&dom, &d.values(), 0.3);
        assert!(check_inclusion(&q0, &om).unwrap());
    }

    #[test]
    fn cutoff_ramp_values() {
        let (dom, d) = face_linear_setup(8, 32);
        let beta = default_beta(&d, 0.5, 1.0);
        let w = regular_weight(d.clone(), 0.5, beta, 1.0, 4.0).unwrap();
        let eps = 0.2;
        let cut = build_cutoffs(&w, eps).unwrap();
        assert!(!cut.degenerate);
        let nc = dom.cell_count();
        for node in 0..=dom.nt {
            for cell in 0..nc {
                let psi = w.psi(cell, node);
                let id = node * nc + cell;
                if psi >= 2.0 * eps {
                    assert_eq!(cut.chi[id], 1.0);
                    assert_eq!(cut.deriv_sq[id], 0.0);
                } else if psi <= eps {
                    assert_eq!(cut.chi[id], 0.0);
                    assert_eq!(cut.deriv_sq[id], 0.0);
                } else {
                    assert!(cut.chi[id] > 0.0 && cut.chi[id] < 1.0);
                }
                // midpoint of the symmetric ramp
                if (psi - 1.5 * eps).abs() < 1e-12 {
                    assert!((cut.chi[id] - 0.5).abs() < 1e-12);
                }
            }
        }
        // chi0 plateau and support
        let delta0 = (eps / beta).sqrt();
        assert!((cut.delta0 - delta0).abs() < 1e-14);
        for node in 0..=dom.nt {
            let t = dom.time_node(node);
            let dist = (t - 0.5).abs();
            if dist <= 0.5 * delta0 + 1e-14 {
                assert_eq!(cut.chi0[node], 1.0);
            }
            if dist >= delta0 - 1e-14 {
                assert_eq!(cut.chi0[node], 0.0);
            }
        }
        assert!(build_cutoffs(&w, -1.0).is_err());
        // huge eps -> empty Q_{2eps} -> degenerate zero cutoff
        let cut0 = build_cutoffs(&w, 10.0).unwrap();
        assert!(cut0.degenerate);
        assert!(cut0.chi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothstep_midpoint_exact() {
        assert_eq!(smoothstep(0.5), 0.5);
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert_eq!(smoothstep_d1(0.0), 0.0);
        assert_eq!(smoothstep_d1(1.0), 0.0);
        // bump mass constant used by the profile blend
        assert!((bump_int(1.0) - 16.0 / 35.0).abs() < 1e-14);
    }
}
