//! Inverse source problem: forward observation operator, data norms, the
//! a priori bound, adjoint, and Tikhonov least-squares reconstruction.
//!
//! The observation map takes the spatial factor `f` to the weighted vector of
//! boundary/snapshot samples whose Euclidean norm reproduces the data norm of
//! the selected mode (full boundary with order-3 time derivatives, or
//! partial boundary with order-2). Reconstruction solves the normal equations
//! of this weighted map by conjugate gradients; the adjoint is the exact
//! discrete transpose, so the normal operator is symmetric by construction.

pub mod experiments;
pub mod reconstruct;

use rand_chacha::ChaCha8Rng;

use crate::carleman::trace_norm::{self, HalfNormMode};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VecField};
use crate::geometry::{Domain, SubBoundary, ALL_FACES};
use crate::reduce::{pairwise_dot, pairwise_sum};
use crate::solver::adjoint::{adjoint_source_gradient, NodeCotangent};
use crate::solver::dct::Dct1d;
use crate::solver::traces::{dt_apply, dt_apply_t, extract_state_t, TraceChannels};
use crate::solver::{check_r_assumption, solve_forward, ForwardProblem, TraceBundle, Trajectory};

/// Observation geometry: whole boundary or a face-wise sub-boundary.
#[derive(Debug, Clone)]
pub enum ObsMode {
    Full,
    Partial(SubBoundary),
}

impl ObsMode {
    pub fn gamma(&self) -> Option<&SubBoundary> {
        match self {
            ObsMode::Full => None,
            ObsMode::Partial(g) => Some(g),
        }
    }

    pub fn max_dt_order(&self) -> usize {
        match self {
            ObsMode::Full => 3,
            ObsMode::Partial(_) => 2,
        }
    }
}

/// Boundary + snapshot observations of one forward run.
#[derive(Debug, Clone)]
pub struct ObservationData {
    pub bundle: TraceBundle,
}

impl ObservationData {
    /// data1 - data2 (difference observations for stability ratios).
    pub fn difference(&self, other: &ObservationData) -> ObservationData {
        let mut b = self.bundle.clone();
        b.axpy(-1.0, &other.bundle);
        ObservationData { bundle: b }
    }
}

/// The observation operator: forward solve, trace extraction, norm weighting.
#[derive(Clone)]
pub struct ObsOperator {
    pub problem: ForwardProblem,
    pub mode: ObsMode,
    pub half_mode: HalfNormMode,
}

impl ObsOperator {
    pub fn new(problem: ForwardProblem, mode: ObsMode, half_mode: HalfNormMode) -> Result<Self> {
        if !problem.bc.is_homogeneous() {
            return Err(Error::Hypothesis(
                "observation runs use homogeneous walls (traces then isolate the source)".into(),
            ));
        }
        let src = problem
            .source
            .as_ref()
            .ok_or_else(|| Error::Hypothesis("observation operator needs a source profile".into()))?;
        let (ok, min_mag) = check_r_assumption(&src.r, &problem.domain, problem.t0);
        if !ok {
            return Err(Error::Hypothesis(format!(
                "R(., t0) vanishes somewhere (min magnitude {min_mag:.3e})"
            )));
        }
        Ok(ObsOperator { problem, mode, half_mode })
    }

    pub fn domain(&self) -> &Domain {
        &self.problem.domain
    }

    /// Forward observation of a source factor; linear in `f`.
    pub fn observe(&self, f: &ScalarField) -> Result<(Trajectory, ObservationData)> {
        let mut problem = self.problem.clone();
        if let Some(src) = problem.source.as_mut() {
            src.f = f.clone();
        }
        let (traj, bundle) = solve_forward(&problem, self.mode.max_dt_order())?;
        Ok((traj, ObservationData { bundle }))
    }

    /// `A f`: weighted observation vector.
    pub fn apply(&self, f: &ScalarField) -> Result<Vec<f64>> {
        let (_, data) = self.observe(f)?;
        Ok(weighted_observation_vec(&data.bundle, &self.mode, self.half_mode))
    }

    /// `A^T v`: exact transpose of `apply`.
    pub fn apply_t(&self, v: &[f64]) -> Result<ScalarField> {
        let cot = weighted_observation_vec_t(
            &self.problem.domain,
            v,
            &self.mode,
            self.half_mode,
            self.problem.domain.nearest_time_node(self.problem.t0),
        );
        let cots = bundle_cotangent_to_nodes(&self.problem.domain, cot);
        adjoint_source_gradient(&self.problem, &cots)
    }
}

/// Trapezoid weight of a time node.
fn trap_w(node: usize, nt: usize, dt: f64) -> f64 {
    if node == 0 || node == nt {
        0.5 * dt
    } else {
        dt
    }
}

/// Tangential-derivative stencil along one face axis at index `a`:
/// (index, coeff) pairs (central interior, one-sided at the edges).
fn tang_stencil(na: usize, a: usize, h: f64) -> [(usize, f64); 2] {
    if a == 0 {
        [(1, 1.0 / h), (0, -1.0 / h)]
    } else if a == na - 1 {
        [(na - 1, 1.0 / h), (na - 2, -1.0 / h)]
    } else {
        [(a + 1, 0.5 / h), (a - 1, -0.5 / h)]
    }
}

/// Second-derivative multi-indices of the interior H2 norm (mixed once each).
const H2_MULTI: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

struct ChannelCtx<'a> {
    domain: &'a Domain,
    gamma: Option<&'a SubBoundary>,
    half_mode: HalfNormMode,
    nb: usize,
    nt: usize,
    dt: f64,
}

fn channel_orders(mode: &ObsMode) -> (usize, usize, usize, usize) {
    match mode {
        // (H1-boundary orders, L2-boundary orders, normal-derivative orders, pressure orders)
        ObsMode::Full => (2, 3, 2, 2),
        ObsMode::Partial(_) => (1, 2, 1, 1),
    }
}

/// Walk every weighted observation channel of `bundle` in a fixed order,
/// calling `emit(value, weight)`; `sum w * v^2` over the walk reproduces the
/// mode's squared data norm.
fn walk_channels<F: FnMut(f64, f64)>(
    bundle: &TraceBundle,
    mode: &ObsMode,
    half_mode: HalfNormMode,
    mut emit: F,
) {
    let dom = &bundle.domain;
    let ctx = ChannelCtx {
        domain: dom,
        gamma: mode.gamma(),
        half_mode,
        nb: dom.total_boundary_cells(),
        nt: dom.nt,
        dt: dom.dt(),
    };
    let (h1_orders, l2_orders, dn_orders, p_orders) = channel_orders(mode);
    for c in 0..3 {
        for j in 0..=h1_orders {
            walk_boundary_h1(&ctx, &bundle.orders[j].u_wall[c], &mut emit);
            walk_boundary_h1(&ctx, &bundle.orders[j].h_wall[c], &mut emit);
        }
        for j in 0..=l2_orders {
            walk_boundary_l2(&ctx, &bundle.orders[j].u_wall[c], &mut emit);
            walk_boundary_l2(&ctx, &bundle.orders[j].h_wall[c], &mut emit);
        }
        for j in 0..=dn_orders {
            walk_boundary_l2(&ctx, &bundle.orders[j].dn_u[c], &mut emit);
            walk_boundary_l2(&ctx, &bundle.orders[j].dn_h[c], &mut emit);
        }
    }
    for j in 0..=p_orders {
        walk_boundary_h_half(&ctx, &bundle.orders[j].p_wall, &mut emit);
    }
    walk_snapshot_vec(&ctx, &bundle.snapshot.u_cc, 2, &mut emit);
    if matches!(mode, ObsMode::Full) {
        walk_snapshot_vec(&ctx, &bundle.snapshot.h, 1, &mut emit);
    }
    walk_snapshot_scalar(&ctx, &bundle.snapshot.p, &mut emit);
}

fn walk_boundary_l2<F: FnMut(f64, f64)>(ctx: &ChannelCtx, series: &[f64], emit: &mut F) {
    let dom = ctx.domain;
    for node in 0..=ctx.nt {
        let tw = trap_w(node, ctx.nt, ctx.dt);
        let mut off = 0;
        for &face in ALL_FACES.iter() {
            let cnt = dom.face_cell_count(face);
            let included = ctx.gamma.map(|g| g.contains(face)).unwrap_or(true);
            if included {
                let area = dom.face_cell_area(face);
                for idx in 0..cnt {
                    emit(series[node * ctx.nb + off + idx], tw * area);
                }
            }
            off += cnt;
        }
    }
}

fn walk_boundary_h1<F: FnMut(f64, f64)>(ctx: &ChannelCtx, series: &[f64], emit: &mut F) {
    walk_boundary_l2(ctx, series, emit);
    let dom = ctx.domain;
    for node in 0..=ctx.nt {
        let tw = trap_w(node, ctx.nt, ctx.dt);
        let mut off = 0;
        for &face in ALL_FACES.iter() {
            let (na, nbb) = dom.face_dims(face);
            let cnt = na * nbb;
            let included = ctx.gamma.map(|g| g.contains(face)).unwrap_or(true);
            if included {
                let (ta, tb) = face.tangents();
                let (ha, hb) = (dom.h[ta], dom.h[tb]);
                let area = dom.face_cell_area(face);
                let base = node * ctx.nb + off;
                for a in 0..na {
                    for b in 0..nbb {
                        let sa = tang_stencil(na, a, ha);
                        let da = sa[0].1 * series[base + sa[0].0 * nbb + b]
                            + sa[1].1 * series[base + sa[1].0 * nbb + b];
                        emit(da, tw * area);
                        let sb = tang_stencil(nbb, b, hb);
                        let db = sb[0].1 * series[base + a * nbb + sb[0].0]
                            + sb[1].1 * series[base + a * nbb + sb[1].0];
                        emit(db, tw * area);
                    }
                }
            }
            off += cnt;
        }
    }
}

fn walk_boundary_h_half<F: FnMut(f64, f64)>(ctx: &ChannelCtx, series: &[f64], emit: &mut F) {
    let dom = ctx.domain;
    match ctx.half_mode {
        HalfNormMode::H1Surrogate => walk_boundary_h1(ctx, series, emit),
        HalfNormMode::Spectral => {
            for node in 0..=ctx.nt {
                let tw = trap_w(node, ctx.nt, ctx.dt);
                let mut off = 0;
                for &face in ALL_FACES.iter() {
                    let (na, nbb) = dom.face_dims(face);
                    let cnt = na * nbb;
                    let included = ctx.gamma.map(|g| g.contains(face)).unwrap_or(true);
                    if included {
                        let (ta, tb) = face.tangents();
                        let (la, lb) = (dom.lengths[ta], dom.lengths[tb]);
                        let dca = Dct1d::new(na);
                        let dcb = Dct1d::new(nbb);
                        let base = node * ctx.nb + off;
                        for ka in 0..na {
                            let ca = if ka == 0 { 1.0 / na as f64 } else { 2.0 / na as f64 };
                            let wa = if ka == 0 { 1.0 } else { 0.5 };
                            let kap_a = std::f64::consts::PI * ka as f64 / la;
                            for kb in 0..nbb {
                                let cb = if kb == 0 { 1.0 / nbb as f64 } else { 2.0 / nbb as f64 };
                                let wb = if kb == 0 { 1.0 } else { 0.5 };
                                let kap_b = std::f64::consts::PI * kb as f64 / lb;
                                let mut amp = 0.0;
                                for a in 0..na {
                                    for b in 0..nbb {
                                        amp += dca.forward_coef(ka, a)
                                            * dcb.forward_coef(kb, b)
                                            * series[base + a * nbb + b];
                                    }
                                }
                                amp *= ca * cb;
                                let mult = (1.0 + kap_a * kap_a + kap_b * kap_b).sqrt();
                                emit(amp, tw * la * lb * wa * wb * mult);
                            }
                        }
                    }
                    off += cnt;
                }
            }
        }
    }
}

fn walk_snapshot_vec<F: FnMut(f64, f64)>(
    ctx: &ChannelCtx,
    field: &VecField,
    order: usize,
    emit: &mut F,
) {
    let dom = ctx.domain;
    let n = dom.n;
    let vol = dom.cell_volume();
    let hs = dom.h;
    for c in 0..3 {
        for v in &field.comp[c] {
            emit(*v, vol);
        }
        if order >= 1 {
            for i in 1..n[0] - 1 {
                for j in 1..n[1] - 1 {
                    for k in 1..n[2] - 1 {
                        let idx = (i * n[1] + j) * n[2] + k;
                        let shift = |d: usize, s: isize| -> usize {
                            let mut q = [i as isize, j as isize, k as isize];
                            q[d] += s;
                            ((q[0] as usize) * n[1] + q[1] as usize) * n[2] + q[2] as usize
                        };
                        for d in 0..3 {
                            let g = (field.comp[c][shift(d, 1)] - field.comp[c][shift(d, -1)])
                                / (2.0 * hs[d]);
                            emit(g, vol);
                        }
                        if order >= 2 {
                            for &(d, e) in H2_MULTI.iter() {
                                let v = if d == e {
                                    (field.comp[c][shift(d, 1)] - 2.0 * field.comp[c][idx]
                                        + field.comp[c][shift(d, -1)])
                                        / (hs[d] * hs[d])
                                } else {
                                    let mm = |sd: isize, se: isize| {
                                        let mut q = [i as isize, j as isize, k as isize];
                                        q[d] += sd;
                                        q[e] += se;
                                        field.comp[c][((q[0] as usize) * n[1] + q[1] as usize)
                                            * n[2]
                                            + q[2] as usize]
                                    };
                                    (mm(1, 1) - mm(1, -1) - mm(-1, 1) + mm(-1, -1))
                                        / (4.0 * hs[d] * hs[e])
                                };
                                emit(v, vol);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn walk_snapshot_scalar<F: FnMut(f64, f64)>(ctx: &ChannelCtx, field: &ScalarField, emit: &mut F) {
    let dom = ctx.domain;
    let n = dom.n;
    let vol = dom.cell_volume();
    let hs = dom.h;
    for v in &field.data {
        emit(*v, vol);
    }
    for i in 1..n[0] - 1 {
        for j in 1..n[1] - 1 {
            for k in 1..n[2] - 1 {
                let shift = |d: usize, s: isize| -> usize {
                    let mut q = [i as isize, j as isize, k as isize];
                    q[d] += s;
                    ((q[0] as usize) * n[1] + q[1] as usize) * n[2] + q[2] as usize
                };
                for d in 0..3 {
                    let g = (field.data[shift(d, 1)] - field.data[shift(d, -1)]) / (2.0 * hs[d]);
                    emit(g, vol);
                }
            }
        }
    }
}

/// The weighted observation vector (entries `sqrt(w) * value`).
pub fn weighted_observation_vec(
    bundle: &TraceBundle,
    mode: &ObsMode,
    half_mode: HalfNormMode,
) -> Vec<f64> {
    let mut out = Vec::new();
    walk_channels(bundle, mode, half_mode, |v, w| out.push(w.sqrt() * v));
    out
}

/// Cotangent of a trace bundle: order-0 channel cotangents + snapshot fields.
pub struct BundleCotangent {
    pub order0: TraceChannels,
    pub snap_ucc: VecField,
    pub snap_h: VecField,
    pub snap_p: ScalarField,
    pub snapshot_node: usize,
}

/// Exact transpose of `weighted_observation_vec`: scatters a cotangent vector
/// back onto the raw order-0 trace channels and the snapshot fields. The
/// derivative-order channels are folded through the transposed time stencils.
pub fn weighted_observation_vec_t(
    domain: &Domain,
    v: &[f64],
    mode: &ObsMode,
    half_mode: HalfNormMode,
    snapshot_node: usize,
) -> BundleCotangent {
    let nb = domain.total_boundary_cells();
    let nt = domain.nt;
    let dt = domain.dt();
    let max_order = mode.max_dt_order();
    let len = nb * (nt + 1);
    let mut orders: Vec<TraceChannels> =
        (0..=max_order).map(|_| TraceChannels::zeros(len)).collect();
    let mut snap_ucc = VecField::zeros(domain.n);
    let mut snap_h = VecField::zeros(domain.n);
    let mut snap_p = ScalarField::zeros(domain.n);

    let ctx = ChannelCtx { domain, gamma: mode.gamma(), half_mode, nb, nt, dt };
    let (h1_orders, l2_orders, dn_orders, p_orders) = channel_orders(mode);
    let mut pos = 0usize;
    {
        let mut take = |count: usize| -> Vec<f64> {
            let s = v[pos..pos + count].to_vec();
            pos += count;
            s
        };
        for c in 0..3 {
            for j in 0..=h1_orders {
                scatter_boundary_h1(&ctx, &mut take, &mut orders[j].u_wall[c]);
                scatter_boundary_h1(&ctx, &mut take, &mut orders[j].h_wall[c]);
            }
            for j in 0..=l2_orders {
                scatter_boundary_l2(&ctx, &mut take, &mut orders[j].u_wall[c]);
                scatter_boundary_l2(&ctx, &mut take, &mut orders[j].h_wall[c]);
            }
            for j in 0..=dn_orders {
                scatter_boundary_l2(&ctx, &mut take, &mut orders[j].dn_u[c]);
                scatter_boundary_l2(&ctx, &mut take, &mut orders[j].dn_h[c]);
            }
        }
        for j in 0..=p_orders {
            scatter_boundary_h_half(&ctx, &mut take, &mut orders[j].p_wall);
        }
        scatter_snapshot_vec(&ctx, &mut take, &mut snap_ucc, 2);
        if matches!(mode, ObsMode::Full) {
            scatter_snapshot_vec(&ctx, &mut take, &mut snap_h, 1);
        }
        scatter_snapshot_scalar(&ctx, &mut take, &mut snap_p);
        assert_eq!(pos, v.len(), "cotangent length mismatch");
    }

    // fold derivative-order cotangents back to order 0
    let mut base = orders[0].clone();
    for (j, ch) in orders.iter().enumerate().skip(1) {
        let mut cur = ch.clone();
        for _ in 0..j {
            cur = TraceChannels {
                u_wall: std::array::from_fn(|c| dt_apply_t(&cur.u_wall[c], nt, nb, dt)),
                dn_u: std::array::from_fn(|c| dt_apply_t(&cur.dn_u[c], nt, nb, dt)),
                h_wall: std::array::from_fn(|c| dt_apply_t(&cur.h_wall[c], nt, nb, dt)),
                dn_h: std::array::from_fn(|c| dt_apply_t(&cur.dn_h[c], nt, nb, dt)),
                p_wall: dt_apply_t(&cur.p_wall, nt, nb, dt),
            };
        }
        base.axpy(1.0, &cur);
    }
    BundleCotangent { order0: base, snap_ucc, snap_h, snap_p, snapshot_node }
}

fn scatter_boundary_l2(
    ctx: &ChannelCtx,
    take: &mut dyn FnMut(usize) -> Vec<f64>,
    out: &mut [f64],
) {
    let dom = ctx.domain;
    for node in 0..=ctx.nt {
        let tw = trap_w(node, ctx.nt, ctx.dt);
        let mut off = 0;
        for &face in ALL_FACES.iter() {
            let cnt = dom.face_cell_count(face);
            let included = ctx.gamma.map(|g| g.contains(face)).unwrap_or(true);
            if included {
                let area = dom.face_cell_area(face);
                let w = (tw * area).sqrt();
                let cot = take(cnt);
                for idx in 0..cnt {
                    out[node * ctx.nb + off + idx] += w * cot[idx];
                }
            }
            off += cnt;
        }
    }
}

fn scatter_boundary_h1(
    ctx: &ChannelCtx,
    take: &mut dyn FnMut(usize) -> Vec<f64>,
    out: &mut [f64],
) {
    scatter_boundary_l2(ctx, take, out);
    let dom = ctx.domain;
    for node in 0..=ctx.nt {
        let tw = trap_w(node, ctx.nt, ctx.dt);
        let mut off = 0;
        for &face in ALL_FACES.iter() {
            let (na, nbb) = dom.face_dims(face);
            let cnt = na * nbb;
            let included = ctx.gamma.map(|g| g.contains(face)).unwrap_or(true);
            if included {
                let (ta, tb) = face.tangents();
                let (ha, hb) = (dom.h[ta], dom.h[tb]);
                let area = dom.face_cell_area(face);
                let base = node * ctx.nb + off;
                let cot = take(2 * cnt);
                let mut ci = 0;
                for a in 0..na {
                    for b in 0..nbb {
                        let w = (tw * area).sqrt();
                        let sa = tang_stencil(na, a, ha);
                        out[base + sa[0].0 * nbb + b] += w * sa[0].1 * cot[ci];
                        out[base + sa[1].0 * nbb + b] += w * sa[1].1 * cot[ci];
                        ci += 1;
                        let sb = tang_stencil(nbb, b, hb);
                        out[base + a * nbb + sb[0].0] += w * sb[0].1 * cot[ci];
                        out[base + a * nbb + sb[1].0] += w * sb[1].1 * cot[ci];
                        ci += 1;
                    }
                }
            }
            off += cnt;
        }
    }
}

fn scatter_boundary_h_half(
    ctx: &ChannelCtx,
    take: &mut dyn FnMut(usize) -> Vec<f64>,
    out: &mut [f64],
) {
    let dom = ctx.domain;
    match ctx.half_mode {
        HalfNormMode::H1Surrogate => scatter_boundary_h1(ctx, take, out),
        HalfNormMode::Spectral => {
            for node in 0..=ctx.nt {
                let tw = trap_w(node, ctx.nt, ctx.dt);
                let mut off = 0;
                for &face in ALL_FACES.iter() {
                    let (na, nbb) = dom.face_dims(face);
                    let cnt = na * nbb;
                    let included = ctx.gamma.map(|g| g.contains(face)).unwrap_or(true);
                    if included {
                        let (ta, tb) = face.tangents();
                        let (la, lb) = (dom.lengths[ta], dom.lengths[tb]);
                        let dca = Dct1d::new(na);
                        let dcb = Dct1d::new(nbb);
                        let base = node * ctx.nb + off;
                        let cot = take(na * nbb);
                        let mut ci = 0;
                        for ka in 0..na {
                            let ca = if ka == 0 { 1.0 / na as f64 } else { 2.0 / na as f64 };
                            let wa = if ka == 0 { 1.0 } else { 0.5 };
                            let kap_a = std::f64::consts::PI * ka as f64 / la;
                            for kb in 0..nbb {
                                let cb = if kb == 0 { 1.0 / nbb as f64 } else { 2.0 / nbb as f64 };
                                let wb = if kb == 0 { 1.0 } else { 0.5 };
                                let kap_b = std::f64::consts::PI * kb as f64 / lb;
                                let mult = (1.0 + kap_a * kap_a + kap_b * kap_b).sqrt();
                                let w = (tw * la * lb * wa * wb * mult).sqrt() * ca * cb;
                                for a in 0..na {
                                    for b in 0..nbb {
                                        out[base + a * nbb + b] += w
                                            * dca.forward_coef(ka, a)
                                            * dcb.forward_coef(kb, b)
                                            * cot[ci];
                                    }
                                }
                                ci += 1;
                            }
                        }
                    }
                    off += cnt;
                }
            }
        }
    }
}

fn scatter_snapshot_vec(
    ctx: &ChannelCtx,
    take: &mut dyn FnMut(usize) -> Vec<f64>,
    field: &mut VecField,
    order: usize,
) {
    let dom = ctx.domain;
    let n = dom.n;
    let vol = dom.cell_volume();
    let hs = dom.h;
    let nc = n[0] * n[1] * n[2];
    for c in 0..3 {
        let cot = take(nc);
        let w = vol.sqrt();
        for (o, cv) in field.comp[c].iter_mut().zip(&cot) {
            *o += w * cv;
        }
        if order >= 1 {
            let per_cell = if order >= 2 { 3 + 6 } else { 3 };
            let inner = (n[0] - 2) * (n[1] - 2) * (n[2] - 2);
            let cot = take(inner * per_cell);
            let mut ci = 0;
            for i in 1..n[0] - 1 {
                for j in 1..n[1] - 1 {
                    for k in 1..n[2] - 1 {
                        let idx = (i * n[1] + j) * n[2] + k;
                        let shift = |d: usize, s: isize| -> usize {
                            let mut q = [i as isize, j as isize, k as isize];
                            q[d] += s;
                            ((q[0] as usize) * n[1] + q[1] as usize) * n[2] + q[2] as usize
                        };
                        for d in 0..3 {
                            let wv = vol.sqrt() * cot[ci] / (2.0 * hs[d]);
                            field.comp[c][shift(d, 1)] += wv;
                            field.comp[c][shift(d, -1)] -= wv;
                            ci += 1;
                        }
                        if order >= 2 {
                            for &(d, e) in H2_MULTI.iter() {
                                let wv = vol.sqrt() * cot[ci];
                                if d == e {
                                    let s = wv / (hs[d] * hs[d]);
                                    field.comp[c][shift(d, 1)] += s;
                                    field.comp[c][idx] -= 2.0 * s;
                                    field.comp[c][shift(d, -1)] += s;
                                } else {
                                    let s = wv / (4.0 * hs[d] * hs[e]);
                                    let mut mm = |sd: isize, se: isize, val: f64| {
                                        let mut q = [i as isize, j as isize, k as isize];
                                        q[d] += sd;
                                        q[e] += se;
                                        field.comp[c][((q[0] as usize) * n[1] + q[1] as usize)
                                            * n[2]
                                            + q[2] as usize] += val;
                                    };
                                    mm(1, 1, s);
                                    mm(1, -1, -s);
                                    mm(-1, 1, -s);
                                    mm(-1, -1, s);
                                }
                                ci += 1;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn scatter_snapshot_scalar(
    ctx: &ChannelCtx,
    take: &mut dyn FnMut(usize) -> Vec<f64>,
    field: &mut ScalarField,
) {
    let dom = ctx.domain;
    let n = dom.n;
    let vol = dom.cell_volume();
    let hs = dom.h;
    let nc = n[0] * n[1] * n[2];
    let cot = take(nc);
    let w = vol.sqrt();
    for (o, cv) in field.data.iter_mut().zip(&cot) {
        *o += w * cv;
    }
    let inner = (n[0] - 2) * (n[1] - 2) * (n[2] - 2);
    let cot = take(inner * 3);
    let mut ci = 0;
    for i in 1..n[0] - 1 {
        for j in 1..n[1] - 1 {
            for k in 1..n[2] - 1 {
                let shift = |d: usize, s: isize| -> usize {
                    let mut q = [i as isize, j as isize, k as isize];
                    q[d] += s;
                    ((q[0] as usize) * n[1] + q[1] as usize) * n[2] + q[2] as usize
                };
                for d in 0..3 {
                    let wv = w * cot[ci] / (2.0 * hs[d]);
                    field.data[shift(d, 1)] += wv;
                    field.data[shift(d, -1)] -= wv;
                    ci += 1;
                }
            }
        }
    }
}

/// Convert a bundle cotangent (order-0 channels + snapshot) to per-node state
/// cotangents for the adjoint sweep.
pub fn bundle_cotangent_to_nodes(domain: &Domain, cot: BundleCotangent) -> Vec<NodeCotangent> {
    let mut cots: Vec<NodeCotangent> =
        (0..=domain.nt).map(|_| NodeCotangent::zeros(domain.n)).collect();
    for (node, nc) in cots.iter_mut().enumerate() {
        extract_state_t(domain, &cot.order0, node, &mut nc.ucc, &mut nc.h, &mut nc.p);
    }
    let sn = cot.snapshot_node;
    cots[sn].ucc.axpy(1.0, &cot.snap_ucc);
    cots[sn].h.axpy(1.0, &cot.snap_h);
    cots[sn].p.axpy(1.0, &cot.snap_p);
    cots
}

/// Full-boundary data norm with its literal term breakdown.
pub fn data_norm_full(
    data: &ObservationData,
    half_mode: HalfNormMode,
) -> Result<(f64, Vec<(String, f64)>)> {
    let bundle = &data.bundle;
    if bundle.max_order() < 3 {
        return Err(Error::Hypothesis(
            "full-boundary norm needs time-derivative traces to order 3".into(),
        ));
    }
    let dom = &bundle.domain;
    let nb = dom.total_boundary_cells();
    let (nt, dt) = (dom.nt, dom.dt());
    let l2 = |series: &[f64]| {
        trace_norm::time_integrated(series, nt, nb, dt, |s| trace_norm::boundary_l2_sq(dom, s, None))
    };
    let h1 = |series: &[f64]| {
        trace_norm::time_integrated(series, nt, nb, dt, |s| trace_norm::boundary_h1_sq(dom, s, None))
    };
    let hh = |series: &[f64]| {
        trace_norm::time_integrated(series, nt, nb, dt, |s| {
            trace_norm::boundary_h_half_sq(dom, s, None, half_mode)
        })
    };
    let mut u_h2_h1 = 0.0;
    let mut u_h3_l2 = 0.0;
    let mut dnu_h2_l2 = 0.0;
    let mut h_h2_h1 = 0.0;
    let mut h_h3_l2 = 0.0;
    let mut dnh_h2_l2 = 0.0;
    for c in 0..3 {
        for j in 0..=2 {
            u_h2_h1 += h1(&bundle.orders[j].u_wall[c]);
            h_h2_h1 += h1(&bundle.orders[j].h_wall[c]);
            dnu_h2_l2 += l2(&bundle.orders[j].dn_u[c]);
            dnh_h2_l2 += l2(&bundle.orders[j].dn_h[c]);
        }
        for j in 0..=3 {
            u_h3_l2 += l2(&bundle.orders[j].u_wall[c]);
            h_h3_l2 += l2(&bundle.orders[j].h_wall[c]);
        }
    }
    let p_h2_hh: f64 = (0..=2).map(|j| hh(&bundle.orders[j].p_wall)).sum();
    let u_t0 = snapshot_vec_norm_sq(dom, &bundle.snapshot.u_cc, 2);
    let h_t0 = snapshot_vec_norm_sq(dom, &bundle.snapshot.h, 1);
    let p_t0 = snapshot_scalar_h1_sq(dom, &bundle.snapshot.p);
    let terms = vec![
        ("u_H2_H1_boundary".to_string(), u_h2_h1),
        ("u_H3_L2_boundary".to_string(), u_h3_l2),
        ("dnu_H2_L2_boundary".to_string(), dnu_h2_l2),
        ("H_H2_H1_boundary".to_string(), h_h2_h1),
        ("H_H3_L2_boundary".to_string(), h_h3_l2),
        ("dnh_H2_L2_boundary".to_string(), dnh_h2_l2),
        ("p_H2_Hhalf_boundary".to_string(), p_h2_hh),
        ("u_t0_H2".to_string(), u_t0),
        ("H_t0_H1".to_string(), h_t0),
        ("p_t0_H1".to_string(), p_t0),
    ];
    let total: f64 = terms.iter().map(|(_, v)| v).sum();
    Ok((total.sqrt(), terms))
}

/// Partial-boundary data norm (observed sub-boundary) with term breakdown.
pub fn data_norm_partial(
    data: &ObservationData,
    gamma: &SubBoundary,
    half_mode: HalfNormMode,
) -> Result<(f64, Vec<(String, f64)>)> {
    let bundle = &data.bundle;
    if bundle.max_order() < 2 {
        return Err(Error::Hypothesis(
            "partial-boundary norm needs time-derivative traces to order 2".into(),
        ));
    }
    let dom = &bundle.domain;
    let nb = dom.total_boundary_cells();
    let (nt, dt) = (dom.nt, dom.dt());
    let l2 = |series: &[f64]| {
        trace_norm::time_integrated(series, nt, nb, dt, |s| {
            trace_norm::boundary_l2_sq(dom, s, Some(gamma))
        })
    };
    let h1 = |series: &[f64]| {
        trace_norm::time_integrated(series, nt, nb, dt, |s| {
            trace_norm::boundary_h1_sq(dom, s, Some(gamma))
        })
    };
    let hh = |series: &[f64]| {
        trace_norm::time_integrated(series, nt, nb, dt, |s| {
            trace_norm::boundary_h_half_sq(dom, s, Some(gamma), half_mode)
        })
    };
    let mut u_h1_h1 = 0.0;
    let mut u_h2_l2 = 0.0;
    let mut dnu_h1_l2 = 0.0;
    let mut h_h1_h1 = 0.0;
    let mut h_h2_l2 = 0.0;
    let mut dnh_h1_l2 = 0.0;
    for c in 0..3 {
        for j in 0..=1 {
            u_h1_h1 += h1(&bundle.orders[j].u_wall[c]);
            h_h1_h1 += h1(&bundle.orders[j].h_wall[c]);
            dnu_h1_l2 += l2(&bundle.orders[j].dn_u[c]);
            dnh_h1_l2 += l2(&bundle.orders[j].dn_h[c]);
        }
        for j in 0..=2 {
            u_h2_l2 += l2(&bundle.orders[j].u_wall[c]);
            h_h2_l2 += l2(&bundle.orders[j].h_wall[c]);
        }
    }
    let p_h1_hh: f64 = (0..=1).map(|j| hh(&bundle.orders[j].p_wall)).sum();
    let u_t0 = snapshot_vec_norm_sq(dom, &bundle.snapshot.u_cc, 2);
    let p_t0 = snapshot_scalar_h1_sq(dom, &bundle.snapshot.p);
    let terms = vec![
        ("u_H1_H1_gamma".to_string(), u_h1_h1),
        ("u_H2_L2_gamma".to_string(), u_h2_l2),
        ("dnu_H1_L2_gamma".to_string(), dnu_h1_l2),
        ("H_H1_H1_gamma".to_string(), h_h1_h1),
        ("H_H2_L2_gamma".to_string(), h_h2_l2),
        ("dnh_H1_L2_gamma".to_string(), dnh_h1_l2),
        ("p_H1_Hhalf_gamma".to_string(), p_h1_hh),
        ("u_t0_H2".to_string(), u_t0),
        ("p_t0_H1".to_string(), p_t0),
    ];
    let total: f64 = terms.iter().map(|(_, v)| v).sum();
    Ok((total.sqrt(), terms))
}

/// Interior Sobolev norm (orders 0..=order) of a snapshot vector field:
/// zeroth term over all cells, derivatives over the one-cell-eroded core,
/// second derivatives by multi-index (mixed once each).
pub fn snapshot_vec_norm_sq(domain: &Domain, field: &VecField, order: usize) -> f64 {
    let n = domain.n;
    let vol = domain.cell_volume();
    let hs = domain.h;
    let mut acc = 0.0;
    for c in 0..3 {
        acc += pairwise_dot(&field.comp[c], &field.comp[c]) * vol;
    }
    if order == 0 {
        return acc;
    }
    for c in 0..3 {
        for i in 1..n[0] - 1 {
            for j in 1..n[1] - 1 {
                for k in 1..n[2] - 1 {
                    let idx = (i * n[1] + j) * n[2] + k;
                    let shift = |d: usize, s: isize| -> usize {
                        let mut q = [i as isize, j as isize, k as isize];
                        q[d] += s;
                        ((q[0] as usize) * n[1] + q[1] as usize) * n[2] + q[2] as usize
                    };
                    for d in 0..3 {
                        let g = (field.comp[c][shift(d, 1)] - field.comp[c][shift(d, -1)])
                            / (2.0 * hs[d]);
                        acc += g * g * vol;
                    }
                    if order >= 2 {
                        for &(d, e) in H2_MULTI.iter() {
                            let v = if d == e {
                                (field.comp[c][shift(d, 1)] - 2.0 * field.comp[c][idx]
                                    + field.comp[c][shift(d, -1)])
                                    / (hs[d] * hs[d])
                            } else {
                                let mm = |sd: isize, se: isize| {
                                    let mut q = [i as isize, j as isize, k as isize];
                                    q[d] += sd;
                                    q[e] += se;
                                    field.comp[c][((q[0] as usize) * n[1] + q[1] as usize) * n[2]
                                        + q[2] as usize]
                                };
                                (mm(1, 1) - mm(1, -1) - mm(-1, 1) + mm(-1, -1))
                                    / (4.0 * hs[d] * hs[e])
                            };
                            acc += v * v * vol;
                        }
                    }
                }
            }
        }
    }
    acc
}

pub fn snapshot_scalar_h1_sq(domain: &Domain, field: &ScalarField) -> f64 {
    let n = domain.n;
    let vol = domain.cell_volume();
    let hs = domain.h;
    let mut acc = pairwise_dot(&field.data, &field.data) * vol;
    for i in 1..n[0] - 1 {
        for j in 1..n[1] - 1 {
            for k in 1..n[2] - 1 {
                let shift = |d: usize, s: isize| -> usize {
                    let mut q = [i as isize, j as isize, k as isize];
                    q[d] += s;
                    ((q[0] as usize) * n[1] + q[1] as usize) * n[2] + q[2] as usize
                };
                for d in 0..3 {
                    let g = (field.data[shift(d, 1)] - field.data[shift(d, -1)]) / (2.0 * hs[d]);
                    acc += g * g * vol;
                }
            }
        }
    }
    acc
}

/// A priori bound: space-time Sobolev norms of the solution fields plus the
/// source over the cylinder (the time-independent factor integrates to
/// `T ||f||^2_{L2(Omega)}`).
pub fn apriori_bound(traj: &Trajectory, f: &ScalarField) -> (f64, Vec<(String, f64)>) {
    use crate::carleman::sweeps::time_derivative_trajectory;
    use crate::carleman::LatticeEval;
    let dom = &traj.domain;
    let vol_dt = dom.cell_volume() * dom.dt();
    let vol = dom.cell_volume();
    let dtraj = time_derivative_trajectory(traj);
    let ddtraj = time_derivative_trajectory(&dtraj);
    let n = dom.n;
    let q_norms = |tr: &Trajectory| -> (f64, f64, f64, f64, f64) {
        let ev = LatticeEval::new(tr);
        let mut u2 = 0.0;
        let mut gu2 = 0.0;
        let mut h2 = 0.0;
        let mut gh2 = 0.0;
        let mut p2 = 0.0;
        for node in 1..dom.nt {
            for i in 1..n[0] - 1 {
                for j in 1..n[1] - 1 {
                    for k in 1..n[2] - 1 {
                        let st = ev.point_state(node, i, j, k);
                        u2 += st.u.iter().map(|v| v * v).sum::<f64>() * vol_dt;
                        h2 += st.h.iter().map(|v| v * v).sum::<f64>() * vol_dt;
                        gu2 += st.u_grad_sq * vol_dt;
                        gh2 += st.h_grad_sq * vol_dt;
                        p2 += st.p * st.p * vol_dt;
                    }
                }
            }
        }
        (u2, gu2, h2, gh2, p2)
    };
    let (u2, gu2, h2, gh2, p2) = q_norms(traj);
    let (ut2, gut2, ht2, ght2, pt2) = q_norms(&dtraj);
    let (utt2, _, _, _, _) = q_norms(&ddtraj);
    let f2 = pairwise_dot(&f.data, &f.data) * vol * dom.t_final;
    let terms = vec![
        ("f_L2_Q".to_string(), f2),
        ("u_H12_Q".to_string(), u2 + gu2 + ut2 + utt2),
        ("grad_u_H01_Q".to_string(), gu2 + gut2),
        ("H_H11_Q".to_string(), h2 + gh2 + ht2),
        ("grad_H_H01_Q".to_string(), gh2 + ght2),
        ("p_H01_Q".to_string(), p2 + pt2),
    ];
    let total: f64 = terms.iter().map(|(_, v)| v).sum();
    (total.sqrt(), terms)
}

/// Additive Gaussian noise on the raw traces and snapshot, seeded, with the
/// standard deviation set relative to the RMS of the recorded data. The
/// derivative stacks are recomputed from the noisy order-0 series.
pub fn apply_noise(bundle: &TraceBundle, level: f64, rng: &mut ChaCha8Rng) -> TraceBundle {
    use rand::Rng;
    let dom = &bundle.domain;
    let nb = dom.total_boundary_cells();
    let (nt, dt) = (dom.nt, dom.dt());
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut sumsq = 0.0;
    let mut count = 0usize;
    let mut tally = |v: &[f64]| {
        sumsq += pairwise_dot(v, v);
        count += v.len();
    };
    for c in 0..3 {
        tally(&bundle.orders[0].u_wall[c]);
        tally(&bundle.orders[0].dn_u[c]);
        tally(&bundle.orders[0].h_wall[c]);
        tally(&bundle.orders[0].dn_h[c]);
        tally(&bundle.snapshot.u_cc.comp[c]);
        tally(&bundle.snapshot.h.comp[c]);
    }
    tally(&bundle.orders[0].p_wall);
    tally(&bundle.snapshot.p.data);
    let sigma = level * (sumsq / count.max(1) as f64).sqrt();

    let mut noisy = bundle.clone();
    {
        let perturb = |v: &mut [f64], rng: &mut ChaCha8Rng| {
            for x in v.iter_mut() {
                *x += sigma * gauss(rng);
            }
        };
        for c in 0..3 {
            perturb(&mut noisy.orders[0].u_wall[c], rng);
            perturb(&mut noisy.orders[0].dn_u[c], rng);
            perturb(&mut noisy.orders[0].h_wall[c], rng);
            perturb(&mut noisy.orders[0].dn_h[c], rng);
            perturb(&mut noisy.snapshot.u_cc.comp[c], rng);
            perturb(&mut noisy.snapshot.h.comp[c], rng);
        }
        perturb(&mut noisy.orders[0].p_wall, rng);
        perturb(&mut noisy.snapshot.p.data, rng);
    }
    for j in 1..noisy.orders.len() {
        let prev = noisy.orders[j - 1].clone();
        noisy.orders[j] = TraceChannels {
            u_wall: std::array::from_fn(|c| dt_apply(&prev.u_wall[c], nt, nb, dt)),
            dn_u: std::array::from_fn(|c| dt_apply(&prev.dn_u[c], nt, nb, dt)),
            h_wall: std::array::from_fn(|c| dt_apply(&prev.h_wall[c], nt, nb, dt)),
            dn_h: std::array::from_fn(|c| dt_apply(&prev.dn_h[c], nt, nb, dt)),
            p_wall: dt_apply(&prev.p_wall, nt, nb, dt),
        };
    }
    noisy
}

/// Grid L2 norm of a cell field restricted to a spatial mask.
pub fn masked_l2(domain: &Domain, f: &ScalarField, mask: &crate::geometry::SpaceMask) -> f64 {
    let vol = domain.cell_volume();
    let acc = pairwise_sum(
        &f.data
            .iter()
            .zip(&mask.cells)
            .map(|(v, &m)| if m { v * v * vol } else { 0.0 })
            .collect::<Vec<f64>>(),
    );
    acc.sqrt()
}
