//! Boundary-trace extraction and post-hoc time differentiation.
//!
//! Traces are sampled at boundary face centers: wall values of `u` and `H`
//! come from the Dirichlet data, normal derivatives from one-sided
//! second-order stencils through the two interior cell layers, and the
//! pressure trace from quadratic extrapolation (p carries no boundary
//! condition). Time derivatives of the recorded series are computed by
//! fourth-order central differences at interior nodes and one-sided stencils
//! at the ends, applied repeatedly for higher orders.

use crate::field::{FaceField, ScalarField, VecField};
use crate::geometry::{Domain, ALL_FACES};
use crate::solver::{Bc, State, Trajectory};

/// Raw per-node boundary samples, node-major (`idx = node * n_boundary + b`).
#[derive(Debug, Clone)]
pub struct TraceChannels {
    pub u_wall: [Vec<f64>; 3],
    pub dn_u: [Vec<f64>; 3],
    pub h_wall: [Vec<f64>; 3],
    pub dn_h: [Vec<f64>; 3],
    pub p_wall: Vec<f64>,
}

impl TraceChannels {
    pub fn zeros(len: usize) -> TraceChannels {
        TraceChannels {
            u_wall: std::array::from_fn(|_| vec![0.0; len]),
            dn_u: std::array::from_fn(|_| vec![0.0; len]),
            h_wall: std::array::from_fn(|_| vec![0.0; len]),
            dn_h: std::array::from_fn(|_| vec![0.0; len]),
            p_wall: vec![0.0; len],
        }
    }

    pub fn axpy(&mut self, a: f64, x: &TraceChannels) {
        for c in 0..3 {
            for (s, v) in self.u_wall[c].iter_mut().zip(&x.u_wall[c]) {
                *s += a * v;
            }
            for (s, v) in self.dn_u[c].iter_mut().zip(&x.dn_u[c]) {
                *s += a * v;
            }
            for (s, v) in self.h_wall[c].iter_mut().zip(&x.h_wall[c]) {
                *s += a * v;
            }
            for (s, v) in self.dn_h[c].iter_mut().zip(&x.dn_h[c]) {
                *s += a * v;
            }
        }
        for (s, v) in self.p_wall.iter_mut().zip(&x.p_wall) {
            *s += a * v;
        }
    }
}

/// Interior fields at the snapshot node.
#[derive(Debug, Clone)]
pub struct SnapshotData {
    pub node: usize,
    pub u_cc: VecField,
    pub h: VecField,
    pub p: ScalarField,
}

#[derive(Debug, Clone)]
pub struct TraceBundle {
    pub domain: Domain,
    /// `orders[j]` holds the j-th time derivative of every channel.
    pub orders: Vec<TraceChannels>,
    pub snapshot: SnapshotData,
}

impl TraceBundle {
    pub fn max_order(&self) -> usize {
        self.orders.len() - 1
    }

    pub fn zeros_like(&self) -> TraceBundle {
        let len = self.orders[0].p_wall.len();
        TraceBundle {
            domain: self.domain.clone(),
            orders: self.orders.iter().map(|_| TraceChannels::zeros(len)).collect(),
            snapshot: SnapshotData {
                node: self.snapshot.node,
                u_cc: VecField::zeros(self.domain.n),
                h: VecField::zeros(self.domain.n),
                p: ScalarField::zeros(self.domain.n),
            },
        }
    }

    /// Linear combination of bundles (for difference data and noise).
    pub fn axpy(&mut self, a: f64, x: &TraceBundle) {
        for (s, o) in self.orders.iter_mut().zip(&x.orders) {
            s.axpy(a, o);
        }
        self.snapshot.u_cc.axpy(a, &x.snapshot.u_cc);
        self.snapshot.h.axpy(a, &x.snapshot.h);
        self.snapshot.p.axpy(a, &x.snapshot.p);
    }
}

/// One-sided derivative at the wall through nodes {0, h/2, 3h/2}, exact for
/// quadratics: f'(0) = -8/(3h) f(0) + 3/h f(h/2) - 1/(3h) f(3h/2).
pub fn wall_derivative_coeffs(h: f64) -> [f64; 3] {
    [-8.0 / (3.0 * h), 3.0 / h, -1.0 / (3.0 * h)]
}

/// Quadratic extrapolation to the wall from cell layers {h/2, 3h/2, 5h/2}.
pub const WALL_EXTRAP: [f64; 3] = [15.0 / 8.0, -10.0 / 8.0, 3.0 / 8.0];

fn boundary_total(domain: &Domain) -> usize {
    domain.total_boundary_cells()
}

/// Extract the order-0 channels of one state.
fn extract_state(domain: &Domain, state: &State, bc: &Bc) -> TraceChannels {
    let nb = boundary_total(domain);
    let mut ch = TraceChannels::zeros(nb);
    let u_cc = state.u.to_cell_vector();
    for &face in ALL_FACES.iter() {
        let (na, nbb) = domain.face_dims(face);
        let ax = face.axis();
        let hn = domain.h[ax];
        let dn = wall_derivative_coeffs(hn);
        for a in 0..na {
            for b in 0..nbb {
                let bi = domain.boundary_index(face, a, b);
                let x = domain.face_center(face, a, b);
                let uw = bc.u_at(x, state.t);
                let hw = bc.h_at(x, state.t);
                let c0 = domain.boundary_cell(face, a, b, 0);
                let c1 = domain.boundary_cell(face, a, b, 1);
                let c2 = domain.boundary_cell(face, a, b, 2);
                let id0 = domain.cell_index(c0[0], c0[1], c0[2]);
                let id1 = domain.cell_index(c1[0], c1[1], c1[2]);
                let id2 = domain.cell_index(c2[0], c2[1], c2[2]);
                for m in 0..3 {
                    ch.u_wall[m][bi] = uw[m];
                    ch.h_wall[m][bi] = hw[m];
                    // derivative along the inward coordinate; outward normal
                    // derivative is its negative
                    let du = dn[0] * uw[m] + dn[1] * u_cc.comp[m][id0] + dn[2] * u_cc.comp[m][id1];
                    ch.dn_u[m][bi] = -du;
                    let dh =
                        dn[0] * hw[m] + dn[1] * state.h.comp[m][id0] + dn[2] * state.h.comp[m][id1];
                    ch.dn_h[m][bi] = -dh;
                }
                ch.p_wall[bi] = WALL_EXTRAP[0] * state.p.data[id0]
                    + WALL_EXTRAP[1] * state.p.data[id1]
                    + WALL_EXTRAP[2] * state.p.data[id2];
            }
        }
    }
    ch
}

/// Apply the time-differentiation stencil along the node axis of a
/// node-major series with `nb` samples per node.
pub fn dt_apply(series: &[f64], nt: usize, nb: usize, dt: f64) -> Vec<f64> {
    assert_eq!(series.len(), (nt + 1) * nb);
    let mut out = vec![0.0; series.len()];
    let at = |k: usize, j: usize| series[k * nb + j];
    for j in 0..nb {
        if nt >= 4 {
            out[j] = (-3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)) / (2.0 * dt);
            out[nb + j] = (at(2, j) - at(0, j)) / (2.0 * dt);
            for k in 2..=nt - 2 {
                out[k * nb + j] = (at(k - 2, j) - 8.0 * at(k - 1, j) + 8.0 * at(k + 1, j)
                    - at(k + 2, j))
                    / (12.0 * dt);
            }
            out[(nt - 1) * nb + j] = (at(nt, j) - at(nt - 2, j)) / (2.0 * dt);
            out[nt * nb + j] = (3.0 * at(nt, j) - 4.0 * at(nt - 1, j) + at(nt - 2, j)) / (2.0 * dt);
        } else {
            out[j] = (at(1, j) - at(0, j)) / dt;
            for k in 1..nt {
                out[k * nb + j] = (at(k + 1, j) - at(k - 1, j)) / (2.0 * dt);
            }
            out[nt * nb + j] = (at(nt, j) - at(nt - 1, j)) / dt;
        }
    }
    out
}

/// Exact transpose of `dt_apply`.
pub fn dt_apply_t(cot: &[f64], nt: usize, nb: usize, dt: f64) -> Vec<f64> {
    assert_eq!(cot.len(), (nt + 1) * nb);
    let mut out = vec![0.0; cot.len()];
    let mut add = |k: usize, j: usize, w: f64| {
        out[k * nb + j] += w;
    };
    for j in 0..nb {
        let c = |k: usize| cot[k * nb + j];
        if nt >= 4 {
            add(0, j, -3.0 * c(0) / (2.0 * dt));
            add(1, j, 4.0 * c(0) / (2.0 * dt));
            add(2, j, -c(0) / (2.0 * dt));
            add(2, j, c(1) / (2.0 * dt));
            add(0, j, -c(1) / (2.0 * dt));
            for k in 2..=nt - 2 {
                let w = c(k) / (12.0 * dt);
                add(k - 2, j, w);
                add(k - 1, j, -8.0 * w);
                add(k + 1, j, 8.0 * w);
                add(k + 2, j, -w);
            }
            add(nt, j, c(nt - 1) / (2.0 * dt));
            add(nt - 2, j, -c(nt - 1) / (2.0 * dt));
            add(nt, j, 3.0 * c(nt) / (2.0 * dt));
            add(nt - 1, j, -4.0 * c(nt) / (2.0 * dt));
            add(nt - 2, j, c(nt) / (2.0 * dt));
        } else {
            add(1, j, c(0) / dt);
            add(0, j, -c(0) / dt);
            for k in 1..nt {
                add(k + 1, j, c(k) / (2.0 * dt));
                add(k - 1, j, -c(k) / (2.0 * dt));
            }
            add(nt, j, c(nt) / dt);
            add(nt - 1, j, -c(nt) / dt);
        }
    }
    out
}

fn differentiate_channels(ch: &TraceChannels, nt: usize, nb: usize, dt: f64) -> TraceChannels {
    TraceChannels {
        u_wall: std::array::from_fn(|c| dt_apply(&ch.u_wall[c], nt, nb, dt)),
        dn_u: std::array::from_fn(|c| dt_apply(&ch.dn_u[c], nt, nb, dt)),
        h_wall: std::array::from_fn(|c| dt_apply(&ch.h_wall[c], nt, nb, dt)),
        dn_h: std::array::from_fn(|c| dt_apply(&ch.dn_h[c], nt, nb, dt)),
        p_wall: dt_apply(&ch.p_wall, nt, nb, dt),
    }
}

/// Extract wall traces, normal derivatives, pressure traces and the snapshot
/// from a trajectory, with time-derivative stacks up to `max_order`.
pub fn extract_traces(traj: &Trajectory, bc: &Bc, t0: f64, max_order: usize) -> TraceBundle {
    let domain = &traj.domain;
    let nb = boundary_total(domain);
    let nt = domain.nt;
    let mut base = TraceChannels::zeros(nb * (nt + 1));
    for (node, state) in traj.states.iter().enumerate() {
        let ch = extract_state(domain, state, bc);
        for c in 0..3 {
            base.u_wall[c][node * nb..(node + 1) * nb].copy_from_slice(&ch.u_wall[c]);
            base.dn_u[c][node * nb..(node + 1) * nb].copy_from_slice(&ch.dn_u[c]);
            base.h_wall[c][node * nb..(node + 1) * nb].copy_from_slice(&ch.h_wall[c]);
            base.dn_h[c][node * nb..(node + 1) * nb].copy_from_slice(&ch.dn_h[c]);
        }
        base.p_wall[node * nb..(node + 1) * nb].copy_from_slice(&ch.p_wall);
    }
    let dt = traj.dt();
    let mut orders = vec![base];
    for _ in 0..max_order {
        let next = differentiate_channels(orders.last().unwrap(), nt, nb, dt);
        orders.push(next);
    }
    let node = domain.nearest_time_node(t0);
    let s = traj.state(node);
    let snapshot =
        SnapshotData { node, u_cc: s.u.to_cell_vector(), h: s.h.clone(), p: s.p.clone() };
    TraceBundle { domain: domain.clone(), orders, snapshot }
}

/// Adjoint of the state-dependent part of trace extraction at one node:
/// spreads channel cotangents (order 0) back onto cell fields. The `u_wall`
/// and `h_wall` channels carry boundary data only and have no state
/// dependence.
pub fn extract_state_t(
    domain: &Domain,
    ch_cot: &TraceChannels,
    node: usize,
    ucc_bar: &mut VecField,
    h_bar: &mut VecField,
    p_bar: &mut ScalarField,
) {
    let nb = boundary_total(domain);
    for &face in ALL_FACES.iter() {
        let (na, nbb) = domain.face_dims(face);
        let ax = face.axis();
        let hn = domain.h[ax];
        let dn = wall_derivative_coeffs(hn);
        for a in 0..na {
            for b in 0..nbb {
                let bi = node * nb + domain.boundary_index(face, a, b);
                let c0 = domain.boundary_cell(face, a, b, 0);
                let c1 = domain.boundary_cell(face, a, b, 1);
                let c2 = domain.boundary_cell(face, a, b, 2);
                let id0 = domain.cell_index(c0[0], c0[1], c0[2]);
                let id1 = domain.cell_index(c1[0], c1[1], c1[2]);
                let id2 = domain.cell_index(c2[0], c2[1], c2[2]);
                for m in 0..3 {
                    // dn_u = -(dn[1] u0 + dn[2] u1) + data terms
                    let w = -ch_cot.dn_u[m][bi];
                    ucc_bar.comp[m][id0] += dn[1] * w;
                    ucc_bar.comp[m][id1] += dn[2] * w;
                    let wh = -ch_cot.dn_h[m][bi];
                    h_bar.comp[m][id0] += dn[1] * wh;
                    h_bar.comp[m][id1] += dn[2] * wh;
                }
                let wp = ch_cot.p_wall[bi];
                p_bar.data[id0] += WALL_EXTRAP[0] * wp;
                p_bar.data[id1] += WALL_EXTRAP[1] * wp;
                p_bar.data[id2] += WALL_EXTRAP[2] * wp;
            }
        }
    }
}

/// Build a synthetic trajectory from analytic fields sampled on the lattice
/// (used by manufactured-instance sweeps; no PDE solve involved).
pub fn sampled_trajectory(
    domain: &Domain,
    u: &dyn Fn([f64; 3], f64) -> [f64; 3],
    p: &dyn Fn([f64; 3], f64) -> f64,
    h: &dyn Fn([f64; 3], f64) -> [f64; 3],
) -> Trajectory {
    let mut states = Vec::with_capacity(domain.nt + 1);
    for node in 0..=domain.nt {
        let t = domain.time_node(node);
        let mut uf = FaceField::zeros(domain.n);
        for c in 0..3 {
            let d = FaceField::dims(domain.n, c);
            for i in 0..d[0] {
                for j in 0..d[1] {
                    for k in 0..d[2] {
                        let p3 = [i, j, k];
                        let (ta, tb) = ((c + 1) % 3, (c + 2) % 3);
                        let mut x = [0.0; 3];
                        x[c] = p3[c] as f64 * domain.h[c];
                        x[ta] = (p3[ta] as f64 + 0.5) * domain.h[ta];
                        x[tb] = (p3[tb] as f64 + 0.5) * domain.h[tb];
                        let id = uf.fidx(c, i, j, k);
                        uf.comp[c][id] = u(x, t)[c];
                    }
                }
            }
        }
        let mut pf = ScalarField::zeros(domain.n);
        let mut hf = VecField::zeros(domain.n);
        for i in 0..domain.n[0] {
            for j in 0..domain.n[1] {
                for k in 0..domain.n[2] {
                    let x = domain.cell_center(i, j, k);
                    let id = pf.idx(i, j, k);
                    pf.data[id] = p(x, t);
                    let hv = h(x, t);
                    for c in 0..3 {
                        hf.comp[c][id] = hv[c];
                    }
                }
            }
        }
        pf.subtract_mean();
        states.push(State { u: uf, p: pf, h: hf, t });
    }
    Trajectory { domain: domain.clone(), states, max_div: f64::NAN }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_stencil_is_fourth_order_interior() {
        let nt = 32;
        let dt = 1.0 / nt as f64;
        let series: Vec<f64> = (0..=nt).map(|k| ((k as f64 * dt) * 3.0).sin()).collect();
        let d = dt_apply(&series, nt, 1, dt);
        for k in 2..=nt - 2 {
            let t = k as f64 * dt;
            let exact = 3.0 * (3.0 * t).cos();
            assert!((d[k] - exact).abs() < 2e-5, "node {k}: {} vs {exact}", d[k]);
        }
        // ends second order
        assert!((d[0] - 3.0).abs() < 2e-2);
    }

    #[test]
    fn dt_transpose_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let nt = 9;
        let nb = 4;
        let x: Vec<f64> = (0..(nt + 1) * nb).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..(nt + 1) * nb).map(|_| rng.random::<f64>() - 0.5).collect();
        let dt = 0.1;
        let lhs: f64 = dt_apply(&x, nt, nb, dt).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(dt_apply_t(&y, nt, nb, dt)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn wall_stencils_exact_for_quadratics() {
        // f(xi) = 2 + 3 xi - xi^2 on nodes {0, h/2, 3h/2}: f'(0) = 3.
        let h = 0.25;
        let f = |xi: f64| 2.0 + 3.0 * xi - xi * xi;
        let c = wall_derivative_coeffs(h);
        let d = c[0] * f(0.0) + c[1] * f(0.5 * h) + c[2] * f(1.5 * h);
        assert!((d - 3.0).abs() < 1e-12);
        // extrapolation from {h/2, 3h/2, 5h/2} recovers f(0)
        let e = WALL_EXTRAP[0] * f(0.5 * h) + WALL_EXTRAP[1] * f(1.5 * h) + WALL_EXTRAP[2] * f(2.5 * h);
        assert!((e - f(0.0)).abs() < 1e-12);
    }
}
