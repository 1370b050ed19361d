//! Boundary-trace norms: per-face L2 and H1, the spectral fractional H^{1/2}
//! norm, and time-integrated (trapezoid) combinations.
//!
//! The H^{1/2} norm expands the trace in the tensor DCT-II basis per face and
//! weights each mode by `sqrt(1 + |kappa|^2)` with `kappa = (pi ka / La,
//! pi kb / Lb)`. With this normalization a constant trace `c` has norm^2
//! `c^2 * area`, and the unit-amplitude (1,1) mode has norm^2
//! `sqrt(1 + |kappa_11|^2) * area / 4`. An H1 surrogate (upper-bound mode) is
//! selectable for cross-checks.

use serde::{Deserialize, Serialize};

use crate::geometry::{Domain, Face, SubBoundary, ALL_FACES};
use crate::solver::dct::Dct1d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfNormMode {
    Spectral,
    H1Surrogate,
}

/// L2(face)^2 of one per-face slice (samples at face cell centers).
pub fn face_l2_sq(domain: &Domain, face: Face, vals: &[f64]) -> f64 {
    let area = domain.face_cell_area(face);
    vals.iter().map(|v| v * v * area).sum()
}

/// Squared tangential-gradient seminorm on one face (central differences,
/// one-sided at the face edges).
pub fn face_tangential_grad_sq(domain: &Domain, face: Face, vals: &[f64]) -> f64 {
    let (na, nb) = domain.face_dims(face);
    let (ta, tb) = face.tangents();
    let (ha, hb) = (domain.h[ta], domain.h[tb]);
    let area = domain.face_cell_area(face);
    let at = |a: usize, b: usize| vals[a * nb + b];
    let mut acc = 0.0;
    for a in 0..na {
        for b in 0..nb {
            let da = if a == 0 {
                (at(1, b) - at(0, b)) / ha
            } else if a == na - 1 {
                (at(na - 1, b) - at(na - 2, b)) / ha
            } else {
                (at(a + 1, b) - at(a - 1, b)) / (2.0 * ha)
            };
            let db = if b == 0 {
                (at(a, 1) - at(a, 0)) / hb
            } else if b == nb - 1 {
                (at(a, nb - 1) - at(a, nb - 2)) / hb
            } else {
                (at(a, b + 1) - at(a, b - 1)) / (2.0 * hb)
            };
            acc += (da * da + db * db) * area;
        }
    }
    acc
}

/// H1(face)^2 = L2^2 + tangential gradient^2.
pub fn face_h1_sq(domain: &Domain, face: Face, vals: &[f64]) -> f64 {
    face_l2_sq(domain, face, vals) + face_tangential_grad_sq(domain, face, vals)
}

/// Squared H^{1/2} norm of one face slice.
pub fn face_h_half_sq(domain: &Domain, face: Face, vals: &[f64], mode: HalfNormMode) -> f64 {
    match mode {
        HalfNormMode::H1Surrogate => face_h1_sq(domain, face, vals),
        HalfNormMode::Spectral => {
            let (na, nb) = domain.face_dims(face);
            let (ta, tb) = face.tangents();
            let (la, lb) = (domain.lengths[ta], domain.lengths[tb]);
            let total_area = la * lb;
            let da = Dct1d::new(na);
            let db = Dct1d::new(nb);
            // 2D DCT-II: coefficients X[ka][kb]
            let mut tmp = vec![0.0; na * nb];
            for ka in 0..na {
                for b in 0..nb {
                    let mut acc = 0.0;
                    for a in 0..na {
                        acc += da.forward_coef(ka, a) * vals[a * nb + b];
                    }
                    tmp[ka * nb + b] = acc;
                }
            }
            let mut acc_norm = 0.0;
            for ka in 0..na {
                let wa = if ka == 0 { 1.0 } else { 0.5 };
                let ca = if ka == 0 { 1.0 / na as f64 } else { 2.0 / na as f64 };
                let kap_a = std::f64::consts::PI * ka as f64 / la;
                for kb in 0..nb {
                    let mut x = 0.0;
                    for b in 0..nb {
                        x += db.forward_coef(kb, b) * tmp[ka * nb + b];
                    }
                    let cb = if kb == 0 { 1.0 / nb as f64 } else { 2.0 / nb as f64 };
                    let amp = ca * cb * x;
                    let wb = if kb == 0 { 1.0 } else { 0.5 };
                    let kap_b = std::f64::consts::PI * kb as f64 / lb;
                    let mult = (1.0 + kap_a * kap_a + kap_b * kap_b).sqrt();
                    acc_norm += total_area * wa * wb * mult * amp * amp;
                }
            }
            acc_norm
        }
    }
}

/// Squared H^{1/2}(boundary) norm of one time slice from a flat
/// boundary-indexed array, restricted to `gamma` when given (face-wise).
pub fn boundary_h_half_sq(
    domain: &Domain,
    slice: &[f64],
    gamma: Option<&SubBoundary>,
    mode: HalfNormMode,
) -> f64 {
    let mut acc = 0.0;
    let mut off = 0;
    for &face in ALL_FACES.iter() {
        let cnt = domain.face_cell_count(face);
        let included = gamma.map(|g| g.contains(face)).unwrap_or(true);
        if included {
            acc += face_h_half_sq(domain, face, &slice[off..off + cnt], mode);
        }
        off += cnt;
    }
    acc
}

/// Per-face L2 over the (possibly restricted) boundary for one time slice.
pub fn boundary_l2_sq(domain: &Domain, slice: &[f64], gamma: Option<&SubBoundary>) -> f64 {
    let mut acc = 0.0;
    let mut off = 0;
    for &face in ALL_FACES.iter() {
        let cnt = domain.face_cell_count(face);
        let included = gamma.map(|g| g.contains(face)).unwrap_or(true);
        if included {
            acc += face_l2_sq(domain, face, &slice[off..off + cnt]);
        }
        off += cnt;
    }
    acc
}

pub fn boundary_h1_sq(domain: &Domain, slice: &[f64], gamma: Option<&SubBoundary>) -> f64 {
    let mut acc = 0.0;
    let mut off = 0;
    for &face in ALL_FACES.iter() {
        let cnt = domain.face_cell_count(face);
        let included = gamma.map(|g| g.contains(face)).unwrap_or(true);
        if included {
            acc += face_h1_sq(domain, face, &slice[off..off + cnt]);
        }
        off += cnt;
    }
    acc
}

/// Seven-term partial-boundary trace bundle: first-order time-Sobolev H1
/// norms of the wall values of u and H, second-order time-Sobolev L2 norms,
/// first-order norms of the normal derivatives, and the H^{1/2} pressure
/// trace, all restricted to the observed sub-boundary. Needs derivative
/// stacks up to order 2.
pub fn partial_trace_norms_sq(
    bundle: &crate::solver::TraceBundle,
    gamma: &SubBoundary,
    mode: HalfNormMode,
) -> f64 {
    let dom = &bundle.domain;
    let nb = dom.total_boundary_cells();
    let nt = dom.nt;
    let dt = dom.dt();
    assert!(bundle.max_order() >= 2, "need time derivatives to order 2");
    let l2g = |series: &[f64]| {
        time_integrated(series, nt, nb, dt, |s| boundary_l2_sq(dom, s, Some(gamma)))
    };
    let h1g = |series: &[f64]| {
        time_integrated(series, nt, nb, dt, |s| boundary_h1_sq(dom, s, Some(gamma)))
    };
    let mut acc = 0.0;
    for c in 0..3 {
        for j in 0..=1 {
            acc += h1g(&bundle.orders[j].u_wall[c]);
            acc += h1g(&bundle.orders[j].h_wall[c]);
            acc += l2g(&bundle.orders[j].dn_u[c]);
            acc += l2g(&bundle.orders[j].dn_h[c]);
        }
        for j in 0..=2 {
            acc += l2g(&bundle.orders[j].u_wall[c]);
            acc += l2g(&bundle.orders[j].h_wall[c]);
        }
    }
    for j in 0..=1 {
        acc += time_integrated(&bundle.orders[j].p_wall, nt, nb, dt, |s| {
            boundary_h_half_sq(dom, s, Some(gamma), mode)
        });
    }
    acc
}

/// Trapezoid time integral of per-node values.
pub fn time_trapezoid(vals: &[f64], dt: f64) -> f64 {
    if vals.len() < 2 {
        return 0.0;
    }
    let inner: f64 = vals[1..vals.len() - 1].iter().sum();
    dt * (0.5 * vals[0] + inner + 0.5 * vals[vals.len() - 1])
}

/// `int_0^T norm_sq(slice(t)) dt` for a node-major boundary series.
pub fn time_integrated<Fm>(series: &[f64], nt: usize, nb: usize, dt: f64, norm_sq: Fm) -> f64
where
    Fm: Fn(&[f64]) -> f64,
{
    let per_node: Vec<f64> = (0..=nt).map(|k| norm_sq(&series[k * nb..(k + 1) * nb])).collect();
    time_trapezoid(&per_node, dt)
}
