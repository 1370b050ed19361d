//! Second-order stencil primitives on the staggered box grid.
//!
//! Every linear core here assumes homogeneous Dirichlet data realized by
//! ghost reflection (`ghost = -inner`); inhomogeneous data enters through the
//! separate `*_bc_add` helpers so the linear part stays a clean operator with
//! an exact hand-written transpose. Wall-normal velocity faces are pinned
//! degrees of freedom: the cores read them as data and the transposes never
//! accumulate into them (callers zero pinned entries).

use crate::field::{FaceField, ScalarField, VecField};

#[inline]
fn idx(n: [usize; 3], i: usize, j: usize, k: usize) -> usize {
    (i * n[1] + j) * n[2] + k
}

/// Central difference along `axis` on the cell lattice, ghost = -inner.
pub fn dcell(n: [usize; 3], h: [f64; 3], axis: usize, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    let inv = 1.0 / (2.0 * h[axis]);
    let mut step = [0isize; 3];
    step[axis] = 1;
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let c = [i as isize, j as isize, k as isize];
                let lo = [c[0] - step[0], c[1] - step[1], c[2] - step[2]];
                let hi = [c[0] + step[0], c[1] + step[1], c[2] + step[2]];
                let fetch = |p: [isize; 3]| -> f64 {
                    if p[axis] < 0 || p[axis] >= n[axis] as isize {
                        // ghost = 2 g - inner, homogeneous core keeps -inner
                        -w[idx(n, i, j, k)]
                    } else {
                        w[idx(n, p[0] as usize, p[1] as usize, p[2] as usize)]
                    }
                };
                out[idx(n, i, j, k)] = (fetch(hi) - fetch(lo)) * inv;
            }
        }
    }
    out
}

/// Exact transpose of `dcell`.
pub fn dcell_t(n: [usize; 3], h: [f64; 3], axis: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let inv = 1.0 / (2.0 * h[axis]);
    let mut step = [0isize; 3];
    step[axis] = 1;
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let c = idx(n, i, j, k);
                let p = [i as isize, j as isize, k as isize];
                let lo = [p[0] - step[0], p[1] - step[1], p[2] - step[2]];
                let hi = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
                let vi = v[c] * inv;
                if hi[axis] < n[axis] as isize {
                    out[idx(n, hi[0] as usize, hi[1] as usize, hi[2] as usize)] += vi;
                } else {
                    out[c] -= vi; // ghost reflection folds onto the diagonal
                }
                if lo[axis] >= 0 {
                    out[idx(n, lo[0] as usize, lo[1] as usize, lo[2] as usize)] -= vi;
                } else {
                    out[c] += vi;
                }
            }
        }
    }
    out
}

/// Boundary contribution of inhomogeneous Dirichlet data to `dcell`:
/// at the wall-adjacent cells the ghost `2g - inner` adds `-g/h` (low wall)
/// or `+g/h` (high wall). `g_lo`/`g_hi` take the two tangential cell indices.
pub fn dcell_bc_add<FL, FH>(
    n: [usize; 3],
    h: [f64; 3],
    axis: usize,
    g_lo: FL,
    g_hi: FH,
    out: &mut [f64],
) where
    FL: Fn(usize, usize) -> f64,
    FH: Fn(usize, usize) -> f64,
{
    let (ta, tb) = (((axis + 1) % 3), ((axis + 2) % 3));
    let inv = 1.0 / h[axis];
    for a in 0..n[ta] {
        for b in 0..n[tb] {
            let mut lo = [0usize; 3];
            lo[ta] = a;
            lo[tb] = b;
            lo[axis] = 0;
            let mut hi = lo;
            hi[axis] = n[axis] - 1;
            out[idx(n, lo[0], lo[1], lo[2])] -= g_lo(a, b) * inv;
            out[idx(n, hi[0], hi[1], hi[2])] += g_hi(a, b) * inv;
        }
    }
}

/// 7-point Laplacian on the cell lattice, ghost = -inner. Symmetric, so it is
/// its own transpose.
pub fn lap_cell(n: [usize; 3], h: [f64; 3], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let c = idx(n, i, j, k);
                let wc = w[c];
                let mut acc = 0.0;
                for axis in 0..3 {
                    let inv = 1.0 / (h[axis] * h[axis]);
                    let p = [i, j, k];
                    let lo = if p[axis] == 0 {
                        -wc
                    } else {
                        let mut q = p;
                        q[axis] -= 1;
                        w[idx(n, q[0], q[1], q[2])]
                    };
                    let hi = if p[axis] == n[axis] - 1 {
                        -wc
                    } else {
                        let mut q = p;
                        q[axis] += 1;
                        w[idx(n, q[0], q[1], q[2])]
                    };
                    acc += (lo - 2.0 * wc + hi) * inv;
                }
                out[c] = acc;
            }
        }
    }
    out
}

/// Dirichlet data contribution to `lap_cell`: `+ 2 g / h^2` at wall cells.
pub fn lap_cell_bc_add<F>(n: [usize; 3], h: [f64; 3], g: F, out: &mut [f64])
where
    // g(face_axis, is_min, a, b) = boundary value at that wall cell center
    F: Fn(usize, bool, usize, usize) -> f64,
{
    for axis in 0..3 {
        let inv = 2.0 / (h[axis] * h[axis]);
        let (ta, tb) = ((axis + 1) % 3, (axis + 2) % 3);
        for a in 0..n[ta] {
            for b in 0..n[tb] {
                let mut lo = [0usize; 3];
                lo[ta] = a;
                lo[tb] = b;
                lo[axis] = 0;
                let mut hi = lo;
                hi[axis] = n[axis] - 1;
                out[idx(n, lo[0], lo[1], lo[2])] += g(axis, true, a, b) * inv;
                out[idx(n, hi[0], hi[1], hi[2])] += g(axis, false, a, b) * inv;
            }
        }
    }
}

/// Laplacian of one MAC velocity component on its own face lattice.
///
/// Along the component axis wall faces are lattice points (read as data, not
/// written); along tangential axes the ghost reflection applies. Output wall
/// entries are zero.
pub fn lap_face(n: [usize; 3], h: [f64; 3], c: usize, w: &[f64]) -> Vec<f64> {
    let d = FaceField::dims(n, c);
    let mut out = vec![0.0; w.len()];
    for i in 0..d[0] {
        for j in 0..d[1] {
            for k in 0..d[2] {
                let p = [i, j, k];
                if p[c] == 0 || p[c] == d[c] - 1 {
                    continue; // pinned wall-normal face
                }
                let id = (i * d[1] + j) * d[2] + k;
                let wc = w[id];
                let mut acc = 0.0;
                for axis in 0..3 {
                    let inv = 1.0 / (h[axis] * h[axis]);
                    let (lo, hi);
                    if axis == c {
                        let mut q = p;
                        q[axis] -= 1;
                        lo = w[(q[0] * d[1] + q[1]) * d[2] + q[2]];
                        let mut q = p;
                        q[axis] += 1;
                        hi = w[(q[0] * d[1] + q[1]) * d[2] + q[2]];
                    } else {
                        lo = if p[axis] == 0 {
                            -wc
                        } else {
                            let mut q = p;
                            q[axis] -= 1;
                            w[(q[0] * d[1] + q[1]) * d[2] + q[2]]
                        };
                        hi = if p[axis] == d[axis] - 1 {
                            -wc
                        } else {
                            let mut q = p;
                            q[axis] += 1;
                            w[(q[0] * d[1] + q[1]) * d[2] + q[2]]
                        };
                    }
                    acc += (lo - 2.0 * wc + hi) * inv;
                }
                out[id] = acc;
            }
        }
    }
    out
}

/// Divergence of a face field at cell centers (uses wall faces as data).
pub fn div_faces(dom_n: [usize; 3], h: [f64; 3], u: &FaceField) -> ScalarField {
    let n = dom_n;
    let mut out = ScalarField::zeros(n);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let mut acc = 0.0;
                for c in 0..3 {
                    let mut hi = [i, j, k];
                    hi[c] += 1;
                    acc += (u.at(c, hi[0], hi[1], hi[2]) - u.at(c, i, j, k)) / h[c];
                }
                let id = out.idx(i, j, k);
                out.data[id] = acc;
            }
        }
    }
    out
}

/// Cell-to-face difference (pressure gradient); wall faces get zero.
pub fn grad_to_faces(n: [usize; 3], h: [f64; 3], p: &ScalarField) -> FaceField {
    let mut out = FaceField::zeros(n);
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let pidx = [i, j, k];
                    if pidx[c] == 0 || pidx[c] == d[c] - 1 {
                        continue;
                    }
                    let mut lo = pidx;
                    lo[c] -= 1;
                    let id = out.fidx(c, i, j, k);
                    out.comp[c][id] =
                        (p.at(pidx[0], pidx[1], pidx[2]) - p.at(lo[0], lo[1], lo[2])) / h[c];
                }
            }
        }
    }
    out
}

/// Transpose of `div_faces` restricted to interior faces: `div^T = -grad`.
pub fn div_faces_t(n: [usize; 3], h: [f64; 3], v: &ScalarField) -> FaceField {
    let g = grad_to_faces(n, h, v);
    g.scaled(-1.0)
}

/// Advection `(coef . grad) w` on the cell lattice, per component of `w`.
/// `coef` gives the three advecting components at each cell.
pub fn advect(n: [usize; 3], h: [f64; 3], coef: &[Vec<f64>; 3], w: &VecField) -> VecField {
    let mut out = VecField::zeros(n);
    for m in 0..3 {
        for d in 0..3 {
            let dw = dcell(n, h, d, &w.comp[m]);
            for (o, (cv, dv)) in out.comp[m].iter_mut().zip(coef[d].iter().zip(&dw)) {
                *o += cv * dv;
            }
        }
    }
    out
}

/// Transpose of `advect`.
pub fn advect_t(n: [usize; 3], h: [f64; 3], coef: &[Vec<f64>; 3], v: &VecField) -> VecField {
    let mut out = VecField::zeros(n);
    let len = v.comp[0].len();
    for m in 0..3 {
        for d in 0..3 {
            let mut prod = vec![0.0; len];
            for i in 0..len {
                prod[i] = coef[d][i] * v.comp[m][i];
            }
            let back = dcell_t(n, h, d, &prod);
            for (o, b) in out.comp[m].iter_mut().zip(&back) {
                *o += b;
            }
        }
    }
    out
}

/// Pointwise reaction `(w . grad) C`: `out_m = sum_d w_d * grad_C[m][d]`.
/// `grad_c[m][d]` holds the analytic `d_d C_m` samples.
pub fn reaction(grad_c: &[[Vec<f64>; 3]; 3], w: &VecField) -> VecField {
    let mut out = VecField::zeros(w.n);
    for m in 0..3 {
        for d in 0..3 {
            for (o, (g, wv)) in out.comp[m].iter_mut().zip(grad_c[m][d].iter().zip(&w.comp[d])) {
                *o += g * wv;
            }
        }
    }
    out
}

/// Transpose of `reaction` (pointwise matrix transpose).
pub fn reaction_t(grad_c: &[[Vec<f64>; 3]; 3], v: &VecField) -> VecField {
    let mut out = VecField::zeros(v.n);
    for d in 0..3 {
        for m in 0..3 {
            for (o, (g, vv)) in out.comp[d].iter_mut().zip(grad_c[m][d].iter().zip(&v.comp[m])) {
                *o += g * vv;
            }
        }
    }
    out
}

/// `grad (C . w)` expanded by the product rule:
/// `out_m = sum_d [ (d_m C_d) w_d + C_d (d_m w_d) ]`.
pub fn grad_of_dot(
    n: [usize; 3],
    h: [f64; 3],
    c_vals: &[Vec<f64>; 3],
    c_grad: &[[Vec<f64>; 3]; 3],
    w: &VecField,
) -> VecField {
    let mut out = VecField::zeros(n);
    for m in 0..3 {
        for d in 0..3 {
            let dw = dcell(n, h, m, &w.comp[d]);
            for (idx, o) in out.comp[m].iter_mut().enumerate() {
                *o += c_grad[d][m][idx] * w.comp[d][idx] + c_vals[d][idx] * dw[idx];
            }
        }
    }
    out
}

/// Transpose of `grad_of_dot`.
pub fn grad_of_dot_t(
    n: [usize; 3],
    h: [f64; 3],
    c_vals: &[Vec<f64>; 3],
    c_grad: &[[Vec<f64>; 3]; 3],
    v: &VecField,
) -> VecField {
    let mut out = VecField::zeros(v.n);
    let len = v.comp[0].len();
    for m in 0..3 {
        for d in 0..3 {
            let mut prod = vec![0.0; len];
            for i in 0..len {
                out.comp[d][i] += c_grad[d][m][i] * v.comp[m][i];
                prod[i] = c_vals[d][i] * v.comp[m][i];
            }
            let back = dcell_t(n, h, m, &prod);
            for (o, b) in out.comp[d].iter_mut().zip(&back) {
                *o += b;
            }
        }
    }
    out
}

/// Zero the pinned wall-normal entries of a face field in place.
pub fn zero_walls(u: &mut FaceField) {
    let n = u.n;
    for c in 0..3 {
        let d = FaceField::dims(n, c);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i, j, k];
                    if p[c] == 0 || p[c] == d[c] - 1 {
                        let id = u.fidx(c, i, j, k);
                        u.comp[c][id] = 0.0;
                    }
                }
            }
        }
    }
}
