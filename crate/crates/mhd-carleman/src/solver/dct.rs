//! Cosine-transform machinery shared by the direct pressure solver and the
//! spectral boundary norms.
//!
//! The staggered-grid Neumann Laplacian (ghost reflection at walls) is
//! diagonalized exactly by the DCT-II basis `cos(pi k (i + 1/2) / n)`, with
//! per-axis eigenvalues `-(4/h^2) sin^2(pi k / (2n))`.

use crate::field::ScalarField;

/// Precomputed dense DCT-II and its inverse for one axis length.
#[derive(Debug, Clone)]
pub struct Dct1d {
    pub n: usize,
    /// fwd[k * n + i] = cos(pi k (i + 1/2) / n)
    fwd: Vec<f64>,
    /// inv[i * n + k] = w_k cos(pi k (i + 1/2) / n), w_0 = 1/n, w_k = 2/n
    inv: Vec<f64>,
}

impl Dct1d {
    pub fn new(n: usize) -> Dct1d {
        let mut fwd = vec![0.0; n * n];
        let mut inv = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                let c = (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
                fwd[k * n + i] = c;
                let w = if k == 0 { 1.0 / n as f64 } else { 2.0 / n as f64 };
                inv[i * n + k] = w * c;
            }
        }
        Dct1d { n, fwd, inv }
    }

    pub fn forward_coef(&self, k: usize, i: usize) -> f64 {
        self.fwd[k * self.n + i]
    }

    /// Eigenvalue of the 1D staggered Neumann Laplacian for mode k.
    pub fn eigenvalue(&self, k: usize, h: f64) -> f64 {
        let s = (std::f64::consts::PI * k as f64 / (2.0 * self.n as f64)).sin();
        -4.0 / (h * h) * s * s
    }

    fn apply(&self, mat: &[f64], line_in: &[f64], line_out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let mut acc = 0.0;
            let row = &mat[k * n..(k + 1) * n];
            for i in 0..n {
                acc += row[i] * line_in[i];
            }
            line_out[k] = acc;
        }
    }

    pub fn forward_line(&self, line_in: &[f64], line_out: &mut [f64]) {
        self.apply(&self.fwd, line_in, line_out);
    }

    pub fn inverse_line(&self, line_in: &[f64], line_out: &mut [f64]) {
        self.apply(&self.inv, line_in, line_out);
    }
}

fn transform_axis(data: &mut [f64], n: [usize; 3], axis: usize, dct: &Dct1d, forward: bool) {
    let mut line = vec![0.0; n[axis]];
    let mut out = vec![0.0; n[axis]];
    let (na, nb) = match axis {
        0 => (n[1], n[2]),
        1 => (n[0], n[2]),
        _ => (n[0], n[1]),
    };
    for a in 0..na {
        for b in 0..nb {
            for s in 0..n[axis] {
                let idx = match axis {
                    0 => (s * n[1] + a) * n[2] + b,
                    1 => (a * n[1] + s) * n[2] + b,
                    _ => (a * n[1] + b) * n[2] + s,
                };
                line[s] = data[idx];
            }
            if forward {
                dct.forward_line(&line, &mut out);
            } else {
                dct.inverse_line(&line, &mut out);
            }
            for s in 0..n[axis] {
                let idx = match axis {
                    0 => (s * n[1] + a) * n[2] + b,
                    1 => (a * n[1] + s) * n[2] + b,
                    _ => (a * n[1] + b) * n[2] + s,
                };
                data[idx] = out[s];
            }
        }
    }
}

/// Direct solve of the cell-centered Neumann Poisson problem
/// `Lap phi = rhs - mean(rhs)` with `mean(phi) = 0`.
pub fn poisson_dct(n: [usize; 3], h: [f64; 3], rhs: &ScalarField) -> ScalarField {
    let dcts = [Dct1d::new(n[0]), Dct1d::new(n[1]), Dct1d::new(n[2])];
    let mut data = rhs.data.clone();
    for axis in 0..3 {
        transform_axis(&mut data, n, axis, &dcts[axis], true);
    }
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let idx = (i * n[1] + j) * n[2] + k;
                if i == 0 && j == 0 && k == 0 {
                    data[idx] = 0.0; // kernel mode: enforces both mean conditions
                    continue;
                }
                let lam = dcts[0].eigenvalue(i, h[0])
                    + dcts[1].eigenvalue(j, h[1])
                    + dcts[2].eigenvalue(k, h[2]);
                data[idx] /= lam;
            }
        }
    }
    for axis in 0..3 {
        transform_axis(&mut data, n, axis, &dcts[axis], false);
    }
    ScalarField { n, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::linsolve;
    use crate::solver::stencil;

    #[test]
    fn dct_roundtrip() {
        let d = Dct1d::new(7);
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut c = vec![0.0; 7];
        let mut back = vec![0.0; 7];
        d.forward_line(&x, &mut c);
        d.inverse_line(&c, &mut back);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn dct_poisson_matches_cg_oracle() {
        let n = [8, 6, 10];
        let h = [1.0 / 8.0, 1.0 / 6.0, 1.0 / 10.0];
        let mut rhs = ScalarField::zeros(n);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for v in rhs.data.iter_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        let direct = poisson_dct(n, h, &rhs);
        let (cg, _) = linsolve::poisson_neumann(n, h, &rhs, 1e-13, 20_000).unwrap();
        let scale = direct.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in direct.data.iter().zip(&cg.data) {
            assert!((a - b).abs() < 1e-9 * scale.max(1.0), "{a} vs {b}");
        }
        // residual check: Lap phi = rhs - mean
        let g = stencil::grad_to_faces(n, h, &direct);
        let lap = stencil::div_faces(n, h, &g);
        let mean = rhs.mean();
        for (l, r) in lap.data.iter().zip(&rhs.data) {
            assert!((l - (r - mean)).abs() < 1e-10 * scale.max(1.0));
        }
        assert!(direct.mean().abs() < 1e-12);
    }
}

/// Dense DST pair for the Dirichlet directions of the Helmholtz solves.
///
/// `interior` (DST-I) spans the n-1 interior face layers of a velocity
/// component along its own axis (walls pinned); `half` (DST-II) spans the n
/// cell layers of a ghost-reflected direction. Both diagonalize the 1D
/// second-difference operator with eigenvalue `-(4/h^2) sin^2(pi k / (2n))`.
#[derive(Debug, Clone)]
pub struct Dst1d {
    /// number of sample points of the transform
    pub len: usize,
    /// modulus n entering the eigenvalues
    pub n: usize,
    fwd: Vec<f64>,
    inv: Vec<f64>,
}

impl Dst1d {
    /// DST-I on the interior face layers: points i = 1..n-1 of a lattice with
    /// walls at 0 and n.
    pub fn interior(n: usize) -> Dst1d {
        let m = n - 1;
        let mut fwd = vec![0.0; m * m];
        let mut inv = vec![0.0; m * m];
        for k in 1..=m {
            for i in 1..=m {
                let v = (std::f64::consts::PI * k as f64 * i as f64 / n as f64).sin();
                fwd[(k - 1) * m + (i - 1)] = v;
                inv[(i - 1) * m + (k - 1)] = 2.0 / n as f64 * v;
            }
        }
        Dst1d { len: m, n, fwd, inv }
    }

    /// DST-II on cell layers with antisymmetric ghost reflection at both walls.
    pub fn half(n: usize) -> Dst1d {
        let mut fwd = vec![0.0; n * n];
        let mut inv = vec![0.0; n * n];
        for k in 1..=n {
            for a in 0..n {
                let v = (std::f64::consts::PI * k as f64 * (a as f64 + 0.5) / n as f64).sin();
                fwd[(k - 1) * n + a] = v;
                let w = if k == n { 1.0 / n as f64 } else { 2.0 / n as f64 };
                inv[a * n + (k - 1)] = w * v;
            }
        }
        Dst1d { len: n, n, fwd, inv }
    }

    pub fn eigenvalue(&self, kidx: usize, h: f64) -> f64 {
        let k = kidx + 1;
        let s = (std::f64::consts::PI * k as f64 / (2.0 * self.n as f64)).sin();
        -4.0 / (h * h) * s * s
    }

    fn apply(&self, mat: &[f64], line_in: &[f64], line_out: &mut [f64]) {
        let m = self.len;
        for k in 0..m {
            let row = &mat[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for i in 0..m {
                acc += row[i] * line_in[i];
            }
            line_out[k] = acc;
        }
    }

    pub fn forward_line(&self, line_in: &[f64], line_out: &mut [f64]) {
        self.apply(&self.fwd, line_in, line_out);
    }

    pub fn inverse_line(&self, line_in: &[f64], line_out: &mut [f64]) {
        self.apply(&self.inv, line_in, line_out);
    }
}

fn dst_transform_axis(
    data: &mut [f64],
    dims: [usize; 3],
    axis: usize,
    dst: &Dst1d,
    forward: bool,
) {
    assert_eq!(dims[axis], dst.len);
    let mut line = vec![0.0; dims[axis]];
    let mut out = vec![0.0; dims[axis]];
    let (na, nb) = match axis {
        0 => (dims[1], dims[2]),
        1 => (dims[0], dims[2]),
        _ => (dims[0], dims[1]),
    };
    for a in 0..na {
        for b in 0..nb {
            for s in 0..dims[axis] {
                let idx = match axis {
                    0 => (s * dims[1] + a) * dims[2] + b,
                    1 => (a * dims[1] + s) * dims[2] + b,
                    _ => (a * dims[1] + b) * dims[2] + s,
                };
                line[s] = data[idx];
            }
            if forward {
                dst.forward_line(&line, &mut out);
            } else {
                dst.inverse_line(&line, &mut out);
            }
            for s in 0..dims[axis] {
                let idx = match axis {
                    0 => (s * dims[1] + a) * dims[2] + b,
                    1 => (a * dims[1] + s) * dims[2] + b,
                    _ => (a * dims[1] + b) * dims[2] + s,
                };
                data[idx] = out[s];
            }
        }
    }
}

/// Direct solve of `(I - coef lap_face_c) x = rhs` for one velocity component
/// (interior faces; wall entries of the result are zero). Exactly symmetric.
pub fn helmholtz_face_dst(
    n: [usize; 3],
    h: [f64; 3],
    c: usize,
    coef: f64,
    rhs: &[f64],
) -> Vec<f64> {
    let d = crate::field::FaceField::dims(n, c);
    // gather the interior lattice along the component axis
    let mut idims = d;
    idims[c] = n[c] - 1;
    let mut interior = vec![0.0; idims[0] * idims[1] * idims[2]];
    {
        let mut ii = 0;
        for i in 0..idims[0] {
            for j in 0..idims[1] {
                for k in 0..idims[2] {
                    let mut p = [i, j, k];
                    p[c] += 1;
                    interior[ii] = rhs[(p[0] * d[1] + p[1]) * d[2] + p[2]];
                    ii += 1;
                }
            }
        }
    }
    let dsts: [Dst1d; 3] = std::array::from_fn(|axis| {
        if axis == c {
            Dst1d::interior(n[axis])
        } else {
            Dst1d::half(n[axis])
        }
    });
    for axis in 0..3 {
        dst_transform_axis(&mut interior, idims, axis, &dsts[axis], true);
    }
    for i in 0..idims[0] {
        for j in 0..idims[1] {
            for k in 0..idims[2] {
                let lam = dsts[0].eigenvalue(i, h[0])
                    + dsts[1].eigenvalue(j, h[1])
                    + dsts[2].eigenvalue(k, h[2]);
                interior[(i * idims[1] + j) * idims[2] + k] /= 1.0 - coef * lam;
            }
        }
    }
    for axis in 0..3 {
        dst_transform_axis(&mut interior, idims, axis, &dsts[axis], false);
    }
    let mut out = vec![0.0; rhs.len()];
    {
        let mut ii = 0;
        for i in 0..idims[0] {
            for j in 0..idims[1] {
                for k in 0..idims[2] {
                    let mut p = [i, j, k];
                    p[c] += 1;
                    out[(p[0] * d[1] + p[1]) * d[2] + p[2]] = interior[ii];
                    ii += 1;
                }
            }
        }
    }
    out
}

/// Direct solve of `(I - coef lap_cell) x = rhs` on the cell lattice
/// (ghost-reflected Dirichlet walls in every direction).
pub fn helmholtz_cell_dst(n: [usize; 3], h: [f64; 3], coef: f64, rhs: &[f64]) -> Vec<f64> {
    let dsts: [Dst1d; 3] = std::array::from_fn(|axis| Dst1d::half(n[axis]));
    let mut data = rhs.to_vec();
    for axis in 0..3 {
        dst_transform_axis(&mut data, n, axis, &dsts[axis], true);
    }
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let lam = dsts[0].eigenvalue(i, h[0])
                    + dsts[1].eigenvalue(j, h[1])
                    + dsts[2].eigenvalue(k, h[2]);
                data[(i * n[1] + j) * n[2] + k] /= 1.0 - coef * lam;
            }
        }
    }
    for axis in 0..3 {
        dst_transform_axis(&mut data, n, axis, &dsts[axis], false);
    }
    data
}

#[cfg(test)]
mod dst_tests {
    use super::*;
    use crate::solver::linsolve;
    use rand::{Rng, SeedableRng};

    #[test]
    fn dst_helmholtz_matches_cg_oracle() {
        let n = [6, 5, 7];
        let h = [1.0 / 6.0, 0.2, 1.0 / 7.0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        // cell version
        let rhs: Vec<f64> = (0..210).map(|_| rng.random::<f64>() - 0.5).collect();
        let direct = helmholtz_cell_dst(n, h, 0.037, &rhs);
        let (cg, _) = linsolve::helmholtz_cell(n, h, 0.037, &rhs, 1e-13, 10000).unwrap();
        for (a, b) in direct.iter().zip(&cg) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        // face version, every component
        for c in 0..3 {
            let d = crate::field::FaceField::dims(n, c);
            let len = d[0] * d[1] * d[2];
            let mut rhs: Vec<f64> = (0..len).map(|_| rng.random::<f64>() - 0.5).collect();
            // pinned walls carry no rhs
            for i in 0..d[0] {
                for j in 0..d[1] {
                    for k in 0..d[2] {
                        let p = [i, j, k];
                        if p[c] == 0 || p[c] == d[c] - 1 {
                            rhs[(i * d[1] + j) * d[2] + k] = 0.0;
                        }
                    }
                }
            }
            let direct = helmholtz_face_dst(n, h, c, 0.042, &rhs);
            let (cg, _) = linsolve::helmholtz_face(n, h, c, 0.042, &rhs, 1e-13, 10000).unwrap();
            for (a, b) in direct.iter().zip(&cg) {
                assert!((a - b).abs() < 1e-10, "component {c}: {a} vs {b}");
            }
        }
    }
}
