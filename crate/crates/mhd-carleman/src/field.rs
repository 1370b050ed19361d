//! Flat-array field containers on the structured box grid.
//!
//! Scalars and cell-centered vectors live at cell centers, velocities live on
//! the MAC face lattice (component `c` on faces normal to axis `c`). Storage
//! is C-order with `k` (last axis) fastest.

/// Scalar samples at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub n: [usize; 3],
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: [usize; 3]) -> Self {
        Self { n, data: vec![0.0; n[0] * n[1] * n[2]] }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean(&self) -> f64 {
        crate::reduce::pairwise_sum(&self.data) / self.data.len() as f64
    }

    /// Shift so the discrete mean is exactly the pairwise-sum zero.
    pub fn subtract_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.data {
            *v -= m;
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| c * v).collect() }
    }

    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        debug_assert_eq!(self.n, x.n);
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }
}

/// Cell-centered 3-vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VecField {
    pub n: [usize; 3],
    pub comp: [Vec<f64>; 3],
}

impl VecField {
    pub fn zeros(n: [usize; 3]) -> Self {
        let len = n[0] * n[1] * n[2];
        Self { n, comp: [vec![0.0; len], vec![0.0; len], vec![0.0; len]] }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    pub fn axpy(&mut self, a: f64, x: &VecField) {
        debug_assert_eq!(self.n, x.n);
        for c in 0..3 {
            for (s, v) in self.comp[c].iter_mut().zip(&x.comp[c]) {
                *s += a * v;
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            comp: [
                self.comp[0].iter().map(|v| c * v).collect(),
                self.comp[1].iter().map(|v| c * v).collect(),
                self.comp[2].iter().map(|v| c * v).collect(),
            ],
        }
    }
}

/// MAC staggered vector field: component `c` sits on faces normal to axis `c`,
/// so its lattice has one extra layer along that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub n: [usize; 3],
    pub comp: [Vec<f64>; 3],
}

impl FaceField {
    pub fn dims(n: [usize; 3], c: usize) -> [usize; 3] {
        let mut d = n;
        d[c] += 1;
        d
    }

    pub fn zeros(n: [usize; 3]) -> Self {
        let len = |c: usize| {
            let d = Self::dims(n, c);
            d[0] * d[1] * d[2]
        };
        Self { n, comp: [vec![0.0; len(0)], vec![0.0; len(1)], vec![0.0; len(2)]] }
    }

    #[inline]
    pub fn fidx(&self, c: usize, i: usize, j: usize, k: usize) -> usize {
        let d = Self::dims(self.n, c);
        (i * d[1] + j) * d[2] + k
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize, j: usize, k: usize) -> f64 {
        self.comp[c][self.fidx(c, i, j, k)]
    }

    pub fn axpy(&mut self, a: f64, x: &FaceField) {
        debug_assert_eq!(self.n, x.n);
        for c in 0..3 {
            for (s, v) in self.comp[c].iter_mut().zip(&x.comp[c]) {
                *s += a * v;
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            comp: [
                self.comp[0].iter().map(|v| c * v).collect(),
                self.comp[1].iter().map(|v| c * v).collect(),
                self.comp[2].iter().map(|v| c * v).collect(),
            ],
        }
    }

    /// Interpolate every component to cell centers (average of the two
    /// bounding faces, second order).
    pub fn to_cell_vector(&self) -> VecField {
        let n = self.n;
        let mut out = VecField::zeros(n);
        for c in 0..3 {
            let mut step = [0usize; 3];
            step[c] = 1;
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for k in 0..n[2] {
                        let lo = self.at(c, i, j, k);
                        let hi = self.at(c, i + step[0], j + step[1], k + step[2]);
                        let id = out.idx(i, j, k);
                        out.comp[c][id] = 0.5 * (lo + hi);
                    }
                }
            }
        }
        out
    }

    /// Transpose of `to_cell_vector` (each cell value spreads half to its two faces).
    pub fn spread_from_cell_vector(v: &VecField) -> FaceField {
        let n = v.n;
        let mut out = FaceField::zeros(n);
        for c in 0..3 {
            let mut step = [0usize; 3];
            step[c] = 1;
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for k in 0..n[2] {
                        let val = 0.5 * v.comp[c][v.idx(i, j, k)];
                        let lo = out.fidx(c, i, j, k);
                        let hi = out.fidx(c, i + step[0], j + step[1], k + step[2]);
                        out.comp[c][lo] += val;
                        out.comp[c][hi] += val;
                    }
                }
            }
        }
        out
    }
}

/// Flattened view helpers shared by the linear solvers.
pub fn flat_concat(fields: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(fields.iter().map(|f| f.len()).sum());
    for f in fields {
        out.extend_from_slice(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interp_and_spread_are_transposes() {
        // <to_cell(u), v>_cells == <u, spread(v)>_faces for random data.
        let n = [3, 4, 5];
        let mut u = FaceField::zeros(n);
        let mut v = VecField::zeros(n);
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for c in 0..3 {
            for x in u.comp[c].iter_mut() {
                *x = next();
            }
            for x in v.comp[c].iter_mut() {
                *x = next();
            }
        }
        let ucc = u.to_cell_vector();
        let vs = FaceField::spread_from_cell_vector(&v);
        let lhs: f64 = (0..3)
            .map(|c| ucc.comp[c].iter().zip(&v.comp[c]).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let rhs: f64 = (0..3)
            .map(|c| u.comp[c].iter().zip(&vs.comp[c]).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
    }
}
