//! Computational domain: axis-aligned box, staggered-grid metadata, boundary
//! face decomposition, observed sub-boundary selection, and superlevel-set
//! masks in space and space-time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// One of the six box faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

pub const ALL_FACES: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

impl Face {
    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_min(self) -> bool {
        matches!(self, Face::XMin | Face::YMin | Face::ZMin)
    }

    /// The two in-face (tangential) axes, in cyclic order.
    pub fn tangents(self) -> (usize, usize) {
        let a = self.axis();
        ((a + 1) % 3, (a + 2) % 3)
    }

    pub fn index(self) -> usize {
        match self {
            Face::XMin => 0,
            Face::XMax => 1,
            Face::YMin => 2,
            Face::YMax => 3,
            Face::ZMin => 4,
            Face::ZMax => 5,
        }
    }

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis()] = if self.is_min() { -1.0 } else { 1.0 };
        n
    }

    pub fn parse(s: &str) -> Result<Face> {
        match s {
            "x_min" => Ok(Face::XMin),
            "x_max" => Ok(Face::XMax),
            "y_min" => Ok(Face::YMin),
            "y_max" => Ok(Face::YMax),
            "z_min" => Ok(Face::ZMin),
            "z_max" => Ok(Face::ZMax),
            other => Err(Error::Config(format!("unknown face identifier `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::XMin => "x_min",
            Face::XMax => "x_max",
            Face::YMin => "y_min",
            Face::YMax => "y_max",
            Face::ZMin => "z_min",
            Face::ZMax => "z_max",
        }
    }
}

/// Axis-aligned box with a uniform staggered grid and a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lengths: [f64; 3],
    pub n: [usize; 3],
    pub h: [f64; 3],
    pub t_final: f64,
    pub nt: usize,
}

/// Cells per axis below which interior stencils degenerate.
pub const MIN_CELLS_PER_AXIS: usize = 4;

pub fn build_box_domain(lengths: [f64; 3], n: [usize; 3], t_final: f64, nt: usize) -> Result<Domain> {
    for a in 0..3 {
        if !(lengths[a] > 0.0) || !lengths[a].is_finite() {
            return Err(Error::Sizing(format!("lengths[{a}] = {} must be positive", lengths[a])));
        }
        if n[a] < MIN_CELLS_PER_AXIS {
            return Err(Error::Sizing(format!(
                "n[{a}] = {} but interior stencils need at least {MIN_CELLS_PER_AXIS} cells per axis",
                n[a]
            )));
        }
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::Sizing(format!("T = {t_final} must be positive")));
    }
    if nt < 2 {
        return Err(Error::Sizing(format!("nt = {nt} must be at least 2")));
    }
    let h = [lengths[0] / n[0] as f64, lengths[1] / n[1] as f64, lengths[2] / n[2] as f64];
    Ok(Domain { lengths, n, h, t_final, nt })
}

impl Domain {
    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    #[inline]
    pub fn cell_coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        [i, j, k]
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) * self.h[0],
            (j as f64 + 0.5) * self.h[1],
            (k as f64 + 0.5) * self.h[2],
        ]
    }

    pub fn time_node(&self, k: usize) -> f64 {
        // Exact endpoint at k == nt regardless of rounding.
        if k == self.nt {
            self.t_final
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn nearest_time_node(&self, t: f64) -> usize {
        let k = (t / self.dt()).round();
        (k.max(0.0) as usize).min(self.nt)
    }

    /// Sample a function of position at every cell center.
    pub fn sample_cells<F: Fn([f64; 3]) -> f64>(&self, f: F) -> ScalarField {
        let mut out = ScalarField::zeros(self.n);
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                for k in 0..self.n[2] {
                    let id = out.idx(i, j, k);
                    out.data[id] = f(self.cell_center(i, j, k));
                }
            }
        }
        out
    }

    /// Per-face 2D dims of the boundary-cell lattice: `(n[ta], n[tb])`.
    pub fn face_dims(&self, face: Face) -> (usize, usize) {
        let (ta, tb) = face.tangents();
        (self.n[ta], self.n[tb])
    }

    pub fn face_cell_count(&self, face: Face) -> usize {
        let (na, nb) = self.face_dims(face);
        na * nb
    }

    pub fn face_cell_area(&self, face: Face) -> f64 {
        let (ta, tb) = face.tangents();
        self.h[ta] * self.h[tb]
    }

    /// Center of the boundary facet of boundary cell `(a, b)` on `face`.
    pub fn face_center(&self, face: Face, a: usize, b: usize) -> [f64; 3] {
        let (ta, tb) = face.tangents();
        let ax = face.axis();
        let mut x = [0.0; 3];
        x[ax] = if face.is_min() { 0.0 } else { self.lengths[ax] };
        x[ta] = (a as f64 + 0.5) * self.h[ta];
        x[tb] = (b as f64 + 0.5) * self.h[tb];
        x
    }

    /// Interior cell (i,j,k) owning boundary cell `(a,b)` of `face`, at `layer`
    /// cells in from the wall (layer 0 touches the wall).
    pub fn boundary_cell(&self, face: Face, a: usize, b: usize, layer: usize) -> [usize; 3] {
        let (ta, tb) = face.tangents();
        let ax = face.axis();
        let mut c = [0usize; 3];
        c[ta] = a;
        c[tb] = b;
        c[ax] = if face.is_min() { layer } else { self.n[ax] - 1 - layer };
        c
    }

    pub fn total_boundary_cells(&self) -> usize {
        ALL_FACES.iter().map(|&f| self.face_cell_count(f)).sum()
    }

    /// Flat index of boundary cell `(face, a, b)` in face-major order.
    pub fn boundary_index(&self, face: Face, a: usize, b: usize) -> usize {
        let mut off = 0;
        for &f in ALL_FACES.iter() {
            if f == face {
                break;
            }
            off += self.face_cell_count(f);
        }
        let (_, nb) = self.face_dims(face);
        off + a * nb + b
    }

    /// Cheap structural fingerprint used to reject cross-domain mask mixing.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x100000001b3);
        };
        for a in 0..3 {
            mix(self.n[a] as u64);
            mix(self.lengths[a].to_bits());
        }
        mix(self.t_final.to_bits());
        mix(self.nt as u64);
        h
    }
}

/// Observed part of the boundary, selected face-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBoundary {
    pub faces: [bool; 6],
    /// Per-boundary-cell indicator in `boundary_index` order.
    pub mask: Vec<bool>,
    pub domain_fp: u64,
}

impl SubBoundary {
    pub fn from_faces(domain: &Domain, faces: &[Face]) -> SubBoundary {
        let mut sel = [false; 6];
        for f in faces {
            sel[f.index()] = true;
        }
        let mut mask = vec![false; domain.total_boundary_cells()];
        for &f in ALL_FACES.iter() {
            if sel[f.index()] {
                let (na, nb) = domain.face_dims(f);
                for a in 0..na {
                    for b in 0..nb {
                        mask[domain.boundary_index(f, a, b)] = true;
                    }
                }
            }
        }
        SubBoundary { faces: sel, mask, domain_fp: domain.fingerprint() }
    }

    pub fn whole_boundary(domain: &Domain) -> SubBoundary {
        Self::from_faces(domain, &ALL_FACES)
    }

    pub fn all_but(domain: &Domain, excluded: Face) -> SubBoundary {
        let faces: Vec<Face> = ALL_FACES.iter().copied().filter(|f| *f != excluded).collect();
        Self::from_faces(domain, &faces)
    }

    pub fn contains(&self, face: Face) -> bool {
        self.faces[face.index()]
    }

    pub fn is_whole_boundary(&self) -> bool {
        self.faces.iter().all(|&b| b)
    }

    pub fn n_faces(&self) -> usize {
        self.faces.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.n_faces() == 0
    }

    pub fn excluded_faces(&self) -> Vec<Face> {
        ALL_FACES.iter().copied().filter(|f| !self.contains(*f)).collect()
    }
}

/// Indicator of a superlevel set of a spatial field, evaluated at cell centers.
#[derive(Debug, Clone)]
pub struct SpaceMask {
    pub n: [usize; 3],
    pub cells: Vec<bool>,
    /// Sum of cell volumes under the mask.
    pub measure: f64,
    pub eps: f64,
    pub domain_fp: u64,
}

/// Indicator over (cell, time node) pairs; node-major layout.
#[derive(Debug, Clone)]
pub struct SpaceTimeMask {
    pub n: [usize; 3],
    pub nt: usize,
    pub vals: Vec<bool>,
    /// Sum of cell volume x dt under the mask.
    pub measure: f64,
    pub eps: f64,
    pub domain_fp: u64,
}

impl SpaceTimeMask {
    #[inline]
    pub fn at(&self, cell: usize, node: usize) -> bool {
        self.vals[node * (self.n[0] * self.n[1] * self.n[2]) + cell]
    }
}

/// Cells where `d > eps` (strict, evaluated at cell centers only).
pub fn omega_epsilon(domain: &Domain, d: &ScalarField, eps: f64) -> SpaceMask {
    assert_eq!(d.n, domain.n, "field sampled on a different grid");
    let cells: Vec<bool> = d.data.iter().map(|&v| v > eps).collect();
    let count = cells.iter().filter(|&&b| b).count();
    SpaceMask {
        n: domain.n,
        cells,
        measure: count as f64 * domain.cell_volume(),
        eps,
        domain_fp: domain.fingerprint(),
    }
}

/// Space-time cells where `psi(cell, node) > eps`; `psi` is sampled at cell
/// centers and time nodes (endpoints included).
pub fn q_epsilon<F>(domain: &Domain, psi: F, eps: f64) -> SpaceTimeMask
where
    F: Fn(usize, usize) -> f64,
{
    let nc = domain.cell_count();
    let mut vals = vec![false; nc * (domain.nt + 1)];
    let mut count = 0usize;
    for node in 0..=domain.nt {
        for cell in 0..nc {
            if psi(cell, node) > eps {
                vals[node * nc + cell] = true;
                count += 1;
            }
        }
    }
    SpaceTimeMask {
        n: domain.n,
        nt: domain.nt,
        vals,
        measure: count as f64 * domain.cell_volume() * domain.dt(),
        eps,
        domain_fp: domain.fingerprint(),
    }
}

/// True iff every masked space-time cell projects into the spatial mask.
pub fn check_inclusion(qeps: &SpaceTimeMask, omeps: &SpaceMask) -> Result<bool> {
    if qeps.domain_fp != omeps.domain_fp || qeps.n != omeps.n {
        return Err(Error::DomainMismatch(
            "space-time and spatial masks come from different grids".into(),
        ));
    }
    let nc = qeps.n[0] * qeps.n[1] * qeps.n[2];
    for node in 0..=qeps.nt {
        for cell in 0..nc {
            if qeps.vals[node * nc + cell] && !omeps.cells[cell] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
