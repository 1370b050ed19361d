//! Analytic manufactured fields: solenoidal trig modes with hand-coded
//! derivatives, pressure modes, coefficient fields, and the forcing closures
//! that make a chosen `(u, p, H)` an exact solution of the system.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::field::ScalarField;
use crate::geometry::Domain;
use crate::solver::{CoeffField, CoefficientSet, VecClosure};

pub type ScalarClosure = Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>;
pub type MatClosure = Arc<dyn Fn([f64; 3], f64) -> [[f64; 3]; 3] + Send + Sync>;

/// Scalar amplitude g(t) with two derivatives.
#[derive(Clone)]
pub struct TimeFactor {
    pub value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dt: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dtt: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl TimeFactor {
    pub fn one() -> TimeFactor {
        TimeFactor {
            value: Arc::new(|_| 1.0),
            dt: Arc::new(|_| 0.0),
            dtt: Arc::new(|_| 0.0),
        }
    }

    /// `g(t) = c0 + c1 t + a sin(w t)`.
    pub fn poly_trig(c0: f64, c1: f64, a: f64, w: f64) -> TimeFactor {
        TimeFactor {
            value: Arc::new(move |t| c0 + c1 * t + a * (w * t).sin()),
            dt: Arc::new(move |t| c1 + a * w * (w * t).cos()),
            dtt: Arc::new(move |t| -a * w * w * (w * t).sin()),
        }
    }

    /// `g(t) = sin^2(pi t / T) (1 + a sin(w t))`: vanishes at t = 0 and t = T
    /// together with its first derivative (zero time-boundary instances).
    pub fn window_sin2(t_final: f64, a: f64, w: f64) -> TimeFactor {
        let om = std::f64::consts::PI / t_final;
        let s2 = move |t: f64| (om * t).sin() * (om * t).sin();
        let ds2 = move |t: f64| 2.0 * om * (om * t).sin() * (om * t).cos();
        let dds2 = move |t: f64| 2.0 * om * om * ((om * t).cos().powi(2) - (om * t).sin().powi(2));
        let m = move |t: f64| 1.0 + a * (w * t).sin();
        let dm = move |t: f64| a * w * (w * t).cos();
        let ddm = move |t: f64| -a * w * w * (w * t).sin();
        TimeFactor {
            value: Arc::new(move |t| s2(t) * m(t)),
            dt: Arc::new(move |t| ds2(t) * m(t) + s2(t) * dm(t)),
            dtt: Arc::new(move |t| dds2(t) * m(t) + 2.0 * ds2(t) * dm(t) + s2(t) * ddm(t)),
        }
    }
}

/// Analytic vector field with the derivative channels the forcing assembly
/// and the trace norms need.
#[derive(Clone)]
pub struct VecSpec {
    pub value: VecClosure,
    pub dt: VecClosure,
    /// grad[m][d] = d_d (component m)
    pub grad: MatClosure,
    pub lap: VecClosure,
}

/// One trig mode: component m is `amp_m * prod_d f_{m,d}(kappa_d x_d)` with
/// `f = cos` on the diagonal factor and `sin` off it. Divergence-free iff
/// `amp . kappa = 0`.
#[derive(Debug, Clone, Copy)]
pub struct TrigMode {
    pub amp: [f64; 3],
    pub kappa: [f64; 3],
}

impl TrigMode {
    pub fn divergence(&self) -> f64 {
        self.amp[0] * self.kappa[0] + self.amp[1] * self.kappa[1] + self.amp[2] * self.kappa[2]
    }

    fn comp(&self, m: usize, x: [f64; 3]) -> f64 {
        let mut v = self.amp[m];
        for d in 0..3 {
            let a = self.kappa[d] * x[d];
            v *= if d == m { a.cos() } else { a.sin() };
        }
        v
    }

    fn dcomp(&self, m: usize, d: usize, x: [f64; 3]) -> f64 {
        let mut v = self.amp[m] * self.kappa[d];
        for e in 0..3 {
            let a = self.kappa[e] * x[e];
            let f = if e == m { a.cos() } else { a.sin() };
            let fp = if e == m { -a.sin() } else { a.cos() };
            v *= if e == d { fp } else { f };
        }
        v
    }

    fn ksq(&self) -> f64 {
        self.kappa.iter().map(|k| k * k).sum()
    }
}

/// Sum of trig modes with a shared time factor.
pub fn trig_vec_spec(modes: Vec<TrigMode>, time: TimeFactor) -> VecSpec {
    let m1 = modes.clone();
    let m2 = modes.clone();
    let m3 = modes.clone();
    let m4 = modes;
    let g = time.value.clone();
    let gd = time.dt.clone();
    let g2 = time.value.clone();
    let g3 = time.value.clone();
    VecSpec {
        value: Arc::new(move |x, t| {
            let gt = g(t);
            std::array::from_fn(|m| gt * m1.iter().map(|md| md.comp(m, x)).sum::<f64>())
        }),
        dt: Arc::new(move |x, t| {
            let gt = gd(t);
            std::array::from_fn(|m| gt * m2.iter().map(|md| md.comp(m, x)).sum::<f64>())
        }),
        grad: Arc::new(move |x, t| {
            let gt = g2(t);
            std::array::from_fn(|m| {
                std::array::from_fn(|d| gt * m3.iter().map(|md| md.dcomp(m, d, x)).sum::<f64>())
            })
        }),
        lap: Arc::new(move |x, t| {
            let gt = g3(t);
            std::array::from_fn(|m| {
                gt * m4.iter().map(|md| -md.ksq() * md.comp(m, x)).sum::<f64>()
            })
        }),
    }
}

/// Analytic scalar field (pressure) with gradient and time derivative.
#[derive(Clone)]
pub struct ScalarSpec {
    pub value: ScalarClosure,
    pub dt: ScalarClosure,
    pub grad: VecClosure,
}

/// `p = amp cos(k1 x) cos(k2 y) cos(k3 z) g(t)` (mean handled at sampling).
pub fn cos_pressure_spec(amp: f64, kappa: [f64; 3], time: TimeFactor) -> ScalarSpec {
    let g = time.value.clone();
    let gd = time.dt.clone();
    let g2 = time.value.clone();
    let prod = move |x: [f64; 3]| -> f64 {
        (kappa[0] * x[0]).cos() * (kappa[1] * x[1]).cos() * (kappa[2] * x[2]).cos()
    };
    let prod2 = prod.clone();
    ScalarSpec {
        value: Arc::new(move |x, t| amp * prod(x) * g(t)),
        dt: Arc::new(move |x, t| amp * prod2(x) * gd(t)),
        grad: Arc::new(move |x, t| {
            let gt = g2(t);
            let f = [(kappa[0] * x[0]).cos(), (kappa[1] * x[1]).cos(), (kappa[2] * x[2]).cos()];
            let fp = [(kappa[0] * x[0]).sin(), (kappa[1] * x[1]).sin(), (kappa[2] * x[2]).sin()];
            [
                -amp * kappa[0] * fp[0] * f[1] * f[2] * gt,
                -amp * kappa[1] * f[0] * fp[1] * f[2] * gt,
                -amp * kappa[2] * f[0] * f[1] * fp[2] * gt,
            ]
        }),
    }
}

/// A coefficient field given analytically (time independent).
#[derive(Clone)]
pub struct CoeffSpec {
    pub value: Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>,
    pub grad: Arc<dyn Fn([f64; 3]) -> [[f64; 3]; 3] + Send + Sync>,
}

impl CoeffSpec {
    pub fn zero() -> CoeffSpec {
        CoeffSpec { value: Arc::new(|_| [0.0; 3]), grad: Arc::new(|_| [[0.0; 3]; 3]) }
    }

    pub fn constant(v: [f64; 3]) -> CoeffSpec {
        CoeffSpec { value: Arc::new(move |_| v), grad: Arc::new(|_| [[0.0; 3]; 3]) }
    }

    /// Smooth small-amplitude field `c_m (1 + sin(k . x + phase_m))`-style.
    pub fn smooth(c: [f64; 3], k: [f64; 3]) -> CoeffSpec {
        let value = move |x: [f64; 3]| -> [f64; 3] {
            let s = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
            [c[0] * (1.0 + s.sin()), c[1] * (1.0 + (s + 1.0).sin()), c[2] * (1.0 + (s + 2.0).sin())]
        };
        let grad = move |x: [f64; 3]| -> [[f64; 3]; 3] {
            let s = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
            std::array::from_fn(|m| {
                let cosm = (s + m as f64).cos();
                std::array::from_fn(|d| c[m] * cosm * k[d])
            })
        };
        CoeffSpec { value: Arc::new(value), grad: Arc::new(grad) }
    }

    pub fn sample(&self, domain: &Domain) -> CoeffField {
        let v = self.value.clone();
        let g = self.grad.clone();
        CoeffField::from_analytic(domain, move |x| v(x), move |x| g(x))
    }
}

/// Full analytic coefficient bundle.
#[derive(Clone)]
pub struct CoeffSpecs {
    pub nu: f64,
    pub kappa: f64,
    pub b1: CoeffSpec,
    pub b2: CoeffSpec,
    pub c1: CoeffSpec,
    pub c2: CoeffSpec,
    pub c3: CoeffSpec,
    pub c4: CoeffSpec,
    pub c5: CoeffSpec,
    pub d1: CoeffSpec,
    pub d2: CoeffSpec,
}

impl CoeffSpecs {
    pub fn diffusion_only(nu: f64, kappa: f64) -> CoeffSpecs {
        CoeffSpecs {
            nu,
            kappa,
            b1: CoeffSpec::zero(),
            b2: CoeffSpec::zero(),
            c1: CoeffSpec::zero(),
            c2: CoeffSpec::zero(),
            c3: CoeffSpec::zero(),
            c4: CoeffSpec::zero(),
            c5: CoeffSpec::zero(),
            d1: CoeffSpec::zero(),
            d2: CoeffSpec::zero(),
        }
    }

    /// Mildly varying smooth coefficients exercising every operator term.
    pub fn standard(nu: f64, kappa: f64) -> CoeffSpecs {
        CoeffSpecs {
            nu,
            kappa,
            b1: CoeffSpec::smooth([0.4, -0.3, 0.2], [1.0, 0.5, -0.7]),
            b2: CoeffSpec::smooth([0.15, 0.1, -0.1], [0.8, -0.6, 0.4]),
            c1: CoeffSpec::smooth([0.2, 0.15, -0.1], [-0.5, 0.9, 0.3]),
            c2: CoeffSpec::smooth([0.1, -0.08, 0.12], [0.6, 0.2, -0.9]),
            c3: CoeffSpec::smooth([0.12, 0.1, 0.08], [0.3, -0.4, 0.8]),
            c4: CoeffSpec::smooth([-0.18, 0.12, 0.1], [0.7, 0.6, -0.2]),
            c5: CoeffSpec::smooth([0.1, 0.14, -0.06], [-0.8, 0.3, 0.5]),
            d1: CoeffSpec::smooth([0.3, -0.2, 0.25], [0.4, -0.9, 0.6]),
            d2: CoeffSpec::smooth([0.1, 0.08, -0.12], [0.9, 0.1, -0.3]),
        }
    }

    pub fn sample(&self, domain: &Domain) -> CoefficientSet {
        CoefficientSet {
            nu: self.nu,
            kappa: self.kappa,
            b1: self.b1.sample(domain),
            b2: self.b2.sample(domain),
            c1: self.c1.sample(domain),
            c2: self.c2.sample(domain),
            c3: self.c3.sample(domain),
            c4: self.c4.sample(domain),
            c5: self.c5.sample(domain),
            d1: self.d1.sample(domain),
            d2: self.d2.sample(domain),
        }
    }
}

/// One fully analytic manufactured solution of the linearized system together
/// with the forcing terms that make it exact.
#[derive(Clone)]
pub struct ManufacturedMhd {
    pub u: VecSpec,
    pub p: ScalarSpec,
    pub h: VecSpec,
    pub coeffs: CoeffSpecs,
    pub forcing_u: VecClosure,
    pub forcing_h: VecClosure,
}

/// Assemble the momentum and induction forcings so that `(u, p, H)` solves the
/// system exactly:
/// `F = u_t - nu lap u + (B1.grad)u + (u.grad)B2 + L1(H) + grad p`,
/// `G = H_t - kappa lap H + (D1.grad)H + (H.grad)D2 + L2(u)`.
pub fn manufacture(u: VecSpec, p: ScalarSpec, h: VecSpec, coeffs: CoeffSpecs) -> ManufacturedMhd {
    let cu = coeffs.clone();
    let (uu, pp, hh) = (u.clone(), p.clone(), h.clone());
    let forcing_u: VecClosure = Arc::new(move |x, t| {
        let ut = (uu.dt)(x, t);
        let ulap = (uu.lap)(x, t);
        let ug = (uu.grad)(x, t);
        let uv = (uu.value)(x, t);
        let hv = (hh.value)(x, t);
        let hg = (hh.grad)(x, t);
        let pg = (pp.grad)(x, t);
        let b1 = (cu.b1.value)(x);
        let b2g = (cu.b2.grad)(x);
        let c1 = (cu.c1.value)(x);
        let c2g = (cu.c2.grad)(x);
        let c3 = (cu.c3.value)(x);
        let c3g = (cu.c3.grad)(x);
        std::array::from_fn(|m| {
            let mut v = ut[m] - cu.nu * ulap[m] + pg[m];
            for d in 0..3 {
                v += b1[d] * ug[m][d]; // (B1.grad)u
                v += uv[d] * b2g[m][d]; // (u.grad)B2
                v += c1[d] * hg[m][d]; // (C1.grad)H
                v += hv[d] * c2g[m][d]; // (H.grad)C2
                v += c3g[d][m] * hv[d] + c3[d] * hg[d][m]; // d_m (C3.H)
            }
            v
        })
    });
    let ch = coeffs.clone();
    let (uu2, hh2) = (u.clone(), h.clone());
    let forcing_h: VecClosure = Arc::new(move |x, t| {
        let ht = (hh2.dt)(x, t);
        let hlap = (hh2.lap)(x, t);
        let hg = (hh2.grad)(x, t);
        let hv = (hh2.value)(x, t);
        let uv = (uu2.value)(x, t);
        let ug = (uu2.grad)(x, t);
        let d1 = (ch.d1.value)(x);
        let d2g = (ch.d2.grad)(x);
        let c4 = (ch.c4.value)(x);
        let c5g = (ch.c5.grad)(x);
        std::array::from_fn(|m| {
            let mut v = ht[m] - ch.kappa * hlap[m];
            for d in 0..3 {
                v += d1[d] * hg[m][d];
                v += hv[d] * d2g[m][d];
                v += c4[d] * ug[m][d];
                v += uv[d] * c5g[m][d];
            }
            v
        })
    });
    ManufacturedMhd { u, p, h, coeffs, forcing_u, forcing_h }
}

/// Analytic scalar space-time field with the derivative channels the scalar
/// inequality checks need.
#[derive(Clone)]
pub struct ScalarSpacetime {
    pub value: ScalarClosure,
    pub dt: ScalarClosure,
    pub grad: VecClosure,
    pub hess: MatClosure,
}

/// Sum of sine-product modes `amp * prod sin(kappa_d x_d)` times a shared
/// time factor; vanishes on the whole boundary when the wavenumbers are
/// integer multiples of `pi / L_d`.
pub fn sine_scalar_spacetime(modes: Vec<([f64; 3], f64)>, time: TimeFactor) -> ScalarSpacetime {
    let comp = |k: [f64; 3], x: [f64; 3]| (k[0] * x[0]).sin() * (k[1] * x[1]).sin() * (k[2] * x[2]).sin();
    let m1 = modes.clone();
    let m2 = modes.clone();
    let m3 = modes.clone();
    let m4 = modes;
    let g = time.value.clone();
    let gd = time.dt.clone();
    let g2 = time.value.clone();
    let g3 = time.value.clone();
    ScalarSpacetime {
        value: Arc::new(move |x, t| g(t) * m1.iter().map(|(k, a)| a * comp(*k, x)).sum::<f64>()),
        dt: Arc::new(move |x, t| gd(t) * m2.iter().map(|(k, a)| a * comp(*k, x)).sum::<f64>()),
        grad: Arc::new(move |x, t| {
            let gt = g2(t);
            let mut out = [0.0; 3];
            for (k, a) in &m3 {
                let s = [(k[0] * x[0]).sin(), (k[1] * x[1]).sin(), (k[2] * x[2]).sin()];
                let c = [(k[0] * x[0]).cos(), (k[1] * x[1]).cos(), (k[2] * x[2]).cos()];
                out[0] += gt * a * k[0] * c[0] * s[1] * s[2];
                out[1] += gt * a * k[1] * s[0] * c[1] * s[2];
                out[2] += gt * a * k[2] * s[0] * s[1] * c[2];
            }
            out
        }),
        hess: Arc::new(move |x, t| {
            let gt = g3(t);
            let mut out = [[0.0; 3]; 3];
            for (k, a) in &m4 {
                let s = [(k[0] * x[0]).sin(), (k[1] * x[1]).sin(), (k[2] * x[2]).sin()];
                let c = [(k[0] * x[0]).cos(), (k[1] * x[1]).cos(), (k[2] * x[2]).cos()];
                for d in 0..3 {
                    for e in 0..3 {
                        let v = if d == e {
                            -k[d] * k[d] * s[0] * s[1] * s[2]
                        } else {
                            let mut w = k[d] * k[e];
                            for q in 0..3 {
                                w *= if q == d || q == e { c[q] } else { s[q] };
                            }
                            w
                        };
                        out[d][e] += gt * a * v;
                    }
                }
            }
            out
        }),
    }
}

/// Random sine-mode scalar with one anchor mode guaranteed to carry mass at
/// odd half-planes of the last axis (used by the inequality-check ensembles).
pub fn random_dirichlet_scalar(
    rng: &mut ChaCha8Rng,
    lengths: [f64; 3],
    time: TimeFactor,
) -> ScalarSpacetime {
    let pi = std::f64::consts::PI;
    let mut modes: Vec<([f64; 3], f64)> = Vec::new();
    let kap = |k: [usize; 3]| -> [f64; 3] {
        std::array::from_fn(|d| k[d] as f64 * pi / lengths[d])
    };
    let a0 = 0.4 + 0.2 * rng.random::<f64>();
    let sgn = if rng.random::<bool>() { 1.0 } else { -1.0 };
    modes.push((kap([1 + rng.random_range(0..3), 1 + rng.random_range(0..3), 1]), sgn * a0));
    for _ in 0..2 {
        let k = [1 + rng.random_range(0..3), 1 + rng.random_range(0..3), 1 + rng.random_range(0..3)];
        modes.push((kap(k), 0.8 * (rng.random::<f64>() - 0.5)));
    }
    sine_scalar_spacetime(modes, time)
}

/// Divergence-free random vector spec (modes with `amp . kappa = 0`), with
/// wavenumbers that are integer multiples of `pi / L_d`.
pub fn random_solenoidal(
    rng: &mut ChaCha8Rng,
    lengths: [f64; 3],
    n_modes: usize,
    max_freq: usize,
    time: TimeFactor,
) -> VecSpec {
    let mut modes = Vec::with_capacity(n_modes);
    for _ in 0..n_modes {
        let fr: [usize; 3] = std::array::from_fn(|_| 1 + rng.random_range(0..max_freq));
        let kappa: [f64; 3] =
            std::array::from_fn(|d| fr[d] as f64 * std::f64::consts::PI / lengths[d]);
        // random amplitude orthogonal to kappa
        let raw: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() - 0.5);
        let ksq: f64 = kappa.iter().map(|k| k * k).sum();
        let dot: f64 = (0..3).map(|d| raw[d] * kappa[d]).sum();
        let amp: [f64; 3] = std::array::from_fn(|d| raw[d] - dot * kappa[d] / ksq);
        let mode = TrigMode { amp, kappa };
        debug_assert!(mode.divergence().abs() < 1e-12);
        modes.push(mode);
    }
    trig_vec_spec(modes, time)
}

/// Band-limited source factor: sum of sine products over modes up to
/// `max_mode` per axis with geometrically decaying random amplitudes,
/// normalized to unit L2 grid norm.
pub fn band_limited_f(
    rng: &mut ChaCha8Rng,
    domain: &Domain,
    max_mode: usize,
    decay: f64,
) -> ScalarField {
    let mut terms: Vec<([f64; 3], f64)> = Vec::new();
    for k1 in 1..=max_mode {
        for k2 in 1..=max_mode {
            for k3 in 1..=max_mode {
                let amp = (rng.random::<f64>() - 0.5) * decay.powi((k1 + k2 + k3 - 3) as i32);
                let kap: [f64; 3] = [
                    k1 as f64 * std::f64::consts::PI / domain.lengths[0],
                    k2 as f64 * std::f64::consts::PI / domain.lengths[1],
                    k3 as f64 * std::f64::consts::PI / domain.lengths[2],
                ];
                terms.push((kap, amp));
            }
        }
    }
    let mut f = domain.sample_cells(|x| {
        terms
            .iter()
            .map(|(k, a)| a * (k[0] * x[0]).sin() * (k[1] * x[1]).sin() * (k[2] * x[2]).sin())
            .sum()
    });
    let vol = domain.cell_volume();
    let norm = (crate::reduce::pairwise_dot(&f.data, &f.data) * vol).sqrt();
    if norm > 0.0 {
        for v in &mut f.data {
            *v /= norm;
        }
    }
    f
}

/// Smooth compact bump `exp(-|x - c|^2 / w^2)` sampled at cells.
pub fn gaussian_bump_f(domain: &Domain, center: [f64; 3], width: f64, amp: f64) -> ScalarField {
    domain.sample_cells(|x| {
        let r2: f64 = (0..3).map(|d| (x[d] - center[d]) * (x[d] - center[d])).sum();
        amp * (-r2 / (width * width)).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn trig_mode_divergence_free_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_solenoidal(&mut rng, [1.0, 2.0, 0.5], 4, 3, TimeFactor::one());
        // analytic divergence via the gradient trace
        for &x in &[[0.3, 0.7, 0.2], [0.9, 1.5, 0.45], [0.05, 0.2, 0.1]] {
            let g = (spec.grad)(x, 0.3);
            let div = g[0][0] + g[1][1] + g[2][2];
            assert!(div.abs() < 1e-12, "div = {div}");
        }
    }

    #[test]
    fn grad_and_lap_match_finite_differences() {
        let mode = TrigMode { amp: [0.7, -0.3, 0.4], kappa: [2.0, 1.0, 3.0] };
        // make it divergence free for realism (not required by this test)
        let spec = trig_vec_spec(vec![mode], TimeFactor::poly_trig(1.0, 0.5, 0.3, 2.0));
        let x = [0.31, 0.57, 0.13];
        let t = 0.42;
        let eps = 1e-6;
        let g = (spec.grad)(x, t);
        for m in 0..3 {
            for d in 0..3 {
                let mut xp = x;
                xp[d] += eps;
                let mut xm = x;
                xm[d] -= eps;
                let fd = ((spec.value)(xp, t)[m] - (spec.value)(xm, t)[m]) / (2.0 * eps);
                assert!((fd - g[m][d]).abs() < 1e-7, "grad[{m}][{d}]");
            }
            let mut lap_fd = 0.0;
            for d in 0..3 {
                let mut xp = x;
                xp[d] += eps;
                let mut xm = x;
                xm[d] -= eps;
                lap_fd += ((spec.value)(xp, t)[m] - 2.0 * (spec.value)(x, t)[m]
                    + (spec.value)(xm, t)[m])
                    / (eps * eps);
            }
            assert!((lap_fd - (spec.lap)(x, t)[m]).abs() < 1e-3);
            let mut tp = t;
            tp += eps;
            let fd_t = ((spec.value)(x, tp)[m] - (spec.value)(x, t - eps)[m]) / (2.0 * eps);
            assert!((fd_t - (spec.dt)(x, t)[m]).abs() < 1e-6);
        }
    }

    #[test]
    fn window_time_factor_vanishes_at_endpoints() {
        let w = TimeFactor::window_sin2(1.0, 0.3, 4.0);
        assert!((w.value)(0.0).abs() < 1e-15);
        assert!((w.value)(1.0).abs() < 1e-12);
        assert!((w.value)(0.5) > 0.5);
    }

    #[test]
    fn band_limited_f_is_unit_norm() {
        let dom = crate::geometry::build_box_domain([1.0; 3], [8, 8, 8], 1.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = band_limited_f(&mut rng, &dom, 2, 0.5);
        let n2 = crate::reduce::pairwise_dot(&f.data, &f.data) * dom.cell_volume();
        assert!((n2 - 1.0).abs() < 1e-12);
    }
}
