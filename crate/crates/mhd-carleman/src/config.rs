//! Experiment configuration: versioned TOML schema with strict field
//! validation (unknown keys are rejected).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_box_domain, Domain, Face, SubBoundary};
use crate::manufactured::CoeffSpecs;
use crate::solver::{CoeffField, CoefficientSet, RProfile};
use crate::weights::DKind;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub domain: DomainBlock,
    pub weights: WeightsBlock,
    pub coefficients: CoefficientsBlock,
    pub source: SourceBlock,
    #[serde(default)]
    pub run: RunBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub lengths: [f64; 3],
    pub n: [usize; 3],
    pub t_final: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGridBlock {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SGridBlock {
    fn default() -> Self {
        SGridBlock { lo: 4.0, hi: 64.0, points: 12 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    pub kind: DKind,
    /// Faces excluded from the observed sub-boundary (empty = whole boundary).
    #[serde(default)]
    pub gamma_excluded: Vec<String>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub s_grid: SGridBlock,
    /// Sweep range for singular-weight checks (the weight collapses to zero
    /// beyond moderate s, so the default range is lower).
    #[serde(default = "default_singular_grid")]
    pub s_grid_singular: SGridBlock,
    pub t0: f64,
    #[serde(default)]
    pub beta_override: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

fn default_singular_grid() -> SGridBlock {
    SGridBlock { lo: 2.0, hi: 24.0, points: 12 }
}

fn default_eps() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffPreset {
    /// All advection/coupling coefficients zero.
    DiffusionOnly,
    /// Smooth mildly varying fields exercising every operator term.
    Standard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsBlock {
    pub nu: f64,
    pub kappa: f64,
    #[serde(default = "default_preset")]
    pub preset: CoeffPreset,
    /// Optional constant-field overrides by name (b1, b2, c1..c5, d1, d2).
    #[serde(default)]
    pub overrides: std::collections::BTreeMap<String, [f64; 3]>,
}

fn default_preset() -> CoeffPreset {
    CoeffPreset::Standard
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RSpec {
    Constant { value: [f64; 3] },
    /// `r_m(x, t) = base_m + sum_d lin[m][d] x_d + tim_m t`
    Affine { base: [f64; 3], lin: [[f64; 3]; 3], tim: [f64; 3] },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    Zero,
    BandLimited { max_mode: usize, decay: f64 },
    Bump { center: [f64; 3], width: f64, amp: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBlock {
    pub r: RSpec,
    pub f: FSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    20240817
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfNormChoice {
    #[default]
    Spectral,
    H1Surrogate,
}

impl HalfNormChoice {
    pub fn to_mode(&self) -> crate::carleman::trace_norm::HalfNormMode {
        match self {
            HalfNormChoice::Spectral => crate::carleman::trace_norm::HalfNormMode::Spectral,
            HalfNormChoice::H1Surrogate => crate::carleman::trace_norm::HalfNormMode::H1Surrogate,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub out_dir: String,
    pub n_samples: usize,
    pub noise_levels: Vec<f64>,
    pub reg: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub solver_cg_tol: f64,
    pub half_norm: HalfNormChoice,
    /// 0 means rayon's default pool size.
    pub threads: usize,
    pub export_trajectory: bool,
    /// Growth-factor threshold of the bounded-ratio verdicts.
    pub growth_threshold: f64,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            out_dir: "out".into(),
            n_samples: 10,
            noise_levels: vec![1e-3, 1e-2],
            reg: 1e-12,
            cg_tol: 1e-10,
            cg_max_iter: 2500,
            solver_cg_tol: 1e-13,
            half_norm: HalfNormChoice::Spectral,
            threads: 0,
            export_trajectory: false,
            growth_threshold: 1.2,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(self.coefficients.nu > 0.0) {
            return Err(Error::Config(format!(
                "coefficients.nu = {} must be positive",
                self.coefficients.nu
            )));
        }
        if !(self.coefficients.kappa > 0.0) {
            return Err(Error::Config(format!(
                "coefficients.kappa = {} must be positive",
                self.coefficients.kappa
            )));
        }
        if !(self.weights.t0 > 0.0 && self.weights.t0 < self.domain.t_final) {
            return Err(Error::Config(format!(
                "weights.t0 = {} must lie inside (0, {})",
                self.weights.t0, self.domain.t_final
            )));
        }
        if self.weights.s_grid.points < 2 || !(self.weights.s_grid.hi > self.weights.s_grid.lo) {
            return Err(Error::Config("weights.s_grid must be increasing with >= 2 points".into()));
        }
        for name in self.coefficients.overrides.keys() {
            if !matches!(
                name.as_str(),
                "b1" | "b2" | "c1" | "c2" | "c3" | "c4" | "c5" | "d1" | "d2"
            ) {
                return Err(Error::Config(format!("unknown coefficient override `{name}`")));
            }
        }
        for f in &self.weights.gamma_excluded {
            Face::parse(f)?;
        }
        build_box_domain(self.domain.lengths, self.domain.n, self.domain.t_final, self.domain.nt)?;
        Ok(())
    }

    pub fn build_domain(&self) -> Result<Domain> {
        build_box_domain(self.domain.lengths, self.domain.n, self.domain.t_final, self.domain.nt)
    }

    pub fn build_gamma(&self, domain: &Domain) -> Result<SubBoundary> {
        if self.weights.gamma_excluded.is_empty() {
            return Ok(SubBoundary::whole_boundary(domain));
        }
        let mut faces: Vec<Face> = crate::geometry::ALL_FACES.to_vec();
        for name in &self.weights.gamma_excluded {
            let f = Face::parse(name)?;
            faces.retain(|&g| g != f);
        }
        Ok(SubBoundary::from_faces(domain, &faces))
    }

    pub fn build_coefficients(&self, domain: &Domain) -> CoefficientSet {
        let specs = match self.coefficients.preset {
            CoeffPreset::DiffusionOnly => {
                CoeffSpecs::diffusion_only(self.coefficients.nu, self.coefficients.kappa)
            }
            CoeffPreset::Standard => {
                CoeffSpecs::standard(self.coefficients.nu, self.coefficients.kappa)
            }
        };
        let mut set = specs.sample(domain);
        for (name, v) in &self.coefficients.overrides {
            let field = CoeffField::constant(domain, *v);
            match name.as_str() {
                "b1" => set.b1 = field,
                "b2" => set.b2 = field,
                "c1" => set.c1 = field,
                "c2" => set.c2 = field,
                "c3" => set.c3 = field,
                "c4" => set.c4 = field,
                "c5" => set.c5 = field,
                "d1" => set.d1 = field,
                "d2" => set.d2 = field,
                _ => unreachable!("validated above"),
            }
        }
        set
    }

    pub fn build_r_profile(&self) -> RProfile {
        match &self.source.r {
            RSpec::Constant { value } => RProfile::constant(*value),
            RSpec::Affine { base, lin, tim } => {
                let (b, l, t) = (*base, *lin, *tim);
                RProfile {
                    value: Arc::new(move |x, tt| {
                        std::array::from_fn(|m| {
                            b[m] + l[m][0] * x[0] + l[m][1] * x[1] + l[m][2] * x[2] + t[m] * tt
                        })
                    }),
                    dt: Arc::new(move |_, _| t),
                    dtt: Arc::new(|_, _| [0.0; 3]),
                }
            }
        }
    }

    pub fn build_f(&self, domain: &Domain) -> crate::field::ScalarField {
        use rand::SeedableRng;
        match &self.source.f {
            FSpec::Zero => crate::field::ScalarField::zeros(domain.n),
            FSpec::BandLimited { max_mode, decay } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.source.seed);
                crate::manufactured::band_limited_f(&mut rng, domain, *max_mode, *decay)
            }
            FSpec::Bump { center, width, amp } => {
                crate::manufactured::gaussian_bump_f(domain, *center, *width, *amp)
            }
        }
    }

    pub fn s_values(&self) -> Vec<f64> {
        crate::carleman::sweeps::geometric_s_grid(
            self.weights.s_grid.lo,
            self.weights.s_grid.hi,
            self.weights.s_grid.points,
        )
    }

    pub fn s_values_singular(&self) -> Vec<f64> {
        crate::carleman::sweeps::geometric_s_grid(
            self.weights.s_grid_singular.lo,
            self.weights.s_grid_singular.hi,
            self.weights.s_grid_singular.points,
        )
    }

    /// Canonical serialization used for the manifest hash.
    pub fn canonical_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
version = 1

[domain]
lengths = [1.0, 1.0, 1.0]
n = [8, 8, 8]
t_final = 1.0
nt = 16

[weights]
kind = "face_linear"
gamma_excluded = ["z_min"]
t0 = 0.5

[coefficients]
nu = 0.1
kappa = 0.08

[source]
r = { kind = "constant", value = [1.0, 0.5, 0.2] }
f = { kind = "band_limited", max_mode = 2, decay = 0.6 }
"#;

    #[test]
    fn parses_valid_config() {
        let cfg = ExperimentConfig::from_toml(GOOD).unwrap();
        assert_eq!(cfg.weights.lambdas, vec![1.0, 2.0, 4.0]);
        let dom = cfg.build_domain().unwrap();
        let gamma = cfg.build_gamma(&dom).unwrap();
        assert_eq!(gamma.n_faces(), 5);
        assert_eq!(cfg.s_values().len(), 12);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = GOOD.replace("[domain]", "[domain]\nbogus_knob = 3");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_negative_viscosity_with_field_path() {
        let bad = GOOD.replace("nu = 0.1", "nu = -0.1");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("nu"), "diagnostic should name the field: {msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_wrong_version_and_bad_face() {
        let bad = GOOD.replace("version = 1", "version = 9");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = GOOD.replace("\"z_min\"", "\"bottom\"");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
