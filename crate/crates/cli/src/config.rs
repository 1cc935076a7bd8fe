//! Command configurations. Every document carries `"schema_version": 1` and
//! unknown keys are rejected.

use qsflow_core::generators::GermModel;
use qsflow_core::ito::{ItoQuadruple, StepFunction};
use qsflow_core::matrix::{literal, ComplexMatrix, ComplexVector};
use qsflow_core::trajectories::{TrajectoryConfig, UnravelingKind};
use qsflow_core::weyl::PiecewiseCoherent;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

fn default_seed() -> u64 {
    0
}

fn default_axiom_tol() -> f64 {
    1e-13
}

fn default_weyl_tol() -> f64 {
    1e-10
}

fn default_weyl_samples() -> usize {
    200
}

fn default_weyl_multiplicity() -> usize {
    2
}

fn default_t_max() -> f64 {
    2.0
}

fn default_ccp_tol() -> f64 {
    1e-8
}

fn default_dilate_tol() -> f64 {
    1e-10
}

fn default_unitarity_tol() -> f64 {
    1e-12
}

fn default_rank_tol() -> f64 {
    1e-12
}

fn default_steps_per_unit() -> usize {
    1000
}

fn default_semigroup_tol() -> f64 {
    1e-10
}

fn default_crosscheck_t() -> f64 {
    0.5
}

fn default_depth() -> usize {
    12
}

fn default_quad_steps() -> usize {
    256
}

fn default_coherent_amplitude() -> f64 {
    0.5
}

fn default_h() -> f64 {
    1e-3
}

fn default_n_traj() -> usize {
    10_000
}

fn default_kind() -> UnravelingKind {
    UnravelingKind::Diffusive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyAlgebraConfig {
    pub schema_version: u32,
    pub samples: usize,
    pub multiplicity: usize,
    pub seed: u64,
    #[serde(default = "default_weyl_samples")]
    pub weyl_samples: usize,
    #[serde(default = "default_weyl_multiplicity")]
    pub weyl_multiplicity: usize,
    #[serde(default = "default_t_max")]
    pub weyl_t_max: f64,
    #[serde(default = "default_axiom_tol")]
    pub axiom_tolerance: f64,
    #[serde(default = "default_weyl_tol")]
    pub weyl_tolerance: f64,
    /// Test hook: run the suite against a product table with the time entry dropped.
    #[serde(default)]
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylCase {
    pub t: f64,
    pub a: ItoQuadruple,
    pub b: ItoQuadruple,
    pub f: PiecewiseCoherent,
    pub h: PiecewiseCoherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylCheckConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_weyl_samples")]
    pub samples: usize,
    #[serde(default = "default_weyl_multiplicity")]
    pub multiplicity: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_weyl_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub cases: Vec<WeylCase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    /// Add a large multiple of the transpose map to the `(−, +)` germ block.
    Transpose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GermConfig {
    pub schema_version: u32,
    pub model: GermModel,
    #[serde(default = "default_ccp_tol")]
    pub tolerance: f64,
    /// Reference vector for the gauge condition; defaults to the first basis vector.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_vector")]
    pub eta0: Option<ComplexVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<Perturbation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilateConfig {
    pub schema_version: u32,
    pub model: GermModel,
    #[serde(default = "default_dilate_tol")]
    pub tolerance: f64,
    #[serde(default = "default_unitarity_tol")]
    pub unitarity_tolerance: f64,
    #[serde(default = "default_rank_tol")]
    pub rank_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_vector")]
    pub eta0: Option<ComplexVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub trajectory: TrajectoryConfig,
    /// Initial wave function; defaults to the first basis vector.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_vector")]
    pub psi0: Option<ComplexVector>,
    /// Initial density; when present the paths propagate `V_t ρ₀ V_t*` instead.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_matrix")]
    pub rho0: Option<ComplexMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SemigroupMethod {
    #[default]
    Rk4,
    Expm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupConfig {
    pub schema_version: u32,
    pub model: GermModel,
    pub times: Vec<f64>,
    #[serde(default = "default_steps_per_unit")]
    pub steps_per_unit: usize,
    #[serde(default)]
    pub method: SemigroupMethod,
    #[serde(default = "default_semigroup_tol")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_matrix")]
    pub rho0: Option<ComplexMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenfunConfig {
    pub schema_version: u32,
    pub model: GermModel,
    pub t: f64,
    /// Later time for the monotonicity check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub family: Vec<StepFunction>,
    /// Contraction vectors, one per family member; block kernel when absent.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_vector_list")]
    pub etas: Option<Vec<ComplexVector>>,
    #[serde(default = "default_steps_per_unit")]
    pub steps_per_unit: usize,
    #[serde(default = "default_ccp_tol")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosscheckTrajectory {
    #[serde(default = "default_kind")]
    pub kind: UnravelingKind,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Initial wave function; defaults to the last basis vector.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_vector")]
    pub psi0: Option<ComplexVector>,
    /// Trace-distance floor of the Monte Carlo tolerance.
    #[serde(default = "floor")]
    pub floor: f64,
    /// Monte Carlo standard deviations allowed.
    #[serde(default = "sigmas")]
    pub sigmas: f64,
}

fn floor() -> f64 {
    0.02
}

fn sigmas() -> f64 {
    3.0
}

impl Default for CrosscheckTrajectory {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            h: default_h(),
            n_traj: default_n_traj(),
            psi0: None,
            floor: floor(),
            sigmas: sigmas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosscheckTolerances {
    #[serde(default = "default_semigroup_tol")]
    pub semigroup: f64,
    #[serde(default = "vacuum_picard")]
    pub vacuum_picard: f64,
    #[serde(default = "coherent_picard")]
    pub coherent_picard: f64,
}

fn vacuum_picard() -> f64 {
    1e-8
}

fn coherent_picard() -> f64 {
    1e-6
}

impl Default for CrosscheckTolerances {
    fn default() -> Self {
        Self { semigroup: default_semigroup_tol(), vacuum_picard: vacuum_picard(), coherent_picard: coherent_picard() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosscheckConfig {
    pub schema_version: u32,
    pub model: GermModel,
    #[serde(default = "default_crosscheck_t")]
    pub t: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_depth")]
    pub picard_depth: usize,
    #[serde(default = "default_quad_steps")]
    pub quad_steps: usize,
    /// Constant real amplitude of every mode for the coherent comparison.
    #[serde(default = "default_coherent_amplitude")]
    pub coherent_amplitude: f64,
    #[serde(default)]
    pub trajectory: CrosscheckTrajectory,
    #[serde(default)]
    pub tolerances: CrosscheckTolerances,
}

mod optional_vector {
    use super::{literal, ComplexVector};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "literal::vector")] ComplexVector);

    pub fn serialize<S: Serializer>(v: &Option<ComplexVector>, s: S) -> Result<S::Ok, S::Error> {
        v.clone().map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ComplexVector>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

mod optional_vector_list {
    use super::{literal, ComplexVector};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "literal::vector")] ComplexVector);

    pub fn serialize<S: Serializer>(v: &Option<Vec<ComplexVector>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|vs| vs.iter().cloned().map(Wrap).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<ComplexVector>>, D::Error> {
        Ok(Option::<Vec<Wrap>>::deserialize(d)?.map(|ws| ws.into_iter().map(|w| w.0).collect()))
    }
}

mod optional_matrix {
    use super::{literal, ComplexMatrix};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "literal")] ComplexMatrix);

    pub fn serialize<S: Serializer>(m: &Option<ComplexMatrix>, s: S) -> Result<S::Ok, S::Error> {
        m.clone().map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ComplexMatrix>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}
