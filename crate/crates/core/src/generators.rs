//! Generator structure of CP flows.
//!
//! A [`GermModel`] holds `K`, the noise drifts `K_1..K_m` and a Kraus family
//! `{L^k_ν}` with `ν ∈ {+, 1..m}`. Stacking each family member into the row
//! block `𝐋^k = [L^k, L^k_1, …, L^k_m]` gives the block CP map
//! `𝛗(B) = Σ_k 𝐋^{k†} B 𝐋^k`, whose `(μ, ν)` block is `φ^μ_ν(B)`.
//! Block index `0` stands for `−` in rows and `+` in columns.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ito::ItoQuadruple;
use crate::matrix::{
    self, hermitian_eigen, identity, kron, literal, r, superop_left, superop_right, superop_sandwich, zeros,
    ComplexMatrix, SuperOperator, C64, ONE,
};
use crate::random::random_matrix;

/// One member of the Kraus family: `L^k = plus` and `L^k_n = noise[n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrausTerm {
    #[serde(with = "literal")]
    pub plus: ComplexMatrix,
    #[serde(with = "literal::list")]
    pub noise: Vec<ComplexMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct GermModel {
    dim: usize,
    multiplicity: usize,
    k: ComplexMatrix,
    k_list: Vec<ComplexMatrix>,
    kraus: Vec<KrausTerm>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    dim: usize,
    multiplicity: usize,
    #[serde(rename = "K", with = "literal")]
    k: ComplexMatrix,
    #[serde(rename = "K_list", with = "literal::list")]
    k_list: Vec<ComplexMatrix>,
    kraus: Vec<KrausTerm>,
}

impl TryFrom<ModelRepr> for GermModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        let model = GermModel::new(r.k, r.k_list, r.kraus)?;
        if model.dim != r.dim || model.multiplicity != r.multiplicity {
            return Err(Error::DimensionMismatch(format!(
                "declared dim {} / multiplicity {} but matrices give {} / {}",
                r.dim, r.multiplicity, model.dim, model.multiplicity
            )));
        }
        Ok(model)
    }
}

impl From<GermModel> for ModelRepr {
    fn from(m: GermModel) -> Self {
        ModelRepr { dim: m.dim, multiplicity: m.multiplicity, k: m.k, k_list: m.k_list, kraus: m.kraus }
    }
}

impl GermModel {
    /// Dimension is read off `K`, multiplicity off `K_list`.
    pub fn new(k: ComplexMatrix, k_list: Vec<ComplexMatrix>, kraus: Vec<KrausTerm>) -> Result<Self> {
        let d = matrix::ensure_square(&k, "K")?;
        if d == 0 {
            return Err(Error::DimensionMismatch("system dimension must be positive".into()));
        }
        let m = k_list.len();
        matrix::ensure_finite(&k, "K")?;
        for kn in &k_list {
            matrix::ensure_shape(kn, d, d, "K_n")?;
            matrix::ensure_finite(kn, "K_n")?;
        }
        for term in &kraus {
            matrix::ensure_shape(&term.plus, d, d, "Kraus operator L^k")?;
            matrix::ensure_finite(&term.plus, "Kraus operator L^k")?;
            if term.noise.len() != m {
                return Err(Error::MultiplicityMismatch { left: m, right: term.noise.len() });
            }
            for ln in &term.noise {
                matrix::ensure_shape(ln, d, d, "Kraus operator L^k_n")?;
                matrix::ensure_finite(ln, "Kraus operator L^k_n")?;
            }
        }
        Ok(Self { dim: d, multiplicity: m, k, k_list, kraus })
    }

    pub fn zero(d: usize, m: usize) -> Self {
        Self { dim: d, multiplicity: m, k: zeros(d, d), k_list: vec![zeros(d, d); m], kraus: Vec::new() }
    }

    /// Two-level decay at `rate` with lowering operator `L = √rate σ₋`, index 1
    /// being the excited state: `K = ½L*L`, `K_1 = L`, Kraus `{L, [I]}`.
    pub fn amplitude_damping(rate: f64) -> Self {
        let l = matrix::from_real_rows(2, 2, &[0.0, rate.sqrt(), 0.0, 0.0]);
        let k = l.adjoint() * &l * r(0.5);
        Self::new(k, vec![l.clone()], vec![KrausTerm { plus: l, noise: vec![identity(2)] }]).expect("shapes are fixed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    pub fn k(&self) -> &ComplexMatrix {
        &self.k
    }

    pub fn k_list(&self) -> &[ComplexMatrix] {
        &self.k_list
    }

    pub fn kraus(&self) -> &[KrausTerm] {
        &self.kraus
    }

    pub fn with_k(&self, k: ComplexMatrix) -> Result<Self> {
        Self::new(k, self.k_list.clone(), self.kraus.clone())
    }

    pub fn with_kraus(&self, kraus: Vec<KrausTerm>) -> Result<Self> {
        Self::new(self.k.clone(), self.k_list.clone(), kraus)
    }

    /// `𝐋^k = [L^k, L^k_1, …, L^k_m]`, a `d × d(1+m)` row block.
    pub fn block_kraus(&self, k: usize) -> ComplexMatrix {
        let d = self.dim;
        let term = &self.kraus[k];
        let mut out = zeros(d, d * (1 + self.multiplicity));
        out.view_mut((0, 0), (d, d)).copy_from(&term.plus);
        for (n, ln) in term.noise.iter().enumerate() {
            out.view_mut((0, d * (n + 1)), (d, d)).copy_from(ln);
        }
        out
    }

    /// `L^k_ν` with `ν = 0` meaning `+`.
    fn kraus_op(&self, k: usize, nu: usize) -> &ComplexMatrix {
        let term = &self.kraus[k];
        if nu == 0 {
            &term.plus
        } else {
            &term.noise[nu - 1]
        }
    }

    /// The block map `𝛗(B)` as a `d(1+m)` square matrix.
    pub fn phi(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let n = self.dim * (1 + self.multiplicity);
        let mut out = zeros(n, n);
        for k in 0..self.kraus.len() {
            let lk = self.block_kraus(k);
            out += lk.adjoint() * b * &lk;
        }
        out
    }

    /// `φ^μ_ν` as a superoperator: `B ↦ Σ_k L^{kμ*} B L^k_ν`.
    pub fn phi_block(&self, mu: usize, nu: usize) -> SuperOperator {
        let mut s = SuperOperator::zero(self.dim);
        for k in 0..self.kraus.len() {
            let left = self.kraus_op(k, mu).adjoint();
            s = s.add(&superop_sandwich(&left, self.kraus_op(k, nu)).expect("validated shapes"));
        }
        s
    }

    /// `φ(I) = Σ_k L^{k*} L^k`.
    pub fn phi_identity(&self) -> ComplexMatrix {
        self.kraus.iter().fold(zeros(self.dim, self.dim), |acc, t| acc + t.plus.adjoint() * &t.plus)
    }

    /// `K_• = [K_1, …, K_m]`, a `d × dm` row block.
    pub fn k_bullet(&self) -> ComplexMatrix {
        let d = self.dim;
        let mut out = zeros(d, d * self.multiplicity);
        for (n, kn) in self.k_list.iter().enumerate() {
            out.view_mut((0, d * n), (d, d)).copy_from(kn);
        }
        out
    }
}

/// Random model with entries bounded by `scale`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, d: usize, m: usize, p: usize, scale: f64) -> GermModel {
    let k = random_matrix(rng, d, d, scale);
    let k_list = (0..m).map(|_| random_matrix(rng, d, d, scale)).collect();
    let kraus = (0..p)
        .map(|_| KrausTerm {
            plus: random_matrix(rng, d, d, scale),
            noise: (0..m).map(|_| random_matrix(rng, d, d, scale)).collect(),
        })
        .collect();
    GermModel::new(k, k_list, kraus).expect("shapes are consistent")
}

/// Random model satisfying `K + K* = φ(I)`, with a random Hamiltonian part.
pub fn random_filtering_model<R: Rng + ?Sized>(rng: &mut R, d: usize, m: usize, p: usize, scale: f64) -> GermModel {
    let base = random_model(rng, d, m, p, scale);
    let h = crate::random::random_hermitian(rng, d, scale);
    let k = base.phi_identity() * r(0.5) + h * matrix::I;
    base.with_k(k).expect("same shapes")
}

/// The germ `𝛄` as a `(1+m) × (1+m)` array of superoperators, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GermMatrix {
    dim: usize,
    multiplicity: usize,
    blocks: Vec<SuperOperator>,
}

impl GermMatrix {
    pub fn from_blocks(dim: usize, multiplicity: usize, blocks: Vec<SuperOperator>) -> Result<Self> {
        let n = 1 + multiplicity;
        if blocks.len() != n * n {
            return Err(Error::DimensionMismatch(format!("germ needs {} blocks, got {}", n * n, blocks.len())));
        }
        if let Some(b) = blocks.iter().find(|b| b.dim() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "block of dimension {} in a germ of dimension {dim}",
                b.dim()
            )));
        }
        Ok(Self { dim, multiplicity, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    pub fn block(&self, mu: usize, nu: usize) -> &SuperOperator {
        &self.blocks[mu * (1 + self.multiplicity) + nu]
    }

    pub fn blocks(&self) -> &[SuperOperator] {
        &self.blocks
    }

    /// `𝛄(B)` as a `d(1+m)` square block matrix.
    pub fn apply(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let d = self.dim;
        let n = 1 + self.multiplicity;
        let mut out = zeros(d * n, d * n);
        for mu in 0..n {
            for nu in 0..n {
                out.view_mut((mu * d, nu * d), (d, d)).copy_from(&self.block(mu, nu).apply(b));
            }
        }
        out
    }

    /// Structural maps `λ^μ_ν`: the germ minus the ampliation on the noise diagonal.
    pub fn structural_maps(&self) -> GermMatrix {
        let n = 1 + self.multiplicity;
        let id = SuperOperator::identity(self.dim);
        let blocks = (0..n * n)
            .map(|idx| {
                let (mu, nu) = (idx / n, idx % n);
                if mu == nu && mu > 0 {
                    self.blocks[idx].add(&id.scale(-ONE))
                } else {
                    self.blocks[idx].clone()
                }
            })
            .collect();
        GermMatrix { dim: self.dim, multiplicity: self.multiplicity, blocks }
    }

    /// Largest Frobenius residual of `𝛄(B*) − 𝛄(B)†` over `samples`.
    pub fn adjointness_residual(&self, samples: &[ComplexMatrix]) -> f64 {
        samples
            .iter()
            .map(|b| matrix::frobenius(&(self.apply(&b.adjoint()) - self.apply(b).adjoint())))
            .fold(0.0, f64::max)
    }
}

/// `γ^-_+ = φ − K*· − ·K`, `γ^-_n = φ_n − ·K_n`, `γ^m_+ = φ^m − K_m*·`, `γ^m_n = φ^m_n`.
pub fn build_germ(model: &GermModel) -> GermMatrix {
    let d = model.dim;
    let n = 1 + model.multiplicity;
    let mut blocks = Vec::with_capacity(n * n);
    for mu in 0..n {
        for nu in 0..n {
            let mut g = model.phi_block(mu, nu);
            let shape_ok = "validated shapes";
            match (mu, nu) {
                (0, 0) => {
                    g = g
                        .add(&superop_left(&model.k.adjoint(), d).expect(shape_ok).scale(-ONE))
                        .add(&superop_right(&model.k, d).expect(shape_ok).scale(-ONE));
                }
                (0, nu) => {
                    g = g.add(&superop_right(&model.k_list[nu - 1], d).expect(shape_ok).scale(-ONE));
                }
                (mu, 0) => {
                    g = g.add(&superop_left(&model.k_list[mu - 1].adjoint(), d).expect(shape_ok).scale(-ONE));
                }
                _ => {}
            }
            blocks.push(g);
        }
    }
    GermMatrix { dim: d, multiplicity: model.multiplicity, blocks }
}

/// Adds `weight · (B ↦ Bᵀ)` to the `(−, +)` block. The transpose is positive but
/// not completely positive, so a large enough weight breaks CCP of any germ.
pub fn with_transpose(germ: &GermMatrix, weight: f64) -> GermMatrix {
    let t = SuperOperator::from_fn(germ.dim, |b| b.transpose()).scale(r(weight));
    let mut blocks = germ.blocks.clone();
    blocks[0] = blocks[0].add(&t);
    GermMatrix { dim: germ.dim, multiplicity: germ.multiplicity, blocks }
}

/// Weight used by [`with_transpose`] callers that want a guaranteed violation.
pub fn transpose_weight(germ: &GermMatrix) -> f64 {
    10.0 * (1.0 + germ.blocks.iter().map(SuperOperator::norm).fold(0.0, f64::max))
}

/// The matrix units `E_ij`, ordered row-major.
pub fn matrix_unit_basis(d: usize) -> Vec<ComplexMatrix> {
    let mut basis = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut e = zeros(d, d);
            e[(i, j)] = ONE;
            basis.push(e);
        }
    }
    basis
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcpReport {
    pub pass: bool,
    pub min_eig: f64,
    pub tol: f64,
    /// Dimension of the constrained subspace the form was tested on.
    pub constrained_dim: usize,
    /// For a failure: the coefficient vectors `𝛇_k` (stacked) of a negative direction.
    #[serde(skip)]
    pub witness: Option<ComplexMatrix>,
}

/// Conditional complete positivity of `𝛄` relative to the degenerate
/// representation `B ↦ B δ^μ_- δ^+_ν`.
///
/// The form `Σ_kl ⟨𝛇_k | 𝛄(B_k* B_l) 𝛇_l⟩` is tested on the subspace
/// `Σ_k B_k ζ_k^0 = 0`.
pub fn ccp_check(germ: &GermMatrix, basis: &[ComplexMatrix], tol: f64) -> Result<CcpReport> {
    let d = germ.dim;
    let block = d * (1 + germ.multiplicity);
    for b in basis {
        matrix::ensure_shape(b, d, d, "basis element")?;
    }
    let mut span = zeros(d * d, basis.len());
    for (k, b) in basis.iter().enumerate() {
        span.set_column(k, &matrix::vec(b).column(0));
    }
    let rank = if basis.is_empty() {
        0
    } else {
        let sv = span.singular_values();
        let smax = sv.max();
        sv.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count()
    };
    if rank < d * d {
        return Err(Error::BasisNotSpanning { rank, required: d * d });
    }

    let nb = basis.len();
    let size = nb * block;
    let mut gram = zeros(size, size);
    for k in 0..nb {
        for l in 0..nb {
            let g = germ.apply(&(basis[k].adjoint() * &basis[l]));
            gram.view_mut((k * block, l * block), (block, block)).copy_from(&g);
        }
    }
    let mut constraint = zeros(d, size);
    for (k, b) in basis.iter().enumerate() {
        constraint.view_mut((0, k * block), (d, d)).copy_from(b);
    }
    let z = matrix::null_space(&constraint, 1e-10);
    let restricted = z.adjoint() * &gram * &z;
    let (values, vectors) = hermitian_eigen(&restricted);
    let min_eig = values.first().copied().unwrap_or(0.0);
    let pass = min_eig >= -tol;
    let witness = (!pass).then(|| &z * vectors.columns(0, 1));
    Ok(CcpReport { pass, min_eig, tol, constrained_dim: z.ncols(), witness })
}

/// Choi matrix `Σ_ij E_ij ⊗ 𝛗(E_ij)` of the block map, side `d²(1+m)`.
pub fn block_choi(model: &GermModel) -> ComplexMatrix {
    let d = model.dim;
    let big = d * (1 + model.multiplicity);
    let mut choi = zeros(d * big, d * big);
    for i in 0..d {
        for j in 0..d {
            let mut e = zeros(d, d);
            e[(i, j)] = ONE;
            choi.view_mut((i * big, j * big), (big, big)).copy_from(&model.phi(&e));
        }
    }
    choi
}

/// Kraus family of the block map read off the eigen-decomposition of its Choi matrix.
///
/// Eigenvalues below `rank_tol · ‖choi‖` are discarded; the family size is the
/// numerical rank.
pub fn kraus_extract(choi: &ComplexMatrix, d: usize, m: usize, rank_tol: f64) -> Result<Vec<KrausTerm>> {
    let big = d * (1 + m);
    matrix::ensure_shape(choi, d * big, d * big, "Choi matrix")?;
    let norm = matrix::frobenius(choi);
    if norm == 0.0 {
        return Ok(Vec::new());
    }
    let (values, vectors) = hermitian_eigen(choi);
    let min_eig = values[0];
    if min_eig < -rank_tol * norm {
        return Err(Error::NotPsd { min_eig });
    }
    let mut family = Vec::new();
    for (idx, &lambda) in values.iter().enumerate().rev() {
        if lambda <= rank_tol * norm {
            break;
        }
        let v = vectors.column(idx) * r(lambda.sqrt());
        // block i of v is 𝐋^{k†} e_i, i.e. the conjugated i-th row of 𝐋^k
        let lk = ComplexMatrix::from_fn(d, big, |i, col| v[i * big + col].conj());
        family.push(KrausTerm {
            plus: lk.view((0, 0), (d, d)).into_owned(),
            noise: (0..m).map(|n| lk.view((0, d * (n + 1)), (d, d)).into_owned()).collect(),
        });
    }
    Ok(family)
}

/// Largest superoperator distance between the `φ^μ_ν` blocks of two models.
pub fn phi_distance(a: &GermModel, b: &GermModel) -> Result<f64> {
    if a.dim != b.dim || a.multiplicity != b.multiplicity {
        return Err(Error::DimensionMismatch("models have different shapes".into()));
    }
    let n = 1 + a.multiplicity;
    let mut worst = 0.0f64;
    for mu in 0..n {
        for nu in 0..n {
            worst = worst.max(a.phi_block(mu, nu).distance(&b.phi_block(mu, nu)));
        }
    }
    Ok(worst)
}

/// Shift each `L^k` by its vacuum expectation `c_k = ⟨η⁰|L^k η⁰⟩`, compensating in
/// `K` and `K_n` so that every structural map is unchanged.
pub fn gauge_fix(model: &GermModel, eta0: &ComplexMatrix) -> Result<GermModel> {
    let d = model.dim;
    matrix::ensure_shape(eta0, d, 1, "eta0")?;
    let norm = eta0.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("eta0 must be a unit vector, got norm {norm}")));
    }
    let mut k = model.k.clone();
    let mut k_list = model.k_list.clone();
    let mut kraus = Vec::with_capacity(model.kraus.len());
    for term in &model.kraus {
        let c = (eta0.adjoint() * &term.plus * eta0)[(0, 0)];
        k -= &term.plus * c.conj();
        k += identity(d) * r(0.5 * c.norm_sqr());
        for (kn, ln) in k_list.iter_mut().zip(&term.noise) {
            *kn -= ln * c.conj();
        }
        kraus.push(KrausTerm { plus: &term.plus - identity(d) * c, noise: term.noise.clone() });
    }
    GermModel::new(k, k_list, kraus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissipativityClass {
    Filtering,
    Contractive,
    Subfiltering,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativityReport {
    /// Smallest eigenvalue of `D = K + K* − φ(I)`.
    pub lambda_i_min: f64,
    /// Smallest eigenvalue of the block form `𝐃 = 𝐊 + 𝐊* − 𝛗(I)`.
    pub block_lambda_i_min: f64,
    /// `‖D‖_F`.
    pub d_norm: f64,
    pub class: DissipativityClass,
}

/// Classify by `D = −λ(I)` and `𝐃 = −𝛌(I)`, with `𝐊 = [[K, K_•], [0, ½I]]`.
///
/// Classes are tried from the strongest: filtering (`D = 0`), contractive
/// (`𝐃 ⪰ 0`, which implies `D ⪰ 0`; needs `m > 0` to differ from the next),
/// subfiltering (`D ⪰ 0`), otherwise none.
pub fn classify(model: &GermModel, tol: f64) -> DissipativityReport {
    let d = model.dim;
    let m = model.multiplicity;
    let small = &model.k + model.k.adjoint() - model.phi_identity();
    let kk = {
        let n = d * (1 + m);
        let mut kk = zeros(n, n);
        kk.view_mut((0, 0), (d, d)).copy_from(&(&model.k + model.k.adjoint()));
        let kb = model.k_bullet();
        kk.view_mut((0, d), (d, d * m)).copy_from(&kb);
        kk.view_mut((d, 0), (d * m, d)).copy_from(&kb.adjoint());
        kk.view_mut((d, d), (d * m, d * m)).copy_from(&identity(d * m));
        kk
    };
    let big = kk - model.phi(&identity(d));
    let lambda_i_min = hermitian_eigen(&small).0[0];
    let block_lambda_i_min = hermitian_eigen(&big).0[0];
    let d_norm = matrix::frobenius(&small);
    let class = if d_norm <= tol {
        DissipativityClass::Filtering
    } else if m > 0 && block_lambda_i_min >= -tol {
        DissipativityClass::Contractive
    } else if lambda_i_min >= -tol {
        DissipativityClass::Subfiltering
    } else {
        DissipativityClass::None
    };
    DissipativityReport { lambda_i_min, block_lambda_i_min, d_norm, class }
}

/// Coefficients of a unitary cocycle on `ℋ ⊗ (ℂ ⊕ ℰ ⊕ 𝒦)`. Noise-space operators are
/// laid out as block matrices with `d × d` blocks (index `k·d + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryCoefficients {
    pub dim: usize,
    pub multiplicity: usize,
    /// Dilation multiplicity `q` (size of the `∘` index).
    pub dilation: usize,
    /// `K`, `d × d`.
    pub k: ComplexMatrix,
    /// `K_•^-`, `d × dm`.
    pub k_bullet: ComplexMatrix,
    /// `K_∘^-`, `d × dq`.
    pub k_circ: ComplexMatrix,
    /// `L_+^∘`, `dq × d`.
    pub l_plus: ComplexMatrix,
    /// `J_•^∘`, `dq × dm`.
    pub j_bullet: ComplexMatrix,
    /// `J_∘^∘`, `dq × dq`.
    pub j_circ: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitarityReport {
    /// Frobenius residuals of the five conditions, in order.
    pub residuals: [f64; 5],
    pub tol: f64,
    pub pass: bool,
}

impl UnitaryCoefficients {
    fn validate(&self) -> Result<()> {
        let (d, m, q) = (self.dim, self.multiplicity, self.dilation);
        matrix::ensure_shape(&self.k, d, d, "K")?;
        matrix::ensure_shape(&self.k_bullet, d, d * m, "K_bullet")?;
        matrix::ensure_shape(&self.k_circ, d, d * q, "K_circ")?;
        matrix::ensure_shape(&self.l_plus, d * q, d, "L_plus")?;
        matrix::ensure_shape(&self.j_bullet, d * q, d * m, "J_bullet")?;
        matrix::ensure_shape(&self.j_circ, d * q, d * q, "J_circ")
    }

    /// Canonical completion of a model: `L_+^∘` stacks the `L^k`; `J_•^∘` stacks
    /// the noise blocks when they form an isometry and is the canonical embedding
    /// otherwise; then `K_•^- = L_∘^- J_•^∘`, `J_∘^∘ = I − J_•^∘ J_∘^•`,
    /// `K_∘^- = L_∘^- J_∘^∘`. Conditions 2–5 hold by construction; condition 1
    /// holds iff the model is filtering.
    pub fn complete(model: &GermModel) -> Self {
        let (d, m, p) = (model.dim, model.multiplicity, model.kraus.len());
        let q = p.max(m);
        let mut l_plus = zeros(d * q, d);
        let mut stacked = zeros(d * q, d * m);
        for (k, term) in model.kraus.iter().enumerate() {
            l_plus.view_mut((k * d, 0), (d, d)).copy_from(&term.plus);
            for (n, ln) in term.noise.iter().enumerate() {
                stacked.view_mut((k * d, n * d), (d, d)).copy_from(ln);
            }
        }
        let isometric = matrix::frobenius(&(stacked.adjoint() * &stacked - identity(d * m))) <= 1e-12;
        let j_bullet = if isometric {
            stacked
        } else {
            let mut e = zeros(d * q, d * m);
            e.view_mut((0, 0), (d * m, d * m)).copy_from(&identity(d * m));
            e
        };
        let l_minus = l_plus.adjoint();
        let j_circ = identity(d * q) - &j_bullet * j_bullet.adjoint();
        UnitaryCoefficients {
            dim: d,
            multiplicity: m,
            dilation: q,
            k: model.k.clone(),
            k_bullet: &l_minus * &j_bullet,
            k_circ: &l_minus * &j_circ,
            l_plus,
            j_bullet,
            j_circ,
        }
    }
}

/// The five differential unitarity conditions, with `L_∘^- = (L_+^∘)†`:
/// `K + K† = L_∘^- L_+^∘`, `K_•^- = L_∘^- J_•^∘`, `J_∘^• J_•^∘ = I`,
/// `K_∘^- = L_∘^- J_∘^∘`, `J_∘^∘ = I − J_•^∘ J_∘^•`.
pub fn unitarity_check(coeffs: &UnitaryCoefficients, tol: f64) -> Result<UnitarityReport> {
    coeffs.validate()?;
    let (d, m, q) = (coeffs.dim, coeffs.multiplicity, coeffs.dilation);
    let l_minus = coeffs.l_plus.adjoint();
    let f = matrix::frobenius;
    let residuals = [
        f(&(&coeffs.k + coeffs.k.adjoint() - &l_minus * &coeffs.l_plus)),
        f(&(&coeffs.k_bullet - &l_minus * &coeffs.j_bullet)),
        f(&(coeffs.j_bullet.adjoint() * &coeffs.j_bullet - identity(d * m))),
        f(&(&coeffs.k_circ - &l_minus * &coeffs.j_circ)),
        f(&(&coeffs.j_circ - (identity(d * q) - &coeffs.j_bullet * coeffs.j_bullet.adjoint()))),
    ];
    let pass = residuals.iter().all(|&x| x <= tol);
    Ok(UnitarityReport { residuals, tol, pass })
}

/// Heisenberg-picture generator `B ↦ φ(B) − K*B − BK`.
pub fn lindblad_superop(model: &GermModel) -> SuperOperator {
    build_germ(model).block(0, 0).clone()
}

/// Schrödinger-picture generator, dual under `tr[λ(B) ρ] = tr[B λ'(ρ)]`.
pub fn lindblad_dual(model: &GermModel) -> SuperOperator {
    lindblad_superop(model).trace_dual()
}

/// A representation of an Itô-algebra element on `ℋ ⊗ 𝒦` (dilation multiplicity `q`).
#[derive(Debug, Clone, PartialEq)]
pub struct IntertwinerRep {
    /// `i(a)`, `dq × dq`.
    pub exchange: ComplexMatrix,
    /// `i_+(a)`, `dq × d`.
    pub creation: ComplexMatrix,
    /// `i^-(a)`, `d × dq`.
    pub annihilation: ComplexMatrix,
    /// `i^-_+(a)`, `d × d`.
    pub time: ComplexMatrix,
}

impl IntertwinerRep {
    /// Ampliate a scalar quadruple on `𝒦 = ℰ`: every entry becomes a multiple of `I_d`.
    pub fn ampliate(a: &ItoQuadruple, d: usize) -> Self {
        let id = identity(d);
        IntertwinerRep {
            exchange: kron(a.exchange(), &id),
            creation: kron(a.creation(), &id),
            annihilation: kron(a.annihilation(), &id),
            time: id * a.time(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntertwineReport {
    pub residuals: [f64; 4],
    pub tol: f64,
    pub pass: bool,
}

/// Residuals of
/// `L_• a^•_• = i(a) L_•`, `a^-_+ − K_• a^•_+ = i^-(a) L + i^-_+(a)`,
/// `L_• a^•_+ = i(a) L + i_+(a)`, `a^-_• − K_• a^•_• = i^-(a) L_•`,
/// where `L` stacks the `L^k` and `L_•` stacks the `L^k_n`.
pub fn intertwine_check(
    model: &GermModel,
    a: &ItoQuadruple,
    rep: &IntertwinerRep,
    tol: f64,
) -> Result<IntertwineReport> {
    let (d, m, p) = (model.dim, model.multiplicity, model.kraus.len());
    if a.multiplicity() != m {
        return Err(Error::MultiplicityMismatch { left: m, right: a.multiplicity() });
    }
    let dq = rep.exchange.nrows();
    if dq != d * p {
        return Err(Error::DimensionMismatch(format!(
            "representation acts on dimension {dq}, dilation space has {}",
            d * p
        )));
    }
    matrix::ensure_shape(&rep.exchange, dq, dq, "i(a)")?;
    matrix::ensure_shape(&rep.creation, dq, d, "i_+(a)")?;
    matrix::ensure_shape(&rep.annihilation, d, dq, "i^-(a)")?;
    matrix::ensure_shape(&rep.time, d, d, "i^-_+(a)")?;

    let mut l = zeros(dq, d);
    let mut l_bullet = zeros(dq, d * m);
    for (k, term) in model.kraus.iter().enumerate() {
        l.view_mut((k * d, 0), (d, d)).copy_from(&term.plus);
        for (n, ln) in term.noise.iter().enumerate() {
            l_bullet.view_mut((k * d, n * d), (d, d)).copy_from(ln);
        }
    }
    let id = identity(d);
    let ex = kron(a.exchange(), &id);
    let cr = kron(a.creation(), &id);
    let an = kron(a.annihilation(), &id);
    let tm = &id * a.time();
    let kb = model.k_bullet();
    let f = matrix::frobenius;
    let residuals = [
        f(&(&l_bullet * &ex - &rep.exchange * &l_bullet)),
        f(&(tm - &kb * &cr - &rep.annihilation * &l - &rep.time)),
        f(&(&l_bullet * &cr - &rep.exchange * &l - &rep.creation)),
        f(&(an - &kb * &ex - &rep.annihilation * &l_bullet)),
    ];
    let pass = residuals.iter().all(|&x| x <= tol);
    Ok(IntertwineReport { residuals, tol, pass })
}

/// HP commutator between the flow coefficient quadruple of a model and a
/// scalar Itô element `a`, as the Frobenius norm of the operator-valued result.
///
/// The coefficient quadruple needs a square exchange block, so the model must
/// have as many Kraus terms as noise channels. Its blocks are
/// exchange `[L^k_n − δ^k_n I]`, creation `[L^k]`, annihilation `[−K_n]`, time `−K`.
/// When this vanishes the generating-function kernel of the model over the
/// algebra spanned by such `a` is positive definite.
pub fn structural_commutator(model: &GermModel, a: &ItoQuadruple) -> Result<f64> {
    let (d, m) = (model.dim, model.multiplicity);
    if model.kraus.len() != m {
        return Err(Error::InvalidArgument(format!(
            "coefficient quadruple needs {m} Kraus terms, model has {}",
            model.kraus.len()
        )));
    }
    if a.multiplicity() != m {
        return Err(Error::MultiplicityMismatch { left: m, right: a.multiplicity() });
    }
    let mut ex = zeros(d * m, d * m);
    let mut cr = zeros(d * m, d);
    for (k, term) in model.kraus.iter().enumerate() {
        cr.view_mut((k * d, 0), (d, d)).copy_from(&term.plus);
        for (n, ln) in term.noise.iter().enumerate() {
            let block = if k == n { ln - identity(d) } else { ln.clone() };
            ex.view_mut((k * d, n * d), (d, d)).copy_from(&block);
        }
    }
    let an = -model.k_bullet();
    let id = identity(d);
    let (aex, acr, aan) = (kron(a.exchange(), &id), kron(a.creation(), &id), kron(a.annihilation(), &id));
    let f = matrix::frobenius;
    let blocks = [
        f(&(&ex * &aex - &aex * &ex)),
        f(&(&ex * &acr - &aex * &cr)),
        f(&(&an * &aex - &aan * &ex)),
        f(&(&an * &acr - &aan * &cr)),
    ];
    Ok(blocks.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Scalar `c` for convenience in tests and configs.
pub fn scalar_matrix(z: C64) -> ComplexMatrix {
    ComplexMatrix::from_element(1, 1, z)
}
