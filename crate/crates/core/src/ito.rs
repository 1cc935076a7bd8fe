//! The Hudson–Parthasarathy quadruple algebra at finite noise multiplicity.
//!
//! An element `a` is stored as four blocks indexed by `(−, •, +)`:
//! the exchange block `a^•_•` (m×m), the creation column `a^•_+` (m×1),
//! the annihilation row `a^-_•` (1×m) and the time scalar `a^-_+`.
//! The product keeps only the contractions through the `•` index,
//! `(a b)^μ_ν = a^μ_• b^•_ν`, which is the quantum Itô multiplication table.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, c, literal, ComplexMatrix, C64, I, ONE, ZERO};
use crate::random::random_matrix;

/// Blockwise tolerance used by [`ItoQuadruple::approx_eq`] defaults.
pub const QUADRUPLE_EQ_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadrupleRepr", into = "QuadrupleRepr")]
pub struct ItoQuadruple {
    m: usize,
    exchange: ComplexMatrix,
    creation: ComplexMatrix,
    annihilation: ComplexMatrix,
    time: C64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadrupleRepr {
    m: usize,
    #[serde(with = "literal")]
    exchange: ComplexMatrix,
    #[serde(with = "literal")]
    creation: ComplexMatrix,
    #[serde(with = "literal")]
    annihilation: ComplexMatrix,
    #[serde(with = "literal::scalar")]
    time: C64,
}

impl TryFrom<QuadrupleRepr> for ItoQuadruple {
    type Error = Error;

    fn try_from(r: QuadrupleRepr) -> Result<Self> {
        // An empty literal `[]` parses as 0x0; reshape so m = 0 round-trips.
        let fix = |a: ComplexMatrix, rows: usize, cols: usize| {
            if a.is_empty() && rows * cols == 0 {
                matrix::zeros(rows, cols)
            } else {
                a
            }
        };
        ItoQuadruple::new(fix(r.exchange, r.m, r.m), fix(r.creation, r.m, 1), fix(r.annihilation, 1, r.m), r.time)
            .and_then(|q| if q.m == r.m { Ok(q) } else { Err(Error::MultiplicityMismatch { left: q.m, right: r.m }) })
    }
}

impl From<ItoQuadruple> for QuadrupleRepr {
    fn from(q: ItoQuadruple) -> Self {
        QuadrupleRepr { m: q.m, exchange: q.exchange, creation: q.creation, annihilation: q.annihilation, time: q.time }
    }
}

impl ItoQuadruple {
    /// Assemble a quadruple; the multiplicity is read off the exchange block.
    pub fn new(
        exchange: ComplexMatrix,
        creation: ComplexMatrix,
        annihilation: ComplexMatrix,
        time: C64,
    ) -> Result<Self> {
        let m = matrix::ensure_square(&exchange, "exchange block")?;
        matrix::ensure_shape(&creation, m, 1, "creation block")?;
        matrix::ensure_shape(&annihilation, 1, m, "annihilation block")?;
        for (block, name) in [(&exchange, "exchange"), (&creation, "creation"), (&annihilation, "annihilation")] {
            matrix::ensure_finite(block, name)?;
        }
        if !(time.re.is_finite() && time.im.is_finite()) {
            return Err(Error::NonFinite("time component".into()));
        }
        Ok(Self { m, exchange, creation, annihilation, time })
    }

    pub fn zero(m: usize) -> Self {
        Self {
            m,
            exchange: matrix::zeros(m, m),
            creation: matrix::zeros(m, 1),
            annihilation: matrix::zeros(1, m),
            time: ZERO,
        }
    }

    pub fn multiplicity(&self) -> usize {
        self.m
    }

    pub fn exchange(&self) -> &ComplexMatrix {
        &self.exchange
    }

    pub fn creation(&self) -> &ComplexMatrix {
        &self.creation
    }

    pub fn annihilation(&self) -> &ComplexMatrix {
        &self.annihilation
    }

    pub fn time(&self) -> C64 {
        self.time
    }

    pub fn is_zero(&self) -> bool {
        self.time == ZERO
            && self.exchange.iter().chain(self.creation.iter()).chain(self.annihilation.iter()).all(|z| *z == ZERO)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_m(self, other)?;
        Ok(Self {
            m: self.m,
            exchange: &self.exchange + &other.exchange,
            creation: &self.creation + &other.creation,
            annihilation: &self.annihilation + &other.annihilation,
            time: self.time + other.time,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-ONE))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            m: self.m,
            exchange: &self.exchange * s,
            creation: &self.creation * s,
            annihilation: &self.annihilation * s,
            time: self.time * s,
        }
    }

    /// Largest blockwise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        same_m(self, other)?;
        let blocks = [
            (&self.exchange, &other.exchange),
            (&self.creation, &other.creation),
            (&self.annihilation, &other.annihilation),
        ];
        let mut worst = (self.time - other.time).norm();
        for (a, b) in blocks {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).norm());
            }
        }
        Ok(worst)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other).is_ok_and(|d| d <= tol)
    }

    /// Place a multiplicity-`k` quadruple into slots `offset..offset+k` of
    /// a multiplicity-`m` quadruple, padding with zeros.
    pub fn embed(&self, m: usize, offset: usize) -> Result<Self> {
        if offset + self.m > m {
            return Err(Error::DimensionMismatch(format!(
                "cannot embed multiplicity {} at offset {offset} into {m}",
                self.m
            )));
        }
        let mut out = Self::zero(m);
        let k = self.m;
        out.exchange.view_mut((offset, offset), (k, k)).copy_from(&self.exchange);
        out.creation.view_mut((offset, 0), (k, 1)).copy_from(&self.creation);
        out.annihilation.view_mut((0, offset), (1, k)).copy_from(&self.annihilation);
        out.time = self.time;
        Ok(out)
    }
}

fn same_m(a: &ItoQuadruple, b: &ItoQuadruple) -> Result<()> {
    if a.m == b.m {
        Ok(())
    } else {
        Err(Error::MultiplicityMismatch { left: a.m, right: b.m })
    }
}

/// HP product `(a b)^μ_ν = a^μ_• b^•_ν`.
pub fn hp_product(a: &ItoQuadruple, b: &ItoQuadruple) -> Result<ItoQuadruple> {
    same_m(a, b)?;
    let time = if a.m == 0 { ZERO } else { (&a.annihilation * &b.creation)[(0, 0)] };
    Ok(ItoQuadruple {
        m: a.m,
        exchange: &a.exchange * &b.exchange,
        creation: &a.exchange * &b.creation,
        annihilation: &a.annihilation * &b.exchange,
        time,
    })
}

/// The involution `a^{⋆μ}_{−ν} = conj(a^ν_{−μ})`.
pub fn star(a: &ItoQuadruple) -> ItoQuadruple {
    ItoQuadruple {
        m: a.m,
        exchange: a.exchange.adjoint(),
        creation: a.annihilation.adjoint(),
        annihilation: a.creation.adjoint(),
        time: a.time.conj(),
    }
}

/// `a ⋆ b = b + a^⋆ b + a^⋆`.
pub fn star_product(a: &ItoQuadruple, b: &ItoQuadruple) -> Result<ItoQuadruple> {
    let sa = star(a);
    b.add(&hp_product(&sa, b)?)?.add(&sa)
}

/// `a b − b a` in the HP product.
pub fn hp_commutator(a: &ItoQuadruple, b: &ItoQuadruple) -> Result<ItoQuadruple> {
    hp_product(a, b)?.sub(&hp_product(b, a)?)
}

/// Death element: `dt` scaled by `alpha`.
pub fn newton(alpha: C64) -> ItoQuadruple {
    let mut q = ItoQuadruple::zero(1);
    q.time = alpha;
    q
}

/// `alpha dt + xi dQ` for a standard Wiener process `Q`.
pub fn wiener(alpha: C64, xi: C64) -> ItoQuadruple {
    let mut q = newton(alpha);
    q.creation[(0, 0)] = xi;
    q.annihilation[(0, 0)] = xi;
    q
}

/// `alpha dt + zeta dP` for the compensated Poisson process `P`.
pub fn poisson(alpha: C64, zeta: C64) -> ItoQuadruple {
    let mut q = newton(alpha);
    q.exchange[(0, 0)] = zeta;
    q.creation[(0, 0)] = I * zeta;
    q.annihilation[(0, 0)] = -I * zeta;
    q
}

/// Poisson element with the time entry set to `zeta` instead of `alpha`.
///
/// Kept for comparison only: with this choice `p • p ≠ p + newton(1)`
/// in general, so it is not used by any other routine.
pub fn poisson_literal(zeta: C64) -> ItoQuadruple {
    let mut q = poisson(ZERO, zeta);
    q.time = zeta;
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanonicalKind {
    Newton,
    Wiener,
    Poisson,
}

/// Canonical one-dimensional element; `amplitude` is ignored for `Newton`.
pub fn canonical(kind: CanonicalKind, alpha: C64, amplitude: C64) -> ItoQuadruple {
    match kind {
        CanonicalKind::Newton => newton(alpha),
        CanonicalKind::Wiener => wiener(alpha, amplitude),
        CanonicalKind::Poisson => poisson(alpha, amplitude),
    }
}

/// Random quadruple with every entry of modulus at most `scale`.
pub fn random_quadruple<R: Rng + ?Sized>(rng: &mut R, m: usize, scale: f64) -> ItoQuadruple {
    let s = scale / std::f64::consts::SQRT_2;
    ItoQuadruple {
        m,
        exchange: random_matrix(rng, m, m, s),
        creation: random_matrix(rng, m, 1, s),
        annihilation: random_matrix(rng, 1, m, s),
        time: c(rng.random_range(-s..=s), rng.random_range(-s..=s)),
    }
}

/// `(m+2)×(m+2)` matrix in block order `(−, •, +)` with zero first column
/// and zero last row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedMatrix {
    m: usize,
    matrix: ComplexMatrix,
}

impl ExtendedMatrix {
    pub fn new(m: usize, matrix: ComplexMatrix) -> Result<Self> {
        matrix::ensure_shape(&matrix, m + 2, m + 2, "extended matrix")?;
        let plus = m + 1;
        let first_col_zero = (0..m + 2).all(|i| matrix[(i, 0)] == ZERO);
        let last_row_zero = (0..m + 2).all(|j| matrix[(plus, j)] == ZERO);
        if !(first_col_zero && last_row_zero) {
            return Err(Error::InvalidArgument("extended matrix must vanish in its first column and last row".into()));
        }
        Ok(Self { m, matrix })
    }

    pub fn multiplicity(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.m != other.m {
            return Err(Error::MultiplicityMismatch { left: self.m, right: other.m });
        }
        Ok(Self { m: self.m, matrix: &self.matrix * &other.matrix })
    }

    /// Read the quadruple back out of the triangular embedding.
    pub fn to_quadruple(&self) -> ItoQuadruple {
        let m = self.m;
        ItoQuadruple {
            m,
            exchange: self.matrix.view((1, 1), (m, m)).into_owned(),
            creation: self.matrix.view((1, m + 1), (m, 1)).into_owned(),
            annihilation: self.matrix.view((0, 1), (1, m)).into_owned(),
            time: self.matrix[(0, m + 1)],
        }
    }
}

/// Minkowski metric swapping the `−` and `+` indices.
fn minkowski(m: usize) -> ComplexMatrix {
    let mut g = matrix::zeros(m + 2, m + 2);
    g[(0, m + 1)] = ONE;
    g[(m + 1, 0)] = ONE;
    for k in 1..=m {
        g[(k, k)] = ONE;
    }
    g
}

pub fn extend(a: &ItoQuadruple) -> ExtendedMatrix {
    let m = a.m;
    let mut mat = matrix::zeros(m + 2, m + 2);
    mat.view_mut((1, 1), (m, m)).copy_from(&a.exchange);
    mat.view_mut((1, m + 1), (m, 1)).copy_from(&a.creation);
    mat.view_mut((0, 1), (1, m)).copy_from(&a.annihilation);
    mat[(0, m + 1)] = a.time;
    ExtendedMatrix { m, matrix: mat }
}

/// `G M† G` with `G` the Minkowski metric.
pub fn pseudo_adjoint(x: &ExtendedMatrix) -> ExtendedMatrix {
    let g = minkowski(x.m);
    ExtendedMatrix { m: x.m, matrix: &g * x.matrix.adjoint() * &g }
}

/// Piecewise-constant quadruple-valued function on `[0, horizon)`, zero afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepRepr", into = "StepRepr")]
pub struct StepFunction {
    m: usize,
    breakpoints: Vec<f64>,
    values: Vec<ItoQuadruple>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRepr {
    m: usize,
    horizon: f64,
    breakpoints: Vec<f64>,
    values: Vec<ItoQuadruple>,
}

impl TryFrom<StepRepr> for StepFunction {
    type Error = Error;

    fn try_from(r: StepRepr) -> Result<Self> {
        let f = StepFunction::new(r.m, r.breakpoints, r.values)?;
        if f.horizon() != r.horizon {
            return Err(Error::InvalidArgument(format!(
                "horizon {} does not match last breakpoint {}",
                r.horizon,
                f.horizon()
            )));
        }
        Ok(f)
    }
}

impl From<StepFunction> for StepRepr {
    fn from(f: StepFunction) -> Self {
        StepRepr { m: f.m, horizon: f.horizon(), breakpoints: f.breakpoints, values: f.values }
    }
}

/// Check `0 = t_0 < t_1 < … < t_K` with finite entries.
pub(crate) fn validate_breakpoints(breakpoints: &[f64], intervals: usize) -> Result<()> {
    if breakpoints.len() != intervals + 1 {
        return Err(Error::InvalidArgument(format!("{} breakpoints for {intervals} intervals", breakpoints.len())));
    }
    if breakpoints[0] != 0.0 {
        return Err(Error::InvalidArgument("first breakpoint must be 0".into()));
    }
    if breakpoints.iter().any(|t| !t.is_finite()) || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("breakpoints must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Union of two breakpoint grids, sorted and deduplicated.
pub(crate) fn merge_grids(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Index of the interval `[t_{k}, t_{k+1})` containing `s`, if any.
pub(crate) fn interval_index(breakpoints: &[f64], s: f64) -> Option<usize> {
    let last = *breakpoints.last()?;
    if s < 0.0 || s >= last {
        return None;
    }
    // partition_point gives the first index with t > s
    Some(breakpoints.partition_point(|&t| t <= s) - 1)
}

impl StepFunction {
    pub fn new(m: usize, breakpoints: Vec<f64>, values: Vec<ItoQuadruple>) -> Result<Self> {
        validate_breakpoints(&breakpoints, values.len())?;
        if values.is_empty() {
            return Err(Error::InvalidArgument("step function needs at least one interval".into()));
        }
        if let Some(v) = values.iter().find(|v| v.m != m) {
            return Err(Error::MultiplicityMismatch { left: m, right: v.m });
        }
        Ok(Self { m, breakpoints, values })
    }

    /// The value `a` on `[0, horizon)`.
    pub fn constant(a: ItoQuadruple, horizon: f64) -> Result<Self> {
        Self::new(a.m, vec![0.0, horizon], vec![a])
    }

    pub fn zero(m: usize, horizon: f64) -> Result<Self> {
        Self::constant(ItoQuadruple::zero(m), horizon)
    }

    pub fn multiplicity(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().expect("validated non-empty")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[ItoQuadruple] {
        &self.values
    }

    /// Right-continuous value at `s`; zero outside `[0, horizon)`.
    pub fn value_at(&self, s: f64) -> ItoQuadruple {
        match interval_index(&self.breakpoints, s) {
            Some(k) => self.values[k].clone(),
            None => ItoQuadruple::zero(self.m),
        }
    }

    /// `∫_0^t g(r)^-_+ dr`, exact.
    pub fn time_integral(&self, t: f64) -> C64 {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| {
                let len = (w[1].min(t) - w[0]).max(0.0);
                v.time * len
            })
            .sum()
    }
}

/// Pointwise `g ⋆ h` on the merged grid; the horizon is the larger of the two.
pub fn step_star(g: &StepFunction, h: &StepFunction) -> Result<StepFunction> {
    if g.m != h.m {
        return Err(Error::MultiplicityMismatch { left: g.m, right: h.m });
    }
    let grid = merge_grids(&g.breakpoints, &h.breakpoints);
    let mut values = Vec::with_capacity(grid.len() - 1);
    for w in grid.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        values.push(star_product(&g.value_at(mid), &h.value_at(mid))?);
    }
    StepFunction::new(g.m, grid, values)
}

/// Worst-case residuals of the algebra axioms over random samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AxiomResiduals {
    pub samples: usize,
    pub associativity: f64,
    pub anti_multiplicativity: f64,
    pub extend_homomorphism: f64,
    pub extend_involution: f64,
    pub star_semigroup_associativity: f64,
    /// Whether `(dQ)² = dt`, `(dP)² = dP + dt` and `(dt)² = 0` hold exactly.
    pub table_identities_exact: bool,
}

impl AxiomResiduals {
    pub fn max_residual(&self) -> f64 {
        [
            self.associativity,
            self.anti_multiplicativity,
            self.extend_homomorphism,
            self.extend_involution,
            self.star_semigroup_associativity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub type ProductFn = fn(&ItoQuadruple, &ItoQuadruple) -> Result<ItoQuadruple>;

/// Run the axiom suite with `product` standing in for the HP product, so that
/// a faulty table can be shown to be caught.
pub fn check_axioms<R: Rng + ?Sized>(
    rng: &mut R,
    samples: usize,
    max_m: usize,
    product: ProductFn,
) -> Result<AxiomResiduals> {
    if samples == 0 || max_m == 0 {
        return Err(Error::InvalidArgument("samples and multiplicity must be positive".into()));
    }
    let star_prod = |a: &ItoQuadruple, b: &ItoQuadruple| -> Result<ItoQuadruple> {
        let sa = star(a);
        b.add(&product(&sa, b)?)?.add(&sa)
    };
    let mut out = AxiomResiduals { samples, ..Default::default() };
    for _ in 0..samples {
        let m = rng.random_range(1..=max_m);
        let a = random_quadruple(rng, m, 1.0);
        let b = random_quadruple(rng, m, 1.0);
        let cq = random_quadruple(rng, m, 1.0);

        let left = product(&product(&a, &b)?, &cq)?;
        let right = product(&a, &product(&b, &cq)?)?;
        out.associativity = out.associativity.max(left.max_abs_diff(&right)?);

        let lhs = star(&product(&a, &b)?);
        let rhs = product(&star(&b), &star(&a))?;
        out.anti_multiplicativity = out.anti_multiplicativity.max(lhs.max_abs_diff(&rhs)?);

        let via_matrix = extend(&a).mul(&extend(&b))?.to_quadruple();
        out.extend_homomorphism = out.extend_homomorphism.max(via_matrix.max_abs_diff(&product(&a, &b)?)?);
        let adj = pseudo_adjoint(&extend(&a)).to_quadruple();
        out.extend_involution = out.extend_involution.max(adj.max_abs_diff(&star(&a))?);

        // a ⋆ (b ⋆ c) = (b^⋆ ⋆ a) ⋆ c, the associativity of `x ∘ y = x + y + xy`
        // written through `a ⋆ b = a^⋆ ∘ b`.
        let l = star_prod(&star_prod(&star(&b), &a)?, &cq)?;
        let r = star_prod(&a, &star_prod(&b, &cq)?)?;
        out.star_semigroup_associativity = out.star_semigroup_associativity.max(l.max_abs_diff(&r)?);
    }
    let w = wiener(ZERO, ONE);
    let p = poisson(ZERO, ONE);
    let d = newton(ONE);
    out.table_identities_exact = product(&w, &w)? == d && product(&p, &p)? == p.add(&d)? && product(&d, &d)?.is_zero();
    Ok(out)
}
