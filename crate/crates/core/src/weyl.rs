//! Coherent-sector Fock computations.
//!
//! A [`PiecewiseCoherent`] vector is `prefactor · f^⊗` for a piecewise-constant
//! amplitude `f: [0, T) → ℂ^m`. This family is closed under the Weyl operators
//! `W(t, a)` with constant `a`, and every inner product is an exact finite sum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ito::{self, interval_index, merge_grids, validate_breakpoints, ItoQuadruple};
use crate::matrix::{self, literal, ComplexMatrix, ComplexVector, C64, ONE, ZERO};
use crate::random::random_matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoherentRepr", into = "CoherentRepr")]
pub struct PiecewiseCoherent {
    m: usize,
    breakpoints: Vec<f64>,
    amplitudes: Vec<ComplexVector>,
    prefactor: C64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoherentRepr {
    m: usize,
    horizon: f64,
    breakpoints: Vec<f64>,
    amplitudes: Vec<Amplitude>,
    #[serde(with = "literal::scalar")]
    prefactor: C64,
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct Amplitude(#[serde(with = "literal::vector")] ComplexVector);

impl TryFrom<CoherentRepr> for PiecewiseCoherent {
    type Error = Error;

    fn try_from(r: CoherentRepr) -> Result<Self> {
        let amps = r.amplitudes.into_iter().map(|a| a.0).collect();
        let v = PiecewiseCoherent::new(r.m, r.breakpoints, amps, r.prefactor)?;
        if v.horizon() != r.horizon {
            return Err(Error::InvalidArgument(format!(
                "horizon {} does not match last breakpoint {}",
                r.horizon,
                v.horizon()
            )));
        }
        Ok(v)
    }
}

impl From<PiecewiseCoherent> for CoherentRepr {
    fn from(v: PiecewiseCoherent) -> Self {
        CoherentRepr {
            m: v.m,
            horizon: v.horizon(),
            breakpoints: v.breakpoints,
            amplitudes: v.amplitudes.into_iter().map(Amplitude).collect(),
            prefactor: v.prefactor,
        }
    }
}

impl PiecewiseCoherent {
    pub fn new(m: usize, breakpoints: Vec<f64>, amplitudes: Vec<ComplexVector>, prefactor: C64) -> Result<Self> {
        validate_breakpoints(&breakpoints, amplitudes.len())?;
        if let Some(a) = amplitudes.iter().find(|a| a.len() != m) {
            return Err(Error::MultiplicityMismatch { left: m, right: a.len() });
        }
        if amplitudes.iter().flat_map(|a| a.iter()).chain(std::iter::once(&prefactor)).any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("coherent vector".into()));
        }
        Ok(Self { m, breakpoints, amplitudes, prefactor })
    }

    /// The Fock vacuum: zero amplitude, unit prefactor.
    pub fn vacuum(m: usize) -> Self {
        Self { m, breakpoints: vec![0.0], amplitudes: Vec::new(), prefactor: ONE }
    }

    /// Constant amplitude on `[0, horizon)`, unit prefactor.
    pub fn constant(amplitude: ComplexVector, horizon: f64) -> Result<Self> {
        Self::new(amplitude.len(), vec![0.0, horizon], vec![amplitude], ONE)
    }

    /// Scalar constant amplitude for `m = 1`.
    pub fn constant_scalar(amplitude: C64, horizon: f64) -> Result<Self> {
        Self::constant(ComplexVector::from_element(1, amplitude), horizon)
    }

    /// The creation amplitude `r ↦ g(r)^•_+` of a step function.
    pub fn from_creation(g: &ito::StepFunction) -> Self {
        let amplitudes = g.values().iter().map(|v| v.creation().column(0).into_owned()).collect();
        Self { m: g.multiplicity(), breakpoints: g.breakpoints().to_vec(), amplitudes, prefactor: ONE }
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

    pub fn amplitudes(&self) -> &[ComplexVector] {
        &self.amplitudes
    }

    pub fn prefactor(&self) -> C64 {
        self.prefactor
    }

    pub fn with_prefactor(mut self, prefactor: C64) -> Self {
        self.prefactor = prefactor;
        self
    }

    /// Right-continuous amplitude at `s`; zero outside `[0, horizon)`.
    pub fn amplitude_at(&self, s: f64) -> ComplexVector {
        match interval_index(&self.breakpoints, s) {
            Some(k) => self.amplitudes[k].clone(),
            None => ComplexVector::zeros(self.m),
        }
    }

    /// Time shift `r ↦ f(r + s)` restricted to `r ≥ 0`, unit prefactor.
    pub fn shifted(&self, s: f64) -> Self {
        if s <= 0.0 {
            return self.clone().with_prefactor(ONE);
        }
        if s >= self.horizon() {
            return Self::vacuum(self.m);
        }
        let start = interval_index(&self.breakpoints, s).expect("s inside the horizon");
        let mut breakpoints = vec![0.0];
        breakpoints.extend(self.breakpoints[start + 1..].iter().map(|t| t - s));
        Self { m: self.m, breakpoints, amplitudes: self.amplitudes[start..].to_vec(), prefactor: ONE }
    }

    pub fn is_zero_amplitude(&self) -> bool {
        self.amplitudes.iter().all(|a| a.iter().all(|z| *z == ZERO))
    }
}

fn same_m(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::MultiplicityMismatch { left, right })
    }
}

/// `∫_lo^hi ⟨u(r), v(r)⟩ dr`, exact on the merged grid.
pub fn overlap_integral(u: &PiecewiseCoherent, v: &PiecewiseCoherent, lo: f64, hi: f64) -> Result<C64> {
    same_m(u.m, v.m)?;
    let grid = merge_grids(&u.breakpoints, &v.breakpoints);
    let mut acc = ZERO;
    for w in grid.windows(2) {
        let (a, b) = (w[0].max(lo), w[1].min(hi));
        if b > a {
            let mid = 0.5 * (w[0] + w[1]);
            acc += u.amplitude_at(mid).dotc(&v.amplitude_at(mid)) * (b - a);
        }
    }
    Ok(acc)
}

/// `⟨u, v⟩ = conj(p_u) p_v exp(∫ ⟨u(r), v(r)⟩ dr)`.
pub fn coherent_inner(u: &PiecewiseCoherent, v: &PiecewiseCoherent) -> Result<C64> {
    let exponent = overlap_integral(u, v, 0.0, f64::INFINITY)?;
    Ok(u.prefactor.conj() * v.prefactor * exponent.exp())
}

/// Gram matrix `G_kl = ⟨v_k, v_l⟩` of a coherent family.
pub fn coherent_gram(family: &[PiecewiseCoherent]) -> Result<ComplexMatrix> {
    let n = family.len();
    let mut g = matrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            g[(k, l)] = coherent_inner(&family[k], &family[l])?;
        }
    }
    Ok(g)
}

/// `W(t, a) f`: on `r < t` the amplitude becomes `(I + a^•_•) f(r) + a^•_+`,
/// and the prefactor picks up `exp ∫_0^t (a^-_• f(r) + a^-_+) dr`.
pub fn weyl_apply(t: f64, a: &ItoQuadruple, f: &PiecewiseCoherent) -> Result<PiecewiseCoherent> {
    same_m(a.multiplicity(), f.m)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("Weyl time must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let horizon = f.horizon().max(t);
    let mut grid = merge_grids(&f.breakpoints, &[t, horizon]);
    grid.retain(|&s| s <= horizon);
    let one_plus = ComplexMatrix::identity(f.m, f.m) + a.exchange();
    let creation = a.creation().column(0).into_owned();
    let annihilation = a.annihilation().row(0).transpose();
    let mut amplitudes = Vec::with_capacity(grid.len() - 1);
    let mut exponent = ZERO;
    for w in grid.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let amp = f.amplitude_at(mid);
        if w[1] <= t {
            exponent += (annihilation.dot(&amp) + a.time()) * (w[1] - w[0]);
            amplitudes.push(&one_plus * &amp + &creation);
        } else {
            amplitudes.push(amp);
        }
    }
    PiecewiseCoherent::new(f.m, grid, amplitudes, f.prefactor * exponent.exp())
}

/// `|⟨W(t,a) f, W(t,b) h⟩ − ⟨f, W(t, a ⋆ b) h⟩|`.
pub fn weyl_polarized_discrepancy(
    t: f64,
    a: &ItoQuadruple,
    b: &ItoQuadruple,
    f: &PiecewiseCoherent,
    h: &PiecewiseCoherent,
) -> Result<f64> {
    let lhs = coherent_inner(&weyl_apply(t, a, f)?, &weyl_apply(t, b, h)?)?;
    let rhs = coherent_inner(f, &weyl_apply(t, &ito::star_product(a, b)?, h)?)?;
    Ok((lhs - rhs).norm())
}

/// The `W(t, a⋆a) = W(t, a)^* W(t, a)` check in polarized form.
pub fn weyl_semigroup_check(t: f64, a: &ItoQuadruple, f: &PiecewiseCoherent, h: &PiecewiseCoherent) -> Result<f64> {
    weyl_polarized_discrepancy(t, a, a, f, h)
}

/// Random vector with one to three amplitude pieces of length in `[0.1, 1)`,
/// amplitude entries bounded by `0.7` and a prefactor near one.
pub fn random_coherent<R: Rng + ?Sized>(rng: &mut R, m: usize) -> PiecewiseCoherent {
    let k = rng.random_range(1..=3);
    let mut bps = vec![0.0];
    for _ in 0..k {
        let last = *bps.last().expect("starts at 0");
        bps.push(last + rng.random_range(0.1..1.0));
    }
    let amps = (0..k).map(|_| random_matrix(rng, m, 1, 0.7).column(0).into_owned()).collect();
    PiecewiseCoherent::new(m, bps, amps, C64::new(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5)))
        .expect("increasing breakpoints")
}

/// Largest polarized discrepancy over `samples` random draws of
/// `(a, b, f, h, t)` with `m ≤ max_m`, quadruple entries bounded by one and
/// `t ≤ t_max`.
pub fn random_polarized_suite<R: Rng + ?Sized>(rng: &mut R, samples: usize, max_m: usize, t_max: f64) -> Result<f64> {
    if max_m == 0 || !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::InvalidArgument("multiplicity and t_max must be positive".into()));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let m = rng.random_range(1..=max_m);
        let a = ito::random_quadruple(rng, m, 1.0);
        let b = ito::random_quadruple(rng, m, 1.0);
        let f = random_coherent(rng, m);
        let h = random_coherent(rng, m);
        let t = rng.random_range(0.0..=t_max);
        worst = worst.max(weyl_polarized_discrepancy(t, &a, &b, &f, &h)?);
    }
    Ok(worst)
}
