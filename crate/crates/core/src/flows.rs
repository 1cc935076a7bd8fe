//! Deterministic propagation of CP flows in the vacuum and coherent sectors.
//!
//! Superoperators act on the argument `B` in the Heisenberg picture and are
//! composed on the right: `Υ' = Υ ∘ λ_t`. In matrix form this is `Υ' = Υ Λ_t`.
//!
//! For test amplitudes `f`, `g` the reduced propagator `Υ_t^{f,g}` is the
//! coherent matrix element of the flow divided by `⟨f^⊗, g^⊗⟩`. Its generator is
//! `λ_t(B) = Φ_t(B) − A_f(t)* B − B A_g(t) − ⟨f(t), g(t)⟩ B` with
//! `A_f = K + Σ_n K_n f^n` and `Φ_t = Σ_{μν} w_{μν} φ^μ_ν`, weights
//! `w_{−+} = 1`, `w_{−n} = g^n`, `w_{m+} = conj(f^m)`, `w_{mn} = conj(f^m) g^n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{lindblad_superop, GermModel};
use crate::ito::{self, merge_grids, StepFunction};
use crate::matrix::{
    self, expm, hermitian_eigen, identity, kron, r, superop_left, superop_right, zeros, ComplexMatrix, ComplexVector,
    SuperOperator, C64, ONE, ZERO,
};
use crate::weyl::{coherent_inner, overlap_integral, PiecewiseCoherent};

/// Default RK4 step count for horizon `t`.
pub fn default_steps(t: f64) -> usize {
    ((1000.0 * t).ceil() as usize).max(1)
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be finite and non-negative, got {t}")))
    }
}

fn check_multiplicity(model: &GermModel, f: &PiecewiseCoherent) -> Result<()> {
    if f.multiplicity() == model.multiplicity() {
        Ok(())
    } else {
        Err(Error::MultiplicityMismatch { left: model.multiplicity(), right: f.multiplicity() })
    }
}

/// Sub-intervals of `[lo, hi]` on which both amplitudes are constant.
fn segments(f: &PiecewiseCoherent, g: &PiecewiseCoherent, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut grid = merge_grids(&merge_grids(f.breakpoints(), g.breakpoints()), &[lo, hi]);
    grid.retain(|&s| s >= lo && s <= hi);
    grid.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| b > a).collect()
}

/// `A_f = K + Σ_n K_n f^n`.
fn drift(model: &GermModel, f: &ComplexVector) -> ComplexMatrix {
    model.k_list().iter().zip(f.iter()).fold(model.k().clone(), |acc, (kn, fn_)| acc + kn * *fn_)
}

/// Propagator `S` from `lo` to `hi` of `dS/du = −A_f(u) S`, later intervals on the left.
pub fn cocycle_between(model: &GermModel, f: &PiecewiseCoherent, lo: f64, hi: f64) -> Result<ComplexMatrix> {
    check_multiplicity(model, f)?;
    let mut s = identity(model.dim());
    for (a, b) in segments(f, f, lo, hi) {
        let amp = f.amplitude_at(0.5 * (a + b));
        s = expm(&(drift(model, &amp) * r(-(b - a))))? * s;
    }
    Ok(s)
}

/// `S_t(f)`: solution of `dS/dt + (K + Σ_n K_n f^n(t)) S = 0`, `S_0 = I`.
pub fn s_cocycle(model: &GermModel, f: &PiecewiseCoherent, t: f64) -> Result<ComplexMatrix> {
    check_time(t)?;
    cocycle_between(model, f, 0.0, t)
}

/// One RK4 step factor `I + hΛ + (hΛ)²/2 + (hΛ)³/6 + (hΛ)⁴/24` for a constant generator.
fn rk4_factor(gen: &ComplexMatrix, h: f64) -> ComplexMatrix {
    let n = gen.nrows();
    let a = gen * r(h);
    let a2 = &a * &a;
    let a3 = &a2 * &a;
    let a4 = &a3 * &a;
    identity(n) + &a + a2 * r(0.5) + a3 * r(1.0 / 6.0) + a4 * r(1.0 / 24.0)
}

/// `Θ ← Θ · P^steps` with `P` the RK4 factor of `gen` over `len / steps`.
fn rk4_advance(theta: &mut ComplexMatrix, gen: &ComplexMatrix, len: f64, steps: usize) {
    let factor = rk4_factor(gen, len / steps as f64);
    for _ in 0..steps {
        *theta = &*theta * &factor;
    }
}

/// Vacuum semigroup `Θ_t` with `Θ' = Θ ∘ λ`, by fixed-step RK4.
pub fn evolve_semigroup(model: &GermModel, t: f64, steps: usize) -> Result<SuperOperator> {
    check_time(t)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let d = model.dim();
    let mut theta = identity(d * d);
    if t > 0.0 {
        rk4_advance(&mut theta, lindblad_superop(model).matrix(), t, steps);
    }
    SuperOperator::new(d, theta)
}

/// `Θ_t = exp(tλ)` by matrix exponential.
pub fn evolve_semigroup_expm(model: &GermModel, t: f64) -> Result<SuperOperator> {
    check_time(t)?;
    let gen = lindblad_superop(model).into_matrix() * r(t);
    SuperOperator::new(model.dim(), expm(&gen)?)
}

/// All blocks `φ^μ_ν`, row-major over `(1+m) × (1+m)`.
fn phi_blocks(model: &GermModel) -> Vec<ComplexMatrix> {
    let n = 1 + model.multiplicity();
    (0..n * n).map(|i| model.phi_block(i / n, i % n).into_matrix()).collect()
}

/// `Φ_t` for amplitude values `f`, `g` as a superoperator matrix.
fn weighted_phi(model: &GermModel, blocks: &[ComplexMatrix], f: &ComplexVector, g: &ComplexVector) -> ComplexMatrix {
    let n = 1 + model.multiplicity();
    let weight = |idx: usize| -> C64 {
        let (mu, nu) = (idx / n, idx % n);
        let left = if mu == 0 { ONE } else { f[mu - 1].conj() };
        let right = if nu == 0 { ONE } else { g[nu - 1] };
        left * right
    };
    let d2 = model.dim() * model.dim();
    blocks.iter().enumerate().fold(zeros(d2, d2), |acc, (i, b)| {
        let w = weight(i);
        if w == ZERO {
            acc
        } else {
            acc + b * w
        }
    })
}

/// Generator `λ_t` without its scalar part `−⟨f(t), g(t)⟩ B`, which commutes
/// with everything and is applied exactly afterwards.
fn coherent_generator(
    model: &GermModel,
    blocks: &[ComplexMatrix],
    f: &ComplexVector,
    g: &ComplexVector,
) -> ComplexMatrix {
    let d = model.dim();
    let a_f = drift(model, f);
    let a_g = drift(model, g);
    let shape = "square drift";
    weighted_phi(model, blocks, f, g)
        - superop_left(&a_f.adjoint(), d).expect(shape).into_matrix()
        - superop_right(&a_g, d).expect(shape).into_matrix()
}

/// `Υ_t^{f,g}` with its test amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPropagator {
    pub t: f64,
    pub map: SuperOperator,
    pub f: PiecewiseCoherent,
    pub g: PiecewiseCoherent,
}

impl ReducedPropagator {
    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn apply(&self, b: &ComplexMatrix) -> ComplexMatrix {
        self.map.apply(b)
    }
}

/// Integrate `Υ' = Υ ∘ λ_t` by RK4 on each interval where `f`, `g` are constant,
/// with the scalar factor `exp(−∫_0^t ⟨f, g⟩)` taken out exactly.
/// An interval of length `Δ` gets `ceil(steps·Δ/t)` sub-steps, so the vacuum case
/// reproduces [`evolve_semigroup`] exactly.
pub fn coherent_propagator(
    model: &GermModel,
    f: &PiecewiseCoherent,
    g: &PiecewiseCoherent,
    t: f64,
    steps: usize,
) -> Result<ReducedPropagator> {
    check_time(t)?;
    check_multiplicity(model, f)?;
    check_multiplicity(model, g)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let d = model.dim();
    let blocks = phi_blocks(model);
    let mut ups = identity(d * d);
    for (a, b) in segments(f, g, 0.0, t) {
        let mid = 0.5 * (a + b);
        let gen = coherent_generator(model, &blocks, &f.amplitude_at(mid), &g.amplitude_at(mid));
        let sub = ((steps as f64 * (b - a) / t).ceil() as usize).max(1);
        rk4_advance(&mut ups, &gen, b - a, sub);
    }
    let scalar = (-overlap_integral(f, g, 0.0, t)?).exp();
    Ok(ReducedPropagator {
        t,
        map: SuperOperator::new(d, ups * scalar)?,
        f: f.clone().with_prefactor(ONE),
        g: g.clone().with_prefactor(ONE),
    })
}

/// Matrix of `X ↦ A X B`.
fn sandwich_matrix(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    kron(&b.transpose(), a)
}

/// Composite quadrature weights on `j + 1` equispaced nodes with spacing `h`:
/// trapezoid for one interval, Simpson for an even count, Simpson plus a
/// closing 3/8 panel for an odd count.
pub fn quadrature_weights(j: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; j + 1];
    match j {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_end = if j.is_multiple_of(2) { j } else { j - 3 };
            for i in (0..simpson_end).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if j % 2 == 1 {
                let s = simpson_end;
                w[s] += 3.0 * h / 8.0;
                w[s + 1] += 9.0 * h / 8.0;
                w[s + 2] += 9.0 * h / 8.0;
                w[s + 3] += 3.0 * h / 8.0;
            }
        }
    }
    w
}

/// Equispaced stretch of the Picard grid between two breakpoints.
struct Panel {
    start: usize,
    start_time: f64,
    count: usize,
    h: f64,
}

/// Panels between consecutive breakpoints of `f` and `g` in `(0, t)`, with
/// intervals shared out by length (at least two per panel).
fn picard_panels(f: &PiecewiseCoherent, g: &PiecewiseCoherent, t: f64, quad_steps: usize) -> Vec<Panel> {
    let eps = 1e-12 * t.max(1.0);
    let mut cuts: Vec<f64> =
        f.breakpoints().iter().chain(g.breakpoints()).copied().filter(|&b| b > eps && b < t - eps).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| *a - *b <= eps);
    let mut bounds = vec![0.0];
    bounds.extend(cuts);
    bounds.push(t);
    let mut panels = Vec::with_capacity(bounds.len() - 1);
    let mut start = 0;
    for w in bounds.windows(2) {
        let len = w[1] - w[0];
        let count = ((quad_steps as f64 * len / t).round() as usize).max(2);
        panels.push(Panel { start, start_time: w[0], count, h: len / count as f64 });
        start += count;
    }
    panels
}

/// Weights of `∫_0^{r_j}` split by the side from which `Φ` is sampled: right
/// values for nodes opening or inside a panel, left limits for nodes closing one.
fn panel_weights(panels: &[Panel], j: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut right, mut left) = (vec![0.0; j + 1], vec![0.0; j + 1]);
    for p in panels.iter().take_while(|p| p.start < j) {
        let len = p.count.min(j - p.start);
        let w = quadrature_weights(len, p.h);
        for (i, &wi) in w[..len].iter().enumerate() {
            right[p.start + i] += wi;
        }
        left[p.start + len] += w[len];
    }
    (right, left)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub propagator: ReducedPropagator,
    /// Iterations actually performed.
    pub iterations: usize,
    /// Largest change between the last two iterates over all grid nodes.
    pub last_change: f64,
}

/// Picard iteration of the Duhamel equation
/// `Υ_r = E(0,r) + ∫_0^r Υ_s ∘ Φ_s ∘ E(s,r) ds`, where
/// `E(s,r)(B) = S(s,r;f)* B S(s,r;g) · exp(−∫_s^r ⟨f,g⟩)` is the propagator
/// of the drift part alone. The iteration runs on a grid of about
/// `quad_steps` intervals whose panels end at the breakpoints of `f` and `g`,
/// starting from `E(0, ·)`, and stops after `depth` sweeps or once successive
/// iterates differ by less than `1e−10`.
pub fn picard_oracle(
    model: &GermModel,
    f: &PiecewiseCoherent,
    g: &PiecewiseCoherent,
    t: f64,
    depth: usize,
    quad_steps: usize,
) -> Result<PicardResult> {
    check_time(t)?;
    check_multiplicity(model, f)?;
    check_multiplicity(model, g)?;
    if quad_steps < 8 {
        return Err(Error::InvalidArgument("quad_steps must be at least 8".into()));
    }
    let d = model.dim();
    let panels = picard_panels(f, g, t, quad_steps);
    let mut nodes = Vec::new();
    for p in &panels {
        nodes.extend((0..p.count).map(|i| p.start_time + i as f64 * p.h));
    }
    nodes.push(t);
    let n = nodes.len() - 1;

    // one-step cocycles, then all pairs by products
    let step_f: Vec<ComplexMatrix> =
        (0..n).map(|j| cocycle_between(model, f, nodes[j], nodes[j + 1])).collect::<Result<_>>()?;
    let step_g: Vec<ComplexMatrix> =
        (0..n).map(|j| cocycle_between(model, g, nodes[j], nodes[j + 1])).collect::<Result<_>>()?;
    // e[i][j] = E(r_i, r_j) for i ≤ j
    let mut e: Vec<Vec<ComplexMatrix>> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut row = Vec::with_capacity(n + 1 - i);
        let (mut sf, mut sg) = (identity(d), identity(d));
        row.push(identity(d * d));
        for j in i..n {
            sf = &step_f[j] * sf;
            sg = &step_g[j] * sg;
            let ov = overlap_integral(f, g, nodes[i], nodes[j + 1])?;
            row.push(sandwich_matrix(&sf.adjoint(), &sg) * (-ov).exp());
        }
        e.push(row);
    }
    let e_at = |i: usize, j: usize| &e[i][j - i];

    // Φ at nodes: right-continuous inside, left limit when the node closes the integral
    let blocks = phi_blocks(model);
    let eps = 1e-12 * t.max(1.0);
    let phi_right: Vec<ComplexMatrix> =
        nodes.iter().map(|&s| weighted_phi(model, &blocks, &f.amplitude_at(s), &g.amplitude_at(s))).collect();
    let phi_left: Vec<ComplexMatrix> = nodes
        .iter()
        .map(|&s| {
            let u = (s - eps).max(0.0);
            weighted_phi(model, &blocks, &f.amplitude_at(u), &g.amplitude_at(u))
        })
        .collect();

    let mut current: Vec<ComplexMatrix> = (0..=n).map(|j| e_at(0, j).clone()).collect();
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    while iterations < depth {
        let mut next = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut acc = e_at(0, j).clone();
            let (w_right, w_left) = panel_weights(&panels, j);
            for i in 0..=j {
                if w_right[i] != 0.0 {
                    acc += &current[i] * &phi_right[i] * e_at(i, j) * r(w_right[i]);
                }
                if w_left[i] != 0.0 {
                    acc += &current[i] * &phi_left[i] * e_at(i, j) * r(w_left[i]);
                }
            }
            next.push(acc);
        }
        last_change = next.iter().zip(&current).map(|(a, b)| matrix::frobenius(&(a - b))).fold(0.0, f64::max);
        current = next;
        iterations += 1;
        if last_change < 1e-10 {
            break;
        }
    }
    let map = SuperOperator::new(d, current.pop().expect("n + 1 nodes"))?;
    Ok(PicardResult {
        propagator: ReducedPropagator { t, map, f: f.clone().with_prefactor(ONE), g: g.clone().with_prefactor(ONE) },
        iterations,
        last_change,
    })
}

/// `ϑ_t(g) = Υ_t^{0,k}(I) · exp(∫_0^t g^-_+)`, where `k = g^•_+` is the amplitude
/// that `W_t(g)` creates from the vacuum.
pub fn gen_function(model: &GermModel, g: &StepFunction, t: f64, steps: usize) -> Result<ComplexMatrix> {
    let k = PiecewiseCoherent::from_creation(g);
    let vac = PiecewiseCoherent::vacuum(g.multiplicity());
    let ups = coherent_propagator(model, &vac, &k, t, steps)?;
    Ok(ups.apply(&identity(model.dim())) * g.time_integral(t).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub t: f64,
    pub min_eig: f64,
    pub pass: bool,
    /// Kernel entries as `[re, im]` pairs, row-major.
    pub entries: Vec<Vec<[f64; 2]>>,
    /// Later time `s` of the monotonicity check, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Smallest eigenvalue of `M(t) − M(s)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotone_min_eig: Option<f64>,
}

/// Kernel `M_kl = ϑ_t(g_k ⋆ g_l)`, contracted with `η_k`, `η_l` when vectors are
/// given and kept as a `d × d` block otherwise (the block form is PSD iff every
/// contraction is).
pub fn generating_kernel(
    model: &GermModel,
    gs: &[StepFunction],
    etas: Option<&[ComplexMatrix]>,
    t: f64,
    steps: usize,
) -> Result<ComplexMatrix> {
    let d = model.dim();
    let n = gs.len();
    if let Some(etas) = etas {
        if etas.len() != n {
            return Err(Error::DimensionMismatch(format!("{n} step functions but {} vectors", etas.len())));
        }
        for eta in etas {
            matrix::ensure_shape(eta, d, 1, "kernel vector")?;
        }
    }
    let block = if etas.is_some() { 1 } else { d };
    let mut kernel = zeros(n * block, n * block);
    for k in 0..n {
        for l in 0..n {
            let theta = gen_function(model, &ito::step_star(&gs[k], &gs[l])?, t, steps)?;
            match etas {
                Some(etas) => kernel[(k, l)] = (etas[k].adjoint() * &theta * &etas[l])[(0, 0)],
                None => kernel.view_mut((k * d, l * d), (d, d)).copy_from(&theta),
            }
        }
    }
    Ok(kernel)
}

fn entries(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    matrix::literal::to_rows(m)
}

/// Positive definiteness of the generating-function kernel at `t`, and of
/// `M(t) − M(s)` for a later `s` when requested. All `g_k` must vanish after `t`.
pub fn kernel_psd_check(
    model: &GermModel,
    gs: &[StepFunction],
    etas: Option<&[ComplexMatrix]>,
    t: f64,
    s: Option<f64>,
    steps: usize,
    tol: f64,
) -> Result<KernelReport> {
    if gs.is_empty() || gs.len() > 8 {
        return Err(Error::InvalidArgument(format!("kernel needs 1..=8 step functions, got {}", gs.len())));
    }
    if let Some(g) = gs.iter().find(|g| g.horizon() > t) {
        return Err(Error::InvalidArgument(format!("step function horizon {} exceeds t = {t}", g.horizon())));
    }
    let kernel = generating_kernel(model, gs, etas, t, steps)?;
    let min_eig = min_eig_loose(&kernel)?;
    let mut pass = min_eig >= -tol;
    let mut monotone_min_eig = None;
    if let Some(s) = s {
        if s < t {
            return Err(Error::InvalidArgument(format!("monotonicity time s = {s} precedes t = {t}")));
        }
        let later_steps = ((steps as f64) * s / t.max(f64::MIN_POSITIVE)).ceil() as usize;
        let later = generating_kernel(model, gs, etas, s, later_steps.max(1))?;
        let diff_min = min_eig_loose(&(&kernel - later))?;
        pass &= diff_min >= -tol;
        monotone_min_eig = Some(diff_min);
    }
    Ok(KernelReport { t, min_eig, pass, entries: entries(&kernel), s, monotone_min_eig })
}

/// Hermiticity is checked at `1e−8` relative; kernels carry integration error.
fn min_eig_loose(m: &ComplexMatrix) -> Result<f64> {
    matrix::min_eig_hermitian(m, 1e-8)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpReport {
    pub t: f64,
    pub min_eig: f64,
    pub pass: bool,
    pub entries: Vec<Vec<[f64; 2]>>,
}

/// Block kernel `N_kl = Υ_t^{f_k,f_l}(B_k* B_l) · ⟨f_k^⊗, f_l^⊗⟩`, which is the
/// coherent matrix of `φ_t` and must be PSD.
pub fn cp_coherent_check(
    model: &GermModel,
    t: f64,
    family: &[(PiecewiseCoherent, ComplexMatrix)],
    steps: usize,
    tol: f64,
) -> Result<CpReport> {
    if family.is_empty() || family.len() > 6 {
        return Err(Error::InvalidArgument(format!("family must have 1..=6 members, got {}", family.len())));
    }
    let d = model.dim();
    let n = family.len();
    let mut kernel = zeros(n * d, n * d);
    for (k, (fk, bk)) in family.iter().enumerate() {
        matrix::ensure_shape(bk, d, d, "family operator")?;
        for (l, (fl, bl)) in family.iter().enumerate() {
            let ups = coherent_propagator(model, fk, fl, t, steps)?;
            let block = ups.apply(&(bk.adjoint() * bl))
                * coherent_inner(&fk.clone().with_prefactor(ONE), &fl.clone().with_prefactor(ONE))?;
            kernel.view_mut((k * d, l * d), (d, d)).copy_from(&block);
        }
    }
    let min_eig = min_eig_loose(&kernel)?;
    Ok(CpReport { t, min_eig, pass: min_eig >= -tol, entries: entries(&kernel) })
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eig(m: &ComplexMatrix) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(0.0)
}
