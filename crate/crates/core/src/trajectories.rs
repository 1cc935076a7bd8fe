//! Monte Carlo unravelings of the linear filtering equations.
//!
//! Diffusive: `dψ + Kψ dt = Lψ dQ` with `Q` a standard Wiener process,
//! integrated by Euler–Maruyama. Jump: `dψ + Kψ dt = Lψ dP` with
//! `P = N − t` the compensated rate-1 Poisson process and `L = J − I`; between
//! events `ψ' = −(K + L)ψ` is solved exactly and each event applies `J`.
//!
//! Path `i` draws from `ChaCha20Rng::seed_from_u64(seed)` on stream `i`, so a
//! path does not depend on which thread runs it. Paths are accumulated in fixed
//! chunks of [`CHUNK`] and the chunk moments are merged in index order, which
//! makes the statistics bit-identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{DissipativityClass, DissipativityReport, GermModel, KrausTerm};
use crate::matrix::{
    self, expm, identity, literal, r, superop_left, superop_right, superop_sandwich, ComplexMatrix, SuperOperator, C64,
    I, ONE, ZERO,
};

/// Paths per accumulation chunk.
pub const CHUNK: usize = 256;
/// Paths whose state norm exceeds this are aborted.
pub const BLOWUP_NORM: f64 = 1e8;
/// `h‖K‖` above this logs a warning.
pub const STEP_WARN: f64 = 0.1;
/// `h‖K‖` above this is refused.
pub const STEP_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnravelingKind {
    Diffusive,
    Jump,
}

/// Simulation parameters. `coupling` is `L` for the diffusive kind and `J` for
/// the jump kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr", into = "ConfigRepr")]
pub struct TrajectoryConfig {
    pub kind: UnravelingKind,
    pub k: ComplexMatrix,
    pub coupling: ComplexMatrix,
    pub t_max: f64,
    pub h: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub record_times: Vec<f64>,
}

fn default_h() -> f64 {
    1e-3
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigRepr {
    kind: UnravelingKind,
    dim: usize,
    #[serde(rename = "K", with = "literal")]
    k: ComplexMatrix,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none", with = "optional_literal")]
    l: Option<ComplexMatrix>,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none", with = "optional_literal")]
    j: Option<ComplexMatrix>,
    t_max: f64,
    #[serde(default = "default_h")]
    h: f64,
    n_traj: usize,
    seed: u64,
    record_times: Vec<f64>,
}

mod optional_literal {
    use super::{literal, ComplexMatrix};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<ComplexMatrix>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => literal::serialize(m, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ComplexMatrix>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "literal")] ComplexMatrix);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

impl TryFrom<ConfigRepr> for TrajectoryConfig {
    type Error = Error;

    fn try_from(c: ConfigRepr) -> Result<Self> {
        let coupling = match (c.kind, c.l, c.j) {
            (UnravelingKind::Diffusive, Some(l), None) => l,
            (UnravelingKind::Jump, None, Some(j)) => j,
            (UnravelingKind::Diffusive, _, _) => {
                return Err(Error::InvalidArgument("diffusive config needs \"L\" and no \"J\"".into()))
            }
            (UnravelingKind::Jump, _, _) => {
                return Err(Error::InvalidArgument("jump config needs \"J\" and no \"L\"".into()))
            }
        };
        let cfg = TrajectoryConfig {
            kind: c.kind,
            k: c.k,
            coupling,
            t_max: c.t_max,
            h: c.h,
            n_traj: c.n_traj,
            seed: c.seed,
            record_times: c.record_times,
        };
        cfg.validate()?;
        if cfg.dim() != c.dim {
            return Err(Error::DimensionMismatch(format!(
                "declared dim {} but K is {}x{}",
                c.dim,
                cfg.dim(),
                cfg.dim()
            )));
        }
        Ok(cfg)
    }
}

impl From<TrajectoryConfig> for ConfigRepr {
    fn from(c: TrajectoryConfig) -> Self {
        let dim = c.dim();
        let (l, j) = match c.kind {
            UnravelingKind::Diffusive => (Some(c.coupling), None),
            UnravelingKind::Jump => (None, Some(c.coupling)),
        };
        ConfigRepr {
            kind: c.kind,
            dim,
            k: c.k,
            l,
            j,
            t_max: c.t_max,
            h: c.h,
            n_traj: c.n_traj,
            seed: c.seed,
            record_times: c.record_times,
        }
    }
}

impl TrajectoryConfig {
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = matrix::ensure_square(&self.k, "K")?;
        if d == 0 {
            return Err(Error::DimensionMismatch("system dimension must be positive".into()));
        }
        matrix::ensure_shape(&self.coupling, d, d, "coupling")?;
        matrix::ensure_finite(&self.k, "K")?;
        matrix::ensure_finite(&self.coupling, "coupling")?;
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidArgument(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidArgument(format!("h must be positive, got {}", self.h)));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
        }
        if self.record_times.is_empty() {
            return Err(Error::InvalidArgument("record_times is empty".into()));
        }
        if self.record_times.iter().any(|&t| !(0.0..=self.t_max).contains(&t)) {
            return Err(Error::InvalidArgument("record_times must lie in [0, t_max]".into()));
        }
        if self.record_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("record_times must be non-decreasing".into()));
        }
        Ok(())
    }

    /// The `L` of the wave equation: the coupling itself, or `J − I`.
    pub fn l(&self) -> ComplexMatrix {
        match self.kind {
            UnravelingKind::Diffusive => self.coupling.clone(),
            UnravelingKind::Jump => &self.coupling - identity(self.dim()),
        }
    }

    /// Number of Euler steps; the last one is shortened to end at `t_max`.
    pub fn n_steps(&self) -> usize {
        ((self.t_max / self.h - 1e-9).ceil() as usize).max(1)
    }

    fn grid_time(&self, j: usize) -> f64 {
        if j >= self.n_steps() {
            self.t_max
        } else {
            j as f64 * self.h
        }
    }

    /// Grid index nearest to `t`, ties toward the earlier point.
    pub fn snap_index(&self, t: f64) -> usize {
        let n = self.n_steps();
        let lower = ((t / self.h).floor() as usize).min(n);
        if lower == n {
            return n;
        }
        let (a, b) = (self.grid_time(lower), self.grid_time(lower + 1));
        if t - a <= b - t {
            lower
        } else {
            lower + 1
        }
    }

    /// Times at which statistics are reported: snapped for the diffusive
    /// scheme, exact for the event-driven jump scheme.
    pub fn effective_record_times(&self) -> Vec<f64> {
        match self.kind {
            UnravelingKind::Diffusive => {
                self.record_times.iter().map(|&t| self.grid_time(self.snap_index(t))).collect()
            }
            UnravelingKind::Jump => self.record_times.clone(),
        }
    }

    /// Germ model of the averaged dynamics, via [`unified_coefficients`].
    pub fn germ_model(&self) -> Result<GermModel> {
        unified_coefficients(self.kind, &self.k, &self.coupling)?.germ_model()
    }

    fn check_step(&self) -> Result<()> {
        if self.kind == UnravelingKind::Jump {
            return Ok(());
        }
        let product = self.h * matrix::spectral_norm(&self.k);
        if product > STEP_LIMIT {
            return Err(Error::StepTooLarge { product, limit: STEP_LIMIT });
        }
        if product > STEP_WARN {
            log::warn!("h·‖K‖ = {product:.3} exceeds {STEP_WARN}; Euler–Maruyama bias may be visible");
        }
        Ok(())
    }
}

/// Classical noise of one path: Wiener increments or Poisson event gaps.
pub struct NoiseSource {
    rng: ChaCha20Rng,
}

impl NoiseSource {
    pub fn new(seed: u64, path: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        Self { rng }
    }

    /// `ΔQ ~ Normal(0, h)`.
    pub fn increment(&mut self, h: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * h.sqrt()
    }

    /// Waiting time to the next rate-1 event.
    pub fn gap(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }
}

/// Column-major `d × cols` state with dense row-major operators.
struct Stepper {
    d: usize,
    /// `I − hK` for full and last steps.
    drift_full: Vec<C64>,
    drift_last: Vec<C64>,
    h_last: f64,
    l: Vec<C64>,
}

fn row_major(m: &ComplexMatrix) -> Vec<C64> {
    let (rows, cols) = m.shape();
    (0..rows * cols).map(|i| m[(i / cols, i % cols)]).collect()
}

impl Stepper {
    fn new(cfg: &TrajectoryConfig) -> Self {
        let d = cfg.dim();
        let n = cfg.n_steps();
        let h_last = cfg.t_max - (n - 1) as f64 * cfg.h;
        Self {
            d,
            drift_full: row_major(&(identity(d) - &cfg.k * r(cfg.h))),
            drift_last: row_major(&(identity(d) - &cfg.k * r(h_last))),
            h_last,
            l: row_major(&cfg.l()),
        }
    }

    /// `x ← A x + dq · L x`, column by column.
    fn step(&self, x: &mut [C64], buf: &mut [C64], last: bool, dq: f64) {
        let a = if last { &self.drift_last } else { &self.drift_full };
        let d = self.d;
        for (col, out) in x.chunks(d).zip(buf.chunks_mut(d)) {
            for i in 0..d {
                let mut acc = ZERO;
                let mut noise = ZERO;
                for j in 0..d {
                    acc += a[i * d + j] * col[j];
                    noise += self.l[i * d + j] * col[j];
                }
                out[i] = acc + noise * dq;
            }
        }
        x.copy_from_slice(buf);
    }
}

fn state_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn blown_up(x: &[C64]) -> bool {
    let n = state_norm(x);
    !n.is_finite() || n > BLOWUP_NORM
}

fn to_matrix(x: &[C64], d: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(d, x.len() / d, x)
}

/// One simulated path: states at the record times and jump counts up to each.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub index: usize,
    pub states: Vec<ComplexMatrix>,
    pub jumps: Vec<u64>,
    pub aborted: bool,
}

fn run_diffusive(cfg: &TrajectoryConfig, stepper: &Stepper, index: usize, x0: &ComplexMatrix) -> PathRecord {
    let d = cfg.dim();
    let n = cfg.n_steps();
    let targets: Vec<usize> = cfg.record_times.iter().map(|&t| cfg.snap_index(t)).collect();
    let mut noise = NoiseSource::new(cfg.seed, index);
    let mut x: Vec<C64> = x0.as_slice().to_vec();
    let mut buf = x.clone();
    let mut states = Vec::with_capacity(targets.len());
    let mut next = 0;
    let mut aborted = false;
    for j in 0..=n {
        while next < targets.len() && targets[next] == j {
            states.push(to_matrix(&x, d));
            next += 1;
        }
        if j == n || next == targets.len() {
            break;
        }
        let last = j + 1 == n;
        let dq = noise.increment(if last { stepper.h_last } else { cfg.h });
        stepper.step(&mut x, &mut buf, last, dq);
        if blown_up(&x) {
            aborted = true;
            break;
        }
    }
    PathRecord { index, states, jumps: vec![0; cfg.record_times.len()], aborted }
}

fn run_jump(cfg: &TrajectoryConfig, index: usize, x0: &ComplexMatrix) -> Result<PathRecord> {
    let drift = -(&cfg.k + cfg.l());
    let mut noise = NoiseSource::new(cfg.seed, index);
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut event = noise.gap();
    let mut count = 0u64;
    let mut states = Vec::with_capacity(cfg.record_times.len());
    let mut jumps = Vec::with_capacity(cfg.record_times.len());
    for &target in &cfg.record_times {
        while event <= target {
            x = expm(&(&drift * r(event - t)))? * x;
            x = &cfg.coupling * x;
            count += 1;
            t = event;
            event += noise.gap();
            if blown_up(x.as_slice()) {
                return Ok(PathRecord { index, states, jumps, aborted: true });
            }
        }
        x = expm(&(&drift * r(target - t)))? * x;
        t = target;
        if blown_up(x.as_slice()) {
            return Ok(PathRecord { index, states, jumps, aborted: true });
        }
        states.push(x.clone());
        jumps.push(count);
    }
    Ok(PathRecord { index, states, jumps, aborted: false })
}

fn run_path(cfg: &TrajectoryConfig, stepper: Option<&Stepper>, index: usize, x0: &ComplexMatrix) -> Result<PathRecord> {
    match (cfg.kind, stepper) {
        (UnravelingKind::Diffusive, Some(s)) => Ok(run_diffusive(cfg, s, index, x0)),
        (UnravelingKind::Diffusive, None) => Ok(run_diffusive(cfg, &Stepper::new(cfg), index, x0)),
        (UnravelingKind::Jump, _) => run_jump(cfg, index, x0),
    }
}

/// Running mean and centered second moment of a feature vector.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self { n: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((mean, m2), &xi) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = xi - *mean;
            *mean += delta / n;
            *m2 += delta * (xi - *mean);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }

    fn stderr(&self, i: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2[i] / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Per-path features: `[tr ρ, survived, Re ρ (row-major), Im ρ (row-major)]`.
fn features(rho: &ComplexMatrix, jumps: u64) -> Vec<f64> {
    let d = rho.nrows();
    let mut f = Vec::with_capacity(2 + 2 * d * d);
    f.push(rho.trace().re);
    f.push(if jumps == 0 { 1.0 } else { 0.0 });
    f.extend((0..d * d).map(|i| rho[(i / d, i % d)].re));
    f.extend((0..d * d).map(|i| rho[(i / d, i % d)].im));
    f
}

/// Statistics at one record time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordStats {
    pub t: f64,
    pub requested_t: f64,
    pub mean_norm2: f64,
    pub stderr_norm2: f64,
    /// Ensemble mean of `ψψ*` (or of `Vρ₀V*`), not normalized.
    #[serde(with = "literal")]
    pub rho: ComplexMatrix,
    /// `½√d · sqrt(Σ_ij se(ρ_ij)²)`, a Monte Carlo scale for trace distances.
    pub sigma_trace: f64,
    /// Fraction of paths without jumps up to `t` (jump kind only).
    pub survival_frac: Option<f64>,
    pub survival_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub kind: UnravelingKind,
    pub dim: usize,
    pub n_traj: usize,
    /// Paths that entered the statistics.
    pub n_used: usize,
    /// Indices of paths aborted by the blow-up guard; excluded from the moments.
    pub aborted: Vec<usize>,
    pub records: Vec<RecordStats>,
}

impl EnsembleStats {
    pub fn csv_header(&self) -> Vec<String> {
        let d = self.dim;
        let mut h: Vec<String> =
            ["t", "mean_norm2", "stderr_norm2", "survival_frac"].iter().map(|s| s.to_string()).collect();
        for part in ["re", "im"] {
            for i in 0..d {
                for j in 0..d {
                    h.push(format!("rho_{part}_{i}{j}"));
                }
            }
        }
        h
    }

    /// One row per record time. Floats use the shortest round-trip decimal form.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let d = self.dim;
        self.records
            .iter()
            .map(|rec| {
                let mut row = vec![
                    rec.t.to_string(),
                    rec.mean_norm2.to_string(),
                    rec.stderr_norm2.to_string(),
                    rec.survival_frac.map(|s| s.to_string()).unwrap_or_default(),
                ];
                row.extend((0..d * d).map(|i| rec.rho[(i / d, i % d)].re.to_string()));
                row.extend((0..d * d).map(|i| rec.rho[(i / d, i % d)].im.to_string()));
                row
            })
            .collect()
    }
}

fn accumulate(
    cfg: &TrajectoryConfig,
    x0: &ComplexMatrix,
    observe: &(dyn Fn(&ComplexMatrix) -> ComplexMatrix + Sync),
) -> Result<EnsembleStats> {
    cfg.validate()?;
    cfg.check_step()?;
    let d = cfg.dim();
    let n_rec = cfg.record_times.len();
    let width = 2 + 2 * d * d;
    let stepper = (cfg.kind == UnravelingKind::Diffusive).then(|| Stepper::new(cfg));
    let n_chunks = cfg.n_traj.div_ceil(CHUNK);
    let chunks: Vec<Result<(Vec<Moments>, Vec<usize>)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut moments = vec![Moments::new(width); n_rec];
            let mut aborted = Vec::new();
            for index in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_traj) {
                let path = run_path(cfg, stepper.as_ref(), index, x0)?;
                if path.aborted {
                    aborted.push(index);
                    continue;
                }
                for ((m, x), &jumps) in moments.iter_mut().zip(&path.states).zip(&path.jumps) {
                    m.push(&features(&observe(x), jumps));
                }
            }
            Ok((moments, aborted))
        })
        .collect();

    let mut total = vec![Moments::new(width); n_rec];
    let mut aborted = Vec::new();
    for chunk in chunks {
        let (moments, ab) = chunk?;
        for (t, m) in total.iter_mut().zip(&moments) {
            t.merge(m);
        }
        aborted.extend(ab);
    }
    if !aborted.is_empty() {
        log::warn!("{} of {} paths exceeded the blow-up guard and were aborted", aborted.len(), cfg.n_traj);
    }

    let times = cfg.effective_record_times();
    let records = total
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let rho =
                ComplexMatrix::from_fn(d, d, |i, j| C64::new(m.mean[2 + i * d + j], m.mean[2 + d * d + i * d + j]));
            let se2: f64 = (2..width).map(|i| m.stderr(i).powi(2)).sum();
            let jump = cfg.kind == UnravelingKind::Jump;
            RecordStats {
                t: times[k],
                requested_t: cfg.record_times[k],
                mean_norm2: m.mean[0],
                stderr_norm2: m.stderr(0),
                rho,
                sigma_trace: 0.5 * (d as f64).sqrt() * se2.sqrt(),
                survival_frac: jump.then(|| m.mean[1]),
                survival_stderr: jump.then(|| m.stderr(1)),
            }
        })
        .collect();
    Ok(EnsembleStats {
        kind: cfg.kind,
        dim: d,
        n_traj: cfg.n_traj,
        n_used: cfg.n_traj - aborted.len(),
        aborted,
        records,
    })
}

fn check_psi0(cfg: &TrajectoryConfig, psi0: &ComplexMatrix) -> Result<()> {
    matrix::ensure_shape(psi0, cfg.dim(), 1, "initial state")?;
    matrix::ensure_finite(psi0, "initial state")?;
    let norm = matrix::frobenius(psi0);
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("initial state must be normalized, ‖ψ₀‖ = {norm}")));
    }
    Ok(())
}

fn outer(x: &ComplexMatrix) -> ComplexMatrix {
    x * x.adjoint()
}

/// Ensemble statistics of the diffusive wave equation.
pub fn simulate_diffusive(cfg: &TrajectoryConfig, psi0: &ComplexMatrix) -> Result<EnsembleStats> {
    if cfg.kind != UnravelingKind::Diffusive {
        return Err(Error::InvalidArgument("simulate_diffusive needs a diffusive config".into()));
    }
    check_psi0(cfg, psi0)?;
    accumulate(cfg, psi0, &outer)
}

/// Ensemble statistics of the jump wave equation.
pub fn simulate_jump(cfg: &TrajectoryConfig, psi0: &ComplexMatrix) -> Result<EnsembleStats> {
    if cfg.kind != UnravelingKind::Jump {
        return Err(Error::InvalidArgument("simulate_jump needs a jump config".into()));
    }
    check_psi0(cfg, psi0)?;
    accumulate(cfg, psi0, &outer)
}

/// Dispatches on the config kind.
pub fn simulate(cfg: &TrajectoryConfig, psi0: &ComplexMatrix) -> Result<EnsembleStats> {
    match cfg.kind {
        UnravelingKind::Diffusive => simulate_diffusive(cfg, psi0),
        UnravelingKind::Jump => simulate_jump(cfg, psi0),
    }
}

fn check_rho0(cfg: &TrajectoryConfig, rho0: &ComplexMatrix) -> Result<()> {
    let d = cfg.dim();
    matrix::ensure_shape(rho0, d, d, "initial density")?;
    let min = matrix::min_eig_hermitian(rho0, 1e-12)?;
    if min < -1e-12 {
        return Err(Error::NotPsd { min_eig: min });
    }
    let tr = rho0.trace();
    if (tr - ONE).norm() > 1e-10 {
        return Err(Error::InvalidArgument(format!("initial density must have unit trace, got {tr}")));
    }
    Ok(())
}

/// Ensemble statistics of `ρ_t = V_t ρ₀ V_t*`, propagating `V_t` on each path.
pub fn density_ensemble(cfg: &TrajectoryConfig, rho0: &ComplexMatrix) -> Result<EnsembleStats> {
    check_rho0(cfg, rho0)?;
    let rho0 = rho0.clone();
    accumulate(cfg, &identity(cfg.dim()), &move |v: &ComplexMatrix| v * &rho0 * v.adjoint())
}

/// Stochastic density realizations `ρ_t(ω)` for paths `0..n_traj`, driven by the
/// same noise as the wave simulators. Aborted paths carry the states reached
/// before the guard fired.
pub fn evolve_density(cfg: &TrajectoryConfig, rho0: &ComplexMatrix) -> Result<Vec<PathRecord>> {
    cfg.validate()?;
    cfg.check_step()?;
    check_rho0(cfg, rho0)?;
    let stepper = (cfg.kind == UnravelingKind::Diffusive).then(|| Stepper::new(cfg));
    let v0 = identity(cfg.dim());
    (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut path = run_path(cfg, stepper.as_ref(), i, &v0)?;
            path.states = path.states.iter().map(|v| v * rho0 * v.adjoint()).collect();
            Ok(path)
        })
        .collect()
}

/// Wave-function paths `0..n_traj`; the states are `ψ_t(ω)` as `d × 1` matrices.
pub fn wave_paths(cfg: &TrajectoryConfig, psi0: &ComplexMatrix) -> Result<Vec<PathRecord>> {
    cfg.validate()?;
    cfg.check_step()?;
    check_psi0(cfg, psi0)?;
    let stepper = (cfg.kind == UnravelingKind::Diffusive).then(|| Stepper::new(cfg));
    (0..cfg.n_traj).into_par_iter().map(|i| run_path(cfg, stepper.as_ref(), i, psi0)).collect()
}

/// Quantum stochastic coefficients of the unified equation with a single noise.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedCoefficients {
    pub k: ComplexMatrix,
    pub k_minus: ComplexMatrix,
    pub l_plus: ComplexMatrix,
    pub j: ComplexMatrix,
}

impl UnifiedCoefficients {
    /// `m = 1` germ model: `K`, `K_1 = K⁻`, one Kraus term `{L₊, [J]}`.
    pub fn germ_model(&self) -> Result<GermModel> {
        GermModel::new(
            self.k.clone(),
            vec![self.k_minus.clone()],
            vec![KrausTerm { plus: self.l_plus.clone(), noise: vec![self.j.clone()] }],
        )
    }
}

/// Diffusive `(K, L)` maps to `J = I`, `L₊ = L`, `K⁻ = −L`; jump `(K, J)` maps to
/// `L₊ = K⁻ = i(J − I)`.
pub fn unified_coefficients(
    kind: UnravelingKind,
    k: &ComplexMatrix,
    coupling: &ComplexMatrix,
) -> Result<UnifiedCoefficients> {
    let d = matrix::ensure_square(k, "K")?;
    matrix::ensure_shape(coupling, d, d, "coupling")?;
    Ok(match kind {
        UnravelingKind::Diffusive => {
            UnifiedCoefficients { k: k.clone(), k_minus: -coupling, l_plus: coupling.clone(), j: identity(d) }
        }
        UnravelingKind::Jump => {
            let l = (coupling - identity(d)) * I;
            UnifiedCoefficients { k: k.clone(), k_minus: l.clone(), l_plus: l, j: coupling.clone() }
        }
    })
}

/// Mean-dynamics generator `B ↦ L*BL − K*B − BK` built directly from the wave
/// equation, with `L = J − I` for jumps.
pub fn direct_lindblad(kind: UnravelingKind, k: &ComplexMatrix, coupling: &ComplexMatrix) -> Result<SuperOperator> {
    let d = matrix::ensure_square(k, "K")?;
    let l = match kind {
        UnravelingKind::Diffusive => coupling.clone(),
        UnravelingKind::Jump => coupling - identity(d),
    };
    let sandwich = superop_sandwich(&l.adjoint(), &l)?;
    let left = superop_left(&k.adjoint(), d)?;
    let right = superop_right(k, d)?;
    Ok(sandwich.add(&left.scale(-ONE)).add(&right.scale(-ONE)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeCheck {
    pub t: f64,
    pub mean_norm2: f64,
    /// Allowed deviation at this time.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub class: DissipativityClass,
    /// `martingale` for filtering models, `supermartingale` otherwise.
    pub test: String,
    pub checks: Vec<TimeCheck>,
    pub aborted: usize,
    pub pass: bool,
}

/// Filtering: `|E‖ψ_t‖² − 1| ≤ 4 se` at every record time. Otherwise
/// `E‖ψ‖²` may not increase by more than four combined standard errors between
/// consecutive record times. Aborted paths fail the report.
pub fn martingale_stats(stats: &EnsembleStats, class: &DissipativityReport) -> Result<MartingaleReport> {
    let recs = &stats.records;
    if recs.len() < 2 {
        return Err(Error::InsufficientData(format!("{} record time(s), need at least 2", recs.len())));
    }
    let (test, checks): (&str, Vec<TimeCheck>) = if class.class == DissipativityClass::Filtering {
        let checks = recs
            .iter()
            .map(|rec| {
                let bound = 4.0 * rec.stderr_norm2;
                TimeCheck { t: rec.t, mean_norm2: rec.mean_norm2, bound, pass: (rec.mean_norm2 - 1.0).abs() <= bound }
            })
            .collect();
        ("martingale", checks)
    } else {
        let checks = recs
            .windows(2)
            .map(|w| {
                let bound = 4.0 * (w[0].stderr_norm2.powi(2) + w[1].stderr_norm2.powi(2)).sqrt();
                TimeCheck {
                    t: w[1].t,
                    mean_norm2: w[1].mean_norm2,
                    bound,
                    pass: w[1].mean_norm2 <= w[0].mean_norm2 + bound,
                }
            })
            .collect();
        ("supermartingale", checks)
    };
    let pass = stats.aborted.is_empty() && checks.iter().all(|c| c.pass);
    Ok(MartingaleReport { class: class.class, test: test.to_string(), checks, aborted: stats.aborted.len(), pass })
}
