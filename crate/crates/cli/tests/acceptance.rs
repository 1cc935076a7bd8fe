//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use qsflow_core::flows::{
    coherent_propagator, default_steps, evolve_semigroup, evolve_semigroup_expm, kernel_psd_check, min_eig,
    picard_oracle,
};
use qsflow_core::generators::{
    block_choi, build_germ, ccp_check, classify, gauge_fix, kraus_extract, lindblad_superop, matrix_unit_basis,
    phi_distance, random_filtering_model, random_model, unitarity_check, DissipativityClass, GermMatrix, GermModel,
    KrausTerm, UnitaryCoefficients,
};
use qsflow_core::ito::{check_axioms, hp_product, newton, wiener, StepFunction};
use qsflow_core::matrix::{c, identity, r, trace_distance, zeros, ComplexMatrix, SuperOperator, I, ONE};
use qsflow_core::random::{random_matrix, random_unit_vector};
use qsflow_core::trajectories::{simulate, TrajectoryConfig, UnravelingKind};
use qsflow_core::weyl::{random_coherent, random_polarized_suite, PiecewiseCoherent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const AXIOM_TOL: f64 = 1e-13;
const WEYL_TOL: f64 = 1e-10;
const CCP_FLOOR: f64 = 1e-8;
const ROUND_TRIP_TOL: f64 = 1e-10;
const GAUGE_TOL: f64 = 1e-12;
const UNITARITY_TOL: f64 = 1e-12;
const SEMIGROUP_TOL: f64 = 1e-10;
const PROPAGATOR_TOL: f64 = 1e-10;
const PICARD_TOL: f64 = 1e-6;
const MARTINGALE_SIGMAS: f64 = 4.0;
const UNRAVEL_SIGMAS: f64 = 3.0;
const UNRAVEL_FLOOR: f64 = 0.02;
const KERNEL_FLOOR: f64 = 1e-8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn criterion(n: usize, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = check();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed < b);
    let pass = v.pass && in_time;
    let budget_text = budget.map(|b| format!(" / budget {:.0}s", b.as_secs_f64())).unwrap_or_default();
    println!(
        "{} {n:>2} {name}: {} [{:.2}s{budget_text}]",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn ito_axioms() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let res = check_axioms(&mut rng, 1000, 3, hp_product).unwrap();
    let worst = [res.associativity, res.anti_multiplicativity, res.extend_homomorphism].into_iter().fold(0.0, f64::max);
    verdict(
        worst <= AXIOM_TOL && res.table_identities_exact,
        format!(
            "1000 samples, max residual {worst:.2e} <= {AXIOM_TOL:.0e}, table identities exact = {}",
            res.table_identities_exact
        ),
    )
}

fn weyl_law() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let worst = random_polarized_suite(&mut rng, 200, 2, 2.0).unwrap();
    verdict(worst <= WEYL_TOL, format!("200 draws, max polarized discrepancy {worst:.2e} <= {WEYL_TOL:.0e}"))
}

fn ccp_structure() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let mut worst = f64::INFINITY;
    let mut all = true;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let m = rng.random_range(0..=2);
        let p = rng.random_range(0..=3);
        let model = random_model(&mut rng, d, m, p, 1.0);
        let rep = ccp_check(&build_germ(&model), &matrix_unit_basis(d), CCP_FLOOR).unwrap();
        all &= rep.pass;
        worst = worst.min(rep.min_eig);
    }
    // the transpose map is positive but not CP; its Choi matrix has eigenvalue −1
    let transpose = GermMatrix::from_blocks(2, 0, vec![SuperOperator::from_fn(2, |b| b.transpose())]).unwrap();
    let rep = ccp_check(&transpose, &matrix_unit_basis(2), CCP_FLOOR).unwrap();
    let caught = !rep.pass && rep.witness.is_some() && rep.min_eig < -0.5;
    verdict(
        all && caught,
        format!(
            "100 random germs min eig {worst:.2e} >= -{CCP_FLOOR:.0e}; transpose counterexample min eig {:.3} with witness = {}",
            rep.min_eig,
            rep.witness.is_some()
        ),
    )
}

fn dilation_round_trip() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let (mut round, mut expect, mut change) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let d = rng.random_range(1..=3);
        let m = rng.random_range(0..=2);
        let p = rng.random_range(0..=3);
        let model = random_model(&mut rng, d, m, p, 1.0);
        let kraus = kraus_extract(&block_choi(&model), d, m, 1e-12).unwrap();
        round = round.max(phi_distance(&model, &model.with_kraus(kraus).unwrap()).unwrap());
        let eta = random_unit_vector(&mut rng, d);
        let fixed = gauge_fix(&model, &eta).unwrap();
        for t in fixed.kraus() {
            expect = expect.max((eta.adjoint() * &t.plus * &eta)[(0, 0)].norm());
        }
        change = change.max(lindblad_superop(&model).distance(&lindblad_superop(&fixed)));
    }
    verdict(
        round <= ROUND_TRIP_TOL && expect <= GAUGE_TOL && change <= GAUGE_TOL,
        format!(
            "50 models: round trip {round:.2e} <= {ROUND_TRIP_TOL:.0e}, |<eta|L'eta>| {expect:.2e} and lambda change {change:.2e} <= {GAUGE_TOL:.0e}"
        ),
    )
}

fn unitarity() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d = rng.random_range(1..=3);
        let m = rng.random_range(0..=2);
        let p = rng.random_range(0..=3);
        let model = random_filtering_model(&mut rng, d, m, p, 1.0);
        let rep = unitarity_check(&UnitaryCoefficients::complete(&model), UNITARITY_TOL).unwrap();
        worst = rep.residuals.iter().copied().fold(worst, f64::max);
    }
    // L = 0, K = 0, isometric J_•; then K += 0.1 must break the first condition by 0.2
    let mut j = zeros(3, 2);
    j[(0, 0)] = ONE;
    j[(2, 1)] = I;
    let base = UnitaryCoefficients {
        dim: 1,
        multiplicity: 2,
        dilation: 3,
        k: zeros(1, 1),
        k_bullet: zeros(1, 2),
        k_circ: zeros(1, 3),
        l_plus: zeros(3, 1),
        j_circ: identity(3) - &j * j.adjoint(),
        j_bullet: j,
    };
    let clean = unitarity_check(&base, UNITARITY_TOL).unwrap();
    let mut perturbed = base;
    perturbed.k[(0, 0)] += r(0.1);
    let rep = unitarity_check(&perturbed, UNITARITY_TOL).unwrap();
    let detected = clean.pass
        && !rep.pass
        && (rep.residuals[0] - 0.2).abs() < 1e-15
        && rep.residuals[1..].iter().all(|&x| x == 0.0);
    verdict(
        worst <= UNITARITY_TOL && detected,
        format!(
            "50 completed filtering models max residual {worst:.2e} <= {UNITARITY_TOL:.0e}; K+0.1 perturbation residual {:.3} on condition 1 only",
            rep.residuals[0]
        ),
    )
}

/// Filtering model plus extra damping `κ·I` in `K`.
fn damped(model: &GermModel, kappa: f64) -> GermModel {
    model.with_k(model.k() + identity(model.dim()) * r(kappa)).unwrap()
}

fn semigroup() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(106);
    let (mut law, mut cons) = (0.0f64, 0.0f64);
    let mut monotone = true;
    let times = [0.2, 0.5, 0.7, 1.2];
    for i in 0..12 {
        let d = rng.random_range(1..=3);
        let m = rng.random_range(0..=2);
        let p = rng.random_range(1..=2);
        let filtering = random_filtering_model(&mut rng, d, m, p, 0.6);
        let model = if i % 2 == 0 { filtering } else { damped(&filtering, rng.random_range(0.05..0.5)) };
        let class = classify(&model, 1e-10).class;
        let theta = |t: f64| evolve_semigroup(&model, t, default_steps(t)).unwrap();
        for (a, &r_) in times.iter().enumerate() {
            for &s in &times[a..] {
                law = law.max(theta(r_).compose(&theta(s)).distance(&evolve_semigroup_expm(&model, r_ + s).unwrap()));
            }
        }
        let mut prev = f64::INFINITY;
        for &t in &times {
            let th = theta(t).apply(&identity(d));
            match class {
                DissipativityClass::Filtering => cons = cons.max((&th - identity(d)).norm()),
                _ => {
                    let me = min_eig(&th);
                    monotone &= me <= prev + 1e-12;
                    prev = me;
                }
            }
        }
    }
    verdict(
        law <= SEMIGROUP_TOL && cons <= SEMIGROUP_TOL && monotone,
        format!(
            "12 models: semigroup law {law:.2e}, conservativity {cons:.2e} <= {SEMIGROUP_TOL:.0e}; subfiltering min eig nonincreasing = {monotone}"
        ),
    )
}

/// Random model rescaled until every germ block has norm at most 1.
fn bounded_model(rng: &mut ChaCha20Rng) -> GermModel {
    loop {
        let d = rng.random_range(1..=2);
        let m = rng.random_range(1..=2);
        let p = rng.random_range(0..=2);
        let model = random_model(rng, d, m, p, 0.4);
        if build_germ(&model).blocks().iter().all(|b| b.norm() <= 1.0) {
            return model;
        }
    }
}

fn oracle_triangle() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(107);
    let (mut vac, mut picard) = (0.0f64, 0.0f64);
    for i in 0..8 {
        let model = bounded_model(&mut rng);
        let m = model.multiplicity();
        let t = [0.3, 0.5][i % 2];
        let steps = default_steps(t);
        let zero = PiecewiseCoherent::vacuum(m);
        let semi = evolve_semigroup(&model, t, steps).unwrap();
        vac = vac.max(coherent_propagator(&model, &zero, &zero, t, steps).unwrap().map.distance(&semi));
        let (f, g) = if i < 2 {
            let half = qsflow_core::matrix::ComplexVector::from_element(m, r(0.5));
            (PiecewiseCoherent::constant(half.clone(), t).unwrap(), PiecewiseCoherent::constant(half, t).unwrap())
        } else {
            (random_coherent(&mut rng, m), random_coherent(&mut rng, m))
        };
        let direct = coherent_propagator(&model, &f, &g, t, steps).unwrap();
        let oracle = picard_oracle(&model, &f, &g, t, 12, 256).unwrap();
        picard = picard.max(oracle.propagator.map.distance(&direct.map));
    }
    verdict(
        vac <= PROPAGATOR_TOL && picard <= PICARD_TOL,
        format!("8 models: propagator(0,0) vs semigroup {vac:.2e} <= {PROPAGATOR_TOL:.0e}; Picard vs propagator {picard:.2e} <= {PICARD_TOL:.0e}"),
    )
}

fn scalar(x: f64) -> ComplexMatrix {
    ComplexMatrix::from_element(1, 1, r(x))
}

fn martingale() -> Verdict {
    let base = |kind, coupling| TrajectoryConfig {
        kind,
        k: scalar(0.5),
        coupling,
        t_max: 1.0,
        h: 1e-3,
        n_traj: 10_000,
        seed: 108,
        record_times: vec![1.0],
    };
    let psi0 = scalar(1.0);
    let diff = simulate(&base(UnravelingKind::Diffusive, scalar(1.0)), &psi0).unwrap();
    let jump = simulate(&base(UnravelingKind::Jump, scalar(0.0)), &psi0).unwrap();
    let (d, j) = (&diff.records[0], &jump.records[0]);
    let d_z = (d.mean_norm2 - 1.0).abs() / d.stderr_norm2;
    let j_z = (j.mean_norm2 - 1.0).abs() / j.stderr_norm2;
    // survival of an absorbing unit-rate jump is Bernoulli(e^{-1})
    let p = (-1.0f64).exp();
    let surv = j.survival_frac.unwrap();
    let s_z = (surv - p).abs() / (p * (1.0 - p) / 1e4).sqrt();
    verdict(
        d_z <= MARTINGALE_SIGMAS && j_z <= MARTINGALE_SIGMAS && s_z <= MARTINGALE_SIGMAS,
        format!(
            "diffusive E|psi|^2 = {:.4} ({d_z:.2} se), jump E|psi|^2 = {:.4} ({j_z:.2} se), survival {surv:.4} vs e^-1 ({s_z:.2} sigma); limit {MARTINGALE_SIGMAS} sigma",
            d.mean_norm2, j.mean_norm2
        ),
    )
}

fn unraveling() -> Verdict {
    let l = ComplexMatrix::from_row_slice(2, 2, &[r(0.0), ONE, r(0.0), r(0.0)]);
    let k = l.adjoint() * &l * r(0.5);
    let mut psi0 = zeros(2, 1);
    psi0[(1, 0)] = ONE;
    let mut details = Vec::new();
    let mut pass = true;
    for (kind, coupling, seed) in
        [(UnravelingKind::Diffusive, l.clone(), 109), (UnravelingKind::Jump, &l + identity(2), 110)]
    {
        let cfg = TrajectoryConfig {
            kind,
            k: k.clone(),
            coupling,
            t_max: 1.0,
            h: 1e-3,
            n_traj: 10_000,
            seed,
            record_times: vec![0.5, 1.0],
        };
        let stats = simulate(&cfg, &psi0).unwrap();
        for rec in &stats.records {
            // closed-form decay of the excited population
            let e = (-rec.t).exp();
            let exact = ComplexMatrix::from_row_slice(2, 2, &[r(1.0 - e), r(0.0), r(0.0), r(e)]);
            let dist = trace_distance(&rec.rho, &exact);
            let allowed = (UNRAVEL_SIGMAS * rec.sigma_trace).max(UNRAVEL_FLOOR);
            pass &= dist <= allowed;
            details.push(format!("{kind:?} t={} {dist:.4}<={allowed:.4}", rec.t));
        }
    }
    verdict(pass, format!("amplitude damping, n=1e4, h=1e-3: {}", details.join(", ")))
}

/// `K = ½L*L + κI`, `K_1 = −L`, Kraus `{L, [I]}`: the model a diffusive unraveling generates.
fn diffusive_model(l: &ComplexMatrix, kappa: f64) -> GermModel {
    let d = l.nrows();
    let k = l.adjoint() * l * r(0.5) + identity(d) * r(kappa);
    GermModel::new(k, vec![-l.clone()], vec![KrausTerm { plus: l.clone(), noise: vec![identity(d)] }]).unwrap()
}

fn random_family(rng: &mut ChaCha20Rng, t: f64) -> Vec<StepFunction> {
    let n = rng.random_range(1..=4);
    (0..n)
        .map(|_| {
            let mut cuts: Vec<f64> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(0.05..t - 0.05)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut bps = vec![0.0];
            bps.extend(cuts);
            bps.push(t);
            let values = (0..bps.len() - 1)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        wiener(c(rng.random_range(-0.5..0.5), 0.0), r(rng.random_range(-0.5..0.5)))
                    } else {
                        newton(c(0.0, rng.random_range(-0.5..0.5)))
                    }
                })
                .collect();
            StepFunction::new(1, bps, values).unwrap()
        })
        .collect()
}

fn kernels() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(111);
    let (mut worst, mut worst_mono) = (f64::INFINITY, f64::INFINITY);
    let mut runs = 0;
    for i in 0..10 {
        let d = rng.random_range(1..=2);
        let l = random_matrix(&mut rng, d, d, 0.7);
        let kappa = if i % 2 == 0 { 0.0 } else { rng.random_range(0.1..0.5) };
        let model = diffusive_model(&l, kappa);
        let t = 0.6;
        let family = random_family(&mut rng, t);
        let s = (kappa > 0.0).then_some(1.1);
        let rep = kernel_psd_check(&model, &family, None, t, s, default_steps(t), KERNEL_FLOOR).unwrap();
        worst = worst.min(rep.min_eig);
        if let Some(mono) = rep.monotone_min_eig {
            worst_mono = worst_mono.min(mono);
        }
        runs += 1;
    }
    verdict(
        worst >= -KERNEL_FLOOR && worst_mono >= -KERNEL_FLOOR,
        format!("{runs} families on filtering/subfiltering models: kernel min eig {worst:.2e}, monotonicity min eig {worst_mono:.2e} >= -{KERNEL_FLOOR:.0e}"),
    )
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_bin(cmd: &str, config: &Path, extra: &[&str]) -> (Option<i32>, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_qsflow"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .expect("binary runs");
    (out.status.code(), out.stdout)
}

fn reproducibility() -> Verdict {
    let cases = [
        ("verify-algebra", "verify-algebra.json"),
        ("weyl-check", "weyl-check.json"),
        ("simulate", "simulate-diffusive-filtering.json"),
        ("simulate", "simulate-jump-absorbing.json"),
        ("crosscheck", "crosscheck-amplitude-damping.json"),
    ];
    let mut failures = Vec::new();
    for (cmd, file) in cases {
        let path = configs().join(file);
        let (code, first) = run_bin(cmd, &path, &[]);
        let again = run_bin(cmd, &path, &[]).1;
        let one = run_bin(cmd, &path, &["--threads", "1"]).1;
        let four = run_bin(cmd, &path, &["--threads", "4"]).1;
        if code != Some(0) || first.is_empty() || first != again || first != one || first != four {
            failures.push(file);
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} seeded runs bit-identical across two runs and --threads 1/4", cases.len())
        } else {
            format!("differing or failing outputs: {failures:?}")
        },
    )
}

fn main() {
    let results = [
        criterion(1, "Ito algebra axioms", secs(5), ito_axioms),
        criterion(2, "Weyl semigroup law", secs(5), weyl_law),
        criterion(3, "CCP structure", secs(60), ccp_structure),
        criterion(4, "dilation round trip and gauge", None, dilation_round_trip),
        criterion(5, "unitarity conditions", None, unitarity),
        criterion(6, "semigroup and conservativity", None, semigroup),
        criterion(7, "oracle triangle", secs(60), oracle_triangle),
        criterion(8, "martingale property", secs(60), martingale),
        criterion(9, "unraveling consistency", secs(300), unraveling),
        criterion(10, "generating-function kernels", None, kernels),
        criterion(11, "reproducibility", None, reproducibility),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
