use qsflow_core::flows::{
    coherent_propagator, default_steps, evolve_semigroup, evolve_semigroup_expm, kernel_psd_check, min_eig,
    picard_oracle,
};
use qsflow_core::generators::{
    block_choi, build_germ, ccp_check, classify, gauge_fix, kraus_extract, lindblad_superop, matrix_unit_basis,
    phi_distance, transpose_weight, unitarity_check, with_transpose, DissipativityClass, GermModel,
    UnitaryCoefficients,
};
use qsflow_core::ito::{self, check_axioms, hp_product, ItoQuadruple};
use qsflow_core::matrix::{
    self, identity, literal, trace_distance, zeros, ComplexMatrix, ComplexVector, SuperOperator, ONE,
};
use qsflow_core::trajectories::{density_ensemble, martingale_stats, simulate, TrajectoryConfig, UnravelingKind};
use qsflow_core::weyl::{random_polarized_suite, weyl_polarized_discrepancy, PiecewiseCoherent};
use qsflow_core::Result as CoreResult;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;
use crate::output::{Outcome, Table};
use crate::{Args, CliError, CommandKind};

pub fn dispatch(kind: CommandKind, text: &str, args: &Args) -> Result<Outcome, CliError> {
    match kind {
        CommandKind::VerifyAlgebra => verify_algebra(parse(text)?, args),
        CommandKind::WeylCheck => weyl_check(parse(text)?, args),
        CommandKind::Germ => germ(parse(text)?, args),
        CommandKind::Dilate => dilate(parse(text)?, args),
        CommandKind::Simulate => simulate_cmd(parse(text)?, args),
        CommandKind::Semigroup => semigroup(parse(text)?, args),
        CommandKind::Genfun => genfun(parse(text)?, args),
        CommandKind::Crosscheck => crosscheck(parse(text)?, args),
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config is not valid JSON: {e}")))?;
    match value.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => return Err(CliError::Usage(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(CliError::Usage("config needs \"schema_version\": 1".into())),
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
}

fn echo<T: Serialize>(config: &T) -> Value {
    serde_json::to_value(config).expect("configs serialize")
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn no_seed(args: &Args, what: &str) -> Result<(), CliError> {
    match args.seed {
        Some(_) => Err(usage(format!("{what} takes no seed"))),
        None => Ok(()),
    }
}

fn rows(m: &ComplexMatrix) -> Value {
    json!(literal::to_rows(m))
}

fn column(v: &ComplexVector) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn basis_vector(d: usize, i: usize) -> ComplexMatrix {
    let mut e = zeros(d, 1);
    e[(i, 0)] = ONE;
    e
}

fn positive(x: f64, what: &str) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(usage(format!("{what} must be positive, got {x}")))
    }
}

/// Product table with the time entry dropped, for the fault-injection hook.
fn faulty_product(a: &ItoQuadruple, b: &ItoQuadruple) -> CoreResult<ItoQuadruple> {
    let p = hp_product(a, b)?;
    ItoQuadruple::new(p.exchange().clone(), p.creation().clone(), p.annihilation().clone(), p.time() * 0.0)
}

fn verify_algebra(mut cfg: VerifyAlgebraConfig, args: &Args) -> Result<Outcome, CliError> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if cfg.samples == 0 || cfg.multiplicity == 0 || cfg.weyl_multiplicity == 0 {
        return Err(usage("samples, multiplicity and weyl_multiplicity must be positive"));
    }
    positive(cfg.weyl_t_max, "weyl_t_max")?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let product: ito::ProductFn = if cfg.inject_fault { faulty_product } else { hp_product };
    let axioms = check_axioms(&mut rng, cfg.samples, cfg.multiplicity, product)?;
    let weyl = random_polarized_suite(&mut rng, cfg.weyl_samples, cfg.weyl_multiplicity, cfg.weyl_t_max)?;
    let axioms_pass = axioms.max_residual() <= cfg.axiom_tolerance && axioms.table_identities_exact;
    let weyl_pass = weyl <= cfg.weyl_tolerance;
    Ok(Outcome {
        pass: axioms_pass && weyl_pass,
        seed: Some(cfg.seed),
        report: json!({
            "axioms": axioms,
            "max_axiom_residual": axioms.max_residual(),
            "axioms_pass": axioms_pass,
            "weyl_max_discrepancy": weyl,
            "weyl_pass": weyl_pass,
        }),
        config: echo(&cfg),
        table: None,
    })
}

fn weyl_check(mut cfg: WeylCheckConfig, args: &Args) -> Result<Outcome, CliError> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut cases = Vec::with_capacity(cfg.cases.len());
    for case in &cfg.cases {
        let d = weyl_polarized_discrepancy(case.t, &case.a, &case.b, &case.f, &case.h)?;
        cases.push(json!({ "t": case.t, "discrepancy": d, "pass": d <= cfg.tolerance }));
    }
    let random = if cfg.samples > 0 {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        Some(random_polarized_suite(&mut rng, cfg.samples, cfg.multiplicity, cfg.t_max)?)
    } else {
        None
    };
    let pass = cases.iter().all(|c| c["pass"] == json!(true)) && random.is_none_or(|w| w <= cfg.tolerance);
    Ok(Outcome {
        pass,
        seed: Some(cfg.seed),
        report: json!({ "cases": cases, "random_max_discrepancy": random }),
        config: echo(&cfg),
        table: None,
    })
}

fn eta_or_default(eta: &Option<ComplexVector>, d: usize) -> ComplexMatrix {
    eta.as_ref().map(column).unwrap_or_else(|| basis_vector(d, 0))
}

/// `max_k |⟨η|L^k η⟩|` and the change of `λ^-_+` under gauge fixing.
fn gauge_report(model: &GermModel, eta: &ComplexMatrix) -> Result<(GermModel, Value), CliError> {
    let fixed = gauge_fix(model, eta)?;
    let expectation = fixed.kraus().iter().map(|t| (eta.adjoint() * &t.plus * eta)[(0, 0)].norm()).fold(0.0, f64::max);
    let change = lindblad_superop(model).distance(&lindblad_superop(&fixed));
    let report = json!({
        "model": fixed,
        "max_vacuum_expectation": expectation,
        "lambda_change": change,
    });
    Ok((fixed, report))
}

fn germ(cfg: GermConfig, args: &Args) -> Result<Outcome, CliError> {
    no_seed(args, "germ")?;
    let model = &cfg.model;
    let d = model.dim();
    let mut germ = build_germ(model);
    if cfg.perturb == Some(Perturbation::Transpose) {
        germ = with_transpose(&germ, transpose_weight(&germ));
    }
    let ccp = ccp_check(&germ, &matrix_unit_basis(d), cfg.tolerance)?;
    let class = classify(model, cfg.tolerance);
    let eta = eta_or_default(&cfg.eta0, d);
    let (_, gauge) = gauge_report(model, &eta)?;
    let blocks: Vec<Value> = germ.blocks().iter().map(|b| rows(b.matrix())).collect();
    Ok(Outcome {
        pass: ccp.pass,
        seed: None,
        report: json!({
            "germ_blocks": blocks,
            "ccp": ccp,
            "ccp_witness": ccp.witness.as_ref().map(rows),
            "dissipativity": class,
            "gauge_fixed": gauge,
        }),
        config: echo(&cfg),
        table: None,
    })
}

fn dilate(cfg: DilateConfig, args: &Args) -> Result<Outcome, CliError> {
    no_seed(args, "dilate")?;
    let model = &cfg.model;
    let (d, m) = (model.dim(), model.multiplicity());
    let choi = block_choi(model);
    let choi_min = min_eig(&choi);
    let kraus = kraus_extract(&choi, d, m, cfg.rank_tolerance)?;
    let rebuilt = model.with_kraus(kraus.clone())?;
    let round_trip = phi_distance(model, &rebuilt)?;
    let eta = eta_or_default(&cfg.eta0, d);
    let (_, gauge) = gauge_report(model, &eta)?;
    let gauge_pass = gauge["max_vacuum_expectation"].as_f64().unwrap_or(f64::INFINITY) <= cfg.unitarity_tolerance
        && gauge["lambda_change"].as_f64().unwrap_or(f64::INFINITY) <= cfg.unitarity_tolerance;
    let class = classify(model, cfg.unitarity_tolerance);
    let filtering = class.class == DissipativityClass::Filtering;
    let unitarity = unitarity_check(&UnitaryCoefficients::complete(model), cfg.unitarity_tolerance)?;
    let round_trip_pass = round_trip <= cfg.tolerance;
    Ok(Outcome {
        pass: round_trip_pass && gauge_pass && (!filtering || unitarity.pass),
        seed: None,
        report: json!({
            "choi_min_eig": choi_min,
            "kraus_rank": kraus.len(),
            "kraus": kraus,
            "round_trip_distance": round_trip,
            "round_trip_pass": round_trip_pass,
            "gauge_fixed": gauge,
            "gauge_pass": gauge_pass,
            "dissipativity": class,
            "unitarity": unitarity,
            "unitarity_required": filtering,
        }),
        config: echo(&cfg),
        table: None,
    })
}

fn simulate_cmd(mut cfg: SimulateConfig, args: &Args) -> Result<Outcome, CliError> {
    if let Some(seed) = args.seed {
        cfg.trajectory.seed = seed;
    }
    let traj = &cfg.trajectory;
    let d = traj.dim();
    let stats = match &cfg.rho0 {
        Some(rho0) => {
            if cfg.psi0.is_some() {
                return Err(usage("give either psi0 or rho0, not both"));
            }
            density_ensemble(traj, rho0)?
        }
        None => simulate(traj, &cfg.psi0.as_ref().map(column).unwrap_or_else(|| basis_vector(d, 0)))?,
    };
    let class = classify(&traj.germ_model()?, 1e-10);
    let martingale = (stats.records.len() >= 2).then(|| martingale_stats(&stats, &class)).transpose()?;
    let table = Table { header: stats.csv_header(), rows: stats.csv_rows() };
    Ok(Outcome {
        pass: true,
        seed: Some(traj.seed),
        report: json!({ "stats": stats, "dissipativity": class, "martingale": martingale }),
        config: echo(&cfg),
        table: Some(table),
    })
}

fn theta(model: &GermModel, t: f64, method: SemigroupMethod, steps_per_unit: usize) -> CoreResult<SuperOperator> {
    match method {
        SemigroupMethod::Rk4 => evolve_semigroup(model, t, ((steps_per_unit as f64 * t).ceil() as usize).max(1)),
        SemigroupMethod::Expm => evolve_semigroup_expm(model, t),
    }
}

fn semigroup(cfg: SemigroupConfig, args: &Args) -> Result<Outcome, CliError> {
    no_seed(args, "semigroup")?;
    let model = &cfg.model;
    let d = model.dim();
    if cfg.times.is_empty() || cfg.times.len() > 16 {
        return Err(usage("times must hold 1 to 16 entries"));
    }
    if cfg.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || cfg.times.windows(2).any(|w| w[1] < w[0]) {
        return Err(usage("times must be finite, non-negative and non-decreasing"));
    }
    if cfg.steps_per_unit == 0 {
        return Err(usage("steps_per_unit must be positive"));
    }
    if let Some(rho0) = &cfg.rho0 {
        matrix::ensure_shape(rho0, d, d, "rho0")?;
    }
    let class = classify(model, cfg.tolerance);
    let maps: Vec<SuperOperator> =
        cfg.times.iter().map(|&t| theta(model, t, cfg.method, cfg.steps_per_unit)).collect::<CoreResult<_>>()?;

    let mut per_time = Vec::new();
    let mut table_rows = Vec::new();
    let mut prev_min = f64::INFINITY;
    let mut monotone = true;
    let mut conservative = true;
    for (&t, map) in cfg.times.iter().zip(&maps) {
        let theta_i = map.apply(&identity(d));
        let me = min_eig(&theta_i);
        let cons = matrix::frobenius(&(&theta_i - identity(d)));
        monotone &= me <= prev_min + cfg.tolerance;
        conservative &= cons <= cfg.tolerance;
        prev_min = me;
        let rho = cfg.rho0.as_ref().map(|r0| map.trace_dual().apply(r0));
        let mut row = vec![t.to_string(), me.to_string(), cons.to_string()];
        row.extend((0..d * d).map(|i| theta_i[(i / d, i % d)].re.to_string()));
        row.extend((0..d * d).map(|i| theta_i[(i / d, i % d)].im.to_string()));
        table_rows.push(row);
        per_time.push(json!({
            "t": t,
            "theta_identity": rows(&theta_i),
            "min_eig": me,
            "conservativity_residual": cons,
            "rho": rho.as_ref().map(rows),
        }));
    }

    // Θ_r ∘ Θ_s against Θ_{r+s} for every pair of listed times
    let mut law = Vec::new();
    for (i, &r) in cfg.times.iter().enumerate() {
        for (j, &s) in cfg.times.iter().enumerate().skip(i) {
            let joint = theta(model, r + s, cfg.method, cfg.steps_per_unit)?;
            let residual = maps[i].compose(&maps[j]).distance(&joint);
            law.push(json!({ "r": r, "s": s, "residual": residual }));
        }
    }
    let law_max = law.iter().filter_map(|v| v["residual"].as_f64()).fold(0.0, f64::max);
    let law_pass = law_max <= cfg.tolerance;
    let class_pass = match class.class {
        DissipativityClass::Filtering => conservative,
        DissipativityClass::Contractive | DissipativityClass::Subfiltering => monotone,
        DissipativityClass::None => true,
    };

    let mut header: Vec<String> =
        ["t", "min_eig_theta_identity", "conservativity_residual"].iter().map(|s| s.to_string()).collect();
    for part in ["re", "im"] {
        for i in 0..d {
            for j in 0..d {
                header.push(format!("theta_identity_{part}_{i}{j}"));
            }
        }
    }
    Ok(Outcome {
        pass: law_pass && class_pass,
        seed: None,
        report: json!({
            "dissipativity": class,
            "times": per_time,
            "semigroup_law": law,
            "semigroup_law_max": law_max,
            "semigroup_law_pass": law_pass,
            "monotone": monotone,
            "conservative": conservative,
            "class_check_pass": class_pass,
        }),
        config: echo(&cfg),
        table: Some(Table { header, rows: table_rows }),
    })
}

fn genfun(cfg: GenfunConfig, args: &Args) -> Result<Outcome, CliError> {
    no_seed(args, "genfun")?;
    positive(cfg.t, "t")?;
    if cfg.steps_per_unit == 0 {
        return Err(usage("steps_per_unit must be positive"));
    }
    let etas: Option<Vec<ComplexMatrix>> = cfg.etas.as_ref().map(|es| es.iter().map(column).collect());
    let steps = ((cfg.steps_per_unit as f64 * cfg.t).ceil() as usize).max(1);
    let report = kernel_psd_check(&cfg.model, &cfg.family, etas.as_deref(), cfg.t, cfg.s, steps, cfg.tolerance)?;
    Ok(Outcome {
        pass: report.pass,
        seed: None,
        report: json!({ "kernel": report, "dissipativity": classify(&cfg.model, cfg.tolerance) }),
        config: echo(&cfg),
        table: None,
    })
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    residual: f64,
    tolerance: f64,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl Check {
    fn new(name: &'static str, residual: f64, tolerance: f64) -> Self {
        Check { name, residual, tolerance, pass: residual <= tolerance, note: None }
    }

    fn skipped(name: &'static str, note: &str) -> Self {
        Check { name, residual: 0.0, tolerance: 0.0, pass: true, note: Some(format!("skipped: {note}")) }
    }
}

fn crosscheck(mut cfg: CrosscheckConfig, args: &Args) -> Result<Outcome, CliError> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    positive(cfg.t, "t")?;
    let model = &cfg.model;
    let (d, m, t) = (model.dim(), model.multiplicity(), cfg.t);
    let tol = &cfg.tolerances;
    let steps = default_steps(t);
    let mut checks = Vec::new();

    let rk4 = evolve_semigroup(model, t, steps)?;
    checks.push(Check::new("semigroup_rk4_vs_expm", rk4.distance(&evolve_semigroup_expm(model, t)?), tol.semigroup));

    let vac = PiecewiseCoherent::vacuum(m);
    let prop = coherent_propagator(model, &vac, &vac, t, steps)?;
    checks.push(Check::new("propagator_vacuum_vs_semigroup", prop.map.distance(&rk4), tol.semigroup));

    let picard = picard_oracle(model, &vac, &vac, t, cfg.picard_depth, cfg.quad_steps)?;
    checks.push(Check::new("picard_vacuum_vs_semigroup", picard.propagator.map.distance(&rk4), tol.vacuum_picard));

    if m == 0 {
        checks.push(Check::skipped("picard_coherent_vs_propagator", "model has no noise modes"));
    } else {
        let amp = ComplexVector::from_element(m, ONE * cfg.coherent_amplitude);
        let f = PiecewiseCoherent::constant(amp, t)?;
        let oracle = picard_oracle(model, &f, &f, t, cfg.picard_depth, cfg.quad_steps)?;
        let direct = coherent_propagator(model, &f, &f, t, steps)?;
        checks.push(Check::new(
            "picard_coherent_vs_propagator",
            oracle.propagator.map.distance(&direct.map),
            tol.coherent_picard,
        ));
    }

    let traj_cfg = &cfg.trajectory;
    let traj_report = if model.kraus().len() > 1 {
        checks.push(Check::skipped(
            "trajectory_vs_master_equation",
            "more than one Kraus operator needs a multi-noise unraveling",
        ));
        Value::Null
    } else {
        let l = model.kraus().first().map(|k| k.plus.clone()).unwrap_or_else(|| zeros(d, d));
        let coupling = match traj_cfg.kind {
            UnravelingKind::Diffusive => l,
            UnravelingKind::Jump => &l + identity(d),
        };
        let tc = TrajectoryConfig {
            kind: traj_cfg.kind,
            k: model.k().clone(),
            coupling,
            t_max: t,
            h: traj_cfg.h,
            n_traj: traj_cfg.n_traj,
            seed: cfg.seed,
            record_times: vec![0.5 * t, t],
        };
        let psi0 = traj_cfg.psi0.as_ref().map(column).unwrap_or_else(|| basis_vector(d, d - 1));
        let stats = simulate(&tc, &psi0)?;
        let rho0 = &psi0 * psi0.adjoint();
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst = (0.0, 0.0);
        let mut times = Vec::new();
        for rec in &stats.records {
            let oracle = evolve_semigroup(model, rec.t, default_steps(rec.t))?.trace_dual().apply(&rho0);
            let dist = trace_distance(&rec.rho, &oracle);
            let allowed = (traj_cfg.sigmas * rec.sigma_trace).max(traj_cfg.floor);
            if dist - allowed > worst_excess {
                worst_excess = dist - allowed;
                worst = (dist, allowed);
            }
            times.push(
                json!({ "t": rec.t, "trace_distance": dist, "allowed": allowed, "sigma_trace": rec.sigma_trace }),
            );
        }
        checks.push(Check::new("trajectory_vs_master_equation", worst.0, worst.1));
        json!({ "times": times, "aborted": stats.aborted.len() })
    };

    let pass = checks.iter().all(|c| c.pass);
    Ok(Outcome {
        pass,
        seed: Some(cfg.seed),
        report: json!({ "checks": checks, "trajectory": traj_report, "picard_iterations": picard.iterations }),
        config: echo(&cfg),
        table: None,
    })
}
