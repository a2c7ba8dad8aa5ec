//! Command implementations and the error → exit-code mapping.

use std::fs;

use serde_json::{json, Value};
use thiserror::Error;

use brwtail::brw::{conditional_mn, BrwConfig, BrwError};
use brwtail::estimate::z_score;
use brwtail::exec::splitmix64;
use brwtail::laws::{
    solve_and_tilt, solve_gamma, tilt, LawError, StepKind, TiltedStepLaw,
};
use brwtail::model::{parse_model, Model, ModelError};
use brwtail::tail::{
    iterate_u_killed_lattice, iterate_u_lattice, kappa_lattice, kappa_nonlattice,
    killed_prefactor_estimate, mc_tail_curve, solve_u_killed_lattice, solve_u_lattice, TailError,
};
use brwtail::walk::{
    constrained_limit_formula, constrained_renewal_sum, killed_renewal_sum, ladder_stats,
    overshoot_laplace, overshoot_limit_formula, renewal_u, sample_global_min, GridFunction,
    LadderStats, WalkError,
};
use brwtail::Workers;

use crate::output::{fmt, Emitter};
use crate::{Cli, Command, PhaseRoute, RenewalWhich, TailMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read model file {0:?}: {1}")]
    ModelRead(String, std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Brw(#[from] BrwError),
    #[error(transparent)]
    Tail(#[from] TailError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("every phase row exceeded the rare-event budget")]
    AllRowsFailed,
}

fn law_code(e: &LawError) -> u8 {
    match e {
        LawError::NoTiltExists => 3,
        _ => 2,
    }
}

impl CliError {
    /// 0 success, 2 model error, 3 no tilt, 4 mode mismatch, 5 theory
    /// violation, 6 rare-event budget, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ModelRead(..) => 2,
            CliError::Model(ModelError::Law(e)) => law_code(e),
            CliError::Model(_) => 2,
            CliError::Law(e) => law_code(e),
            CliError::Tail(TailError::NotLattice) => 4,
            CliError::Tail(TailError::TheoryViolation(_)) => 5,
            CliError::Tail(TailError::Law(e)) => law_code(e),
            CliError::Brw(BrwError::RareEventBudgetExceeded { .. }) => 6,
            CliError::Brw(BrwError::Law(e)) => law_code(e),
            CliError::AllRowsFailed => 6,
            _ => 1,
        }
    }
}

fn row_seed(master: u64, row: u64) -> u64 {
    splitmix64(master ^ splitmix64(0x9d39_247e ^ row))
}

fn model_echo(model: &Model) -> Value {
    let offspring: serde_json::Map<String, Value> = model
        .offspring
        .probs()
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p > 0.0)
        .map(|(k, &p)| (k.to_string(), json!(p)))
        .collect();
    let step = match model.step.kind() {
        StepKind::FiniteSupportReal(atoms) => json!({
            "kind": "atoms",
            "atoms": atoms.iter().map(|&(x, p)| json!([x, p])).collect::<Vec<_>>(),
        }),
        StepKind::Gaussian { mu, sigma } => json!({"kind": "gaussian", "mu": mu, "sigma": sigma}),
    };
    json!({"offspring": offspring, "step": step, "span": model.step.span()})
}

fn tilted_echo(tilted: &TiltedStepLaw) -> Value {
    match tilted.tilted().kind() {
        StepKind::FiniteSupportReal(atoms) => json!({
            "kind": "atoms",
            "atoms": atoms.iter().map(|&(x, p)| json!([x, p])).collect::<Vec<_>>(),
        }),
        StepKind::Gaussian { mu, sigma } => json!({"kind": "gaussian", "mu": mu, "sigma": sigma}),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    model: Model,
    workers: Workers,
    params: brwtail::walk::SimParams,
}

impl Ctx<'_> {
    fn config(&self) -> BrwConfig {
        let mut cfg = BrwConfig::new(self.model.offspring.clone(), self.model.step.clone());
        cfg.population_cap = self.cli.population_cap;
        cfg
    }

    fn tilted(&self) -> Result<TiltedStepLaw, CliError> {
        Ok(solve_and_tilt(&self.model.step, self.model.offspring.mean())?)
    }

    fn emitter(&self, command: &str, args: Value) -> Result<Emitter, CliError> {
        // The worker count never affects results, so it is not part of the
        // resolved spec: outputs stay byte-identical across --workers.
        let spec = json!({
            "command": command,
            "model_file": self.cli.model,
            "model": model_echo(&self.model),
            "seed": self.cli.seed,
            "tolerances": {
                "tol": self.cli.tol,
                "population_cap": self.cli.population_cap,
                "eps_trunc": self.cli.eps_trunc,
                "step_budget": self.cli.step_budget,
            },
            "args": args,
        });
        Emitter::new(self.cli.out.as_deref(), self.cli.no_timestamp, self.cli.gnuplot, spec)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let text = fs::read_to_string(&cli.model).map_err(|e| CliError::ModelRead(cli.model.clone(), e))?;
    let model = parse_model(&text)?;
    let ctx = Ctx { cli, model, workers: cli.workers(), params: cli.sim_params() };
    match &cli.command {
        Command::Gamma => cmd_gamma(&ctx),
        Command::Tail { mode, i_max, x_grid, n } => cmd_tail(&ctx, *mode, *i_max, x_grid, *n),
        Command::Kappa { killed, n, i_max, z_max, grid_points, curve_n } => {
            cmd_kappa(&ctx, *killed, *n, *i_max, *z_max, *grid_points, *curve_n)
        }
        Command::Phase { c_list, n_list, samples, killed, route } => {
            cmd_phase(&ctx, c_list, n_list, *samples, *killed, *route)
        }
        Command::RenewalCheck { which, x_list, theta, y, f_lo, f_hi, pairs, n } => {
            cmd_renewal_check(&ctx, *which, x_list, *theta, *y, *f_lo, *f_hi, *pairs, *n)
        }
        Command::ManyToOne { n_gen_list, f, n } => cmd_many_to_one(&ctx, n_gen_list, f, *n),
        Command::Dplus { n_gen_list, n } => cmd_dplus(&ctx, n_gen_list, *n),
    }
}

fn cmd_gamma(ctx: &Ctx) -> Result<(), CliError> {
    let m = ctx.model.offspring.mean();
    let gamma = solve_gamma(&ctx.model.step, m)?;
    let tilted = tilt(&ctx.model.step, m, gamma)?;
    let emitter = ctx.emitter("gamma", json!({}))?;
    emitter.json(
        "gamma",
        json!({
            "gamma": gamma,
            "drift": tilted.drift(),
            "critical_speed": tilted.drift(),
            "tilted": tilted_echo(&tilted),
            "span": ctx.model.step.span(),
        }),
    )
}

fn cmd_tail(ctx: &Ctx, mode: TailMode, i_max: usize, x_grid: &[f64], n: u64) -> Result<(), CliError> {
    match mode {
        TailMode::Exact => {
            let u = solve_u_lattice(&ctx.model.offspring, &ctx.model.step, i_max, ctx.cli.tol)?;
            let gamma = u.gamma();
            let h = u.span();
            let emitter = ctx.emitter("tail", json!({"mode": "exact", "i_max": i_max}))?;
            let rows: Vec<Vec<String>> = (0..=i_max)
                .map(|i| {
                    let x = i as f64 * h;
                    let v = u.value_at(i as i64);
                    vec![fmt(x), fmt(v), fmt(u.sandwich(i)), fmt((gamma * x).exp() * v)]
                })
                .collect();
            emitter.csv("tail", &["x", "u", "stderr", "e_gamma_x_u"], &rows)?;
            if let Some(dir) = &ctx.cli.out {
                let mut buf = Vec::new();
                u.write_csv(&mut buf)?;
                fs::write(std::path::Path::new(dir).join("tail_function.csv"), buf)?;
            }
            Ok(())
        }
        TailMode::Mc => {
            if x_grid.is_empty() {
                return Err(CliError::BadArgs("mc mode needs --x-grid".into()));
            }
            let mut zs: Vec<f64> = x_grid.to_vec();
            zs.sort_by(f64::total_cmp);
            zs.dedup();
            let gamma = solve_gamma(&ctx.model.step, ctx.model.offspring.mean())?;
            let curve = mc_tail_curve(&ctx.config(), &zs, n, ctx.cli.seed, ctx.workers)?;
            let emitter = ctx.emitter("tail", json!({"mode": "mc", "x_grid": zs, "n": n}))?;
            let rows: Vec<Vec<String>> = curve
                .zs
                .iter()
                .zip(&curve.estimates)
                .map(|(&x, e)| {
                    vec![fmt(x), fmt(e.value), fmt(e.stderr), fmt((gamma * x).exp() * e.value)]
                })
                .collect();
            emitter.csv("tail", &["x", "u", "stderr", "e_gamma_x_u"], &rows)
        }
    }
}

fn cmd_kappa(
    ctx: &Ctx,
    killed: Option<f64>,
    n: u64,
    i_max: usize,
    z_max: f64,
    grid_points: usize,
    curve_n: u64,
) -> Result<(), CliError> {
    let tilted = ctx.tilted()?;
    let gamma = tilted.gamma();
    let ladder = ladder_stats(&tilted, &[gamma], n, row_seed(ctx.cli.seed, 1), ctx.workers, &ctx.params)?;
    let mins = sample_global_min(&tilted, n, row_seed(ctx.cli.seed, 2), ctx.workers, &ctx.params)?;

    let (report, agreement) = if ctx.model.step.is_lattice() {
        let u = solve_u_lattice(&ctx.model.offspring, &ctx.model.step, i_max, ctx.cli.tol)?;
        let report = kappa_lattice(&ctx.model.offspring, &ctx.model.step, &u, &ladder, &mins)?;
        let i_check = i_max / 2;
        let direct = (gamma * i_check as f64 * u.span()).exp() * u.value_at(i_check as i64);
        let agreement = json!({
            "route": "exact_dp",
            "i": i_check,
            "e_gamma_x_u": direct,
            "residual": (direct - report.kappa).abs(),
        });
        (report, agreement)
    } else {
        if grid_points < 2 {
            return Err(CliError::BadArgs("need at least 2 grid points".into()));
        }
        let zs: Vec<f64> =
            (0..grid_points).map(|k| z_max * k as f64 / (grid_points - 1) as f64).collect();
        let curve = mc_tail_curve(&ctx.config(), &zs, curve_n, row_seed(ctx.cli.seed, 3), ctx.workers)?;
        let report =
            kappa_nonlattice(&ctx.model.offspring, &ctx.model.step, &curve, &ladder, &mins, z_max)?;
        let idx = (grid_points * 3) / 4;
        let est = &curve.estimates[idx];
        let z = curve.zs[idx];
        let direct = (gamma * z).exp() * est.value;
        let agreement = json!({
            "route": "mc_tail",
            "z": z,
            "e_gamma_z_u": direct,
            "stderr_scaled": (gamma * z).exp() * est.stderr,
            "residual": (direct - report.kappa).abs(),
        });
        (report, agreement)
    };

    let mut body = serde_json::to_value(&report)?;
    let obj = body.as_object_mut().expect("report is an object");
    obj.insert("route_agreement".into(), agreement);
    if let Some(y) = killed {
        if y <= 0.0 {
            return Err(CliError::BadArgs("--killed height must be positive".into()));
        }
        let pf = killed_prefactor_estimate(gamma, y, &mins);
        obj.insert(
            "killed_prefactor".into(),
            json!({"y": y, "value": pf.value, "stderr": pf.stderr}),
        );
    }
    let emitter = ctx.emitter(
        "kappa",
        json!({"killed": killed, "n": n, "i_max": i_max, "z_max": z_max,
               "grid_points": grid_points, "curve_n": curve_n}),
    )?;
    emitter.json("kappa", body)
}

fn cmd_phase(
    ctx: &Ctx,
    c_list: &[f64],
    n_list: &[u32],
    samples: u64,
    killed: Option<f64>,
    route: PhaseRoute,
) -> Result<(), CliError> {
    let tilted = ctx.tilted()?;
    let critical = tilted.drift();
    for &c in c_list {
        if (c - critical).abs() < 0.05 * critical {
            eprintln!("warning: c = {c} within 5% of critical speed {critical}");
        }
    }
    let mut config = ctx.config();
    if let Some(y) = killed {
        if y <= 0.0 {
            return Err(CliError::BadArgs("--killed height must be positive".into()));
        }
        config = config.with_start(y);
    }

    let mut rows = Vec::new();
    let mut failed = 0usize;
    let mut cells = 0usize;
    for &c in c_list {
        for &n_gen in n_list {
            cells += 1;
            match route {
                PhaseRoute::Mc => {
                    let seed = row_seed(ctx.cli.seed, cells as u64);
                    match conditional_mn(&config, c, n_gen, samples, seed, ctx.workers, killed.is_some()) {
                        Ok(est) => rows.push(vec![
                            fmt(c),
                            n_gen.to_string(),
                            fmt(est.p_cond.value),
                            fmt(est.p_cond.stderr),
                            est.accepted.to_string(),
                            (est.attempts - est.accepted).to_string(),
                        ]),
                        Err(BrwError::RareEventBudgetExceeded { attempts, accepted }) => {
                            failed += 1;
                            rows.push(vec![
                                fmt(c),
                                n_gen.to_string(),
                                "nan".into(),
                                "nan".into(),
                                accepted.to_string(),
                                (attempts - accepted).to_string(),
                            ]);
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                PhaseRoute::Exact => {
                    let p = exact_conditional(ctx, c, n_gen, killed)?;
                    rows.push(vec![fmt(c), n_gen.to_string(), fmt(p), fmt(0.0), "0".into(), "0".into()]);
                }
            }
        }
    }
    let emitter = ctx.emitter(
        "phase",
        json!({"c_list": c_list, "n_list": n_list, "samples": samples, "killed": killed,
               "route": match route { PhaseRoute::Mc => "mc", PhaseRoute::Exact => "exact" }}),
    )?;
    emitter.csv("phase", &["c", "n", "p_cond", "stderr", "accepted", "rejected"], &rows)?;
    if matches!(route, PhaseRoute::Mc) && failed == cells && cells > 0 {
        return Err(CliError::AllRowsFailed);
    }
    Ok(())
}

/// Exact P(M_n ≥ cn | M ≥ cn) from the fixed-point solver and its
/// finite-horizon iterates (lattice models only).
fn exact_conditional(ctx: &Ctx, c: f64, n_gen: u32, killed: Option<f64>) -> Result<f64, CliError> {
    let h = ctx.model.step.span().ok_or(TailError::NotLattice)?;
    let atoms = ctx.model.step.atoms().ok_or(TailError::NotLattice)?;
    let k_max = atoms.iter().map(|&(x, _)| (x / h).round() as i64).max().unwrap_or(0).max(0);
    let i_thr = ((c * n_gen as f64) / h - 1e-9).ceil() as i64 - 1;
    if i_thr < 0 {
        return Ok(1.0);
    }
    match killed {
        None => {
            // Grid wide enough that the closure never reaches the queried
            // point within n_gen iterations: the iterate there is exact.
            let i_max = (i_thr + (n_gen as i64 + 2) * k_max.max(1)) as usize;
            let iter = iterate_u_lattice(&ctx.model.offspring, &ctx.model.step, i_max, n_gen)?;
            let u = solve_u_lattice(&ctx.model.offspring, &ctx.model.step, i_max.max(120), ctx.cli.tol)?;
            Ok(iter[i_thr as usize] / u.value_at(i_thr))
        }
        Some(y) => {
            let y_index = (y / h).round() as usize;
            if y_index < 1 || (y_index as f64 * h - y).abs() > 1e-9 {
                return Err(CliError::BadArgs("killed start must be a positive lattice point".into()));
            }
            let x_index = i_thr as usize;
            if y_index > x_index {
                return Ok(1.0);
            }
            let iter = iterate_u_killed_lattice(&ctx.model.offspring, &ctx.model.step, x_index, n_gen)?;
            let grid =
                solve_u_killed_lattice(&ctx.model.offspring, &ctx.model.step, y_index, x_index, ctx.cli.tol)?;
            Ok(iter[y_index - 1] / grid.value_at(y_index as i64))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_renewal_check(
    ctx: &Ctx,
    which: RenewalWhich,
    x_list: &[f64],
    theta: f64,
    y: f64,
    f_lo: f64,
    f_hi: f64,
    pairs: usize,
    n: u64,
) -> Result<(), CliError> {
    let tilted = ctx.tilted()?;
    let span = tilted.span();
    match which {
        RenewalWhich::Overshoot => {
            let ladder =
                ladder_stats(&tilted, &[theta], n.max(1000), row_seed(ctx.cli.seed, 1), ctx.workers, &ctx.params)?;
            let (formula, formula_se) = overshoot_formula_with_se(&ladder, theta, span);
            let mut rows = Vec::new();
            for (i, &x) in x_list.iter().enumerate() {
                let est = overshoot_laplace(
                    &tilted,
                    x,
                    theta,
                    n,
                    row_seed(ctx.cli.seed, 100 + i as u64),
                    ctx.workers,
                    &ctx.params,
                )?;
                let z = z_score(est.value, est.stderr, formula, formula_se);
                rows.push(vec![fmt(x), fmt(est.value), fmt(est.stderr), fmt(formula), fmt(z)]);
            }
            let emitter = ctx.emitter(
                "renewal_check",
                json!({"which": "overshoot", "theta": theta, "x_list": x_list, "n": n}),
            )?;
            emitter.csv("renewal_check", &["x", "estimate", "stderr", "formula", "z"], &rows)
        }
        RenewalWhich::Constrained => {
            let f = GridFunction::indicator(f_lo, f_hi)?;
            let mins =
                sample_global_min(&tilted, n.max(1000), row_seed(ctx.cli.seed, 2), ctx.workers, &ctx.params)?;
            let formula = constrained_limit_formula(&f, &mins, tilted.drift(), span);
            let mut rows = Vec::new();
            for (i, &x) in x_list.iter().enumerate() {
                let est = constrained_renewal_sum(
                    &tilted,
                    x,
                    &f,
                    n,
                    row_seed(ctx.cli.seed, 200 + i as u64),
                    ctx.workers,
                    &ctx.params,
                )?;
                let z = est.z_against(&formula);
                rows.push(vec![
                    fmt(x),
                    fmt(est.value),
                    fmt(est.stderr),
                    fmt(formula.value),
                    fmt(formula.stderr),
                    fmt(z),
                ]);
            }
            let emitter = ctx.emitter(
                "renewal_check",
                json!({"which": "constrained", "f_lo": f_lo, "f_hi": f_hi, "x_list": x_list, "n": n}),
            )?;
            emitter.csv(
                "renewal_check",
                &["x", "estimate", "stderr", "formula", "formula_stderr", "z"],
                &rows,
            )
        }
        RenewalWhich::Killed => {
            let gamma = tilted.gamma();
            let ladder =
                ladder_stats(&tilted, &[gamma], n.max(1000), row_seed(ctx.cli.seed, 3), ctx.workers, &ctx.params)?;
            let mins =
                sample_global_min(&tilted, n.max(1000), row_seed(ctx.cli.seed, 4), ctx.workers, &ctx.params)?;
            let (ladder_factor, ladder_factor_se) = overshoot_formula_with_se(&ladder, gamma, span);
            let p = mins.prob_gt_estimate(-y);
            let formula = p.value * ladder_factor;
            let formula_se =
                (p.stderr * ladder_factor).hypot(p.value * ladder_factor_se);
            let mut rows = Vec::new();
            for (i, &x) in x_list.iter().enumerate() {
                if y >= x {
                    return Err(CliError::BadArgs("killed check needs y < every x".into()));
                }
                let est = killed_renewal_sum(
                    &tilted,
                    x,
                    y,
                    gamma,
                    n,
                    row_seed(ctx.cli.seed, 300 + i as u64),
                    ctx.workers,
                    &ctx.params,
                )?;
                let z = z_score(est.value, est.stderr, formula, formula_se);
                rows.push(vec![fmt(x), fmt(est.value), fmt(est.stderr), fmt(formula), fmt(z)]);
            }
            let emitter = ctx.emitter(
                "renewal_check",
                json!({"which": "killed", "y": y, "x_list": x_list, "n": n}),
            )?;
            emitter.csv("renewal_check", &["x", "estimate", "stderr", "formula", "z"], &rows)
        }
        RenewalWhich::U => {
            let u1 = renewal_u(&tilted, 1.0, n, row_seed(ctx.cli.seed, 5), ctx.workers, &ctx.params)?;
            let mut rows = Vec::new();
            for k in 0..pairs {
                let x = 0.5 + 7.5 * (splitmix64(ctx.cli.seed ^ (2 * k as u64 + 1)) as f64 / u64::MAX as f64);
                let yv = 0.5 + 7.5 * (splitmix64(ctx.cli.seed ^ (2 * k as u64 + 2)) as f64 / u64::MAX as f64);
                let ux = renewal_u(&tilted, x, n, row_seed(ctx.cli.seed, 400 + 3 * k as u64), ctx.workers, &ctx.params)?;
                let uy =
                    renewal_u(&tilted, yv, n, row_seed(ctx.cli.seed, 401 + 3 * k as u64), ctx.workers, &ctx.params)?;
                let uxy = renewal_u(
                    &tilted,
                    x + yv,
                    n,
                    row_seed(ctx.cli.seed, 402 + 3 * k as u64),
                    ctx.workers,
                    &ctx.params,
                )?;
                let pooled =
                    (ux.stderr.powi(2) + uy.stderr.powi(2) + uxy.stderr.powi(2)).sqrt();
                let subadd_violation = uxy.value > ux.value + uy.value + 6.0 * pooled;
                let linear_se = (ux.stderr.powi(2) + ((x + 1.0) * u1.stderr).powi(2)).sqrt();
                let linear_violation = ux.value > (x + 1.0) * u1.value + 6.0 * linear_se;
                rows.push(vec![
                    fmt(x),
                    fmt(yv),
                    fmt(ux.value),
                    fmt(uy.value),
                    fmt(uxy.value),
                    fmt(pooled),
                    subadd_violation.to_string(),
                    linear_violation.to_string(),
                ]);
            }
            let emitter = ctx.emitter(
                "renewal_check",
                json!({"which": "u", "pairs": pairs, "n": n}),
            )?;
            emitter.csv(
                "renewal_check",
                &["x", "y", "u_x", "u_y", "u_x_plus_y", "pooled_stderr", "subadd_violation", "linear_violation"],
                &rows,
            )
        }
    }
}

fn overshoot_formula_with_se(ladder: &LadderStats, theta: f64, span: Option<f64>) -> (f64, f64) {
    let laplace = ladder.laplace_at(theta).expect("theta was requested");
    let f = overshoot_limit_formula(ladder.mean_h1.value, laplace.value, theta, span);
    let from_laplace = if laplace.value < 1.0 { f / (1.0 - laplace.value) * laplace.stderr } else { 0.0 };
    let from_mean = f / ladder.mean_h1.value * ladder.mean_h1.stderr;
    (f, from_laplace.hypot(from_mean))
}

fn cmd_many_to_one(ctx: &Ctx, n_gen_list: &[u32], f_kind: &str, n: u64) -> Result<(), CliError> {
    let config = ctx.config();
    let n_max = n_gen_list.iter().copied().max().unwrap_or(0);
    let reach = match ctx.model.step.kind() {
        StepKind::FiniteSupportReal(atoms) => {
            atoms.iter().map(|&(x, _)| x.abs()).fold(0.0f64, f64::max) * (n_max as f64 + 1.0)
        }
        StepKind::Gaussian { mu, sigma } => (mu.abs() + 8.0 * sigma) * (n_max as f64 + 1.0),
    }
    .max(1.0);
    let f = match f_kind {
        "one" => GridFunction::new(-reach, 2.0 * reach, vec![1.0])?,
        "expgamma" => {
            let gamma = solve_gamma(&ctx.model.step, ctx.model.offspring.mean())?;
            let cells = 512usize;
            let dx = 2.0 * reach / cells as f64;
            let cap = (gamma * reach).exp();
            let values = (0..cells)
                .map(|k| ((gamma * (-reach + k as f64 * dx)).exp()).min(cap))
                .collect();
            GridFunction::new(-reach, dx, values)?
        }
        other => return Err(CliError::BadArgs(format!("unknown test function {other:?}"))),
    };
    let mut rows = Vec::new();
    for (i, &n_gen) in n_gen_list.iter().enumerate() {
        let check = brwtail::brw::many_to_one_check(
            &config,
            n_gen,
            &f,
            n,
            row_seed(ctx.cli.seed, i as u64),
            ctx.workers,
        )?;
        rows.push(vec![
            n_gen.to_string(),
            fmt(check.tree.value),
            fmt(check.tree.stderr),
            fmt(check.walk.value),
            fmt(check.walk.stderr),
            fmt(check.z),
        ]);
    }
    let emitter = ctx.emitter(
        "many_to_one",
        json!({"n_gen_list": n_gen_list, "f": f_kind, "n": n}),
    )?;
    emitter.csv(
        "many_to_one",
        &["n_gen", "tree", "tree_stderr", "walk", "walk_stderr", "z"],
        &rows,
    )
}

fn cmd_dplus(ctx: &Ctx, n_gen_list: &[u32], n: u64) -> Result<(), CliError> {
    let config = ctx.config();
    let mut rows = Vec::new();
    for (i, &n_gen) in n_gen_list.iter().enumerate() {
        let (tree, walk) =
            brwtail::brw::dplus_diag(&config, n_gen, n, row_seed(ctx.cli.seed, i as u64), ctx.workers)?;
        let z = tree.z_against(&walk);
        let over_n = if n_gen == 0 { 0.0 } else { walk.value / n_gen as f64 };
        rows.push(vec![
            n_gen.to_string(),
            fmt(tree.value),
            fmt(tree.stderr),
            fmt(walk.value),
            fmt(walk.stderr),
            fmt(z),
            fmt(over_n),
        ]);
    }
    let emitter = ctx.emitter("dplus", json!({"n_gen_list": n_gen_list, "n": n}))?;
    emitter.csv(
        "dplus",
        &["n_gen", "tree", "tree_stderr", "walk", "walk_stderr", "z", "walk_over_n"],
        &rows,
    )
}
