use std::fmt::Write as _;
use std::path::Path;

use anyhow::anyhow;
use num_traits::{Signed, ToPrimitive};
use serde::Deserialize;

use domino_core::analysis::{balance_residuals, compare as compare_dists, fit_tail_exponent};
use domino_core::exact::{solve_general_with, solve_inverse_power, solve_inverse_power_adaptive, GeneralOptions};
use domino_core::report::{write_coeffs_csv, write_distribution_csv, write_histogram_csv};
use domino_core::series::{
    c_initial, c_initial_exact, limit_form_sequence, motzkin_asymptotic, motzkin_numbers, rational_from_decimal,
    run_recurrence, run_recurrence_mode, CoeffSequence, Mode,
};
use domino_core::sim::{measure, run_ensemble, SimConfig, RNG_ALGORITHM};
use domino_core::{derived_quantities, Error, InversePowerCase, ModelParams, MuRule};

use crate::output::*;
use crate::{CmdResult, Context, Failure, Format, ModeArg, ModelArgs, SimulateArgs};

const THREADS_ENV: &str = "DOMINO_LAB_THREADS";

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Bad parameters are usage errors; everything else is a runtime failure.
fn core_err(e: Error) -> Failure {
    match e {
        Error::Domain(msg) => Failure::Usage(msg),
        other => Failure::Runtime(other.into()),
    }
}

fn format_or(ctx: &Context, default: Format, allowed: &[Format]) -> CmdResult<Format> {
    let f = ctx.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(usage(format!("--format {f:?} is not available for this command").to_lowercase()))
    }
}

pub fn motzkin(ctx: &Context, m_max: usize, theta: Option<&str>, mode: Option<ModeArg>) -> CmdResult<String> {
    let format = format_or(ctx, Format::Json, &[Format::Json, Format::Csv])?;
    let mode = mode.unwrap_or(if theta.is_some() { ModeArg::Float64 } else { ModeArg::Exact });
    let theta_text = theta.unwrap_or("0").trim().to_string();
    let seq = match mode {
        ModeArg::Float64 => {
            let t: f64 = theta_text.parse().map_err(|_| usage(format!("invalid --theta '{theta_text}'")))?;
            if !t.is_finite() || t < 0.0 {
                return Err(usage("--theta must be a finite number >= 0"));
            }
            let c0 = c_initial(t);
            run_recurrence_mode(c0, c0, m_max, Mode::Float64).map_err(core_err)?
        }
        ModeArg::Exact => {
            let t = rational_from_decimal(&theta_text)
                .ok_or_else(|| usage(format!("exact mode needs a decimal --theta, got '{theta_text}'")))?;
            if t.is_negative() {
                return Err(usage("--theta must be >= 0"));
            }
            let c0 = c_initial_exact(&t);
            CoeffSequence::ExactRational(run_recurrence(c0.clone(), c0, m_max).map_err(core_err)?)
        }
    };
    ctx.note(format!("computed {} coefficients", seq.len()));
    match format {
        Format::Csv => csv_string(|w| write_coeffs_csv(w, &seq)),
        _ => to_json(&MotzkinOutput {
            schema: SCHEMA,
            command: "motzkin".into(),
            config: MotzkinConfig {
                m_max,
                theta: theta_text,
                mode: match mode {
                    ModeArg::Float64 => "float64".into(),
                    ModeArg::Exact => "exact".into(),
                },
            },
            c: match &seq {
                CoeffSequence::Float64(v) => Coefficients::Float64(v.clone()),
                CoeffSequence::ExactRational(_) => Coefficients::Exact(seq.to_strings()),
            },
        }),
    }
}

pub fn solve(ctx: &Context, theta: f64, lattice: usize, i_max: Option<usize>) -> CmdResult<String> {
    let format = format_or(ctx, Format::Json, &[Format::Json, Format::Csv])?;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(usage(format!(
            "--theta must be a positive finite number (got {theta}); theta = 0 is the Motzkin limit, try `domino-lab motzkin`"
        )));
    }
    let case = InversePowerCase::new(theta, lattice).map_err(core_err)?;
    let dist = match i_max {
        Some(0) => return Err(usage("--i-max must be at least 1")),
        Some(m) => solve_inverse_power(&case, m),
        None => solve_inverse_power_adaptive(&case),
    }
    .map_err(core_err)?;
    // the balance laws only involve mu_i / nu = theta / i, so nu = 1 is general
    let params = ModelParams::inverse_power(lattice, 1.0, theta, 0).map_err(core_err)?;
    let balance = balance_residuals(&dist, &params);
    ctx.note(format!("i_max {}, balance residuals r_n {:e}, r_rho {:e}", dist.i_max(), balance.r_n, balance.r_rho));
    match format {
        Format::Csv => csv_string(|w| write_distribution_csv(w, &dist)),
        _ => to_json(&SolveOutput {
            schema: SCHEMA,
            command: "solve".into(),
            config: SolveConfig { theta, lattice_size: lattice, i_max },
            i_max: dist.i_max(),
            derived: derived_quantities(&case),
            balance,
            distribution: dist,
        }),
    }
}

fn resolve_rule(model: &ModelArgs, nu: f64) -> CmdResult<MuRule> {
    match (model.delta, model.mu, model.theta) {
        (Some(delta), None, None) => Ok(MuRule::InversePower { delta }),
        (None, Some(mu), None) => Ok(MuRule::Constant { mu }),
        (None, None, Some(theta)) => Ok(MuRule::InversePower { delta: theta * nu }),
        (None, None, None) => Err(usage("one of --delta, --mu or --theta is required")),
        _ => Err(usage("--delta, --mu and --theta are mutually exclusive")),
    }
}

fn resolve_params(model: &ModelArgs, seed: u64) -> CmdResult<ModelParams> {
    let lattice = model.lattice.ok_or_else(|| usage("--n is required"))?;
    let nu = model.nu.ok_or_else(|| usage("--nu is required"))?;
    let rule = resolve_rule(model, nu)?;
    ModelParams::new(lattice, nu, rule, seed).map_err(core_err)
}

fn warn_if_clamped(params: &ModelParams) {
    if params.is_clamped() {
        eprintln!("warning: delta > 1, so mu_i = delta / i is clamped to 1 for small clusters");
    }
}

pub fn solve_general(ctx: &Context, model: &ModelArgs, i_max: usize, tol: f64, max_iter: usize) -> CmdResult<String> {
    let format = format_or(ctx, Format::Json, &[Format::Json, Format::Csv])?;
    let params = resolve_params(model, 0)?;
    warn_if_clamped(&params);
    let sol = solve_general_with(&params, i_max, &GeneralOptions::new(tol, max_iter)).map_err(core_err)?;
    ctx.note(format!("converged in {} iterations, working length {}", sol.iterations, sol.working_len));
    match format {
        Format::Csv => csv_string(|w| write_distribution_csv(w, &sol.distribution)),
        _ => to_json(&SolveGeneralOutput {
            schema: SCHEMA,
            command: "solve-general".into(),
            config: SolveGeneralConfig { params, i_max, tol, max_iter },
            iterations: sol.iterations,
            residual: sol.residual,
            working_len: sol.working_len,
            balance: sol.balance,
            distribution: sol.distribution,
        }),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFileConfig {
    #[serde(rename = "N")]
    lattice: Option<usize>,
    nu: Option<f64>,
    delta: Option<f64>,
    mu: Option<f64>,
    theta: Option<f64>,
    seed: Option<u64>,
    steps: Option<u64>,
    burn_in: Option<u64>,
    sample_every: Option<u64>,
    batches: Option<usize>,
    replicas: Option<u64>,
}

fn thread_cap() -> CmdResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> CmdResult<String> {
    let format = format_or(ctx, Format::Json, &[Format::Json, Format::Csv])?;
    let file: SimulateFileConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SimulateFileConfig::default(),
    };
    let flags_set_rule = args.model.delta.is_some() || args.model.mu.is_some() || args.model.theta.is_some();
    let model = ModelArgs {
        lattice: args.model.lattice.or(file.lattice),
        nu: args.model.nu.or(file.nu),
        delta: if flags_set_rule { args.model.delta } else { file.delta },
        mu: if flags_set_rule { args.model.mu } else { file.mu },
        theta: if flags_set_rule { args.model.theta } else { file.theta },
    };
    let params = resolve_params(&model, args.seed.or(file.seed).unwrap_or(0))?;
    warn_if_clamped(&params);

    let steps = args.steps.or(file.steps).ok_or_else(|| usage("--steps is required"))?;
    let defaults = SimConfig::with_defaults(&params, 0);
    let mut config = SimConfig::new(
        steps,
        args.burn_in.or(file.burn_in).unwrap_or(defaults.burn_in),
        args.sample_every.or(file.sample_every).unwrap_or(defaults.sample_every),
    );
    if let Some(b) = args.batches.or(file.batches) {
        config.batches = b;
    }
    let replicas = args.replicas.or(file.replicas).unwrap_or(1);
    if config.samples() < config.batches as u64 {
        return Err(usage(format!(
            "{} samples per replica cannot fill {} batches; increase --steps or lower --sample-every",
            config.samples(),
            config.batches
        )));
    }

    ctx.note(format!("running {replicas} replica(s) of {} steps", config.steps));
    let stats = run_ensemble(&params, &config, replicas, thread_cap()?).map_err(core_err)?;
    let empirical = measure(&stats).map_err(core_err)?;
    ctx.note(format!("density {:.6} +- {:.6}", empirical.rho_hat, empirical.rho_stderr));
    match format {
        Format::Csv => csv_string(|w| write_histogram_csv(w, &empirical)),
        _ => to_json(&SimulateOutput {
            schema: SCHEMA,
            command: "simulate".into(),
            config: SimulateConfig { params, sim: config, replicas, rng: RNG_ALGORITHM.into() },
            empirical,
            stats,
        }),
    }
}

fn check_schema(schema: u32, path: &Path) -> CmdResult<()> {
    if schema == SCHEMA {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("{}: unsupported schema {schema}, expected {SCHEMA}", path.display())))
    }
}

pub fn compare(ctx: &Context, theory: &Path, simulation: &Path) -> CmdResult<String> {
    let format = format_or(ctx, Format::Text, &[Format::Text, Format::Json, Format::Csv])?;
    let t: TheoryFile = read_json(theory)?;
    check_schema(t.schema, theory)?;
    let s: SimulationFile = read_json(simulation)?;
    check_schema(s.schema, simulation)?;
    let report = compare_dists(&t.distribution, &s.empirical).map_err(|e| Failure::Runtime(e.into()))?;
    match format {
        Format::Text => Ok(report.to_string()),
        Format::Csv => {
            let mut out = String::from("i,theory,empirical,stderr,z_score,included\n");
            for r in &report.per_i {
                let z = r.z_score.map(|z| format!("{z:?}")).unwrap_or_default();
                writeln!(out, "{},{:?},{:?},{:?},{z},{}", r.i, r.theory, r.empirical, r.stderr, r.included).unwrap();
            }
            Ok(out)
        }
        Format::Json => to_json(&serde_json::json!({
            "schema": SCHEMA,
            "command": "compare",
            "config": { "theory": theory, "simulation": simulation },
            "report": report,
            "chi_square_per_dof": report.chi_square_per_dof(),
        })),
    }
}

pub fn asym(ctx: &Context, i_from: usize, i_to: usize) -> CmdResult<String> {
    let format = format_or(ctx, Format::Json, &[Format::Json, Format::Csv])?;
    if i_from < 1 || i_to <= i_from + 1 {
        return Err(usage("need 1 <= --i-from and --i-from + 1 < --i-to"));
    }
    let counts = limit_form_sequence(i_to + 1, 1.0);
    let fit = fit_tail_exponent(&counts, i_from..=i_to).map_err(|e| Failure::Runtime(e.into()))?;
    let m = motzkin_numbers(i_to).pop().expect("nonempty").to_f64().unwrap_or(f64::INFINITY);
    let motzkin_ratio = motzkin_asymptotic(i_to) / m;
    ctx.note(format!("exponent {:.6} +- {:.6}", fit.exponent, fit.half_width));
    match format {
        Format::Csv => Ok(format!(
            "exponent,half_width,points,motzkin_ratio\n{:?},{:?},{},{:?}\n",
            fit.exponent, fit.half_width, fit.points, motzkin_ratio
        )),
        _ => to_json(&AsymOutput {
            schema: SCHEMA,
            command: "asym".into(),
            config: AsymConfig { i_from, i_to },
            fit,
            motzkin_ratio,
        }),
    }
}
