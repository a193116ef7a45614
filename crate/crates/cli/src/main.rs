//! `gaussrd`: bound evaluations, sweeps and the self-check suite from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 infeasible input,
//! 3 verification failure.

mod format;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaussrd_core::analysis::{
    asymptote_convergence, fixed_channel_loss, mdcr_compare, mdcr_loss_factor, wz_md_sweep,
    AsymptoticConfig, FixedChannelConfig, MdcrSplit,
};
use gaussrd_core::channel::certify_achievability;
use gaussrd_core::discrete::{eval_distortions, eval_region_bounds, DiscreteScenario};
use gaussrd_core::regions::{dr_bound, rd_bound};
use gaussrd_core::selfcheck::{run_verify, VerifyConfig, DEFAULT_SEED};
use gaussrd_core::{
    convert_rate, DistortionTuple, Error, FirstDistortion, GaussianSource, RateTuple, RateUnit,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "gaussrd", version, about = "Gaussian multiuser successive refinement bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// JSON file with the command's inputs; flags override its fields.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Rate unit for inputs and outputs.
    #[arg(long, global = true)]
    unit: Option<RateUnit>,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest central distortion d4 for given rates and d1..d3.
    DrBound {
        #[arg(long)]
        var: Option<f64>,
        /// R1,R2,R3,R4
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// d1,d2,d3 (or d2,d3 with d1 unconstrained)
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Rate bounds on (R2, R3) for given R1, R4 and distortions.
    RdBound {
        #[arg(long)]
        var: Option<f64>,
        #[arg(long)]
        r1: Option<f64>,
        #[arg(long)]
        r4: Option<f64>,
        /// d1,d2,d3,d4 (or d2,d3,d4 with d1 unconstrained)
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Test channel for given rates and side distortions, with its certificate.
    Channel {
        #[arg(long)]
        var: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// d2,d3
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Rate bounds and decoder distortions of a finite-alphabet pmf file.
    Discrete {
        #[command(flatten)]
        common: Common,
    },
    /// CSV of the Wyner-Ziv and multiple-description (d3, d4) tradeoffs.
    SweepFig3 {
        #[arg(long)]
        var: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[arg(long)]
        points: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// CSV of the fixed-configuration loss on d2 over R1.
    Loss {
        #[arg(long)]
        var: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        r3: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        r1_grid: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// CSV of the central-refinement penalty over R4.
    Mdcr {
        #[arg(long)]
        var: Option<f64>,
        #[arg(long)]
        r2: Option<f64>,
        #[arg(long)]
        r3: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// d2,d3
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        r4_grid: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// CSV of exact over asymptotic central distortion for balanced descriptions.
    Asymptote {
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        eta1: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        r_grid: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs the self-check suite.
    Verify {
        #[arg(long, env = "GAUSSRD_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        grid_density: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(String),
    Infeasible(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Infeasible(e)
    }
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(e)) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": e.to_string() }));
            ExitCode::from(2)
        }
        Err(Failure::Verification(out)) => {
            print!("{out}");
            ExitCode::from(3)
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::InfeasibleDistortion { .. } => "infeasible_distortion",
        Error::NegativeDelta(_) => "negative_delta",
        Error::OutOfRegime(_) => "out_of_regime",
        Error::InvalidRegimeInput { .. } => "invalid_regime_input",
        Error::SingularObservation { .. } => "singular_observation",
        Error::InvalidChannel(_) => "invalid_channel",
        Error::InvalidCovariance(_) => "invalid_covariance",
        Error::IndexOutOfRange { .. } => "index_out_of_range",
        Error::InvalidPmf(_) => "invalid_pmf",
        Error::DimensionMismatch(_) => "dimension_mismatch",
        Error::AlphabetMismatch(_) => "alphabet_mismatch",
    }
}

/// Layers defaults, then the scenario file, then explicit flags, and
/// deserializes the result.
fn resolve<T: DeserializeOwned>(
    defaults: Value,
    common: &Common,
    flags: Vec<(&str, Option<Value>)>,
) -> Result<T, Failure> {
    let mut merged = match defaults {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    if let Some(path) = &common.scenario {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        match v {
            Value::Object(m) => merged.extend(m),
            _ => return Err(Failure::Usage(format!("{}: expected a JSON object", path.display()))),
        }
    }
    if let Some(u) = common.unit {
        merged.insert("unit".into(), json!(u));
    }
    for (k, v) in flags {
        if let Some(v) = v {
            merged.insert(k.into(), v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::Usage(e.to_string()))
}

fn opt<T: Serialize>(v: &Option<T>) -> Option<Value> {
    v.as_ref().map(|x| json!(x))
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

fn to_nats(r: f64, unit: RateUnit) -> f64 {
    convert_rate(r, unit, RateUnit::Nats)
}

fn from_nats(r: f64, unit: RateUnit) -> f64 {
    convert_rate(r, RateUnit::Nats, unit)
}

fn rates_in(r: &[f64], unit: RateUnit) -> Result<RateTuple, Failure> {
    let nats: Vec<f64> = r.iter().map(|&x| to_nats(x, unit)).collect();
    RateTuple::from_slice(&nats).map_err(Failure::Infeasible)
}

/// Splits `[d1, rest..]` or `[rest..]` into the first-layer constraint and
/// the remaining `n` values.
fn split_d1(d: &[f64], n: usize) -> Result<(FirstDistortion, Vec<f64>), Failure> {
    match d.len() {
        l if l == n => Ok((FirstDistortion::Unconstrained, d.to_vec())),
        l if l == n + 1 => Ok((FirstDistortion::Constrained(d[0]), d[1..].to_vec())),
        l => Err(Failure::Usage(format!(
            "expected {n} or {} distortions, got {l}",
            n + 1
        ))),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DrInputs {
    var: f64,
    rates: Vec<f64>,
    d: Vec<f64>,
    unit: RateUnit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RdInputs {
    var: f64,
    r1: f64,
    r4: f64,
    d: Vec<f64>,
    unit: RateUnit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelInputs {
    var: f64,
    rates: Vec<f64>,
    d: Vec<f64>,
    unit: RateUnit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepInputs {
    var: f64,
    rates: Vec<f64>,
    points: usize,
    unit: RateUnit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossInputs {
    var: f64,
    alpha: f64,
    r3: f64,
    r1_grid: Vec<f64>,
    unit: RateUnit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdcrInputs {
    var: f64,
    r2: f64,
    r3: f64,
    beta: f64,
    d: Vec<f64>,
    r4_grid: Vec<f64>,
    unit: RateUnit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AsymptoteInputs {
    b: f64,
    eta: f64,
    eta1: f64,
    r_grid: Vec<f64>,
    unit: RateUnit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyInputs {
    seed: u64,
    grid_density: usize,
}

fn run(command: Command) -> Outcome {
    match command {
        Command::DrBound { var, rates, d, common } => {
            let inputs: DrInputs = resolve(
                json!({ "var": 1.0, "unit": "nats" }),
                &common,
                vec![("var", opt(&var)), ("rates", opt(&rates)), ("d", opt(&d))],
            )?;
            cmd_dr_bound(&inputs)
        }
        Command::RdBound { var, r1, r4, d, common } => {
            let inputs: RdInputs = resolve(
                json!({ "var": 1.0, "r1": 0.0, "r4": 0.0, "unit": "nats" }),
                &common,
                vec![("var", opt(&var)), ("r1", opt(&r1)), ("r4", opt(&r4)), ("d", opt(&d))],
            )?;
            cmd_rd_bound(&inputs)
        }
        Command::Channel { var, rates, d, common } => {
            let inputs: ChannelInputs = resolve(
                json!({ "var": 1.0, "unit": "nats" }),
                &common,
                vec![("var", opt(&var)), ("rates", opt(&rates)), ("d", opt(&d))],
            )?;
            cmd_channel(&inputs)
        }
        Command::Discrete { common } => cmd_discrete(&common),
        Command::SweepFig3 { var, rates, points, common } => {
            let inputs: SweepInputs = resolve(
                json!({ "var": 1.0, "rates": [1.0, 0.5, 1.0, 0.5], "points": 200, "unit": "nats" }),
                &common,
                vec![("var", opt(&var)), ("rates", opt(&rates)), ("points", opt(&points))],
            )?;
            cmd_sweep_fig3(&inputs)
        }
        Command::Loss { var, alpha, r3, r1_grid, common } => {
            let inputs: LossInputs = resolve(
                json!({ "var": 1.0, "alpha": 1.0, "r3": 1.0, "r1_grid": [1.0, 2.0, 4.0, 8.0], "unit": "nats" }),
                &common,
                vec![
                    ("var", opt(&var)),
                    ("alpha", opt(&alpha)),
                    ("r3", opt(&r3)),
                    ("r1_grid", opt(&r1_grid)),
                ],
            )?;
            cmd_loss(&inputs)
        }
        Command::Mdcr { var, r2, r3, beta, d, r4_grid, common } => {
            let inputs: MdcrInputs = resolve(
                json!({
                    "var": 1.0, "r2": 0.5, "r3": 0.5, "beta": 0.5, "d": [0.45, 0.45],
                    "r4_grid": [0.0, 0.1, 0.2, 0.4], "unit": "nats"
                }),
                &common,
                vec![
                    ("var", opt(&var)),
                    ("r2", opt(&r2)),
                    ("r3", opt(&r3)),
                    ("beta", opt(&beta)),
                    ("d", opt(&d)),
                    ("r4_grid", opt(&r4_grid)),
                ],
            )?;
            cmd_mdcr(&inputs)
        }
        Command::Asymptote { b, eta, eta1, r_grid, common } => {
            let inputs: AsymptoteInputs = resolve(
                json!({ "b": 1.0, "eta": 0.3, "eta1": 0.3, "r_grid": [1.0, 2.0, 4.0, 8.0], "unit": "nats" }),
                &common,
                vec![
                    ("b", opt(&b)),
                    ("eta", opt(&eta)),
                    ("eta1", opt(&eta1)),
                    ("r_grid", opt(&r_grid)),
                ],
            )?;
            cmd_asymptote(&inputs)
        }
        Command::Verify { seed, grid_density, common } => {
            let defaults = VerifyConfig::default();
            let inputs: VerifyInputs = resolve(
                json!({ "seed": DEFAULT_SEED, "grid_density": defaults.grid_density }),
                &common,
                vec![("seed", opt(&seed)), ("grid_density", opt(&grid_density))],
            )?;
            cmd_verify(&inputs)
        }
    }
}

fn cmd_dr_bound(inputs: &DrInputs) -> Outcome {
    let src = GaussianSource::new(inputs.var)?;
    let rates = rates_in(&inputs.rates, inputs.unit)?;
    let (d1, rest) = split_d1(&inputs.d, 2)?;
    let b = dr_bound(&src, &rates, d1, rest[0], rest[1])?;
    Ok(pretty(&json!({
        "inputs": inputs,
        "d1_star": b.d1_star,
        "pi": b.pi,
        "delta": b.delta,
        "regime": b.regime,
        "on_boundary": (b.pi - b.delta).abs() <= 1e-12,
        "d4_bound": b.d4_bound,
    })))
}

fn cmd_rd_bound(inputs: &RdInputs) -> Outcome {
    let src = GaussianSource::new(inputs.var)?;
    let u = inputs.unit;
    let (d1, rest) = split_d1(&inputs.d, 3)?;
    let dist = DistortionTuple::new(d1, rest[0], rest[1], rest[2])?;
    let b = rd_bound(&src, to_nats(inputs.r1, u), to_nats(inputs.r4, u), &dist)?;
    Ok(pretty(&json!({
        "inputs": inputs,
        "r1_star": from_nats(b.r1_star, u),
        "d1_star": b.d1_star,
        "r2_bound": from_nats(b.r2_bound, u),
        "r3_bound": from_nats(b.r3_bound, u),
        "sum_bound": from_nats(b.sum_bound, u),
        "excess": from_nats(b.excess, u),
        "regime": b.regime,
    })))
}

fn cmd_channel(inputs: &ChannelInputs) -> Outcome {
    let src = GaussianSource::new(inputs.var)?;
    let rates = rates_in(&inputs.rates, inputs.unit)?;
    let [d2, d3] = inputs.d[..] else {
        return Err(Failure::Usage(format!("expected d2,d3, got {} values", inputs.d.len())));
    };
    let cert = certify_achievability(&src, &rates, d2, d3)?;
    let a = cert.achieved;
    Ok(pretty(&json!({
        "inputs": inputs,
        "channel": cert.channel,
        "adjustment": cert.adjustment,
        "achieved": [a.d1().effective(&src), a.d2(), a.d3(), a.d4()],
        "d4_closed_form": cert.d4_closed_form,
        "d4_bound": cert.d4_bound,
        "matches_bound": cert.matches_bound,
    })))
}

fn cmd_discrete(common: &Common) -> Outcome {
    let path = common
        .scenario
        .as_ref()
        .ok_or_else(|| Failure::Usage("discrete needs --scenario <pmf.json>".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let scenario: DiscreteScenario = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let unit = common.unit.unwrap_or_default();
    let pmf = scenario.pmf()?;
    let bounds = eval_region_bounds(&pmf).to_array().map(|b| from_nats(b, unit));
    let d = eval_distortions(&pmf, &scenario.decoders, &scenario.distortion_matrix)?;
    Ok(pretty(&json!({
        "inputs": scenario,
        "unit": unit,
        "bounds": {
            "b1": bounds[0], "b12": bounds[1], "b13": bounds[2],
            "b123": bounds[3], "b1234": bounds[4],
        },
        "distortions": d.to_array(),
    })))
}

fn cmd_sweep_fig3(inputs: &SweepInputs) -> Outcome {
    let src = GaussianSource::new(inputs.var)?;
    let rates = rates_in(&inputs.rates, inputs.unit)?;
    let rows = wz_md_sweep(&src, &rates, inputs.points)?;
    Ok(format::csv(
        &["d3", "d4_wz", "d4_md", "gap"],
        rows.iter().map(|r| vec![r.d3, r.d4_wz, r.d4_md, r.gap]),
    ))
}

fn cmd_loss(inputs: &LossInputs) -> Outcome {
    let src = GaussianSource::new(inputs.var)?;
    let cfg = FixedChannelConfig::new(inputs.alpha)?;
    let u = inputs.unit;
    let r3 = to_nats(inputs.r3, u);
    let header = format!("r1_{u}");
    let rows = inputs.r1_grid.iter().map(|&r1| {
        let l = fixed_channel_loss(&src, to_nats(r1, u), r3, cfg);
        vec![r1, l.ratio, l.d2_floor, l.d2_star]
    });
    Ok(format::csv(&[&header, "ratio", "d2_floor", "d2_star"], rows))
}

fn cmd_mdcr(inputs: &MdcrInputs) -> Outcome {
    let src = GaussianSource::new(inputs.var)?;
    let split = MdcrSplit::new(inputs.beta)?;
    let u = inputs.unit;
    let [d2, d3] = inputs.d[..] else {
        return Err(Failure::Usage(format!("expected d2,d3, got {} values", inputs.d.len())));
    };
    let (r2, r3) = (to_nats(inputs.r2, u), to_nats(inputs.r3, u));
    let mut rows = Vec::new();
    for &r4 in &inputs.r4_grid {
        let c = mdcr_compare(&src, r2, r3, to_nats(r4, u), split, d2, d3)?;
        rows.push(vec![r4, c.d4_mdcr, c.d4_md, c.ratio]);
    }
    let header = format!("r4_{u}");
    Ok(format::csv(&[&header, "d4_mdcr", "d4_md", "ratio"], rows))
}

fn cmd_asymptote(inputs: &AsymptoteInputs) -> Outcome {
    let u = inputs.unit;
    let grid: Vec<f64> = inputs.r_grid.iter().map(|&r| to_nats(r, u)).collect();
    let first = grid.first().copied().unwrap_or(1.0);
    let cfg = AsymptoticConfig::new(first, inputs.b, inputs.eta, inputs.eta1)?;
    let table = asymptote_convergence(&cfg, &grid)?;
    let mut rows = Vec::new();
    for (row, &r) in table.iter().zip(&inputs.r_grid) {
        let loss = mdcr_loss_factor(&cfg.with_rate(row.r_prime)?)?;
        rows.push(vec![r, row.exact, row.asymptote, row.ratio, loss]);
    }
    let header = format!("r_prime_{u}");
    Ok(format::csv(
        &[&header, "exact", "asymptote", "ratio", "mdcr_loss"],
        rows,
    ))
}

fn cmd_verify(inputs: &VerifyInputs) -> Outcome {
    if inputs.grid_density < 2 {
        return Err(Failure::Usage("grid density must be at least 2".into()));
    }
    let config = VerifyConfig {
        seed: inputs.seed,
        ..VerifyConfig::with_density(inputs.grid_density)
    };
    let summary = run_verify(&config)?;
    let out = pretty(&json!({ "inputs": inputs, "summary": summary }));
    if summary.passed {
        Ok(out)
    } else {
        Err(Failure::Verification(out))
    }
}
