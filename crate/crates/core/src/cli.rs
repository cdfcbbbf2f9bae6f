//! Command-line front end: `evaluate`, `optimize`, `sweep` and `simulate`.
//!
//! Every command reads one scenario (the bundled reference network when
//! `--scenario` is absent), writes its files into `--out` and prints a short
//! table on stdout. Thresholds are written with full round-trip precision so a
//! `result.json` can be fed back through `--beta-file`; every other number is
//! rounded to 12 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::policy_opt::{baseline_policy, ia_dtc, ia_tc, BaselineKind};
use crate::round12;
use crate::scenario::Scenario;
use crate::simcheck::{compare, simulate, TrafficMode};
use crate::throughput::{Evaluator, LossBreakdown};

#[derive(Debug, Parser)]
#[command(
    name = "iatc",
    version,
    about = "Interference-aware threshold control for UAV/ground spectrum sharing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (TOML, or JSON by extension). Defaults to the bundled reference network.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides every seed in the scenario (simulation, random baseline, moment sampler).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Default)]
pub struct BetaArgs {
    /// Threshold override `ID=VALUE`, repeatable.
    #[arg(long = "beta", value_parser = parse_override)]
    pub beta: Vec<(u32, f64)>,
    /// Reads `node_ids`/`beta` from a `result.json`; `--beta` still applies on top.
    #[arg(long)]
    pub beta_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "uav_alt")]
    UavAlt,
    #[value(name = "num_nodes")]
    NumNodes,
    #[value(name = "gamma_th")]
    GammaTh,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::UavAlt => "uav_alt",
            SweepParam::NumNodes => "num_nodes",
            SweepParam::GammaTh => "gamma_th",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    IaTc,
    IaDtc,
    Baseline(BaselineKind),
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ia-tc" => Ok(Algo::IaTc),
            "ia-dtc" => Ok(Algo::IaDtc),
            _ => match s.strip_prefix("baseline:") {
                Some(k) => k.parse().map(Algo::Baseline).map_err(|e: Error| e.to_string()),
                None => Err(format!("unknown algorithm '{s}' (ia-tc|ia-dtc|baseline:<kind>)")),
            },
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algo::IaTc => f.write_str("ia-tc"),
            Algo::IaDtc => f.write_str("ia-dtc"),
            Algo::Baseline(k) => write!(f, "baseline:{}", k.name()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Loss breakdown and throughput of every transmitter.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        betas: BetaArgs,
    },
    /// Runs an optimizer and writes `trace` and `result.json`.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// ia-tc, ia-dtc or baseline:<random|aggressive|selfish|conservative>.
        #[arg(long, default_value = "ia-tc")]
        algo: Algo,
    },
    /// Re-optimizes the network for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        /// Defaults to ia-tc for uav_alt and ia-dtc otherwise.
        #[arg(long)]
        algo: Option<Algo>,
    },
    /// Slot-level simulation compared against the analytic model.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        betas: BetaArgs,
        /// Takes thresholds from this optimizer instead of the scenario defaults.
        #[arg(long)]
        optimize: Option<Algo>,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long)]
        warmup: Option<u64>,
        /// queued or saturated.
        #[arg(long, value_parser = parse_traffic)]
        traffic: Option<TrafficMode>,
    },
}

fn parse_override(s: &str) -> std::result::Result<(u32, f64), String> {
    let (id, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected ID=VALUE, got '{s}'"))?;
    let id = id.trim().parse().map_err(|_| format!("bad node id '{id}'"))?;
    let v = v.trim().parse().map_err(|_| format!("bad threshold '{v}'"))?;
    Ok((id, v))
}

fn parse_traffic(s: &str) -> std::result::Result<TrafficMode, String> {
    match s {
        "queued" => Ok(TrafficMode::Queued),
        "saturated" => Ok(TrafficMode::Saturated),
        _ => Err(format!("unknown traffic mode '{s}' (queued|saturated)")),
    }
}

/// Formats a reported number: 12 significant digits, exponent form when tiny or huge.
pub fn fmt_num(x: f64) -> String {
    fmt_full(round12(x))
}

/// Shortest representation that parses back to exactly `x`.
pub fn fmt_full(x: f64) -> String {
    let a = x.abs();
    if x.is_finite() && x != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_full).unwrap_or_default()
}

const FULL_PRECISION_KEYS: [&str; 3] = ["beta", "beta_rounds", "beta_source"];

/// Rounds every float in `v` to 12 significant digits except threshold fields.
fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round12).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => {
            for (k, x) in o.iter_mut() {
                if !FULL_PRECISION_KEYS.contains(&k.as_str()) {
                    round_json(x);
                }
            }
        }
        _ => {}
    }
}

fn to_json_string(mut v: Value) -> String {
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, body).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn load_scenario(common: &Common) -> Result<Scenario> {
    let mut sc = match &common.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::reference(),
    };
    if let Some(s) = common.seed {
        sc.sim.seed = s;
        sc.optimizer.seed = s;
        sc.interference.moment_seed = s;
    }
    Ok(sc)
}

fn read_beta_file(path: &Path) -> Result<Vec<(u32, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| {
        Error::Parse(format!(
            "{}: line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let bad = || {
        Error::Parse(format!(
            "{}: expected numeric arrays 'node_ids' and 'beta'",
            path.display()
        ))
    };
    let ids = v.get("node_ids").and_then(Value::as_array).ok_or_else(bad)?;
    let beta = v.get("beta").and_then(Value::as_array).ok_or_else(bad)?;
    if ids.len() != beta.len() {
        return Err(Error::Parse(format!(
            "{}: 'node_ids' has {} entries but 'beta' has {}",
            path.display(),
            ids.len(),
            beta.len()
        )));
    }
    ids.iter()
        .zip(beta)
        .map(|(i, b)| {
            let id = i.as_u64().and_then(|x| u32::try_from(x).ok()).ok_or_else(bad)?;
            Ok((id, b.as_f64().ok_or_else(bad)?))
        })
        .collect()
}

fn resolve_betas(ev: &Evaluator, args: &BetaArgs) -> Result<Vec<f64>> {
    let mut betas = ev.network.default_betas();
    if let Some(p) = &args.beta_file {
        betas = ev.network.apply_overrides(&betas, &read_beta_file(p)?)?;
    }
    ev.network.apply_overrides(&betas, &args.beta)
}

const BREAKDOWN_HEADER: &str =
    "node_id,beta,mu,p_dly,p_ov,p_out,p_loss_exact,p_loss_first_order,r_n,r_exact,unstable,clamped";

fn breakdown_csv(rows: &[LossBreakdown]) -> String {
    let mut s = format!("{BREAKDOWN_HEADER}\n");
    for b in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            b.node_id,
            fmt_full(b.beta),
            fmt_num(b.mu),
            fmt_num(b.p_dly),
            fmt_num(b.p_ov),
            fmt_num(b.p_out),
            fmt_num(b.p_loss_exact),
            fmt_num(b.p_loss_first_order),
            fmt_num(b.r_n),
            fmt_num(b.r_exact),
            b.unstable,
            b.clamped
        );
    }
    s
}

/// Outcome of one optimizer run, independent of the algorithm.
pub struct OptimizeOutcome {
    pub algo: Algo,
    pub source: Option<u32>,
    pub beta: Vec<f64>,
    pub breakdown: Vec<LossBreakdown>,
    /// Objective reached: the source's R for ia-tc, the mean per-node R otherwise.
    pub r_star: f64,
    pub converged: bool,
    pub iterations: usize,
    pub group_max_rice: Option<f64>,
    pub group_max_ray: Option<f64>,
    pub trace_csv: String,
    pub trace_json: Value,
}

impl OptimizeOutcome {
    pub fn r_mean(&self) -> f64 {
        self.breakdown.iter().map(|b| b.r_n).sum::<f64>() / self.breakdown.len().max(1) as f64
    }

    pub fn source_index(&self) -> Option<usize> {
        self.source
            .and_then(|s| self.breakdown.iter().position(|b| b.node_id.0 == s))
    }

    pub fn result_json(&self, ev: &Evaluator) -> Value {
        json!({
            "algo": self.algo.to_string(),
            "converged": self.converged,
            "iterations": self.iterations,
            "source": self.source,
            "node_ids": ev.network.ids(),
            "beta": self.beta,
            "upper": ev.network.bounds(),
            "r": self.breakdown.iter().map(|b| b.r_n).collect::<Vec<_>>(),
            "r_exact": self.breakdown.iter().map(|b| b.r_exact).collect::<Vec<_>>(),
            "r_star": self.r_star,
            "r_mean": self.r_mean(),
            "group_max_rice": self.group_max_rice,
            "group_max_ray": self.group_max_ray,
        })
    }
}

pub const IA_TC_TRACE_HEADER: &str = "iteration,beta_rice,beta_ray,beta_source,r_best";
pub const ROUND_TRACE_HEADER: &str = "round,node_id,beta,r";

/// Runs `algo` on an evaluator and collects everything the CLI reports.
pub fn run_optimizer(ev: &Evaluator, algo: Algo) -> Result<OptimizeOutcome> {
    let cfg = &ev.network.scenario.optimizer;
    match algo {
        Algo::IaTc => {
            let r = ia_tc(ev, cfg)?;
            let breakdown = ev.all(&r.policy.beta)?;
            let init = |max: Option<f64>, v: f64| max.map(|_| v);
            let mut rows = vec![json!({
                "iteration": 0,
                "beta_rice": init(r.group_max_rice, cfg.beta_ini[0]),
                "beta_ray": init(r.group_max_ray, cfg.beta_ini[1]),
                "beta_source": cfg.beta_ini[2],
                "r_best": r.r_initial,
            })];
            let mut csv = format!("{IA_TC_TRACE_HEADER}\n");
            let _ = writeln!(
                csv,
                "0,{},{},{},{}",
                fmt_opt(init(r.group_max_rice, cfg.beta_ini[0])),
                fmt_opt(init(r.group_max_ray, cfg.beta_ini[1])),
                fmt_full(cfg.beta_ini[2]),
                fmt_num(r.r_initial)
            );
            for s in &r.trace {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    s.iteration,
                    fmt_opt(s.beta_rice),
                    fmt_opt(s.beta_ray),
                    fmt_full(s.beta_n),
                    fmt_num(s.r_best)
                );
                rows.push(json!({
                    "iteration": s.iteration,
                    "beta_rice": s.beta_rice,
                    "beta_ray": s.beta_ray,
                    "beta_source": s.beta_n,
                    "r_best": s.r_best,
                }));
            }
            Ok(OptimizeOutcome {
                algo,
                source: Some(r.source.0),
                beta: r.policy.beta,
                breakdown,
                r_star: r.r_best,
                converged: r.converged,
                iterations: r.iterations,
                group_max_rice: r.group_max_rice,
                group_max_ray: r.group_max_ray,
                trace_csv: csv,
                trace_json: Value::Array(rows),
            })
        }
        Algo::IaDtc => {
            let r = ia_dtc(ev, cfg)?;
            let ids = ev.network.ids();
            let mut csv = format!("{ROUND_TRACE_HEADER}\n");
            let mut rows = Vec::new();
            for (k, (b, rr)) in r.beta_rounds.iter().zip(&r.r_matrix).enumerate() {
                for ((id, bi), ri) in ids.iter().zip(b).zip(rr) {
                    let _ = writeln!(csv, "{k},{id},{},{}", fmt_full(*bi), fmt_num(*ri));
                    rows.push(json!({"round": k, "node_id": id, "beta": bi, "r": ri}));
                }
            }
            let breakdown = ev.all(&r.policy.beta)?;
            let mut out = OptimizeOutcome {
                algo,
                source: ev.network.source_index().ok().map(|s| ids[s].0),
                beta: r.policy.beta,
                breakdown,
                r_star: 0.0,
                converged: r.converged,
                iterations: r.rounds,
                group_max_rice: None,
                group_max_ray: None,
                trace_csv: csv,
                trace_json: Value::Array(rows),
            };
            out.r_star = out.r_mean();
            Ok(out)
        }
        Algo::Baseline(kind) => {
            let p = baseline_policy(kind, ev, cfg.seed)?;
            let breakdown = ev.all(&p.beta)?;
            let mut csv = format!("{ROUND_TRACE_HEADER}\n");
            let mut rows = Vec::new();
            for b in &breakdown {
                let _ = writeln!(csv, "0,{},{},{}", b.node_id, fmt_full(b.beta), fmt_num(b.r_n));
                rows.push(json!({"round": 0, "node_id": b.node_id, "beta": b.beta, "r": b.r_n}));
            }
            let mut out = OptimizeOutcome {
                algo,
                source: ev.network.source_index().ok().map(|s| ev.network.tx[s].id.0),
                beta: p.beta,
                breakdown,
                r_star: 0.0,
                converged: true,
                iterations: 0,
                group_max_rice: None,
                group_max_ray: None,
                trace_csv: csv,
                trace_json: Value::Array(rows),
            };
            out.r_star = out.r_mean();
            Ok(out)
        }
    }
}

pub const SWEEP_HEADER: &str = "param,value,algo,source_id,beta_source,r_source,r_mean,converged,iterations";

/// One sweep point: the scenario with `param` set to `value`, re-optimized.
pub fn sweep_point(base: &Scenario, param: SweepParam, value: f64, algo: Algo) -> Result<OptimizeOutcome> {
    let sc = match param {
        SweepParam::UavAlt => base.clone().with_uav_altitude(value)?,
        SweepParam::NumNodes => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::Validation(format!(
                    "num_nodes must be a positive integer, got {value}"
                )));
            }
            base.clone().with_num_nodes(value as usize)?
        }
        SweepParam::GammaTh => base.clone().with_gamma_th(value)?,
    };
    let ev = Evaluator::new(sc.build()?)?;
    run_optimizer(&ev, algo)
}

fn default_sweep_algo(param: SweepParam) -> Algo {
    match param {
        SweepParam::UavAlt => Algo::IaTc,
        _ => Algo::IaDtc,
    }
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evaluate { common, betas } => {
            let ev = Evaluator::new(load_scenario(&common)?.build()?)?;
            let b = resolve_betas(&ev, &betas)?;
            let rows = ev.all(&b)?;
            let body = match common.format {
                Format::Csv => breakdown_csv(&rows),
                Format::Json => to_json_string(serde_json::to_value(&rows).expect("breakdowns serialize")),
            };
            let name = match common.format {
                Format::Csv => "evaluation.csv",
                Format::Json => "evaluation.json",
            };
            write_file(&common.out, name, &body)?;
            print!("{body}");
        }
        Command::Optimize { common, algo } => {
            let ev = Evaluator::new(load_scenario(&common)?.build()?)?;
            let o = run_optimizer(&ev, algo)?;
            match common.format {
                Format::Csv => write_file(&common.out, "trace.csv", &o.trace_csv)?,
                Format::Json => write_file(&common.out, "trace.json", &to_json_string(o.trace_json.clone()))?,
            }
            write_file(&common.out, "result.json", &to_json_string(o.result_json(&ev)))?;
            print!("{}", breakdown_csv(&o.breakdown));
            println!(
                "# {algo}: R* = {}, converged = {}, iterations = {}",
                fmt_num(o.r_star),
                o.converged,
                o.iterations
            );
        }
        Command::Sweep {
            common,
            param,
            values,
            algo,
        } => {
            let base = load_scenario(&common)?;
            let algo = algo.unwrap_or_else(|| default_sweep_algo(param));
            let points = values
                .par_iter()
                .map(|&v| sweep_point(&base, param, v, algo))
                .collect::<Result<Vec<_>>>()?;
            let mut csv = format!("{SWEEP_HEADER}\n");
            let mut rows = Vec::new();
            for (v, o) in values.iter().zip(&points) {
                let s = o.source_index();
                let beta_s = s.map(|i| o.beta[i]);
                let r_s = s.map(|i| o.breakdown[i].r_n);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    param.name(),
                    fmt_full(*v),
                    algo,
                    o.source.map(|x| x.to_string()).unwrap_or_default(),
                    fmt_opt(beta_s),
                    r_s.map(fmt_num).unwrap_or_default(),
                    fmt_num(o.r_mean()),
                    o.converged,
                    o.iterations
                );
                rows.push(json!({
                    "param": param.name(),
                    "value": v,
                    "algo": algo.to_string(),
                    "source_id": o.source,
                    "beta_source": beta_s,
                    "r_source": r_s,
                    "r_mean": o.r_mean(),
                    "converged": o.converged,
                    "iterations": o.iterations,
                }));
            }
            let (name, body) = match common.format {
                Format::Csv => ("sweep.csv", csv),
                Format::Json => ("sweep.json", to_json_string(Value::Array(rows))),
            };
            write_file(&common.out, name, &body)?;
            print!("{body}");
        }
        Command::Simulate {
            common,
            betas,
            optimize,
            slots,
            warmup,
            traffic,
        } => {
            let mut sc = load_scenario(&common)?;
            if let Some(n) = slots {
                sc.sim.num_slots = n;
            }
            if let Some(w) = warmup {
                sc.sim.warmup_slots = w;
            }
            if let Some(t) = traffic {
                sc.sim.traffic = t;
            }
            let ev = Evaluator::new(sc.build()?)?;
            let mut b = match optimize {
                Some(a) => run_optimizer(&ev, a)?.beta,
                None => ev.network.default_betas(),
            };
            if let Some(p) = &betas.beta_file {
                b = ev.network.apply_overrides(&b, &read_beta_file(p)?)?;
            }
            b = ev.network.apply_overrides(&b, &betas.beta)?;
            let analytic = ev.all(&b)?;
            let report = simulate(&ev.network, &b, &sc.sim)?;
            let rows = compare(&report, &analytic);
            write_file(
                &common.out,
                "simreport.json",
                &to_json_string(json!({"report": report, "analytic": analytic, "comparison": rows})),
            )?;
            let body = match common.format {
                Format::Csv => {
                    let mut s = String::from("node_id,component,analytic,empirical,ci,rel_error\n");
                    for r in &rows {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{}",
                            r.node_id,
                            r.component,
                            fmt_num(r.analytic),
                            fmt_num(r.empirical),
                            fmt_num(r.ci),
                            fmt_num(r.rel_error)
                        );
                    }
                    s
                }
                Format::Json => to_json_string(serde_json::to_value(&rows).expect("rows serialize")),
            };
            let name = match common.format {
                Format::Csv => "comparison.csv",
                Format::Json => "comparison.json",
            };
            write_file(&common.out, name, &body)?;
            print!("{body}");
        }
    }
    Ok(())
}
