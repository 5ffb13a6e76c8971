//! Command-line front end for the qkdsim suite.
//!
//! Every run prints a single JSON document (or CSV for sweeps) that embeds
//! the tool version, the fully resolved parameters, and the seed, so that
//! identical commands reproduce byte-identical output. Exit codes: 0 on
//! success, 1 when a checked property is violated, 2 on usage errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qkdsim_core::gf2::BitVec;
use qkdsim_core::pgm::{
    appendix_diagnostics, average_over_hashing, bound_avefail, build_pgm, experiment_candidates,
    fidelity_bound, p_fail_bound, rho_hat, tomega, typical_projector, AvefailSign, CheckStatus,
    HashingMode,
};
use qkdsim_core::protocol::{
    equivalence_check_with_rules, hashing_survival, run_actual_with_rule, run_virtual,
    sampling_bound_check, FlipRule, HashDrawMode, ProtocolConfig,
};
use qkdsim_core::qsim::{Basis, StateVector};
use qkdsim_core::rates::{
    rate_bb84_noisy, rate_case_i, rate_case_ii, rate_sixstate_noisy, threshold, von_neumann,
    QStrategy, SixStateModel,
};
use qkdsim_core::rng::stream_rng;

const VERSION: &str = env!("CARGO_PKG_VERSION");
const TV_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "qkdsim", version, about = "Key-rate, protocol-equivalence, and measurement-analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key-generation rates (per code bit, plus the raw form when sizes are given)
    Rate(RateArgs),
    /// Bit-error-rate thresholds by bisection
    Threshold(ThresholdArgs),
    /// One seeded run of the actual and virtual protocols
    Simulate(SimulateArgs),
    /// Averaged PGM success probabilities against the failure bounds
    PgmExp(PgmExpArgs),
    /// Exact equivalence check of actual vs virtual protocol distributions
    Verify(VerifyArgs),
    /// Inequality-chain diagnostics for a PGM instance
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Master seed; all randomness derives from numbered streams of it
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Output format (csv only affects sweeps)
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// JSON file with defaults for this subcommand's flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Protocol {
    Bb84,
    Sixstate,
    CaseI,
    CaseIi,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// Test-bit error rate
    #[arg(long)]
    e: Option<f64>,
    /// Noise probability
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// Bits discarded for bidirectional codes
    #[arg(long)]
    d: Option<usize>,
    /// Sweep e over "start:stop:points" (CSV emits one row per point)
    #[arg(long)]
    e_sweep: Option<String>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// Hold q fixed instead of taking the supremum over the geometric grid
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Input state: "zero" or "random"
    #[arg(long)]
    input: Option<String>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RuleArg {
    Zero,
    CosetLeader,
}

impl From<RuleArg> for FlipRule {
    fn from(value: RuleArg) -> Self {
        match value {
            RuleArg::Zero => FlipRule::Zero,
            RuleArg::CosetLeader => FlipRule::CosetLeader,
        }
    }
}

#[derive(Args)]
struct PgmExpArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of shield copies (the n+s of the analysis)
    #[arg(long)]
    n_copies: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    e: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Typicality half-width; defaults to the tomega display value
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Candidate-set size including the true pattern
    #[arg(long)]
    t_size: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Monte Carlo draws (monte-carlo mode)
    #[arg(long)]
    trials: Option<usize>,
    /// Sweep m over "lo:hi" inclusive (CSV emits one row per m)
    #[arg(long)]
    m_sweep: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Exhaustive,
    MonteCarlo,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Number of random configurations
    #[arg(long)]
    trials: Option<usize>,
    /// Random input states per configuration
    #[arg(long)]
    states: Option<usize>,
    /// Use the CNOT(II) circuit from this text file (header `width N`, one
    /// `c <control> <target>` line per gate) instead of random hashing rows
    #[arg(long)]
    cnot2: Option<PathBuf>,
    /// Negative control: run the virtual side with the zero rule and the
    /// actual side with the coset-leader rule
    #[arg(long, default_value_t = false)]
    mismatched_flip_rules: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_copies: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    e: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    t_size: Option<usize>,
}

#[derive(Serialize)]
struct Envelope<P: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    params: P,
    result: R,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Rate(args) => cmd_rate(args),
        Command::Threshold(args) => cmd_threshold(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::PgmExp(args) => cmd_pgm_exp(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    match outcome {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

/// Loads `--config` as a flat JSON object and rejects unknown keys.
fn load_config(
    path: &Option<PathBuf>,
    allowed: &[&str],
) -> Result<BTreeMap<String, serde_json::Value>, String> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let map: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| format!("bad config JSON: {e}"))?;
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(format!("unknown config key {key:?} (allowed: {allowed:?})"));
        }
    }
    Ok(map)
}

fn config_f64(map: &BTreeMap<String, serde_json::Value>, key: &str) -> Result<Option<f64>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| format!("config key {key:?} must be a number")),
    }
}

fn config_usize(map: &BTreeMap<String, serde_json::Value>, key: &str) -> Result<Option<usize>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|x| Some(x as usize))
            .ok_or_else(|| format!("config key {key:?} must be a nonnegative integer")),
    }
}

fn emit(common: &CommonArgs, text: String) -> Result<(), String> {
    match &common.output {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.write_all(b"\n"))
                .map_err(|e| e.to_string())
        }
        Some(path) => fs::write(path, text + "\n").map_err(|e| e.to_string()),
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report structs always serialize")
}

fn parse_sweep(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, points] = parts.as_slice() else {
        return Err(format!("sweep spec {spec:?} must be start:stop:points"));
    };
    let start: f64 = start.parse().map_err(|_| "bad sweep start".to_string())?;
    let stop: f64 = stop.parse().map_err(|_| "bad sweep stop".to_string())?;
    let points: usize = points.parse().map_err(|_| "bad sweep point count".to_string())?;
    if points < 2 || stop < start {
        return Err("sweep needs stop >= start and at least 2 points".into());
    }
    Ok((0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
        .collect())
}

fn range_check(what: &str, value: f64, lo: f64, hi: f64) -> Result<(), String> {
    if !(lo..=hi).contains(&value) {
        return Err(format!("{what} = {value} outside [{lo}, {hi}]"));
    }
    Ok(())
}

// ---------------------------------------------------------------- rate

#[derive(Serialize)]
struct RateParams {
    protocol: Protocol,
    e: f64,
    q: f64,
    n: Option<usize>,
    s: Option<usize>,
    d: usize,
}

#[derive(Serialize)]
struct RateResult {
    rate_per_bit: f64,
    raw_g: Option<f64>,
    entropy_shield: Option<f64>,
}

fn rate_point(protocol: Protocol, e: f64, q: f64, n: Option<usize>, s: Option<usize>, d: usize) -> Result<RateResult, String> {
    range_check("e", e, 0.0, 0.5)?;
    range_check("q", q, 0.0, 0.5)?;
    match protocol {
        Protocol::Bb84 => {
            let per_bit = rate_bb84_noisy(e, q);
            let shield = von_neumann(&rho_hat(q, e).map_err(|e| e.to_string())?);
            let raw_g = match (n, s) {
                (Some(n), Some(s)) => Some(
                    (n + s) as f64 * (1.0 - (qkdsim_core::rates::binary_entropy(e).unwrap() - shield))
                        - (s + d) as f64,
                ),
                _ => None,
            };
            Ok(RateResult { rate_per_bit: per_bit, raw_g, entropy_shield: Some(shield) })
        }
        Protocol::Sixstate => {
            let model = SixStateModel::symmetric(e).map_err(|e| e.to_string())?;
            let per_bit = rate_sixstate_noisy(e, q, &model);
            let raw_g = match (n, s) {
                (Some(n), Some(s)) => {
                    let shield_gain: f64 = (0..2)
                        .map(|i| {
                            let e_i = model.phase_given_bit(i).min(0.5);
                            model.p_bit(i) * rho_hat(q, e_i).unwrap().entropy()
                        })
                        .sum();
                    Some(
                        (n + s) as f64 * (1.0 - (model.conditional_phase_entropy() - shield_gain))
                            - (s + d) as f64,
                    )
                }
                _ => None,
            };
            Ok(RateResult { rate_per_bit: per_bit, raw_g, entropy_shield: None })
        }
        Protocol::CaseI | Protocol::CaseIi => {
            let (n, s) = match (n, s) {
                (Some(n), Some(s)) => (n, s),
                _ => return Err("case-i/case-ii rates need --n and --s".into()),
            };
            let raw = match protocol {
                Protocol::CaseI => rate_case_i(n, s, e, d),
                _ => rate_case_ii(n, s, e, d),
            };
            Ok(RateResult {
                rate_per_bit: raw / (n + s) as f64,
                raw_g: Some(raw),
                entropy_shield: None,
            })
        }
    }
}

fn cmd_rate(args: RateArgs) -> Result<ExitCode, String> {
    let allowed = ["e", "q", "n", "s", "d", "e-sweep"];
    let cfg = load_config(&args.common.config, &allowed)?;
    let q = args.q.or(config_f64(&cfg, "q")?).unwrap_or(0.0);
    let d = args.d.or(config_usize(&cfg, "d")?).unwrap_or(0);
    let n = args.n.or(config_usize(&cfg, "n")?);
    let s = args.s.or(config_usize(&cfg, "s")?);
    let sweep = args.e_sweep.clone().or_else(|| {
        cfg.get("e-sweep").and_then(|v| v.as_str()).map(String::from)
    });

    if let Some(spec) = sweep {
        let es = parse_sweep(&spec)?;
        let mut rows = Vec::new();
        for e in &es {
            let point = rate_point(args.protocol, *e, q, n, s, d)?;
            rows.push((*e, point));
        }
        let text = match args.common.format {
            Format::Csv => {
                let mut out = String::from("protocol,e,q,rate\n");
                for (e, point) in &rows {
                    out.push_str(&format!(
                        "{},{e},{q},{}\n",
                        protocol_name(args.protocol),
                        point.rate_per_bit
                    ));
                }
                out.trim_end().to_string()
            }
            Format::Json => {
                #[derive(Serialize)]
                struct SweepRow {
                    e: f64,
                    rate_per_bit: f64,
                }
                let rows: Vec<SweepRow> = rows
                    .iter()
                    .map(|(e, p)| SweepRow { e: *e, rate_per_bit: p.rate_per_bit })
                    .collect();
                to_pretty_json(&Envelope {
                    tool: "qkdsim",
                    version: VERSION,
                    command: "rate",
                    seed: args.common.seed,
                    params: RateParams { protocol: args.protocol, e: f64::NAN, q, n, s, d },
                    result: rows,
                })
            }
        };
        emit(&args.common, text)?;
        return Ok(ExitCode::SUCCESS);
    }

    let e = args
        .e
        .or(config_f64(&cfg, "e")?)
        .ok_or("missing --e (or config key \"e\")")?;
    let result = rate_point(args.protocol, e, q, n, s, d)?;
    let text = to_pretty_json(&Envelope {
        tool: "qkdsim",
        version: VERSION,
        command: "rate",
        seed: args.common.seed,
        params: RateParams { protocol: args.protocol, e, q, n, s, d },
        result,
    });
    emit(&args.common, text)?;
    Ok(ExitCode::SUCCESS)
}

fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Bb84 => "bb84",
        Protocol::Sixstate => "sixstate",
        Protocol::CaseI => "case-i",
        Protocol::CaseIi => "case-ii",
    }
}

// ---------------------------------------------------------------- threshold

#[derive(Serialize)]
struct ThresholdParams {
    protocol: Protocol,
    q: Option<f64>,
    strategy: String,
    bisection_tolerance: f64,
}

#[derive(Serialize)]
struct ThresholdResult {
    threshold: f64,
}

fn cmd_threshold(args: ThresholdArgs) -> Result<ExitCode, String> {
    let cfg = load_config(&args.common.config, &["q"])?;
    let q = args.q.or(config_f64(&cfg, "q")?);
    let strategy = match q {
        Some(q) => {
            range_check("q", q, 0.0, 0.5)?;
            QStrategy::Fixed(q)
        }
        None => QStrategy::SupGeometricGrid,
    };
    let value = match args.protocol {
        Protocol::Bb84 => threshold(rate_bb84_noisy, strategy),
        Protocol::Sixstate => threshold(
            |e, q| {
                let model = SixStateModel::symmetric(e).expect("bisection stays in range");
                rate_sixstate_noisy(e, q, &model)
            },
            strategy,
        ),
        _ => return Err("threshold supports --protocol bb84 or sixstate".into()),
    }
    .map_err(|e| e.to_string())?;
    let text = to_pretty_json(&Envelope {
        tool: "qkdsim",
        version: VERSION,
        command: "threshold",
        seed: args.common.seed,
        params: ThresholdParams {
            protocol: args.protocol,
            q,
            strategy: match strategy {
                QStrategy::Fixed(_) => "fixed-q".into(),
                QStrategy::SupGeometricGrid => "sup-geometric-grid".into(),
            },
            bisection_tolerance: 1e-6,
        },
        result: ThresholdResult { threshold: value },
    });
    emit(&args.common, text)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulateParams {
    n: usize,
    s: usize,
    m: usize,
    input: String,
    rule: RuleArg,
}

#[derive(Serialize)]
struct SimulateResult {
    config: ProtocolConfig,
    virtual_transcript: qkdsim_core::protocol::RunTranscript,
    actual_transcript: qkdsim_core::protocol::RunTranscript,
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, String> {
    let cfg_map = load_config(&args.common.config, &["n", "s", "m", "input"])?;
    let n = args.n.or(config_usize(&cfg_map, "n")?).unwrap_or(3);
    let s = args.s.or(config_usize(&cfg_map, "s")?).unwrap_or(2);
    let m = args.m.or(config_usize(&cfg_map, "m")?).unwrap_or(1);
    let input_kind = args
        .input
        .or_else(|| cfg_map.get("input").and_then(|v| v.as_str()).map(String::from))
        .unwrap_or_else(|| "random".into());
    let rule = args.rule.unwrap_or(RuleArg::CosetLeader);
    let seed = args.common.seed;

    let cfg = ProtocolConfig::random(n, s, m, seed).map_err(|e| e.to_string())?;
    let width = n + s;
    let input_state = match input_kind.as_str() {
        "zero" => StateVector::zero_state(width).map_err(|e| e.to_string())?,
        "random" => qkdsim_core::protocol::random_input_state(width, seed, 10)
            .map_err(|e| e.to_string())?,
        other => return Err(format!("unknown input kind {other:?} (zero|random)")),
    };
    let mut rng = stream_rng(seed, 11);
    let bob_syndrome = BitVec::random(s, &mut rng);
    let virtual_transcript = run_virtual(&cfg, &input_state, &bob_syndrome, rule.into(), seed)
        .map_err(|e| e.to_string())?;
    let sifted = input_state
        .measure(Basis::Z, &(0..width).collect::<Vec<_>>(), &mut rng)
        .map_err(|e| e.to_string())?
        .outcome;
    let actual_transcript = run_actual_with_rule(&cfg, &sifted, &bob_syndrome, rule.into())
        .map_err(|e| e.to_string())?;

    let text = to_pretty_json(&Envelope {
        tool: "qkdsim",
        version: VERSION,
        command: "simulate",
        seed,
        params: SimulateParams { n, s, m, input: input_kind, rule },
        result: SimulateResult { config: cfg, virtual_transcript, actual_transcript },
    });
    emit(&args.common, text)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- pgm-exp

#[derive(Serialize)]
struct PgmExpParams {
    n_copies: usize,
    q: f64,
    e: f64,
    m: usize,
    omega: f64,
    epsilon: f64,
    t_size: usize,
    mode: ModeArg,
    trials: Option<usize>,
}

#[derive(Serialize)]
struct PgmExpResult {
    empirical_mean: f64,
    std_error: Option<f64>,
    draws: usize,
    distinct_survivor_sets: usize,
    rank_deficient_draws: usize,
    bound_corrected: f64,
    bound_as_printed: f64,
    bound_vacuous: bool,
    bound_satisfied: Option<bool>,
    p_fail_bound: f64,
    fidelity_bound: f64,
}

#[allow(clippy::too_many_arguments)]
fn pgm_point(
    n_copies: usize,
    q: f64,
    e: f64,
    m: usize,
    omega: f64,
    epsilon: f64,
    t_size: usize,
    mode: ModeArg,
    trials: usize,
    seed: u64,
) -> Result<PgmExpResult, String> {
    let rho = rho_hat(q, e).map_err(|e| e.to_string())?;
    let typical = typical_projector(&rho, n_copies, omega).map_err(|e| e.to_string())?;
    let (true_x, t_set) = experiment_candidates(n_copies, e, epsilon, t_size, seed);
    let hashing_mode = match mode {
        ModeArg::Exhaustive => HashingMode::Exhaustive,
        ModeArg::MonteCarlo => HashingMode::MonteCarlo { trials },
    };
    let average = average_over_hashing(&true_x, &t_set, m, &rho, &typical, hashing_mode, seed)
        .map_err(|e| e.to_string())?;
    let bound_corrected = bound_avefail(n_copies, m, q, e, epsilon, omega, AvefailSign::Corrected);
    let bound_as_printed = bound_avefail(n_copies, m, q, e, epsilon, omega, AvefailSign::AsPrinted);
    // NaN bounds (invalid parameter regions) count as vacuous
    let bound_vacuous = !(bound_corrected.is_finite() && bound_corrected > 0.0);
    let slack = 3.0 * average.std_error.unwrap_or(0.0);
    let bound_satisfied =
        (!bound_vacuous).then_some(average.mean + slack >= bound_corrected);
    Ok(PgmExpResult {
        empirical_mean: average.mean,
        std_error: average.std_error,
        draws: average.draws,
        distinct_survivor_sets: average.distinct_survivor_sets,
        rank_deficient_draws: average.rank_deficient_draws,
        bound_corrected,
        bound_as_printed,
        bound_vacuous,
        bound_satisfied,
        p_fail_bound: p_fail_bound(n_copies, m, q, e, epsilon, omega),
        fidelity_bound: fidelity_bound(n_copies, m, q, e, epsilon, omega),
    })
}

fn cmd_pgm_exp(args: PgmExpArgs) -> Result<ExitCode, String> {
    let allowed = ["n-copies", "q", "e", "m", "omega", "epsilon", "t-size", "trials", "m-sweep"];
    let cfg = load_config(&args.common.config, &allowed)?;
    let n_copies = args.n_copies.or(config_usize(&cfg, "n-copies")?).unwrap_or(6);
    let q = args.q.or(config_f64(&cfg, "q")?).unwrap_or(0.25);
    let e = args.e.or(config_f64(&cfg, "e")?).unwrap_or(0.1);
    let m = args.m.or(config_usize(&cfg, "m")?).unwrap_or(2);
    let epsilon = args.epsilon.or(config_f64(&cfg, "epsilon")?).unwrap_or(e / 2.0);
    let omega = match args.omega.or(config_f64(&cfg, "omega")?) {
        Some(w) => w,
        None => tomega(e, epsilon, 0.05)
            .omega
            .ok_or("tomega radicand is negative; pass --omega explicitly")?,
    };
    let t_size = args.t_size.or(config_usize(&cfg, "t-size")?).unwrap_or(4);
    let mode = args.mode.unwrap_or(ModeArg::Exhaustive);
    let trials = args.trials.or(config_usize(&cfg, "trials")?).unwrap_or(2000);
    let seed = args.common.seed;
    range_check("q", q, 0.0, 0.5)?;
    range_check("e", e, 0.0, 0.5)?;

    let m_values: Vec<usize> = match &args.m_sweep {
        None => vec![m],
        Some(spec) => {
            let parts: Vec<&str> = spec.split(':').collect();
            let [lo, hi] = parts.as_slice() else {
                return Err(format!("m sweep {spec:?} must be lo:hi"));
            };
            let lo: usize = lo.parse().map_err(|_| "bad m sweep lo")?;
            let hi: usize = hi.parse().map_err(|_| "bad m sweep hi")?;
            (lo..=hi).collect()
        }
    };

    let mut results = Vec::new();
    for &m_point in &m_values {
        results.push((m_point, pgm_point(n_copies, q, e, m_point, omega, epsilon, t_size, mode, trials, seed)?));
    }
    let violated = results
        .iter()
        .any(|(_, r)| r.bound_satisfied == Some(false));

    let text = if args.common.format == Format::Csv {
        let mut out = String::from(
            "n_copies,q,e,m,omega,epsilon,empirical_mean,bound_corrected,bound_vacuous,rank_deficient_draws\n",
        );
        for (m_point, r) in &results {
            out.push_str(&format!(
                "{n_copies},{q},{e},{m_point},{omega},{epsilon},{},{},{},{}\n",
                r.empirical_mean, r.bound_corrected, r.bound_vacuous, r.rank_deficient_draws
            ));
        }
        out.trim_end().to_string()
    } else if results.len() == 1 {
        let (m_point, result) = results.pop_front_single();
        to_pretty_json(&Envelope {
            tool: "qkdsim",
            version: VERSION,
            command: "pgm-exp",
            seed,
            params: PgmExpParams {
                n_copies,
                q,
                e,
                m: m_point,
                omega,
                epsilon,
                t_size,
                mode,
                trials: matches!(mode, ModeArg::MonteCarlo).then_some(trials),
            },
            result,
        })
    } else {
        #[derive(Serialize)]
        struct SweepEntry {
            m: usize,
            result: PgmExpResult,
        }
        let entries: Vec<SweepEntry> = results
            .into_iter()
            .map(|(m, result)| SweepEntry { m, result })
            .collect();
        to_pretty_json(&Envelope {
            tool: "qkdsim",
            version: VERSION,
            command: "pgm-exp",
            seed,
            params: PgmExpParams {
                n_copies,
                q,
                e,
                m,
                omega,
                epsilon,
                t_size,
                mode,
                trials: matches!(mode, ModeArg::MonteCarlo).then_some(trials),
            },
            result: entries,
        })
    };
    emit(&args.common, text)?;
    Ok(if violated { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

trait PopFrontSingle<T> {
    fn pop_front_single(self) -> T;
}

impl<T> PopFrontSingle<T> for Vec<T> {
    fn pop_front_single(mut self) -> T {
        assert_eq!(self.len(), 1);
        self.remove(0)
    }
}

// ---------------------------------------------------------------- verify

#[derive(Serialize)]
struct VerifyParams {
    n: usize,
    s: usize,
    m: usize,
    trials: usize,
    states_per_trial: usize,
    cnot2_file: Option<String>,
    mismatched_flip_rules: bool,
    tv_tolerance: f64,
}

#[derive(Serialize)]
struct VerifyResult {
    checks: usize,
    max_tv: f64,
    pass: bool,
    sampling: qkdsim_core::protocol::SamplingReport,
    hashing_uniform: qkdsim_core::protocol::HashingSurvivalReport,
    hashing_full_rank: qkdsim_core::protocol::HashingSurvivalReport,
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, String> {
    let allowed = ["n", "s", "m", "trials", "states"];
    let cfg_map = load_config(&args.common.config, &allowed)?;
    let n = args.n.or(config_usize(&cfg_map, "n")?).unwrap_or(3);
    let s = args.s.or(config_usize(&cfg_map, "s")?).unwrap_or(2);
    let m = args.m.or(config_usize(&cfg_map, "m")?).unwrap_or(1);
    let trials = args.trials.or(config_usize(&cfg_map, "trials")?).unwrap_or(10);
    let states = args.states.or(config_usize(&cfg_map, "states")?).unwrap_or(5);
    let seed = args.common.seed;
    if n + s > 10 {
        return Err(format!("exact verification needs n + s <= 10, got {}", n + s));
    }
    let (virtual_rule, actual_rule) = if args.mismatched_flip_rules {
        (FlipRule::Zero, FlipRule::CosetLeader)
    } else {
        (FlipRule::CosetLeader, FlipRule::CosetLeader)
    };

    // an externally supplied CNOT(II) pins the hashing/PA rows for every trial
    let fixed_hashing = match &args.cnot2 {
        None => None,
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let circuit =
                qkdsim_core::cnot::CnotCircuit::from_text(&text).map_err(|e| e.to_string())?;
            if circuit.width() != n {
                return Err(format!("circuit width {} does not match --n {n}", circuit.width()));
            }
            let z = circuit.z_map();
            let x = circuit.x_map();
            let u = qkdsim_core::gf2::BitMatrix::from_rows(x.rows()[..m].to_vec(), n);
            let v = qkdsim_core::gf2::BitMatrix::from_rows(z.rows()[m..].to_vec(), n);
            Some((u, v))
        }
    };

    let mut max_tv = 0.0f64;
    let mut checks = 0usize;
    for trial in 0..trials {
        let mut cfg = ProtocolConfig::random(n, s, m, seed.wrapping_add(trial as u64))
            .map_err(|e| e.to_string())?;
        if let Some((u, v)) = &fixed_hashing {
            cfg.hash_matrix = u.clone();
            cfg.pa_matrix = v.clone();
        }
        for state_idx in 0..states {
            let stream = 100 + (trial * states + state_idx) as u64;
            let input = qkdsim_core::protocol::random_input_state(n + s, seed, stream)
                .map_err(|e| e.to_string())?;
            let mut rng = stream_rng(seed, 50_000 + stream);
            let bob = BitVec::random(s, &mut rng);
            let report = equivalence_check_with_rules(&cfg, &input, &bob, virtual_rule, actual_rule)
                .map_err(|e| e.to_string())?;
            max_tv = max_tv.max(report.max_tv);
            checks += 1;
        }
    }
    let pass = max_tv <= TV_TOLERANCE;
    let sampling = sampling_bound_check(200, 0.1, 0.05, 10_000, seed);
    let hashing_uniform = hashing_survival(n.max(4), m.min(n.max(4)), HashDrawMode::UniformIid, 20_000, seed);
    let hashing_full_rank = hashing_survival(n.max(4), m.min(n.max(4)), HashDrawMode::FullRank, 5_000, seed);

    let text = to_pretty_json(&Envelope {
        tool: "qkdsim",
        version: VERSION,
        command: "verify",
        seed,
        params: VerifyParams {
            n,
            s,
            m,
            trials,
            states_per_trial: states,
            cnot2_file: args.cnot2.as_ref().map(|p| p.display().to_string()),
            mismatched_flip_rules: args.mismatched_flip_rules,
            tv_tolerance: TV_TOLERANCE,
        },
        result: VerifyResult {
            checks,
            max_tv,
            pass,
            sampling,
            hashing_uniform,
            hashing_full_rank,
        },
    });
    emit(&args.common, text)?;
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

// ---------------------------------------------------------------- diagnose

#[derive(Serialize)]
struct DiagnoseParams {
    n_copies: usize,
    q: f64,
    e: f64,
    m: usize,
    omega: f64,
    epsilon: f64,
    t_size: usize,
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<ExitCode, String> {
    let allowed = ["n-copies", "q", "e", "m", "omega", "epsilon", "t-size"];
    let cfg = load_config(&args.common.config, &allowed)?;
    let n_copies = args.n_copies.or(config_usize(&cfg, "n-copies")?).unwrap_or(6);
    let q = args.q.or(config_f64(&cfg, "q")?).unwrap_or(0.25);
    let e = args.e.or(config_f64(&cfg, "e")?).unwrap_or(0.1);
    let m = args.m.or(config_usize(&cfg, "m")?).unwrap_or(2);
    let epsilon = args.epsilon.or(config_f64(&cfg, "epsilon")?).unwrap_or(e / 2.0);
    let omega = match args.omega.or(config_f64(&cfg, "omega")?) {
        Some(w) => w,
        None => tomega(e, epsilon, 0.05)
            .omega
            .ok_or("tomega radicand is negative; pass --omega explicitly")?,
    };
    let t_size = args.t_size.or(config_usize(&cfg, "t-size")?).unwrap_or(4);
    let seed = args.common.seed;
    range_check("q", q, 0.0, 0.5)?;
    range_check("e", e, 0.0, 0.5)?;

    let rho = rho_hat(q, e).map_err(|e| e.to_string())?;
    let typical = typical_projector(&rho, n_copies, omega).map_err(|e| e.to_string())?;
    let (_, t_set) = experiment_candidates(n_copies, e, epsilon, t_size, seed);
    let pgm = build_pgm(&t_set, &rho, &typical).map_err(|e| e.to_string())?;
    let report = appendix_diagnostics(&pgm, epsilon);
    let hard_fail = [
        report.sub_completeness,
        report.gamma_chain,
        report.gram_consistency,
        report.operator_bound,
    ].contains(&CheckStatus::Fail)
        || report.typicalerror == CheckStatus::Fail;

    let text = to_pretty_json(&Envelope {
        tool: "qkdsim",
        version: VERSION,
        command: "diagnose",
        seed,
        params: DiagnoseParams { n_copies, q, e, m, omega, epsilon, t_size },
        result: report,
    });
    emit(&args.common, text)?;
    Ok(if hard_fail { ExitCode::from(1) } else { ExitCode::SUCCESS })
}
