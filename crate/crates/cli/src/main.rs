//! `rdqc` — run the delegation protocols on circuit files, measure
//! reward gaps, and drive the self-test suite.

mod transcript;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::{json, Value};

use rdqc_core::circuit::{exact_output_dist, parse_circuit, Circuit, ParseError, SimError};
use rdqc_core::client::{
    run_decision, run_protocol1, run_protocol_sparse, Decision, ProtocolError, ProtocolReport,
    SparseParams,
};
use rdqc_core::meta::{
    amplify_gap, ip_to_rdqc, rdqc_to_ip, run_protocol2, run_protocol3, BitPolicy, IpBackedRdqc,
    IpOracle, MetaError, MetaTranscript, RdqcProtocol,
};
use rdqc_core::reward::{
    measure_reward_gap, AnalysisError, GapReport, RewardCurve, TrialOutcome, TrialRunner,
};
use rdqc_core::server::{StrategyConfig, StrategyError};
use rdqc_core::SeedTree;

use transcript::{persist_transcript, Party, TranscriptFile};

#[derive(Parser)]
#[command(name = "rdqc", version, about = "Rational delegation of quantum estimation, at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRun {
    /// Circuit description file.
    #[arg(long)]
    circuit: PathBuf,
    /// Master seed; the RDL_SEED environment variable overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Server behavior: honest | honest:SAMPLES | exact | fixed:V |
    /// perturbed:D | omit-heavy.
    #[arg(long, default_value = "honest")]
    strategy: String,
    /// Coin precision override (defaults to path bits + 64).
    #[arg(long)]
    m_coin: Option<u32>,
    /// Transcript output path (defaults to <command>-<seed>.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the output distribution of the first k qubits.
    Estimate {
        #[command(flatten)]
        common: CommonRun,
        #[arg(long)]
        k: u32,
        /// Accuracy parameter: the l1 error target is 1/f.
        #[arg(long, default_value_t = 10.0)]
        f: f64,
        /// Confidence parameter: failure probability e^-h.
        #[arg(long, default_value_t = 5.0)]
        h: f64,
    },
    /// Decide whether the first output qubit is 1 with probability >= 2/3
    /// or <= 1/3.
    Decide {
        #[command(flatten)]
        common: CommonRun,
        #[arg(long, default_value_t = 10.0)]
        f: f64,
        #[arg(long, default_value_t = 5.0)]
        h: f64,
    },
    /// Estimate a sparse full-width output distribution over a
    /// server-chosen outcome list.
    Sparse {
        #[command(flatten)]
        common: CommonRun,
        /// Sparsity bound t.
        #[arg(long)]
        t: u64,
        /// Accuracy as a fraction, e.g. 1/6.
        #[arg(long)]
        eps: String,
        /// Estimation failure probability.
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
    /// Tabulate the expected-reward parabola for one outcome.
    RewardCurve {
        #[arg(long)]
        q: f64,
        /// Path-bit exponent D.
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 2)]
        divisor: u64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Measure the reward gap between rational and adversarial play.
    Gap {
        #[command(subcommand)]
        mode: GapMode,
    },
    /// Run the claim-then-simulate wrappers and conversions once.
    Meta {
        #[command(subcommand)]
        protocol: MetaProtocol,
    },
    /// Validate a persisted transcript and summarize it.
    Transcript {
        #[arg(long)]
        path: PathBuf,
    },
    /// Run the acceptance suite and print one line per criterion.
    Selftest {
        #[arg(long, default_value_t = rdqc_core::acceptance::DEFAULT_SUITE_SEED)]
        seed: u64,
        /// Restrict to specific criterion ids (repeatable).
        #[arg(long)]
        only: Vec<u32>,
    },
}

#[derive(Args)]
struct OracleArgs {
    /// Declared completeness c'.
    #[arg(long)]
    c_prime: f64,
    /// Declared soundness s'.
    #[arg(long)]
    s_prime: f64,
    /// Branch-choice error rate of the rational server.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GapMode {
    /// Rational reports against a decision-flipping report on a promise
    /// instance.
    Decision {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        f: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-server wrapper with declared oracle constants.
    Protocol2 {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 2)]
        provers: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Single-server argument wrapper.
    Protocol3 {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Majority-amplified conversion pipeline.
    Amplified {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 61)]
        reps: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
}

#[derive(Subcommand)]
enum MetaProtocol {
    /// One multi-server wrapper run.
    Protocol2 {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 2)]
        provers: usize,
        #[arg(long, value_parser = parse_truth)]
        truth: Decision,
    },
    /// One single-server argument-wrapper run.
    Protocol3 {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, value_parser = parse_truth)]
        truth: Decision,
    },
    /// One reward-protocol run built from proof oracles.
    IpToRdqc {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, value_parser = parse_truth)]
        truth: Decision,
    },
    /// Acceptance statistics of the reward-to-proof conversion.
    RdqcToIp {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, value_parser = parse_truth)]
        truth: Decision,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Declared quantities of the majority-amplified protocol.
    Amplify {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 61)]
        reps: u64,
    },
}

fn parse_truth(s: &str) -> Result<Decision, String> {
    match s.to_ascii_lowercase().as_str() {
        "yes" => Ok(Decision::Yes),
        "no" => Ok(Decision::No),
        other => Err(format!("truth must be yes or no, got {other}")),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Contract(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Contract(_) => ExitCode::from(2),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Contract(msg) => write!(f, "contract violation: {msg}"),
        }
    }
}

macro_rules! contract_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Contract(e.to_string())
            }
        }
    )*};
}
contract_from!(ProtocolError, StrategyError, MetaError, AnalysisError, SimError);

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<transcript::TranscriptError> for CliError {
    fn from(e: transcript::TranscriptError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// RDL_SEED in the environment overrides any --seed flag.
fn resolve_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("RDL_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| CliError::Usage(format!("RDL_SEED must be a u64, got `{text}`"))),
        Err(_) => Ok(flag),
    }
}

fn load_circuit(path: &Path) -> Result<Circuit, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_circuit(&text)?)
}

fn parse_strategy(text: &str, schedule: Option<(f64, f64)>) -> Result<StrategyConfig, CliError> {
    let (kind, arg) = match text.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (text, None),
    };
    let number = |v: Option<&str>| -> Result<f64, CliError> {
        v.and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Usage(format!("strategy `{text}` needs a numeric argument")))
    };
    match kind {
        "honest" => match (arg, schedule) {
            (Some(_), _) => Ok(StrategyConfig::honest_with_samples(number(arg)? as u64)),
            (None, Some((f, h))) => Ok(StrategyConfig::honest(f, h)),
            // The sparse protocol derives its own sample schedule.
            (None, None) => Ok(StrategyConfig {
                kind: rdqc_core::server::StrategyKind::HonestSampling,
                samples: None,
                schedule: None,
            }),
        },
        "exact" => Ok(StrategyConfig::exact_rational()),
        "fixed" => Ok(StrategyConfig::fixed(number(arg)?)),
        "perturbed" => Ok(StrategyConfig::perturbed(number(arg)?)),
        "omit-heavy" => Ok(StrategyConfig::omit_heavy()),
        other => Err(CliError::Usage(format!("unknown strategy `{other}`"))),
    }
}

fn parse_fraction(text: &str) -> Result<(u64, u64), CliError> {
    let err = || CliError::Usage(format!("--eps must be a fraction like 1/6, got `{text}`"));
    let (num, den) = text.split_once('/').ok_or_else(err)?;
    Ok((
        num.trim().parse().map_err(|_| err())?,
        den.trim().parse().map_err(|_| err())?,
    ))
}

fn bits(z: u64, width: u32) -> String {
    format!("{z:0width$b}", width = width as usize)
}

fn write_protocol_transcript(
    command: &str,
    seed: u64,
    config: Value,
    report: &mut ProtocolReport,
    out: &Option<PathBuf>,
) -> Result<PathBuf, CliError> {
    let mut t = TranscriptFile::new(command, seed, config);
    report.transcript_ref = Some(t.reference());
    let width = if report.params.k == report.params.n {
        report.params.n
    } else {
        report.params.k
    };
    t.push_event(
        1,
        Party::Server,
        json!({
            "outcomes": report.records.iter().map(|r| bits(r.z, width)).collect::<Vec<_>>(),
            "reports": report.records.iter().map(|r| r.y).collect::<Vec<_>>(),
        }),
    );
    t.push_event(
        2,
        Party::Client,
        json!({
            "coins": report.records.iter().map(|r| r.b).collect::<Vec<_>>(),
            "rewards": report.records.iter().map(|r| r.reward).collect::<Vec<_>>(),
        }),
    );
    t.settlement = Some(transcript::Settlement {
        rewards: json!(report
            .records
            .iter()
            .map(|r| json!({"z": bits(r.z, width), "reward": r.reward}))
            .collect::<Vec<_>>()),
        total: report.total_reward,
    });
    t.summary = serde_json::to_value(&report).expect("report serializes");
    let path = out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.jsonl", t.reference())));
    persist_transcript(&path, &t)?;
    Ok(path)
}

fn write_meta_transcript(
    command: &str,
    seed: u64,
    config: Value,
    meta: &MetaTranscript,
    out: &Option<PathBuf>,
) -> Result<PathBuf, CliError> {
    let mut t = TranscriptFile::new(command, seed, config);
    t.push_event(1, Party::Server, json!({"claim_bit": meta.claim_bit}));
    t.push_event(
        2,
        Party::Client,
        json!({
            "branch": meta.branch,
            "accepted": meta.accepted,
            "rewards": meta.rewards,
        }),
    );
    t.settlement = Some(transcript::Settlement {
        rewards: json!(meta.rewards),
        total: meta.total_reward(),
    });
    t.summary = serde_json::to_value(meta).expect("transcript serializes");
    let path = out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.jsonl", t.reference())));
    persist_transcript(&path, &t)?;
    Ok(path)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    fs::write(path, format!("{}\n", serde_json::to_string_pretty(value).unwrap()))
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn print_gap(report: &GapReport) {
    println!("rational expectation: {:.6}", report.rational_expectation);
    match (report.best_incorrect_expectation, report.gap) {
        (Some(best), Some(gap)) => {
            println!("best flipping strategy: {best:.6}");
            println!(
                "reward gap: {gap:.6} (+- {:.6} at 3 sigma, {} trials)",
                report.confidence, report.trials
            );
        }
        _ => println!("no supplied strategy flipped the client's answer"),
    }
    for s in &report.strategies {
        println!(
            "  strategy `{}`: mean reward {:.6}, incorrect fraction {:.4}{}",
            s.name,
            s.mean_reward,
            s.incorrect_fraction,
            if s.flipped { " (flips)" } else { "" }
        );
    }
}

fn oracle_pair(args: &OracleArgs, provers: usize) -> Result<(IpOracle, u64), CliError> {
    let oracle = IpOracle::new(args.c_prime, args.s_prime, provers, 1)?;
    let seed = resolve_seed(args.seed)?;
    Ok((oracle, seed))
}

fn gap_report_out(report: &GapReport, out: &Option<PathBuf>) -> Result<(), CliError> {
    print_gap(report);
    if let Some(path) = out {
        write_json(path, &serde_json::to_value(report).unwrap())?;
        println!("gap report written to {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Estimate { common, k, f, h } => {
            let seed = resolve_seed(common.seed)?;
            let circuit = load_circuit(&common.circuit)?;
            let strategy = parse_strategy(&common.strategy, Some((f, h)))?;
            let tree = SeedTree::new(seed);
            let mut report = run_protocol1(&circuit, k, &strategy, common.m_coin, &tree)?;
            let config = json!({
                "circuit": common.circuit.display().to_string(),
                "k": k, "f": f, "h": h,
                "strategy": strategy,
                "m_coin": report.params.m_coin,
            });
            let path = write_protocol_transcript("estimate", seed, config, &mut report, &common.out)?;
            let q = exact_output_dist(&circuit, k)?;
            let mut l1 = 0.0;
            println!("outcome  estimate  exact");
            for e in &report.estimates {
                let truth = q.probs[e.z as usize];
                l1 += (e.p - truth).abs();
                println!("{}  {:.6}  {:.6}", bits(e.z, k), e.p, truth);
            }
            println!("l1 distance to oracle: {l1:.6}");
            println!("total reward: {:.6}", report.total_reward);
            println!("transcript written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Decide { common, f, h } => {
            let seed = resolve_seed(common.seed)?;
            let circuit = load_circuit(&common.circuit)?;
            let strategy = parse_strategy(&common.strategy, Some((f, h)))?;
            let tree = SeedTree::new(seed);
            let mut report = run_decision(&circuit, &strategy, f, common.m_coin, &tree)?;
            let decision = report.decision.expect("decision wrapper decides");
            let config = json!({
                "circuit": common.circuit.display().to_string(),
                "f": f, "h": h,
                "strategy": strategy,
            });
            let path = write_protocol_transcript("decide", seed, config, &mut report, &common.out)?;
            let eta = 2.0 * report.records[0].y;
            println!(
                "eta = {eta:.6} (thresholds: YES >= {:.6}, NO <= {:.6})",
                2.0 / 3.0 - 1.0 / f,
                1.0 / 3.0 + 1.0 / f
            );
            println!("decision: {}", if decision == Decision::Yes { "YES" } else { "NO" });
            println!("transcript written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sparse {
            common,
            t,
            eps,
            delta,
        } => {
            let seed = resolve_seed(common.seed)?;
            let circuit = load_circuit(&common.circuit)?;
            let (eps_num, eps_den) = parse_fraction(&eps)?;
            let sp = SparseParams::from_fraction(t, eps_num, eps_den, delta)?;
            let strategy = parse_strategy(&common.strategy, None)?;
            let tree = SeedTree::new(seed);
            let mut report = run_protocol_sparse(&circuit, &sp, &strategy, common.m_coin, &tree)?;
            let config = json!({
                "circuit": common.circuit.display().to_string(),
                "t": t, "eps": eps, "delta": delta,
                "list_size": sp.list_size,
                "strategy": strategy,
            });
            let path = write_protocol_transcript("sparse", seed, config, &mut report, &common.out)?;
            let q = exact_output_dist(&circuit, circuit.n)?;
            let mut l1 = 0.0;
            let mut listed = vec![false; q.probs.len()];
            println!("listed outcome  estimate  exact");
            for e in &report.estimates {
                let truth = q.probs[e.z as usize];
                listed[e.z as usize] = true;
                l1 += (e.p - truth).abs();
                if e.p > 1e-9 || truth > 1e-9 {
                    println!("{}  {:.6}  {:.6}", bits(e.z, circuit.n), e.p, truth);
                }
            }
            for (z, &was_listed) in listed.iter().enumerate() {
                if !was_listed {
                    l1 += q.probs[z];
                }
            }
            println!("l1 distance to oracle: {l1:.6} (12*eps = {:.6})", 12.0 * sp.eps);
            println!("total reward: {:.6}", report.total_reward);
            println!("transcript written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::RewardCurve {
            q,
            d,
            divisor,
            step,
            out,
            csv,
        } => {
            let curve = RewardCurve {
                d_exponent: d,
                divisor,
                q,
            };
            let rows = curve.table(step);
            // Evaluate once up front so domain violations surface.
            let max = curve.expected(curve.vertex())?;
            println!("vertex at y = {:.6}, expected reward {max:.12}", curve.vertex());
            if let Some(path) = &out {
                let value = json!({
                    "q": q, "d_exponent": d, "divisor": divisor,
                    "vertex": curve.vertex(),
                    "max_value": curve.max_value(),
                    "rows": rows.iter().map(|(y, e)| json!({"y": y, "expected": e})).collect::<Vec<_>>(),
                });
                write_json(path, &value)?;
                println!("curve written to {}", path.display());
            }
            if let Some(path) = &csv {
                let mut text = String::from("y,expected_reward\n");
                for (y, e) in &rows {
                    text.push_str(&format!("{y},{e}\n"));
                }
                fs::write(path, text)
                    .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
                println!("csv written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gap { mode } => {
            run_gap(mode)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Meta { protocol } => {
            run_meta(protocol)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Transcript { path } => {
            let t = transcript::load_transcript(&path)?;
            println!(
                "valid transcript: command `{}`, seed {}, schema v{}",
                t.header.command, t.header.seed, t.header.schema_version
            );
            println!("config: {}", t.header.config);
            for event in &t.events {
                println!("round {} ({:?}): {}", event.round, event.from, event.payload);
            }
            if let Some(settlement) = &t.settlement {
                println!("settlement total: {:.6}", settlement.total);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { seed, only } => {
            let reports = rdqc_core::acceptance::run_all(seed);
            let mut all_passed = true;
            for report in &reports {
                if only.is_empty() || only.contains(&report.id) {
                    println!("{report}");
                    all_passed &= report.passed;
                }
            }
            if all_passed {
                println!("selftest: all criteria passed");
                Ok(ExitCode::SUCCESS)
            } else {
                Err(CliError::Contract("selftest criteria failed".into()))
            }
        }
    }
}

fn run_gap(mode: GapMode) -> Result<(), CliError> {
    match mode {
        GapMode::Decision {
            circuit,
            f,
            trials,
            seed,
            out,
        } => {
            let seed = resolve_seed(seed)?;
            let c = load_circuit(&circuit)?;
            let q1 = exact_output_dist(&c, 1)?.probs[1];
            let truth = if q1 >= 2.0 / 3.0 {
                Decision::Yes
            } else if q1 <= 1.0 / 3.0 {
                Decision::No
            } else {
                return Err(CliError::Usage(format!(
                    "circuit is not a promise instance: q_1 = {q1:.4}"
                )));
            };
            // A report that lands eta on the wrong side of the
            // thresholds, flipping the decision deterministically.
            let flip_y = match truth {
                Decision::Yes => (1.0 / 3.0 + 1.0 / f) / 2.0,
                Decision::No => (2.0 / 3.0 - 1.0 / f) / 2.0,
            };
            let decision_runner = |strategy: StrategyConfig| -> TrialRunner<'_> {
                let c = &c;
                Box::new(move |rng| {
                    let per_trial = rng.gen::<u64>();
                    let report =
                        run_decision(c, &strategy, f, None, &SeedTree::new(per_trial))
                            .expect("valid decision run");
                    TrialOutcome {
                        reward: report.total_reward,
                        correct: report.decision == Some(truth),
                    }
                })
            };
            let report = measure_reward_gap(
                decision_runner(StrategyConfig::exact_rational()),
                vec![(
                    format!("fixed report y = {flip_y:.4}"),
                    decision_runner(StrategyConfig::fixed(flip_y)),
                )],
                trials,
                &SeedTree::new(seed).child("gap-decision"),
            );
            gap_report_out(&report, &out)
        }
        GapMode::Protocol2 {
            oracle,
            provers,
            trials,
        } => {
            let (ip, seed) = oracle_pair(&oracle, provers)?;
            let rho = oracle.rho;
            let runner = |policy: BitPolicy| -> TrialRunner<'_> {
                Box::new(move |rng| {
                    let t = run_protocol2(&ip, &ip, Decision::Yes, &policy, rng);
                    TrialOutcome {
                        reward: t.total_reward(),
                        correct: t.conclusion == Decision::Yes,
                    }
                })
            };
            let report = measure_reward_gap(
                runner(BitPolicy::Rational { error_rate: rho }),
                vec![("forced wrong bit".into(), runner(BitPolicy::Forced(false)))],
                trials,
                &SeedTree::new(seed).child("gap-p2"),
            );
            gap_report_out(&report, &oracle.out)
        }
        GapMode::Protocol3 { oracle, trials } => {
            let (ip, seed) = oracle_pair(&oracle, 1)?;
            let rho = oracle.rho;
            let runner = |policy: BitPolicy| -> TrialRunner<'_> {
                Box::new(move |rng| {
                    let t = run_protocol3(&ip, Decision::Yes, &policy, rng)
                        .expect("single-prover oracle");
                    TrialOutcome {
                        reward: t.total_reward(),
                        correct: t.conclusion == Decision::Yes,
                    }
                })
            };
            let report = measure_reward_gap(
                runner(BitPolicy::Rational { error_rate: rho }),
                vec![("forced wrong bit".into(), runner(BitPolicy::Forced(false)))],
                trials,
                &SeedTree::new(seed).child("gap-p3"),
            );
            gap_report_out(&report, &oracle.out)
        }
        GapMode::Amplified {
            oracle,
            reps,
            trials,
        } => {
            let (ip, seed) = oracle_pair(&oracle, 1)?;
            let base = IpBackedRdqc::new(ip, ip, oracle.rho)?;
            let amplified = amplify_gap(&base, reps)?;
            println!(
                "declared amplified completeness {:.4}, incorrect bound {:.4}",
                amplified.yes_expectation(),
                amplified.incorrect_expectation()
            );
            let runner = |policy: BitPolicy| -> TrialRunner<'_> {
                let amplified = &amplified;
                Box::new(move |rng| {
                    let o = amplified.run(Decision::Yes, &policy, rng);
                    TrialOutcome {
                        reward: o.reward,
                        correct: o.claim_bit == 1,
                    }
                })
            };
            let report = measure_reward_gap(
                runner(BitPolicy::rational()),
                vec![("forced wrong bit".into(), runner(BitPolicy::Forced(false)))],
                trials,
                &SeedTree::new(seed).child("gap-amplified"),
            );
            gap_report_out(&report, &oracle.out)
        }
    }
}

fn run_meta(protocol: MetaProtocol) -> Result<(), CliError> {
    match protocol {
        MetaProtocol::Protocol2 {
            oracle,
            provers,
            truth,
        } => {
            let (ip, seed) = oracle_pair(&oracle, provers)?;
            let mut rng = SeedTree::new(seed).child("protocol2").rng();
            let policy = BitPolicy::Rational {
                error_rate: oracle.rho,
            };
            let t = run_protocol2(&ip, &ip, truth, &policy, &mut rng);
            let config = json!({"oracle": ip, "truth": truth, "rho": oracle.rho});
            let path = write_meta_transcript("protocol2", seed, config, &t, &oracle.out)?;
            println!(
                "claim {} -> {:?} branch, accepted = {}, total reward {:.3}",
                t.claim_bit,
                t.branch,
                t.accepted,
                t.total_reward()
            );
            println!("transcript written to {}", path.display());
            Ok(())
        }
        MetaProtocol::Protocol3 { oracle, truth } => {
            let (ip, seed) = oracle_pair(&oracle, 1)?;
            let mut rng = SeedTree::new(seed).child("protocol3").rng();
            let policy = BitPolicy::Rational {
                error_rate: oracle.rho,
            };
            let t = run_protocol3(&ip, truth, &policy, &mut rng)?;
            let config = json!({"oracle": ip, "truth": truth, "rho": oracle.rho});
            let path = write_meta_transcript("protocol3", seed, config, &t, &oracle.out)?;
            println!(
                "claim {} -> {:?} branch, accepted = {}, reward {:.3}",
                t.claim_bit,
                t.branch,
                t.accepted,
                t.total_reward()
            );
            println!("transcript written to {}", path.display());
            Ok(())
        }
        MetaProtocol::IpToRdqc { oracle, truth } => {
            let (ip, seed) = oracle_pair(&oracle, 1)?;
            let protocol = IpBackedRdqc::new(ip, ip, oracle.rho)?;
            println!(
                "incorrectness margin: {:.6} (= c'(1 - rho) - s')",
                rdqc_core::meta::incorrectness_margin(&protocol)
            );
            let mut rng = SeedTree::new(seed).child("ip-to-rdqc").rng();
            let policy = BitPolicy::Rational {
                error_rate: oracle.rho,
            };
            let t = ip_to_rdqc(&ip, &ip, truth, &policy, &mut rng)?;
            let config = json!({"oracle": ip, "truth": truth, "rho": oracle.rho});
            let path = write_meta_transcript("ip-to-rdqc", seed, config, &t, &oracle.out)?;
            println!(
                "claim {} -> accepted = {}, reward {:.3}",
                t.claim_bit,
                t.accepted,
                t.total_reward()
            );
            println!("transcript written to {}", path.display());
            Ok(())
        }
        MetaProtocol::RdqcToIp {
            oracle,
            truth,
            trials,
        } => {
            let (ip, seed) = oracle_pair(&oracle, 1)?;
            let base = IpBackedRdqc::new(ip, ip, oracle.rho)?;
            let tree = SeedTree::new(seed).child("rdqc-to-ip");
            let policy = BitPolicy::Rational {
                error_rate: oracle.rho,
            };
            let mut accepts = 0u64;
            for i in 0..trials {
                let mut rng = tree.child_idx(i).rng();
                if rdqc_to_ip(&base, truth, &policy, &mut rng)? {
                    accepts += 1;
                }
            }
            let rate = accepts as f64 / trials as f64;
            println!(
                "verifier accepted {rate:.4} of {trials} runs (declared E[R|b=1]/c = {:.4} on YES)",
                base.yes_expectation() / base.reward_bound()
            );
            if let Some(path) = &oracle.out {
                write_json(
                    path,
                    &json!({"acceptance_rate": rate, "trials": trials, "truth": truth}),
                )?;
            }
            Ok(())
        }
        MetaProtocol::Amplify { oracle, reps } => {
            let (ip, seed) = oracle_pair(&oracle, 1)?;
            let base = IpBackedRdqc::new(ip, ip, oracle.rho)?;
            let amplified = amplify_gap(&base, reps)?;
            println!(
                "base margin {:.4} -> amplified completeness {:.6}, incorrect bound {:.6}, margin {:.6}",
                rdqc_core::meta::incorrectness_margin(&base),
                amplified.yes_expectation(),
                amplified.incorrect_expectation(),
                rdqc_core::meta::incorrectness_margin(&amplified),
            );
            let mut rng = SeedTree::new(seed).child("amplify").rng();
            let outcome = amplified.run(Decision::Yes, &BitPolicy::rational(), &mut rng);
            println!(
                "sample run on a YES instance: claim {}, reward {:.0}",
                outcome.claim_bit, outcome.reward
            );
            if let Some(path) = &oracle.out {
                write_json(
                    path,
                    &json!({
                        "reps": reps,
                        "amplified_completeness": amplified.yes_expectation(),
                        "amplified_incorrect": amplified.incorrect_expectation(),
                    }),
                )?;
            }
            Ok(())
        }
    }
}
