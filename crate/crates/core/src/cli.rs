//! The `spikegraph` command line.
//!
//! Exit codes: 0 pass, 1 a check failed, 2 usage or configuration error,
//! 3 inconclusive (not enough replicas to decide).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    self, check_lemma_ratio_bounds, check_theorem_gap, chernoff_check, chernoff_grid,
    chernoff_tails, constants_checks, domination_check, failure_bounds, overall, separation_sweep,
    Budget, CheckReport, Dependence, EventSetup, FailureBounds, PairClass, Verdict,
};
use crate::estimator::{
    estimate_graph, whole_blocks, BoundsSource, Decision, EstimateOptions, EstimationReport,
};
use crate::io::{self, IoError, RunConfig, SpikeFormat};
use crate::model::{
    constants_of, thresholds, DerivedConstants, Network, NetworkSpec, NeuronId, RateFunction,
    Regime,
};
use crate::rng::derive_seed;
use crate::simulator::{simulate, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitStatus {
    Pass = 0,
    CheckFailed = 1,
    Usage = 2,
    Inconclusive = 3,
}

impl From<Verdict> for ExitStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass | Verdict::PassWithinTolerance => ExitStatus::Pass,
            Verdict::Fail => ExitStatus::CheckFailed,
            Verdict::Inconclusive => ExitStatus::Inconclusive,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "spikegraph",
    version,
    about = "Simulate spiking networks and recover their synaptic graph"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Primary output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Slot length; defaults to delta_star.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Allow a slot length above delta_star (heuristic regime).
    #[arg(long, global = true)]
    pub heuristic: bool,
    /// Monte Carlo replicas or draws.
    #[arg(long, global = true)]
    pub replicas: Option<u64>,
    /// Where to write the run manifest (default: next to --out, else stderr).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured network and write its spikes.
    Simulate(SimulateArgs),
    /// Estimate the synaptic graph from a spike file.
    Estimate(EstimateArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Simulate several seeds and score the recovered graph against the config.
    RecoverGraph(RecoverArgs),
    /// Print the derived constants of a configuration.
    Constants,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Overrides the config horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output format (default: from the extension of --out).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Also write the candidate log to this CSV file.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Spk1,
}

impl From<FormatArg> for SpikeFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => SpikeFormat::Csv,
            FormatArg::Spk1 => SpikeFormat::Spk1,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Spike file (CSV or SPK1).
    pub spikes: PathBuf,
    /// Observation horizon; needed for CSV input, which stores none.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Asserted lower bound on all rates.
    #[arg(long, requires_all = ["beta", "rate_gap", "in_degree"])]
    pub alpha: Option<f64>,
    /// Asserted upper bound on all rates.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Asserted lower bound on the rate change caused by one input.
    #[arg(long)]
    pub rate_gap: Option<f64>,
    /// Asserted upper bound on the in-degree.
    #[arg(long)]
    pub in_degree: Option<usize>,
    /// Also write the pair table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    TheoremGap,
    LemmaRatios,
    Chernoff,
    Domination,
    Thresholds,
    Constants,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Target standard error of the gap for `theorem-gap`, as a fraction of
    /// xi1 (used when --replicas is absent).
    #[arg(long, default_value_t = 1.0 / 6.0)]
    pub target_fraction: f64,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Overrides the config horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of seeded trajectories (default from the config, else 20).
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Slot length as a multiple of delta_star (used without --delta).
    #[arg(long)]
    pub delta_multiple: Option<f64>,
    /// Exit with status 1 unless at least this fraction of seeds recovers
    /// the graph exactly.
    #[arg(long)]
    pub require: Option<f64>,
}

/// Record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub constants: Option<ConstantsEcho>,
    pub exit_code: i32,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEcho {
    pub alpha: f64,
    pub beta: f64,
    pub delta: Option<f64>,
    pub d: usize,
    pub s: f64,
    pub tau: Option<f64>,
    pub delta_star: Option<f64>,
    pub omega: Option<f64>,
}

impl From<&DerivedConstants> for ConstantsEcho {
    fn from(c: &DerivedConstants) -> Self {
        Self {
            alpha: c.alpha,
            beta: c.beta,
            delta: c.delta,
            d: c.d,
            s: c.s,
            tau: c.tau,
            delta_star: c.delta_star,
            omega: c.omega,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Sim(#[from] crate::simulator::SimError),
    #[error(transparent)]
    Estimate(#[from] crate::estimator::EstimateError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// What a subcommand hands back to the driver.
struct Outcome {
    status: ExitStatus,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    constants: Option<DerivedConstants>,
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    run(&args)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage as i32
            } else {
                0
            };
        }
    };
    if let Some(jobs) = cli.common.jobs {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    let start = Instant::now();
    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Verify(_) => "verify",
        Command::RecoverGraph(_) => "recover-graph",
        Command::Constants => "constants",
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cli.common, a),
        Command::Estimate(a) => cmd_estimate(&cli.common, a),
        Command::Verify(a) => cmd_verify(&cli.common, a),
        Command::RecoverGraph(a) => cmd_recover_graph(&cli.common, a),
        Command::Constants => cmd_constants(&cli.common),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            Outcome {
                status: ExitStatus::Usage,
                outputs: Vec::new(),
                seed: cli.common.seed,
                constants: None,
            }
        }
    };
    let manifest = RunManifest {
        subcommand: name.into(),
        config: cli.common.config.clone(),
        seed: outcome.seed,
        outputs: outcome.outputs,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        constants: outcome.constants.as_ref().map(ConstantsEcho::from),
        exit_code: outcome.status as i32,
        args: args.to_vec(),
    };
    let target = cli
        .common
        .manifest
        .clone()
        .or_else(|| cli.common.out.as_ref().map(|o| manifest_path(o)));
    match target {
        Some(path) => {
            if let Err(e) = io::write_json(&manifest, &path) {
                eprintln!("error: cannot write manifest: {e}");
            }
        }
        None => eprintln!(
            "{}",
            serde_json::to_string(&manifest).expect("manifest serializes")
        ),
    }
    outcome.status as i32
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn load_config(common: &Common) -> Result<Option<RunConfig>, CliError> {
    common
        .config
        .as_deref()
        .map(io::read_config)
        .transpose()
        .map_err(Into::into)
}

fn require_config(common: &Common) -> Result<RunConfig, CliError> {
    load_config(common)?.ok_or_else(|| usage("--config is required"))
}

fn require_network(cfg: &RunConfig) -> Result<&Network, CliError> {
    cfg.network
        .as_ref()
        .ok_or_else(|| usage("the config declares no network (`neurons`)"))
}

/// Writes `value` as pretty JSON to `--out`, or prints it.
fn emit_json<T: Serialize>(common: &Common, value: &T) -> Result<Vec<PathBuf>, CliError> {
    match &common.out {
        Some(path) => {
            io::write_json(value, path)?;
            Ok(vec![path.clone()])
        }
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(value).map_err(IoError::from)?
            );
            Ok(Vec::new())
        }
    }
}

fn cmd_simulate(common: &Common, args: &SimulateArgs) -> Result<Outcome, CliError> {
    let cfg = require_config(common)?;
    let net = require_network(&cfg)?;
    let out = common
        .out
        .clone()
        .ok_or_else(|| usage("simulate needs --out"))?;
    let mut sim = cfg.sim.clone();
    if let Some(seed) = common.seed {
        sim.seed = seed;
    }
    if let Some(h) = args.horizon {
        sim.horizon = h;
    }
    if args.candidates.is_some() {
        sim.log_candidates = true;
    }
    let result = simulate(net, &sim)?;
    let format = args
        .format
        .map(SpikeFormat::from)
        .unwrap_or_else(|| SpikeFormat::from_path(&out));
    io::write_spikes(&result.recording, &out, format)?;
    let mut outputs = vec![out];
    if let (Some(path), Some(log)) = (&args.candidates, &result.log) {
        io::write_candidate_log(log, path)?;
        outputs.push(path.clone());
    } else if let (None, Some(log)) = (&args.candidates, &result.log) {
        // Logging requested in the config: write next to the spikes.
        let mut p = outputs[0].as_os_str().to_owned();
        p.push(".candidates.csv");
        let p = PathBuf::from(p);
        io::write_candidate_log(log, &p)?;
        outputs.push(p);
    }
    eprintln!(
        "simulated {} candidates, {} spikes, horizon {}",
        result.stats.candidates, result.stats.accepted, sim.horizon
    );
    Ok(Outcome {
        status: ExitStatus::Pass,
        outputs,
        seed: Some(sim.seed),
        constants: cfg.constants.and_then(Result::ok),
    })
}

fn cmd_estimate(common: &Common, args: &EstimateArgs) -> Result<Outcome, CliError> {
    let cfg = load_config(common)?;
    let (bounds, source) = match args.alpha {
        Some(alpha) => {
            let beta = args.beta.expect("clap requires beta");
            let gap = args.rate_gap.expect("clap requires rate-gap");
            let d = args.in_degree.expect("clap requires in-degree");
            (
                DerivedConstants::from_bounds(alpha, beta, Some(gap), d)?,
                BoundsSource::UserAsserted,
            )
        }
        None => {
            let cfg = cfg
                .as_ref()
                .ok_or(crate::estimator::EstimateError::NoBoundsProvided)?;
            let source = if cfg.bounds.is_some() {
                BoundsSource::UserAsserted
            } else {
                BoundsSource::Derived
            };
            let b = cfg
                .estimation_bounds()
                .ok_or(crate::estimator::EstimateError::NoBoundsProvided)??;
            (b, source)
        }
    };
    let mut rec = io::read_spikes(&args.spikes, None)?;
    if let Some(h) = args.horizon {
        rec = rec.with_horizon(h)?;
    }
    let settings = cfg.as_ref().map(|c| c.estimate.clone()).unwrap_or_default();
    let opts = EstimateOptions {
        delta: common.delta.or(settings.delta_override),
        heuristic: common.heuristic || settings.heuristic,
        bounds_source: source,
    };
    let report = estimate_graph(&rec, &bounds, &opts)?;
    let mut outputs = emit_json(common, &report)?;
    if let Some(path) = &args.table {
        write_pair_table(&report, path)?;
        outputs.push(path.clone());
    }
    let s = report.header.summary;
    eprintln!(
        "{:?} regime: {} excitatory, {} inhibitory, {} absent, {} insufficient",
        report.header.regime, s.excitatory, s.inhibitory, s.absent, s.insufficient_data
    );
    Ok(Outcome {
        status: ExitStatus::Pass,
        outputs,
        seed: rec.seed,
        constants: Some(bounds),
    })
}

/// CSV table with one row per ordered pair.
pub fn write_pair_table(report: &EstimationReport, path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    let wrap = |e: csv::Error| IoError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record([
        "from",
        "to",
        "R",
        "G",
        "diff",
        "xi1",
        "xi2",
        "decision",
        "sufficient",
        "m_n",
        "t_n",
        "n",
        "delta_used",
        "certified",
    ])
    .map_err(wrap)?;
    for p in &report.pairs {
        let decision = serde_json::to_value(p.decision).expect("enum serializes");
        w.write_record([
            p.from.to_string(),
            p.to.to_string(),
            p.r.to_string(),
            p.g.to_string(),
            p.diff.to_string(),
            p.xi1.to_string(),
            p.xi2.to_string(),
            decision.as_str().unwrap_or_default().to_string(),
            p.sufficient.to_string(),
            p.m_n.to_string(),
            p.t_n.to_string(),
            p.n.to_string(),
            p.delta_used.to_string(),
            p.certified.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// The three two-neuron networks of the gap check, each with the pair to
/// test: no edge, an excitatory edge and an inhibitory edge onto neuron 1.
pub fn reference_networks() -> Vec<(&'static str, Network, NeuronId, NeuronId)> {
    let rate = RateFunction::clipped_affine(0.75, 0.25, 0.75, 1.0);
    let null = NetworkSpec::new(vec![1, 2])
        .with_edge(1, 2, 1.0)
        .with_uniform_rate(rate.clone());
    let exc = NetworkSpec::new(vec![1, 2])
        .with_edge(2, 1, 1.0)
        .with_uniform_rate(rate.clone());
    // Neuron 1 rests at the ceiling so that an inhibitory input lowers it.
    let inh = NetworkSpec::new(vec![1, 2])
        .with_edge(2, 1, -1.0)
        .with_rate(1, RateFunction::clipped_affine(1.0, 0.25, 0.75, 1.0))
        .with_rate(2, rate);
    [("null", null), ("excitatory", exc), ("inhibitory", inh)]
        .into_iter()
        .map(|(name, spec)| (name, Network::new(spec).expect("reference network"), 2, 1))
        .collect()
}

/// Runs the gap check on one network and pair at `delta` (default
/// `delta_star`).
pub fn theorem_gap_report(
    net: &Network,
    from: NeuronId,
    to: NeuronId,
    delta: Option<f64>,
    budget_replicas: Option<u64>,
    target_fraction: f64,
    seed: u64,
) -> Result<CheckReport, CliError> {
    let c = constants_of(net)?;
    let ds = c
        .delta_star
        .ok_or(crate::model::ModelError::NoEdgesDeclared)?;
    let delta = delta.unwrap_or(ds);
    let th = thresholds(&c, delta, false)?;
    let budget = match budget_replicas {
        Some(n) => Budget::Replicas(n),
        None => Budget::TargetSe {
            se: th.xi1 * target_fraction,
            max_windows: 400_000_000,
        },
    };
    let setup = EventSetup::at_rest(net, from, to, delta);
    let (report, _) = check_theorem_gap(net, &setup, budget, seed)?;
    Ok(report)
}

/// A network to check, with the single pair to test if there is one.
type NamedNetwork = (String, Network, Option<(NeuronId, NeuronId)>);

fn cmd_verify(common: &Common, args: &VerifyArgs) -> Result<Outcome, CliError> {
    let cfg = load_config(common)?;
    let seed = common
        .seed
        .or(cfg.as_ref().map(|c| c.sim.seed))
        .unwrap_or(0);
    let constants = match &cfg {
        Some(c) => Some(
            c.estimation_bounds()
                .ok_or_else(|| usage("the config yields no constants"))??,
        ),
        None => None,
    };
    let reference = || DerivedConstants::from_bounds(0.75, 1.0, Some(0.25), 1);
    let networks: Vec<NamedNetwork> = match &cfg {
        Some(c) => match &c.network {
            Some(n) => vec![("config".into(), n.clone(), None)],
            None => Vec::new(),
        },
        None => reference_networks()
            .into_iter()
            .map(|(name, n, j, i)| (name.to_string(), n, Some((j, i))))
            .collect(),
    };
    let draws = common.replicas.unwrap_or(100_000);
    let mut reports: Vec<CheckReport> = Vec::new();
    match args.suite {
        Suite::Constants => {
            let c = match &constants {
                Some(c) => c.clone(),
                None => reference()?,
            };
            reports.extend(constants_checks(&c)?);
        }
        Suite::Thresholds => {
            reports.push(separation_sweep(1000, seed));
            let c = match &constants {
                Some(c) => c.clone(),
                None => reference()?,
            };
            let gap = c.gap_params()?;
            let delta = common.delta.unwrap_or(gap.delta_star());
            let th = thresholds(&c, delta, false)?;
            let tau = gap.tau;
            let inputs = json!({ "delta": delta, "xi1": th.xi1, "xi2": th.xi2 });
            for (name, slack) in [
                ("thresholds inhibitory separation", th.inhibitory_slack(tau)),
                ("thresholds excitatory separation", th.excitatory_slack(tau)),
                ("thresholds positive", th.xi1.min(th.xi2)),
            ] {
                reports.push(CheckReport::exact(
                    name,
                    inputs.clone(),
                    slack,
                    0.0,
                    slack + 1e-12,
                ));
            }
        }
        Suite::Chernoff => {
            for (n, p, gamma) in chernoff_grid() {
                let t = chernoff_tails(n, p, gamma);
                let inputs = json!({ "n": n, "p": p, "gamma": gamma });
                for (side, exact, bound) in [
                    ("lower", t.lower_exact, t.lower_bound),
                    ("upper", t.upper_exact, t.upper_bound),
                ] {
                    reports.push(CheckReport::exact(
                        format!("chernoff {side} exact"),
                        inputs.clone(),
                        exact,
                        bound,
                        bound - exact,
                    ));
                }
            }
            for (k, &(n, p, gamma)) in [(100, 0.5, 0.4), (400, 0.1, 0.3), (50, 0.9, 0.1)]
                .iter()
                .enumerate()
            {
                let r = chernoff_check(n, p, gamma, draws, derive_seed(seed, k as u64))?;
                reports.extend(r.into_iter().filter(|c| c.name.ends_with("sampled")));
            }
        }
        Suite::Domination => {
            for (k, dep) in Dependence::ALL.into_iter().enumerate() {
                reports.extend(domination_check(
                    0.2,
                    0.35,
                    400,
                    0.5,
                    dep,
                    draws,
                    derive_seed(seed, k as u64),
                )?);
            }
        }
        Suite::TheoremGap => {
            if networks.is_empty() {
                return Err(usage("theorem-gap needs a network in the config"));
            }
            for (k, (name, net, pair)) in networks.iter().enumerate() {
                let pairs: Vec<(NeuronId, NeuronId)> = match pair {
                    Some(p) => vec![*p],
                    None => ordered_pairs(net),
                };
                for (m, &(j, i)) in pairs.iter().enumerate() {
                    let mut r = theorem_gap_report(
                        net,
                        j,
                        i,
                        common.delta,
                        common.replicas,
                        args.target_fraction,
                        derive_seed(seed, (k * 1000 + m) as u64),
                    )?;
                    r.name = format!("{name} {}", r.name);
                    reports.push(r);
                }
            }
        }
        Suite::LemmaRatios => {
            if networks.is_empty() {
                return Err(usage("lemma-ratios needs a network in the config"));
            }
            for (k, (name, net, pair)) in networks.iter().enumerate() {
                let beta = net.beta();
                let s = net.alpha() / beta;
                let d = net.max_in_degree().max(1) as f64;
                let delta = common.delta.unwrap_or(s * s / (10.0 * d * beta));
                let targets: Vec<NeuronId> = match pair {
                    Some((_, i)) => vec![*i],
                    None => net.ids().to_vec(),
                };
                for (m, &i) in targets.iter().enumerate() {
                    let budget = Budget::Replicas(common.replicas.unwrap_or(4_000_000));
                    let seed = derive_seed(seed, (k * 1000 + m) as u64);
                    for mut r in check_lemma_ratio_bounds(net, i, delta, budget, seed)? {
                        r.name = format!("{name} {}", r.name);
                        reports.push(r);
                    }
                }
            }
        }
    }
    let verdict = overall(&reports);
    for r in &reports {
        eprintln!(
            "{:<44} {:<22} estimate {:+.6e} bound {:+.6e} margin {:+.3e}",
            r.name,
            format!("{:?}", r.verdict),
            r.estimate,
            r.bound,
            r.margin
        );
    }
    let doc = json!({ "suite": args.suite, "verdict": verdict, "checks": reports });
    let outputs = emit_json(common, &doc)?;
    Ok(Outcome {
        status: verdict.into(),
        outputs,
        seed: Some(seed),
        constants,
    })
}

fn ordered_pairs(net: &Network) -> Vec<(NeuronId, NeuronId)> {
    let ids = net.ids();
    let mut v = Vec::new();
    for &i in ids {
        for &j in ids {
            if i != j {
                v.push((j, i));
            }
        }
    }
    v
}

/// Counts of true class against decision for one pair across seeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairTally {
    pub from: NeuronId,
    pub to: NeuronId,
    pub truth: Option<PairClass>,
    pub excitatory: u64,
    pub inhibitory: u64,
    pub absent: u64,
    pub insufficient_data: u64,
    pub correct: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub seeds: u64,
    pub horizon: f64,
    pub delta_used: f64,
    pub delta_star: f64,
    pub regime: Regime,
    /// Seeds in which every pair was classified correctly.
    pub perfect_seeds: u64,
    pub perfect_fraction: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    /// Confusion counts, `truth -> decision -> count`, summed over seeds.
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
    pub pairs: Vec<PairTally>,
    /// Theoretical bounds at this horizon, for reference.
    pub null_failure_bound: f64,
    pub signed_failure_bound: f64,
    pub failure_bounds: Option<FailureBounds>,
}

fn matches_truth(truth: PairClass, decision: Decision) -> bool {
    matches!(
        (truth, decision),
        (PairClass::Absent, Decision::Absent)
            | (PairClass::Excitatory, Decision::Excitatory)
            | (PairClass::Inhibitory, Decision::Inhibitory)
    )
}

/// Simulates `seeds` trajectories (seed `k` uses `derive_seed(master, k)`),
/// estimates each, and scores the decisions against the network's graph.
pub fn recover_graph(
    net: &Network,
    horizon: f64,
    seeds: u64,
    master: u64,
    opts: &EstimateOptions,
) -> Result<RecoverySummary, CliError> {
    let c = constants_of(net)?;
    let runs: Vec<EstimationReport> = (0..seeds)
        .into_par_iter()
        .map(|k| -> Result<EstimationReport, CliError> {
            let cfg = SimulationConfig::new(horizon, derive_seed(master, k));
            let rec = simulate(net, &cfg)?.recording;
            Ok(estimate_graph(&rec, &c, opts)?)
        })
        .collect::<Result<_, _>>()?;
    let first = runs
        .first()
        .ok_or_else(|| usage("need at least one seed"))?;
    let mut tallies: Vec<PairTally> = first
        .pairs
        .iter()
        .map(|p| PairTally {
            from: p.from,
            to: p.to,
            truth: Some(analysis::pair_class(net, p.from, p.to)),
            ..Default::default()
        })
        .collect();
    let mut confusion: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
    let (mut tp, mut fp, mut fneg, mut perfect) = (0, 0, 0, 0);
    for run in &runs {
        let mut all_ok = true;
        for (t, p) in tallies.iter_mut().zip(&run.pairs) {
            let truth = t.truth.expect("set above");
            match p.decision {
                Decision::Excitatory => t.excitatory += 1,
                Decision::Inhibitory => t.inhibitory += 1,
                Decision::Absent => t.absent += 1,
                Decision::InsufficientData => t.insufficient_data += 1,
            }
            let ok = matches_truth(truth, p.decision);
            t.correct += ok as u64;
            all_ok &= ok;
            let predicted_edge = matches!(p.decision, Decision::Excitatory | Decision::Inhibitory);
            if truth != PairClass::Absent {
                if ok {
                    tp += 1;
                } else {
                    fneg += 1;
                }
            }
            if predicted_edge && !ok {
                fp += 1;
            }
            *confusion
                .entry(name(serde_json::to_value(truth).expect("serializes")))
                .or_default()
                .entry(name(serde_json::to_value(p.decision).expect("serializes")))
                .or_default() += 1;
        }
        perfect += all_ok as u64;
    }
    let ratio = |a: u64, b: u64| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let gap = c.gap_params()?;
    let omega = gap.omega();
    let n_star = whole_blocks(horizon, gap.delta_star(), 3);
    Ok(RecoverySummary {
        seeds,
        horizon,
        delta_used: first.header.delta_used,
        delta_star: first.header.delta_star,
        regime: first.header.regime,
        perfect_seeds: perfect,
        perfect_fraction: perfect as f64 / seeds as f64,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        confusion,
        pairs: tallies,
        null_failure_bound: (6.0 * (-omega * horizon).exp()).min(1.0),
        signed_failure_bound: (4.0 * (-omega * horizon).exp()).min(1.0),
        failure_bounds: (n_star > 0)
            .then(|| failure_bounds(&c, n_star))
            .transpose()?,
    })
}

fn cmd_recover_graph(common: &Common, args: &RecoverArgs) -> Result<Outcome, CliError> {
    let cfg = require_config(common)?;
    let net = require_network(&cfg)?;
    if !cfg.has_ground_truth {
        return Err(usage(
            "recover-graph needs the ground-truth graph: the config has no `edges`",
        ));
    }
    let c = constants_of(net)?;
    let ds = c
        .delta_star
        .ok_or(crate::model::ModelError::NoEdgesDeclared)?;
    let delta = common
        .delta
        .or(cfg.estimate.delta_override)
        .unwrap_or_else(|| args.delta_multiple.unwrap_or(cfg.recover.delta_multiple) * ds);
    // The heuristic regime is implied here: certified horizons are out of reach.
    let opts = EstimateOptions {
        delta: Some(delta),
        heuristic: true,
        bounds_source: BoundsSource::Derived,
    };
    let horizon = args.horizon.unwrap_or(cfg.sim.horizon);
    let seeds = args.seeds.unwrap_or(cfg.recover.seeds);
    let master = common.seed.unwrap_or(cfg.sim.seed);
    let summary = recover_graph(net, horizon, seeds, master, &opts)?;
    eprintln!(
        "{} of {} seeds recovered the graph exactly (precision {:.3}, recall {:.3})",
        summary.perfect_seeds, summary.seeds, summary.precision, summary.recall
    );
    let status = match args.require {
        Some(f) if summary.perfect_fraction < f => ExitStatus::CheckFailed,
        _ => ExitStatus::Pass,
    };
    let outputs = emit_json(common, &summary)?;
    Ok(Outcome {
        status,
        outputs,
        seed: Some(master),
        constants: Some(c),
    })
}

fn cmd_constants(common: &Common) -> Result<Outcome, CliError> {
    let cfg = require_config(common)?;
    let c = cfg
        .estimation_bounds()
        .ok_or_else(|| usage("the config yields no constants"))??;
    let mut doc = json!({ "constants": c });
    if let Ok(gap) = c.gap_params() {
        let ds = gap.delta_star();
        let delta = common.delta.or(cfg.estimate.delta_override).unwrap_or(ds);
        let th = thresholds(&c, delta, common.heuristic || cfg.estimate.heuristic)?;
        doc["delta_used"] = json!(delta);
        doc["thresholds"] = json!(th);
        doc["envelope_delta_limit"] = json!(gap.s * gap.s / (5.0 * gap.d * gap.beta));
        let horizon = cfg.sim.horizon;
        let n = whole_blocks(horizon, ds, 3).max(1);
        doc["failure_bounds"] = json!(failure_bounds(&c, n)?);
    }
    let outputs = emit_json(common, &doc)?;
    Ok(Outcome {
        status: ExitStatus::Pass,
        outputs,
        seed: None,
        constants: Some(c),
    })
}
