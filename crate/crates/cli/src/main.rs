use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lpr_core::allocation::{
    greedy_allocate, lrusm_cg, lrusm_process, partition_buffer, sep_sweep, Process, SepList,
};
use lpr_core::bounds::bounds_report;
use lpr_core::control::{
    bellman_c2, build_mdp, c2_reduced_chain, counterexample_check, depths_of_mask, dp_optimal,
    relative_value_iteration, RviOptions,
};
use lpr_core::dist::{
    parse_trace_text, read_distribution, read_trace, write_trace_binary, write_trace_text,
};
use lpr_core::faststack::miss_curve;
use lpr_core::policies::{simulate, simulate_belady, PolicyKind};
use lpr_core::segments::segmentation;
use lpr_core::{LruStack, Policy, Rng, StackDistribution, Trace};

mod output;

use output::{emit, json};

/// Eviction policies under the LRU stack model.
#[derive(Debug, Parser)]
#[command(name = "lpr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a trace from a stack-depth distribution.
    GenTrace(GenTraceArgs),
    /// Segmentation breakpoints, priorities and K/L per capacity (JSON).
    Segments(DistOut),
    /// Per-capacity policy simulation (CSV or JSON).
    Simulate(SimulateArgs),
    /// LPR misses for every capacity in one pass.
    MissCurve(MissCurveArgs),
    /// OPT lower bound, LPR miss rate and ratio bounds (JSON).
    Bounds(BoundsArgs),
    /// Finite-horizon optimal expected misses for every buffer state.
    Dp(DpArgs),
    /// Closed-form average cost for capacity 2 (JSON).
    BellmanC2(DistOut),
    /// Replay the non-stack optimal eviction example (JSON).
    Counterexample(OutOnly),
    /// Greedy allocation of occupancy across items (JSON).
    Allocate(AllocateArgs),
    /// Split a buffer among weighted processes (JSON).
    Partition(AllocateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct OutOnly {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DistOut {
    /// Distribution file: one probability per line, depth 1 first.
    #[arg(long)]
    dist: PathBuf,
    /// Rescale the distribution to sum to 1 instead of rejecting it.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    normalize: bool,
    /// Number of accesses.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial LRU stack, one item id per line (identity by default).
    #[arg(long)]
    stack: Option<PathBuf>,
    /// Write the binary trace format.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceSource {
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long)]
    normalize: bool,
    /// Trace file (text or binary); generated from --dist when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Accesses to generate when no trace is given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    stack: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Capacities {
    #[arg(long, conflicts_with = "capacities")]
    capacity: Option<usize>,
    /// Inclusive range `A..B`.
    #[arg(long, value_parser = parse_range)]
    capacities: Option<RangeInclusive<usize>>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: TraceSource,
    #[command(flatten)]
    caps: Capacities,
    /// lru, mru, fifo, kl:K:L, lpr or opt; repeatable.
    #[arg(long, required = true)]
    policy: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MissCurveArgs {
    #[command(flatten)]
    source: TraceSource,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    normalize: bool,
    #[command(flatten)]
    caps: Capacities,
    /// Trace length for the simulated LPR/OPT ratio; skipped when 0.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DpArgs {
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    capacity: usize,
    #[arg(long)]
    horizon: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    /// JSON frontier specification.
    #[arg(long)]
    spec: PathBuf,
    /// Total occupancy budget.
    #[arg(long)]
    capacity: f64,
    /// Sandwich tolerance for frontiers swept from generators.
    #[arg(long, default_value_t = 1e-12)]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Argument combination problems, reported with exit code 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse_range(s: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: usize = b
        .trim()
        .trim_start_matches('=')
        .parse()
        .map_err(|e| format!("{b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok(a..=b)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match e.downcast_ref::<lpr_core::Error>() {
        Some(lpr_core::Error::NoConvergence { .. }) => 2,
        Some(_) => 1,
        None => 2,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenTrace(a) => gen_trace(a),
        Command::Segments(a) => {
            let d = load_dist(&a.dist, a.normalize)?;
            emit(a.out.as_deref(), &json(&segmentation(&d).report())?)
        }
        Command::Simulate(a) => simulate_cmd(a),
        Command::MissCurve(a) => miss_curve_cmd(a),
        Command::Bounds(a) => bounds_cmd(a),
        Command::Dp(a) => dp_cmd(a),
        Command::BellmanC2(a) => bellman_cmd(a),
        Command::Counterexample(a) => emit(a.out.as_deref(), &json(&counterexample_check()?)?),
        Command::Allocate(a) => allocate_cmd(a),
        Command::Partition(a) => partition_cmd(a),
    }
}

fn load_dist(path: &Path, normalize: bool) -> Result<StackDistribution> {
    read_distribution(path, normalize).with_context(|| format!("distribution {}", path.display()))
}

fn load_stack(path: Option<&Path>, v: usize) -> Result<LruStack> {
    let Some(path) = path else {
        return Ok(LruStack::identity(v));
    };
    let text = std::fs::read_to_string(path)
        .map_err(lpr_core::Error::from)
        .with_context(|| format!("stack {}", path.display()))?;
    let items = parse_trace_text(&text)?.accesses().to_vec();
    let stack = LruStack::from_items(items).with_context(|| format!("stack {}", path.display()))?;
    if stack.len() != v {
        return Err(lpr_core::Error::InvalidInput(format!(
            "stack {} holds {} items, the distribution has {v} depths",
            path.display(),
            stack.len()
        ))
        .into());
    }
    Ok(stack)
}

fn gen_trace(a: GenTraceArgs) -> Result<()> {
    let d = load_dist(&a.dist, a.normalize)?;
    let stack = load_stack(a.stack.as_deref(), d.len())?;
    let trace = Trace::generate(&d, &stack, a.n, &mut Rng::new(a.seed));
    let mut buf = Vec::new();
    if a.binary {
        write_trace_binary(&trace, &mut buf)?;
    } else {
        write_trace_text(&trace, &mut buf)?;
    }
    emit(a.out.as_deref(), &buf)
}

struct Loaded {
    dist: Option<StackDistribution>,
    trace: Trace,
    stack: LruStack,
}

fn load_source(s: &TraceSource) -> Result<Loaded> {
    let dist = s
        .dist
        .as_deref()
        .map(|p| load_dist(p, s.normalize))
        .transpose()?;
    let trace = match (&s.trace, &dist, s.n) {
        (Some(path), _, None) => {
            read_trace(path).with_context(|| format!("trace {}", path.display()))?
        }
        (Some(_), _, Some(_)) => return Err(usage("--trace and --n are mutually exclusive")),
        (None, Some(d), Some(n)) => {
            let stack = load_stack(s.stack.as_deref(), d.len())?;
            Trace::generate(d, &stack, n, &mut Rng::new(s.seed))
        }
        (None, _, _) => return Err(usage("give --trace, or --dist with --n")),
    };
    let v = match &dist {
        Some(d) => d.len(),
        None => trace.span(),
    };
    trace.validate(v)?;
    let stack = load_stack(s.stack.as_deref(), v)?;
    Ok(Loaded { dist, trace, stack })
}

fn capacity_list(c: &Capacities, v: usize) -> Result<Vec<usize>> {
    let list: Vec<usize> = match (&c.capacity, &c.capacities) {
        (Some(x), None) => vec![*x],
        (None, Some(r)) => r.clone().collect(),
        (None, None) => (1..=v).collect(),
        (Some(_), Some(_)) => return Err(usage("--capacity conflicts with --capacities")),
    };
    if let Some(&bad) = list.iter().find(|&&x| x == 0 || x > v) {
        return Err(lpr_core::Error::CapacityOutOfRange {
            capacity: bad,
            min: 1,
            max: v,
        }
        .into());
    }
    Ok(list)
}

#[derive(Serialize)]
struct SimRow {
    capacity: usize,
    policy: String,
    accesses: u64,
    misses: u64,
    miss_rate: f64,
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let src = load_source(&a.source)?;
    let v = src.stack.len();
    let caps = capacity_list(&a.caps, v)?;
    let kinds = a
        .policy
        .iter()
        .map(|p| p.parse::<PolicyKind>())
        .collect::<lpr_core::Result<Vec<_>>>()?;
    let seg = match (&src.dist, kinds.contains(&PolicyKind::Lpr)) {
        (Some(d), _) => Some(segmentation(d)),
        (None, true) => return Err(usage("policy lpr needs --dist")),
        (None, false) => None,
    };
    let mut rows = Vec::new();
    for &c in &caps {
        for &kind in &kinds {
            let r = match kind {
                PolicyKind::Opt => simulate_belady(&src.trace, c)?,
                other => {
                    let policy = match other {
                        PolicyKind::Lru => Policy::Lru,
                        PolicyKind::Mru => Policy::Mru,
                        PolicyKind::Fifo => Policy::Fifo,
                        PolicyKind::Kl { k, l } => Policy::Kl { k, l },
                        PolicyKind::Lpr => Policy::Lpr(seg.clone().expect("checked above")),
                        PolicyKind::Opt => unreachable!(),
                    };
                    simulate(&policy, &src.trace, c, &src.stack)
                        .with_context(|| format!("policy {kind} at capacity {c}"))?
                }
            };
            rows.push(SimRow {
                capacity: c,
                policy: kind.to_string(),
                accesses: r.accesses,
                misses: r.misses,
                miss_rate: r.miss_rate(),
            });
        }
    }
    let bytes = match a.format {
        Format::Json => json(&rows)?,
        Format::Csv => {
            let mut s = String::from("capacity,policy,accesses,misses,miss_rate\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.capacity, r.policy, r.accesses, r.misses, r.miss_rate
                ));
            }
            s.into_bytes()
        }
    };
    emit(a.out.as_deref(), &bytes)
}

fn miss_curve_cmd(a: MissCurveArgs) -> Result<()> {
    let Some(dist_path) = &a.source.dist else {
        return Err(usage("miss-curve needs --dist for the segmentation"));
    };
    let src = load_source(&a.source).with_context(|| format!("with {}", dist_path.display()))?;
    let seg = segmentation(src.dist.as_ref().expect("dist given"));
    let curve = miss_curve(&seg, &src.trace)?;
    let bytes = match a.format {
        Format::Csv => curve.to_csv().into_bytes(),
        Format::Json => json(&curve)?,
    };
    emit(a.out.as_deref(), &bytes)
}

fn bounds_cmd(a: BoundsArgs) -> Result<()> {
    let d = load_dist(&a.dist, a.normalize)?;
    let caps = match (&a.caps.capacity, &a.caps.capacities) {
        (None, None) => return Err(usage("bounds needs --capacity or --capacities")),
        _ => capacity_list(&a.caps, d.len())?,
    };
    let empirical = (a.n > 0).then_some((a.n, a.seed));
    let reports = caps
        .iter()
        .map(|&c| bounds_report(&d, c, empirical).with_context(|| format!("capacity {c}")))
        .collect::<Result<Vec<_>>>()?;
    let bytes = if a.caps.capacity.is_some() {
        json(&reports[0])?
    } else {
        json(&reports)?
    };
    emit(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct DpState {
    resident: Vec<usize>,
    cost: Vec<f64>,
}

#[derive(Serialize)]
struct DpReport {
    #[serde(rename = "C")]
    c: usize,
    horizon: usize,
    states: Vec<DpState>,
}

fn dp_cmd(a: DpArgs) -> Result<()> {
    let d = load_dist(&a.dist, a.normalize)?;
    let mdp = build_mdp(&d, a.capacity)?;
    let table = dp_optimal(&mdp, a.horizon);
    let bytes = match a.format {
        Format::Json => json(&DpReport {
            c: a.capacity,
            horizon: a.horizon,
            states: mdp
                .states()
                .iter()
                .enumerate()
                .map(|(i, &m)| DpState {
                    resident: depths_of_mask(m),
                    cost: (0..=a.horizon).map(|t| table.cost(i, t)).collect(),
                })
                .collect(),
        })?,
        Format::Csv => {
            let mut s = String::from("resident,horizon,cost\n");
            for (i, &m) in mdp.states().iter().enumerate() {
                let label = depths_of_mask(m)
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                for t in 0..=a.horizon {
                    s.push_str(&format!("{label},{t},{}\n", table.cost(i, t)));
                }
            }
            s.into_bytes()
        }
    };
    emit(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct BellmanReport {
    lambda: f64,
    lambda_miss_rate: f64,
    beta2: f64,
    h: Vec<f64>,
    residual: f64,
    rvi_lambda: f64,
}

fn bellman_cmd(a: DistOut) -> Result<()> {
    let d = load_dist(&a.dist, a.normalize)?;
    let b = bellman_c2(&d)?;
    let rvi = relative_value_iteration(&c2_reduced_chain(&d)?, RviOptions::default())?;
    let report = BellmanReport {
        lambda: b.lambda,
        lambda_miss_rate: b.lambda_miss_rate,
        beta2: b.beta[2],
        residual: b.residual(),
        h: b.h,
        rvi_lambda: rvi.lambda,
    };
    emit(a.out.as_deref(), &json(&report)?)
}

/// One item: explicit frontier points, or an LRU-stack item given by its
/// distribution.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemSpec {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    seps: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    dist: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocateSpec {
    items: Vec<ItemSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessSpec {
    weight: f64,
    /// Shorthand for the `V` items of an LRU stack model.
    #[serde(default)]
    dist: Option<Vec<f64>>,
    #[serde(default)]
    items: Option<Vec<ItemSpec>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionSpec {
    processes: Vec<ProcessSpec>,
}

fn read_spec<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(lpr_core::Error::from)
        .with_context(|| format!("spec {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| lpr_core::Error::Format(e.to_string()))
        .with_context(|| format!("spec {}", path.display()))
}

fn item_frontier(item: &ItemSpec, index: usize, epsilon: f64) -> Result<SepList> {
    let label = item.name.clone().unwrap_or_else(|| format!("#{index}"));
    let seps = match (&item.seps, &item.dist) {
        (Some(p), None) => SepList::from_pairs(p),
        (None, Some(raw)) => {
            StackDistribution::new(raw).and_then(|d| sep_sweep(&lrusm_cg(&d), epsilon))
        }
        _ => bail!(lpr_core::Error::InvalidInput(format!(
            "item {label}: give exactly one of \"seps\" or \"dist\""
        ))),
    };
    seps.with_context(|| format!("item {label}"))
}

#[derive(Serialize)]
struct NamedChoice<'a> {
    name: String,
    #[serde(flatten)]
    choice: &'a lpr_core::allocation::ItemChoice,
}

fn allocate_cmd(a: AllocateArgs) -> Result<()> {
    let spec: AllocateSpec = read_spec(&a.spec)?;
    let lists = spec
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| item_frontier(it, i, a.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let alloc = greedy_allocate(&lists, a.capacity)?;
    let items: Vec<NamedChoice> = alloc
        .items
        .iter()
        .zip(&spec.items)
        .enumerate()
        .map(|(i, (choice, it))| NamedChoice {
            name: it.name.clone().unwrap_or_else(|| format!("#{i}")),
            choice,
        })
        .collect();
    let report = serde_json::json!({
        "items": items,
        "C": alloc.occupancy,
        "M": alloc.misses,
    });
    emit(a.out.as_deref(), &json(&report)?)
}

fn partition_cmd(a: AllocateArgs) -> Result<()> {
    let spec: PartitionSpec = read_spec(&a.spec)?;
    let processes = spec
        .processes
        .iter()
        .enumerate()
        .map(|(k, p)| -> Result<Process> {
            match (&p.dist, &p.items) {
                (Some(raw), None) => Ok(lrusm_process(&StackDistribution::new(raw)?, p.weight)),
                (None, Some(items)) => Ok(Process {
                    items: items
                        .iter()
                        .enumerate()
                        .map(|(i, it)| item_frontier(it, i, a.epsilon))
                        .collect::<Result<_>>()?,
                    weight: p.weight,
                }),
                _ => bail!(lpr_core::Error::InvalidInput(format!(
                    "process {k}: give exactly one of \"dist\" or \"items\""
                ))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let part = partition_buffer(&processes, a.capacity)?;
    emit(a.out.as_deref(), &json(&part)?)
}
