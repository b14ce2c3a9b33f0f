use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use dupcode::blockstore::{BlockStore, StoreError, DEFAULT_BLOCK_SIZE};
use dupcode::codes::{
    decode_stripe, encode_stripe, plan_degraded_read, plan_repair, tolerance, BlockId, CodeError,
    CodeScheme, ErasurePattern, NodeBlocks, NodeId, Payload, RepairPlan, Site, StripeLayout,
};
use dupcode::mapsched::{locality_sweep, summarize, SchedulerKind, SweepConfig};
use dupcode::reliability::{
    mttdl_analytic, reliability_row, FailureModel, RepairMode, HOURS_PER_YEAR,
};
use dupcode::report::{emit_report, to_csv_string, CsvRow};

mod config;

#[derive(Parser, Debug)]
#[command(
    name = "dupcode",
    version,
    about = "Double-replicated erasure codes: coding, block store, reliability and locality",
    args_override_self = true
)]
struct Cli {
    /// key=value file of default flags for the subcommand
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for parallel campaigns
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress (degraded reads, repairs) to stderr
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single-stripe coding tools
    #[command(subcommand)]
    Code(CodeCmd),
    /// On-disk block store with fault injection
    #[command(subcommand)]
    Store(StoreCmd),
    /// Simulation campaigns
    #[command(subcommand)]
    Sim(SimCmd),
    /// Write the full set of CSV reports into a directory
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
enum CodeCmd {
    /// Print the parameters of a scheme
    Info {
        #[arg(long)]
        scheme: CodeScheme,
    },
    /// Encode a file into per-node directories
    Encode {
        #[arg(long)]
        scheme: CodeScheme,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4096)]
        block_size: usize,
    },
    /// Rebuild a file from an encode directory, ignoring missing nodes
    Decode {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Nodes to treat as failed even if their directory exists
        #[arg(long, value_delimiter = ',')]
        down: Vec<NodeId>,
    },
    /// Show the transfers that repair a failure pattern
    RepairPlan {
        #[arg(long)]
        scheme: CodeScheme,
        #[arg(long, value_delimiter = ',', required = true)]
        failed: Vec<NodeId>,
        /// Plan a degraded read of this block instead of a full repair
        #[arg(long)]
        read_block: Option<BlockId>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
struct RootArg {
    /// Store directory
    #[arg(long)]
    root: PathBuf,
}

#[derive(Subcommand, Debug)]
enum StoreCmd {
    Init {
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        nodes: usize,
    },
    Put {
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        scheme: CodeScheme,
        #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
        block_size: usize,
    },
    Get {
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    Kill {
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        node: NodeId,
    },
    Revive {
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        node: NodeId,
    },
    Fsck {
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        json: bool,
    },
    Repair {
        #[command(flatten)]
        root: RootArg,
    },
}

#[derive(Subcommand, Debug)]
enum SimCmd {
    /// Data-locality sweep; prints per-cell summaries as CSV
    Locality(LocalityArgs),
    /// Analytic and Monte Carlo MTTDL; prints CSV
    Reliability(ReliabilityArgs),
}

#[derive(Args, Debug)]
struct LocalityArgs {
    #[arg(long = "scheme", value_delimiter = ',', action = ArgAction::Set,
          default_value = "2-rep,pentagon,heptagon,heptagon-local")]
    schemes: Vec<CodeScheme>,
    #[arg(long = "scheduler", value_delimiter = ',', action = ArgAction::Set,
          default_value = "matching,delay,peeling")]
    schedulers: Vec<SchedulerKind>,
    #[arg(long, default_value_t = 25)]
    nodes: usize,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "2,4,8")]
    slots: Vec<usize>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "25,50,75,100")]
    load: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Delay-scheduling wait, in heartbeat rounds
    #[arg(long, default_value_t = dupcode::mapsched::DEFAULT_DELAY_ROUNDS)]
    delay: usize,
    /// Stripes per cluster (default scales with the slot count)
    #[arg(long)]
    stripes: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Also write every individual run here
    #[arg(long)]
    runs_out: Option<PathBuf>,
    /// Write the summary here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReliabilityArgs {
    #[arg(long = "scheme", value_delimiter = ',', action = ArgAction::Set,
          default_value = "2-rep,3-rep,pentagon,heptagon,heptagon-local,raid+m-9,raid+m-11")]
    schemes: Vec<CodeScheme>,
    #[arg(long, default_value_t = 100.0)]
    mttf_hours: f64,
    #[arg(long, default_value_t = 10.0)]
    mttr_hours: f64,
    #[arg(long, default_value_t = RepairMode::Parallel)]
    mode: RepairMode,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Code(c) => code(c),
        Command::Store(s) => store(s),
        Command::Sim(SimCmd::Locality(a)) => sim_locality(a),
        Command::Sim(SimCmd::Reliability(a)) => sim_reliability(a),
        Command::Report(a) => report(a),
    }
}

fn code(cmd: CodeCmd) -> Result<()> {
    match cmd {
        CodeCmd::Info { scheme } => {
            let overhead = scheme.storage_overhead();
            println!("scheme: {scheme}");
            println!("length: {}", scheme.code_length());
            println!("data_blocks: {}", scheme.data_blocks());
            println!("stored_blocks: {}", scheme.stored_blocks());
            println!("overhead: {overhead}");
            println!("tolerance: {}", tolerance(scheme));
            Ok(())
        }
        CodeCmd::Encode {
            scheme,
            input,
            out,
            block_size,
        } => encode_dir(scheme, &input, &out, block_size),
        CodeCmd::Decode { dir, out, down } => decode_dir(&dir, &out, &down),
        CodeCmd::RepairPlan {
            scheme,
            failed,
            read_block,
            json,
        } => {
            let layout = StripeLayout::canonical(scheme);
            let pattern = ErasurePattern::new(failed);
            let plan = match read_block {
                Some(b) => plan_degraded_read(&layout, b, &pattern)?,
                None => plan_repair(&layout, &pattern)?,
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&plan)?);
            } else {
                print_plan(&plan);
            }
            Ok(())
        }
    }
}

fn site(s: Site) -> String {
    match s {
        Site::Node(n) => format!("node {n}"),
        Site::Reader => "reader".to_string(),
    }
}

fn print_plan(plan: &RepairPlan) {
    for t in &plan.transfers {
        let what = match &t.payload {
            Payload::WholeCopy(b) => format!("copy b{b}"),
            Payload::PartialParity(terms) => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|x| {
                        if x.coef == 1 {
                            format!("b{}", x.block)
                        } else {
                            format!("{:#04x}*b{}", x.coef, x.block)
                        }
                    })
                    .collect();
                format!("parity {}", parts.join(" + "))
            }
        };
        println!(
            "node {} -> {}: {} into b{}",
            t.src,
            site(t.dst),
            what,
            t.target
        );
    }
    println!(
        "bandwidth: {} blocks ({} copies, {} partial parities)",
        plan.bandwidth_blocks,
        plan.whole_copies(),
        plan.partial_parities()
    );
}

#[derive(serde::Serialize, serde::Deserialize)]
struct EncodeMeta {
    scheme: CodeScheme,
    original_size: u64,
    block_size: usize,
    stripes: usize,
}

const ENCODE_META: &str = "encoding.json";

fn encode_dir(scheme: CodeScheme, input: &Path, out: &Path, block_size: usize) -> Result<()> {
    if block_size == 0 {
        bail!("block size must be positive");
    }
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let k = scheme.data_blocks();
    let stripes = bytes.len().div_ceil(k * block_size);
    let layout = StripeLayout::canonical(scheme);
    for n in &layout.nodes {
        fs::create_dir_all(out.join(format!("n{n}")))?;
    }
    for s in 0..stripes {
        let data: Vec<Vec<u8>> = (0..k)
            .map(|i| {
                let start = ((s * k + i) * block_size).min(bytes.len());
                let end = (start + block_size).min(bytes.len());
                let mut b = bytes[start..end].to_vec();
                b.resize(block_size, 0);
                b
            })
            .collect();
        let coded = encode_stripe(scheme, &data)?;
        for (node, blocks) in layout.distribute(&coded, &ErasurePattern::none()) {
            for (b, content) in blocks {
                fs::write(out.join(format!("n{node}/s{s}_b{b}.blk")), content)?;
            }
        }
    }
    let meta = EncodeMeta {
        scheme,
        original_size: bytes.len() as u64,
        block_size,
        stripes,
    };
    fs::write(out.join(ENCODE_META), serde_json::to_vec_pretty(&meta)?)?;
    println!(
        "{stripes} stripes, {} block files",
        stripes * scheme.stored_blocks()
    );
    Ok(())
}

fn decode_dir(dir: &Path, out: &Path, down: &[NodeId]) -> Result<()> {
    let meta: EncodeMeta = serde_json::from_slice(
        &fs::read(dir.join(ENCODE_META))
            .with_context(|| format!("no encoding in {}", dir.display()))?,
    )?;
    let layout = StripeLayout::canonical(meta.scheme);
    for &n in down {
        if layout.node_index(n).is_none() {
            return Err(CodeError::NodeOutOfRange(n).into());
        }
    }
    let pattern = ErasurePattern::new(
        layout
            .nodes
            .iter()
            .copied()
            .filter(|n| down.contains(n) || !dir.join(format!("n{n}")).is_dir()),
    );
    let mut bytes = Vec::with_capacity(meta.stripes * meta.scheme.data_blocks() * meta.block_size);
    for s in 0..meta.stripes {
        let mut surviving = NodeBlocks::new();
        for &n in &layout.nodes {
            if pattern.contains(n) {
                continue;
            }
            for (b, _) in layout.blocks_on(n) {
                if let Ok(content) = fs::read(dir.join(format!("n{n}/s{s}_b{b}.blk"))) {
                    surviving.entry(n).or_default().insert(b, content);
                }
            }
        }
        for block in decode_stripe(&layout, &surviving, &pattern)? {
            bytes.extend_from_slice(&block);
        }
    }
    bytes.truncate(meta.original_size as usize);
    fs::write(out, &bytes)?;
    println!("{} bytes, failed nodes {:?}", bytes.len(), pattern.failed);
    Ok(())
}

fn store(cmd: StoreCmd) -> Result<()> {
    match cmd {
        StoreCmd::Init { root, nodes } => {
            BlockStore::init(&root.root, nodes)?;
            println!("initialized {} with {nodes} nodes", root.root.display());
        }
        StoreCmd::Put {
            root,
            file,
            scheme,
            block_size,
        } => {
            let mut s = BlockStore::open(&root.root)?;
            let m = s.put(&file, scheme, block_size)?;
            println!(
                "{}: {} bytes, {} stripes, {} padding bytes",
                m.file_name, m.original_size, m.stripe_count, m.padding_bytes
            );
        }
        StoreCmd::Get { root, name, out } => {
            let s = BlockStore::open(&root.root)?;
            let got = s.get(&name)?;
            for d in &got.degraded {
                eprintln!(
                    "degraded read: stripe {} block {}: {} transfers",
                    d.stripe, d.block, d.transfers
                );
            }
            fs::write(&out, &got.bytes)?;
            println!("{} bytes", got.bytes.len());
        }
        StoreCmd::Kill { root, node } => {
            let n = BlockStore::open(&root.root)?.kill_node(node)?;
            println!("node {} {:?}", n.id, n.status);
        }
        StoreCmd::Revive { root, node } => {
            let n = BlockStore::open(&root.root)?.revive_node(node)?;
            println!("node {} {:?}", n.id, n.status);
        }
        StoreCmd::Fsck { root, json } => {
            let r = BlockStore::open(&root.root)?.fsck()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                for l in &r.missing {
                    println!(
                        "missing {} stripe {} block {} on node {}",
                        l.file, l.stripe, l.block, l.node
                    );
                }
                for l in &r.corrupt {
                    println!(
                        "corrupt {} stripe {} block {} on node {}",
                        l.file, l.stripe, l.block, l.node
                    );
                }
                for (f, s) in &r.fatal_stripes {
                    println!("fatal {f} stripe {s}");
                }
                println!(
                    "{} missing, {} corrupt, {} fatal",
                    r.missing.len(),
                    r.corrupt.len(),
                    r.fatal_stripes.len()
                );
            }
            if !r.fatal_stripes.is_empty() {
                return Err(StoreError::Unrecoverable {
                    file: r.fatal_stripes[0].0.clone(),
                    stripe: r.fatal_stripes[0].1,
                }
                .into());
            }
        }
        StoreCmd::Repair { root } => {
            let r = BlockStore::open(&root.root)?.repair()?;
            println!(
                "plans executed: {}, bandwidth: {} blocks planned, {} measured",
                r.plans_executed, r.planned_bandwidth_blocks, r.measured_bandwidth_blocks
            );
        }
    }
    Ok(())
}

fn write_or_print<R: CsvRow>(rows: &[R], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => emit_report(rows, p).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", to_csv_string(rows));
            Ok(())
        }
    }
}

fn sim_locality(a: LocalityArgs) -> Result<()> {
    let cfg = SweepConfig {
        schemes: a.schemes,
        schedulers: a.schedulers,
        nodes: a.nodes,
        slots: a.slots,
        loads: a.load,
        repetitions: a.reps,
        seed: a.seed,
        delay: a.delay,
        stripes: a.stripes,
    };
    if cfg.repetitions == 0 {
        bail!("--reps must be at least 1");
    }
    let rows = locality_sweep(&cfg)?;
    if let Some(p) = &a.runs_out {
        emit_report(&rows, p)?;
    }
    write_or_print(&summarize(&rows), a.out.as_deref())
}

fn sim_reliability(a: ReliabilityArgs) -> Result<()> {
    let model = FailureModel::from_mttf_mttr(a.mttf_hours, a.mttr_hours, a.mode)?;
    let rows = a
        .schemes
        .iter()
        .map(|&s| reliability_row(s, model, a.trials, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    write_or_print(&rows, a.out.as_deref())
}

/// One line of the scheme table.
struct SchemeRow {
    scheme: CodeScheme,
    tolerance: usize,
    mttdl_years: f64,
    truncated_years: f64,
}

impl CsvRow for SchemeRow {
    const HEADER: &'static [&'static str] = &[
        "scheme",
        "length",
        "data_blocks",
        "stored_blocks",
        "overhead",
        "tolerance",
        "mttdl_years",
        "truncated_chain_years",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.scheme.to_string(),
            self.scheme.code_length().to_string(),
            self.scheme.data_blocks().to_string(),
            self.scheme.stored_blocks().to_string(),
            self.scheme.storage_overhead().to_string(),
            self.tolerance.to_string(),
            format!("{:.6e}", self.mttdl_years),
            format!("{:.6e}", self.truncated_years),
        ]
    }
}

fn report(a: ReportArgs) -> Result<()> {
    fs::create_dir_all(&a.out_dir)?;
    let schemes: Vec<CodeScheme> = [
        "3-rep",
        "2-rep",
        "pentagon",
        "heptagon",
        "heptagon-local",
        "raid+m-9",
        "raid+m-11",
    ]
    .iter()
    .map(|s| s.parse().expect("built-in scheme"))
    .collect();

    let defaults = FailureModel::default_params();
    let table = schemes
        .iter()
        .map(|&s| {
            let m = mttdl_analytic(s, defaults)?;
            Ok(SchemeRow {
                scheme: s,
                tolerance: tolerance(s),
                mttdl_years: m.years(),
                truncated_years: m.truncated_hours / HOURS_PER_YEAR,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit_report(&table, &a.out_dir.join("schemes.csv"))?;

    let stress = FailureModel::stress();
    let rel = schemes
        .iter()
        .map(|&s| reliability_row(s, stress, a.trials, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    emit_report(&rel, &a.out_dir.join("reliability.csv"))?;

    let mut cfg = SweepConfig::new(a.seed);
    cfg.repetitions = a.reps;
    let rows = locality_sweep(&cfg)?;
    emit_report(&rows, &a.out_dir.join("locality_runs.csv"))?;
    emit_report(&summarize(&rows), &a.out_dir.join("locality.csv"))?;

    for name in [
        "schemes.csv",
        "reliability.csv",
        "locality_runs.csv",
        "locality.csv",
    ] {
        println!("{}", a.out_dir.join(name).display());
    }
    Ok(())
}
