//! Map-task placement and data-locality simulation.
//!
//! A cluster holds the data blocks of many stripes; map tasks each read one
//! block and a task is local when it runs on a node storing that block.
//! Three schedulers are provided: a maximum-matching benchmark, delay
//! scheduling and a peeling heuristic. Workloads larger than the slot count
//! run in consecutive waves, each scheduled against empty slots.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{CodeScheme, NodeId, StripeLayout};
use crate::report::CsvRow;

pub const DEFAULT_DELAY_ROUNDS: usize = 1;

/// Data blocks per map slot when the caller does not choose a catalog size.
pub const DEFAULT_BLOCKS_PER_SLOT: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedError {
    #[error("{scheme} needs {need} nodes, cluster has {have}")]
    TooFewNodes {
        scheme: String,
        need: usize,
        have: usize,
    },
    #[error("slots per node must be at least 1")]
    NoSlots,
    #[error("load must be in (0, 200], got {0}")]
    BadLoad(f64),
    #[error("cluster holds no blocks")]
    EmptyCatalog,
    #[error("{tasks} tasks exceed {slots} slots")]
    Overload { tasks: usize, slots: usize },
    #[error("unknown scheduler {0:?}")]
    UnknownScheduler(String),
    #[error(transparent)]
    Scheme(#[from] crate::codes::CodeError),
}

/// Nodes, slots and where every data block lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterModel {
    pub nodes: usize,
    pub slots: usize,
    /// `catalog[block]` lists the nodes storing that block.
    pub catalog: Vec<Vec<NodeId>>,
}

impl ClusterModel {
    pub fn total_slots(&self) -> usize {
        self.nodes * self.slots
    }

    pub fn hosts(&self, block: usize) -> &[NodeId] {
        &self.catalog[block]
    }
}

/// Places `stripes` stripes of `scheme` on random node subsets.
///
/// Only data blocks enter the catalog: parities are never map input, so the
/// global-parity node of heptagon-local never hosts a task.
pub fn build_cluster(
    scheme: CodeScheme,
    nodes: usize,
    slots: usize,
    stripes: usize,
    seed: u64,
) -> Result<ClusterModel, SchedError> {
    scheme.validate()?;
    let need = scheme.code_length();
    if nodes < need {
        return Err(SchedError::TooFewNodes {
            scheme: scheme.to_string(),
            need,
            have: nodes,
        });
    }
    if slots == 0 {
        return Err(SchedError::NoSlots);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<NodeId> = (0..nodes).collect();
    let mut catalog = Vec::with_capacity(stripes * scheme.data_blocks());
    for _ in 0..stripes {
        pool.shuffle(&mut rng);
        let layout = StripeLayout::with_nodes(scheme, pool[..need].to_vec());
        for d in 0..scheme.data_blocks() {
            let mut hosts = layout.hosts[scheme.data_block_id(d)].clone();
            hosts.sort_unstable();
            catalog.push(hosts);
        }
    }
    Ok(ClusterModel {
        nodes,
        slots,
        catalog,
    })
}

/// Default catalog size: `DEFAULT_BLOCKS_PER_SLOT` data blocks per slot,
/// rounded up to whole stripes. Keeping the catalog proportional to the slot
/// count gives every slot setting the same repeat-draw statistics.
pub fn default_stripes(scheme: CodeScheme, nodes: usize, slots: usize) -> usize {
    (DEFAULT_BLOCKS_PER_SLOT * nodes * slots).div_ceil(scheme.data_blocks())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Workload {
    /// Block read by each task.
    pub tasks: Vec<usize>,
    pub load_pct: f64,
}

pub fn task_count(cluster: &ClusterModel, load_pct: f64) -> usize {
    (load_pct * cluster.total_slots() as f64 / 100.0 + 1e-9).floor() as usize
}

/// Draws tasks uniformly from the catalog, with replacement.
pub fn generate_workload(
    cluster: &ClusterModel,
    load_pct: f64,
    seed: u64,
) -> Result<Workload, SchedError> {
    if !(load_pct > 0.0 && load_pct <= 200.0) {
        return Err(SchedError::BadLoad(load_pct));
    }
    if cluster.catalog.is_empty() {
        return Err(SchedError::EmptyCatalog);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = task_count(cluster, load_pct);
    let tasks = (0..n)
        .map(|_| rng.gen_range(0..cluster.catalog.len()))
        .collect();
    Ok(Workload { tasks, load_pct })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assignment {
    /// Node running each task.
    pub node: Vec<NodeId>,
    pub local: Vec<bool>,
    pub waves: usize,
}

impl Assignment {
    pub fn local_tasks(&self) -> usize {
        self.local.iter().filter(|&&l| l).count()
    }

    pub fn remote_blocks(&self) -> usize {
        self.local.len() - self.local_tasks()
    }

    pub fn locality_pct(&self) -> f64 {
        if self.local.is_empty() {
            100.0
        } else {
            100.0 * self.local_tasks() as f64 / self.local.len() as f64
        }
    }

    fn empty(waves: usize) -> Self {
        Assignment {
            node: Vec::new(),
            local: Vec::new(),
            waves,
        }
    }

    fn append(&mut self, other: Assignment) {
        self.node.extend(other.node);
        self.local.extend(other.local);
        self.waves += other.waves;
    }
}

/// Per-wave bookkeeping shared by the schedulers.
struct Slots<'a> {
    cluster: &'a ClusterModel,
    free: Vec<usize>,
    node: Vec<Option<NodeId>>,
}

impl<'a> Slots<'a> {
    fn new(cluster: &'a ClusterModel, tasks: usize) -> Self {
        Slots {
            cluster,
            free: vec![cluster.slots; cluster.nodes],
            node: vec![None; tasks],
        }
    }

    fn place(&mut self, task: usize, node: NodeId) {
        debug_assert!(self.free[node] > 0);
        self.free[node] -= 1;
        self.node[task] = Some(node);
    }

    fn least_loaded(&self) -> NodeId {
        // max free slots, ties to the lowest id
        let mut best = 0;
        for n in 1..self.free.len() {
            if self.free[n] > self.free[best] {
                best = n;
            }
        }
        best
    }

    fn place_remaining_remote(&mut self) {
        for t in 0..self.node.len() {
            if self.node[t].is_none() {
                let n = self.least_loaded();
                self.place(t, n);
            }
        }
    }

    fn finish(self, blocks: &[usize]) -> Assignment {
        let node: Vec<NodeId> = self.node.into_iter().map(|n| n.expect("placed")).collect();
        let local = node
            .iter()
            .zip(blocks)
            .map(|(n, &b)| self.cluster.hosts(b).contains(n))
            .collect();
        Assignment {
            node,
            local,
            waves: 1,
        }
    }
}

fn check_fits(cluster: &ClusterModel, tasks: usize) -> Result<(), SchedError> {
    if tasks > cluster.total_slots() {
        return Err(SchedError::Overload {
            tasks,
            slots: cluster.total_slots(),
        });
    }
    Ok(())
}

/// Maximum-locality assignment for one wave (Hopcroft-Karp over slots).
pub fn schedule_maxmatch(
    cluster: &ClusterModel,
    workload: &Workload,
) -> Result<Assignment, SchedError> {
    let tasks = &workload.tasks;
    check_fits(cluster, tasks.len())?;
    let mu = cluster.slots;
    let adj: Vec<Vec<usize>> = tasks
        .iter()
        .map(|&b| {
            cluster
                .hosts(b)
                .iter()
                .flat_map(|&n| (0..mu).map(move |s| n * mu + s))
                .collect()
        })
        .collect();
    let matched = hopcroft_karp(&adj, cluster.total_slots());
    let mut slots = Slots::new(cluster, tasks.len());
    for (t, m) in matched.iter().enumerate() {
        if let Some(slot) = m {
            slots.place(t, slot / mu);
        }
    }
    slots.place_remaining_remote();
    Ok(slots.finish(tasks))
}

/// Maximum bipartite matching; returns the right vertex matched to each left one.
fn hopcroft_karp(adj: &[Vec<usize>], right: usize) -> Vec<Option<usize>> {
    const INF: usize = usize::MAX;
    let left = adj.len();
    let mut match_l: Vec<Option<usize>> = vec![None; left];
    let mut match_r: Vec<Option<usize>> = vec![None; right];
    let mut dist = vec![INF; left];

    fn bfs(
        adj: &[Vec<usize>],
        match_l: &[Option<usize>],
        match_r: &[Option<usize>],
        dist: &mut [usize],
    ) -> bool {
        let mut queue = std::collections::VecDeque::new();
        for (u, m) in match_l.iter().enumerate() {
            if m.is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_r[v] {
                    None => found = true,
                    Some(w) if dist[w] == INF => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    Some(_) => {}
                }
            }
        }
        found
    }

    fn dfs(
        u: usize,
        adj: &[Vec<usize>],
        match_l: &mut [Option<usize>],
        match_r: &mut [Option<usize>],
        dist: &mut [usize],
    ) -> bool {
        for &v in &adj[u] {
            let ok = match match_r[v] {
                None => true,
                Some(w) => dist[w] == dist[u] + 1 && dfs(w, adj, match_l, match_r, dist),
            };
            if ok {
                match_l[u] = Some(v);
                match_r[v] = Some(u);
                return true;
            }
        }
        dist[u] = INF;
        false
    }

    while bfs(adj, &match_l, &match_r, &mut dist) {
        for u in 0..left {
            if match_l[u].is_none() {
                dfs(u, adj, &mut match_l, &mut match_r, &mut dist);
            }
        }
    }
    match_l
}

/// Splits a workload into slot-sized waves and schedules each one.
fn in_waves(
    cluster: &ClusterModel,
    workload: &Workload,
    mut wave: impl FnMut(&[usize], u64) -> Assignment,
    seed: u64,
) -> Assignment {
    let cap = cluster.total_slots();
    let mut out = Assignment::empty(0);
    for (i, chunk) in workload.tasks.chunks(cap).enumerate() {
        out.append(wave(chunk, seed.wrapping_add(i as u64)));
    }
    out
}

/// Delay scheduling with heartbeats from free slots.
///
/// Each round every free slot heartbeats once, in an order shuffled per
/// round. A heartbeat takes the oldest pending task whose block is on that
/// node; failing that, the oldest task that has already waited `delay`
/// rounds runs there remotely.
pub fn schedule_delay(
    cluster: &ClusterModel,
    workload: &Workload,
    delay: usize,
    seed: u64,
) -> Assignment {
    in_waves(
        cluster,
        workload,
        |tasks, s| delay_wave(cluster, tasks, delay, s),
        seed,
    )
}

fn delay_wave(cluster: &ClusterModel, tasks: &[usize], delay: usize, seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots = Slots::new(cluster, tasks.len());
    let mut pending: Vec<usize> = (0..tasks.len()).collect();
    let mut waited = vec![0usize; tasks.len()];
    while !pending.is_empty() {
        let mut beats: Vec<NodeId> = (0..cluster.nodes)
            .flat_map(|n| std::iter::repeat(n).take(slots.free[n]))
            .collect();
        beats.shuffle(&mut rng);
        for node in beats {
            if pending.is_empty() {
                break;
            }
            let pick = pending
                .iter()
                .position(|&t| cluster.hosts(tasks[t]).contains(&node))
                .or_else(|| pending.iter().position(|&t| waited[t] >= delay));
            if let Some(i) = pick {
                let t = pending.remove(i);
                slots.place(t, node);
            }
        }
        for &t in &pending {
            waited[t] += 1;
        }
    }
    slots.finish(tasks)
}

/// Peeling heuristic.
///
/// Tasks with a single hosting node that still has a free slot are placed
/// there first. Otherwise the task whose hosting nodes have the most total
/// slack (free slots minus pending demand) goes to its least-contended host,
/// ties to the lowest node id. Tasks left with no free host run remotely.
pub fn schedule_peeling(cluster: &ClusterModel, workload: &Workload, seed: u64) -> Assignment {
    in_waves(
        cluster,
        workload,
        |tasks, s| peeling_wave(cluster, tasks, s),
        seed,
    )
}

fn peeling_wave(cluster: &ClusterModel, tasks: &[usize], seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots = Slots::new(cluster, tasks.len());
    // Task order only breaks ties between otherwise equal tasks.
    let mut pending: Vec<usize> = (0..tasks.len()).collect();
    pending.shuffle(&mut rng);
    let mut demand = vec![0i64; cluster.nodes];
    for &b in tasks {
        for &n in cluster.hosts(b) {
            demand[n] += 1;
        }
    }
    while !pending.is_empty() {
        let open = |t: usize, free: &[usize]| -> Vec<NodeId> {
            cluster
                .hosts(tasks[t])
                .iter()
                .copied()
                .filter(|&n| free[n] > 0)
                .collect()
        };
        let slack = |n: NodeId, free: &[usize], demand: &[i64]| free[n] as i64 - demand[n];

        let mut chosen: Option<(usize, NodeId)> = None;
        let mut best_slack = i64::MIN;
        for (i, &t) in pending.iter().enumerate() {
            let hosts = open(t, &slots.free);
            match hosts.len() {
                0 => {}
                1 => {
                    chosen = Some((i, hosts[0]));
                    break;
                }
                _ => {
                    let total: i64 = hosts.iter().map(|&n| slack(n, &slots.free, &demand)).sum();
                    if total > best_slack {
                        best_slack = total;
                        let target = *hosts
                            .iter()
                            .max_by_key(|&&n| {
                                (slack(n, &slots.free, &demand), std::cmp::Reverse(n))
                            })
                            .expect("non-empty");
                        chosen = Some((i, target));
                    }
                }
            }
        }
        if let Some((i, node)) = chosen {
            let t = pending[i];
            slots.place(t, node);
            for &n in cluster.hosts(tasks[t]) {
                demand[n] -= 1;
            }
            pending.remove(i);
            continue;
        }
        // No pending task has a free host left.
        break;
    }
    slots.place_remaining_remote();
    slots.finish(tasks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Matching,
    Delay,
    Peeling,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [
        SchedulerKind::Matching,
        SchedulerKind::Delay,
        SchedulerKind::Peeling,
    ];
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Matching => "matching",
            SchedulerKind::Delay => "delay",
            SchedulerKind::Peeling => "peeling",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "matching" | "maxmatch" => Ok(SchedulerKind::Matching),
            "delay" => Ok(SchedulerKind::Delay),
            "peeling" => Ok(SchedulerKind::Peeling),
            _ => Err(SchedError::UnknownScheduler(s.to_string())),
        }
    }
}

/// Runs one scheduler on a workload of any size.
pub fn run_scheduler(
    kind: SchedulerKind,
    cluster: &ClusterModel,
    workload: &Workload,
    delay: usize,
    seed: u64,
) -> Assignment {
    match kind {
        SchedulerKind::Matching => in_waves(
            cluster,
            workload,
            |tasks, _| {
                let w = Workload {
                    tasks: tasks.to_vec(),
                    load_pct: workload.load_pct,
                };
                schedule_maxmatch(cluster, &w).expect("wave fits")
            },
            seed,
        ),
        SchedulerKind::Delay => schedule_delay(cluster, workload, delay, seed),
        SchedulerKind::Peeling => schedule_peeling(cluster, workload, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schemes: Vec<CodeScheme>,
    pub schedulers: Vec<SchedulerKind>,
    pub nodes: usize,
    pub slots: Vec<usize>,
    pub loads: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    pub delay: usize,
    /// Stripes per cluster; `None` picks [`default_stripes`].
    pub stripes: Option<usize>,
}

impl SweepConfig {
    pub fn new(seed: u64) -> Self {
        SweepConfig {
            schemes: vec![
                CodeScheme::Replication { copies: 2 },
                CodeScheme::PENTAGON,
                CodeScheme::HEPTAGON,
                CodeScheme::HeptagonLocal,
            ],
            schedulers: SchedulerKind::ALL.to_vec(),
            nodes: 25,
            slots: vec![2, 4, 8],
            loads: vec![25.0, 50.0, 75.0, 100.0],
            repetitions: 20,
            seed,
            delay: DEFAULT_DELAY_ROUNDS,
            stripes: None,
        }
    }
}

/// One scheduler run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalityRow {
    pub scheme: CodeScheme,
    pub scheduler: SchedulerKind,
    pub nodes: usize,
    pub slots: usize,
    pub load_pct: f64,
    pub seed: u64,
    pub tasks: usize,
    pub local_tasks: usize,
    pub locality_pct: f64,
    pub remote_blocks: usize,
}

impl CsvRow for LocalityRow {
    const HEADER: &'static [&'static str] = &[
        "scheme",
        "scheduler",
        "nodes",
        "slots",
        "load_pct",
        "seed",
        "tasks",
        "local_tasks",
        "locality_pct",
        "remote_blocks",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.scheme.to_string(),
            self.scheduler.to_string(),
            self.nodes.to_string(),
            self.slots.to_string(),
            format!("{}", self.load_pct),
            self.seed.to_string(),
            self.tasks.to_string(),
            self.local_tasks.to_string(),
            format!("{:.4}", self.locality_pct),
            self.remote_blocks.to_string(),
        ]
    }
}

/// Mean and standard deviation over the repetitions of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalitySummary {
    pub scheme: CodeScheme,
    pub scheduler: SchedulerKind,
    pub nodes: usize,
    pub slots: usize,
    pub load_pct: f64,
    pub runs: usize,
    pub mean_locality_pct: f64,
    pub std_locality_pct: f64,
    pub mean_remote_blocks: f64,
    pub std_remote_blocks: f64,
    pub mean_tasks: f64,
}

impl LocalitySummary {
    /// Remote traffic in bytes for a given block size.
    pub fn remote_bytes(&self, block_size: usize) -> f64 {
        self.mean_remote_blocks * block_size as f64
    }
}

impl CsvRow for LocalitySummary {
    const HEADER: &'static [&'static str] = &[
        "scheme",
        "scheduler",
        "nodes",
        "slots",
        "load_pct",
        "runs",
        "mean_locality_pct",
        "std_locality_pct",
        "mean_remote_blocks",
        "std_remote_blocks",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.scheme.to_string(),
            self.scheduler.to_string(),
            self.nodes.to_string(),
            self.slots.to_string(),
            format!("{}", self.load_pct),
            self.runs.to_string(),
            format!("{:.4}", self.mean_locality_pct),
            format!("{:.4}", self.std_locality_pct),
            format!("{:.4}", self.mean_remote_blocks),
            format!("{:.4}", self.std_remote_blocks),
        ]
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs every scheduler on shared instances across the configured grid.
///
/// Repetition `r` uses seed `config.seed + r` for the cluster, the workload
/// and the schedulers, so all schedulers see the same instance.
pub fn locality_sweep(config: &SweepConfig) -> Result<Vec<LocalityRow>, SchedError> {
    for &load in &config.loads {
        if !(load > 0.0 && load <= 200.0) {
            return Err(SchedError::BadLoad(load));
        }
    }
    let mut cells = Vec::new();
    for &scheme in &config.schemes {
        for &slots in &config.slots {
            for &load in &config.loads {
                for r in 0..config.repetitions {
                    cells.push((scheme, slots, load, config.seed.wrapping_add(r as u64)));
                }
            }
        }
    }
    let per_cell: Vec<Vec<LocalityRow>> = cells
        .par_iter()
        .map(|&(scheme, slots, load, seed)| {
            let stripes = config
                .stripes
                .unwrap_or_else(|| default_stripes(scheme, config.nodes, slots));
            let cluster = build_cluster(scheme, config.nodes, slots, stripes, seed)?;
            let workload = generate_workload(&cluster, load, seed)?;
            Ok(config
                .schedulers
                .iter()
                .map(|&kind| {
                    let a = run_scheduler(kind, &cluster, &workload, config.delay, seed);
                    LocalityRow {
                        scheme,
                        scheduler: kind,
                        nodes: config.nodes,
                        slots,
                        load_pct: load,
                        seed,
                        tasks: workload.tasks.len(),
                        local_tasks: a.local_tasks(),
                        locality_pct: a.locality_pct(),
                        remote_blocks: a.remote_blocks(),
                    }
                })
                .collect())
        })
        .collect::<Result<_, SchedError>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Groups sweep rows by cell, in first-seen order.
pub fn summarize(rows: &[LocalityRow]) -> Vec<LocalitySummary> {
    let mut keys: Vec<(CodeScheme, SchedulerKind, usize, usize, u64)> = Vec::new();
    let mut groups: Vec<Vec<&LocalityRow>> = Vec::new();
    for row in rows {
        let key = (
            row.scheme,
            row.scheduler,
            row.nodes,
            row.slots,
            row.load_pct.to_bits(),
        );
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(row),
            None => {
                keys.push(key);
                groups.push(vec![row]);
            }
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let loc: Vec<f64> = g.iter().map(|r| r.locality_pct).collect();
            let rem: Vec<f64> = g.iter().map(|r| r.remote_blocks as f64).collect();
            let tasks: Vec<f64> = g.iter().map(|r| r.tasks as f64).collect();
            let (ml, sl) = mean_std(&loc);
            let (mr, sr) = mean_std(&rem);
            LocalitySummary {
                scheme: g[0].scheme,
                scheduler: g[0].scheduler,
                nodes: g[0].nodes,
                slots: g[0].slots,
                load_pct: g[0].load_pct,
                runs: g.len(),
                mean_locality_pct: ml,
                std_locality_pct: sl,
                mean_remote_blocks: mr,
                std_remote_blocks: sr,
                mean_tasks: mean_std(&tasks).0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(nodes: usize, slots: usize, catalog: Vec<Vec<NodeId>>) -> ClusterModel {
        ClusterModel {
            nodes,
            slots,
            catalog,
        }
    }

    fn wl(tasks: Vec<usize>) -> Workload {
        Workload {
            tasks,
            load_pct: 100.0,
        }
    }

    fn capacity_ok(c: &ClusterModel, a: &Assignment, wave: usize) {
        for chunk in a.node.chunks(wave) {
            let mut used = vec![0; c.nodes];
            for &n in chunk {
                used[n] += 1;
            }
            assert!(used.iter().all(|&u| u <= c.slots));
        }
    }

    /// Augmenting-path matching with node capacities, for cross-checking.
    fn kuhn_local(c: &ClusterModel, tasks: &[usize]) -> usize {
        fn try_task(
            t: usize,
            c: &ClusterModel,
            tasks: &[usize],
            owner: &mut Vec<Vec<usize>>,
            seen: &mut Vec<bool>,
        ) -> bool {
            for &n in c.hosts(tasks[t]) {
                if seen[n] {
                    continue;
                }
                seen[n] = true;
                if owner[n].len() < c.slots {
                    owner[n].push(t);
                    return true;
                }
                for i in 0..owner[n].len() {
                    let other = owner[n][i];
                    if try_task(other, c, tasks, owner, seen) {
                        owner[n][i] = t;
                        return true;
                    }
                }
            }
            false
        }
        let mut owner = vec![Vec::new(); c.nodes];
        let mut count = 0;
        for t in 0..tasks.len() {
            let mut seen = vec![false; c.nodes];
            if try_task(t, c, tasks, &mut owner, &mut seen) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn pentagon_cluster_structure() {
        let c = build_cluster(CodeScheme::PENTAGON, 25, 4, 10, 7).unwrap();
        assert_eq!(c.catalog.len(), 90);
        for stripe in c.catalog.chunks(9) {
            let mut nodes: Vec<_> = stripe.iter().flatten().copied().collect();
            nodes.sort();
            nodes.dedup();
            assert_eq!(nodes.len(), 5);
            for n in &nodes {
                // 4 blocks per node, one of which is the parity
                let held = stripe.iter().filter(|h| h.contains(n)).count();
                assert!(held == 3 || held == 4);
            }
        }
        assert_eq!(
            c,
            build_cluster(CodeScheme::PENTAGON, 25, 4, 10, 7).unwrap()
        );
    }

    #[test]
    fn replication_cluster() {
        let c = build_cluster(CodeScheme::Replication { copies: 2 }, 25, 2, 50, 1).unwrap();
        assert!(c.catalog.iter().all(|h| h.len() == 2 && h[0] != h[1]));
        let hl = build_cluster(CodeScheme::HeptagonLocal, 25, 2, 3, 1).unwrap();
        assert_eq!(hl.catalog.len(), 120);
        assert!(matches!(
            build_cluster(CodeScheme::HeptagonLocal, 14, 2, 1, 1),
            Err(SchedError::TooFewNodes { .. })
        ));
        assert!(matches!(
            build_cluster(CodeScheme::PENTAGON, 5, 0, 1, 1),
            Err(SchedError::NoSlots)
        ));
    }

    #[test]
    fn workload_sizes() {
        let c = fixed(100, 4, vec![vec![0]]);
        assert_eq!(generate_workload(&c, 62.5, 1).unwrap().tasks.len(), 250);
        let c = fixed(25, 2, vec![vec![0], vec![1]]);
        let w = generate_workload(&c, 100.0, 3).unwrap();
        assert_eq!(w.tasks.len(), 50);
        assert_eq!(w, generate_workload(&c, 100.0, 3).unwrap());
        assert!(generate_workload(&c, 0.0, 1).is_err());
        assert!(generate_workload(&c, 200.5, 1).is_err());
        assert!(matches!(
            generate_workload(&fixed(2, 1, vec![]), 50.0, 1),
            Err(SchedError::EmptyCatalog)
        ));
    }

    #[test]
    fn matching_small_cases() {
        let c = fixed(4, 1, (0..4).map(|n| vec![n]).collect());
        let a = schedule_maxmatch(&c, &wl(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(a.locality_pct(), 100.0);

        let c = fixed(3, 2, vec![vec![0]]);
        let a = schedule_maxmatch(&c, &wl(vec![0; 4])).unwrap();
        assert_eq!(a.local_tasks(), 2);
        assert_eq!(a.remote_blocks(), 2);
        capacity_ok(&c, &a, 4);

        assert!(matches!(
            schedule_maxmatch(&c, &wl(vec![0; 7])),
            Err(SchedError::Overload { tasks: 7, slots: 6 })
        ));
    }

    #[test]
    fn matching_agrees_with_augmenting_paths() {
        for seed in 0..30 {
            let c = build_cluster(CodeScheme::PENTAGON, 25, 2, 6, seed).unwrap();
            let w = generate_workload(&c, 100.0, seed).unwrap();
            let a = schedule_maxmatch(&c, &w).unwrap();
            assert_eq!(a.local_tasks(), kuhn_local(&c, &w.tasks), "seed {seed}");
        }
    }

    #[test]
    fn delay_cases() {
        let c = fixed(4, 1, (0..4).map(|n| vec![n]).collect());
        let a = schedule_delay(&c, &wl(vec![3, 2, 1, 0]), 10, 5);
        assert_eq!(a.locality_pct(), 100.0);

        let c = fixed(3, 2, vec![vec![0]]);
        let a = schedule_delay(&c, &wl(vec![0; 4]), 1, 5);
        assert_eq!(a.local_tasks(), 2);
        capacity_ok(&c, &a, 6);
        assert_eq!(a, schedule_delay(&c, &wl(vec![0; 4]), 1, 5));
    }

    #[test]
    fn peeling_places_single_option_first() {
        // Task 1 can only use node 0; task 0 can use 0 or 1.
        let c = fixed(2, 1, vec![vec![0, 1], vec![0]]);
        let a = schedule_peeling(&c, &wl(vec![0, 1]), 3);
        assert_eq!(a.node, vec![1, 0]);
        assert_eq!(a.locality_pct(), 100.0);
    }

    #[test]
    fn schedulers_respect_capacity_and_matching_bound() {
        for seed in 0..20 {
            for scheme in [CodeScheme::PENTAGON, CodeScheme::HEPTAGON] {
                let c = build_cluster(scheme, 25, 2, default_stripes(scheme, 25, 2), seed).unwrap();
                for load in [50.0, 100.0, 150.0] {
                    let w = generate_workload(&c, load, seed).unwrap();
                    let m = run_scheduler(SchedulerKind::Matching, &c, &w, 1, seed);
                    for kind in [SchedulerKind::Delay, SchedulerKind::Peeling] {
                        let a = run_scheduler(kind, &c, &w, 1, seed);
                        assert_eq!(a.node.len(), w.tasks.len());
                        capacity_ok(&c, &a, c.total_slots());
                        assert!(a.local_tasks() <= m.local_tasks());
                    }
                    let zero = schedule_delay(&c, &w, 0, seed);
                    assert!(zero.local_tasks() <= m.local_tasks());
                }
            }
        }
    }

    #[test]
    fn waves_over_full_load() {
        let c = fixed(2, 1, vec![vec![0], vec![1]]);
        let w = wl(vec![0, 1, 0, 1, 0]);
        let a = run_scheduler(SchedulerKind::Matching, &c, &w, 1, 0);
        assert_eq!(a.waves, 3);
        assert_eq!(a.locality_pct(), 100.0);
        assert_eq!(schedule_delay(&c, &w, 1, 0).waves, 3);
    }

    #[test]
    fn sweep_rows_and_summary() {
        let mut cfg = SweepConfig::new(11);
        cfg.slots = vec![2];
        cfg.loads = vec![50.0, 100.0];
        cfg.repetitions = 3;
        let rows = locality_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4 * 2 * 3 * 3);
        assert_eq!(rows, locality_sweep(&cfg).unwrap());
        let sum = summarize(&rows);
        assert_eq!(sum.len(), 4 * 2 * 3);
        assert!(sum.iter().all(|s| s.runs == 3));
        for r in &rows {
            assert_eq!(r.remote_blocks + r.local_tasks, r.tasks);
        }
        cfg.loads = vec![0.0];
        assert!(locality_sweep(&cfg).is_err());
    }

    #[test]
    fn scheduler_names() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.to_string().parse::<SchedulerKind>().unwrap(), k);
        }
        assert!("fifo".parse::<SchedulerKind>().is_err());
    }
}
