//! Repair and degraded-read planning.
//!
//! A plan is an ordered list of block-sized transfers. Each transfer carries
//! either a whole block or a partial parity (a GF(256) combination of blocks
//! held by the source) and is XOR-accumulated into a target block at the
//! destination. Lost blocks with a surviving replica are copied; blocks with
//! no surviving replica are rebuilt from the parity relations with the
//! smallest total support, one partial parity per contributing node.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::coding::{for_each_subset, layout_recoverable, tolerance};
use super::layout::{ErasurePattern, StripeLayout};
use super::scheme::{BlockId, CodeScheme, NodeId};
use super::CodeError;
use crate::gf256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    Node(NodeId),
    /// The client performing a degraded read.
    Reader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub block: BlockId,
    pub coef: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    WholeCopy(BlockId),
    /// Combination computed at the source; plain XOR when every `coef` is 1.
    PartialParity(Vec<Term>),
}

impl Payload {
    pub fn terms(&self) -> Vec<Term> {
        match self {
            Payload::WholeCopy(b) => vec![Term { block: *b, coef: 1 }],
            Payload::PartialParity(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub src: NodeId,
    pub dst: Site,
    pub payload: Payload,
    /// Block at `dst` this payload is accumulated into.
    pub target: BlockId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPlan {
    pub transfers: Vec<Transfer>,
    /// Blocks the plan leaves in place once executed.
    pub outputs: Vec<(Site, BlockId)>,
    pub bandwidth_blocks: usize,
}

impl RepairPlan {
    fn push(&mut self, t: Transfer) {
        self.transfers.push(t);
        self.bandwidth_blocks = self.transfers.len();
    }

    pub fn whole_copies(&self) -> usize {
        self.transfers
            .iter()
            .filter(|t| matches!(t.payload, Payload::WholeCopy(_)))
            .count()
    }

    pub fn partial_parities(&self) -> usize {
        self.bandwidth_blocks - self.whole_copies()
    }
}

/// Something that can hand out stored block contents, checksum-verified.
pub trait BlockSource {
    fn read(&self, node: NodeId, block: BlockId) -> Result<Vec<u8>, CodeError>;
}

/// In-memory stripe contents with a CRC32 kept beside every block.
#[derive(Debug, Clone)]
pub struct MemorySource {
    stored: BTreeMap<(NodeId, BlockId), Vec<u8>>,
    crcs: Vec<u32>,
}

impl MemorySource {
    pub fn new(layout: &StripeLayout, coded: &[Vec<u8>], pattern: &ErasurePattern) -> Self {
        let mut stored = BTreeMap::new();
        for (b, hosts) in layout.hosts.iter().enumerate() {
            for &n in hosts {
                if !pattern.contains(n) {
                    stored.insert((n, b), coded[b].clone());
                }
            }
        }
        MemorySource {
            stored,
            crcs: coded.iter().map(|c| crc32fast::hash(c)).collect(),
        }
    }

    /// Flips one byte of a stored replica without touching its checksum.
    pub fn corrupt(&mut self, node: NodeId, block: BlockId, offset: usize) {
        if let Some(bytes) = self.stored.get_mut(&(node, block)) {
            bytes[offset] ^= 0xFF;
        }
    }
}

impl BlockSource for MemorySource {
    fn read(&self, node: NodeId, block: BlockId) -> Result<Vec<u8>, CodeError> {
        let bytes = self
            .stored
            .get(&(node, block))
            .ok_or(CodeError::MissingSource { node, block })?;
        if crc32fast::hash(bytes) != self.crcs[block] {
            return Err(CodeError::ChecksumMismatch { node, block });
        }
        Ok(bytes.clone())
    }
}

/// Fully lost blocks expressed as combinations of surviving blocks.
struct LostSolution {
    coeffs: BTreeMap<BlockId, Vec<(BlockId, u8)>>,
    components: Vec<Vec<BlockId>>,
}

fn solve_lost(layout: &StripeLayout, pattern: &ErasurePattern) -> Result<LostSolution, CodeError> {
    let lost = layout.fully_lost(pattern);
    if lost.is_empty() {
        return Ok(LostSolution {
            coeffs: BTreeMap::new(),
            components: Vec::new(),
        });
    }
    let relations = layout.scheme.relations();
    let m = lost.len();
    let mut best: Option<(usize, Vec<usize>, Vec<Vec<u8>>)> = None;
    for_each_subset(relations.len(), m, |subset| {
        let sub: Vec<Vec<u8>> = subset
            .iter()
            .map(|&r| lost.iter().map(|&u| relations[r].coef(u)).collect())
            .collect();
        let Some(inverse) = gf256::invert(&sub) else {
            return;
        };
        let support: BTreeSet<BlockId> = subset
            .iter()
            .flat_map(|&r| relations[r].terms.iter().map(|t| t.0))
            .filter(|b| !lost.contains(b))
            .collect();
        if best.as_ref().map_or(true, |(c, _, _)| support.len() < *c) {
            best = Some((support.len(), subset.to_vec(), inverse));
        }
    });
    let (_, subset, inverse) = best.ok_or(CodeError::Unrecoverable)?;

    let mut coeffs = BTreeMap::new();
    for (k, &u) in lost.iter().enumerate() {
        let mut acc: BTreeMap<BlockId, u8> = BTreeMap::new();
        for (ri, &r) in subset.iter().enumerate() {
            let f = inverse[k][ri];
            if f == 0 {
                continue;
            }
            for &(y, c) in &relations[r].terms {
                if !lost.contains(&y) {
                    *acc.entry(y).or_default() ^= gf256::mul(f, c);
                }
            }
        }
        coeffs.insert(u, acc.into_iter().filter(|&(_, c)| c != 0).collect());
    }

    // Unknowns sharing a chosen relation are solved together.
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        if p[i] != i {
            let root = find(p, p[i]);
            p[i] = root;
        }
        p[i]
    }
    for &r in &subset {
        let members: Vec<usize> = (0..m)
            .filter(|&k| relations[r].coef(lost[k]) != 0)
            .collect();
        for w in members.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut groups: BTreeMap<usize, Vec<BlockId>> = BTreeMap::new();
    for k in 0..m {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(lost[k]);
    }
    let mut components: Vec<Vec<BlockId>> = groups.into_values().collect();
    components.sort();
    Ok(LostSolution { coeffs, components })
}

/// Picks which surviving node supplies each needed block.
///
/// Nodes holding the only live copy of some needed block are selected
/// first. Remaining blocks go to the lowest-indexed selected node that holds
/// them; if none does, the live node covering the most unassigned blocks is
/// selected (ties to the lowest id).
fn assign_sources(
    layout: &StripeLayout,
    pattern: &ErasurePattern,
    needed: &BTreeSet<BlockId>,
) -> BTreeMap<NodeId, Vec<BlockId>> {
    let mut selected: BTreeSet<NodeId> = needed
        .iter()
        .filter_map(|&y| {
            let mut live = layout.live_hosts(y, pattern);
            match (live.next(), live.next()) {
                (Some(n), None) => Some(n),
                _ => None,
            }
        })
        .collect();
    let mut assignment: BTreeMap<NodeId, Vec<BlockId>> = BTreeMap::new();
    let mut pending: BTreeSet<BlockId> = needed.clone();
    loop {
        pending.retain(|&y| {
            match layout
                .live_hosts(y, pattern)
                .filter(|n| selected.contains(n))
                .min()
            {
                Some(n) => {
                    assignment.entry(n).or_default().push(y);
                    false
                }
                None => true,
            }
        });
        if pending.is_empty() {
            break;
        }
        let mut cover: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &y in &pending {
            for n in layout.live_hosts(y, pattern) {
                *cover.entry(n).or_default() += 1;
            }
        }
        let best = cover
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&n, _)| n)
            .expect("needed blocks have live hosts");
        selected.insert(best);
    }
    assignment
}

fn rebuild_transfers(
    plan: &mut RepairPlan,
    layout: &StripeLayout,
    pattern: &ErasurePattern,
    solution: &LostSolution,
    targets: &[BlockId],
    dst: Site,
) {
    let needed: BTreeSet<BlockId> = targets
        .iter()
        .flat_map(|u| solution.coeffs[u].iter().map(|t| t.0))
        .collect();
    let sources = assign_sources(layout, pattern, &needed);
    for &u in targets {
        let row: HashMap<BlockId, u8> = solution.coeffs[&u].iter().copied().collect();
        for (&src, blocks) in &sources {
            let terms: Vec<Term> = blocks
                .iter()
                .filter_map(|y| row.get(y).map(|&coef| Term { block: *y, coef }))
                .collect();
            let payload = match terms.as_slice() {
                [] => continue,
                [Term { block, coef: 1 }] => Payload::WholeCopy(*block),
                _ => Payload::PartialParity(terms),
            };
            plan.push(Transfer {
                src,
                dst,
                payload,
                target: u,
            });
        }
    }
}

fn max_repairable(scheme: CodeScheme) -> usize {
    match scheme {
        CodeScheme::Polygon { .. } => 2,
        CodeScheme::HeptagonLocal => 3,
        _ => tolerance(scheme),
    }
}

/// Plans the rebuild of every block replica hosted on the failed nodes onto
/// their replacements (which keep the failed nodes' ids).
pub fn plan_repair(
    layout: &StripeLayout,
    pattern: &ErasurePattern,
) -> Result<RepairPlan, CodeError> {
    layout.check_pattern(pattern)?;
    let mut plan = RepairPlan::default();
    if pattern.is_empty() {
        return Ok(plan);
    }
    if !layout_recoverable(layout, pattern) {
        return Err(CodeError::Unrecoverable);
    }
    let limit = max_repairable(layout.scheme);
    if pattern.len() > limit {
        return Err(CodeError::UnsupportedPattern {
            failed: pattern.len(),
            limit,
        });
    }

    for (b, hosts) in layout.hosts.iter().enumerate() {
        let Some(src) = layout.live_hosts(b, pattern).min() else {
            continue;
        };
        for &f in hosts.iter().filter(|&&f| pattern.contains(f)) {
            plan.push(Transfer {
                src,
                dst: Site::Node(f),
                payload: Payload::WholeCopy(b),
                target: b,
            });
            plan.outputs.push((Site::Node(f), b));
        }
    }

    let solution = solve_lost(layout, pattern)?;
    for comp in &solution.components {
        let builder = comp
            .iter()
            .flat_map(|&u| layout.hosts[u].iter().copied())
            .min()
            .expect("lost blocks have hosts");
        rebuild_transfers(
            &mut plan,
            layout,
            pattern,
            &solution,
            comp,
            Site::Node(builder),
        );
        for &u in comp {
            for &f in &layout.hosts[u] {
                if f != builder {
                    plan.push(Transfer {
                        src: builder,
                        dst: Site::Node(f),
                        payload: Payload::WholeCopy(u),
                        target: u,
                    });
                }
                plan.outputs.push((Site::Node(f), u));
            }
        }
    }
    Ok(plan)
}

/// Plans delivery of one block, all of whose replicas are down, to a reader.
pub fn plan_degraded_read(
    layout: &StripeLayout,
    block: BlockId,
    down: &ErasurePattern,
) -> Result<RepairPlan, CodeError> {
    layout.check_pattern(down)?;
    if block >= layout.hosts.len() {
        return Err(CodeError::NoSuchBlock(block));
    }
    if layout.live_hosts(block, down).next().is_some() {
        return Err(CodeError::BlockAvailable(block));
    }
    if !layout_recoverable(layout, down) {
        return Err(CodeError::Unrecoverable);
    }
    let solution = solve_lost(layout, down)?;
    let mut plan = RepairPlan::default();
    rebuild_transfers(&mut plan, layout, down, &solution, &[block], Site::Reader);
    plan.outputs.push((Site::Reader, block));
    Ok(plan)
}

/// Runs a plan against stored contents and returns the blocks it produces.
pub fn execute_plan(
    plan: &RepairPlan,
    source: &dyn BlockSource,
) -> Result<BTreeMap<(Site, BlockId), Vec<u8>>, CodeError> {
    execute_plan_observed(plan, source, |_, _| {})
}

/// [`execute_plan`], calling `on_transfer` with every payload as it is sent.
pub fn execute_plan_observed(
    plan: &RepairPlan,
    source: &dyn BlockSource,
    mut on_transfer: impl FnMut(&Transfer, &[u8]),
) -> Result<BTreeMap<(Site, BlockId), Vec<u8>>, CodeError> {
    let mut acc: HashMap<(Site, BlockId), Vec<u8>> = HashMap::new();
    for t in &plan.transfers {
        let mut payload: Option<Vec<u8>> = None;
        for term in t.payload.terms() {
            let value = match acc.get(&(Site::Node(t.src), term.block)) {
                Some(v) => v.clone(),
                None => source.read(t.src, term.block)?,
            };
            let buf = payload.get_or_insert_with(|| vec![0u8; value.len()]);
            if buf.len() != value.len() {
                return Err(CodeError::UnequalBlockLengths);
            }
            gf256::mul_acc(buf, &value, term.coef);
        }
        let payload = payload.unwrap_or_default();
        on_transfer(t, &payload);
        let slot = acc
            .entry((t.dst, t.target))
            .or_insert_with(|| vec![0u8; payload.len()]);
        if slot.len() != payload.len() {
            return Err(CodeError::UnequalBlockLengths);
        }
        gf256::mul_acc(slot, &payload, 1);
    }
    Ok(plan
        .outputs
        .iter()
        .filter_map(|key| acc.remove(key).map(|v| (*key, v)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::coding::encode_stripe;
    use super::*;

    fn coded(scheme: CodeScheme, len: usize) -> Vec<Vec<u8>> {
        let data: Vec<Vec<u8>> = (0..scheme.data_blocks())
            .map(|i| (0..len).map(|j| (i * 37 + j * 11 + 1) as u8).collect())
            .collect();
        encode_stripe(scheme, &data).unwrap()
    }

    fn check_plan(
        layout: &StripeLayout,
        pattern: &ErasurePattern,
        plan: &RepairPlan,
        coded: &[Vec<u8>],
    ) {
        let src = MemorySource::new(layout, coded, pattern);
        let out = execute_plan(plan, &src).unwrap();
        assert_eq!(out.len(), plan.outputs.len());
        for ((_, b), bytes) in out {
            assert_eq!(bytes, coded[b], "block {b}");
        }
    }

    #[test]
    fn pentagon_single_and_double() {
        let s = CodeScheme::PENTAGON;
        let l = StripeLayout::canonical(s);
        let c = coded(s, 64);
        for f in 0..5 {
            let p = ErasurePattern::new([f]);
            let plan = plan_repair(&l, &p).unwrap();
            assert_eq!(plan.bandwidth_blocks, 4);
            assert_eq!(plan.whole_copies(), 4);
            check_plan(&l, &p, &plan, &c);
        }
        for_each_subset(5, 2, |pair| {
            let p = ErasurePattern::new(pair.iter().copied());
            let plan = plan_repair(&l, &p).unwrap();
            assert_eq!(plan.bandwidth_blocks, 10);
            assert_eq!(plan.partial_parities(), 3);
            assert_eq!(plan.outputs.len(), 8);
            check_plan(&l, &p, &plan, &c);
        });
    }

    #[test]
    fn survivor_edges_go_to_lower_endpoint() {
        let l = StripeLayout::canonical(CodeScheme::PENTAGON);
        let plan = plan_repair(&l, &ErasurePattern::new([0, 1])).unwrap();
        let by_src: BTreeMap<NodeId, usize> = plan
            .transfers
            .iter()
            .filter_map(|t| match &t.payload {
                Payload::PartialParity(terms) => Some((t.src, terms.len())),
                _ => None,
            })
            .collect();
        // Node 2 takes (2,3),(2,4); node 3 takes (3,4); node 4 takes none.
        assert_eq!(by_src, BTreeMap::from([(2, 4), (3, 3), (4, 2)]));
        assert!(plan.transfers.iter().all(|t| t.dst != Site::Node(2)));
        let last = plan.transfers.last().unwrap();
        assert_eq!((last.src, last.dst), (0, Site::Node(1)));
    }

    #[test]
    fn degraded_reads() {
        let s = CodeScheme::PENTAGON;
        let l = StripeLayout::canonical(s);
        let c = coded(s, 32);
        let down = ErasurePattern::new([0, 1]);
        let plan = plan_degraded_read(&l, 0, &down).unwrap();
        assert_eq!(plan.bandwidth_blocks, 3);
        check_plan(&l, &down, &plan, &c);
        assert_eq!(
            plan_degraded_read(&l, 1, &down).unwrap_err(),
            CodeError::BlockAvailable(1)
        );
        assert_eq!(
            plan_degraded_read(&l, 0, &ErasurePattern::new([0, 1, 2])).unwrap_err(),
            CodeError::Unrecoverable
        );

        let r = CodeScheme::RaidMirror { data: 9 };
        let rl = StripeLayout::canonical(r);
        let rc = coded(r, 32);
        let down = ErasurePattern::new([4, 5]);
        let plan = plan_degraded_read(&rl, 2, &down).unwrap();
        assert_eq!(plan.bandwidth_blocks, 9);
        assert_eq!(plan.whole_copies(), 9);
        check_plan(&rl, &down, &plan, &rc);
    }

    #[test]
    fn heptagon_local_triple_uses_global_node() {
        let s = CodeScheme::HeptagonLocal;
        let l = StripeLayout::canonical(s);
        let c = coded(s, 16);
        let p = ErasurePattern::new([0, 1, 2]);
        let plan = plan_repair(&l, &p).unwrap();
        assert!(plan.transfers.iter().any(|t| t.src == 14));
        assert!(plan.transfers.iter().any(|t| (7..14).contains(&t.src)));
        check_plan(&l, &p, &plan, &c);

        let local = ErasurePattern::new([3, 5]);
        let plan = plan_repair(&l, &local).unwrap();
        assert!(plan.transfers.iter().all(|t| t.src < 7));
        assert_eq!(plan.bandwidth_blocks, 3 * 5 + 1);
        check_plan(&l, &local, &plan, &c);
    }

    #[test]
    fn unsupported_and_fatal() {
        let l = StripeLayout::canonical(CodeScheme::HeptagonLocal);
        let four = ErasurePattern::new([0, 1, 7, 8]);
        assert_eq!(
            plan_repair(&l, &four).unwrap_err(),
            CodeError::UnsupportedPattern {
                failed: 4,
                limit: 3
            }
        );
        let pl = StripeLayout::canonical(CodeScheme::HEPTAGON);
        assert_eq!(
            plan_repair(&pl, &ErasurePattern::new([0, 1, 2])).unwrap_err(),
            CodeError::Unrecoverable
        );
        assert_eq!(
            plan_repair(&pl, &ErasurePattern::none())
                .unwrap()
                .bandwidth_blocks,
            0
        );
    }

    #[test]
    fn execute_empty_and_corrupt() {
        let s = CodeScheme::PENTAGON;
        let l = StripeLayout::canonical(s);
        let c = coded(s, 32);
        let none = ErasurePattern::none();
        let src = MemorySource::new(&l, &c, &none);
        assert!(execute_plan(&RepairPlan::default(), &src)
            .unwrap()
            .is_empty());

        let p = ErasurePattern::new([0, 1]);
        let plan = plan_repair(&l, &p).unwrap();
        let mut src = MemorySource::new(&l, &c, &p);
        src.corrupt(3, 9, 0);
        assert_eq!(
            execute_plan(&plan, &src).unwrap_err(),
            CodeError::ChecksumMismatch { node: 3, block: 9 }
        );
    }
}
