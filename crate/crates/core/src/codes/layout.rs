use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scheme::{BlockId, BlockRole, CodeScheme, NodeId};
use super::CodeError;

/// Per-node view of a stripe: node -> block -> bytes.
pub type NodeBlocks = BTreeMap<NodeId, BTreeMap<BlockId, Vec<u8>>>;

/// Placement of one stripe's blocks onto concrete nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripeLayout {
    pub scheme: CodeScheme,
    /// Concrete node for each position `0..code_length`.
    pub nodes: Vec<NodeId>,
    /// `hosts[block][replica]` is the node holding that replica.
    pub hosts: Vec<Vec<NodeId>>,
    pub roles: Vec<BlockRole>,
}

/// A set of failed nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErasurePattern {
    pub failed: BTreeSet<NodeId>,
}

impl ErasurePattern {
    pub fn new(failed: impl IntoIterator<Item = NodeId>) -> Self {
        ErasurePattern {
            failed: failed.into_iter().collect(),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.failed.contains(&node)
    }

    pub fn len(&self) -> usize {
        self.failed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.failed.is_empty()
    }
}

impl StripeLayout {
    /// Layout with positions mapped to node ids `0..code_length`.
    pub fn canonical(scheme: CodeScheme) -> Self {
        Self::with_nodes(scheme, (0..scheme.code_length()).collect())
    }

    /// Layout with position `i` mapped to `nodes[i]`.
    pub fn with_nodes(scheme: CodeScheme, nodes: Vec<NodeId>) -> Self {
        assert_eq!(nodes.len(), scheme.code_length(), "one node per position");
        let hosts = (0..scheme.distinct_blocks())
            .map(|b| {
                scheme
                    .canonical_hosts(b)
                    .into_iter()
                    .map(|p| nodes[p])
                    .collect()
            })
            .collect();
        let roles = (0..scheme.distinct_blocks())
            .map(|b| scheme.role(b))
            .collect();
        StripeLayout {
            scheme,
            nodes,
            hosts,
            roles,
        }
    }

    /// Replicas of `block` that are not on a failed node.
    pub fn live_hosts<'a>(
        &'a self,
        block: BlockId,
        pattern: &'a ErasurePattern,
    ) -> impl Iterator<Item = NodeId> + 'a {
        self.hosts[block]
            .iter()
            .copied()
            .filter(move |n| !pattern.contains(*n))
    }

    /// Blocks with every replica on a failed node.
    pub fn fully_lost(&self, pattern: &ErasurePattern) -> Vec<BlockId> {
        (0..self.hosts.len())
            .filter(|&b| self.live_hosts(b, pattern).next().is_none())
            .collect()
    }

    /// `(block, replica)` pairs stored on `node`, in block order.
    pub fn blocks_on(&self, node: NodeId) -> Vec<(BlockId, usize)> {
        self.hosts
            .iter()
            .enumerate()
            .flat_map(|(b, hs)| {
                hs.iter()
                    .enumerate()
                    .filter(move |(_, &n)| n == node)
                    .map(move |(r, _)| (b, r))
            })
            .collect()
    }

    /// Spreads coded blocks onto their hosts, skipping failed nodes.
    pub fn distribute(&self, coded: &[Vec<u8>], pattern: &ErasurePattern) -> NodeBlocks {
        let mut out = NodeBlocks::new();
        for (b, hs) in self.hosts.iter().enumerate() {
            for &n in hs {
                if !pattern.contains(n) {
                    out.entry(n).or_default().insert(b, coded[b].clone());
                }
            }
        }
        out
    }

    pub fn node_index(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }

    pub fn check_pattern(&self, pattern: &ErasurePattern) -> Result<(), CodeError> {
        match pattern
            .failed
            .iter()
            .find(|n| self.node_index(**n).is_none())
        {
            Some(&n) => Err(CodeError::NodeOutOfRange(n)),
            None => Ok(()),
        }
    }
}

/// Places one stripe of `scheme` onto nodes drawn from `node_pool`.
///
/// Polygon and heptagon-local layouts take the first `code_length` nodes of
/// the pool in order. Replication and RAID+m draw distinct nodes from the
/// pool with a generator seeded by `seed`.
pub fn build_layout(
    scheme: CodeScheme,
    node_pool: &[NodeId],
    seed: u64,
) -> Result<StripeLayout, CodeError> {
    scheme.validate()?;
    let need = scheme.code_length();
    let distinct: BTreeSet<_> = node_pool.iter().collect();
    if distinct.len() < need || distinct.len() != node_pool.len() {
        return Err(CodeError::PoolTooSmall {
            need,
            have: distinct.len(),
        });
    }
    let nodes = match scheme {
        CodeScheme::Polygon { .. } | CodeScheme::HeptagonLocal => node_pool[..need].to_vec(),
        CodeScheme::Replication { .. } | CodeScheme::RaidMirror { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool = node_pool.to_vec();
            pool.shuffle(&mut rng);
            pool.truncate(need);
            pool
        }
    };
    Ok(StripeLayout::with_nodes(scheme, nodes))
}
