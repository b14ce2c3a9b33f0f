//! Coding schemes with inherent double replication, and the replication and
//! RAID+mirroring baselines they are compared against.
//!
//! Every scheme is linear over GF(256): each distinct coded block is a fixed
//! combination of the stripe's data blocks ([`CodeScheme::generator_row`]),
//! and the code is the common kernel of a handful of parity relations
//! ([`CodeScheme::relations`]). Recoverability is decided from the first
//! view, decoding and repair planning work from the second.

mod coding;
mod layout;
mod repair;
mod scheme;

use thiserror::Error;

pub use coding::{
    count_fatal, decode_stripe, encode_stripe, for_each_subset, is_recoverable, layout_recoverable,
    tolerance,
};
pub use layout::{build_layout, ErasurePattern, NodeBlocks, StripeLayout};
pub use repair::{
    execute_plan, execute_plan_observed, plan_degraded_read, plan_repair, BlockSource,
    MemorySource, Payload, RepairPlan, Site, Term, Transfer,
};
pub use scheme::{
    complete_graph_edges, global_coef, BlockId, BlockRole, CodeScheme, NodeId, Ratio, Relation,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("expected {expected} data blocks, got {got}")]
    WrongBlockCount { expected: usize, got: usize },
    #[error("blocks have unequal lengths")]
    UnequalBlockLengths,
    #[error("node pool too small: need {need}, have {have}")]
    PoolTooSmall { need: usize, have: usize },
    #[error("node {0} is not part of the stripe")]
    NodeOutOfRange(NodeId),
    #[error("no such block {0}")]
    NoSuchBlock(BlockId),
    #[error("unrecoverable erasure pattern")]
    Unrecoverable,
    #[error("surviving data is inconsistent at block {block}")]
    Inconsistent { block: BlockId },
    #[error("cannot plan repair of {failed} failed nodes (limit {limit})")]
    UnsupportedPattern { failed: usize, limit: usize },
    #[error("block {0} still has a live replica")]
    BlockAvailable(BlockId),
    #[error("source node {node} does not hold block {block}")]
    MissingSource { node: NodeId, block: BlockId },
    #[error("checksum mismatch on node {node} block {block}")]
    ChecksumMismatch { node: NodeId, block: BlockId },
}
