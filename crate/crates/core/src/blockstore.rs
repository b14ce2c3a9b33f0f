//! File-backed block store with one directory per simulated node.
//!
//! ```text
//! <root>/store.json                      node table
//! <root>/<file>.manifest.json            one per stored file
//! <root>/n<node>/s<stripe>_b<block>_r<copy>.blk
//! ```
//!
//! Stripe ids are allocated store-wide so block file names never collide
//! between files. Killing a node wipes its directory. `repair` brings every
//! down node back as an empty replacement and rebuilds whatever is missing.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{
    build_layout, encode_stripe, execute_plan, execute_plan_observed, layout_recoverable,
    plan_degraded_read, plan_repair, BlockId, BlockRole, BlockSource, CodeError, CodeScheme,
    ErasurePattern, NodeId, Site, StripeLayout,
};

pub const DEFAULT_BLOCK_SIZE: usize = 4 << 20;

const STORE_FILE: &str = "store.json";
const LOCK_FILE: &str = "store.lock";
const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error("no store at {0}")]
    NotInitialized(PathBuf),
    #[error("store already exists at {0}")]
    AlreadyInitialized(PathBuf),
    #[error("store is locked by another operation")]
    Locked,
    #[error("need {need} up nodes, have {up}")]
    InsufficientNodes { need: usize, up: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no such file: {0}")]
    NoSuchFile(String),
    #[error("file already stored: {0}")]
    FileExists(String),
    #[error("invalid file name: {0:?}")]
    BadName(String),
    #[error("block size must be positive")]
    BadBlockSize,
    #[error("unrecoverable: {file} stripe {stripe}")]
    Unrecoverable { file: String, stripe: u64 },
    #[error("checksum mismatch: {file} stripe {stripe} block {block}")]
    ChecksumMismatch {
        file: String,
        stripe: u64,
        block: BlockId,
    },
}

impl StoreError {
    /// True for failures caused by lost or damaged data rather than misuse.
    pub fn is_data_loss(&self) -> bool {
        matches!(
            self,
            StoreError::Unrecoverable { .. }
                | StoreError::ChecksumMismatch { .. }
                | StoreError::Code(CodeError::Unrecoverable)
        )
    }
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub status: NodeStatus,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoreMeta {
    nodes: Vec<NodeState>,
    next_stripe: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block_id: BlockId,
    pub role: BlockRole,
    pub nodes: Vec<NodeId>,
    /// Paths relative to the store root, one per replica.
    pub files: Vec<String>,
    pub crc32: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripeRecord {
    pub stripe_id: u64,
    /// Node at each code position.
    pub layout_nodes: Vec<NodeId>,
    pub blocks: Vec<BlockRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub file_name: String,
    pub original_size: u64,
    pub scheme: CodeScheme,
    pub block_size: usize,
    pub stripe_count: usize,
    pub padding_bytes: u64,
    pub stripes: Vec<StripeRecord>,
}

impl StripeRecord {
    fn layout(&self, scheme: CodeScheme) -> StripeLayout {
        StripeLayout::with_nodes(scheme, self.layout_nodes.clone())
    }

    fn crc(&self, block: BlockId) -> u32 {
        u32::from_str_radix(&self.blocks[block].crc32, 16).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockLocation {
    pub file: String,
    pub stripe: u64,
    pub block: BlockId,
    pub node: NodeId,
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FsckReport {
    pub missing: Vec<BlockLocation>,
    pub corrupt: Vec<BlockLocation>,
    /// `(file, stripe)` pairs that can no longer be decoded.
    pub fatal_stripes: Vec<(String, u64)>,
}

impl FsckReport {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.corrupt.is_empty() && self.fatal_stripes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegradedRead {
    pub stripe: u64,
    pub block: BlockId,
    pub transfers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetOutcome {
    pub bytes: Vec<u8>,
    pub degraded: Vec<DegradedRead>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RepairReport {
    pub plans_executed: usize,
    pub planned_bandwidth_blocks: usize,
    /// Block-sized payloads actually shipped between nodes.
    pub measured_bandwidth_blocks: usize,
    pub nodes_replaced: Vec<NodeId>,
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct BlockStore {
    root: PathBuf,
    meta: StoreMeta,
}

fn block_file(node: NodeId, stripe: u64, block: BlockId, copy: usize) -> String {
    format!("n{node}/s{stripe}_b{block}_r{copy}.blk")
}

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

fn stripe_error(e: CodeError, file: &str, stripe: u64) -> StoreError {
    match e {
        CodeError::Unrecoverable | CodeError::MissingSource { .. } => StoreError::Unrecoverable {
            file: file.to_string(),
            stripe,
        },
        CodeError::ChecksumMismatch { block, .. } => StoreError::ChecksumMismatch {
            file: file.to_string(),
            stripe,
            block,
        },
        other => StoreError::Code(other),
    }
}

fn check_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name == "."
        || name == ".."
        || name.contains(['/', '\\'])
        || name == STORE_FILE
        || name == LOCK_FILE;
    if bad {
        Err(StoreError::BadName(name.to_string()))
    } else {
        Ok(())
    }
}

impl BlockStore {
    /// Creates a store with `nodes` empty up nodes.
    pub fn init(root: impl AsRef<Path>, nodes: usize) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if root.join(STORE_FILE).exists() {
            return Err(StoreError::AlreadyInitialized(root));
        }
        fs::create_dir_all(&root)?;
        let meta = StoreMeta {
            nodes: (0..nodes)
                .map(|id| NodeState {
                    id,
                    status: NodeStatus::Up,
                    dir: root.join(format!("n{id}")),
                })
                .collect(),
            next_stripe: 0,
        };
        for n in &meta.nodes {
            fs::create_dir_all(&n.dir)?;
        }
        let store = BlockStore { root, meta };
        store.save_meta()?;
        Ok(store)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(STORE_FILE);
        if !path.exists() {
            return Err(StoreError::NotInitialized(root));
        }
        let meta = serde_json::from_slice(&fs::read(path)?)?;
        Ok(BlockStore { root, meta })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.meta.nodes
    }

    fn save_meta(&self) -> Result<()> {
        let tmp = self.root.join(format!("{STORE_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&self.meta)?)?;
        fs::rename(tmp, self.root.join(STORE_FILE))?;
        Ok(())
    }

    fn manifest_path(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}{MANIFEST_SUFFIX}"))
    }

    fn save_manifest(&self, m: &StoreManifest) -> Result<()> {
        fs::write(
            self.manifest_path(&m.file_name),
            serde_json::to_vec_pretty(m)?,
        )?;
        Ok(())
    }

    pub fn manifest(&self, name: &str) -> Result<StoreManifest> {
        let path = self.manifest_path(name);
        if !path.exists() {
            return Err(StoreError::NoSuchFile(name.to_string()));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Names of all stored files, sorted.
    pub fn files(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(f) = name.strip_suffix(MANIFEST_SUFFIX) {
                out.push(f.to_string());
            }
        }
        out.sort();
        Ok(out)
    }

    fn node(&self, id: NodeId) -> Result<&NodeState> {
        self.meta.nodes.get(id).ok_or(StoreError::UnknownNode(id))
    }

    fn is_up(&self, id: NodeId) -> bool {
        self.meta
            .nodes
            .get(id)
            .is_some_and(|n| n.status == NodeStatus::Up)
    }

    fn up_nodes(&self) -> Vec<NodeId> {
        self.meta
            .nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Up)
            .map(|n| n.id)
            .collect()
    }

    /// Stores the file at `path` under its base name.
    pub fn put(
        &mut self,
        path: impl AsRef<Path>,
        scheme: CodeScheme,
        block_size: usize,
    ) -> Result<StoreManifest> {
        let path = path.as_ref();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| StoreError::BadName(path.display().to_string()))?;
        let bytes = fs::read(path)?;
        self.put_bytes(&name, &bytes, scheme, block_size)
    }

    pub fn put_bytes(
        &mut self,
        name: &str,
        bytes: &[u8],
        scheme: CodeScheme,
        block_size: usize,
    ) -> Result<StoreManifest> {
        check_name(name)?;
        scheme.validate()?;
        if block_size == 0 {
            return Err(StoreError::BadBlockSize);
        }
        let _lock = LockGuard::acquire(&self.root)?;
        if self.manifest_path(name).exists() {
            return Err(StoreError::FileExists(name.to_string()));
        }
        let up = self.up_nodes();
        let need = scheme.code_length();
        if up.len() < need {
            return Err(StoreError::InsufficientNodes { need, up: up.len() });
        }

        let k = scheme.data_blocks();
        let stripe_bytes = k * block_size;
        let stripe_count = bytes.len().div_ceil(stripe_bytes);
        let padding = (stripe_count * stripe_bytes - bytes.len()) as u64;
        let mut stripes = Vec::with_capacity(stripe_count);
        for s in 0..stripe_count {
            let stripe_id = self.meta.next_stripe;
            self.meta.next_stripe += 1;
            let data: Vec<Vec<u8>> = (0..k)
                .map(|i| {
                    let start = (s * k + i) * block_size;
                    let mut block = vec![0u8; block_size];
                    if start < bytes.len() {
                        let end = (start + block_size).min(bytes.len());
                        block[..end - start].copy_from_slice(&bytes[start..end]);
                    }
                    block
                })
                .collect();
            let coded = encode_stripe(scheme, &data)?;
            // Rotate the pool so consecutive stripes land on different nodes.
            let mut pool = up.clone();
            pool.rotate_left((stripe_id as usize * need) % up.len());
            let layout = build_layout(scheme, &pool, stripe_id)?;
            let mut blocks = Vec::with_capacity(coded.len());
            for (b, content) in coded.iter().enumerate() {
                let mut files = Vec::new();
                for (copy, &node) in layout.hosts[b].iter().enumerate() {
                    let rel = block_file(node, stripe_id, b, copy);
                    fs::write(self.root.join(&rel), content)?;
                    files.push(rel);
                }
                blocks.push(BlockRecord {
                    block_id: b,
                    role: layout.roles[b],
                    nodes: layout.hosts[b].clone(),
                    files,
                    crc32: crc_hex(content),
                });
            }
            stripes.push(StripeRecord {
                stripe_id,
                layout_nodes: layout.nodes.clone(),
                blocks,
            });
        }
        let manifest = StoreManifest {
            file_name: name.to_string(),
            original_size: bytes.len() as u64,
            scheme,
            block_size,
            stripe_count,
            padding_bytes: padding,
            stripes,
        };
        self.save_meta()?;
        self.save_manifest(&manifest)?;
        Ok(manifest)
    }

    /// Nodes of a stripe that are down or lack one of their block files.
    fn unavailable(&self, stripe: &StripeRecord) -> ErasurePattern {
        let mut failed = BTreeSet::new();
        for rec in &stripe.blocks {
            for (node, file) in rec.nodes.iter().zip(&rec.files) {
                if !self.is_up(*node) || !self.root.join(file).exists() {
                    failed.insert(*node);
                }
            }
        }
        ErasurePattern { failed }
    }

    /// Reads the original bytes back, decoding around unavailable nodes.
    pub fn get(&self, name: &str) -> Result<GetOutcome> {
        let m = self.manifest(name)?;
        let k = m.scheme.data_blocks();
        let mut out = Vec::with_capacity(m.stripe_count * k * m.block_size);
        let mut degraded = Vec::new();
        for stripe in &m.stripes {
            let pattern = self.unavailable(stripe);
            let layout = stripe.layout(m.scheme);
            let source = StoreSource {
                store: self,
                stripe,
                pattern: &pattern,
            };
            for d in 0..k {
                let block = m.scheme.data_block_id(d);
                let bytes = if layout.live_hosts(block, &pattern).next().is_some() {
                    self.read_any_replica(&m, stripe, block, &pattern)?
                } else {
                    let plan = plan_degraded_read(&layout, block, &pattern)
                        .map_err(|e| stripe_error(e, &m.file_name, stripe.stripe_id))?;
                    log::info!(
                        "degraded read: {} stripe {} block {}: {} transfers",
                        m.file_name,
                        stripe.stripe_id,
                        block,
                        plan.bandwidth_blocks
                    );
                    degraded.push(DegradedRead {
                        stripe: stripe.stripe_id,
                        block,
                        transfers: plan.bandwidth_blocks,
                    });
                    let mut built = execute_plan(&plan, &source)
                        .map_err(|e| stripe_error(e, &m.file_name, stripe.stripe_id))?;
                    let bytes = built.remove(&(Site::Reader, block)).unwrap_or_default();
                    if crc32fast::hash(&bytes) != stripe.crc(block) {
                        return Err(StoreError::ChecksumMismatch {
                            file: m.file_name.clone(),
                            stripe: stripe.stripe_id,
                            block,
                        });
                    }
                    bytes
                };
                out.extend_from_slice(&bytes);
            }
        }
        out.truncate(m.original_size as usize);
        Ok(GetOutcome {
            bytes: out,
            degraded,
        })
    }

    fn read_any_replica(
        &self,
        m: &StoreManifest,
        stripe: &StripeRecord,
        block: BlockId,
        pattern: &ErasurePattern,
    ) -> Result<Vec<u8>> {
        let rec = &stripe.blocks[block];
        for (node, file) in rec.nodes.iter().zip(&rec.files) {
            if pattern.contains(*node) {
                continue;
            }
            if let Ok(bytes) = fs::read(self.root.join(file)) {
                if crc32fast::hash(&bytes) == stripe.crc(block) {
                    return Ok(bytes);
                }
                log::warn!("checksum mismatch in {file}");
            }
        }
        Err(StoreError::ChecksumMismatch {
            file: m.file_name.clone(),
            stripe: stripe.stripe_id,
            block,
        })
    }

    /// Marks a node down and wipes its directory. Killing a down node is a no-op.
    pub fn kill_node(&mut self, id: NodeId) -> Result<NodeState> {
        self.node(id)?;
        let _lock = LockGuard::acquire(&self.root)?;
        let dir = self.meta.nodes[id].dir.clone();
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        self.meta.nodes[id].status = NodeStatus::Down;
        self.save_meta()?;
        Ok(self.meta.nodes[id].clone())
    }

    /// Brings a node back up with an empty directory.
    pub fn revive_node(&mut self, id: NodeId) -> Result<NodeState> {
        self.node(id)?;
        let _lock = LockGuard::acquire(&self.root)?;
        self.revive_unlocked(id)
    }

    fn revive_unlocked(&mut self, id: NodeId) -> Result<NodeState> {
        let dir = self.meta.nodes[id].dir.clone();
        if self.meta.nodes[id].status == NodeStatus::Down {
            fs::create_dir_all(&dir)?;
            self.meta.nodes[id].status = NodeStatus::Up;
            self.save_meta()?;
        }
        Ok(self.meta.nodes[id].clone())
    }

    /// Number of block files currently held by a node.
    pub fn block_count(&self, id: NodeId) -> Result<usize> {
        let dir = &self.node(id)?.dir;
        if !dir.exists() {
            return Ok(0);
        }
        Ok(fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "blk"))
            .count())
    }

    /// Read-only scan of every block replica.
    pub fn fsck(&self) -> Result<FsckReport> {
        let mut report = FsckReport::default();
        for name in self.files()? {
            let m = self.manifest(&name)?;
            for stripe in &m.stripes {
                let mut bad_nodes = BTreeSet::new();
                for rec in &stripe.blocks {
                    let crc = stripe.crc(rec.block_id);
                    for (node, file) in rec.nodes.iter().zip(&rec.files) {
                        let loc = BlockLocation {
                            file: name.clone(),
                            stripe: stripe.stripe_id,
                            block: rec.block_id,
                            node: *node,
                            path: file.clone(),
                        };
                        let content = if self.is_up(*node) {
                            fs::read(self.root.join(file)).ok()
                        } else {
                            None
                        };
                        match content {
                            None => {
                                bad_nodes.insert(*node);
                                report.missing.push(loc);
                            }
                            Some(b) if crc32fast::hash(&b) != crc => {
                                bad_nodes.insert(*node);
                                report.corrupt.push(loc);
                            }
                            Some(_) => {}
                        }
                    }
                }
                let layout = stripe.layout(m.scheme);
                if !layout_recoverable(&layout, &ErasurePattern { failed: bad_nodes }) {
                    report.fatal_stripes.push((name.clone(), stripe.stripe_id));
                }
            }
        }
        Ok(report)
    }

    /// Replaces down nodes with empty ones and rebuilds every missing or
    /// corrupt block, one plan per damaged stripe.
    pub fn repair(&mut self) -> Result<RepairReport> {
        let _lock = LockGuard::acquire(&self.root)?;
        let before = self.fsck()?;
        if let Some((file, stripe)) = before.fatal_stripes.first() {
            return Err(StoreError::Unrecoverable {
                file: file.clone(),
                stripe: *stripe,
            });
        }
        let mut report = RepairReport::default();
        let down: Vec<NodeId> = self
            .meta
            .nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Down)
            .map(|n| n.id)
            .collect();
        for id in down {
            self.revive_unlocked(id)?;
            report.nodes_replaced.push(id);
        }
        // Corrupt replicas are discarded so their node counts as failed.
        for loc in &before.corrupt {
            fs::remove_file(self.root.join(&loc.path))?;
        }

        for name in self.files()? {
            let m = self.manifest(&name)?;
            for stripe in &m.stripes {
                let pattern = self.unavailable(stripe);
                if pattern.is_empty() {
                    continue;
                }
                let layout = stripe.layout(m.scheme);
                let plan = plan_repair(&layout, &pattern)
                    .map_err(|e| stripe_error(e, &name, stripe.stripe_id))?;
                let source = StoreSource {
                    store: self,
                    stripe,
                    pattern: &pattern,
                };
                let mut shipped_bytes = 0usize;
                let built = execute_plan_observed(&plan, &source, |_, payload| {
                    shipped_bytes += payload.len();
                })
                .map_err(|e| stripe_error(e, &name, stripe.stripe_id))?;
                for ((site, block), bytes) in built {
                    let Site::Node(node) = site else { continue };
                    let rec = &stripe.blocks[block];
                    let copy = rec.nodes.iter().position(|&n| n == node);
                    let Some(copy) = copy else { continue };
                    if crc32fast::hash(&bytes) != stripe.crc(block) {
                        return Err(StoreError::ChecksumMismatch {
                            file: name.clone(),
                            stripe: stripe.stripe_id,
                            block,
                        });
                    }
                    fs::write(self.root.join(&rec.files[copy]), bytes)?;
                }
                log::info!(
                    "repaired {name} stripe {}: {} transfers",
                    stripe.stripe_id,
                    plan.bandwidth_blocks
                );
                report.plans_executed += 1;
                report.planned_bandwidth_blocks += plan.bandwidth_blocks;
                report.measured_bandwidth_blocks += shipped_bytes / m.block_size;
            }
        }
        Ok(report)
    }
}

/// Block reads for one stripe, refusing nodes in the failure pattern.
struct StoreSource<'a> {
    store: &'a BlockStore,
    stripe: &'a StripeRecord,
    pattern: &'a ErasurePattern,
}

impl BlockSource for StoreSource<'_> {
    fn read(&self, node: NodeId, block: BlockId) -> std::result::Result<Vec<u8>, CodeError> {
        let rec = &self.stripe.blocks[block];
        let copy = rec
            .nodes
            .iter()
            .position(|&n| n == node)
            .filter(|_| !self.pattern.contains(node) && self.store.is_up(node))
            .ok_or(CodeError::MissingSource { node, block })?;
        let bytes = fs::read(self.store.root.join(&rec.files[copy]))
            .map_err(|_| CodeError::MissingSource { node, block })?;
        if crc32fast::hash(&bytes) != self.stripe.crc(block) {
            return Err(CodeError::ChecksumMismatch { node, block });
        }
        Ok(bytes)
    }
}
