use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CodeError;
use crate::gf256;

pub type BlockId = usize;
pub type NodeId = usize;

/// Number of data blocks in each heptagon of the heptagon-local code.
pub(crate) const HEPTAGON_DATA: usize = 20;
/// Distinct blocks per heptagon (20 data + 1 local parity).
pub(crate) const HEPTAGON_BLOCKS: usize = 21;
pub(crate) const GLOBAL_NODE: usize = 14;

/// A coding scheme, described by its construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CodeScheme {
    /// `copies` identical replicas of every block.
    Replication { copies: usize },
    /// `data` blocks plus one XOR parity, every coded block mirrored on two
    /// distinct nodes.
    RaidMirror { data: usize },
    /// Complete-graph code on `nodes` vertices: one block per edge, stored at
    /// both endpoints, last edge holds the XOR parity.
    Polygon { nodes: usize },
    /// Two heptagons plus a node holding two GF(256) global parities.
    HeptagonLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRole {
    Data(usize),
    LocalParity(usize),
    GlobalParity(usize),
}

/// One parity-check equation: `sum(coef * block) = 0` over GF(256).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub terms: Vec<(BlockId, u8)>,
}

impl Relation {
    pub fn coef(&self, block: BlockId) -> u8 {
        self.terms
            .iter()
            .find(|(b, _)| *b == block)
            .map_or(0, |&(_, c)| c)
    }
}

/// Exact overhead as stored/data blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub stored: usize,
    pub data: usize,
}

impl Ratio {
    pub fn value(self) -> f64 {
        self.stored as f64 / self.data as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.value())
    }
}

/// Lexicographic edge list of the complete graph on `n` vertices.
pub fn complete_graph_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

impl CodeScheme {
    pub const PENTAGON: CodeScheme = CodeScheme::Polygon { nodes: 5 };
    pub const HEPTAGON: CodeScheme = CodeScheme::Polygon { nodes: 7 };

    pub fn validate(&self) -> Result<(), CodeError> {
        let ok = match *self {
            CodeScheme::Replication { copies } => copies >= 1,
            CodeScheme::RaidMirror { data } => data >= 1,
            CodeScheme::Polygon { nodes } => nodes >= 3,
            CodeScheme::HeptagonLocal => true,
        };
        if ok {
            Ok(())
        } else {
            Err(CodeError::InvalidScheme(self.to_string()))
        }
    }

    /// Number of nodes one stripe spans.
    pub fn code_length(&self) -> usize {
        match *self {
            CodeScheme::Replication { copies } => copies,
            CodeScheme::RaidMirror { data } => 2 * (data + 1),
            CodeScheme::Polygon { nodes } => nodes,
            CodeScheme::HeptagonLocal => 15,
        }
    }

    pub fn data_blocks(&self) -> usize {
        match *self {
            CodeScheme::Replication { .. } => 1,
            CodeScheme::RaidMirror { data } => data,
            CodeScheme::Polygon { nodes } => nodes * (nodes - 1) / 2 - 1,
            CodeScheme::HeptagonLocal => 2 * HEPTAGON_DATA,
        }
    }

    /// Distinct coded blocks per stripe, before replication.
    pub fn distinct_blocks(&self) -> usize {
        match *self {
            CodeScheme::Replication { .. } => 1,
            CodeScheme::RaidMirror { data } => data + 1,
            CodeScheme::Polygon { nodes } => nodes * (nodes - 1) / 2,
            CodeScheme::HeptagonLocal => 2 * HEPTAGON_BLOCKS + 2,
        }
    }

    pub fn stored_blocks(&self) -> usize {
        (0..self.distinct_blocks())
            .map(|b| self.canonical_hosts(b).len())
            .sum()
    }

    pub fn storage_overhead(&self) -> Ratio {
        Ratio {
            stored: self.stored_blocks(),
            data: self.data_blocks(),
        }
    }

    pub fn role(&self, block: BlockId) -> BlockRole {
        match *self {
            CodeScheme::Replication { .. } => BlockRole::Data(0),
            CodeScheme::RaidMirror { .. } | CodeScheme::Polygon { .. } => {
                if block < self.data_blocks() {
                    BlockRole::Data(block)
                } else {
                    BlockRole::LocalParity(0)
                }
            }
            CodeScheme::HeptagonLocal => {
                if block >= 2 * HEPTAGON_BLOCKS {
                    BlockRole::GlobalParity(block - 2 * HEPTAGON_BLOCKS)
                } else {
                    let group = block / HEPTAGON_BLOCKS;
                    let e = block % HEPTAGON_BLOCKS;
                    if e < HEPTAGON_DATA {
                        BlockRole::Data(group * HEPTAGON_DATA + e)
                    } else {
                        BlockRole::LocalParity(group)
                    }
                }
            }
        }
    }

    /// Block id holding data block `index`.
    pub fn data_block_id(&self, index: usize) -> BlockId {
        match self {
            CodeScheme::HeptagonLocal => {
                (index / HEPTAGON_DATA) * HEPTAGON_BLOCKS + index % HEPTAGON_DATA
            }
            _ => index,
        }
    }

    /// Node positions (0..code_length) hosting each replica of `block`, in
    /// replica order.
    pub fn canonical_hosts(&self, block: BlockId) -> Vec<usize> {
        match *self {
            CodeScheme::Replication { copies } => (0..copies).collect(),
            CodeScheme::RaidMirror { .. } => vec![2 * block, 2 * block + 1],
            CodeScheme::Polygon { nodes } => {
                let (i, j) = complete_graph_edges(nodes)[block];
                vec![i, j]
            }
            CodeScheme::HeptagonLocal => {
                if block >= 2 * HEPTAGON_BLOCKS {
                    vec![GLOBAL_NODE]
                } else {
                    let group = block / HEPTAGON_BLOCKS;
                    let (i, j) = complete_graph_edges(7)[block % HEPTAGON_BLOCKS];
                    vec![group * 7 + i, group * 7 + j]
                }
            }
        }
    }

    /// Row of the generator matrix: `block = sum(row[i] * data[i])`.
    pub fn generator_row(&self, block: BlockId) -> Vec<u8> {
        let k = self.data_blocks();
        let mut row = vec![0u8; k];
        match self.role(block) {
            BlockRole::Data(i) => row[i] = 1,
            BlockRole::LocalParity(group) => match self {
                CodeScheme::HeptagonLocal => {
                    row[group * HEPTAGON_DATA..(group + 1) * HEPTAGON_DATA].fill(1)
                }
                _ => row.fill(1),
            },
            BlockRole::GlobalParity(g) => {
                for (i, c) in row.iter_mut().enumerate() {
                    *c = global_coef(g, i);
                }
            }
        }
        row
    }

    /// Parity-check equations whose common kernel is exactly the code.
    pub fn relations(&self) -> Vec<Relation> {
        let all_ones = |range: std::ops::Range<usize>| Relation {
            terms: range.map(|b| (b, 1)).collect(),
        };
        match *self {
            CodeScheme::Replication { .. } => Vec::new(),
            CodeScheme::RaidMirror { .. } | CodeScheme::Polygon { .. } => {
                vec![all_ones(0..self.distinct_blocks())]
            }
            CodeScheme::HeptagonLocal => {
                let mut rels = vec![
                    all_ones(0..HEPTAGON_BLOCKS),
                    all_ones(HEPTAGON_BLOCKS..2 * HEPTAGON_BLOCKS),
                ];
                for g in 0..2 {
                    let mut terms: Vec<(BlockId, u8)> = (0..self.data_blocks())
                        .map(|i| (self.data_block_id(i), global_coef(g, i)))
                        .collect();
                    terms.push((2 * HEPTAGON_BLOCKS + g, 1));
                    rels.push(Relation { terms });
                }
                rels
            }
        }
    }
}

/// Coefficient of data block `i` in global parity `g`: `alpha^((g+1) * i)`.
pub fn global_coef(g: usize, i: usize) -> u8 {
    gf256::pow(gf256::GENERATOR, ((g + 1) * i) as u32)
}

impl fmt::Display for CodeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CodeScheme::Replication { copies } => write!(f, "{copies}-rep"),
            CodeScheme::RaidMirror { data } => write!(f, "({},{})-raid+m", data + 1, data),
            CodeScheme::Polygon { nodes: 5 } => write!(f, "pentagon"),
            CodeScheme::Polygon { nodes: 7 } => write!(f, "heptagon"),
            CodeScheme::Polygon { nodes } => write!(f, "polygon-{nodes}"),
            CodeScheme::HeptagonLocal => write!(f, "heptagon-local"),
        }
    }
}

impl FromStr for CodeScheme {
    type Err = CodeError;

    /// Accepts `pentagon`, `heptagon`, `heptagon-local`, `polygon-<n>`,
    /// `<r>-rep`, `(<k+1>,<k>)-raid+m` and `raid+m-<k>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CodeError::InvalidScheme(s.to_string());
        let t = s.trim().to_ascii_lowercase();
        let scheme = match t.as_str() {
            "pentagon" => CodeScheme::PENTAGON,
            "heptagon" => CodeScheme::HEPTAGON,
            "heptagon-local" | "heptagon_local" => CodeScheme::HeptagonLocal,
            _ => {
                if let Some(n) = t.strip_prefix("polygon-") {
                    CodeScheme::Polygon {
                        nodes: n.parse().map_err(|_| bad())?,
                    }
                } else if let Some(r) = t.strip_suffix("-rep") {
                    CodeScheme::Replication {
                        copies: r.parse().map_err(|_| bad())?,
                    }
                } else if let Some(k) = t.strip_prefix("raid+m-") {
                    CodeScheme::RaidMirror {
                        data: k.parse().map_err(|_| bad())?,
                    }
                } else if let Some(inner) = t
                    .strip_suffix("-raid+m")
                    .or_else(|| t.strip_suffix("raid+m"))
                    .and_then(|x| x.strip_prefix('('))
                    .and_then(|x| x.strip_suffix(')'))
                {
                    let (n, k) = inner.split_once(',').ok_or_else(bad)?;
                    let n: usize = n.trim().parse().map_err(|_| bad())?;
                    let k: usize = k.trim().parse().map_err(|_| bad())?;
                    if n != k + 1 {
                        return Err(bad());
                    }
                    CodeScheme::RaidMirror { data: k }
                } else {
                    return Err(bad());
                }
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl TryFrom<String> for CodeScheme {
    type Error = CodeError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CodeScheme> for String {
    fn from(s: CodeScheme) -> String {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_overheads() {
        let cases = [
            ("3-rep", "3.00", 3),
            ("pentagon", "2.22", 5),
            ("heptagon", "2.10", 7),
            ("heptagon-local", "2.15", 15),
            ("(10,9)-raid+m", "2.22", 20),
            ("(12,11)-raid+m", "2.18", 24),
        ];
        for (name, overhead, len) in cases {
            let s: CodeScheme = name.parse().unwrap();
            assert_eq!(s.storage_overhead().to_string(), overhead, "{name}");
            assert_eq!(s.code_length(), len, "{name}");
            assert_eq!(s.to_string(), name);
        }
        let p = CodeScheme::PENTAGON.storage_overhead();
        assert_eq!((p.stored, p.data), (20, 9));
        let h = CodeScheme::HeptagonLocal.storage_overhead();
        assert_eq!((h.stored, h.data), (86, 40));
        assert_eq!(CodeScheme::HEPTAGON.storage_overhead().stored, 42);
    }

    #[test]
    fn parse_rejects_garbage() {
        for bad in [
            "",
            "hexagon",
            "polygon-2",
            "0-rep",
            "(10,8)-raid+m",
            "raid+m-0",
            "x-rep",
        ] {
            assert!(bad.parse::<CodeScheme>().is_err(), "{bad}");
        }
        assert_eq!(
            "raid+m-9".parse::<CodeScheme>().unwrap(),
            CodeScheme::RaidMirror { data: 9 }
        );
    }

    #[test]
    fn polygon_roles_and_hosts() {
        let s = CodeScheme::PENTAGON;
        assert_eq!(s.canonical_hosts(0), vec![0, 1]);
        assert_eq!(s.canonical_hosts(9), vec![3, 4]);
        assert_eq!(s.role(9), BlockRole::LocalParity(0));
        assert_eq!(s.role(3), BlockRole::Data(3));
        for node in 0..5 {
            let deg = (0..10)
                .filter(|&b| s.canonical_hosts(b).contains(&node))
                .count();
            assert_eq!(deg, 4);
        }
    }

    #[test]
    fn heptagon_local_structure() {
        let s = CodeScheme::HeptagonLocal;
        assert_eq!(s.distinct_blocks(), 44);
        assert_eq!(s.stored_blocks(), 86);
        assert_eq!(s.role(20), BlockRole::LocalParity(0));
        assert_eq!(s.role(41), BlockRole::LocalParity(1));
        assert_eq!(s.role(21), BlockRole::Data(20));
        assert_eq!(s.role(43), BlockRole::GlobalParity(1));
        assert_eq!(s.data_block_id(25), 26);
        assert_eq!(s.canonical_hosts(21), vec![7, 8]);
        assert_eq!(s.canonical_hosts(42), vec![14]);
        assert_eq!(s.relations().len(), 4);
        // 40 distinct first-parity coefficients and 40 distinct second ones.
        for g in 0..2 {
            let set: std::collections::HashSet<u8> = (0..40).map(|i| global_coef(g, i)).collect();
            assert_eq!(set.len(), 40);
        }
    }

    #[test]
    fn serde_as_string() {
        let json = serde_json::to_string(&CodeScheme::HeptagonLocal).unwrap();
        assert_eq!(json, "\"heptagon-local\"");
        let back: CodeScheme = serde_json::from_str("\"(10,9)-raid+m\"").unwrap();
        assert_eq!(back, CodeScheme::RaidMirror { data: 9 });
    }
}
