//! Reference decoder built without the library's coding code.
//!
//! Field arithmetic is schoolbook shift-and-add modulo x^8+x^4+x^3+x^2+1,
//! block structure is derived from each scheme's definition, and decoding
//! is plain Gaussian elimination on generator rows of the surviving blocks.

#![allow(dead_code)]

use dupcode::codes::CodeScheme;

pub fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= 0x1D;
        }
        b >>= 1;
    }
    p
}

pub fn gf_pow(a: u8, k: usize) -> u8 {
    (0..k).fold(1, |acc, _| gf_mul(acc, a))
}

pub fn gf_inv(a: u8) -> u8 {
    assert_ne!(a, 0);
    (1..=255u8).find(|&x| gf_mul(a, x) == 1).unwrap()
}

/// One coded block: its generator row and the nodes storing it.
#[derive(Debug, Clone)]
pub struct RefBlock {
    pub row: Vec<u8>,
    pub hosts: Vec<usize>,
}

fn unit(k: usize, i: usize) -> Vec<u8> {
    let mut r = vec![0; k];
    r[i] = 1;
    r
}

/// Blocks of `scheme` in block-id order.
pub fn reference_blocks(scheme: CodeScheme) -> Vec<RefBlock> {
    match scheme {
        CodeScheme::Replication { copies } => vec![RefBlock {
            row: vec![1],
            hosts: (0..copies).collect(),
        }],
        CodeScheme::RaidMirror { data } => (0..=data)
            .map(|b| RefBlock {
                row: if b < data {
                    unit(data, b)
                } else {
                    vec![1; data]
                },
                hosts: vec![2 * b, 2 * b + 1],
            })
            .collect(),
        CodeScheme::Polygon { nodes } => {
            let mut edges = Vec::new();
            for i in 0..nodes {
                for j in i + 1..nodes {
                    edges.push(vec![i, j]);
                }
            }
            let k = edges.len() - 1;
            edges
                .into_iter()
                .enumerate()
                .map(|(b, hosts)| RefBlock {
                    row: if b < k { unit(k, b) } else { vec![1; k] },
                    hosts,
                })
                .collect()
        }
        CodeScheme::HeptagonLocal => {
            let k = 40;
            let mut out = Vec::new();
            for group in 0..2 {
                let off = 7 * group;
                let mut e = 0;
                for i in 0..7 {
                    for j in i + 1..7 {
                        let row = if e < 20 {
                            unit(k, 20 * group + e)
                        } else {
                            let mut r = vec![0; k];
                            r[20 * group..20 * group + 20].fill(1);
                            r
                        };
                        out.push(RefBlock {
                            row,
                            hosts: vec![off + i, off + j],
                        });
                        e += 1;
                    }
                }
            }
            for g in 0..2 {
                out.push(RefBlock {
                    row: (0..k).map(|i| gf_pow(2, (g + 1) * i)).collect(),
                    hosts: vec![14],
                });
            }
            out
        }
    }
}

pub fn node_count(scheme: CodeScheme) -> usize {
    reference_blocks(scheme)
        .iter()
        .flat_map(|b| b.hosts.iter().copied())
        .max()
        .unwrap()
        + 1
}

pub fn encode(scheme: CodeScheme, data: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let len = data[0].len();
    reference_blocks(scheme)
        .iter()
        .map(|b| {
            let mut out = vec![0u8; len];
            for (d, &c) in data.iter().zip(&b.row) {
                for (o, &x) in out.iter_mut().zip(d) {
                    *o ^= gf_mul(c, x);
                }
            }
            out
        })
        .collect()
}

/// Decodes from the blocks that have a host outside `failed`; `None` when
/// the surviving rows do not span the data.
pub fn decode(scheme: CodeScheme, coded: &[Vec<u8>], failed: &[usize]) -> Option<Vec<Vec<u8>>> {
    let blocks = reference_blocks(scheme);
    let k = blocks[0].row.len();
    let mut rows: Vec<(Vec<u8>, Vec<u8>)> = blocks
        .iter()
        .zip(coded)
        .filter(|(b, _)| b.hosts.iter().any(|h| !failed.contains(h)))
        .map(|(b, c)| (b.row.clone(), c.clone()))
        .collect();
    // Reduce [rows | payload] to identity on the first k columns.
    for col in 0..k {
        let pivot = (col..rows.len()).find(|&r| rows[r].0[col] != 0)?;
        rows.swap(col, pivot);
        let inv = gf_inv(rows[col].0[col]);
        for x in rows[col].0.iter_mut() {
            *x = gf_mul(*x, inv);
        }
        for x in rows[col].1.iter_mut() {
            *x = gf_mul(*x, inv);
        }
        let (prow, ppay) = rows[col].clone();
        for (r, (row, pay)) in rows.iter_mut().enumerate() {
            let f = row[col];
            if r == col || f == 0 {
                continue;
            }
            for (a, &b) in row.iter_mut().zip(&prow) {
                *a ^= gf_mul(f, b);
            }
            for (a, &b) in pay.iter_mut().zip(&ppay) {
                *a ^= gf_mul(f, b);
            }
        }
    }
    Some(rows.into_iter().take(k).map(|(_, p)| p).collect())
}

/// Deterministic payload bytes.
pub fn payload(blocks: usize, len: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..blocks)
        .map(|_| {
            (0..len)
                .map(|_| {
                    x ^= x << 13;
                    x ^= x >> 7;
                    x ^= x << 17;
                    (x >> 24) as u8
                })
                .collect()
        })
        .collect()
}

/// Every subset of `0..n` with at most `max` elements, smallest first.
pub fn subsets_up_to(n: usize, max: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(cur.clone());
        if left == 0 {
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, max, &mut Vec::new(), &mut out);
    out.sort_by_key(|s| s.len());
    out
}

pub const ALL_SCHEMES: [&str; 7] = [
    "2-rep",
    "3-rep",
    "pentagon",
    "heptagon",
    "heptagon-local",
    "raid+m-9",
    "raid+m-11",
];

pub fn scheme(s: &str) -> CodeScheme {
    s.parse().unwrap()
}
