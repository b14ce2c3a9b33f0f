use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::layout::{ErasurePattern, NodeBlocks, StripeLayout};
use super::scheme::{BlockId, CodeScheme};
use super::CodeError;
use crate::gf256;

/// Encodes one stripe. Returns the coded blocks indexed by block id.
pub fn encode_stripe(scheme: CodeScheme, data: &[Vec<u8>]) -> Result<Vec<Vec<u8>>, CodeError> {
    scheme.validate()?;
    let k = scheme.data_blocks();
    if data.len() != k {
        return Err(CodeError::WrongBlockCount {
            expected: k,
            got: data.len(),
        });
    }
    let len = data[0].len();
    if data.iter().any(|d| d.len() != len) {
        return Err(CodeError::UnequalBlockLengths);
    }
    Ok((0..scheme.distinct_blocks())
        .map(|b| {
            let mut out = vec![0u8; len];
            for (i, &c) in scheme.generator_row(b).iter().enumerate() {
                gf256::mul_acc(&mut out, &data[i], c);
            }
            out
        })
        .collect())
}

/// True iff the blocks surviving `pattern` on `layout` determine all data.
///
/// Decided by the rank of the surviving blocks' generator rows.
pub fn layout_recoverable(layout: &StripeLayout, pattern: &ErasurePattern) -> bool {
    let scheme = layout.scheme;
    let lost = layout.fully_lost(pattern);
    if lost.is_empty() {
        return true;
    }
    // Fewer survivors than data blocks can never have full rank.
    if scheme.distinct_blocks() - lost.len() < scheme.data_blocks() {
        return false;
    }
    let rows: Vec<Vec<u8>> = (0..scheme.distinct_blocks())
        .filter(|b| !lost.contains(b))
        .map(|b| scheme.generator_row(b))
        .collect();
    gf256::rank(rows) == scheme.data_blocks()
}

/// Recoverability of a pattern given as canonical positions `0..code_length`.
pub fn is_recoverable(scheme: CodeScheme, pattern: &ErasurePattern) -> bool {
    layout_recoverable(&StripeLayout::canonical(scheme), pattern)
}

/// Calls `f` with every `size`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, size: usize, mut f: impl FnMut(&[usize])) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let Some(i) = (0..size).rev().find(|&i| idx[i] != i + n - size) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Number of unrecoverable `f`-node patterns out of `C(n, f)`.
pub fn count_fatal(scheme: CodeScheme, f: usize) -> (u64, u64) {
    let layout = StripeLayout::canonical(scheme);
    let (mut fatal, mut total) = (0u64, 0u64);
    for_each_subset(scheme.code_length(), f, |s| {
        total += 1;
        if !layout_recoverable(&layout, &ErasurePattern::new(s.iter().copied())) {
            fatal += 1;
        }
    });
    (fatal, total)
}

/// Largest `t` such that every `t`-node pattern is recoverable.
pub fn tolerance(scheme: CodeScheme) -> usize {
    static CACHE: OnceLock<Mutex<HashMap<CodeScheme, usize>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&t) = cache.lock().unwrap().get(&scheme) {
        return t;
    }
    let n = scheme.code_length();
    let t = (1..=n)
        .find(|&f| count_fatal(scheme, f).0 > 0)
        .map_or(n, |f| f - 1);
    cache.lock().unwrap().insert(scheme, t);
    t
}

/// Recovers the data blocks of one stripe from whatever survived.
///
/// Surviving replicas are taken first, single-unknown parity relations are
/// peeled next, and anything left is solved jointly by Gaussian elimination
/// over GF(256). Replicas that disagree, or relations that do not hold over
/// fully known blocks, are reported as [`CodeError::Inconsistent`].
pub fn decode_stripe(
    layout: &StripeLayout,
    surviving: &NodeBlocks,
    pattern: &ErasurePattern,
) -> Result<Vec<Vec<u8>>, CodeError> {
    layout.check_pattern(pattern)?;
    let scheme = layout.scheme;
    let mut known: Vec<Option<Vec<u8>>> = vec![None; scheme.distinct_blocks()];
    let mut len = None;
    for (b, slot) in known.iter_mut().enumerate() {
        for n in layout.live_hosts(b, pattern) {
            let Some(bytes) = surviving.get(&n).and_then(|m| m.get(&b)) else {
                continue;
            };
            if *len.get_or_insert(bytes.len()) != bytes.len() {
                return Err(CodeError::UnequalBlockLengths);
            }
            match slot {
                Some(prev) if prev != bytes => return Err(CodeError::Inconsistent { block: b }),
                Some(_) => {}
                None => *slot = Some(bytes.clone()),
            }
        }
    }
    let len = len.ok_or(CodeError::Unrecoverable)?;
    let relations = scheme.relations();

    // Peel relations with exactly one unknown.
    loop {
        let mut progressed = false;
        for rel in &relations {
            let mut unknown = rel.terms.iter().filter(|(b, _)| known[*b].is_none());
            let (Some(&(u, cu)), None) = (unknown.next(), unknown.next()) else {
                continue;
            };
            let mut acc = vec![0u8; len];
            for &(b, c) in &rel.terms {
                if b != u {
                    gf256::mul_acc(&mut acc, known[b].as_ref().unwrap(), c);
                }
            }
            gf256::scale(
                &mut acc,
                gf256::inv(cu).expect("relation coefficients are nonzero"),
            );
            known[u] = Some(acc);
            progressed = true;
        }
        if !progressed {
            break;
        }
    }

    let unknown: Vec<BlockId> = (0..known.len()).filter(|&b| known[b].is_none()).collect();
    if !unknown.is_empty() {
        let solved = solve_jointly(&relations, &known, &unknown, len)?;
        for (u, bytes) in unknown.iter().zip(solved) {
            known[*u] = Some(bytes);
        }
    }

    for rel in &relations {
        let mut acc = vec![0u8; len];
        for &(b, c) in &rel.terms {
            gf256::mul_acc(&mut acc, known[b].as_ref().unwrap(), c);
        }
        if let Some(&(b, _)) = rel.terms.iter().find(|_| acc.iter().any(|&x| x != 0)) {
            return Err(CodeError::Inconsistent { block: b });
        }
    }

    Ok((0..scheme.data_blocks())
        .map(|i| known[scheme.data_block_id(i)].take().unwrap())
        .collect())
}

fn solve_jointly(
    relations: &[super::scheme::Relation],
    known: &[Option<Vec<u8>>],
    unknown: &[BlockId],
    len: usize,
) -> Result<Vec<Vec<u8>>, CodeError> {
    // Each row: coefficients on the unknowns, and the known side as bytes.
    let mut rows: Vec<(Vec<u8>, Vec<u8>)> = relations
        .iter()
        .filter(|r| unknown.iter().any(|&u| r.coef(u) != 0))
        .map(|r| {
            let coefs = unknown.iter().map(|&u| r.coef(u)).collect();
            let mut rhs = vec![0u8; len];
            for &(b, c) in &r.terms {
                if let Some(bytes) = &known[b] {
                    gf256::mul_acc(&mut rhs, bytes, c);
                }
            }
            (coefs, rhs)
        })
        .collect();
    let m = unknown.len();
    if rows.len() < m {
        return Err(CodeError::Unrecoverable);
    }
    for col in 0..m {
        let p = (col..rows.len())
            .find(|&r| rows[r].0[col] != 0)
            .ok_or(CodeError::Unrecoverable)?;
        rows.swap(col, p);
        let pinv = gf256::inv(rows[col].0[col]).unwrap();
        gf256::scale(&mut rows[col].0, pinv);
        gf256::scale(&mut rows[col].1, pinv);
        let (pc, pr) = rows[col].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            let f = row.0[col];
            if r != col && f != 0 {
                gf256::mul_acc(&mut row.0, &pc, f);
                gf256::mul_acc(&mut row.1, &pr, f);
            }
        }
    }
    Ok(rows.into_iter().take(m).map(|(_, rhs)| rhs).collect())
}
