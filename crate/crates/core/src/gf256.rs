//! Arithmetic in GF(2^8).
//!
//! Elements are plain `u8` values. Addition is XOR; multiplication goes
//! through log/antilog tables generated from the primitive element `0x02`
//! under the reduction polynomial x^8 + x^4 + x^3 + x^2 + 1 (`0x11D`).
//!
//! The tables are built once on first use and checked against a bitwise
//! shift-and-add multiplier before they are handed out, so a bad table can
//! never silently corrupt parities.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

use thiserror::Error;

/// Reduction polynomial, including the x^8 term.
pub const POLY: u16 = 0x11D;

/// Primitive element used for the global parity coefficients.
pub const GENERATOR: u8 = 0x02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// Newtype for code that wants operator syntax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: Self = FieldElement(0);
    pub const ONE: Self = FieldElement(1);

    pub fn inv(self) -> Result<Self, GfError> {
        inv(self.0).map(FieldElement)
    }

    pub fn pow(self, k: u32) -> Self {
        FieldElement(pow(self.0, k))
    }
}

impl Add for FieldElement {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Self) -> Self {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        FieldElement(mul(self.0, rhs.0))
    }
}

struct Tables {
    // exp is doubled so exp[log a + log b] needs no reduction.
    exp: [u8; 512],
    log: [u8; 256],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let tables = build_tables();
        validate(&tables);
        tables
    })
}

fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    for i in 0..255 {
        exp[i] = x as u8;
        exp[i + 255] = x as u8;
        log[x as usize] = i as u8;
        x = shift_mul(x as u8, GENERATOR) as u16;
    }
    exp[510] = exp[0];
    exp[511] = exp[1];
    Tables { exp, log }
}

fn validate(t: &Tables) {
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            let fast = table_mul(t, a, b);
            assert_eq!(
                fast,
                shift_mul(a, b),
                "GF(256) table mismatch at {a:#04x} * {b:#04x}"
            );
        }
    }
}

/// Shift-and-add multiplication with reduction by [`POLY`].
pub fn shift_mul(a: u8, b: u8) -> u8 {
    let mut acc: u16 = 0;
    let mut a = a as u16;
    let mut b = b;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a <<= 1;
        if a & 0x100 != 0 {
            a ^= POLY;
        }
        b >>= 1;
    }
    acc as u8
}

#[inline]
fn table_mul(t: &Tables, a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
    }
}

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    table_mul(tables(), a, b)
}

pub fn inv(a: u8) -> Result<u8, GfError> {
    if a == 0 {
        return Err(GfError::ZeroInverse);
    }
    let t = tables();
    Ok(t.exp[(255 - t.log[a as usize] as usize) % 255])
}

pub fn div(a: u8, b: u8) -> Result<u8, GfError> {
    Ok(mul(a, inv(b)?))
}

/// `a^k`, with `0^0 = 1`.
pub fn pow(a: u8, k: u32) -> u8 {
    if k == 0 {
        return 1;
    }
    if a == 0 {
        return 0;
    }
    let t = tables();
    let e = (t.log[a as usize] as u64 * k as u64) % 255;
    t.exp[e as usize]
}

/// `dst[i] ^= coef * src[i]` for every byte.
pub fn mul_acc(dst: &mut [u8], src: &[u8], coef: u8) {
    assert_eq!(dst.len(), src.len(), "mul_acc length mismatch");
    match coef {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        c => {
            let t = tables();
            let lc = t.log[c as usize] as usize;
            for (d, &s) in dst.iter_mut().zip(src) {
                if s != 0 {
                    *d ^= t.exp[lc + t.log[s as usize] as usize];
                }
            }
        }
    }
}

/// Multiplies every byte of `buf` by `coef` in place.
pub fn scale(buf: &mut [u8], coef: u8) {
    match coef {
        1 => {}
        0 => buf.fill(0),
        c => buf.iter_mut().for_each(|b| *b = mul(*b, c)),
    }
}

/// Rank of a dense matrix over GF(256). The input is consumed as scratch.
pub fn rank(mut rows: Vec<Vec<u8>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pinv = inv(rows[rank][col]).expect("pivot is nonzero");
        scale(&mut rows[rank], pinv);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[col] != 0 {
                let f = row[col];
                mul_acc(row, &pivot, f);
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Inverse of a square matrix, or `None` if it is singular.
pub fn invert(m: &[Vec<u8>]) -> Option<Vec<Vec<u8>>> {
    let n = m.len();
    let mut aug: Vec<Vec<u8>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n, "matrix is not square");
            let mut r = row.clone();
            r.extend((0..n).map(|j| u8::from(i == j)));
            r
        })
        .collect();
    for col in 0..n {
        let p = (col..n).find(|&r| aug[r][col] != 0)?;
        aug.swap(col, p);
        let pinv = inv(aug[col][col]).ok()?;
        scale(&mut aug[col], pinv);
        let pivot = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != col && row[col] != 0 {
                let f = row[col];
                mul_acc(row, &pivot, f);
            }
        }
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}
