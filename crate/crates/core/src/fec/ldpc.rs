//! Rate-1/2 LDPC code of length 1944 (WLAN, lifting size 81) with a
//! normalized min-sum decoder.
//!
//! LLRs follow the log P(0)/P(1) convention: positive values favour 0.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const WLAN_1944_ALIST: &str = include_str!("../../assets/wlan_1944_972.alist");
pub const WLAN_1944_SHA256: &str = "22e444c16bd611b3d7764477e0a9f082ba7f0cfb13f3bf42064fb27732755ff8";

pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const DEFAULT_NORMALIZATION: f64 = 0.8;

#[derive(Clone, Debug)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    /// Variable index of every edge, grouped by check.
    edge_var: Vec<u32>,
    check_ptr: Vec<usize>,
    /// Edges of every variable, grouped by variable.
    var_edges: Vec<u32>,
    var_ptr: Vec<usize>,
    /// Rows of the inverse of the parity part of H, as bit masks.
    parity_inverse: Vec<Vec<u64>>,
    pub max_iterations: usize,
    pub normalization: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdpcDecoded {
    pub message: Vec<u8>,
    pub codeword: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::ParityCheck(msg.into())
}

impl LdpcCode {
    /// The embedded WLAN (1944, 972) code, checksum-verified.
    pub fn wlan_1944() -> Result<Self> {
        let digest = Sha256::digest(WLAN_1944_ALIST.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        if hex != WLAN_1944_SHA256 {
            return Err(parse_err(format!("parity-check asset checksum mismatch: {hex}")));
        }
        Self::from_alist(WLAN_1944_ALIST)
    }

    /// Parses an alist file. The first `n − m` columns carry the message.
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut nums = text.split_whitespace().map(|t| {
            t.parse::<usize>()
                .map_err(|_| parse_err(format!("bad alist token {t:?}")))
        });
        let mut next = || nums.next().unwrap_or_else(|| Err(parse_err("alist ends early")));
        let n = next()?;
        let m = next()?;
        if n == 0 || m == 0 || m >= n {
            return Err(parse_err(format!("unsupported dimensions {n}x{m}")));
        }
        let max_col = next()?;
        let max_row = next()?;
        let col_w: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
        let row_w: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
        let mut cols: Vec<Vec<usize>> = Vec::with_capacity(n);
        for &w in &col_w {
            let entries: Vec<usize> = (0..max_col).map(|_| next()).collect::<Result<_>>()?;
            if w > max_col || entries[..w].contains(&0) {
                return Err(parse_err("row index out of range"));
            }
            cols.push(entries[..w].iter().map(|v| v - 1).collect());
        }
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(m);
        for &w in &row_w {
            let entries: Vec<usize> = (0..max_row).map(|_| next()).collect::<Result<_>>()?;
            if w > max_row || entries[..w].iter().any(|&v| v == 0 || v > n) {
                return Err(parse_err("column index out of range"));
            }
            rows.push(entries[..w].iter().map(|v| v - 1).collect());
        }
        // The column and row lists must describe the same matrix.
        let mut from_cols = vec![Vec::new(); m];
        for (j, c) in cols.iter().enumerate() {
            for &i in c {
                if i >= m {
                    return Err(parse_err("row index out of range"));
                }
                from_cols[i].push(j);
            }
        }
        for (i, r) in rows.iter_mut().enumerate() {
            r.sort_unstable();
            from_cols[i].sort_unstable();
            if *r != from_cols[i] {
                return Err(parse_err(format!("row {i} disagrees with the column lists")));
            }
        }
        Self::from_rows(n, &rows)
    }

    fn from_rows(n: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let m = rows.len();
        let mut edge_var = Vec::new();
        let mut check_ptr = vec![0];
        for r in rows {
            edge_var.extend(r.iter().map(|&v| v as u32));
            check_ptr.push(edge_var.len());
        }
        let mut per_var = vec![Vec::new(); n];
        for (e, &v) in edge_var.iter().enumerate() {
            per_var[v as usize].push(e as u32);
        }
        let mut var_edges = Vec::with_capacity(edge_var.len());
        let mut var_ptr = vec![0];
        for list in &per_var {
            var_edges.extend_from_slice(list);
            var_ptr.push(var_edges.len());
        }
        let parity_inverse = invert_parity_part(n, rows)?;
        Ok(Self {
            n,
            m,
            edge_var,
            check_ptr,
            var_edges,
            var_ptr,
            parity_inverse,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            normalization: DEFAULT_NORMALIZATION,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.n - self.m
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn edges(&self) -> usize {
        self.edge_var.len()
    }

    /// Number of unsatisfied parity checks.
    pub fn syndrome_weight(&self, word: &[u8]) -> usize {
        (0..self.m)
            .filter(|&c| {
                self.edge_var[self.check_ptr[c]..self.check_ptr[c + 1]]
                    .iter()
                    .fold(0u8, |acc, &v| acc ^ (word[v as usize] & 1))
                    == 1
            })
            .count()
    }

    pub fn is_codeword(&self, word: &[u8]) -> bool {
        word.len() == self.n && self.syndrome_weight(word) == 0
    }

    /// Systematic encoding: message bits followed by parity bits.
    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>> {
        let k = self.k();
        if msg.len() != k {
            return Err(Error::DimensionMismatch {
                what: "LDPC message",
                expected: k,
                got: msg.len(),
            });
        }
        // Syndrome of the message part, packed.
        let words = self.m.div_ceil(64);
        let mut s = vec![0u64; words];
        for c in 0..self.m {
            let bit = self.edge_var[self.check_ptr[c]..self.check_ptr[c + 1]]
                .iter()
                .filter(|&&v| (v as usize) < k)
                .fold(0u8, |acc, &v| acc ^ (msg[v as usize] & 1));
            s[c / 64] |= (bit as u64) << (c % 64);
        }
        let mut out = Vec::with_capacity(self.n);
        out.extend(msg.iter().map(|b| b & 1));
        for row in &self.parity_inverse {
            let ones: u32 = row.iter().zip(&s).map(|(a, b)| (a & b).count_ones()).sum();
            out.push((ones & 1) as u8);
        }
        Ok(out)
    }

    /// Normalized min-sum decoding with early exit once all checks hold.
    pub fn decode(&self, llr: &[f64]) -> Result<LdpcDecoded> {
        if llr.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "LDPC LLR vector",
                expected: self.n,
                got: llr.len(),
            });
        }
        let alpha = self.normalization;
        let mut c2v = vec![0.0f64; self.edges()];
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| llr[v as usize]).collect();
        let mut total = llr.to_vec();
        let mut hard = vec![0u8; self.n];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iterations {
            iterations += 1;
            for c in 0..self.m {
                let (lo, hi) = (self.check_ptr[c], self.check_ptr[c + 1]);
                let mut min1 = f64::INFINITY;
                let mut min2 = f64::INFINITY;
                let mut arg = lo;
                let mut sign = 1.0;
                for e in lo..hi {
                    let v = v2c[e];
                    if v < 0.0 {
                        sign = -sign;
                    }
                    let a = v.abs();
                    if a < min1 {
                        min2 = min1;
                        min1 = a;
                        arg = e;
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for e in lo..hi {
                    let mag = if e == arg { min2 } else { min1 };
                    let s = if v2c[e] < 0.0 { -sign } else { sign };
                    c2v[e] = alpha * s * mag;
                }
            }
            for v in 0..self.n {
                let edges = &self.var_edges[self.var_ptr[v]..self.var_ptr[v + 1]];
                let t = llr[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                total[v] = t;
                hard[v] = (t < 0.0) as u8;
                for &e in edges {
                    v2c[e as usize] = t - c2v[e as usize];
                }
            }
            if self.syndrome_weight(&hard) == 0 {
                converged = true;
                break;
            }
        }
        Ok(LdpcDecoded {
            message: hard[..self.k()].to_vec(),
            codeword: hard,
            converged,
            iterations,
        })
    }
}

/// Inverts the square parity part (last m columns) of H over GF(2).
fn invert_parity_part(n: usize, rows: &[Vec<usize>]) -> Result<Vec<Vec<u64>>> {
    let m = rows.len();
    let k = n - m;
    let words = m.div_ceil(64);
    // Augmented [Hp | I], each row packed as 2·words u64s.
    let mut a: Vec<Vec<u64>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![0u64; 2 * words];
            for &j in r.iter().filter(|&&j| j >= k) {
                let c = j - k;
                row[c / 64] ^= 1 << (c % 64);
            }
            row[words + i / 64] |= 1 << (i % 64);
            row
        })
        .collect();
    for col in 0..m {
        let (w, b) = (col / 64, 1u64 << (col % 64));
        let pivot = (col..m)
            .find(|&r| a[r][w] & b != 0)
            .ok_or_else(|| parse_err("parity part of H is singular"))?;
        a.swap(col, pivot);
        let prow = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && row[w] & b != 0 {
                row.iter_mut().zip(&prow).for_each(|(x, y)| *x ^= y);
            }
        }
    }
    Ok(a.into_iter().map(|r| r[words..].to_vec()).collect())
}
