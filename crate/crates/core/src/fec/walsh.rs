//! The (256, 8) Walsh–Hadamard code used as the one-hot network's
//! maximum-likelihood reference.

pub const WH_N: usize = 256;
pub const WH_K: usize = 8;

/// Codeword `i` as ±1 chips: row `i` of the Sylvester Hadamard matrix.
pub fn wh_codeword(i: usize) -> Vec<f64> {
    (0..WH_N)
        .map(|j| if (i & j).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 })
        .collect()
}

/// In-place fast Walsh–Hadamard transform (natural order, unnormalized).
pub fn fwht(x: &mut [f64]) {
    let n = x.len();
    assert!(n.is_power_of_two(), "FWHT length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in x.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (u, v) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*u + *v, *u - *v);
                *u = s;
                *v = d;
            }
        }
        h *= 2;
    }
}

/// Correlation-argmax decision over all 256 codewords; ties go to the
/// lowest index.
pub fn wh_sdd_decode(soft: &[f64]) -> usize {
    assert_eq!(soft.len(), WH_N, "Walsh-Hadamard soft input length");
    let mut c = soft.to_vec();
    fwht(&mut c);
    crate::codec::argmax(&c)
}
