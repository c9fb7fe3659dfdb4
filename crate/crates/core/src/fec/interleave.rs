use crate::error::{Error, Result};

/// Row-in/column-out block interleaver: writes `bits` row by row into a
/// `rows × cols` array and reads it out column by column.
pub fn interleave<T: Copy>(bits: &[T], rows: usize, cols: usize) -> Result<Vec<T>> {
    check(bits.len(), rows, cols)?;
    Ok((0..cols)
        .flat_map(|c| (0..rows).map(move |r| r * cols + c))
        .map(|i| bits[i])
        .collect())
}

pub fn deinterleave<T: Copy + Default>(bits: &[T], rows: usize, cols: usize) -> Result<Vec<T>> {
    check(bits.len(), rows, cols)?;
    let mut out = vec![T::default(); bits.len()];
    let mut k = 0;
    for c in 0..cols {
        for r in 0..rows {
            out[r * cols + c] = bits[k];
            k += 1;
        }
    }
    Ok(out)
}

fn check(len: usize, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != len {
        return Err(Error::DimensionMismatch {
            what: "interleaver block",
            expected: rows * cols,
            got: len,
        });
    }
    Ok(())
}
