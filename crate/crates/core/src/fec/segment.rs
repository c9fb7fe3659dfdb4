/// A stream cut into network blocks; the last block is zero-padded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmented {
    pub blocks: Vec<Vec<u8>>,
    pub pad: usize,
}

pub fn segment(stream: &[u8], k: usize) -> Segmented {
    assert!(k > 0, "block size must be positive");
    let n_blocks = stream.len().div_ceil(k).max(1);
    let pad = n_blocks * k - stream.len();
    let blocks = (0..n_blocks)
        .map(|b| {
            let mut blk: Vec<u8> = stream[(b * k).min(stream.len())..((b + 1) * k).min(stream.len())].to_vec();
            blk.resize(k, 0);
            blk
        })
        .collect();
    Segmented { blocks, pad }
}

pub fn reassemble(blocks: &[Vec<u8>], pad: usize) -> Vec<u8> {
    let mut out: Vec<u8> = blocks.concat();
    out.truncate(out.len().saturating_sub(pad));
    out
}
