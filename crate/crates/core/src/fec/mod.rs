//! Error control: CRC, eBCH(32,11), LDPC(1944,972), interleaving,
//! segmentation and the Walsh–Hadamard reference code.

mod bch;
mod crc;
mod interleave;
mod ldpc;
mod segment;
mod walsh;

pub use bch::{message_bits, BchCode, BCH_GENERATOR, BCH_K, BCH_N};
pub use crc::{crc16_bits, crc16_bytes, crc_append, crc_check, describe, CRC_BITS, CRC_INIT, CRC_POLY};
pub use interleave::{deinterleave, interleave};
pub use ldpc::{
    LdpcCode, LdpcDecoded, DEFAULT_MAX_ITERATIONS, DEFAULT_NORMALIZATION, WLAN_1944_ALIST,
    WLAN_1944_SHA256,
};
pub use segment::{reassemble, segment, Segmented};
pub use walsh::{fwht, wh_codeword, wh_sdd_decode, WH_K, WH_N};
