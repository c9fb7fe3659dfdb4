//! CRC-16/CCITT-FALSE over bit streams: polynomial 0x1021, init 0xFFFF,
//! no reflection, no final xor.

pub const CRC_POLY: u16 = 0x1021;
pub const CRC_INIT: u16 = 0xFFFF;
pub const CRC_BITS: usize = 16;

/// CRC register after shifting in `bits` (one bit per byte, MSB first).
pub fn crc16_bits(bits: &[u8]) -> u16 {
    let mut reg = CRC_INIT;
    for &b in bits {
        let fb = ((reg >> 15) as u8 ^ (b & 1)) & 1;
        reg <<= 1;
        if fb == 1 {
            reg ^= CRC_POLY;
        }
    }
    reg
}

pub fn crc16_bytes(data: &[u8]) -> u16 {
    let mut reg = CRC_INIT;
    for &byte in data {
        reg ^= (byte as u16) << 8;
        for _ in 0..8 {
            reg = if reg & 0x8000 != 0 {
                (reg << 1) ^ CRC_POLY
            } else {
                reg << 1
            };
        }
    }
    reg
}

pub fn crc_append(bits: &[u8]) -> Vec<u8> {
    let crc = crc16_bits(bits);
    let mut out = Vec::with_capacity(bits.len() + CRC_BITS);
    out.extend(bits.iter().map(|b| b & 1));
    out.extend((0..CRC_BITS).rev().map(|i| ((crc >> i) & 1) as u8));
    out
}

/// True when the trailing 16 bits are the CRC of the rest.
pub fn crc_check(bits: &[u8]) -> bool {
    if bits.len() < CRC_BITS {
        return false;
    }
    let (payload, tail) = bits.split_at(bits.len() - CRC_BITS);
    let got = tail.iter().fold(0u16, |acc, &b| (acc << 1) | (b & 1) as u16);
    crc16_bits(payload) == got
}

pub fn describe() -> String {
    format!(
        "CRC-16/CCITT-FALSE width={CRC_BITS} poly=0x{CRC_POLY:04X} init=0x{CRC_INIT:04X} refin=false refout=false xorout=0x0000 check=0x29B1"
    )
}
