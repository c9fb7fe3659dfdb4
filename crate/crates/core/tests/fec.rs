use mlss::channel::{add_noise_in_place, noise_variance, snr_from_ebn0};
use mlss::fec::*;
use mlss::rng::rng_from;
use proptest::prelude::*;
use rand::Rng;

/// Polynomial long division over GF(2) on the message followed by 16 zeros,
/// with the 0xFFFF preset applied to the first 16 message bits.
fn crc_long_division(bits: &[u8]) -> u16 {
    let mut buf: Vec<u8> = bits.to_vec();
    for b in buf.iter_mut().take(16) {
        *b ^= 1;
    }
    buf.extend(std::iter::repeat_n(0, 16));
    let gen: Vec<u8> = (0..17).rev().map(|i| ((0x11021u32 >> i) & 1) as u8).collect();
    for i in 0..bits.len() {
        if buf[i] == 1 {
            for (j, g) in gen.iter().enumerate() {
                buf[i + j] ^= g;
            }
        }
    }
    buf[bits.len()..].iter().fold(0, |acc, &b| (acc << 1) | b as u16)
}

fn bytes_to_bits(data: &[u8]) -> Vec<u8> {
    data.iter().flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1)).collect()
}

#[test]
fn crc_check_value() {
    assert_eq!(crc16_bytes(b"123456789"), 0x29B1);
    let bits = bytes_to_bits(b"123456789");
    assert_eq!(crc16_bits(&bits), 0x29B1);
    assert_eq!(crc_long_division(&bits), 0x29B1);
    assert!(describe().contains("0x1021"));
}

#[test]
fn crc_detects_every_single_flip() {
    let mut rng = rng_from(1, &[]);
    let payload: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
    let framed = crc_append(&payload);
    assert!(crc_check(&framed));
    for i in 0..framed.len() {
        let mut f = framed.clone();
        f[i] ^= 1;
        assert!(!crc_check(&f), "flip at {i} undetected");
    }
    assert!(!crc_check(&[1, 0, 1]));
}

proptest! {
    #[test]
    fn crc_matches_long_division(bits in proptest::collection::vec(0u8..2, 16..300)) {
        prop_assert_eq!(crc16_bits(&bits), crc_long_division(&bits));
    }

    #[test]
    fn crc_is_affine(
        a in proptest::collection::vec(0u8..2, 64),
        b in proptest::collection::vec(0u8..2, 64),
        c in proptest::collection::vec(0u8..2, 64),
    ) {
        // With a nonzero preset the CRC is affine: crc(a⊕b⊕c) = crc(a)⊕crc(b)⊕crc(c).
        let x: Vec<u8> = a.iter().zip(&b).zip(&c).map(|((p, q), r)| p ^ q ^ r).collect();
        prop_assert_eq!(crc16_bits(&x), crc16_bits(&a) ^ crc16_bits(&b) ^ crc16_bits(&c));
    }

    #[test]
    fn interleaver_round_trip(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
        let mut rng = rng_from(seed, &[]);
        let x: Vec<u8> = (0..rows * cols).map(|_| rng.random_range(0..2)).collect();
        let y = interleave(&x, rows, cols).unwrap();
        prop_assert_eq!(deinterleave(&y, rows, cols).unwrap(), x);
    }

    #[test]
    fn segmentation_round_trip(len in 0usize..500, k in 1usize..64) {
        let x: Vec<u8> = (0..len).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let s = segment(&x, k);
        prop_assert!(s.blocks.iter().all(|b| b.len() == k));
        prop_assert!(s.pad < k || len == 0);
        prop_assert_eq!(reassemble(&s.blocks, s.pad), x);
    }
}

#[test]
fn interleaver_definition_and_burst_spreading() {
    let x = ['a', 'b', 'c', 'd', 'e', 'f'];
    assert_eq!(interleave(&x, 2, 3).unwrap(), vec!['a', 'd', 'b', 'e', 'c', 'f']);
    assert!(interleave(&x, 4, 2).is_err());

    // A burst of `rows` consecutive channel errors lands in distinct rows.
    let (rows, cols) = (61, 32);
    let idx: Vec<usize> = (0..rows * cols).collect();
    let sent = interleave(&idx, rows, cols).unwrap();
    for start in [0, 17, 500, 1891] {
        let mut hit: Vec<usize> = sent[start..start + rows].iter().map(|i| i / cols).collect();
        hit.sort_unstable();
        hit.dedup();
        assert!(hit.len() >= rows - 1, "burst at {start} covers {} rows", hit.len());
    }
}

#[test]
fn segmentation_of_ldpc_codeword() {
    let s = segment(&vec![1; 1944], 32);
    assert_eq!(s.blocks.len(), 61);
    assert_eq!(s.pad, 8);
    assert!(s.blocks[60][24..].iter().all(|&b| b == 0));
    assert_eq!(segment(&[1; 64], 32).pad, 0);
}

#[test]
fn bch_code_structure() {
    let code = BchCode::new();
    assert_eq!(code.encode(&[0; 11]), vec![0; 32]);
    let d = code.base_min_distance();
    assert!(d >= 11, "d_min = {d}");
    for m in 0..2048 {
        let w = code.codeword(m);
        assert_eq!(w.count_ones() % 2, 0, "extended parity");
        let bits = message_bits(m);
        let cw = code.encode(&bits);
        let soft: Vec<f64> = cw.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect();
        assert_eq!(code.decode_soft(&soft), bits);
    }
}

#[test]
fn bch_hard_decoding_corrects_up_to_t() {
    let code = BchCode::new();
    let t = ((code.base_min_distance() - 1) / 2) as usize;
    let mut rng = rng_from(2, &[]);
    for _ in 0..200 {
        let msg: Vec<u8> = (0..11).map(|_| rng.random_range(0..2)).collect();
        let mut cw = code.encode(&msg);
        let mut pos: Vec<usize> = (0..31).collect();
        for i in 0..t {
            let j = rng.random_range(i..31);
            pos.swap(i, j);
            cw[pos[i]] ^= 1;
        }
        assert_eq!(code.decode_hard(&cw), msg);
    }
}

fn q(x: f64) -> f64 {
    0.5 * statrs_erfc(x / std::f64::consts::SQRT_2)
}

fn statrs_erfc(x: f64) -> f64 {
    // Numerical Recipes erfc, accurate to 1.2e-7 relative.
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[test]
fn bch_soft_decoding_gains_two_db_over_bpsk() {
    // Uncoded BPSK reaches 1e-4 near 8.4 dB; two dB lower the coded
    // BER must already be below 1e-4.
    let ebn0 = 8.4 - 2.0;
    assert!(q((2.0 * 10f64.powf(8.4 / 10.0)).sqrt()) < 1.1e-4);
    let code = BchCode::new();
    let snr = snr_from_ebn0(ebn0, 1.0, 11.0 / 32.0);
    let sigma = noise_variance(snr).sqrt();
    let mut rng = rng_from(3, &[]);
    let blocks = 20_000;
    let mut errors = 0;
    for _ in 0..blocks {
        let m = rng.random_range(0..2048);
        let cw = code.encode(&message_bits(m));
        let mut rx: Vec<f64> = cw.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect();
        add_noise_in_place(&mut rx, sigma, &mut rng);
        let got = code.decode_soft(&rx);
        errors += got.iter().zip(message_bits(m)).filter(|(a, b)| **a != *b).count();
    }
    let ber = errors as f64 / (blocks * 11) as f64;
    assert!(ber < 1e-4, "coded BER {ber:e} at {ebn0} dB");
}

#[test]
fn ldpc_asset_and_encoder() {
    let code = LdpcCode::wlan_1944().unwrap();
    assert_eq!((code.n(), code.k()), (1944, 972));
    assert_eq!(code.rate(), 0.5);
    assert!(code.is_codeword(&code.encode(&vec![0; 972]).unwrap()));
    assert_eq!(code.encode(&vec![0; 972]).unwrap(), vec![0; 1944]);
    let mut rng = rng_from(4, &[]);
    for _ in 0..20 {
        let msg: Vec<u8> = (0..972).map(|_| rng.random_range(0..2)).collect();
        let cw = code.encode(&msg).unwrap();
        assert_eq!(&cw[..972], msg.as_slice());
        assert!(code.is_codeword(&cw));
        let llr: Vec<f64> = cw.iter().map(|&b| if b == 1 { -20.0 } else { 20.0 }).collect();
        let d = code.decode(&llr).unwrap();
        assert!(d.converged);
        assert_eq!(d.iterations, 1);
        assert_eq!(d.message, msg);
    }
    assert!(LdpcCode::from_alist(&WLAN_1944_ALIST.replacen("1944 972", "1944 973", 1)).is_err());
}

#[test]
fn ldpc_waterfall_at_two_db() {
    let code = LdpcCode::wlan_1944().unwrap();
    let snr = snr_from_ebn0(2.0, 1.0, 0.5);
    let s2 = noise_variance(snr);
    let mut rng = rng_from(5, &[]);
    let frames = 100;
    let mut frame_errors = 0;
    for _ in 0..frames {
        let msg: Vec<u8> = (0..972).map(|_| rng.random_range(0..2)).collect();
        let cw = code.encode(&msg).unwrap();
        let mut rx: Vec<f64> = cw.iter().map(|&b| if b == 1 { -1.0 } else { 1.0 }).collect();
        add_noise_in_place(&mut rx, s2.sqrt(), &mut rng);
        let llr: Vec<f64> = rx.iter().map(|r| 2.0 * r / s2).collect();
        let d = code.decode(&llr).unwrap();
        if d.converged {
            assert!(code.is_codeword(&d.codeword));
        }
        frame_errors += (d.message != msg) as usize;
    }
    assert!((frame_errors as f64) / (frames as f64) < 0.1, "{frame_errors} frame errors");
}

#[test]
fn walsh_hadamard_reference() {
    let words: Vec<Vec<f64>> = (0..WH_N).map(wh_codeword).collect();
    for i in 0..WH_N {
        for j in i + 1..WH_N {
            let d = words[i].iter().zip(&words[j]).filter(|(a, b)| a != b).count();
            assert_eq!(d, 128);
        }
        assert_eq!(wh_sdd_decode(&words[i]), i);
    }
    // Fast transform equals direct correlation.
    let mut rng = rng_from(6, &[]);
    for _ in 0..50 {
        let r: Vec<f64> = (0..WH_N).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = (0..WH_N)
            .max_by(|&a, &b| {
                let ca: f64 = r.iter().zip(&words[a]).map(|(x, y)| x * y).sum();
                let cb: f64 = r.iter().zip(&words[b]).map(|(x, y)| x * y).sum();
                ca.partial_cmp(&cb).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(wh_sdd_decode(&r), direct);
    }
}
