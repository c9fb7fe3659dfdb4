use mlss::channel::{ChannelSpec, SnrMode};
use mlss::codec::{build, calibrate_llr, ArchSpec};
use mlss::nn::NetworkModel;
use mlss::dsss::{msequence, DsssConfig, LfsrSpec};
use mlss::fec::LdpcCode;
use mlss::montecarlo::*;
use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn dsss(n: usize) -> DsssLink {
    let pn = msequence(&LfsrSpec::standard(7).unwrap()).unwrap();
    DsssLink::new(DsssConfig::bpsk(n, pn).unwrap(), 4096).unwrap()
}

/// Bit error rate of M-ary orthogonal signalling with coherent ML detection:
/// Ps = 1 − ∫ φ(y) Φ(y + √(2·k·Eb/N0))^(M−1) dy, Pb = Ps·(M/2)/(M−1).
fn orthogonal_ber(ebn0_db: f64, k: u32) -> f64 {
    let n = Normal::standard();
    let m = (1u64 << k) as f64;
    let shift = (2.0 * k as f64 * 10f64.powf(ebn0_db / 10.0)).sqrt();
    let (lo, hi, steps) = (-10.0, 10.0, 20_000);
    let h = (hi - lo) / steps as f64;
    let mut pc = 0.0;
    for i in 0..=steps {
        let y = lo + i as f64 * h;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        pc += w * n.pdf(y) * n.cdf(y + shift).powf(m - 1.0);
    }
    (1.0 - pc * h) * (m / 2.0) / (m - 1.0)
}

fn within_stat(measured: &BerRecord, p: f64) -> bool {
    let sd = (p * (1.0 - p) / measured.bits_simulated as f64).sqrt();
    (measured.ber - p).abs() < 5.0 * sd + 1e-12
}

#[test]
fn dsss_matches_closed_form_bpsk() {
    let link = dsss(64);
    let rule = StopRule {
        min_errors: 2000,
        max_bits: 10_000_000,
    };
    for (i, e) in [0.0, 3.0, 6.0].into_iter().enumerate() {
        let r = simulate_point(&link, e, &rule, 1, i as u64).unwrap();
        assert!(r.converged);
        assert!(within_stat(&r, bpsk_ber(e)), "Eb/N0 {e}: {} vs {}", r.ber, bpsk_ber(e));
        assert!(record_is_consistent(&r, 64.0, 1.0));
        // per-chip axis sits 10·log10(64) below Eb/N0
        assert!((r.ebn0_db - r.snr_db - 10.0 * 64f64.log10()).abs() < 1e-9);
    }
}

#[test]
fn walsh_link_matches_orthogonal_signalling_theory() {
    let link = WalshLink { blocks_per_batch: 512 };
    let rule = StopRule {
        min_errors: 1000,
        max_bits: 20_000_000,
    };
    for (i, e) in [2.0, 4.0].into_iter().enumerate() {
        let r = simulate_point(&link, e, &rule, 2, i as u64).unwrap();
        let p = orthogonal_ber(e, 8);
        assert!(within_stat(&r, p), "Eb/N0 {e}: {} vs {p}", r.ber);
    }
}

#[test]
fn closed_form_helpers() {
    assert!((q_function(0.0) - 0.5).abs() < 1e-15);
    assert!((q_function(1.0) - 0.158_655_253_931_457).abs() < 1e-9, "{}", q_function(1.0));
    assert!((bpsk_ebn0_for_ber(1e-3) - 6.7895).abs() < 1e-3);
    assert!((bpsk_ebn0_for_ber(1e-4) - 8.3983).abs() < 1e-3);
    for e in [0.0, 4.0, 9.0] {
        assert!((bpsk_ebn0_for_ber(bpsk_ber(e)) - e).abs() < 1e-9);
    }
}

#[test]
fn results_do_not_depend_on_execution_mode() {
    let link = dsss(32);
    let rule = StopRule {
        min_errors: 300,
        max_bits: 1_000_000,
    };
    let a = simulate_point_with(&link, 2.0, &rule, 9, 0, Execution::Sequential).unwrap();
    let b = simulate_point_with(&link, 2.0, &rule, 9, 0, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, simulate_point(&link, 2.0, &rule, 9, 0).unwrap());
    assert_ne!(a, simulate_point(&link, 2.0, &rule, 10, 0).unwrap());
}

#[test]
fn stop_rule_and_convergence_flag() {
    let link = dsss(8);
    let capped = simulate_point(&link, 12.0, &StopRule { min_errors: 100, max_bits: 50_000 }, 1, 0).unwrap();
    assert!(!capped.converged);
    assert!(capped.bits_simulated >= 50_000);
    // one wave is 8·4096 bits, about 6 errors at 8 dB
    let small = simulate_point(&link, 8.0, &StopRule { min_errors: 10, max_bits: u64::MAX }, 1, 0).unwrap();
    assert!(small.bit_errors >= 10 && small.bit_errors < MIN_CONVERGED_ERRORS);
    assert!(!small.converged, "fewer than {MIN_CONVERGED_ERRORS} errors never counts as converged");
    let ok = simulate_point(&link, 0.0, &StopRule { min_errors: 60, max_bits: u64::MAX }, 1, 0).unwrap();
    assert!(ok.converged);
    assert_eq!(ok.ber, ok.bit_errors as f64 / ok.bits_simulated as f64);
}

#[test]
fn sweep_requires_increasing_grid() {
    let link = dsss(8);
    let rule = StopRule { min_errors: 10, max_bits: 10_000 };
    assert!(sweep(&link, &[1.0, 1.0], &rule, 1).is_err());
    assert!(sweep(&link, &[2.0, 1.0], &rule, 1).is_err());
    let r = sweep(&link, &[0.0, 1.0], &rule, 1).unwrap();
    assert_eq!(r.len(), 2);
}

fn record(e: f64, ber: f64) -> BerRecord {
    BerRecord {
        link: "x".into(),
        snr_db: e,
        ebn0_db: e,
        bits_simulated: 1,
        bit_errors: 0,
        frames: 1,
        frame_errors: 0,
        ber,
        fer: 0.0,
        converged: true,
    }
}

#[test]
fn crossing_interpolates_in_log_ber() {
    let rs = [record(0.0, 1e-2), record(2.0, 1e-4), record(4.0, 1e-6)];
    assert!((ebn0_at_ber(&rs, 1e-3).unwrap() - 1.0).abs() < 1e-12);
    assert!((ebn0_at_ber(&rs, 1e-5).unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(ebn0_at_ber(&rs, 1e-7), None);
    assert!((snr_at_ber(&rs, 1e-3, 64.0, 1.0).unwrap() - (1.0 - 10.0 * 64f64.log10())).abs() < 1e-9);
}

#[test]
fn csv_carries_version_and_config_hash() {
    let rs = [record(1.0, 0.1)];
    let mut out = Vec::new();
    write_ber_csv(&rs, "cfg", &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("# mlss "));
    assert!(head.ends_with(&config_hash("cfg")));
    assert_eq!(lines.next().unwrap(), BER_CSV_COLUMNS);
    assert_eq!(lines.next().unwrap().split(',').count(), BER_CSV_COLUMNS.split(',').count());
    // SHA-256 of "abc"
    assert_eq!(
        config_hash("abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

/// Direct k = 32 model with a matched-filter receiver. Crosstalk between
/// the 32 bit streams sets a floor near Q(√(hidden/31)).
fn matched(hidden: usize) -> NetworkModel {
    let mut m = build(ArchSpec::direct(32, hidden).unwrap(), 21).unwrap();
    m.w2 = m.w1.t().to_owned();
    m.b1.fill(0.0);
    m.b2.fill(0.0);
    m.norm_gain = 1.0 / (32.0f64 / 3.0).sqrt();
    m
}

#[test]
fn coded_links_on_a_matched_network() {
    let m = matched(256);
    let rule = StopRule { min_errors: 50, max_bits: 400_000 };
    let raw = simulate_point(&NetworkLink::new(&m, 64).unwrap(), 15.0, &rule, 1, 0).unwrap();
    // floor Q(√(256/31)) ≈ 2e-3
    assert!(raw.ber > 5e-4 && raw.ber < 5e-3, "{}", raw.ber);

    let bch = BchLink::new(&m, 64).unwrap();
    assert!((bch.rate() - 11.0 / 32.0).abs() < 1e-15);
    let r = simulate_point(&bch, 15.0, &rule, 1, 0).unwrap();
    assert!(r.ber < raw.ber / 20.0, "{} vs {}", r.ber, raw.ber);
    assert!(record_is_consistent(&r, 8.0, 11.0 / 32.0));

    let code = LdpcCode::wlan_1944().unwrap();
    let ch = ChannelSpec::new(8.0, 972.0 / 1952.0, SnrMode::EbN0Db(10.0), 1).unwrap();
    let cal = calibrate_llr(&m, &ch, 1000).unwrap();
    let ldpc = LdpcLink::new(&m, code, cal, 2).unwrap();
    assert_eq!(ldpc.blocks_per_frame(), 61);
    assert!((ldpc.rate() - 972.0 / 1952.0).abs() < 1e-15);
    let r = simulate_point(&ldpc, 10.0, &StopRule { min_errors: 50, max_bits: 50_000 }, 1, 0).unwrap();
    assert_eq!(r.bit_errors, 0);
    assert_eq!(r.bits_simulated % 972, 0);

    let one_hot = build(ArchSpec::reference_one_hot(), 1).unwrap();
    assert!(BchLink::new(&one_hot, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn records_satisfy_the_snr_identity(e in -5.0f64..10.0, n in prop::sample::select(vec![8usize, 16, 64, 100])) {
        let link = dsss(n);
        let r = simulate_point(&link, e, &StopRule { min_errors: 5, max_bits: 8192 }, 3, 0).unwrap();
        prop_assert!(record_is_consistent(&r, n as f64, 1.0));
        prop_assert!(r.bit_errors <= r.bits_simulated);
        prop_assert!(r.frame_errors <= r.frames);
    }
}
