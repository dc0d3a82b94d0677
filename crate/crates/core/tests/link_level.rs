//! Link-level error rates over the AWGN channel.

use advcomm_core::ldpc::{build_regular_ldpc, to_generator, BpDecoder, CodeRate, DEFAULT_MAX_ITERS};
use advcomm_core::math::RngStream;
use advcomm_core::modem::{db_to_linear, transmit, ChannelParams, Constellation, Modulation};
use statrs::distribution::{ContinuousCDF, Normal};

const H_MAG: f64 = std::f64::consts::SQRT_2;

fn random_bits(rng: &mut RngStream, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.below(2) as u8).collect()
}

/// Gray QPSK at unit amplitude per real dimension has BER `Q(√η)`.
#[test]
fn uncoded_qpsk_ber_matches_q_function() {
    let c = Constellation::new(Modulation::Qpsk);
    let q = |v: f64| 1.0 - Normal::standard().cdf(v);
    let mut rng = RngStream::new(11, 0);
    let bits_per_point = 400_000;
    for snr_db in [0.0, 2.0, 4.0, 6.0] {
        let ch = ChannelParams::from_snr_db(snr_db, H_MAG).unwrap();
        let bits = random_bits(&mut rng, bits_per_point);
        let rx = transmit(&c.modulate(&bits).unwrap(), &ch, &mut rng);
        let scaled: Vec<_> = rx.iter().map(|y| y / ch.h_mag).collect();
        let errors = c.hard_demap(&scaled).iter().zip(&bits).filter(|(a, b)| a != b).count();
        let ber = errors as f64 / bits_per_point as f64;
        let p = q(db_to_linear(snr_db).sqrt());
        let sd = (p * (1.0 - p) / bits_per_point as f64).sqrt();
        assert!((ber - p).abs() < 4.0 * sd, "{snr_db} dB: {ber} vs {p}");
    }
}

/// Coded frame and bit error rates fall with SNR, and coding beats the
/// uncoded link.
#[test]
fn coded_error_rates_decrease_with_snr() {
    let h = build_regular_ldpc(96, CodeRate::Half, 3, &mut RngStream::new(1, 0)).unwrap();
    let (g, _) = to_generator(&h);
    let dec = BpDecoder::new(&h);
    let c = Constellation::new(Modulation::Qpsk);
    let frames = 400;
    let mut fer = Vec::new();
    let mut ber = Vec::new();
    for (i, snr_db) in [0.0, 2.0, 4.0, 6.0].into_iter().enumerate() {
        let ch = ChannelParams::from_snr_db(snr_db, H_MAG).unwrap();
        let mut rng = RngStream::new(12, i as u64);
        let (mut frame_errors, mut bit_errors) = (0, 0);
        for _ in 0..frames {
            let info = random_bits(&mut rng, g.k());
            let cw = g.encode(&info).unwrap();
            let rx = transmit(&c.modulate(&cw).unwrap(), &ch, &mut rng);
            let out = dec.decode(&c.demap(&rx, &ch), DEFAULT_MAX_ITERS);
            let wrong = g.extract_info(&out.bits).iter().zip(&info).filter(|(a, b)| a != b).count();
            bit_errors += wrong;
            frame_errors += usize::from(wrong > 0);
        }
        fer.push(frame_errors as f64 / frames as f64);
        ber.push(bit_errors as f64 / (frames * g.k()) as f64);
    }
    assert!(fer.windows(2).all(|w| w[1] <= w[0]), "FER {fer:?}");
    assert!(ber.windows(2).all(|w| w[1] <= w[0]), "BER {ber:?}");
    assert!(fer[0] > 0.2 && fer[3] < 0.05, "FER {fer:?}");
    let uncoded_6db = 1.0 - Normal::standard().cdf(db_to_linear(6.0).sqrt());
    assert!(ber[3] < uncoded_6db, "coded {} vs uncoded {uncoded_6db}", ber[3]);
}
