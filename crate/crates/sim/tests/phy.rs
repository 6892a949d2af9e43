use std::sync::{Arc, OnceLock};

use ccke_sim::phy::ser::{bin_low_db, DEFAULT_N_MC, DEFAULT_SER_SEED, SER_FLOOR, SNR_BINS};
use ccke_sim::phy::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table() -> Arc<SerTable> {
    static TABLE: OnceLock<Arc<SerTable>> = OnceLock::new();
    TABLE
        .get_or_init(|| Arc::new(SerTable::build(DEFAULT_N_MC, DEFAULT_SER_SEED).unwrap()))
        .clone()
}

#[test]
fn contexts_are_truncated_gaussian_and_uniform_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let mut sum = 0.0;
    let mut counts = [0usize; 10];
    for _ in 0..n {
        let ctx = sample_context(&mut rng);
        assert!((-5.0..=15.0).contains(&ctx.snr_db()));
        sum += ctx.snr_db();
        counts[usize::from(ctx.paths()) - 1] += 1;
    }
    assert!((sum / n as f64 - 5.0).abs() <= 0.5);
    let expected = n as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-squared with 9 degrees of freedom.
    assert!(chi2 < 21.666, "chi2 = {chi2}");
}

#[test]
fn single_path_channel_is_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let ch = Channel::draw(7.0, 1, &mut rng);
        assert!(ch.det().norm() <= 1e-12 * ch.frobenius_sq());
    }
}

#[test]
fn channel_energy_matches_snr() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for paths in [1u8, 4, 10] {
        let snr = 5.0;
        let n = 10_000;
        let mean = (0..n).map(|_| Channel::draw(snr, paths, &mut rng).frobenius_sq()).sum::<f64>() / n as f64;
        assert!((mean / snr - 1.0).abs() <= 0.05, "paths {paths}: {mean}");
    }
}

#[test]
fn noiseless_alamouti_succeeds_first_time() {
    let arq = ArqConfig::default().noiseless();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for app in [TransmissionApp::ALAMOUTI_BPSK, TransmissionApp::ALAMOUTI_QPSK] {
        for _ in 0..200 {
            let ctx = sample_context(&mut rng);
            assert_eq!(transmit_arq(app, &ctx, &arq, &mut rng), 1);
        }
    }
}

#[test]
fn vanishing_snr_hits_the_cap() {
    let arq = ArqConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for app in TransmissionApp::ALL {
        assert_eq!(transmit_arq_at(app, db_to_linear(f64::NEG_INFINITY), 4, &arq, &mut rng), 10);
    }
}

#[test]
fn latency_is_geometric_in_packet_error_rate() {
    let app = TransmissionApp::ALAMOUTI_QPSK;
    let (snr, paths) = (db_to_linear(9.0), 6);
    let arq = ArqConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let trials = 40_000;
    let failures = (0..trials).filter(|_| !send_packet(app, snr, paths, &arq, &mut rng)).count();
    let per = failures as f64 / trials as f64;

    let mut hist = [0usize; 11];
    for _ in 0..trials {
        hist[transmit_arq_at(app, snr, paths, &arq, &mut rng) as usize] += 1;
    }
    for t in 1..=2 {
        let ratio = hist[t + 1] as f64 / hist[t] as f64;
        // Delta-method standard error of a ratio of counts plus the PER estimate's own error.
        let se = ratio * (1.0 / hist[t + 1] as f64 + 1.0 / hist[t] as f64).sqrt()
            + (per * (1.0 - per) / trials as f64).sqrt();
        assert!((ratio - per).abs() <= 4.0 * se, "t={t}: ratio {ratio}, PER {per}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn latency_within_bounds(snr in -5.0f64..=15.0, paths in 1u8..=10, app in 0usize..4, seed in any::<u64>()) {
        let ctx = PhyContext::new(snr, paths).unwrap();
        let y = transmit_arq(TransmissionApp::ALL[app], &ctx, &ArqConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((1..=10).contains(&y));
    }

    #[test]
    fn softmax_sums_to_one(snr in -5.0f64..=15.0, paths in 1u8..=10, t in 0.01f64..1e3) {
        let p = PhyPolicy::new(t, table()).unwrap();
        let ctx = PhyContext::new(snr, paths).unwrap();
        let total: f64 = p.probabilities(&ctx).iter().sum();
        prop_assert!((total - 1.0).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn log_weights_are_reciprocal(snr in -5.0f64..=15.0, paths in 1u8..=10, t in 0.01f64..1e3, a in 0usize..4, b in 0usize..4) {
        let p = PhyPolicy::new(t, table()).unwrap();
        let ctx = PhyContext::new(snr, paths).unwrap();
        let (a, b) = (TransmissionApp::ALL[a], TransmissionApp::ALL[b]);
        prop_assert_eq!(p.log_weight(a, b, &ctx) + p.log_weight(b, a, &ctx), 0.0);
    }
}

#[test]
fn app_sampling_matches_probabilities() {
    let p = PhyPolicy::new(1.0, table()).unwrap();
    let ctx = PhyContext::new(-3.2, 7).unwrap();
    let probs = p.probabilities(&ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 40_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[p.select_app(&ctx, &mut rng).index()] += 1;
    }
    for (c, q) in counts.iter().zip(probs) {
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        assert!((*c as f64 / n as f64 - q).abs() <= 3.0 * sigma + 1e-12);
    }
}

#[test]
fn ser_is_clamped_and_nonincreasing_in_snr() {
    let t = table();
    for app in TransmissionApp::ALL {
        for m in 1..=10u8 {
            for bin in 0..SNR_BINS {
                let v = t.get(app, bin, m);
                assert!((SER_FLOOR..=1.0 - SER_FLOOR).contains(&v));
                if bin > 0 {
                    assert!(v <= t.get(app, bin - 1, m), "{app} m={m} bin={bin}");
                }
            }
            assert!(t.get(app, SNR_BINS - 1, m) < t.get(app, 0, m));
        }
    }
}

#[test]
fn diversity_beats_multiplexing() {
    let t = table();
    for m in 1..=10u8 {
        for bin in 15..SNR_BINS {
            assert!(t.get(TransmissionApp::ALAMOUTI_BPSK, bin, m) < t.get(TransmissionApp::MULTIPLEXING_QPSK, bin, m));
        }
    }
    // Least-squares slope of log SER against SNR in dB at m = 10.
    let slope = |app: TransmissionApp| {
        let xs: Vec<f64> = (0..SNR_BINS).map(bin_low_db).collect();
        let ys: Vec<f64> = (0..SNR_BINS).map(|b| t.get(app, b, 10).ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        cov / var
    };
    for c in [Constellation::Bpsk, Constellation::Qpsk] {
        let ala = slope(TransmissionApp::new(SpaceTimeCode::Alamouti, c));
        let mux = slope(TransmissionApp::new(SpaceTimeCode::Multiplexing, c));
        assert!(ala < mux, "{c:?}: {ala} vs {mux}");
    }
}

#[test]
fn multiplexing_ser_falls_with_paths_beyond_rank_one() {
    // m = 1 is excluded: the rank-one pseudo-inverse projects instead of
    // inverting, which avoids the noise enhancement of an ill-conditioned
    // two-path channel.
    let t = table();
    for c in [Constellation::Bpsk, Constellation::Qpsk] {
        let app = TransmissionApp::new(SpaceTimeCode::Multiplexing, c);
        for bin in 0..SNR_BINS {
            for m in 2..10u8 {
                let (a, b) = (t.get(app, bin, m), t.get(app, bin, m + 1));
                let tol = 3.0 * (2.0 * a * (1.0 - a) / t.n_mc() as f64).sqrt();
                assert!(b <= a + tol, "{app} bin={bin} m={m}: {a} -> {b}");
            }
            assert!(t.get(app, bin, 10) < t.get(app, bin, 2));
        }
    }
}

#[test]
fn ser_table_round_trips_through_csv() {
    let t = SerTable::build(200, 11).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("app,snr_bin_low_db,m,ser,n_mc,seed\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 20 * 10);
    let back = SerTable::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, t);
    let truncated: String = text.lines().take(100).collect::<Vec<_>>().join("\n");
    assert!(SerTable::read_csv(truncated.as_bytes()).is_err());
}

#[test]
fn ser_table_is_reproducible() {
    assert_eq!(SerTable::build(400, 3).unwrap(), SerTable::build(400, 3).unwrap());
}
