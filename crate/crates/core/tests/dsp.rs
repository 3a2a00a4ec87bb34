use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workbench::channel::*;
use workbench::preamble::*;
use workbench::ComplexSignal;

fn naive_idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|t| {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64))
                .sum::<Complex64>()
                / (n as f64).sqrt()
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

#[test]
fn idft_matches_naive_and_keeps_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1, 2, 7, 16, 32, 64] {
        let x = random_vec(&mut rng, n);
        let fast = idft(&x);
        let slow = naive_idft(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
        let ef: f64 = x.iter().map(|c| c.norm_sqr()).sum();
        let et: f64 = fast.iter().map(|c| c.norm_sqr()).sum();
        assert!((ef - et).abs() < 1e-12 * ef.max(1.0));
    }
}

#[test]
fn preamble_length_and_stf_period() {
    let p = build_preamble(&PreambleSpec::synthetic_default(), &OfdmParams::default()).unwrap();
    assert_eq!(p.len(), 560);
    assert_eq!(p.sample_rate_hz, 1e6);
    let err = (0..160 - 16)
        .map(|n| (p.samples[n] - p.samples[n + 16]).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
}

#[test]
fn shipped_preamble_file_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/preamble_default.json");
    let spec = PreambleSpec::load(path).unwrap();
    let a = build_preamble(&spec, &OfdmParams::default()).unwrap();
    let b = build_preamble(&PreambleSpec::synthetic_default(), &OfdmParams::default()).unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((x - y).norm() < 1e-12);
    }
}

#[test]
fn noise_matches_requested_snr() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = ComplexSignal::new(random_vec(&mut rng, 20_000), 4e6);
    for snr in [0.0, 10.0, 25.0] {
        let cfg = ChannelConfig::new(vec![Complex64::new(1.0, 0.0)], Some(snr), 0.0, 17).unwrap();
        let y = apply_channel(&x, &cfg).unwrap();
        let noise: f64 = y
            .samples
            .iter()
            .zip(&x.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / x.len() as f64;
        let expect = x.mean_power() / 10f64.powf(snr / 10.0);
        assert!((noise / expect - 1.0).abs() < 0.05, "snr {snr}: {noise} vs {expect}");
    }
}

#[test]
fn reference_power_overrides_measurement() {
    let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 20_000], 4e6);
    let mut cfg = ChannelConfig::new(vec![Complex64::new(1.0, 0.0)], Some(0.0), 0.0, 2).unwrap();
    cfg.reference_power = Some(4.0);
    let y = apply_channel(&x, &cfg).unwrap();
    let noise: f64 = y.samples.iter().map(|s| (s - 1.0).norm_sqr()).sum::<f64>() / 20_000.0;
    assert!((noise / 4.0 - 1.0).abs() < 0.05);
}

#[test]
fn model_b_average_tap_power_follows_profile() {
    let rate = 4e6;
    let pdp = ModelBProfile::default().power_delay_profile(rate);
    assert!((pdp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((rms_delay_spread(&pdp, rate) * 1e9 - 80.0).abs() < 1.0 || pdp.len() <= 2);
    let trials = 10_000;
    let mut spread = 0.0;
    for seed in 0..trials {
        let taps = draw_model_b_taps(seed, rate).unwrap();
        assert_eq!(taps.len(), pdp.len());
        let p: Vec<f64> = taps.iter().map(|t| t.norm_sqr()).collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        spread += rms_delay_spread(&p, rate);
    }
    let spread = spread / trials as f64 * 1e9;
    assert!((spread / 80.0 - 1.0).abs() < 0.15, "{spread} ns");
}

#[test]
fn model_b_at_base_rate_is_one_tap() {
    let pdp = ModelBProfile::default().power_delay_profile(1e6);
    assert!(pdp[0] > 0.99);
    let mut acc = 0.0;
    for seed in 0..1000 {
        acc += draw_model_b_taps(seed, 1e6).unwrap()[0].norm_sqr();
    }
    assert!(acc / 1000.0 > 0.99);
}

#[test]
fn channel_keeps_expected_power() {
    let spec = PreambleSpec::synthetic_default();
    let p = build_preamble(&spec, &OfdmParams::default()).unwrap();
    let up = upsample_filter(&p, 4, &PulseShape::default().taps(4).unwrap()).unwrap();
    let tx = up.energy();
    let mut acc = 0.0;
    let n = 2000;
    for seed in 0..n {
        let cfg = ChannelConfig::new(draw_model_b_taps(seed, 4e6).unwrap(), None, 0.0, 0).unwrap();
        acc += apply_channel(&up, &cfg).unwrap().energy();
    }
    let ratio = acc / n as f64 / tx;
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn cfo_rotates_at_the_right_rate() {
    let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 100], 1e6);
    let cfg = ChannelConfig::new(vec![Complex64::new(1.0, 0.0)], None, 1000.0, 0).unwrap();
    let y = apply_channel(&x, &cfg).unwrap();
    let step = (y.samples[1] * y.samples[0].conj()).arg();
    assert!((step - 2.0 * std::f64::consts::PI * 1e-3).abs() < 1e-12);
}

#[test]
fn noiseless_chain_recovers_preamble() {
    let spec = PreambleSpec::synthetic_default();
    let p = build_preamble(&spec, &OfdmParams::default()).unwrap();
    let shape = PulseShape::default();
    let os = 4;
    let up = upsample_filter(&p, os, &shape.taps(os).unwrap()).unwrap();
    let rx = rx_frontend(&up, &RxFrontendConfig::matched_to(&shape, os).unwrap()).unwrap();
    // RRC pair is only approximately Nyquist with a finite filter; look at the bulk
    let err: f64 = (40..520).map(|n| (rx.samples[n] - p.samples[n]).norm_sqr()).sum::<f64>();
    let sig: f64 = (40..520).map(|n| p.samples[n].norm_sqr()).sum();
    assert!(err / sig < 1e-2, "{}", err / sig);
}

#[test]
fn matched_filter_gain() {
    assert!((matched_filter_snr_db(10.0, 4) - (10.0 + 10.0 * 4f64.log10())).abs() < 1e-12);
    assert_eq!(matched_filter_snr_db(3.0, 1), 3.0);
}
