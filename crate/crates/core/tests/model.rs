use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workbench::cnn::*;
use workbench::corrsync::CorrDetectorConfig;
use workbench::flops::*;
use workbench::nn::TrainConfig;

fn random_block(b: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..b).map(|_| rng.random_range(0.0..2.0)).collect()
}

#[test]
fn counted_forward_matches_formula() {
    for &b in &SUPPORTED_BLOCK_LENS {
        let cfg = CnnDetectorConfig::new(b);
        let model = build_model(&cfg).unwrap();
        let (y, tally) = model.forward_counted(&random_block(b, b as u64)).unwrap();
        assert!((y - model.predict(&random_block(b, b as u64)).unwrap()).abs() < 1e-12);
        let r = model_flops(&cfg, 1e6).unwrap();
        let t = r.total();
        assert_eq!(tally.muls, t.muls, "B={b}");
        // the formula also charges one add per output for the bias
        let d = cfg.dims().unwrap();
        let bias_adds = (cfg.conv1_filter_len * cfg.conv1_filters * d.conv1_width
            + cfg.conv2_filter_len * cfg.conv2_filters * d.conv2_width
            + d.fc
            + 1) as u64;
        assert_eq!(tally.adds + bias_adds, t.adds, "B={b}");
    }
}

#[test]
fn cost_grows_with_block_length() {
    let rows = comparison(&SUPPORTED_BLOCK_LENS, &CorrDetectorConfig::default(), 1e6).unwrap();
    assert_eq!(rows.len(), 7);
    for w in rows[..6].windows(2) {
        assert!(w[1].flops_per_block > w[0].flops_per_block);
    }
    let conv = rows.last().unwrap();
    assert_eq!(conv.detector, "conventional");
    assert_eq!(conv.flops_per_block, 1041);
    assert!(rows[0].mflops < conv.mflops);
    assert!(rows[2].mflops < conv.mflops);
}

#[test]
fn recursive_variant_is_cheaper() {
    let cfg = CorrDetectorConfig::default();
    let a = conventional_flops(&cfg, 1e6).unwrap();
    let b = conventional_flops_recursive(&cfg, 1e6).unwrap();
    assert_eq!(b.total_per_block, 29);
    assert!(b.total_per_block < a.total_per_block);
}

#[test]
fn checkpoint_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut cfg = CnnDetectorConfig::new(80);
    cfg.seed = 5;
    let model = build_model(&cfg).unwrap();
    model.save(&path).unwrap();
    let back = CnnModel::load(&path).unwrap();
    assert_eq!(back, model);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest_path(&path)).unwrap()).unwrap();
    assert_eq!(manifest["config"]["block_len"], 80);
    assert_eq!(manifest["n_params"].as_u64().unwrap() as usize, model.net.n_params());
    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(
        CnnModel::from_bytes(&bytes[..bytes.len() - 3]),
        Err(workbench::Error::Corrupt(_))
    ));
    assert!(CnnModel::from_bytes(b"garbage").is_err());
}

#[test]
fn wrong_block_length_is_rejected() {
    let model = build_model(&CnnDetectorConfig::new(160)).unwrap();
    assert!(model.predict(&random_block(40, 0)).is_err());
    assert!(CnnDetectorConfig::new(42).validate().is_err());
    assert!(CnnDetectorConfig::new(8).validate().is_err());
}

#[test]
fn overfits_a_single_block() {
    let mut cfg = CnnDetectorConfig::new(40);
    cfg.seed = 2;
    let mut model = build_model(&cfg).unwrap();
    let blk = LabeledBlock {
        amplitudes: random_block(40, 9).iter().map(|&v| v as f32).collect(),
        label: 12.0,
        snr_db: 10.0,
        kind: BlockKind::Start,
    };
    let tc = TrainConfig {
        batch_size: 1,
        epochs: 300,
        seed: 0,
        ..Default::default()
    };
    train_detector(&mut model, std::slice::from_ref(&blk), &[], &tc, |_, _, _| {}).unwrap();
    let blocks = [blk];
    let d = detect(&model, &random_block(40, 9).iter().map(|&v| v as f32 as f64).collect::<Vec<_>>()).unwrap();
    assert!(d.detected);
    assert_eq!(d.start_sample, 12);
    assert_eq!(position_mae(&model, &blocks).unwrap(), Some(0.0));
}
