use std::path::Path;

use marsupial_core::codec::{
    self, gradient_check, lossless_decode, lossless_encode, lossless_payload_len, read_params,
    write_log_csv, write_params, CodecConfig, LosslessCodec, ScanCodec, TrainOptions, Vae,
    VaeCodec,
};
use marsupial_core::geom::{LidarIntrinsics, RangeImage};
use marsupial_core::remap::{remap_f32, Dataset, Pair};
use marsupial_core::voxmap::{integrate_cloud, occupancy_similarity};
use marsupial_core::geom::{unproject, Pose};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn small_intr() -> LidarIntrinsics<f32> {
    LidarIntrinsics::symmetric_deg(8, 24, 15.0, 10.0)
}

fn random_image(intr: LidarIntrinsics<f32>, rng: &mut ChaCha8Rng, invalid_frac: f64) -> RangeImage<f32> {
    let ranges = (0..intr.pixel_count())
        .map(|_| {
            if rng.random_bool(invalid_frac) {
                f32::NAN
            } else {
                rng.random_range(0.5..intr.max_range)
            }
        })
        .collect();
    RangeImage::from_ranges(intr, ranges).unwrap()
}

fn pair(intr: LidarIntrinsics<f32>, rng: &mut ChaCha8Rng, name: usize) -> Pair {
    let raw = random_image(intr, rng, 0.2);
    let vxl = random_image(intr, rng, 0.3);
    Pair {
        name: format!("p{name}"),
        raw,
        vxl,
    }
}

fn small_config(nz: usize) -> CodecConfig {
    CodecConfig::new(small_intr(), nz, &[4, 6, 6, 8, 8], 1.0, 0.4).unwrap()
}

#[test]
fn gradients_match_finite_differences_on_twenty_micro_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for b in 0..20 {
        let vae = Vae::<f64>::init(small_config(6), &mut rng);
        let pairs: Vec<Pair> = (0..2).map(|i| pair(small_intr(), &mut rng, b * 2 + i)).collect();
        let check = gradient_check(&vae, &pairs, 10, &mut rng).unwrap();
        worst = worst.max(check.max_rel_error());
        assert!(check.passed(), "batch {b}: {:?}", check.entries);
    }
    assert!(worst < 1e-3);
}

#[test]
fn encode_ignores_invalid_pixel_payloads() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vae = Vae::<f32>::init(small_config(8), &mut rng);
    let img = random_image(small_intr(), &mut rng, 0.3);
    let (mu, sigma) = vae.encode(&img).unwrap();
    let mut ranges = img.ranges().to_vec();
    for r in &mut ranges {
        if r.is_nan() {
            *r = f32::from_bits(0x7fc0_1234);
        }
    }
    let img2 = RangeImage::from_ranges(small_intr(), ranges).unwrap();
    let (mu2, sigma2) = vae.encode(&img2).unwrap();
    assert_eq!(mu, mu2);
    assert_eq!(sigma, sigma2);
    assert_eq!(mu.len(), 8);
    assert!(sigma.iter().all(|&s| s > 0.0));
}

#[test]
fn encode_rejects_wrong_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vae = Vae::<f32>::init(small_config(8), &mut rng);
    let other = RangeImage::invalid(LidarIntrinsics::symmetric_deg(4, 24, 15.0, 10.0));
    assert!(matches!(
        vae.encode(&other),
        Err(codec::CodecError::ShapeMismatch { .. })
    ));
    assert!(matches!(
        vae.decode(&[0.0; 3]),
        Err(codec::CodecError::LengthMismatch { .. })
    ));
}

#[test]
fn reparameterized_samples_match_moments() {
    let mu = [0.3f64, -1.2, 2.0];
    let sigma = [0.5f64, 1.5, 0.05];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000usize;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let eps: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let z = codec::sample(&mu, &sigma, &eps).unwrap();
        for i in 0..3 {
            sum[i] += z[i];
            sq[i] += z[i] * z[i];
        }
    }
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        let var = sq[i] / n as f64 - mean * mean;
        let se_mean = sigma[i] / (n as f64).sqrt();
        // Var of the sample variance of a normal is 2σ⁴/(n-1).
        let se_var = (2.0 * sigma[i].powi(4) / (n as f64 - 1.0)).sqrt();
        assert!((mean - mu[i]).abs() < 3.0 * se_mean, "mean {i}");
        assert!((var - sigma[i] * sigma[i]).abs() < 3.0 * se_var, "var {i}");
    }
}

#[test]
fn tiny_sigma_gives_mu() {
    let z = codec::sample(&[1.0f64, -2.0], &[1e-12, 1e-12], &[3.0, -3.0]).unwrap();
    assert!((z[0] - 1.0).abs() < 1e-10 && (z[1] + 2.0).abs() < 1e-10);
}

#[test]
fn decoder_outputs_are_bounded_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vae = Vae::<f32>::init(small_config(8), &mut rng);
    for _ in 0..20 {
        let z: Vec<f32> = (0..8).map(|_| rng.random_range(-20.0..20.0)).collect();
        let out = vae.decode_normalized(&z).unwrap();
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(out, vae.decode_normalized(&z).unwrap());
        let img = vae.decode(&z).unwrap();
        for v in img.ranges().iter().filter(|v| !v.is_nan()) {
            assert!(*v > 0.0 && *v <= 10.0);
        }
    }
}

#[test]
fn params_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vae = Vae::<f32>::init(small_config(5), &mut rng);
    let bytes = write_params(&vae);
    assert_eq!(&bytes[..4], b"VAEP");
    let back = read_params(&bytes, Path::new("mem")).unwrap();
    assert_eq!(back.config, vae.config);
    assert_eq!(back.params, vae.params);
    assert_eq!(write_params(&back), bytes);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_params(&bad, Path::new("mem")).is_err());
    assert!(read_params(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
}

#[test]
fn lossless_payload_length_and_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for frac in [0.0, 0.3, 1.0] {
        let img = random_image(small_intr(), &mut rng, frac);
        let bytes = lossless_encode(&img);
        assert_eq!(bytes.len(), 8 + 4 * img.valid_count() + (8 * 24usize).div_ceil(8));
        assert_eq!(bytes.len(), lossless_payload_len(8, 24, img.valid_count()));
        let back = lossless_decode(&bytes, &small_intr()).unwrap();
        assert!(back.same_pixels(&img));
        assert!(lossless_decode(&bytes[..bytes.len() - 1], &small_intr()).is_err());
    }
}

#[test]
fn lossless_codec_reproduces_voxel_aware_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let intr = small_intr();
    let codec = LosslessCodec::new(intr, 0.4);
    let raw = random_image(intr, &mut rng, 0.1);
    let words = codec.encode(&raw).unwrap();
    let decoded = codec.decode(&words).unwrap();
    let vxl = remap_f32(&raw, 0.4);
    assert!(decoded.same_pixels(&vxl));
    let build = |img: &RangeImage<f32>| {
        let img = img.cast::<f64>();
        let mut g = marsupial_core::remap::image_grid(&img, 0.4);
        integrate_cloud(&mut g, &Pose::identity(), &unproject(&img)).unwrap();
        g
    };
    assert_eq!(occupancy_similarity(&build(&decoded), &build(&vxl)).unwrap(), 1.0);
}

#[test]
fn training_is_deterministic_and_logs_epoch_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pairs: Vec<Pair> = (0..12).map(|i| pair(small_intr(), &mut rng, i)).collect();
    let ds = Dataset::from_pairs(small_intr(), 0.4, 1, pairs).unwrap();
    let opts = TrainOptions {
        learning_rate: 1e-3,
        batch_size: 4,
        epochs: 2,
        seed: 17,
        grad_check: true,
    };
    let a = codec::train::<f32>(&ds, small_config(4), &opts).unwrap();
    let b = codec::train::<f32>(&ds, small_config(4), &opts).unwrap();
    assert_eq!(a.vae.params, b.vae.params);
    assert_eq!(a.log, b.log);
    assert!(a.grad_check.as_ref().unwrap().passed());
    let mut init_rng = ChaCha8Rng::seed_from_u64(17);
    let init = Vae::<f32>::init(small_config(4), &mut init_rng);
    let l0 = codec::evaluate(&init, ds.train_pairs()).unwrap();
    let row0 = &a.log[0];
    assert_eq!((row0.epoch, row0.split), (0, "train"));
    assert_eq!(row0.terms, l0);
    let csv = write_log_csv(&a.log);
    assert!(csv.starts_with("epoch,split,L,L_recon,L_KL\n"));
    assert_eq!(csv.lines().count(), 1 + a.log.len());
    assert_eq!(VaeCodec::new(a.vae.clone()).name(), "vae4");
}

/// Rooms seen from the center: a wall distance per image plus a floor band.
fn room_pair(intr: LidarIntrinsics<f32>, rng: &mut ChaCha8Rng, name: usize) -> Pair {
    let wall: f32 = rng.random_range(2.0..9.0);
    let ranges = (0..intr.pixel_count())
        .map(|i| if i / intr.cols < 2 { wall * 0.5 } else { wall })
        .collect();
    let img = RangeImage::from_ranges(intr, ranges).unwrap();
    Pair {
        name: format!("r{name}"),
        raw: img.clone(),
        vxl: img,
    }
}

#[test]
fn training_on_structured_images_lowers_test_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pairs: Vec<Pair> = (0..200).map(|i| room_pair(small_intr(), &mut rng, i)).collect();
    let ds = Dataset::from_pairs(small_intr(), 0.4, 2, pairs).unwrap();
    let opts = TrainOptions {
        learning_rate: 1e-2,
        batch_size: 8,
        epochs: 30,
        seed: 3,
        grad_check: false,
    };
    // With the full KL weight this toy set collapses to the mean image.
    let cfg = CodecConfig::new(small_intr(), 8, &[4, 6, 6, 8, 8], 1e-3, 0.4).unwrap();
    let mut init_rng = ChaCha8Rng::seed_from_u64(3);
    let before = codec::evaluate(&Vae::<f32>::init(cfg.clone(), &mut init_rng), ds.test_pairs()).unwrap();
    let trained = codec::train::<f32>(&ds, cfg, &opts).unwrap();
    let after = codec::evaluate(&trained.vae, ds.test_pairs()).unwrap();
    assert!(after.recon < 0.1 * before.recon, "{} -> {}", before.recon, after.recon);
}

#[test]
fn all_invalid_targets_are_rejected() {
    let intr = small_intr();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = vec![Pair {
        name: "x".into(),
        raw: random_image(intr, &mut rng, 0.0),
        vxl: RangeImage::invalid(intr),
    }];
    let ds = Dataset::from_pairs(intr, 0.4, 1, pairs).unwrap();
    assert!(matches!(
        codec::train::<f32>(&ds, small_config(4), &TrainOptions::default()),
        Err(codec::CodecError::EmptyDataset)
    ));
}

proptest! {
    #[test]
    fn loss_ignores_invalid_targets(seed in any::<u64>(), junk in -1e3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let target: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let valid: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.5)).collect();
        let recon: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mu: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..2.0)).collect();
        let a = codec::loss(&target, &valid, &recon, &mu, &sigma, 0.3).unwrap();
        let mutated: Vec<f64> = target.iter().zip(&valid).map(|(&t, &v)| if v { t } else { junk }).collect();
        let b = codec::loss(&mutated, &valid, &recon, &mu, &sigma, 0.3).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.kl >= 0.0);
    }

    #[test]
    fn kl_is_zero_only_at_prior(mu in prop::collection::vec(-3.0f64..3.0, 1..8), s in 0.05f64..4.0) {
        let sigma = vec![s; mu.len()];
        let kl = codec::kl_divergence(&mu, &sigma);
        prop_assert!(kl >= 0.0);
        let off_prior = mu.iter().any(|m| m.abs() > 1e-3) || (s - 1.0).abs() > 1e-3;
        if off_prior {
            prop_assert!(kl > 1e-9);
        }
    }
}
