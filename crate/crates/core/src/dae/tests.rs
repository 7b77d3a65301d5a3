use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::exemplars::gen_trajectory;

#[test]
fn constant_vector_has_flat_derivatives() {
    let x = vec![2.5; 10];
    assert_eq!(extract_attribute(&x, Attribute::Slope).unwrap(), 0.0);
    assert_eq!(extract_attribute(&x, Attribute::Curvature).unwrap(), 0.0);
    assert_eq!(extract_attribute(&x, Attribute::Amplitude).unwrap(), 25.0);
}

#[test]
fn linear_ramp_slope_two() {
    let x: Vec<f64> = (0..12).map(|i| 2.0 * i as f64 - 3.0).collect();
    assert_eq!(extract_attribute(&x, Attribute::Slope).unwrap(), 2.0);
    assert_eq!(extract_attribute(&x, Attribute::Curvature).unwrap(), 0.0);
}

#[test]
fn quadratic_curvature() {
    // x_i = i^2 has second difference 2 everywhere.
    let x: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
    assert_eq!(extract_attribute(&x, Attribute::Curvature).unwrap(), 2.0);
}

#[test]
fn sine_of_five_cycles_peaks_in_bin_five() {
    let d = 864;
    let x: Vec<f64> = (0..d).map(|t| (std::f64::consts::TAU * 5.0 * t as f64 / d as f64).sin()).collect();
    assert_eq!(extract_attribute(&x, Attribute::Omega).unwrap(), 5.0);
    // Added offset only changes bin 0.
    let shifted: Vec<f64> = x.iter().map(|v| v + 3.0).collect();
    assert_eq!(dominant_frequency(&shifted), 5);
    assert_eq!(dominant_frequency(&vec![1.0; 64]), 0);
}

#[test]
fn launch_velocity_recovers_vertical_speed() {
    // Quadratic trajectories are differentiated exactly by the 3-point stencil.
    let t = gen_trajectory(4.0, 30.0, 0.0, 0.0).unwrap();
    let u = extract_attribute(&t.y, Attribute::U).unwrap();
    assert!((u - 2.0).abs() < 1e-9, "{u}");
}

#[test]
fn attribute_errors() {
    assert!(extract_attribute(&[1.0, 2.0], Attribute::Curvature).is_err());
    assert!("torque".parse::<Attribute>().is_err());
    assert_eq!("slope".parse::<Attribute>().unwrap(), Attribute::Slope);
}

#[test]
fn extractors_are_bit_exact_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    for a in Attribute::ALL {
        assert_eq!(extract_attribute(&x, a).unwrap().to_bits(), extract_attribute(&x, a).unwrap().to_bits());
    }
}

#[test]
fn spearman_examples() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    // 1 - 6 * 2 / (4 * 15)
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroRankVariance)));
    assert!(spearman(&[1.0], &[1.0]).is_err());
}

#[test]
fn spearman_with_ties_matches_reference() {
    // scipy.stats.spearmanr([1,2,2,3,5],[2,1,4,4,3])
    let r = spearman(&[1.0, 2.0, 2.0, 3.0, 5.0], &[2.0, 1.0, 4.0, 4.0, 3.0]).unwrap();
    assert!((r - 0.3947368421052632).abs() < 1e-12);
    assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
}

#[test]
fn dist_loss_two_item_example() {
    let z = vec![vec![0.5], vec![-0.5]];
    let a = vec![vec![1.0], vec![0.0]];
    let v = dist_loss(&z, &a, &[(0, 0)]).unwrap();
    let oracle = (1f64.tanh() - 1.0).powi(2);
    assert!((v - oracle).abs() < 1e-15);
    assert!((v - 0.05684).abs() < 1e-5);
}

#[test]
fn dist_loss_equal_attributes() {
    let z = vec![vec![0.3], vec![-0.2], vec![1.0]];
    let a = vec![vec![7.0]; 3];
    let v = dist_loss(&z, &a, &[(0, 0)]).unwrap();
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                s += (z[i][0] - z[j][0]).tanh().powi(2);
            }
        }
    }
    assert!((v - s / 6.0).abs() < 1e-15);
    let equal = vec![vec![0.4]; 3];
    assert_eq!(dist_loss(&equal, &a, &[(0, 0)]).unwrap(), 0.0);
}

#[test]
fn dist_loss_saturates_toward_zero() {
    let z = vec![vec![40.0], vec![-40.0]];
    let a = vec![vec![2.0], vec![1.0]];
    assert!(dist_loss(&z, &a, &[(0, 0)]).unwrap() < 1e-30);
    assert!(dist_loss(&z[..1], &a[..1], &[(0, 0)]).is_err());
}

proptest! {
    #[test]
    fn dist_loss_is_permutation_invariant(
        vals in prop::collection::vec((-3.0f64..3.0, -2.0f64..2.0, 0i32..4), 2..12),
        seed in 0u64..1000,
    ) {
        let z: Vec<Vec<f64>> = vals.iter().map(|v| vec![v.0, v.1]).collect();
        let a: Vec<Vec<f64>> = vals.iter().map(|v| vec![v.2 as f64, v.0]).collect();
        let pairs = [(0, 0), (1, 1)];
        let base = dist_loss(&z, &a, &pairs).unwrap();
        let mut idx: Vec<usize> = (0..z.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let zp: Vec<Vec<f64>> = idx.iter().map(|&i| z[i].clone()).collect();
        let ap: Vec<Vec<f64>> = idx.iter().map(|&i| a[i].clone()).collect();
        prop_assert!((dist_loss(&zp, &ap, &pairs).unwrap() - base).abs() <= 1e-12);
    }

    #[test]
    fn spearman_is_bounded(xs in prop::collection::vec(-1e3f64..1e3, 3..30)) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, v)| v.sin() + i as f64 * 0.1).collect();
        if let Ok(r) = spearman(&xs, &ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn savgol_preserves_cubics() {
    let x: Vec<f64> = (0..30).map(|i| {
        let t = i as f64 * 0.1;
        1.0 - 2.0 * t + 0.5 * t * t - 0.3 * t * t * t
    }).collect();
    let s = savgol(&x, 11, 3).unwrap();
    for (a, b) in x.iter().zip(&s) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn savgol_matches_reference_interp_mode() {
    // scipy.signal.savgol_filter(x, 11, 3, mode="interp") with
    // x_i = sin(0.3 i) + 0.1 (i mod 3), i = 0..19
    let reference = [
        0.01015512205898693,
        0.3911684136198887,
        0.6879006003035256,
        0.9018455871246776,
        1.034497279098124,
        1.0873495812386467,
        1.0404483446329023,
        0.944142064327677,
        0.7724310874831868,
        0.5060514382273704,
        0.23800282935304548,
        -0.042373161260293196,
        -0.34463378743644424,
        -0.5725741955768598,
        -0.7404355539213077,
        -0.8605639594657337,
        -0.9055307572710174,
        -0.8607329482054689,
        -0.7115675331374003,
        -0.4434315129351237,
    ];
    let x: Vec<f64> = (0..20).map(|i| (0.3 * i as f64).sin() + 0.1 * (i % 3) as f64).collect();
    let s = savgol(&x, 11, 3).unwrap();
    for (a, b) in s.iter().zip(reference) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!(savgol(&x[..5], 11, 3).is_err());
    assert!(savgol(&x, 10, 3).is_err());
}

#[test]
fn graph_distance_loss_matches_scalar_version() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = DaeSpec { input_dim: 5, latent_dim: 2, hidden: vec![4], pairs: vec![(1, Attribute::Slope)], gamma: 1.0 };
    let (ew, dw) = spec.widths();
    let dae = Dae {
        encoder: Mlp::new(&ew, &VaeSpec::activations(ew.len() - 1, Activation::Identity), &mut rng).unwrap(),
        decoder: Mlp::new(&dw, &VaeSpec::activations(dw.len() - 1, Activation::Identity), &mut rng).unwrap(),
        normalizer: Normalizer::identity(5),
        spec,
    };
    let xs: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let attr: Vec<f64> = vec![0.1, 0.5, 0.5, -1.0, 2.0, 0.0];
    let batch: Vec<usize> = (0..6).collect();
    let mut tape = Tape::new();
    let params = {
        let mut p = dae.encoder.params();
        p.extend(dae.decoder.params());
        p
    };
    let vars: Vec<_> = params.into_iter().map(|p| tape.param(p).unwrap()).collect();
    let x = tape.constant(Tensor::from_rows(&xs).unwrap()).unwrap();
    let (_, _, dist) = dae_graph(&mut tape, &dae, &vars, x, &[sign_matrix(&batch, &attr)]).unwrap();
    let z = dae.encode_batch(&xs).unwrap();
    let a: Vec<Vec<f64>> = attr.iter().map(|v| vec![*v]).collect();
    let scalar = dist_loss(&z, &a, &[(1, 0)]).unwrap();
    assert!((tape.value(dist).unwrap().item().unwrap() - scalar).abs() < 1e-12);
}

fn launch_set() -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut xs = Vec::new();
    for i in 0..15 {
        for j in 0..10 {
            let u = 1.0 + 5.0 * i as f64 / 14.0;
            let th = 30.0 + 30.0 * j as f64 / 9.0;
            xs.push(gen_trajectory(u, th, 0.0, 0.0).unwrap().y);
        }
    }
    let u = xs.iter().map(|x| extract_attribute(x, Attribute::U).unwrap()).collect();
    (xs, u)
}

#[test]
fn directional_latent_orders_by_launch_velocity() {
    let (xs, u) = launch_set();
    let spec = DaeSpec { input_dim: 64, latent_dim: 2, hidden: vec![32, 16], pairs: vec![(0, Attribute::U)], gamma: 1.0 };
    let cfg = DaeTrainConfig { epochs: 150, batch_size: 64, lr: 3e-3, seed: 1 };
    let (_, report) = train_dae(spec, &xs, &[u], &cfg).unwrap();
    assert!(report.spearman[0] >= 0.9, "{:?}", report.spearman);
    assert!(!report.flagged);
}

/// Four-mode signals squeezed through two latents, so reconstruction is lossy.
fn mode_mixtures(n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..n)
        .map(|_| {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            (0..32)
                .map(|t| {
                    let x = std::f64::consts::PI * t as f64 / 31.0;
                    c.iter().enumerate().map(|(k, ck)| ck * ((k + 1) as f64 * x).sin()).sum()
                })
                .collect()
        })
        .collect()
}

#[test]
fn regularization_keeps_reconstruction_within_twice_plain() {
    let xs = mode_mixtures(400);
    let amp: Vec<f64> = xs.iter().map(|x| extract_attribute(x, Attribute::Amplitude).unwrap()).collect();
    let spec =
        DaeSpec { input_dim: 32, latent_dim: 2, hidden: vec![32, 16], pairs: vec![(0, Attribute::Amplitude)], gamma: 1.0 };
    let cfg = DaeTrainConfig { epochs: 200, batch_size: 64, lr: 3e-3, seed: 2 };
    let (dae, report) = train_dae(spec.clone(), &xs, &[amp.clone()], &cfg).unwrap();
    let (ae, plain_report) = train_dae(DaeSpec { gamma: 0.0, ..spec }, &xs, &[amp], &cfg).unwrap();
    let (r_dae, r_ae) = (dae.reconstruction_mse(&xs).unwrap(), ae.reconstruction_mse(&xs).unwrap());
    assert!(r_ae > 1e-4, "bottleneck should be lossy, got {r_ae:e}");
    assert!(r_dae <= 2.0 * r_ae, "directional {r_dae:e} vs plain {r_ae:e}");
    assert!(report.spearman[0] > plain_report.spearman[0].abs(), "{:?} vs {:?}", report.spearman, plain_report.spearman);
}

#[test]
fn training_is_seed_deterministic() {
    let (xs, u) = launch_set();
    let spec = DaeSpec { input_dim: 64, latent_dim: 2, hidden: vec![8], pairs: vec![(1, Attribute::U)], gamma: 1.0 };
    let cfg = DaeTrainConfig { epochs: 3, batch_size: 32, lr: 1e-3, seed: 5 };
    let a = train_dae(spec.clone(), &xs, &[u.clone()], &cfg).unwrap();
    let b = train_dae(spec, &xs, &[u], &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn spec_validation() {
    let bad = DaeSpec {
        input_dim: 8,
        latent_dim: 2,
        hidden: vec![4],
        pairs: vec![(0, Attribute::Slope), (0, Attribute::Amplitude)],
        gamma: 1.0,
    };
    assert!(bad.validate().is_err());
    let out_of_range = DaeSpec { pairs: vec![(2, Attribute::Slope)], ..bad.clone() };
    assert!(out_of_range.validate().is_err());
    let xs = vec![vec![0.0; 8]; 4];
    let ok = DaeSpec { pairs: vec![(0, Attribute::Slope)], ..bad };
    assert!(train_dae(ok, &xs, &[], &DaeTrainConfig::default()).is_err());
}

#[test]
fn distilled_csv_round_trip() {
    let ds = DistilledDataset::new(
        2,
        vec!["u".into()],
        vec![
            DistilledRow { z: vec![0.1, -0.25], attrs: vec![3.5], y: 1.0 / 3.0 },
            DistilledRow { z: vec![1e-12, 2.0], attrs: vec![-0.0], y: 7.0 },
        ],
    )
    .unwrap();
    assert_eq!(ds.header(), vec!["z_1", "z_2", "attr_u", "y"]);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    ds.write_csv(&p).unwrap();
    let back = DistilledDataset::read_csv(&p).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.column("attr_u").unwrap(), vec![3.5, -0.0]);
    assert!(back.column("nope").is_err());
    assert!(DistilledDataset::new(3, vec![], ds.rows.clone()).is_err());
}
