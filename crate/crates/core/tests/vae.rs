use discolab::vae::{elbo_loss, kl_term, reconstruction_term, train_vae, Vae, VaeSpec, VaeTrainConfig};

fn waves() -> Vec<Vec<f64>> {
    (0..96).map(|i| (0..12).map(|k| 1.0 + ((k as f64) * 0.3 + i as f64 * 0.07).sin()).collect()).collect()
}

#[test]
fn elbo_is_reconstruction_plus_kl() {
    let (x, r) = ([0.5, 1.0, -2.0], [0.4, 1.5, -2.0]);
    let (m, lv) = ([0.3, -1.0], [0.2, -0.5]);
    let e = elbo_loss(&x, &r, &m, &lv).unwrap();
    assert!((e - reconstruction_term(&x, &r) - kl_term(&m, &lv)).abs() < 1e-12);
    assert!((reconstruction_term(&x, &r) - (0.01 + 0.25)).abs() < 1e-12);
}

#[test]
fn training_lowers_loss_and_checkpoint_round_trips() {
    let rows = waves();
    let cfg = VaeTrainConfig { epochs: 60, batch_size: 16, lr: 3e-3, seed: 5, ..Default::default() };
    let (vae, report) = train_vae(VaeSpec::new(12, 2, vec![16]).unwrap(), &rows, &cfg).unwrap();
    let first = report.history.first().unwrap().loss;
    let last = report.history.last().unwrap().loss;
    assert!(last < first, "{first} -> {last}");
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("vae.json");
    vae.save(&p).unwrap();
    let back = Vae::load(&p).unwrap();
    assert_eq!(back.decode(&[0.3, -0.2]).unwrap(), vae.decode(&[0.3, -0.2]).unwrap());
    assert_eq!(back.generate(&[0.0, 0.0]).unwrap().len(), 12);
}
