use rand::Rng as _;
use rand_distr::StandardNormal;
use spoofvae_core::diffnum::Array;
use spoofvae_core::rng::{stream, stream_n};
use spoofvae_core::vae::{kl_closed_form, kl_divergence, reparameterize};

/// `E_q[log q(z) - log p(z)]` by sampling `z ~ N(mu, var)`.
fn kl_monte_carlo(mu: f64, var: f64, samples: usize, seed: u64) -> f64 {
    let mut r = stream(seed, "kl-mc");
    let sd = var.sqrt();
    let mut acc = 0.0;
    for _ in 0..samples {
        let e: f64 = r.sample(StandardNormal);
        let z = mu + sd * e;
        // log q - log p; the 2 pi terms cancel
        acc += -0.5 * var.ln() - 0.5 * e * e + 0.5 * z * z;
    }
    acc / samples as f64
}

#[cfg_attr(not(oracle_suite), test)]
pub fn exact_cases() {
    assert_eq!(kl_closed_form(&[0.0], &[1.0]), 0.0);
    assert_eq!(kl_closed_form(&[1.0], &[1.0]), 0.5);
    let e = std::f64::consts::E;
    assert!((kl_closed_form(&[0.0], &[e]) - 0.5 * (e - 2.0)).abs() < 1e-15);
    let mu = Array::from_vec(&[1, 1], vec![1.0f64]).unwrap();
    let lv = Array::from_vec(&[1, 1], vec![0.0f64]).unwrap();
    assert_eq!(kl_divergence(&mu, &lv).unwrap().0, [0.5]);
}

#[cfg_attr(not(oracle_suite), test)]
pub fn matches_monte_carlo() {
    let e = std::f64::consts::E;
    let mc = kl_monte_carlo(0.0, e, 1_000_000, 99);
    assert!(
        (mc / kl_closed_form(&[0.0], &[e]) - 1.0).abs() < 0.01,
        "{mc}"
    );
    let mut r = stream(5, "kl-draws");
    for i in 0..20 {
        let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
        let mu = sign * r.random_range(1.0..2.0);
        let var = r.random_range(0.25..4.0);
        let exact = kl_closed_form(&[mu], &[var]);
        let mc = kl_monte_carlo(mu, var, 1_000_000, i);
        assert!(
            ((mc - exact) / exact).abs() < 0.01,
            "mu {mu} var {var}: {mc} vs {exact}"
        );
    }
}

#[cfg_attr(not(oracle_suite), test)]
pub fn reparameterized_moments() {
    let n = 100_000;
    let (mu, lv) = (1.5f64, 0.7f64);
    let mut r = stream_n(3, "reparam", 0);
    let eps: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let z = reparameterize(
        &Array::full(&[n, 1], mu),
        &Array::full(&[n, 1], lv),
        &Array::from_vec(&[n, 1], eps).unwrap(),
    )
    .unwrap();
    let m = z.data().iter().sum::<f64>() / n as f64;
    let v = z.data().iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    assert!((m / mu - 1.0).abs() < 0.02, "mean {m}");
    assert!((v / lv.exp() - 1.0).abs() < 0.02, "var {v}");
}

#[cfg_attr(not(oracle_suite), test)]
pub fn reparameterize_edges() {
    let mu = Array::from_vec(&[1, 3], vec![0.3, -1.0, 2.0]).unwrap();
    let lv = Array::from_vec(&[1, 3], vec![0.5, -0.2, 1.0]).unwrap();
    assert_eq!(
        reparameterize(&mu, &lv, &Array::zeros(&[1, 3])).unwrap(),
        mu
    );
    let eps = Array::from_vec(&[1, 3], vec![0.1, 0.2, -0.4]).unwrap();
    assert_eq!(
        reparameterize(&Array::zeros(&[1, 3]), &Array::zeros(&[1, 3]), &eps).unwrap(),
        eps
    );
}
