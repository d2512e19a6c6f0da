use rand_distr::{Distribution, Normal};
use spoofvae_core::gmm::{em_fit, EmConfig};
use spoofvae_core::rng::stream;

/// Frames drawn from a few spread-out clusters so that C=32 has work to do.
fn clustered_frames(n: usize, dims: usize, seed: u64) -> Vec<f64> {
    let mut r = stream(seed, "em-frames");
    let centres: Vec<Vec<f64>> = (0..6)
        .map(|k| {
            (0..dims)
                .map(|j| ((k * 7 + j * 3) % 11) as f64 - 5.0)
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, 0.8).unwrap();
    let mut out = Vec::with_capacity(n * dims);
    for i in 0..n {
        let c = &centres[i % centres.len()];
        out.extend(c.iter().map(|m| m + noise.sample(&mut r)));
    }
    out
}

#[cfg_attr(not(oracle_suite), test)]
pub fn log_likelihood_never_decreases() {
    let frames = clustered_frames(10_000, 4, 1);
    let fit = em_fit(
        &frames,
        4,
        &EmConfig {
            components: 32,
            iterations: 10,
            seed: 3,
        },
    )
    .unwrap();
    assert_eq!(fit.trace.len(), 11);
    for w in fit.trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "trace dropped: {:?}", fit.trace);
    }
}

#[cfg_attr(not(oracle_suite), test)]
pub fn single_component_equals_sample_moments() {
    let frames = clustered_frames(10_000, 3, 2);
    let fit = em_fit(
        &frames,
        3,
        &EmConfig {
            components: 1,
            iterations: 10,
            seed: 0,
        },
    )
    .unwrap();
    let n = 10_000.0;
    for j in 0..3 {
        let col: Vec<f64> = frames.chunks_exact(3).map(|x| x[j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!((fit.model.means()[j] - mean).abs() < 1e-9);
        assert!((fit.model.vars()[j] - var).abs() < 1e-9);
    }
    assert_eq!(fit.model.weights(), [1.0]);
}

#[cfg_attr(not(oracle_suite), test)]
pub fn recovers_two_clusters() {
    let mut r = stream(4, "two-clusters");
    let (a, b) = (
        Normal::new(-3.0, 1.0).unwrap(),
        Normal::new(4.0, 1.0).unwrap(),
    );
    let mut frames = Vec::new();
    for i in 0..4000 {
        let d = if i % 2 == 0 { &a } else { &b };
        frames.push(d.sample(&mut r));
        frames.push(d.sample(&mut r) + 1.0);
    }
    let fit = em_fit(
        &frames,
        2,
        &EmConfig {
            components: 2,
            iterations: 30,
            seed: 9,
        },
    )
    .unwrap();
    let mut means: Vec<[f64; 2]> = (0..2)
        .map(|k| [fit.model.mean(k)[0], fit.model.mean(k)[1]])
        .collect();
    means.sort_by(|x, y| x[0].total_cmp(&y[0]));
    let truth = [[-3.0, -2.0], [4.0, 5.0]];
    for (m, t) in means.iter().zip(&truth) {
        for j in 0..2 {
            assert!((m[j] - t[j]).abs() < 0.1, "{means:?}");
        }
    }
}
