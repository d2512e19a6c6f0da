use spoofvae_core::diffnum::{Array, Mode};
use spoofvae_core::features::FeatureKind;
use spoofvae_core::rng::stream;
use spoofvae_core::vae::{Decoder, Encoder, VaeConfig, VaeModel, Variant};

#[cfg_attr(not(oracle_suite), test)]
pub fn spectrogram_encoder_shapes() {
    let c = VaeConfig::full(FeatureKind::Spectrogram, Variant::Cvae, 2).unwrap();
    assert_eq!((c.base_channels, c.latent_dim), (16, 128));
    let mut enc = Encoder::<f32>::new(&c, &mut stream(0, "arch"));
    let kernels: Vec<(usize, usize)> = enc.blocks.iter().map(|b| b.kernel()).collect();
    assert_eq!(kernels, [(5, 257), (5, 129), (5, 65), (5, 33), (5, 17)]);
    let x = Array::zeros(&[2, 100, 257, 1]);
    let y = Array::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let (post, cache) = enc.forward(&x, &y, Mode::Train).unwrap();
    let expected: [[usize; 4]; 5] = [
        [2, 50, 129, 16],
        [2, 25, 65, 32],
        [2, 13, 33, 64],
        [2, 7, 17, 128],
        [2, 4, 9, 256],
    ];
    assert_eq!(cache.block_shapes, expected.map(|s| s.to_vec()));
    assert_eq!(enc.flat_dim, 4 * 9 * 256);
    assert_eq!(post.mu.shape(), [2, 128]);
    assert_eq!(post.logvar.shape(), [2, 128]);
}

#[cfg_attr(not(oracle_suite), test)]
pub fn cqcc_encoder_has_four_layers() {
    let c = VaeConfig::full(FeatureKind::Cqcc, Variant::Cvae, 2).unwrap();
    assert_eq!(c.base_channels, 32);
    let enc = Encoder::<f32>::new(&c, &mut stream(0, "arch"));
    assert_eq!(enc.blocks.len(), 4);
    let post = enc
        .infer(
            &Array::zeros(&[1, 100, 60, 1]),
            &Array::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
    assert_eq!(post.mu.shape(), [1, 128]);
}

#[cfg_attr(not(oracle_suite), test)]
pub fn decoder_widths_and_output_shapes() {
    for (kind, width, dims) in [
        (FeatureKind::Spectrogram, 12288, 257),
        (FeatureKind::Cqcc, 2304, 60),
    ] {
        let c = VaeConfig::full(kind, Variant::Cvae, 2).unwrap();
        let dec = Decoder::<f32>::new(&c, &mut stream(1, "arch"));
        assert_eq!(dec.fc_width(), width);
        let kernels: Vec<(usize, usize)> = dec.blocks.iter().map(|b| b.kernel()).collect();
        assert_eq!(kernels, [(5, 10), (5, 20), (5, 20), (5, 20)]);
        let r = dec
            .infer(
                &Array::zeros(&[1, 128]),
                &Array::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap(),
            )
            .unwrap();
        assert_eq!(r.mu.shape(), [1, 100, dims, 1]);
        assert_eq!(r.logvar.shape(), [1, 100, dims, 1]);
    }
}

#[cfg_attr(not(oracle_suite), test)]
pub fn conditioning_arity_is_checked() {
    let c = VaeConfig::desk(FeatureKind::Cqcc, Variant::Cvae, 20).unwrap();
    let m = VaeModel::<f32>::new(c, 0).unwrap();
    let x = Array::zeros(&[1, 100, 60, 1]);
    assert!(m.encode(&x, &Array::zeros(&[1, 2])).is_err());
    assert!(m.encode(&x, &Array::zeros(&[1, 20])).is_ok());
    assert!(m
        .encode(&Array::zeros(&[1, 100, 257, 1]), &Array::zeros(&[1, 20]))
        .is_err());
}

#[cfg_attr(not(oracle_suite), test)]
pub fn auxiliary_heads_match_variant() {
    for v in Variant::ALL {
        let m = VaeModel::<f32>::new(VaeConfig::desk(FeatureKind::Cqcc, v, 2).unwrap(), 0).unwrap();
        assert_eq!(m.aux.is_some(), v.has_aux());
        assert_eq!(m.config.cond_dim == 0, v == Variant::Naive);
    }
    let m = VaeModel::<f32>::new(
        VaeConfig::full(FeatureKind::Cqcc, Variant::Acvae1, 2).unwrap(),
        0,
    )
    .unwrap();
    match m.aux {
        Some(spoofvae_core::vae::Aux::Latent(c)) => assert_eq!(c.hidden(), 32),
        _ => panic!("acvae1 needs a latent classifier"),
    }
}
