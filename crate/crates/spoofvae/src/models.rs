//! Trained detectors and their checkpoint encoding.

use std::path::Path;

use spoofvae_core::cnn::{CnnConfig, CnnModel};
use spoofvae_core::corpus::Label;
use spoofvae_core::diffnum::{Array, BlockConfig, Module};
use spoofvae_core::features::{FeatureKind, FeatureMatrix};
use spoofvae_core::gmm::{gmm_score_utterance, GmmModel};
use spoofvae_core::vae::{Estimator, VaeConfig, VaeModel, VaeSystem, Variant};

use crate::checkpoint::{ArrayData, Container};
use crate::error::{Error, Result};

/// Utterances scored per forward pass.
pub const SCORE_BATCH: usize = 32;

/// Per-class GMMs; a checkpoint may hold one class or both.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPair {
    pub features: FeatureKind,
    pub bonafide: Option<GmmModel>,
    pub spoof: Option<GmmModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Gmm(GmmPair),
    Vae(VaeSystem<f32>),
    Cnn {
        features: FeatureKind,
        model: CnnModel<f32>,
    },
}

impl Detector {
    /// `gmm`, a VAE variant name, or `cnn`.
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Gmm(_) => "gmm",
            Detector::Vae(s) => s.config().variant.as_str(),
            Detector::Cnn { .. } => "cnn",
        }
    }

    pub fn features(&self) -> FeatureKind {
        match self {
            Detector::Gmm(g) => g.features,
            Detector::Vae(s) => s.config().feature_kind,
            Detector::Cnn { features, .. } => *features,
        }
    }

    /// Merge the classes of two single-class GMM checkpoints.
    pub fn merge(self, other: Detector) -> Result<Detector> {
        match (self, other) {
            (Detector::Gmm(a), Detector::Gmm(b)) if a.features == b.features => {
                let pick = |x: Option<GmmModel>, y: Option<GmmModel>, class| match (x, y) {
                    (Some(_), Some(_)) => Err(Error::Config(format!("two {class} GMMs supplied"))),
                    (x, y) => Ok(x.or(y)),
                };
                Ok(Detector::Gmm(GmmPair {
                    features: a.features,
                    bonafide: pick(a.bonafide, b.bonafide, "bonafide")?,
                    spoof: pick(a.spoof, b.spoof, "spoof")?,
                }))
            }
            _ => Err(Error::Config(
                "only GMM checkpoints of the same feature kind can be combined".into(),
            )),
        }
    }

    /// Detection scores, higher meaning more bonafide.
    pub fn score(
        &self,
        feats: &[FeatureMatrix],
        phrases: &[u16],
        est: Estimator,
    ) -> Result<Vec<f64>> {
        assert_eq!(feats.len(), phrases.len());
        let kind = self.features();
        if let Some(m) = feats.iter().find(|m| m.kind() != kind) {
            return Err(Error::Config(format!(
                "{} model expects {kind} features, got {}",
                self.name(),
                m.kind()
            )));
        }
        match self {
            Detector::Gmm(g) => {
                let (Some(b), Some(s)) = (&g.bonafide, &g.spoof) else {
                    return Err(Error::Config(
                        "GMM scoring needs both a bonafide and a spoof model".into(),
                    ));
                };
                Ok(feats
                    .iter()
                    .map(|m| gmm_score_utterance(b, s, m))
                    .collect::<Result<_, _>>()?)
            }
            Detector::Vae(sys) => {
                let mut out = Vec::with_capacity(feats.len());
                for (ms, ps) in feats.chunks(SCORE_BATCH).zip(phrases.chunks(SCORE_BATCH)) {
                    let refs: Vec<&FeatureMatrix> = ms.iter().collect();
                    out.extend(sys.score(&FeatureMatrix::stack::<f32>(&refs)?, ps, est)?);
                }
                Ok(out)
            }
            Detector::Cnn { model, .. } => {
                let mut out = Vec::with_capacity(feats.len());
                for ms in feats.chunks(SCORE_BATCH) {
                    let refs: Vec<&FeatureMatrix> = ms.iter().collect();
                    out.extend(model.posterior(&FeatureMatrix::stack::<f32>(&refs)?)?);
                }
                Ok(out)
            }
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.set("model", self.name());
        c.set("features", self.features());
        match self {
            Detector::Gmm(g) => {
                for (class, m) in [("bonafide", &g.bonafide), ("spoof", &g.spoof)] {
                    let Some(m) = m else { continue };
                    let (k, d) = (m.components(), m.dims());
                    c.set(&format!("gmm.{class}.components"), k);
                    c.push(
                        format!("gmm.{class}.weights"),
                        &[k],
                        ArrayData::F64(m.weights().to_vec()),
                    );
                    c.push(
                        format!("gmm.{class}.means"),
                        &[k, d],
                        ArrayData::F64(m.means().to_vec()),
                    );
                    c.push(
                        format!("gmm.{class}.vars"),
                        &[k, d],
                        ArrayData::F64(m.vars().to_vec()),
                    );
                }
            }
            Detector::Vae(sys) => {
                write_vae_config(&mut c, sys.config());
                match sys {
                    VaeSystem::Conditional(m) => push_state(&mut c, "model.", m),
                    VaeSystem::Naive { bonafide, spoof } => {
                        push_state(&mut c, "bonafide.", bonafide);
                        push_state(&mut c, "spoof.", spoof);
                    }
                }
            }
            Detector::Cnn { model, .. } => {
                write_cnn_config(&mut c, &model.config);
                push_state(&mut c, "model.", model);
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> std::result::Result<Self, String> {
        let features: FeatureKind = c.meta_parse("features")?;
        let model = c.meta_str("model")?;
        match model {
            "gmm" => {
                let load = |class: &str| -> std::result::Result<Option<GmmModel>, String> {
                    let Some(w) = c.array(&format!("gmm.{class}.weights")) else {
                        return Ok(None);
                    };
                    let get =
                        |name: &str| match c.array(&format!("gmm.{class}.{name}")).map(|a| &a.data)
                        {
                            Some(ArrayData::F64(v)) => Ok(v.clone()),
                            _ => Err(format!("missing f64 array gmm.{class}.{name}")),
                        };
                    let ArrayData::F64(weights) = &w.data else {
                        return Err(format!("gmm.{class}.weights must be f64"));
                    };
                    GmmModel::new(weights.clone(), get("means")?, get("vars")?)
                        .map(Some)
                        .map_err(|e| format!("{class} GMM: {e}"))
                };
                let pair = GmmPair {
                    features,
                    bonafide: load("bonafide")?,
                    spoof: load("spoof")?,
                };
                if pair.bonafide.is_none() && pair.spoof.is_none() {
                    return Err("GMM checkpoint holds no model".into());
                }
                Ok(Detector::Gmm(pair))
            }
            "cnn" => {
                let config = read_cnn_config(c)?;
                let mut model = CnnModel::new(config, 0).map_err(|e| e.to_string())?;
                load_state(c, "model.", &mut model)?;
                Ok(Detector::Cnn { features, model })
            }
            other => {
                let variant: Variant = other
                    .parse()
                    .map_err(|e: spoofvae_core::Error| e.to_string())?;
                let config = read_vae_config(c, features, variant)?;
                let fresh = || VaeModel::<f32>::new(config, 0).map_err(|e| e.to_string());
                let sys = if variant == Variant::Naive {
                    let (mut b, mut s) = (fresh()?, fresh()?);
                    load_state(c, "bonafide.", &mut b)?;
                    load_state(c, "spoof.", &mut s)?;
                    VaeSystem::Naive {
                        bonafide: b,
                        spoof: s,
                    }
                } else {
                    let mut m = fresh()?;
                    load_state(c, "model.", &mut m)?;
                    VaeSystem::Conditional(m)
                };
                let expected = c.arrays.len();
                let used = Detector::Vae(sys.clone()).to_container().arrays.len();
                if used != expected {
                    return Err(format!(
                        "checkpoint has {expected} arrays, model uses {used}"
                    ));
                }
                Ok(Detector::Vae(sys))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?).map_err(|msg| Error::format(path, msg))
    }

    pub fn as_vae(&self) -> Option<&VaeSystem<f32>> {
        match self {
            Detector::Vae(s) => Some(s),
            _ => None,
        }
    }
}

fn push_state<M: Module<f32>>(c: &mut Container, prefix: &str, m: &M) {
    for (name, a) in m.state() {
        c.push(
            format!("{prefix}{name}"),
            a.shape(),
            ArrayData::F32(a.data().to_vec()),
        );
    }
}

fn load_state<M: Module<f32>>(
    c: &Container,
    prefix: &str,
    m: &mut M,
) -> std::result::Result<(), String> {
    for (name, a) in m.state_mut() {
        let key = format!("{prefix}{name}");
        let stored = c
            .array(&key)
            .ok_or_else(|| format!("missing array `{key}`"))?;
        if stored.shape != a.shape() {
            return Err(format!(
                "array `{key}` has shape {:?}, model expects {:?}",
                stored.shape,
                a.shape()
            ));
        }
        let ArrayData::F32(v) = &stored.data else {
            return Err(format!("array `{key}` must be f32"));
        };
        a.data_mut().copy_from_slice(v);
    }
    Ok(())
}

fn pair(p: (usize, usize)) -> String {
    format!("{}x{}", p.0, p.1)
}

fn parse_pair(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once('x')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

fn write_block(c: &mut Container, prefix: &str, b: &BlockConfig) {
    c.set(&format!("{prefix}.slope"), format!("{:?}", b.slope));
    c.set(
        &format!("{prefix}.bn_momentum"),
        format!("{:?}", b.bn_momentum),
    );
    c.set(&format!("{prefix}.bn_eps"), format!("{:?}", b.bn_eps));
}

fn read_block(c: &Container, prefix: &str) -> std::result::Result<BlockConfig, String> {
    Ok(BlockConfig {
        slope: c.meta_parse(&format!("{prefix}.slope"))?,
        bn_momentum: c.meta_parse(&format!("{prefix}.bn_momentum"))?,
        bn_eps: c.meta_parse(&format!("{prefix}.bn_eps"))?,
    })
}

fn write_vae_config(c: &mut Container, v: &VaeConfig) {
    c.set("vae.frames", v.frames);
    c.set("vae.dims", v.dims);
    c.set("vae.cond_dim", v.cond_dim);
    c.set("vae.latent_dim", v.latent_dim);
    c.set("vae.base_channels", v.base_channels);
    c.set("vae.enc_layers", v.enc_layers);
    c.set("vae.enc_kernel_t", v.enc_kernel_t);
    c.set("vae.dec_hw", pair(v.dec_hw));
    c.set(
        "vae.dec_channels",
        v.dec_channels.map(|x| x.to_string()).join(","),
    );
    c.set("vae.dec_kernels", v.dec_kernels.map(pair).join(","));
    c.set("vae.head_kernel", pair(v.head_kernel));
    c.set("vae.logvar_min", format!("{:?}", v.logvar_min));
    c.set("vae.logvar_max", format!("{:?}", v.logvar_max));
    c.set("vae.alpha", format!("{:?}", v.alpha));
    c.set("vae.beta", format!("{:?}", v.beta));
    c.set("vae.aux_hidden", v.aux_hidden);
    c.set("vae.aux_dropout", format!("{:?}", v.aux_dropout));
    write_block(c, "vae.block", &v.block);
}

fn read_vae_config(
    c: &Container,
    kind: FeatureKind,
    variant: Variant,
) -> std::result::Result<VaeConfig, String> {
    let get_pair = |k: &str| parse_pair(c.meta_str(k)?).ok_or_else(|| format!("bad `{k}`"));
    let list = |k: &str| -> std::result::Result<Vec<String>, String> {
        Ok(c.meta_str(k)?.split(',').map(str::to_string).collect())
    };
    let channels: Vec<usize> = list("vae.dec_channels")?
        .iter()
        .filter_map(|s| s.parse().ok())
        .collect();
    let kernels: Vec<(usize, usize)> = list("vae.dec_kernels")?
        .iter()
        .filter_map(|s| parse_pair(s))
        .collect();
    let cfg = VaeConfig {
        feature_kind: kind,
        frames: c.meta_parse("vae.frames")?,
        dims: c.meta_parse("vae.dims")?,
        variant,
        cond_dim: c.meta_parse("vae.cond_dim")?,
        latent_dim: c.meta_parse("vae.latent_dim")?,
        base_channels: c.meta_parse("vae.base_channels")?,
        enc_layers: c.meta_parse("vae.enc_layers")?,
        enc_kernel_t: c.meta_parse("vae.enc_kernel_t")?,
        dec_hw: get_pair("vae.dec_hw")?,
        dec_channels: channels
            .try_into()
            .map_err(|_| "`vae.dec_channels` needs 5 entries")?,
        dec_kernels: kernels
            .try_into()
            .map_err(|_| "`vae.dec_kernels` needs 4 entries")?,
        head_kernel: get_pair("vae.head_kernel")?,
        logvar_min: c.meta_parse("vae.logvar_min")?,
        logvar_max: c.meta_parse("vae.logvar_max")?,
        alpha: c.meta_parse("vae.alpha")?,
        beta: c.meta_parse("vae.beta")?,
        aux_hidden: c.meta_parse("vae.aux_hidden")?,
        aux_dropout: c.meta_parse("vae.aux_dropout")?,
        block: read_block(c, "vae.block")?,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn write_cnn_config(c: &mut Container, cfg: &CnnConfig) {
    c.set("cnn.input_hw", pair(cfg.input_hw));
    c.set(
        "cnn.channels",
        cfg.channels.map(|x| x.to_string()).join(","),
    );
    c.set("cnn.hidden", cfg.hidden);
    c.set("cnn.dropout", format!("{:?}", cfg.dropout));
    write_block(c, "cnn.block", &cfg.block);
}

fn read_cnn_config(c: &Container) -> std::result::Result<CnnConfig, String> {
    let channels: Vec<usize> = c
        .meta_str("cnn.channels")?
        .split(',')
        .filter_map(|s| s.parse().ok())
        .collect();
    Ok(CnnConfig {
        input_hw: parse_pair(c.meta_str("cnn.input_hw")?).ok_or("bad `cnn.input_hw`")?,
        channels: channels
            .try_into()
            .map_err(|_| "`cnn.channels` needs 3 entries")?,
        hidden: c.meta_parse("cnn.hidden")?,
        dropout: c.meta_parse("cnn.dropout")?,
        block: read_block(c, "cnn.block")?,
    })
}

/// Bonafide and spoof counts.
pub fn count_labels(labels: &[Label]) -> (usize, usize) {
    let b = labels.iter().filter(|l| **l == Label::Bonafide).count();
    (b, labels.len() - b)
}

/// Stack matrices into one `[N, T, D, 1]` batch.
pub fn stack(feats: &[FeatureMatrix]) -> Result<Array<f32>> {
    let refs: Vec<&FeatureMatrix> = feats.iter().collect();
    Ok(FeatureMatrix::stack::<f32>(&refs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vae(variant: Variant) -> VaeConfig {
        let mut c = VaeConfig::desk(FeatureKind::Cqcc, variant, 2).unwrap();
        c.latent_dim = 4;
        c.base_channels = 2;
        c.dec_channels = [4, 3, 3, 2, 2];
        c
    }

    fn features(n: usize) -> Vec<FeatureMatrix> {
        (0..n)
            .map(|k| {
                let v = (0..100 * 60)
                    .map(|i| ((i * (k + 3)) as f64 * 0.01).sin())
                    .collect();
                FeatureMatrix::new(FeatureKind::Cqcc, 100, 60, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn vae_checkpoints_roundtrip_every_variant() {
        let feats = features(3);
        for v in Variant::ALL {
            let cfg = tiny_vae(v);
            let sys = if v == Variant::Naive {
                VaeSystem::Naive {
                    bonafide: VaeModel::new(cfg, 1).unwrap(),
                    spoof: VaeModel::new(cfg, 2).unwrap(),
                }
            } else {
                VaeSystem::Conditional(VaeModel::new(cfg, 1).unwrap())
            };
            let d = Detector::Vae(sys);
            let back = Detector::from_container(
                &Container::from_bytes(&d.to_container().to_bytes()).unwrap(),
            )
            .unwrap();
            assert_eq!(back, d, "{v}");
            let s = d.score(&feats, &[1, 2, 3], Estimator::Mean).unwrap();
            assert_eq!(s, back.score(&feats, &[1, 2, 3], Estimator::Mean).unwrap());
        }
    }

    #[test]
    fn gmm_halves_merge() {
        let g = |m: f64| GmmModel::new(vec![1.0], vec![m; 60], vec![1.0; 60]).unwrap();
        let b = Detector::Gmm(GmmPair {
            features: FeatureKind::Cqcc,
            bonafide: Some(g(0.0)),
            spoof: None,
        });
        let s = Detector::Gmm(GmmPair {
            features: FeatureKind::Cqcc,
            bonafide: None,
            spoof: Some(g(1.0)),
        });
        assert!(b.score(&features(1), &[1], Estimator::Mean).is_err());
        let back = Detector::from_container(&b.to_container()).unwrap();
        assert_eq!(back, b);
        let both = b.clone().merge(s).unwrap();
        assert_eq!(
            both.score(&features(2), &[1, 1], Estimator::Mean)
                .unwrap()
                .len(),
            2
        );
        assert!(both.clone().merge(b).is_err());
    }

    #[test]
    fn cnn_roundtrip_and_kind_check() {
        let d = Detector::Cnn {
            features: FeatureKind::CqccResidual,
            model: CnnModel::new(CnnConfig::new(100, 60), 3).unwrap(),
        };
        assert_eq!(Detector::from_container(&d.to_container()).unwrap(), d);
        assert!(d.score(&features(1), &[1], Estimator::Mean).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let d = Detector::Vae(VaeSystem::Conditional(
            VaeModel::new(tiny_vae(Variant::Cvae), 1).unwrap(),
        ));
        let mut c = d.to_container();
        c.set("vae.latent_dim", 5);
        assert!(Detector::from_container(&c).unwrap_err().contains("shape"));
    }
}
