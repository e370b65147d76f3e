use rand::Rng;

use super::mask::BOX_FEATURES;
use super::{AlignmentConfig, AlignmentMode, DiscDesign};
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor};
use crate::error::Result;
use crate::geometry::NUM_CLASSES;

/// Hidden widths of the instance discriminators.
pub const INSTANCE_HIDDEN: (usize, usize) = (64, 32);
/// Hidden widths of the per-cell marginal discriminator.
pub const CELL_HIDDEN: (usize, usize) = (32, 16);

/// Three dense layers with leaky ReLU between them, ending in one logit.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    layers: [(ParamId, ParamId); 3],
}

impl Mlp {
    fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: (usize, usize), rng: &mut impl Rng) -> Self {
        let widths = [input, hidden.0, hidden.1, 1];
        let layers = [0, 1, 2].map(|l| {
            let w = store.add_weight(format!("{prefix}.l{l}.w"), widths[l], widths[l + 1], rng);
            let b = store.add_bias(format!("{prefix}.l{l}.b"), widths[l + 1]);
            (w, b)
        });
        Self { layers }
    }

    /// `[N, input]` rows to `[N, 1]` logits.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, x: Tensor) -> Result<Tensor> {
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let w = g.param(store, w);
            let b = g.param(store, b);
            h = g.matmul(h, w)?;
            h = g.add_bias(h, b)?;
            if l < 2 {
                h = g.leaky_relu(h);
            }
        }
        Ok(h)
    }
}

/// All discriminators of one run, sharing a parameter store and optimizer.
#[derive(Debug, Clone)]
pub struct Discriminators {
    pub store: ParamStore,
    /// One per class for design (c), a single one otherwise; empty when only
    /// the marginal term is used.
    pub instance: Vec<Mlp>,
    pub cell: Option<Mlp>,
    pub config: AlignmentConfig,
    pub feature_channels: usize,
}

impl Discriminators {
    pub fn new(feature_channels: usize, config: AlignmentConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let input = feature_channels + BOX_FEATURES;
        let mut instance = Vec::new();
        if config.mode != AlignmentMode::Marginal {
            let n = if config.design == DiscDesign::C { NUM_CLASSES } else { 1 };
            for k in 0..n {
                instance.push(Mlp::new(&mut store, &format!("disc{k}"), input, INSTANCE_HIDDEN, rng));
            }
        }
        let cell = (config.mode != AlignmentMode::Conditional)
            .then(|| Mlp::new(&mut store, "cell_disc", feature_channels, CELL_HIDDEN, rng));
        Ok(Self { store, instance, cell, config, feature_channels })
    }

    /// Domain probability of each instance row, `[N, instance.len()]`.
    pub fn instance_probs(&self, g: &mut Graph, x: Tensor) -> Result<Tensor> {
        let mut cols: Option<Tensor> = None;
        for mlp in &self.instance {
            let l = mlp.logits(g, &self.store, x)?;
            let p = g.sigmoid(l);
            cols = Some(match cols {
                None => p,
                Some(c) => g.concat(c, p, 1)?,
            });
        }
        cols.ok_or_else(|| crate::Error::Precondition("no instance discriminator in this run".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_per_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = 6;
        let c = Discriminators::new(f, AlignmentConfig { mode: AlignmentMode::Conditional, design: DiscDesign::C }, &mut rng)
            .unwrap();
        assert_eq!(c.instance.len(), 3);
        assert!(c.cell.is_none());
        let w0 = c.store.id_by_name("disc0.l0.w").unwrap();
        assert_eq!(c.store.value(w0).shape(), &[f + BOX_FEATURES, 64]);
        let b = Discriminators::new(f, AlignmentConfig { mode: AlignmentMode::Combined, design: DiscDesign::B }, &mut rng)
            .unwrap();
        assert_eq!(b.instance.len(), 1);
        assert!(b.cell.is_some());
        let m = Discriminators::new(f, AlignmentConfig { mode: AlignmentMode::Marginal, design: DiscDesign::A }, &mut rng)
            .unwrap();
        assert!(m.instance.is_empty());
        assert!(Discriminators::new(f, AlignmentConfig { mode: AlignmentMode::Marginal, design: DiscDesign::C }, &mut rng)
            .is_err());
    }

    #[test]
    fn outputs_are_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Discriminators::new(4, AlignmentConfig::default(), &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Array::new(vec![5, 12], (0..60).map(|v| (v as f64 - 30.0) * 0.7).collect()).unwrap());
        let p = d.instance_probs(&mut g, x).unwrap();
        assert_eq!(g.shape(p), &[5, 3]);
        assert!(g.value(p).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
