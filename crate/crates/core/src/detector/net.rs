use rand::Rng;

use super::grid::{BevGrid, RAW_FEATURES};
use crate::autodiff::{Array, Graph, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::geometry::NUM_CLASSES;

/// Box residuals per cell: dx, dy, z, log l, log w, log h, sin 2yaw, cos 2yaw.
pub const BOX_RESIDUALS: usize = 8;
pub const HEAD_OUTPUTS: usize = NUM_CLASSES + BOX_RESIDUALS;

/// Sampling step of the second window layer. Two taps apart widens the
/// receptive field to 7×7 cells, enough to cover a car footprint.
pub const SECOND_LAYER_DILATION: usize = 2;

/// Initial confidence of every class logit. Positive cells are rare, so
/// starting near their frequency spares the first steps from pushing the
/// whole map down.
pub const CLASS_PRIOR: f64 = 0.0025;

#[derive(Debug, Clone)]
pub struct Detector {
    pub store: ParamStore,
    pub channels: usize,
    conv1_w: ParamId,
    conv1_b: ParamId,
    conv2_w: ParamId,
    conv2_b: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `[cells, channels]` feature map.
    pub features: Tensor,
    /// `[cells, HEAD_OUTPUTS]`: class logits then box residuals.
    pub head: Tensor,
}

pub const PARAM_NAMES: [&str; 6] = ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "head.w", "head.b"];

impl Detector {
    pub fn new(channels: usize, rng: &mut impl Rng) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("detector needs at least one channel".into()));
        }
        let mut store = ParamStore::new();
        store.add_weight("conv1.w", 9 * RAW_FEATURES, channels, rng);
        store.add_bias("conv1.b", channels);
        store.add_weight("conv2.w", 9 * channels, channels, rng);
        store.add_bias("conv2.b", channels);
        store.add_weight("head.w", channels, HEAD_OUTPUTS, rng);
        let hb = store.add_bias("head.b", HEAD_OUTPUTS);
        let prior = (CLASS_PRIOR / (1.0 - CLASS_PRIOR)).ln();
        store.value_mut(hb).data_mut()[..NUM_CLASSES].fill(prior);
        Self::from_store(store)
    }

    /// Rebuilds a detector around loaded parameters, checking their shapes.
    pub fn from_store(store: ParamStore) -> Result<Self> {
        let id = |name: &str| {
            store
                .id_by_name(name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))
        };
        let conv1_w = id("conv1.w")?;
        let channels = store.value(conv1_w).shape().get(1).copied().unwrap_or(0);
        let expect: [(&str, Vec<usize>); 6] = [
            ("conv1.w", vec![9 * RAW_FEATURES, channels]),
            ("conv1.b", vec![channels]),
            ("conv2.w", vec![9 * channels, channels]),
            ("conv2.b", vec![channels]),
            ("head.w", vec![channels, HEAD_OUTPUTS]),
            ("head.b", vec![HEAD_OUTPUTS]),
        ];
        for (name, shape) in &expect {
            let got = store.value(id(name)?).shape();
            if got != shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {got:?}, expected {shape:?}"
                )));
            }
        }
        Ok(Self {
            conv1_w,
            conv1_b: id("conv1.b")?,
            conv2_w: id("conv2.w")?,
            conv2_b: id("conv2.b")?,
            head_w: id("head.w")?,
            head_b: id("head.b")?,
            channels,
            store,
        })
    }

    /// Two 3×3 window layers with leaky ReLU, mapping the raw statistics to
    /// `channels` features per cell.
    pub fn features(&self, g: &mut Graph, grid: &BevGrid) -> Result<Tensor> {
        let (h, w) = (grid.spec.rows(), grid.spec.cols());
        let x = g.constant(Array::new(vec![h * w, RAW_FEATURES], grid.features.clone())?);
        let p1 = g.patches3x3(x, h, w, 1)?;
        let w1 = g.param(&self.store, self.conv1_w);
        let b1 = g.param(&self.store, self.conv1_b);
        let a1 = g.matmul(p1, w1)?;
        let a1 = g.add_bias(a1, b1)?;
        let a1 = g.leaky_relu(a1);
        let p2 = g.patches3x3(a1, h, w, SECOND_LAYER_DILATION)?;
        let w2 = g.param(&self.store, self.conv2_w);
        let b2 = g.param(&self.store, self.conv2_b);
        let a2 = g.matmul(p2, w2)?;
        let a2 = g.add_bias(a2, b2)?;
        Ok(g.leaky_relu(a2))
    }

    /// Per-cell dense layer: class logits followed by box residuals.
    pub fn head(&self, g: &mut Graph, features: Tensor) -> Result<Tensor> {
        let wh = g.param(&self.store, self.head_w);
        let bh = g.param(&self.store, self.head_b);
        let out = g.matmul(features, wh)?;
        g.add_bias(out, bh)
    }

    pub fn forward(&self, g: &mut Graph, grid: &BevGrid) -> Result<Forward> {
        let features = self.features(g, grid)?;
        let head = self.head(g, features)?;
        Ok(Forward { features, head })
    }

    /// Head outputs without keeping a graph around for training.
    pub fn predict(&self, grid: &BevGrid) -> Result<Array> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, grid)?;
        Ok(g.value(f.head).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_params;
    use crate::cloud::{Point, PointCloud};
    use crate::detector::{featurize, GridSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(rows: usize, cols: usize) -> GridSpec {
        GridSpec { x_range: (0.0, rows as f64 * 0.5), y_range: (0.0, cols as f64 * 0.5), cell: 0.5 }
    }

    #[test]
    fn zero_grid_and_zero_biases_give_zero_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let det = Detector::new(6, &mut rng).unwrap();
        let grid = featurize(&PointCloud::default(), &spec(5, 4)).unwrap();
        let mut g = Graph::new();
        let f = det.features(&mut g, &grid).unwrap();
        assert_eq!(g.shape(f), &[20, 6]);
        assert!(g.value(f).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let det = Detector::new(4, &mut rng).unwrap();
        for (h, w) in [(3, 3), (7, 5)] {
            let grid = featurize(&PointCloud::default(), &spec(h, w)).unwrap();
            let mut g = Graph::new();
            let out = det.forward(&mut g, &grid).unwrap();
            assert_eq!(g.shape(out.features), &[h * w, 4]);
            assert_eq!(g.shape(out.head), &[h * w, HEAD_OUTPUTS]);
        }
    }

    #[test]
    fn feature_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut det = Detector::new(3, &mut rng).unwrap();
        // nonzero biases keep activations away from the leaky-relu kink
        for name in ["conv1.b", "conv2.b"] {
            let id = det.store.id_by_name(name).unwrap();
            for v in det.store.value_mut(id).data_mut() {
                *v = rng.random_range(0.05..0.3);
            }
        }
        let points = (0..40)
            .map(|i| Point {
                x: 0.1 + 0.06 * i as f64,
                y: 0.3 + 0.04 * (i % 7) as f64,
                z: 0.1 * (i % 5) as f64,
                intensity: 0.5,
                ring: 0,
            })
            .collect();
        let grid = featurize(&PointCloud::new(points), &spec(5, 4)).unwrap();
        let err = grad_check_params(
            &det.store,
            |g, store| {
                let d = Detector::from_store(store.clone())?;
                let f = d.features(g, &grid)?;
                g.sum(f)
            },
            1e-5,
            1,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn from_store_rejects_bad_shapes() {
        let mut store = ParamStore::new();
        store.add("conv1.w", Array::zeros(&[36, 4]));
        assert!(Detector::from_store(store).is_err());
    }
}
