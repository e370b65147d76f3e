use super::disc::Discriminators;
use super::DiscDesign;
use crate::autodiff::{Array, Graph, Tensor};
use crate::error::{Error, Result};
use crate::geometry::NUM_CLASSES;

/// Per-instance weights of the instance discriminators, `[N, n_disc]`:
/// all class confidences for design (c), the highest one for (b), ones for (a).
pub fn instance_weights(g: &mut Graph, conf: Tensor, design: DiscDesign) -> Result<Tensor> {
    let shape = g.shape(conf).to_vec();
    if shape.len() != 2 || shape[1] != NUM_CLASSES {
        return Err(Error::Dimension { op: "instance_weights", lhs: shape, rhs: vec![0, NUM_CLASSES] });
    }
    let n = shape[0];
    match design {
        DiscDesign::C => Ok(conf),
        DiscDesign::B => {
            let v = g.value(conf).data();
            let mut pick = vec![0.0; n * NUM_CLASSES];
            for i in 0..n {
                let row = &v[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
                let mut best = 0;
                for k in 1..NUM_CLASSES {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                pick[i * NUM_CLASSES + best] = 1.0;
            }
            let pick = g.constant(Array::new(vec![n, NUM_CLASSES], pick)?);
            let masked = g.mul(conf, pick)?;
            let ones = g.constant(Array::filled(&[NUM_CLASSES, 1], 1.0));
            g.matmul(masked, ones)
        }
        DiscDesign::A => Ok(g.constant(Array::filled(&[n, 1], 1.0))),
    }
}

/// Confidence-weighted least-squares domain loss over instance rows `x`
/// (`[N, F + 8]`): `(1/N) Σ_n Σ_j w[n,j] (p_j(x_n) − d_n)²` where `p_j` are
/// the instance discriminators and `d_n` is 0 for source, 1 for target.
pub fn conditional_loss(
    g: &mut Graph,
    discs: &Discriminators,
    x: Tensor,
    weights: Tensor,
    domains: &[f64],
) -> Result<Tensor> {
    let n = domains.len();
    if n == 0 {
        return Err(Error::Precondition("conditional loss needs at least one instance".into()));
    }
    let probs = discs.instance_probs(g, x)?;
    let k = g.shape(probs)[1];
    if g.shape(weights) != [n, k] {
        return Err(Error::Dimension { op: "conditional_loss", lhs: g.shape(weights).to_vec(), rhs: vec![n, k] });
    }
    let d: Vec<f64> = domains.iter().flat_map(|&d| std::iter::repeat_n(d, k)).collect();
    let d = g.constant(Array::new(vec![n, k], d)?);
    let diff = g.sub(probs, d)?;
    let sq = g.square(diff);
    let weighted = g.mul(weights, sq)?;
    let total = g.sum(weighted)?;
    Ok(g.scalar_mul(total, 1.0 / n as f64))
}

/// Mean per-cell binary cross-entropy of the cell discriminator against the
/// domain label of the whole map.
pub fn marginal_loss(g: &mut Graph, discs: &Discriminators, features: Tensor, domain: f64) -> Result<Tensor> {
    let mlp = discs
        .cell
        .as_ref()
        .ok_or_else(|| Error::Precondition("no cell discriminator in this run".into()))?;
    let logits = mlp.logits(g, &discs.store, features)?;
    let target = Array::filled(g.shape(logits), domain);
    let bce = g.bce_with_logits(logits, &target)?;
    g.mean(bce)
}

/// Sum of the marginal and conditional terms; the conditional term is
/// dropped when there are no instances.
pub fn combined_loss(marginal: Tensor, conditional: Option<Tensor>, g: &mut Graph) -> Result<Tensor> {
    match conditional {
        Some(c) => g.add(marginal, c),
        None => Ok(marginal),
    }
}
