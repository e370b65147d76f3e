use super::params::ParamStore;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently accumulated in `store`.
    /// Gradients are left untouched.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.m.is_empty() {
            for (value, _) in store.values_and_grads_mut() {
                self.m.push(vec![0.0; value.len()]);
                self.v.push(vec![0.0; value.len()]);
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((value, grad), (m, v)) in store
            .values_and_grads_mut()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &g), mi), vi) in value.data_mut().iter_mut().zip(grad).zip(m).zip(v) {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Array, Graph};

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let x = store.add("x", Array::vector(vec![3.0, -2.0]));
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            store.zero_grad();
            let mut g = Graph::new();
            let t = g.param(&store, x);
            let sq = g.square(t);
            let loss = g.sum(sq).unwrap();
            g.backward(loss).unwrap();
            store.accumulate(&g);
            opt.step(&mut store);
        }
        assert!(store.value(x).data().iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let x = store.add("x", Array::vector(vec![1.0]));
        store.grad_mut(x)[0] = 5.0;
        let mut opt = Adam::new(0.01);
        opt.step(&mut store);
        assert!((store.value(x).data()[0] - 0.99).abs() < 1e-9);
    }
}
