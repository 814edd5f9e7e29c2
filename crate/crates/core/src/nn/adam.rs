use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, GcnModel, GradientSet};

/// Adam with L2 weight decay folded into the gradient (not decoupled).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first_moment: Vec<DenseMatrix>,
    second_moment: Vec<DenseMatrix>,
}

impl AdamState {
    /// Zeroed state shaped like `params`.
    pub fn new(params: &[&DenseMatrix], lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .iter()
            .map(|p| DenseMatrix::zeros(p.n_rows(), p.n_cols()))
            .collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn for_model(model: &GcnModel, lr: f64, weight_decay: f64) -> Self {
        let params: Vec<&DenseMatrix> = model.layers().iter().map(|l| &l.weight).collect();
        Self::new(&params, lr, weight_decay)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every parameter.
    pub fn update(
        &mut self,
        params: &mut [&mut DenseMatrix],
        grads: &[&DenseMatrix],
    ) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "optimizer holds {} parameters, got {} parameters and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let p = p.as_mut_slice();
            for (((w, &gr), mk), vk) in p
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                let g = gr + wd * *w;
                *mk = b1 * *mk + (1.0 - b1) * g;
                *vk = b2 * *vk + (1.0 - b2) * g * g;
                let m_hat = *mk / bias1;
                let v_hat = *vk / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Applies `grads` to the model's weights.
    pub fn step(&mut self, model: &mut GcnModel, grads: &GradientSet) -> Result<()> {
        let mut params: Vec<&mut DenseMatrix> = model
            .layers_mut()
            .iter_mut()
            .map(|l| &mut l.weight)
            .collect();
        let grads: Vec<&DenseMatrix> = grads.iter().collect();
        self.update(&mut params, &grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut w = DenseMatrix::from_rows(&[vec![1.0, -2.0]]);
        let before = w.clone();
        let g = DenseMatrix::zeros(1, 2);
        let mut adam = AdamState::new(&[&w], 0.01, 0.0);
        for _ in 0..5 {
            adam.update(&mut [&mut w], &[&g]).unwrap();
        }
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_is_sign_like() {
        let mut w = DenseMatrix::from_rows(&[vec![0.5, 0.5, 0.5]]);
        let g = DenseMatrix::from_rows(&[vec![3.0, -0.2, 1e-3]]);
        let lr = 0.01;
        let mut adam = AdamState::new(&[&w], lr, 0.0);
        adam.update(&mut [&mut w], &[&g]).unwrap();
        for (k, &gk) in g.as_slice().iter().enumerate() {
            let expected = 0.5 - lr * gk / (gk.abs() + 1e-8);
            assert!((w.as_slice()[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_decay_enters_gradient() {
        let mut w = DenseMatrix::from_rows(&[vec![2.0]]);
        let g = DenseMatrix::zeros(1, 1);
        let mut adam = AdamState::new(&[&w], 0.1, 0.5);
        adam.update(&mut [&mut w], &[&g]).unwrap();
        // effective gradient 1.0 > 0, so the weight shrinks by ~lr
        assert!((w.as_slice()[0] - 1.9).abs() < 1e-7);
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(w) = 0.5 * Σ c_k w_k², gradient c ∘ w
        let c = [1.0, 2.0, 0.5];
        let mut w = DenseMatrix::from_rows(&[vec![0.2, -0.2, 0.1]]);
        let mut adam = AdamState::new(&[&w], 0.03, 0.0);
        let grad = |w: &DenseMatrix| {
            DenseMatrix::from_rows(&[w.as_slice().iter().zip(c).map(|(x, ck)| x * ck).collect()])
        };
        for _ in 0..100 {
            let g = grad(&w);
            adam.update(&mut [&mut w], &[&g]).unwrap();
        }
        assert_eq!(adam.step_count(), 100);
        assert!(grad(&w).frobenius_norm() < 1e-3, "{:?}", w);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut w = DenseMatrix::zeros(2, 2);
        let g = DenseMatrix::zeros(2, 1);
        let mut adam = AdamState::new(&[&w], 0.01, 0.0);
        assert!(adam.update(&mut [&mut w], &[&g]).is_err());
    }
}
