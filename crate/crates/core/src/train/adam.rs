/// Adam over a flat parameter vector with one learning rate for every entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Per-entry update `lr · m̂ / (√v̂ + ε)` that [`Adam::step`] would subtract.
    /// Advances the moment estimates.
    pub fn update(&mut self, grads: &[f64], lr: f64) -> Vec<f64> {
        assert_eq!(grads.len(), self.m.len(), "gradient length must match optimizer state");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        grads
            .iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                lr * m_hat / (v_hat.sqrt() + self.epsilon)
            })
            .collect()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        let delta = self.update(grads, lr);
        params.iter_mut().zip(delta).for_each(|(p, d)| *p -= d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut adam = Adam::new(3, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, 1.0, 1.0];
        adam.step(&mut p, &[2.0, -0.5, 0.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut adam = Adam::new(2, 0.9, 0.999, 1e-8);
        let mut p = vec![3.0, -2.0];
        for _ in 0..3000 {
            let g = vec![2.0 * p[0], 8.0 * p[1]];
            adam.step(&mut p, &g, 0.01);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2, "{p:?}");
    }
}
