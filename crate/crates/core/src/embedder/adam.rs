use crate::embedder::config::OptimizerKind;

/// First-order optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, len: usize) -> Self {
        Self { kind, lr, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *p -= self.lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut o = Optimizer::new(OptimizerKind::default(), 0.01, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        o.step(&mut p, &[3.0, -0.2, 1e-3]);
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] + 1.99).abs() < 1e-6);
        assert!((p[2] - 0.49).abs() < 1e-4);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut o = Optimizer::new(OptimizerKind::default(), 0.1, 2);
        let mut p = vec![3.0, -4.0];
        for _ in 0..500 {
            let g = vec![2.0 * p[0], 8.0 * p[1]];
            o.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
