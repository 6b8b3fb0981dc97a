use crate::error::{Error, Result};
use crate::nn::{Gradients, Mlp};

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step from the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
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
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::Shape("parameter and gradient tensors differ in shape".into()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Shape("optimizer state was built for different parameters".into()));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = flush(b1 * m[i] + (1.0 - b1) * gi);
                v[i] = flush(b2 * v[i] + (1.0 - b2) * gi * gi);
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        let g = grads.tensors();
        let mut p = net.tensors_mut();
        self.step(&mut p, &g)
    }
}

/// Moments of dead units decay geometrically into subnormals, which are
/// very slow on x86; they are zeroed instead.
#[inline]
fn flush(x: f64) -> f64 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so Δp = −lr·g/(|g| + ε).
        let mut opt = Adam::new(0.01);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -4.0, 1e-3];
        opt.step(&mut [&mut p], &[&g]).unwrap();
        let expect = [1.0 - 0.01 * 0.3 / (0.3 + 1e-8), -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8)];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn second_step_closed_form() {
        let (b1, b2): (f64, f64) = (0.9, 0.999);
        let mut opt = Adam::new(0.1);
        let mut p = vec![0.0];
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        opt.step(&mut [&mut p], &[&[-2.0]]).unwrap();
        let m = b1 * (1.0 - b1) * 1.0 + (1.0 - b1) * -2.0;
        let v = b2 * (1.0 - b2) * 1.0 + (1.0 - b2) * 4.0;
        let step2 = 0.1 * (m / (1.0 - b1 * b1)) / ((v / (1.0 - b2 * b2)).sqrt() + 1e-8);
        let expect = -0.1 * 1.0 / (1.0 + 1e-8) - step2;
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut opt = Adam::new(0.1);
        let mut p = vec![1.0, 2.0];
        opt.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut opt = Adam::new(3e-4);
            let mut p = vec![0.1, 0.2, 0.3];
            for k in 0..5 {
                let g = [k as f64, -0.5, 1.0 / (k + 1) as f64];
                opt.step(&mut [&mut p], &[&g]).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = Adam::new(0.1);
        let mut p = vec![0.0; 2];
        assert!(opt.step(&mut [&mut p], &[&[1.0]]).is_err());
    }
}
