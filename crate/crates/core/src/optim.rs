//! Adam and global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates for a list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, shapes: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        let (first, second) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        Ok(Adam {
            lr,
            step: 0,
            first,
            second,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} parameters, got {} params and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            let g = grads[k].as_slice();
            let p = p.as_mut_slice();
            for (i, &gi) in g.iter().enumerate() {
                let mi = &mut m.as_mut_slice()[i];
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                let vi = &mut v.as_mut_slice()[i];
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// Global ℓ2 norm over all gradients.
pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::frobenius_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping. A non-positive `max_norm` disables clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight scalar Adam used as the reference trace.
    fn scalar_adam(mut p: f64, grads: &[f64], lr: f64) -> f64 {
        let (mut m, mut v) = (0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            p -= lr * mh / (vh.sqrt() + 1e-8);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params_alone() {
        let mut w = Matrix::filled(2, 2, 0.3);
        let mut adam = Adam::new(1e-2, [(2, 2)]).unwrap();
        adam.step(&mut [&mut w], &[Matrix::zeros(2, 2)]).unwrap();
        assert_eq!(w, Matrix::filled(2, 2, 0.3));
        assert_eq!(adam.first_moments()[0], Matrix::zeros(2, 2));
        assert_eq!(adam.second_moments()[0], Matrix::zeros(2, 2));
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut w = Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        let g = Matrix::from_vec(1, 3, vec![4.0, -0.5, 1e-3]).unwrap();
        let mut adam = Adam::new(0.1, [(1, 3)]).unwrap();
        adam.step(&mut [&mut w], std::slice::from_ref(&g)).unwrap();
        for (wi, gi) in w.as_slice().iter().zip(g.as_slice()) {
            // m̂ = g and v̂ = g², so the step is lr·g/(|g|+ε)
            let expected = 1.0 - 0.1 * gi / (gi.abs() + 1e-8);
            assert!((wi - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_trace() {
        let trace = [0.7, 0.7];
        let mut w = Matrix::scalar(2.0);
        let mut adam = Adam::new(0.05, [(1, 1)]).unwrap();
        for &g in &trace {
            adam.step(&mut [&mut w], &[Matrix::scalar(g)]).unwrap();
        }
        assert!((w[(0, 0)] - scalar_adam(2.0, &trace, 0.05)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Adam::new(0.0, [(1, 1)]).is_err());
        let mut adam = Adam::new(0.1, [(1, 1)]).unwrap();
        let mut w = Matrix::zeros(2, 1);
        assert!(adam.step(&mut [&mut w], &[Matrix::zeros(2, 1)]).is_err());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![Matrix::filled(1, 1, 3.0), Matrix::filled(1, 1, 4.0)];
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - 5.0).abs() < 1e-15);
        assert!((global_norm(&g) - 1.0).abs() < 1e-15);
        let mut small = vec![Matrix::filled(1, 1, 0.1)];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][(0, 0)], 0.1);
    }
}
