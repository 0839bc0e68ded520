use super::dense::DenseMatrix;
use crate::error::{GgdError, Result};

/// Scalar types the optimizer can update in place.
pub trait AdamScalar: Copy {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl AdamScalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl AdamScalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Adam with bias correction. Moments are kept in f64, one slot per
/// parameter tensor in the order the tensors are passed to [`AdamState::step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates every tensor once and advances the step counter by one.
    pub fn step<T: AdamScalar>(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(GgdError::shape(format!(
                "{} parameter tensors, {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(GgdError::shape("parameter tensor count changed between steps"));
        }
        for ((p, g), (m, v)) in params.iter().zip(grads).zip(&self.moments) {
            if p.len() != g.len() || p.len() != m.len() || v.len() != m.len() {
                return Err(GgdError::shape(format!(
                    "parameter of length {} with gradient of length {}",
                    p.len(),
                    g.len()
                )));
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            for i in 0..p.len() {
                let w = p[i].to_f64();
                let gi = g[i].to_f64() + self.weight_decay * w;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = T::from_f64(w - self.lr * m_hat / (v_hat.sqrt() + self.eps));
            }
        }
        Ok(())
    }
}

/// Single-tensor convenience wrapper around [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, param: &mut DenseMatrix, grad: &DenseMatrix) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(GgdError::shape(format!(
            "param {:?} vs grad {:?}",
            param.shape(),
            grad.shape()
        )));
    }
    state.step(&mut [param.as_mut_slice()], &[grad.as_slice()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut st = AdamState::new(0.01);
        let mut p = DenseMatrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let g = DenseMatrix::from_rows(&[vec![3.0, -0.5]]).unwrap();
        adam_step(&mut st, &mut p, &g).unwrap();
        assert!((p.get(0, 0) - 0.99).abs() < 1e-6);
        assert!((p.get(0, 1) + 1.99).abs() < 1e-6);
    }

    #[test]
    fn zero_grad_keeps_param_and_counts_step() {
        let mut st = AdamState::new(0.1);
        let mut p = DenseMatrix::from_rows(&[vec![0.5, 0.25]]).unwrap();
        let before = p.clone();
        adam_step(&mut st, &mut p, &DenseMatrix::zeros(1, 2)).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn three_scalar_steps_match_recurrence() {
        // hand-expanded recurrence: lr=0.1, b1=0.9, b2=0.999, eps=1e-8
        let grads = [0.5f64, -1.0, 2.0];
        let mut expected = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            expected -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        let mut st = AdamState::new(0.1);
        let mut p = [1.0f64];
        for g in grads {
            st.step(&mut [&mut p[..]], &[&[g][..]]).unwrap();
        }
        assert!((p[0] - expected).abs() < 1e-10);
        assert_eq!(st.steps(), 3);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = AdamState::new(0.1);
        let mut p = DenseMatrix::zeros(2, 2);
        assert!(adam_step(&mut st, &mut p, &DenseMatrix::zeros(1, 2)).is_err());
    }
}
