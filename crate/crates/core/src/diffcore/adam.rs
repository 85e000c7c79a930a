use serde::{Deserialize, Serialize};

use super::{DiffError, RealArray};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), DiffError> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(DiffError::Contract(format!(
                "invalid Adam hyperparameters: need lr > 0, beta1/beta2 in [0, 1), eps > 0; got {self:?}"
            )))
        }
    }
}

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<RealArray>,
    second: Vec<RealArray>,
}

impl AdamState {
    /// Zero moments shaped like `shapes`.
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Result<Self, DiffError> {
        config.validate()?;
        let zeros = || shapes.iter().map(|s| RealArray::zeros(s.to_vec())).collect::<Vec<_>>();
        Ok(Self { config, step: 0, first: zeros(), second: zeros() })
    }

    /// Restores a state saved mid-training.
    pub fn from_parts(
        config: AdamConfig,
        step: u64,
        first: Vec<RealArray>,
        second: Vec<RealArray>,
    ) -> Result<Self, DiffError> {
        config.validate()?;
        if first.len() != second.len()
            || first.iter().zip(&second).any(|(m, v)| m.shape() != v.shape())
        {
            return Err(DiffError::Contract("first and second moments are not congruent".into()));
        }
        Ok(Self { config, step, first, second })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[RealArray] {
        &self.first
    }

    pub fn second_moments(&self) -> &[RealArray] {
        &self.second
    }

    /// One update of `params` in place from `grads`.
    pub fn step(&mut self, params: &mut [&mut RealArray], grads: &[RealArray]) -> Result<(), DiffError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(DiffError::Contract(format!(
                "optimizer tracks {} arrays, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != self.first[i].shape() {
                return Err(DiffError::ShapeMismatch {
                    node: i,
                    op: "adam_step",
                    detail: format!(
                        "moment {:?}, param {:?}, grad {:?}",
                        self.first[i].shape(),
                        p.shape(),
                        g.shape()
                    ),
                });
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for (((pi, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_for(p: &RealArray) -> AdamState {
        AdamState::new(AdamConfig::default(), &[p.shape()]).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = RealArray::vector(vec![1.0, -2.0, 0.5]).unwrap();
        let g = RealArray::vector(vec![3.0, -0.2, 40.0]).unwrap();
        let mut st = state_for(&p);
        st.step(&mut [&mut p], &[g]).unwrap();
        let moved: Vec<f64> = p.data().iter().zip([1.0, -2.0, 0.5]).map(|(a, b)| a - b).collect();
        for (dm, expected) in moved.iter().zip([-1e-3, 1e-3, -1e-3]) {
            assert!((dm - expected).abs() < 1e-9, "{dm} vs {expected}");
        }
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = RealArray::vector(vec![1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut st = state_for(&p);
        st.step(&mut [&mut p], &[RealArray::zeros(vec![2])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn constant_gradient_steps_do_not_grow() {
        // Direct simulation: under a constant gradient the bias-corrected
        // ratio m̂/√v̂ stays at sign(g), so displacement is non-increasing.
        let mut p = RealArray::vector(vec![0.0, 0.0]).unwrap();
        let g = RealArray::vector(vec![0.3, -5.0]).unwrap();
        let mut st = state_for(&p);
        let mut prev = p.clone();
        let mut last: Option<Vec<f64>> = None;
        for _ in 0..2 {
            st.step(&mut [&mut p], &[g.clone()]).unwrap();
            let disp: Vec<f64> = p.data().iter().zip(prev.data()).map(|(a, b)| (a - b).abs()).collect();
            if let Some(l) = &last {
                for (d, l) in disp.iter().zip(l) {
                    assert!(*d <= *l + 1e-15);
                }
            }
            last = Some(disp);
            prev = p.clone();
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = RealArray::vector(vec![1.0, 2.0]).unwrap();
        let mut st = state_for(&p);
        let err = st.step(&mut [&mut p], &[RealArray::zeros(vec![3])]);
        assert!(matches!(err, Err(DiffError::ShapeMismatch { .. })));
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let cfg = AdamConfig { beta1: 1.0, ..AdamConfig::default() };
        assert!(AdamState::new(cfg, &[]).is_err());
    }
}
