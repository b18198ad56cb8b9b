use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::error::{Error, Result};

/// Per-parameter running average of squared gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    pub mean_square: MlpParams,
    pub decay: f64,
    pub stabilizer: f64,
}

impl RmsPropState {
    pub fn new(like: &MlpParams, decay: f64, stabilizer: f64) -> Self {
        Self {
            mean_square: like.zeros_like(),
            decay,
            stabilizer,
        }
    }

    /// `v <- decay*v + (1-decay)*g^2`, then `p <- p - lr*g/sqrt(v + stabilizer)`.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, lr: f64) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.mean_square) {
            return Err(Error::ShapeMismatch(
                "rmsprop parameters, gradients and state differ".into(),
            ));
        }
        let (rho, stab) = (self.decay, self.stabilizer);
        for ((p, &g), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.mean_square.values_mut())
        {
            *v = rho * *v + (1.0 - rho) * g * g;
            *p -= lr * g / (*v + stab).sqrt();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64) -> MlpParams {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        p.layers_mut()[0].weights[0] = value;
        p
    }

    #[test]
    fn hand_computed_single_step() {
        let mut p = scalar(0.0);
        let mut g = MlpParams::zeros(&[1, 1]).unwrap();
        g.layers_mut()[0].weights[0] = 1.0;
        let mut state = RmsPropState::new(&p, 0.99, 1e-8);
        state.step(&mut p, &g, 0.1).unwrap();
        let v = state.mean_square.layers()[0].weights[0];
        assert!((v - 0.01).abs() < 1e-15);
        let expected = -0.1 / (0.01f64 + 1e-8).sqrt();
        assert!((p.layers()[0].weights[0] - expected).abs() < 1e-10);
        assert!((expected + 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut p = scalar(0.7);
        let g = MlpParams::zeros(&[1, 1]).unwrap();
        let mut state = RmsPropState::new(&p, 0.9, 1e-8);
        state.mean_square.layers_mut()[0].weights[0] = 2.0;
        state.step(&mut p, &g, 0.5).unwrap();
        assert_eq!(p.layers()[0].weights[0], 0.7);
        assert!((state.mean_square.layers()[0].weights[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut p = scalar(0.7);
        let mut g = MlpParams::zeros(&[1, 1]).unwrap();
        g.layers_mut()[0].weights[0] = 3.0;
        let mut state = RmsPropState::new(&p, 0.99, 1e-8);
        state.step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p.layers()[0].weights[0], 0.7);
        assert!(state.mean_square.layers()[0].weights[0] > 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = MlpParams::zeros(&[2, 1]).unwrap();
        let g = MlpParams::zeros(&[1, 1]).unwrap();
        let mut state = RmsPropState::new(&p, 0.99, 1e-8);
        assert!(state.step(&mut p, &g, 0.1).is_err());
    }
}
