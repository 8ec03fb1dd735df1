use crate::error::{Error, Result};
use crate::model::SegmentationModel;
use crate::nn::{adam_step, AdamState};
use crate::scalar::Scalar;

/// Adam over every learnable parameter of a [`SegmentationModel`], one state
/// per parameter in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &SegmentationModel<T>) -> Self {
        Adam {
            states: model
                .parameters()
                .iter()
                .map(|p| AdamState::new(p.value.shape()))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step_count)
    }

    /// Applies one update to all parameters. Nothing is modified when any
    /// gradient is non-finite.
    pub fn step(&mut self, model: &mut SegmentationModel<T>, lr: f64) -> Result<()> {
        let mut params = model.parameters_mut();
        if params.len() != self.states.len() {
            return Err(Error::shape("optimizer state does not match model parameters"));
        }
        if let Some(bad) = params.iter().find(|p| !p.grad.all_finite()) {
            return Err(Error::NonFiniteGradient {
                name: bad.name.clone(),
            });
        }
        for (p, s) in params.iter_mut().zip(&mut self.states) {
            adam_step(p, s, lr)?;
        }
        Ok(())
    }
}
