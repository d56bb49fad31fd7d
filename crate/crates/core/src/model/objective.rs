use super::{RelNetModel, RelationalSample};
use crate::nn::{l2_grad, Mode, NnError, Objective, ParamTensor};

/// Total joint loss of a model on a fixed batch, in training mode with dropout
/// masks replayed from `dropout_seed`. The analytic gradient includes the
/// ℓ2 term so it matches the total the loss reports.
pub struct ModelObjective<'a> {
    pub model: &'a mut RelNetModel,
    pub batch: &'a [RelationalSample],
    pub dropout_seed: u64,
}

fn to_nn(e: super::ModelError) -> NnError {
    match e {
        super::ModelError::Nn(inner) => inner,
        other => NnError::Invalid(other.to_string()),
    }
}

impl Objective for ModelObjective<'_> {
    fn loss(&mut self) -> Result<f64, NnError> {
        self.model.reseed_dropout(self.dropout_seed);
        let total = match self.model.loss(self.batch, Mode::Train) {
            Ok((parts, _)) => parts.total,
            Err(super::ModelError::Divergence(_)) => f64::NAN,
            Err(e) => return Err(to_nn(e)),
        };
        self.model.clear_caches();
        Ok(total)
    }

    fn loss_and_grad(&mut self) -> Result<f64, NnError> {
        self.model.zero_grad();
        self.model.reseed_dropout(self.dropout_seed);
        let (parts, ctx) = match self.model.loss(self.batch, Mode::Train) {
            Ok(v) => v,
            Err(super::ModelError::Divergence(_)) => return Ok(f64::NAN),
            Err(e) => return Err(to_nn(e)),
        };
        self.model.backward(&ctx).map_err(to_nn)?;
        let gamma = self.model.config().gamma_l2;
        l2_grad(self.model.params_mut(), gamma);
        Ok(parts.total)
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.model.params_mut()
    }
}
