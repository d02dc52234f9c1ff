use ndarray::ArrayD;

use crate::autodiff::{Gradients, Scalar, Tape, Var};

use super::param::{ParamId, ParamStore};

/// One forward/backward pass over a model. Binds store parameters onto a
/// fresh tape; binding the same parameter twice returns the same [`Var`], so
/// gradients of shared weights accumulate naturally.
pub struct Session<'a, T: Scalar> {
    pub tape: Tape<T>,
    store: &'a mut ParamStore<T>,
    bound: Vec<Option<Var>>,
    pub training: bool,
}

impl<'a, T: Scalar> Session<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, training: bool) -> Self {
        let n = store.len();
        Session {
            tape: Tape::new(),
            store,
            bound: vec![None; n],
            training,
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.value(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, value: ArrayD<T>) -> Var {
        self.tape.leaf(value)
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    /// Direct store write, used for batch-norm running statistics.
    pub fn set_stat(&mut self, id: ParamId, value: ArrayD<T>) {
        *self.store.value_mut(id) = value;
    }

    /// Collect per-parameter gradients after `tape.backward`, indexed like the
    /// store. Parameters that never entered the graph get `None`.
    pub fn param_grads(&self, grads: &mut Gradients<T>) -> Vec<Option<ArrayD<T>>> {
        self.bound
            .iter()
            .map(|b| b.and_then(|v| grads.take(v)))
            .collect()
    }
}
