//! Optimizers over a [`ParamStore`]. State tensors are exported alongside the
//! model so training can resume bit-identically.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

use super::param::ParamStore;

pub struct Adam<T: Scalar> {
    m: Vec<Option<ArrayD<T>>>,
    v: Vec<Option<ArrayD<T>>>,
    t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Adam<T> {
    pub fn new(num_params: usize) -> Self {
        Adam {
            m: (0..num_params).map(|_| None).collect(),
            v: (0..num_params).map(|_| None).collect(),
            t: 0,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &[Option<ArrayD<T>>],
        lr: f64,
    ) {
        self.t += 1;
        let lr = T::from_f64(lr);
        let bc1 = T::one() - self.beta1.powi(self.t as i32);
        let bc2 = T::one() - self.beta2.powi(self.t as i32);
        for id in store.ids() {
            if !store.is_trainable(id) {
                continue;
            }
            let Some(g) = grads[id.0].as_ref() else {
                continue;
            };
            let m = self.m[id.0]
                .get_or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self.v[id.0]
                .get_or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            ndarray::Zip::from(&mut *m).and(g).for_each(|mv, &gv| {
                *mv = self.beta1 * *mv + (T::one() - self.beta1) * gv;
            });
            ndarray::Zip::from(&mut *v).and(g).for_each(|vv, &gv| {
                *vv = self.beta2 * *vv + (T::one() - self.beta2) * gv * gv;
            });
            let p = store.value_mut(id);
            ndarray::Zip::from(&mut *p)
                .and(&*m)
                .and(&*v)
                .for_each(|pv, &mv, &vv| {
                    let mhat = mv / bc1;
                    let vhat = vv / bc2;
                    *pv = *pv - lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }

    /// Serialize optimizer state as named tensors under `opt/adam/`.
    pub fn export(&self, store: &ParamStore<T>) -> Vec<(String, ArrayD<f64>)> {
        let mut out = vec![(
            "opt/adam/t".to_string(),
            ArrayD::from_elem(IxDyn(&[1]), self.t as f64),
        )];
        for id in store.ids() {
            if let Some(m) = &self.m[id.0] {
                out.push((
                    format!("opt/adam/m/{}", store.name(id)),
                    m.mapv(|x| x.to_f64()),
                ));
            }
            if let Some(v) = &self.v[id.0] {
                out.push((
                    format!("opt/adam/v/{}", store.name(id)),
                    v.mapv(|x| x.to_f64()),
                ));
            }
        }
        out
    }

    pub fn import(
        &mut self,
        store: &ParamStore<T>,
        tensors: &HashMap<String, ArrayD<f64>>,
    ) -> Result<()> {
        let t = tensors
            .get("opt/adam/t")
            .ok_or_else(|| Error::format("checkpoint missing opt/adam/t"))?;
        self.t = t[[0]] as u64;
        for id in store.ids() {
            if let Some(m) = tensors.get(&format!("opt/adam/m/{}", store.name(id))) {
                self.m[id.0] = Some(m.mapv(T::from_f64));
            }
            if let Some(v) = tensors.get(&format!("opt/adam/v/{}", store.name(id))) {
                self.v[id.0] = Some(v.mapv(T::from_f64));
            }
        }
        Ok(())
    }
}

/// SGD with classical momentum, no weight decay.
pub struct SgdMomentum<T: Scalar> {
    vel: Vec<Option<ArrayD<T>>>,
    pub momentum: T,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(num_params: usize, momentum: f64) -> Self {
        SgdMomentum {
            vel: (0..num_params).map(|_| None).collect(),
            momentum: T::from_f64(momentum),
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &[Option<ArrayD<T>>],
        lr: f64,
    ) {
        let lr = T::from_f64(lr);
        for id in store.ids() {
            if !store.is_trainable(id) {
                continue;
            }
            let Some(g) = grads[id.0].as_ref() else {
                continue;
            };
            let vel = self.vel[id.0]
                .get_or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            ndarray::Zip::from(&mut *vel).and(g).for_each(|vv, &gv| {
                *vv = self.momentum * *vv + gv;
            });
            let p = store.value_mut(id);
            ndarray::Zip::from(&mut *p).and(&*vel).for_each(|pv, &vv| {
                *pv = *pv - lr * vv;
            });
        }
    }

    pub fn export(&self, store: &ParamStore<T>) -> Vec<(String, ArrayD<f64>)> {
        let mut out = Vec::new();
        for id in store.ids() {
            if let Some(v) = &self.vel[id.0] {
                out.push((
                    format!("opt/sgd/vel/{}", store.name(id)),
                    v.mapv(|x| x.to_f64()),
                ));
            }
        }
        out
    }

    pub fn import(
        &mut self,
        store: &ParamStore<T>,
        tensors: &HashMap<String, ArrayD<f64>>,
    ) -> Result<()> {
        for id in store.ids() {
            if let Some(v) = tensors.get(&format!("opt/sgd/vel/{}", store.name(id))) {
                self.vel[id.0] = Some(v.mapv(T::from_f64));
            }
        }
        Ok(())
    }
}
