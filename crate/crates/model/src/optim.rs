//! Adam with bias correction.

use ndarray::{Array2, Zip};

use crate::error::ModelError;
use crate::params::{apply_update, Grads, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.ids().map(|id| Array2::zeros(store.value(id).dim())).collect();
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn first_moment(&self, id: crate::params::ParamId) -> &Array2<f64> {
        &self.m[id.0]
    }

    pub fn second_moment(&self, id: crate::params::ParamId) -> &Array2<f64> {
        &self.v[id.0]
    }

    /// One update at learning rate `lr`. Parameters without a gradient are
    /// treated as having a zero gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) -> Result<(), ModelError> {
        if !grads.is_finite() {
            return Err(ModelError::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for id in store.ids().collect::<Vec<_>>() {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            match grads.get(id) {
                Some(g) => Zip::from(&mut *m).and(&mut *v).and(g).for_each(|m, v, g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                }),
                None => {
                    *m *= b1;
                    *v *= b2;
                }
            }
            let step = Zip::from(&*m).and(&*v).map_collect(|m, v| lr * (m / c1) / ((v / c2).sqrt() + eps));
            apply_update(store.value_mut(id), &step);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_hand_value() {
        let mut s = ParamStore::new();
        let p = s.add("p", array![[0.5]]);
        let mut adam = Adam::new(&s, 0.9, 0.999, 1e-8);
        let mut g = Grads::new(&s);
        g.add(p, &array![[1.0]]);
        adam.update(&mut s, &g, 1e-4).unwrap();
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1: step = lr / (1 + eps).
        assert_eq!(s.value(p)[[0, 0]], 0.5 - 1e-4 * 1.0 / (1.0 + 1e-8));
        assert!((adam.first_moment(p)[[0, 0]] - 0.1).abs() < 1e-15);
        assert!((adam.second_moment(p)[[0, 0]] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_parameters_and_decays_moments() {
        let mut s = ParamStore::new();
        let p = s.add("p", array![[0.5, -1.0]]);
        let mut adam = Adam::new(&s, 0.9, 0.999, 1e-8);
        let none = Grads::new(&s);
        adam.update(&mut s, &none, 1e-3).unwrap();
        assert_eq!(s.value(p), &array![[0.5, -1.0]]);
        let mut g = Grads::new(&s);
        g.add(p, &array![[2.0, 2.0]]);
        adam.update(&mut s, &g, 1e-3).unwrap();
        let m = adam.first_moment(p)[[0, 0]];
        let before = s.value(p).clone();
        let mut zero = Grads::new(&s);
        zero.add(p, &array![[0.0, 0.0]]);
        adam.update(&mut s, &zero, 0.0).unwrap();
        assert_eq!(s.value(p), &before);
        assert!((adam.first_moment(p)[[0, 0]] - 0.9 * m).abs() < 1e-15);
    }

    #[test]
    fn quadratic_loss_decreases() {
        let mut s = ParamStore::new();
        let p = s.add("p", array![[3.0, -2.0, 0.5]]);
        let mut adam = Adam::new(&s, 0.9, 0.999, 1e-8);
        let loss = |s: &ParamStore| s.value(p).iter().map(|x| x * x).sum::<f64>();
        for _ in 0..50 {
            let before = loss(&s);
            let mut g = Grads::new(&s);
            g.add(p, &(s.value(p) * 2.0));
            adam.update(&mut s, &g, 1e-2).unwrap();
            assert!(loss(&s) < before);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = ParamStore::new();
        let p = s.add("p", array![[1.0]]);
        let mut g = Grads::new(&s);
        g.add(p, &array![[f64::INFINITY]]);
        assert!(Adam::new(&s, 0.9, 0.999, 1e-8).update(&mut s, &g, 1e-3).is_err());
    }
}
