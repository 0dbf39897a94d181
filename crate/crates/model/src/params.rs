//! Named parameter matrices and their gradients.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, Zip};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Parameters in declaration order. Vectors (biases, norm scales) are stored
/// as `[1, n]` matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name; parameter layouts are fixed by the model
    /// builder.
    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        let id = ParamId(self.values.len());
        assert!(self.index.insert(name.clone(), id).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn element_count(&self, filter: impl Fn(&str) -> bool) -> usize {
        self.names
            .iter()
            .zip(&self.values)
            .filter(|(n, _)| filter(n))
            .map(|(_, v)| v.len())
            .sum()
    }
}

/// Gradient slots parallel to a [`ParamStore`]; untouched parameters stay
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    slots: Vec<Option<Array2<f64>>>,
}

impl Grads {
    pub fn new(store: &ParamStore) -> Self {
        Grads {
            slots: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.slots[id.0].as_ref()
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Array2<f64>> {
        self.slots[id.0].as_mut()
    }

    pub fn add(&mut self, id: ParamId, g: &Array2<f64>) {
        match &mut self.slots[id.0] {
            Some(acc) => *acc += g,
            slot => *slot = Some(g.clone()),
        }
    }

    /// Adds `scale * g` to row `row` of a parameter shaped `shape`.
    pub fn add_row(&mut self, id: ParamId, shape: (usize, usize), row: usize, g: ArrayView1<f64>, scale: f64) {
        let acc = self.slots[id.0].get_or_insert_with(|| Array2::zeros(shape));
        acc.row_mut(row).scaled_add(scale, &g);
    }

    /// Adds `other` slot by slot.
    pub fn merge(&mut self, other: &Grads) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.slots.iter_mut().flatten() {
            *g *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.slots.iter().flatten().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()))
    }

    /// Gradient entry, zero when the parameter was not touched.
    pub fn entry(&self, id: ParamId, r: usize, c: usize) -> f64 {
        self.get(id).map_or(0.0, |g| g[[r, c]])
    }
}

/// Xavier/Glorot uniform: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, a, rng)
}

/// Zero-mean uniform matrix with standard deviation `std`.
pub fn uniform_std<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    uniform(rows, cols, std * 3f64.sqrt(), rng)
}

fn uniform<R: Rng>(rows: usize, cols: usize, a: f64, rng: &mut R) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for x in m.iter_mut() {
        *x = rng.random_range(-a..=a);
    }
    m
}

/// Element-wise `p -= step` over matching shapes.
pub(crate) fn apply_update(p: &mut Array2<f64>, step: &Array2<f64>) {
    Zip::from(p).and(step).for_each(|p, s| *p -= s);
}
