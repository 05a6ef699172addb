use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

/// Handle to one named matrix inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlice {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter vector partitioned into named row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    values: Vec<f64>,
    slices: Vec<ParamSlice>,
    seed: u64,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self {
            values: Vec::new(),
            slices: Vec::new(),
            seed,
        }
    }

    pub(crate) fn from_parts(values: Vec<f64>, slices: Vec<ParamSlice>, seed: u64) -> Self {
        Self { values, slices, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slices(&self) -> &[ParamSlice] {
        &self.slices
    }

    pub fn slice(&self, id: ParamId) -> &ParamSlice {
        &self.slices[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.slices.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn matrix(&self, id: ParamId) -> Array2<f64> {
        self.view(id).to_owned()
    }

    pub fn view(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let s = &self.slices[id.0];
        ArrayView2::from_shape((s.rows, s.cols), &self.values[s.offset..s.offset + s.len()]).expect("slice shape")
    }

    pub fn set(&mut self, id: ParamId, m: &Array2<f64>) {
        let s = &self.slices[id.0];
        assert_eq!((s.rows, s.cols), m.dim(), "shape of {}", s.name);
        let (off, len) = (s.offset, s.len());
        for (dst, v) in self.values[off..off + len].iter_mut().zip(m.iter()) {
            *dst = *v;
        }
    }

    fn add(&mut self, name: &str, rows: usize, cols: usize, init: impl FnMut() -> f64) -> ParamId {
        let offset = self.values.len();
        self.values.extend(std::iter::repeat_with(init).take(rows * cols));
        self.slices.push(ParamSlice {
            name: name.to_owned(),
            offset,
            rows,
            cols,
        });
        ParamId(self.slices.len() - 1)
    }

    /// Uniform in `±(6 / (rows + cols))^{1/2}`.
    pub fn add_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut SimRng) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        self.add(name, rows, cols, || rng.random_range(-a..a))
    }

    pub fn add_const(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> ParamId {
        self.add(name, rows, cols, || value)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn slices_partition_the_vector() {
        let mut rng = seeded(0);
        let mut store = ParameterStore::new(0);
        let a = store.add_glorot("a", 3, 4, &mut rng);
        let b = store.add_const("b", 1, 4, 0.0);
        assert_eq!(store.len(), 16);
        assert_eq!(store.slice(a).offset, 0);
        assert_eq!(store.slice(b).offset, 12);
        assert_eq!(store.find("b"), Some(b));
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(store.view(a).iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn set_round_trips() {
        let mut store = ParameterStore::new(0);
        let w = store.add_const("w", 2, 2, 0.0);
        let m = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
        store.set(w, &m);
        assert_eq!(store.matrix(w), m);
        assert_eq!(store.values(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
