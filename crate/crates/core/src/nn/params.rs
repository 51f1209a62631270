use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// Row-major dense tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data".into()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }
}

/// A 2-D window `[rows, cols]` into a flat parameter buffer. Biases are
/// `[1, cols]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn view<'a>(&self, buf: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &buf[self.range()]).expect("slot within buffer")
    }

    pub fn view_mut<'a>(&self, buf: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut buf[self.range()]).expect("slot within buffer")
    }
}

/// Named parameter tensors in one flat buffer, plus Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    slots: Vec<Slot>,
    pub data: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            slots: Vec::new(),
            data: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
        }
    }

    /// Appends a zero-initialised `[rows, cols]` tensor.
    pub fn alloc(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Slot {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        let slot = Slot {
            offset: self.data.len(),
            rows,
            cols,
        };
        self.names.push(name);
        self.slots.push(slot);
        self.data.resize(self.data.len() + slot.len(), 0.0);
        self.first_moment.resize(self.data.len(), 0.0);
        self.second_moment.resize(self.data.len(), 0.0);
        slot
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<Slot> {
        self.names.iter().position(|n| n == name).map(|i| self.slots[i])
    }

    pub fn get(&self, name: &str) -> Option<Tensor> {
        self.slot(name).map(|s| Tensor {
            shape: vec![s.rows, s.cols],
            data: self.data[s.range()].to_vec(),
        })
    }

    pub fn set(&mut self, name: &str, tensor: &Tensor) -> Result<()> {
        let s = self
            .slot(name)
            .ok_or_else(|| Error::usage(format!("unknown parameter {name}")))?;
        if tensor.data.len() != s.len() {
            return Err(Error::shape(format!("{name}: expected {} values", s.len())));
        }
        self.data[s.range()].copy_from_slice(&tensor.data);
        Ok(())
    }

    pub fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    /// Same names and shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.names == other.names && self.slots == other.slots
    }
}
