//! Dense row-major f64 tensors and shared parameter handles.

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

use crate::error::{Error, Result};

/// An n-dimensional array of 64-bit floats in row-major order.
///
/// The gradient buffer is present only when tracking is enabled
/// (see [`Tensor::with_grad`]); it always mirrors the data shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape matches the buffer length.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {numel} elements, buffer holds {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel], grad: None }
    }

    /// A rank-1 tensor of shape `[1]` holding one value.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value], grad: None }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data, grad: None }
    }

    /// Enables gradient tracking (zero-initialized buffer).
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![0.0; self.data.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn is_tracked(&self) -> bool {
        self.grad.is_some()
    }

    /// A tensor is scalar when it holds exactly one element, whatever its rank.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a scalar tensor.
    ///
    /// Panics if the tensor is not scalar; callers gate on [`Tensor::is_scalar`].
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    /// Adds `delta` into the gradient buffer. No-op when tracking is disabled.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        if let Some(g) = self.grad.as_mut() {
            debug_assert_eq!(g.len(), delta.len());
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A shared, mutable handle to a tensor — the unit of parameter storage.
///
/// Cloning a `Var` clones the handle, not the tensor: every clone reads and
/// writes the same storage, which is what gives the two branches of a pair
/// forward pass their shared weights. `Var` is intentionally not `Send`;
/// a graph and its leaves stay on one thread.
#[derive(Debug, Clone)]
pub struct Var(Rc<RefCell<Tensor>>);

impl Var {
    /// Wraps a tensor with gradient tracking enabled.
    pub fn param(tensor: Tensor) -> Self {
        Var(Rc::new(RefCell::new(tensor.with_grad())))
    }

    /// Wraps a tensor without gradient tracking.
    pub fn untracked(tensor: Tensor) -> Self {
        Var(Rc::new(RefCell::new(tensor)))
    }

    pub fn tensor(&self) -> Ref<'_, Tensor> {
        self.0.borrow()
    }

    pub fn tensor_mut(&self) -> RefMut<'_, Tensor> {
        self.0.borrow_mut()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().numel()
    }

    /// Copies the current values out of the shared storage.
    pub fn snapshot(&self) -> Vec<f64> {
        self.0.borrow().data().to_vec()
    }

    /// Copies the current gradient out, if tracking is enabled.
    pub fn grad_snapshot(&self) -> Option<Vec<f64>> {
        self.0.borrow().grad().map(|g| g.to_vec())
    }

    /// True when two handles alias the same storage.
    pub fn same_storage(&self, other: &Var) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}
