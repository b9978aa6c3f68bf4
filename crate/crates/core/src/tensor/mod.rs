//! Dense float tensor arithmetic with reverse-mode automatic differentiation.
//!
//! Tensors are immutable row-major buffers. Production code runs at `f32`;
//! every kernel is generic over [`Scalar`] so the test harness can instantiate
//! the identical computation at `f64` (finite-difference gradient checks,
//! tight invertibility bounds).
//!
//! Gradient tracking is opt-in: [`Tape::watch`] turns a tensor into a leaf of
//! a recording tape, any operation touching a tracked tensor records its
//! backward rule, and [`Tensor::backward`] on a scalar result replays the tape
//! in reverse. Untracked tensors pay only a branch per operation.

mod conv;
mod ops;
mod tape;

pub use conv::conv_output_extent;
pub use tape::{Gradients, Tape};
pub(crate) use tape::{node_id, record, record_shared};

use std::sync::Arc;

/// Element type of the engine: `f32` in production, `f64` in test harnesses.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::AddAssign
    + Default
    + Send
    + Sync
    + 'static
{
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense N-dimensional tensor; cloning shares the underlying buffer.
#[derive(Clone)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    pub(crate) node: Option<tape::Node<T>>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from a shape and matching row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {:?} implies {} elements, got {}",
            shape,
            numel,
            data.len()
        );
        Tensor { shape, data: Arc::new(data), node: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![T::zero(); numel]), node: None }
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![value; numel]), node: None }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: T) -> Self {
        Tensor::new(vec![], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Value of a rank-0 (or single-element) tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// True when this tensor is tracked on a gradient tape.
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, not tracked on any tape. Shares the buffer.
    pub fn detach(&self) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: Arc::clone(&self.data), node: None }
    }

    /// Casts element-wise into another scalar type (through f64).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let data: Vec<U> = self.data.iter().map(|&v| U::of_f64(v.as_f64())).collect();
        Tensor::new(self.shape.clone(), data)
    }

    /// Replaces the values of this tensor, keeping shape and identity checks.
    /// Used by optimizers between steps; the tensor must not be tracked.
    pub fn set_data(&mut self, data: Vec<T>) {
        assert!(self.node.is_none(), "set_data on a tracked tensor");
        assert_eq!(data.len(), self.numel(), "set_data length mismatch");
        self.data = Arc::new(data);
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    pub(crate) fn from_shared(
        shape: Vec<usize>,
        data: Arc<Vec<T>>,
        node: Option<tape::Node<T>>,
    ) -> Self {
        let numel: usize = shape.iter().product();
        debug_assert_eq!(numel, data.len(), "from_shared: shape/data mismatch");
        Tensor { shape, data, node }
    }

    /// Debug-mode guard: engine operations on finite inputs must stay finite.
    #[inline]
    pub(crate) fn debug_check_finite(&self, op: &str) {
        #[cfg(debug_assertions)]
        {
            if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
                panic!("{op}: non-finite value {:?} at flat index {i}", self.data[i]);
            }
        }
        #[cfg(not(debug_assertions))]
        {
            let _ = op;
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])?;
        }
        if self.node.is_some() {
            write!(f, " (tracked)")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_agreement() {
        let t = Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.shape(), &[2, 3]);
    }

    #[test]
    #[should_panic(expected = "implies 6 elements")]
    fn shape_mismatch_panics() {
        let _ = Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]);
    }

    #[test]
    fn scalar_item() {
        assert_eq!(Tensor::scalar(4.5f32).item(), 4.5);
    }

    #[test]
    fn detach_shares_buffer() {
        let t = Tensor::<f32>::full(vec![4], 1.5);
        let d = t.detach();
        assert!(std::sync::Arc::ptr_eq(&t.data, &d.data));
        assert!(!d.requires_grad());
    }
}
