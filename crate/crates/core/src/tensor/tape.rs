//! Recording tape and reverse traversal.
//!
//! Each tracked tensor carries a node id on a shared tape. Operations push an
//! entry holding a backward closure; [`Tensor::backward`] walks the entries in
//! reverse recording order exactly once, accumulating gradients additively.

use std::sync::{Arc, Mutex};

use super::{Scalar, Tensor};

/// Sink the backward closures write input gradients into.
pub(crate) type GradSink<'a, T> = dyn FnMut(usize, Tensor<T>) + 'a;

struct Entry<T: Scalar> {
    out: usize,
    backward: Box<dyn Fn(&Tensor<T>, &mut GradSink<T>) + Send>,
}

struct TapeInner<T: Scalar> {
    next_id: usize,
    entries: Vec<Entry<T>>,
}

/// Gradient tape. Cheap to clone; all clones share the recording.
#[derive(Clone)]
pub struct Tape<T: Scalar = f32> {
    inner: Arc<Mutex<TapeInner<T>>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { inner: Arc::new(Mutex::new(TapeInner { next_id: 0, entries: Vec::new() })) }
    }

    /// Marks a tensor as a differentiable leaf of this tape.
    pub fn watch(&self, tensor: &mut Tensor<T>) {
        let id = self.fresh_id();
        tensor.node = Some(Node { tape: self.clone(), id });
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fresh_id(&self) -> usize {
        let mut inner = self.inner.lock().unwrap();
        let id = inner.next_id;
        inner.next_id += 1;
        id
    }

    fn push(&self, out: usize, backward: Box<dyn Fn(&Tensor<T>, &mut GradSink<T>) + Send>) {
        self.inner.lock().unwrap().entries.push(Entry { out, backward });
    }

    fn same_tape(&self, other: &Tape<T>) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

/// Node handle stored inside tracked tensors.
#[derive(Clone)]
pub(crate) struct Node<T: Scalar> {
    pub(crate) tape: Tape<T>,
    pub(crate) id: usize,
}

/// Gradients produced by [`Tensor::backward`], keyed by tensor identity.
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `tensor`.
    ///
    /// Tracked tensors that did not contribute to the loss get a zero tensor
    /// of their own shape, never an absence.
    pub fn get(&self, tensor: &Tensor<T>) -> Tensor<T> {
        let node = tensor
            .node
            .as_ref()
            .expect("Gradients::get on a tensor that is not tracked on any tape");
        match self.grads.get(node.id) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(tensor.shape().to_vec()),
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self) -> Gradients<T> {
        assert!(
            self.shape().is_empty(),
            "backward requires a scalar loss, got shape {:?}",
            self.shape()
        );
        let node = self
            .node
            .as_ref()
            .expect("backward on an untracked tensor: nothing was recorded");
        let inner = node.tape.inner.lock().unwrap();

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; inner.next_id];
        grads[node.id] = Some(Tensor::scalar(T::one()));

        for entry in inner.entries.iter().rev() {
            let Some(gout) = grads[entry.out].clone() else { continue };
            let mut sink = |id: usize, g: Tensor<T>| {
                accumulate(&mut grads, id, g);
            };
            (entry.backward)(&gout, &mut sink);
        }

        Gradients { grads }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: usize, g: Tensor<T>) {
    match &mut grads[id] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), g.shape(), "gradient shape drift for node {id}");
            let sum: Vec<T> = existing
                .data()
                .iter()
                .zip(g.data())
                .map(|(&a, &b)| a + b)
                .collect();
            *existing = Tensor::new(g.shape().to_vec(), sum);
        }
        slot @ None => *slot = Some(g),
    }
}

/// Glue for operations: computes the tape/node of the output and registers
/// the backward closure when any input is tracked.
pub(crate) fn record<T: Scalar>(
    inputs: &[&Tensor<T>],
    out_shape: Vec<usize>,
    out_data: Vec<T>,
    backward: impl Fn(&Tensor<T>, &mut GradSink<T>) + Send + 'static,
) -> Tensor<T> {
    record_shared(inputs, out_shape, Arc::new(out_data), backward)
}

/// [`record`] variant taking pre-shared data, so a backward closure can hold
/// the output buffer without copying it.
pub(crate) fn record_shared<T: Scalar>(
    inputs: &[&Tensor<T>],
    out_shape: Vec<usize>,
    out_data: Arc<Vec<T>>,
    backward: impl Fn(&Tensor<T>, &mut GradSink<T>) + Send + 'static,
) -> Tensor<T> {
    let mut tape: Option<Tape<T>> = None;
    for t in inputs {
        if let Some(n) = &t.node {
            match &tape {
                None => tape = Some(n.tape.clone()),
                Some(existing) => {
                    assert!(existing.same_tape(&n.tape), "operation mixes tensors from two tapes");
                }
            }
        }
    }
    let node = tape.map(|tape| {
        let id = tape.fresh_id();
        tape.push(id, Box::new(backward));
        Node { tape, id }
    });
    let out = Tensor::from_shared(out_shape, out_data, node);
    out.debug_check_finite("op output");
    out
}

/// Node id of a tensor if it is tracked.
pub(crate) fn node_id<T: Scalar>(t: &Tensor<T>) -> Option<usize> {
    t.node.as_ref().map(|n| n.id)
}
