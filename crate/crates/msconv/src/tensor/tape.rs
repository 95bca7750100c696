//! Operation tape for reverse-mode differentiation.
//!
//! Records are appended in execution order, so inputs always precede the
//! record that consumes them; the backward pass walks the records exactly
//! once in reverse. The tape is confined to one logical training thread
//! (operations parallelize internally, the tape itself is not `Send`).

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use super::ops;
use super::{NodeId, Parameter, Shape, Tensor};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Saved view of an op input: node id when tracked, plus value snapshot.
pub(crate) struct SavedInput<T: Scalar> {
    pub id: Option<NodeId>,
    pub shape: Shape,
    pub data: Arc<Vec<T>>,
}

impl<T: Scalar> SavedInput<T> {
    pub fn of(t: &Tensor<T>) -> Self {
        SavedInput {
            id: t.node().map(|(_, id)| id),
            shape: t.shape(),
            data: t.data_arc(),
        }
    }
}

pub(crate) enum OpRec<T: Scalar> {
    Leaf,
    Conv2d {
        x: SavedInput<T>,
        w: Parameter<T>,
        stride: usize,
        dilation: usize,
        padding: usize,
    },
    AvgPool2 { x: SavedInput<T> },
    MaxPool2 { x: SavedInput<T>, argmax: Vec<usize> },
    Upsample2 { x: SavedInput<T> },
    Subsample2 { x: SavedInput<T> },
    PixelShuffle { x: SavedInput<T>, r: usize },
    AvgFilter2 { x: SavedInput<T> },
    Relu { x: SavedInput<T> },
    Add { a: SavedInput<T>, b: SavedInput<T> },
    Mul { a: SavedInput<T>, b: SavedInput<T> },
    Scale { x: SavedInput<T>, factor: T },
    Sum { x: SavedInput<T> },
    L1Loss { a: SavedInput<T>, b: SavedInput<T> },
    ConcatChannels { xs: Vec<SavedInput<T>> },
}

pub(crate) struct Record<T: Scalar> {
    pub shape: Shape,
    pub op: OpRec<T>,
}

struct TapeInner<T: Scalar> {
    records: Vec<Record<T>>,
    grads: Vec<Option<Vec<T>>>,
    ran_backward: bool,
}

/// Recording context for reverse-mode differentiation.
#[derive(Clone)]
pub struct Tape<T: Scalar> {
    inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                records: Vec::new(),
                grads: Vec::new(),
                ran_backward: false,
            })),
        }
    }

    pub(crate) fn same_tape(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn push(&self, rec: Record<T>) -> NodeId {
        let mut inner = self.inner.borrow_mut();
        inner.records.push(rec);
        inner.grads.push(None);
        inner.records.len() - 1
    }

    /// Register `t` as a leaf whose gradient is retained, and return the
    /// tracked handle. Every operation downstream of a watched tensor is
    /// recorded on this tape.
    pub fn watch(&self, t: &Tensor<T>) -> Tensor<T> {
        let id = self.push(Record { shape: t.shape(), op: OpRec::Leaf });
        Tensor::with_node(t.shape(), t.data().to_vec(), Some((self.clone(), id)))
    }

    /// Gradient of the loss with respect to a tensor recorded on this
    /// tape. Available after [`Tape::backward`]; `None` when no gradient
    /// reached the node.
    pub fn grad(&self, t: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let (tape, id) = t.node().ok_or(Error::Detached)?;
        if !self.same_tape(&tape) {
            return Err(Error::TapeMismatch);
        }
        let inner = self.inner.borrow();
        if !inner.ran_backward {
            return Err(Error::invalid("grad queried before backward"));
        }
        Ok(inner.grads[id].as_ref().map(|g| {
            Tensor::with_node(t.shape(), g.clone(), None)
        }))
    }

    /// Reverse pass from a scalar loss. Fills gradient accumulators on
    /// every reachable [`Parameter`]; shared parameters accumulate
    /// contributions from every use site.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<()> {
        let (tape, loss_id) = loss.node().ok_or(Error::Detached)?;
        if !self.same_tape(&tape) {
            return Err(Error::TapeMismatch);
        }
        if loss.shape() != Shape::SCALAR {
            return Err(Error::shape(format!(
                "backward requires a scalar loss, got {}",
                loss.shape()
            )));
        }
        let inner = &mut *self.inner.borrow_mut();
        if inner.ran_backward {
            return Err(Error::invalid("backward already run on this tape"));
        }
        if inner.records.is_empty() {
            return Err(Error::invalid("backward on an empty tape"));
        }
        inner.ran_backward = true;
        inner.grads[loss_id] = Some(vec![T::one()]);

        for k in (0..inner.records.len()).rev() {
            let (lower, upper) = inner.grads.split_at_mut(k);
            let go = match upper[0].as_ref() {
                Some(g) => g,
                None => continue,
            };
            let rec = &inner.records[k];
            ops::backward_record(rec, go, lower);
        }
        Ok(())
    }
}

/// Reverse pass from `loss` over the tape it is recorded on.
pub fn backward<T: Scalar>(loss: &Tensor<T>) -> Result<()> {
    let (tape, _) = loss.node().ok_or(Error::Detached)?;
    tape.backward(loss)
}

/// Accumulate `add` into a lazily-allocated gradient slot.
pub(crate) fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize, add: &[T]) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    debug_assert_eq!(buf.len(), add.len());
    for (b, a) in buf.iter_mut().zip(add) {
        *b += *a;
    }
}
