//! Dense rank-4 tensors (batch, channel, height, width) with the operator
//! set needed by multi-scale convolution units, and tape-based
//! reverse-mode differentiation.
//!
//! Tensors are immutable values after creation. Attaching a tensor to a
//! [`Tape`] with [`Tape::watch`] makes every downstream operation record
//! itself; [`Tape::backward`] then fills gradient accumulators on all
//! reachable [`Parameter`]s (shared parameters accumulate contributions
//! from every use site) and retains gradients for watched leaves.

mod io;
mod ops;
mod tape;

pub use io::{read_tensor, write_tensor};
pub use ops::{concat_channels, conv_out_extent};
pub use tape::{backward, Tape};

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::scalar::Scalar;
use crate::{Error, Result};

/// NCHW extents of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const SCALAR: Shape = Shape { n: 1, c: 1, h: 1, w: 1 };
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

pub(crate) type NodeId = usize;

/// Dense rank-4 array. Cloning is cheap (shared buffer).
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    shape: Shape,
    data: Arc<Vec<T>>,
    node: Option<(Tape<T>, NodeId)>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "buffer of {} elements does not match shape {}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor { shape, data: Arc::new(data), node: None })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: Arc::new(vec![T::zero(); shape.len()]), node: None }
    }

    pub fn filled(shape: Shape, v: T) -> Self {
        Tensor { shape, data: Arc::new(vec![v; shape.len()]), node: None }
    }

    pub fn scalar(v: T) -> Self {
        Tensor::filled(Shape::SCALAR, v)
    }

    /// Uniform samples in `[lo, hi)`, drawn in f64 so the stream does not
    /// depend on the element type.
    pub fn random_uniform(shape: Shape, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let data: Vec<T> =
            (0..shape.len()).map(|_| T::from_f64(rng.gen_range(lo..hi))).collect();
        Tensor { shape, data: Arc::new(data), node: None }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Value at (n, c, y, x); rows are the innermost stride.
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x]
    }

    /// Copy of the buffer with one element replaced; used by finite
    /// difference probes.
    pub fn with_element(&self, idx: usize, v: T) -> Self {
        let mut data = self.data.as_ref().clone();
        data[idx] = v;
        Tensor { shape: self.shape, data: Arc::new(data), node: None }
    }

    /// The scalar value of a 1x1x1x1 tensor.
    pub fn item(&self) -> Result<T> {
        if self.shape != Shape::SCALAR {
            return Err(Error::shape(format!("item() on non-scalar tensor {}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, no tape attachment.
    pub fn detached(&self) -> Self {
        Tensor { shape: self.shape, data: Arc::clone(&self.data), node: None }
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    pub(crate) fn node(&self) -> Option<(Tape<T>, NodeId)> {
        self.node.clone()
    }

    pub(crate) fn with_node(shape: Shape, data: Vec<T>, node: Option<(Tape<T>, NodeId)>) -> Self {
        Tensor { shape, data: Arc::new(data), node }
    }

    pub(crate) fn assert_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }
}

static NEXT_SHARE_ID: AtomicU64 = AtomicU64::new(1);

/// Stable identifier deduplicating shared weights. Clones of a
/// [`Parameter`] keep the id; two parameters compare as shared iff their
/// ids are equal, which by construction means they alias the same values
/// and the same gradient accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShareId(u64);

pub(crate) struct ParamInner<T: Scalar> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub wgrad: Vec<T>,
    pub bgrad: Vec<T>,
}

/// A convolution weight block: weight of shape (c_out, c_in, k, k) plus a
/// per-output-channel bias, with gradient accumulators of the same shape.
/// Cloning aliases the underlying storage (this is how weight sharing is
/// expressed).
#[derive(Clone)]
pub struct Parameter<T: Scalar> {
    share_id: ShareId,
    wshape: Shape, // (c_out, c_in, k, k)
    inner: Rc<RefCell<ParamInner<T>>>,
}

impl<T: Scalar> fmt::Debug for Parameter<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Parameter")
            .field("share_id", &self.share_id)
            .field("wshape", &self.wshape)
            .finish()
    }
}

impl<T: Scalar> Parameter<T> {
    fn alloc(wshape: Shape, weight: Vec<T>, bias: Vec<T>) -> Self {
        let wlen = weight.len();
        Parameter {
            share_id: ShareId(NEXT_SHARE_ID.fetch_add(1, Ordering::Relaxed)),
            wshape,
            inner: Rc::new(RefCell::new(ParamInner {
                weight,
                bias,
                wgrad: vec![T::zero(); wlen],
                bgrad: vec![T::zero(); wshape.n],
            })),
        }
    }

    /// Fan-in-scaled uniform weights (bound 1/sqrt(c_in * k * k)) and zero
    /// bias.
    pub fn conv_init(c_out: usize, c_in: usize, k: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        let wshape = Shape::new(c_out, c_in, k, k);
        let weight: Vec<T> =
            (0..wshape.len()).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
        Parameter::alloc(wshape, weight, vec![T::zero(); c_out])
    }

    pub fn from_values(c_out: usize, c_in: usize, k: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let wshape = Shape::new(c_out, c_in, k, k);
        if weight.len() != wshape.len() || bias.len() != c_out {
            return Err(Error::shape(format!(
                "weight/bias buffers do not match conv shape {}",
                wshape
            )));
        }
        Ok(Parameter::alloc(wshape, weight, bias))
    }

    pub fn share_id(&self) -> ShareId {
        self.share_id
    }

    /// Weight shape (c_out, c_in, k, k).
    pub fn wshape(&self) -> Shape {
        self.wshape
    }

    pub fn c_out(&self) -> usize {
        self.wshape.n
    }

    pub fn c_in(&self) -> usize {
        self.wshape.c
    }

    pub fn kernel(&self) -> usize {
        self.wshape.h
    }

    /// Number of stored values (weight plus bias).
    pub fn value_count(&self) -> usize {
        self.wshape.len() + self.wshape.n
    }

    pub fn weight(&self) -> Vec<T> {
        self.inner.borrow().weight.clone()
    }

    pub fn bias(&self) -> Vec<T> {
        self.inner.borrow().bias.clone()
    }

    pub fn wgrad(&self) -> Vec<T> {
        self.inner.borrow().wgrad.clone()
    }

    pub fn bgrad(&self) -> Vec<T> {
        self.inner.borrow().bgrad.clone()
    }

    pub fn set_weight(&self, weight: &[T]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(weight.len(), inner.weight.len(), "weight length");
        inner.weight.copy_from_slice(weight);
    }

    pub fn set_bias(&self, bias: &[T]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(bias.len(), inner.bias.len(), "bias length");
        inner.bias.copy_from_slice(bias);
    }

    pub fn set_weight_element(&self, idx: usize, v: T) {
        self.inner.borrow_mut().weight[idx] = v;
    }

    pub fn set_bias_element(&self, idx: usize, v: T) {
        self.inner.borrow_mut().bias[idx] = v;
    }

    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.wgrad.iter_mut().for_each(|g| *g = T::zero());
        inner.bgrad.iter_mut().for_each(|g| *g = T::zero());
    }

    /// In-place update of values; the caller owns the update rule. The
    /// closure sees (flat index, value, gradient) with bias entries
    /// following the weight block.
    pub fn update(&self, mut f: impl FnMut(usize, T, T) -> T) {
        let mut inner = self.inner.borrow_mut();
        let ParamInner { weight, bias, wgrad, bgrad } = &mut *inner;
        for (i, (v, g)) in weight.iter_mut().zip(wgrad.iter()).enumerate() {
            *v = f(i, *v, *g);
        }
        let off = weight.len();
        for (i, (v, g)) in bias.iter_mut().zip(bgrad.iter()).enumerate() {
            *v = f(off + i, *v, *g);
        }
    }

    pub(crate) fn inner(&self) -> &Rc<RefCell<ParamInner<T>>> {
        &self.inner
    }
}

/// Deduplicate a parameter list by share id, keeping first occurrences.
pub fn dedup_parameters<T: Scalar>(params: &[Parameter<T>]) -> Vec<Parameter<T>> {
    let mut seen = std::collections::HashSet::new();
    params.iter().filter(|p| seen.insert(p.share_id())).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Tensor::<f64>::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]);
        assert!(err.is_err());
    }

    #[test]
    fn shared_parameter_mutation_visible_through_all_aliases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let p = Parameter::<f64>::conv_init(2, 2, 3, &mut rng);
        let alias = p.clone();
        assert_eq!(p.share_id(), alias.share_id());
        alias.set_weight_element(5, 42.0);
        assert_eq!(p.weight()[5], 42.0);
        p.update(|_, v, _| v * 2.0);
        assert_eq!(alias.weight()[5], 84.0);
    }

    #[test]
    fn distinct_parameters_have_distinct_ids() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let a = Parameter::<f64>::conv_init(1, 1, 1, &mut rng);
        let b = Parameter::<f64>::conv_init(1, 1, 1, &mut rng);
        assert_ne!(a.share_id(), b.share_id());
        assert_eq!(dedup_parameters(&[a.clone(), a.clone(), b.clone()]).len(), 2);
    }
}
