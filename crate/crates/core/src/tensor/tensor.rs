use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::scalar::Real;
use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Disables graph recording on the current thread until dropped.
pub struct NoGradGuard {
    prev: bool,
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    NoGradGuard { prev }
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Values an op keeps from its forward pass for use in backward.
pub(crate) struct Saved<T> {
    pub values: Vec<Vec<T>>,
    pub indices: Vec<usize>,
}

impl<T> Default for Saved<T> {
    fn default() -> Self {
        Saved { values: Vec::new(), indices: Vec::new() }
    }
}

pub(crate) struct Computed<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub saved: Saved<T>,
}

impl<T> Computed<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        Computed { shape, data, saved: Saved::default() }
    }

    pub fn with_saved(mut self, saved: Saved<T>) -> Self {
        self.saved = saved;
        self
    }
}

/// A differentiable operation: a forward rule and its vector-Jacobian product.
pub(crate) trait Op<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>>;

    /// Returns one gradient per input; `needs[i] == false` entries may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        saved: &Saved<T>,
        output: &[T],
        grad: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>>;
}

pub(crate) struct Node<T: Real> {
    op: Box<dyn Op<T>>,
    inputs: Vec<Tensor<T>>,
    saved: Saved<T>,
}

struct Inner<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    node: Option<Node<T>>,
}

/// N-dimensional row-major array with optional gradient tracking.
///
/// Cloning is cheap (shared storage). Values never change after creation;
/// only the gradient buffer is written, and only by [`Tensor::backward`].
pub struct Tensor<T: Real = f32> {
    inner: Arc<Inner<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Arc::clone(&self.inner) }
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<_> = self.inner.data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("op", &self.inner.node.as_ref().map(|n| n.op.name()))
            .field("data", &head)
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, node: Option<Node<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                node,
            }),
        }
    }

    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    pub fn from_f64(values: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(values.iter().map(|&v| T::from_f64(v)).collect(), shape)
    }

    pub fn scalar(v: T) -> Self {
        Self::build(vec![], vec![v], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![v; n], false, None)
    }

    /// Trainable leaf (`requires_grad == true`).
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Ok(Self::from_vec(data, shape)?.requires_grad_(true))
    }

    /// New leaf sharing no graph history, with the given tracking flag.
    pub fn requires_grad_(self, flag: bool) -> Self {
        if self.inner.node.is_none() && self.inner.requires_grad == flag {
            return self;
        }
        Self::build(self.inner.shape.clone(), self.inner.data.clone(), flag, None)
    }

    /// Copy of the values with no graph history and no gradient tracking.
    pub fn detach(&self) -> Self {
        Self::build(self.inner.shape.clone(), self.inner.data.clone(), false, None)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        let data = self.inner.data.iter().map(|v| U::from_f64(v.as_f64())).collect();
        Tensor::build(self.inner.shape.clone(), data, false, None)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn item(&self) -> T {
        self.inner.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.inner.node.as_ref().map(|n| n.op.name())
    }

    /// Accumulated gradient, if `backward()` has reached this leaf.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().expect("grad lock").clone()
    }

    pub fn has_grad(&self) -> bool {
        self.inner.grad.lock().expect("grad lock").is_some()
    }

    /// Moves the accumulated gradient out, leaving none.
    pub fn take_grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().expect("grad lock").take()
    }

    /// The values as an owned buffer; copies only when storage is shared.
    pub(crate) fn into_data(self) -> Vec<T> {
        match Arc::try_unwrap(self.inner) {
            Ok(inner) => inner.data,
            Err(shared) => shared.data.clone(),
        }
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    pub(crate) fn apply(op: impl Op<T> + 'static, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let computed = op.forward(inputs)?;
        let track = grad_enabled() && inputs.iter().any(|t| t.requires_grad());
        let node = track.then(|| Node {
            op: Box::new(op) as Box<dyn Op<T>>,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            saved: computed.saved,
        });
        Ok(Self::build(computed.shape, computed.data, track, node))
    }

    /// Nodes reachable from `self` through tracked inputs, in topological order
    /// (inputs before outputs).
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.inner.node {
                for inp in node.inputs.iter().rev() {
                    if inp.requires_grad() && !visited.contains(&inp.id()) {
                        stack.push((inp.clone(), false));
                    }
                }
            }
        }
        order
    }

    /// Reverse-mode differentiation from a scalar. Gradients are added into
    /// the `grad` buffer of every reachable leaf with `requires_grad`.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward() needs a scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Usage("backward() on a tensor that tracks no gradient".into()));
        }
        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(self.id(), vec![T::one()]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else { continue };
            match &t.inner.node {
                Some(node) => {
                    let inputs: Vec<&Tensor<T>> = node.inputs.iter().collect();
                    let needs: Vec<bool> = inputs.iter().map(|i| i.requires_grad()).collect();
                    let input_grads = node.op.backward(&inputs, &node.saved, &t.inner.data, &g, &needs);
                    debug_assert_eq!(input_grads.len(), inputs.len(), "{}", node.op.name());
                    for (inp, gi) in inputs.iter().zip(input_grads) {
                        let Some(gi) = gi else { continue };
                        if !inp.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(gi.len(), inp.numel(), "{}", node.op.name());
                        match grads.get_mut(&inp.id()) {
                            Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a = *a + *b),
                            None => {
                                grads.insert(inp.id(), gi);
                            }
                        }
                    }
                }
                None => {
                    let mut slot = t.inner.grad.lock().expect("grad lock");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }

    /// Recomputes this tensor by re-running every recorded op from the leaves.
    pub fn replay(&self) -> Result<Tensor<T>> {
        let order = self.topo_order();
        let mut fresh: HashMap<u64, Tensor<T>> = HashMap::new();
        for t in &order {
            let out = match &t.inner.node {
                None => t.clone(),
                Some(node) => {
                    let inputs: Vec<Tensor<T>> = node
                        .inputs
                        .iter()
                        .map(|i| fresh.get(&i.id()).cloned().unwrap_or_else(|| i.clone()))
                        .collect();
                    let refs: Vec<&Tensor<T>> = inputs.iter().collect();
                    let c = node.op.forward(&refs)?;
                    Self::build(c.shape, c.data, false, None)
                }
            };
            fresh.insert(t.id(), out);
        }
        Ok(fresh.remove(&self.id()).unwrap_or_else(|| self.clone()))
    }
}
