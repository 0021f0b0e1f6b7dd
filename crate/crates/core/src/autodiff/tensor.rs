use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::element::Element;

// Node ids are globally monotone, so parents always carry a smaller id than
// the tensors derived from them; sorting reachable nodes by id yields a
// topological order.
static NEXT_ID: AtomicU64 = AtomicU64::new(0);

pub(super) type BackwardFn<E> = Box<dyn Fn(&[E])>;

struct Inner<E: Element> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<E>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<E>>>,
    parents: Vec<Tensor<E>>,
    backward: Option<BackwardFn<E>>,
}

/// Dense n-dimensional real array with optional gradient tracking.
///
/// Values are stored row-major. A tensor is immutable once created; the
/// gradient buffer is the only interior-mutable part and exists only while
/// `requires_grad` is set. Cloning is cheap (shared node).
pub struct Tensor<E: Element> {
    inner: Rc<Inner<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn check_finite<E: Element>(data: &[E], context: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "non-finite value produced by {context}"
        )))
    }
}

impl<E: Element> Tensor<E> {
    fn build(
        shape: Vec<usize>,
        data: Vec<E>,
        requires_grad: bool,
        parents: Vec<Tensor<E>>,
        backward: Option<BackwardFn<E>>,
        context: &str,
    ) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::dimension(
                context,
                format!("shape {shape:?} holding {numel} values"),
                format!("{} values", data.len()),
            ));
        }
        check_finite(&data, context)?;
        Ok(Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
                parents,
                backward,
            }),
        })
    }

    /// Constant leaf tensor (no gradient tracking).
    pub fn from_vec(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        Self::build(shape, data, false, Vec::new(), None, "tensor construction")
    }

    /// Trainable leaf tensor: gradients accumulate here during backward.
    pub fn param(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        Self::build(shape, data, true, Vec::new(), None, "parameter construction")
    }

    /// Constant leaf converted from `f32` storage (cube / image data).
    pub fn from_f32_slice(shape: Vec<usize>, data: &[f32]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| E::from_f32(v)).collect())
    }

    pub fn scalar(value: E) -> Result<Self> {
        Self::from_vec(vec![1], vec![value])
    }

    /// Internal constructor for op results.
    pub(super) fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward: Option<BackwardFn<E>>,
        context: &str,
    ) -> Result<Self> {
        let requires_grad = backward.is_some();
        debug_assert_eq!(requires_grad, parents.iter().any(|p| p.requires_grad()));
        Self::build(shape, data, requires_grad, parents, backward, context)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<E> {
        if self.len() != 1 {
            return Err(Error::dimension(
                "item()",
                "1 element".to_string(),
                format!("{} elements", self.len()),
            ));
        }
        Ok(self.inner.data[0])
    }

    /// Accumulated gradient, present only on tensors that track gradients.
    /// `None` before backward has touched this node.
    pub fn grad(&self) -> Option<Vec<E>> {
        if !self.inner.requires_grad {
            return None;
        }
        self.inner.grad.borrow().clone()
    }

    pub(super) fn accumulate_grad(&self, contribution: &[E]) {
        debug_assert_eq!(contribution.len(), self.len());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (g, c) in buf.iter_mut().zip(contribution) {
                    *g += *c;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    pub(super) fn node_id(&self) -> u64 {
        self.inner.id
    }

    /// Reverse-mode sweep from a scalar result. Gradients accumulate into
    /// every reachable tensor that tracks them.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::dimension(
                "backward()",
                "scalar (1 element)".to_string(),
                format!("{} elements", self.len()),
            ));
        }
        if !self.inner.requires_grad {
            return Err(Error::Config(
                "backward() on a tensor with no tracked inputs".to_string(),
            ));
        }

        // Depth-first collection of the reachable subgraph, then process in
        // descending id order (children before parents).
        let mut seen: HashSet<u64> = HashSet::new();
        let mut order: Vec<Tensor<E>> = Vec::new();
        let mut stack: Vec<Tensor<E>> = vec![self.clone()];
        while let Some(node) = stack.pop() {
            if !seen.insert(node.node_id()) {
                continue;
            }
            for parent in &node.inner.parents {
                if parent.requires_grad() && !seen.contains(&parent.node_id()) {
                    stack.push(parent.clone());
                }
            }
            order.push(node);
        }
        order.sort_by_key(|t| std::cmp::Reverse(t.node_id()));

        self.accumulate_grad(&[E::one()]);
        for node in &order {
            if let Some(backward) = &node.inner.backward {
                let grad = node.inner.grad.borrow();
                if let Some(g) = grad.as_deref() {
                    backward(g);
                }
            }
        }
        Ok(())
    }
}
