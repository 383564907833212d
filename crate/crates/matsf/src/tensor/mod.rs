//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap handle onto a graph node holding 64-bit values,
//! an optional gradient buffer, and the provenance record used by
//! [`Tensor::backward`]. Graphs are built fresh per forward pass and dropped
//! once the loss handle goes out of scope; parameters survive because the
//! model structs keep handles to them.

mod init;
mod optim;

pub mod check;

pub use init::{sub_seed, CounterRng};
pub use optim::{OptimizerKind, OptimizerState};

use std::cell::{Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("domain error in {op}: {message}")]
    Domain { op: &'static str, message: String },
    #[error("contract violation in {op}: {message}")]
    Contract { op: &'static str, message: String },
}

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Sigmoid output is clamped into this open sub-interval of (0, 1) where the
/// caller asks for a strictly-interior result (discriminator outputs).
pub const UNIT_INTERVAL_MARGIN: f64 = 1e-15;

struct Node {
    id: u64,
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Option<OpRecord>,
}

enum OpRecord {
    MatMul { lhs: Tensor, rhs: Tensor },
    Add { lhs: Tensor, rhs: Tensor },
    Sub { lhs: Tensor, rhs: Tensor },
    Mul { lhs: Tensor, rhs: Tensor },
    Neg { input: Tensor },
    Sigmoid { input: Tensor },
    Tanh { input: Tensor },
    Relu { input: Tensor },
    Log { input: Tensor },
    LogClamped { input: Tensor, floor: f64 },
    ClampUnit { input: Tensor },
    Scale { input: Tensor, factor: f64 },
    Sum { input: Tensor },
    Mean { input: Tensor },
    Concat { parts: Vec<Tensor>, axis: usize },
    Narrow { input: Tensor, axis: usize, start: usize },
    Transpose { input: Tensor },
}

/// Handle onto one node of a differentiation graph. Cloning the handle does
/// not copy the data.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Node>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("id", &n.id)
            .field("shape", &n.shape)
            .field("requires_grad", &n.requires_grad)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn new_node(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Option<OpRecord>) -> Tensor {
        debug_assert_eq!(numel(&shape), values.len());
        Tensor {
            inner: Rc::new(RefCell::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values,
                grad: None,
                requires_grad,
                op,
            })),
        }
    }

    /// Leaf tensor from row-major values.
    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(TensorError::Contract {
                op: "from_values",
                message: format!("extents must be positive, got {shape:?}"),
            });
        }
        if numel(shape) != values.len() {
            return Err(TensorError::Contract {
                op: "from_values",
                message: format!(
                    "shape {shape:?} implies {} elements, got {}",
                    numel(shape),
                    values.len()
                ),
            });
        }
        Ok(Tensor::new_node(shape.to_vec(), values, false, None))
    }

    /// Leaf parameter: tracked by backward.
    pub fn parameter(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_values(shape, values)?;
        t.inner.borrow_mut().requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::new_node(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::new_node(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::new_node(vec![1], vec![value], false, None)
    }

    pub fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Borrow the row-major values without copying.
    pub fn values(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |n| n.values.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().values.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let n = self.inner.borrow();
        debug_assert_eq!(n.values.len(), 1);
        n.values[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Toggle gradient tracking; used to freeze one party while the other
    /// updates. Only meaningful on leaves.
    pub fn set_requires_grad(&self, requires_grad: bool) {
        self.inner.borrow_mut().requires_grad = requires_grad;
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Overwrite values in place (optimizer updates). Shape must match.
    pub(crate) fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.borrow_mut().values);
    }

    /// Replace the stored values; lengths must agree.
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if values.len() != inner.values.len() {
            return Err(TensorError::Contract {
                op: "set_values",
                message: format!(
                    "expected {} values for shape {:?}, got {}",
                    inner.values.len(),
                    inner.shape,
                    values.len()
                ),
            });
        }
        inner.values.copy_from_slice(values);
        Ok(())
    }

    /// Leaf copy that shares no graph history.
    pub fn detach(&self) -> Tensor {
        let n = self.inner.borrow();
        Tensor::new_node(n.shape.clone(), n.values.clone(), false, None)
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// Matrix product of two 2-d tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (ls, rs) = (self.shape(), rhs.shape());
        if ls.len() != 2 || rs.len() != 2 || ls[1] != rs[0] {
            return Err(dim_err("matmul", &ls, &rs));
        }
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let out = matmul_raw(&self.values(), &rhs.values(), m, k, n);
        let rg = self.requires_grad() || rhs.requires_grad();
        Ok(Tensor::new_node(
            vec![m, n],
            out,
            rg,
            Some(OpRecord::MatMul {
                lhs: self.clone(),
                rhs: rhs.clone(),
            }),
        ))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary_pointwise(rhs, "add", |a, b| a + b, |l, r| OpRecord::Add { lhs: l, rhs: r })
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary_pointwise(rhs, "sub", |a, b| a - b, |l, r| OpRecord::Sub { lhs: l, rhs: r })
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary_pointwise(rhs, "mul", |a, b| a * b, |l, r| OpRecord::Mul { lhs: l, rhs: r })
    }

    /// Shared shape logic for binary pointwise ops: identical shapes, or a
    /// length-n vector broadcast across the rows of an m-by-n matrix. Any
    /// other combination is rejected.
    fn binary_pointwise(
        &self,
        rhs: &Tensor,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        rec: impl FnOnce(Tensor, Tensor) -> OpRecord,
    ) -> Result<Tensor> {
        let (ls, rs) = (self.shape(), rhs.shape());
        let lv = self.values();
        let rv = rhs.values();
        let (out_shape, out) = if ls == rs {
            (ls.clone(), lv.iter().zip(rv.iter()).map(|(&a, &b)| f(a, b)).collect())
        } else if let Some(n) = row_broadcast(&ls, &rs) {
            let mut out = Vec::with_capacity(lv.len());
            for row in lv.chunks_exact(n) {
                out.extend(row.iter().zip(rv.iter()).map(|(&a, &b)| f(a, b)));
            }
            (ls.clone(), out)
        } else if let Some(n) = row_broadcast(&rs, &ls) {
            let mut out = Vec::with_capacity(rv.len());
            for row in rv.chunks_exact(n) {
                out.extend(lv.iter().zip(row.iter()).map(|(&a, &b)| f(a, b)));
            }
            (rs.clone(), out)
        } else {
            return Err(dim_err(name, &ls, &rs));
        };
        drop(lv);
        drop(rv);
        let rg = self.requires_grad() || rhs.requires_grad();
        Ok(Tensor::new_node(out_shape, out, rg, Some(rec(self.clone(), rhs.clone()))))
    }

    pub fn neg(&self) -> Tensor {
        self.unary(|x| -x, OpRecord::Neg {
            input: self.clone(),
        })
    }

    /// Numerically stable logistic function.
    pub fn sigmoid(&self) -> Tensor {
        self.unary(sigmoid_stable, OpRecord::Sigmoid {
            input: self.clone(),
        })
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(f64::tanh, OpRecord::Tanh {
            input: self.clone(),
        })
    }

    pub fn relu(&self) -> Tensor {
        self.unary(|x| x.max(0.0), OpRecord::Relu {
            input: self.clone(),
        })
    }

    /// Natural log; rejects non-positive inputs.
    pub fn log(&self) -> Result<Tensor> {
        if let Some(&bad) = self.values().iter().find(|v| **v <= 0.0) {
            return Err(TensorError::Domain {
                op: "log",
                message: format!("log of non-positive input {bad}"),
            });
        }
        Ok(self.unary(f64::ln, OpRecord::Log {
            input: self.clone(),
        }))
    }

    /// `ln(max(x, floor))` — the guarded form used inside loss functions.
    /// Flat (zero gradient) below the floor.
    pub fn log_clamped(&self, floor: f64) -> Tensor {
        self.unary(move |x| x.max(floor).ln(), OpRecord::LogClamped {
            input: self.clone(),
            floor,
        })
    }

    /// Clamp into the open unit interval (strictly inside (0, 1)); f64
    /// sigmoid rounds to exactly 0.0 or 1.0 for large |x|, which this undoes.
    pub fn clamp_open_unit(&self) -> Tensor {
        self.unary(
            |x| x.clamp(UNIT_INTERVAL_MARGIN, 1.0 - UNIT_INTERVAL_MARGIN),
            OpRecord::ClampUnit {
                input: self.clone(),
            },
        )
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.unary(move |x| x * factor, OpRecord::Scale {
            input: self.clone(),
            factor,
        })
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: OpRecord) -> Tensor {
        let n = self.inner.borrow();
        let out = n.values.iter().map(|&x| f(x)).collect();
        let shape = n.shape.clone();
        let rg = n.requires_grad;
        drop(n);
        Tensor::new_node(shape, out, rg, Some(op))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let total: f64 = self.values().iter().sum();
        Tensor::new_node(vec![1], vec![total], self.requires_grad(), Some(OpRecord::Sum {
            input: self.clone(),
        }))
    }

    /// Mean of all elements, as a scalar tensor.
    pub fn mean(&self) -> Tensor {
        let n = self.len() as f64;
        let total: f64 = self.values().iter().sum();
        Tensor::new_node(vec![1], vec![total / n], self.requires_grad(), Some(OpRecord::Mean {
            input: self.clone(),
        }))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(TensorError::Contract {
                op: "concat",
                message: "no parts given".into(),
            });
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(TensorError::Contract {
                op: "concat",
                message: format!("axis {axis} out of range for rank {}", first.len()),
            });
        }
        let mut axis_total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(first.iter())
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(dim_err("concat", &first, &s));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;

        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for p in parts {
                let v = p.values();
                let extent = p.shape()[axis];
                let block = extent * inner;
                out.extend_from_slice(&v[o * block..(o + 1) * block]);
            }
        }
        let rg = parts.iter().any(|p| p.requires_grad());
        Ok(Tensor::new_node(
            out_shape,
            out,
            rg,
            Some(OpRecord::Concat {
                parts: parts.to_vec(),
                axis,
            }),
        ))
    }

    /// Contiguous slice `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let shape = self.shape();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(TensorError::Contract {
                op: "narrow",
                message: format!("slice {start}..{} out of range on axis {axis} of {shape:?}", start + len),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let extent = shape[axis];
        let v = self.values();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            out.extend_from_slice(&v[base..base + len * inner]);
        }
        drop(v);
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(Tensor::new_node(
            out_shape,
            out,
            self.requires_grad(),
            Some(OpRecord::Narrow {
                input: self.clone(),
                axis,
                start,
            }),
        ))
    }

    /// 2-d transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(TensorError::Contract {
                op: "transpose",
                message: format!("expected rank 2, got {s:?}"),
            });
        }
        let (r, c) = (s[0], s[1]);
        let v = self.values();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        drop(v);
        Ok(Tensor::new_node(
            vec![c, r],
            out,
            self.requires_grad(),
            Some(OpRecord::Transpose {
                input: self.clone(),
            }),
        ))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar root. Gradients accumulate into the
    /// `grad` buffer of every reachable node with `requires_grad`; repeated
    /// calls without zeroing keep accumulating.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(TensorError::Contract {
                op: "backward",
                message: format!("root must be scalar, got shape {:?}", self.shape()),
            });
        }
        let order = topological_order(self);
        let mut local: HashMap<u64, Vec<f64>> = HashMap::new();
        local.insert(self.id(), vec![1.0]);

        for node in order.iter().rev() {
            let Some(g) = local.remove(&node.id()) else {
                continue;
            };
            if node.requires_grad() {
                let mut inner = node.inner.borrow_mut();
                let grad = inner.grad.get_or_insert_with(|| vec![0.0; g.len()]);
                for (acc, gi) in grad.iter_mut().zip(g.iter()) {
                    *acc += gi;
                }
            }
            propagate(node, &g, &mut local);
        }
        Ok(())
    }
}

/// Accumulate `delta` into the local-gradient entry of `t`, skipping paths
/// that cannot reach a tracked leaf.
fn push_local(local: &mut HashMap<u64, Vec<f64>>, t: &Tensor, delta: Vec<f64>) {
    if !t.requires_grad() {
        return;
    }
    match local.entry(t.id()) {
        std::collections::hash_map::Entry::Occupied(mut e) => {
            for (acc, d) in e.get_mut().iter_mut().zip(delta.iter()) {
                *acc += d;
            }
        }
        std::collections::hash_map::Entry::Vacant(e) => {
            e.insert(delta);
        }
    }
}

fn propagate(node: &Tensor, g: &[f64], local: &mut HashMap<u64, Vec<f64>>) {
    let inner = node.inner.borrow();
    let Some(op) = &inner.op else {
        return;
    };
    match op {
        OpRecord::MatMul { lhs, rhs } => {
            let (ls, rs) = (lhs.shape(), rhs.shape());
            let (m, k, n) = (ls[0], ls[1], rs[1]);
            // dL += g · Rᵀ ; dR += Lᵀ · g
            let rt = transpose_raw(&rhs.values(), k, n);
            let dl = matmul_raw(g, &rt, m, n, k);
            let lt = transpose_raw(&lhs.values(), m, k);
            let dr = matmul_raw(&lt, g, k, m, n);
            push_local(local, lhs, dl);
            push_local(local, rhs, dr);
        }
        OpRecord::Add { lhs, rhs } => {
            push_local(local, lhs, reduce_to(g, &inner.shape, &lhs.shape()));
            push_local(local, rhs, reduce_to(g, &inner.shape, &rhs.shape()));
        }
        OpRecord::Sub { lhs, rhs } => {
            push_local(local, lhs, reduce_to(g, &inner.shape, &lhs.shape()));
            let neg: Vec<f64> = g.iter().map(|x| -x).collect();
            push_local(local, rhs, reduce_to(&neg, &inner.shape, &rhs.shape()));
        }
        OpRecord::Mul { lhs, rhs } => {
            let dl = mul_partial(g, &inner.shape, rhs, &lhs.shape());
            let dr = mul_partial(g, &inner.shape, lhs, &rhs.shape());
            push_local(local, lhs, dl);
            push_local(local, rhs, dr);
        }
        OpRecord::Neg { input } => {
            push_local(local, input, g.iter().map(|x| -x).collect());
        }
        OpRecord::Sigmoid { input } => {
            let d = inner
                .values
                .iter()
                .zip(g.iter())
                .map(|(&s, &gi)| gi * s * (1.0 - s))
                .collect();
            push_local(local, input, d);
        }
        OpRecord::Tanh { input } => {
            let d = inner
                .values
                .iter()
                .zip(g.iter())
                .map(|(&t, &gi)| gi * (1.0 - t * t))
                .collect();
            push_local(local, input, d);
        }
        OpRecord::Relu { input } => {
            let iv = input.values();
            let d = iv.iter().zip(g.iter()).map(|(&x, &gi)| if x > 0.0 { gi } else { 0.0 }).collect();
            drop(iv);
            push_local(local, input, d);
        }
        OpRecord::Log { input } => {
            let iv = input.values();
            let d = iv.iter().zip(g.iter()).map(|(&x, &gi)| gi / x).collect();
            drop(iv);
            push_local(local, input, d);
        }
        OpRecord::LogClamped { input, floor } => {
            let iv = input.values();
            let d = iv
                .iter()
                .zip(g.iter())
                .map(|(&x, &gi)| if x > *floor { gi / x } else { 0.0 })
                .collect();
            drop(iv);
            push_local(local, input, d);
        }
        OpRecord::ClampUnit { input } => {
            let iv = input.values();
            let d = iv
                .iter()
                .zip(g.iter())
                .map(|(&x, &gi)| {
                    if (UNIT_INTERVAL_MARGIN..=1.0 - UNIT_INTERVAL_MARGIN).contains(&x) {
                        gi
                    } else {
                        0.0
                    }
                })
                .collect();
            drop(iv);
            push_local(local, input, d);
        }
        OpRecord::Scale { input, factor } => {
            push_local(local, input, g.iter().map(|x| x * factor).collect());
        }
        OpRecord::Sum { input } => {
            push_local(local, input, vec![g[0]; input.len()]);
        }
        OpRecord::Mean { input } => {
            let n = input.len() as f64;
            push_local(local, input, vec![g[0] / n; input.len()]);
        }
        OpRecord::Concat { parts, axis } => {
            let out_shape = &inner.shape;
            let outer: usize = out_shape[..*axis].iter().product();
            let inner_len: usize = out_shape[*axis + 1..].iter().product();
            let total_block = out_shape[*axis] * inner_len;
            let mut offset = 0;
            for p in parts {
                let extent = p.shape()[*axis];
                let block = extent * inner_len;
                let mut d = Vec::with_capacity(p.len());
                for o in 0..outer {
                    let base = o * total_block + offset;
                    d.extend_from_slice(&g[base..base + block]);
                }
                offset += block;
                push_local(local, p, d);
            }
        }
        OpRecord::Narrow { input, axis, start } => {
            let in_shape = input.shape();
            let outer: usize = in_shape[..*axis].iter().product();
            let inner_len: usize = in_shape[*axis + 1..].iter().product();
            let extent = in_shape[*axis];
            let len = inner.shape[*axis];
            let mut d = vec![0.0; input.len()];
            for o in 0..outer {
                let dst = o * extent * inner_len + start * inner_len;
                let src = o * len * inner_len;
                d[dst..dst + len * inner_len].copy_from_slice(&g[src..src + len * inner_len]);
            }
            push_local(local, input, d);
        }
        OpRecord::Transpose { input } => {
            let out_shape = &inner.shape;
            push_local(local, input, transpose_raw(g, out_shape[0], out_shape[1]));
        }
    }
}

/// Post-order over the graph reachable from `root` (parents before
/// consumers); iterative so deep unrolls cannot overflow the stack.
fn topological_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        let inner = node.inner.borrow();
        if let Some(op) = &inner.op {
            for parent in op_parents(op) {
                if !visited.contains(&parent.id()) {
                    stack.push((parent, false));
                }
            }
        }
    }
    order
}

fn op_parents(op: &OpRecord) -> Vec<Tensor> {
    match op {
        OpRecord::MatMul { lhs, rhs }
        | OpRecord::Add { lhs, rhs }
        | OpRecord::Sub { lhs, rhs }
        | OpRecord::Mul { lhs, rhs } => vec![lhs.clone(), rhs.clone()],
        OpRecord::Neg { input }
        | OpRecord::Sigmoid { input }
        | OpRecord::Tanh { input }
        | OpRecord::Relu { input }
        | OpRecord::Log { input }
        | OpRecord::LogClamped { input, .. }
        | OpRecord::ClampUnit { input }
        | OpRecord::Scale { input, .. }
        | OpRecord::Sum { input }
        | OpRecord::Mean { input }
        | OpRecord::Narrow { input, .. }
        | OpRecord::Transpose { input } => vec![input.clone()],
        OpRecord::Concat { parts, .. } => parts.clone(),
    }
}

/// Is `vec_shape` a length-n vector broadcastable over the rows of
/// `mat_shape` = [m, n]? Returns n on success.
fn row_broadcast(mat_shape: &[usize], vec_shape: &[usize]) -> Option<usize> {
    if mat_shape.len() == 2 && vec_shape.len() == 1 && vec_shape[0] == mat_shape[1] {
        Some(mat_shape[1])
    } else {
        None
    }
}

/// Collapse an upstream gradient back onto an operand shape: identity when
/// shapes match, column-sum when the operand was a row-broadcast vector.
fn reduce_to(g: &[f64], out_shape: &[usize], target_shape: &[usize]) -> Vec<f64> {
    if out_shape == target_shape {
        return g.to_vec();
    }
    let n = target_shape[0];
    let mut d = vec![0.0; n];
    for row in g.chunks_exact(n) {
        for (acc, x) in d.iter_mut().zip(row.iter()) {
            *acc += x;
        }
    }
    d
}

/// Partial of a pointwise product w.r.t. one operand: g ⊙ other, reduced to
/// the operand's shape when it was broadcast.
fn mul_partial(g: &[f64], out_shape: &[usize], other: &Tensor, target_shape: &[usize]) -> Vec<f64> {
    let ov = other.values();
    let full: Vec<f64> = if ov.len() == g.len() {
        g.iter().zip(ov.iter()).map(|(&a, &b)| a * b).collect()
    } else {
        // other is the broadcast vector
        let n = ov.len();
        g.chunks_exact(n)
            .flat_map(|row| row.iter().zip(ov.iter()).map(|(&a, &b)| a * b))
            .collect()
    };
    drop(ov);
    reduce_to(&full, out_shape, target_shape)
}

fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
