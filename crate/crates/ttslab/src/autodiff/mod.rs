//! Reverse-mode automatic differentiation over f64 tensors.
//!
//! Every backward rule is itself expressed through the public op set, so a
//! gradient is an ordinary graph value and can be differentiated again.
//! That second-order path is what the gradient-penalty term of the
//! Wasserstein objective relies on.

pub mod functional;

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{ArrayD, Axis, IxDyn, Slice};

#[derive(Debug)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    MatMul,
    SumAll,
    SumAxis { axis: usize },
    BroadcastTo,
    Reshape,
    Permute { axes: Vec<usize> },
    Exp,
    Ln,
    Tanh,
    Sqrt,
    PowConst { p: f64 },
    Relu,
    Slice { axis: usize, start: usize, end: usize },
    PadZero { axis: usize, before: usize, after: usize },
    Concat { axis: usize },
    Unfold { k: usize, stride: usize },
    Fold { k: usize, stride: usize, out_len: usize },
    MaxPool { k: usize, indices: Rc<Vec<usize>> },
    Unpool { k: usize, out_len: usize, indices: Rc<Vec<usize>> },
    PoolPick { k: usize, indices: Rc<Vec<usize>> },
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
    inputs: Vec<usize>,
    requires_grad: bool,
}

/// Computation tape. Cheap to clone (shared handle).
#[derive(Clone)]
pub struct Graph {
    nodes: Rc<RefCell<Vec<Node>>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one value on the tape.
#[derive(Clone)]
pub struct Var {
    graph: Graph,
    id: usize,
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let ndim = a.len().max(b.len());
    let mut out = vec![0usize; ndim];
    for i in 0..ndim {
        let da = if i < ndim - a.len() { 1 } else { a[i - (ndim - a.len())] };
        let db = if i < ndim - b.len() { 1 } else { b[i - (ndim - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "cannot broadcast shapes {a:?} and {b:?}"
        );
        out[i] = da.max(db);
    }
    out
}

fn bcast(v: &ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    v.broadcast(IxDyn(shape))
        .unwrap_or_else(|| panic!("cannot broadcast {:?} to {shape:?}", v.shape()))
        .as_standard_layout()
        .to_owned()
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Rc::new(RefCell::new(Vec::new())) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: ArrayD<f64>, op: Op, inputs: Vec<usize>) -> Var {
        let requires_grad = match op {
            Op::Leaf => false, // set by leaf()
            _ => {
                let nodes = self.nodes.borrow();
                inputs.iter().any(|&i| nodes[i].requires_grad)
            }
        };
        self.push_with(value, op, inputs, requires_grad)
    }

    fn push_with(&self, value: ArrayD<f64>, op: Op, inputs: Vec<usize>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, op, inputs, requires_grad });
        Var { graph: self.clone(), id }
    }

    /// Differentiable input.
    pub fn leaf(&self, value: ArrayD<f64>) -> Var {
        self.push_with(value, Op::Leaf, vec![], true)
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: ArrayD<f64>) -> Var {
        self.push_with(value, Op::Leaf, vec![], false)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn concat(&self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let values: Vec<ArrayD<f64>> = parts.iter().map(|p| p.value()).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch");
        self.push(out, Op::Concat { axis }, parts.iter().map(|p| p.id).collect())
    }
}

impl Var {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn value(&self) -> ArrayD<f64> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn scalar_value(&self) -> f64 {
        let nodes = self.graph.nodes.borrow();
        let v = &nodes[self.id].value;
        assert_eq!(v.len(), 1, "scalar_value on non-scalar of shape {:?}", v.shape());
        *v.iter().next().unwrap()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, severed from the tape.
    pub fn detach(&self) -> Var {
        self.graph.constant(self.value())
    }

    fn unary(&self, op: Op, value: ArrayD<f64>) -> Var {
        self.graph.push(value, op, vec![self.id])
    }

    fn binary(&self, other: &Var, op: Op, value: ArrayD<f64>) -> Var {
        assert!(Rc::ptr_eq(&self.graph.nodes, &other.graph.nodes), "vars from different graphs");
        self.graph.push(value, op, vec![self.id, other.id])
    }

    pub fn add(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape(a.shape(), b.shape());
        self.binary(other, Op::Add, bcast(&a, &shape) + bcast(&b, &shape))
    }

    pub fn sub(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape(a.shape(), b.shape());
        self.binary(other, Op::Sub, bcast(&a, &shape) - bcast(&b, &shape))
    }

    pub fn mul(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape(a.shape(), b.shape());
        self.binary(other, Op::Mul, bcast(&a, &shape) * bcast(&b, &shape))
    }

    pub fn div(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape(a.shape(), b.shape());
        self.binary(other, Op::Div, bcast(&a, &shape) / bcast(&b, &shape))
    }

    pub fn neg(&self) -> Var {
        self.unary(Op::Neg, -self.value())
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.add(&self.graph.scalar(c))
    }

    pub fn mul_scalar(&self, c: f64) -> Var {
        self.mul(&self.graph.scalar(c))
    }

    /// Batched matrix product `(..., m, k) @ (..., k, n)` with numpy-style
    /// broadcasting of the leading axes.
    pub fn matmul(&self, other: &Var) -> Var {
        let a = self.value();
        let b = other.value();
        assert!(a.ndim() >= 2 && b.ndim() >= 2, "matmul needs >= 2 dims");
        let (m, ka) = (a.shape()[a.ndim() - 2], a.shape()[a.ndim() - 1]);
        let (kb, n) = (b.shape()[b.ndim() - 2], b.shape()[b.ndim() - 1]);
        assert_eq!(ka, kb, "matmul inner dims: {:?} @ {:?}", a.shape(), b.shape());
        let lead = broadcast_shape(&a.shape()[..a.ndim() - 2], &b.shape()[..b.ndim() - 2]);
        let batch: usize = lead.iter().product();

        let mut ash = lead.clone();
        ash.extend([m, ka]);
        let mut bsh = lead.clone();
        bsh.extend([kb, n]);
        let af = bcast(&a, &ash).into_shape_with_order((batch, m, ka)).unwrap();
        let bf = bcast(&b, &bsh).into_shape_with_order((batch, kb, n)).unwrap();
        let mut out = ndarray::Array3::<f64>::zeros((batch, m, n));
        for i in 0..batch {
            out.index_axis_mut(Axis(0), i)
                .assign(&af.index_axis(Axis(0), i).dot(&bf.index_axis(Axis(0), i)));
        }
        let mut osh = lead;
        osh.extend([m, n]);
        let out = out.into_shape_with_order(IxDyn(&osh)).unwrap();
        self.binary(other, Op::MatMul, out)
    }

    pub fn sum_all(&self) -> Var {
        let v = ArrayD::from_elem(IxDyn(&[]), self.value().sum());
        self.unary(Op::SumAll, v)
    }

    pub fn mean_all(&self) -> Var {
        let count = self.shape().iter().product::<usize>() as f64;
        self.sum_all().mul_scalar(1.0 / count)
    }

    /// Sums out one axis (the axis is removed).
    pub fn sum_axis(&self, axis: usize) -> Var {
        self.unary(Op::SumAxis { axis }, self.value().sum_axis(Axis(axis)))
    }

    pub fn mean_axis(&self, axis: usize) -> Var {
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis).mul_scalar(1.0 / n)
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Var {
        self.unary(Op::BroadcastTo, bcast(&self.value(), shape))
    }

    /// Sums a broadcast value back down to `shape` (adjoint of broadcast).
    pub fn sum_to(&self, shape: &[usize]) -> Var {
        let mut cur = self.clone();
        while cur.shape().len() > shape.len() {
            cur = cur.sum_axis(0);
        }
        let cur_shape = cur.shape();
        for (axis, (&have, &want)) in cur_shape.iter().zip(shape.iter()).enumerate().rev() {
            if have != want {
                assert_eq!(want, 1, "sum_to {:?} -> {shape:?}", cur_shape);
                cur = cur.sum_axis(axis).reshape_keep(axis, shape);
            }
        }
        if cur.shape() != shape {
            cur = cur.reshape(shape);
        }
        cur
    }

    fn reshape_keep(&self, _axis: usize, shape: &[usize]) -> Var {
        // After summing an axis away we restore it as a length-1 dim by a
        // plain reshape to the final target when done; interim shape is fine.
        let mut s = self.shape();
        s.insert(_axis, 1);
        let _ = shape;
        self.reshape(&s)
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let v = self
            .value()
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .unwrap_or_else(|e| panic!("reshape to {shape:?}: {e}"));
        self.unary(Op::Reshape, v)
    }

    pub fn permute(&self, axes: &[usize]) -> Var {
        let v = self.value().permuted_axes(IxDyn(axes)).as_standard_layout().to_owned();
        self.unary(Op::Permute { axes: axes.to_vec() }, v)
    }

    /// Swaps the last two axes.
    pub fn swap_last(&self) -> Var {
        let n = self.shape().len();
        let mut axes: Vec<usize> = (0..n).collect();
        axes.swap(n - 2, n - 1);
        self.permute(&axes)
    }

    pub fn exp(&self) -> Var {
        self.unary(Op::Exp, self.value().mapv(f64::exp))
    }

    pub fn ln(&self) -> Var {
        self.unary(Op::Ln, self.value().mapv(f64::ln))
    }

    pub fn tanh(&self) -> Var {
        self.unary(Op::Tanh, self.value().mapv(f64::tanh))
    }

    pub fn sqrt(&self) -> Var {
        self.unary(Op::Sqrt, self.value().mapv(f64::sqrt))
    }

    pub fn powf(&self, p: f64) -> Var {
        self.unary(Op::PowConst { p }, self.value().mapv(|x| x.powf(p)))
    }

    pub fn square(&self) -> Var {
        self.mul(self)
    }

    pub fn relu(&self) -> Var {
        self.unary(Op::Relu, self.value().mapv(|x| x.max(0.0)))
    }

    pub fn slice_axis(&self, axis: usize, start: usize, end: usize) -> Var {
        let v = self
            .value()
            .slice_axis(Axis(axis), Slice::from(start..end))
            .as_standard_layout()
            .to_owned();
        self.unary(Op::Slice { axis, start, end }, v)
    }

    pub fn pad_zero(&self, axis: usize, before: usize, after: usize) -> Var {
        let v = self.value();
        let mut shape = v.shape().to_vec();
        shape[axis] += before + after;
        let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
        out.slice_axis_mut(Axis(axis), Slice::from(before..before + v.shape()[axis]))
            .assign(&v);
        self.unary(Op::PadZero { axis, before, after }, out)
    }

    /// `(..., L)` -> `(..., frames, k)` sliding windows over the last axis.
    pub fn unfold_last(&self, k: usize, stride: usize) -> Var {
        let v = self.value();
        let l = *v.shape().last().unwrap();
        assert!(l >= k, "unfold window {k} longer than axis {l}");
        let frames = (l - k) / stride + 1;
        let lead: usize = v.shape()[..v.ndim() - 1].iter().product();
        let flat = v.as_standard_layout();
        let flat = flat.as_slice().unwrap();
        let mut out = Vec::with_capacity(lead * frames * k);
        for row in 0..lead {
            let base = row * l;
            for f in 0..frames {
                let s = base + f * stride;
                out.extend_from_slice(&flat[s..s + k]);
            }
        }
        let mut shape = v.shape()[..v.ndim() - 1].to_vec();
        shape.extend([frames, k]);
        let out = ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap();
        self.unary(Op::Unfold { k, stride }, out)
    }

    /// Adjoint of [`Var::unfold_last`]: overlap-adds `(..., frames, k)` back
    /// to `(..., out_len)`.
    pub fn fold_last(&self, k: usize, stride: usize, out_len: usize) -> Var {
        let v = self.value();
        let nd = v.ndim();
        assert_eq!(v.shape()[nd - 1], k);
        let frames = v.shape()[nd - 2];
        let lead: usize = v.shape()[..nd - 2].iter().product();
        let flat = v.as_standard_layout();
        let flat = flat.as_slice().unwrap();
        let mut out = vec![0.0f64; lead * out_len];
        for row in 0..lead {
            for f in 0..frames {
                let dst = row * out_len + f * stride;
                let src = (row * frames + f) * k;
                for j in 0..k {
                    out[dst + j] += flat[src + j];
                }
            }
        }
        let mut shape = v.shape()[..nd - 2].to_vec();
        shape.push(out_len);
        let out = ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap();
        self.unary(Op::Fold { k, stride, out_len }, out)
    }

    /// Non-overlapping max pooling over the last axis (trailing remainder
    /// is dropped).
    pub fn maxpool_last(&self, k: usize) -> Var {
        let v = self.value();
        let nd = v.ndim();
        let l = v.shape()[nd - 1];
        let pooled = l / k;
        let lead: usize = v.shape()[..nd - 1].iter().product();
        let flat = v.as_standard_layout();
        let flat = flat.as_slice().unwrap();
        let mut out = Vec::with_capacity(lead * pooled);
        let mut indices = Vec::with_capacity(lead * pooled);
        for row in 0..lead {
            for p in 0..pooled {
                let base = row * l + p * k;
                let mut best = 0usize;
                for j in 1..k {
                    if flat[base + j] > flat[base + best] {
                        best = j;
                    }
                }
                out.push(flat[base + best]);
                indices.push(best);
            }
        }
        let mut shape = v.shape()[..nd - 1].to_vec();
        shape.push(pooled);
        let out = ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap();
        self.unary(Op::MaxPool { k, indices: Rc::new(indices) }, out)
    }

    fn unpool(&self, k: usize, out_len: usize, indices: Rc<Vec<usize>>) -> Var {
        let v = self.value();
        let nd = v.ndim();
        let pooled = v.shape()[nd - 1];
        let lead: usize = v.shape()[..nd - 1].iter().product();
        let flat = v.as_standard_layout();
        let flat = flat.as_slice().unwrap();
        let mut out = vec![0.0f64; lead * out_len];
        for row in 0..lead {
            for p in 0..pooled {
                out[row * out_len + p * k + indices[row * pooled + p]] = flat[row * pooled + p];
            }
        }
        let mut shape = v.shape()[..nd - 1].to_vec();
        shape.push(out_len);
        let out = ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap();
        self.unary(Op::Unpool { k, out_len, indices }, out)
    }

    fn pool_pick(&self, k: usize, indices: Rc<Vec<usize>>) -> Var {
        let v = self.value();
        let nd = v.ndim();
        let l = v.shape()[nd - 1];
        let pooled = l / k;
        let lead: usize = v.shape()[..nd - 1].iter().product();
        let flat = v.as_standard_layout();
        let flat = flat.as_slice().unwrap();
        let mut out = Vec::with_capacity(lead * pooled);
        for row in 0..lead {
            for p in 0..pooled {
                out.push(flat[row * l + p * k + indices[row * pooled + p]]);
            }
        }
        let mut shape = v.shape()[..nd - 1].to_vec();
        shape.push(pooled);
        let out = ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap();
        self.unary(Op::PoolPick { k, indices }, out)
    }
}

/// Reverse-mode gradients of `output` with respect to `wrt`.
///
/// Non-scalar outputs are seeded with ones, i.e. the result is the gradient
/// of `output.sum_all()`. Returned gradients are graph values, so they can
/// be differentiated again.
pub fn grad(output: &Var, wrt: &[Var]) -> Vec<Option<Var>> {
    let g = output.graph.clone();
    let n_at_entry = g.len();

    // Reverse topological order via iterative DFS restricted to the
    // grad-requiring subgraph.
    let order = {
        let nodes = g.nodes.borrow();
        let mut visited = vec![false; n_at_entry];
        let mut order: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, bool)> = vec![(output.id, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                order.push(id);
                continue;
            }
            if visited[id] || !nodes[id].requires_grad {
                continue;
            }
            visited[id] = true;
            stack.push((id, true));
            for &inp in &nodes[id].inputs {
                stack.push((inp, false));
            }
        }
        order
    };

    let mut grads: HashMap<usize, Var> = HashMap::new();
    let seed = g.constant(ArrayD::ones(IxDyn(&output.shape())));
    grads.insert(output.id, seed);

    for &id in order.iter().rev() {
        let gv = match grads.get(&id) {
            Some(v) => v.clone(),
            None => continue,
        };
        // Snapshot node metadata to keep borrows short.
        enum Rule {
            None,
            One(usize, Var),
            Two((usize, Var), (usize, Var)),
            Many(Vec<(usize, Var)>),
        }
        let inputs: Vec<usize>;
        let rule: Rule;
        {
            let (op_data, inps) = {
                let nodes = g.nodes.borrow();
                let node = &nodes[id];
                (snapshot(&node.op), node.inputs.clone())
            };
            inputs = inps;
            let ivars: Vec<Var> = inputs.iter().map(|&i| Var { graph: g.clone(), id: i }).collect();
            let out_var = Var { graph: g.clone(), id };
            rule = vjp(&op_data, &gv, &ivars, &out_var);
        }
        let mut push = |inp: usize, contrib: Var| {
            let requires = g.nodes.borrow()[inp].requires_grad;
            if !requires {
                return;
            }
            match grads.remove(&inp) {
                Some(existing) => {
                    grads.insert(inp, existing.add(&contrib));
                }
                None => {
                    grads.insert(inp, contrib);
                }
            }
        };
        match rule {
            Rule::None => {}
            Rule::One(i, v) => push(inputs[i], v),
            Rule::Two((i, v), (j, u)) => {
                push(inputs[i], v);
                push(inputs[j], u);
            }
            Rule::Many(items) => {
                for (i, v) in items {
                    push(inputs[i], v);
                }
            }
        }

        #[allow(clippy::too_many_lines)]
        fn vjp(op: &OpData, gv: &Var, x: &[Var], out: &Var) -> Rule {
            match op {
                OpData::Leaf => Rule::None,
                OpData::Add => Rule::Two(
                    (0, gv.sum_to(&x[0].shape())),
                    (1, gv.sum_to(&x[1].shape())),
                ),
                OpData::Sub => Rule::Two(
                    (0, gv.sum_to(&x[0].shape())),
                    (1, gv.neg().sum_to(&x[1].shape())),
                ),
                OpData::Mul => Rule::Two(
                    (0, gv.mul(&x[1]).sum_to(&x[0].shape())),
                    (1, gv.mul(&x[0]).sum_to(&x[1].shape())),
                ),
                OpData::Div => Rule::Two(
                    (0, gv.div(&x[1]).sum_to(&x[0].shape())),
                    (1, gv.mul(out).div(&x[1]).neg().sum_to(&x[1].shape())),
                ),
                OpData::Neg => Rule::One(0, gv.neg()),
                OpData::MatMul => Rule::Two(
                    (0, gv.matmul(&x[1].swap_last()).sum_to(&x[0].shape())),
                    (1, x[0].swap_last().matmul(gv).sum_to(&x[1].shape())),
                ),
                OpData::SumAll => Rule::One(0, gv.broadcast_to(&x[0].shape())),
                OpData::SumAxis { axis } => {
                    let mut keep = gv.shape();
                    keep.insert(*axis, 1);
                    Rule::One(0, gv.reshape(&keep).broadcast_to(&x[0].shape()))
                }
                OpData::BroadcastTo => Rule::One(0, gv.sum_to(&x[0].shape())),
                OpData::Reshape => Rule::One(0, gv.reshape(&x[0].shape())),
                OpData::Permute { axes } => {
                    let mut inv = vec![0usize; axes.len()];
                    for (i, &a) in axes.iter().enumerate() {
                        inv[a] = i;
                    }
                    Rule::One(0, gv.permute(&inv))
                }
                OpData::Exp => Rule::One(0, gv.mul(out)),
                OpData::Ln => Rule::One(0, gv.div(&x[0])),
                OpData::Tanh => {
                    let one = gv.graph.scalar(1.0);
                    Rule::One(0, gv.mul(&one.sub(&out.mul(out))))
                }
                OpData::Sqrt => Rule::One(0, gv.mul_scalar(0.5).div(out)),
                OpData::PowConst { p } => {
                    Rule::One(0, gv.mul_scalar(*p).mul(&x[0].powf(p - 1.0)))
                }
                OpData::Relu => {
                    let mask = gv.graph.constant(x[0].value().mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
                    Rule::One(0, gv.mul(&mask))
                }
                OpData::Slice { axis, start, end } => {
                    let full = x[0].shape()[*axis];
                    Rule::One(0, gv.pad_zero(*axis, *start, full - end))
                }
                OpData::PadZero { axis, before, .. } => {
                    let orig = x[0].shape()[*axis];
                    Rule::One(0, gv.slice_axis(*axis, *before, before + orig))
                }
                OpData::Concat { axis } => {
                    let mut items = Vec::with_capacity(x.len());
                    let mut offset = 0usize;
                    for (i, xi) in x.iter().enumerate() {
                        let len = xi.shape()[*axis];
                        items.push((i, gv.slice_axis(*axis, offset, offset + len)));
                        offset += len;
                    }
                    Rule::Many(items)
                }
                OpData::Unfold { k, stride } => {
                    let out_len = *x[0].shape().last().unwrap();
                    Rule::One(0, gv.fold_last(*k, *stride, out_len))
                }
                OpData::Fold { k, stride, .. } => Rule::One(0, gv.unfold_last(*k, *stride)),
                OpData::MaxPool { k, indices } => {
                    let out_len = *x[0].shape().last().unwrap();
                    Rule::One(0, gv.unpool(*k, out_len, indices.clone()))
                }
                OpData::Unpool { k, indices, .. } => Rule::One(0, gv.pool_pick(*k, indices.clone())),
                OpData::PoolPick { k, indices } => {
                    let out_len = *x[0].shape().last().unwrap();
                    Rule::One(0, gv.unpool(*k, out_len, indices.clone()))
                }
            }
        }
    }

    wrt.iter().map(|w| grads.get(&w.id).cloned()).collect()
}

/// Cloneable snapshot of op metadata used by the backward rules. Some
/// variants mirror fields of [`Op`] that only the forward pass consumes.
#[allow(dead_code)]
enum OpData {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    MatMul,
    SumAll,
    SumAxis { axis: usize },
    BroadcastTo,
    Reshape,
    Permute { axes: Vec<usize> },
    Exp,
    Ln,
    Tanh,
    Sqrt,
    PowConst { p: f64 },
    Relu,
    Slice { axis: usize, start: usize, end: usize },
    PadZero { axis: usize, before: usize, after: usize },
    Concat { axis: usize },
    Unfold { k: usize, stride: usize },
    Fold { k: usize, stride: usize, out_len: usize },
    MaxPool { k: usize, indices: Rc<Vec<usize>> },
    Unpool { k: usize, out_len: usize, indices: Rc<Vec<usize>> },
    PoolPick { k: usize, indices: Rc<Vec<usize>> },
}

fn snapshot(op: &Op) -> OpData {
    match op {
        Op::Leaf => OpData::Leaf,
        Op::Add => OpData::Add,
        Op::Sub => OpData::Sub,
        Op::Mul => OpData::Mul,
        Op::Div => OpData::Div,
        Op::Neg => OpData::Neg,
        Op::MatMul => OpData::MatMul,
        Op::SumAll => OpData::SumAll,
        Op::SumAxis { axis } => OpData::SumAxis { axis: *axis },
        Op::BroadcastTo => OpData::BroadcastTo,
        Op::Reshape => OpData::Reshape,
        Op::Permute { axes } => OpData::Permute { axes: axes.clone() },
        Op::Exp => OpData::Exp,
        Op::Ln => OpData::Ln,
        Op::Tanh => OpData::Tanh,
        Op::Sqrt => OpData::Sqrt,
        Op::PowConst { p } => OpData::PowConst { p: *p },
        Op::Relu => OpData::Relu,
        Op::Slice { axis, start, end } => OpData::Slice { axis: *axis, start: *start, end: *end },
        Op::PadZero { axis, before, after } => {
            OpData::PadZero { axis: *axis, before: *before, after: *after }
        }
        Op::Concat { axis } => OpData::Concat { axis: *axis },
        Op::Unfold { k, stride } => OpData::Unfold { k: *k, stride: *stride },
        Op::Fold { k, stride, out_len } => {
            OpData::Fold { k: *k, stride: *stride, out_len: *out_len }
        }
        Op::MaxPool { k, indices } => OpData::MaxPool { k: *k, indices: indices.clone() },
        Op::Unpool { k, out_len, indices } => {
            OpData::Unpool { k: *k, out_len: *out_len, indices: indices.clone() }
        }
        Op::PoolPick { k, indices } => OpData::PoolPick { k: *k, indices: indices.clone() },
    }
}

#[cfg(test)]
mod tests;
