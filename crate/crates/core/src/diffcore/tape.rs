use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DiffError, RealArray};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearity applied by hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the input `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(format!("unknown activation `{other}` (expected tanh, relu or identity)")),
        }
    }
}

#[derive(Clone, Debug)]
enum Leaf {
    Input(String),
    Param(String),
    Constant,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf(Leaf),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `(m×k)·(k×n)`
    MatMul(Var, Var),
    /// `(m×k)·(n×k)ᵀ`
    MatMulT(Var, Var),
    /// `x·wᵀ + b`, bias broadcast over rows.
    Affine { x: Var, w: Var, b: Var },
    Act(Var, Activation),
    Square(Var),
    Abs(Var),
    Sum(Var),
    /// Weighted sum of same-shape arrays.
    Combine(Vec<(Var, f64)>),
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize, end: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf(Leaf::Input(_)) => "input",
            Op::Leaf(Leaf::Param(_)) => "param",
            Op::Leaf(Leaf::Constant) => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Affine { .. } => "affine",
            Op::Act(..) => "activation",
            Op::Square(_) => "square",
            Op::Abs(_) => "abs",
            Op::Sum(_) => "sum",
            Op::Combine(_) => "combine",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: RealArray,
}

/// Append-only record of a differentiable computation.
///
/// Values are computed eagerly as nodes are recorded (define-by-run), so
/// [`Tape::value`] is available immediately. [`Tape::forward`] re-evaluates the
/// whole record after rebinding leaves, which is how finite-difference checks
/// perturb parameters without rebuilding the graph.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

/// Gradients produced by one backward pass, indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(String, Var)>,
}

impl Gradients {
    /// Gradient with respect to `var`; all-zero when the node was not reached.
    pub fn wrt(&self, var: Var) -> RealArray {
        let shape = self.shapes[var.0].clone();
        match &self.grads[var.0] {
            Some(g) => RealArray::from_parts(shape, g.clone()),
            None => RealArray::zeros(shape),
        }
    }

    /// Gradient of a parameter leaf by its registered name.
    pub fn named(&self, name: &str) -> Option<RealArray> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| self.wrt(*v))
    }

    /// Every registered parameter with its gradient, in registration order.
    pub fn params(&self) -> Vec<(String, RealArray)> {
        self.params.iter().map(|(n, v)| (n.clone(), self.wrt(*v))).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that rejects any non-finite intermediate value.
    pub fn checked() -> Self {
        Self { nodes: Vec::new(), checked: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &RealArray {
        &self.nodes[var.0].value
    }

    /// The most recently recorded node.
    pub fn output(&self) -> Option<Var> {
        self.nodes.len().checked_sub(1).map(Var)
    }

    pub fn input(&mut self, name: impl Into<String>, value: RealArray) -> Var {
        self.push_leaf(Leaf::Input(name.into()), value)
    }

    pub fn param(&mut self, name: impl Into<String>, value: RealArray) -> Var {
        self.push_leaf(Leaf::Param(name.into()), value)
    }

    pub fn constant(&mut self, value: RealArray) -> Var {
        self.push_leaf(Leaf::Constant, value)
    }

    fn push_leaf(&mut self, leaf: Leaf, value: RealArray) -> Var {
        self.nodes.push(Node { op: Op::Leaf(leaf), value });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var, DiffError> {
        let index = self.nodes.len();
        let value = self.eval(&op, index)?;
        self.nodes.push(Node { op, value });
        Ok(Var(index))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, DiffError> {
        self.push(Op::Scale(a, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::MatMul(a, b))
    }

    /// `a·bᵀ` without materializing the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::MatMulT(a, b))
    }

    /// Dense layer `x·wᵀ + b` for row-stacked inputs `x`, weights `w` of
    /// shape `out×in` and bias `b` of length `out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::Affine { x, w, b })
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var, DiffError> {
        self.push(Op::Act(a, act))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Act(a, Activation::Tanh))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Square(a))
    }

    /// Elementwise `|a|`; the subgradient at 0 is 0.
    pub fn abs(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Abs(a))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Sum(a))
    }

    /// `Σ wᵢ·aᵢ` over arrays of identical shape.
    pub fn combine(&mut self, terms: &[(Var, f64)]) -> Result<Var, DiffError> {
        self.push(Op::Combine(terms.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        self.push(Op::ConcatRows(parts.to_vec()))
    }

    /// Rows `start..end` of a 2-D array.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        self.push(Op::SliceRows { x, start, end })
    }

    /// Smallest `|x|` fed into any `abs` node, or `+∞` if there is none.
    ///
    /// Finite-difference checks are only meaningful away from the kink.
    pub fn min_abs_input(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Abs(a) => Some(&self.nodes[a.0].value),
                _ => None,
            })
            .flat_map(|v| v.data().iter().map(|x| x.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Rebinds named inputs/params and re-evaluates every node. Returns the
    /// value of the last node.
    pub fn forward(&mut self, bindings: &HashMap<String, RealArray>) -> Result<&RealArray, DiffError> {
        for (name, value) in bindings {
            let idx = self
                .nodes
                .iter()
                .position(|n| matches!(&n.op, Op::Leaf(Leaf::Input(s) | Leaf::Param(s)) if s == name))
                .ok_or_else(|| DiffError::UnboundInput(name.clone()))?;
            self.set_leaf(Var(idx), value.clone())?;
        }
        self.recompute()?;
        self.nodes
            .last()
            .map(|n| &n.value)
            .ok_or_else(|| DiffError::Contract("forward on an empty tape".into()))
    }

    pub(crate) fn set_leaf(&mut self, var: Var, value: RealArray) -> Result<(), DiffError> {
        let node = &mut self.nodes[var.0];
        if !matches!(node.op, Op::Leaf(_)) {
            return Err(DiffError::Contract(format!("node {} is not a leaf", var.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(DiffError::ShapeMismatch {
                node: var.0,
                op: node.op.name(),
                detail: format!("rebinding {:?} with {:?}", node.value.shape(), value.shape()),
            });
        }
        node.value = value;
        Ok(())
    }

    pub(crate) fn leaf_value_mut(&mut self, var: Var) -> &mut RealArray {
        &mut self.nodes[var.0].value
    }

    pub(crate) fn recompute(&mut self) -> Result<(), DiffError> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf(_)) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op, i)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    fn mismatch(node: usize, op: &Op, detail: String) -> DiffError {
        DiffError::ShapeMismatch { node, op: op.name(), detail }
    }

    fn eval(&self, op: &Op, node: usize) -> Result<RealArray, DiffError> {
        let v = |var: Var| -> Result<&RealArray, DiffError> {
            if var.0 >= node {
                return Err(DiffError::Contract(format!(
                    "node {node} references node {} which does not precede it",
                    var.0
                )));
            }
            Ok(&self.nodes[var.0].value)
        };
        let dims = |var: Var, what: &str| -> Result<(usize, usize), DiffError> {
            v(var)?.dims2().ok_or_else(|| {
                Self::mismatch(node, op, format!("{what} must be 2-D, got {:?}", self.nodes[var.0].value.shape()))
            })
        };
        let out = match op {
            Op::Leaf(_) => return Err(DiffError::Contract("leaves are not evaluated".into())),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (v(*a)?, v(*b)?);
                if x.shape() != y.shape() {
                    return Err(Self::mismatch(node, op, format!("{:?} vs {:?}", x.shape(), y.shape())));
                }
                let data = match op {
                    Op::Add(..) => x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect(),
                    Op::Sub(..) => x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect(),
                    _ => x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect(),
                };
                RealArray::from_parts(x.shape().to_vec(), data)
            }
            Op::Scale(a, c) => {
                let x = v(*a)?;
                RealArray::from_parts(x.shape().to_vec(), x.data().iter().map(|p| p * c).collect())
            }
            Op::MatMul(a, b) => {
                let (m, k) = dims(*a, "left operand")?;
                let (k2, n) = dims(*b, "right operand")?;
                if k != k2 {
                    return Err(Self::mismatch(node, op, format!("inner extents {k} vs {k2}")));
                }
                let mut out = vec![0.0; m * n];
                matmul_into(v(*a)?.data(), v(*b)?.data(), &mut out, m, k, n);
                RealArray::from_parts(vec![m, n], out)
            }
            Op::MatMulT(a, b) => {
                let (m, k) = dims(*a, "left operand")?;
                let (n, k2) = dims(*b, "right operand")?;
                if k != k2 {
                    return Err(Self::mismatch(node, op, format!("inner extents {k} vs {k2}")));
                }
                let mut out = vec![0.0; m * n];
                matmul_t_into(v(*a)?.data(), v(*b)?.data(), &mut out, m, k, n);
                RealArray::from_parts(vec![m, n], out)
            }
            Op::Affine { x, w, b } => {
                let (m, k) = dims(*x, "input")?;
                let (n, k2) = dims(*w, "weight")?;
                if k != k2 {
                    return Err(Self::mismatch(node, op, format!("input width {k} vs weight width {k2}")));
                }
                let bias = v(*b)?;
                if bias.len() != n {
                    return Err(Self::mismatch(node, op, format!("bias length {} vs {n} outputs", bias.len())));
                }
                let mut out = Vec::with_capacity(m * n);
                for _ in 0..m {
                    out.extend_from_slice(bias.data());
                }
                matmul_t_into(v(*x)?.data(), v(*w)?.data(), &mut out, m, k, n);
                RealArray::from_parts(vec![m, n], out)
            }
            Op::Act(a, act) => {
                let x = v(*a)?;
                RealArray::from_parts(x.shape().to_vec(), x.data().iter().map(|p| act.apply(*p)).collect())
            }
            Op::Square(a) => {
                let x = v(*a)?;
                RealArray::from_parts(x.shape().to_vec(), x.data().iter().map(|p| p * p).collect())
            }
            Op::Abs(a) => {
                let x = v(*a)?;
                RealArray::from_parts(x.shape().to_vec(), x.data().iter().map(|p| p.abs()).collect())
            }
            Op::Sum(a) => RealArray::scalar(v(*a)?.data().iter().sum()),
            Op::Combine(terms) => {
                let (first, _) = terms
                    .first()
                    .ok_or_else(|| Self::mismatch(node, op, "no terms to combine".into()))?;
                let shape = v(*first)?.shape().to_vec();
                let mut out = vec![0.0; v(*first)?.len()];
                for (var, w) in terms {
                    let x = v(*var)?;
                    if x.shape() != shape.as_slice() {
                        return Err(Self::mismatch(node, op, format!("{:?} vs {:?}", x.shape(), shape)));
                    }
                    for (o, p) in out.iter_mut().zip(x.data()) {
                        *o += w * p;
                    }
                }
                RealArray::from_parts(shape, out)
            }
            Op::ConcatRows(parts) => {
                let (_, cols) = dims(
                    *parts
                        .first()
                        .ok_or_else(|| Self::mismatch(node, op, "no parts to concatenate".into()))?,
                    "part",
                )?;
                let mut rows = 0;
                let mut out = Vec::new();
                for p in parts {
                    let (r, c) = dims(*p, "part")?;
                    if c != cols {
                        return Err(Self::mismatch(node, op, format!("column counts {c} vs {cols}")));
                    }
                    rows += r;
                    out.extend_from_slice(v(*p)?.data());
                }
                RealArray::from_parts(vec![rows, cols], out)
            }
            Op::SliceRows { x, start, end } => {
                let (rows, cols) = dims(*x, "input")?;
                if start > end || *end > rows {
                    return Err(Self::mismatch(node, op, format!("rows {start}..{end} out of 0..{rows}")));
                }
                RealArray::from_parts(vec![end - start, cols], v(*x)?.data()[start * cols..end * cols].to_vec())
            }
        };
        if self.checked && !out.is_finite() {
            return Err(DiffError::NonFinite { node, op: op.name() });
        }
        Ok(out)
    }

    /// Reverse pass from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients, DiffError> {
        let value = self.value(output);
        if !value.is_scalar() {
            return Err(DiffError::NonScalarOutput { node: output.0, shape: value.shape().to_vec() });
        }
        self.backward_seeded(&[(output, RealArray::from_parts(value.shape().to_vec(), vec![1.0]))])
    }

    /// Reverse pass from arbitrary upstream gradients (vector-Jacobian
    /// products). Seeds on the same node accumulate.
    pub fn backward_seeded(&self, seeds: &[(Var, RealArray)]) -> Result<Gradients, DiffError> {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut top = 0;
        for (var, seed) in seeds {
            let node = self.nodes.get(var.0).ok_or_else(|| DiffError::Contract(format!("unknown node {}", var.0)))?;
            if node.value.shape() != seed.shape() {
                return Err(Self::mismatch(
                    var.0,
                    &node.op,
                    format!("seed shape {:?} vs node shape {:?}", seed.shape(), node.value.shape()),
                ));
            }
            accumulate(&mut grads[var.0], seed.data());
            top = top.max(var.0 + 1);
        }

        for i in (0..top).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |var: Var| self.nodes[var.0].value.data();
            match &node.op {
                Op::Leaf(_) => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut grads[b.0], &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(val(*b)).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(val(*a)).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.nodes[a.0].value.dims2().expect("checked at record time");
                    let n = node.value.dims2().expect("2-D").1;
                    // da = g·bᵀ, db = aᵀ·g
                    let mut ga = vec![0.0; m * k];
                    matmul_t_into(&g, val(*b), &mut ga, m, n, k);
                    let mut gb = vec![0.0; k * n];
                    matmul_tn_into(val(*a), &g, &mut gb, m, k, n);
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::MatMulT(a, b) => {
                    let (m, k) = self.nodes[a.0].value.dims2().expect("checked at record time");
                    let n = node.value.dims2().expect("2-D").1;
                    // da = g·b, db = gᵀ·a
                    let mut ga = vec![0.0; m * k];
                    matmul_into(&g, val(*b), &mut ga, m, n, k);
                    let mut gb = vec![0.0; n * k];
                    matmul_tn_into(&g, val(*a), &mut gb, m, n, k);
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Affine { x, w, b } => {
                    let (m, k) = self.nodes[x.0].value.dims2().expect("checked at record time");
                    let n = node.value.dims2().expect("2-D").1;
                    let mut gx = vec![0.0; m * k];
                    matmul_into(&g, val(*w), &mut gx, m, n, k);
                    let mut gw = vec![0.0; n * k];
                    matmul_tn_into(&g, val(*x), &mut gw, m, n, k);
                    let mut gbias = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        for (o, r) in gbias.iter_mut().zip(row) {
                            *o += r;
                        }
                    }
                    accumulate(&mut grads[x.0], &gx);
                    accumulate(&mut grads[w.0], &gw);
                    accumulate(&mut grads[b.0], &gbias);
                }
                Op::Act(a, act) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(val(*a).iter().zip(node.value.data()))
                        .map(|(gi, (x, y))| gi * act.derivative(*x, *y))
                        .collect();
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Square(a) => {
                    let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(gi, x)| 2.0 * x * gi).collect();
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Abs(a) => {
                    let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(gi, x)| sign(*x) * gi).collect();
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.nodes[a.0].value.len()];
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Combine(terms) => {
                    for (var, w) in terms {
                        let ga: Vec<f64> = g.iter().map(|x| x * w).collect();
                        accumulate(&mut grads[var.0], &ga);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        accumulate(&mut grads[p.0], &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::SliceRows { x, start, .. } => {
                    let cols = self.nodes[x.0].value.dims2().expect("2-D").1;
                    let slot = grads[x.0].get_or_insert_with(|| vec![0.0; self.nodes[x.0].value.len()]);
                    for (o, gi) in slot[start * cols..].iter_mut().zip(&g) {
                        *o += gi;
                    }
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match &n.op {
                Op::Leaf(Leaf::Param(name)) => Some((name.clone(), Var(i))),
                _ => None,
            })
            .collect();
        // Interior gradients were consumed on the way down; only leaves keep theirs.
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params,
        })
    }

    /// Parameter leaves in registration order.
    pub fn params(&self) -> Vec<Var> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf(Leaf::Param(_))))
            .map(|(i, _)| Var(i))
            .collect()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => {
            for (a, x) in acc.iter_mut().zip(g) {
                *a += x;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}

/// `out += a·b` for `a: m×k`, `b: k×n`.
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (o, &bpj) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bpj;
            }
        }
    }
}

/// `out += a·bᵀ` for `a: m×k`, `b: n×k`.
fn matmul_t_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ai = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let bj = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in ai.iter().zip(bj) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

/// `out += aᵀ·b` for `a: m×k`, `b: m×n`, giving `k×n`.
fn matmul_tn_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let br = &b[r * n..(r + 1) * n];
        for (p, &arp) in a[r * k..(r + 1) * k].iter().enumerate() {
            if arp == 0.0 {
                continue;
            }
            for (o, &y) in out[p * n..(p + 1) * n].iter_mut().zip(br) {
                *o += arp * y;
            }
        }
    }
}
