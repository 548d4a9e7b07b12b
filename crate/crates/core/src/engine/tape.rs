//! Reverse-mode accumulation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward evaluation. Nodes are
//! matrices; a scalar is a `1 x 1` matrix. Trainable tensors enter through
//! [`Tape::param`] and their gradients come back keyed by parameter index.
//! Tapes are single-threaded; Monte-Carlo samples each get their own tape.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

use super::params::{ParamGrads, ParamId, ParamStore};
use super::scalar::ScalarFn;

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for operations not covered by the built-in set.
pub trait CustomOp {
    /// Given input values, the op's output value and the incoming adjoint,
    /// return one adjoint per input (`None` when the input gets no gradient).
    fn backward(&self, inputs: &[&Mat], output: &Mat, grad: &Mat) -> Vec<Option<Mat>>;
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    TMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    BroadcastRows(Var),
    Scale(Var, f64),
    Offset(Var),
    Map(Var, ScalarFn, u8),
    Sum(Var),
    SumCols(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    Detach,
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(256) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.push(Array2::from_elem((1, 1), x), Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.push(value, Op::Detach)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b))
    }

    /// `a^T * b`.
    pub fn t_matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).t().dot(self.value(b));
        self.push(value, Op::TMatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    /// `a (n x m) + row (1 x m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    /// `a (n x m) * col (n x 1)` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let value = self.value(a) * self.value(col);
        self.push(value, Op::MulCol(a, col))
    }

    /// Repeats a `1 x m` row `n` times.
    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "broadcast_rows expects a single row");
        let value = r.broadcast((n, r.ncols())).expect("broadcast").to_owned();
        self.push(value, Op::BroadcastRows(row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        self.push(value, Op::Scale(a, k))
    }

    /// `a + c` for a constant matrix (or `1 x 1`) `c`.
    pub fn offset(&mut self, a: Var, c: &Mat) -> Var {
        let value = self.value(a) + c;
        self.push(value, Op::Offset(a))
    }

    pub fn offset_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        self.push(value, Op::Offset(a))
    }

    /// Elementwise `f^(order)(a)`.
    pub fn map(&mut self, a: Var, f: ScalarFn, order: u8) -> Var {
        let value = self.value(a).mapv(|x| f.eval(x, order));
        self.push(value, Op::Map(a, f, order))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumCols(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("row counts must agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        let data: Vec<f64> = src.iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), data).expect("reshape size mismatch");
        self.push(value, Op::Reshape(a))
    }

    /// Output row `i` is input row `perm[i]`.
    pub fn gather_rows(&mut self, a: Var, perm: Vec<usize>) -> Var {
        let value = self.value(a).select(Axis(0), &perm);
        self.push(value, Op::GatherRows(a, perm))
    }

    pub fn custom(&mut self, inputs: &[Var], value: Mat, op: Box<dyn CustomOp>) -> Var {
        self.push(value, Op::Custom(inputs.to_vec(), op))
    }

    /// Reverse sweep from `root` seeded with `seed` (same shape as root).
    pub fn backward_with(&self, root: Var, seed: Mat) -> Adjoints {
        let mut grads: Vec<Option<Mat>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(seed);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Detach => {}
                Op::Leaf | Op::Param(_) => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    // c = a b^T: da = g b, db = g^T a
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::TMatMul(a, b) => {
                    // c = a^T b: da = b g^T, db = a g
                    let ga = self.value(*b).dot(&g.t());
                    let gb = self.value(*a).dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc_ref(&mut grads, *a, &g);
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc_ref(&mut grads, *a, &g);
                    acc(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulCol(a, col) => {
                    let gc = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &g * self.value(*col);
                    acc(&mut grads, *col, gc);
                    acc(&mut grads, *a, ga);
                }
                Op::BroadcastRows(row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                }
                Op::Scale(a, k) => {
                    acc(&mut grads, *a, g * *k);
                }
                Op::Offset(a) => {
                    acc(&mut grads, *a, g);
                }
                Op::Map(a, f, order) => {
                    let next = order + 1;
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= f.eval(x, next));
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let s = g[[0, 0]];
                    let ga = Array2::from_elem(self.value(*a).dim(), s);
                    acc(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let dim = self.value(*a).dim();
                    let ga = g.broadcast(dim).expect("broadcast").to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(s![.., off..off + w]).to_owned();
                        acc(&mut grads, *p, gp);
                        off += w;
                    }
                }
                Op::Reshape(a) => {
                    let dim = self.value(*a).dim();
                    let data: Vec<f64> = g.iter().copied().collect();
                    acc(&mut grads, *a, Array2::from_shape_vec(dim, data).expect("reshape"));
                }
                Op::GatherRows(a, perm) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for (i, &src) in perm.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(i);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Custom(inputs, op) => {
                    let vals: Vec<&Mat> = inputs.iter().map(|&v| self.value(v)).collect();
                    let outs = op.backward(&vals, &node.value, &g);
                    debug_assert_eq!(outs.len(), inputs.len());
                    for (v, go) in inputs.iter().zip(outs) {
                        if let Some(go) = go {
                            acc(&mut grads, *v, go);
                        }
                    }
                }
            }
        }
        Adjoints { grads }
    }

    /// Reverse sweep from a scalar root with unit seed.
    pub fn backward(&self, root: Var) -> Adjoints {
        self.backward_with(root, Array2::from_elem((1, 1), 1.0))
    }

    /// Collects parameter adjoints into a store-shaped gradient bundle.
    pub fn param_grads(&self, adj: &Adjoints, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::zeros_like(store);
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(Some(g))) = (&node.op, adj.grads.get(i)) {
                out.add_to(*id, g);
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn acc_ref(grads: &mut [Option<Mat>], v: Var, g: &Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += g,
        slot @ None => *slot = Some(g.clone()),
    }
}

/// Adjoints produced by a reverse sweep.
pub struct Adjoints {
    grads: Vec<Option<Mat>>,
}

impl Adjoints {
    /// Adjoint of a leaf or parameter node, if it received one.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
