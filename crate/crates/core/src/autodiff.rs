//! Recorded scalar computations with reverse-mode gradients and
//! forward-over-reverse Hessian-vector products.
//!
//! A [`ComputationGraph`] is recorded once through a [`GraphBuilder`] and is
//! immutable afterwards. Every query allocates its own scratch buffers, so a
//! graph can be shared between threads freely.
//!
//! The primitive set is closed: affine combinations, products, `atan`, `exp`,
//! `log`, the logistic sigmoid, means over samples and a probability clamp.
//! Everything except the clamp carries second-order information.

use std::collections::HashSet;

use nalgebra::DMatrix;
use thiserror::Error;

/// Upper bound on `rows * cols` for [`ComputationGraph::hessian_block`].
pub const HESSIAN_BLOCK_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("group `{group}` expects {expected} values, got {found}")]
    DimensionMismatch {
        group: String,
        expected: usize,
        found: usize,
    },
    #[error("no values supplied for group `{0}`")]
    MissingGroup(String),
    #[error("graph has no parameter group named `{0}`")]
    UnknownGroup(String),
    #[error("non-finite value at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("node {node} ({op}) has no second-order rule")]
    UnsupportedSecondOrder { node: usize, op: &'static str },
    #[error("dense block of {rows}x{cols} exceeds the {limit}-entry guard")]
    SizeGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },
    #[error("duplicate parameter group name `{0}`")]
    DuplicateGroup(String),
}

/// A named block of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub values: Vec<f64>,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Handle to a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Const(f64),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `bias + sum coef_i * v_i`
    Linear { terms: Vec<(Var, f64)>, bias: f64 },
    /// `sum a_i * b_i`
    Dot(Vec<(Var, Var)>),
    Mean(Vec<Var>),
    Atan(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Clamp { arg: Var, lo: f64, hi: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Const(_) => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Linear { .. } => "linear",
            Op::Dot(_) => "dot",
            Op::Mean(_) => "mean",
            Op::Atan(_) => "atan",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sigmoid(_) => "sigmoid",
            Op::Clamp { .. } => "clamp",
        }
    }
}

#[derive(Debug, Clone)]
struct GroupSpec {
    name: String,
    /// Node id of the first input; the group occupies `start..start + dim`.
    start: usize,
    dim: usize,
}

/// Records a computation. Inputs must be declared before they are used.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Op>,
    groups: Vec<GroupSpec>,
    input_slot: Vec<Option<(usize, usize)>>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> Var {
        let id = self.nodes.len();
        self.nodes.push(op);
        self.input_slot.push(None);
        Var(id as u32)
    }

    /// Declares a parameter group and returns one variable per coordinate.
    pub fn group(&mut self, name: &str, dim: usize) -> Result<Vec<Var>, AutodiffError> {
        if self.groups.iter().any(|g| g.name == name) {
            return Err(AutodiffError::DuplicateGroup(name.to_string()));
        }
        let gi = self.groups.len();
        let start = self.nodes.len();
        let vars = (0..dim)
            .map(|i| {
                let v = self.push(Op::Input);
                self.input_slot[v.idx()] = Some((gi, i));
                v
            })
            .collect();
        self.groups.push(GroupSpec {
            name: name.to_string(),
            start,
            dim,
        });
        Ok(vars)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Const(value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, coef: f64) -> Var {
        self.linear(&[(a, coef)], 0.0)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `bias + sum coef_i * v_i`.
    pub fn linear(&mut self, terms: &[(Var, f64)], bias: f64) -> Var {
        self.push(Op::Linear {
            terms: terms.to_vec(),
            bias,
        })
    }

    /// Inner product of two equally long variable lists.
    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        assert_eq!(a.len(), b.len(), "dot operands differ in length");
        self.push(Op::Dot(a.iter().copied().zip(b.iter().copied()).collect()))
    }

    pub fn mean(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "mean over an empty sample");
        self.push(Op::Mean(items.to_vec()))
    }

    pub fn atan(&mut self, a: Var) -> Var {
        self.push(Op::Atan(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.push(Op::Log(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.push(Op::Sigmoid(a))
    }

    /// Clamps into `[lo, hi]`. First-order only.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.push(Op::Clamp { arg: a, lo, hi })
    }

    /// Dense layer without bias: `out_i = sum_j w[i * inputs.len() + j] * inputs[j]`.
    pub fn dense(&mut self, weights: &[Var], inputs: &[Var]) -> Vec<Var> {
        let n_in = inputs.len();
        assert_eq!(weights.len() % n_in, 0, "weight count not a multiple of fan-in");
        weights
            .chunks(n_in)
            .map(|row| self.dot(row, inputs))
            .collect()
    }

    pub fn finish(self, output: Var) -> ComputationGraph {
        let second_order = !self.nodes.iter().any(|op| matches!(op, Op::Clamp { .. }));
        ComputationGraph {
            nodes: self.nodes,
            groups: self.groups,
            output: output.idx(),
            second_order,
        }
    }
}

/// An immutable recorded scalar computation over named parameter groups.
#[derive(Debug, Clone)]
pub struct ComputationGraph {
    nodes: Vec<Op>,
    groups: Vec<GroupSpec>,
    output: usize,
    second_order: bool,
}

impl ComputationGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.name.as_str())
    }

    pub fn group_index(&self, name: &str) -> Result<usize, AutodiffError> {
        self.groups
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| AutodiffError::UnknownGroup(name.to_string()))
    }

    pub fn group_dim(&self, index: usize) -> usize {
        self.groups[index].dim
    }

    pub fn supports_second_order(&self) -> bool {
        self.second_order
    }

    /// Orders the supplied groups the way the graph declared them.
    fn bind<'a>(&self, at: &'a [ParamGroup]) -> Result<Vec<&'a [f64]>, AutodiffError> {
        let mut seen = HashSet::new();
        for g in at {
            if !seen.insert(g.name.as_str()) {
                return Err(AutodiffError::DuplicateGroup(g.name.clone()));
            }
        }
        self.groups
            .iter()
            .map(|spec| {
                let g = at
                    .iter()
                    .find(|g| g.name == spec.name)
                    .ok_or_else(|| AutodiffError::MissingGroup(spec.name.clone()))?;
                Ok(g.values.as_slice())
            })
            .collect()
    }

    fn check_dims(&self, point: &[&[f64]]) -> Result<(), AutodiffError> {
        if point.len() != self.groups.len() {
            return Err(AutodiffError::MissingGroup(
                self.groups
                    .get(point.len())
                    .map(|g| g.name.clone())
                    .unwrap_or_default(),
            ));
        }
        for (spec, values) in self.groups.iter().zip(point) {
            if spec.dim != values.len() {
                return Err(AutodiffError::DimensionMismatch {
                    group: spec.name.clone(),
                    expected: spec.dim,
                    found: values.len(),
                });
            }
        }
        Ok(())
    }

    fn forward(&self, point: &[&[f64]]) -> Result<Vec<f64>, AutodiffError> {
        self.check_dims(point)?;
        let mut val = vec![0.0; self.nodes.len()];
        for spec_values in self.groups.iter().zip(point) {
            let (spec, values) = spec_values;
            val[spec.start..spec.start + spec.dim].copy_from_slice(values);
        }
        for (i, op) in self.nodes.iter().enumerate() {
            let v = match op {
                Op::Input => val[i],
                Op::Const(c) => *c,
                Op::Add(a, b) => val[a.idx()] + val[b.idx()],
                Op::Sub(a, b) => val[a.idx()] - val[b.idx()],
                Op::Mul(a, b) => val[a.idx()] * val[b.idx()],
                Op::Linear { terms, bias } => {
                    terms.iter().fold(*bias, |acc, (a, c)| acc + c * val[a.idx()])
                }
                Op::Dot(pairs) => pairs
                    .iter()
                    .fold(0.0, |acc, (a, b)| acc + val[a.idx()] * val[b.idx()]),
                Op::Mean(items) => {
                    items.iter().map(|a| val[a.idx()]).sum::<f64>() / items.len() as f64
                }
                Op::Atan(a) => val[a.idx()].atan(),
                Op::Exp(a) => val[a.idx()].exp(),
                Op::Log(a) => val[a.idx()].ln(),
                Op::Sigmoid(a) => sigmoid(val[a.idx()]),
                Op::Clamp { arg, lo, hi } => val[arg.idx()].clamp(*lo, *hi),
            };
            if !v.is_finite() {
                return Err(AutodiffError::NonFinite {
                    node: i,
                    op: op.name(),
                });
            }
            val[i] = v;
        }
        Ok(val)
    }

    /// Evaluates the graph at positional group values (declaration order).
    pub fn eval_at(&self, point: &[&[f64]]) -> Result<f64, AutodiffError> {
        Ok(self.forward(point)?[self.output])
    }

    /// Value and the gradient with respect to every group, positional form.
    pub fn value_and_grad_at(
        &self,
        point: &[&[f64]],
    ) -> Result<(f64, Vec<Vec<f64>>), AutodiffError> {
        let val = self.forward(point)?;
        let mut bar = vec![0.0; self.nodes.len()];
        bar[self.output] = 1.0;
        for i in (0..=self.output).rev() {
            let g = bar[i];
            if g == 0.0 {
                continue;
            }
            match &self.nodes[i] {
                Op::Input | Op::Const(_) => {}
                Op::Add(a, b) => {
                    bar[a.idx()] += g;
                    bar[b.idx()] += g;
                }
                Op::Sub(a, b) => {
                    bar[a.idx()] += g;
                    bar[b.idx()] -= g;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val[a.idx()], val[b.idx()]);
                    bar[a.idx()] += g * vb;
                    bar[b.idx()] += g * va;
                }
                Op::Linear { terms, .. } => {
                    for (a, c) in terms {
                        bar[a.idx()] += g * c;
                    }
                }
                Op::Dot(pairs) => {
                    for (a, b) in pairs {
                        let (va, vb) = (val[a.idx()], val[b.idx()]);
                        bar[a.idx()] += g * vb;
                        bar[b.idx()] += g * va;
                    }
                }
                Op::Mean(items) => {
                    let w = g / items.len() as f64;
                    for a in items {
                        bar[a.idx()] += w;
                    }
                }
                Op::Clamp { arg, lo, hi } => {
                    let x = val[arg.idx()];
                    if x >= *lo && x <= *hi {
                        bar[arg.idx()] += g;
                    }
                }
                Op::Atan(a) | Op::Exp(a) | Op::Log(a) | Op::Sigmoid(a) => {
                    let (d1, _) = unary_derivs(&self.nodes[i], val[a.idx()], val[i]);
                    bar[a.idx()] += g * d1;
                }
            }
        }
        for (i, b) in bar.iter().enumerate() {
            if !b.is_finite() {
                return Err(AutodiffError::NonFinite {
                    node: i,
                    op: self.nodes[i].name(),
                });
            }
        }
        let grads = self
            .groups
            .iter()
            .map(|s| bar[s.start..s.start + s.dim].to_vec())
            .collect();
        Ok((val[self.output], grads))
    }

    /// Second derivative block `D^2_{to,from} f * v`, positional form.
    ///
    /// The forward pass carries tangents seeded with `v` on `from`; the
    /// reverse pass then differentiates the adjoints along that tangent.
    pub fn hvp_at(
        &self,
        point: &[&[f64]],
        from: usize,
        v: &[f64],
        to: usize,
    ) -> Result<Vec<f64>, AutodiffError> {
        self.ensure_second_order()?;
        let from_spec = &self.groups[from];
        if v.len() != from_spec.dim {
            return Err(AutodiffError::DimensionMismatch {
                group: from_spec.name.clone(),
                expected: from_spec.dim,
                found: v.len(),
            });
        }
        let val = self.forward(point)?;
        let n = self.nodes.len();

        let mut dot = vec![0.0; n];
        dot[from_spec.start..from_spec.start + from_spec.dim].copy_from_slice(v);
        for i in 0..n {
            dot[i] = match &self.nodes[i] {
                Op::Input => dot[i],
                Op::Const(_) => 0.0,
                Op::Add(a, b) => dot[a.idx()] + dot[b.idx()],
                Op::Sub(a, b) => dot[a.idx()] - dot[b.idx()],
                Op::Mul(a, b) => dot[a.idx()] * val[b.idx()] + val[a.idx()] * dot[b.idx()],
                Op::Linear { terms, .. } => {
                    terms.iter().fold(0.0, |acc, (a, c)| acc + c * dot[a.idx()])
                }
                Op::Dot(pairs) => pairs.iter().fold(0.0, |acc, (a, b)| {
                    acc + dot[a.idx()] * val[b.idx()] + val[a.idx()] * dot[b.idx()]
                }),
                Op::Mean(items) => {
                    items.iter().map(|a| dot[a.idx()]).sum::<f64>() / items.len() as f64
                }
                op @ (Op::Atan(a) | Op::Exp(a) | Op::Log(a) | Op::Sigmoid(a)) => {
                    unary_derivs(op, val[a.idx()], val[i]).0 * dot[a.idx()]
                }
                Op::Clamp { .. } => unreachable!("rejected by ensure_second_order"),
            };
        }

        let mut bar = vec![0.0; n];
        let mut bard = vec![0.0; n];
        bar[self.output] = 1.0;
        for i in (0..=self.output).rev() {
            let (g, gd) = (bar[i], bard[i]);
            if g == 0.0 && gd == 0.0 {
                continue;
            }
            match &self.nodes[i] {
                Op::Input | Op::Const(_) => {}
                Op::Add(a, b) => {
                    bar[a.idx()] += g;
                    bar[b.idx()] += g;
                    bard[a.idx()] += gd;
                    bard[b.idx()] += gd;
                }
                Op::Sub(a, b) => {
                    bar[a.idx()] += g;
                    bar[b.idx()] -= g;
                    bard[a.idx()] += gd;
                    bard[b.idx()] -= gd;
                }
                Op::Mul(a, b) => {
                    mul_adjoint(&mut bar, &mut bard, &val, &dot, *a, *b, g, gd);
                }
                Op::Linear { terms, .. } => {
                    for (a, c) in terms {
                        bar[a.idx()] += g * c;
                        bard[a.idx()] += gd * c;
                    }
                }
                Op::Dot(pairs) => {
                    for (a, b) in pairs {
                        mul_adjoint(&mut bar, &mut bard, &val, &dot, *a, *b, g, gd);
                    }
                }
                Op::Mean(items) => {
                    let inv = 1.0 / items.len() as f64;
                    for a in items {
                        bar[a.idx()] += g * inv;
                        bard[a.idx()] += gd * inv;
                    }
                }
                op @ (Op::Atan(a) | Op::Exp(a) | Op::Log(a) | Op::Sigmoid(a)) => {
                    let (d1, d2) = unary_derivs(op, val[a.idx()], val[i]);
                    bar[a.idx()] += g * d1;
                    bard[a.idx()] += gd * d1 + g * d2 * dot[a.idx()];
                }
                Op::Clamp { .. } => unreachable!("rejected by ensure_second_order"),
            }
        }
        let to_spec = &self.groups[to];
        let out = bard[to_spec.start..to_spec.start + to_spec.dim].to_vec();
        if let Some(k) = out.iter().position(|x| !x.is_finite()) {
            return Err(AutodiffError::NonFinite {
                node: to_spec.start + k,
                op: "input",
            });
        }
        Ok(out)
    }

    fn ensure_second_order(&self) -> Result<(), AutodiffError> {
        if self.second_order {
            return Ok(());
        }
        let (node, op) = self
            .nodes
            .iter()
            .enumerate()
            .find(|(_, op)| matches!(op, Op::Clamp { .. }))
            .map(|(i, op)| (i, op.name()))
            .expect("second_order flag tracks clamp nodes");
        Err(AutodiffError::UnsupportedSecondOrder { node, op })
    }

    /// Evaluates the scalar output at the named groups.
    pub fn evaluate(&self, at: &[ParamGroup]) -> Result<f64, AutodiffError> {
        self.eval_at(&self.bind(at)?)
    }

    /// Reverse-mode gradient with respect to one named group.
    pub fn gradient(&self, at: &[ParamGroup], wrt: &str) -> Result<Vec<f64>, AutodiffError> {
        let gi = self.group_index(wrt)?;
        let (_, mut grads) = self.value_and_grad_at(&self.bind(at)?)?;
        Ok(grads.swap_remove(gi))
    }

    /// `D^2_{to_group, from_group} f * v` without forming the matrix.
    pub fn mixed_hvp(
        &self,
        at: &[ParamGroup],
        v: &[f64],
        from_group: &str,
        to_group: &str,
    ) -> Result<Vec<f64>, AutodiffError> {
        let from = self.group_index(from_group)?;
        let to = self.group_index(to_group)?;
        self.hvp_at(&self.bind(at)?, from, v, to)
    }

    /// Dense second-derivative block, one Hessian-vector product per column.
    pub fn hessian_block(
        &self,
        at: &[ParamGroup],
        row_group: &str,
        col_group: &str,
    ) -> Result<DMatrix<f64>, AutodiffError> {
        let row = self.group_index(row_group)?;
        let col = self.group_index(col_group)?;
        self.hessian_block_at(&self.bind(at)?, row, col)
    }

    pub fn hessian_block_at(
        &self,
        point: &[&[f64]],
        row: usize,
        col: usize,
    ) -> Result<DMatrix<f64>, AutodiffError> {
        let (rows, cols) = (self.groups[row].dim, self.groups[col].dim);
        if rows * cols > HESSIAN_BLOCK_LIMIT {
            return Err(AutodiffError::SizeGuard {
                rows,
                cols,
                limit: HESSIAN_BLOCK_LIMIT,
            });
        }
        let mut m = DMatrix::zeros(rows, cols);
        let mut e = vec![0.0; cols];
        for j in 0..cols {
            e[j] = 1.0;
            let column = self.hvp_at(point, col, &e, row)?;
            m.column_mut(j).copy_from_slice(&column);
            e[j] = 0.0;
        }
        Ok(m)
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn mul_adjoint(
    bar: &mut [f64],
    bard: &mut [f64],
    val: &[f64],
    dot: &[f64],
    a: Var,
    b: Var,
    g: f64,
    gd: f64,
) {
    let (ia, ib) = (a.idx(), b.idx());
    bar[ia] += g * val[ib];
    bar[ib] += g * val[ia];
    bard[ia] += gd * val[ib] + g * dot[ib];
    bard[ib] += gd * val[ia] + g * dot[ia];
}

/// First and second derivative of a unary primitive at input `x` with output `y`.
#[inline]
fn unary_derivs(op: &Op, x: f64, y: f64) -> (f64, f64) {
    match op {
        Op::Atan(_) => {
            let q = 1.0 / (1.0 + x * x);
            (q, -2.0 * x * q * q)
        }
        Op::Exp(_) => (y, y),
        Op::Log(_) => (1.0 / x, -1.0 / (x * x)),
        Op::Sigmoid(_) => {
            let d = y * (1.0 - y);
            (d, d * (1.0 - 2.0 * y))
        }
        _ => unreachable!("not a smooth unary primitive"),
    }
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
