//! Linear residual propagation over a normalized adjacency.
//!
//! One layer maps `X` to `X + A·X`, where `A` is the row-normalized
//! operator. There is no nonlinearity and no per-layer weight, so `L` layers
//! compute `(I + A)^L · X` and the exact gradient of a scalar loss in the
//! output is `(I + Aᵀ)^L` applied to the output gradient. Both directions
//! run sequentially row by row, so results are bit-reproducible.

use crate::error::{PgdError, Result};
use crate::graph::PropagationOperator;

/// Dense row-major `rows x dim` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            rows,
            dim,
            values: vec![0.0; rows * dim],
        }
    }

    pub fn from_values(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(PgdError::Shape(format!(
                "{rows}x{dim} table needs {} values, got {}",
                rows * dim,
                values.len()
            )));
        }
        Ok(EmbeddingTable { rows, dim, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Concatenates tables of equal width, top to bottom.
    pub fn stack(parts: &[&EmbeddingTable]) -> Result<Self> {
        let dim = parts.first().map_or(0, |p| p.dim);
        if parts.iter().any(|p| p.dim != dim) {
            return Err(PgdError::Shape("stacked tables must share dim".into()));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut values = Vec::with_capacity(rows * dim);
        for p in parts {
            values.extend_from_slice(&p.values);
        }
        Ok(EmbeddingTable { rows, dim, values })
    }

    /// Copies rows `[start, start + len)` into a new table.
    pub fn slice_rows(&self, start: usize, len: usize) -> Self {
        EmbeddingTable {
            rows: len,
            dim: self.dim,
            values: self.values[start * self.dim..(start + len) * self.dim].to_vec(),
        }
    }

    /// Adds `scale * vec` into row `r`.
    pub fn add_scaled_row(&mut self, r: usize, vec: &[f64], scale: f64) {
        for (dst, &v) in self.row_mut(r).iter_mut().zip(vec) {
            *dst += scale * v;
        }
    }

    /// Element-wise sum with a table of identical shape.
    pub fn add_assign(&mut self, other: &EmbeddingTable) {
        debug_assert_eq!((self.rows, self.dim), (other.rows, other.dim));
        for (dst, &v) in self.values.iter_mut().zip(&other.values) {
            *dst += v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &EmbeddingTable) -> f64 {
        debug_assert_eq!((self.rows, self.dim), (other.rows, other.dim));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// All layer outputs of one forward pass, input included, plus the operator
/// that produced them. `layers[0]` is the input; `layers[depth()]` the
/// output.
#[derive(Debug, Clone)]
pub struct PropagationTrace<'op> {
    pub layers: Vec<EmbeddingTable>,
    pub operator: &'op PropagationOperator,
}

impl PropagationTrace<'_> {
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn output(&self) -> &EmbeddingTable {
        self.layers.last().expect("trace holds at least the input")
    }
}

/// Runs `layers` propagation steps, keeping every intermediate table.
///
/// The input must have one row per operator node and `layers` must be at
/// least 1.
pub fn propagate<'op>(
    operator: &'op PropagationOperator,
    input: &EmbeddingTable,
    layers: usize,
) -> Result<PropagationTrace<'op>> {
    if input.rows != operator.num_nodes() {
        return Err(PgdError::Shape(format!(
            "input has {} rows, operator has {} nodes",
            input.rows,
            operator.num_nodes()
        )));
    }
    if layers == 0 {
        return Err(PgdError::Contract("layer count must be at least 1".into()));
    }
    let mut trace = Vec::with_capacity(layers + 1);
    trace.push(input.clone());
    for _ in 0..layers {
        let cur = trace.last().expect("nonempty");
        let mut next = cur.clone();
        for r in 0..operator.num_nodes() {
            let (cols, weights) = operator.row(r);
            // Gather into a local row to keep writes contiguous.
            let row_start = r * cur.dim;
            for (&c, &w) in cols.iter().zip(weights) {
                let src = c * cur.dim;
                for d in 0..cur.dim {
                    next.values[row_start + d] += w * cur.values[src + d];
                }
            }
        }
        trace.push(next);
    }
    Ok(PropagationTrace {
        layers: trace,
        operator,
    })
}

/// Pulls a gradient at the trace output back to the trace input.
///
/// Each forward layer is `x + A·x`, so its adjoint is `g + Aᵀ·g`; applying
/// that `depth()` times yields the exact input gradient.
pub fn backpropagate(trace: &PropagationTrace<'_>, grad: &EmbeddingTable) -> Result<EmbeddingTable> {
    let out = trace.output();
    if grad.rows != out.rows || grad.dim != out.dim {
        return Err(PgdError::Shape(format!(
            "gradient is {}x{}, output is {}x{}",
            grad.rows, grad.dim, out.rows, out.dim
        )));
    }
    let op = trace.operator;
    let mut g = grad.clone();
    for _ in 0..trace.depth() {
        let mut next = g.clone();
        for r in 0..op.num_nodes() {
            let (cols, weights) = op.row(r);
            let src = r * g.dim;
            for (&c, &w) in cols.iter().zip(weights) {
                let dst = c * g.dim;
                for d in 0..g.dim {
                    next.values[dst + d] += w * g.values[src + d];
                }
            }
        }
        g = next;
    }
    Ok(g)
}
