//! Space-time grid on `[0, T] x [0, 1]`, the stationary entropy, and the dense
//! field containers shared by every solver.
//!
//! Rows are time levels: row `m` holds the values at `t = m k` for all nodes
//! `x = n h`, `n = 0..=N`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform discretisation with `N` spatial intervals and `M` time steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    m: usize,
    horizon: f64,
    h: f64,
    k: f64,
}

impl Grid {
    pub fn new(n: usize, m: usize, horizon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("N", format!("need at least 2 spatial intervals, got {n}")));
        }
        if m < 1 {
            return Err(Error::validation("M", "need at least 1 time step, got 0"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::validation("T", format!("horizon must be positive and finite, got {horizon}")));
        }
        Ok(Self {
            n,
            m,
            horizon,
            h: 1.0 / n as f64,
            k: horizon / m as f64,
        })
    }

    /// Number of spatial intervals `N`.
    pub fn intervals(&self) -> usize {
        self.n
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Nodes per row, `N + 1`.
    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    /// Time levels, `M + 1`.
    pub fn levels(&self) -> usize {
        self.m + 1
    }

    /// Node coordinate. Computed as `n / N` so that `x(N) == 1` exactly.
    pub fn x(&self, n: usize) -> f64 {
        n as f64 / self.n as f64
    }

    pub fn t(&self, m: usize) -> f64 {
        if m == self.m {
            self.horizon
        } else {
            m as f64 * self.k
        }
    }

    /// Time level whose time equals `t` up to round-off; off-grid times are an error.
    pub fn level_of(&self, t: f64) -> Result<usize> {
        let pos = t / self.k;
        let m = pos.round();
        if !(0.0..=self.m as f64).contains(&m) || (pos - m).abs() > 1e-9 {
            return Err(Error::OffGrid { t, k: self.k });
        }
        Ok(m as usize)
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.n != other.n || self.m != other.m || self.horizon != other.horizon {
            return Err(Error::GridMismatch(format!(
                "(N={}, M={}, T={}) vs (N={}, M={}, T={})",
                self.n, self.m, self.horizon, other.n, other.m, other.horizon
            )));
        }
        Ok(())
    }
}

/// Builds a [`Grid`]; `N >= 2`, `M >= 1`, `T > 0`.
pub fn make_grid(n: usize, m: usize, horizon: f64) -> Result<Grid> {
    Grid::new(n, m, horizon)
}

/// `e_inf(x) = x (1 - x) / 2`, the steady state of the entropy equation.
pub fn stationary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::validation("x", format!("{x} is outside [0, 1]")));
    }
    Ok(x * (1.0 - x) / 2.0)
}

/// Centred second difference `(v[n+1] - 2 v[n] + v[n-1]) / h^2` at an interior node.
pub fn second_difference(row: &[f64], n: usize, h: f64) -> Result<f64> {
    if row.len() < 3 || n == 0 || n + 1 >= row.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            max: row.len().saturating_sub(2),
        });
    }
    Ok(second_difference_unchecked(row, n, h * h))
}

#[inline]
pub(crate) fn second_difference_unchecked(row: &[f64], n: usize, h2: f64) -> f64 {
    (row[n + 1] - 2.0 * row[n] + row[n - 1]) / h2
}

/// Dense `(M + 1) x (N + 1)` array of `f64`, row-major by time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.levels() * grid.nodes()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.levels() * grid.nodes());
        for m in 0..grid.levels() {
            for n in 0..grid.nodes() {
                data.push(f(m, n));
            }
        }
        Self { grid, data }
    }

    pub fn from_rows(grid: Grid, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != grid.levels() {
            return Err(Error::Shape {
                expected: grid.levels(),
                actual: rows.len(),
            });
        }
        let mut data = Vec::with_capacity(grid.levels() * grid.nodes());
        for row in rows {
            if row.len() != grid.nodes() {
                return Err(Error::Shape {
                    expected: grid.nodes(),
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.grid.nodes() + n]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let w = self.grid.nodes();
        &self.data[m * w..(m + 1) * w]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        let w = self.grid.nodes();
        &mut self.data[m * w..(m + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.nodes())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Largest `|self - other|` over all nodes.
    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Writes `t,x,<label>` rows ordered by `t` then `x`, every 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, label: &str, stride: usize) -> io::Result<()> {
        let stride = stride.max(1);
        writeln!(w, "t,x,{label}")?;
        for m in strided_indices(self.grid.levels(), stride) {
            let t = self.grid.t(m);
            for n in strided_indices(self.grid.nodes(), stride) {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", t, self.grid.x(n), self.get(m, n))?;
            }
        }
        Ok(())
    }

    pub fn to_envelope(&self) -> Envelope {
        Envelope {
            grid: GridSpec {
                n: self.grid.intervals(),
                m: self.grid.steps(),
                t: self.grid.horizon(),
            },
            values: self.to_rows(),
        }
    }

    pub fn from_envelope(env: &Envelope) -> Result<Self> {
        let grid = Grid::new(env.grid.n, env.grid.m, env.grid.t)?;
        Self::from_rows(grid, &env.values)
    }
}

/// Indices `0, s, 2s, ...` always including the last index.
/// Indices `0, stride, 2 stride, ...` of a length-`len` axis, always ending at `len - 1`.
pub fn strided_indices(len: usize, stride: usize) -> impl Iterator<Item = usize> {
    let last = len - 1;
    (0..len)
        .step_by(stride)
        .chain((last % stride != 0).then_some(last))
}

/// JSON envelope `{grid: {N, M, T}, values: [[...]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub grid: GridSpec,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t: f64,
}

/// Entropy field `e(t_m, x_n)` with zero lateral boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    field: Field,
}

impl ValueSurface {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            field: Field::zeros(grid),
        }
    }

    /// Wraps a field after checking zero lateral boundaries and finiteness.
    pub fn new(field: Field) -> Result<Self> {
        let last = field.grid().intervals();
        for (m, row) in field.rows().enumerate() {
            for n in [0, last] {
                if row[n] != 0.0 {
                    return Err(Error::BoundaryViolation { m, n, value: row[n] });
                }
            }
            if let Some(n) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(
                    "values",
                    format!("non-finite entry {} at (m = {m}, n = {n})", row[n]),
                ));
            }
        }
        Ok(Self { field })
    }

    /// The stationary entropy on every row.
    pub fn stationary(grid: Grid) -> Self {
        Self {
            field: Field::from_fn(grid, |_, n| {
                let x = grid.x(n);
                x * (1.0 - x) / 2.0
            }),
        }
    }

    /// Sets one node; a nonzero write to a lateral boundary is rejected.
    pub fn set(&mut self, m: usize, n: usize, value: f64) -> Result<()> {
        if (n == 0 || n == self.grid().intervals()) && value != 0.0 {
            return Err(Error::BoundaryViolation { m, n, value });
        }
        self.field.row_mut(m)[n] = value;
        Ok(())
    }

    pub(crate) fn row_mut(&mut self, m: usize) -> &mut [f64] {
        self.field.row_mut(m)
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.field.get(m, n)
    }

    pub fn row(&self, m: usize) -> &[f64] {
        self.field.row(m)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn sup_distance(&self, other: &ValueSurface) -> Result<f64> {
        self.field.sup_distance(&other.field)
    }

    pub fn write_csv<W: Write>(&self, w: W, stride: usize) -> io::Result<()> {
        self.field.write_csv(w, "value", stride)
    }
}

/// Solution `p(t, x)` of the logarithmic diffusion equation; boundary value 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PField {
    field: Field,
    regularisation_n: u32,
}

impl PField {
    pub(crate) fn from_parts(field: Field, regularisation_n: u32) -> Self {
        Self {
            field,
            regularisation_n,
        }
    }

    /// The constant field 1, the steady state.
    pub fn ones(grid: Grid) -> Self {
        Self::from_parts(Field::filled(grid, 1.0), 1)
    }

    /// Constant field `value` on every node, including the boundaries.
    pub fn constant(grid: Grid, value: f64) -> Self {
        Self::from_parts(Field::filled(grid, value), 1)
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn regularisation_n(&self) -> u32 {
        self.regularisation_n
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.field.get(m, n)
    }

    pub fn row(&self, m: usize) -> &[f64] {
        self.field.row(m)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn write_csv<W: Write>(&self, w: W, stride: usize) -> io::Result<()> {
        self.field.write_csv(w, "p", stride)
    }
}
