//! Bounded kernels on sampled index sets.
//!
//! A kernel is a bounded real function on the product of two index sets,
//! tabulated on finite samples of each. Rows and columns are viewed as
//! vectors under the sup-distance.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::par;

/// Distance between coordinate vectors of sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sup,
    Euclidean,
    /// Coordinates split into consecutive factor blocks `(dimension, metric)`;
    /// the distance is the maximum of the factor distances.
    Product(Vec<(usize, Metric)>),
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Sup => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Product(factors) => {
                let mut offset = 0;
                let mut d = 0.0f64;
                for (dim, metric) in factors {
                    let end = offset + dim;
                    d = d.max(metric.distance(&a[offset..end], &b[offset..end]));
                    offset = end;
                }
                d
            }
        }
    }

    fn dimension(&self) -> Option<usize> {
        match self {
            Metric::Product(f) => Some(f.iter().map(|(d, _)| d).sum()),
            _ => None,
        }
    }
}

/// Sup-distance `max_k |u_k - v_k|` between two equal-length vectors.
pub fn sup_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(sup_distance_unchecked(u, v))
}

pub(crate) fn sup_distance_unchecked(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sup-distance that stops as soon as the running maximum exceeds `cap`.
/// The result is exact when it is `<= cap` and otherwise only known to be
/// greater than `cap`.
pub(crate) fn sup_distance_capped(u: &[f64], v: &[f64], cap: f64) -> f64 {
    let mut d = 0.0f64;
    for (chunk_u, chunk_v) in u.chunks(32).zip(v.chunks(32)) {
        for (x, y) in chunk_u.iter().zip(chunk_v) {
            d = d.max((x - y).abs());
        }
        if d > cap {
            return d;
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub id: String,
    pub coords: Vec<f64>,
}

impl SamplePoint {
    pub fn new(id: impl Into<String>, coords: Vec<f64>) -> Self {
        SamplePoint {
            id: id.into(),
            coords,
        }
    }
}

/// A finite set of tagged points standing in for an (infinite) index set.
#[derive(Debug, Clone)]
pub struct IndexSampling {
    points: Vec<SamplePoint>,
    metric: Metric,
    level: u32,
    index: HashMap<String, usize>,
}

impl PartialEq for IndexSampling {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.metric == other.metric && self.level == other.level
    }
}

impl IndexSampling {
    pub fn new(points: Vec<SamplePoint>, metric: Metric, level: u32) -> Result<Self> {
        let mut index = HashMap::with_capacity(points.len());
        let dim = points.first().map(|p| p.coords.len()).unwrap_or(0);
        for (i, p) in points.iter().enumerate() {
            if p.coords.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "point `{}` has {} coordinates, expected {}",
                    p.id,
                    p.coords.len(),
                    dim
                )));
            }
            if let Some(c) = p.coords.iter().find(|c| !c.is_finite()) {
                return Err(Error::NonFinite {
                    location: format!("coordinates of point `{}`", p.id),
                    value: *c,
                });
            }
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate sample id `{}`", p.id)));
            }
        }
        if let Some(d) = metric.dimension() {
            if !points.is_empty() && d != dim {
                return Err(Error::DimensionMismatch(format!(
                    "product metric covers {d} coordinates, points have {dim}"
                )));
            }
        }
        Ok(IndexSampling {
            points,
            metric,
            level,
            index,
        })
    }

    /// `n` equally spaced points on `[from, to]`, endpoints included. Ids are
    /// the coordinates' shortest decimal form, so nested grids share ids.
    pub fn grid(from: f64, to: f64, n: usize) -> Result<Self> {
        if !(from.is_finite() && to.is_finite()) || n == 0 || (n > 1 && from >= to) {
            return Err(Error::InvalidInput(format!(
                "grid needs from < to and n >= 1 (got from={from}, to={to}, n={n})"
            )));
        }
        let step = if n > 1 { (to - from) / (n - 1) as f64 } else { 0.0 };
        let points = (0..n)
            .map(|k| {
                let x = if k + 1 == n && n > 1 { to } else { from + k as f64 * step };
                SamplePoint::new(format!("{x}"), vec![x])
            })
            .collect();
        IndexSampling::new(points, Metric::Sup, 0)
    }

    /// Points from explicit one-dimensional coordinates, ids as in [`IndexSampling::grid`].
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        let points = coords
            .iter()
            .map(|&x| SamplePoint::new(format!("{x}"), vec![x]))
            .collect();
        IndexSampling::new(points, Metric::Sup, 0)
    }

    /// The integers `from..=to`, ids are the integers themselves.
    pub fn integers(from: i64, to: i64) -> Result<Self> {
        if from > to {
            return Err(Error::InvalidInput(format!("empty integer range {from}..={to}")));
        }
        let points = (from..=to)
            .map(|m| SamplePoint::new(m.to_string(), vec![m as f64]))
            .collect();
        IndexSampling::new(points, Metric::Sup, 0)
    }

    pub fn with_level(mut self, level: u32) -> Self {
        self.level = level;
        self
    }

    pub fn with_metric(self, metric: Metric) -> Result<Self> {
        IndexSampling::new(self.points, metric, self.level)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map(|p| p.coords.len()).unwrap_or(0)
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SamplePoint {
        &self.points[i]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.points[i].id
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.points[i].coords
    }

    pub fn ids(&self) -> Vec<String> {
        self.points.iter().map(|p| p.id.clone()).collect()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Positions of `ids`, failing on the first unknown id.
    pub fn positions<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.position(id.as_ref())
                    .ok_or_else(|| Error::UnknownId(id.as_ref().to_string()))
            })
            .collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.metric.distance(self.coords(i), self.coords(j))
    }

    /// Grid step when the sampling is a one-dimensional, strictly increasing,
    /// uniformly spaced set of at least two points.
    pub fn grid_step(&self) -> Option<f64> {
        if self.dim() != 1 || self.len() < 2 {
            return None;
        }
        let first = self.coords(0)[0];
        let last = self.coords(self.len() - 1)[0];
        let step = (last - first) / (self.len() - 1) as f64;
        if !(step > 0.0) {
            return None;
        }
        let uniform = (1..self.len()).all(|k| {
            let d = self.coords(k)[0] - self.coords(k - 1)[0];
            (d - step).abs() <= 1e-9 * step
        });
        uniform.then_some(step)
    }

    pub fn is_grid(&self) -> bool {
        self.grid_step().is_some()
    }

    /// True when every point of `coarser` occurs here with the same id and
    /// coordinates.
    pub fn is_refinement_of(&self, coarser: &IndexSampling) -> bool {
        coarser.points.iter().all(|p| {
            self.position(&p.id)
                .map(|i| self.points[i].coords == p.coords)
                .unwrap_or(false)
        })
    }

    /// Cartesian product, first factor major. Product points carry
    /// concatenated coordinates and ids `(a,b)`; the metric is the maximum
    /// of the factor metrics.
    pub fn product(a: &IndexSampling, b: &IndexSampling) -> Result<IndexSampling> {
        let mut points = Vec::with_capacity(a.len() * b.len());
        for p in &a.points {
            for q in &b.points {
                let mut coords = Vec::with_capacity(p.coords.len() + q.coords.len());
                coords.extend_from_slice(&p.coords);
                coords.extend_from_slice(&q.coords);
                points.push(SamplePoint::new(format!("({},{})", p.id, q.id), coords));
            }
        }
        let metric = Metric::Product(vec![
            (a.dim(), a.metric.clone()),
            (b.dim(), b.metric.clone()),
        ]);
        IndexSampling::new(points, metric, a.level.max(b.level))
    }
}

/// Source of kernel entries for [`build_kernel`].
#[derive(Debug, Clone)]
pub enum KernelSource {
    /// Closed-form expression in `x`, `y` (first coordinates) and
    /// `x0, x1, ...`, `y0, y1, ...` (all coordinates).
    Expr(String),
    /// Explicit values, one inner vector per row sample.
    Matrix(Vec<Vec<f64>>),
}

/// Variable names available to kernel expressions for the given coordinate
/// dimensions, in the order [`kernel_args`] fills them.
pub fn kernel_variables(row_dim: usize, col_dim: usize) -> Vec<String> {
    let mut vars = vec!["x".to_string(), "y".to_string()];
    vars.extend((0..row_dim).map(|k| format!("x{k}")));
    vars.extend((0..col_dim).map(|k| format!("y{k}")));
    vars
}

fn kernel_args(buf: &mut Vec<f64>, x: &[f64], y: &[f64]) {
    buf.clear();
    buf.push(x.first().copied().unwrap_or(0.0));
    buf.push(y.first().copied().unwrap_or(0.0));
    buf.extend_from_slice(x);
    buf.extend_from_slice(y);
}

/// A bounded real kernel tabulated on `rows × cols`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    rows: IndexSampling,
    cols: IndexSampling,
    values: Vec<f64>,
    bound: f64,
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl SampledKernel {
    /// Build from row-major values; the bound is the maximal absolute entry.
    pub fn from_values(rows: IndexSampling, cols: IndexSampling, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows.len() * cols.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} kernel",
                values.len(),
                rows.len(),
                cols.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos / cols.len(), pos % cols.len());
            return Err(Error::NonFinite {
                location: format!("entry ({}, {})", rows.id(i), cols.id(j)),
                value: values[pos],
            });
        }
        let bound = max_abs(&values);
        Ok(SampledKernel {
            rows,
            cols,
            values,
            bound,
        })
    }

    pub fn from_fn<F>(rows: IndexSampling, cols: IndexSampling, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Sync + Send,
    {
        let n = cols.len();
        let row_values = par::map_range(rows.len(), |i| {
            (0..n)
                .map(|j| f(rows.coords(i), cols.coords(j)))
                .collect::<Vec<_>>()
        });
        SampledKernel::from_values(rows, cols, row_values.concat())
    }

    pub fn from_expr(expr: &str, rows: IndexSampling, cols: IndexSampling) -> Result<Self> {
        let names = kernel_variables(rows.dim(), cols.dim());
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let e = Expr::parse(expr, &names)?;
        let n = cols.len();
        let row_values = par::map_range(rows.len(), |i| {
            let mut buf = Vec::new();
            (0..n)
                .map(|j| {
                    kernel_args(&mut buf, rows.coords(i), cols.coords(j));
                    e.eval(&buf)
                })
                .collect::<Vec<_>>()
        });
        SampledKernel::from_values(rows, cols, row_values.concat())
    }

    pub fn from_matrix(matrix: Vec<Vec<f64>>, rows: IndexSampling, cols: IndexSampling) -> Result<Self> {
        if matrix.len() != rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} rows, row sampling has {} points",
                matrix.len(),
                rows.len()
            )));
        }
        if let Some((i, r)) = matrix.iter().enumerate().find(|(_, r)| r.len() != cols.len()) {
            return Err(Error::DimensionMismatch(format!(
                "matrix row {i} has {} entries, column sampling has {} points",
                r.len(),
                cols.len()
            )));
        }
        SampledKernel::from_values(rows, cols, matrix.concat())
    }

    /// Replace the bound by a user-supplied `bound`, which must dominate
    /// every entry.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= self.bound) {
            return Err(Error::BoundExceeded {
                location: "kernel".into(),
                value: self.bound,
                bound,
            });
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn rows(&self) -> &IndexSampling {
        &self.rows
    }

    pub fn cols(&self) -> &IndexSampling {
        &self.cols
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Refinement level: the larger of the two samplings' levels.
    pub fn level(&self) -> u32 {
        self.rows.level().max(self.cols.level())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows.len()).map(|i| self.get(i, j)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    /// Swap rows and columns. The bound is kept.
    pub fn transpose(&self) -> SampledKernel {
        let (m, n) = (self.rows.len(), self.cols.len());
        let mut values = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                values[j * m + i] = self.values[i * n + j];
            }
        }
        SampledKernel {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            values,
            bound: self.bound,
        }
    }

    /// Entrywise sum of two kernels on identical samplings.
    pub fn add(&self, other: &SampledKernel) -> Result<SampledKernel> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("kernels live on different samplings".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        SampledKernel::from_values(self.rows.clone(), self.cols.clone(), values)
    }
}

impl fmt::Display for SampledKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SampledKernel({}x{}, bound {})",
            self.rows.len(),
            self.cols.len(),
            self.bound
        )
    }
}

/// Build a kernel from an expression or a literal matrix, optionally with a
/// user bound that must dominate every entry.
pub fn build_kernel(
    source: &KernelSource,
    rows: IndexSampling,
    cols: IndexSampling,
    bound: Option<f64>,
) -> Result<SampledKernel> {
    let k = match source {
        KernelSource::Expr(e) => SampledKernel::from_expr(e, rows, cols)?,
        KernelSource::Matrix(m) => SampledKernel::from_matrix(m.clone(), rows, cols)?,
    };
    match bound {
        Some(b) => k.with_bound(b),
        None => Ok(k),
    }
}

/// Which axis of a three-index kernel becomes the row set; the other two
/// form the column set (in their original order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grouping {
    /// Rows `L`, columns `I × J`.
    ByL,
    /// Rows `J`, columns `I × L`.
    ByJ,
    /// Rows `I`, columns `J × L`.
    ByI,
}

impl Grouping {
    pub const ALL: [Grouping; 3] = [Grouping::ByL, Grouping::ByJ, Grouping::ByI];

    pub fn label(self) -> &'static str {
        match self {
            Grouping::ByL => "L|IxJ",
            Grouping::ByJ => "J|IxL",
            Grouping::ByI => "I|JxL",
        }
    }
}

/// A bounded real function on `I × J × L`, stored with `L` fastest.
#[derive(Debug, Clone)]
pub struct MultiKernel {
    axes: [IndexSampling; 3],
    values: Vec<f64>,
    bound: f64,
}

impl MultiKernel {
    pub fn from_fn<F>(i: IndexSampling, j: IndexSampling, l: IndexSampling, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &[f64]) -> f64 + Sync + Send,
    {
        let (nj, nl) = (j.len(), l.len());
        let slabs = par::map_range(i.len(), |a| {
            let mut out = Vec::with_capacity(nj * nl);
            for b in 0..nj {
                for c in 0..nl {
                    out.push(f(i.coords(a), j.coords(b), l.coords(c)));
                }
            }
            out
        });
        MultiKernel::from_values([i, j, l], slabs.concat())
    }

    pub fn from_values(axes: [IndexSampling; 3], values: Vec<f64>) -> Result<Self> {
        let expected = axes.iter().map(IndexSampling::len).product::<usize>();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{}x{} array",
                values.len(),
                axes[0].len(),
                axes[1].len(),
                axes[2].len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: "multi-kernel entry".into(),
                value: *v,
            });
        }
        let bound = max_abs(&values);
        Ok(MultiKernel { axes, values, bound })
    }

    pub fn axes(&self) -> &[IndexSampling; 3] {
        &self.axes
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        let (nj, nl) = (self.axes[1].len(), self.axes[2].len());
        self.values[(a * nj + b) * nl + c]
    }

    /// View as a two-index kernel with the chosen axis as rows.
    pub fn regroup(&self, grouping: Grouping) -> Result<SampledKernel> {
        let [i, j, l] = &self.axes;
        let (ni, nj, nl) = (i.len(), j.len(), l.len());
        let (rows, cols, values) = match grouping {
            Grouping::ByI => (i.clone(), IndexSampling::product(j, l)?, self.values.clone()),
            Grouping::ByJ => {
                let mut v = Vec::with_capacity(self.values.len());
                for b in 0..nj {
                    for a in 0..ni {
                        for c in 0..nl {
                            v.push(self.get(a, b, c));
                        }
                    }
                }
                (j.clone(), IndexSampling::product(i, l)?, v)
            }
            Grouping::ByL => {
                let mut v = Vec::with_capacity(self.values.len());
                for c in 0..nl {
                    for a in 0..ni {
                        for b in 0..nj {
                            v.push(self.get(a, b, c));
                        }
                    }
                }
                (l.clone(), IndexSampling::product(i, j)?, v)
            }
        };
        let mut k = SampledKernel::from_values(rows, cols, values)?;
        k.bound = self.bound;
        Ok(k)
    }
}
