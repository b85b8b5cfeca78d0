//! Bounded operator semigroups known at dyadic times of `(0, T_max]`:
//! construction checks, the sup-over-orbit renorming, weak-identity and
//! shift checks, and extension to arbitrary times through envelopes of the
//! orbit functions.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::envelope::{self, classify_envelope, EnvelopeConfig, ExtensionOutcome, GridFunction, LocalSamples};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::expr::Expr;
use crate::par;

/// A pure function of time returning a `d x d` matrix. It is called from
/// several threads at once.
pub trait OperatorProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn op(&self, s: f64) -> DMatrix<f64>;
}

/// `T_s = exp(s A)`.
#[derive(Debug, Clone)]
pub struct GeneratorProvider {
    a: DMatrix<f64>,
}

impl GeneratorProvider {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        expm(&a)?;
        Ok(GeneratorProvider { a })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(square_from_rows(rows)?)
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl OperatorProvider for GeneratorProvider {
    fn dimension(&self) -> usize {
        self.a.nrows()
    }

    fn op(&self, s: f64) -> DMatrix<f64> {
        expm(&(&self.a * s)).expect("generator validated at construction")
    }
}

pub(crate) fn square_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("matrix must be square and nonempty".into()));
    }
    Ok(DMatrix::from_row_iterator(d, d, rows.iter().flatten().copied()))
}

/// Entries given as expressions in `s`, row-major.
#[derive(Debug, Clone)]
pub struct ExprProvider {
    d: usize,
    entries: Vec<Expr>,
}

impl ExprProvider {
    pub fn new<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("entry expressions must form a square table".into()));
        }
        let entries = rows
            .iter()
            .flatten()
            .map(|src| Expr::parse(src.as_ref(), &["s"]))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(ExprProvider { d, entries })
    }
}

impl OperatorProvider for ExprProvider {
    fn dimension(&self) -> usize {
        self.d
    }

    fn op(&self, s: f64) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.d, self.d, self.entries.iter().map(|e| e.eval(&[s])))
    }
}

/// Operators from a closure.
pub struct FnProvider {
    d: usize,
    f: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
}

impl FnProvider {
    pub fn new(d: usize, f: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        FnProvider { d, f: Box::new(f) }
    }

    pub fn identity(d: usize) -> Self {
        Self::new(d, move |_| DMatrix::identity(d, d))
    }
}

impl fmt::Debug for FnProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnProvider").field("d", &self.d).finish_non_exhaustive()
    }
}

impl OperatorProvider for FnProvider {
    fn dimension(&self) -> usize {
        self.d
    }

    fn op(&self, s: f64) -> DMatrix<f64> {
        (self.f)(s)
    }
}

/// Vector norm on `R^d`, with its induced operator norm and its dual norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaseNorm {
    #[default]
    Sup,
    Euclidean,
}

impl BaseNorm {
    pub fn vector(self, x: &[f64]) -> f64 {
        match self {
            BaseNorm::Sup => x.iter().fold(0.0, |m, v| m.max(v.abs())),
            BaseNorm::Euclidean => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Norm of a functional `x -> <rho, x>`.
    pub fn dual(self, rho: &[f64]) -> f64 {
        match self {
            BaseNorm::Sup => rho.iter().map(|v| v.abs()).sum(),
            BaseNorm::Euclidean => rho.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn operator(self, m: &DMatrix<f64>) -> f64 {
        match self {
            BaseNorm::Sup => m
                .row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            BaseNorm::Euclidean => m.clone().svd(false, false).singular_values.max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Sup,
    Euclidean,
    Renormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupConfig {
    pub t_max: Dyadic,
    /// Sample times are `k / 2^depth`.
    pub depth: u32,
    pub norm: BaseNorm,
    /// Declared bound on the operator norms; checked when given.
    pub bound: Option<f64>,
    /// Allowed defect, scaled by `max(M, 1)^2`.
    pub defect_tol: f64,
    pub seed: u64,
    pub random_pairs: usize,
}

impl Default for SemigroupConfig {
    fn default() -> Self {
        SemigroupConfig {
            t_max: Dyadic::new(2, 0).expect("valid"),
            depth: 14,
            norm: BaseNorm::Sup,
            bound: None,
            defect_tol: 1e-10,
            seed: 0,
            random_pairs: 64,
        }
    }
}

/// Limit on `samples * d^2` stored at construction.
pub const MAX_STORED_ENTRIES: usize = 1 << 26;

/// Largest `||T_s T_s' - T_{s+s'}||` found over the checked pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectReport {
    pub max_defect: f64,
    pub worst_pair: (f64, f64),
    pub pairs_checked: usize,
}

/// Result of the sup-over-orbit renorming.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Renormalization {
    /// Depth of the times entering `N1(x) = max(|x|, sup_s |T_s x|)`.
    pub norm_depth: u32,
    pub probes: usize,
    /// Estimated operator norm of `T_s` under `N1`, per tested time.
    pub operator_norms: Vec<(f64, f64)>,
    pub max_operator_norm: f64,
}

#[derive(Clone)]
pub struct SampledSemigroup {
    provider: Arc<dyn OperatorProvider>,
    cfg: SemigroupConfig,
    count: usize,
    ops: Arc<Vec<DMatrix<f64>>>,
    bound: f64,
    defect: DefectReport,
    renormalization: Option<Arc<Renormalization>>,
}

impl fmt::Debug for SampledSemigroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledSemigroup")
            .field("dimension", &self.dimension())
            .field("t_max", &self.cfg.t_max)
            .field("depth", &self.cfg.depth)
            .field("bound", &self.bound)
            .field("defect", &self.defect)
            .finish_non_exhaustive()
    }
}

impl SampledSemigroup {
    /// Sample `provider` at every `k / 2^depth` in `(0, T_max]`, check the
    /// bound and the semigroup identity on sampled pairs.
    pub fn new(provider: Arc<dyn OperatorProvider>, cfg: SemigroupConfig) -> Result<Self> {
        let d = provider.dimension();
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !cfg.t_max.is_positive() {
            return Err(Error::InvalidInput(format!("t_max must be positive, got {}", cfg.t_max)));
        }
        let count = cfg
            .t_max
            .index_at(cfg.depth)
            .ok_or_else(|| Error::InvalidInput(format!("t_max {} is not a multiple of 2^-{}", cfg.t_max, cfg.depth)))?
            as usize;
        if count.saturating_mul(d * d) > MAX_STORED_ENTRIES {
            return Err(Error::InvalidInput(format!(
                "{count} sample times of {d}x{d} operators exceed the storage limit"
            )));
        }
        let h = 0.5f64.powi(cfg.depth as i32);
        let ops = par::map_range(count, |k| provider.op((k + 1) as f64 * h));
        for (k, m) in ops.iter().enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "operator at s = {} is {}x{}, expected {d}x{d}",
                    (k + 1) as f64 * h,
                    m.nrows(),
                    m.ncols()
                )));
            }
            if let Some(v) = m.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    location: format!("operator at s = {}", (k + 1) as f64 * h),
                    value: *v,
                });
            }
        }
        let norms = par::map_slice(&ops, |m| cfg.norm.operator(m));
        let (worst, bound) = par::argmax(&norms).expect("at least one sample");
        if let Some(b) = cfg.bound {
            if bound > b * (1.0 + 1e-12) {
                return Err(Error::BoundExceeded {
                    location: format!("operator norm at s = {}", (worst + 1) as f64 * h),
                    value: bound,
                    bound: b,
                });
            }
        }
        let mut g = SampledSemigroup {
            provider,
            cfg,
            count,
            ops: Arc::new(ops),
            bound,
            defect: DefectReport {
                max_defect: 0.0,
                worst_pair: (0.0, 0.0),
                pairs_checked: 0,
            },
            renormalization: None,
        };
        g.defect = g.check_defect()?;
        Ok(g)
    }

    /// Pairs `(s, s')` of sample indices with `s + s'` sampled: the smallest
    /// time against every other, repeated doubling of `T_max / 2^j`, and
    /// seeded random pairs.
    fn defect_pairs(&self) -> Vec<(usize, usize)> {
        let k = self.count;
        let mut pairs: Vec<(usize, usize)> = (1..k).map(|b| (1, b)).collect();
        let mut half = k / 2;
        while half >= 1 {
            pairs.push((half, half));
            if half % 2 == 1 {
                break;
            }
            half /= 2;
        }
        if k >= 2 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            for _ in 0..self.cfg.random_pairs {
                let a = rng.gen_range(1..k);
                let b = rng.gen_range(1..=k - a);
                pairs.push((a, b));
            }
        }
        pairs
    }

    fn check_defect(&self) -> Result<DefectReport> {
        let pairs = self.defect_pairs();
        let defects = par::map_slice(&pairs, |&(a, b)| {
            let prod = self.sampled(a) * self.sampled(b);
            self.cfg.norm.operator(&(prod - self.sampled(a + b)))
        });
        let report = match par::argmax(&defects) {
            Some((i, v)) => DefectReport {
                max_defect: v,
                worst_pair: (self.time(pairs[i].0), self.time(pairs[i].1)),
                pairs_checked: pairs.len(),
            },
            None => DefectReport {
                max_defect: 0.0,
                worst_pair: (0.0, 0.0),
                pairs_checked: 0,
            },
        };
        let tolerance = self.cfg.defect_tol * self.bound.max(1.0).powi(2);
        if !(report.max_defect <= tolerance) {
            let (s, s2) = report.worst_pair;
            return Err(Error::SemigroupDefect {
                defect: report.max_defect,
                tolerance,
                s: s.to_string(),
                s_prime: s2.to_string(),
            });
        }
        Ok(report)
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension()
    }

    pub fn config(&self) -> &SemigroupConfig {
        &self.cfg
    }

    pub fn depth(&self) -> u32 {
        self.cfg.depth
    }

    pub fn t_max(&self) -> f64 {
        self.cfg.t_max.value()
    }

    /// Number of sample times.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Sample time `k / 2^depth`, `k` in `1..=len`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    pub fn step(&self) -> f64 {
        0.5f64.powi(self.cfg.depth as i32)
    }

    /// Sampled operator at index `k` in `1..=len`.
    pub fn sampled(&self, k: usize) -> &DMatrix<f64> {
        &self.ops[k - 1]
    }

    /// Sample index of `s`, if `s` is a sample time.
    pub fn sample_index(&self, s: Dyadic) -> Option<usize> {
        let k = s.index_at(self.cfg.depth)?;
        (k >= 1 && k as usize <= self.count).then_some(k as usize)
    }

    /// `T_s` at any dyadic time in `(0, T_max]`; sample times come from the
    /// stored operators, finer ones from the provider.
    pub fn op_at(&self, s: Dyadic) -> Result<DMatrix<f64>> {
        if !(s.is_positive() && s <= self.cfg.t_max) {
            return Err(Error::TimeOutOfRange {
                time: s.value(),
                t_max: self.t_max(),
            });
        }
        Ok(match self.sample_index(s) {
            Some(k) => self.sampled(k).clone(),
            None => self.provider.op(s.value()),
        })
    }

    pub(crate) fn provider_op(&self, s: f64) -> DMatrix<f64> {
        self.provider.op(s)
    }

    /// `M = max ||T_s||` over the samples (or the renormalized estimate).
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn base_norm(&self) -> BaseNorm {
        self.cfg.norm
    }

    pub fn norm_kind(&self) -> NormKind {
        match (&self.renormalization, self.cfg.norm) {
            (Some(_), _) => NormKind::Renormalized,
            (None, BaseNorm::Sup) => NormKind::Sup,
            (None, BaseNorm::Euclidean) => NormKind::Euclidean,
        }
    }

    pub fn defect(&self) -> &DefectReport {
        &self.defect
    }

    pub fn renormalization(&self) -> Option<&Renormalization> {
        self.renormalization.as_deref()
    }

    fn norm_indices(&self) -> Vec<usize> {
        let q = self.cfg.depth.min(RENORM_DEPTH);
        let stride = 1usize << (self.cfg.depth - q);
        (1..=self.count / stride).map(|j| j * stride).collect()
    }

    /// `N1(x) = max(|x|, sup_s |T_s x|)` with `s` over the samples at depth
    /// `min(depth, 12)`.
    pub fn renormalized_norm(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        self.norm_indices()
            .iter()
            .map(|&k| self.cfg.norm.vector((self.sampled(k) * &v).as_slice()))
            .fold(self.cfg.norm.vector(x), f64::max)
    }

    /// Column-wise `N1` of a block of vectors.
    fn renormalized_columns(&self, x: &DMatrix<f64>, indices: &[usize]) -> Vec<f64> {
        let norm = self.cfg.norm;
        let col_norms = |m: &DMatrix<f64>| -> Vec<f64> { m.column_iter().map(|c| norm.vector(c.as_slice())).collect() };
        let partial = par::map_slice(indices, |&k| col_norms(&(self.sampled(k) * x)));
        partial.into_iter().fold(col_norms(x), |mut acc, p| {
            for (a, b) in acc.iter_mut().zip(p) {
                *a = a.max(b);
            }
            acc
        })
    }

    /// Switch to the renormed norm `N1` and estimate every tested operator
    /// norm as the largest ratio `N1(T_s x) / N1(x)` over a fixed probe set:
    /// basis vectors, sign vectors when `d <= 8`, and 64 seeded random unit
    /// vectors.
    pub fn renormalize(&self) -> Result<SampledSemigroup> {
        let d = self.dimension();
        let probes = probe_vectors(d, self.cfg.norm, self.cfg.seed);
        let n1 = self.renormalized_columns(&probes, &self.norm_indices());
        let q = self.cfg.depth.min(RENORM_TEST_DEPTH);
        let stride = 1usize << (self.cfg.depth - q);
        let mut tested: Vec<usize> = (1..=self.count / stride).map(|j| j * stride).collect();
        if !tested.contains(&1) {
            tested.insert(0, 1);
        }
        let indices = self.norm_indices();
        let operator_norms: Vec<(f64, f64)> = tested
            .iter()
            .map(|&k| {
                let moved = self.sampled(k) * &probes;
                let ratios = self
                    .renormalized_columns(&moved, &indices)
                    .iter()
                    .zip(&n1)
                    .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
                    .fold(0.0, f64::max);
                (self.time(k), ratios)
            })
            .collect();
        let max_operator_norm = operator_norms.iter().map(|p| p.1).fold(0.0, f64::max);
        let mut g = self.clone();
        g.bound = max_operator_norm;
        g.renormalization = Some(Arc::new(Renormalization {
            norm_depth: self.cfg.depth.min(RENORM_DEPTH),
            probes: probes.ncols(),
            operator_norms,
            max_operator_norm,
        }));
        Ok(g)
    }
}

const RENORM_DEPTH: u32 = 12;
const RENORM_TEST_DEPTH: u32 = 4;

/// Probe vectors as columns: basis vectors, `+-1` sign vectors with a
/// leading `+1` when `d <= 8`, and 64 seeded random unit vectors.
pub fn probe_vectors(d: usize, norm: BaseNorm, seed: u64) -> DMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();
    if d <= 8 && d > 1 {
        for mask in 0..(1u32 << (d - 1)) {
            cols.push(
                (0..d)
                    .map(|i| if i > 0 && mask & (1 << (i - 1)) != 0 { -1.0 } else { 1.0 })
                    .collect(),
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..64 {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm.vector(&v);
        if n > 0.0 {
            cols.push(v.iter().map(|x| x / n).collect());
        }
    }
    DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i])
}

/// A vector and a functional, probing `s -> rho(T_s x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
}

/// All basis pairs `(e_i, e_j*)` plus eight seeded random pairs.
pub fn default_probes(d: usize, seed: u64) -> Vec<Probe> {
    let basis = |i: usize| {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    };
    let mut probes: Vec<Probe> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| Probe {
            x: basis(i),
            rho: basis(j),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_7cc1_b727_220a);
    for _ in 0..8 {
        probes.push(Probe {
            x: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            rho: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        });
    }
    probes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub probe: usize,
    pub time: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakIdentityReport {
    pub status: CheckStatus,
    /// Sampled times used, decreasing.
    pub times: Vec<f64>,
    /// Largest `|rho(T_s x) - rho(x)|` over the tail times.
    pub worst: Option<Witness>,
    pub tol: f64,
    pub note: String,
}

/// Check `rho(T_s x) -> rho(x)` as `s -> 0+` along the sample times
/// `T_max / 16 * 2^-j`: the last quarter of each sequence must spread by at
/// most `tol` and end within `tol` of `rho(x)`. Passing is necessary, not
/// sufficient, for weak convergence.
pub fn weak_identity_check(g: &SampledSemigroup, probes: &[Probe], tol: f64) -> Result<WeakIdentityReport> {
    if probes.is_empty() {
        return Err(Error::InvalidInput("no probes given".into()));
    }
    let d = g.dimension();
    if let Some(p) = probes.iter().find(|p| p.x.len() != d || p.rho.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "probe of lengths ({}, {}) for dimension {d}",
            p.x.len(),
            p.rho.len()
        )));
    }
    let top = g.cfg.t_max.halve(4)?;
    let mut indices = Vec::new();
    for j in 0.. {
        let s = top.halve(j)?;
        match g.sample_index(s) {
            Some(k) => indices.push(k),
            None => break,
        }
    }
    let times: Vec<f64> = indices.iter().map(|&k| g.time(k)).collect();
    if indices.len() < 4 {
        return Ok(WeakIdentityReport {
            status: CheckStatus::Inconclusive,
            times,
            worst: None,
            tol,
            note: "fewer than 4 sample times below T_max/16".into(),
        });
    }
    let tail = indices.len().div_ceil(4);
    let mut pass = true;
    let mut worst: Option<Witness> = None;
    for (pi, p) in probes.iter().enumerate() {
        let x = DVector::from_column_slice(&p.x);
        let rho = DVector::from_column_slice(&p.rho);
        let target = rho.dot(&x);
        let values: Vec<f64> = indices.iter().map(|&k| rho.dot(&(g.sampled(k) * &x))).collect();
        let t = &values[values.len() - tail..];
        let spread = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min);
        let last = *values.last().unwrap();
        pass &= spread <= tol && (last - target).abs() <= tol;
        for (off, v) in t.iter().enumerate() {
            let dev = (v - target).abs();
            if worst.as_ref().is_none_or(|w| dev > w.deviation) {
                worst = Some(Witness {
                    probe: pi,
                    time: times[times.len() - tail + off],
                    deviation: dev,
                });
            }
        }
    }
    Ok(WeakIdentityReport {
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        times,
        worst,
        tol,
        note: if pass {
            "hypothesis consistent (pointwise check only)".into()
        } else {
            "pointwise convergence to the identity fails".into()
        },
    })
}

/// `s -> rho(T_s x)` on the sample times.
pub fn orbit_function(g: &SampledSemigroup, x: &[f64], rho: &[f64]) -> Result<GridFunction> {
    let d = g.dimension();
    if x.len() != d || rho.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} and functional of length {} for dimension {d}",
            x.len(),
            rho.len()
        )));
    }
    let xv = DVector::from_column_slice(x);
    let rv = DVector::from_column_slice(rho);
    let points: Vec<f64> = (1..=g.len()).map(|k| g.time(k)).collect();
    let values: Vec<f64> = (1..=g.len()).map(|k| rv.dot(&(g.sampled(k) * &xv))).collect();
    let f = GridFunction::new((0.0, g.t_max()), points, values)?;
    let norm = g.base_norm();
    let declared = g.bound() * norm.vector(x) * norm.dual(rho);
    let slack = declared * 1e-12 + f64::MIN_POSITIVE;
    f.clone().with_bound(declared + slack).or(Ok(f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub shift: f64,
    pub max_deviation: f64,
    pub tested: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftReport {
    /// One row per shift, largest shift first.
    pub rows: Vec<ShiftRow>,
    pub tol: f64,
    pub pass: bool,
}

/// `max |f(s' + s) - f(s')|` over sample points `s'` with `s' + s` also
/// sampled, for each shift `s`. Passes if the maxima for the smallest
/// quarter of the shifts are within `tol`.
pub fn shift_convergence_check(f: &GridFunction, shifts: &[f64], tol: f64) -> Result<ShiftReport> {
    if shifts.is_empty() {
        return Err(Error::InvalidInput("no shifts given".into()));
    }
    let mut sorted = shifts.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rows = sorted
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("shift {s} must be positive")));
            }
            let mut tested = 0;
            let mut max_deviation = 0.0f64;
            for (p, v) in f.points().iter().zip(f.values()) {
                if let Some(w) = f.value_at(p + s) {
                    tested += 1;
                    max_deviation = max_deviation.max((w - v).abs());
                }
            }
            if tested == 0 {
                return Err(Error::InvalidInput(format!("no sample pair is {s} apart: insufficient shift range")));
            }
            Ok(ShiftRow {
                shift: s,
                max_deviation,
                tested,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tail = rows.len().div_ceil(4);
    let pass = rows[rows.len() - tail..].iter().all(|r| r.max_deviation <= tol);
    Ok(ShiftReport { rows, tol, pass })
}

/// All `d^2` orbit functions `f_ij(s) = (T_s)_{ji}` as one multi-channel
/// sample over the dyadic times of `(0, T_max]`. Balls are sampled at the
/// depth putting about `points_per_ball` times inside, reusing stored
/// operators at the sample depth.
pub struct OrbitBundle<'a> {
    g: &'a SampledSemigroup,
    points_per_ball: u64,
    max_depth: u32,
}

impl<'a> OrbitBundle<'a> {
    pub fn new(g: &'a SampledSemigroup, points_per_ball: u64) -> Self {
        OrbitBundle {
            g,
            points_per_ball: points_per_ball.max(2),
            max_depth: 50,
        }
    }

    fn depth_for_radius(&self, r: f64) -> u32 {
        let want = (self.points_per_ball as f64 * self.g.t_max() / (2.0 * r)).log2().ceil();
        let q = if want.is_finite() && want > 0.0 { want as u32 } else { 0 };
        q.clamp(self.g.depth(), self.max_depth.max(self.g.depth()))
    }
}

impl LocalSamples for OrbitBundle<'_> {
    fn span(&self) -> (f64, f64) {
        (0.0, self.g.t_max())
    }

    fn channels(&self) -> usize {
        self.g.dimension().pow(2)
    }

    fn bound(&self) -> f64 {
        self.g.bound()
    }

    fn ball_extrema(&self, t: f64, r: f64) -> Option<Vec<(f64, f64)>> {
        let q = self.depth_for_radius(r);
        let h = 0.5f64.powi(q as i32);
        let last = self.g.cfg.t_max.index_at(q)? as u64;
        let (lo, hi) = envelope::lattice_ball(|k| k as f64 * h, h, 0.0, 1, last, t, r)?;
        let d = self.g.dimension();
        let shift = q - self.g.depth();
        let mut ext = vec![(f64::INFINITY, f64::NEG_INFINITY); d * d];
        let mut absorb = |m: &DMatrix<f64>| {
            for i in 0..d {
                for j in 0..d {
                    let v = m[(j, i)];
                    let e = &mut ext[i * d + j];
                    *e = (e.0.min(v), e.1.max(v));
                }
            }
        };
        for k in lo..=hi {
            if k % (1u64 << shift) == 0 {
                absorb(self.g.sampled((k >> shift) as usize));
            } else {
                absorb(&self.g.provider_op(k as f64 * h));
            }
        }
        Some(ext)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendConfig {
    /// Largest envelope gap accepted for an entry.
    pub tol: f64,
    pub envelope: EnvelopeConfig,
    pub points_per_ball: u64,
    /// Offsets `h` for the weak-continuity table.
    pub probe_offsets: Vec<f64>,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        ExtendConfig {
            tol: 1e-6,
            envelope: EnvelopeConfig::default(),
            points_per_ball: 64,
            probe_offsets: vec![2f64.powi(-6), 2f64.powi(-9), 2f64.powi(-12)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryFailure {
    /// Matrix position `(row, col)`.
    pub entry: (usize, usize),
    pub status: String,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusRow {
    pub offset: f64,
    pub time: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionResult {
    pub time: f64,
    pub matrix: Vec<Vec<f64>>,
    pub max_entry_gap: f64,
    pub success: bool,
    pub failure: Option<EntryFailure>,
    /// Largest `||T_t T_s - T_{t+s}||` (or `||T_{t-s} T_s - T_t||` near
    /// `T_max`) for `s` in `{1/8, 1/32}`.
    pub semigroup_defect_after: Option<f64>,
    /// `max |T_tau - T_t|` entrywise at `tau = t + h` (or `t - h`).
    pub weak_continuity_modulus: Vec<ModulusRow>,
}

impl ExtensionResult {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.matrix.len();
        DMatrix::from_row_iterator(d, d, self.matrix.iter().flatten().copied())
    }
}

struct RawExtension {
    matrix: DMatrix<f64>,
    max_gap: f64,
    failure: Option<EntryFailure>,
}

fn check_time(g: &SampledSemigroup, t: f64) -> Result<()> {
    if !(t > 0.0 && t <= g.t_max()) {
        return Err(Error::TimeOutOfRange { time: t, t_max: g.t_max() });
    }
    Ok(())
}

fn extend_raw(g: &SampledSemigroup, t: f64, cfg: &ExtendConfig) -> Result<RawExtension> {
    check_time(g, t)?;
    let d = g.dimension();
    let bundle = OrbitBundle::new(g, cfg.points_per_ball);
    let envs = envelope::envelopes(&bundle, t, &cfg.envelope)?;
    let mut matrix = DMatrix::zeros(d, d);
    let mut max_gap = 0.0f64;
    let mut failure: Option<EntryFailure> = None;
    for (c, e) in envs.iter().enumerate() {
        let (i, j) = (c / d, c % d);
        matrix[(j, i)] = (e.upper + e.lower) / 2.0;
        max_gap = max_gap.max(e.gap);
        let outcome = classify_envelope(e, cfg.tol);
        if !matches!(outcome, ExtensionOutcome::Value { .. }) {
            let worse = match &failure {
                None => true,
                Some(f) => {
                    // genuine gaps outrank unsettled estimates
                    let rank = |s: &str| if s == "not-extendable" { 1 } else { 0 };
                    (rank(outcome.label()), e.gap) > (rank(&f.status), f.gap)
                }
            };
            if worse {
                failure = Some(EntryFailure {
                    entry: (j, i),
                    status: outcome.label().into(),
                    gap: e.gap,
                });
            }
        }
    }
    Ok(RawExtension {
        matrix,
        max_gap,
        failure,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `T_t` from the envelopes of the orbit functions at `t`, or the sampled
/// operator when `t` is a sample time.
fn operator_at(g: &SampledSemigroup, t: f64, cfg: &ExtendConfig) -> Result<DMatrix<f64>> {
    if let Some(k) = Dyadic::from_f64(t).and_then(|s| g.sample_index(s)) {
        return Ok(g.sampled(k).clone());
    }
    Ok(extend_raw(g, t, cfg)?.matrix)
}

/// Extend the semigroup to time `t` in `(0, T_max]`.
///
/// Every orbit function `f_ij(s) = (T_s)_{ji}` is extended at `t` by its
/// envelopes; the result succeeds only if all `d^2` brackets collapse within
/// `cfg.tol`. The caller is expected to have run [`weak_identity_check`].
pub fn extend_operator(g: &SampledSemigroup, t: f64, cfg: &ExtendConfig) -> Result<ExtensionResult> {
    let raw = extend_raw(g, t, cfg)?;
    let norm = g.base_norm();
    let mut defect: Option<f64> = None;
    for s in [0.125, 0.03125] {
        let Some(k) = Dyadic::from_f64(s).and_then(|d| g.sample_index(d)) else {
            continue;
        };
        let ts = g.sampled(k);
        let value = if t + s <= g.t_max() {
            norm.operator(&(&raw.matrix * ts - operator_at(g, t + s, cfg)?))
        } else if t - s > 0.0 {
            norm.operator(&(operator_at(g, t - s, cfg)? * ts - &raw.matrix))
        } else {
            continue;
        };
        defect = Some(defect.map_or(value, |d: f64| d.max(value)));
    }
    let mut modulus = Vec::new();
    for &h in &cfg.probe_offsets {
        let tau = if t + h <= g.t_max() { t + h } else { t - h };
        if !(tau > 0.0) {
            continue;
        }
        let tau = Dyadic::round_to(tau, 40)?;
        let m = g.op_at(tau)?;
        modulus.push(ModulusRow {
            offset: h,
            time: tau.value(),
            deviation: (m - &raw.matrix).amax(),
        });
    }
    Ok(ExtensionResult {
        time: t,
        matrix: matrix_rows(&raw.matrix),
        max_entry_gap: raw.max_gap,
        success: raw.failure.is_none(),
        failure: raw.failure,
        semigroup_defect_after: defect,
        weak_continuity_modulus: modulus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDefect {
    pub t: f64,
    pub t_prime: f64,
    pub defect: f64,
    /// Where `T_{t+t'}` came from: "sampled", "extended" or "extension".
    pub sum_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub pairs: Vec<PairDefect>,
    pub max_defect: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Semigroup identity across extended and sampled times:
/// `||T_t T_t' - T_{t+t'}||` for pairs of extended times first, then each
/// extended time against seeded random sample times, up to `pair_budget`.
pub fn verify_extension(
    g: &SampledSemigroup,
    extended: &[ExtensionResult],
    pair_budget: usize,
    tol: f64,
    cfg: &ExtendConfig,
    seed: u64,
) -> Result<VerificationReport> {
    if extended.len() < 2 {
        return Err(Error::InvalidInput("need at least two extension results".into()));
    }
    let t_max = g.t_max();
    let mut candidates: Vec<(DMatrix<f64>, f64, DMatrix<f64>, f64)> = Vec::new();
    for (a, ra) in extended.iter().enumerate() {
        for rb in &extended[a..] {
            if candidates.len() < pair_budget && ra.time + rb.time <= t_max {
                candidates.push((ra.to_matrix(), ra.time, rb.to_matrix(), rb.time));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    while candidates.len() < pair_budget && attempts < 64 * pair_budget {
        attempts += 1;
        let r = &extended[attempts % extended.len()];
        let room = ((t_max - r.time) / g.step()).floor() as usize;
        if room == 0 {
            continue;
        }
        let k = rng.gen_range(1..=room.min(g.len()));
        candidates.push((r.to_matrix(), r.time, g.sampled(k).clone(), g.time(k)));
    }
    let known: HashMap<u64, DMatrix<f64>> = extended.iter().map(|r| (r.time.to_bits(), r.to_matrix())).collect();
    let norm = g.base_norm();
    let pairs = par::map_slice(&candidates, |(a, ta, b, tb)| -> Result<PairDefect> {
        let sum = ta + tb;
        let (target, source) = if let Some(k) = Dyadic::from_f64(sum).and_then(|s| g.sample_index(s)) {
            (g.sampled(k).clone(), "sampled")
        } else if let Some(m) = known.get(&sum.to_bits()) {
            (m.clone(), "extended")
        } else {
            (extend_raw(g, sum, cfg)?.matrix, "extension")
        };
        Ok(PairDefect {
            t: *ta,
            t_prime: *tb,
            defect: norm.operator(&(a * b - target)),
            sum_source: source.into(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let max_defect = pairs.iter().map(|p| p.defect).fold(0.0, f64::max);
    Ok(VerificationReport {
        pairs,
        max_defect,
        tol,
        pass: max_defect <= tol,
    })
}
