//! Iterated integrals against finitely supported means, sequential double
//! limits as finite witnesses of order-of-integration failure, and a search
//! over sequence pairs for such witnesses.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{Grouping, IndexSampling, MultiKernel, SampledKernel, SamplePoint};
use crate::par;

/// A probability mean with finite support, given as weights on sample ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMean {
    weights: Vec<(String, f64)>,
}

impl DiscreteMean {
    pub fn new(weights: Vec<(String, f64)>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMean("empty support".into()));
        }
        let mut seen = HashSet::new();
        for (id, w) in &weights {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidMean(format!("id `{id}` appears twice")));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidMean(format!("weight {w} on `{id}` is not a nonnegative number")));
            }
        }
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMean(format!("weights sum to {total}, not 1")));
        }
        Ok(DiscreteMean { weights })
    }

    /// Unit mass at one point.
    pub fn delta(id: impl Into<String>) -> Self {
        DiscreteMean {
            weights: vec![(id.into(), 1.0)],
        }
    }

    pub fn uniform<S: AsRef<str>>(ids: &[S]) -> Result<Self> {
        let w = 1.0 / ids.len() as f64;
        Self::new(ids.iter().map(|id| (id.as_ref().to_string(), w)).collect())
    }

    pub fn weights(&self) -> &[(String, f64)] {
        &self.weights
    }

    fn resolve(&self, sampling: &IndexSampling) -> Result<Vec<(usize, f64)>> {
        self.weights
            .iter()
            .map(|(id, w)| {
                sampling
                    .position(id)
                    .map(|p| (p, *w))
                    .ok_or_else(|| Error::UnknownId(id.clone()))
            })
            .collect()
    }
}

/// Which variable is integrated first (innermost).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    RowsFirst,
    ColsFirst,
}

/// `sum_j N_j sum_i M_i k(i, j)` for rows-first, the other nesting for
/// cols-first.
pub fn iterated_integral(k: &SampledKernel, m: &DiscreteMean, n: &DiscreteMean, order: Order) -> Result<f64> {
    let rows = m.resolve(k.rows())?;
    let cols = n.resolve(k.cols())?;
    let value = match order {
        Order::RowsFirst => cols
            .iter()
            .map(|&(j, wj)| wj * rows.iter().map(|&(i, wi)| wi * k.get(i, j)).sum::<f64>())
            .sum(),
        Order::ColsFirst => rows
            .iter()
            .map(|&(i, wi)| wi * cols.iter().map(|&(j, wj)| wj * k.get(i, j)).sum::<f64>())
            .sum(),
    };
    Ok(value)
}

/// Settings for [`double_limit_gap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleLimitConfig {
    /// Cauchy tolerance: a tail converges if its values spread by at most this.
    pub tol: f64,
    /// Tail used for the inner limits; default a quarter of the sequence.
    pub inner_tail: Option<usize>,
    /// Tail of the head used for the outer limits; default a quarter of it.
    pub outer_tail: Option<usize>,
    pub min_len: usize,
}

impl Default for DoubleLimitConfig {
    fn default() -> Self {
        DoubleLimitConfig {
            tol: 1e-6,
            inner_tail: None,
            outer_tail: None,
            min_len: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleLimitReport {
    pub row_sequence: Vec<String>,
    pub col_sequence: Vec<String>,
    /// Inner tail lengths `[rows, cols]`.
    pub inner_tail: [usize; 2],
    /// Outer tail lengths `[rows, cols]`.
    pub outer_tail: [usize; 2],
    /// `lim_m lim_n k(i_m, j_n)`.
    pub limit_row_first: f64,
    /// `lim_n lim_m k(i_m, j_n)`.
    pub limit_col_first: f64,
    pub gap: f64,
    pub converged: bool,
}

fn quarter(len: usize) -> usize {
    len.div_ceil(4)
}

/// Midpoint of the last `tail` values and whether they lie within `tol`.
fn cauchy_tail(values: &[f64], tail: usize, tol: f64) -> (f64, bool) {
    let t = &values[values.len() - tail..];
    let (lo, hi) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    ((lo + hi) / 2.0, hi - lo <= tol)
}

struct Tails {
    inner: usize,
    outer: usize,
}

fn tails(len: usize, cfg: &DoubleLimitConfig, axis: &str) -> Result<Tails> {
    if len < cfg.min_len.max(2) {
        return Err(Error::InvalidInput(format!(
            "{axis} sequence has length {len}, need at least {}",
            cfg.min_len.max(2)
        )));
    }
    let inner = cfg.inner_tail.unwrap_or_else(|| quarter(len));
    if inner == 0 || inner >= len {
        return Err(Error::InvalidInput(format!(
            "inner tail {inner} must be in 1..{len} for the {axis} sequence"
        )));
    }
    let head = len - inner;
    let outer = cfg.outer_tail.unwrap_or_else(|| quarter(head));
    if outer == 0 || outer > head {
        return Err(Error::InvalidInput(format!(
            "outer tail {outer} must be in 1..={head} for the {axis} sequence"
        )));
    }
    Ok(Tails { inner, outer })
}

/// One iterated limit: for each outer index in the head, the inner limit
/// over the inner tail, then the outer limit over the last values.
fn iterated_limit<F: Fn(usize, usize) -> f64>(
    outer_len: usize,
    outer: &Tails,
    inner_len: usize,
    inner: &Tails,
    tol: f64,
    entry: F,
) -> (f64, bool) {
    let head = outer_len - outer.inner;
    let mut ok = true;
    let inner_limits: Vec<f64> = (0..head)
        .map(|a| {
            let seq: Vec<f64> = (0..inner_len).map(|b| entry(a, b)).collect();
            let (v, c) = cauchy_tail(&seq, inner.inner, tol);
            ok &= c;
            v
        })
        .collect();
    let (v, c) = cauchy_tail(&inner_limits, outer.outer, tol);
    (v, ok && c)
}

/// Iterated sequential limits of `entry(m, n)` in both orders.
///
/// The inner limit for each outer index is read off the last `inner_tail`
/// inner values; the outer limit uses the head of the outer sequence (its
/// last `inner_tail` terms are reserved as the other order's inner tail),
/// read off the last `outer_tail` inner limits.
pub fn double_limit_gap_rule<F>(
    entry: F,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    cfg: &DoubleLimitConfig,
) -> Result<DoubleLimitReport>
where
    F: Fn(usize, usize) -> f64,
{
    if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be nonnegative, got {}", cfg.tol)));
    }
    let (m, n) = (row_ids.len(), col_ids.len());
    let rt = tails(m, cfg, "row")?;
    let ct = tails(n, cfg, "column")?;
    let (row_first, c1) = iterated_limit(m, &rt, n, &ct, cfg.tol, |a, b| entry(a, b));
    let (col_first, c2) = iterated_limit(n, &ct, m, &rt, cfg.tol, |a, b| entry(b, a));
    Ok(DoubleLimitReport {
        row_sequence: row_ids,
        col_sequence: col_ids,
        inner_tail: [rt.inner, ct.inner],
        outer_tail: [rt.outer, ct.outer],
        limit_row_first: row_first,
        limit_col_first: col_first,
        gap: (row_first - col_first).abs(),
        converged: c1 && c2,
    })
}

/// [`double_limit_gap_rule`] on a sampled kernel along sequences of row and
/// column ids. Ids may repeat.
pub fn double_limit_gap<S: AsRef<str>>(
    k: &SampledKernel,
    rows: &[S],
    cols: &[S],
    cfg: &DoubleLimitConfig,
) -> Result<DoubleLimitReport> {
    let ri = k.rows().positions(rows)?;
    let ci = k.cols().positions(cols)?;
    double_limit_positions(k, &ri, &ci, cfg)
}

/// [`double_limit_gap`] with sequences given as row and column positions.
pub fn double_limit_positions(
    k: &SampledKernel,
    rows: &[usize],
    cols: &[usize],
    cfg: &DoubleLimitConfig,
) -> Result<DoubleLimitReport> {
    if let Some(&p) = rows.iter().find(|&&p| p >= k.n_rows()) {
        return Err(Error::InvalidInput(format!("row position {p} out of range")));
    }
    if let Some(&p) = cols.iter().find(|&&p| p >= k.n_cols()) {
        return Err(Error::InvalidInput(format!("column position {p} out of range")));
    }
    double_limit_gap_rule(
        |a, b| k.get(rows[a], cols[b]),
        rows.iter().map(|&p| k.rows().id(p).to_string()).collect(),
        cols.iter().map(|&p| k.cols().id(p).to_string()).collect(),
        cfg,
    )
}

/// Source of candidate (row positions, column positions) sequence pairs.
pub trait SequenceGenerator {
    fn next_pair(&mut self, k: &SampledKernel) -> Option<(Vec<usize>, Vec<usize>)>;
}

/// Replays a fixed list of sequence pairs.
#[derive(Debug, Clone)]
pub struct FixedGenerator {
    pairs: std::vec::IntoIter<(Vec<usize>, Vec<usize>)>,
}

impl FixedGenerator {
    pub fn new(pairs: Vec<(Vec<usize>, Vec<usize>)>) -> Self {
        FixedGenerator { pairs: pairs.into_iter() }
    }
}

impl SequenceGenerator for FixedGenerator {
    fn next_pair(&mut self, _k: &SampledKernel) -> Option<(Vec<usize>, Vec<usize>)> {
        self.pairs.next()
    }
}

/// Seeded default generator.
///
/// It first yields the four pairs of monotone coordinate orders, then pairs
/// of sequences approaching the extreme points of each sampling (halving the
/// remaining distance at every step), then random increasing subsequences.
#[derive(Debug, Clone)]
pub struct DefaultGenerator {
    rng: ChaCha8Rng,
    queue: Option<std::vec::IntoIter<(Vec<usize>, Vec<usize>)>>,
}

impl DefaultGenerator {
    pub fn new(seed: u64) -> Self {
        DefaultGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: None,
        }
    }

    fn structured(k: &SampledKernel) -> Vec<(Vec<usize>, Vec<usize>)> {
        let (ri, rd) = monotone_orders(k.rows());
        let (ci, cd) = monotone_orders(k.cols());
        let mut pairs = vec![
            (ri.clone(), ci.clone()),
            (ri.clone(), cd.clone()),
            (rd.clone(), ci.clone()),
            (rd.clone(), cd.clone()),
        ];
        let row_targets = [ri[0], rd[0]];
        let col_targets = [ci[0], cd[0]];
        for &a in &row_targets {
            for &b in &col_targets {
                pairs.push((approach(k.rows(), a), approach(k.cols(), b)));
            }
        }
        pairs
    }
}

/// Positions sorted by coordinates (lexicographic), and the reverse.
fn monotone_orders(s: &IndexSampling) -> (Vec<usize>, Vec<usize>) {
    let mut inc: Vec<usize> = (0..s.len()).collect();
    inc.sort_by(|&a, &b| {
        s.coords(a)
            .iter()
            .zip(s.coords(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let dec = inc.iter().rev().copied().collect();
    (inc, dec)
}

const APPROACH_LEN: usize = 16;

/// A sequence moving toward `target` from the farthest point, halving the
/// distance each step and snapping to the nearest sample; it ends at the
/// target itself.
fn approach(s: &IndexSampling, target: usize) -> Vec<usize> {
    let t = s.coords(target);
    let start = (0..s.len())
        .max_by(|&a, &b| s.distance(target, a).total_cmp(&s.distance(target, b)).then(b.cmp(&a)))
        .unwrap_or(target);
    let from = s.coords(start);
    (0..APPROACH_LEN)
        .map(|step| {
            let f = 0.5f64.powi(step as i32);
            let goal: Vec<f64> = t.iter().zip(from).map(|(a, b)| a + (b - a) * f).collect();
            (0..s.len())
                .min_by(|&a, &b| {
                    s.metric()
                        .distance(s.coords(a), &goal)
                        .total_cmp(&s.metric().distance(s.coords(b), &goal))
                        .then(a.cmp(&b))
                })
                .unwrap_or(target)
        })
        .collect()
}

fn random_increasing(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let len = rng.gen_range(8.min(n)..=64.min(n));
    let mut picks: Vec<usize> = (0..n).collect::<Vec<_>>().choose_multiple(rng, len).copied().collect();
    picks.sort_unstable();
    picks
}

impl SequenceGenerator for DefaultGenerator {
    fn next_pair(&mut self, k: &SampledKernel) -> Option<(Vec<usize>, Vec<usize>)> {
        if k.n_rows() == 0 || k.n_cols() == 0 {
            return None;
        }
        let queue = self.queue.get_or_insert_with(|| Self::structured(k).into_iter());
        if let Some(p) = queue.next() {
            return Some(p);
        }
        let (ri, _) = monotone_orders(k.rows());
        let (ci, _) = monotone_orders(k.cols());
        let r = random_increasing(&mut self.rng, ri.len());
        let c = random_increasing(&mut self.rng, ci.len());
        Some((r.into_iter().map(|p| ri[p]).collect(), c.into_iter().map(|p| ci[p]).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSearchOutcome {
    /// Largest converged gap (earliest generated on ties); the first report
    /// if none converged.
    pub best: Option<DoubleLimitReport>,
    pub evaluated: usize,
    pub converged_count: usize,
}

/// Evaluate up to `budget` generated sequence pairs and keep the largest
/// converged gap. Pairs too short for `cfg` count as not converged. A zero
/// best gap is inconclusive, not evidence of weak compactness.
pub fn gap_search(
    k: &SampledKernel,
    generator: &mut dyn SequenceGenerator,
    budget: usize,
    cfg: &DoubleLimitConfig,
) -> Result<GapSearchOutcome> {
    if budget == 0 {
        return Err(Error::InvalidInput("budget must be at least 1".into()));
    }
    let mut pairs = Vec::new();
    while pairs.len() < budget {
        match generator.next_pair(k) {
            Some(p) => pairs.push(p),
            None => break,
        }
    }
    let reports: Vec<Option<DoubleLimitReport>> =
        par::map_slice(&pairs, |(r, c)| double_limit_positions(k, r, c, cfg).ok());
    let converged: Vec<&DoubleLimitReport> = reports.iter().flatten().filter(|r| r.converged).collect();
    let best = converged
        .iter()
        .fold(None::<&DoubleLimitReport>, |best, r| match best {
            Some(b) if r.gap <= b.gap => Some(b),
            _ => Some(r),
        })
        .or_else(|| reports.iter().flatten().next())
        .cloned();
    Ok(GapSearchOutcome {
        best,
        evaluated: pairs.len(),
        converged_count: converged.len(),
    })
}

/// The three groupings of `<A x, y>` over basis vectors and truncation
/// projectors, with the witnesses found for each.
#[derive(Debug, Clone)]
pub struct Remark2Gallery {
    pub dimension: usize,
    /// Rows `(x, y)`, columns `A`.
    pub xy_a: SampledKernel,
    /// Rows `(x, A)`, columns `y`.
    pub xa_y: SampledKernel,
    /// Rows `(y, A)`, columns `x`.
    pub ya_x: SampledKernel,
    /// Diagonal rows `(e_n, e_n)` against `P_k`.
    pub witness: DoubleLimitReport,
    pub xa_y_search: GapSearchOutcome,
    pub ya_x_search: GapSearchOutcome,
}

fn basis_sampling(d: usize) -> Result<IndexSampling> {
    let points = (0..d)
        .map(|n| {
            let mut c = vec![0.0; d];
            c[n] = 1.0;
            SamplePoint::new(format!("e{}", n + 1), c)
        })
        .collect();
    IndexSampling::new(points, crate::kernel::Metric::Euclidean, 0)
}

fn projector_sampling(d: usize) -> Result<IndexSampling> {
    let points = (0..d)
        .map(|k| SamplePoint::new(format!("P{}", k + 1), (0..d).map(|i| if i <= k { 1.0 } else { 0.0 }).collect()))
        .collect();
    IndexSampling::new(points, crate::kernel::Metric::Sup, 0)
}

/// Positions in a product sampling `a × b` (second factor fastest).
fn product_position(nb: usize, a: usize, b: usize) -> usize {
    a * nb + b
}

/// Build the three groupings of `<A x, y>` for `x, y` in the standard basis
/// of R^d and `A` in the truncation projectors `P_1..P_d`, and look for
/// double-limit gaps in each.
pub fn remark2_gallery(d: usize, tol: f64) -> Result<Remark2Gallery> {
    if d < 4 {
        return Err(Error::InvalidInput(format!("dimension must be at least 4, got {d}")));
    }
    let x = basis_sampling(d)?;
    let y = x.clone();
    let a = projector_sampling(d)?;
    let form = MultiKernel::from_fn(x, y, a, |x, y, a| x.iter().zip(y).zip(a).map(|((x, y), a)| a * x * y).sum())?;
    let xy_a = form.regroup(Grouping::ByL)?.transpose();
    let xa_y = form.regroup(Grouping::ByJ)?.transpose();
    let ya_x = form.regroup(Grouping::ByI)?.transpose();

    let cfg = DoubleLimitConfig {
        tol,
        min_len: 4,
        ..DoubleLimitConfig::default()
    };
    let diag: Vec<usize> = (0..d).map(|n| product_position(d, n, n)).collect();
    let proj: Vec<usize> = (0..d).collect();
    let witness = double_limit_positions(&xy_a, &diag, &proj, &cfg)?;

    // Pairs (e_n, P_s(n)) along several index maps s, in both directions,
    // against the basis vectors in the same order.
    let maps: [fn(usize, usize) -> usize; 4] = [|n, _| n, |_, d| d - 1, |_, _| 0, |n, _| n.saturating_sub(1)];
    let mut pairs = Vec::new();
    for s in maps {
        let inc: Vec<usize> = (0..d).map(|n| product_position(d, n, s(n, d))).collect();
        let dec: Vec<usize> = inc.iter().rev().copied().collect();
        let basis: Vec<usize> = (0..d).collect();
        let basis_rev: Vec<usize> = basis.iter().rev().copied().collect();
        pairs.push((inc, basis));
        pairs.push((dec, basis_rev));
    }
    let budget = pairs.len();
    let xa_y_search = gap_search(&xa_y, &mut FixedGenerator::new(pairs.clone()), budget, &cfg)?;
    let ya_x_search = gap_search(&ya_x, &mut FixedGenerator::new(pairs), budget, &cfg)?;
    Ok(Remark2Gallery {
        dimension: d,
        xy_a,
        xa_y,
        ya_x,
        witness,
        xa_y_search,
        ya_x_search,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn indicator(n: i64) -> SampledKernel {
        let s = IndexSampling::integers(1, n).unwrap();
        SampledKernel::from_expr("ind(y <= x)", s.clone(), s).unwrap()
    }

    fn ids(range: std::ops::RangeInclusive<i64>) -> Vec<String> {
        range.map(|i| i.to_string()).collect()
    }

    #[test]
    fn means_validate() {
        assert!(DiscreteMean::new(vec![("a".into(), 0.5), ("b".into(), 0.5)]).is_ok());
        assert!(DiscreteMean::new(vec![("a".into(), 0.6), ("b".into(), 0.5)]).is_err());
        assert!(DiscreteMean::new(vec![("a".into(), -0.5), ("b".into(), 1.5)]).is_err());
        assert!(DiscreteMean::new(vec![("a".into(), 0.5), ("a".into(), 0.5)]).is_err());
        assert!(DiscreteMean::new(vec![]).is_err());
    }

    #[test]
    fn delta_means_evaluate() {
        let k = indicator(5);
        for order in [Order::RowsFirst, Order::ColsFirst] {
            let v = iterated_integral(&k, &DiscreteMean::delta("4"), &DiscreteMean::delta("2"), order).unwrap();
            assert_eq!(v, 1.0);
        }
        let e = iterated_integral(&k, &DiscreteMean::delta("9"), &DiscreteMean::delta("2"), Order::RowsFirst);
        assert!(matches!(e, Err(Error::UnknownId(_))));
    }

    #[test]
    fn constant_kernel_integrates_to_constant() {
        let s = IndexSampling::grid(0.0, 1.0, 7).unwrap();
        let k = SampledKernel::from_expr("-2.5", s.clone(), s.clone()).unwrap();
        let m = DiscreteMean::uniform(&s.ids()).unwrap();
        assert!((iterated_integral(&k, &m, &m, Order::RowsFirst).unwrap() + 2.5).abs() < 1e-14);
    }

    #[test]
    fn indicator_gap_is_one_for_every_tail() {
        let k = indicator(16);
        for inner in 1..16 {
            for outer in 1..=(16 - inner) {
                let cfg = DoubleLimitConfig {
                    inner_tail: Some(inner),
                    outer_tail: Some(outer),
                    ..Default::default()
                };
                let r = double_limit_gap(&k, &ids(1..=16), &ids(1..=16), &cfg).unwrap();
                assert!(r.converged);
                assert_eq!((r.limit_row_first, r.limit_col_first, r.gap), (0.0, 1.0, 1.0));
            }
        }
    }

    #[test]
    fn rule_form_matches_closed_form() {
        let r = double_limit_gap_rule(
            |m, n| if n <= m { 1.0 } else { 0.0 },
            ids(1..=12),
            ids(1..=12),
            &DoubleLimitConfig::default(),
        )
        .unwrap();
        assert_eq!(r.gap, 1.0);
        assert_eq!(r.inner_tail, [3, 3]);
        assert_eq!(r.outer_tail, [3, 3]);
    }

    #[test]
    fn short_or_bad_sequences_are_rejected() {
        let k = indicator(16);
        assert!(double_limit_gap(&k, &ids(1..=5), &ids(1..=16), &DoubleLimitConfig::default()).is_err());
        let cfg = DoubleLimitConfig {
            inner_tail: Some(16),
            ..Default::default()
        };
        assert!(double_limit_gap(&k, &ids(1..=16), &ids(1..=16), &cfg).is_err());
    }

    #[test]
    fn oscillating_inner_limit_is_flagged() {
        let r = double_limit_gap_rule(
            |_, n| (n % 2) as f64,
            ids(1..=16),
            ids(1..=16),
            &DoubleLimitConfig::default(),
        )
        .unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn sin_toward_origin_has_no_gap() {
        let g = IndexSampling::grid(0.0, 1.0, 64).unwrap();
        let k = SampledKernel::from_expr("sin(x*y)", g.clone(), g).unwrap();
        let toward_zero: Vec<usize> = approach(k.rows(), 0);
        let r = double_limit_positions(&k, &toward_zero, &toward_zero, &DoubleLimitConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.gap <= 1e-6);
    }

    #[test]
    fn search_examples() {
        let s = IndexSampling::grid(0.0, 1.0, 10).unwrap();
        let c = SampledKernel::from_expr("3", s.clone(), s).unwrap();
        let out = gap_search(&c, &mut DefaultGenerator::new(1), 20, &DoubleLimitConfig::default()).unwrap();
        assert_eq!(out.best.unwrap().gap, 0.0);

        let out = gap_search(&indicator(32), &mut DefaultGenerator::new(1), 50, &DoubleLimitConfig::default()).unwrap();
        let best = out.best.unwrap();
        assert!(best.converged);
        assert_eq!(best.gap, 1.0);
        assert_eq!(out.evaluated, 50);

        let g = IndexSampling::grid(0.0, 1.0, 64).unwrap();
        let k = SampledKernel::from_expr("sin(x*y)", g.clone(), g).unwrap();
        let out = gap_search(&k, &mut DefaultGenerator::new(3), 100, &DoubleLimitConfig::default()).unwrap();
        let best = out.best.unwrap();
        assert!(best.converged && best.gap <= 1e-6, "{best:?}");
    }

    #[test]
    fn gallery_witnesses() {
        let g = remark2_gallery(8, 1e-9).unwrap();
        assert_eq!(g.witness.gap, 1.0);
        assert!(g.witness.converged);
        for out in [&g.xa_y_search, &g.ya_x_search] {
            let best = out.best.as_ref().unwrap();
            assert!(best.converged && best.gap <= 1e-9);
        }
        // <P_k e_n, e_n> = [n <= k]
        for n in 0..8 {
            for k in 0..8 {
                let expect = if n <= k { 1.0 } else { 0.0 };
                assert_eq!(g.xy_a.get(n * 8 + n, k), expect);
            }
        }
        assert!(remark2_gallery(3, 1e-9).is_err());
    }

    fn random_kernel(seed: u64, m: usize, n: usize) -> SampledKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = IndexSampling::integers(0, m as i64 - 1).unwrap();
        let cols = IndexSampling::integers(0, n as i64 - 1).unwrap();
        SampledKernel::from_values(rows, cols, (0..m * n).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap()
    }

    fn random_mean(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMean {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<(String, f64)> = raw.iter().enumerate().map(|(i, v)| (i.to_string(), v / total)).collect();
        let head: f64 = w[..n - 1].iter().map(|(_, v)| v).sum();
        w[n - 1].1 = (1.0 - head).max(0.0);
        DiscreteMean::new(w).unwrap()
    }

    proptest! {
        #[test]
        fn orders_agree(seed in any::<u64>()) {
            let k = random_kernel(seed, 9, 7);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
            let m = random_mean(&mut rng, 9);
            let n = random_mean(&mut rng, 7);
            let a = iterated_integral(&k, &m, &n, Order::RowsFirst).unwrap();
            let b = iterated_integral(&k, &m, &n, Order::ColsFirst).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * k.bound());
        }

        #[test]
        fn affine_in_row_mean(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
            let k = random_kernel(seed, 6, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(11));
            let m1 = random_mean(&mut rng, 6);
            let m2 = random_mean(&mut rng, 6);
            let n = random_mean(&mut rng, 5);
            let mix: Vec<(String, f64)> = m1.weights().iter().zip(m2.weights())
                .map(|((id, a), (_, b))| (id.clone(), lambda * a + (1.0 - lambda) * b))
                .collect();
            let mixed = DiscreteMean::new(mix).unwrap();
            let lhs = iterated_integral(&k, &mixed, &n, Order::RowsFirst).unwrap();
            let rhs = lambda * iterated_integral(&k, &m1, &n, Order::RowsFirst).unwrap()
                + (1.0 - lambda) * iterated_integral(&k, &m2, &n, Order::RowsFirst).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * k.bound().max(1.0));
        }

        #[test]
        fn gap_symmetric_under_transpose(seed in any::<u64>(), lr in 8usize..14, lc in 8usize..14) {
            let k = random_kernel(seed, 14, 14);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r: Vec<usize> = (0..lr).map(|_| rng.gen_range(0..14)).collect();
            let c: Vec<usize> = (0..lc).map(|_| rng.gen_range(0..14)).collect();
            let cfg = DoubleLimitConfig { tol: 20.0, ..Default::default() };
            let a = double_limit_positions(&k, &r, &c, &cfg).unwrap();
            let b = double_limit_positions(&k.transpose(), &c, &r, &cfg).unwrap();
            prop_assert_eq!(a.limit_row_first, b.limit_col_first);
            prop_assert_eq!(a.limit_col_first, b.limit_row_first);
            prop_assert_eq!(a.gap, b.gap);
            prop_assert_eq!(a.converged, b.converged);
        }
    }
}
