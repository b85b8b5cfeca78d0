//! Upper and lower semicontinuous envelopes of a bounded function known on a
//! dense sample of an interval, and the continuous-extension test built on
//! them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::par;

/// Anything that can report the extrema of its samples inside an open ball.
///
/// A source may carry several channels (several functions on the same
/// sample); `ball_extrema` returns `(min, max)` per channel, or `None` when
/// the ball holds no sample.
pub trait LocalSamples: Sync {
    fn span(&self) -> (f64, f64);
    fn channels(&self) -> usize;
    fn bound(&self) -> f64;
    fn ball_extrema(&self, t: f64, r: f64) -> Option<Vec<(f64, f64)>>;
}

/// A bounded function on a finite increasing sample of an interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    domain: (f64, f64),
    points: Vec<f64>,
    values: Vec<f64>,
    bound: f64,
}

impl GridFunction {
    pub fn new(domain: (f64, f64), points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!("domain ({a}, {b}) is not an interval")));
        }
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points for {} values",
                points.len(),
                values.len()
            )));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("sample points must be strictly increasing".into()));
        }
        if let Some(&p) = points.iter().find(|&&p| !(a <= p && p <= b)) {
            return Err(Error::InvalidInput(format!("sample point {p} outside [{a}, {b}]")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("sample point {}", points[i]),
                value: values[i],
            });
        }
        let bound = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        Ok(GridFunction {
            domain,
            points,
            values,
            bound,
        })
    }

    pub fn from_fn(domain: (f64, f64), points: Vec<f64>, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let values = points.iter().map(|&s| f(s)).collect();
        Self::new(domain, points, values)
    }

    /// Sample `f` at `a + k (b - a) / 2^depth`, with or without the ends.
    pub fn dyadic(domain: (f64, f64), depth: u32, ends: Ends, f: impl FnMut(f64) -> f64) -> Result<Self> {
        let points = dyadic_points(domain, depth, ends)?;
        Self::from_fn(domain, points, f)
    }

    /// Declare a larger bound than the maximal absolute value.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound >= self.bound) {
            return Err(Error::BoundExceeded {
                location: "grid function".into(),
                value: self.bound,
                bound,
            });
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Value at a sample point, if `s` is one.
    pub fn value_at(&self, s: f64) -> Option<f64> {
        self.points
            .binary_search_by(|p| p.total_cmp(&s))
            .ok()
            .map(|i| self.values[i])
    }

    /// Index range of the samples with `|s - t| < r`.
    pub fn ball_range(&self, t: f64, r: f64) -> std::ops::Range<usize> {
        let lo = self.points.partition_point(|&p| p < t && !(t - p < r));
        let hi = self.points.partition_point(|&p| p <= t || p - t < r);
        lo..hi.max(lo)
    }
}

impl LocalSamples for GridFunction {
    fn span(&self) -> (f64, f64) {
        self.domain
    }

    fn channels(&self) -> usize {
        1
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn ball_extrema(&self, t: f64, r: f64) -> Option<Vec<(f64, f64)>> {
        let range = self.ball_range(t, r);
        if range.is_empty() {
            return None;
        }
        Some(vec![extrema(&self.values[range])])
    }
}

fn extrema(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Which interval ends belong to the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Ends {
    pub left: bool,
    pub right: bool,
}

impl Ends {
    pub const OPEN: Ends = Ends {
        left: false,
        right: false,
    };
    pub const CLOSED: Ends = Ends {
        left: true,
        right: true,
    };
    pub const RIGHT: Ends = Ends {
        left: false,
        right: true,
    };
}

pub const MAX_DYADIC_DEPTH: u32 = 52;

fn check_depth(depth: u32) -> Result<()> {
    if depth > MAX_DYADIC_DEPTH {
        return Err(Error::InvalidInput(format!(
            "dyadic depth {depth} exceeds {MAX_DYADIC_DEPTH}"
        )));
    }
    Ok(())
}

fn dyadic_points(domain: (f64, f64), depth: u32, ends: Ends) -> Result<Vec<f64>> {
    check_depth(depth)?;
    if depth > 26 {
        return Err(Error::InvalidInput(format!(
            "a stored dyadic sample of depth {depth} is too large; use DyadicFunction"
        )));
    }
    let (a, b) = domain;
    let n = 1u64 << depth;
    let first = if ends.left { 0 } else { 1 };
    let last = if ends.right { n } else { n - 1 };
    Ok((first..=last).map(|k| dyadic_point(a, b, k, depth)).collect())
}

fn dyadic_point(a: f64, b: f64, k: u64, depth: u32) -> f64 {
    a + (b - a) * (k as f64 / (1u64 << depth) as f64)
}

/// A function evaluated lazily on the dyadic points of an interval.
///
/// Balls of radius `r` are sampled at the depth `q` that puts about
/// `points_per_ball` samples inside, never below `base_depth` nor above
/// `max_depth`. Since every depth contains the coarser ones, all samples
/// belong to one dense set: the dyadic rationals of the interval.
#[derive(Clone)]
pub struct DyadicFunction {
    domain: (f64, f64),
    ends: Ends,
    base_depth: u32,
    max_depth: u32,
    points_per_ball: u64,
    bound: Option<f64>,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for DyadicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DyadicFunction")
            .field("domain", &self.domain)
            .field("ends", &self.ends)
            .field("base_depth", &self.base_depth)
            .field("max_depth", &self.max_depth)
            .field("points_per_ball", &self.points_per_ball)
            .finish_non_exhaustive()
    }
}

impl DyadicFunction {
    pub fn new<F>(domain: (f64, f64), ends: Ends, base_depth: u32, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!("domain ({a}, {b}) is not an interval")));
        }
        check_depth(base_depth)?;
        Ok(DyadicFunction {
            domain,
            ends,
            base_depth,
            max_depth: 48.max(base_depth),
            points_per_ball: 4096,
            bound: None,
            f: Arc::new(f),
        })
    }

    /// Function of `s` given as an expression.
    pub fn from_expr(src: &str, domain: (f64, f64), ends: Ends, base_depth: u32) -> Result<Self> {
        let e = Expr::parse(src, &["s"])?;
        Self::new(domain, ends, base_depth, move |s| e.eval(&[s]))
    }

    pub fn with_max_depth(mut self, max_depth: u32) -> Result<Self> {
        check_depth(max_depth)?;
        self.max_depth = max_depth.max(self.base_depth);
        Ok(self)
    }

    pub fn with_points_per_ball(mut self, n: u64) -> Self {
        self.points_per_ball = n.max(2);
        self
    }

    /// Declared bound; samples exceeding it are reported as errors by
    /// [`DyadicFunction::checked_value`].
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn ends(&self) -> Ends {
        self.ends
    }

    pub fn base_depth(&self) -> u32 {
        self.base_depth
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    pub fn checked_value(&self, s: f64) -> Result<f64> {
        let v = self.eval(s);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                location: format!("s = {s}"),
                value: v,
            });
        }
        if let Some(b) = self.bound {
            if v.abs() > b {
                return Err(Error::BoundExceeded {
                    location: format!("s = {s}"),
                    value: v,
                    bound: b,
                });
            }
        }
        Ok(v)
    }

    /// Stored sample at the base depth.
    pub fn to_grid(&self) -> Result<GridFunction> {
        let g = GridFunction::dyadic(self.domain, self.base_depth, self.ends, |s| self.eval(s))?;
        match self.bound {
            Some(b) => g.with_bound(b),
            None => Ok(g),
        }
    }

    /// Depth used for balls of radius `r`.
    pub fn depth_for_radius(&self, r: f64) -> u32 {
        let (a, b) = self.domain;
        let want = (self.points_per_ball as f64 * (b - a) / (2.0 * r)).log2().ceil();
        let q = if want.is_finite() && want > 0.0 { want as u32 } else { 0 };
        q.clamp(self.base_depth, self.max_depth)
    }

    /// Indices `k` of the depth-`q` points with `|s - t| < r` that belong to
    /// the sample.
    pub(crate) fn ball_indices(&self, t: f64, r: f64, q: u32) -> Option<(u64, u64)> {
        dyadic_ball(self.domain, self.ends, t, r, q)
    }
}

/// Range of dyadic indices `k` at depth `q` (points `a + k (b-a)/2^q`) inside
/// the open ball `|s - t| < r` and allowed by `ends`.
pub(crate) fn dyadic_ball(domain: (f64, f64), ends: Ends, t: f64, r: f64, q: u32) -> Option<(u64, u64)> {
    let (a, b) = domain;
    let n = 1u64 << q;
    let first = if ends.left { 0 } else { 1 };
    let last = if ends.right { n } else { n - 1 };
    lattice_ball(|k| dyadic_point(a, b, k, q), (b - a) / n as f64, a, first, last, t, r)
}

/// Range of indices `k` in `first..=last` whose lattice point `point(k)`
/// (spacing `h`, origin `a`) satisfies `|point(k) - t| < r`.
pub(crate) fn lattice_ball(
    point: impl Fn(u64) -> f64,
    h: f64,
    a: f64,
    first: u64,
    last: u64,
    t: f64,
    r: f64,
) -> Option<(u64, u64)> {
    if first > last {
        return None;
    }
    let clamp = |x: f64| -> u64 {
        if x <= first as f64 {
            first
        } else if x >= last as f64 {
            last
        } else {
            x as u64
        }
    };
    let mut lo = clamp(((t - r - a) / h).floor() - 1.0);
    let mut hi = clamp(((t + r - a) / h).ceil() + 1.0);
    while lo <= hi && !((point(lo) - t).abs() < r) {
        lo += 1;
    }
    while hi >= lo && !((point(hi) - t).abs() < r) {
        if hi == 0 {
            return None;
        }
        hi -= 1;
    }
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

impl LocalSamples for DyadicFunction {
    fn span(&self) -> (f64, f64) {
        self.domain
    }

    fn channels(&self) -> usize {
        1
    }

    fn bound(&self) -> f64 {
        self.bound.unwrap_or(0.0)
    }

    fn ball_extrema(&self, t: f64, r: f64) -> Option<Vec<(f64, f64)>> {
        let q = self.depth_for_radius(r);
        let (lo, hi) = self.ball_indices(t, r, q)?;
        let (a, b) = self.domain;
        let mut ext = (f64::INFINITY, f64::NEG_INFINITY);
        for k in lo..=hi {
            let v = self.eval(dyadic_point(a, b, k, q));
            ext = (ext.0.min(v), ext.1.max(v));
        }
        Some(vec![ext])
    }
}

/// Radius schedule and tolerance for envelope estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeConfig {
    /// Explicit decreasing radii; overrides `r0` and `depth`.
    pub radii: Option<Vec<f64>>,
    /// First radius; default a quarter of the domain length.
    pub r0: Option<f64>,
    /// Number of halvings after `r0`.
    pub depth: u32,
    /// Cauchy tolerance on the last quarter of each sequence.
    pub tol: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            radii: None,
            r0: None,
            depth: 32,
            tol: 1e-6,
        }
    }
}

impl EnvelopeConfig {
    pub fn schedule(&self, domain: (f64, f64)) -> Result<Vec<f64>> {
        let radii = match &self.radii {
            Some(r) => r.clone(),
            None => {
                let r0 = self.r0.unwrap_or((domain.1 - domain.0) / 4.0);
                (0..=self.depth).map(|k| r0 * 0.5f64.powi(k as i32)).collect()
            }
        };
        if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput("radii must be positive and finite".into()));
        }
        if radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("radii must be strictly decreasing".into()));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be nonnegative, got {}", self.tol)));
        }
        Ok(radii)
    }
}

/// Envelope estimates at one point for one channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeValue {
    pub point: f64,
    pub upper: f64,
    pub lower: f64,
    pub gap: f64,
    /// Radii whose balls held samples; shorter than the schedule when the
    /// sample ran out.
    pub radii_used: Vec<f64>,
    /// Sup over the sample in each ball, nonincreasing.
    pub upper_sequence: Vec<f64>,
    /// Inf over the sample in each ball, nondecreasing.
    pub lower_sequence: Vec<f64>,
    pub upper_converged: bool,
    pub lower_converged: bool,
    pub converged: bool,
    /// The sample ran out before the smallest radius.
    pub exhausted: bool,
}

impl EnvelopeValue {
    /// Gaps `upper - lower` along the radius schedule.
    pub fn gap_sequence(&self) -> Vec<f64> {
        self.upper_sequence
            .iter()
            .zip(&self.lower_sequence)
            .map(|(u, l)| u - l)
            .collect()
    }
}

fn spread_ok(values: &[f64], tol: f64) -> bool {
    let tail = &values[values.len() - values.len().div_ceil(4)..];
    let (lo, hi) = extrema(tail);
    hi - lo <= tol
}

fn check_point(span: (f64, f64), t: f64) -> Result<()> {
    if !(span.0 <= t && t <= span.1) {
        return Err(Error::InvalidInput(format!(
            "point {t} outside the closure [{}, {}] of the domain",
            span.0, span.1
        )));
    }
    Ok(())
}

/// Envelopes at `t` for every channel of `f`.
pub fn envelopes<F: LocalSamples + ?Sized>(f: &F, t: f64, cfg: &EnvelopeConfig) -> Result<Vec<EnvelopeValue>> {
    check_point(f.span(), t)?;
    let radii = cfg.schedule(f.span())?;
    let mut raw: Vec<Vec<(f64, f64)>> = Vec::with_capacity(radii.len());
    for &r in &radii {
        match f.ball_extrema(t, r) {
            Some(e) => raw.push(e),
            None => break,
        }
    }
    if raw.is_empty() {
        return Err(Error::NoSamples { point: t, radius: radii[0] });
    }
    let exhausted = raw.len() < radii.len();
    let used = radii[..raw.len()].to_vec();
    Ok((0..f.channels())
        .map(|c| {
            let mut upper: Vec<f64> = raw.iter().map(|e| e[c].1).collect();
            let mut lower: Vec<f64> = raw.iter().map(|e| e[c].0).collect();
            // Nest the balls: each value also covers every smaller ball.
            for i in (0..upper.len().saturating_sub(1)).rev() {
                upper[i] = upper[i].max(upper[i + 1]);
                lower[i] = lower[i].min(lower[i + 1]);
            }
            let u = *upper.last().unwrap();
            let l = *lower.last().unwrap();
            let uc = !exhausted && spread_ok(&upper, cfg.tol);
            let lc = !exhausted && spread_ok(&lower, cfg.tol);
            EnvelopeValue {
                point: t,
                upper: u,
                lower: l,
                gap: u - l,
                radii_used: used.clone(),
                upper_sequence: upper,
                lower_sequence: lower,
                upper_converged: uc,
                lower_converged: lc,
                converged: uc && lc,
                exhausted,
            }
        })
        .collect())
}

/// Envelopes of a single-channel source.
pub fn envelope<F: LocalSamples + ?Sized>(f: &F, t: f64, cfg: &EnvelopeConfig) -> Result<EnvelopeValue> {
    Ok(envelopes(f, t, cfg)?.swap_remove(0))
}

/// One side of an envelope: the estimate, its sequence over the radii, and
/// whether the sequence passed the Cauchy test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSide {
    pub estimate: f64,
    pub sequence: Vec<f64>,
    pub converged: bool,
}

/// `limsup_{s -> t} f(s)` over the sample.
pub fn upper_envelope<F: LocalSamples + ?Sized>(f: &F, t: f64, cfg: &EnvelopeConfig) -> Result<EnvelopeSide> {
    let e = envelope(f, t, cfg)?;
    Ok(EnvelopeSide {
        estimate: e.upper,
        sequence: e.upper_sequence,
        converged: e.upper_converged,
    })
}

/// `liminf_{s -> t} f(s)` over the sample.
pub fn lower_envelope<F: LocalSamples + ?Sized>(f: &F, t: f64, cfg: &EnvelopeConfig) -> Result<EnvelopeSide> {
    let e = envelope(f, t, cfg)?;
    Ok(EnvelopeSide {
        estimate: e.lower,
        sequence: e.lower_sequence,
        converged: e.lower_converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ExtensionOutcome {
    /// Midpoint of a collapsed envelope bracket.
    Value { value: f64 },
    /// The bracket stays open: no continuous extension through this point.
    NotExtendable { gap: f64 },
    /// The estimates did not settle; nothing is claimed.
    NotConverged { gap: f64 },
}

impl ExtensionOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            ExtensionOutcome::Value { value } => Some(*value),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ExtensionOutcome::Value { .. } => "value",
            ExtensionOutcome::NotExtendable { .. } => "not-extendable",
            ExtensionOutcome::NotConverged { .. } => "not-converged",
        }
    }
}

/// Decide one envelope: a value if both sides converged and the gap is
/// within `tol`; not extendable if the gap exceeds `tol` along the whole last
/// quarter of the schedule; otherwise not converged.
pub fn classify_envelope(e: &EnvelopeValue, tol: f64) -> ExtensionOutcome {
    if e.converged && e.gap <= tol {
        return ExtensionOutcome::Value {
            value: (e.upper + e.lower) / 2.0,
        };
    }
    let gaps = e.gap_sequence();
    let tail = &gaps[gaps.len() - gaps.len().div_ceil(4)..];
    if tail.iter().all(|&g| g > tol) {
        ExtensionOutcome::NotExtendable { gap: e.gap }
    } else {
        ExtensionOutcome::NotConverged { gap: e.gap }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointExtension {
    pub envelope: EnvelopeValue,
    pub outcome: ExtensionOutcome,
}

/// Continuous-extension test at each target, evaluated in parallel.
pub fn extend_function<F: LocalSamples + ?Sized>(
    f: &F,
    targets: &[f64],
    cfg: &EnvelopeConfig,
) -> Result<Vec<PointExtension>> {
    let results = par::map_slice(targets, |&t| {
        envelope(f, t, cfg).map(|e| PointExtension {
            outcome: classify_envelope(&e, cfg.tol),
            envelope: e,
        })
    });
    results.into_iter().collect()
}

/// CSV with columns `t, upper, lower, gap, converged, value_or_flag`.
pub fn extension_csv(results: &[PointExtension]) -> String {
    let mut out = String::from("t,upper,lower,gap,converged,value_or_flag\n");
    for r in results {
        let e = &r.envelope;
        let last = match &r.outcome {
            ExtensionOutcome::Value { value } => format!("{value}"),
            other => other.label().to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.point, e.upper, e.lower, e.gap, e.converged, last
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square_dyadic() -> DyadicFunction {
        DyadicFunction::new((0.0, 1.0), Ends::OPEN, 12, |s| s * s).unwrap()
    }

    fn step() -> DyadicFunction {
        DyadicFunction::new((0.0, 3.0), Ends::OPEN, 12, |s| if s < 1.0 { 0.0 } else { 1.0 }).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridFunction::new((0.0, 1.0), vec![0.2, 0.1], vec![1.0, 1.0]).is_err());
        assert!(GridFunction::new((0.0, 1.0), vec![0.2, 1.5], vec![1.0, 1.0]).is_err());
        assert!(GridFunction::new((1.0, 1.0), vec![], vec![]).is_err());
        let g = GridFunction::new((0.0, 1.0), vec![0.2, 0.4], vec![1.0, -3.0]).unwrap();
        assert_eq!(g.bound(), 3.0);
        assert!(g.clone().with_bound(2.0).is_err());
        assert_eq!(g.value_at(0.4), Some(-3.0));
    }

    #[test]
    fn ball_ranges_are_open() {
        let g = GridFunction::dyadic((0.0, 1.0), 3, Ends::CLOSED, |s| s).unwrap();
        let pts = |r: std::ops::Range<usize>| g.points()[r].to_vec();
        assert_eq!(pts(g.ball_range(0.5, 0.125)), vec![0.5]);
        assert_eq!(pts(g.ball_range(0.5, 0.126)), vec![0.375, 0.5, 0.625]);
        assert_eq!(pts(g.ball_range(0.0, 0.2)), vec![0.0, 0.125]);
        assert!(g.ball_range(0.5625, 0.0625).is_empty());
        let (lo, hi) = dyadic_ball((0.0, 1.0), Ends::CLOSED, 0.5, 0.125, 3).unwrap();
        assert_eq!((lo, hi), (4, 4));
        assert_eq!(dyadic_ball((0.0, 1.0), Ends::OPEN, 0.0, 0.125, 3), None);
        assert_eq!(dyadic_ball((0.0, 1.0), Ends::OPEN, 0.0, 0.126, 3), Some((1, 1)));
    }

    #[test]
    fn continuous_function_collapses() {
        let f = square_dyadic();
        for t in [1.0 / 3.0, 1.0 / 7.0, 0.5, 0.9] {
            let e = envelope(&f, t, &EnvelopeConfig::default()).unwrap();
            assert!(e.converged, "{t}");
            assert!((e.upper - t * t).abs() <= 1e-6 && (e.lower - t * t).abs() <= 1e-6);
        }
        let ext = extend_function(&f, &[1.0 / 3.0, 1.0 / 7.0], &EnvelopeConfig::default()).unwrap();
        for (r, t) in ext.iter().zip([1.0 / 3.0, 1.0f64 / 7.0]) {
            assert!((r.outcome.value().unwrap() - t * t).abs() <= 1e-6);
        }
    }

    #[test]
    fn oscillation_at_zero() {
        let f = DyadicFunction::new((0.0, 1.0), Ends::RIGHT, 16, |s| (1.0 / s).sin()).unwrap();
        let e = envelope(&f, 0.0, &EnvelopeConfig::default()).unwrap();
        assert!(e.upper >= 0.999 && e.lower <= -0.999);
        let ext = extend_function(&f, &[0.0], &EnvelopeConfig::default()).unwrap();
        match ext[0].outcome {
            ExtensionOutcome::NotExtendable { gap } => assert!(gap > 1.99),
            ref o => panic!("{o:?}"),
        }
    }

    #[test]
    fn step_gap_is_one() {
        let e = envelope(&step(), 1.0, &EnvelopeConfig::default()).unwrap();
        assert_eq!((e.upper, e.lower, e.gap), (1.0, 0.0, 1.0));
        assert!(e.converged);
        assert!(matches!(classify_envelope(&e, 1e-6), ExtensionOutcome::NotExtendable { .. }));
        // a stored sample sees both sides until its balls run dry
        let fixed = step().to_grid().unwrap();
        let e = envelope(&fixed, 1.0, &EnvelopeConfig::default()).unwrap();
        assert!(e.exhausted);
        assert_eq!(e.gap_sequence()[0], 1.0);
    }

    #[test]
    fn fixed_sample_runs_out_off_sample() {
        let g = GridFunction::dyadic((0.0, 1.0), 10, Ends::OPEN, |s| s).unwrap();
        let e = envelope(&g, 1.0 / 3.0, &EnvelopeConfig::default()).unwrap();
        assert!(e.exhausted && !e.converged);
        assert!(matches!(classify_envelope(&e, 1e-6), ExtensionOutcome::NotConverged { .. }));
        // on-sample targets keep themselves in every ball
        let e = envelope(&g, 0.25, &EnvelopeConfig::default()).unwrap();
        assert!(!e.exhausted && e.converged);
        assert_eq!(e.upper, 0.25);
        assert_eq!(e.lower, 0.25);
    }

    #[test]
    fn errors() {
        let g = GridFunction::new((0.0, 1.0), vec![0.9], vec![1.0]).unwrap();
        let cfg = EnvelopeConfig {
            r0: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(envelope(&g, 0.1, &cfg), Err(Error::NoSamples { .. })));
        assert!(envelope(&g, 1.5, &cfg).is_err());
        let bad = EnvelopeConfig {
            radii: Some(vec![0.1, 0.2]),
            ..Default::default()
        };
        assert!(envelope(&g, 0.9, &bad).is_err());
    }

    #[test]
    fn csv_layout() {
        let ext = extend_function(&step(), &[0.5, 1.0], &EnvelopeConfig::default()).unwrap();
        let csv = extension_csv(&ext);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,upper,lower,gap,converged,value_or_flag");
        assert_eq!(lines[1], "0.5,0,0,0,true,0");
        assert_eq!(lines[2], "1,1,0,1,true,not-extendable");
    }

    fn random_grid(seed: u64) -> GridFunction {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        GridFunction::dyadic((0.0, 1.0), 7, Ends::CLOSED, |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    proptest! {
        #[test]
        fn sequences_are_monotone_and_ordered(seed in any::<u64>(), t in 0.0f64..=1.0) {
            let g = random_grid(seed);
            let e = envelope(&g, t, &EnvelopeConfig::default()).unwrap();
            prop_assert!(e.upper_sequence.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(e.lower_sequence.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(e.gap >= -1e-12 * g.bound());
        }

        #[test]
        fn envelopes_bracket_samples(seed in any::<u64>(), k in 0usize..129) {
            let g = random_grid(seed);
            let s = g.points()[k];
            let e = envelope(&g, s, &EnvelopeConfig::default()).unwrap();
            prop_assert!(e.lower <= g.values()[k] && g.values()[k] <= e.upper);
            let ext = extend_function(&g, &[s], &EnvelopeConfig::default()).unwrap();
            if let Some(v) = ext[0].outcome.value() {
                prop_assert!((v - g.values()[k]).abs() <= 1e-6);
            }
        }

        #[test]
        fn locality(seed in any::<u64>(), t in 0.3f64..0.7, bump in -5.0f64..5.0) {
            let g = random_grid(seed);
            let cfg = EnvelopeConfig { r0: Some(0.1), ..Default::default() };
            let values: Vec<f64> = g.points().iter().zip(g.values())
                .map(|(&p, &v)| if (p - t).abs() >= 0.1 { v + bump } else { v })
                .collect();
            let h = GridFunction::new(g.domain(), g.points().to_vec(), values).unwrap();
            prop_assert_eq!(envelope(&g, t, &cfg).unwrap(), envelope(&h, t, &cfg).unwrap());
        }

        #[test]
        fn refinement_widens_brackets(t in 0.0f64..=1.0, r in 0.01f64..0.3, q in 2u32..10) {
            let f = |s: f64| (7.0 * s).sin() + (s * 31.0).cos();
            let coarse = GridFunction::dyadic((0.0, 1.0), q, Ends::CLOSED, f).unwrap();
            let fine = GridFunction::dyadic((0.0, 1.0), q + 1, Ends::CLOSED, f).unwrap();
            if let (Some(a), Some(b)) = (coarse.ball_extrema(t, r), fine.ball_extrema(t, r)) {
                prop_assert!(b[0].1 >= a[0].1);
                prop_assert!(b[0].0 <= a[0].0);
            }
        }
    }
}
