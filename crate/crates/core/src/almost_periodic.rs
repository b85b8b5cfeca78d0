//! Translation kernels `(x, y) -> f(x . y)` on a commutative group and
//! covering profiles over growing windows, as a finite test of almost
//! periodicity.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::covering::{compactness_profile, Classification, CompactnessProfile, Orientation};
use crate::error::{Error, Result};
use crate::kernel::{Grouping, IndexSampling, MultiKernel, SampledKernel};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupOp {
    /// `(R, +)`.
    RealAddition,
    /// `R / 2 pi Z`, represented in `[0, 2 pi)`.
    CircleAddition,
    /// `(Z, +)`; coordinates must be integers.
    IntegerAddition,
}

impl GroupOp {
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            GroupOp::RealAddition | GroupOp::IntegerAddition => a + b,
            GroupOp::CircleAddition => (a + b).rem_euclid(TAU),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GroupOp::RealAddition => "real",
            GroupOp::CircleAddition => "circle",
            GroupOp::IntegerAddition => "integer",
        }
    }

    fn check(self, s: &IndexSampling) -> Result<()> {
        if s.dim() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "group elements are scalars, got {}-dimensional points",
                s.dim()
            )));
        }
        if self == GroupOp::IntegerAddition {
            if let Some(i) = (0..s.len()).find(|&i| s.coords(i)[0].fract() != 0.0) {
                return Err(Error::InvalidInput(format!("point `{}` is not an integer", s.id(i))));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for GroupOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(GroupOp::RealAddition),
            "circle" => Ok(GroupOp::CircleAddition),
            "integer" => Ok(GroupOp::IntegerAddition),
            _ => Err(Error::InvalidInput(format!("unknown group `{s}` (real, circle, integer)"))),
        }
    }
}

impl fmt::Display for GroupOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `k(x, y) = f(x . y)`. With a declared bound, an entry above it is an
/// error.
pub fn ap_kernel<F>(f: F, x: IndexSampling, y: IndexSampling, op: GroupOp, bound: Option<f64>) -> Result<SampledKernel>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    op.check(&x)?;
    op.check(&y)?;
    let k = SampledKernel::from_fn(x, y, |a, b| f(op.combine(a[0], b[0])))?;
    match bound {
        Some(b) => k.with_bound(b),
        None => Ok(k),
    }
}

/// Grid of `[0, w]` with `density` points per unit length.
pub fn window_sampling(w: f64, density: f64, op: GroupOp) -> Result<IndexSampling> {
    if !(w > 0.0 && w.is_finite() && density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidInput(format!("window {w} and density {density} must be positive")));
    }
    if op == GroupOp::IntegerAddition {
        if w.fract() != 0.0 || density != 1.0 {
            return Err(Error::InvalidInput("integer windows need an integer width and density 1".into()));
        }
        return IndexSampling::integers(0, w as i64);
    }
    let n = (w * density).round() as usize + 1;
    IndexSampling::grid(0.0, w, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApClassification {
    AlmostPeriodicConsistent,
    NotAlmostPeriodic,
    Inconclusive,
}

impl From<Classification> for ApClassification {
    fn from(c: Classification) -> Self {
        match c {
            Classification::Bounded => ApClassification::AlmostPeriodicConsistent,
            Classification::Growing => ApClassification::NotAlmostPeriodic,
            Classification::Inconclusive => ApClassification::Inconclusive,
        }
    }
}

impl fmt::Display for ApClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApClassification::AlmostPeriodicConsistent => "almost-periodic-consistent",
            ApClassification::NotAlmostPeriodic => "not-almost-periodic",
            ApClassification::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApProfile {
    pub windows: Vec<f64>,
    /// Row profile; level `l` is window `windows[l]`.
    pub profile: CompactnessProfile,
    pub classification: ApClassification,
}

fn check_windows(windows: &[f64]) -> Result<()> {
    if windows.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 windows, got {}", windows.len())));
    }
    if windows.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("windows must be strictly increasing".into()));
    }
    Ok(())
}

/// Covering counts of the rows of `f(x . y)` with `x, y` on `[0, W]` at a
/// fixed density, for each window `W`.
pub fn ap_profile<F>(f: F, windows: &[f64], density: f64, epsilons: &[f64], op: GroupOp) -> Result<ApProfile>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    check_windows(windows)?;
    let kernels = windows
        .iter()
        .enumerate()
        .map(|(l, &w)| {
            let s = window_sampling(w, density, op)?.with_level(l as u32);
            ap_kernel(&f, s.clone(), s, op, None)
        })
        .collect::<Result<Vec<_>>>()?;
    let profile = compactness_profile(&kernels, epsilons, Orientation::Rows)?;
    Ok(ApProfile {
        windows: windows.to_vec(),
        classification: profile.classification.into(),
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleGroupingReport {
    /// One row profile per grouping, in [`Grouping::ALL`] order.
    pub profiles: Vec<(Grouping, CompactnessProfile)>,
    pub agree: bool,
}

impl TripleGroupingReport {
    pub fn classification(&self, g: Grouping) -> Option<Classification> {
        self.profiles.iter().find(|p| p.0 == g).map(|p| p.1.classification)
    }
}

/// Profile the three regroupings of `(x, y, z) -> f(x . y . z)`, one
/// `[X, Y, Z]` triple per refinement level.
pub fn triple_grouping_check<F>(f: F, levels: &[[IndexSampling; 3]], op: GroupOp, epsilons: &[f64]) -> Result<TripleGroupingReport>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    if levels.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 levels, got {}", levels.len())));
    }
    let mut by_grouping: Vec<Vec<SampledKernel>> = vec![Vec::new(); 3];
    for (l, axes) in levels.iter().enumerate() {
        for s in axes {
            op.check(s)?;
        }
        let [x, y, z] = axes.clone().map(|s| s.with_level(l as u32));
        let multi = MultiKernel::from_fn(x, y, z, |a, b, c| f(op.combine(op.combine(a[0], b[0]), c[0])))?;
        for (g, out) in Grouping::ALL.iter().zip(by_grouping.iter_mut()) {
            out.push(multi.regroup(*g)?);
        }
    }
    let profiles = par::map_slice(&by_grouping, |ks| compactness_profile(ks, epsilons, Orientation::Rows))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let agree = profiles.windows(2).all(|w| w[0].classification == w[1].classification);
    Ok(TripleGroupingReport {
        profiles: Grouping::ALL.into_iter().zip(profiles).collect(),
        agree,
    })
}
