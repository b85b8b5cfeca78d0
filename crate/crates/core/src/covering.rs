//! Epsilon-nets and covering numbers of row and column families under the
//! sup-distance, the row-net to column-net transfer, nets for sums of
//! kernels, and covering-count profiles across refinement levels.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{sup_distance_capped, sup_distance_unchecked, SampledKernel};
use crate::par;

/// Relative slack used by every coverage check, multiplied by the bound.
pub const COVERAGE_SLACK: f64 = 1e-12;

/// An indexed family of equal-length real vectors, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFamily {
    ids: Vec<String>,
    data: Vec<f64>,
    dim: usize,
}

impl VectorFamily {
    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "vector `{}` has length {}, expected {}",
                ids[i],
                v.len(),
                dim
            )));
        }
        Self::from_parts(ids, vectors.concat(), dim)
    }

    fn from_parts(ids: Vec<String>, data: Vec<f64>, dim: usize) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("vector `{}`", ids[pos / dim.max(1)]),
                value: data[pos],
            });
        }
        Ok(VectorFamily { ids, data, dim })
    }

    /// The rows of `k`.
    pub fn rows(k: &SampledKernel) -> Self {
        VectorFamily {
            ids: k.rows().ids(),
            data: k.values().to_vec(),
            dim: k.n_cols(),
        }
    }

    /// The columns of `k`.
    pub fn cols(k: &SampledKernel) -> Self {
        Self::rows(&k.transpose())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn position_map(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

/// A finite net over a vector family.
///
/// `centers[k]` is the vector of member `member_ids[k]`; `assignment[i]` is
/// the member covering `vector_ids[i]`. Members produced by [`greedy_net`]
/// and [`transfer_net`] are vectors of the family itself; [`sum_net`]
/// produces synthetic members (sums of two net vectors).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetResult {
    pub member_ids: Vec<String>,
    #[serde(skip)]
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
    pub verified: bool,
    pub vector_ids: Vec<String>,
    pub assignment: Vec<usize>,
}

impl NetResult {
    fn empty(radius: f64) -> Self {
        NetResult {
            member_ids: Vec::new(),
            centers: Vec::new(),
            radius,
            verified: false,
            vector_ids: Vec::new(),
            assignment: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    /// The member covering the vector `id`.
    pub fn assigned_member(&self, id: &str) -> Option<&str> {
        let i = self.vector_ids.iter().position(|v| v == id)?;
        Some(&self.member_ids[self.assignment[i]])
    }
}

/// Assign every vector to the first center within `radius + slack`, or
/// `None` if some vector is uncovered.
fn check_coverage(family: &VectorFamily, centers: &[Vec<f64>], radius: f64, slack: f64) -> Option<Vec<usize>> {
    let limit = radius + slack;
    let assignment = par::map_range(family.len(), |i| {
        let v = family.vector(i);
        centers
            .iter()
            .position(|c| sup_distance_capped(c, v, limit) <= limit)
    });
    assignment.into_iter().collect()
}

fn slack_for(bound: f64) -> f64 {
    COVERAGE_SLACK * bound
}

fn validate_radius(name: &str, r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be a positive finite number, got {r}")))
    }
}

fn finish_net(family: &VectorFamily, members: Vec<usize>, radius: f64, bound: f64) -> NetResult {
    let centers: Vec<Vec<f64>> = members.iter().map(|&m| family.vector(m).to_vec()).collect();
    let checked = check_coverage(family, &centers, radius, slack_for(bound));
    NetResult {
        member_ids: members.iter().map(|&m| family.ids[m].clone()).collect(),
        centers,
        radius,
        verified: checked.is_some(),
        vector_ids: family.ids.clone(),
        assignment: checked.unwrap_or_default(),
    }
}

/// Farthest-point greedy `epsilon`-net.
///
/// Starts from the first vector and repeatedly adds the vector farthest from
/// the current net (lowest index on ties) while that distance exceeds
/// `epsilon`. The result is checked exhaustively before it is returned. An
/// empty family yields an empty, unverified net.
pub fn greedy_net(family: &VectorFamily, epsilon: f64) -> Result<NetResult> {
    greedy_net_from(family, epsilon, 0)
}

/// [`greedy_net`] with the traversal started at vector `start`.
pub fn greedy_net_from(family: &VectorFamily, epsilon: f64, start: usize) -> Result<NetResult> {
    validate_radius("epsilon", epsilon)?;
    if family.is_empty() {
        return Ok(NetResult::empty(epsilon));
    }
    if start >= family.len() {
        return Err(Error::InvalidInput(format!(
            "start index {start} out of range for {} vectors",
            family.len()
        )));
    }
    let members = greedy_members(family, epsilon, start);
    Ok(finish_net(family, members, epsilon, family.max_abs()))
}

fn greedy_members(family: &VectorFamily, epsilon: f64, start: usize) -> Vec<usize> {
    let first = family.vector(start);
    let mut min_dist = par::map_range(family.len(), |i| sup_distance_unchecked(first, family.vector(i)));
    let mut members = vec![start];
    while let Some((far, d)) = par::argmax(&min_dist) {
        if d <= epsilon {
            break;
        }
        members.push(far);
        let center = family.vector(far);
        par::for_each_mut(&mut min_dist, |i, m| {
            let d = sup_distance_capped(center, family.vector(i), *m);
            if d < *m {
                *m = d;
            }
        });
    }
    members
}

/// Families larger than this are counted from the lowest-id start only, to
/// keep the pairwise distance table within memory.
pub const MULTI_START_LIMIT: usize = 4096;

/// Upper bound on the minimal covering number at `epsilon`.
///
/// The farthest-point traversal is run from every vector and the shortest
/// prefix that covers at `epsilon` is reported. Each traversal order is
/// independent of `epsilon`, so the count is nonincreasing in `epsilon`; taking
/// the minimum over starts removes most of the dependence on where the
/// sample points happen to fall. Above [`MULTI_START_LIMIT`] vectors this is
/// the size of [`greedy_net`].
pub fn covering_count(family: &VectorFamily, epsilon: f64) -> Result<usize> {
    validate_radius("epsilon", epsilon)?;
    if family.len() > MULTI_START_LIMIT {
        return Ok(greedy_net(family, epsilon)?.len());
    }
    Ok(DistanceTable::new(family).min_traversal_count(epsilon))
}

/// Covering counts for several radii, sharing one distance table.
pub fn covering_counts(family: &VectorFamily, epsilons: &[f64]) -> Result<Vec<usize>> {
    for &e in epsilons {
        validate_radius("epsilon", e)?;
    }
    if family.len() > MULTI_START_LIMIT {
        return epsilons.iter().map(|&e| Ok(greedy_net(family, e)?.len())).collect();
    }
    let table = DistanceTable::new(family);
    Ok(epsilons.iter().map(|&e| table.min_traversal_count(e)).collect())
}

/// Symmetric table of pairwise sup-distances.
struct DistanceTable {
    n: usize,
    d: Vec<f64>,
}

impl DistanceTable {
    fn new(family: &VectorFamily) -> Self {
        let n = family.len();
        let upper = par::map_range(n, |i| {
            let v = family.vector(i);
            (i + 1..n)
                .map(|j| sup_distance_unchecked(v, family.vector(j)))
                .collect::<Vec<_>>()
        });
        let mut d = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &x) in row.iter().enumerate() {
                let j = i + 1 + off;
                d[i * n + j] = x;
                d[j * n + i] = x;
            }
        }
        DistanceTable { n, d }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Length of the farthest-point traversal from `start` until the
    /// covering radius drops to `epsilon`, giving up beyond `cap`.
    fn traversal_count(&self, start: usize, epsilon: f64, cap: usize) -> usize {
        let mut min_dist = self.row(start).to_vec();
        let mut count = 1;
        while let Some((far, d)) = par::argmax(&min_dist) {
            if d <= epsilon || count >= cap {
                break;
            }
            count += 1;
            for (m, &x) in min_dist.iter_mut().zip(self.row(far)) {
                if x < *m {
                    *m = x;
                }
            }
        }
        count
    }

    fn min_traversal_count(&self, epsilon: f64) -> usize {
        if self.n == 0 {
            return 0;
        }
        let first = self.traversal_count(0, epsilon, usize::MAX);
        let others = par::map_range(self.n - 1, |s| self.traversal_count(s + 1, epsilon, first));
        others.into_iter().fold(first, usize::min)
    }
}

/// Radius-zero net made of the first occurrence of every distinct vector.
pub fn distinct_net(family: &VectorFamily) -> NetResult {
    let mut members: Vec<usize> = Vec::new();
    for i in 0..family.len() {
        if !members.iter().any(|&m| family.vector(m) == family.vector(i)) {
            members.push(i);
        }
    }
    finish_net(family, members, 0.0, family.max_abs())
}

/// Re-run the coverage check of `net` against `family`.
pub fn verify_net(family: &VectorFamily, net: &NetResult, bound: f64) -> bool {
    if family.is_empty() {
        return net.is_empty();
    }
    if net.centers.iter().any(|c| c.len() != family.dim()) {
        return false;
    }
    check_coverage(family, &net.centers, net.radius, slack_for(bound)).is_some()
}

fn row_net_positions(k: &SampledKernel, net: &NetResult) -> Result<Vec<usize>> {
    let rows = VectorFamily::rows(k);
    if !net.verified || !verify_net(&rows, net, k.bound()) {
        return Err(Error::UnverifiedNet);
    }
    let positions = rows.position_map();
    net.member_ids
        .iter()
        .zip(&net.centers)
        .map(|(id, c)| match positions.get(id.as_str()) {
            Some(&p) if rows.vector(p) == c.as_slice() => Ok(p),
            _ => Err(Error::UnverifiedNet),
        })
        .collect()
}

/// Turn a verified `epsilon`-net `F` of the rows of `k` into a net of its
/// columns with radius `delta + 2 epsilon`.
///
/// Columns are restricted to the rows in `F`; a greedy `delta`-net of the
/// restricted columns is built, and the corresponding full columns are
/// returned and checked exhaustively at the transferred radius.
pub fn transfer_net(k: &SampledKernel, row_net: &NetResult, delta: f64) -> Result<NetResult> {
    validate_radius("delta", delta)?;
    let f_rows = row_net_positions(k, row_net)?;
    let restricted = VectorFamily {
        ids: k.cols().ids(),
        data: (0..k.n_cols())
            .flat_map(|j| f_rows.iter().map(move |&i| k.get(i, j)))
            .collect(),
        dim: f_rows.len(),
    };
    let members = if restricted.is_empty() {
        Vec::new()
    } else {
        greedy_members(&restricted, delta, 0)
    };
    let cols = VectorFamily::cols(k);
    Ok(finish_net(&cols, members, delta + 2.0 * row_net.radius, k.bound()))
}

/// The box-covering bound `(ceil(2B/delta) + 1)^|F|` on the size of a
/// `delta`-net of vectors with `|F|` entries bounded by `B`.
pub fn box_covering_bound(bound: f64, delta: f64, net_size: usize) -> f64 {
    ((2.0 * bound / delta).ceil() + 1.0).powi(net_size as i32)
}

/// Net for the rows of `f + g` at radius `eps_f + eps_g` from verified row
/// nets of `f` and `g`. Members are the sums `u + v` of the net pairs that
/// cover some row; there are at most `|net_f| * |net_g|` of them.
pub fn sum_net(f: &SampledKernel, net_f: &NetResult, g: &SampledKernel, net_g: &NetResult) -> Result<NetResult> {
    if f.rows() != g.rows() || f.cols() != g.cols() {
        return Err(Error::DimensionMismatch("sum_net needs kernels on identical samplings".into()));
    }
    row_net_positions(f, net_f)?;
    row_net_positions(g, net_g)?;
    let sum = f.add(g)?;
    let family = VectorFamily::rows(&sum);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..family.len() {
        let p = (net_f.assignment[i], net_g.assignment[i]);
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let centers: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(a, b)| net_f.centers[a].iter().zip(&net_g.centers[b]).map(|(x, y)| x + y).collect())
        .collect();
    let radius = net_f.radius + net_g.radius;
    let checked = check_coverage(&family, &centers, radius, slack_for(f.bound() + g.bound()));
    Ok(NetResult {
        member_ids: pairs
            .iter()
            .map(|&(a, b)| format!("{}+{}", net_f.member_ids[a], net_g.member_ids[b]))
            .collect(),
        centers,
        radius,
        verified: checked.is_some(),
        vector_ids: family.ids.clone(),
        assignment: checked.unwrap_or_default(),
    })
}

/// Which family of a kernel is covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Rows,
    Cols,
}

impl Orientation {
    pub fn label(self) -> &'static str {
        match self {
            Orientation::Rows => "rows",
            Orientation::Cols => "cols",
        }
    }

    pub fn family(self, k: &SampledKernel) -> VectorFamily {
        match self {
            Orientation::Rows => VectorFamily::rows(k),
            Orientation::Cols => VectorFamily::cols(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Bounded,
    Growing,
    Inconclusive,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Bounded => "bounded",
            Classification::Growing => "growing",
            Classification::Inconclusive => "inconclusive",
        })
    }
}

/// Classify a covering-count table `counts[eps][level]`.
///
/// Bounded: at every radius the finest level's count equals the previous
/// level's. Growing: at some radius the count grows by a factor of at least
/// 1.5 across two consecutive level steps. Anything else, or fewer than
/// three levels, is inconclusive.
pub fn classify_counts(counts: &[Vec<usize>]) -> Classification {
    let levels = counts.first().map(Vec::len).unwrap_or(0);
    if levels < 3 || counts.iter().any(|c| c.len() != levels) {
        return Classification::Inconclusive;
    }
    if counts.iter().all(|c| c[levels - 1] == c[levels - 2]) {
        return Classification::Bounded;
    }
    let grows = |a: usize, b: usize| b as f64 >= 1.5 * a as f64;
    let growing = counts
        .iter()
        .any(|c| c.windows(3).any(|w| grows(w[0], w[1]) && grows(w[1], w[2])));
    if growing {
        Classification::Growing
    } else {
        Classification::Inconclusive
    }
}

/// Covering counts of one orientation across refinement levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactnessProfile {
    pub orientation: Orientation,
    pub epsilons: Vec<f64>,
    pub levels: Vec<u32>,
    /// Number of vectors covered at each level.
    pub sizes: Vec<usize>,
    /// `counts[e][l]`: greedy covering count at `epsilons[e]`, `levels[l]`.
    pub counts: Vec<Vec<usize>>,
    pub classification: Classification,
}

/// Covering counts of the rows (or columns) of each kernel in a refinement
/// family, at each radius, with the bounded/growing classification.
pub fn compactness_profile(
    kernels: &[SampledKernel],
    epsilons: &[f64],
    orientation: Orientation,
) -> Result<CompactnessProfile> {
    if epsilons.is_empty() {
        return Err(Error::InvalidInput("no radii given".into()));
    }
    for &e in epsilons {
        validate_radius("epsilon", e)?;
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("radii must be strictly decreasing".into()));
    }
    let levels: Vec<u32> = kernels.iter().map(SampledKernel::level).collect();
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "refinement levels must be strictly increasing, got {levels:?}"
        )));
    }
    let families: Vec<VectorFamily> = kernels.iter().map(|k| orientation.family(k)).collect();
    let mut counts = vec![vec![0; kernels.len()]; epsilons.len()];
    for (l, fam) in families.iter().enumerate() {
        for (e, c) in covering_counts(fam, epsilons)?.into_iter().enumerate() {
            counts[e][l] = c;
        }
    }
    let classification = classify_counts(&counts);
    Ok(CompactnessProfile {
        orientation,
        epsilons: epsilons.to_vec(),
        levels,
        sizes: families.iter().map(VectorFamily::len).collect(),
        counts,
        classification,
    })
}

/// Discrete joint-continuity modulus on a product grid: the largest
/// `|k(i,j) - k(i',j')|` over pairs with `max(d(i,i'), d(j,j')) <= h`.
pub fn joint_continuity_modulus(k: &SampledKernel, h: f64) -> Result<f64> {
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::InvalidInput(format!("step must be nonnegative, got {h}")));
    }
    let (Some(row_step), Some(col_step)) = (k.rows().grid_step(), k.cols().grid_step()) else {
        return Err(Error::InvalidInput(
            "joint continuity modulus needs uniform one-dimensional grids".into(),
        ));
    };
    let reach = |step: f64| ((h / step) * (1.0 + 1e-9)).floor() as usize;
    let (ri, rj) = (reach(row_step), reach(col_step));
    let within = |a: f64, b: f64| (a - b).abs() <= h * (1.0 + 1e-9) + 1e-15;
    let (m, n) = (k.n_rows(), k.n_cols());
    let per_row = par::map_range(m, |i| {
        let mut best = 0.0f64;
        let i_hi = (i + ri).min(m - 1);
        for i2 in i..=i_hi {
            if !within(k.rows().coords(i)[0], k.rows().coords(i2)[0]) {
                continue;
            }
            for j in 0..n {
                let v = k.get(i, j);
                let j_lo = j.saturating_sub(rj);
                let j_hi = (j + rj).min(n - 1);
                for j2 in j_lo..=j_hi {
                    if within(k.cols().coords(j)[0], k.cols().coords(j2)[0]) {
                        best = best.max((v - k.get(i2, j2)).abs());
                    }
                }
            }
        }
        best
    });
    Ok(per_row.into_iter().fold(0.0, f64::max))
}

/// Classification of a kernel from its row and column profiles: the common
/// value when they agree, else inconclusive.
pub fn joint_classification(rows: Option<&CompactnessProfile>, cols: Option<&CompactnessProfile>) -> Classification {
    match (rows, cols) {
        (Some(r), Some(c)) if r.classification == c.classification => r.classification,
        (Some(_), Some(_)) | (None, None) => Classification::Inconclusive,
        (Some(p), None) | (None, Some(p)) => p.classification,
    }
}

/// CSV with header `epsilon,level,row_count,col_count,classification`, one
/// line per radius and level (a missing orientation leaves its count empty),
/// and a trailer `# classification=.. rows=.. cols=..`.
pub fn profile_csv(rows: Option<&CompactnessProfile>, cols: Option<&CompactnessProfile>) -> Result<String> {
    let mut out = String::from("epsilon,level,row_count,col_count,classification\n");
    write_profile_rows(&mut out, None, rows, cols)?;
    out.push_str(&trailer(rows, cols));
    Ok(out)
}

/// [`profile_csv`] with a leading `grouping` column, one row profile per
/// grouping.
pub fn grouped_profile_csv(profiles: &[(String, CompactnessProfile)]) -> Result<String> {
    let mut out = String::from("grouping,epsilon,level,row_count,col_count,classification\n");
    for (g, p) in profiles {
        write_profile_rows(&mut out, Some(g), Some(p), None)?;
    }
    for (g, p) in profiles {
        out.push_str(&format!("# grouping={g} {}", trailer(Some(p), None).trim_start_matches("# ")));
    }
    Ok(out)
}

fn trailer(rows: Option<&CompactnessProfile>, cols: Option<&CompactnessProfile>) -> String {
    let show = |p: Option<&CompactnessProfile>| p.map_or("-".to_string(), |p| p.classification.to_string());
    format!(
        "# classification={} rows={} cols={}\n",
        joint_classification(rows, cols),
        show(rows),
        show(cols)
    )
}

fn write_profile_rows(
    out: &mut String,
    grouping: Option<&str>,
    rows: Option<&CompactnessProfile>,
    cols: Option<&CompactnessProfile>,
) -> Result<()> {
    let Some(shape) = rows.or(cols) else {
        return Err(Error::InvalidInput("no profile to write".into()));
    };
    if let (Some(r), Some(c)) = (rows, cols) {
        if r.epsilons != c.epsilons || r.levels != c.levels {
            return Err(Error::InvalidInput("row and column profiles use different radii or levels".into()));
        }
    }
    let joint = joint_classification(rows, cols);
    let count = |p: Option<&CompactnessProfile>, e: usize, l: usize| p.map_or(String::new(), |p| p.counts[e][l].to_string());
    for (e, eps) in shape.epsilons.iter().enumerate() {
        for (l, level) in shape.levels.iter().enumerate() {
            if let Some(g) = grouping {
                out.push_str(g);
                out.push(',');
            }
            out.push_str(&format!("{eps},{level},{},{},{joint}\n", count(rows, e, l), count(cols, e, l)));
        }
    }
    Ok(())
}
