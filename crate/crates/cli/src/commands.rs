use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use matrix_compactness::almost_periodic::{ap_profile, triple_grouping_check, window_sampling, GroupOp};
use matrix_compactness::covering::{compactness_profile, grouped_profile_csv, profile_csv, Orientation};
use matrix_compactness::envelope::{extend_function, extension_csv, EnvelopeConfig};
use matrix_compactness::expr::Expr;
use matrix_compactness::fubini::{double_limit_positions, remark2_gallery, DoubleLimitConfig, DoubleLimitReport};
use matrix_compactness::semigroup::{
    default_probes, extend_operator, verify_extension, weak_identity_check, CheckStatus, ExtendConfig,
    ExtensionResult, VerificationReport, WeakIdentityReport,
};
use matrix_compactness::spec::{report_json, FunctionSpec, KernelSpec, SamplingSpec, SemigroupSpec};
use matrix_compactness::IndexSampling;

use crate::{Failure, GalleryName, OrientationArg};

type Outcome<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: matrix_compactness::Result<T>) -> Outcome<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

pub fn emit(text: &str, out: Option<&Path>) -> Outcome<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::numerical(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `0.25`, `-2`, `1/3` or `3/2^4`.
pub fn parse_real(s: &str) -> Outcome<f64> {
    let s = s.trim();
    let bad = || Failure::input(format!("`{s}` is not a number"));
    let value = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim();
            let d: f64 = match d.strip_prefix("2^") {
                Some(e) => 2f64.powi(e.parse::<i32>().map_err(|_| bad())?),
                None => d.parse().map_err(|_| bad())?,
            };
            n / d
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// Comma-separated positions, with `a..b` for the half-open range.
pub fn parse_positions(s: &str) -> Outcome<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Failure::input(format!("`{part}` is not a position or range"));
        match part.split_once("..") {
            Some((a, b)) => {
                let a: usize = a.parse().map_err(|_| bad())?;
                let b: usize = b.parse().map_err(|_| bad())?;
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

pub fn covering(path: &Path, eps: &[f64], levels: &[usize], orientation: OrientationArg) -> Outcome<String> {
    let spec = with_path(path, KernelSpec::parse(&read(path)?))?;
    let kernels = if levels.is_empty() {
        vec![with_path(path, spec.build())?]
    } else {
        with_path(path, spec.build_levels(levels))?
    };
    let profile = |o: Orientation| compactness_profile(&kernels, eps, o);
    let rows = match orientation {
        OrientationArg::Rows | OrientationArg::Both => Some(profile(Orientation::Rows)?),
        OrientationArg::Cols => None,
    };
    let cols = match orientation {
        OrientationArg::Cols | OrientationArg::Both => Some(profile(Orientation::Cols)?),
        OrientationArg::Rows => None,
    };
    Ok(profile_csv(rows.as_ref(), cols.as_ref())?)
}

#[derive(Serialize)]
struct DoubleLimitOutput {
    row_positions: Vec<usize>,
    col_positions: Vec<usize>,
    tol: f64,
    #[serde(flatten)]
    report: DoubleLimitReport,
}

pub fn double_limit(path: &Path, rows: Option<&str>, cols: Option<&str>, tol: f64) -> Outcome<String> {
    let k = with_path(path, KernelSpec::parse(&read(path)?).and_then(|s| s.build()))?;
    let rows = match rows {
        Some(s) => parse_positions(s)?,
        None => (0..k.n_rows()).collect(),
    };
    let cols = match cols {
        Some(s) => parse_positions(s)?,
        None => (0..k.n_cols()).collect(),
    };
    let cfg = DoubleLimitConfig {
        tol,
        ..DoubleLimitConfig::default()
    };
    let report = double_limit_positions(&k, &rows, &cols, &cfg)?;
    Ok(report_json(&DoubleLimitOutput {
        row_positions: rows,
        col_positions: cols,
        tol,
        report,
    })? + "\n")
}

pub fn envelope(path: &Path, targets: &[String], tol: f64) -> Outcome<String> {
    let f = with_path(path, FunctionSpec::parse(&read(path)?).and_then(|s| s.build()))?;
    let targets = targets.iter().map(|t| parse_real(t)).collect::<Outcome<Vec<_>>>()?;
    let cfg = EnvelopeConfig {
        tol,
        ..EnvelopeConfig::default()
    };
    Ok(extension_csv(&extend_function(&f, &targets, &cfg)?))
}

#[derive(Serialize)]
struct SemigroupOutput {
    dimension: usize,
    t_max: f64,
    depth: u32,
    samples: usize,
    norm: matrix_compactness::semigroup::BaseNorm,
    norm_kind: matrix_compactness::semigroup::NormKind,
    sampled_bound: f64,
    construction_defect: matrix_compactness::semigroup::DefectReport,
    renormalization: matrix_compactness::semigroup::Renormalization,
    contractive: bool,
    weak_identity: WeakIdentityReport,
    tol: f64,
    extensions: Vec<ExtensionResult>,
    all_extended: bool,
    verification: Option<VerificationReport>,
}

pub fn extend_semigroup(path: &Path, times: &[String], tol: f64, verify_pairs: usize, seed: u64) -> Outcome<String> {
    let spec = with_path(path, SemigroupSpec::parse(&read(path)?))?;
    let times = times.iter().map(|t| parse_real(t)).collect::<Outcome<Vec<_>>>()?;
    let g = with_path(path, spec.build(seed))?;
    let r = g.renormalize()?;
    let renorm = r.renormalization().expect("renormalized").clone();
    let weak = weak_identity_check(&r, &default_probes(r.dimension(), seed), 1e-2)?;
    if weak.status == CheckStatus::Fail {
        let w = weak.worst.as_ref().expect("a failing check has a witness");
        return Err(Failure::numerical(format!(
            "weak identity check failed (deviation {:e} at s = {}, probe {}); refusing to extend",
            w.deviation, w.time, w.probe
        )));
    }
    let cfg = ExtendConfig {
        tol,
        ..ExtendConfig::default()
    };
    let extensions = times
        .iter()
        .map(|&t| extend_operator(&r, t, &cfg))
        .collect::<matrix_compactness::Result<Vec<_>>>()?;
    let verification = if extensions.len() >= 2 && verify_pairs > 0 {
        Some(verify_extension(&r, &extensions, verify_pairs, tol, &cfg, seed)?)
    } else {
        None
    };
    let out = SemigroupOutput {
        dimension: g.dimension(),
        t_max: g.t_max(),
        depth: g.depth(),
        samples: g.len(),
        norm: g.base_norm(),
        norm_kind: r.norm_kind(),
        sampled_bound: g.bound(),
        construction_defect: g.defect().clone(),
        contractive: renorm.max_operator_norm <= 1.0 + 1e-6,
        renormalization: renorm,
        weak_identity: weak,
        tol,
        all_extended: extensions.iter().all(|e| e.success),
        extensions,
        verification,
    };
    Ok(report_json(&out)? + "\n")
}

pub fn ap(
    function: &str,
    group: &str,
    windows: &[f64],
    eps: &[f64],
    density: f64,
    triple_density: Option<f64>,
) -> Outcome<String> {
    let op: GroupOp = group.parse()?;
    let e = Expr::parse(function, &["x"]).map_err(|e| Failure::input(e.to_string()))?;
    let f = |x: f64| e.eval(&[x]);
    let base = ap_profile(f, windows, density, eps, op)?;
    let mut groups = vec![("x|y".to_string(), base.profile)];
    if let Some(d) = triple_density {
        let levels = windows
            .iter()
            .map(|&w| {
                let s = window_sampling(w, d, op)?;
                Ok([s.clone(), s.clone(), s])
            })
            .collect::<matrix_compactness::Result<Vec<[IndexSampling; 3]>>>()?;
        let triple = triple_grouping_check(f, &levels, op, eps)?;
        groups.extend(triple.profiles.into_iter().map(|(g, p)| (g.label().to_string(), p)));
    }
    let mut csv = grouped_profile_csv(&groups)?;
    csv.push_str(&format!("# almost-periodic={}\n", base.classification));
    Ok(csv)
}

fn gallery_files(name: GalleryName, dim: usize) -> Outcome<Vec<(String, serde_json::Value)>> {
    Ok(match name {
        GalleryName::Remark2 => {
            let g = remark2_gallery(dim, 1e-9)?;
            let expected = json!({
                "schema_version": 1,
                "dimension": dim,
                "xy_a": {
                    "rows": g.witness.row_sequence,
                    "cols": g.witness.col_sequence,
                    "gap": g.witness.gap,
                    "limit_row_first": g.witness.limit_row_first,
                    "limit_col_first": g.witness.limit_col_first,
                },
                "xa_y": { "best_gap": g.xa_y_search.best.as_ref().map(|b| b.gap), "searched": g.xa_y_search.evaluated },
                "ya_x": { "best_gap": g.ya_x_search.best.as_ref().map(|b| b.gap), "searched": g.ya_x_search.evaluated },
            });
            vec![
                ("remark2_xy_a.json".into(), to_value(&KernelSpec::from_kernel(&g.xy_a))?),
                ("remark2_xa_y.json".into(), to_value(&KernelSpec::from_kernel(&g.xa_y))?),
                ("remark2_ya_x.json".into(), to_value(&KernelSpec::from_kernel(&g.ya_x))?),
                ("remark2_expected.json".into(), expected),
            ]
        }
        GalleryName::Indicator => {
            if dim < 8 {
                return Err(Failure::input("indicator fixture needs --dim of at least 8"));
            }
            let n = dim as i64;
            let spec = KernelSpec {
                rows: SamplingSpec::Integers { integers: [1, n] },
                cols: SamplingSpec::Integers { integers: [1, n] },
                expr: Some("ind(y <= x)".into()),
                matrix: None,
                bound: Some(1.0),
                metric: None,
            };
            let expected = json!({
                "schema_version": 1,
                "rows": format!("0..{dim}"),
                "cols": format!("0..{dim}"),
                "limit_row_first": 0.0,
                "limit_col_first": 1.0,
                "gap": 1.0,
            });
            vec![("indicator.json".into(), to_value(&spec)?), ("indicator_expected.json".into(), expected)]
        }
        GalleryName::SinInv => {
            let spec = FunctionSpec {
                expr: "sin(1/s)".into(),
                domain: [0.0, 1.0],
                ends: matrix_compactness::spec::EndsSpec::Right,
                depth: 16,
                bound: Some(1.0),
            };
            let expected = json!({
                "schema_version": 1,
                "t": 0.0,
                "upper": 1.0,
                "lower": -1.0,
                "gap": 2.0,
                "value_or_flag": "not-extendable",
            });
            vec![("sin_inv.json".into(), to_value(&spec)?), ("sin_inv_expected.json".into(), expected)]
        }
    })
}

fn to_value<T: Serialize>(v: &T) -> Outcome<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Failure::numerical(e.to_string()))
}

pub fn gallery(name: GalleryName, dim: usize, out_dir: Option<&Path>) -> Outcome<()> {
    let files = gallery_files(name, dim)?;
    let pretty = |v: &serde_json::Value| serde_json::to_string_pretty(v).expect("values serialize") + "\n";
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
            for (file, v) in &files {
                let p = dir.join(file);
                fs::write(&p, pretty(v)).map_err(|e| Failure::numerical(format!("cannot write {}: {e}", p.display())))?;
                println!("{}", p.display());
            }
            Ok(())
        }
        None => {
            let bundle: serde_json::Map<String, serde_json::Value> = files.into_iter().collect();
            let mut v = serde_json::Value::Object(bundle);
            v["schema_version"] = 1.into();
            print!("{}", pretty(&v));
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_and_positions() {
        assert_eq!(parse_real("1/4").unwrap(), 0.25);
        assert_eq!(parse_real("3/2^3").unwrap(), 0.375);
        assert_eq!(parse_real(" -2 ").unwrap(), -2.0);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("x").is_err());
        assert_eq!(parse_positions("0,3..6, 9").unwrap(), vec![0, 3, 4, 5, 9]);
        assert!(parse_positions("1..x").is_err());
    }
}
