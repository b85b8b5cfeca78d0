//! JSON spec files for kernels, scalar functions and semigroups, and the
//! common report envelope.

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::envelope::{DyadicFunction, Ends};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel, IndexSampling, KernelSource, Metric, SamplePoint, SampledKernel};
use crate::semigroup::{BaseNorm, ExprProvider, GeneratorProvider, OperatorProvider, SampledSemigroup, SemigroupConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Parse JSON, naming the offending field on failure.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match path.as_str() {
            "." | "?" => Error::InvalidInput(inner.to_string()),
            _ => Error::InvalidInput(format!("field `{path}`: {inner}")),
        }
    })
}

/// Wrap a report as `{"schema_version": 1, ...}`.
pub fn report_json<T: Serialize>(report: &T) -> Result<String> {
    let mut v = serde_json::to_value(report)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("schema_version".into(), SCHEMA_VERSION.into());
        }
        None => {
            v = serde_json::json!({ "schema_version": SCHEMA_VERSION, "report": v });
        }
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub from: f64,
    pub to: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Scalar(f64),
    Tagged(SamplePoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SamplingSpec {
    Grid { grid: GridSpec },
    Integers { integers: [i64; 2] },
    Points(Vec<PointSpec>),
}

impl SamplingSpec {
    pub fn build(&self, metric: &Metric) -> Result<IndexSampling> {
        let s = match self {
            SamplingSpec::Grid { grid } => IndexSampling::grid(grid.from, grid.to, grid.n)?,
            SamplingSpec::Integers { integers: [a, b] } => IndexSampling::integers(*a, *b)?,
            SamplingSpec::Points(points) => {
                let points = points
                    .iter()
                    .map(|p| match p {
                        PointSpec::Scalar(x) => SamplePoint::new(format!("{x}"), vec![*x]),
                        PointSpec::Tagged(p) => p.clone(),
                    })
                    .collect();
                IndexSampling::new(points, Metric::Sup, 0)?
            }
        };
        s.with_metric(metric.clone())
    }

    /// The same grid with `n` points; only grids can be refined.
    pub fn with_points(&self, n: usize) -> Result<SamplingSpec> {
        match self {
            SamplingSpec::Grid { grid } => Ok(SamplingSpec::Grid {
                grid: GridSpec { n, ..grid.clone() },
            }),
            _ => Err(Error::InvalidInput("refinement levels need `grid` samplings".into())),
        }
    }

    pub fn from_sampling(s: &IndexSampling) -> SamplingSpec {
        SamplingSpec::Points(s.points().iter().cloned().map(PointSpec::Tagged).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub rows: SamplingSpec,
    pub cols: SamplingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
}

impl KernelSpec {
    pub fn parse(text: &str) -> Result<Self> {
        from_json(text)
    }

    fn source(&self) -> Result<KernelSource> {
        match (&self.expr, &self.matrix) {
            (Some(e), None) => Ok(KernelSource::Expr(e.clone())),
            (None, Some(m)) => Ok(KernelSource::Matrix(m.clone())),
            _ => Err(Error::InvalidInput("a kernel spec needs exactly one of `expr` and `matrix`".into())),
        }
    }

    pub fn build(&self) -> Result<SampledKernel> {
        let metric = self.metric.clone().unwrap_or(Metric::Sup);
        build_kernel(&self.source()?, self.rows.build(&metric)?, self.cols.build(&metric)?, self.bound)
    }

    /// One kernel per entry of `levels`, each grid refined to that many
    /// points and tagged with its position as refinement level.
    pub fn build_levels(&self, levels: &[usize]) -> Result<Vec<SampledKernel>> {
        let metric = self.metric.clone().unwrap_or(Metric::Sup);
        let source = self.source()?;
        if matches!(source, KernelSource::Matrix(_)) {
            return Err(Error::InvalidInput("refinement levels need an `expr` kernel".into()));
        }
        levels
            .iter()
            .enumerate()
            .map(|(l, &n)| {
                let rows = self.rows.with_points(n)?.build(&metric)?.with_level(l as u32);
                let cols = self.cols.with_points(n)?.build(&metric)?.with_level(l as u32);
                build_kernel(&source, rows, cols, self.bound)
            })
            .collect()
    }

    /// Literal spec of a tabulated kernel.
    pub fn from_kernel(k: &SampledKernel) -> Self {
        KernelSpec {
            rows: SamplingSpec::from_sampling(k.rows()),
            cols: SamplingSpec::from_sampling(k.cols()),
            expr: None,
            matrix: Some((0..k.n_rows()).map(|i| k.row(i).to_vec()).collect()),
            bound: Some(k.bound()),
            metric: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndsSpec {
    Open,
    Closed,
    Left,
    Right,
}

impl From<EndsSpec> for Ends {
    fn from(e: EndsSpec) -> Ends {
        match e {
            EndsSpec::Open => Ends::OPEN,
            EndsSpec::Closed => Ends::CLOSED,
            EndsSpec::Left => Ends { left: true, right: false },
            EndsSpec::Right => Ends::RIGHT,
        }
    }
}

fn default_function_depth() -> u32 {
    16
}

/// Function of `s` sampled on the dyadic points of `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub expr: String,
    pub domain: [f64; 2],
    /// Which domain ends are sample points; default both.
    #[serde(default = "default_ends")]
    pub ends: EndsSpec,
    /// Coarsest sampling depth.
    #[serde(default = "default_function_depth")]
    pub depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

fn default_ends() -> EndsSpec {
    EndsSpec::Closed
}

impl FunctionSpec {
    pub fn parse(text: &str) -> Result<Self> {
        from_json(text)
    }

    pub fn build(&self) -> Result<DyadicFunction> {
        let f = DyadicFunction::from_expr(&self.expr, (self.domain[0], self.domain[1]), self.ends.into(), self.depth)?;
        Ok(match self.bound {
            Some(b) => f.with_bound(b),
            None => f,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupSpec {
    pub dimension: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_depth")]
    pub depth: u32,
    /// `A` with `T_s = exp(s A)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<Vec<f64>>>,
    /// Entry expressions in `s`, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries_expr: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub norm: BaseNorm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

fn default_t_max() -> f64 {
    2.0
}

fn default_depth() -> u32 {
    14
}

impl SemigroupSpec {
    pub fn parse(text: &str) -> Result<Self> {
        from_json(text)
    }

    pub fn provider(&self) -> Result<Arc<dyn OperatorProvider>> {
        let p: Arc<dyn OperatorProvider> = match (&self.generator, &self.entries_expr) {
            (Some(a), None) => Arc::new(GeneratorProvider::from_rows(a)?),
            (None, Some(e)) => Arc::new(ExprProvider::new(e)?),
            _ => {
                return Err(Error::InvalidInput(
                    "a semigroup spec needs exactly one of `generator` and `entries_expr`".into(),
                ))
            }
        };
        if p.dimension() != self.dimension {
            return Err(Error::DimensionMismatch(format!(
                "`dimension` is {} but the operators are {}x{}",
                self.dimension,
                p.dimension(),
                p.dimension()
            )));
        }
        Ok(p)
    }

    pub fn config(&self, seed: u64) -> Result<SemigroupConfig> {
        let t_max = Dyadic::try_from(self.t_max)?;
        Ok(SemigroupConfig {
            t_max,
            depth: self.depth,
            norm: self.norm,
            bound: self.bound,
            seed,
            ..SemigroupConfig::default()
        })
    }

    pub fn build(&self, seed: u64) -> Result<SampledSemigroup> {
        SampledSemigroup::new(self.provider()?, self.config(seed)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_specs() {
        let k = KernelSpec::parse(r#"{"rows": {"grid": {"from": 0, "to": 1, "n": 5}}, "cols": [0, 0.5, 1], "expr": "x*y"}"#)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!((k.n_rows(), k.n_cols()), (5, 3));
        assert_eq!(k.get(4, 1), 0.5);

        let spec = KernelSpec::parse(
            r#"{"rows": {"integers": [1, 2]}, "cols": [{"id": "a", "coords": [0]}], "matrix": [[1], [2]], "bound": 3}"#,
        )
        .unwrap();
        let k = spec.build().unwrap();
        assert_eq!(k.bound(), 3.0);
        let back = KernelSpec::parse(&serde_json::to_string(&KernelSpec::from_kernel(&k)).unwrap()).unwrap();
        assert_eq!(back.build().unwrap().values(), k.values());
        assert!(spec.build_levels(&[2, 3]).is_err());

        let levels = KernelSpec::parse(r#"{"rows": {"grid": {"from": 0, "to": 1, "n": 2}}, "cols": {"grid": {"from": 0, "to": 1, "n": 2}}, "expr": "1"}"#)
            .unwrap()
            .build_levels(&[4, 8])
            .unwrap();
        assert_eq!(levels[1].n_rows(), 8);
        assert_eq!(levels[1].level(), 1);
    }

    #[test]
    fn errors_name_the_field() {
        let err = KernelSpec::parse(r#"{"rows": {"grid": {"from": 0, "to": 1, "n": -1}}, "cols": [0], "expr": "1"}"#).unwrap_err();
        assert!(err.is_input_error());
        assert!(err.to_string().contains("rows"), "{err}");
        let err = SemigroupSpec::parse("{\"dimension\": 2,\n \"depth\": \"deep\"}").unwrap_err();
        assert!(err.to_string().contains("field `depth`") && err.to_string().contains("line 2"), "{err}");
        let both = KernelSpec::parse(r#"{"rows": [0], "cols": [0], "expr": "1", "matrix": [[1]]}"#).unwrap();
        assert!(both.build().unwrap_err().is_input_error());
    }

    #[test]
    fn semigroup_specs() {
        let s = SemigroupSpec::parse(r#"{"dimension": 1, "t_max": 1, "depth": 6, "generator": [[-1]]}"#).unwrap();
        let g = s.build(0).unwrap();
        assert_eq!(g.len(), 64);
        let s = SemigroupSpec::parse(r#"{"dimension": 3, "depth": 6, "entries_expr": [["1", "0"], ["0", "1"]]}"#).unwrap();
        assert!(s.build(0).unwrap_err().is_input_error());
        let s = SemigroupSpec::parse(r#"{"dimension": 1, "t_max": 0.3, "depth": 6, "generator": [[0]]}"#).unwrap();
        assert!(s.build(0).is_err());
    }

    #[test]
    fn function_specs() {
        let f = FunctionSpec::parse(r#"{"expr": "s*s", "domain": [0, 1]}"#).unwrap().build().unwrap();
        assert_eq!(f.eval(0.5), 0.25);
        assert_eq!(f.ends(), Ends::CLOSED);
        assert!(FunctionSpec::parse(r#"{"expr": "s", "domain": [0, 1], "ends": "sideways"}"#).is_err());
    }

    #[test]
    fn reports_carry_the_schema_version() {
        #[derive(Serialize)]
        struct R {
            gap: f64,
        }
        let v: serde_json::Value = serde_json::from_str(&report_json(&R { gap: 1.0 }).unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["gap"], 1.0);
    }
}
