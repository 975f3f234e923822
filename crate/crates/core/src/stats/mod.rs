//! Least-squares regression, partial F-tests and the covariate tests run
//! over resistance scores.
//!
//! The observation unit is one resistance score per
//! `(model, bias, level, temperature)` cell.

mod dist;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bias::BiasCategory;
use crate::prompt::TelerLevel;
use crate::scoring::{resistance, Classification, Dimension};

pub use dist::{f_tail, ln_gamma, regularized_beta};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("design matrix is rank deficient (column `{0}`)")]
    RankDeficient(String),
    #[error("{n} observations cannot fit {p} parameters")]
    TooFewObservations { n: usize, p: usize },
    #[error("design has {rows} rows but response has {len} values")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("degrees of freedom must be at least 1, got ({df1}, {df2})")]
    InvalidDegreesOfFreedom { df1: f64, df2: f64 },
    #[error("invalid F statistic {0}")]
    InvalidStatistic(f64),
    #[error("non-finite value in regression input")]
    NonFinite,
    #[error("insufficient variation: {0}")]
    InsufficientVariation(String),
    #[error("no observations for bias {0}")]
    MissingBias(BiasCategory),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

/// Named regressor columns; rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: Vec<String>,
    data: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<DesignMatrix, StatsError> {
        let p = columns.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(StatsError::DimensionMismatch {
                rows: p,
                len: rows.iter().map(Vec::len).find(|l| *l != p).unwrap_or(0),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Ok(DesignMatrix { columns, data })
    }

    /// Intercept, then the given covariates, then one dummy per non-reference
    /// level of `groups` (the first level in sorted order is dropped).
    pub fn with_controls(
        covariates: &[(&str, Vec<f64>)],
        groups: Option<(&str, &[String])>,
    ) -> Result<DesignMatrix, StatsError> {
        let n = covariates
            .first()
            .map(|c| c.1.len())
            .or(groups.map(|g| g.1.len()))
            .unwrap_or(0);
        let mut columns = vec!["intercept".to_string()];
        columns.extend(covariates.iter().map(|(name, _)| name.to_string()));
        let levels: Vec<&String> = match groups {
            Some((_, g)) => g.iter().collect::<BTreeSet<_>>().into_iter().skip(1).collect(),
            None => Vec::new(),
        };
        if let Some((prefix, _)) = groups {
            columns.extend(levels.iter().map(|l| format!("{prefix}[{l}]")));
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![1.0];
            for (_, values) in covariates {
                row.push(*values.get(i).ok_or(StatsError::DimensionMismatch { rows: n, len: values.len() })?);
            }
            if let Some((_, g)) = groups {
                row.extend(levels.iter().map(|l| if &&g[i] == l { 1.0 } else { 0.0 }));
            }
            rows.push(row);
        }
        DesignMatrix::from_rows(columns, &rows)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    fn has_intercept(&self) -> bool {
        (0..self.ncols()).any(|j| self.data.column(j).iter().all(|v| *v == 1.0))
    }

    /// The design without the named columns.
    pub fn without(&self, drop: &[usize]) -> DesignMatrix {
        let keep: Vec<usize> = (0..self.ncols()).filter(|j| !drop.contains(j)).collect();
        DesignMatrix {
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            data: self.data.select_columns(&keep),
        }
    }

    pub fn column_index(&self, name: &str) -> Result<usize, StatsError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| StatsError::UnknownColumn(name.to_string()))
    }

    /// Same design with rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> DesignMatrix {
        DesignMatrix {
            columns: self.columns.clone(),
            data: self.data.select_rows(order),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Overall F statistic against the intercept-only model.
    pub f: f64,
    pub p: f64,
    pub r2: f64,
    pub rss: f64,
    pub n: usize,
    pub df_model: usize,
    pub df_resid: usize,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some((self.beta[j], self.std_err[j]))
    }
}

/// Ordinary least squares through a Householder QR decomposition.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<RegressionResult, StatsError> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(StatsError::DimensionMismatch { rows: n, len: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if n <= p || p == 0 {
        return Err(StatsError::TooFewObservations { n, p });
    }
    let yv = DVector::from_column_slice(y);
    let qr = x.data.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| x.data.column(j).norm()).fold(0.0f64, f64::max).max(1.0);
    for j in 0..p {
        if r[(j, j)].abs() <= 1e-10 * scale {
            return Err(StatsError::RankDeficient(x.columns[j].clone()));
        }
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| StatsError::RankDeficient(x.columns[p - 1].clone()))?;
    let resid = &yv - &x.data * &beta;
    let rss = resid.norm_squared();

    let intercept = x.has_intercept();
    let mean = if intercept { yv.mean() } else { 0.0 };
    let tss: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    let df_model = if intercept { p - 1 } else { p };
    let df_resid = n - p;
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };

    let sigma2 = rss / df_resid as f64;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| StatsError::RankDeficient(x.columns[p - 1].clone()))?;
    let std_err: Vec<f64> = (0..p)
        .map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt())
        .collect();

    let (f, pval) = if df_model == 0 {
        (0.0, 1.0)
    } else {
        f_statistic(tss - rss, df_model, rss, df_resid)?
    };
    Ok(RegressionResult {
        columns: x.columns.clone(),
        beta: beta.iter().copied().collect(),
        std_err,
        f,
        p: pval,
        r2,
        rss,
        n,
        df_model,
        df_resid,
    })
}

fn f_statistic(explained: f64, df1: usize, rss: f64, df2: usize) -> Result<(f64, f64), StatsError> {
    let explained = explained.max(0.0);
    if rss <= 0.0 {
        return Ok(if explained > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) });
    }
    let f = (explained / df1 as f64) / (rss / df2 as f64);
    Ok((f, f_tail(f, df1 as f64, df2 as f64)?))
}

/// Partial F-test for a set of columns of a full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialFTest {
    pub tested: Vec<String>,
    pub f: f64,
    pub p: f64,
    pub df1: usize,
    pub df2: usize,
    pub full: RegressionResult,
}

pub fn partial_f_test(x: &DesignMatrix, y: &[f64], tested: &[&str]) -> Result<PartialFTest, StatsError> {
    let idx: Vec<usize> = tested.iter().map(|c| x.column_index(c)).collect::<Result<_, _>>()?;
    let full = ols_fit(x, y)?;
    let restricted_design = x.without(&idx);
    let restricted_rss = if restricted_design.ncols() == 0 {
        y.iter().map(|v| v * v).sum()
    } else {
        ols_fit(&restricted_design, y)?.rss
    };
    let df1 = idx.len();
    let df2 = full.df_resid;
    let (f, p) = f_statistic(restricted_rss - full.rss, df1, full.rss, df2)?;
    Ok(PartialFTest {
        tested: tested.iter().map(|s| s.to_string()).collect(),
        f,
        p,
        df1,
        df2,
        full,
    })
}

/// Resistance score of one `(model, bias, level, temperature)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub model_id: String,
    pub bias: BiasCategory,
    pub level: TelerLevel,
    pub temperature: f64,
    pub score: f64,
    pub n: usize,
}

pub fn cell_scores(classifications: &[Classification]) -> Vec<CellScore> {
    let dims = [Dimension::Model, Dimension::Bias, Dimension::Level, Dimension::Temperature];
    resistance(classifications, &dims)
        .into_iter()
        .filter_map(|r| {
            Some(CellScore {
                model_id: r.key.model?,
                bias: r.key.bias?,
                level: r.key.level?,
                temperature: r.key.temperature?.0,
                score: r.score?,
                n: r.n_total,
            })
        })
        .collect()
}

/// Model metadata used as covariates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub params_b: Option<f64>,
    #[serde(default)]
    pub reasoning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateTest {
    Temperature,
    Size,
    Reasoning,
}

impl std::str::FromStr for CovariateTest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temperature" => Ok(CovariateTest::Temperature),
            "size" => Ok(CovariateTest::Size),
            "reasoning" => Ok(CovariateTest::Reasoning),
            other => Err(format!("unknown test `{other}` (temperature, size, reasoning)")),
        }
    }
}

impl CovariateTest {
    pub fn column(self) -> &'static str {
        match self {
            CovariateTest::Temperature => "temperature",
            CovariateTest::Size => "log10_params_b",
            CovariateTest::Reasoning => "reasoning",
        }
    }
}

/// One row of an analysis table: the tested covariate's coefficient and
/// its partial F-test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEffect {
    pub bias: BiasCategory,
    pub test: CovariateTest,
    pub beta: f64,
    pub std_err: f64,
    pub f: f64,
    pub p: f64,
    pub r2: f64,
    pub n: usize,
    pub df1: usize,
    pub df2: usize,
}

impl CovariateEffect {
    fn from_partial(bias: BiasCategory, test: CovariateTest, t: PartialFTest) -> Self {
        let (beta, std_err) = t.full.coefficient(test.column()).unwrap_or((f64::NAN, f64::NAN));
        CovariateEffect {
            bias,
            test,
            beta,
            std_err,
            f: t.f,
            p: t.p,
            r2: t.full.r2,
            n: t.full.n,
            df1: t.df1,
            df2: t.df2,
        }
    }
}

fn bias_cells(scores: &[CellScore], bias: BiasCategory) -> Result<Vec<&CellScore>, StatsError> {
    let cells: Vec<&CellScore> = scores.iter().filter(|c| c.bias == bias).collect();
    if cells.is_empty() {
        return Err(StatsError::MissingBias(bias));
    }
    Ok(cells)
}

/// `score ~ 1 + temperature + model dummies`, testing temperature.
pub fn anova_temperature(scores: &[CellScore], bias: BiasCategory) -> Result<CovariateEffect, StatsError> {
    let cells = bias_cells(scores, bias)?;
    let mut temps_by_model: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    for c in &cells {
        temps_by_model.entry(&c.model_id).or_default().insert(c.temperature.to_bits());
    }
    if temps_by_model.values().all(|t| t.len() < 2) {
        return Err(StatsError::InsufficientVariation(format!(
            "{bias}: no model was run at two or more temperatures"
        )));
    }
    let temps: Vec<f64> = cells.iter().map(|c| c.temperature).collect();
    let models: Vec<String> = cells.iter().map(|c| c.model_id.clone()).collect();
    let y: Vec<f64> = cells.iter().map(|c| c.score).collect();
    let x = DesignMatrix::with_controls(&[("temperature", temps)], Some(("model", &models)))?;
    let test = partial_f_test(&x, &y, &["temperature"])?;
    Ok(CovariateEffect::from_partial(bias, CovariateTest::Temperature, test))
}

fn model_covariate_test(
    scores: &[CellScore],
    bias: BiasCategory,
    test: CovariateTest,
    value: impl Fn(&str) -> Option<f64>,
) -> Result<CovariateEffect, StatsError> {
    let cells = bias_cells(scores, bias)?;
    let mut xs = Vec::new();
    let mut y = Vec::new();
    for c in cells {
        if let Some(v) = value(&c.model_id) {
            xs.push(v);
            y.push(c.score);
        }
    }
    let distinct: BTreeSet<u64> = xs.iter().map(|v| v.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(StatsError::InsufficientVariation(format!(
            "{bias}: `{}` takes fewer than two values",
            test.column()
        )));
    }
    let x = DesignMatrix::with_controls(&[(test.column(), xs)], None)?;
    let t = partial_f_test(&x, &y, &[test.column()])?;
    Ok(CovariateEffect::from_partial(bias, test, t))
}

/// `score ~ 1 + log10(params_b)`; models without a size are skipped.
pub fn size_regression(
    scores: &[CellScore],
    meta: &BTreeMap<String, ModelMeta>,
    bias: BiasCategory,
) -> Result<CovariateEffect, StatsError> {
    model_covariate_test(scores, bias, CovariateTest::Size, |m| {
        meta.get(m).and_then(|mm| mm.params_b).filter(|p| *p > 0.0).map(f64::log10)
    })
}

/// `score ~ 1 + reasoning` with a 0/1 flag.
pub fn reasoning_regression(
    scores: &[CellScore],
    meta: &BTreeMap<String, ModelMeta>,
    bias: BiasCategory,
) -> Result<CovariateEffect, StatsError> {
    model_covariate_test(scores, bias, CovariateTest::Reasoning, |m| {
        meta.get(m).map(|mm| if mm.reasoning { 1.0 } else { 0.0 })
    })
}

/// Runs `test` for every bias present; biases where the test cannot be run
/// are returned with their error.
pub fn analyze(
    scores: &[CellScore],
    meta: &BTreeMap<String, ModelMeta>,
    test: CovariateTest,
) -> Vec<(BiasCategory, Result<CovariateEffect, StatsError>)> {
    let present: BTreeSet<BiasCategory> = scores.iter().map(|c| c.bias).collect();
    BiasCategory::ALL
        .iter()
        .filter(|b| present.contains(b))
        .map(|&b| {
            let r = match test {
                CovariateTest::Temperature => anova_temperature(scores, b),
                CovariateTest::Size => size_regression(scores, meta, b),
                CovariateTest::Reasoning => reasoning_regression(scores, meta, b),
            };
            (b, r)
        })
        .collect()
}

/// CSV with columns `bias,F,p,beta,std_err,R2,n,df1,df2,note`.
pub fn analysis_csv(rows: &[(BiasCategory, Result<CovariateEffect, StatsError>)]) -> String {
    let mut out = String::from("bias,F,p,beta,std_err,R2,n,df1,df2,note\n");
    for (bias, r) in rows {
        match r {
            Ok(e) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},",
                    bias.display_name(),
                    e.f,
                    e.p,
                    e.beta,
                    e.std_err,
                    e.r2,
                    e.n,
                    e.df1,
                    e.df2
                );
            }
            Err(err) => {
                let _ = writeln!(out, "{},,,,,,,,,\"{}\"", bias.display_name(), err.to_string().replace('"', "'"));
            }
        }
    }
    out
}
