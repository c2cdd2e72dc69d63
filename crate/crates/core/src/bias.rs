//! National bias estimation. Each mark's tendency-corrected error
//! `d = s − c − μ̂·σ̂(c)` is regressed without intercept on `𝟙_SN·σ̂(c)` and
//! `𝟙_COMP·σ̂(c)` by generalized least squares with known diagonal
//! covariance `σ̂²(c)·M²`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{event_ranks, CountryCode, Discipline, LabeledMark, Stage};
use crate::stats::{self, t_quantile, t_sf, wls_solve, EcdfPoint, Matrix, StatsError};
use crate::variability::{GroupKey, ProfileTable, SigmaModel};

/// Floor on a judge's marking score when forming the row variance.
pub const M_FLOOR: f64 = 0.1;
/// Estimates with fewer same-nationality marks are flagged `low_support`.
pub const LOW_SUPPORT_SN_MARKS: usize = 3;
pub const ALPHA_5: f64 = 0.05;
pub const ALPHA_1: f64 = 0.01;
/// Top-8 filter cutoff; ties at this rank are all kept.
pub const FINALIST_CUTOFF: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BiasError {
    #[error("no sigma model for group {0}")]
    MissingModel(String),
    #[error("no profile for judge `{judge}` in group {group}")]
    MissingProfile { judge: String, group: String },
    #[error("no same-nationality observations")]
    NoTreatedObservations,
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("no residual degrees of freedom ({n_obs} rows, {k} regressors)")]
    NoDegreesOfFreedom { n_obs: usize, k: usize },
    #[error(transparent)]
    Stats(StatsError),
}

impl From<StatsError> for BiasError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::SingularDesign(_) => BiasError::SingularDesign,
            other => BiasError::Stats(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    /// Tendency-corrected judging error.
    pub d: f64,
    pub x_sn: f64,
    pub x_comp: f64,
    pub variance: f64,
    pub judge_id: String,
    pub performance_id: String,
    pub judge_country: CountryCode,
    pub discipline: Discipline,
    pub stage: Stage,
}

fn row_for(mark: &LabeledMark, model: &SigmaModel, profiles: &ProfileTable) -> Result<RegressionRow, BiasError> {
    let b = &mark.base;
    let profile = profiles
        .get(&model.group_key, &b.judge_id)
        .ok_or_else(|| BiasError::MissingProfile { judge: b.judge_id.clone(), group: model.group_key.to_string() })?;
    let c = mark.control_score.value();
    let sigma = model.evaluate(c);
    let m = profile.marking_score.max(M_FLOOR);
    Ok(RegressionRow {
        d: b.mark.value() - c - profile.mu_hat * sigma,
        x_sn: if mark.is_same_nationality { sigma } else { 0.0 },
        x_comp: if mark.is_direct_competitor { sigma } else { 0.0 },
        variance: sigma * sigma * m * m,
        judge_id: b.judge_id.clone(),
        performance_id: b.performance_id.clone(),
        judge_country: b.judge_country,
        discipline: b.discipline,
        stage: b.stage,
    })
}

/// Regression rows for marks of a single σ group.
pub fn build_rows(marks: &[LabeledMark], model: &SigmaModel, profiles: &ProfileTable) -> Result<Vec<RegressionRow>, BiasError> {
    marks.iter().map(|m| row_for(m, model, profiles)).collect()
}

/// Regression rows for marks spanning several σ groups.
pub fn build_rows_grouped(
    marks: &[LabeledMark],
    models: &BTreeMap<GroupKey, SigmaModel>,
    profiles: &ProfileTable,
) -> Result<Vec<RegressionRow>, BiasError> {
    marks
        .iter()
        .map(|m| {
            let key = GroupKey::for_record(&m.base);
            let model = models.get(&key).ok_or_else(|| BiasError::MissingModel(key.to_string()))?;
            row_for(m, model, profiles)
        })
        .collect()
}

/// Source of the coefficient covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    /// `(XᵀWX)⁻¹` with weights the modelled inverse variances.
    #[default]
    ModelBased,
    /// `(XᵀWX)⁻¹` times the weighted residual variance.
    ResidualScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub ci95: (f64, f64),
}

impl Coefficient {
    fn new(estimate: f64, se: f64, df: f64, t_crit: f64) -> Self {
        let t = if se > 0.0 {
            estimate / se
        } else if estimate == 0.0 {
            0.0
        } else {
            estimate.signum() * f64::INFINITY
        };
        Coefficient { estimate, se, t, p: t_sf(t, df), ci95: (estimate - t_crit * se, estimate + t_crit * se) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFit {
    pub sn: Coefficient,
    pub comp: Option<Coefficient>,
    pub n_obs: usize,
    pub n_sn_marks: usize,
    pub n_comp_marks: usize,
    pub df: usize,
}

pub fn estimate(rows: &[RegressionRow], include_comp: bool) -> Result<BiasFit, BiasError> {
    estimate_with(rows, include_comp, CovarianceKind::ModelBased)
}

pub fn estimate_with(rows: &[RegressionRow], include_comp: bool, covariance: CovarianceKind) -> Result<BiasFit, BiasError> {
    let n_sn_marks = rows.iter().filter(|r| r.x_sn != 0.0).count();
    let n_comp_marks = rows.iter().filter(|r| r.x_comp != 0.0).count();
    if n_sn_marks == 0 {
        return Err(BiasError::NoTreatedObservations);
    }
    let k = if include_comp { 2 } else { 1 };
    if rows.len() <= k {
        return Err(BiasError::NoDegreesOfFreedom { n_obs: rows.len(), k });
    }
    let design = Matrix::from_fn(rows.len(), k, |i, j| if j == 0 { rows[i].x_sn } else { rows[i].x_comp });
    let response: Vec<f64> = rows.iter().map(|r| r.d).collect();
    let weights: Vec<f64> = rows.iter().map(|r| 1.0 / r.variance).collect();
    let sol = wls_solve(&design, &response, &weights)?;
    let cov = match covariance {
        CovarianceKind::ModelBased => &sol.normal_inverse,
        CovarianceKind::ResidualScaled => &sol.covariance,
    };
    let df = sol.residual_df as f64;
    let t_crit = t_quantile(0.975, df);
    let sn = Coefficient::new(sol.coefficients[0], cov.get(0, 0).max(0.0).sqrt(), df, t_crit);
    let comp = include_comp.then(|| Coefficient::new(sol.coefficients[1], cov.get(1, 1).max(0.0).sqrt(), df, t_crit));
    Ok(BiasFit { sn, comp, n_obs: rows.len(), n_sn_marks, n_comp_marks, df: sol.residual_df })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    Discipline,
    Nation,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageFilter {
    AllGymnasts,
    Top8Finalists,
}

impl Scope {
    pub fn token(self) -> &'static str {
        match self {
            Scope::Discipline => "discipline",
            Scope::Nation => "nation",
            Scope::Judge => "judge",
        }
    }
}

impl StageFilter {
    pub fn token(self) -> &'static str {
        match self {
            StageFilter::AllGymnasts => "all",
            StageFilter::Top8Finalists => "finals",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for StageFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "discipline" => Ok(Scope::Discipline),
            "nation" => Ok(Scope::Nation),
            "judge" => Ok(Scope::Judge),
            _ => Err(format!("unknown scope `{s}`")),
        }
    }
}

impl FromStr for StageFilter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(StageFilter::AllGymnasts),
            "finals" => Ok(StageFilter::Top8Finalists),
            _ => Err(format!("unknown stage filter `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Significance {
    None,
    At5,
    At1,
}

impl Significance {
    pub fn of(p: f64) -> Self {
        if p < ALPHA_1 {
            Significance::At1
        } else if p < ALPHA_5 {
            Significance::At5
        } else {
            Significance::None
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Significance::None => "",
            Significance::At5 => "*",
            Significance::At1 => "**",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    pub scope: Scope,
    /// `DISC`, `DISC:COUNTRY` or `DISC:judge_id`.
    pub key: String,
    pub stage_filter: StageFilter,
    pub fit: BiasFit,
    pub low_support: bool,
}

impl BiasEstimate {
    pub fn significance_sn(&self) -> Significance {
        Significance::of(self.fit.sn.p)
    }
}

/// Marks of gymnasts ranked in the top eight of a final-stage event. Ties
/// at the cutoff are all kept.
pub fn top8_finalist_marks(marks: &[LabeledMark]) -> Vec<LabeledMark> {
    let finals: Vec<LabeledMark> = marks.iter().filter(|m| m.base.stage.is_final()).cloned().collect();
    let ranks = event_ranks(&finals);
    finals.into_iter().filter(|m| ranks[&m.base.performance_id] <= FINALIST_CUTOFF).collect()
}

fn scope_key(scope: Scope, row: &RegressionRow) -> String {
    match scope {
        Scope::Discipline => row.discipline.token().to_string(),
        Scope::Nation => format!("{}:{}", row.discipline, row.judge_country),
        Scope::Judge => format!("{}:{}", row.discipline, row.judge_id),
    }
}

/// Estimates per discipline, per judge nationality (within a discipline) or
/// per judge. Discipline scope includes the direct-competitor regressor when
/// the group has any such marks; nation and judge scopes drop it. Groups that
/// cannot be estimated are skipped and logged. Output is sorted by key.
pub fn estimate_by_group(
    marks: &[LabeledMark],
    models: &BTreeMap<GroupKey, SigmaModel>,
    profiles: &ProfileTable,
    scope: Scope,
    stage_filter: StageFilter,
    covariance: CovarianceKind,
) -> Result<Vec<BiasEstimate>, BiasError> {
    let filtered;
    let marks = match stage_filter {
        StageFilter::AllGymnasts => marks,
        StageFilter::Top8Finalists => {
            filtered = top8_finalist_marks(marks);
            &filtered[..]
        }
    };
    let rows = build_rows_grouped(marks, models, profiles)?;
    let mut groups: BTreeMap<String, Vec<RegressionRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(scope_key(scope, &row)).or_default().push(row);
    }
    let groups: Vec<(String, Vec<RegressionRow>)> = groups.into_iter().collect();
    let estimates = groups
        .par_iter()
        .filter_map(|(key, rows)| {
            let include_comp = scope == Scope::Discipline && rows.iter().any(|r| r.x_comp != 0.0);
            if scope == Scope::Discipline && !include_comp {
                log::info!("{key} ({stage_filter}): no direct-competitor marks, estimating same-nationality bias only");
            }
            match estimate_with(rows, include_comp, covariance) {
                Ok(fit) => {
                    Some(BiasEstimate { scope, key: key.clone(), stage_filter, low_support: fit.n_sn_marks < LOW_SUPPORT_SN_MARKS, fit })
                }
                Err(e) => {
                    log::info!("{key} ({stage_filter}) skipped: {e}");
                    None
                }
            }
        })
        .collect();
    Ok(estimates)
}

/// wECDF of same-nationality bias estimates weighted by their number of
/// same-nationality marks.
pub fn weighted_ecdf(estimates: &[BiasEstimate]) -> Result<Vec<EcdfPoint>, StatsError> {
    let points: Vec<(f64, f64)> = estimates.iter().map(|e| (e.fit.sn.estimate, e.fit.n_sn_marks as f64)).collect();
    stats::weighted_ecdf(&points)
}
