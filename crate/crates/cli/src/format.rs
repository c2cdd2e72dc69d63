//! Flat-file formats shared by the subcommands.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use panel_bias::bias::{BiasEstimate, Coefficient};
use panel_bias::ranking::RankingOutcome;
use panel_bias::stats::EcdfPoint;
use panel_bias::variability::{GroupKey, JudgeProfile, ProfileTable, SigmaModel};
use serde::{Deserialize, Serialize};

/// Nine significant digits, printed in the shortest form that parses back
/// to the same value.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub const SIGMA_HEADER: [&str; 7] = ["group", "alpha", "beta", "gamma", "c_min", "c_max", "weighted_rmse"];
pub const PROFILE_HEADER: [&str; 5] = ["group", "judge_id", "mu_hat", "marking_score", "n_marks"];
pub const ESTIMATE_HEADER: [&str; 15] = [
    "scope",
    "key",
    "stage",
    "beta_sn",
    "se_sn",
    "t_sn",
    "p_sn",
    "ci_lo",
    "ci_hi",
    "beta_comp",
    "se_comp",
    "t_comp",
    "p_comp",
    "n_obs",
    "n_sn_marks",
];
pub const ECDF_HEADER: [&str; 2] = ["x", "F"];
pub const RANKING_HEADER: [&str; 8] =
    ["event", "gymnast", "score_with", "score_without", "rank_with", "rank_without", "changed", "podium_changed"];

fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub fn write_sigma<W: Write>(models: &BTreeMap<GroupKey, SigmaModel>, out: W) -> Result<()> {
    let mut w = writer(out, &SIGMA_HEADER)?;
    for (k, m) in models {
        w.write_record([
            k.to_string(),
            num(m.alpha),
            num(m.beta),
            num(m.gamma),
            num(m.fit_domain.0),
            num(m.fit_domain.1),
            num(m.weighted_rmse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SigmaRow {
    group: String,
    alpha: f64,
    beta: f64,
    gamma: f64,
    c_min: f64,
    c_max: f64,
    weighted_rmse: f64,
}

pub fn read_sigma<R: Read>(input: R) -> Result<BTreeMap<GroupKey, SigmaModel>> {
    let mut out = BTreeMap::new();
    for (i, row) in csv::Reader::from_reader(input).deserialize::<SigmaRow>().enumerate() {
        let r = row.with_context(|| format!("sigma table line {}", i + 2))?;
        let key: GroupKey = r.group.parse().map_err(anyhow::Error::msg)?;
        out.insert(
            key.clone(),
            SigmaModel {
                group_key: key,
                alpha: r.alpha,
                beta: r.beta,
                gamma: r.gamma,
                fit_domain: (r.c_min, r.c_max),
                weighted_rmse: r.weighted_rmse,
            },
        );
    }
    Ok(out)
}

pub fn write_profiles<W: Write>(profiles: &ProfileTable, out: W) -> Result<()> {
    let mut w = writer(out, &PROFILE_HEADER)?;
    for p in profiles.iter() {
        w.write_record([p.group_key.to_string(), p.judge_id.clone(), num(p.mu_hat), num(p.marking_score), p.n_marks.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    group: String,
    judge_id: String,
    mu_hat: f64,
    marking_score: f64,
    n_marks: usize,
}

pub fn read_profiles<R: Read>(input: R) -> Result<ProfileTable> {
    let mut out = ProfileTable::default();
    for (i, row) in csv::Reader::from_reader(input).deserialize::<ProfileRow>().enumerate() {
        let r = row.with_context(|| format!("profile table line {}", i + 2))?;
        out.insert(JudgeProfile {
            group_key: r.group.parse().map_err(anyhow::Error::msg)?,
            judge_id: r.judge_id,
            mu_hat: r.mu_hat,
            marking_score: r.marking_score,
            n_marks: r.n_marks,
        });
    }
    Ok(out)
}

/// One line of the estimates table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub scope: String,
    pub key: String,
    pub stage: String,
    pub beta_sn: f64,
    pub se_sn: f64,
    pub t_sn: f64,
    pub p_sn: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub beta_comp: Option<f64>,
    pub se_comp: Option<f64>,
    pub t_comp: Option<f64>,
    pub p_comp: Option<f64>,
    pub n_obs: usize,
    pub n_sn_marks: usize,
}

impl From<&BiasEstimate> for EstimateRow {
    fn from(e: &BiasEstimate) -> Self {
        let c = e.fit.comp.as_ref();
        let field = |f: fn(&Coefficient) -> f64| c.map(f);
        EstimateRow {
            scope: e.scope.to_string(),
            key: e.key.clone(),
            stage: e.stage_filter.to_string(),
            beta_sn: e.fit.sn.estimate,
            se_sn: e.fit.sn.se,
            t_sn: e.fit.sn.t,
            p_sn: e.fit.sn.p,
            ci_lo: e.fit.sn.ci95.0,
            ci_hi: e.fit.sn.ci95.1,
            beta_comp: field(|c| c.estimate),
            se_comp: field(|c| c.se),
            t_comp: field(|c| c.t),
            p_comp: field(|c| c.p),
            n_obs: e.fit.n_obs,
            n_sn_marks: e.fit.n_sn_marks,
        }
    }
}

pub fn write_estimates<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let mut w = writer(out, &ESTIMATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.scope.clone(),
            r.key.clone(),
            r.stage.clone(),
            num(r.beta_sn),
            num(r.se_sn),
            num(r.t_sn),
            num(r.p_sn),
            num(r.ci_lo),
            num(r.ci_hi),
            opt(r.beta_comp),
            opt(r.se_comp),
            opt(r.t_comp),
            opt(r.p_comp),
            r.n_obs.to_string(),
            r.n_sn_marks.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates<R: Read>(input: R) -> Result<Vec<EstimateRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ESTIMATE_HEADER {
        bail!("estimates header must be `{}`", ESTIMATE_HEADER.join(","));
    }
    reader.deserialize().enumerate().map(|(i, r)| r.with_context(|| format!("estimates line {}", i + 2))).collect()
}

pub fn write_ecdf<W: Write>(points: &[EcdfPoint], out: W) -> Result<()> {
    let mut w = writer(out, &ECDF_HEADER)?;
    for p in points {
        w.write_record([num(p.x), num(p.cumulative)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ranking<W: Write>(outcomes: &[RankingOutcome], out: W) -> Result<()> {
    let mut w = writer(out, &RANKING_HEADER)?;
    for o in outcomes {
        let event = o.event_key.to_string();
        for g in &o.gymnasts {
            w.write_record([
                event.clone(),
                g.gymnast_id.clone(),
                num(g.score_with_sn),
                opt(g.score_without_sn),
                g.rank_with_sn.to_string(),
                g.rank_without_sn.map(|r| r.to_string()).unwrap_or_default(),
                o.changed.to_string(),
                o.podium_changed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
