//! Synthetic competitions drawn from the judging error model with known
//! ground truth:
//!
//! `s = λ + (μ_j + β_SN·𝟙_SN + β_COMP·𝟙_COMP)·σ(λ) + σ(λ)·M_j·z`
//!
//! rounded to the 0.1 grid. Every random draw is keyed on the seed and the
//! coordinates it belongs to, so output does not depend on scheduling.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{write_dataset, CountryCode, Discipline, JudgeRole, Mark, MarkKind, MarkRecord, Stage};
use crate::stats::rng::StreamKey;

pub const COUNTRIES: [&str; 60] = [
    "ALG", "ARG", "ARM", "AUS", "AUT", "AZE", "BEL", "BLR", "BRA", "BUL", "CAN", "CHI", "CHN", "COL", "CRO", "CUB", "CYP", "CZE", "DEN",
    "EGY", "ESP", "EST", "FIN", "FRA", "GBR", "GEO", "GER", "GRE", "HKG", "HUN", "IND", "IRL", "ISR", "ITA", "JPN", "KAZ", "KOR", "LAT",
    "LTU", "MEX", "NED", "NOR", "NZL", "POL", "POR", "PRK", "PUR", "ROU", "RSA", "RUS", "SLO", "SRB", "SUI", "SVK", "SWE", "TPE", "TUR",
    "UKR", "USA", "UZB",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Invalid(String),
    #[error("cannot parse generator config: {0}")]
    Parse(String),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::Invalid(msg.into()))
}

/// `σ(λ) = α + β·e^(γλ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaCurve {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl SigmaCurve {
    /// Curve reproducing the men's artistics values 0.31, 0.27, 0.24, 0.20,
    /// 0.15 and 0.09 at control scores 7.0 to 9.5.
    pub const ARTISTICS_M: SigmaCurve = SigmaCurve { alpha: 0.48667686, beta: -0.01994874, gamma: 0.31441382 };

    pub fn raw(&self, c: f64) -> f64 {
        self.alpha + self.beta * (self.gamma * c).exp()
    }

    /// Generating σ, clipped at zero so a zero curve means no noise.
    pub fn evaluate(&self, c: f64) -> f64 {
        self.raw(c).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityConfig {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Share of qualification performances drawn uniformly from
    /// `low_quality_range` instead (falls, aborted routines).
    pub low_quality_share: f64,
    pub low_quality_range: (f64, f64),
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig { mean: 8.4, sd: 0.6, min: 7.0, max: 9.8, low_quality_share: 0.0, low_quality_range: (4.0, 6.5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgePoolConfig {
    pub n_judges: usize,
    /// Countries taken from the head of [`COUNTRIES`]; judges are spread
    /// evenly over them and gymnasts drawn uniformly from them.
    pub n_countries: usize,
    /// Judge tendencies are drawn as `N(0, mu_sd²)` in σ units.
    pub mu_sd: f64,
    /// Accuracy factors are drawn uniformly from this range.
    pub accuracy: (f64, f64),
}

impl Default for JudgePoolConfig {
    fn default() -> Self {
        JudgePoolConfig { n_judges: 120, n_countries: 40, mu_sd: 0.1, accuracy: (0.8, 1.2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventSizes {
    pub qualification: usize,
    pub apparatus_final: usize,
    /// Gymnasts per all-around final; each performs on every apparatus.
    pub all_around_final: usize,
}

impl Default for EventSizes {
    fn default() -> Self {
        EventSizes { qualification: 24, apparatus_final: 8, all_around_final: 24 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeOverride {
    pub judge_id: String,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub accuracy: Option<f64>,
    /// Replaces the discipline and nation bias for this judge.
    #[serde(default)]
    pub beta_sn: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisciplineConfig {
    pub discipline: Discipline,
    #[serde(default)]
    pub apparatus: Vec<String>,
    pub n_performances: usize,
    #[serde(default = "default_panel_size")]
    pub panel_size: usize,
    /// Exact mark count; defaults to `panel_size · n_performances`. Panels
    /// then hold `⌊n_marks/n⌋` or `⌈n_marks/n⌉` judges.
    #[serde(default)]
    pub n_marks: Option<usize>,
    #[serde(default)]
    pub sn_rate: f64,
    /// Exact same-nationality mark count; defaults to `sn_rate · n_marks`.
    #[serde(default)]
    pub n_sn_marks: Option<usize>,
    /// Share of final-stage marks that are same-nationality marks. Unset
    /// spreads them evenly over all performances.
    #[serde(default)]
    pub finals_sn_rate: Option<f64>,
    #[serde(default)]
    pub reference_judges: usize,
    pub true_sigma: SigmaCurve,
    #[serde(default)]
    pub true_beta_sn: f64,
    #[serde(default)]
    pub true_beta_comp: f64,
    /// Per-country deviation of the same-nationality bias.
    #[serde(default)]
    pub nation_bias_sd: f64,
    /// Same-nationality bias in final stages; unset uses `true_beta_sn`.
    #[serde(default)]
    pub finals_beta_sn: Option<f64>,
    #[serde(default)]
    pub finals_share: f64,
    #[serde(default)]
    pub all_around_share: f64,
    /// All-around finalists drawn for same-nationality marks get one on
    /// every apparatus, as if a compatriot sat on each panel. Needs
    /// `finals_sn_rate`.
    #[serde(default)]
    pub all_around_sn_follows_gymnast: bool,
    #[serde(default)]
    pub quality: QualityConfig,
    #[serde(default)]
    pub judges: JudgePoolConfig,
    #[serde(default)]
    pub events: EventSizes,
    #[serde(default)]
    pub judge_overrides: Vec<JudgeOverride>,
}

fn default_panel_size() -> usize {
    5
}

pub fn default_apparatus(discipline: Discipline) -> Vec<String> {
    let list: &[&str] = match discipline {
        Discipline::Acrobatics => &["PAIR-M", "PAIR-W", "PAIR-X", "GRP-M", "GRP-W"],
        Discipline::Aerobics => &["IM", "IW", "MP", "TRIO", "GRP"],
        Discipline::ArtisticsM => &["FX", "PH", "SR", "VT", "PB", "HB"],
        Discipline::ArtisticsF => &["VT", "UB", "BB", "FX"],
        Discipline::Rhythmics => &["HOOP", "BALL", "CLUBS", "RIBBON", "ROPE"],
        Discipline::Trampoline => &["IND", "DMT", "TUM"],
    };
    list.iter().map(|s| s.to_string()).collect()
}

impl DisciplineConfig {
    pub fn new(discipline: Discipline, n_performances: usize, true_sigma: SigmaCurve) -> Self {
        DisciplineConfig {
            discipline,
            apparatus: Vec::new(),
            n_performances,
            panel_size: default_panel_size(),
            n_marks: None,
            sn_rate: 0.0,
            n_sn_marks: None,
            finals_sn_rate: None,
            reference_judges: 0,
            true_sigma,
            true_beta_sn: 0.0,
            true_beta_comp: 0.0,
            nation_bias_sd: 0.0,
            finals_beta_sn: None,
            finals_share: 0.0,
            all_around_share: 0.0,
            all_around_sn_follows_gymnast: false,
            quality: QualityConfig::default(),
            judges: JudgePoolConfig::default(),
            events: EventSizes::default(),
            judge_overrides: Vec::new(),
        }
    }

    pub fn apparatus_list(&self) -> Vec<String> {
        if self.apparatus.is_empty() {
            default_apparatus(self.discipline)
        } else {
            self.apparatus.clone()
        }
    }

    pub fn total_marks(&self) -> usize {
        self.n_marks.unwrap_or(self.panel_size * self.n_performances)
    }

    pub fn total_sn_marks(&self) -> usize {
        self.n_sn_marks.unwrap_or_else(|| (self.sn_rate * self.total_marks() as f64).round() as usize)
    }

    pub fn judge_id(&self, index: usize) -> String {
        format!("{}-J{index:03}", self.discipline)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let d = self.discipline;
        let n = self.n_performances;
        if n == 0 {
            return invalid(format!("{d}: n_performances must be positive"));
        }
        let rates = [
            ("sn_rate", self.sn_rate),
            ("finals_share", self.finals_share),
            ("all_around_share", self.all_around_share),
            ("finals_sn_rate", self.finals_sn_rate.unwrap_or(0.0)),
            ("quality.low_quality_share", self.quality.low_quality_share),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return invalid(format!("{d}: {name} = {r} outside [0, 1]"));
            }
        }
        if self.all_around_sn_follows_gymnast && self.finals_sn_rate.is_none() {
            return invalid(format!("{d}: all_around_sn_follows_gymnast needs finals_sn_rate"));
        }
        if self.finals_share + self.all_around_share > 1.0 {
            return invalid(format!("{d}: finals_share + all_around_share exceeds 1"));
        }
        if self.total_marks() / n < 4 {
            return invalid(format!("{d}: panels must hold at least 4 judges"));
        }
        let max_panel = self.total_marks().div_ceil(n);
        let j = &self.judges;
        if j.n_countries == 0 || j.n_countries > COUNTRIES.len() {
            return invalid(format!("{d}: n_countries must be in 1..={}", COUNTRIES.len()));
        }
        if j.n_judges < j.n_countries {
            return invalid(format!("{d}: every country needs a judge (n_judges < n_countries)"));
        }
        let foreign = j.n_judges - j.n_judges.div_ceil(j.n_countries);
        if foreign < max_panel {
            return invalid(format!("{d}: judge pool too small for panels of {max_panel}"));
        }
        if self.reference_judges >= 4.min(self.total_marks() / n) {
            return invalid(format!("{d}: too many reference judges"));
        }
        if !(j.accuracy.0 > 0.0 && j.accuracy.1 >= j.accuracy.0) || !(j.mu_sd >= 0.0) || !(self.nation_bias_sd >= 0.0) {
            return invalid(format!("{d}: judge accuracy must be a positive range and spreads non-negative"));
        }
        let q = &self.quality;
        if !(q.min < q.max && q.sd > 0.0 && q.low_quality_range.0 <= q.low_quality_range.1) {
            return invalid(format!("{d}: quality distribution is empty"));
        }
        let sizes = &self.events;
        if sizes.qualification == 0 || sizes.apparatus_final == 0 || sizes.all_around_final == 0 {
            return invalid(format!("{d}: event sizes must be positive"));
        }
        if self.total_sn_marks() > self.total_marks() {
            return invalid(format!("{d}: more same-nationality marks than marks"));
        }
        for o in &self.judge_overrides {
            if !(0..j.n_judges).any(|i| self.judge_id(i) == o.judge_id) {
                return invalid(format!("{d}: override for unknown judge `{}`", o.judge_id));
            }
            if o.accuracy.is_some_and(|a| !(a > 0.0)) {
                return invalid(format!("{d}: judge `{}` accuracy must be positive", o.judge_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    #[serde(rename = "discipline")]
    pub disciplines: Vec<DisciplineConfig>,
}

impl GeneratorConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, SynthError> {
        let cfg: GeneratorConfig = toml::from_str(s).map_err(|e| SynthError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let mut seen = BTreeSet::new();
        for d in &self.disciplines {
            if !seen.insert(d.discipline) {
                return invalid(format!("discipline {} configured twice", d.discipline));
            }
            d.validate()?;
        }
        if self.disciplines.is_empty() {
            return invalid("no disciplines configured");
        }
        Ok(())
    }

    /// Six disciplines with the routine, mark and same-nationality counts of
    /// the reference dataset and its by-discipline bias levels.
    pub fn full_corpus(seed: u64) -> Self {
        let rows: [(Discipline, usize, usize, usize, SigmaCurve, f64, f64); 6] = [
            (Discipline::Acrobatics, 714, 4874, 257, SigmaCurve { alpha: 0.10, beta: 60.0, gamma: -0.75 }, 0.0, -0.04),
            (Discipline::Aerobics, 921, 6396, 200, SigmaCurve { alpha: 0.08, beta: 90.0, gamma: -0.8 }, 0.25, -0.04),
            (Discipline::ArtisticsM, 7120, 46748, 909, SigmaCurve::ARTISTICS_M, 0.43, -0.02),
            (Discipline::ArtisticsF, 3545, 23515, 522, SigmaCurve { alpha: 0.05, beta: 120.0, gamma: -0.9 }, 0.28, -0.05),
            (Discipline::Rhythmics, 2636, 17673, 405, SigmaCurve { alpha: 0.06, beta: 100.0, gamma: -0.85 }, 0.34, -0.04),
            (Discipline::Trampoline, 1483, 7278, 343, SigmaCurve { alpha: 0.12, beta: 40.0, gamma: -0.7 }, -0.05, -0.06),
        ];
        let disciplines = rows
            .into_iter()
            .map(|(d, n, marks, sn, sigma, beta_sn, beta_comp)| DisciplineConfig {
                n_marks: Some(marks),
                n_sn_marks: Some(sn),
                true_beta_sn: beta_sn,
                true_beta_comp: beta_comp,
                finals_beta_sn: (d == Discipline::ArtisticsM).then_some(0.68),
                finals_share: 0.12,
                ..DisciplineConfig::new(d, n, sigma)
            })
            .collect();
        GeneratorConfig { seed, disciplines }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeTruth {
    pub judge_id: String,
    pub country: CountryCode,
    pub mu: f64,
    pub accuracy: f64,
    /// Same-nationality bias applied outside final stages.
    pub beta_sn: f64,
    /// Same-nationality bias applied in final stages.
    pub finals_beta_sn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTruth {
    pub performance_id: String,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisciplineTruth {
    pub discipline: Discipline,
    pub true_sigma: SigmaCurve,
    pub true_beta_sn: f64,
    pub true_beta_comp: f64,
    pub finals_beta_sn: f64,
    /// Per-country same-nationality bias outside finals.
    pub nation_beta_sn: BTreeMap<String, f64>,
    pub n_performances: usize,
    pub n_marks: usize,
    pub n_sn_marks: usize,
    /// Marks that received the direct-competitor bias (neighbours by true
    /// quality).
    pub n_comp_marks: usize,
    pub n_low_quality: usize,
    pub judges: Vec<JudgeTruth>,
    pub performances: Vec<PerformanceTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub quality_distribution: String,
    pub config: GeneratorConfig,
    pub disciplines: Vec<DisciplineTruth>,
}

impl Truth {
    pub fn discipline(&self, d: Discipline) -> Option<&DisciplineTruth> {
        self.disciplines.iter().find(|t| t.discipline == d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }
}

struct Judge {
    id: String,
    country_index: usize,
    mu: f64,
    accuracy: f64,
    beta_sn: f64,
    finals_beta_sn: f64,
}

struct Plan {
    index: usize,
    event: usize,
    competition_id: String,
    stage: Stage,
    apparatus: String,
    gymnast_id: String,
    country_index: usize,
    lambda: f64,
    low_quality: bool,
    panel_size: usize,
    sn_slots: usize,
}

fn truncated_normal(key: StreamKey, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    for attempt in 0..10_000u64 {
        let x = mean + sd * key.normal(attempt);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}

fn layout(cfg: &DisciplineConfig, key: StreamKey) -> Vec<Plan> {
    let apparatus = cfg.apparatus_list();
    let n_app = apparatus.len();
    let n = cfg.n_performances;
    let n_aa = ((cfg.all_around_share * n as f64).round() as usize / n_app) * n_app;
    let n_af = ((cfg.finals_share * n as f64).round() as usize).min(n - n_aa);
    let n_q = n - n_aa - n_af;
    let d = cfg.discipline;

    let mut plans = Vec::with_capacity(n);
    let mut event = 0;
    let mut gymnast = 0u64;
    let country_key = key.derive_str("country");
    let push = |plans: &mut Vec<Plan>, event: usize, comp: String, stage: Stage, app: &str, gymnast_id: String, country_index: usize| {
        plans.push(Plan {
            index: plans.len(),
            event,
            competition_id: comp,
            stage,
            apparatus: app.to_string(),
            gymnast_id,
            country_index,
            lambda: 0.0,
            low_quality: false,
            panel_size: 0,
            sn_slots: 0,
        })
    };
    for (stage, total, size) in
        [(Stage::Qualification, n_q, cfg.events.qualification), (Stage::ApparatusFinal, n_af, cfg.events.apparatus_final)]
    {
        let mut placed = 0;
        let mut e = 0;
        while placed < total {
            let k = size.min(total - placed);
            let app = &apparatus[e % n_app];
            let comp = format!("{d}{:03}", e / n_app);
            for _ in 0..k {
                let country = country_key.index(gymnast, cfg.judges.n_countries);
                push(&mut plans, event, comp.clone(), stage, app, format!("{d}-G{gymnast:05}"), country);
                gymnast += 1;
            }
            placed += k;
            e += 1;
            event += 1;
        }
    }
    let aa_gymnasts = n_aa / n_app.max(1);
    let mut placed = 0;
    let mut e = 0;
    while placed < aa_gymnasts {
        let k = cfg.events.all_around_final.min(aa_gymnasts - placed);
        let comp = format!("{d}{e:03}");
        let ids: Vec<(String, usize)> = (0..k)
            .map(|i| {
                let g = gymnast + i as u64;
                (format!("{d}-G{g:05}"), country_key.index(g, cfg.judges.n_countries))
            })
            .collect();
        gymnast += k as u64;
        for app in &apparatus {
            for (id, country) in &ids {
                push(&mut plans, event, comp.clone(), Stage::AllAroundFinal, app, id.clone(), *country);
            }
            event += 1;
        }
        placed += k;
        e += 1;
    }

    let q = &cfg.quality;
    let quality_key = key.derive_str("quality");
    for p in &mut plans {
        let k = quality_key.derive(p.index as u64);
        p.low_quality = p.stage == Stage::Qualification && k.derive(1).uniform(0) < q.low_quality_share;
        p.lambda = if p.low_quality {
            let (lo, hi) = q.low_quality_range;
            lo + (hi - lo) * k.derive(2).uniform(0)
        } else {
            truncated_normal(k.derive(3), q.mean, q.sd, q.min, q.max)
        };
    }

    // Exact mark count: the first `extra` performances of a keyed shuffle
    // get one more judge.
    let total = cfg.total_marks();
    let base = total / n;
    let extra = total % n;
    let order = key.derive_str("panel-size").permutation(n);
    for (rank, &i) in order.iter().enumerate() {
        plans[i].panel_size = base + usize::from(rank < extra);
    }
    plans
}

fn allocate_sn(cfg: &DisciplineConfig, plans: &mut [Plan], key: StreamKey) -> Result<(), SynthError> {
    let total = cfg.total_sn_marks();
    let singles = |keep: &dyn Fn(&Plan) -> bool| -> Vec<Vec<usize>> { plans.iter().filter(|p| keep(p)).map(|p| vec![p.index]).collect() };
    let marks_in = |units: &[Vec<usize>]| -> usize { units.iter().flatten().map(|&i| plans[i].panel_size).sum() };
    // Each class is a list of units and a mark count; placing a mark on a
    // unit gives every performance in it one same-nationality slot.
    let classes: Vec<(Vec<Vec<usize>>, usize)> = match cfg.finals_sn_rate {
        Some(rate) if cfg.all_around_sn_follows_gymnast => {
            let finals = singles(&|p| p.stage == Stage::ApparatusFinal);
            let mut by_gymnast: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for p in plans.iter().filter(|p| p.stage == Stage::AllAroundFinal) {
                by_gymnast.entry(&p.gymnast_id).or_default().push(p.index);
            }
            let all_around: Vec<Vec<usize>> = by_gymnast.into_values().collect();
            let n_app = all_around.first().map_or(1, Vec::len);
            let n_aa = (((rate * marks_in(&all_around) as f64) / n_app as f64).round() as usize * n_app).min(total);
            let n_af = ((rate * marks_in(&finals) as f64).round() as usize).min(total - n_aa);
            let others = singles(&|p| !p.stage.is_final());
            vec![(finals, n_af), (all_around, n_aa), (others, total - n_af - n_aa)]
        }
        Some(rate) => {
            let finals = singles(&|p| p.stage.is_final());
            let n_finals = ((rate * marks_in(&finals) as f64).round() as usize).min(total);
            vec![(finals, n_finals), (singles(&|p| !p.stage.is_final()), total - n_finals)]
        }
        None => vec![(singles(&|_| true), total)],
    };
    let per_country = cfg.judges.n_judges / cfg.judges.n_countries;
    for (class_index, (units, count)) in classes.into_iter().enumerate() {
        if count == 0 {
            continue;
        }
        if units.is_empty() {
            return invalid(format!("{}: same-nationality marks requested for a stage with no performances", cfg.discipline));
        }
        let order = key.derive_str("sn").derive(class_index as u64).permutation(units.len());
        let mut placed = 0;
        let mut t = 0;
        while placed < count {
            for &i in &units[order[t % units.len()]] {
                let p = &mut plans[i];
                p.sn_slots += 1;
                placed += 1;
                if p.sn_slots > p.panel_size.min(per_country) {
                    return invalid(format!(
                        "{}: cannot place {count} same-nationality marks with at most {} per performance",
                        cfg.discipline,
                        p.panel_size.min(per_country)
                    ));
                }
            }
            t += 1;
        }
    }
    Ok(())
}

fn judge_pool(cfg: &DisciplineConfig, key: StreamKey) -> Vec<Judge> {
    let pool = &cfg.judges;
    let nation_key = key.derive_str("nation");
    let (lo, hi) = pool.accuracy;
    (0..pool.n_judges)
        .map(|i| {
            let k = key.derive_str("judge").derive(i as u64);
            let country_index = i % pool.n_countries;
            let nation = cfg.nation_bias_sd * nation_key.derive_str(COUNTRIES[country_index]).normal(0);
            let id = cfg.judge_id(i);
            let o = cfg.judge_overrides.iter().find(|o| o.judge_id == id);
            let base_sn = cfg.true_beta_sn + nation;
            let finals_sn = cfg.finals_beta_sn.unwrap_or(cfg.true_beta_sn) + nation;
            Judge {
                mu: o.and_then(|o| o.mu).unwrap_or(pool.mu_sd * k.normal(0)),
                accuracy: o.and_then(|o| o.accuracy).unwrap_or(lo + (hi - lo) * k.uniform(2)),
                beta_sn: o.and_then(|o| o.beta_sn).unwrap_or(base_sn),
                finals_beta_sn: o.and_then(|o| o.beta_sn).unwrap_or(finals_sn),
                country_index,
                id,
            }
        })
        .collect()
}

/// Panel of judge indices; same-nationality judges first drawn from the
/// gymnast's country, the rest from other countries, then shuffled.
fn draw_panel(plan: &Plan, judges: &[Judge], by_country: &[Vec<usize>], key: StreamKey) -> Vec<usize> {
    let k = key.derive(plan.index as u64);
    let own = &by_country[plan.country_index];
    let mut panel: Vec<usize> = k.derive(1).permutation(own.len()).into_iter().take(plan.sn_slots).map(|i| own[i]).collect();
    panel.extend(
        k.derive(2)
            .permutation(judges.len())
            .into_iter()
            .filter(|&j| judges[j].country_index != plan.country_index)
            .take(plan.panel_size - plan.sn_slots),
    );
    k.derive(3).permutation(panel.len()).into_iter().map(|i| panel[i]).collect()
}

fn generate_discipline(cfg: &DisciplineConfig, root: StreamKey) -> Result<(Vec<MarkRecord>, DisciplineTruth), SynthError> {
    let key = root.derive_str(cfg.discipline.token());
    let mut plans = layout(cfg, key);
    allocate_sn(cfg, &mut plans, key)?;
    let judges = judge_pool(cfg, key);
    let mut by_country = vec![Vec::new(); cfg.judges.n_countries];
    for (i, j) in judges.iter().enumerate() {
        by_country[j.country_index].push(i);
    }

    // Countries ranked immediately ahead of or behind each performance by
    // true quality within its event.
    let mut events: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in &plans {
        events.entry(p.event).or_default().push(p.index);
    }
    let mut neighbours: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); plans.len()];
    for members in events.values() {
        let mut sorted = members.clone();
        sorted.sort_by(|&a, &b| plans[b].lambda.total_cmp(&plans[a].lambda).then(a.cmp(&b)));
        for (pos, &i) in sorted.iter().enumerate() {
            if pos > 0 {
                neighbours[i].insert(plans[sorted[pos - 1]].country_index);
            }
            if pos + 1 < sorted.len() {
                neighbours[i].insert(plans[sorted[pos + 1]].country_index);
            }
        }
    }

    let panel_key = key.derive_str("panel");
    let noise_key = key.derive_str("noise");
    let references = cfg.reference_judges;
    let per_perf: Vec<(Vec<MarkRecord>, usize)> = plans
        .par_iter()
        .map(|p| {
            let panel = draw_panel(p, &judges, &by_country, panel_key);
            let sigma = cfg.true_sigma.evaluate(p.lambda);
            let gymnast_country: CountryCode = COUNTRIES[p.country_index].parse().expect("valid code");
            let mut comp_marks = 0;
            let marks = panel
                .iter()
                .enumerate()
                .map(|(slot, &j)| {
                    let judge = &judges[j];
                    let sn = judge.country_index == p.country_index;
                    let comp = !sn && neighbours[p.index].contains(&judge.country_index);
                    comp_marks += usize::from(comp);
                    let bias = if sn {
                        if p.stage.is_final() {
                            judge.finals_beta_sn
                        } else {
                            judge.beta_sn
                        }
                    } else if comp {
                        cfg.true_beta_comp
                    } else {
                        0.0
                    };
                    let z = noise_key.derive(p.index as u64).derive_str(&judge.id).normal(0);
                    let value = p.lambda + (judge.mu + bias) * sigma + sigma * judge.accuracy * z;
                    MarkRecord {
                        competition_id: p.competition_id.clone(),
                        stage: p.stage,
                        discipline: cfg.discipline,
                        apparatus: p.apparatus.clone(),
                        performance_id: format!("{}-{:06}", cfg.discipline, p.index),
                        gymnast_id: p.gymnast_id.clone(),
                        gymnast_country,
                        judge_id: judge.id.clone(),
                        judge_country: COUNTRIES[judge.country_index].parse().expect("valid code"),
                        judge_role: if slot + references >= panel.len() { JudgeRole::Reference } else { JudgeRole::Panel },
                        mark_kind: MarkKind::Execution,
                        mark: Mark::from_value_rounded(value),
                    }
                })
                .collect();
            (marks, comp_marks)
        })
        .collect();

    let n_comp_marks = per_perf.iter().map(|(_, c)| c).sum();
    let records: Vec<MarkRecord> = per_perf.into_iter().flat_map(|(m, _)| m).collect();
    let nation_beta_sn = (0..cfg.judges.n_countries)
        .map(|c| {
            let nation = cfg.nation_bias_sd * key.derive_str("nation").derive_str(COUNTRIES[c]).normal(0);
            (COUNTRIES[c].to_string(), cfg.true_beta_sn + nation)
        })
        .collect();
    let truth = DisciplineTruth {
        discipline: cfg.discipline,
        true_sigma: cfg.true_sigma,
        true_beta_sn: cfg.true_beta_sn,
        true_beta_comp: cfg.true_beta_comp,
        finals_beta_sn: cfg.finals_beta_sn.unwrap_or(cfg.true_beta_sn),
        nation_beta_sn,
        n_performances: plans.len(),
        n_marks: records.len(),
        n_sn_marks: records.iter().filter(|r| r.is_same_nationality()).count(),
        n_comp_marks,
        n_low_quality: plans.iter().filter(|p| p.low_quality).count(),
        judges: judges
            .iter()
            .map(|j| JudgeTruth {
                judge_id: j.id.clone(),
                country: COUNTRIES[j.country_index].parse().expect("valid code"),
                mu: j.mu,
                accuracy: j.accuracy,
                beta_sn: j.beta_sn,
                finals_beta_sn: j.finals_beta_sn,
            })
            .collect(),
        performances: plans
            .iter()
            .map(|p| PerformanceTruth { performance_id: format!("{}-{:06}", cfg.discipline, p.index), lambda: p.lambda })
            .collect(),
    };
    Ok((records, truth))
}

/// Mark records in generation order and the ground truth behind them.
pub fn generate_records(config: &GeneratorConfig) -> Result<(Vec<MarkRecord>, Truth), SynthError> {
    config.validate()?;
    let root = StreamKey::new(config.seed);
    let mut records = Vec::new();
    let mut disciplines = Vec::new();
    for d in &config.disciplines {
        let (r, t) = generate_discipline(d, root)?;
        records.extend(r);
        disciplines.push(t);
    }
    let truth = Truth {
        seed: config.seed,
        quality_distribution: "normal(mean, sd) truncated to [min, max]; low_quality_share of qualification \
                               performances uniform on low_quality_range"
            .to_string(),
        config: config.clone(),
        disciplines,
    };
    Ok((records, truth))
}

/// CSV bytes in the ingest schema plus the ground truth.
pub fn generate(config: &GeneratorConfig) -> Result<(Vec<u8>, Truth), SynthError> {
    let (records, truth) = generate_records(config)?;
    let mut out = Vec::new();
    write_dataset(&records, &mut out)?;
    Ok((out, truth))
}

/// `(control score, judging error)` pairs with control scores uniform on the
/// 0.05 grid over `range` and marks rounded to the 0.1 grid.
pub fn sigma_recovery_sample(curve: &SigmaCurve, n: usize, range: (f64, f64), seed: u64) -> Vec<(f64, f64)> {
    let lo = (range.0 * 20.0).round() as i64;
    let hi = (range.1 * 20.0).round() as i64;
    let levels = (hi - lo + 1) as usize;
    let key = StreamKey::new(seed).derive_str("sigma-recovery");
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let c = (lo + key.derive(1).index(i, levels) as i64) as f64 / 20.0;
            let s = Mark::from_value_rounded(c + curve.evaluate(c) * key.derive(2).normal(i)).value();
            (c, s - c)
        })
        .collect()
}
