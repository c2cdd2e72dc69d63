use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::{ControlScore, CountryCode, Discipline, MarkKind, MarkRecord, Stage};
use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Performances whose panel median is below this are dropped.
    pub min_median: f64,
    /// Performances with fewer marks than this are dropped.
    pub min_panel: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { min_median: 7.0, min_panel: 4 }
    }
}

impl PreprocessConfig {
    /// Reads `key = value` lines (a TOML subset).
    pub fn from_toml_str(s: &str) -> Result<Self, IngestError> {
        let cfg: PreprocessConfig = toml::from_str(s).map_err(|e| IngestError::Config(e.to_string()))?;
        if !cfg.min_median.is_finite() {
            return Err(IngestError::Config("min_median must be finite".into()));
        }
        Ok(cfg)
    }
}

/// A competition event: one ranking group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventKey {
    pub competition_id: String,
    pub stage: Stage,
    pub discipline: Discipline,
    pub apparatus: String,
}

impl std::fmt::Display for EventKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}/{}", self.competition_id, self.stage, self.discipline, self.apparatus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Performance {
    pub performance_id: String,
    pub competition_id: String,
    pub stage: Stage,
    pub discipline: Discipline,
    pub apparatus: String,
    pub gymnast_id: String,
    pub gymnast_country: CountryCode,
    pub control_score: ControlScore,
    /// Sorted by judge id.
    pub marks: Vec<MarkRecord>,
}

impl Performance {
    pub fn event_key(&self) -> EventKey {
        EventKey {
            competition_id: self.competition_id.clone(),
            stage: self.stage,
            discipline: self.discipline,
            apparatus: self.apparatus.clone(),
        }
    }

    pub fn recompute_control_score(&self) -> Option<ControlScore> {
        ControlScore::median_of(self.marks.iter().map(|m| m.mark))
    }

    pub fn has_same_nationality_mark(&self) -> bool {
        self.marks.iter().any(MarkRecord::is_same_nationality)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PreprocessReport {
    pub input_marks: usize,
    pub input_performances: usize,
    pub excluded_difficulty_marks: usize,
    pub excluded_synchronized_marks: usize,
    pub dropped_small_panel: usize,
    pub dropped_low_median: usize,
    pub kept_performances: usize,
    pub kept_marks: usize,
}

impl PreprocessReport {
    /// Share of performances (after mark-level exclusions) removed by the
    /// median threshold.
    pub fn low_median_share(&self) -> f64 {
        let considered = self.kept_performances + self.dropped_low_median;
        if considered == 0 {
            0.0
        } else {
            self.dropped_low_median as f64 / considered as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// Sorted by performance id.
    pub performances: Vec<Performance>,
    pub report: PreprocessReport,
}

pub fn is_synchronized_apparatus(discipline: Discipline, apparatus: &str) -> bool {
    discipline == Discipline::Trampoline && apparatus.trim().to_ascii_uppercase().starts_with("SYN")
}

/// Groups marks into performances with reference and panel judges merged,
/// drops difficulty and synchronized-trampoline marks, small panels and
/// performances whose median is below `min_median`.
pub fn preprocess(records: &[MarkRecord], config: &PreprocessConfig) -> Result<Preprocessed, IngestError> {
    if records.is_empty() {
        return Err(IngestError::Empty);
    }
    let mut report = PreprocessReport { input_marks: records.len(), ..Default::default() };

    let mut groups: BTreeMap<&str, Vec<&MarkRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.performance_id.as_str()).or_default().push(r);
    }
    report.input_performances = groups.len();

    let mut performances = Vec::with_capacity(groups.len());
    for (pid, marks) in groups {
        let first = marks[0];
        for m in &marks[1..] {
            let field = if m.competition_id != first.competition_id {
                Some("competition_id")
            } else if m.stage != first.stage {
                Some("stage")
            } else if m.discipline != first.discipline {
                Some("discipline")
            } else if m.apparatus != first.apparatus {
                Some("apparatus")
            } else if m.gymnast_id != first.gymnast_id {
                Some("gymnast_id")
            } else if m.gymnast_country != first.gymnast_country {
                Some("gymnast_country")
            } else {
                None
            };
            if let Some(field) = field {
                return Err(IngestError::InconsistentPerformance(pid.to_string(), field));
            }
        }

        let mut kept: Vec<MarkRecord> = Vec::with_capacity(marks.len());
        for m in marks {
            if m.mark_kind == MarkKind::Difficulty {
                report.excluded_difficulty_marks += 1;
            } else if is_synchronized_apparatus(m.discipline, &m.apparatus) {
                report.excluded_synchronized_marks += 1;
            } else {
                kept.push(m.clone());
            }
        }
        if kept.is_empty() {
            continue;
        }
        if kept.len() < config.min_panel {
            log::info!("performance {pid}: panel of {} below minimum {}, excluded", kept.len(), config.min_panel);
            report.dropped_small_panel += 1;
            continue;
        }
        kept.sort_by(|a, b| a.judge_id.cmp(&b.judge_id));
        let control_score = ControlScore::median_of(kept.iter().map(|m| m.mark)).expect("non-empty panel");
        if control_score.value() < config.min_median - 1e-9 {
            report.dropped_low_median += 1;
            continue;
        }
        performances.push(Performance {
            performance_id: pid.to_string(),
            competition_id: first.competition_id.clone(),
            stage: first.stage,
            discipline: first.discipline,
            apparatus: first.apparatus.clone(),
            gymnast_id: first.gymnast_id.clone(),
            gymnast_country: first.gymnast_country,
            control_score,
            marks: kept,
        });
    }
    report.kept_performances = performances.len();
    report.kept_marks = performances.iter().map(|p| p.marks.len()).sum();
    Ok(Preprocessed { performances, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::record::{JudgeRole, Mark};

    pub(crate) fn rec(pid: &str, judge: &str, tenths: u8) -> MarkRecord {
        MarkRecord {
            competition_id: "C1".into(),
            stage: Stage::Qualification,
            discipline: Discipline::ArtisticsM,
            apparatus: "FX".into(),
            performance_id: pid.into(),
            gymnast_id: format!("g-{pid}"),
            gymnast_country: "JPN".parse().unwrap(),
            judge_id: judge.into(),
            judge_country: "KOR".parse().unwrap(),
            judge_role: JudgeRole::Panel,
            mark_kind: MarkKind::Execution,
            mark: Mark::from_tenths(tenths).unwrap(),
        }
    }

    fn panel(pid: &str, tenths: &[u8]) -> Vec<MarkRecord> {
        tenths.iter().enumerate().map(|(i, &t)| rec(pid, &format!("j{i}"), t)).collect()
    }

    #[test]
    fn odd_panel_median() {
        let out = preprocess(&panel("p1", &[80, 81, 83, 85, 90]), &PreprocessConfig::default()).unwrap();
        assert_eq!(out.performances.len(), 1);
        assert_eq!(out.performances[0].control_score.value(), 8.3);
    }

    #[test]
    fn drops_low_median() {
        let mut recs = panel("p1", &[65, 68, 69, 71]);
        recs.extend(panel("p2", &[70, 70, 71, 75]));
        let out = preprocess(&recs, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.performances.len(), 1);
        assert_eq!(out.performances[0].performance_id, "p2");
        assert_eq!(out.report.dropped_low_median, 1);
        assert_eq!(out.report.low_median_share(), 0.5);
    }

    #[test]
    fn small_panel_excluded_not_fatal() {
        let mut recs = panel("p1", &[80, 81, 82]);
        recs.extend(panel("p2", &[80, 81, 82, 83]));
        let out = preprocess(&recs, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.report.dropped_small_panel, 1);
        assert_eq!(out.performances.len(), 1);
    }

    #[test]
    fn excludes_difficulty_and_synchronized() {
        let mut recs = panel("p1", &[80, 81, 82, 83]);
        recs[0].mark_kind = MarkKind::Difficulty;
        let mut sync = panel("p2", &[80, 81, 82, 83, 84]);
        for r in &mut sync {
            r.discipline = Discipline::Trampoline;
            r.apparatus = "SYN".into();
        }
        recs.extend(sync);
        let out = preprocess(&recs, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.report.excluded_difficulty_marks, 1);
        assert_eq!(out.report.excluded_synchronized_marks, 5);
        // p1 is left with three marks
        assert_eq!(out.report.dropped_small_panel, 1);
        assert!(out.performances.is_empty());
    }

    #[test]
    fn reference_judges_join_the_panel() {
        let mut recs = panel("p1", &[80, 82, 84, 86]);
        recs[3].judge_role = JudgeRole::Reference;
        let out = preprocess(&recs, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.performances[0].marks.len(), 4);
        assert_eq!(out.performances[0].control_score.value(), 8.3);
    }

    #[test]
    fn inconsistent_metadata_is_an_error() {
        let mut recs = panel("p1", &[80, 82, 84, 86]);
        recs[2].gymnast_id = "other".into();
        assert!(matches!(preprocess(&recs, &PreprocessConfig::default()), Err(IngestError::InconsistentPerformance(_, "gymnast_id"))));
        assert!(matches!(preprocess(&[], &PreprocessConfig::default()), Err(IngestError::Empty)));
    }

    #[test]
    fn config_parses_key_value_lines() {
        let cfg = PreprocessConfig::from_toml_str("min_median=6.5\nmin_panel=5\n").unwrap();
        assert_eq!(cfg, PreprocessConfig { min_median: 6.5, min_panel: 5 });
        let cfg = PreprocessConfig::from_toml_str("# defaults\n").unwrap();
        assert_eq!(cfg, PreprocessConfig::default());
        assert!(PreprocessConfig::from_toml_str("min_mediam=7").is_err());
    }

    #[test]
    fn control_score_recomputation_is_idempotent() {
        let out = preprocess(&panel("p1", &[70, 75, 79, 88, 91, 93]), &PreprocessConfig::default()).unwrap();
        let p = &out.performances[0];
        assert_eq!(p.recompute_control_score(), Some(p.control_score));
        assert_eq!(p.control_score.value(), 8.35);
    }
}
