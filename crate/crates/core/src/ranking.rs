//! Score aggregation and ranking distortion: every event is ranked twice,
//! with and without same-nationality marks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CountryCode, Discipline, EventKey, JudgeRole, Performance, Stage};
use crate::stats::{competition_ranks, median, NeumaierSum};

/// Ranks at or above this count as the podium.
pub const PODIUM: usize = 3;
/// Apparatus label of all-around ranking groups.
pub const ALL_APPARATUS: &str = "ALL";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankingError {
    #[error("performance {performance_id}: {size} panel marks cannot be trimmed by {trim} on each side")]
    PanelTooSmall { performance_id: String, size: usize, trim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceHandling {
    /// References are averaged separately and combined with the panel
    /// aggregate as `mean(panel, references)`.
    AverageOfReferences,
    /// References join the panel as ordinary judges.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationRule {
    pub panel_trim: usize,
    pub reference_handling: ReferenceHandling,
    pub use_median: bool,
}

impl AggregationRule {
    pub fn trimmed(panel_trim: usize) -> Self {
        AggregationRule { panel_trim, reference_handling: ReferenceHandling::AverageOfReferences, use_median: false }
    }

    /// Median for trampoline; otherwise a trimmed mean dropping one mark per
    /// side for panels of up to six judges and two for larger panels.
    pub fn default_for(discipline: Discipline, panel_size: usize) -> Self {
        if discipline == Discipline::Trampoline {
            return AggregationRule { panel_trim: 0, reference_handling: ReferenceHandling::None, use_median: true };
        }
        AggregationRule::trimmed(if panel_size >= 7 { 2 } else { 1 })
    }
}

fn trimmed_mean(values: &mut [f64], trim: usize) -> f64 {
    values.sort_by(f64::total_cmp);
    let kept = &values[trim..values.len() - trim];
    kept.iter().copied().collect::<NeumaierSum>().total() / kept.len() as f64
}

/// Aggregated score of one performance. With `exclude_sn` the marks of
/// judges sharing the gymnast's nationality are removed first; a removed
/// reference leaves the other reference's mark as the reference average.
pub fn aggregate(performance: &Performance, rule: &AggregationRule, exclude_sn: bool) -> Result<f64, RankingError> {
    let kept = performance.marks.iter().filter(|m| !(exclude_sn && m.is_same_nationality()));
    let (mut panel, references): (Vec<f64>, Vec<f64>) = match rule.reference_handling {
        ReferenceHandling::None => (kept.map(|m| m.mark.value()).collect(), Vec::new()),
        ReferenceHandling::AverageOfReferences => {
            let (p, r): (Vec<_>, Vec<_>) = kept.partition(|m| m.judge_role == JudgeRole::Panel);
            (p.iter().map(|m| m.mark.value()).collect(), r.iter().map(|m| m.mark.value()).collect())
        }
    };
    if panel.len() < 2 * rule.panel_trim + 1 {
        return Err(RankingError::PanelTooSmall {
            performance_id: performance.performance_id.clone(),
            size: panel.len(),
            trim: rule.panel_trim,
        });
    }
    let panel_score = if rule.use_median {
        panel.sort_by(f64::total_cmp);
        median(&panel[rule.panel_trim..panel.len() - rule.panel_trim]).expect("non-empty panel")
    } else {
        trimmed_mean(&mut panel, rule.panel_trim)
    };
    if references.is_empty() {
        return Ok(panel_score);
    }
    let reference_score = references.iter().sum::<f64>() / references.len() as f64;
    Ok(0.5 * (panel_score + reference_score))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GymnastOutcome {
    pub gymnast_id: String,
    pub gymnast_country: CountryCode,
    pub score_with_sn: f64,
    /// `None` when a performance could not be aggregated without its
    /// same-nationality marks.
    pub score_without_sn: Option<f64>,
    pub rank_with_sn: usize,
    pub rank_without_sn: Option<usize>,
}

impl GymnastOutcome {
    pub fn rank_changed(&self) -> bool {
        self.rank_without_sn.is_some_and(|r| r != self.rank_with_sn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingOutcome {
    /// All-around finals are keyed with apparatus [`ALL_APPARATUS`].
    pub event_key: EventKey,
    /// Sorted by rank with SN marks, then gymnast id.
    pub gymnasts: Vec<GymnastOutcome>,
    /// The event holds at least one same-nationality mark.
    pub sn_affected: bool,
    pub changed: bool,
    pub podium_changed: bool,
    pub incomplete: bool,
}

/// Ranking group of a performance: the event itself, or the whole
/// competition stage for all-around finals.
pub fn ranking_key(p: &Performance) -> EventKey {
    let mut key = p.event_key();
    if p.stage == Stage::AllAroundFinal {
        key.apparatus = ALL_APPARATUS.to_string();
    }
    key
}

struct Entry<'a> {
    country: CountryCode,
    performances: Vec<&'a Performance>,
}

fn rank_event(key: EventKey, perfs: &[&Performance], rule: &AggregationRule) -> Result<RankingOutcome, RankingError> {
    let mut entries: BTreeMap<&str, Entry> = BTreeMap::new();
    for p in perfs {
        entries
            .entry(p.gymnast_id.as_str())
            .or_insert_with(|| Entry { country: p.gymnast_country, performances: Vec::new() })
            .performances
            .push(p);
    }
    let mut with = Vec::with_capacity(entries.len());
    let mut without = Vec::with_capacity(entries.len());
    for e in entries.values() {
        let mut total_with = NeumaierSum::new();
        let mut total_without = Some(NeumaierSum::new());
        for p in &e.performances {
            total_with.add(aggregate(p, rule, false)?);
            match (aggregate(p, rule, true), total_without.as_mut()) {
                (Ok(s), Some(t)) => t.add(s),
                (Err(err), Some(_)) => {
                    log::warn!("{key}: {err}");
                    total_without = None;
                }
                _ => {}
            }
        }
        with.push(total_with.total());
        without.push(total_without.map(|t| t.total()));
    }
    let incomplete = without.iter().any(Option::is_none);
    let rank_with = competition_ranks(&with);
    let rank_without: Vec<Option<usize>> = if incomplete {
        vec![None; with.len()]
    } else {
        let scores: Vec<f64> = without.iter().map(|s| s.expect("complete")).collect();
        competition_ranks(&scores).into_iter().map(Some).collect()
    };
    let mut gymnasts: Vec<GymnastOutcome> = entries
        .iter()
        .enumerate()
        .map(|(i, (id, e))| GymnastOutcome {
            gymnast_id: (*id).to_string(),
            gymnast_country: e.country,
            score_with_sn: with[i],
            score_without_sn: without[i],
            rank_with_sn: rank_with[i],
            rank_without_sn: rank_without[i],
        })
        .collect();
    gymnasts.sort_by(|a, b| a.rank_with_sn.cmp(&b.rank_with_sn).then_with(|| a.gymnast_id.cmp(&b.gymnast_id)));
    let changed = gymnasts.iter().any(GymnastOutcome::rank_changed);
    let podium_changed =
        gymnasts.iter().any(|g| g.rank_changed() && (g.rank_with_sn <= PODIUM || g.rank_without_sn.is_some_and(|r| r <= PODIUM)));
    Ok(RankingOutcome {
        event_key: key,
        gymnasts,
        sn_affected: perfs.iter().any(|p| p.has_same_nationality_mark()),
        changed,
        podium_changed,
        incomplete,
    })
}

/// Ranks every event with and without same-nationality marks using `rule`.
pub fn ranking_impact(performances: &[Performance], rule: &AggregationRule) -> Vec<RankingOutcome> {
    ranking_impact_with(performances, |_, _| *rule)
}

/// As [`ranking_impact`] with [`AggregationRule::default_for`] chosen per
/// event from its largest panel. Reference judges are averaged apart from
/// the panel, so they do not count towards its size.
pub fn ranking_impact_default(performances: &[Performance]) -> Vec<RankingOutcome> {
    ranking_impact_with(performances, |key, perfs| {
        let panel = perfs.iter().map(|p| p.marks.iter().filter(|m| m.judge_role == JudgeRole::Panel).count()).max().unwrap_or(0);
        AggregationRule::default_for(key.discipline, panel)
    })
}

/// Output is sorted by event key. An event whose scores with all marks
/// cannot be computed is skipped and logged; one failing only without SN
/// marks is returned flagged `incomplete`.
pub fn ranking_impact_with<F>(performances: &[Performance], rule_for: F) -> Vec<RankingOutcome>
where
    F: Fn(&EventKey, &[&Performance]) -> AggregationRule + Sync,
{
    let mut events: BTreeMap<EventKey, Vec<&Performance>> = BTreeMap::new();
    for p in performances {
        events.entry(ranking_key(p)).or_default().push(p);
    }
    let events: Vec<(EventKey, Vec<&Performance>)> = events.into_iter().collect();
    events
        .par_iter()
        .filter_map(|(key, perfs)| {
            let rule = rule_for(key, perfs);
            match rank_event(key.clone(), perfs, &rule) {
                Ok(o) => Some(o),
                Err(e) => {
                    log::warn!("{key} skipped: {e}");
                    None
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub events: usize,
    pub sn_affected_events: usize,
    pub changed_events: usize,
    pub podium_changed_events: usize,
    pub incomplete_events: usize,
    /// Gymnast entries in SN-affected events.
    pub sn_affected_entries: usize,
    pub changed_entries: usize,
}

impl RankingSummary {
    pub fn of(outcomes: &[RankingOutcome]) -> Self {
        let mut s = RankingSummary { events: outcomes.len(), ..Default::default() };
        for o in outcomes {
            s.incomplete_events += o.incomplete as usize;
            if !o.sn_affected {
                continue;
            }
            s.sn_affected_events += 1;
            s.changed_events += o.changed as usize;
            s.podium_changed_events += o.podium_changed as usize;
            s.sn_affected_entries += o.gymnasts.len();
            s.changed_entries += o.gymnasts.iter().filter(|g| g.rank_changed()).count();
        }
        s
    }

    /// Share of SN-affected events whose ranking changed.
    pub fn changed_rate(&self) -> f64 {
        if self.sn_affected_events == 0 {
            0.0
        } else {
            self.changed_events as f64 / self.sn_affected_events as f64
        }
    }
}
