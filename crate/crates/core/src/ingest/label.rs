use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use super::preprocess::{EventKey, Performance};
use super::record::{ControlScore, CountryCode, MarkRecord};
use crate::stats::competition_ranks;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMark {
    pub base: MarkRecord,
    pub is_same_nationality: bool,
    pub is_direct_competitor: bool,
    pub control_score: ControlScore,
}

impl LabeledMark {
    /// Judging error `s − c`.
    pub fn error(&self) -> f64 {
        self.base.mark.value() - self.control_score.value()
    }

    pub fn event_key(&self) -> EventKey {
        EventKey {
            competition_id: self.base.competition_id.clone(),
            stage: self.base.stage,
            discipline: self.base.discipline,
            apparatus: self.base.apparatus.clone(),
        }
    }
}

fn label_event(perfs: &[&Performance]) -> Vec<LabeledMark> {
    // Distinct control scores, best first; equal scores share a level.
    let levels: Vec<ControlScore> = {
        let set: BTreeSet<ControlScore> = perfs.iter().map(|p| p.control_score).collect();
        set.into_iter().rev().collect()
    };
    let level_of = |c: ControlScore| levels.iter().position(|&l| l == c).expect("level exists");
    let mut country_levels: HashMap<CountryCode, BTreeSet<usize>> = HashMap::new();
    for p in perfs {
        country_levels.entry(p.gymnast_country).or_default().insert(level_of(p.control_score));
    }

    let mut out = Vec::new();
    for p in perfs {
        let level = level_of(p.control_score);
        for m in &p.marks {
            let sn = m.judge_country == p.gymnast_country;
            let comp = !sn
                && country_levels
                    .get(&m.judge_country)
                    .is_some_and(|ls| (level > 0 && ls.contains(&(level - 1))) || ls.contains(&(level + 1)));
            out.push(LabeledMark { base: m.clone(), is_same_nationality: sn, is_direct_competitor: comp, control_score: p.control_score });
        }
    }
    out
}

/// Labels every mark. A mark is a direct-competitor mark when the judge's
/// country has a gymnast in the same event whose control score is the next
/// distinct score above or below this gymnast's; ties at a neighbouring
/// score all count. Output is sorted by `(performance_id, judge_id)`.
pub fn label_marks(performances: &[Performance]) -> Vec<LabeledMark> {
    let mut events: BTreeMap<EventKey, Vec<&Performance>> = BTreeMap::new();
    for p in performances {
        events.entry(p.event_key()).or_default().push(p);
    }
    let groups: Vec<Vec<&Performance>> = events.into_values().collect();
    let mut labeled: Vec<LabeledMark> = groups.par_iter().flat_map_iter(|g| label_event(g)).collect();
    labeled.sort_by(|a, b| a.base.performance_id.cmp(&b.base.performance_id).then_with(|| a.base.judge_id.cmp(&b.base.judge_id)));
    labeled
}

/// Competition rank of each performance within its event, by control score.
pub fn event_ranks(marks: &[LabeledMark]) -> HashMap<String, usize> {
    let mut events: BTreeMap<EventKey, BTreeMap<&str, ControlScore>> = BTreeMap::new();
    for m in marks {
        events.entry(m.event_key()).or_default().insert(m.base.performance_id.as_str(), m.control_score);
    }
    let mut out = HashMap::new();
    for perfs in events.values() {
        let scores: Vec<f64> = perfs.values().map(|c| c.value()).collect();
        let ranks = competition_ranks(&scores);
        for ((pid, _), rank) in perfs.iter().zip(ranks) {
            out.insert((*pid).to_string(), rank);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::record::{Discipline, JudgeRole, Mark, MarkKind, Stage};
    use crate::stats::rng::StreamKey;
    use proptest::prelude::*;

    fn perf(pid: &str, country: &str, control_tenths: u8, judges: &[(&str, &str)]) -> Performance {
        let marks: Vec<MarkRecord> = judges
            .iter()
            .map(|(j, jc)| MarkRecord {
                competition_id: "C".into(),
                stage: Stage::ApparatusFinal,
                discipline: Discipline::ArtisticsM,
                apparatus: "HB".into(),
                performance_id: pid.into(),
                gymnast_id: format!("g-{pid}"),
                gymnast_country: country.parse().unwrap(),
                judge_id: (*j).into(),
                judge_country: jc.parse().unwrap(),
                judge_role: JudgeRole::Panel,
                mark_kind: MarkKind::Execution,
                mark: Mark::from_tenths(control_tenths).unwrap(),
            })
            .collect();
        Performance {
            performance_id: pid.into(),
            competition_id: "C".into(),
            stage: Stage::ApparatusFinal,
            discipline: Discipline::ArtisticsM,
            apparatus: "HB".into(),
            gymnast_id: format!("g-{pid}"),
            gymnast_country: country.parse().unwrap(),
            control_score: ControlScore::median_of(marks.iter().map(|m| m.mark)).unwrap(),
            marks,
        }
    }

    fn find<'a>(marks: &'a [LabeledMark], pid: &str, judge: &str) -> &'a LabeledMark {
        marks.iter().find(|m| m.base.performance_id == pid && m.base.judge_id == judge).unwrap()
    }

    #[test]
    fn same_nationality_by_definition() {
        let ps = vec![perf("p1", "KOR", 90, &[("jk", "KOR"), ("jf", "FRA")])];
        let out = label_marks(&ps);
        assert!(find(&out, "p1", "jk").is_same_nationality);
        assert!(!find(&out, "p1", "jf").is_same_nationality);
    }

    #[test]
    fn neighbours_of_compatriot_are_direct_competitors() {
        let judges = [("jk", "KOR"), ("jx", "FRA")];
        let ps = vec![perf("p1", "USA", 92, &judges), perf("p2", "KOR", 90, &judges), perf("p3", "CHN", 88, &judges)];
        let out = label_marks(&ps);
        assert!(find(&out, "p1", "jk").is_direct_competitor);
        assert!(find(&out, "p3", "jk").is_direct_competitor);
        assert!(!find(&out, "p2", "jk").is_direct_competitor);
        assert!(find(&out, "p2", "jk").is_same_nationality);
        assert!(!find(&out, "p1", "jx").is_direct_competitor);
    }

    #[test]
    fn tied_neighbours_are_all_direct_competitors() {
        let judges = [("jk", "KOR")];
        let ps = vec![
            perf("p1", "KOR", 92, &judges),
            perf("p2", "USA", 90, &judges),
            perf("p2b", "CHN", 90, &judges),
            perf("p3", "FRA", 88, &judges),
        ];
        let out = label_marks(&ps);
        assert!(find(&out, "p2", "jk").is_direct_competitor);
        assert!(find(&out, "p2b", "jk").is_direct_competitor);
        assert!(!find(&out, "p3", "jk").is_direct_competitor);
    }

    #[test]
    fn stages_rank_separately() {
        let judges = [("jk", "KOR")];
        let mut final_kor = perf("p2", "KOR", 90, &judges);
        final_kor.stage = Stage::Qualification;
        for m in &mut final_kor.marks {
            m.stage = Stage::Qualification;
        }
        let ps = vec![perf("p1", "USA", 91, &judges), final_kor];
        let out = label_marks(&ps);
        assert!(!find(&out, "p1", "jk").is_direct_competitor);
    }

    /// Brute force: q is a direct competitor of p when their scores differ and
    /// no performance in the event scores strictly between them.
    fn brute_force_comp(perfs: &[Performance], p: &Performance, judge_country: CountryCode) -> bool {
        if p.gymnast_country == judge_country {
            return false;
        }
        perfs.iter().filter(|q| q.gymnast_country == judge_country).any(|q| {
            let (lo, hi) =
                if q.control_score < p.control_score { (q.control_score, p.control_score) } else { (p.control_score, q.control_score) };
            lo != hi && !perfs.iter().any(|r| r.control_score > lo && r.control_score < hi)
        })
    }

    const COUNTRIES: [&str; 4] = ["KOR", "JPN", "USA", "FRA"];

    fn random_event(seed: u64, n: usize) -> Vec<Performance> {
        let key = StreamKey::new(seed);
        let judges: Vec<(String, String)> = COUNTRIES.iter().map(|c| (format!("j{c}"), (*c).to_string())).collect();
        let jrefs: Vec<(&str, &str)> = judges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        (0..n)
            .map(|i| {
                let country = COUNTRIES[key.derive(1).index(i as u64, COUNTRIES.len())];
                let score = 86 + key.derive(2).index(i as u64, 5) as u8;
                perf(&format!("p{i:02}"), country, score, &jrefs)
            })
            .collect()
    }

    #[test]
    fn labels_match_brute_force_with_ties() {
        for seed in 0..200 {
            let ps = random_event(seed, 9);
            let out = label_marks(&ps);
            for m in &out {
                let p = ps.iter().find(|p| p.performance_id == m.base.performance_id).unwrap();
                assert_eq!(m.is_direct_competitor, brute_force_comp(&ps, p, m.base.judge_country), "seed {seed}");
                assert!(!(m.is_direct_competitor && m.is_same_nationality));
            }
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..1000, shuffle in 0u64..1000) {
            let ps = random_event(seed, 10);
            let perm = StreamKey::new(shuffle).permutation(ps.len());
            let shuffled: Vec<Performance> = perm.iter().map(|&i| ps[i].clone()).collect();
            prop_assert_eq!(label_marks(&ps), label_marks(&shuffled));
        }
    }

    #[test]
    fn event_ranks_use_competition_ties() {
        let judges = [("jk", "KOR")];
        let ps = vec![
            perf("a", "KOR", 92, &judges),
            perf("b", "USA", 90, &judges),
            perf("c", "CHN", 90, &judges),
            perf("d", "FRA", 88, &judges),
        ];
        let ranks = event_ranks(&label_marks(&ps));
        assert_eq!(ranks["a"], 1);
        assert_eq!(ranks["b"], 2);
        assert_eq!(ranks["c"], 2);
        assert_eq!(ranks["d"], 4);
    }
}
