use std::collections::BTreeMap;

use panel_bias::ingest::{parse_dataset, preprocess, Discipline, PreprocessConfig};
use panel_bias::synth::{generate, generate_records, DisciplineConfig, GeneratorConfig, JudgePoolConfig, SigmaCurve};

fn only(cfg: GeneratorConfig, d: Discipline) -> GeneratorConfig {
    GeneratorConfig { disciplines: cfg.disciplines.into_iter().filter(|c| c.discipline == d).collect(), ..cfg }
}

#[test]
fn acrobatics_shaped_file_parses_to_every_row() {
    let cfg = only(GeneratorConfig::full_corpus(3), Discipline::Acrobatics);
    let (csv, _) = generate(&cfg).unwrap();
    let records = parse_dataset(csv.as_slice()).unwrap();
    assert_eq!(records.len(), 4874);
    assert_eq!(records.iter().filter(|r| r.is_same_nationality()).count(), 257);
}

#[test]
fn full_corpus_counts_survive_the_csv() {
    let (csv, truth) = generate(&GeneratorConfig::full_corpus(1)).unwrap();
    let records = parse_dataset(csv.as_slice()).unwrap();
    let mut perfs: BTreeMap<Discipline, std::collections::BTreeSet<&str>> = BTreeMap::new();
    let mut marks: BTreeMap<Discipline, (usize, usize)> = BTreeMap::new();
    for r in &records {
        perfs.entry(r.discipline).or_default().insert(&r.performance_id);
        let e = marks.entry(r.discipline).or_default();
        e.0 += 1;
        e.1 += r.is_same_nationality() as usize;
    }
    let expected = [
        (Discipline::Acrobatics, 714, 4874, 257),
        (Discipline::Aerobics, 921, 6396, 200),
        (Discipline::ArtisticsM, 7120, 46748, 909),
        (Discipline::ArtisticsF, 3545, 23515, 522),
        (Discipline::Rhythmics, 2636, 17673, 405),
        (Discipline::Trampoline, 1483, 7278, 343),
    ];
    for (d, n, m, sn) in expected {
        assert_eq!(perfs[&d].len(), n, "{d}");
        assert_eq!(marks[&d], (m, sn), "{d}");
        let t = truth.discipline(d).unwrap();
        assert_eq!((t.n_performances, t.n_marks, t.n_sn_marks), (n, m, sn));
    }
}

#[test]
fn low_quality_share_is_excluded() {
    let mut d = DisciplineConfig::new(Discipline::ArtisticsM, 6000, SigmaCurve::ARTISTICS_M);
    d.quality.low_quality_share = 0.099;
    let cfg = GeneratorConfig { seed: 5, disciplines: vec![d] };
    let (records, truth) = generate_records(&cfg).unwrap();
    let pre = preprocess(&records, &PreprocessConfig::default()).unwrap();
    let share = pre.report.low_median_share();
    // binomial sd at n = 6000 is about 0.004
    assert!((share - 0.099).abs() < 0.015, "{share}");
    assert!(pre.report.dropped_low_median >= truth.disciplines[0].n_low_quality);
}

#[test]
fn per_bin_error_sd_follows_the_true_curve() {
    let curve = SigmaCurve { alpha: 0.05, beta: 120.0, gamma: -0.9 };
    let mut d = DisciplineConfig::new(Discipline::ArtisticsF, 20000, curve);
    d.judges = JudgePoolConfig { mu_sd: 0.0, accuracy: (1.0, 1.0), ..JudgePoolConfig::default() };
    let cfg = GeneratorConfig { seed: 9, disciplines: vec![d] };
    let (records, truth) = generate_records(&cfg).unwrap();
    let lambda: BTreeMap<&str, f64> = truth.disciplines[0].performances.iter().map(|p| (p.performance_id.as_str(), p.lambda)).collect();
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in &records {
        let l = lambda[r.performance_id.as_str()];
        bins.entry((l * 4.0).floor() as i64).or_default().push(r.mark.value() - l);
    }
    let mut checked = 0;
    for (b, errs) in bins.iter().filter(|(_, e)| e.len() >= 3000) {
        let n = errs.len() as f64;
        let sd = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        // rounding to the 0.1 grid adds 0.1²/12 of variance; σ is evaluated
        // at the bin centre
        let c = (*b as f64 + 0.5) / 4.0;
        let expected = (curve.evaluate(c).powi(2) + 0.01 / 12.0).sqrt();
        assert!((sd / expected - 1.0).abs() < 0.08, "bin {c}: {sd} vs {expected}");
        checked += 1;
    }
    assert!(checked >= 4);
}
