//! Fixtures shared by the benchmarks.

use panel_bias::ingest::{label_marks, preprocess, Discipline, LabeledMark, MarkRecord, Performance, PreprocessConfig};
use panel_bias::synth::{generate_records, DisciplineConfig, GeneratorConfig, SigmaCurve};

/// Men's artistics corpus of `n_performances` five-judge panels with 2%
/// same-nationality marks.
pub fn artistics_records(n_performances: usize, seed: u64) -> Vec<MarkRecord> {
    let mut d = DisciplineConfig::new(Discipline::ArtisticsM, n_performances, SigmaCurve::ARTISTICS_M);
    d.sn_rate = 0.02;
    d.true_beta_sn = 0.43;
    d.finals_share = 0.1;
    d.all_around_share = 0.1;
    generate_records(&GeneratorConfig { seed, disciplines: vec![d] }).expect("valid config").0
}

pub fn performances(records: &[MarkRecord]) -> Vec<Performance> {
    preprocess(records, &PreprocessConfig::default()).expect("generated data preprocesses").performances
}

pub fn labeled(records: &[MarkRecord]) -> Vec<LabeledMark> {
    label_marks(&performances(records))
}
