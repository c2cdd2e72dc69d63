use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use panel_bias::bias::{Scope, StageFilter};
use panel_bias::ingest::{parse_dataset, write_dataset, Discipline};
use panel_bias::pipeline::{analyze, AnalysisConfig};
use panel_bias::ranking::ranking_impact_default;
use panel_bias::stats::rng::StreamKey;
use panel_bias::stats::t_sf;
use panel_bias::synth::GeneratorConfig;
use panel_bias::variability::{fit_sigma, GroupKey};
use panel_bias_bench::{artistics_records, labeled, performances};

fn generation(c: &mut Criterion) {
    let cfg = GeneratorConfig::full_corpus(1);
    c.bench_function("generate full-corpus corpus", |b| b.iter(|| panel_bias::synth::generate_records(black_box(&cfg)).unwrap()));
}

fn io(c: &mut Criterion) {
    let records = artistics_records(5000, 1);
    let mut csv = Vec::new();
    write_dataset(&records, &mut csv).unwrap();
    c.bench_function("parse 25k marks", |b| b.iter(|| parse_dataset(black_box(csv.as_slice())).unwrap()));
}

fn sigma(c: &mut Criterion) {
    let marks = labeled(&artistics_records(10_000, 2));
    let key = GroupKey::discipline(Discipline::ArtisticsM);
    c.bench_function("fit sigma 50k marks", |b| b.iter(|| fit_sigma(black_box(&marks), &key).unwrap()));
}

fn estimation(c: &mut Criterion) {
    let records = artistics_records(10_000, 3);
    let analysis = analyze(&records, &AnalysisConfig::default()).unwrap();
    let mut group = c.benchmark_group("estimate bias 50k marks");
    for scope in [Scope::Discipline, Scope::Nation, Scope::Judge] {
        group.bench_function(scope.to_string(), |b| b.iter(|| analysis.estimates(scope, StageFilter::AllGymnasts).unwrap()));
    }
    group.finish();
    c.bench_function("analyze 50k marks", |b| {
        b.iter_batched(|| records.clone(), |r| analyze(&r, &AnalysisConfig::default()).unwrap(), BatchSize::LargeInput)
    });
}

fn ranking(c: &mut Criterion) {
    let perfs = performances(&artistics_records(10_000, 4));
    c.bench_function("ranking impact 10k performances", |b| b.iter(|| ranking_impact_default(black_box(&perfs))));
}

fn tdist(c: &mut Criterion) {
    let key = StreamKey::new(5);
    let inputs: Vec<(f64, f64)> = (0..1000).map(|i| (8.0 * key.normal(i), 1.0 + key.index(i, 2000) as f64)).collect();
    c.bench_function("t p-values x1000", |b| b.iter(|| inputs.iter().map(|&(t, df)| t_sf(t, df)).sum::<f64>()));
}

criterion_group!(benches, generation, io, sigma, estimation, ranking, tdist);
criterion_main!(benches);
