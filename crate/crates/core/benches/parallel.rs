use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hybrid_bev::dataset::{channel, DesignLayout};
use hybrid_bev::ensemble::{fit_forest, ForestParams};
use hybrid_bev::eval::{generate_synthetic, loocv, RecipeConfig, RecipeKind, SyntheticConfig};
use hybrid_bev::mixed::Formula;
use hybrid_bev::par;
use hybrid_bev::physics::{annotate_panel, VehicleSpec, DEFAULT_SOC0};

fn panel() -> hybrid_bev::dataset::PanelDataset {
    let cfg = SyntheticConfig {
        n_trips: 12,
        samples_per_trip: 60,
        ..Default::default()
    };
    let (panel, _) = generate_synthetic(&cfg).unwrap();
    annotate_panel(&VehicleSpec::default(), &panel, DEFAULT_SOC0).unwrap()
}

fn bench(c: &mut Criterion) {
    let panel = panel();
    let formula = Formula::full(channel::RESIDUAL_PHY);
    let layout = DesignLayout::fit(&panel, &formula.features()).unwrap();
    let design = layout.assemble(panel.trips(), Some(channel::RESIDUAL_PHY)).unwrap();
    let params = ForestParams {
        ntrees: 40,
        ..Default::default()
    };
    let mut recipe = RecipeConfig::new(RecipeKind::Forest, formula.clone());
    recipe.forest.ntrees = 20;

    let mut group = c.benchmark_group("forest_fit");
    for (label, jobs) in [("sequential", 1), ("parallel", 0)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| par::with_jobs(jobs, || fit_forest(&design, &params, 7).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("loocv_forest");
    group.sample_size(10);
    for (label, jobs) in [("sequential", 1), ("parallel", 0)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| par::with_jobs(jobs, || loocv(&panel, &recipe, 7).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
