//! Compares the parallel and sequential execution of an experiment sweep
//! and of oracle batch labeling. Run with `cargo bench` (parallel feature
//! on by default) to see the rayon speedup over the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use autoscale::agent::Hyperparams;
use autoscale::envsim::variance_grid_cells;
use autoscale::exec;
use autoscale::harness::{run_experiment, NnSchedule};
use autoscale::policies::{oracle_decide, OraclePolicy};
use autoscale::profiles::load_world;
use autoscale::WorldConfig;

fn world() -> WorldConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("worlds/mi8pro.world");
    load_world(path).unwrap()
}

/// One sweep cell: run the oracle policy over a scenario for a given seed.
fn sweep_cells(world: &WorldConfig) -> Vec<(String, u64)> {
    let mut cells = Vec::new();
    for id in ["S1", "S2", "S3", "S4"] {
        for seed in 0..2u64 {
            cells.push((id.to_string(), seed));
        }
    }
    cells
}

fn run_cell(world: &WorldConfig, id: &str, seed: u64) -> f64 {
    let hp = Hyperparams::default();
    let scenario = world.scenario(id).unwrap();
    let oracle = OraclePolicy { hp };
    run_experiment(world, scenario, &oracle, &NnSchedule::RoundRobin, 40, seed, &hp)
        .unwrap()
        .mean_reward
}

fn bench_sweep(c: &mut Criterion) {
    let world = world();
    let mut group = c.benchmark_group("experiment_sweep");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", "8_cells"), |b| {
        b.iter(|| {
            exec::map_items_seq(sweep_cells(&world), |(id, seed)| run_cell(&world, &id, seed))
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function(BenchmarkId::new("parallel", "8_cells"), |b| {
        b.iter(|| {
            exec::map_items_par(sweep_cells(&world), |(id, seed)| run_cell(&world, &id, seed))
        })
    });
    group.finish();
}

fn bench_oracle_labeling(c: &mut Criterion) {
    let world = world();
    let hp = Hyperparams::default();
    let work: Vec<(usize, usize)> = variance_grid_cells()
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| (0..world.nns.len()).map(move |ni| (ci, ni)))
        .collect();
    let cells = variance_grid_cells();

    let mut group = c.benchmark_group("oracle_labeling");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            exec::map_items_seq(work.clone(), |(ci, ni)| {
                oracle_decide(&world, &world.nns[ni], &cells[ci], &hp)
            })
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| {
            exec::map_items_par(work.clone(), |(ci, ni)| {
                oracle_decide(&world, &world.nns[ni], &cells[ci], &hp)
            })
        })
    });
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_oracle_labeling);
criterion_main!(benches);
