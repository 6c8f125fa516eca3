use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use premdl::bench::{gen_graph, GraphSpec, Variant};
use premdl::{evaluate, EvalOptions, Execution, Interpretation, Value};

fn arcs(n: usize) -> Interpretation {
    let mut i = Interpretation::new();
    i.set("arc", gen_graph(&GraphSpec::dag(n, 0.1, 7)).unwrap());
    i
}

fn execution(c: &mut Criterion) {
    let mut group = c.benchmark_group("spath_dag");
    group.sample_size(10);
    for n in [100, 200] {
        let edb = arcs(n);
        for v in [Variant::Spath, Variant::SpathPrem] {
            let p = v.program(&Value::Int(0));
            for (name, execution) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
                let opts = EvalOptions {
                    execution,
                    ..EvalOptions::default()
                };
                group.bench_with_input(BenchmarkId::new(format!("{}/{name}", v.name()), n), &edb, |b, edb| {
                    b.iter(|| evaluate(&p, edb, &opts).unwrap())
                });
            }
        }
    }
    group.finish();
}

criterion_group!(benches, execution);
criterion_main!(benches);
