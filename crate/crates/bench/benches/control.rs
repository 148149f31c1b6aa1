use std::hint::black_box;

use armlab::emulator::lmpc_step;
use armlab::hybrid_mpc::hmpc_plan;
use armlab::simlab::{run_episode, EpisodeSetup};
use armlab::{FeedbackController, FeedbackLaw, Mode};
use armlab_bench::Fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

fn feedback_laws(c: &mut Criterion) {
    let f = Fixture::ur5();
    let (rq, rqd) = f.reference(1.0);
    let mut g = c.benchmark_group("feedback");
    for law in FeedbackLaw::ALL {
        let mut ctl = FeedbackController::new(law, f.gains.clone());
        g.bench_function(law.name(), |b| b.iter(|| ctl.compute(black_box(&f.state), &rq, &rqd, 0.005).unwrap()));
    }
    g.finish();
}

fn predictive_layers(c: &mut Criterion) {
    let f = Fixture::ur5();
    let (rq, rqd) = f.reference(1.0);
    let tau = DVector::from_element(6, 0.5);
    let mut g = c.benchmark_group("predictive");
    for h in [1, 5, 10] {
        let mpc = f.mpc.clone().with_horizon(h);
        g.bench_with_input(BenchmarkId::new("hmpc_plan", h), &h, |b, _| {
            b.iter(|| hmpc_plan(&f.model, black_box(&f.state), 1.0, &f.cond, &tau, &mpc).unwrap())
        });
    }
    g.bench_function("lmpc_step", |b| {
        b.iter(|| lmpc_step(&f.net, black_box(&f.state), &rq, &rqd, &tau, &f.mpc.limits.torque).unwrap())
    });
    g.finish();
}

fn episodes(c: &mut Criterion) {
    let f = Fixture::ur5();
    let mut cond = f.cond.clone();
    cond.duration = 0.5;
    let mut setup = EpisodeSetup::new(&f.model, &f.gains, &f.mpc);
    setup.net = Some(&f.net);
    let mut g = c.benchmark_group("episode_0.5s");
    g.sample_size(10);
    for mode in [Mode::Fb, Mode::Hmpc, Mode::Lmpc] {
        g.bench_function(mode.name(), |b| b.iter(|| run_episode(&setup, mode, FeedbackLaw::Pd, &cond, 0).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, feedback_laws, predictive_layers, episodes);
criterion_main!(benches);
