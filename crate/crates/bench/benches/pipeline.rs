use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use screwgrasp::geometry::{AntipodalPair, Screw, Vec3};
use screwgrasp::metric::{env_contact, solve, FrictionModel, Physics, TaskInstance};
use screwgrasp::mlp::MlpModel;
use screwgrasp::region::{compute_region, MlpScorer, PipelineConfig};
use screwgrasp::scan::{box_mesh, render_partial_cloud, VirtualCamera};

fn pivot_instance() -> TaskInstance {
    let pair = AntipodalPair::from_points(Vec3::new(0.02, -0.03, 0.08), Vec3::new(0.02, 0.03, 0.08)).unwrap();
    let screw = Screw::from_point_dir(Vec3::new(0.09, 0.0, 0.0), Vec3::y()).unwrap();
    let fm = FrictionModel::default();
    let env = [
        env_contact(Vec3::new(0.09, -0.015, 0.0), Vec3::z(), &fm),
        env_contact(Vec3::new(0.09, 0.015, 0.0), Vec3::z(), &fm),
    ];
    TaskInstance::from_pair(&pair, &screw, &env, 0.3, &Physics::default(), Vec3::new(0.0, 0.0, 0.05))
}

fn socp(c: &mut Criterion) {
    let t = pivot_instance();
    c.bench_function("socp_pivot_solve", |b| b.iter(|| solve(black_box(&t))));
}

fn mlp(c: &mut Criterion) {
    let model = MlpModel::init(12, 256, 0).unwrap();
    let x = Array2::from_shape_fn((646, 12), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
    c.bench_function("mlp_forward_646x12_w256", |b| b.iter(|| model.forward_eval(black_box(x.view())).unwrap()));
}

fn region(c: &mut Criterion) {
    let mesh = box_mesh(Vec3::new(-0.09, -0.03, 0.0), Vec3::new(0.09, 0.03, 0.1)).unwrap();
    let cam = VirtualCamera::look_at(Vec3::new(0.35, -0.4, 0.45), Vec3::new(0.0, 0.0, 0.05), Vec3::z()).unwrap();
    let cloud = render_partial_cloud(&mesh, &cam, 0).unwrap();
    let model = MlpModel::init(12, 256, 0).unwrap();
    let scorer = MlpScorer::new(&model);
    let screw = Screw::from_point_dir(Vec3::new(0.09, 0.0, 0.0), Vec3::y()).unwrap();
    let cfg = PipelineConfig::default();
    c.bench_function("region_box_scan", |b| {
        b.iter(|| compute_region(black_box(&cloud), &screw, &Vec3::z(), &scorer, &cfg).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = socp, mlp, region
}
criterion_main!(benches);
