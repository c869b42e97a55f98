use streetfield_core::batch::RayBatch;
use streetfield_core::field::{BlockId, FieldConfig, FieldModel, FieldParams};
use streetfield_core::hash_grid::HashGridConfig;
use streetfield_core::math::{Aabb, Vec3};
use streetfield_core::objective::{Objective, ObjectiveOptions, ObjectiveWorkspace, TermWeights, WorkUnit};
use streetfield_core::optim::{adam_step, AdamConfig, AdamState};
use streetfield_core::render::{MaskBits, Ray};
use streetfield_core::trace::TraceOptions;

fn model() -> FieldModel {
    FieldModel::new(FieldConfig {
        grid: HashGridConfig { levels: 4, table_size: 1 << 12, features_per_level: 2, resolution_min: 4, resolution_max: 64 },
        scene_box: Aabb::new(Vec3::new(-2.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 2.0)),
        ipe_levels: 4,
        density_width: 16,
        color_width: 16,
        sky_width: 16,
        direction_levels: 2,
        sky_direction_levels: 3,
        latent_dim: 4,
        image_count: 1,
        density_bias_init: 0.0,
    })
    .unwrap()
}

/// 100 Adam steps on the sky decay term alone for one ray; returns
/// `(sum w^2, opacity)` before and after every step.
fn optimize(origin: Vec3<f64>, dir: Vec3<f64>, sky: bool) -> Vec<(f64, f64)> {
    let model = model();
    let mut params: FieldParams<f64> = model.init_params(3);
    let d = dir.normalized();
    let (t0, t1) = model.config.scene_box.intersect(&origin, &d).unwrap();
    let ray = Ray { origin, direction: d, t_near: t0.max(0.01), t_far: t1, image: 0, row: 0, col: 0, mask: MaskBits { sky, ..Default::default() } };
    let mut batch = RayBatch::new();
    batch.push(ray, [0.5, 0.5, 0.5]);
    let opts = ObjectiveOptions {
        trace: TraceOptions { samples: 32, stratified: false, cutoff: 0.0 },
        terms: TermWeights { rgb: 0.0, sky: 1.0, ground: 0.0 },
        mask_transients: true,
        appearance: false,
        seed: 0,
        iteration: 0,
    };
    let mut adam = AdamState::new(&model);
    let mut ws = ObjectiveWorkspace::new(&model);
    let mut trace = Vec::new();
    for step in 0..=100 {
        let obj = Objective::new(&model, &params, &batch, opts);
        obj.run_unit(&WorkUnit::Rays(0..1), None, &mut ws).unwrap();
        trace.push((ws.ray.out.weights.iter().map(|w| w * w).sum(), ws.ray.out.opacity));
        if step == 100 {
            break;
        }
        let mut grads = FieldParams::zeros_like(&model);
        obj.evaluate(Some(&mut grads)).unwrap();
        adam_step(&mut params, &grads, &mut adam, 1e-3, &AdamConfig::default(), &[BlockId::Hash, BlockId::MlpDensity]);
    }
    trace
}

#[test]
fn sky_ray_weights_decay_monotonically() {
    let t = optimize(Vec3::new(-1.5, -1.5, 0.2), Vec3::new(0.2, 0.1, 1.0), true);
    for (k, w) in t.windows(2).enumerate() {
        assert!(w[1].0 < w[0].0, "step {k}: {} -> {}", w[0].0, w[1].0);
    }
    assert!(t[100].0 < 0.5 * t[0].0, "{} -> {}", t[0].0, t[100].0);
}

#[test]
fn non_sky_ray_opacity_grows_monotonically() {
    let t = optimize(Vec3::new(1.8, 1.5, 0.5), Vec3::new(-1.0, 0.05, 0.0), false);
    for (k, w) in t.windows(2).enumerate() {
        assert!(w[1].1 > w[0].1, "step {k}: {} -> {}", w[0].1, w[1].1);
    }
}
