use streetfield_core::field::{FieldConfig, FieldModel};
use streetfield_core::gradcheck::{gradient_suite, micro_batch, randomized_params, GradCheckConfig};
use streetfield_core::hash_grid::HashGridConfig;
use streetfield_core::math::{Aabb, Vec3};

fn small_model() -> FieldModel {
    FieldModel::new(FieldConfig {
        grid: HashGridConfig { levels: 4, table_size: 1 << 10, features_per_level: 2, resolution_min: 4, resolution_max: 32 },
        scene_box: Aabb::new(Vec3::new(-2.0, -2.0, -0.5), Vec3::new(2.0, 2.0, 2.0)),
        ipe_levels: 3,
        density_width: 16,
        color_width: 16,
        sky_width: 16,
        direction_levels: 2,
        sky_direction_levels: 3,
        latent_dim: 4,
        image_count: 3,
        density_bias_init: -1.0,
    })
    .unwrap()
}

#[test]
fn every_block_matches_central_differences() {
    let model = small_model();
    let params = randomized_params(&model, 3);
    let batch = micro_batch(&model, 5);
    let reports = gradient_suite(&model, &params, &batch, 12, (0.3, 0.7), &GradCheckConfig::default()).unwrap();
    let mut ok = true;
    for r in &reports {
        for b in &r.blocks {
            println!("{:9} {:20} n={:4} err={:.3e} flagged={}", r.term.name(), b.block.name(), b.checked, b.max_rel_error, b.flagged);
            ok &= b.passes(1e-4);
        }
    }
    assert!(ok);
}
