#![allow(dead_code)]

use shadowleak::dataset::{GenerationConfig, ModelConfig, OccluderSpec};
use shadowleak::render::SceneConfig;

/// 16×16 faces behind a 47-pixel square occluder, 8×8 wall images.
pub fn small_config(identities: usize, per_class: usize, seed: u64) -> GenerationConfig {
    GenerationConfig {
        model: ModelConfig {
            grid: 16,
            k_id: 3,
            k_exp: 4,
            k_tex: 6,
        },
        scene: SceneConfig {
            face_side: 16,
            ..SceneConfig::default()
        },
        occluder: OccluderSpec::Square {
            canvas: 47,
            diagonal: 36.0,
            angle_deg: 0.0,
        },
        identities,
        per_class,
        train_fraction: 0.9,
        out_side: 8,
        seed,
        normalize: false,
    }
}
