use segmerge::attention::AttentionVariant;
use segmerge::cost::model_cost;
use segmerge::encoder::{ModelConfig, RatePreset};
use segmerge::io::{random_model, random_tensor};
use segmerge::tensor::MacKind;

fn measured(cfg: &ModelConfig, hw: usize) -> Vec<(u64, u64)> {
    let model = random_model(cfg.clone(), 1).unwrap();
    let image = random_tensor(&[hw, hw, 3], 2).unwrap();
    let (_, macs) = model.encoder_forward_profiled(&image).unwrap();
    macs.iter()
        .map(|m| (m.get(MacKind::Attention), m.get(MacKind::Similarity)))
        .collect()
}

#[test]
fn cost_model_tracks_instrumented_macs() {
    let variants = [
        ModelConfig::toy().with_variant(AttentionVariant::Sra),
        ModelConfig::toy().with_variant(AttentionVariant::Neighbor2d),
        ModelConfig::toy().with_preset(RatePreset::Hq),
        ModelConfig::toy().with_preset(RatePreset::Fast),
    ];
    for hw in [256, 512] {
        for cfg in &variants {
            let report = model_cost(cfg, hw, hw).unwrap();
            for (stage, (attn, sim)) in report.per_stage.iter().zip(measured(cfg, hw)) {
                let dev = (attn as f64 / stage.attention_macs - 1.0).abs();
                assert!(
                    dev <= 0.10,
                    "{} at {hw}, stage {}: measured {attn}, modeled {}",
                    cfg.variant.name(),
                    stage.stage,
                    stage.attention_macs
                );
                assert!(sim as f64 <= stage.matching_macs || sim == 0);
            }
        }
    }
}

#[test]
fn vanilla_cost_is_exact_at_256() {
    let cfg = ModelConfig::toy().with_variant(AttentionVariant::Vanilla);
    let report = model_cost(&cfg, 256, 256).unwrap();
    for (stage, (attn, sim)) in report.per_stage.iter().zip(measured(&cfg, 256)) {
        assert_eq!(attn as f64, stage.dominant_macs);
        assert_eq!(sim, 0);
    }
    assert_eq!(report.reduction_factor, 1.0);
}
