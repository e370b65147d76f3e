use uada3d::adapt::{evaluate_data, train, DomainData, Monitor, TrainConfig};
use uada3d::synthgen::{generate_dataset, DomainProfile};

/// The detector memorizes a small labeled set: 20 scenes, 500 steps.
#[test]
fn detector_overfits_twenty_scenes() {
    let profile = DomainProfile::robot16();
    let data = DomainData::new(generate_dataset(&profile, 20, 11).unwrap(), &profile);
    let cfg = TrainConfig {
        seed: 5,
        channels: 32,
        epochs: 100,
        batch_size: 4,
        lr_detector: 1e-2,
        ..TrainConfig::default()
    };
    let out = train(&data, None, &Monitor::default(), &cfg).unwrap();
    let steps = out.order.iter().map(|o| (o.epoch, o.batch)).collect::<std::collections::BTreeSet<_>>().len();
    assert!(steps <= 500, "{steps} steps");
    let result = evaluate_data(&out.detector, &data, &cfg).unwrap();
    assert!(result.mapbev() >= 0.8, "mAP_BEV {:.3} after {steps} steps", result.mapbev());
}
