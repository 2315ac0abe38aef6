mod common;

use std::sync::Arc;

use common::support::random;
use convscope::manifest::{load_model, save_model};
use convscope_core::fixture::{fixture_image, fixture_model, SplitMix64};
use convscope_core::run_forward;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn save_load_save_is_identity(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let arch = random::architecture(&mut rng);
        let model = fixture_model(seed, arch).unwrap();
        let (manifest, weights) = save_model(&model);
        let loaded = load_model(&manifest, &weights).unwrap();
        let (manifest2, weights2) = save_model(&loaded);
        prop_assert_eq!(&manifest, &manifest2);
        prop_assert_eq!(&weights, &weights2);

        let input = fixture_image(seed, model.arch().input_shape).unwrap();
        let a = run_forward(Arc::new(model), input.clone()).unwrap();
        let b = run_forward(Arc::new(loaded), input).unwrap();
        for (x, y) in a.activations().iter().zip(b.activations()) {
            prop_assert_eq!(x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            y.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn tiny_vgg_bundle_round_trips() {
    let model = common::golden_model();
    let tmp = tempfile::tempdir().unwrap();
    let path = convscope::manifest::write_model(&model, tmp.path()).unwrap();
    let back = convscope::manifest::read_model(&path).unwrap();
    assert_eq!(back.weights(), model.weights());
    assert_eq!(back.arch(), model.arch());
    assert_eq!(back.metadata(), model.metadata());
    assert_eq!(std::fs::metadata(tmp.path().join("fixture-42.weights.bin")).unwrap().len(), 19_920 * 4);
}
