use hemoscope::nn::{ModelParams, Normalizer};
use hemoscope::sim::{medium_background, windowize, FlowClass, InfusionScenario, Simulator, MEDIUM_SGF, MEDIUM_WATER};

fn windows_in(medium: &str, class: FlowClass) -> Vec<hemoscope::sim::Window> {
    let mut s = InfusionScenario::bleeding(class, 11);
    s.medium = medium.to_string();
    s.background_transmission = medium_background(medium);
    let rec = Simulator::noiseless().run_recording(medium, &s).unwrap();
    windowize(&rec, 6, 6).unwrap()
}

#[test]
fn water_and_sgf_give_the_same_classifier_inputs() {
    assert_ne!(medium_background(MEDIUM_WATER), medium_background(MEDIUM_SGF));
    let mut corpus = Vec::new();
    for class in FlowClass::ALL {
        corpus.extend(windows_in(MEDIUM_WATER, class));
    }
    let normalizer = Normalizer::fit(&corpus, "water").unwrap();
    let model = ModelParams::init(5);

    for class in FlowClass::ALL {
        let water = windows_in(MEDIUM_WATER, class);
        let sgf = windows_in(MEDIUM_SGF, class);
        assert_eq!(water.len(), sgf.len());
        for (a, b) in water.iter().zip(&sgf) {
            assert_ne!(a.data, b.data);
            let (za, zb) = (normalizer.normalize(a), normalizer.normalize(b));
            let dz = za.iter().zip(&zb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(dz <= 1e-9, "{class}: window {} differs by {dz}", a.start);
            let (la, lb) = (model.logits(&za).unwrap(), model.logits(&zb).unwrap());
            let dl = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(dl <= 1e-9, "{class}: logits differ by {dl}");
        }
    }
}
