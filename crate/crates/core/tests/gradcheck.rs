use hemoscope::nn::{gradient_check, ModelParams, Sample, PARAM_COUNT};
use hemoscope::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(seed: u64) -> Vec<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..4).map(|_| ((0..144).map(|_| rng.random_range(-2.0..2.0)).collect(), rng.random_range(0..6))).collect()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in [7u64, 8] {
        let model = ModelParams::init(seed);
        let data = random_batch(seed + 100);
        let batch: Vec<Sample> = data.iter().map(|(x, y)| Sample { input: x, label: *y }).collect();
        let check = gradient_check(&model, &batch, 1e-4, Exec::Parallel).unwrap();
        assert_eq!(check.params_checked, PARAM_COUNT);
        assert!(check.max_relative_error < 1e-4, "seed {seed}: {check:?}");
    }
}
