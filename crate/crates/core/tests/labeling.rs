use std::collections::BTreeSet;

use echolabel::edm::ThresholdPolicy;
use echolabel::forward::EchoSet;
use echolabel::harness::{simulate_stage, ScenarioFile};
use echolabel::labeling::label_echoes;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Range tuples of the selected sources; independent of echo order.
fn labeled_ranges(file: &ScenarioFile, echoes: &EchoSet, policy: &ThresholdPolicy) -> BTreeSet<Vec<u64>> {
    let l = label_echoes(echoes, &file.receivers(), policy, &file.prune_config()).unwrap();
    l.sources
        .iter()
        .map(|s| s.ranges.iter().map(|r| r.to_bits()).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn labeling_ignores_echo_order(shuffle_seed in any::<u64>(), noisy in any::<bool>()) {
        let file = if noisy {
            ScenarioFile::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/noisy_smoke.toml")).unwrap()
        } else {
            ScenarioFile::bundled().with_receiver_count(5).unwrap()
        };
        let sim = simulate_stage(&file, file.seed).unwrap();
        let policy = file.threshold_policy().unwrap();
        let reference = labeled_ranges(&file, &sim.echoes, &policy);

        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let mut shuffled = sim.echoes.clone();
        for row in &mut shuffled.per_receiver_ranges {
            row.shuffle(&mut rng);
        }
        shuffled.per_receiver_toas = None;
        prop_assert_eq!(labeled_ranges(&file, &shuffled, &policy), reference);
    }
}
