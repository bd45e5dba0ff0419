//! Property tests for the token codec: serialize/deserialize round trips,
//! canonical-form stability, repair totality and idempotence.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uncord_core::tokens::{deserialize_tokens, repair_tokens, serialize_graph};

proptest! {
    #[test]
    fn serialize_then_deserialize_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_graph(&mut rng);
        common::assert_round_trip(&graph);
    }

    #[test]
    fn repaired_corruption_always_parses(seed in any::<u64>(), edits in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_graph(&mut rng);
        let tokens = serialize_graph(&graph).expect("valid graph");
        let corrupted = common::corrupt(&mut rng, &tokens, edits);
        let repaired = repair_tokens(&corrupted).expect("repair is total on non-empty input");
        prop_assert!(deserialize_tokens(&repaired).is_ok());
        let twice = repair_tokens(&repaired).expect("repair of repaired input");
        prop_assert_eq!(twice, repaired);
    }

    #[test]
    fn valid_sequences_survive_repair_unchanged(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_graph(&mut rng);
        let tokens = serialize_graph(&graph).expect("valid graph");
        let repaired = repair_tokens(&tokens).expect("valid input");
        prop_assert_eq!(repaired, tokens);
    }
}

#[test]
fn structurally_equal_graphs_serialize_identically() {
    // Canonical renumbering never changes the token stream.
    for seed in 0..2000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_graph(&mut rng);
        let canon = graph.canonicalize();
        assert_eq!(
            serialize_graph(&graph).unwrap(),
            serialize_graph(&canon).unwrap(),
            "seed {seed}"
        );
    }
}
