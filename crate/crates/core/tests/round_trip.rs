//! Serialization properties over generator-produced programs: canonical
//! round-trips, entry-point order independence, and parser robustness on
//! arbitrary bytes.

use permgap_core::ir::{entry_points, parse_program, serialize_program};
use permgap_core::oracle::corpus::{GenSpec, generate_corpus};
use proptest::prelude::*;

fn spec_for(seed: u64) -> GenSpec {
    GenSpec {
        n_classes: 4 + (seed % 7) as usize,
        n_methods: 10 + (seed % 25) as usize,
        n_permissions: 3 + (seed % 5) as usize,
        n_services: (seed % 3) as usize,
        p_branch: 0.4,
        p_identity_region: 0.4,
        acyclic: seed.is_multiple_of(2),
        monomorphic: seed.is_multiple_of(3),
    }
}

proptest! {
    /// Parsing a serialized program reproduces it structurally, and
    /// re-serializing is byte-stable.
    #[test]
    fn parse_serialize_round_trip(seed in 0u64..5000) {
        let bundle = generate_corpus(seed, &spec_for(seed)).unwrap();
        for program in [&bundle.framework, &bundle.application] {
            let text = serialize_program(program);
            let parsed = parse_program(text.as_bytes()).unwrap();
            prop_assert_eq!(&parsed, program);
            prop_assert_eq!(serialize_program(&parsed), text);
        }
    }

    /// Entry points do not depend on class declaration order.
    #[test]
    fn entry_points_ignore_declaration_order(seed in 0u64..2000, rotation in 1usize..5) {
        let bundle = generate_corpus(seed, &spec_for(seed)).unwrap();
        let baseline = entry_points(&bundle.framework).unwrap();
        let mut shuffled = bundle.framework.clone();
        let cut = rotation % shuffled.classes.len().max(1);
        shuffled.classes.rotate_left(cut);
        prop_assert_eq!(entry_points(&shuffled).unwrap(), baseline);
    }

    /// The parser returns errors, never panics, on arbitrary input.
    #[test]
    fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_program(&bytes);
    }

    /// Arbitrary JSON shapes are rejected gracefully too.
    #[test]
    fn parser_rejects_wrong_shapes(kind in "[a-z]{0,12}", name in "[A-Za-z0-9]{0,8}") {
        let doc = format!(r#"{{"kind":"{kind}","name":"{name}","classes":{{}}}}"#);
        prop_assert!(parse_program(doc.as_bytes()).is_err());
    }
}
