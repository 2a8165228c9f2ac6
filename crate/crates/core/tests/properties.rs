use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vulngraph_core::cpg::{build_cpg, simplify, Direction, EdgeClass};
use vulngraph_core::dataset::unsupported_reason;
use vulngraph_core::featurize::{build_vocab, tensorize, EmbeddingTable};
use vulngraph_core::frontend::{lex, parse_source, SourceFunction};
use vulngraph_core::synth::{gen_synthetic, SyntheticSpec};

fn lexeme() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z_][a-z0-9_]{0,6}",
        "[0-9]{1,5}",
        Just("int".to_string()),
        Just("while".to_string()),
        Just("+=".to_string()),
        Just("==".to_string()),
        Just("<".to_string()),
        Just("->".to_string()),
        Just("(".to_string()),
        Just(";".to_string()),
        Just("\"s t\"".to_string()),
    ]
}

proptest! {
    #[test]
    fn lexing_round_trips_through_spacing(words in prop::collection::vec(lexeme(), 1..40)) {
        let tokens = lex(&words.join(" ")).unwrap();
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        prop_assert_eq!(&texts, &words.iter().map(String::as_str).collect::<Vec<_>>());
        let again = lex(&texts.join("  \n")).unwrap();
        prop_assert_eq!(
            again.iter().map(|t| (t.kind, &t.text)).collect::<Vec<_>>(),
            tokens.iter().map(|t| (t.kind, &t.text)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn synthetic_functions_are_always_supported(seed in any::<u64>(), rate in 0.0f64..=1.0) {
        for r in gen_synthetic(&SyntheticSpec::new(6, rate, seed)).unwrap() {
            prop_assert_eq!(unsupported_reason(&r.func), None, "{}", r.func);
        }
    }

    #[test]
    fn padding_rows_stay_clean(seed in any::<u64>(), cap in 1usize..48) {
        let rec = gen_synthetic(&SyntheticSpec::new(2, 0.5, seed)).unwrap().remove(0);
        let f = SourceFunction::new(rec.func.clone(), rec.target).unwrap();
        let ast = parse_source(&f.source).unwrap();
        let cpg = build_cpg(&ast, &EdgeClass::ALL.into_iter().collect()).unwrap();
        let g = simplify(&cpg, Direction::Bidirected);
        let vocab = build_vocab(std::slice::from_ref(&f), 1).unwrap();
        let table = EmbeddingTable::random(vocab.len(), 5, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let t = tensorize(&g, &cpg, &vocab, &table, cap);
        prop_assert_eq!(t.n_valid(), g.nodes.len().min(cap));
        for r in 0..cap {
            if t.valid[r] {
                prop_assert!(t.neighbors[r].contains(&r));
                prop_assert!(t.neighbors[r].iter().all(|&j| j < t.n_valid()));
            } else {
                prop_assert!(t.neighbors[r].is_empty());
                prop_assert!(t.x.row(r).iter().all(|&v| v == 0.0));
            }
        }
    }
}
