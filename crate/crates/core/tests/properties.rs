use std::sync::OnceLock;

use cgfuzz::corpus::{collect_pairs, generate_corpus};
use cgfuzz::extract::{extract_all, ExtractionMode, Pattern};
use cgfuzz::graph::{topo_order, validate, Graph};
use cgfuzz::harness::{ddmin, normalize_crash, output_distance};
use cgfuzz::interp::{execute, gen_inputs};
use cgfuzz::passes::{Compiler, PassName, DEFAULT_PIPELINE};
use cgfuzz::seedgen::{gen_seed, seed_rng};
use cgfuzz::serial::{graph_hash, parse, serialize};
use cgfuzz::synth::{synthesize, SynthConfig};
use proptest::prelude::*;

fn patterns() -> &'static [Pattern] {
    static POOL: OnceLock<Vec<Pattern>> = OnceLock::new();
    POOL.get_or_init(|| {
        let pairs = collect_pairs(&generate_corpus(0)).unwrap();
        extract_all(&pairs, ExtractionMode::Adaptive)
    })
}

fn seed_graph(master: u64, index: u64) -> Graph {
    gen_seed(&mut seed_rng(master, index))
}

fn synthesized(master: u64, pick: usize, point: usize, rng: u64) -> Option<(Graph, Vec<String>)> {
    let seed = seed_graph(master, 0);
    let pool = patterns();
    let pattern = &pool[pick % pool.len()];
    let point = point % (seed.nodes.len() + 1);
    let out = synthesize(&seed, pattern, point, rng, &SynthConfig::default());
    out.result.ok().map(|g| (g, out.pattern_nodes))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn seeds_are_valid_and_roundtrip(master in any::<u64>(), index in 0u64..1000) {
        let g = seed_graph(master, index);
        prop_assert!(validate(&g).is_ok(), "{:?}", validate(&g).first());
        let text = serialize(&g);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize(&back), text);
    }

    #[test]
    fn validate_is_deterministic(master in any::<u64>(), index in 0u64..1000) {
        let g = seed_graph(master, index);
        let before = g.clone();
        prop_assert_eq!(validate(&g), validate(&g));
        prop_assert_eq!(g, before);
    }

    #[test]
    fn topo_order_respects_every_edge(master in any::<u64>(), index in 0u64..1000) {
        let g = seed_graph(master, index);
        let order = topo_order(&g).unwrap();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..g.nodes.len()).collect::<Vec<_>>());
        let mut position = vec![0; g.nodes.len()];
        for (pos, &n) in order.iter().enumerate() {
            position[n] = pos;
        }
        for (i, node) in g.nodes.iter().enumerate() {
            for input in &node.inputs {
                if let Some(j) = g.nodes.iter().position(|m| m.output_ids().any(|o| o == input)) {
                    prop_assert!(position[j] < position[i]);
                }
            }
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_valid(
        master in 0u64..64,
        pick in any::<usize>(),
        point in any::<usize>(),
        rng in any::<u64>(),
    ) {
        let a = synthesized(master, pick, point, rng);
        let b = synthesized(master, pick, point, rng);
        prop_assert_eq!(&a, &b);
        if let Some((g, pattern_nodes)) = a {
            prop_assert!(validate(&g).is_ok(), "{:?}", validate(&g).first());
            prop_assert!(g.nodes.len() <= SynthConfig::default().node_cap);
            let pattern = &patterns()[pick % patterns().len()];
            prop_assert_eq!(pattern_nodes.len(), pattern.nodes.len());
            for (id, original) in pattern_nodes.iter().zip(&pattern.nodes) {
                let node = g.nodes.iter().find(|n| &n.id == id);
                prop_assert!(node.is_some(), "pattern node {} missing", id);
                let node = node.unwrap();
                prop_assert_eq!(node.op, original.op);
                prop_assert_eq!(&node.attrs, &original.attrs);
            }
            let back = parse(&serialize(&g)).unwrap();
            prop_assert_eq!(graph_hash(&back), graph_hash(&g));
        }
    }

    #[test]
    fn unmutated_pipeline_preserves_semantics(master in any::<u64>(), index in 0u64..1000, input in any::<u64>()) {
        let g = seed_graph(master, index);
        let optimized = Compiler::new().run_pipeline(&DEFAULT_PIPELINE, &g).unwrap().graph;
        prop_assert!(validate(&optimized).is_ok());
        let inputs = gen_inputs(&g, input);
        let want = execute(&g, &inputs).unwrap();
        let got = execute(&optimized, &inputs).unwrap();
        prop_assert!(output_distance(&want, &got) <= 1e-3);
    }

    #[test]
    fn passes_leave_their_input_untouched(master in any::<u64>(), index in 0u64..1000) {
        let g = seed_graph(master, index);
        let before = g.clone();
        for pass in PassName::ALL {
            let _ = Compiler::new().run_pass(pass, &g);
            prop_assert_eq!(&g, &before);
        }
    }

    #[test]
    fn ddmin_finds_exactly_the_culprits(
        order in Just(PassName::ALL.to_vec()).prop_shuffle(),
        mask in 1u8..128,
    ) {
        let culprits: Vec<PassName> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| *p)
            .collect();
        let fails = |set: &[PassName]| culprits.iter().all(|c| set.contains(c));
        prop_assert_eq!(ddmin(&order, fails).unwrap(), culprits);
    }

    #[test]
    fn crash_normalization_is_idempotent(message in "[ -~]{0,60}") {
        let once = normalize_crash(&message);
        prop_assert_eq!(normalize_crash(&once), once.clone());
        prop_assert!(!once.chars().any(|c| c.is_ascii_digit()));
    }
}
