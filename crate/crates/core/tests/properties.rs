mod common;

use std::collections::BTreeSet;

use causalkg::graph::{assemble_graph, AttributeInput, EntityInput, RelationInput};
use causalkg::senses::Sense;
use causalkg::training::{Predictions, Targets};
use causalkg::*;
use proptest::prelude::*;

const ENTITY_TYPES: [&str; 6] = [
    "association",
    "epistemic",
    "evidence",
    "factor",
    "magnitude",
    "qualifier",
];
const ATTRIBUTE_TYPES: [&str; 7] = [
    "causation",
    "comparison",
    "correlation",
    "indicates",
    "sign+",
    "sign-",
    "test",
];
const RELATION_TYPES: [&str; 7] = ["arg0", "arg1", "comp_to", "modifier", "q+", "q-", "subtype"];

type RawEntity = (usize, usize, usize, f64);
type RawAttribute = (usize, usize, f64);
type RawRelation = (usize, usize, usize, f64);

fn build(
    n: usize,
    ents: &[RawEntity],
    attrs: &[RawAttribute],
    rels: &[RawRelation],
    types: (&[&str], &[&str], &[&str]),
) -> KnowledgeGraph {
    let mut spans = BTreeSet::new();
    let entities: Vec<EntityInput> = ents
        .iter()
        .filter_map(|&(s, len, t, c)| {
            let start = s % n;
            let end = (start + 1 + len % 3).min(n);
            spans.insert((start, end)).then(|| EntityInput {
                span: Span::new(start, end),
                entity_type: types.0[t % types.0.len()].into(),
                confidence: c,
            })
        })
        .collect();
    let m = entities.len();
    let mut seen = BTreeSet::new();
    let attributes: Vec<AttributeInput> = if m == 0 {
        vec![]
    } else {
        attrs
            .iter()
            .filter(|&&(e, t, _)| seen.insert((e % m, t % types.1.len())))
            .map(|&(e, t, c)| AttributeInput {
                entity: e % m,
                attribute_type: types.1[t % types.1.len()].into(),
                confidence: c,
            })
            .collect()
    };
    let mut seen = BTreeSet::new();
    let relations: Vec<RelationInput> = if m < 2 {
        vec![]
    } else {
        rels.iter()
            .filter(|&&(h, t, r, _)| {
                h % m != t % m && seen.insert((h % m, t % m, r % types.2.len()))
            })
            .map(|&(h, t, r, c)| RelationInput {
                head: h % m,
                tail: t % m,
                relation_type: types.2[r % types.2.len()].into(),
                confidence: c,
            })
            .collect()
    };
    let tokens = (0..n).map(|i| format!("w{}", i % 4)).collect();
    assemble_graph(tokens, None, &entities, &attributes, &relations).unwrap()
}

fn sciclaim_graph() -> impl Strategy<Value = KnowledgeGraph> {
    (
        3usize..10,
        prop::collection::vec((0usize..10, 0usize..3, 0usize..6, 0.0f64..=1.0), 0..7),
        prop::collection::vec((0usize..7, 0usize..7, 0.0f64..=1.0), 0..10),
        prop::collection::vec((0usize..7, 0usize..7, 0usize..7, 0.0f64..=1.0), 0..16),
    )
        .prop_map(|(n, e, a, r)| {
            build(
                n,
                &e,
                &a,
                &r,
                (&ENTITY_TYPES, &ATTRIBUTE_TYPES, &RELATION_TYPES),
            )
        })
}

fn pruned(g: &KnowledgeGraph, mask: &[bool]) -> KnowledgeGraph {
    let removed: BTreeSet<ElementRef> = g
        .elements()
        .into_iter()
        .zip(mask.iter().cycle())
        .filter(|(_, &drop)| drop)
        .map(|((e, _), _)| e)
        .collect();
    g.without(&removed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn graph_json_round_trips(g in sciclaim_graph()) {
        let back: KnowledgeGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn rectifier_output_conforms_and_is_stable(g in sciclaim_graph()) {
        let schema = Schema::sciclaim();
        let (fixed, log) = rectify(&g, &schema).unwrap();
        prop_assert!(check_constraints(&fixed, &schema).unwrap().is_empty());
        let input: BTreeSet<_> = g.elements().into_iter().map(|(e, c)| (e, c.to_bits())).collect();
        let output: BTreeSet<_> = fixed.elements().into_iter().map(|(e, c)| (e, c.to_bits())).collect();
        prop_assert!(output.is_subset(&input));
        prop_assert_eq!(input.len() - output.len(), log.len());
        let (again, log2) = rectify(&fixed, &schema).unwrap();
        prop_assert_eq!(again, fixed);
        prop_assert!(log2.is_empty());
    }

    #[test]
    fn scores_stay_in_range(g in sciclaim_graph(), mask in prop::collection::vec(any::<bool>(), 1..8)) {
        let gold = g.clone().with_provenance("x");
        let pred = pruned(&g, &mask).with_provenance("x");
        let report = score(std::slice::from_ref(&pred), std::slice::from_ref(&gold)).unwrap();
        for section in [&report.entities, &report.attributes, &report.relations] {
            for c in section.classes.iter().chain([&section.micro]) {
                for v in [c.precision, c.recall, c.f1].into_iter().flatten() {
                    prop_assert!((0.0..=100.0).contains(&v));
                }
                // pruning the gold graph never yields false positives
                prop_assert_eq!(c.counts.fp, 0);
            }
        }
    }

    #[test]
    fn scores_ignore_example_order(a in sciclaim_graph(), b in sciclaim_graph(), mask in prop::collection::vec(any::<bool>(), 1..8)) {
        let gold = vec![a.clone().with_provenance("a"), b.clone().with_provenance("b")];
        let pred = vec![pruned(&a, &mask).with_provenance("a"), b.with_provenance("b")];
        let forward = score(&pred, &gold).unwrap();
        let rev_pred: Vec<_> = pred.iter().rev().cloned().collect();
        let rev_gold: Vec<_> = gold.iter().rev().cloned().collect();
        prop_assert_eq!(score(&rev_pred, &gold).unwrap(), forward.clone());
        prop_assert_eq!(score(&rev_pred, &rev_gold).unwrap(), forward);
    }

    #[test]
    fn identical_graphs_score_perfectly(g in sciclaim_graph()) {
        let report = score(std::slice::from_ref(&g), std::slice::from_ref(&g)).unwrap();
        for section in [&report.entities, &report.attributes, &report.relations] {
            for c in &section.classes {
                prop_assert_eq!(c.recall, Some(100.0));
                prop_assert_eq!(c.precision, Some(100.0));
            }
        }
    }

    #[test]
    fn loss_is_additive_and_nonnegative(
        entity in prop::collection::vec((prop::collection::vec(0.0f64..=1.0, 3), 0usize..3), 0..6),
        attrs in prop::collection::vec(prop::collection::vec((prop::sample::select(vec![0.0, 1e-300, 0.3, 1.0]), any::<bool>()), 2), 0..4),
        rels in prop::collection::vec(prop::collection::vec((0.0f64..=1.0, any::<bool>()), 3), 0..4),
    ) {
        let span = Span::new(0, 1);
        let predictions = Predictions {
            entity: entity.iter().map(|(p, _)| {
                let s: f64 = p.iter().sum::<f64>().max(1e-9);
                p.iter().map(|x| x / s).collect()
            }).collect(),
            attributes: attrs.iter().map(|r| r.iter().map(|x| x.0).collect()).collect(),
            relations: rels.iter().map(|r| r.iter().map(|x| x.0).collect()).collect(),
        };
        let targets = Targets {
            entity_spans: entity.iter().map(|(_, k)| (span, *k)).collect(),
            attribute_spans: vec![span; attrs.len()],
            attribute_targets: attrs.iter().map(|r| r.iter().map(|x| f64::from(u8::from(x.1))).collect()).collect(),
            relation_pairs: vec![(span, span); rels.len()],
            relation_targets: rels.iter().map(|r| r.iter().map(|x| f64::from(u8::from(x.1))).collect()).collect(),
        };
        let l = joint_loss(&predictions, &targets).unwrap();
        prop_assert_eq!(l.total, l.entity + l.relation + l.attribute);
        for v in [l.entity, l.relation, l.attribute] {
            prop_assert!(v.is_finite() && v >= 0.0);
        }
    }

    #[test]
    fn entity_distributions_sum_to_one(seed in any::<u64>(), words in prop::collection::vec("[a-z]{1,6}", 1..8)) {
        let model = Model::new(Schema::sciclaim(), EncoderConfig::synthetic(16, seed, 1), Default::default(), seed);
        let enc = model.build_encoder().unwrap().encode(&words).unwrap();
        let scores = model.score(&enc);
        for row in &scores.entity_distributions {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn lca_similarity_is_symmetric(parents in prop::collection::vec(any::<prop::sample::Index>(), 1..12), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        // single tree rooted at s0
        let n = parents.len() + 1;
        let senses: Vec<Sense> = (0..n).map(|i| Sense {
            id: format!("s{i}"),
            lemma: "x".into(),
            gloss: None,
            parent: (i > 0).then(|| format!("s{}", parents[i - 1].index(i))),
            vector: vec![1.0, i as f64],
        }).collect();
        let inv = SenseInventory::new(senses).unwrap();
        let (a, b) = (format!("s{}", a.index(n)), format!("s{}", b.index(n)));
        let ab = lca_similarity(&a, &b, &inv).unwrap();
        prop_assert_eq!(ab, lca_similarity(&b, &a, &inv).unwrap());
        prop_assert!(ab > 0.0 && ab <= 1.0);
        prop_assert_eq!(lca_similarity(&a, &a, &inv).unwrap(), 1.0);
    }
}

fn ethno_graph() -> impl Strategy<Value = KnowledgeGraph> {
    const E: [&str; 2] = ["element", "qualifier"];
    const A: [&str; 5] = ["event", "influence", "negated", "prescribed", "tradition"];
    const R: [&str; 10] = [
        "agent",
        "consequent",
        "function+",
        "intent+",
        "modifier",
        "object",
        "q+",
        "q-",
        "recipient",
        "t+",
    ];
    (
        3usize..9,
        prop::collection::vec((0usize..9, 0usize..3, 0usize..2, Just(1.0)), 1..7),
        prop::collection::vec((0usize..7, 0usize..5, Just(1.0)), 0..5),
        prop::collection::vec((0usize..7, 0usize..7, 0usize..10, Just(1.0)), 0..14),
    )
        .prop_map(|(n, e, a, r)| build(n, &e, &a, &r, (&E, &A, &R)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn paths_are_simple_and_bounded(a in ethno_graph(), b in ethno_graph(), max_len in 1usize..6) {
        let corpus = merge_corpus(vec![a.with_provenance("a"), b.with_provenance("b")], true).unwrap();
        let any = NodePattern { entity_type: Some("element".into()), ..Default::default() };
        let result = find_paths(&corpus, &any, &any, max_len).unwrap();
        for p in &result.paths {
            prop_assert!(!p.edges.is_empty() && p.edges.len() <= max_len);
            prop_assert_eq!(p.nodes.len(), p.edges.len() + 1);
            let distinct: BTreeSet<_> = p.nodes.iter().collect();
            prop_assert_eq!(distinct.len(), p.nodes.len());
        }
    }

    #[test]
    fn valence_without_inversions_is_positive(g in ethno_graph()) {
        let has_inversion = g.relations().iter().any(|r| r.relation_type == "q-")
            || g.entities().iter().any(|e| e.has_attribute("negated"));
        let out = compute_valence(&g).unwrap();
        if !has_inversion {
            prop_assert!(out.iter().all(|a| a.sign == Sign::Positive));
        }
        let sources: BTreeSet<_> = causalkg::reasoning::valence_sources(&g).into_iter().collect();
        prop_assert!(out.iter().all(|a| sources.contains(&a.source)));
    }
}
