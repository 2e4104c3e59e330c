#![allow(dead_code)]

use causalkg::dataset::{Example, GoldAttribute, GoldEntity, GoldRelation};

pub const CAUSES: [&str; 5] = [
    "exercise",
    "screen time",
    "diet",
    "vitamin intake",
    "stress",
];
pub const OUTCOMES: [&str; 6] = [
    "sleep quality",
    "blood pressure",
    "anxiety",
    "heart rate",
    "fatigue",
    "mood",
];

struct Builder {
    tokens: Vec<String>,
    entities: Vec<GoldEntity>,
}

impl Builder {
    fn push(&mut self, text: &str, entity_type: Option<&str>) -> usize {
        let start = self.tokens.len();
        self.tokens.extend(text.split(' ').map(String::from));
        if let Some(t) = entity_type {
            self.entities.push(GoldEntity {
                start,
                end: self.tokens.len(),
                entity_type: t.into(),
            });
        }
        self.entities.len().wrapping_sub(1)
    }
}

fn rel(head: usize, tail: usize, t: &str) -> GoldRelation {
    GoldRelation {
        head,
        tail,
        relation_type: t.into(),
    }
}

fn attr(entity: usize, t: &str) -> GoldAttribute {
    GoldAttribute {
        entity,
        attribute_type: t.into(),
    }
}

/// Claim `i` of a deterministic templated corpus in the sciclaim schema.
pub fn templated_claim(i: usize) -> Example {
    let f = CAUSES[i % CAUSES.len()];
    let g = OUTCOMES[i % OUTCOMES.len()];
    let mut b = Builder {
        tokens: Vec::new(),
        entities: Vec::new(),
    };
    let mut attributes = Vec::new();
    let mut relations = Vec::new();
    match i % 5 {
        0 | 1 => {
            let x = b.push(f, Some("factor"));
            let (word, sign, q) = if i.is_multiple_of(5) {
                ("increases", "sign+", "q+")
            } else {
                ("reduces", "sign-", "q-")
            };
            let a = b.push(word, Some("association"));
            let y = b.push(g, Some("factor"));
            attributes.extend([attr(a, "causation"), attr(a, sign)]);
            relations.extend([rel(a, x, "arg0"), rel(a, y, "arg1"), rel(x, y, q)]);
        }
        2 => {
            let x = b.push(f, Some("factor"));
            let a = b.push("correlates", Some("association"));
            b.push("with", None);
            let y = b.push(g, Some("factor"));
            attributes.push(attr(a, "correlation"));
            relations.extend([rel(a, x, "arg0"), rel(a, y, "arg1")]);
        }
        3 => {
            let x = b.push(f, Some("factor"));
            let a = b.push("predicts", Some("association"));
            let y = b.push(g, Some("factor"));
            attributes.push(attr(a, "indicates"));
            relations.extend([rel(a, x, "arg0"), rel(a, y, "arg1")]);
        }
        _ => {
            let x = b.push(f, Some("factor"));
            let m = b.push("greatly", Some("magnitude"));
            let a = b.push("increases", Some("association"));
            let y = b.push(g, Some("factor"));
            attributes.extend([attr(a, "causation"), attr(a, "sign+")]);
            relations.extend([
                rel(a, x, "arg0"),
                rel(a, y, "arg1"),
                rel(a, m, "modifier"),
                rel(x, y, "q+"),
            ]);
        }
    }
    b.push(".", None);
    Example {
        id: Some(format!("claim{i:02}")),
        tokens: b.tokens,
        lemmas: None,
        entities: b.entities,
        attributes,
        relations,
    }
}

pub fn templated_corpus(n: usize) -> Vec<Example> {
    (0..n).map(templated_claim).collect()
}

pub mod dot_check;

use causalkg::graph::{
    assemble_graph, AttributeInput, EntityInput, KnowledgeGraph, RelationInput, Span,
};

/// Builds a graph with confidence 1 everywhere. Entities are
/// `(start, end, type, attributes)` and relations `(head, tail, type)`.
pub fn gold_graph(
    text: &str,
    lemmas: Option<&str>,
    entities: &[(usize, usize, &str, &[&str])],
    relations: &[(usize, usize, &str)],
) -> KnowledgeGraph {
    let tokens: Vec<String> = text.split(' ').map(String::from).collect();
    let lemmas = lemmas.map(|l| l.split(' ').map(String::from).collect());
    let ents: Vec<EntityInput> = entities
        .iter()
        .map(|&(s, e, t, _)| EntityInput {
            span: Span::new(s, e),
            entity_type: t.into(),
            confidence: 1.0,
        })
        .collect();
    let attrs: Vec<AttributeInput> = entities
        .iter()
        .enumerate()
        .flat_map(|(i, (_, _, _, a))| {
            a.iter().map(move |t| AttributeInput {
                entity: i,
                attribute_type: t.to_string(),
                confidence: 1.0,
            })
        })
        .collect();
    let rels: Vec<RelationInput> = relations
        .iter()
        .map(|&(h, t, r)| RelationInput {
            head: h,
            tail: t,
            relation_type: r.into(),
            confidence: 1.0,
        })
        .collect();
    assemble_graph(tokens, lemmas, &ents, &attrs, &rels).unwrap()
}

/// sciclaim graph: a restriction decreases infections, with a magnitude and a temporal qualifier.
pub fn movement_restriction() -> KnowledgeGraph {
    gold_graph(
        "Movement restriction greatly reduced the number of infections from 5 February onwards .",
        None,
        &[
            (0, 2, "factor", &[]),
            (2, 3, "magnitude", &[]),
            (3, 4, "association", &["causation", "sign-"]),
            (5, 8, "factor", &[]),
            (8, 12, "qualifier", &[]),
        ],
        &[
            (2, 0, "arg0"),
            (2, 3, "arg1"),
            (2, 1, "modifier"),
            (2, 4, "modifier"),
            (0, 3, "q-"),
        ],
    )
    .with_provenance("movement")
}

/// ethno graph: an agent prays, with a recipient and an intended outcome.
pub fn women_prayed() -> KnowledgeGraph {
    gold_graph(
        "Some of the women prayed for themselves during pregnancy for safe delivery .",
        None,
        &[
            (3, 4, "element", &[]),
            (4, 5, "element", &["event"]),
            (6, 7, "element", &[]),
            (8, 9, "element", &[]),
            (10, 12, "element", &[]),
        ],
        &[
            (1, 0, "agent"),
            (1, 2, "recipient"),
            (1, 4, "intent+"),
            (1, 3, "modifier"),
        ],
    )
}

/// ethno graph: a prescribed, negated event with an object.
pub fn disgrace() -> KnowledgeGraph {
    gold_graph(
        "Please do n't disgrace the man of the family again .",
        None,
        &[
            (3, 4, "element", &["event", "prescribed", "negated"]),
            (5, 9, "element", &[]),
        ],
        &[(0, 1, "object")],
    )
}

/// ethno graph: two agents whose intentions oppose each other through q- edges.
pub fn witches() -> KnowledgeGraph {
    gold_graph(
        "the witches had planned to terminate my pregnancy , so the pastor prayed to prevent it .",
        None,
        &[
            (1, 2, "element", &[]),
            (3, 4, "element", &["event"]),
            (5, 6, "element", &["event"]),
            (7, 8, "element", &[]),
            (11, 12, "element", &[]),
            (12, 13, "element", &["event"]),
            (14, 15, "element", &["event"]),
        ],
        &[
            (1, 0, "agent"),
            (1, 2, "intent+"),
            (2, 3, "q-"),
            (5, 4, "agent"),
            (5, 6, "intent+"),
            (6, 1, "q-"),
        ],
    )
}

/// A small manuscript of maternal-health myths, one graph per sentence.
pub fn myths_corpus() -> Vec<KnowledgeGraph> {
    let eat = |text: &str,
               lemmas: &str,
               food: (usize, usize),
               effect: (usize, usize),
               baby: (usize, usize)| {
        gold_graph(
            text,
            Some(lemmas),
            &[
                (0, 1, "element", &[]),
                (1, 2, "element", &["event"]),
                (food.0, food.1, "element", &[]),
                (effect.0, effect.1, "element", &[]),
                (baby.0, baby.1, "element", &[]),
            ],
            &[
                (1, 0, "agent"),
                (1, 2, "object"),
                (2, 3, "q+"),
                (3, 4, "modifier"),
            ],
        )
    };
    vec![
        eat(
            "woman eats sugarcane stomachaches baby",
            "woman eat sugarcane stomachache baby",
            (2, 3),
            (3, 4),
            (4, 5),
        )
        .with_provenance("m1"),
        eat(
            "mother eats eggs sick baby",
            "mother eat egg sick baby",
            (2, 3),
            (3, 4),
            (4, 5),
        )
        .with_provenance("m2"),
        eat(
            "woman eats mango red bottom baby",
            "woman eat mango red bottom baby",
            (2, 3),
            (3, 5),
            (5, 6),
        )
        .with_provenance("m3"),
        eat(
            "mother eats mango diarrhea baby",
            "mother eat mango diarrhea baby",
            (2, 3),
            (3, 4),
            (4, 5),
        )
        .with_provenance("m4"),
        gold_graph(
            "father eats sugarcane strength",
            Some("father eat sugarcane strength"),
            &[
                (0, 1, "element", &[]),
                (1, 2, "element", &["event"]),
                (2, 3, "element", &[]),
                (3, 4, "element", &[]),
            ],
            &[(1, 0, "agent"), (1, 2, "object"), (2, 3, "q+")],
        )
        .with_provenance("m5"),
    ]
}
