//! Graphviz DOT rendering.

use std::fmt::Write as _;

use crate::graph::KnowledgeGraph;
use crate::schema::Schema;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders `graph` as a DOT digraph. Nodes show their span text followed by
/// their attributes in parentheses; causal relations are drawn bold.
pub fn emit_dot(graph: &KnowledgeGraph, schema: &Schema) -> String {
    let name = if graph.provenance().is_empty() {
        "kg"
    } else {
        graph.provenance()
    };
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(name));
    out.push_str("  node [shape=box];\n");
    for e in graph.entities() {
        let mut label = graph.span_text(e.span);
        if !e.attributes.is_empty() {
            let attrs: Vec<&str> = e
                .attributes
                .iter()
                .map(|a| a.attribute_type.as_str())
                .collect();
            let _ = write!(label, " ({})", attrs.join(", "));
        }
        let _ = writeln!(out, "  {} [label={}];", e.id, quote(&label));
    }
    for r in graph.relations() {
        let style = if schema.is_causal(&r.relation_type) {
            "style=bold"
        } else {
            "penwidth=0.5"
        };
        let _ = writeln!(
            out,
            "  {} -> {} [label={}, {style}];",
            r.head,
            r.tail,
            quote(&r.relation_type)
        );
    }
    out.push_str("}\n");
    out
}
