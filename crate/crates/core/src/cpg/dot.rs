use std::fmt::Write;

use super::{Cpg, EdgeClass, SimpleGraph};
use crate::frontend::{NodeId, NodeKind};

/// An edge drawn in red on top of the graph, optionally labeled (e.g. with
/// an attention score).
#[derive(Debug, Clone, PartialEq)]
pub struct Highlight {
    pub src: NodeId,
    pub dst: NodeId,
    pub label: Option<String>,
}

impl Highlight {
    pub fn new(src: NodeId, dst: NodeId) -> Self {
        Highlight {
            src,
            dst,
            label: None,
        }
    }
}

pub fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn class_style(class: EdgeClass) -> &'static str {
    match class {
        EdgeClass::Ast => "color=gray40",
        EdgeClass::Cfg => "color=blue, style=bold",
        EdgeClass::Ddg => "color=darkgreen, style=dashed",
        EdgeClass::Cdg => "color=orange, style=dotted",
    }
}

fn write_highlights(out: &mut String, highlights: &[Highlight]) {
    for h in highlights {
        let _ = match &h.label {
            Some(l) => writeln!(
                out,
                "  n{} -> n{} [color=red, penwidth=2.5, label=\"{}\", fontcolor=red];",
                h.src,
                h.dst,
                dot_escape(l)
            ),
            None => writeln!(out, "  n{} -> n{} [color=red, penwidth=2.5];", h.src, h.dst),
        };
    }
}

/// Each highlight is emitted as its own red edge, so `k` highlights always
/// yield exactly `k` red edges regardless of parallel class edges.
pub(super) fn cpg_to_dot(cpg: &Cpg, highlights: &[Highlight]) -> String {
    let mut out = String::from("digraph cpg {\n");
    for n in &cpg.nodes {
        let label = match n.kind {
            NodeKind::Entry | NodeKind::Exit => n.kind.to_string(),
            _ => format!("{}: {}", n.kind, n.code),
        };
        let _ = writeln!(out, "  n{} [label=\"{}\"];", n.id, dot_escape(&label));
    }
    for e in &cpg.edges {
        let _ = writeln!(
            out,
            "  n{} -> n{} [label=\"{}\", {}];",
            e.src,
            e.dst,
            e.class,
            class_style(e.class)
        );
    }
    write_highlights(&mut out, highlights);
    out.push_str("}\n");
    out
}

pub(super) fn simple_to_dot(g: &SimpleGraph, highlights: &[Highlight]) -> String {
    let mut out = String::from("digraph cpg {\n");
    for (id, label) in g.nodes.iter().zip(&g.labels) {
        let _ = writeln!(out, "  n{id} [label=\"{}\"];", dot_escape(label));
    }
    for (src, dst) in g.program_edges() {
        let _ = writeln!(out, "  n{src} -> n{dst};");
    }
    write_highlights(&mut out, highlights);
    out.push_str("}\n");
    out
}
