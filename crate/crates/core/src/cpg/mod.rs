//! Code property graph: AST, CFG and dependence edges over one node set,
//! and the class-erased graph handed to the GNN.

mod dot;

pub use dot::{dot_escape, Highlight};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{self, DefUseChain, FlowGraph};
use crate::frontend::{Ast, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeClass {
    #[serde(rename = "AST")]
    Ast,
    #[serde(rename = "CFG")]
    Cfg,
    #[serde(rename = "DDG")]
    Ddg,
    #[serde(rename = "CDG")]
    Cdg,
}

impl EdgeClass {
    pub const ALL: [EdgeClass; 4] = [EdgeClass::Ast, EdgeClass::Cfg, EdgeClass::Ddg, EdgeClass::Cdg];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeClass::Ast => "AST",
            EdgeClass::Cfg => "CFG",
            EdgeClass::Ddg => "DDG",
            EdgeClass::Cdg => "CDG",
        }
    }
}

impl fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ast" => Ok(EdgeClass::Ast),
            "cfg" => Ok(EdgeClass::Cfg),
            "ddg" => Ok(EdgeClass::Ddg),
            "cdg" => Ok(EdgeClass::Cdg),
            other => Err(format!("unknown edge class {other:?} (expected ast, cfg, ddg or cdg)")),
        }
    }
}

/// Parses a comma-separated class list such as `ast,cfg`.
pub fn parse_classes(s: &str) -> Result<BTreeSet<EdgeClass>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Directed,
    #[default]
    Bidirected,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "directed" => Ok(Direction::Directed),
            "bidirected" => Ok(Direction::Bidirected),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub code: String,
    #[serde(skip)]
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CpgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub class: EdgeClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cpg {
    #[serde(skip)]
    pub name: String,
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CpgError {
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
}

impl Cpg {
    pub fn node(&self, id: NodeId) -> Option<&CpgNode> {
        // Ids are dense and ascending, but stay robust to hand-built graphs.
        match self.nodes.get(id) {
            Some(n) if n.id == id => Some(n),
            _ => self.nodes.iter().find(|n| n.id == id),
        }
    }

    pub fn edges_of(&self, class: EdgeClass) -> impl Iterator<Item = &CpgEdge> + '_ {
        self.edges.iter().filter(move |e| e.class == class)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("CPG serializes")
    }

    pub fn to_dot(&self, highlights: &[Highlight]) -> String {
        dot::cpg_to_dot(self, highlights)
    }
}

/// Merges the AST, the flow graph and the dependence edges over the AST's
/// node set, keeping only edges whose class is in `include`. Entry and exit
/// nodes are added when CFG edges are included.
pub fn compose(
    ast: &Ast,
    cfg: &FlowGraph,
    ddg: &[DefUseChain],
    cdg: &[(NodeId, NodeId)],
    include: &BTreeSet<EdgeClass>,
) -> Result<Cpg, CpgError> {
    let n = ast.len();
    if cfg.entry != n || cfg.exit != n + 1 {
        return Err(CpgError::InconsistentInputs(format!(
            "flow graph entry/exit ({}, {}) do not follow an AST of {n} nodes",
            cfg.entry, cfg.exit
        )));
    }
    let in_ast = |id: NodeId| id < n;
    let flow_ok = |id: NodeId| in_ast(id) || id == cfg.entry || id == cfg.exit;
    if let Some(bad) = cfg
        .nodes
        .iter()
        .copied()
        .chain(cfg.edges.iter().flat_map(|e| [e.src, e.dst]))
        .find(|&id| !flow_ok(id))
    {
        return Err(CpgError::InconsistentInputs(format!(
            "flow graph references node {bad} absent from the AST"
        )));
    }
    if let Some(c) = ddg.iter().find(|c| !in_ast(c.def) || !in_ast(c.use_site)) {
        return Err(CpgError::InconsistentInputs(format!(
            "def-use chain {}->{} references a node absent from the AST",
            c.def, c.use_site
        )));
    }
    if let Some((p, d)) = cdg.iter().find(|(p, d)| !in_ast(*p) || !in_ast(*d)) {
        return Err(CpgError::InconsistentInputs(format!(
            "control dependence {p}->{d} references a node absent from the AST"
        )));
    }

    let mut nodes: Vec<CpgNode> = ast
        .nodes()
        .iter()
        .map(|a| CpgNode {
            id: a.id,
            kind: a.kind,
            code: a.code.clone(),
            attrs: a.attrs.clone(),
        })
        .collect();
    let with = |c: EdgeClass| include.contains(&c);
    if with(EdgeClass::Cfg) {
        for (id, kind) in [(cfg.entry, NodeKind::Entry), (cfg.exit, NodeKind::Exit)] {
            nodes.push(CpgNode {
                id,
                kind,
                code: String::new(),
                attrs: BTreeMap::new(),
            });
        }
    }

    let mut edges = Vec::new();
    if with(EdgeClass::Ast) {
        edges.extend(ast.edges().into_iter().map(|(src, dst)| CpgEdge {
            src,
            dst,
            class: EdgeClass::Ast,
        }));
    }
    if with(EdgeClass::Cfg) {
        edges.extend(cfg.edges.iter().map(|e| CpgEdge {
            src: e.src,
            dst: e.dst,
            class: EdgeClass::Cfg,
        }));
    }
    if with(EdgeClass::Ddg) {
        edges.extend(ddg.iter().map(|c| CpgEdge {
            src: c.def,
            dst: c.use_site,
            class: EdgeClass::Ddg,
        }));
    }
    if with(EdgeClass::Cdg) {
        edges.extend(cdg.iter().map(|&(src, dst)| CpgEdge {
            src,
            dst,
            class: EdgeClass::Cdg,
        }));
    }

    Ok(Cpg {
        name: ast.function_name().to_string(),
        nodes,
        edges,
        label: None,
    })
}

/// Runs the flow analyses a class set needs and composes the CPG.
pub fn build_cpg(ast: &Ast, include: &BTreeSet<EdgeClass>) -> Result<Cpg, crate::Error> {
    let cfg = flow::build_cfg(ast)?;
    let ddg = if include.contains(&EdgeClass::Ddg) {
        flow::reaching_definitions(&cfg, ast)
    } else {
        Vec::new()
    };
    let cdg = if include.contains(&EdgeClass::Cdg) {
        flow::control_dependence(ast)
    } else {
        Vec::new()
    };
    Ok(compose(ast, &cfg, &ddg, &cdg, include)?)
}

/// Where a simple edge came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeOrigin {
    /// Classes of source edges with the same orientation.
    pub forward: BTreeSet<EdgeClass>,
    /// Classes of source edges this edge reverses (bidirected only).
    pub reverse: BTreeSet<EdgeClass>,
    /// Added self-loop, not a program relationship.
    pub synthetic: bool,
}

impl EdgeOrigin {
    pub fn classes(&self) -> BTreeSet<EdgeClass> {
        self.forward.union(&self.reverse).copied().collect()
    }
}

/// Class-erased, duplicate-free graph with a synthetic self-loop per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    /// Node ids in AST pre-order, entry/exit last.
    pub nodes: Vec<NodeId>,
    /// `kind: code` per node, aligned with `nodes`.
    pub labels: Vec<String>,
    pub edges: BTreeMap<(NodeId, NodeId), EdgeOrigin>,
    /// Message-passing neighborhood N(i) per node, aligned with `nodes`:
    /// the sources of edges into i, ascending, self included.
    pub neighbors: Vec<Vec<NodeId>>,
    pub direction: Direction,
}

impl SimpleGraph {
    pub fn position(&self, id: NodeId) -> Option<usize> {
        match self.nodes.get(id) {
            Some(&n) if n == id => Some(id),
            _ => self.nodes.iter().position(|&n| n == id),
        }
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.edges.contains_key(&(src, dst))
    }

    /// Edges excluding synthetic self-loops.
    pub fn program_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges
            .iter()
            .filter(|(_, o)| !o.synthetic)
            .map(|(&k, _)| k)
    }

    /// Re-expresses the graph as a CPG with one edge per contributing class,
    /// dropping synthetic self-loops.
    pub fn to_cpg(&self, like: &Cpg) -> Cpg {
        let edges = self
            .edges
            .iter()
            .filter(|(_, o)| !o.synthetic)
            .flat_map(|(&(src, dst), o)| {
                o.classes()
                    .into_iter()
                    .map(move |class| CpgEdge { src, dst, class })
            })
            .collect();
        Cpg {
            name: like.name.clone(),
            nodes: like.nodes.clone(),
            edges,
            label: like.label,
        }
    }

    pub fn to_dot(&self, highlights: &[Highlight]) -> String {
        dot::simple_to_dot(self, highlights)
    }
}

/// Erases edge classes, collapses parallel edges and (under `Bidirected`)
/// adds every reverse edge. Source self-loops are dropped; each node then
/// gets one synthetic self-loop.
pub fn simplify(cpg: &Cpg, direction: Direction) -> SimpleGraph {
    let mut nodes: Vec<&CpgNode> = cpg.nodes.iter().collect();
    nodes.sort_by_key(|n| n.id);
    let ids: Vec<NodeId> = nodes.iter().map(|n| n.id).collect();
    let labels = nodes
        .iter()
        .map(|n| match n.kind {
            NodeKind::Entry | NodeKind::Exit => n.kind.to_string(),
            _ => format!("{}: {}", n.kind, n.code),
        })
        .collect();

    let mut edges: BTreeMap<(NodeId, NodeId), EdgeOrigin> = BTreeMap::new();
    for e in &cpg.edges {
        if e.src == e.dst {
            continue;
        }
        edges.entry((e.src, e.dst)).or_default().forward.insert(e.class);
        if direction == Direction::Bidirected {
            edges.entry((e.dst, e.src)).or_default().reverse.insert(e.class);
        }
    }
    for &id in &ids {
        edges.insert(
            (id, id),
            EdgeOrigin {
                synthetic: true,
                ..Default::default()
            },
        );
    }

    let pos: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut neighbors = vec![Vec::new(); ids.len()];
    for &(src, dst) in edges.keys() {
        if let Some(&i) = pos.get(&dst) {
            neighbors[i].push(src);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }

    SimpleGraph {
        nodes: ids,
        labels,
        edges,
        neighbors,
        direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    const WORKED_EXAMPLE: &str = "void func() { int x = source(); if (isEven(x)) { proceed(10 / x); } }";

    fn classes(list: &[EdgeClass]) -> BTreeSet<EdgeClass> {
        list.iter().copied().collect()
    }

    fn worked_example(include: &[EdgeClass]) -> (Ast, Cpg) {
        let ast = parse_source(WORKED_EXAMPLE).unwrap();
        let cpg = build_cpg(&ast, &classes(include)).unwrap();
        (ast, cpg)
    }

    fn find(ast: &Ast, kind: NodeKind, code: &str) -> NodeId {
        ast.nodes()
            .iter()
            .find(|n| n.kind == kind && n.code == code)
            .unwrap()
            .id
    }

    #[test]
    fn ast_and_cfg_only() {
        let (ast, cpg) = worked_example(&[EdgeClass::Ast, EdgeClass::Cfg]);
        let present: BTreeSet<_> = cpg.edges.iter().map(|e| e.class).collect();
        assert_eq!(present, classes(&[EdgeClass::Ast, EdgeClass::Cfg]));
        assert_eq!(cpg.nodes.len(), ast.len() + 2);
        assert_eq!(cpg.nodes[ast.len()].kind, NodeKind::Entry);
        assert_eq!(cpg.edges_of(EdgeClass::Ast).count(), ast.len() - 1);
        assert_eq!(cpg.edges_of(EdgeClass::Cfg).count(), 5);
    }

    #[test]
    fn ast_only_equals_tree() {
        let (ast, cpg) = worked_example(&[EdgeClass::Ast]);
        let got: Vec<_> = cpg.edges.iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(got, ast.edges());
        assert_eq!(cpg.nodes.len(), ast.len());
    }

    #[test]
    fn all_classes_add_dependence_edges() {
        let (ast, cpg) = worked_example(&EdgeClass::ALL);
        let decl = find(&ast, NodeKind::Decl, "int x = source()");
        let pred = find(&ast, NodeKind::Condition, "isEven(x)");
        let call = find(&ast, NodeKind::Call, "proceed(10 / x)");
        let has = |src, dst, class| cpg.edges.contains(&CpgEdge { src, dst, class });
        assert!(has(decl, call, EdgeClass::Ddg));
        assert!(has(decl, pred, EdgeClass::Ddg));
        assert!(has(pred, call, EdgeClass::Cdg));
        assert_eq!(cpg.edges_of(EdgeClass::Ddg).count(), 2);
        assert_eq!(cpg.edges_of(EdgeClass::Cdg).count(), 1);
    }

    #[test]
    fn inconsistent_flow_graph() {
        let ast = parse_source(WORKED_EXAMPLE).unwrap();
        let mut cfg = flow::build_cfg(&ast).unwrap();
        cfg.edges.push(flow::FlowEdge {
            src: 0,
            dst: 999,
            branch: flow::Branch::Unconditional,
        });
        let err = compose(&ast, &cfg, &[], &[], &classes(&[EdgeClass::Cfg])).unwrap_err();
        assert!(matches!(err, CpgError::InconsistentInputs(_)));

        let other = parse_source("void g() {}").unwrap();
        let cfg = flow::build_cfg(&other).unwrap();
        assert!(compose(&ast, &cfg, &[], &[], &classes(&[EdgeClass::Ast])).is_err());
    }

    #[test]
    fn duplicate_collapse() {
        let cpg = Cpg {
            name: String::new(),
            nodes: (1..=2)
                .map(|id| CpgNode {
                    id,
                    kind: NodeKind::Identifier,
                    code: format!("v{id}"),
                    attrs: BTreeMap::new(),
                })
                .collect(),
            edges: vec![
                CpgEdge { src: 1, dst: 2, class: EdgeClass::Ast },
                CpgEdge { src: 1, dst: 2, class: EdgeClass::Cfg },
            ],
            label: None,
        };
        let g = simplify(&cpg, Direction::Directed);
        assert_eq!(g.program_edges().collect::<Vec<_>>(), vec![(1, 2)]);
        assert_eq!(g.edges[&(1, 2)].forward, classes(&[EdgeClass::Ast, EdgeClass::Cfg]));
        assert_eq!(g.neighbors, vec![vec![1], vec![1, 2]]);
    }

    #[test]
    fn worked_example_simple_edge_count() {
        let (_, cpg) = worked_example(&[EdgeClass::Ast, EdgeClass::Cfg]);
        let ast_pairs: BTreeSet<_> = cpg.edges_of(EdgeClass::Ast).map(|e| (e.src, e.dst)).collect();
        let cfg_pairs: BTreeSet<_> = cpg.edges_of(EdgeClass::Cfg).map(|e| (e.src, e.dst)).collect();
        let overlap = ast_pairs.intersection(&cfg_pairs).count();
        let g = simplify(&cpg, Direction::Directed);
        assert_eq!(g.program_edges().count(), ast_pairs.len() + cfg_pairs.len() - overlap);
        assert_eq!(g.program_edges().count(), 14 + 5);
    }

    #[test]
    fn empty_graph() {
        let cpg = Cpg {
            name: String::new(),
            nodes: vec![],
            edges: vec![],
            label: None,
        };
        let g = simplify(&cpg, Direction::Bidirected);
        assert!(g.nodes.is_empty() && g.edges.is_empty() && g.neighbors.is_empty());
    }

    #[test]
    fn bidirected_is_symmetric_with_self_loops() {
        let (_, cpg) = worked_example(&EdgeClass::ALL);
        let g = simplify(&cpg, Direction::Bidirected);
        for (i, &id) in g.nodes.iter().enumerate() {
            assert!(g.neighbors[i].contains(&id));
            assert!(g.edges[&(id, id)].synthetic);
            for &j in &g.neighbors[i] {
                let jp = g.position(j).unwrap();
                assert!(g.neighbors[jp].contains(&id));
            }
        }
    }

    #[test]
    fn source_self_loops_are_dropped() {
        let ast = parse_source("void f() { while (c) {} }").unwrap();
        let cpg = build_cpg(&ast, &classes(&[EdgeClass::Cfg])).unwrap();
        assert!(cpg.edges.iter().any(|e| e.src == e.dst));
        let g = simplify(&cpg, Direction::Directed);
        assert!(g.edges.iter().filter(|((s, d), _)| s == d).all(|(_, o)| o.synthetic && o.classes().is_empty()));
    }

    #[test]
    fn class_parsing() {
        assert_eq!(parse_classes("ast,cfg").unwrap(), classes(&[EdgeClass::Ast, EdgeClass::Cfg]));
        assert_eq!(parse_classes("AST, DDG").unwrap(), classes(&[EdgeClass::Ast, EdgeClass::Ddg]));
        assert!(parse_classes("ast,pdg").is_err());
    }

    #[test]
    fn json_schema() {
        let (_, cpg) = worked_example(&[EdgeClass::Ast]);
        let v = cpg.to_json();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["edges", "label", "nodes"]);
        assert_eq!(v["nodes"][0], serde_json::json!({"id": 0, "kind": "Function", "code": WORKED_EXAMPLE}));
        assert_eq!(v["edges"][0], serde_json::json!({"src": 0, "dst": 1, "class": "AST"}));
    }
}
