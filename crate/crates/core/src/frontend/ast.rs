use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Function,
    ParamList,
    Block,
    Decl,
    Assign,
    If,
    While,
    For,
    Return,
    Call,
    BinaryOp,
    UnaryOp,
    Identifier,
    Literal,
    Condition,
    /// Synthetic flow-graph entry; never produced by the parser.
    Entry,
    /// Synthetic flow-graph exit; never produced by the parser.
    Exit,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Function => "Function",
            NodeKind::ParamList => "ParamList",
            NodeKind::Block => "Block",
            NodeKind::Decl => "Decl",
            NodeKind::Assign => "Assign",
            NodeKind::If => "If",
            NodeKind::While => "While",
            NodeKind::For => "For",
            NodeKind::Return => "Return",
            NodeKind::Call => "Call",
            NodeKind::BinaryOp => "BinaryOp",
            NodeKind::UnaryOp => "UnaryOp",
            NodeKind::Identifier => "Identifier",
            NodeKind::Literal => "Literal",
            NodeKind::Condition => "Condition",
            NodeKind::Entry => "Entry",
            NodeKind::Exit => "Exit",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Verbatim source slice covered by this node.
    pub code: String,
    pub children: Vec<NodeId>,
    pub attrs: BTreeMap<String, String>,
    /// Byte span of `code` in the function source.
    pub span: (usize, usize),
}

impl AstNode {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }
}

/// Arena-backed syntax tree of a single function. Node ids are dense and
/// assigned in pre-order, so the root is always id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    nodes: Vec<AstNode>,
}

impl Ast {
    pub(crate) fn from_nodes(nodes: Vec<AstNode>) -> Self {
        debug_assert!(nodes.iter().enumerate().all(|(i, n)| n.id == i));
        Ast { nodes }
    }

    pub fn root(&self) -> &AstNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[id]
    }

    pub fn get(&self, id: NodeId) -> Option<&AstNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = &AstNode> + '_ {
        self.nodes[id].children.iter().map(move |&c| &self.nodes[c])
    }

    pub fn function_name(&self) -> &str {
        self.root().attr("name").unwrap_or("")
    }

    /// Parent→child pairs in pre-order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes
            .iter()
            .flat_map(|n| n.children.iter().map(move |&c| (n.id, c)))
            .collect()
    }

    /// Ids of `id` and all its descendants, in pre-order.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(AstJson::build(self, 0)).expect("AST serializes")
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ast {\n");
        for n in &self.nodes {
            out.push_str(&format!(
                "  n{} [label=\"{}\"];\n",
                n.id,
                crate::cpg::dot_escape(&format!("{}: {}", n.kind, n.code))
            ));
        }
        for (p, c) in self.edges() {
            out.push_str(&format!("  n{p} -> n{c};\n"));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize)]
struct AstJson<'a> {
    id: NodeId,
    kind: NodeKind,
    code: &'a str,
    attrs: &'a BTreeMap<String, String>,
    children: Vec<AstJson<'a>>,
}

impl<'a> AstJson<'a> {
    fn build(ast: &'a Ast, id: NodeId) -> Self {
        let n = ast.node(id);
        AstJson {
            id,
            kind: n.kind,
            code: &n.code,
            attrs: &n.attrs,
            children: n.children.iter().map(|&c| AstJson::build(ast, c)).collect(),
        }
    }
}
