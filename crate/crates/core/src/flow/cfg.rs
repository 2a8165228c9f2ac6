use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{Ast, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    True,
    False,
    Unconditional,
}

impl Branch {
    pub fn label(self) -> Option<&'static str> {
        match self {
            Branch::True => Some("true"),
            Branch::False => Some("false"),
            Branch::Unconditional => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub branch: Branch,
}

/// Statement-level control flow graph. Statement and predicate nodes reuse
/// their AST ids; `entry` and `exit` are synthetic ids just past the AST.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub entry: NodeId,
    pub exit: NodeId,
    /// Reachable statement/predicate ids plus entry and exit, ascending.
    pub nodes: Vec<NodeId>,
    pub edges: Vec<FlowEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("cannot lower {kind} node {id} into the flow graph")]
    UnsupportedConstruct { kind: NodeKind, id: NodeId },
}

impl FlowGraph {
    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = &FlowEdge> + '_ {
        self.edges.iter().filter(move |e| e.src == id)
    }

    pub fn predecessors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges.iter().filter(move |e| e.dst == id).map(|e| e.src)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.binary_search(&id).is_ok()
    }

    pub fn to_dot(&self, ast: &Ast) -> String {
        let label = |id: NodeId| -> String {
            if id == self.entry {
                "ENTRY".to_string()
            } else if id == self.exit {
                "EXIT".to_string()
            } else {
                let n = ast.node(id);
                crate::cpg::dot_escape(&format!("{}: {}", n.kind, n.code))
            }
        };
        let mut out = String::from("digraph cfg {\n");
        for &n in &self.nodes {
            out.push_str(&format!("  n{n} [label=\"{}\"];\n", label(n)));
        }
        for e in &self.edges {
            match e.branch.label() {
                Some(l) => out.push_str(&format!("  n{} -> n{} [label=\"{l}\"];\n", e.src, e.dst)),
                None => out.push_str(&format!("  n{} -> n{};\n", e.src, e.dst)),
            }
        }
        out.push_str("}\n");
        out
    }
}

type Pending = Vec<(NodeId, Branch)>;

struct Lowering<'a> {
    ast: &'a Ast,
    exit: NodeId,
    edges: Vec<FlowEdge>,
}

impl Lowering<'_> {
    fn connect(&mut self, preds: &Pending, dst: NodeId) {
        for &(src, branch) in preds {
            self.edges.push(FlowEdge { src, dst, branch });
        }
    }

    fn sequence(&mut self, ids: &[NodeId], mut preds: Pending) -> Result<Pending, FlowError> {
        for &id in ids {
            preds = self.lower(id, preds)?;
        }
        Ok(preds)
    }

    fn lower(&mut self, id: NodeId, preds: Pending) -> Result<Pending, FlowError> {
        let node = self.ast.node(id);
        let ch = &node.children;
        match node.kind {
            NodeKind::Block => self.sequence(ch, preds),
            NodeKind::If => {
                let cond = ch[0];
                self.connect(&preds, cond);
                let mut out = self.lower(ch[1], vec![(cond, Branch::True)])?;
                match ch.get(2) {
                    Some(&alt) => out.extend(self.lower(alt, vec![(cond, Branch::False)])?),
                    None => out.push((cond, Branch::False)),
                }
                Ok(out)
            }
            NodeKind::While => {
                let cond = ch[0];
                self.connect(&preds, cond);
                let body_out = self.lower(ch[1], vec![(cond, Branch::True)])?;
                self.connect(&body_out, cond);
                Ok(vec![(cond, Branch::False)])
            }
            NodeKind::For => {
                let n_init: usize = node.attr("init").and_then(|v| v.parse().ok()).unwrap_or(0);
                let has_update = node.attr("update") == Some("1");
                let preds = self.sequence(&ch[..n_init], preds)?;
                let cond = ch[n_init];
                self.connect(&preds, cond);
                let body = *ch.last().expect("for has a body");
                let body_out = self.lower(body, vec![(cond, Branch::True)])?;
                if has_update {
                    let update = ch[n_init + 1];
                    self.connect(&body_out, update);
                    self.edges.push(FlowEdge {
                        src: update,
                        dst: cond,
                        branch: Branch::Unconditional,
                    });
                } else {
                    self.connect(&body_out, cond);
                }
                Ok(vec![(cond, Branch::False)])
            }
            NodeKind::Return => {
                self.connect(&preds, id);
                self.edges.push(FlowEdge {
                    src: id,
                    dst: self.exit,
                    branch: Branch::Unconditional,
                });
                Ok(vec![])
            }
            kind if is_simple_statement(kind) => {
                self.connect(&preds, id);
                Ok(vec![(id, Branch::Unconditional)])
            }
            kind => Err(FlowError::UnsupportedConstruct { kind, id }),
        }
    }
}

/// Kinds that lower to a single flow node when they appear in statement position.
fn is_simple_statement(kind: NodeKind) -> bool {
    matches!(
        kind,
        NodeKind::Decl
            | NodeKind::Assign
            | NodeKind::Call
            | NodeKind::BinaryOp
            | NodeKind::UnaryOp
            | NodeKind::Identifier
            | NodeKind::Literal
    )
}

/// Lowers a parsed function to its control flow graph.
///
/// `if`/`while`/`for` become Condition predicates with one `true` and one
/// `false` successor; `for` lowers to init, predicate, body, update, back to
/// the predicate. Statements made unreachable by `return` are pruned.
pub fn build_cfg(ast: &Ast) -> Result<FlowGraph, FlowError> {
    let root = ast.root();
    if root.kind != NodeKind::Function {
        return Err(FlowError::UnsupportedConstruct {
            kind: root.kind,
            id: root.id,
        });
    }
    let entry = ast.len();
    let exit = ast.len() + 1;
    let mut lowering = Lowering {
        ast,
        exit,
        edges: Vec::new(),
    };
    let body = root.children[1];
    let tail = lowering.lower(body, vec![(entry, Branch::Unconditional)])?;
    lowering.connect(&tail, exit);
    let mut edges = lowering.edges;

    let mut reachable = BTreeSet::from([entry]);
    let mut queue = VecDeque::from([entry]);
    while let Some(n) = queue.pop_front() {
        for e in edges.iter().filter(|e| e.src == n) {
            if reachable.insert(e.dst) {
                queue.push_back(e.dst);
            }
        }
    }
    reachable.insert(exit);
    edges.retain(|e| reachable.contains(&e.src));

    Ok(FlowGraph {
        entry,
        exit,
        nodes: reachable.into_iter().collect(),
        edges,
    })
}

/// AST ids lowered as statements (not predicates), in pre-order. Includes
/// statements that end up unreachable.
pub fn statement_ids(ast: &Ast) -> Vec<NodeId> {
    fn visit(ast: &Ast, id: NodeId, out: &mut Vec<NodeId>) {
        let node = ast.node(id);
        match node.kind {
            NodeKind::Block => node.children.iter().for_each(|&c| visit(ast, c, out)),
            NodeKind::If | NodeKind::While => {
                node.children[1..].iter().for_each(|&c| visit(ast, c, out))
            }
            NodeKind::For => {
                for &c in &node.children {
                    if ast.node(c).kind != NodeKind::Condition {
                        visit(ast, c, out);
                    }
                }
            }
            NodeKind::Return => out.push(id),
            kind if is_simple_statement(kind) => out.push(id),
            _ => {}
        }
    }
    let mut out = Vec::new();
    if let Some(&body) = ast.root().children.get(1) {
        visit(ast, body, &mut out);
    }
    out.sort_unstable();
    out
}

/// Ids of Condition (predicate) nodes.
pub fn predicate_ids(ast: &Ast) -> Vec<NodeId> {
    ast.nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Condition)
        .map(|n| n.id)
        .collect()
}
