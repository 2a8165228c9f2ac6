use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::cfg::{statement_ids, FlowGraph};
use crate::frontend::{Ast, NodeId, NodeKind};

/// A definition of `variable` at `def` that reaches a use of it at `use_site`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DefUseChain {
    pub def: NodeId,
    pub use_site: NodeId,
    pub variable: String,
}

/// Variables defined and used by one flow node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Access {
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

/// Def/use sets of a flow node's expression subtree.
///
/// A Decl defines its name only when it has an initializer. Plain `=`
/// targets are definitions only; compound assignments and `++`/`--`
/// operands are both defined and used.
pub fn access(ast: &Ast, id: NodeId) -> Access {
    fn walk(ast: &Ast, id: NodeId, acc: &mut Access) {
        let node = ast.node(id);
        match node.kind {
            NodeKind::Identifier => {
                if let Some(name) = node.attr("name") {
                    acc.uses.insert(name.to_string());
                }
            }
            NodeKind::Decl => {
                if let Some(&init) = node.children.get(1) {
                    acc.defs.insert(node.attr("name").unwrap_or_default().to_string());
                    walk(ast, init, acc);
                }
            }
            NodeKind::Assign => {
                let target = ast.node(node.children[0]);
                let name = target.attr("name").unwrap_or_default().to_string();
                if node.attr("operator") != Some("=") {
                    acc.uses.insert(name.clone());
                }
                acc.defs.insert(name);
                walk(ast, node.children[1], acc);
            }
            NodeKind::UnaryOp if matches!(node.attr("operator"), Some("++" | "--")) => {
                let target = ast.node(node.children[0]);
                let name = target.attr("name").unwrap_or_default().to_string();
                acc.uses.insert(name.clone());
                acc.defs.insert(name);
            }
            _ => node.children.iter().for_each(|&c| walk(ast, c, acc)),
        }
    }
    let mut acc = Access::default();
    walk(ast, id, &mut acc);
    acc
}

/// Result of the reaching-definitions fixpoint.
#[derive(Debug, Clone)]
pub struct ReachingDefinitions {
    pub chains: Vec<DefUseChain>,
    /// Definitions `(def site, variable)` live on entry to each flow node.
    pub reaching_in: BTreeMap<NodeId, BTreeSet<(NodeId, String)>>,
    /// Full passes over the nodes until nothing changed (the last pass included).
    pub passes: usize,
}

/// Forward may-analysis over gen/kill sets, iterated to a fixpoint.
pub fn analyze_reaching(cfg: &FlowGraph, ast: &Ast) -> ReachingDefinitions {
    let synthetic = |n: NodeId| n == cfg.entry || n == cfg.exit;
    let accesses: BTreeMap<NodeId, Access> = cfg
        .nodes
        .iter()
        .filter(|&&n| !synthetic(n))
        .map(|&n| (n, access(ast, n)))
        .collect();

    let preds: BTreeMap<NodeId, Vec<NodeId>> = cfg
        .nodes
        .iter()
        .map(|&n| (n, cfg.predecessors(n).collect()))
        .collect();

    type DefSet = BTreeSet<(NodeId, String)>;
    let mut reaching_in: BTreeMap<NodeId, DefSet> =
        cfg.nodes.iter().map(|&n| (n, DefSet::new())).collect();
    let mut reaching_out: BTreeMap<NodeId, DefSet> = reaching_in.clone();

    let mut passes = 0;
    loop {
        passes += 1;
        let mut changed = false;
        for &n in &cfg.nodes {
            let mut inn = DefSet::new();
            for p in &preds[&n] {
                inn.extend(reaching_out[p].iter().cloned());
            }
            let mut out: DefSet = match accesses.get(&n) {
                Some(acc) => {
                    let mut out: DefSet = inn
                        .iter()
                        .filter(|(_, v)| !acc.defs.contains(v))
                        .cloned()
                        .collect();
                    out.extend(acc.defs.iter().map(|v| (n, v.clone())));
                    out
                }
                None => inn.clone(),
            };
            if out != reaching_out[&n] {
                std::mem::swap(reaching_out.get_mut(&n).unwrap(), &mut out);
                changed = true;
            }
            reaching_in.insert(n, inn);
        }
        if !changed {
            break;
        }
    }

    let mut chains = BTreeSet::new();
    for (&n, acc) in &accesses {
        for (def, var) in &reaching_in[&n] {
            if acc.uses.contains(var) {
                chains.insert(DefUseChain {
                    def: *def,
                    use_site: n,
                    variable: var.clone(),
                });
            }
        }
    }
    ReachingDefinitions {
        chains: chains.into_iter().collect(),
        reaching_in,
        passes,
    }
}

/// Every def-use pair where the definition reaches the use, sorted by
/// `(def, use_site, variable)`.
pub fn reaching_definitions(cfg: &FlowGraph, ast: &Ast) -> Vec<DefUseChain> {
    analyze_reaching(cfg, ast).chains
}

/// Syntax-directed control dependence: every statement or predicate nested
/// in the body (or `else`, or `for` update) of an `if`/`while`/`for`
/// depends on that construct's Condition. Pairs are `(predicate, dependent)`,
/// sorted.
pub fn control_dependence(ast: &Ast) -> Vec<(NodeId, NodeId)> {
    let flow_nodes: BTreeSet<NodeId> = statement_ids(ast)
        .into_iter()
        .chain(super::cfg::predicate_ids(ast))
        .collect();
    let mut pairs = BTreeSet::new();
    for node in ast.nodes() {
        let governed: &[NodeId] = match node.kind {
            NodeKind::If | NodeKind::While => &node.children[1..],
            NodeKind::For => {
                let n_init: usize = node.attr("init").and_then(|v| v.parse().ok()).unwrap_or(0);
                &node.children[n_init + 1..]
            }
            _ => continue,
        };
        let pred = node
            .children
            .iter()
            .copied()
            .find(|&c| ast.node(c).kind == NodeKind::Condition)
            .expect("branch constructs carry a Condition");
        for &part in governed {
            for d in ast.subtree(part) {
                if flow_nodes.contains(&d) {
                    pairs.insert((pred, d));
                }
            }
        }
    }
    pairs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::build_cfg;
    use crate::frontend::parse_source;

    fn find(ast: &Ast, kind: NodeKind, code: &str) -> NodeId {
        ast.nodes()
            .iter()
            .find(|n| n.kind == kind && n.code == code)
            .unwrap_or_else(|| panic!("no {kind} {code:?}"))
            .id
    }

    fn chain(def: NodeId, use_site: NodeId, v: &str) -> DefUseChain {
        DefUseChain {
            def,
            use_site,
            variable: v.to_string(),
        }
    }

    const WORKED_EXAMPLE: &str = "void func() { int x = source(); if (isEven(x)) { proceed(10 / x); } }";

    #[test]
    fn worked_example_chains() {
        let ast = parse_source(WORKED_EXAMPLE).unwrap();
        let cfg = build_cfg(&ast).unwrap();
        let decl = find(&ast, NodeKind::Decl, "int x = source()");
        let pred = find(&ast, NodeKind::Condition, "isEven(x)");
        let call = find(&ast, NodeKind::Call, "proceed(10 / x)");
        assert_eq!(
            reaching_definitions(&cfg, &ast),
            vec![chain(decl, pred, "x"), chain(decl, call, "x")]
        );
    }

    #[test]
    fn redefinition_kills() {
        let ast = parse_source("void f(){ int a = 1; a = 2; use(a); }").unwrap();
        let cfg = build_cfg(&ast).unwrap();
        let second = find(&ast, NodeKind::Assign, "a = 2");
        let use_site = find(&ast, NodeKind::Call, "use(a)");
        assert_eq!(reaching_definitions(&cfg, &ast), vec![chain(second, use_site, "a")]);
    }

    #[test]
    fn no_variables() {
        let ast = parse_source("void f(){ g(); h(1, 2); }").unwrap();
        let cfg = build_cfg(&ast).unwrap();
        assert!(reaching_definitions(&cfg, &ast).is_empty());
    }

    #[test]
    fn loop_carried_definition() {
        let ast = parse_source("void f(){ int i = 0; while (i < 3) { i = i + 1; } g(i); }").unwrap();
        let cfg = build_cfg(&ast).unwrap();
        let init = find(&ast, NodeKind::Decl, "int i = 0");
        let pred = find(&ast, NodeKind::Condition, "i < 3");
        let inc = find(&ast, NodeKind::Assign, "i = i + 1");
        let g = find(&ast, NodeKind::Call, "g(i)");
        assert_eq!(
            reaching_definitions(&cfg, &ast),
            vec![
                chain(init, pred, "i"),
                chain(init, inc, "i"),
                chain(init, g, "i"),
                chain(inc, pred, "i"),
                chain(inc, inc, "i"),
                chain(inc, g, "i"),
            ]
        );
    }

    #[test]
    fn access_sets() {
        let ast = parse_source("void f(){ int a = b + c; a += d; i++; int e; x = y = z; }").unwrap();
        let acc = |code: &str, kind| access(&ast, find(&ast, kind, code));
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let a = acc("int a = b + c", NodeKind::Decl);
        assert_eq!((a.defs, a.uses), (set(&["a"]), set(&["b", "c"])));
        let a = acc("a += d", NodeKind::Assign);
        assert_eq!((a.defs, a.uses), (set(&["a"]), set(&["a", "d"])));
        let a = acc("i++", NodeKind::UnaryOp);
        assert_eq!((a.defs, a.uses), (set(&["i"]), set(&["i"])));
        let a = acc("int e", NodeKind::Decl);
        assert!(a.defs.is_empty() && a.uses.is_empty());
        let a = acc("x = y = z", NodeKind::Assign);
        assert_eq!((a.defs, a.uses), (set(&["x", "y"]), set(&["z"])));
    }

    #[test]
    fn worked_example_control_dependence() {
        let ast = parse_source(WORKED_EXAMPLE).unwrap();
        let pred = find(&ast, NodeKind::Condition, "isEven(x)");
        let call = find(&ast, NodeKind::Call, "proceed(10 / x)");
        assert_eq!(control_dependence(&ast), vec![(pred, call)]);
    }

    #[test]
    fn straight_line_has_no_control_dependence() {
        let ast = parse_source("void f(){ int a = 1; g(a); return; }").unwrap();
        assert!(control_dependence(&ast).is_empty());
    }

    #[test]
    fn nested_dependence_closure() {
        let src = "void f(){ while (a) { if (b) { g(); } h(); } k(); }";
        let ast = parse_source(src).unwrap();
        let pa = find(&ast, NodeKind::Condition, "a");
        let pb = find(&ast, NodeKind::Condition, "b");
        let g = find(&ast, NodeKind::Call, "g()");
        let h = find(&ast, NodeKind::Call, "h()");
        let mut expected = vec![(pa, pb), (pa, g), (pa, h), (pb, g)];
        expected.sort();
        assert_eq!(control_dependence(&ast), expected);
    }

    #[test]
    fn for_update_depends_but_init_does_not() {
        let ast = parse_source("void f(){ for (int i = 0; i < n; i++) g(); }").unwrap();
        let p = find(&ast, NodeKind::Condition, "i < n");
        let upd = find(&ast, NodeKind::UnaryOp, "i++");
        let g = find(&ast, NodeKind::Call, "g()");
        let mut expected = vec![(p, upd), (p, g)];
        expected.sort();
        assert_eq!(control_dependence(&ast), expected);
    }
}
