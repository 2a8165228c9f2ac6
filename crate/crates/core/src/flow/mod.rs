//! Control flow graphs and the dependence edges derived from them.

mod cfg;
mod dataflow;

pub use cfg::{build_cfg, predicate_ids, statement_ids, Branch, FlowEdge, FlowError, FlowGraph};
pub use dataflow::{
    access, analyze_reaching, control_dependence, reaching_definitions, Access, DefUseChain,
    ReachingDefinitions,
};
