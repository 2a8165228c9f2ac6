//! Synthetic labeled corpus: positives perform an unguarded risky operation
//! on a freshly read value, negatives guard the same operation.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Record;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    /// Division by a value that is never checked against zero.
    UncheckedDivision,
    /// Multiplication of a freshly read size with no bound check.
    OverflowProneDecl,
}

impl Template {
    pub const ALL: [Template; 2] = [Template::UncheckedDivision, Template::OverflowProneDecl];
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unchecked-division" => Ok(Template::UncheckedDivision),
            "overflow-prone-decl" => Ok(Template::OverflowProneDecl),
            other => Err(format!(
                "unknown template {other:?} (expected unchecked-division or overflow-prone-decl)"
            )),
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::UncheckedDivision => "unchecked-division",
            Template::OverflowProneDecl => "overflow-prone-decl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    pub positive_rate: f64,
    pub templates: Vec<Template>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid synthetic spec: {0}")]
pub struct SynthError(String);

impl SyntheticSpec {
    pub fn new(count: usize, positive_rate: f64, seed: u64) -> Self {
        SyntheticSpec {
            count,
            positive_rate,
            templates: Template::ALL.to_vec(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.count < 2 {
            return Err(SynthError(format!("count must be >= 2, got {}", self.count)));
        }
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return Err(SynthError(format!("positive rate must lie in [0, 1], got {}", self.positive_rate)));
        }
        if self.templates.is_empty() {
            return Err(SynthError("at least one template is required".into()));
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        (self.count as f64 * self.positive_rate).round() as usize
    }
}

const FUNC_STEMS: &[&str] = &["process", "handle", "compute", "update", "parse", "decode", "scale", "apply"];
const FUNC_SUFFIXES: &[&str] = &["packet", "frame", "block", "entry", "record", "chunk", "sample", "header"];
const READERS: &[&str] = &["read_input", "get_value", "recv_int", "parse_field", "next_token", "load_word"];
const SINKS: &[&str] = &["consume", "emit", "store_result", "write_out", "log_value"];
const ALLOCATORS: &[&str] = &["alloc_buffer", "reserve", "grow_table", "make_array"];
const VARS: &[&str] = &[
    "count", "size", "width", "height", "step", "total", "offset", "ratio", "delta", "limit", "base", "scale",
    "chunk", "index", "stride", "len",
];

/// Distinct variable names drawn from the pool.
fn names(rng: &mut impl Rng, n: usize) -> Vec<&'static str> {
    VARS.choose_multiple(rng, n).copied().collect()
}

fn pick<'a>(rng: &mut impl Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty pool")
}

/// Benign statements over `param`, shared by both classes.
fn filler(rng: &mut impl Rng, param: &str, tmp: &str) -> Vec<String> {
    let mut uses = Vec::new();
    if rng.gen_bool(0.5) {
        uses.push(format!("{}({tmp});", pick(rng, SINKS)));
    }
    if rng.gen_bool(0.3) {
        uses.push(format!("{tmp} = {tmp} * {};", rng.gen_range(2..9)));
    }
    uses.shuffle(rng);
    let mut stmts = vec![format!("int {tmp} = {param} + {};", rng.gen_range(1..50))];
    stmts.extend(uses);
    stmts
}

fn function(rng: &mut impl Rng, template: Template, positive: bool) -> String {
    let fname = format!("{}_{}", pick(rng, FUNC_STEMS), pick(rng, FUNC_SUFFIXES));
    let v = names(rng, 4);
    let (param, fresh, result, tmp) = (v[0], v[1], v[2], v[3]);
    let reader = pick(rng, READERS);
    let mut body = vec![format!("int {fresh} = {reader}();"), format!("int {result} = 0;")];
    if rng.gen_bool(0.5) {
        body.swap(0, 1);
    }
    body.extend(filler(rng, param, tmp));
    match template {
        Template::UncheckedDivision => {
            let op = format!("{result} = {param} / {fresh};");
            if positive {
                body.push(op);
            } else {
                let guard = if rng.gen_bool(0.5) {
                    format!("{fresh} != 0")
                } else {
                    format!("0 != {fresh}")
                };
                body.push(format!("if ({guard}) {{ {op} }}"));
            }
            body.push(format!("{}({result});", pick(rng, SINKS)));
        }
        Template::OverflowProneDecl => {
            let factor = [256, 1024, 4096, 65536].choose(rng).copied().expect("non-empty");
            if positive {
                body.push(format!("{result} = {fresh} * {factor};"));
            } else {
                let bound = rng.gen_range(1000..100000);
                body.push(format!("if ({fresh} < {bound}) {{ {result} = {fresh} * {factor}; }}"));
            }
            body.push(format!("{}({result});", pick(rng, ALLOCATORS)));
        }
    }
    body.push(format!("return {result};"));
    format!("int {fname}(int {param}) {{\n    {}\n}}", body.join("\n    "))
}

/// `round(count · positive_rate)` positives and the rest negatives, in a
/// seed-determined order.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Vec<Record>, SynthError> {
    spec.validate()?;
    let mut rng = seed::rng_for(spec.seed, seed::SYNTH);
    let n_pos = spec.positives();
    let mut labels: Vec<u8> = (0..spec.count).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);
    Ok(labels
        .into_iter()
        .map(|y| {
            let template = *spec.templates.choose(&mut rng).expect("validated non-empty");
            Record {
                func: function(&mut rng, template, y == 1),
                target: Some(y),
            }
        })
        .collect())
}
