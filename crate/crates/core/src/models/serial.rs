//! Versioned text model files.
//!
//! ```text
//! poachmap-model 1
//! family random_forest | kernel_ridge | mlp
//! scaler none | scaler <fitted_on>
//! [mean m0 .. m4]
//! [std s0 .. s4]
//! [constant c0 .. c4]
//! <family body>
//! end
//! ```
//!
//! Forest body: `trees <n>`, then per tree `tree <node count>` followed by
//! preorder `split <feature> <threshold> <left> <right>` / `leaf <value>`
//! lines. Kernel ridge body: `gamma <g>`, `lambda <l>`, `intercept <b>`,
//! `support <n>`, then
//! `n` lines of five coordinates and the dual coefficient. MLP body:
//! `layers <k>`, then per layer `layer <n_in> <n_out>`, `n_out` lines of
//! `w <n_in weights>` and one `b <n_out biases>` line.
//!
//! Reals are written with Rust's shortest round-trip formatting, so a
//! deserialized model predicts bit-identically.

use std::fmt::Write as _;
use std::str::FromStr;

use super::forest::RandomForest;
use super::kernel_ridge::KernelRidge;
use super::mlp::{Layer, Mlp};
use super::tree::{DecisionTree, Node};
use super::{FittedModel, ModelError, ModelFamily, Regressor, Row};
use crate::dataset::Scaler;
use crate::features::N_FEATURES;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "poachmap-model";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn serialize(model: &FittedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "family {}", model.family().name());
    match &model.scaler {
        None => out.push_str("scaler none\n"),
        Some(s) => {
            let _ = writeln!(out, "scaler {}", s.fitted_on);
            let _ = writeln!(out, "mean {}", join(&s.mean));
            let _ = writeln!(out, "std {}", join(&s.std));
            let flags: Vec<&str> = s.constant.iter().map(|&c| if c { "1" } else { "0" }).collect();
            let _ = writeln!(out, "constant {}", flags.join(" "));
        }
    }
    match &model.regressor {
        Regressor::RandomForest(f) => {
            let _ = writeln!(out, "trees {}", f.trees.len());
            for t in &f.trees {
                let _ = writeln!(out, "tree {}", t.nodes.len());
                for n in &t.nodes {
                    match n {
                        Node::Split { feature, threshold, left, right } => {
                            let _ = writeln!(out, "split {feature} {threshold:?} {left} {right}");
                        }
                        Node::Leaf { value } => {
                            let _ = writeln!(out, "leaf {value:?}");
                        }
                    }
                }
            }
        }
        Regressor::KernelRidge(k) => {
            let _ = writeln!(out, "gamma {:?}", k.gamma);
            let _ = writeln!(out, "lambda {:?}", k.lambda);
            let _ = writeln!(out, "intercept {:?}", k.intercept);
            let _ = writeln!(out, "support {}", k.support.len());
            for (s, a) in k.support.iter().zip(&k.alpha) {
                let _ = writeln!(out, "{} {a:?}", join(s));
            }
        }
        Regressor::Mlp(m) => {
            let _ = writeln!(out, "layers {}", m.layers.len());
            for l in &m.layers {
                let _ = writeln!(out, "layer {} {}", l.n_in, l.n_out);
                for row in l.weights.chunks(l.n_in) {
                    let _ = writeln!(out, "w {}", join(row));
                }
                let _ = writeln!(out, "b {}", join(&l.bias));
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptModel(msg.into())
}

impl<'a> Reader<'a> {
    fn next_line(&mut self) -> Result<(usize, Vec<&'a str>), ModelError> {
        for (k, line) in self.lines.by_ref() {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if !tokens.is_empty() {
                return Ok((k + 1, tokens));
            }
        }
        Err(corrupt("unexpected end of file"))
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), ModelError> {
        let (line, tokens) = self.next_line()?;
        if tokens[0] != key {
            return Err(corrupt(format!("line {line}: expected {key:?}, found {:?}", tokens[0])));
        }
        Ok((line, tokens[1..].to_vec()))
    }

    fn expect_one<T: FromStr>(&mut self, key: &str) -> Result<T, ModelError> {
        let (line, rest) = self.expect(key)?;
        match rest.as_slice() {
            [v] => parse(v, line),
            _ => Err(corrupt(format!("line {line}: {key:?} takes one value"))),
        }
    }
}

fn parse<T: FromStr>(token: &str, line: usize) -> Result<T, ModelError> {
    token
        .parse()
        .map_err(|_| corrupt(format!("line {line}: cannot parse {token:?}")))
}

fn parse_reals(tokens: &[&str], n: usize, line: usize) -> Result<Vec<f64>, ModelError> {
    if tokens.len() != n {
        return Err(corrupt(format!("line {line}: expected {n} values, found {}", tokens.len())));
    }
    tokens
        .iter()
        .map(|t| {
            parse::<f64>(t, line).and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(corrupt(format!("line {line}: non-finite value")))
                }
            })
        })
        .collect()
}

fn row_of(v: &[f64]) -> Row {
    std::array::from_fn(|k| v[k])
}

pub fn deserialize(text: &str) -> Result<FittedModel, ModelError> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
    };
    let (line, header) = r.next_line().map_err(|_| corrupt("empty model file"))?;
    if header.len() != 2 || header[0] != MAGIC {
        return Err(corrupt(format!("line {line}: not a poachmap model file")));
    }
    if header[1] != FORMAT_VERSION.to_string() {
        return Err(ModelError::UnknownVersion(header[1].to_string()));
    }
    let family: ModelFamily = {
        let name: String = r.expect_one("family")?;
        name.parse().map_err(|_| corrupt(format!("unknown family {name:?}")))?
    };

    let (line, rest) = r.expect("scaler")?;
    let scaler = match rest.as_slice() {
        ["none"] => None,
        [fitted_on] => {
            let fitted_on = fitted_on.to_string();
            let (l, m) = r.expect("mean")?;
            let mean = row_of(&parse_reals(&m, N_FEATURES, l)?);
            let (l, s) = r.expect("std")?;
            let std = row_of(&parse_reals(&s, N_FEATURES, l)?);
            if std.iter().any(|&v| v <= 0.0) {
                return Err(corrupt(format!("line {l}: scaler std must be positive")));
            }
            let (l, c) = r.expect("constant")?;
            if c.len() != N_FEATURES || c.iter().any(|t| *t != "0" && *t != "1") {
                return Err(corrupt(format!("line {l}: bad constant flags")));
            }
            let constant = std::array::from_fn(|k| c[k] == "1");
            Some(Scaler { mean, std, constant, fitted_on })
        }
        _ => return Err(corrupt(format!("line {line}: bad scaler line"))),
    };

    let regressor = match family {
        ModelFamily::RandomForest => {
            let n_trees: usize = r.expect_one("trees")?;
            let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
            for _ in 0..n_trees {
                let n_nodes: usize = r.expect_one("tree")?;
                let mut nodes = Vec::with_capacity(n_nodes.min(1 << 16));
                for _ in 0..n_nodes {
                    let (line, tokens) = r.next_line()?;
                    let node = match tokens.as_slice() {
                        ["split", f, t, a, b] => Node::Split {
                            feature: parse(f, line)?,
                            threshold: parse_reals(&[t], 1, line)?[0],
                            left: parse(a, line)?,
                            right: parse(b, line)?,
                        },
                        ["leaf", v] => Node::Leaf {
                            value: parse_reals(&[v], 1, line)?[0],
                        },
                        _ => return Err(corrupt(format!("line {line}: expected a tree node"))),
                    };
                    nodes.push(node);
                }
                trees.push(DecisionTree::from_nodes(nodes).map_err(|e| corrupt(e.to_string()))?);
            }
            Regressor::RandomForest(RandomForest::from_trees(trees).map_err(|e| corrupt(e.to_string()))?)
        }
        ModelFamily::KernelRidge => {
            let gamma: f64 = r.expect_one("gamma")?;
            let lambda: f64 = r.expect_one("lambda")?;
            let intercept: f64 = r.expect_one("intercept")?;
            let n: usize = r.expect_one("support")?;
            let mut support = Vec::with_capacity(n.min(1 << 16));
            let mut alpha = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let (line, tokens) = r.next_line()?;
                let v = parse_reals(&tokens, N_FEATURES + 1, line)?;
                support.push(row_of(&v));
                alpha.push(v[N_FEATURES]);
            }
            Regressor::KernelRidge(KernelRidge::from_parts(gamma, lambda, support, alpha, intercept).map_err(|e| corrupt(e.to_string()))?)
        }
        ModelFamily::Mlp => {
            let n_layers: usize = r.expect_one("layers")?;
            let mut layers = Vec::with_capacity(n_layers.min(64));
            for _ in 0..n_layers {
                let (line, dims) = r.expect("layer")?;
                let [n_in, n_out] = dims.as_slice() else {
                    return Err(corrupt(format!("line {line}: layer takes two sizes")));
                };
                let (n_in, n_out): (usize, usize) = (parse(n_in, line)?, parse(n_out, line)?);
                let mut weights = Vec::with_capacity(n_in * n_out);
                for _ in 0..n_out {
                    let (line, w) = r.expect("w")?;
                    weights.extend(parse_reals(&w, n_in, line)?);
                }
                let (line, b) = r.expect("b")?;
                let bias = parse_reals(&b, n_out, line)?;
                layers.push(Layer { n_in, n_out, weights, bias });
            }
            Regressor::Mlp(Mlp::from_layers(layers).map_err(|e| corrupt(e.to_string()))?)
        }
    };
    let (line, tail) = r.next_line()?;
    if tail != ["end"] {
        return Err(corrupt(format!("line {line}: expected end marker")));
    }
    Ok(FittedModel { regressor, scaler })
}
