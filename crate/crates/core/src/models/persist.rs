//! Versioned text model files.
//!
//! Layout, one item per line, whitespace-separated fields:
//!
//! ```text
//! graphofuse-model 1
//! kind svm|gbt
//! dim <d>
//! mean <d floats>
//! std <d floats>
//! -- svm --
//! kernel linear | kernel rbf <gamma>
//! c <C>
//! bias <b>
//! platt <a> <b>
//! support_vectors <n>
//! sv <coef> <d floats>          (n lines)
//! -- gbt --
//! learning_rate <lr>
//! base_score <s>
//! max_depth <depth>
//! lambda <λ>
//! trees <n>
//! tree <node count>
//! split <feature> <threshold> <left> <right> | leaf <value>
//! --
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so reloaded models predict
//! bit-identically. A file without the trailing `end` line is rejected.

use std::path::Path;

use super::gbt::{Node, Tree};
use super::{GbtModel, Kernel, Matrix, Model, Standardizer, SvmModel};
use crate::error::{Error, Result};

pub const MAGIC: &str = "graphofuse-model";
pub const SCHEMA_VERSION: u32 = 1;

fn floats(xs: &[f64]) -> String {
    xs.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

pub fn to_text(model: &Model) -> String {
    let mut out = format!("{MAGIC} {SCHEMA_VERSION}\n");
    let std = match model {
        Model::Svm(m) => &m.standardizer,
        Model::Gbt(m) => &m.standardizer,
    };
    let kind = match model {
        Model::Svm(_) => "svm",
        Model::Gbt(_) => "gbt",
    };
    out += &format!("kind {kind}\ndim {}\n", std.dim());
    out += &format!("mean {}\nstd {}\n", floats(&std.means), floats(&std.stds));
    match model {
        Model::Svm(m) => {
            match m.kernel {
                Kernel::Linear => out += "kernel linear\n",
                Kernel::Rbf { gamma } => out += &format!("kernel rbf {gamma:e}\n"),
            }
            out += &format!("c {:e}\nbias {:e}\n", m.c, m.bias);
            out += &format!("platt {:e} {:e}\n", m.platt_a, m.platt_b);
            out += &format!("support_vectors {}\n", m.dual_coefs.len());
            for (coef, sv) in m.dual_coefs.iter().zip(m.support_vectors.iter_rows()) {
                out += &format!("sv {coef:e} {}\n", floats(sv));
            }
        }
        Model::Gbt(m) => {
            out += &format!(
                "learning_rate {:e}\nbase_score {:e}\nmax_depth {}\nlambda {:e}\n",
                m.learning_rate, m.base_score, m.max_depth, m.lambda
            );
            out += &format!("trees {}\n", m.trees.len());
            for t in &m.trees {
                out += &format!("tree {}\n", t.nodes.len());
                for n in &t.nodes {
                    match n {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => out += &format!("split {feature} {threshold:e} {left} {right}\n"),
                        Node::Leaf { value } => out += &format!("leaf {value:e}\n"),
                    }
                }
            }
        }
    }
    out += "end\n";
    out
}

struct Lines<'a> {
    it: std::iter::Peekable<std::str::Lines<'a>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::SchemaVersionMismatch(msg.into())
}

impl<'a> Lines<'a> {
    /// Next line, which must start with `key`; returns the remaining fields.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self
            .it
            .next()
            .ok_or_else(|| bad(format!("truncated model file: expected {key}")))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(bad(format!("expected {key}, found {line:?}")));
        }
        Ok(toks.collect())
    }

    fn one<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let f = self.field(key)?;
        if f.len() != 1 {
            return Err(bad(format!("{key} takes one value")));
        }
        parse(f[0])
    }

    fn vec(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let f = self.field(key)?;
        if f.len() != len {
            return Err(bad(format!("{key} has {} values, expected {len}", f.len())));
        }
        f.into_iter().map(parse).collect()
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| bad(format!("cannot parse {s:?}")))
}

pub fn from_text(text: &str) -> Result<Model> {
    let mut l = Lines {
        it: text.lines().peekable(),
    };
    let version: u32 = l.one(MAGIC)?;
    if version != SCHEMA_VERSION {
        return Err(bad(format!(
            "schema version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    let kind: String = l.one("kind")?;
    let dim: usize = l.one("dim")?;
    let standardizer = Standardizer {
        means: l.vec("mean", dim)?,
        stds: l.vec("std", dim)?,
    };
    let model = match kind.as_str() {
        "svm" => {
            let k = l.field("kernel")?;
            let kernel = match k.as_slice() {
                ["linear"] => Kernel::Linear,
                ["rbf", g] => Kernel::Rbf { gamma: parse(g)? },
                _ => return Err(bad(format!("bad kernel {k:?}"))),
            };
            let c = l.one("c")?;
            let bias = l.one("bias")?;
            let platt = l.vec("platt", 2)?;
            let n: usize = l.one("support_vectors")?;
            let mut coefs = Vec::with_capacity(n);
            let mut data = Vec::with_capacity(n * dim);
            for _ in 0..n {
                let row = l.vec("sv", dim + 1)?;
                coefs.push(row[0]);
                data.extend_from_slice(&row[1..]);
            }
            Model::Svm(SvmModel {
                kernel,
                c,
                support_vectors: Matrix::new(n, dim, data),
                dual_coefs: coefs,
                bias,
                platt_a: platt[0],
                platt_b: platt[1],
                standardizer,
            })
        }
        "gbt" => {
            let learning_rate = l.one("learning_rate")?;
            let base_score = l.one("base_score")?;
            let max_depth = l.one("max_depth")?;
            let lambda = l.one("lambda")?;
            let n_trees: usize = l.one("trees")?;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let n_nodes: usize = l.one("tree")?;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    let line = l.it.next().ok_or_else(|| bad("truncated tree"))?;
                    let f: Vec<&str> = line.split_whitespace().collect();
                    let node = match f.as_slice() {
                        ["leaf", v] => Node::Leaf { value: parse(v)? },
                        ["split", feat, thr, left, right] => Node::Split {
                            feature: parse(feat)?,
                            threshold: parse(thr)?,
                            left: parse(left)?,
                            right: parse(right)?,
                        },
                        _ => return Err(bad(format!("bad tree node {line:?}"))),
                    };
                    if let Node::Split { feature, left, right, .. } = node {
                        if feature >= dim || left >= n_nodes || right >= n_nodes {
                            return Err(bad(format!("tree node out of range: {line:?}")));
                        }
                    }
                    nodes.push(node);
                }
                trees.push(Tree { nodes });
            }
            Model::Gbt(GbtModel {
                trees,
                learning_rate,
                base_score,
                max_depth,
                lambda,
                standardizer,
            })
        }
        other => return Err(bad(format!("unknown model kind {other:?}"))),
    };
    l.field("end")?;
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
