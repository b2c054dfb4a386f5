//! Line-oriented text form of a [`Tree`].
//!
//! ```text
//! treedistill-tree v1
//! mode classify 3                 (or: mode regress <outputs>)
//! features 42
//! params max_depth=10 min_samples_split=2 min_samples_leaf=1 impurity=gini
//! nodes 5
//! split 7 0.5 120 0.25 0.5 0.25
//!   leaf 80 0.125 0.75 0.125
//!   split 3 1.5 40 0.5 0 0.5
//!     leaf 20 1 0 0
//!     leaf 20 0 0 1
//! ```
//!
//! Nodes appear in preorder, left child first, indented two spaces per
//! level. A `split` line holds feature, threshold, sample count and the
//! node's own value vector; a `leaf` line holds sample count and value.
//! `max_depth=none` marks an unbounded fit. Reals use Rust's shortest
//! round-trip formatting, so parsing restores every bit.

use std::fmt::Write as _;

use super::{CartError, FitParams, Impurity, Split, Tree, TreeMode, TreeNode};

pub const TREE_HEADER: &str = "treedistill-tree v1";

fn push_values(out: &mut String, values: &[f64]) {
    for v in values {
        write!(out, " {v:?}").unwrap();
    }
}

impl Tree {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TREE_HEADER);
        out.push('\n');
        match self.mode() {
            TreeMode::Classify { n_classes } => writeln!(out, "mode classify {n_classes}"),
            TreeMode::Regress { n_outputs } => writeln!(out, "mode regress {n_outputs}"),
        }
        .unwrap();
        writeln!(out, "features {}", self.n_features()).unwrap();
        let p = self.params();
        let depth = p.max_depth.map_or("none".to_string(), |d| d.to_string());
        writeln!(
            out,
            "params max_depth={depth} min_samples_split={} min_samples_leaf={} impurity={}",
            p.min_samples_split, p.min_samples_leaf, p.impurity
        )
        .unwrap();
        writeln!(out, "nodes {}", self.nodes().len()).unwrap();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            let node = &self.nodes()[i];
            for _ in 0..depth {
                out.push_str("  ");
            }
            match node.split {
                Some(s) => {
                    write!(out, "split {} {:?} {}", s.feature, s.threshold, node.n_samples).unwrap();
                    stack.push((s.right, depth + 1));
                    stack.push((s.left, depth + 1));
                }
                None => write!(out, "leaf {}", node.n_samples).unwrap(),
            }
            push_values(&mut out, &node.value);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Tree, CartError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| CartError::Parse {
                line: 0,
                message: format!("missing {what}"),
            })
        };
        let err = |line: usize, message: String| CartError::Parse { line, message };

        let (ln, header) = next("header")?;
        if header.trim_end() != TREE_HEADER {
            return Err(err(ln, format!("expected {TREE_HEADER:?}, found {header:?}")));
        }

        let (ln, mode_line) = next("mode")?;
        let mode = match mode_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["mode", "classify", k] => TreeMode::Classify {
                n_classes: parse_num(k, ln)?,
            },
            ["mode", "regress", k] => TreeMode::Regress {
                n_outputs: parse_num(k, ln)?,
            },
            _ => return Err(err(ln, format!("bad mode line {mode_line:?}"))),
        };

        let (ln, feat_line) = next("features")?;
        let n_features = match feat_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["features", d] => parse_num(d, ln)?,
            _ => return Err(err(ln, format!("bad features line {feat_line:?}"))),
        };

        let (ln, params_line) = next("params")?;
        let params = parse_params(params_line, ln)?;

        let (ln, count_line) = next("nodes")?;
        let n_nodes: usize = match count_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["nodes", n] => parse_num(n, ln)?,
            _ => return Err(err(ln, format!("bad nodes line {count_line:?}"))),
        };

        let arity = mode.arity();
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(n_nodes);
        // (internal node still waiting for a child, its depth)
        let mut open: Vec<(usize, usize)> = Vec::new();
        for _ in 0..n_nodes {
            let (ln, line) = next("node")?;
            let depth = (line.len() - line.trim_start_matches(' ').len()) / 2;
            let expected = open.last().map_or(0, |&(_, d)| d + 1);
            if depth != expected {
                return Err(err(
                    ln,
                    format!("indentation implies depth {depth}, expected {expected}"),
                ));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (split, n_samples, rest) = match fields.first() {
                Some(&"split") if fields.len() >= 4 => {
                    let feature: usize = parse_num(fields[1], ln)?;
                    if feature >= n_features {
                        return Err(err(ln, format!("feature {feature} out of range")));
                    }
                    let threshold: f64 = parse_num(fields[2], ln)?;
                    if !threshold.is_finite() {
                        return Err(err(ln, "threshold must be finite".into()));
                    }
                    let split = Split {
                        feature,
                        threshold,
                        left: usize::MAX,
                        right: usize::MAX,
                    };
                    (Some(split), parse_num(fields[3], ln)?, &fields[4..])
                }
                Some(&"leaf") if fields.len() >= 2 => (None, parse_num(fields[1], ln)?, &fields[2..]),
                _ => return Err(err(ln, format!("bad node line {line:?}"))),
            };
            if rest.len() != arity {
                return Err(err(ln, format!("expected {arity} values, found {}", rest.len())));
            }
            let value = rest.iter().map(|v| parse_num(v, ln)).collect::<Result<Vec<f64>, _>>()?;
            let id = nodes.len();
            if let Some(&(parent, _)) = open.last() {
                let s = nodes[parent].split.as_mut().unwrap();
                if s.left == usize::MAX {
                    s.left = id;
                } else {
                    s.right = id;
                    open.pop();
                }
            } else if id != 0 {
                return Err(err(ln, "node outside the tree".into()));
            }
            let is_split = split.is_some();
            nodes.push(TreeNode {
                split,
                value,
                n_samples,
            });
            if is_split {
                open.push((id, depth));
            }
        }
        if nodes.is_empty() || !open.is_empty() {
            return Err(err(0, "incomplete tree".into()));
        }
        if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(err(ln, format!("unexpected trailing line {extra:?}")));
        }
        Ok(Tree::from_parts(nodes, mode, n_features, params))
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, CartError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| CartError::Parse {
        line,
        message: format!("{s:?}: {e}"),
    })
}

fn parse_params(line: &str, ln: usize) -> Result<FitParams, CartError> {
    let mut fields = line.split_whitespace();
    if fields.next() != Some("params") {
        return Err(CartError::Parse {
            line: ln,
            message: format!("bad params line {line:?}"),
        });
    }
    let mut p = FitParams::new(Impurity::Gini);
    for kv in fields {
        let (k, v) = kv.split_once('=').ok_or_else(|| CartError::Parse {
            line: ln,
            message: format!("expected key=value, found {kv:?}"),
        })?;
        match k {
            "max_depth" => p.max_depth = if v == "none" { None } else { Some(parse_num(v, ln)?) },
            "min_samples_split" => p.min_samples_split = parse_num(v, ln)?,
            "min_samples_leaf" => p.min_samples_leaf = parse_num(v, ln)?,
            "impurity" => {
                p.impurity = Impurity::parse(v).ok_or_else(|| CartError::Parse {
                    line: ln,
                    message: format!("unknown impurity {v:?}"),
                })?
            }
            _ => {
                return Err(CartError::Parse {
                    line: ln,
                    message: format!("unknown parameter {k:?}"),
                })
            }
        }
    }
    Ok(p)
}
