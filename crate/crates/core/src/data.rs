//! LETOR text format, feature standardization and ordered-pair generation.
//!
//! A LETOR line reads `<rel> qid:<id> <idx>:<val> ... [#<comment>]` with
//! 1-based, strictly increasing feature indices. Missing indices are zero.

use std::collections::HashMap;
use std::io::BufRead;

use nalgebra::DVector;

use crate::cone::{FeatureVector, Normalization, PairSample};
use crate::error::{Error, Result};

/// Standard deviations below this are replaced by 1.
pub const MIN_STD: f64 = 1e-12;

/// Digits used when writing LETOR feature values.
pub const LETOR_DIGITS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    pub docs: Vec<FeatureVector>,
    pub relevances: Vec<u32>,
    /// Text after `#` on each document's line, kept for round-tripping.
    pub comments: Vec<Option<String>>,
}

impl QueryGroup {
    pub fn new(query_id: impl Into<String>, docs: Vec<FeatureVector>, relevances: Vec<u32>) -> Self {
        let comments = vec![None; docs.len()];
        QueryGroup { query_id: query_id.into(), docs, relevances, comments }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Feature dimension `N`.
    pub dim: usize,
    pub queries: Vec<QueryGroup>,
}

impl Dataset {
    pub fn new(dim: usize, queries: Vec<QueryGroup>) -> Result<Self> {
        for q in &queries {
            if q.docs.is_empty() {
                return Err(Error::input(format!("query {} has no documents", q.query_id)));
            }
            if q.docs.len() != q.relevances.len() || q.docs.len() != q.comments.len() {
                return Err(Error::input(format!(
                    "query {} has mismatched document and label counts",
                    q.query_id
                )));
            }
            if let Some(d) = q.docs.iter().find(|d| d.len() != dim) {
                return Err(Error::input(format!(
                    "query {} has a document of dimension {} (expected {dim})",
                    q.query_id,
                    d.len()
                )));
            }
        }
        Ok(Dataset { dim, queries })
    }

    pub fn num_docs(&self) -> usize {
        self.queries.iter().map(|q| q.len()).sum()
    }

    /// Zero-pads every document to `dim` features. Fails if the data already
    /// has more features than that.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if self.dim > dim {
            return Err(Error::input(format!(
                "data has {} features, expected at most {dim}",
                self.dim
            )));
        }
        if self.dim < dim {
            for q in &mut self.queries {
                for d in &mut q.docs {
                    *d = d.clone().resize_vertically(dim, 0.0);
                }
            }
            self.dim = dim;
        }
        Ok(self)
    }

    /// Ordered pairs of every query, in query order. Queries whose documents
    /// all share one label yield an empty group.
    pub fn pair_groups(&self, norm: Normalization) -> Result<Vec<Vec<PairSample>>> {
        self.queries.iter().map(|q| generate_pairs(q, norm)).collect()
    }
}

struct ParsedLine {
    rel: u32,
    qid: String,
    features: Vec<(usize, f64)>,
    comment: Option<String>,
}

fn parse_line(raw: &str, line_no: usize) -> Result<Option<ParsedLine>> {
    let (body, comment) = match raw.find('#') {
        Some(pos) => (&raw[..pos], Some(raw[pos + 1..].trim().to_string())),
        None => (raw, None),
    };
    let mut tokens = body.split_whitespace();
    let Some(rel_tok) = tokens.next() else {
        return Ok(None);
    };
    let rel: u32 = rel_tok
        .parse()
        .map_err(|_| Error::parse(line_no, format!("relevance '{rel_tok}' is not a non-negative integer")))?;
    let qid_tok = tokens.next().ok_or_else(|| Error::parse(line_no, "missing qid"))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::parse(line_no, format!("expected qid:<id>, got '{qid_tok}'")))?
        .to_string();
    let mut features = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(line_no, format!("malformed feature token '{tok}'")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad feature index in '{tok}'")))?;
        if idx == 0 {
            return Err(Error::parse(line_no, "feature indices are 1-based"));
        }
        if idx == last {
            return Err(Error::parse(line_no, format!("duplicate feature index {idx}")));
        }
        if idx < last {
            return Err(Error::parse(line_no, format!("feature index {idx} follows {last}")));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad feature value in '{tok}'")))?;
        if !val.is_finite() {
            return Err(Error::parse(line_no, format!("non-finite feature value in '{tok}'")));
        }
        features.push((idx, val));
        last = idx;
    }
    Ok(Some(ParsedLine { rel, qid, features, comment }))
}

/// Reads LETOR lines, grouping documents by qid in first-seen order.
/// `N` is the largest feature index seen.
pub fn parse_letor<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut order: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<ParsedLine>)> = Vec::new();
    let mut dim = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let Some(parsed) = parse_line(&line, i + 1)? else {
            continue;
        };
        if let Some(&(idx, _)) = parsed.features.last() {
            dim = dim.max(idx);
        }
        let slot = *order.entry(parsed.qid.clone()).or_insert_with(|| {
            groups.push((parsed.qid.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(parsed);
    }
    let queries = groups
        .into_iter()
        .map(|(qid, lines)| {
            let mut q = QueryGroup {
                query_id: qid,
                docs: Vec::with_capacity(lines.len()),
                relevances: Vec::with_capacity(lines.len()),
                comments: Vec::with_capacity(lines.len()),
            };
            for l in lines {
                let mut x = DVector::zeros(dim);
                for (idx, v) in l.features {
                    x[idx - 1] = v;
                }
                q.docs.push(x);
                q.relevances.push(l.rel);
                q.comments.push(l.comment);
            }
            q
        })
        .collect();
    Ok(Dataset { dim, queries })
}

pub fn parse_letor_str(text: &str) -> Result<Dataset> {
    parse_letor(text.as_bytes())
}

/// Formats `v` rounded to `digits` significant digits, in the shortest form
/// that parses back to the rounded value.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", digits.max(1) - 1, v).parse().unwrap_or(v);
    let a = rounded.abs();
    if (1e-5..1e16).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// Writes the dataset as LETOR lines with every feature present.
pub fn serialize_letor(data: &Dataset, digits: usize) -> String {
    let mut out = String::new();
    for q in &data.queries {
        for ((x, rel), comment) in q.docs.iter().zip(&q.relevances).zip(&q.comments) {
            out.push_str(&rel.to_string());
            out.push_str(" qid:");
            out.push_str(&q.query_id);
            for (i, v) in x.iter().enumerate() {
                out.push(' ');
                out.push_str(&(i + 1).to_string());
                out.push(':');
                out.push_str(&format_sig(*v, digits));
            }
            if let Some(c) = comment {
                out.push_str(" #");
                out.push_str(c);
            }
            out.push('\n');
        }
    }
    out
}

/// Per-feature mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub means: DVector<f64>,
    pub stds: DVector<f64>,
}

impl FeatureStats {
    pub fn identity(dim: usize) -> Self {
        FeatureStats { means: DVector::zeros(dim), stds: DVector::from_element(dim, 1.0) }
    }

    pub fn compute(data: &Dataset) -> Result<Self> {
        let count = data.num_docs();
        if count == 0 {
            return Err(Error::input("cannot compute feature statistics of an empty dataset"));
        }
        let n = count as f64;
        let mut means = DVector::zeros(data.dim);
        for d in data.queries.iter().flat_map(|q| &q.docs) {
            means += d;
        }
        means /= n;
        let mut var = DVector::zeros(data.dim);
        for d in data.queries.iter().flat_map(|q| &q.docs) {
            let c = d - &means;
            var += c.component_mul(&c);
        }
        var /= n;
        let stds = var.map(|v| {
            let s = v.sqrt();
            if s < MIN_STD {
                1.0
            } else {
                s
            }
        });
        Ok(FeatureStats { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &FeatureVector) -> FeatureVector {
        (x - &self.means).component_div(&self.stds)
    }
}

/// Standardizes every feature to zero mean and unit (population) deviation.
/// With `stats` supplied (test time) they are applied unchanged.
pub fn standardize(data: &Dataset, stats: Option<&FeatureStats>) -> Result<(Dataset, FeatureStats)> {
    let stats = match stats {
        Some(s) => {
            if s.dim() != data.dim {
                return Err(Error::input(format!(
                    "statistics have dimension {}, data has {}",
                    s.dim(),
                    data.dim
                )));
            }
            s.clone()
        }
        None => FeatureStats::compute(data)?,
    };
    let mut out = data.clone();
    for d in out.queries.iter_mut().flat_map(|q| q.docs.iter_mut()) {
        *d = stats.apply(d);
    }
    Ok((out, stats))
}

/// Every document pair with strictly different labels, oriented from the more
/// relevant document, normalized, with `phi` the label gap. Pairs come out in
/// `(l, m)`, `l < m` index order.
pub fn generate_pairs(q: &QueryGroup, norm: Normalization) -> Result<Vec<PairSample>> {
    let mut out = Vec::new();
    for l in 0..q.docs.len() {
        for m in (l + 1)..q.docs.len() {
            let (rl, rm) = (q.relevances[l], q.relevances[m]);
            let (hi, lo) = match rl.cmp(&rm) {
                std::cmp::Ordering::Greater => (l, m),
                std::cmp::Ordering::Less => (m, l),
                std::cmp::Ordering::Equal => continue,
            };
            let raw = &q.docs[hi] - &q.docs[lo];
            out.push(PairSample {
                z: norm.apply(&raw)?,
                phi: f64::from(rl.abs_diff(rm)),
                query_id: q.query_id.clone(),
                doc_hi: hi,
                doc_lo: lo,
            });
        }
    }
    Ok(out)
}
