//! The trained artifact and its plain-text file format.
//!
//! ```text
//! CONERANK v1
//! N <n>
//! K <k>
//! alpha <value>
//! rho <value>
//! c <value>
//! means <n values>
//! stds <n values>
//! U
//! <n rows of k values>
//! ```
//!
//! Reals are written with 17 significant digits so a save/load cycle is
//! bit-exact.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::cone::{ConeBasis, FeatureVector, Normalization};
use crate::data::FeatureStats;
use crate::error::{Error, Result};
use crate::ranker::{rank_query, RankingResult};

pub const MODEL_HEADER: &str = "CONERANK v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ConeModel {
    pub basis: ConeBasis,
    pub stats: FeatureStats,
    pub norm: Normalization,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

impl ConeModel {
    pub fn new(basis: ConeBasis, stats: FeatureStats, norm: Normalization) -> Result<Self> {
        if stats.dim() != basis.dim() || stats.stds.len() != basis.dim() {
            return Err(Error::InvalidModel(format!(
                "statistics of dimension {} for a basis of dimension {}",
                stats.dim(),
                basis.dim()
            )));
        }
        if stats.stds.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidModel("standard deviations must be positive".into()));
        }
        Normalization::new(norm.alpha, norm.rho)?;
        Ok(ConeModel { basis, stats, norm })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Ranks raw (unstandardized) documents of one query.
    pub fn rank(&self, docs: &[FeatureVector]) -> Result<RankingResult> {
        if let Some(d) = docs.iter().find(|d| d.len() != self.dim()) {
            return Err(Error::input(format!(
                "document has {} features, model expects {}",
                d.len(),
                self.dim()
            )));
        }
        let standardized: Vec<FeatureVector> = docs.iter().map(|d| self.stats.apply(d)).collect();
        rank_query(&self.basis, &standardized, self.norm)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let u = self.basis.matrix();
        let join = |v: &DVector<f64>| v.iter().map(|&x| real(x)).collect::<Vec<_>>().join(" ");
        writeln!(out, "{MODEL_HEADER}")?;
        writeln!(out, "N {}", u.nrows())?;
        writeln!(out, "K {}", u.ncols())?;
        writeln!(out, "alpha {}", real(self.norm.alpha))?;
        writeln!(out, "rho {}", real(self.norm.rho))?;
        writeln!(out, "c {}", real(self.basis.cap()))?;
        writeln!(out, "means {}", join(&self.stats.means))?;
        writeln!(out, "stds {}", join(&self.stats.stds))?;
        writeln!(out, "U")?;
        for row in u.row_iter() {
            let line: Vec<String> = row.iter().map(|&x| real(x)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("model text is ASCII")
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l)));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some(r) => Ok(r?),
                None => Err(Error::parse(0, format!("model file ends before {what}"))),
            }
        };
        let (line, header) = next("header")?;
        if header.trim() != MODEL_HEADER {
            return Err(Error::parse(line, format!("expected '{MODEL_HEADER}', got '{}'", header.trim())));
        }
        let field = |(line, text): (usize, String), key: &str| -> Result<(usize, Vec<String>)> {
            let mut it = text.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::parse(line, format!("expected field '{key}'")));
            }
            Ok((line, it.map(str::to_string).collect()))
        };
        let number = |line: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::parse(line, format!("bad number '{s}'")))
        };
        let scalar = |(line, vals): (usize, Vec<String>)| -> Result<f64> {
            match vals.as_slice() {
                [v] => number(line, v),
                _ => Err(Error::parse(line, "expected one value")),
            }
        };
        let count = |(line, vals): (usize, Vec<String>)| -> Result<usize> {
            match vals.as_slice() {
                [v] => v.parse().map_err(|_| Error::parse(line, format!("bad count '{v}'"))),
                _ => Err(Error::parse(line, "expected one value")),
            }
        };
        let n = count(field(next("N")?, "N")?)?;
        let k = count(field(next("K")?, "K")?)?;
        let alpha = scalar(field(next("alpha")?, "alpha")?)?;
        let rho = scalar(field(next("rho")?, "rho")?)?;
        let cap = scalar(field(next("c")?, "c")?)?;
        let vector = |(line, vals): (usize, Vec<String>)| -> Result<DVector<f64>> {
            if vals.len() != n {
                return Err(Error::parse(line, format!("expected {n} values, got {}", vals.len())));
            }
            vals.iter().map(|v| number(line, v)).collect::<Result<Vec<_>>>().map(DVector::from_vec)
        };
        let means = vector(field(next("means")?, "means")?)?;
        let stds = vector(field(next("stds")?, "stds")?)?;
        field(next("U")?, "U")?;
        let mut data = Vec::with_capacity(n * k);
        for _ in 0..n {
            let (line, text) = next("basis row")?;
            let row: Vec<f64> = text.split_whitespace().map(|v| number(line, v)).collect::<Result<_>>()?;
            if row.len() != k {
                return Err(Error::parse(line, format!("expected {k} basis values, got {}", row.len())));
            }
            data.extend(row);
        }
        let u = DMatrix::from_row_slice(n, k, &data);
        let basis = ConeBasis::new(u, cap)?;
        let norm = Normalization::new(alpha, rho)?;
        ConeModel::new(basis, FeatureStats { means, stds }, norm)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }
}
