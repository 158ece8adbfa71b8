use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default 18-point swap grid.
pub const STANDARD_TENORS: [&str; 18] = [
    "3M", "6M", "1Y", "2Y", "3Y", "4Y", "5Y", "6Y", "7Y", "8Y", "9Y", "10Y", "12Y", "15Y", "20Y",
    "25Y", "30Y", "40Y",
];

/// Parses labels like `6M`, `10Y`, `2W`, `30D` into year fractions.
///
/// Months are `n/12`, weeks `n/52`, days `n/365`.
pub fn parse_tenor(label: &str) -> Result<f64> {
    let s = label.trim();
    let bad = || Error::TenorLabel(label.to_string());
    let unit = s.chars().last().ok_or_else(bad)?.to_ascii_uppercase();
    let n: f64 = s[..s.len() - 1].trim().parse().map_err(|_| bad())?;
    if !(n > 0.0 && n.is_finite()) {
        return Err(bad());
    }
    let years = match unit {
        'Y' => n,
        'M' => n / 12.0,
        'W' => n / 52.0,
        'D' => n / 365.0,
        _ => return Err(bad()),
    };
    Ok(years)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TenorGridRepr", into = "TenorGridRepr")]
pub struct TenorGrid {
    labels: Vec<String>,
    year_fractions: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TenorGridRepr {
    labels: Vec<String>,
    year_fractions: Vec<f64>,
}

impl TryFrom<TenorGridRepr> for TenorGrid {
    type Error = Error;

    fn try_from(r: TenorGridRepr) -> Result<Self> {
        Self::with_year_fractions(r.labels, r.year_fractions)
    }
}

impl From<TenorGrid> for TenorGridRepr {
    fn from(g: TenorGrid) -> Self {
        Self {
            labels: g.labels,
            year_fractions: g.year_fractions,
        }
    }
}

impl TenorGrid {
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let year_fractions = labels
            .iter()
            .map(|l| parse_tenor(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::with_year_fractions(
            labels.iter().map(|l| l.as_ref().trim().to_string()).collect(),
            year_fractions,
        )
    }

    pub fn with_year_fractions(labels: Vec<String>, year_fractions: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidConfig("tenor grid is empty".into()));
        }
        crate::error::ensure_len("tenor grid", labels.len(), year_fractions.len())?;
        for (i, w) in year_fractions.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidConfig(format!(
                    "tenor grid must be strictly increasing: {} ({}) then {} ({})",
                    labels[i],
                    w[0],
                    labels[i + 1],
                    w[1]
                )));
            }
        }
        if !(year_fractions[0] > 0.0) {
            return Err(Error::InvalidConfig("tenor year fractions must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate tenor label {l}")));
            }
        }
        Ok(Self {
            labels,
            year_fractions,
        })
    }

    pub fn standard() -> Self {
        Self::from_labels(&STANDARD_TENORS).expect("standard grid is valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn year_fractions(&self) -> &[f64] {
        &self.year_fractions
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        let label = label.trim();
        self.labels.iter().position(|l| l.eq_ignore_ascii_case(label))
    }

    /// Indices for `labels`, or the list of labels not on the grid.
    pub fn indices_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            match self.index_of(l.as_ref()) {
                Some(i) => out.push(i),
                None => missing.push(l.as_ref().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::MissingTenors(missing))
        }
    }
}
