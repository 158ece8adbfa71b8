use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;

use super::tenor::TenorGrid;
use crate::error::{Error, Result};
use crate::ndmath::Matrix;

/// One curve observation in decimal rate units (`0.025` = 2.5%).
#[derive(Debug, Clone, PartialEq)]
pub struct MarketObject {
    pub grid: Arc<TenorGrid>,
    pub values: Vec<f64>,
    pub date: Option<NaiveDate>,
}

impl MarketObject {
    pub fn new(grid: Arc<TenorGrid>, values: Vec<f64>, date: Option<NaiveDate>) -> Result<Self> {
        crate::error::ensure_len("market object", grid.len(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("curve value at {}", grid.labels()[i])));
        }
        Ok(Self { grid, values, date })
    }

    pub fn value_at(&self, label: &str) -> Option<f64> {
        self.grid.index_of(label).map(|i| self.values[i])
    }
}

/// Dated curves on one grid, strictly increasing in date.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveHistory {
    grid: Arc<TenorGrid>,
    objects: Vec<MarketObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueUnits {
    #[default]
    Decimal,
    /// Values are percentages (`2.5` or `2.5%` → `0.025`).
    Percent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvFormat {
    pub units: ValueUnits,
    /// Skip rows with empty cells instead of failing.
    pub skip_incomplete: bool,
}

impl CurveHistory {
    /// Sorts by date; duplicate dates or grid mismatches are errors.
    pub fn new(grid: Arc<TenorGrid>, mut objects: Vec<MarketObject>) -> Result<Self> {
        for o in &objects {
            if o.grid != grid {
                return Err(Error::InvalidConfig("curve is on a different grid".into()));
            }
            if o.date.is_none() {
                return Err(Error::InvalidConfig("history curves need dates".into()));
            }
        }
        objects.sort_by_key(|o| o.date);
        if let Some(w) = objects.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(Error::InvalidConfig(format!(
                "duplicate date {} in history",
                w[0].date.expect("dated")
            )));
        }
        Ok(Self { grid, objects })
    }

    pub fn from_rows(grid: Arc<TenorGrid>, dates: &[NaiveDate], rows: &[Vec<f64>]) -> Result<Self> {
        crate::error::ensure_len("history dates", rows.len(), dates.len())?;
        let objects = rows
            .iter()
            .zip(dates)
            .map(|(r, d)| MarketObject::new(grid.clone(), r.clone(), Some(*d)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, objects)
    }

    pub fn grid(&self) -> &Arc<TenorGrid> {
        &self.grid
    }

    pub fn objects(&self) -> &[MarketObject] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.objects.iter().filter_map(|o| o.date).collect()
    }

    pub fn get_by_date(&self, date: NaiveDate) -> Option<&MarketObject> {
        self.objects
            .binary_search_by_key(&Some(date), |o| o.date)
            .ok()
            .map(|i| &self.objects[i])
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.objects.iter().map(|o| o.values.as_slice()).collect::<Vec<_>>())
            .expect("values are finite and equally sized")
    }

    /// First `n` curves and the rest.
    pub fn split_at(&self, n: usize) -> (CurveHistory, CurveHistory) {
        let n = n.min(self.len());
        (
            Self {
                grid: self.grid.clone(),
                objects: self.objects[..n].to_vec(),
            },
            Self {
                grid: self.grid.clone(),
                objects: self.objects[n..].to_vec(),
            },
        )
    }

    pub fn split_by_date(&self, first_test_date: NaiveDate) -> (CurveHistory, CurveHistory) {
        let n = self
            .objects
            .partition_point(|o| o.date.expect("dated") < first_test_date);
        self.split_at(n)
    }

    pub fn read_csv<R: Read>(reader: R, format: &CsvFormat) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("date") {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "header must be `date,<tenor>,...`".into(),
            });
        }
        let labels: Vec<&str> = headers.iter().skip(1).collect();
        for (c, l) in labels.iter().enumerate() {
            super::tenor::parse_tenor(l).map_err(|_| Error::Parse {
                row: 1,
                column: c + 2,
                message: format!("unparseable tenor label {l:?}"),
            })?;
        }
        let grid = Arc::new(TenorGrid::from_labels(&labels).map_err(|e| Error::Parse {
            row: 1,
            column: 2,
            message: e.to_string(),
        })?);
        let mut objects = Vec::new();
        'rows: for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Parse {
                    row,
                    column: rec.len().min(headers.len()) + 1,
                    message: format!("expected {} cells, found {}", headers.len(), rec.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| Error::Parse {
                row,
                column: 1,
                message: format!("bad ISO-8601 date {:?}: {e}", &rec[0]),
            })?;
            let mut values = Vec::with_capacity(labels.len());
            for c in 1..rec.len() {
                let cell = &rec[c];
                if cell.is_empty() {
                    if format.skip_incomplete {
                        continue 'rows;
                    }
                    return Err(Error::Parse {
                        row,
                        column: c + 1,
                        message: "missing value".into(),
                    });
                }
                values.push(parse_value(cell, format.units).map_err(|message| Error::Parse {
                    row,
                    column: c + 1,
                    message,
                })?);
            }
            objects.push(MarketObject::new(grid.clone(), values, Some(date))?);
        }
        Self::new(grid, objects)
    }

    /// Decimal values written with the shortest representation that parses
    /// back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.grid.labels().iter().cloned());
        w.write_record(&header)?;
        for o in &self.objects {
            let mut rec = vec![o.date.expect("dated").format("%Y-%m-%d").to_string()];
            rec.extend(o.values.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_value(cell: &str, units: ValueUnits) -> std::result::Result<f64, String> {
    let (body, has_pct) = match cell.strip_suffix('%') {
        Some(b) => (b.trim(), true),
        None => (cell, false),
    };
    if has_pct && units == ValueUnits::Decimal {
        return Err(format!("percent value {cell:?} in decimal mode"));
    }
    let v: f64 = body
        .parse()
        .map_err(|_| format!("malformed number {cell:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite number {cell:?}"));
    }
    Ok(match units {
        ValueUnits::Decimal => v,
        ValueUnits::Percent => v / 100.0,
    })
}

pub fn load_history(path: impl AsRef<Path>, format: &CsvFormat) -> Result<CurveHistory> {
    let file = std::fs::File::open(path)?;
    CurveHistory::read_csv(std::io::BufReader::new(file), format)
}

pub fn save_history(history: &CurveHistory, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    history.write_csv(std::io::BufWriter::new(file))
}
