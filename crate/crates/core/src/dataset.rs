//! Tabular input, standardization, and the quadratic/interaction expansion.
//!
//! Every solver in this crate works on a [`StandardizedDataset`]: columns of
//! `X` are centered and scaled to unit Euclidean norm (so `XᵀX` has a unit
//! diagonal) and `y` is centered, which removes the intercept from the
//! penalized problem.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

static DIABETES_CSV: &str = include_str!("../data/diabetes.csv");

/// Column selector for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Name(String),
    Index(usize),
}

impl From<&str> for Response {
    fn from(s: &str) -> Self {
        Response::Name(s.to_string())
    }
}

impl From<usize> for Response {
    fn from(i: usize) -> Self {
        Response::Index(i)
    }
}

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub names: Vec<String>,
}

impl RawDataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = x.dim();
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "design has {n} rows but response has {}",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(Error::InvalidInput(format!(
                "design has {p} columns but {} names",
                names.len()
            )));
        }
        if p == 0 {
            return Err(Error::InvalidInput("design has no columns".into()));
        }
        if n < 2 {
            return Err(Error::TooFewRows { needed: 2, found: n });
        }
        check_unique(&names)?;
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonNumeric {
                row: i + 1,
                column: names[j].clone(),
                value: x[[i, j]].to_string(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumeric {
                row: i + 1,
                column: "response".into(),
                value: y[i].to_string(),
            });
        }
        Ok(RawDataset { x, y, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub col_means: Array1<f64>,
    pub col_scales: Array1<f64>,
    pub y_mean: f64,
    pub names: Vec<String>,
}

impl StandardizedDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Maps standardized coefficients back to `(intercept, slopes)` on the raw scale.
    pub fn coefficients_to_raw(&self, beta: &Array1<f64>) -> (f64, Array1<f64>) {
        let slopes = beta / &self.col_scales;
        let intercept = self.y_mean - slopes.dot(&self.col_means);
        (intercept, slopes)
    }

    /// The same data as an unstandardized dataset (used to check idempotence).
    pub fn to_raw(&self) -> RawDataset {
        RawDataset {
            x: self.x.clone(),
            y: self.y.clone(),
            names: self.names.clone(),
        }
    }
}

/// Reads a headed CSV file, taking `response` as `y` and every other column as `X`.
pub fn load_csv(path: impl AsRef<Path>, response: impl Into<Response>) -> Result<RawDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, response)
}

/// Same as [`load_csv`] on in-memory text.
pub fn parse_csv(text: &str, response: impl Into<Response>) -> Result<RawDataset> {
    let response = response.into();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    check_unique(&header)?;

    let response_idx = match &response {
        Response::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingResponse(format!("\"{name}\"")))?,
        Response::Index(i) if *i < header.len() => *i,
        Response::Index(i) => return Err(Error::MissingResponse(format!("#{i}"))),
    };

    let width = header.len();
    let mut cells: Vec<f64> = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        rows += 1;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    row: rows,
                    column: header[j].clone(),
                    value: field.to_string(),
                })?;
            cells.push(v);
        }
    }
    if rows < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: rows,
        });
    }

    let table = Array2::from_shape_vec((rows, width), cells)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let y = table.column(response_idx).to_owned();
    let keep: Vec<usize> = (0..width).filter(|&j| j != response_idx).collect();
    let x = table.select(Axis(1), &keep);
    let names = keep.iter().map(|&j| header[j].clone()).collect();
    RawDataset::new(x, y, names)
}

/// The 442-patient diabetes benchmark: ten baseline predictors and the response `y`.
pub fn diabetes() -> RawDataset {
    parse_csv(DIABETES_CSV, "y").expect("bundled diabetes fixture is well formed")
}

/// Centers every column, scales it to unit Euclidean norm, and centers `y`.
pub fn standardize(raw: &RawDataset) -> Result<StandardizedDataset> {
    let (n, p) = raw.x.dim();
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let mut x = raw.x.clone();
    let mut col_means = Array1::zeros(p);
    let mut col_scales = Array1::zeros(p);
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.dot(&col).sqrt();
        let magnitude = raw.x.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm <= 1e-12 * (1.0 + magnitude) * (n as f64).sqrt() {
            return Err(Error::ConstantColumn(raw.names[j].clone()));
        }
        col.mapv_inplace(|v| v / norm);
        col_means[j] = mean;
        col_scales[j] = norm;
    }
    let y_mean = raw.y.sum() / n as f64;
    let y = raw.y.mapv(|v| v - y_mean);
    Ok(StandardizedDataset {
        x,
        y,
        col_means,
        col_scales,
        y_mean,
        names: raw.names.clone(),
    })
}

/// How the base columns enter the products of [`expand_quadratic_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductBasis {
    /// Products and squares of mean-centered base columns.
    #[default]
    Centered,
    /// Products and squares of the columns as given.
    Raw,
}

/// Main effects, all pairwise products, then squares, formed from centered
/// base columns.
///
/// With `binary_square_drop`, squares of two-valued columns are omitted
/// (they are affine in the column itself).
pub fn expand_quadratic(raw: &RawDataset, binary_square_drop: bool) -> Result<RawDataset> {
    expand_quadratic_with(raw, binary_square_drop, ProductBasis::Centered)
}

pub fn expand_quadratic_with(
    raw: &RawDataset,
    binary_square_drop: bool,
    basis: ProductBasis,
) -> Result<RawDataset> {
    let (n, p) = raw.x.dim();
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "quadratic expansion needs at least 2 predictors, got {p}"
        )));
    }
    let base: Vec<Array1<f64>> = raw
        .x
        .axis_iter(Axis(1))
        .map(|col| match basis {
            ProductBasis::Centered => {
                let mean = col.sum() / n as f64;
                col.mapv(|v| v - mean)
            }
            ProductBasis::Raw => col.to_owned(),
        })
        .collect();

    let mut columns: Vec<Array1<f64>> = base.clone();
    let mut names = raw.names.clone();
    for a in 0..p {
        for b in (a + 1)..p {
            columns.push(&base[a] * &base[b]);
            names.push(format!("{}*{}", raw.names[a], raw.names[b]));
        }
    }
    for a in 0..p {
        if binary_square_drop && is_binary(raw.x.column(a).iter().copied()) {
            continue;
        }
        columns.push(base[a].mapv(|v| v * v));
        names.push(format!("{}^2", raw.names[a]));
    }

    let mut x = Array2::zeros((n, columns.len()));
    for (j, col) in columns.iter().enumerate() {
        x.column_mut(j).assign(col);
    }
    RawDataset::new(x, raw.y.clone(), names)
}

fn is_binary(values: impl Iterator<Item = f64>) -> bool {
    let mut distinct: Vec<f64> = Vec::with_capacity(3);
    for v in values {
        if !distinct.contains(&v) {
            distinct.push(v);
            if distinct.len() > 2 {
                return false;
            }
        }
    }
    distinct.len() == 2
}
