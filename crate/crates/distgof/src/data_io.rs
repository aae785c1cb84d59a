//! CSV ingestion, design-matrix construction, and report persistence.
//!
//! A `DesignRecipe` names the response and how each covariate column enters
//! the design: as-is, squared, one-hot encoded, or inside an interaction.
//! Factor levels use the first-observed level as the reference (treatment
//! contrasts). Reports serialize to round-trippable JSON or to flat CSV
//! tables ready for plotting.

use ndarray::Array2;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::bootstrap::TestResult;
use crate::dgp::SimulationReport;
use crate::error::{Error, Result};
use crate::families::Dataset;
use crate::gof::TestKind;
use crate::pvalue_ecdf_points;

/// How to turn raw CSV columns into a response vector and design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecipe {
    pub response: String,
    #[serde(default)]
    pub numeric_terms: Vec<String>,
    #[serde(default)]
    pub squared_terms: Vec<String>,
    #[serde(default)]
    pub factor_terms: Vec<String>,
    /// Column-name pairs; a side listed in `factor_terms` expands to its
    /// indicator block, any other side enters as a parsed numeric column.
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

impl DesignRecipe {
    /// Every column name the recipe reads from the file.
    fn referenced_columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = vec![self.response.as_str()];
        cols.extend(self.numeric_terms.iter().map(String::as_str));
        cols.extend(self.squared_terms.iter().map(String::as_str));
        cols.extend(self.factor_terms.iter().map(String::as_str));
        for (a, b) in &self.interactions {
            cols.push(a);
            cols.push(b);
        }
        cols
    }

    fn validate(&self) -> Result<()> {
        let covariate_terms = self
            .referenced_columns()
            .into_iter()
            .skip(1)
            .any(|c| c == self.response);
        if covariate_terms {
            return Err(Error::InvalidConfig(format!(
                "response column `{}` also appears among the covariate terms",
                self.response
            )));
        }
        Ok(())
    }
}

/// One raw CSV column in either of the two roles a recipe can assign.
enum Side {
    Numeric(Vec<f64>),
    /// Indicator block: non-reference levels in first-observed order, each
    /// with its 0/1 column.
    Factor(Vec<(String, Vec<f64>)>),
}

fn parse_numeric(rows: &[csv::StringRecord], idx: usize, column: &str) -> Result<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(r, rec)| {
            let raw = rec.get(idx).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| Error::ParseCell {
                row: r + 1,
                column: column.to_string(),
                value: raw.to_string(),
            })
        })
        .collect()
}

fn one_hot(rows: &[csv::StringRecord], idx: usize) -> Vec<(String, Vec<f64>)> {
    // First-observed level is the reference and gets no column.
    let mut levels: Vec<String> = Vec::new();
    let raw: Vec<&str> = rows.iter().map(|rec| rec.get(idx).unwrap_or("").trim()).collect();
    for v in &raw {
        if !levels.iter().any(|l| l == v) {
            levels.push(v.to_string());
        }
    }
    levels
        .iter()
        .skip(1)
        .map(|level| {
            let col = raw
                .iter()
                .map(|v| if v == level { 1.0 } else { 0.0 })
                .collect();
            (level.clone(), col)
        })
        .collect()
}

/// Loads a header-first, comma-separated, '.'-decimal CSV and assembles the
/// design per the recipe. Column order: intercept, numeric terms, squared
/// terms, factor indicator blocks, interaction expansions.
pub fn load_dataset_csv(path: &Path, recipe: &DesignRecipe) -> Result<Dataset> {
    recipe.validate()?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    for name in recipe.referenced_columns() {
        col_index(name)?;
    }

    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    if rows.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: no data rows under the header",
            path.display()
        )));
    }
    let n = rows.len();

    let responses = parse_numeric(&rows, col_index(&recipe.response)?, &recipe.response)?;

    let side = |name: &str| -> Result<Side> {
        let idx = col_index(name)?;
        if recipe.factor_terms.iter().any(|f| f == name) {
            Ok(Side::Factor(one_hot(&rows, idx)))
        } else {
            Ok(Side::Numeric(parse_numeric(&rows, idx, name)?))
        }
    };

    let mut names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if recipe.intercept {
        names.push("intercept".to_string());
        columns.push(vec![1.0; n]);
    }
    for term in &recipe.numeric_terms {
        names.push(term.clone());
        columns.push(parse_numeric(&rows, col_index(term)?, term)?);
    }
    for term in &recipe.squared_terms {
        let base = parse_numeric(&rows, col_index(term)?, term)?;
        names.push(format!("{term}^2"));
        columns.push(base.iter().map(|v| v * v).collect());
    }
    for term in &recipe.factor_terms {
        for (level, col) in one_hot(&rows, col_index(term)?) {
            names.push(format!("{term}={level}"));
            columns.push(col);
        }
    }
    for (a, b) in &recipe.interactions {
        let left = side(a)?;
        let right = side(b)?;
        let expand = |s: &Side| -> Vec<(String, Vec<f64>)> {
            match s {
                Side::Numeric(col) => vec![(String::new(), col.clone())],
                Side::Factor(block) => block.clone(),
            }
        };
        let label = |term: &str, level: &str| -> String {
            if level.is_empty() {
                term.to_string()
            } else {
                format!("{term}={level}")
            }
        };
        for (la, ca) in expand(&left) {
            for (lb, cb) in expand(&right) {
                names.push(format!("{}:{}", label(a, &la), label(b, &lb)));
                columns.push(ca.iter().zip(&cb).map(|(x, y)| x * y).collect());
            }
        }
    }

    let p = columns.len();
    let mut flat = Vec::with_capacity(n * p);
    for r in 0..n {
        for col in &columns {
            flat.push(col[r]);
        }
    }
    let covariates = Array2::from_shape_vec((n, p), flat).expect("n by p");
    let data = Dataset::new(covariates, responses, names)?;
    if recipe.intercept {
        data.mark_intercept(0)
    } else {
        Ok(data)
    }
}

/// Reads a design recipe from a JSON file.
pub fn load_recipe(path: &Path) -> Result<DesignRecipe> {
    read_json(path)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes any serializable value as pretty JSON. The encoding is lossless
/// for doubles, so reading it back reproduces an equal value.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, json + "\n").map_err(|source| io_err(path, source))
}

/// Reads a JSON file written by `write_json`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| io_err(path, source))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Flattens a study's rejection table to CSV, one row per (test, level),
/// with the header `method,dgp,level,rejection`.
pub fn write_rejection_csv(report: &SimulationReport, path: &Path) -> Result<()> {
    let mut out = String::from("method,dgp,level,rejection\n");
    for (kind, summary) in &report.per_test {
        for &(level, rejection) in &summary.rejection_at {
            out.push_str(&format!("{kind},{},{level},{rejection}\n", report.dgp.name));
        }
    }
    fs::write(path, out).map_err(|source| io_err(path, source))
}

/// Writes the p-value ecdf step points for every test in the report, one
/// row per point, with the header `method,p_value,fraction`.
pub fn write_ecdf_csv(report: &SimulationReport, path: &Path) -> Result<()> {
    let mut out = String::from("method,p_value,fraction\n");
    for &kind in report.per_test.keys() {
        for (p, frac) in pvalue_ecdf_points(report, kind)? {
            out.push_str(&format!("{kind},{p},{frac}\n"));
        }
    }
    fs::write(path, out).map_err(|source| io_err(path, source))
}

/// Flattens a single test result to CSV: one row per tabulated level, with
/// the statistic and p-value repeated, header
/// `method,statistic,p_value,level,critical_value`.
pub fn write_test_result_csv(result: &TestResult, path: &Path) -> Result<()> {
    let mut out = String::from("method,statistic,p_value,level,critical_value\n");
    let kind: TestKind = result.statistic.test_kind;
    for &(level, critical) in &result.critical_values {
        out.push_str(&format!(
            "{kind},{},{},{level},{critical}\n",
            result.statistic.value, result.p_value
        ));
    }
    fs::write(path, out).map_err(|source| io_err(path, source))
}
