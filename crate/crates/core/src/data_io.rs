//! Datasets: synthetic generators with closed-form truth, CSV ingestion with
//! a sidecar schema, feature encoding and stratified partitioning.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::functionals::{gamma_triplet, GammaParams};
use crate::scores::{check_tau, CompositeTriplet};

/// Encoding of one feature column (the constant column carries no metadata).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Min-max scaled with the recorded raw range.
    Continuous { min: f64, max: f64 },
    Binary,
    OneHot { group: String, level: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
}

/// Column kinds accepted in a schema file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    Categorical,
}

/// Sidecar schema: the response column and the kind of every feature column.
/// Columns of the CSV that are not listed are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub response: String,
    pub columns: BTreeMap<String, ColumnKind>,
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text).map_err(|e| Error::config(format!("schema: {e}")))?;
        if schema.columns.contains_key(&schema.response) {
            return Err(Error::config("the response column cannot also be a feature"));
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Schema::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes to TOML")
    }
}

/// Positive responses with an encoded design matrix whose first column is the constant 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    response_name: String,
    responses: Vec<f64>,
    /// Row-major `n × width` encoded features.
    features: Vec<f64>,
    /// Raw values behind `features` (continuous columns unscaled), same layout.
    raw: Vec<f64>,
    width: usize,
    columns: Vec<FeatureColumn>,
    truth: Option<Vec<CompositeTriplet>>,
}

impl Dataset {
    /// Dataset without covariates: only the constant column.
    pub fn intercept_only(responses: Vec<f64>) -> Result<Self> {
        check_responses(&responses)?;
        let n = responses.len();
        Ok(Dataset {
            response_name: "y".into(),
            responses,
            features: vec![1.0; n],
            raw: vec![1.0; n],
            width: 1,
            columns: Vec::new(),
            truth: None,
        })
    }

    /// Builds a dataset from raw continuous covariates, scaling each column by its own range.
    pub fn from_continuous(
        responses: Vec<f64>,
        names: &[String],
        rows: &[Vec<f64>],
        truth: Option<Vec<CompositeTriplet>>,
    ) -> Result<Self> {
        check_responses(&responses)?;
        if rows.len() != responses.len() {
            return Err(Error::domain("covariate rows and responses differ in length"));
        }
        if let Some(t) = &truth {
            if t.len() != responses.len() {
                return Err(Error::domain("truth and responses differ in length"));
            }
        }
        let width = names.len() + 1;
        let mut raw = Vec::with_capacity(rows.len() * width);
        for row in rows {
            if row.len() != names.len() {
                return Err(Error::domain("covariate row of wrong length"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("non-finite covariate"));
            }
            raw.push(1.0);
            raw.extend_from_slice(row);
        }
        let columns = names
            .iter()
            .map(|name| FeatureColumn {
                name: name.clone(),
                kind: FeatureKind::Continuous { min: 0.0, max: 0.0 },
            })
            .collect();
        let mut ds = Dataset {
            response_name: "y".into(),
            responses,
            features: raw.clone(),
            raw,
            width,
            columns,
            truth,
        };
        ds.columns = ds.fitted_columns();
        ds.encode();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Encoded feature width including the constant column.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    /// Raw covariates of row `i` (constant first, continuous columns unscaled).
    pub fn raw_row(&self, i: usize) -> &[f64] {
        &self.raw[i * self.width..(i + 1) * self.width]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn truth(&self) -> Option<&[CompositeTriplet]> {
        self.truth.as_deref()
    }

    /// Attaches known true triplets, one per row.
    pub fn with_truth(mut self, truth: Vec<CompositeTriplet>) -> Result<Self> {
        if truth.len() != self.len() {
            return Err(Error::domain(format!(
                "{} truth rows for {} observations",
                truth.len(),
                self.len()
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.width);
        let mut raw = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            features.extend_from_slice(self.row(i));
            raw.extend_from_slice(self.raw_row(i));
        }
        Dataset {
            response_name: self.response_name.clone(),
            responses: indices.iter().map(|&i| self.responses[i]).collect(),
            features,
            raw,
            width: self.width,
            columns: self.columns.clone(),
            truth: self.truth.as_ref().map(|t| indices.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Column metadata with continuous ranges refit on this dataset's raw values.
    pub fn fitted_columns(&self) -> Vec<FeatureColumn> {
        self.columns
            .iter()
            .enumerate()
            .map(|(j, col)| match col.kind {
                FeatureKind::Continuous { .. } => {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for i in 0..self.len() {
                        let v = self.raw[i * self.width + j + 1];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    if self.is_empty() {
                        (lo, hi) = (0.0, 0.0);
                    }
                    FeatureColumn {
                        name: col.name.clone(),
                        kind: FeatureKind::Continuous { min: lo, max: hi },
                    }
                }
                _ => col.clone(),
            })
            .collect()
    }

    /// Re-encodes the continuous columns with the given metadata (e.g. a learn split's ranges).
    pub fn with_columns(&self, columns: &[FeatureColumn]) -> Result<Dataset> {
        let same_layout = columns.len() == self.columns.len()
            && columns.iter().zip(&self.columns).all(|(a, b)| {
                a.name == b.name
                    && match (&a.kind, &b.kind) {
                        (FeatureKind::Continuous { .. }, FeatureKind::Continuous { .. }) => true,
                        (x, y) => x == y,
                    }
            });
        if !same_layout {
            return Err(Error::domain("feature layout differs from the reference columns"));
        }
        let mut ds = self.clone();
        ds.columns = columns.to_vec();
        ds.encode();
        Ok(ds)
    }

    fn encode(&mut self) {
        for (j, col) in self.columns.iter().enumerate() {
            if let FeatureKind::Continuous { min, max } = col.kind {
                let range = max - min;
                for i in 0..self.responses.len() {
                    let k = i * self.width + j + 1;
                    self.features[k] = if range > 0.0 { (self.raw[k] - min) / range } else { 0.0 };
                }
            }
        }
    }
}

fn check_responses(responses: &[f64]) -> Result<()> {
    if let Some((i, y)) = responses.iter().enumerate().find(|(_, y)| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::Parse {
            row: i + 1,
            msg: format!("response must be positive and finite, got {y}"),
        });
    }
    Ok(())
}

fn check_coefficients(name: &str, coeff: &[f64]) -> Result<()> {
    if coeff.is_empty() {
        return Err(Error::domain(format!("{name} needs at least an intercept")));
    }
    if coeff.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain(format!("{name} must be finite")));
    }
    Ok(())
}

fn uniform_covariates(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.random::<f64>()).collect()
}

fn linear_predictor(coeff: &[f64], covariates: &[f64]) -> f64 {
    coeff[0] + coeff[1..].iter().zip(covariates).map(|(c, x)| c * x).sum::<f64>()
}

fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Gamma responses with mean `exp⟨coeff_mu, x⟩` and shape `gamma_shape`.
///
/// `coeff_mu[0]` is the intercept; the remaining entries weight independent
/// `Uniform(0, 1)` covariates.
pub fn simulate_gamma(n: usize, seed: u64, coeff_mu: &[f64], gamma_shape: f64, tau: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    check_coefficients("coeff_mu", coeff_mu)?;
    check_tau(tau)?;
    GammaParams::new(1.0, gamma_shape)?;
    let p = coeff_mu.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let x = uniform_covariates(&mut rng, p);
        let mu = linear_predictor(coeff_mu, &x).exp();
        let params = GammaParams::new(mu, gamma_shape)?;
        let dist = Gamma::new(gamma_shape, params.scale()).map_err(|e| Error::domain(e.to_string()))?;
        let y = loop {
            let y: f64 = dist.sample(&mut rng);
            if y > 0.0 {
                break y;
            }
        };
        truth.push(gamma_triplet(&params, tau)?);
        ys.push(y);
        rows.push(x);
    }
    Dataset::from_continuous(ys, &feature_names(p), &rows, Some(truth))
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

/// True triplet of a lognormal with log-mean `m` and log-scale `s`.
pub fn lognormal_triplet(m: f64, s: f64, tau: f64) -> Result<CompositeTriplet> {
    check_tau(tau)?;
    if !(s > 0.0 && s.is_finite() && m.is_finite()) {
        return Err(Error::domain(format!("lognormal needs finite m and s > 0, got ({m}, {s})")));
    }
    let std = Normal::standard();
    let z = std.inverse_cdf(tau);
    let mean = (m + 0.5 * s * s).exp();
    let e_minus = mean * std.cdf(z - s) / tau;
    let e_plus = mean * std.cdf(s - z) / (1.0 - tau);
    Ok(CompositeTriplet {
        e_minus,
        v: (m + s * z).exp(),
        e_plus,
    })
}

/// Lognormal responses with `log Y ~ N(⟨coeff_m, x⟩, softplus⟨coeff_s, x⟩²)`.
pub fn simulate_lognormal(n: usize, seed: u64, coeff_m: &[f64], coeff_s: &[f64], tau: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    check_coefficients("coeff_m", coeff_m)?;
    check_coefficients("coeff_s", coeff_s)?;
    if coeff_m.len() != coeff_s.len() {
        return Err(Error::domain("coeff_m and coeff_s must have the same length"));
    }
    check_tau(tau)?;
    let p = coeff_m.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let x = uniform_covariates(&mut rng, p);
        let m = linear_predictor(coeff_m, &x);
        let s = softplus(linear_predictor(coeff_s, &x));
        let z: f64 = rng.sample(StandardNormal);
        let y = (m + s * z).exp();
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::domain(format!("lognormal draw {y} is not a positive finite number")));
        }
        truth.push(lognormal_triplet(m, s, tau)?);
        ys.push(y);
        rows.push(x);
    }
    Dataset::from_continuous(ys, &feature_names(p), &rows, Some(truth))
}

/// Rank-based response decile (0..10) of every observation; ties broken by index.
pub fn response_deciles(responses: &[f64]) -> Vec<usize> {
    let n = responses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| responses[a].total_cmp(&responses[b]).then(a.cmp(&b)));
    let mut decile = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        decile[i] = rank * 10 / n.max(1);
    }
    decile
}

/// Splits indices into (kept, held) with `round(fraction · n)` held out,
/// allocated across response deciles by largest remainder.
pub(crate) fn stratified_partition(responses: &[f64], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let n = responses.len();
    let n_held = (fraction * n as f64).round() as usize;
    if n_held == 0 || n_held >= n {
        return Err(Error::domain(format!(
            "fraction {fraction} of {n} observations leaves an empty part"
        )));
    }
    let deciles = response_deciles(responses);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, &d) in deciles.iter().enumerate() {
        groups[d].push(i);
    }
    let ideal: Vec<f64> = groups.iter().map(|g| fraction * g.len() as f64).collect();
    let mut take: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut remaining = n_held as isize - take.iter().sum::<usize>() as isize;
    let mut by_remainder: Vec<usize> = (0..10).collect();
    by_remainder.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
    for &d in by_remainder.iter().cycle() {
        if remaining <= 0 {
            break;
        }
        if take[d] < groups[d].len() {
            take[d] += 1;
            remaining -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = Vec::with_capacity(n_held);
    for (group, &k) in groups.iter_mut().zip(&take) {
        group.shuffle(&mut rng);
        held.extend_from_slice(&group[..k]);
    }
    let held_set: BTreeSet<usize> = held.into_iter().collect();
    let kept = (0..n).filter(|i| !held_set.contains(i)).collect();
    Ok((kept, held_set.into_iter().collect()))
}

/// Learn/test partition stratified by response decile. Continuous scaling
/// is refit on the learn part and applied unchanged to the test part.
pub fn split_stratified(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (learn_idx, test_idx) = stratified_partition(&dataset.responses, test_fraction, seed)?;
    let learn = dataset.subset(&learn_idx);
    let columns = learn.fitted_columns();
    Ok((learn.with_columns(&columns)?, dataset.subset(&test_idx).with_columns(&columns)?))
}

struct RawTable {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        rows.push(rec.map_err(|e| Error::Parse {
            row: i + 1,
            msg: e.to_string(),
        })?);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            msg: "file has no data rows".into(),
        });
    }
    Ok(RawTable { headers, rows })
}

fn column_index(table: &RawTable, name: &str) -> Result<usize> {
    table.headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        row: 0,
        msg: format!("missing column '{name}'"),
    })
}

fn parse_number(table: &RawTable, row: usize, col: usize) -> Result<f64> {
    let cell = table.rows[row].get(col).unwrap_or("").trim();
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row: row + 1,
            msg: format!("column '{}': cannot parse '{cell}' as a number", table.headers[col]),
        })
}

/// Reads a CSV with header, one-hot encodes categorical columns (levels in
/// sorted order), min-max scales continuous columns and prepends the constant.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    load_csv_impl(path, schema, None)
}

/// Like [`load_csv`] but encodes with previously fitted column metadata, so
/// that the design matrix matches a trained model.
pub fn load_csv_with_columns(path: &Path, schema: &Schema, columns: &[FeatureColumn]) -> Result<Dataset> {
    load_csv_impl(path, schema, Some(columns))
}

fn load_csv_impl(path: &Path, schema: &Schema, reference: Option<&[FeatureColumn]>) -> Result<Dataset> {
    let table = read_table(path)?;
    let y_col = column_index(&table, &schema.response)?;
    for name in schema.columns.keys() {
        column_index(&table, name)?;
    }
    let n = table.rows.len();
    let responses = (0..n)
        .map(|i| {
            let y = parse_number(&table, i, y_col)?;
            if y <= 0.0 {
                return Err(Error::Parse {
                    row: i + 1,
                    msg: format!("response '{}' must be positive, got {y}", schema.response),
                });
            }
            Ok(y)
        })
        .collect::<Result<Vec<f64>>>()?;

    // features in header order
    let mut columns = Vec::new();
    let mut raw_cols: Vec<Vec<f64>> = Vec::new();
    for (c, name) in table.headers.iter().enumerate() {
        let Some(kind) = schema.columns.get(name) else { continue };
        match kind {
            ColumnKind::Continuous => {
                let vals = (0..n).map(|i| parse_number(&table, i, c)).collect::<Result<Vec<_>>>()?;
                columns.push(FeatureColumn {
                    name: name.clone(),
                    kind: FeatureKind::Continuous { min: 0.0, max: 0.0 },
                });
                raw_cols.push(vals);
            }
            ColumnKind::Binary => {
                let vals = (0..n)
                    .map(|i| {
                        let v = parse_number(&table, i, c)?;
                        if v != 0.0 && v != 1.0 {
                            return Err(Error::Parse {
                                row: i + 1,
                                msg: format!("binary column '{name}' must be 0 or 1, got {v}"),
                            });
                        }
                        Ok(v)
                    })
                    .collect::<Result<Vec<_>>>()?;
                columns.push(FeatureColumn {
                    name: name.clone(),
                    kind: FeatureKind::Binary,
                });
                raw_cols.push(vals);
            }
            ColumnKind::Categorical => {
                let cells: Vec<String> = table.rows.iter().map(|r| r.get(c).unwrap_or("").trim().to_string()).collect();
                if let Some(i) = cells.iter().position(|s| s.is_empty()) {
                    return Err(Error::Parse {
                        row: i + 1,
                        msg: format!("empty level in categorical column '{name}'"),
                    });
                }
                let levels: Vec<String> = match reference {
                    Some(refc) => refc
                        .iter()
                        .filter_map(|col| match &col.kind {
                            FeatureKind::OneHot { group, level } if group == name => Some(level.clone()),
                            _ => None,
                        })
                        .collect(),
                    None => cells.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
                };
                if let Some(i) = cells.iter().position(|s| !levels.contains(s)) {
                    return Err(Error::Parse {
                        row: i + 1,
                        msg: format!("unknown level '{}' in categorical column '{name}'", cells[i]),
                    });
                }
                for level in levels {
                    raw_cols.push(cells.iter().map(|s| if *s == level { 1.0 } else { 0.0 }).collect());
                    columns.push(FeatureColumn {
                        name: format!("{name}={level}"),
                        kind: FeatureKind::OneHot {
                            group: name.clone(),
                            level,
                        },
                    });
                }
            }
        }
    }

    let width = columns.len() + 1;
    let mut raw = Vec::with_capacity(n * width);
    for i in 0..n {
        raw.push(1.0);
        raw.extend(raw_cols.iter().map(|col| col[i]));
    }
    let ds = Dataset {
        response_name: schema.response.clone(),
        responses,
        features: raw.clone(),
        raw,
        width,
        columns,
        truth: None,
    };
    let fitted = match reference {
        Some(refc) => refc.to_vec(),
        None => ds.fitted_columns(),
    };
    ds.with_columns(&fitted)
}

/// Writes responses and raw covariates; one-hot groups are written back as a
/// single categorical column.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![dataset.response_name.clone()];
    let mut groups_seen = BTreeSet::new();
    for col in &dataset.columns {
        match &col.kind {
            FeatureKind::OneHot { group, .. } => {
                if groups_seen.insert(group.clone()) {
                    header.push(group.clone());
                }
            }
            _ => header.push(col.name.clone()),
        }
    }
    writer.write_record(&header)?;
    for i in 0..dataset.len() {
        let raw = dataset.raw_row(i);
        let mut record = vec![dataset.responses[i].to_string()];
        let mut groups_written = BTreeSet::new();
        for (j, col) in dataset.columns.iter().enumerate() {
            match &col.kind {
                FeatureKind::OneHot { group, .. } => {
                    if groups_written.insert(group.clone()) {
                        let level = dataset
                            .columns
                            .iter()
                            .enumerate()
                            .find_map(|(k, c)| match &c.kind {
                                FeatureKind::OneHot { group: g, level } if g == group && raw[k + 1] == 1.0 => {
                                    Some(level.clone())
                                }
                                _ => None,
                            })
                            .unwrap_or_default();
                        record.push(level);
                    }
                }
                _ => record.push(raw[j + 1].to_string()),
            }
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Schema describing the files produced by [`write_csv`].
pub fn schema_of(dataset: &Dataset) -> Schema {
    let mut columns = BTreeMap::new();
    for col in &dataset.columns {
        let (name, kind) = match &col.kind {
            FeatureKind::Continuous { .. } => (col.name.clone(), ColumnKind::Continuous),
            FeatureKind::Binary => (col.name.clone(), ColumnKind::Binary),
            FeatureKind::OneHot { group, .. } => (group.clone(), ColumnKind::Categorical),
        };
        columns.insert(name, kind);
    }
    Schema {
        response: dataset.response_name.clone(),
        columns,
    }
}

/// Writes one `(e_minus, v, e_plus)` row per triplet.
pub fn write_triplets(triplets: &[CompositeTriplet], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["e_minus", "v", "e_plus"])?;
    for t in triplets {
        writer.write_record([t.e_minus.to_string(), t.v.to_string(), t.e_plus.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_triplets(path: &Path) -> Result<Vec<CompositeTriplet>> {
    let table = read_table(path)?;
    let cols = [
        column_index(&table, "e_minus")?,
        column_index(&table, "v")?,
        column_index(&table, "e_plus")?,
    ];
    (0..table.rows.len())
        .map(|i| {
            let t = CompositeTriplet {
                e_minus: parse_number(&table, i, cols[0])?,
                v: parse_number(&table, i, cols[1])?,
                e_plus: parse_number(&table, i, cols[2])?,
            };
            t.validate().map_err(|e| Error::Parse {
                row: i + 1,
                msg: e.to_string(),
            })?;
            Ok(t)
        })
        .collect()
}
