//! Observed data, model indicators, CSV ingestion and preprocessing.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::scalar::Real;

/// Sampling family of an outcome or treatment column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[default]
    Gaussian,
    PoissonLogNormal,
    BetaLogistic,
}

impl Family {
    pub fn is_gaussian(self) -> bool {
        self == Family::Gaussian
    }

    /// Beta-logistic columns carry a dispersion parameter.
    pub fn has_dispersion(self) -> bool {
        self == Family::BetaLogistic
    }

    fn check(self, v: f64) -> std::result::Result<(), String> {
        match self {
            Family::Gaussian => Ok(()),
            Family::PoissonLogNormal if v < 0.0 || v.fract() != 0.0 => {
                Err(format!("{v} is not a nonnegative integer"))
            }
            Family::BetaLogistic if !(0.0..=1.0).contains(&v) => {
                Err(format!("{v} is outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub outcome: String,
    pub treatments: Vec<String>,
    pub pool: Vec<String>,
}

impl ColumnNames {
    pub fn default_for(l: usize, p: usize) -> Self {
        Self {
            outcome: "y".into(),
            treatments: (1..=l).map(|j| format!("x{j}")).collect(),
            pool: (1..=p).map(|j| format!("z{j}")).collect(),
        }
    }
}

/// Outcome, treatments and the candidate instrument/covariate pool.
///
/// Construction validates family supports, the sample-size bound n ≥ l + p + 2 and
/// full column rank of [ι : X : Z]. Instances are immutable afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    y: DVector<T>,
    x: DMatrix<T>,
    z: DMatrix<T>,
    y_family: Family,
    x_families: Vec<Family>,
    fixed_mask: Vec<bool>,
    names: ColumnNames,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        y: DVector<T>,
        x: DMatrix<T>,
        z: DMatrix<T>,
        y_family: Family,
        x_families: Vec<Family>,
        fixed_mask: Vec<bool>,
    ) -> Result<Self> {
        let names = ColumnNames::default_for(x.ncols(), z.ncols());
        Self::with_names(y, x, z, y_family, x_families, fixed_mask, names)
    }

    pub fn with_names(
        y: DVector<T>,
        x: DMatrix<T>,
        z: DMatrix<T>,
        y_family: Family,
        x_families: Vec<Family>,
        fixed_mask: Vec<bool>,
        names: ColumnNames,
    ) -> Result<Self> {
        let d = Self::unchecked(y, x, z, y_family, x_families, fixed_mask, names)?;
        d.validate()?;
        Ok(d)
    }

    /// Shape checks only; family and rank validation is skipped. Used for holdout
    /// rows, which may be too few to satisfy the estimability bound.
    pub fn unchecked(
        y: DVector<T>,
        x: DMatrix<T>,
        z: DMatrix<T>,
        y_family: Family,
        x_families: Vec<Family>,
        fixed_mask: Vec<bool>,
        names: ColumnNames,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, X has {}, Z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Schema("at least one treatment is required".into()));
        }
        if x_families.len() != x.ncols() || fixed_mask.len() != z.ncols() {
            return Err(Error::DimensionMismatch(
                "family tags or fixed-instrument mask do not match the column counts".into(),
            ));
        }
        if names.treatments.len() != x.ncols() || names.pool.len() != z.ncols() {
            return Err(Error::DimensionMismatch("column names do not match the data".into()));
        }
        Ok(Self {
            y,
            x,
            z,
            y_family,
            x_families,
            fixed_mask,
            names,
        })
    }

    fn validate(&self) -> Result<()> {
        let (n, l, p) = (self.n(), self.l(), self.p());
        self.check_families()?;
        if n < l + p + 2 {
            return Err(Error::Schema(format!(
                "n = {n} rows cannot support l = {l} treatments and p = {p} pool columns"
            )));
        }
        let full = outcome_design(&self.x, &self.z, &vec![true; p]);
        Qr::new(&full).map_err(|_| Error::RankDeficient("full design".into()))?;
        Ok(())
    }

    pub(crate) fn check_families(&self) -> Result<()> {
        let check_col = |name: &str, fam: Family, col: &mut dyn Iterator<Item = T>| -> Result<()> {
            for (row, v) in col.enumerate() {
                let v = v.f64();
                if !v.is_finite() {
                    return Err(Error::NonNumeric {
                        column: name.to_string(),
                        row,
                        value: v.to_string(),
                    });
                }
                fam.check(v).map_err(|detail| Error::FamilyViolation {
                    column: name.to_string(),
                    row,
                    detail,
                })?;
            }
            Ok(())
        };
        check_col(&self.names.outcome, self.y_family, &mut self.y.iter().copied())?;
        for j in 0..self.l() {
            check_col(
                &self.names.treatments[j],
                self.x_families[j],
                &mut self.x.column(j).iter().copied(),
            )?;
        }
        for j in 0..self.p() {
            check_col(&self.names.pool[j], Family::Gaussian, &mut self.z.column(j).iter().copied())?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn l(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<T> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<T> {
        &self.z
    }

    pub fn y_family(&self) -> Family {
        self.y_family
    }

    pub fn x_families(&self) -> &[Family] {
        &self.x_families
    }

    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed_mask
    }

    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    pub fn has_fixed_instruments(&self) -> bool {
        self.fixed_mask.iter().any(|&m| m)
    }

    /// Pool columns allowed in the outcome equation.
    pub fn outcome_eligible(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| !self.fixed_mask[j]).collect()
    }

    pub fn all_gaussian(&self) -> bool {
        self.y_family.is_gaussian() && self.x_families.iter().all(|f| f.is_gaussian())
    }

    /// Same schema, new outcome and treatment values (the pool is kept).
    pub fn with_outcome_and_treatments(&self, y: DVector<T>, x: DMatrix<T>) -> Result<Self> {
        Self::with_names(
            y,
            x,
            self.z.clone(),
            self.y_family,
            self.x_families.clone(),
            self.fixed_mask.clone(),
            self.names.clone(),
        )
    }

    /// Rows `idx` as a new dataset, without the estimability checks.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            y: self.y.select_rows(idx),
            x: self.x.select_rows(idx),
            z: self.z.select_rows(idx),
            y_family: self.y_family,
            x_families: self.x_families.clone(),
            fixed_mask: self.fixed_mask.clone(),
            names: self.names.clone(),
        }
    }

    /// Same family tags, mask and column names.
    pub fn same_schema(&self, other: &Self) -> bool {
        self.y_family == other.y_family
            && self.x_families == other.x_families
            && self.fixed_mask == other.fixed_mask
            && self.names == other.names
    }

    /// Write as a CSV with a header row. Values use the shortest representation
    /// that parses back to the same bits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![self.names.outcome.clone()];
        header.extend(self.names.treatments.iter().cloned());
        header.extend(self.names.pool.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].f64().to_string()];
            rec.extend((0..self.l()).map(|j| self.x[(i, j)].f64().to_string()));
            rec.extend((0..self.p()).map(|j| self.z[(i, j)].f64().to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Column roles for CSV ingestion, usually read from a JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub outcome: ColumnRole,
    pub treatments: Vec<ColumnRole>,
    #[serde(default)]
    pub pool: Vec<PoolColumn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRole {
    pub column: String,
    #[serde(default)]
    pub family: Family,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoolEntry")]
pub struct PoolColumn {
    pub column: String,
    #[serde(default)]
    pub fixed_instrument: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolEntry {
    Name(String),
    Full {
        column: String,
        #[serde(default)]
        fixed_instrument: bool,
    },
}

impl From<PoolEntry> for PoolColumn {
    fn from(e: PoolEntry) -> Self {
        match e {
            PoolEntry::Name(column) => PoolColumn {
                column,
                fixed_instrument: false,
            },
            PoolEntry::Full {
                column,
                fixed_instrument,
            } => PoolColumn {
                column,
                fixed_instrument,
            },
        }
    }
}

impl Schema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_reader(f).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn for_dataset<T: Real>(d: &Dataset<T>) -> Self {
        Self {
            outcome: ColumnRole {
                column: d.names.outcome.clone(),
                family: d.y_family,
            },
            treatments: d
                .names
                .treatments
                .iter()
                .zip(&d.x_families)
                .map(|(c, f)| ColumnRole {
                    column: c.clone(),
                    family: *f,
                })
                .collect(),
            pool: d
                .names
                .pool
                .iter()
                .zip(&d.fixed_mask)
                .map(|(c, m)| PoolColumn {
                    column: c.clone(),
                    fixed_instrument: *m,
                })
                .collect(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.treatments.is_empty() {
            return Err(Error::Schema("schema names no treatment column".into()));
        }
        let mut seen = HashSet::new();
        let all = std::iter::once(&self.outcome.column)
            .chain(self.treatments.iter().map(|c| &c.column))
            .chain(self.pool.iter().map(|c| &c.column));
        for c in all {
            if !seen.insert(c) {
                return Err(Error::Schema(format!("column `{c}` is assigned two roles")));
            }
        }
        Ok(())
    }

    fn names(&self) -> ColumnNames {
        ColumnNames {
            outcome: self.outcome.column.clone(),
            treatments: self.treatments.iter().map(|c| c.column.clone()).collect(),
            pool: self.pool.iter().map(|c| c.column.clone()).collect(),
        }
    }
}

fn read_columns(path: &Path, schema: &Schema) -> Result<(usize, Vec<Vec<f64>>)> {
    schema.check()?;
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers()?.clone();
    let names = schema.names();
    let wanted: Vec<&String> = std::iter::once(&names.outcome)
        .chain(&names.treatments)
        .chain(&names.pool)
        .collect();
    let mut idx = Vec::with_capacity(wanted.len());
    for w in &wanted {
        let i = header
            .iter()
            .position(|h| h.trim() == w.as_str())
            .ok_or_else(|| Error::MissingColumn((*w).clone()))?;
        idx.push(i);
    }
    let mut cols = vec![Vec::new(); wanted.len()];
    let mut n = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let raw = rec.get(i).unwrap_or("").trim();
            let v: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumeric {
                    column: wanted[k].clone(),
                    row,
                    value: raw.to_string(),
                }
            })?;
            cols[k].push(v);
        }
        n += 1;
    }
    Ok((n, cols))
}

fn assemble<T: Real>(schema: &Schema, n: usize, cols: Vec<Vec<f64>>) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
    let l = schema.treatments.len();
    let p = schema.pool.len();
    let y = DVector::from_fn(n, |i, _| T::lit(cols[0][i]));
    let x = DMatrix::from_fn(n, l, |i, j| T::lit(cols[1 + j][i]));
    let z = DMatrix::from_fn(n, p, |i, j| T::lit(cols[1 + l + j][i]));
    (y, x, z)
}

/// Read a CSV with a header row, assigning roles and families from `schema`.
pub fn ingest_csv<T: Real>(path: &Path, schema: &Schema) -> Result<Dataset<T>> {
    let (n, cols) = read_columns(path, schema)?;
    let (y, x, z) = assemble(schema, n, cols);
    Dataset::with_names(
        y,
        x,
        z,
        schema.outcome.family,
        schema.treatments.iter().map(|c| c.family).collect(),
        schema.pool.iter().map(|c| c.fixed_instrument).collect(),
        schema.names(),
    )
}

/// Like [`ingest_csv`] but only checks families, for holdout files whose row
/// count may be below the estimability bound. An empty file is an error.
pub fn ingest_holdout_csv<T: Real>(path: &Path, schema: &Schema) -> Result<Dataset<T>> {
    let (n, cols) = read_columns(path, schema)?;
    if n == 0 {
        return Err(Error::Schema("holdout file has no rows".into()));
    }
    let (y, x, z) = assemble(schema, n, cols);
    let d = Dataset::unchecked(
        y,
        x,
        z,
        schema.outcome.family,
        schema.treatments.iter().map(|c| c.family).collect(),
        schema.pool.iter().map(|c| c.fixed_instrument).collect(),
        schema.names(),
    )?;
    d.check_families()?;
    Ok(d)
}

/// Affine map applied to one column: stored = (raw − mean) / scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub scale: f64,
}

impl ColumnScale {
    pub const IDENTITY: ColumnScale = ColumnScale {
        mean: 0.0,
        scale: 1.0,
    };

    fn apply<T: Real>(&self, v: T) -> T {
        (v - T::lit(self.mean)) / T::lit(self.scale)
    }
}

/// Record of the preprocessing applied to a dataset, for back-transformation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y: ColumnScale,
    pub x: Vec<ColumnScale>,
    pub z: Vec<ColumnScale>,
}

impl Standardization {
    pub fn identity(l: usize, p: usize) -> Self {
        Self {
            y: ColumnScale::IDENTITY,
            x: vec![ColumnScale::IDENTITY; l],
            z: vec![ColumnScale::IDENTITY; p],
        }
    }

    /// Apply the recorded maps to another dataset with the same schema.
    pub fn apply<T: Real>(&self, d: &Dataset<T>) -> Result<Dataset<T>> {
        if self.x.len() != d.l() || self.z.len() != d.p() {
            return Err(Error::DimensionMismatch(
                "standardization record does not match the dataset".into(),
            ));
        }
        let y = d.y.map(|v| self.y.apply(v));
        let mut x = d.x.clone();
        for (j, s) in self.x.iter().enumerate() {
            x.column_mut(j).apply(|v| *v = s.apply(*v));
        }
        let mut z = d.z.clone();
        for (j, s) in self.z.iter().enumerate() {
            z.column_mut(j).apply(|v| *v = s.apply(*v));
        }
        Ok(Dataset {
            y,
            x,
            z,
            ..d.clone()
        })
    }

    /// Treatment effect j on the original measurement scale.
    pub fn tau_to_original(&self, j: usize, tau: f64) -> f64 {
        tau * self.y.scale / self.x[j].scale
    }

    /// Log density correction for outcome values: log p(y_raw) = log p(y_std) − log s_y.
    pub fn outcome_log_jacobian(&self) -> f64 {
        -self.y.scale.ln()
    }
}

fn mean_sd<T: Real>(v: impl Iterator<Item = T> + Clone) -> (f64, f64) {
    let xs: Vec<f64> = v.map(|x| x.f64()).collect();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let sd = if xs.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (m, sd)
}

fn transform<T: Real>(d: &Dataset<T>, scale_columns: bool, touch_pool: bool) -> (Dataset<T>, Standardization) {
    let pick = |fam: Family, col: &mut dyn Iterator<Item = T>| -> ColumnScale {
        if !fam.is_gaussian() {
            return ColumnScale::IDENTITY;
        }
        let xs: Vec<T> = col.collect();
        let (mean, sd) = mean_sd(xs.into_iter());
        let scale = if scale_columns && sd > 0.0 { sd } else { 1.0 };
        ColumnScale { mean, scale }
    };
    let rec = Standardization {
        y: pick(d.y_family, &mut d.y.iter().copied()),
        x: (0..d.l())
            .map(|j| pick(d.x_families[j], &mut d.x.column(j).iter().copied()))
            .collect(),
        z: (0..d.p())
            .map(|j| {
                if touch_pool {
                    pick(Family::Gaussian, &mut d.z.column(j).iter().copied())
                } else {
                    ColumnScale::IDENTITY
                }
            })
            .collect(),
    };
    let out = rec.apply(d).expect("record built from this dataset");
    (out, rec)
}

/// Subtract the sample mean from every Gaussian-tagged column of y and X.
/// Non-Gaussian columns and the pool are left untouched.
pub fn center_gaussian_columns<T: Real>(d: &Dataset<T>) -> (Dataset<T>, Standardization) {
    transform(d, false, false)
}

/// Default preprocessing: Gaussian columns of [y : X] and every pool column are
/// centered and scaled to unit sample standard deviation.
pub fn standardize<T: Real>(d: &Dataset<T>) -> (Dataset<T>, Standardization) {
    transform(d, true, true)
}

/// Inclusion indicators for the outcome (L) and treatment (M) equations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelPair {
    pub outcome: Vec<bool>,
    pub treatment: Vec<bool>,
}

impl ModelPair {
    pub fn empty(p: usize) -> Self {
        Self {
            outcome: vec![false; p],
            treatment: vec![false; p],
        }
    }

    pub fn outcome_size(&self) -> usize {
        self.outcome.iter().filter(|&&b| b).count()
    }

    pub fn treatment_size(&self) -> usize {
        self.treatment.iter().filter(|&&b| b).count()
    }

    /// Columns in M but not in L: the valid and relevant instruments.
    pub fn n_instruments(&self) -> usize {
        self.treatment
            .iter()
            .zip(&self.outcome)
            .filter(|(m, l)| **m && !**l)
            .count()
    }

    pub fn check_mask(&self, mask: &[bool]) -> Result<()> {
        if let Some(j) = (0..mask.len()).find(|&j| mask[j] && self.outcome[j]) {
            return Err(Error::Schema(format!(
                "pool column {j} is a fixed instrument and cannot enter the outcome model"
            )));
        }
        Ok(())
    }
}

pub fn bitmask(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_bitmask(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            _ => Err(Error::Schema(format!("bad inclusion mask `{s}`"))),
        })
        .collect()
}

/// [ι : X : Z_incl] with included pool columns in ascending index.
pub fn outcome_design<T: Real>(x: &DMatrix<T>, z: &DMatrix<T>, incl: &[bool]) -> DMatrix<T> {
    let n = x.nrows();
    let cols: Vec<usize> = (0..incl.len()).filter(|&j| incl[j]).collect();
    let l = x.ncols();
    let mut u = DMatrix::zeros(n, 1 + l + cols.len());
    u.column_mut(0).fill(T::one());
    u.columns_mut(1, l).copy_from(x);
    for (k, &j) in cols.iter().enumerate() {
        u.column_mut(1 + l + k).copy_from(&z.column(j));
    }
    u
}

/// [ι : Z_incl] with included pool columns in ascending index.
pub fn treatment_design<T: Real>(z: &DMatrix<T>, incl: &[bool]) -> DMatrix<T> {
    let n = z.nrows();
    let cols: Vec<usize> = (0..incl.len()).filter(|&j| incl[j]).collect();
    let mut v = DMatrix::zeros(n, 1 + cols.len());
    v.column_mut(0).fill(T::one());
    for (k, &j) in cols.iter().enumerate() {
        v.column_mut(1 + k).copy_from(&z.column(j));
    }
    v
}

/// Outcome and treatment designs (U_L, V_M) for a model pair.
pub fn design_matrices<T: Real>(d: &Dataset<T>, mp: &ModelPair) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if mp.outcome.len() != d.p() || mp.treatment.len() != d.p() {
        return Err(Error::DimensionMismatch("model pair length differs from p".into()));
    }
    mp.check_mask(&d.fixed_mask)?;
    let u = outcome_design(&d.x, &d.z, &mp.outcome);
    let v = treatment_design(&d.z, &mp.treatment);
    Qr::new(&u).map_err(|_| Error::RankDeficient("outcome design".into()))?;
    Qr::new(&v).map_err(|_| Error::RankDeficient("treatment design".into()))?;
    Ok((u, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::io::Write;

    fn toy(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let y = DVector::from_fn(n, |_, _| f64::std_normal(&mut rng));
        let x = DMatrix::from_fn(n, 1, |_, _| f64::std_normal(&mut rng));
        let z = DMatrix::from_fn(n, p, |_, _| f64::std_normal(&mut rng));
        Dataset::new(y, x, z, Family::Gaussian, vec![Family::Gaussian], vec![false; p]).unwrap()
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema(fam: Family) -> Schema {
        serde_json::from_str(&format!(
            r#"{{"outcome": {{"column": "y"}}, "treatments": [{{"column": "x", "family": "{}"}}], "pool": ["z1"]}}"#,
            serde_json::to_value(fam).unwrap().as_str().unwrap()
        ))
        .unwrap()
    }

    #[test]
    fn ingest_smallest_input() {
        // n = 3 = l + p + 1 would be too small; four rows is the minimum here.
        let f = write("y,x,z1\n1,0.5,2\n2,0.1,1\n3,0.9,5\n0,0.3,3\n");
        let d: Dataset<f64> = ingest_csv(f.path(), &schema(Family::Gaussian)).unwrap();
        assert_eq!((d.n(), d.l(), d.p()), (4, 1, 1));
        let f3 = write("y,x,z1\n1,0.5,2\n2,0.1,1\n3,0.9,5\n");
        assert!(ingest_csv::<f64>(f3.path(), &schema(Family::Gaussian)).is_err());
    }

    #[test]
    fn ingest_rejects_family_violation_and_bad_cells() {
        let f = write("y,x,z1\n1,1.2,2\n2,0.1,1\n3,0.9,5\n0,0.3,3\n");
        let e = ingest_csv::<f64>(f.path(), &schema(Family::BetaLogistic)).unwrap_err();
        assert!(e.to_string().contains("family violation"), "{e}");
        let f = write("y,x,z1\n1,-1,2\n2,1,1\n3,2,5\n0,0,3\n");
        assert!(matches!(
            ingest_csv::<f64>(f.path(), &schema(Family::PoissonLogNormal)),
            Err(Error::FamilyViolation { .. })
        ));
        let f = write("y,x,z1\n1,a,2\n2,1,1\n3,2,5\n0,0,3\n");
        assert!(matches!(
            ingest_csv::<f64>(f.path(), &schema(Family::Gaussian)),
            Err(Error::NonNumeric { .. })
        ));
        let f = write("y,x,z1\n1,,2\n2,1,1\n3,2,5\n0,0,3\n");
        assert!(matches!(
            ingest_csv::<f64>(f.path(), &schema(Family::Gaussian)),
            Err(Error::NonNumeric { .. })
        ));
    }

    #[test]
    fn ingest_missing_column_names_it() {
        let f = write("y,x,zz\n1,1,2\n2,1,1\n3,2,5\n0,0,3\n");
        let e = ingest_csv::<f64>(f.path(), &schema(Family::Gaussian)).unwrap_err();
        assert!(matches!(&e, Error::MissingColumn(c) if c == "z1"));
    }

    #[test]
    fn duplicate_pool_column_is_rank_deficient() {
        let f = write("y,x,z1,z2\n1,1,2,2\n2,1,1,1\n3,2,5,5\n0,0,3,3\n4,1,1,1\n5,2,2,2\n");
        let mut s = schema(Family::Gaussian);
        s.pool.push(PoolColumn {
            column: "z2".into(),
            fixed_instrument: false,
        });
        let e = ingest_csv::<f64>(f.path(), &s).unwrap_err();
        assert!(e.to_string().contains("rank-deficient full design"), "{e}");
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let d = toy(20, 3, 9);
        let f = tempfile::NamedTempFile::new().unwrap();
        d.write_csv(f.path()).unwrap();
        let back: Dataset<f64> = ingest_csv(f.path(), &Schema::for_dataset(&d)).unwrap();
        assert_eq!(back, d);
        let d32 = Dataset::<f32>::new(
            d.y().map(|v| v as f32),
            d.x().map(|v| v as f32),
            d.z().map(|v| v as f32),
            Family::Gaussian,
            vec![Family::Gaussian],
            vec![false; 3],
        )
        .unwrap();
        d32.write_csv(f.path()).unwrap();
        let back: Dataset<f32> = ingest_csv(f.path(), &Schema::for_dataset(&d32)).unwrap();
        assert_eq!(back, d32);
    }

    #[test]
    fn centering_examples() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 2.0]);
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 3.0, 1.0, 2.0]);
        let z = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 2.0, 0.5]);
        let d = Dataset::new(
            y,
            x.clone(),
            z,
            Family::Gaussian,
            vec![Family::PoissonLogNormal],
            vec![false],
        )
        .unwrap();
        let (c, rec) = center_gaussian_columns(&d);
        assert_eq!(c.y().as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(rec.y.mean, 2.0);
        assert_eq!(c.x(), &x);
        let (c2, rec2) = center_gaussian_columns(&c);
        assert_eq!(c2, c);
        assert_eq!(rec2.y.mean, 0.0);
    }

    #[test]
    fn standardize_scales_and_records() {
        let d = toy(50, 2, 3);
        let (s, rec) = standardize(&d);
        for col in [s.y().clone_owned(), s.x().column(0).into_owned(), s.z().column(1).into_owned()] {
            let (m, sd) = mean_sd(col.iter().copied());
            assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        }
        let back = rec.apply(&d).unwrap();
        assert_eq!(back, s);
        assert!((rec.tau_to_original(0, 1.0) - rec.y.scale / rec.x[0].scale).abs() < 1e-15);
    }

    #[test]
    fn design_matrix_examples() {
        let d = toy(10, 2, 4);
        let (u, v) = design_matrices(&d, &ModelPair::empty(2)).unwrap();
        assert_eq!((u.ncols(), v.ncols()), (2, 1));
        let mp = ModelPair {
            outcome: vec![true, false],
            treatment: vec![false, true],
        };
        let (u, v) = design_matrices(&d, &mp).unwrap();
        assert_eq!(u.column(2), d.z().column(0));
        assert_eq!(v.column(1), d.z().column(1));
        assert_eq!(u.column(1), d.x().column(0));
        assert!(v.column(0).iter().all(|&c| c == 1.0));

        let masked = Dataset::new(
            d.y().clone(),
            d.x().clone(),
            d.z().clone(),
            Family::Gaussian,
            vec![Family::Gaussian],
            vec![true, false],
        )
        .unwrap();
        assert!(design_matrices(&masked, &mp).is_err());
    }

    #[test]
    fn bitmask_round_trip() {
        let v = vec![true, false, false, true];
        assert_eq!(bitmask(&v), "1001");
        assert_eq!(parse_bitmask("1001").unwrap(), v);
        assert!(parse_bitmask("10x").is_err());
    }

    fn check_counts(d: &Dataset<f64>, mp: &ModelPair) {
        let (u, v) = design_matrices(d, mp).unwrap();
        assert_eq!(u.ncols(), 1 + d.l() + mp.outcome_size());
        assert_eq!(v.ncols(), 1 + mp.treatment_size());
    }

    #[test]
    fn design_column_counts_exhaustive_small_p() {
        for p in 1..=4 {
            let d = toy(20, p, p as u64);
            for lm in 0..(1u32 << p) {
                for mm in 0..(1u32 << p) {
                    let mp = ModelPair {
                        outcome: (0..p).map(|j| lm >> j & 1 == 1).collect(),
                        treatment: (0..p).map(|j| mm >> j & 1 == 1).collect(),
                    };
                    check_counts(&d, &mp);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn design_column_counts_random(p in 1usize..=12, bits in proptest::collection::vec(any::<(bool, bool)>(), 12)) {
            let d = toy(40, p, 11);
            let mp = ModelPair {
                outcome: bits[..p].iter().map(|b| b.0).collect(),
                treatment: bits[..p].iter().map(|b| b.1).collect(),
            };
            check_counts(&d, &mp);
        }

        #[test]
        fn centering_idempotent(seed in 0u64..1000) {
            let d = toy(15, 2, seed);
            let (c, _) = center_gaussian_columns(&d);
            let (c2, rec) = center_gaussian_columns(&c);
            prop_assert!(rec.y.mean.abs() < 1e-12);
            prop_assert!((c2.y() - c.y()).amax() < 1e-12);
            prop_assert_eq!(c.z(), d.z());
        }
    }
}
