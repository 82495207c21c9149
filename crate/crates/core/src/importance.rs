//! Variance-based feature importance learned from labeled data.
//!
//! For every feature `q`, rows that agree on all *other* features form a
//! measurement subgroup; only feature `q` varies inside it. The importance of
//! `q` is the sum over subgroups of the population variance of the objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Dataset, ParameterSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImportanceVector(Vec<f64>);

impl ImportanceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Importance("importance vector is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Importance(format!("importance value {} is not a finite non-negative number", v)));
        }
        Ok(ImportanceVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Selects the important features used as cluster keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<bool>", into = "Vec<bool>")]
pub struct ImportanceMask(Vec<bool>);

impl ImportanceMask {
    /// Rejects masks with no set bit or no clear bit.
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) || bits.iter().all(|&b| b) {
            return Err(Error::Importance(format!(
                "degenerate mask {:?}: at least one feature must be selected and one left out",
                bits.iter().map(|&b| b as u8).collect::<Vec<_>>()
            )));
        }
        Ok(ImportanceMask(bits))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl TryFrom<Vec<bool>> for ImportanceMask {
    type Error = Error;
    fn try_from(bits: Vec<bool>) -> Result<Self> {
        ImportanceMask::new(bits)
    }
}

impl From<ImportanceMask> for Vec<bool> {
    fn from(m: ImportanceMask) -> Self {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskRule {
    /// Features strictly above the median importance.
    #[default]
    Median,
    /// The `k` most important features, ties to the lower index.
    TopK(usize),
}

pub fn feature_importance(data: &Dataset, objective: &str) -> Result<ImportanceVector> {
    let j = data.objective_index(objective)?;
    if data.len() < 2 {
        return Err(Error::Importance(format!("importance needs at least 2 labeled rows, dataset has {}", data.len())));
    }
    let space = data.space();
    let mut out = Vec::with_capacity(space.dims());
    for q in 0..space.dims() {
        let stride = space.stride(q);
        // key: linear index with feature q zeroed out
        let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for (s, vals) in data.rows() {
            let key = space.index_of(s) - s.0[q] as u64 * stride;
            groups.entry(key).or_default().push(vals[j]);
        }
        let total: f64 = groups.values().filter(|g| g.len() >= 2).map(|g| population_variance(g)).sum();
        out.push(total);
    }
    ImportanceVector::new(out)
}

pub(crate) fn population_variance(xs: &[f64]) -> f64 {
    // shifted by the first value so constant groups give exactly zero
    let n = xs.len() as f64;
    let x0 = xs[0];
    let mean = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    xs.iter().map(|x| (x - x0 - mean) * (x - x0 - mean)).sum::<f64>() / n
}

pub fn importance_mask(importance: &ImportanceVector, rule: MaskRule) -> Result<ImportanceMask> {
    let v = importance.values();
    let c = v.len();
    match rule {
        MaskRule::Median => {
            let mut sorted = v.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = if c % 2 == 1 { sorted[c / 2] } else { (sorted[c / 2 - 1] + sorted[c / 2]) / 2.0 };
            let bits: Vec<bool> = v.iter().map(|&x| x > median).collect();
            ImportanceMask::new(bits).map_err(|_| {
                Error::Importance(format!(
                    "median rule selects {} of {} features because of ties; use a top_k rule instead",
                    v.iter().filter(|&&x| x > median).count(),
                    c
                ))
            })
        }
        MaskRule::TopK(k) => {
            if k == 0 || k >= c {
                return Err(Error::Importance(format!("top_k needs 1 <= k <= {}, got {}", c - 1, k)));
            }
            let mut order: Vec<usize> = (0..c).collect();
            order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
            let mut bits = vec![false; c];
            for &q in &order[..k] {
                bits[q] = true;
            }
            ImportanceMask::new(bits)
        }
    }
}

/// 1-based feature numbers from least to most important; ties keep the lower
/// feature number first.
pub fn importance_rank(importance: &ImportanceVector) -> Vec<usize> {
    let v = importance.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    order.into_iter().map(|q| q + 1).collect()
}

/// Normalizes each prior to unit sum (all-zero priors count as uniform) and
/// averages them entrywise.
pub fn aggregate_importance(priors: &[ImportanceVector]) -> Result<ImportanceVector> {
    let first = priors.first().ok_or_else(|| Error::Importance("no prior importance vectors to aggregate".into()))?;
    let c = first.len();
    let mut acc = vec![0.0; c];
    for p in priors {
        if p.len() != c {
            return Err(Error::Importance(format!(
                "prior importance vectors have different lengths ({} vs {})",
                c,
                p.len()
            )));
        }
        let total: f64 = p.values().iter().sum();
        for (a, &x) in acc.iter_mut().zip(p.values()) {
            *a += if total > 0.0 { x / total } else { 1.0 / c as f64 };
        }
    }
    let n = priors.len() as f64;
    ImportanceVector::new(acc.into_iter().map(|a| a / n).collect())
}

/// Renders `feature,importance,rank` rows; `rank` is the position in
/// [`importance_rank`] order (1 = least important).
pub fn render_importance_csv(space: &ParameterSpace, importance: &ImportanceVector) -> Result<String> {
    if importance.len() != space.dims() {
        return Err(Error::Importance(format!(
            "importance has {} entries, space has {} features",
            importance.len(),
            space.dims()
        )));
    }
    let mut pos = vec![0; importance.len()];
    for (r, q) in importance_rank(importance).into_iter().enumerate() {
        pos[q - 1] = r + 1;
    }
    let mut out = String::from("feature,importance,rank\n");
    for (q, f) in space.features().iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", f.name, importance.values()[q], pos[q]));
    }
    Ok(out)
}

/// Reads an importance CSV, matching rows to features by name. A `rank`
/// column, if present, is ignored.
pub fn parse_importance_csv(text: &str, space: &ParameterSpace) -> Result<ImportanceVector> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Importance(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Importance(format!("importance CSV lacks a `{}` column", name)))
    };
    let (fc, ic) = (col("feature")?, col("importance")?);
    let mut values = vec![None; space.dims()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Importance(format!("row {}: {}", i + 1, e)))?;
        let name = rec.get(fc).unwrap_or("");
        let q = space
            .feature_index(name)
            .ok_or_else(|| Error::Importance(format!("row {}: unknown feature `{}`", i + 1, name)))?;
        let v: f64 = rec
            .get(ic)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Importance(format!("row {}: importance is not a number", i + 1)))?;
        if values[q].replace(v).is_some() {
            return Err(Error::Importance(format!("row {}: feature `{}` listed twice", i + 1, name)));
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(q, v)| v.ok_or_else(|| Error::Importance(format!("feature `{}` missing", space.features()[q].name))))
        .collect::<Result<Vec<_>>>()?;
    ImportanceVector::new(values)
}
