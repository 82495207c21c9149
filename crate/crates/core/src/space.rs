//! Categorical parameter spaces, samples and tabulated datasets.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tunable flow parameter with a finite, ordered list of options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub options: Vec<String>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, options: impl IntoIterator<Item = impl Into<String>>) -> Self {
        FeatureSpec { name: name.into(), options: options.into_iter().map(Into::into).collect() }
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn option_index(&self, label: &str) -> Option<usize> {
        self.options.iter().position(|o| o == label)
    }
}

/// The Cartesian product of all feature option sets.
///
/// Samples are ordered lexicographically by their option-index vectors, with the
/// last feature varying fastest. That order is also the linear index order used
/// by [`ParameterSpace::index_of`] and [`ParameterSpace::sample_at`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpaceDoc", into = "SpaceDoc")]
pub struct ParameterSpace {
    features: Vec<FeatureSpec>,
    size: u64,
    // linear-index stride of each feature
    strides: Vec<u64>,
    // first one-hot column of each feature
    offsets: Vec<usize>,
    width: usize,
}

#[derive(Serialize, Deserialize)]
struct SpaceDoc {
    features: Vec<FeatureSpec>,
}

impl TryFrom<SpaceDoc> for ParameterSpace {
    type Error = Error;

    fn try_from(doc: SpaceDoc) -> Result<Self> {
        ParameterSpace::new(doc.features)
    }
}

impl From<ParameterSpace> for SpaceDoc {
    fn from(space: ParameterSpace) -> Self {
        SpaceDoc { features: space.features }
    }
}

impl ParameterSpace {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Space("a space needs at least one feature".into()));
        }
        let mut names = HashSet::new();
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Space(format!("duplicate feature name `{}`", f.name)));
            }
            if f.options.len() < 2 {
                return Err(Error::Space(format!(
                    "feature `{}` has {} option(s), at least 2 are required",
                    f.name,
                    f.options.len()
                )));
            }
            let mut labels = HashSet::new();
            for o in &f.options {
                if !labels.insert(o.as_str()) {
                    return Err(Error::Space(format!("feature `{}` lists option `{}` twice", f.name, o)));
                }
            }
        }

        let mut size: u64 = 1;
        for f in &features {
            size = size
                .checked_mul(f.options.len() as u64)
                .ok_or_else(|| Error::Space("space size overflows a 64-bit count".into()))?;
        }

        let mut strides = vec![1u64; features.len()];
        for q in (0..features.len().saturating_sub(1)).rev() {
            strides[q] = strides[q + 1] * features[q + 1].options.len() as u64;
        }
        let mut offsets = Vec::with_capacity(features.len());
        let mut width = 0;
        for f in &features {
            offsets.push(width);
            width += f.options.len();
        }

        Ok(ParameterSpace { features, size, strides, offsets, width })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    /// Number of features `c`.
    pub fn dims(&self) -> usize {
        self.features.len()
    }

    /// Option count of every feature, in feature order.
    pub fn option_counts(&self) -> Vec<usize> {
        self.features.iter().map(FeatureSpec::len).collect()
    }

    /// `|S|`, the product of all option counts.
    pub fn size(&self) -> u64 {
        self.size
    }

    /// Length of a one-hot encoded sample (sum of option counts).
    pub fn one_hot_width(&self) -> usize {
        self.width
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn validate(&self, s: &Sample) -> Result<()> {
        if s.0.len() != self.dims() {
            return Err(Error::Sample(format!("sample has {} entries, space has {} features", s.0.len(), self.dims())));
        }
        for (q, (&v, f)) in s.0.iter().zip(&self.features).enumerate() {
            if v as usize >= f.options.len() {
                return Err(Error::Sample(format!(
                    "option index {} out of range for feature {} (`{}`) with {} options",
                    v,
                    q,
                    f.name,
                    f.options.len()
                )));
            }
        }
        Ok(())
    }

    /// Linear (lexicographic) index of a valid sample.
    pub fn index_of(&self, s: &Sample) -> u64 {
        s.0.iter().zip(&self.strides).map(|(&v, &st)| v as u64 * st).sum()
    }

    pub fn stride(&self, feature: usize) -> u64 {
        self.strides[feature]
    }

    pub fn sample_at(&self, mut index: u64) -> Sample {
        debug_assert!(index < self.size);
        let mut out = vec![0u32; self.dims()];
        for (q, &st) in self.strides.iter().enumerate() {
            out[q] = (index / st) as u32;
            index %= st;
        }
        Sample(out)
    }

    /// Lazily yields every sample once, in lexicographic order.
    pub fn enumerate(&self) -> SampleIter<'_> {
        SampleIter { space: self, next: Some(vec![0; self.dims()]) }
    }

    pub fn encode_one_hot(&self, s: &Sample) -> Result<Vec<f64>> {
        self.validate(s)?;
        let mut v = vec![0.0; self.width];
        for col in self.active_columns(s) {
            v[col as usize] = 1.0;
        }
        Ok(v)
    }

    /// The one-hot columns that are set for `s`: one per feature, ascending.
    pub fn active_columns(&self, s: &Sample) -> Vec<u32> {
        s.0.iter().zip(&self.offsets).map(|(&v, &off)| (off + v as usize) as u32).collect()
    }

    pub fn fill_active_columns(&self, s: &Sample, out: &mut Vec<u32>) {
        out.clear();
        out.extend(s.0.iter().zip(&self.offsets).map(|(&v, &off)| (off + v as usize) as u32));
    }

    /// Column range `[start, end)` of a feature's one-hot block.
    pub fn column_block(&self, feature: usize) -> std::ops::Range<usize> {
        let start = self.offsets[feature];
        start..start + self.features[feature].options.len()
    }

    pub fn decode_one_hot(&self, v: &[f64]) -> Result<Sample> {
        if v.len() != self.width {
            return Err(Error::Sample(format!("encoded vector has length {}, expected {}", v.len(), self.width)));
        }
        let mut out = Vec::with_capacity(self.dims());
        for q in 0..self.dims() {
            let block = &v[self.column_block(q)];
            let mut hot = block.iter().enumerate().filter(|(_, &x)| x != 0.0);
            match (hot.next(), hot.next()) {
                (Some((i, &1.0)), None) => out.push(i as u32),
                _ => return Err(Error::Sample(format!("block of feature {} is not a one-hot vector", q))),
            }
        }
        Ok(Sample(out))
    }

    /// Decodes ascending active columns (one per feature) back to a sample.
    pub fn sample_from_active(&self, cols: &[u32]) -> Sample {
        Sample(cols.iter().zip(&self.offsets).map(|(&c, &off)| c - off as u32).collect())
    }

    pub fn labels<'a>(&'a self, s: &'a Sample) -> impl Iterator<Item = &'a str> + 'a {
        s.0.iter().zip(&self.features).map(|(&v, f)| f.options[v as usize].as_str())
    }
}

/// Parses a space-definition JSON document:
/// `{"features":[{"name":"...","options":["...", ...]}, ...]}`.
pub fn parse_space(config_text: &str) -> Result<ParameterSpace> {
    let doc: SpaceDoc = serde_json::from_str(config_text)
        .map_err(|e| Error::Space(format!("malformed document at line {}, column {}: {}", e.line(), e.column(), e)))?;
    ParameterSpace::try_from(doc)
}

pub fn render_space(space: &ParameterSpace) -> String {
    serde_json::to_string_pretty(space).expect("space serializes")
}

pub fn space_size(space: &ParameterSpace) -> u64 {
    space.size()
}

/// A point in the space: one option index per feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sample(pub Vec<u32>);

impl Sample {
    pub fn new(indices: impl Into<Vec<u32>>) -> Self {
        Sample(indices.into())
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v)?;
        }
        write!(f, "]")
    }
}

pub struct SampleIter<'a> {
    space: &'a ParameterSpace,
    next: Option<Vec<u32>>,
}

impl Iterator for SampleIter<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        let mut q = succ.len();
        let mut carried = true;
        while carried && q > 0 {
            q -= 1;
            succ[q] += 1;
            if (succ[q] as usize) < self.space.features[q].options.len() {
                carried = false;
            } else {
                succ[q] = 0;
            }
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(Sample(cur))
    }
}

/// Optimization direction of one objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Sense {
    #[default]
    #[serde(rename = "min")]
    Minimize,
    #[serde(rename = "max")]
    Maximize,
}

impl Sense {
    /// Maps a value so that lower is always better.
    pub fn to_min(self, v: f64) -> f64 {
        match self {
            Sense::Minimize => v,
            Sense::Maximize => -v,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min" | "minimize" => Ok(Sense::Minimize),
            "max" | "maximize" => Ok(Sense::Maximize),
            other => Err(Error::Config(format!("unknown objective sense `{}` (expected min|max)", other))),
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        })
    }
}

/// Objective values keyed by sample, possibly covering the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    space: ParameterSpace,
    objective_names: Vec<String>,
    senses: Vec<Sense>,
    rows: BTreeMap<Sample, Vec<f64>>,
}

impl Dataset {
    pub fn new(space: ParameterSpace, objective_names: Vec<String>) -> Result<Self> {
        if objective_names.is_empty() {
            return Err(Error::Config("a dataset needs at least one objective".into()));
        }
        let mut seen = HashSet::new();
        for n in &objective_names {
            if !seen.insert(n.as_str()) || space.feature_index(n).is_some() {
                return Err(Error::Config(format!("objective name `{}` is not unique", n)));
            }
        }
        let senses = vec![Sense::Minimize; objective_names.len()];
        Ok(Dataset { space, objective_names, senses, rows: BTreeMap::new() })
    }

    pub fn with_senses(mut self, senses: Vec<Sense>) -> Result<Self> {
        if senses.len() != self.objective_names.len() {
            return Err(Error::Config(format!(
                "{} senses given for {} objectives",
                senses.len(),
                self.objective_names.len()
            )));
        }
        self.senses = senses;
        Ok(self)
    }

    pub fn insert(&mut self, s: Sample, values: Vec<f64>) -> Result<()> {
        self.space.validate(&s)?;
        if values.len() != self.objective_names.len() {
            return Err(Error::Sample(format!(
                "{} objective values given, dataset has {}",
                values.len(),
                self.objective_names.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Sample(format!("objective value {} is not finite", v)));
        }
        if self.rows.contains_key(&s) {
            return Err(Error::Sample(format!("duplicate sample {}", s)));
        }
        self.rows.insert(s, values);
        Ok(())
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn objective_names(&self) -> &[String] {
        &self.objective_names
    }

    pub fn senses(&self) -> &[Sense] {
        &self.senses
    }

    pub fn objective_index(&self, name: &str) -> Result<usize> {
        self.objective_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown objective `{}`", name)))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True iff every sample of the space has a row.
    pub fn is_complete(&self) -> bool {
        self.rows.len() as u64 == self.space.size()
    }

    pub fn get(&self, s: &Sample) -> Option<&[f64]> {
        self.rows.get(s).map(Vec::as_slice)
    }

    /// Rows in lexicographic sample order.
    pub fn rows(&self) -> impl Iterator<Item = (&Sample, &[f64])> {
        self.rows.iter().map(|(s, v)| (s, v.as_slice()))
    }

    /// One objective's values indexed by linear sample index. Requires a complete dataset.
    pub fn dense_column(&self, objective: usize) -> Result<Vec<f64>> {
        if !self.is_complete() {
            return Err(Error::Config("operation requires a complete dataset".into()));
        }
        // BTreeMap order is the linear-index order.
        Ok(self.rows.values().map(|v| v[objective]).collect())
    }

    /// Renders the dataset in the CSV layout accepted by [`load_table`].
    pub fn render_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header: Vec<&str> = self
            .space
            .features()
            .iter()
            .map(|f| f.name.as_str())
            .chain(self.objective_names.iter().map(String::as_str))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for (s, vals) in &self.rows {
            let mut rec: Vec<String> = self.space.labels(s).map(str::to_owned).collect();
            rec.extend(vals.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 labels")
    }
}

/// Loads a dataset CSV whose header lists the feature names (in space order)
/// followed by one or more objective names.
///
/// Row numbers in errors count data rows from 1.
pub fn load_table(csv_text: &str, space: &ParameterSpace) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Table { row: 0, msg: format!("unreadable header: {}", e) })?.clone();
    let c = space.dims();
    if header.len() <= c {
        return Err(Error::Table {
            row: 0,
            msg: format!("header has {} columns, need {} features plus objectives", header.len(), c),
        });
    }
    for (q, f) in space.features().iter().enumerate() {
        if header[q] != f.name {
            return Err(Error::Table {
                row: 0,
                msg: format!("header column {} is `{}`, expected feature `{}`", q + 1, &header[q], f.name),
            });
        }
    }
    let objectives: Vec<String> = header.iter().skip(c).map(str::to_owned).collect();
    let mut data = Dataset::new(space.clone(), objectives).map_err(|e| Error::Table { row: 0, msg: e.to_string() })?;

    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Table { row, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Table { row, msg: format!("{} fields, expected {}", rec.len(), header.len()) });
        }
        let mut idx = Vec::with_capacity(c);
        for (q, f) in space.features().iter().enumerate() {
            let label = &rec[q];
            let o = f.option_index(label).ok_or_else(|| Error::Table {
                row,
                msg: format!("unknown option `{}` for feature `{}`", label, f.name),
            })?;
            idx.push(o as u32);
        }
        let mut vals = Vec::with_capacity(header.len() - c);
        for (j, field) in rec.iter().skip(c).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Table {
                row,
                msg: format!("objective `{}` value `{}` is not a number", data.objective_names[j], field),
            })?;
            if !v.is_finite() {
                return Err(Error::Table {
                    row,
                    msg: format!("objective `{}` value `{}` is not finite", data.objective_names[j], field),
                });
            }
            vals.push(v);
        }
        let s = Sample(idx);
        if data.rows.contains_key(&s) {
            return Err(Error::Table { row, msg: format!("duplicate sample {}", s) });
        }
        data.rows.insert(s, vals);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(c: usize) -> ParameterSpace {
        ParameterSpace::new((0..c).map(|q| FeatureSpec::new(format!("f{}", q), ["0", "1"])).collect()).unwrap()
    }

    fn counts(counts: &[usize]) -> ParameterSpace {
        ParameterSpace::new(
            counts
                .iter()
                .enumerate()
                .map(|(q, &n)| FeatureSpec::new(format!("f{}", q), (0..n).map(|o| o.to_string())))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parse_two_binary_features() {
        let s =
            parse_space(r#"{"features":[{"name":"a","options":["0","1"]},{"name":"b","options":["0","1"]}]}"#).unwrap();
        assert_eq!(s.dims(), 2);
        assert_eq!(space_size(&s), 4);
        assert_eq!(s.features()[1].name, "b");
    }

    #[test]
    fn parse_rejects_bad_documents() {
        let one = r#"{"features":[{"name":"a","options":["x"]}]}"#;
        assert!(matches!(parse_space(one), Err(Error::Space(m)) if m.contains("`a`")));
        let dup_feat = r#"{"features":[{"name":"a","options":["0","1"]},{"name":"a","options":["0","1"]}]}"#;
        assert!(parse_space(dup_feat).is_err());
        let dup_opt = r#"{"features":[{"name":"a","options":["0","0"]}]}"#;
        assert!(parse_space(dup_opt).is_err());
        let broken = "{\"features\":[\n{\"name\":\"a\",";
        assert!(matches!(parse_space(broken), Err(Error::Space(m)) if m.contains("line 2")));
        assert!(parse_space(r#"{"features":[]}"#).is_err());
    }

    #[test]
    fn sizes() {
        assert_eq!(counts(&[2, 2, 2, 3, 3, 3, 2, 2, 2]).size(), 1728);
        assert_eq!(counts(&[3, 3, 3, 2, 2, 2, 2, 2, 2]).size(), 1728);
        let big = [u16::MAX as usize; 5];
        let err = ParameterSpace::new(
            big.iter()
                .enumerate()
                .map(|(q, &n)| FeatureSpec::new(format!("f{}", q), (0..n).map(|o| o.to_string())))
                .collect(),
        );
        assert!(matches!(err, Err(Error::Space(m)) if m.contains("overflow")));
    }

    #[test]
    fn enumerate_is_lexicographic() {
        let s = binary(2);
        let all: Vec<Vec<u32>> = s.enumerate().map(|x| x.0).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        let big = counts(&[2, 2, 2, 3, 3, 3, 2, 2, 2]);
        let v: Vec<Sample> = big.enumerate().collect();
        assert_eq!(v.len(), 1728);
        assert!(v[0].0.iter().all(|&x| x == 0));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        for (i, smp) in v.iter().enumerate() {
            assert_eq!(big.index_of(smp), i as u64);
            assert_eq!(&big.sample_at(i as u64), smp);
        }
    }

    #[test]
    fn one_hot() {
        let s = binary(2);
        assert_eq!(s.encode_one_hot(&Sample::new([0, 1])).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        assert!(s.encode_one_hot(&Sample::new([0, 2])).is_err());
        assert!(s.decode_one_hot(&[1.0, 1.0, 0.0, 1.0]).is_err());

        let s23 = counts(&[2, 3]);
        let enc: Vec<Vec<f64>> = s23.enumerate().map(|x| s23.encode_one_hot(&x).unwrap()).collect();
        for (i, a) in enc.iter().enumerate() {
            assert_eq!(a.iter().sum::<f64>(), 2.0);
            for b in &enc[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    const TABLE: &str = "a,b,power\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n";

    #[test]
    fn load_complete_and_partial() {
        let s =
            ParameterSpace::new(vec![FeatureSpec::new("a", ["0", "1"]), FeatureSpec::new("b", ["0", "1"])]).unwrap();
        let d = load_table(TABLE, &s).unwrap();
        assert!(d.is_complete());
        assert_eq!(d.get(&Sample::new([1, 0])), Some(&[3.0][..]));

        let partial = load_table("a,b,power\n0,0,1\n0,1,2\n1,0,3\n", &s).unwrap();
        assert!(!partial.is_complete());
        assert_eq!(partial.len(), 3);
    }

    #[test]
    fn load_errors_name_the_row() {
        let s =
            ParameterSpace::new(vec![FeatureSpec::new("a", ["0", "1"]), FeatureSpec::new("b", ["0", "1"])]).unwrap();
        let bad_label = "a,b,power\n0,0,1\nyes,1,2\n";
        assert!(matches!(load_table(bad_label, &s), Err(Error::Table { row: 2, .. })));
        let dup = "a,b,power\n0,0,1\n0,0,2\n";
        assert!(matches!(load_table(dup, &s), Err(Error::Table { row: 2, .. })));
        let nan = "a,b,power\n0,0,abc\n";
        assert!(matches!(load_table(nan, &s), Err(Error::Table { row: 1, .. })));
        let missing = "a,b,power\n0,0\n";
        assert!(matches!(load_table(missing, &s), Err(Error::Table { row: 1, .. })));
        let wrong_header = "b,a,power\n";
        assert!(matches!(load_table(wrong_header, &s), Err(Error::Table { row: 0, .. })));
    }

    #[test]
    fn labels_are_verbatim() {
        let s = ParameterSpace::new(vec![
            FeatureSpec::new("effort", ["low", "high"]),
            FeatureSpec::new("ratio", ["1.0", "1"]),
        ])
        .unwrap();
        let d = load_table("effort,ratio,area\nhigh,1,10.5\nlow,1.0,3\n", &s).unwrap();
        assert_eq!(d.get(&Sample::new([1, 1])), Some(&[10.5][..]));
        assert_eq!(d.get(&Sample::new([0, 0])), Some(&[3.0][..]));
    }
}
