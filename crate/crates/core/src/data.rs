//! Tabular classification datasets: loading, splitting, imputation, encoding
//! for the network, and the discrete view used by rule generation.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeKind {
    Continuous { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, AttributeKind::Continuous { .. })
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            AttributeKind::Categorical { categories } => Some(categories),
            AttributeKind::Continuous { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Cat(usize),
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub values: Vec<Value>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub classes: Vec<String>,
    pub patterns: Vec<Pattern>,
}

/// Sidecar description of a CSV file.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct Schema {
    pub name: String,
    pub classes: Vec<String>,
    #[serde(default)]
    pub missing: Option<String>,
    #[serde(default)]
    pub header: bool,
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeSpecKind,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeSpecKind {
    Continuous,
    Categorical,
}

impl Schema {
    pub fn from_toml(text: &str) -> Result<Schema> {
        let schema: Schema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Schema> {
        Schema::from_toml(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Schema("at least two classes are required".into()));
        }
        if has_duplicates(&self.classes) {
            return Err(Error::Schema("duplicate class name".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::Schema("no attributes".into()));
        }
        for a in &self.attributes {
            match a.kind {
                AttributeSpecKind::Categorical => {
                    if a.categories.is_empty() {
                        return Err(Error::Schema(format!("{}: empty category list", a.name)));
                    }
                    if has_duplicates(&a.categories) {
                        return Err(Error::Schema(format!("{}: duplicate category", a.name)));
                    }
                }
                AttributeSpecKind::Continuous => {
                    if let (Some(lo), Some(hi)) = (a.min, a.max) {
                        if lo > hi {
                            return Err(Error::Schema(format!("{}: min > max", a.name)));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn has_duplicates(items: &[String]) -> bool {
    let mut seen = std::collections::HashSet::new();
    items.iter().any(|s| !seen.insert(s.as_str()))
}

/// Reads comma-separated rows (last column = class) against `schema`.
pub fn load_dataset<R: Read>(source: R, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let class_index: HashMap<&str, usize> = schema
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let arity = schema.attributes.len() + 1;

    let mut patterns = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != arity {
            return Err(Error::Row {
                row,
                message: format!("expected {arity} fields, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(arity - 1);
        for (field, spec) in record.iter().zip(&schema.attributes) {
            if schema.missing.as_deref() == Some(field) {
                values.push(Value::Missing);
                continue;
            }
            let value = match spec.kind {
                AttributeSpecKind::Categorical => {
                    let idx = spec
                        .categories
                        .iter()
                        .position(|c| c == field)
                        .ok_or_else(|| Error::Row {
                            row,
                            message: format!("unknown category {field:?} for {}", spec.name),
                        })?;
                    Value::Cat(idx)
                }
                AttributeSpecKind::Continuous => {
                    let x: f64 = field.parse().map_err(|_| Error::Row {
                        row,
                        message: format!("malformed number {field:?} for {}", spec.name),
                    })?;
                    if !x.is_finite()
                        || spec.min.is_some_and(|lo| x < lo)
                        || spec.max.is_some_and(|hi| x > hi)
                    {
                        return Err(Error::Row {
                            row,
                            message: format!("{x} outside the domain of {}", spec.name),
                        });
                    }
                    Value::Num(x)
                }
            };
            values.push(value);
        }
        let label_field = &record[arity - 1];
        let label = *class_index.get(label_field).ok_or_else(|| Error::Row {
            row,
            message: format!("unknown class label {label_field:?}"),
        })?;
        patterns.push(Pattern { values, label });
    }

    if patterns.is_empty() {
        return Err(Error::Empty);
    }

    let attributes = schema
        .attributes
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let kind = match spec.kind {
                AttributeSpecKind::Categorical => AttributeKind::Categorical {
                    categories: spec.categories.clone(),
                },
                AttributeSpecKind::Continuous => {
                    let observed = patterns.iter().filter_map(|p| match p.values[j] {
                        Value::Num(x) => Some(x),
                        _ => None,
                    });
                    let (lo, hi) = observed
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                            (lo.min(x), hi.max(x))
                        });
                    let (lo, hi) = if lo > hi { (0.0, 0.0) } else { (lo, hi) };
                    AttributeKind::Continuous {
                        min: spec.min.unwrap_or(lo),
                        max: spec.max.unwrap_or(hi),
                    }
                }
            };
            Attribute {
                name: spec.name.clone(),
                kind,
            }
        })
        .collect();

    Ok(Dataset {
        name: schema.name.clone(),
        attributes,
        classes: schema.classes.clone(),
        patterns,
    })
}

pub fn load_dataset_files(
    csv_path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let schema = Schema::from_path(schema_path)?;
    let file = fs::File::open(csv_path)?;
    load_dataset(file, &schema)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Same schema, different patterns.
    pub fn with_patterns(&self, patterns: Vec<Pattern>) -> Dataset {
        Dataset {
            name: self.name.clone(),
            attributes: self.attributes.clone(),
            classes: self.classes.clone(),
            patterns,
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.patterns.iter().map(|p| p.label).collect()
    }

    /// Most frequent label, ties to the lower index.
    pub fn majority_class(&self) -> usize {
        let mut counts = vec![0usize; self.class_count()];
        for p in &self.patterns {
            counts[p.label] += 1;
        }
        argmax_first(&counts)
    }

    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut patterns = self.patterns.clone();
        patterns.extend(other.patterns.iter().cloned());
        self.with_patterns(patterns)
    }
}

pub(crate) fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub test: usize,
    /// Share of the train block moved (from its tail) into validation.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

fn default_validation_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl Split {
    /// Train and validation together, in file order.
    pub fn train_block(&self) -> Dataset {
        self.train.concat(&self.validation)
    }
}

/// Splits in file order: the first `spec.train` rows are the train block, the
/// next `spec.test` rows the test set.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let requested = spec.train + spec.test;
    if requested > ds.len() {
        return Err(Error::SplitTooLarge {
            requested,
            available: ds.len(),
        });
    }
    if !(0.0..1.0).contains(&spec.validation_fraction) {
        return Err(Error::Config(format!(
            "validation fraction {} outside [0, 1)",
            spec.validation_fraction
        )));
    }
    let n_valid = (spec.train as f64 * spec.validation_fraction).round() as usize;
    let n_train = spec.train - n_valid;
    let rows = &ds.patterns;
    Ok(Split {
        train: ds.with_patterns(rows[..n_train].to_vec()),
        validation: ds.with_patterns(rows[n_train..spec.train].to_vec()),
        test: ds.with_patterns(rows[spec.train..requested].to_vec()),
    })
}

/// Fills missing values with the train-split median (continuous) or mode
/// (categorical, ties to the lower category index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    fill: Vec<Value>,
}

impl Imputer {
    pub fn fit(train: &Dataset) -> Imputer {
        let fill = train
            .attributes
            .iter()
            .enumerate()
            .map(|(j, attr)| match &attr.kind {
                AttributeKind::Continuous { min, .. } => {
                    let mut xs: Vec<f64> = train
                        .patterns
                        .iter()
                        .filter_map(|p| match p.values[j] {
                            Value::Num(x) => Some(x),
                            _ => None,
                        })
                        .collect();
                    if xs.is_empty() {
                        return Value::Num(*min);
                    }
                    xs.sort_by(f64::total_cmp);
                    let mid = xs.len() / 2;
                    let median = if xs.len() % 2 == 1 {
                        xs[mid]
                    } else {
                        0.5 * (xs[mid - 1] + xs[mid])
                    };
                    Value::Num(median)
                }
                AttributeKind::Categorical { categories } => {
                    let mut counts = vec![0usize; categories.len()];
                    for p in &train.patterns {
                        if let Value::Cat(c) = p.values[j] {
                            counts[c] += 1;
                        }
                    }
                    Value::Cat(argmax_first(&counts))
                }
            })
            .collect();
        Imputer { fill }
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let patterns = ds
            .patterns
            .iter()
            .map(|p| Pattern {
                values: p
                    .values
                    .iter()
                    .zip(&self.fill)
                    .map(|(v, fill)| if *v == Value::Missing { *fill } else { *v })
                    .collect(),
                label: p.label,
            })
            .collect();
        ds.with_patterns(patterns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InputSlot {
    /// Scaled continuous attribute.
    Scaled { attribute: usize },
    /// One component of a categorical attribute's one-hot block.
    OneHot { attribute: usize, category: usize },
}

impl InputSlot {
    pub fn attribute(&self) -> usize {
        match *self {
            InputSlot::Scaled { attribute } | InputSlot::OneHot { attribute, .. } => attribute,
        }
    }
}

/// Maps raw patterns to network input and target vectors. Continuous
/// attributes are scaled to [0, 1] with train-split statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub slots: Vec<InputSlot>,
    ranges: Vec<Option<(f64, f64)>>,
    classes: usize,
}

impl Encoder {
    pub fn fit(train: &Dataset) -> Encoder {
        let mut slots = Vec::new();
        let mut ranges = Vec::new();
        for (j, attr) in train.attributes.iter().enumerate() {
            match &attr.kind {
                AttributeKind::Continuous { min, max } => {
                    slots.push(InputSlot::Scaled { attribute: j });
                    let (lo, hi) = train
                        .patterns
                        .iter()
                        .filter_map(|p| match p.values[j] {
                            Value::Num(x) => Some(x),
                            _ => None,
                        })
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                            (lo.min(x), hi.max(x))
                        });
                    ranges.push(Some(if lo <= hi { (lo, hi) } else { (*min, *max) }));
                }
                AttributeKind::Categorical { categories } => {
                    for c in 0..categories.len() {
                        slots.push(InputSlot::OneHot {
                            attribute: j,
                            category: c,
                        });
                    }
                    ranges.push(None);
                }
            }
        }
        Encoder {
            slots,
            ranges,
            classes: train.class_count(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.slots.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn scale(&self, attribute: usize, x: f64) -> f64 {
        let (lo, hi) = self.ranges[attribute].expect("continuous attribute");
        if hi > lo {
            (x - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn unscale(&self, attribute: usize, y: f64) -> f64 {
        let (lo, hi) = self.ranges[attribute].expect("continuous attribute");
        lo + y * (hi - lo)
    }

    /// Panics on `Value::Missing`; impute first.
    pub fn encode_input(&self, p: &Pattern) -> Vec<f64> {
        self.slots
            .iter()
            .map(|slot| match *slot {
                InputSlot::Scaled { attribute } => match p.values[attribute] {
                    Value::Num(x) => self.scale(attribute, x),
                    v => panic!("attribute {attribute}: expected number, got {v:?}"),
                },
                InputSlot::OneHot {
                    attribute,
                    category,
                } => match p.values[attribute] {
                    Value::Cat(c) => f64::from(u8::from(c == category)),
                    v => panic!("attribute {attribute}: expected category, got {v:?}"),
                },
            })
            .collect()
    }

    pub fn encode_target(&self, label: usize) -> Vec<f64> {
        (0..self.classes)
            .map(|p| f64::from(u8::from(p == label)))
            .collect()
    }

    pub fn encode(&self, p: &Pattern) -> (Vec<f64>, Vec<f64>) {
        (self.encode_input(p), self.encode_target(p.label))
    }

    pub fn encode_set(&self, ds: &Dataset) -> EncodedSet {
        let (inputs, targets) = ds.patterns.iter().map(|p| self.encode(p)).unzip();
        EncodedSet {
            inputs,
            targets,
            labels: ds.labels(),
        }
    }

    /// Recovers a category from its one-hot block (largest component wins).
    pub fn decode_category(&self, attribute: usize, input: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &x) in self.slots.iter().zip(input) {
            if let InputSlot::OneHot {
                attribute: a,
                category,
            } = *slot
            {
                if a == attribute && best.is_none_or(|(_, bx)| x > bx) {
                    best = Some((category, x));
                }
            }
        }
        best.map(|(c, _)| c)
    }
}

/// Network-ready patterns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutPolicy {
    /// Upper bound on intervals per continuous attribute.
    pub max_intervals: usize,
}

impl Default for CutPolicy {
    fn default() -> Self {
        CutPolicy { max_intervals: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeBins {
    /// Ordered cut points; interval index = number of cuts strictly below x.
    Cuts(Vec<f64>),
    Identity {
        categories: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationScheme {
    pub bins: Vec<AttributeBins>,
}

impl DiscretizationScheme {
    pub fn arity(&self, attribute: usize) -> usize {
        match &self.bins[attribute] {
            AttributeBins::Cuts(cuts) => cuts.len() + 1,
            AttributeBins::Identity { categories } => *categories,
        }
    }

    pub fn discretize(&self, attribute: usize, value: Value) -> usize {
        match (&self.bins[attribute], value) {
            (AttributeBins::Cuts(cuts), Value::Num(x)) => cuts.iter().filter(|&&c| x > c).count(),
            (AttributeBins::Identity { .. }, Value::Cat(c)) => c,
            (_, v) => panic!("attribute {attribute}: cannot discretize {v:?}"),
        }
    }

    /// Interval index (continuous) or category index per attribute.
    pub fn view(&self, p: &Pattern) -> Vec<usize> {
        p.values
            .iter()
            .enumerate()
            .map(|(j, &v)| self.discretize(j, v))
            .collect()
    }
}

/// Supervised cut points: the first cut of an attribute is the
/// class-entropy-minimizing boundary (taken whenever it reduces entropy);
/// further cuts, up to `policy.max_intervals` intervals, must also pass the
/// minimum-description-length test.
pub fn discretize_inputs(train: &Dataset, policy: CutPolicy) -> Result<DiscretizationScheme> {
    if train.is_empty() {
        return Err(Error::Empty);
    }
    let classes = train.class_count();
    let bins = train
        .attributes
        .iter()
        .enumerate()
        .map(|(j, attr)| match &attr.kind {
            AttributeKind::Categorical { categories } => AttributeBins::Identity {
                categories: categories.len(),
            },
            AttributeKind::Continuous { .. } => {
                let mut points: Vec<(f64, usize)> = train
                    .patterns
                    .iter()
                    .filter_map(|p| match p.values[j] {
                        Value::Num(x) => Some((x, p.label)),
                        _ => None,
                    })
                    .collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                AttributeBins::Cuts(entropy_cuts(&points, classes, policy.max_intervals))
            }
        })
        .collect();
    Ok(DiscretizationScheme { bins })
}

pub(crate) fn class_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

struct CutCandidate {
    /// Index of the first point on the right side.
    split: usize,
    value: f64,
    gain: f64,
    mdl_ok: bool,
}

/// Best binary cut of a sorted segment, if any (None for constant segments).
fn best_cut(points: &[(f64, usize)], classes: usize) -> Option<CutCandidate> {
    let n = points.len();
    let mut total = vec![0usize; classes];
    for &(_, y) in points {
        total[y] += 1;
    }
    let whole = class_entropy(&total);
    let mut left = vec![0usize; classes];
    let mut best: Option<(usize, f64)> = None;
    for i in 1..n {
        left[points[i - 1].1] += 1;
        if points[i].0 == points[i - 1].0 {
            continue;
        }
        let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let weighted =
            (i as f64 * class_entropy(&left) + (n - i) as f64 * class_entropy(&right)) / n as f64;
        if best.is_none_or(|(_, w)| weighted < w - 1e-12) {
            best = Some((i, weighted));
        }
    }
    let (split, weighted) = best?;
    let gain = whole - weighted;

    let (l, r) = points.split_at(split);
    let count = |seg: &[(f64, usize)]| {
        let mut c = vec![0usize; classes];
        for &(_, y) in seg {
            c[y] += 1;
        }
        c
    };
    let (lc, rc) = (count(l), count(r));
    let present = |c: &[usize]| c.iter().filter(|&&x| x > 0).count() as f64;
    let delta = (3f64.powf(present(&total)) - 2.0).log2()
        - (present(&total) * whole
            - present(&lc) * class_entropy(&lc)
            - present(&rc) * class_entropy(&rc));
    let nf = n as f64;
    let mdl_ok = gain > ((nf - 1.0).log2() + delta) / nf;

    Some(CutCandidate {
        split,
        value: 0.5 * (points[split - 1].0 + points[split].0),
        gain,
        mdl_ok,
    })
}

fn entropy_cuts(points: &[(f64, usize)], classes: usize, max_intervals: usize) -> Vec<f64> {
    if max_intervals < 2 || points.is_empty() {
        return Vec::new();
    }
    let first = match best_cut(points, classes) {
        Some(c) if c.gain > 1e-12 => c,
        _ => return Vec::new(),
    };
    // Segments still eligible for refinement, with their offset into `points`.
    let mut cuts = vec![first.value];
    let mut segments = vec![(0, first.split), (first.split, points.len())];
    while cuts.len() + 1 < max_intervals {
        let mut chosen: Option<(usize, CutCandidate)> = None;
        for (k, &(lo, hi)) in segments.iter().enumerate() {
            if let Some(c) = best_cut(&points[lo..hi], classes) {
                let better = chosen.as_ref().is_none_or(|(_, b)| c.gain > b.gain);
                if c.mdl_ok && c.gain > 1e-12 && better {
                    chosen = Some((k, c));
                }
            }
        }
        let Some((k, c)) = chosen else { break };
        let (lo, hi) = segments.remove(k);
        segments.insert(k, (lo + c.split, hi));
        segments.insert(k, (lo, lo + c.split));
        cuts.push(c.value);
    }
    cuts.sort_by(f64::total_cmp);
    cuts
}
