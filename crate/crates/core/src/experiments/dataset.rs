use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::proximal::{BaseKind, LocalLossSpec};

/// Column layout of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// `z,x1,...,xn,y` with `y` in `{0, 1}`.
    Logistic { n: usize },
    /// `z,y` with `y` in `1..=n`.
    Discrete { n: usize },
}

impl Schema {
    pub fn n(&self) -> usize {
        match *self {
            Schema::Logistic { n } | Schema::Discrete { n } => n,
        }
    }

    pub fn base_kind(&self) -> BaseKind {
        match self {
            Schema::Logistic { .. } => BaseKind::Logistic,
            Schema::Discrete { .. } => BaseKind::DiscreteDistribution,
        }
    }
}

/// One observation. `z` is the 1-based stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub z: usize,
    pub x: Option<DVector<f64>>,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    /// Number of strata `K`.
    pub num_strata: usize,
    pub records: Vec<Record>,
    /// One assignment per record; everything starts in the training split.
    pub splits: Vec<Split>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(schema: Schema, num_strata: usize, records: Vec<Record>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            check_record(schema, num_strata, r).map_err(|m| Error::invalid(format!("record {i}: {m}")))?;
        }
        Ok(Self {
            schema,
            num_strata,
            splits: vec![Split::Train; records.len()],
            records,
            provenance: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == split)
            .map(|(r, _)| r)
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    /// Per-stratum losses built from the records of one split.
    pub fn local_losses(&self, split: Split) -> Vec<LocalLossSpec> {
        let n = self.schema.n();
        let k = self.num_strata;
        match self.schema {
            Schema::Logistic { .. } => {
                let mut rows: Vec<Vec<&Record>> = vec![Vec::new(); k];
                for r in self.records_in(split) {
                    rows[r.z - 1].push(r);
                }
                rows.into_iter()
                    .map(|rs| {
                        let features = DMatrix::from_fn(rs.len(), n, |i, j| rs[i].x.as_ref().unwrap()[j]);
                        let labels = rs.iter().map(|r| r.y == 1).collect();
                        LocalLossSpec::Logistic { features, labels }
                    })
                    .collect()
            }
            Schema::Discrete { .. } => {
                let mut counts = vec![vec![0u64; n]; k];
                for r in self.records_in(split) {
                    counts[r.z - 1][r.y - 1] += 1;
                }
                counts
                    .into_iter()
                    .map(|counts| LocalLossSpec::DiscreteDistribution { counts })
                    .collect()
            }
        }
    }

    /// Writes the records as CSV (header `z,x1..xn,y` or `z,y`).
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| Error::Data {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header(self.schema))?;
        for r in &self.records {
            let mut row = vec![r.z.to_string()];
            if let Some(x) = &r.x {
                row.extend(x.iter().map(|v| v.to_string()));
            }
            row.push(r.y.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Seeded uniform assignment of every record to train/validation/test
    /// with the given probabilities.
    pub fn split(&mut self, fractions: (f64, f64, f64), seed: u64) -> Result<()> {
        self.splits = assign_splits(self.records.len(), fractions, seed)?;
        Ok(())
    }
}

fn header(schema: Schema) -> Vec<String> {
    let mut h = vec!["z".to_string()];
    if let Schema::Logistic { n } = schema {
        h.extend((1..=n).map(|i| format!("x{i}")));
    }
    h.push("y".to_string());
    h
}

fn check_record(schema: Schema, k: usize, r: &Record) -> std::result::Result<(), String> {
    if r.z == 0 || r.z > k {
        return Err(format!("z = {} outside 1..={k}", r.z));
    }
    match schema {
        Schema::Logistic { n } => {
            match &r.x {
                Some(x) if x.len() == n => {}
                _ => return Err(format!("expected {n} features")),
            }
            if r.y > 1 {
                return Err(format!("label y = {} is not 0 or 1", r.y));
            }
        }
        Schema::Discrete { n } => {
            if r.y == 0 || r.y > n {
                return Err(format!("outcome y = {} outside 1..={n}", r.y));
            }
        }
    }
    Ok(())
}

pub fn assign_splits(len: usize, fractions: (f64, f64, f64), seed: u64) -> Result<Vec<Split>> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(f.is_finite() && *f >= 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must be nonnegative and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len)
        .map(|_| {
            let u: f64 = rng.random();
            if u < a {
                Split::Train
            } else if u < a + b {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect())
}

/// Reads a dataset CSV. Every malformed row is reported with its 1-based
/// line number (the header is line 1).
pub fn load_csv(path: impl AsRef<Path>, schema: Schema, num_strata: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let data_err = |message: String| Error::Data {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let expected = header(schema);
    let got: Vec<String> = reader
        .headers()
        .map_err(|e| data_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != expected {
        return Err(data_err(format!(
            "line 1: expected header {:?}, found {:?}",
            expected.join(","),
            got.join(",")
        )));
    }

    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        match parse_row(schema, num_strata, &row) {
            Ok(r) => records.push(r),
            Err(m) => problems.push(format!("line {line}: {m}")),
        }
    }
    if !problems.is_empty() {
        return Err(data_err(problems.join("; ")));
    }
    let mut data = Dataset::new(schema, num_strata, records)?;
    data.provenance = path.display().to_string();
    Ok(data)
}

fn parse_integer(cell: &str, name: &str) -> std::result::Result<usize, String> {
    cell.parse::<usize>()
        .map_err(|_| format!("{name} = {cell:?} is not a nonnegative integer"))
}

fn parse_row(schema: Schema, k: usize, row: &csv::StringRecord) -> std::result::Result<Record, String> {
    let width = header(schema).len();
    if row.len() != width {
        return Err(format!("expected {width} columns, found {}", row.len()));
    }
    let z = parse_integer(&row[0], "z")?;
    let y = parse_integer(&row[width - 1], "y")?;
    let x = match schema {
        Schema::Logistic { n } => {
            let mut x = DVector::zeros(n);
            for j in 0..n {
                x[j] = row[j + 1]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("x{} = {:?} is not a number", j + 1, &row[j + 1]))?;
            }
            Some(x)
        }
        Schema::Discrete { .. } => None,
    };
    let r = Record { z, x, y };
    check_record(schema, k, &r)?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows() {
        let f = write("z,x1,x2,y\n1,0.5,1,1\n2,-1,2.5,0\n3,0,0,1\n");
        let d = load_csv(f.path(), Schema::Logistic { n: 2 }, 3).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.records[1].x.as_ref().unwrap()[1], 2.5);
    }

    #[test]
    fn stratum_out_of_range_names_line() {
        let f = write("z,y\n4,1\n");
        let err = load_csv(f.path(), Schema::Discrete { n: 3 }, 3)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn reports_every_bad_line() {
        let f = write("z,y\n1,1\n1,abc\n2,9\n1\n");
        let err = load_csv(f.path(), Schema::Discrete { n: 3 }, 3)
            .unwrap_err()
            .to_string();
        for l in ["line 3", "line 4", "line 5"] {
            assert!(err.contains(l), "{err}");
        }
        assert!(!err.contains("line 2"));
    }

    #[test]
    fn wrong_header() {
        let f = write("z,x1,y\n1,0,1\n");
        assert!(load_csv(f.path(), Schema::Logistic { n: 2 }, 3).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![
            Record {
                z: 2,
                x: Some(DVector::from_vec(vec![0.1, -3.25e-7])),
                y: 1,
            },
            Record {
                z: 1,
                x: Some(DVector::from_vec(vec![1.0 / 3.0, 8.0])),
                y: 0,
            },
        ];
        let d = Dataset::new(Schema::Logistic { n: 2 }, 2, records).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        d.save_csv(f.path()).unwrap();
        let back = load_csv(f.path(), Schema::Logistic { n: 2 }, 2).unwrap();
        assert_eq!(back.records, d.records);
    }

    #[test]
    fn split_edge_cases() {
        let all_train = assign_splits(50, (1.0, 0.0, 0.0), 3).unwrap();
        assert!(all_train.iter().all(|s| *s == Split::Train));
        assert_eq!(
            assign_splits(200, (0.3, 0.3, 0.4), 7).unwrap(),
            assign_splits(200, (0.3, 0.3, 0.4), 7).unwrap()
        );
        assert!(assign_splits(10, (0.5, 0.2, 0.2), 1).is_err());
    }

    #[test]
    fn split_sizes_within_three_sigma() {
        let n = 10_000.0;
        let s = assign_splits(10_000, (0.05, 0.05, 0.90), 2024).unwrap();
        for (split, p) in [(Split::Train, 0.05f64), (Split::Validation, 0.05), (Split::Test, 0.90)] {
            let c = s.iter().filter(|x| **x == split).count() as f64;
            let sigma = (n * p * (1.0 - p)).sqrt();
            assert!((c - n * p).abs() <= 3.0 * sigma, "{split:?}: {c}");
        }
    }

    #[test]
    fn local_losses_group_by_stratum() {
        let records = vec![
            Record { z: 1, x: None, y: 2 },
            Record { z: 3, x: None, y: 1 },
            Record { z: 1, x: None, y: 2 },
        ];
        let d = Dataset::new(Schema::Discrete { n: 2 }, 3, records).unwrap();
        let l = d.local_losses(Split::Train);
        assert_eq!(l[0], LocalLossSpec::DiscreteDistribution { counts: vec![0, 2] });
        assert_eq!(l[1], LocalLossSpec::DiscreteDistribution { counts: vec![0, 0] });
        assert_eq!(l[2], LocalLossSpec::DiscreteDistribution { counts: vec![1, 0] });
    }
}
