//! Datasets and local quantile bucketization.
//!
//! Each party bins its own columns once before training. A feature with
//! `k` requested buckets gets up to `k - 1` thresholds at nearest-rank
//! quantiles; row `x` falls into bucket `#{t : t < x}`, so ties go to the
//! lower bucket and split candidate `k` sends `x <= thresholds[k]` left.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::protocols::Party;
use crate::ring::RingValue;
use crate::transport::Role;
use crate::{Error, Result};

/// One party's rows: named feature columns and, at the label holder, labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    /// Column-major values, `columns[j][i]` is feature `j` of row `i`.
    pub columns: Vec<Vec<f64>>,
    pub label: Option<Vec<f64>>,
    rows: usize,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, label: Option<Vec<f64>>) -> Result<Self> {
        let rows = columns
            .first()
            .map(Vec::len)
            .or_else(|| label.as_ref().map(Vec::len))
            .unwrap_or(0);
        Self::with_rows(rows, names, columns, label)
    }

    /// As [`Dataset::new`] with an explicit row count, for a party that
    /// holds no columns at all.
    pub fn with_rows(rows: usize, names: Vec<String>, columns: Vec<Vec<f64>>, label: Option<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Data(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != rows {
                return Err(Error::Data(format!("column {name} has {} rows, expected {rows}", col.len())));
            }
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("column {name} holds non-finite value {v}")));
            }
        }
        if let Some(y) = &label {
            if y.len() != rows {
                return Err(Error::Data(format!("label has {} rows, expected {rows}", y.len())));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("label holds a non-finite value".into()));
            }
        }
        Ok(Self {
            names,
            columns,
            label,
            rows,
        })
    }

    /// Parses CSV with a header row. The column named `label`, if given,
    /// must exist and becomes the label; every other column is a feature.
    pub fn from_reader<R: Read>(reader: R, label: Option<&str>) -> Result<Self> {
        Self::parse(reader, label, true)
    }

    fn parse<R: Read>(reader: R, label: Option<&str>, required: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Data(format!("bad CSV header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let label_col = match label {
            Some(name) => match headers.iter().position(|h| h == name) {
                Some(i) => Some(i),
                None if required => return Err(Error::Data(format!("label column {name:?} not found"))),
                None => None,
            },
            None => None,
        };
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_col)
            .map(|(_, h)| h.clone())
            .collect();
        let mut columns = vec![Vec::new(); names.len()];
        let mut y = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("CSV row {}: {e}", line + 2)))?;
            if rec.len() != headers.len() {
                return Err(Error::Data(format!(
                    "CSV row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    headers.len()
                )));
            }
            let mut j = 0;
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("CSV row {}, column {}: cannot parse {field:?}", line + 2, headers[i]))
                })?;
                if Some(i) == label_col {
                    y.push(v);
                } else {
                    columns[j].push(v);
                    j += 1;
                }
            }
        }
        let label = label_col.map(|_| y);
        Self::new(names, columns, label)
    }

    pub fn load(path: &Path, label: Option<&str>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file), label)
    }

    /// As [`Dataset::load`], but a missing label column is not an error.
    pub fn load_optional_label(path: &Path, label: &str) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file), Some(label), false)
    }

    pub fn write_csv(&self, path: &Path, label_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
        let mut header = self.names.clone();
        if self.label.is_some() {
            header.push(label_name.to_string());
        }
        w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
        for i in 0..self.rows {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            if let Some(y) = &self.label {
                rec.push(y[i].to_string());
            }
            w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// The rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            label: self.label.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect()),
            rows: idx.len(),
        }
    }

    /// The features named in `names`, with or without the label.
    pub fn select_features(&self, names: &[&str], keep_label: bool) -> Result<Self> {
        let mut cols = Vec::with_capacity(names.len());
        for &n in names {
            let j = self
                .names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::Data(format!("feature {n:?} not found")))?;
            cols.push(self.columns[j].clone());
        }
        Ok(Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            columns: cols,
            label: if keep_label { self.label.clone() } else { None },
            rows: self.rows,
        })
    }
}

/// Thresholds of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub thresholds: Vec<f64>,
}

impl FeatureBins {
    /// Nearest-rank quantile thresholds for `k` buckets: for `q = i/k`,
    /// the value at rank `ceil(i * m / k)` of the sorted column. Repeated
    /// thresholds and thresholds at the column maximum are dropped, so the
    /// effective bucket count may be smaller than `k`.
    pub fn fit(column: &[f64], k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("bucket count must be at least 2, got {k}")));
        }
        if column.is_empty() {
            return Err(Error::Data("cannot bin an empty column".into()));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("cannot bin non-finite values".into()));
        }
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let max = sorted[m - 1];
        let mut thresholds: Vec<f64> = Vec::with_capacity(k - 1);
        for i in 1..k {
            let rank = (i * m).div_ceil(k).max(1);
            let t = sorted[rank - 1];
            if t < max && thresholds.last() != Some(&t) {
                thresholds.push(t);
            }
        }
        Ok(Self { thresholds })
    }

    pub fn n_buckets(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn bucket_of(&self, x: f64) -> u32 {
        self.thresholds.partition_point(|&t| t < x) as u32
    }

    /// Threshold of split candidate `k` (left iff `x <= threshold`). Padded
    /// candidates beyond the effective buckets send everything left.
    pub fn split_threshold(&self, k: usize) -> f64 {
        self.thresholds.get(k).copied().unwrap_or(f64::MAX)
    }
}

/// A party's binned features with buckets padded to a common `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedFeatures {
    pub k: usize,
    pub rows: usize,
    pub bins: Vec<FeatureBins>,
    /// `buckets[j][i]`: bucket of row `i` under feature `j`.
    pub buckets: Vec<Vec<u32>>,
}

impl BinnedFeatures {
    pub fn fit(data: &Dataset, k: usize) -> Result<Self> {
        let bins = data
            .columns
            .iter()
            .map(|c| FeatureBins::fit(c, k))
            .collect::<Result<Vec<_>>>()?;
        let buckets = data
            .columns
            .iter()
            .zip(&bins)
            .map(|(c, b)| c.iter().map(|&x| b.bucket_of(x)).collect())
            .collect();
        Ok(Self {
            k,
            rows: data.rows(),
            bins,
            buckets,
        })
    }

    pub fn n_features(&self) -> usize {
        self.bins.len()
    }

    /// Rows per bucket, padded with zeros to `k` buckets per feature.
    pub fn counts(&self) -> Vec<Vec<u64>> {
        self.buckets
            .iter()
            .map(|b| {
                let mut c = vec![0u64; self.k];
                for &x in b {
                    c[x as usize] += 1;
                }
                c
            })
            .collect()
    }

    /// Unit-scale 0/1 membership vector of `(feature j, bucket b)`.
    pub fn indicator(&self, j: usize, b: usize) -> Vec<RingValue> {
        self.buckets[j]
            .iter()
            .map(|&x| RingValue((x as usize == b) as u128))
            .collect()
    }
}

/// Secret-shares the owner's membership vectors `s_{jk}`, feature-major.
/// The owner passes its bins; the peer passes `None` with the public
/// shape `(rows, n_features, k)`.
pub fn share_indicators(
    party: &mut Party,
    owner: Role,
    bins: Option<&BinnedFeatures>,
    shape: (usize, usize, usize),
) -> Result<Vec<Vec<RingValue>>> {
    let (m, n, k) = shape;
    let flat: Option<Vec<RingValue>> = bins.map(|b| {
        (0..b.n_features())
            .flat_map(|j| (0..b.k).flat_map(move |bk| b.indicator(j, bk)))
            .collect()
    });
    if let (Some(b), Some(f)) = (bins, &flat) {
        if b.k != k || b.n_features() != n || f.len() != m * n * k {
            return Err(Error::Protocol("indicator shape mismatch".into()));
        }
    }
    let shared = party.share_input(owner, flat.as_deref(), m * n * k)?;
    if m == 0 {
        return Ok(vec![Vec::new(); n * k]);
    }
    Ok(shared.chunks(m).map(<[RingValue]>::to_vec).collect())
}
