//! Categorical datasets, CSV ingestion and the Hamming geometry around a target row.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input, Error, Result};

/// Multiset of length-`n` rows over the categories `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalDataset {
    n: usize,
    k: usize,
    data: Vec<u32>,
}

impl CategoricalDataset {
    pub fn new(n: usize, k: usize, rows: &[Vec<u32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return input(format!("row {i} has {} entries, expected {n}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(n, k, data)
    }

    /// Builds from row-major storage of `size * n` entries.
    pub fn from_flat(n: usize, k: usize, data: Vec<u32>) -> Result<Self> {
        if n == 0 {
            return input("datasets need at least one feature");
        }
        if k < 2 {
            return input(format!("k must be at least 2, got {k}"));
        }
        if data.is_empty() || !data.len().is_multiple_of(n) {
            return input("dataset must contain at least one complete row");
        }
        if let Some(bad) = data.iter().find(|&&x| x as usize >= k) {
            return input(format!("entry {bad} is outside 0..{k}"));
        }
        Ok(Self { n, k, data })
    }

    pub fn num_features(&self) -> usize {
        self.n
    }

    pub fn num_categories(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.data.chunks_exact(self.n)
    }

    pub fn contains(&self, v: &[u32]) -> bool {
        self.rows().any(|r| r == v)
    }

    pub fn multiplicity(&self, v: &[u32]) -> usize {
        self.rows().filter(|r| *r == v).count()
    }

    /// Copy with exactly one instance of `v` removed.
    pub fn without_one(&self, v: &[u32]) -> Result<Self> {
        let pos = self
            .rows()
            .position(|r| r == v)
            .ok_or_else(|| Error::Input(format!("row {v:?} is not in the dataset")))?;
        if self.len() == 1 {
            return input("removing the only row would leave an empty dataset");
        }
        let mut data = self.data.clone();
        data.drain(pos * self.n..(pos + 1) * self.n);
        Ok(Self { data, ..*self })
    }

    /// Copy with `extra` appended.
    pub fn with_row(&self, extra: &[u32]) -> Result<Self> {
        if extra.len() != self.n {
            return input("appended row has the wrong length");
        }
        let mut data = self.data.clone();
        data.extend_from_slice(extra);
        Self::from_flat(self.n, self.k, data)
    }

    /// Copy with the rows at `indices` removed.
    pub fn without_indices(&self, indices: &BTreeSet<usize>) -> Result<Self> {
        let data: Vec<u32> = self
            .rows()
            .enumerate()
            .filter(|(i, _)| !indices.contains(i))
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        Self::from_flat(self.n, self.k, data)
    }

    /// SHA-256 over `(n, k, rows)`, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.k as u64).to_le_bytes());
        for x in &self.data {
            h.update(x.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Distinct rows in lexicographic order with their multiplicities.
    pub fn distinct(&self) -> DistinctRows {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.row(a).cmp(self.row(b)));
        let mut data = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        let mut last: Option<&[u32]> = None;
        for i in order {
            let r = self.row(i);
            if last == Some(r) {
                *counts.last_mut().expect("non-empty") += 1;
            } else {
                data.extend_from_slice(r);
                counts.push(1);
                last = Some(r);
            }
        }
        DistinctRows {
            n: self.n,
            data,
            counts,
        }
    }

    /// Per-column empirical frequencies, `freq[i][l]`.
    pub fn column_frequencies(&self) -> Vec<Vec<f64>> {
        let mut f = vec![vec![0.0; self.k]; self.n];
        for r in self.rows() {
            for (i, &x) in r.iter().enumerate() {
                f[i][x as usize] += 1.0;
            }
        }
        let s = self.len() as f64;
        f.iter_mut().flatten().for_each(|x| *x /= s);
        f
    }
}

/// Distinct rows with multiplicities; the compact form used by audits.
#[derive(Debug, Clone)]
pub struct DistinctRows {
    n: usize,
    data: Vec<u32>,
    counts: Vec<u64>,
}

impl DistinctRows {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Number of coordinates in which `a` and `b` differ.
pub fn hamming(a: &[u32], b: &[u32]) -> Result<usize> {
    if a.len() != b.len() {
        return input(format!("row lengths differ: {} vs {}", a.len(), b.len()));
    }
    Ok(hamming_unchecked(a, b))
}

#[inline]
pub(crate) fn hamming_unchecked(a: &[u32], b: &[u32]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// `ratio^{-d}` given `ln ratio`, with `d = 0` always contributing 1.
#[inline]
pub(crate) fn decay_weight(d: usize, ln_ratio: f64) -> f64 {
    if d == 0 {
        1.0
    } else {
        (-(d as f64) * ln_ratio).exp()
    }
}

/// Hamming geometry of a target `v*` relative to `V1 = V0` minus one copy of `v*`.
///
/// Distances enter every bound only through histograms, so those are what is stored:
/// `hist[d]` counts rows of `V1` at distance `d`, and `restricted[i][d]` counts rows at
/// distance `d` that agree with `v*` in column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    target: Vec<u32>,
    s: u64,
    hist: Vec<u64>,
    restricted: Vec<Vec<u64>>,
    cumulative: Vec<u64>,
}

impl NeighborTable {
    /// Builds the table for `target` over the multiset `d`.
    pub fn build(d: &CategoricalDataset, target: &[u32]) -> Result<Self> {
        Self::from_distinct(&d.distinct(), target)
    }

    /// Builds the table from distinct rows; `O(distinct * n)`.
    pub fn from_distinct(d: &DistinctRows, target: &[u32]) -> Result<Self> {
        let n = d.n;
        if target.len() != n {
            return input(format!("target has {} entries, expected {n}", target.len()));
        }
        let mut hist = vec![0u64; n + 1];
        let mut restricted = vec![0u64; n * (n + 1)];
        let mut agree = vec![false; n];
        for j in 0..d.len() {
            let row = d.row(j);
            let c = d.counts[j];
            let mut dist = 0;
            for i in 0..n {
                agree[i] = row[i] == target[i];
                dist += usize::from(!agree[i]);
            }
            hist[dist] += c;
            for (i, &a) in agree.iter().enumerate() {
                if a {
                    restricted[i * (n + 1) + dist] += c;
                }
            }
        }
        if hist[0] == 0 {
            return input(format!("row {target:?} is not in the dataset"));
        }
        hist[0] -= 1;
        for i in 0..n {
            restricted[i * (n + 1)] -= 1;
        }
        let s: u64 = hist.iter().sum();
        if s == 0 {
            return input("dataset has a single row; the neighbouring dataset is empty");
        }
        let cumulative = hist
            .iter()
            .scan(0u64, |acc, &h| {
                *acc += h;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            target: target.to_vec(),
            s,
            hist,
            restricted: restricted.chunks(n + 1).map(<[u64]>::to_vec).collect(),
            cumulative,
        })
    }

    pub fn target(&self) -> &[u32] {
        &self.target
    }

    pub fn num_features(&self) -> usize {
        self.target.len()
    }

    /// `s = |V1|`.
    pub fn s(&self) -> u64 {
        self.s
    }

    /// Rows of `V1` at exactly distance `d`.
    pub fn histogram(&self) -> &[u64] {
        &self.hist
    }

    pub fn restricted_histogram(&self, i: usize) -> &[u64] {
        &self.restricted[i]
    }

    /// `N_eta`: rows of `V1` within distance `eta`; radii past `n` saturate at `s`.
    pub fn n_within(&self, eta: usize) -> u64 {
        self.cumulative[eta.min(self.num_features())]
    }

    pub fn cumulative_counts(&self) -> &[u64] {
        &self.cumulative
    }

    /// `Sim(v*, V1)` at the ratio whose logarithm is `ln_ratio`.
    pub fn similarity_ln(&self, ln_ratio: f64) -> f64 {
        weighted(&self.hist, ln_ratio)
    }

    /// `Sim(v*, V1^{i | v*^i})` at the ratio whose logarithm is `ln_ratio`.
    pub fn restricted_similarity_ln(&self, i: usize, ln_ratio: f64) -> f64 {
        weighted(&self.restricted[i], ln_ratio)
    }
}

fn weighted(hist: &[u64], ln_ratio: f64) -> f64 {
    hist.iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(d, &c)| c as f64 * decay_weight(d, ln_ratio))
        .sum()
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio.is_nan() || ratio < 1.0 {
        return input(format!("similarity ratio must be at least 1, got {ratio}"));
    }
    Ok(())
}

/// `sum_{v in rows} ratio^{-hamming(v, target)}`.
pub fn similarity<'a>(
    rows: impl IntoIterator<Item = &'a [u32]>,
    target: &[u32],
    ratio: f64,
) -> Result<f64> {
    check_ratio(ratio)?;
    let lr = ratio.ln();
    let mut acc = 0.0;
    for r in rows {
        acc += decay_weight(hamming(r, target)?, lr);
    }
    Ok(acc)
}

/// Like [`similarity`], over the rows that agree with `target` in column `i`.
pub fn restricted_similarity<'a>(
    rows: impl IntoIterator<Item = &'a [u32]>,
    target: &[u32],
    i: usize,
    ratio: f64,
) -> Result<f64> {
    if i >= target.len() {
        return input(format!("column {i} is out of range for {} features", target.len()));
    }
    check_ratio(ratio)?;
    let lr = ratio.ln();
    let mut acc = 0.0;
    for r in rows {
        let d = hamming(r, target)?;
        if r[i] == target[i] {
            acc += decay_weight(d, lr);
        }
    }
    Ok(acc)
}

/// Settings for numeric binning and missing values during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub max_bins: usize,
    pub allow_missing: bool,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            max_bins: 5,
            allow_missing: false,
        }
    }
}

/// Label of the sentinel category used for missing values.
pub const MISSING_LABEL: &str = "<missing>";

/// How one CSV column was encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub name: String,
    pub numeric: bool,
    /// Label for each dense index.
    pub labels: Vec<String>,
}

/// Encoding of every column; written next to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMaps {
    pub columns: Vec<ColumnMap>,
}

impl CategoryMaps {
    /// Maps an encoded row back to labels; indices above a column's cardinality become `"#idx"`.
    pub fn decode(&self, row: &[u32]) -> Vec<String> {
        row.iter()
            .zip(&self.columns)
            .map(|(&x, c)| c.labels.get(x as usize).cloned().unwrap_or_else(|| format!("#{x}")))
            .collect()
    }

    pub fn header(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s, "" | "?" | "NA" | "N/A" | "null")
}

/// Reads a headed CSV, mapping string columns by sorted unique value and binning
/// numeric columns into at most `max_bins` equal-frequency bins.
pub fn ingest_csv(path: &Path, cfg: &BinningConfig) -> Result<(CategoricalDataset, CategoryMaps)> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, cfg)
}

/// [`ingest_csv`] over any reader.
pub fn ingest_reader<R: std::io::Read>(
    reader: R,
    cfg: &BinningConfig,
) -> Result<(CategoricalDataset, CategoryMaps)> {
    if cfg.max_bins == 0 {
        return input("max_bins must be positive");
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let n = header.len();
    if n == 0 {
        return input("CSV header is empty");
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); n];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("record {}: {e}", line + 1)))?;
        for (i, f) in rec.iter().enumerate() {
            if is_missing(f) && !cfg.allow_missing {
                return input(format!(
                    "record {} column {:?}: missing value (use --allow-missing)",
                    line + 1,
                    header[i]
                ));
            }
            cells[i].push(f.to_string());
        }
    }
    let size = cells[0].len();
    if size == 0 {
        return input("CSV has no data rows");
    }
    let mut encoded = vec![vec![0u32; n]; size];
    let mut columns = Vec::with_capacity(n);
    for (i, col) in cells.iter().enumerate() {
        let (codes, map) = encode_column(&header[i], col, cfg.max_bins);
        for (r, c) in codes.into_iter().enumerate() {
            encoded[r][i] = c;
        }
        columns.push(map);
    }
    let k = columns.iter().map(|c| c.labels.len()).max().unwrap_or(2).max(2);
    let ds = CategoricalDataset::new(n, k, &encoded)?;
    Ok((ds, CategoryMaps { columns }))
}

fn encode_column(name: &str, col: &[String], max_bins: usize) -> (Vec<u32>, ColumnMap) {
    let present: Vec<&str> = col.iter().map(String::as_str).filter(|s| !is_missing(s)).collect();
    let has_missing = present.len() < col.len();
    let numeric: Option<Vec<f64>> = if present.is_empty() {
        None
    } else {
        present
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect()
    };
    let is_numeric = numeric.is_some();
    let (mut labels, index): (Vec<String>, Box<dyn Fn(&str) -> u32>) = match numeric {
        Some(values) => {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let m = sorted.len();
            let mut cuts: Vec<f64> = (1..max_bins)
                .map(|b| sorted[(b * m / max_bins).max(1) - 1])
                .collect();
            cuts.dedup();
            let bin_of = move |v: f64| cuts.iter().filter(|&&c| c < v).count();
            // Drop empty bins and label each by its observed range.
            let mut ranges: Vec<Option<(f64, f64)>> = vec![None; max_bins];
            for &v in &sorted {
                let b = bin_of(v);
                let e = ranges[b].get_or_insert((v, v));
                e.0 = e.0.min(v);
                e.1 = e.1.max(v);
            }
            let mut dense = vec![u32::MAX; max_bins];
            let mut labels = Vec::new();
            for (b, r) in ranges.iter().enumerate() {
                if let Some((lo, hi)) = r {
                    dense[b] = labels.len() as u32;
                    labels.push(format!("[{lo}, {hi}]"));
                }
            }
            (
                labels,
                Box::new(move |s: &str| dense[bin_of(s.parse::<f64>().expect("checked numeric"))]),
            )
        }
        None => {
            let uniq: Vec<String> = present
                .iter()
                .map(|s| s.to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let lookup = uniq.clone();
            (
                uniq,
                Box::new(move |s: &str| {
                    lookup.binary_search_by(|x| x.as_str().cmp(s)).expect("seen value") as u32
                }),
            )
        }
    };
    let sentinel = labels.len() as u32;
    let codes = col
        .iter()
        .map(|s| if is_missing(s) { sentinel } else { index(s) })
        .collect();
    if has_missing {
        labels.push(MISSING_LABEL.to_string());
    }
    (
        codes,
        ColumnMap {
            name: name.to_string(),
            numeric: is_numeric,
            labels,
        },
    )
}

/// Samples `s` rows whose entries are category 0 with probability `p` and otherwise
/// uniform over the remaining `k - 1` categories.
pub fn sample_skewed(n: usize, k: usize, p: f64, s: usize, seed: u64) -> Result<CategoricalDataset> {
    if k < 2 || n == 0 || s == 0 {
        return input("sample_skewed needs n >= 1, k >= 2 and s >= 1");
    }
    if !(p >= 1.0 / k as f64 - 1e-12 && p < 1.0) {
        return input(format!("p must lie in [1/k, 1), got {p}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * s);
    for _ in 0..n * s {
        let x = if rng.gen::<f64>() < p {
            0
        } else {
            rng.gen_range(1..k as u32)
        };
        data.push(x);
    }
    CategoricalDataset::from_flat(n, k, data)
}

/// A row avoiding the majority category 0 in every column.
pub fn non_majority_point(n: usize, k: usize) -> Vec<u32> {
    debug_assert!(k >= 2);
    vec![1; n]
}
