use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{invalid, Result};
use crate::index_to_bits;

/// Conditional law of the next `L` symbols for one past.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Probability of the past itself.
    pub weight: f64,
    /// Distribution over the `2^L` futures, first future symbol most significant.
    pub dist: Vec<f64>,
    /// The row is a uniform fallback for a (near) impossible past.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Map from past strings of length `M` to their weight and future distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    #[serde(rename = "M")]
    past_len: usize,
    #[serde(rename = "L")]
    future_len: usize,
    rows: BTreeMap<String, TableRow>,
}

impl ConditionalTable {
    pub(crate) fn from_rows(past_len: usize, future_len: usize, rows: BTreeMap<String, TableRow>) -> Self {
        Self { past_len, future_len, rows }
    }

    /// Builds a table, checking shapes and normalization.
    pub fn new(past_len: usize, future_len: usize, rows: BTreeMap<String, TableRow>) -> Result<Self> {
        let table = Self { past_len, future_len, rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.future_len == 0 {
            return invalid("future length must be at least one");
        }
        let width = 1usize << self.future_len;
        let mut total = 0.0;
        for (past, row) in &self.rows {
            if past.len() != self.past_len || past.bytes().any(|b| b != b'0' && b != b'1') {
                return invalid(format!("row key {past:?} is not a {}-symbol bit string", self.past_len));
            }
            if row.dist.len() != width {
                return invalid(format!("row {past:?} has {} entries, expected {width}", row.dist.len()));
            }
            if !(row.weight >= 0.0) || row.dist.iter().any(|p| !(*p >= 0.0)) {
                return invalid(format!("row {past:?} has a negative or NaN entry"));
            }
            let sum: f64 = row.dist.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return invalid(format!("row {past:?} sums to {sum}"));
            }
            total += row.weight;
        }
        if total > 1.0 + 1e-9 {
            return invalid(format!("row weights sum to {total}"));
        }
        Ok(())
    }

    pub fn past_len(&self) -> usize {
        self.past_len
    }

    pub fn future_len(&self) -> usize {
        self.future_len
    }

    pub fn rows(&self) -> &BTreeMap<String, TableRow> {
        &self.rows
    }

    pub fn get(&self, past: &str) -> Option<&TableRow> {
        self.rows.get(past)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.rows.values().map(|r| r.weight).sum()
    }

    /// `Σ_past weight · dist`: the `L`-symbol marginal implied by the table.
    pub fn future_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1 << self.future_len];
        for row in self.rows.values() {
            for (o, p) in out.iter_mut().zip(&row.dist) {
                *o += row.weight * p;
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Empirical table from all overlapping windows of `past_len + future_len`
/// symbols. Pasts that never occur are absent.
pub fn count_windows(traj: &Trajectory, past_len: usize, future_len: usize) -> Result<ConditionalTable> {
    let width = past_len + future_len;
    if future_len == 0 {
        return invalid("future length must be at least one");
    }
    if width > 62 {
        return invalid(format!("window of {width} symbols is too wide"));
    }
    let symbols = traj.symbols();
    if symbols.len() < width {
        return invalid(format!("trajectory of length {} is shorter than the window {width}", symbols.len()));
    }
    let mask = (1u64 << width) - 1;
    let mut counts: HashMap<u64, u64> = HashMap::new();
    let mut index = 0u64;
    for (t, &s) in symbols.iter().enumerate() {
        index = ((index << 1) | s as u64) & mask;
        if t + 1 >= width {
            *counts.entry(index).or_default() += 1;
        }
    }
    let windows = (symbols.len() - width + 1) as f64;
    let futures = 1usize << future_len;
    let mut grouped: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for (idx, n) in counts {
        grouped.entry(idx >> future_len).or_insert_with(|| vec![0; futures])[(idx as usize) & (futures - 1)] = n;
    }
    let rows = grouped
        .into_iter()
        .map(|(past, counts)| {
            let total: u64 = counts.iter().sum();
            let row = TableRow {
                weight: total as f64 / windows,
                dist: counts.iter().map(|&c| c as f64 / total as f64).collect(),
                degenerate: false,
            };
            (index_to_bits(past as usize, past_len), row)
        })
        .collect();
    Ok(ConditionalTable::from_rows(past_len, future_len, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(s: &str) -> Trajectory {
        Trajectory::from_text(s).unwrap()
    }

    #[test]
    fn alternating_string() {
        let t = count_windows(&traj("0101010101"), 1, 1).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("0").unwrap().dist, vec![0.0, 1.0]);
        assert_eq!(t.get("1").unwrap().dist, vec![1.0, 0.0]);
        assert!((t.total_weight() - 1.0).abs() < 1e-15);
        // 9 windows: "01" five times, "10" four times
        assert!((t.get("0").unwrap().weight - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn constant_string() {
        let t = count_windows(&traj("0000"), 1, 1).unwrap();
        assert_eq!(t.len(), 1);
        let row = t.get("0").unwrap();
        assert_eq!(row.dist, vec![1.0, 0.0]);
        assert_eq!(row.weight, 1.0);
    }

    #[test]
    fn empty_past_and_short_trajectories() {
        let t = count_windows(&traj("0110"), 0, 2).unwrap();
        let row = t.get("").unwrap();
        assert_eq!(row.dist, vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert!(count_windows(&traj("011"), 2, 2).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let t = count_windows(&traj("0110100111010"), 2, 1).unwrap();
        let json = t.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["M"], 2);
        assert_eq!(value["L"], 1);
        assert!(value["rows"]["01"]["dist"].is_array());
        assert_eq!(ConditionalTable::from_json(&json).unwrap(), t);

        let bad = r#"{"M":1,"L":1,"rows":{"0":{"weight":1.0,"dist":[0.3,0.3]}}}"#;
        assert!(ConditionalTable::from_json(bad).is_err());
        let bad_key = r#"{"M":2,"L":1,"rows":{"0":{"weight":1.0,"dist":[0.5,0.5]}}}"#;
        assert!(ConditionalTable::from_json(bad_key).is_err());
    }
}
