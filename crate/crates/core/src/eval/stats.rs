use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::step::check_completion;

/// Fraction of texts that end with the Part-21 terminator.
pub fn completion_rate<S: AsRef<str>>(texts: &[S]) -> Result<f64, EvalError> {
    if texts.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let complete = texts.iter().filter(|t| check_completion(t.as_ref())).count();
    Ok(complete as f64 / texts.len() as f64)
}

/// Median with the mean of the two middle values for even lengths; `None`
/// for an empty slice. NaNs sort last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub const DEFAULT_BIN_WIDTH: usize = 50;
pub const DEFAULT_HISTOGRAM_END: usize = 1000;

/// Fixed-width histogram over `[0, end)` plus one overflow bin for counts
/// `>= end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: usize,
    pub end: usize,
    pub bins: Vec<usize>,
    pub overflow: usize,
}

impl Histogram {
    pub fn new(bin_width: usize, end: usize) -> Histogram {
        let bin_width = bin_width.max(1);
        Histogram {
            bin_width,
            end,
            bins: vec![0; end.div_ceil(bin_width)],
            overflow: 0,
        }
    }

    pub fn add(&mut self, value: usize) {
        if value >= self.end {
            self.overflow += 1;
        } else {
            self.bins[value / self.bin_width] += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().sum::<usize>() + self.overflow
    }

    /// `bin_start,bin_end,count` rows; the overflow row has an empty end.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.bins.iter().enumerate() {
            let start = i * self.bin_width;
            let _ = writeln!(out, "{},{},{}", start, (start + self.bin_width).min(self.end), c);
        }
        let _ = writeln!(out, "{},,{}", self.end, self.overflow);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityStats {
    pub files: usize,
    pub avg: f64,
    pub min: usize,
    pub max: usize,
    pub histogram: Histogram,
}

impl EntityStats {
    /// One markdown table row: `| label | avg | min | max |`.
    pub fn table_row(&self, label: &str) -> String {
        format!("| {label} | {:.2} | {} | {} |", self.avg, self.min, self.max)
    }
}

/// Header for [`EntityStats::table_row`] rows.
pub const ENTITY_TABLE_HEADER: &str = "| Set | Avg. | Min | Max |\n|---|---|---|---|";

pub fn entity_table(rows: &[(&str, &EntityStats)]) -> String {
    let mut out = String::from(ENTITY_TABLE_HEADER);
    for (label, stats) in rows {
        out.push('\n');
        out.push_str(&stats.table_row(label));
    }
    out.push('\n');
    out
}

pub fn entity_stats(counts: &[usize]) -> Result<EntityStats, EvalError> {
    entity_stats_with(counts, DEFAULT_BIN_WIDTH, DEFAULT_HISTOGRAM_END)
}

pub fn entity_stats_with(counts: &[usize], bin_width: usize, end: usize) -> Result<EntityStats, EvalError> {
    if counts.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let mut histogram = Histogram::new(bin_width, end);
    for &c in counts {
        histogram.add(c);
    }
    Ok(EntityStats {
        files: counts.len(),
        avg: counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64,
        min: *counts.iter().min().expect("non-empty"),
        max: *counts.iter().max().expect("non-empty"),
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMPLETE: &str = "ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\nENDSEC;\nEND-ISO-10303-21;\n";

    #[test]
    fn completion() {
        let texts = [COMPLETE, COMPLETE, COMPLETE, "ISO-10303-21;\nDATA;\n#1=A("];
        assert_eq!(completion_rate(&texts).unwrap(), 0.75);
        assert_eq!(completion_rate(&[COMPLETE]).unwrap(), 1.0);
        assert_eq!(completion_rate::<&str>(&[]), Err(EvalError::EmptyBatch));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.9, 0.1, 0.5]), Some(0.5));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn stats_and_histogram() {
        let s = entity_stats(&[47, 477]).unwrap();
        assert_eq!((s.avg, s.min, s.max), (262.0, 47, 477));
        assert_eq!(s.histogram.bins.len(), 20);
        assert_eq!(s.histogram.bins[0], 1);
        assert_eq!(s.histogram.bins[9], 1);
        let s = entity_stats(&[100]).unwrap();
        assert_eq!((s.avg, s.min, s.max), (100.0, 100, 100));
        assert_eq!(s.histogram.bins[2], 1);
        let s = entity_stats(&[999, 1000, 5000]).unwrap();
        assert_eq!((s.histogram.bins[19], s.histogram.overflow), (1, 2));
        assert_eq!(s.table_row("gt"), "| gt | 2333.00 | 999 | 5000 |");
        assert!(entity_stats(&[]).is_err());
    }

    #[test]
    fn histogram_csv() {
        let mut h = Histogram::new(50, 100);
        h.add(0);
        h.add(75);
        h.add(100);
        assert_eq!(h.to_csv(), "bin_start,bin_end,count\n0,50,1\n50,100,1\n100,,1\n");
    }
}
