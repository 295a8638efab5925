//! Predicted-versus-expert agreement.
//!
//! Matrices are indexed `[expert][predicted]`: rows are the expert grade,
//! columns the model grade. Pairs where either side is missing (unscorable
//! prediction or unannotated expert grade) are counted as `excluded` and never
//! enter the matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{BanffGrade, Indicator};

pub const ORIENTATION: &str = "rows = expert grade, columns = predicted grade";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradePair {
    pub predicted: Option<BanffGrade>,
    pub expert: Option<BanffGrade>,
}

impl GradePair {
    pub fn new(predicted: Option<BanffGrade>, expert: Option<BanffGrade>) -> Self {
        GradePair { predicted, expert }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub indicator: Indicator,
    pub cells: [[u64; 4]; 4],
    pub excluded: u64,
}

impl ConfusionMatrix {
    pub fn new(indicator: Indicator) -> Self {
        ConfusionMatrix {
            indicator,
            cells: [[0; 4]; 4],
            excluded: 0,
        }
    }

    pub fn add(&mut self, pair: GradePair) {
        match (pair.expert, pair.predicted) {
            (Some(e), Some(p)) => self.cells[e.index()][p.index()] += 1,
            _ => self.excluded += 1,
        }
    }

    /// Cellwise sum; associative and commutative, so partial matrices from
    /// parallel workers merge to the same result in any order.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.indicator, other.indicator);
        for (row, other_row) in self.cells.iter_mut().zip(&other.cells) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
        self.excluded += other.excluded;
    }

    /// Number of included pairs.
    pub fn n_sections(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.cells[i][i]).sum()
    }

    pub fn transposed(&self) -> ConfusionMatrix {
        let mut t = self.clone();
        for (i, row) in self.cells.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                t.cells[j][i] = c;
            }
        }
        t
    }

    pub fn is_diagonal(&self) -> bool {
        self.trace() == self.n_sections()
    }

    /// Header-labeled 4x4 table plus an `excluded` footer row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("expert\\predicted,0,1,2,3\n");
        for (e, row) in self.cells.iter().enumerate() {
            let cols: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&format!("{e},{}\n", cols.join(",")));
        }
        out.push_str(&format!("excluded,{}\n", self.excluded));
        out
    }
}

pub fn accumulate<I>(pairs: I, indicator: Indicator) -> ConfusionMatrix
where
    I: IntoIterator<Item = GradePair>,
{
    let mut cm = ConfusionMatrix::new(indicator);
    for pair in pairs {
        cm.add(pair);
    }
    cm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub exact_agreement: f64,
    pub within_one_agreement: f64,
    pub quadratic_weighted_kappa: f64,
    /// Diagonal over row sum per expert grade; `None` when the row is empty.
    pub per_grade_recall: [Option<f64>; 4],
}

/// Agreement statistics for a non-empty matrix.
///
/// Kappa uses quadratic weights `(i - j)^2 / 9`. When the expected weighted
/// disagreement is zero (every pair in a single cell) kappa is 1.
pub fn summarize(cm: &ConfusionMatrix) -> Result<AgreementSummary> {
    let total = cm.n_sections();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = total as f64;
    let mut within = 0u64;
    let mut row_sums = [0u64; 4];
    let mut col_sums = [0u64; 4];
    for (i, row) in cm.cells.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if i.abs_diff(j) <= 1 {
                within += c;
            }
            row_sums[i] += c;
            col_sums[j] += c;
        }
    }

    let weight = |i: usize, j: usize| {
        let d = i as f64 - j as f64;
        d * d / 9.0
    };
    let mut observed = 0.0;
    let mut expected = 0.0;
    for (i, &row) in row_sums.iter().enumerate() {
        for (j, &col) in col_sums.iter().enumerate() {
            let w = weight(i, j);
            observed += w * cm.cells[i][j] as f64 / n;
            expected += w * (row as f64 / n) * (col as f64 / n);
        }
    }
    let kappa = if expected == 0.0 { 1.0 } else { 1.0 - observed / expected };

    let per_grade_recall = std::array::from_fn(|g| {
        (row_sums[g] > 0).then(|| cm.cells[g][g] as f64 / row_sums[g] as f64)
    });

    Ok(AgreementSummary {
        exact_agreement: cm.trace() as f64 / n,
        within_one_agreement: within as f64 / n,
        quadratic_weighted_kappa: kappa,
        per_grade_recall,
    })
}
