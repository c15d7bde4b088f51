use serde::{Deserialize, Serialize};

use super::Score;
use crate::data::OOD_LABEL;
use crate::error::{Error, Result};
use crate::likelihood::Decision;

/// Column label for rejected samples in the confusion matrix.
pub const REJECT_COLUMN: &str = "reject";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub true_label: String,
    pub nearest_class: String,
    pub distance: f64,
    pub likelihood: f64,
    /// Accepted class label, or `reject`.
    pub decision: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy summary at one confidence level. Confusion rows are true
/// labels (classes, then out-of-class); columns are decisions (classes,
/// then reject). A rejected out-of-class sample counts as correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub alpha: f64,
    /// Percent of samples decided correctly.
    pub accuracy: f64,
    pub n_samples: usize,
    pub n_correct: usize,
    pub n_rejected: usize,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub per_label: Vec<ClassAccuracy>,
    pub records: Vec<SampleRecord>,
}

fn percent(correct: usize, count: usize) -> f64 {
    100.0 * correct as f64 / count as f64
}

impl EvaluationReport {
    /// `truth[i]` is the true class index, `None` for out-of-class.
    pub(crate) fn build(
        labels: &[&str],
        truth: &[Option<usize>],
        scores: &[Score],
        alpha: f64,
    ) -> Self {
        let k = labels.len();
        let mut confusion = vec![vec![0usize; k + 1]; k + 1];
        let mut records = Vec::with_capacity(scores.len());
        for (index, (t, score)) in truth.iter().zip(scores).enumerate() {
            let decision = score.decide(alpha);
            let row = t.unwrap_or(k);
            let col = match decision {
                Decision::Accept(c) => c,
                Decision::Reject => k,
            };
            confusion[row][col] += 1;
            records.push(SampleRecord {
                index,
                true_label: t.map_or(OOD_LABEL, |c| labels[c]).to_string(),
                nearest_class: labels[score.nearest].to_string(),
                distance: score.nearest_distance(),
                likelihood: score.likelihood,
                decision: match decision {
                    Decision::Accept(c) => labels[c].to_string(),
                    Decision::Reject => REJECT_COLUMN.to_string(),
                },
                correct: row == col,
            });
        }

        let row_labels: Vec<String> = labels
            .iter()
            .map(|l| l.to_string())
            .chain([OOD_LABEL.to_string()])
            .collect();
        let column_labels = labels
            .iter()
            .map(|l| l.to_string())
            .chain([REJECT_COLUMN.to_string()])
            .collect();
        let per_label = row_labels
            .iter()
            .zip(&confusion)
            .enumerate()
            .filter_map(|(i, (label, row))| {
                let count: usize = row.iter().sum();
                (count > 0).then(|| ClassAccuracy {
                    label: label.clone(),
                    count,
                    correct: row[i],
                    accuracy: percent(row[i], count),
                })
            })
            .collect();
        let n_samples = scores.len();
        let n_correct = (0..=k).map(|i| confusion[i][i]).sum();
        let n_rejected = confusion.iter().map(|row| row[k]).sum();
        Self {
            alpha,
            accuracy: percent(n_correct, n_samples),
            n_samples,
            n_correct,
            n_rejected,
            row_labels,
            column_labels,
            confusion,
            per_label,
            records,
        }
    }

    pub fn rejection_rate(&self) -> f64 {
        self.n_rejected as f64 / self.n_samples as f64
    }

    /// Verifies that counts, accuracy and records agree with the matrix.
    pub fn check_consistency(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::InvalidInput(format!("inconsistent report: {what}")));
        let total: usize = self.confusion.iter().flatten().sum();
        if total != self.n_samples || self.records.len() != self.n_samples {
            return fail("sample counts");
        }
        let diagonal: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        if diagonal != self.n_correct || percent(diagonal, total) != self.accuracy {
            return fail("accuracy");
        }
        if self.records.iter().filter(|r| r.correct).count() != self.n_correct {
            return fail("per-sample correctness");
        }
        let reject = self.column_labels.len() - 1;
        if self.confusion.iter().map(|row| row[reject]).sum::<usize>() != self.n_rejected {
            return fail("rejections");
        }
        for entry in &self.per_label {
            let i = self.row_labels.iter().position(|l| *l == entry.label);
            match i {
                Some(i) if self.confusion[i].iter().sum::<usize>() == entry.count => {}
                _ => return fail("per-label counts"),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(nearest: usize, likelihood: f64) -> Score {
        Score {
            nearest,
            distances: vec![1.0, 2.0],
            likelihood,
        }
    }

    #[test]
    fn rejected_out_of_class_samples_count_as_correct() {
        let truth = [Some(0), Some(1), None, None];
        let scores = [score(0, 0.5), score(0, 0.5), score(1, 0.001), score(0, 0.9)];
        let r = EvaluationReport::build(&["a", "b"], &truth, &scores, 0.05);
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![1, 0, 0], vec![1, 0, 1]]);
        assert_eq!(r.n_correct, 2);
        assert_eq!(r.accuracy, 50.0);
        assert_eq!(r.n_rejected, 1);
        assert_eq!(r.records[2].decision, "reject");
        assert!(r.records[2].correct);
        assert_eq!(r.per_label.len(), 3);
        r.check_consistency().unwrap();
    }

    #[test]
    fn all_ood_all_rejected_is_perfect() {
        let truth = [None, None];
        let scores = [score(0, 0.0), score(1, 0.0)];
        let r = EvaluationReport::build(&["a", "b"], &truth, &scores, 0.01);
        assert_eq!(r.accuracy, 100.0);
        assert_eq!(r.per_label.len(), 1);
        assert_eq!(r.per_label[0].label, OOD_LABEL);
    }

    #[test]
    fn tampered_reports_fail_the_consistency_check() {
        let r = EvaluationReport::build(&["a"], &[Some(0)], &[score(0, 1.0)], 0.0);
        let mut bad = r.clone();
        bad.accuracy = 99.0;
        assert!(bad.check_consistency().is_err());
        let mut bad = r;
        bad.confusion[0][1] = 1;
        assert!(bad.check_consistency().is_err());
    }
}
