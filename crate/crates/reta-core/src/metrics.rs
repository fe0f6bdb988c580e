//! Open-set evaluation: macro-F1, total accuracy, and closed-set (ID)
//! accuracy over a confusion matrix that treats Unknown as one extra class.
//!
//! Conventions: 0/0 is defined as 0 for precision, recall and F1; rejecting
//! a known-class sample counts against ID accuracy rather than being
//! excluded from it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Verdict;

/// `(K+1) x (K+1)` tally; rows are gold, columns are predicted, class `K`
/// is Unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_known: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_known: usize) -> Self {
        let side = n_known + 1;
        ConfusionMatrix {
            n_known,
            counts: vec![0; side * side],
        }
    }

    pub fn n_known(&self) -> usize {
        self.n_known
    }

    /// Side length including the Unknown class.
    pub fn side(&self) -> usize {
        self.n_known + 1
    }

    pub fn at(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.side() + pred]
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        let side = self.side();
        self.counts[gold * side + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.side())
            .map(|row| row.to_vec())
            .collect()
    }
}

/// Tally verdicts against gold labels. Gold entries may be `Unknown` for
/// true-unknown test items.
pub fn confusion(preds: &[Verdict], golds: &[Verdict], n_known: usize) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::argument(format!(
            "{} predictions vs {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(n_known);
    for (pred, gold) in preds.iter().zip(golds) {
        for v in [pred, gold] {
            if let Verdict::Known(c) = v {
                if *c >= n_known {
                    return Err(Error::argument(format!(
                        "class {c} out of range for {n_known} known classes"
                    )));
                }
            }
        }
        cm.add(gold.class_index(n_known), pred.class_index(n_known));
    }
    Ok(cm)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class precision/recall/F1 for one class index (Unknown included).
fn class_prf(cm: &ConfusionMatrix, class: usize) -> (f64, f64, f64) {
    let side = cm.side();
    let tp = cm.at(class, class) as f64;
    let fp: f64 = (0..side)
        .filter(|&g| g != class)
        .map(|g| cm.at(g, class) as f64)
        .sum();
    let fn_: f64 = (0..side)
        .filter(|&p| p != class)
        .map(|p| cm.at(class, p) as f64)
        .sum();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    (precision, recall, f1)
}

/// Macro-averaged F1 over all K+1 classes, Unknown included.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let side = cm.side();
    let sum: f64 = (0..side).map(|c| class_prf(cm, c).2).sum();
    sum / side as f64
}

/// Fraction of all samples handled correctly; the diagonal includes correct
/// rejections (Unknown -> Unknown).
pub fn total_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::argument("empty confusion matrix"));
    }
    let trace: u64 = (0..cm.side()).map(|c| cm.at(c, c)).sum();
    Ok(trace as f64 / total as f64)
}

/// Closed-set accuracy over known-gold rows only. A known sample rejected
/// as Unknown counts as an error.
pub fn id_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let known_total: u64 = (0..cm.n_known())
        .map(|g| (0..cm.side()).map(|p| cm.at(g, p)).sum::<u64>())
        .sum();
    if known_total == 0 {
        return Err(Error::argument("no known-gold samples"));
    }
    let correct: u64 = (0..cm.n_known()).map(|c| cm.at(c, c)).sum();
    Ok(correct as f64 / known_total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    /// Class index; `n_known` denotes the Unknown pseudo-class.
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub total_accuracy: f64,
    pub id_accuracy: f64,
    pub per_class: Vec<PerClassMetrics>,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let per_class = (0..cm.side())
            .map(|class| {
                let (precision, recall, f1) = class_prf(cm, class);
                PerClassMetrics {
                    class,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect();
        Ok(MetricsReport {
            macro_f1: macro_f1(cm),
            total_accuracy: total_accuracy(cm)?,
            id_accuracy: id_accuracy(cm)?,
            per_class,
            confusion: cm.rows(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path.as_ref())?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn from_rows(rows: &[&[u64]]) -> ConfusionMatrix {
        let n_known = rows.len() - 1;
        let mut cm = ConfusionMatrix::new(n_known);
        for (g, row) in rows.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    cm.add(g, p);
                }
            }
        }
        cm
    }

    /// Independent re-derivation of all three metrics by direct loops over
    /// the matrix, following the precision/recall/F1 formulas one class at a
    /// time with 0/0 = 0.
    fn oracle(cm: &ConfusionMatrix) -> (f64, f64, f64) {
        let side = cm.side();
        let mut f1_sum = 0.0;
        for i in 0..side {
            let tp = cm.at(i, i) as f64;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for j in 0..side {
                if j != i {
                    fp += cm.at(j, i) as f64;
                    fn_ += cm.at(i, j) as f64;
                }
            }
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            f1_sum += f1;
        }
        let macro_f1 = f1_sum / side as f64;

        let mut diag = 0u64;
        let mut total = 0u64;
        for g in 0..side {
            for p in 0..side {
                total += cm.at(g, p);
                if g == p {
                    diag += cm.at(g, p);
                }
            }
        }
        let total_acc = diag as f64 / total as f64;

        let mut known_correct = 0u64;
        let mut known_total = 0u64;
        for g in 0..side - 1 {
            for p in 0..side {
                known_total += cm.at(g, p);
                if g == p {
                    known_correct += cm.at(g, p);
                }
            }
        }
        let id_acc = known_correct as f64 / known_total as f64;
        (macro_f1, total_acc, id_acc)
    }

    #[test]
    fn empty_and_single_counts() {
        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(total_accuracy(&cm).is_err());

        let cm = confusion(&[Verdict::Known(1)], &[Verdict::Known(1)], 3).unwrap();
        assert_eq!(cm.at(1, 1), 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(total_accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_and_range_errors() {
        assert!(confusion(&[Verdict::Unknown], &[], 2).is_err());
        assert!(confusion(&[Verdict::Known(2)], &[Verdict::Known(0)], 2).is_err());
    }

    #[test]
    fn row_sums_match_gold_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = 4;
        let draw = |rng: &mut ChaCha8Rng| {
            let c = rng.gen_range(0..=k);
            if c == k {
                Verdict::Unknown
            } else {
                Verdict::Known(c)
            }
        };
        let preds: Vec<Verdict> = (0..500).map(|_| draw(&mut rng)).collect();
        let golds: Vec<Verdict> = (0..500).map(|_| draw(&mut rng)).collect();
        let cm = confusion(&preds, &golds, k).unwrap();
        for g in 0..=k {
            let row_sum: u64 = (0..=k).map(|p| cm.at(g, p)).sum();
            let expected = golds
                .iter()
                .filter(|v| v.class_index(k) == g)
                .count() as u64;
            assert_eq!(row_sum, expected);
        }
        assert_eq!(cm.total(), 500);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let cm = from_rows(&[&[5, 0, 0], &[0, 7, 0], &[0, 0, 3]]);
        assert_eq!(macro_f1(&cm), 1.0);
        assert_eq!(total_accuracy(&cm).unwrap(), 1.0);
        assert_eq!(id_accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn absent_class_contributes_zero_f1() {
        // class 1 never appears as gold or prediction: 0/0 := 0
        let cm = from_rows(&[&[4, 0, 0], &[0, 0, 0], &[0, 0, 4]]);
        let (_, _, f1) = super::class_prf(&cm, 1);
        assert_eq!(f1, 0.0);
        assert!((macro_f1(&cm) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_matrix_matches_loop_oracle() {
        let cm = from_rows(&[&[8, 1, 1], &[0, 9, 1], &[2, 0, 8]]);
        let (mf1, ta, ida) = oracle(&cm);
        assert!((macro_f1(&cm) - mf1).abs() < 1e-12);
        assert!((total_accuracy(&cm).unwrap() - ta).abs() < 1e-12);
        assert!((id_accuracy(&cm).unwrap() - ida).abs() < 1e-12);
        // frozen expected values for this matrix
        assert!((macro_f1(&cm) - (0.8 + 0.9 + 0.8) / 3.0).abs() < 1e-12);
        assert!((total_accuracy(&cm).unwrap() - 25.0 / 30.0).abs() < 1e-12);
        assert!((id_accuracy(&cm).unwrap() - 17.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn seven_of_ten_diagonal() {
        let cm = from_rows(&[&[4, 1, 0], &[1, 2, 0], &[1, 0, 1]]);
        assert!((total_accuracy(&cm).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejected_known_sample_lowers_id_accuracy() {
        let clean = from_rows(&[&[5, 0, 0], &[0, 5, 0], &[0, 0, 5]]);
        // one known sample of class 0 predicted Unknown
        let rejected = from_rows(&[&[4, 0, 1], &[0, 5, 0], &[0, 0, 5]]);
        assert!(id_accuracy(&rejected).unwrap() < id_accuracy(&clean).unwrap());
        assert!((id_accuracy(&rejected).unwrap() - 9.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn no_known_gold_rows_is_an_argument_error() {
        let cm = from_rows(&[&[0, 0, 0], &[0, 0, 0], &[0, 0, 4]]);
        assert!(id_accuracy(&cm).is_err());
    }

    #[test]
    fn random_matrices_match_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.gen_range(2..6);
            let mut cm = ConfusionMatrix::new(k);
            // ensure at least one known-gold sample
            cm.add(0, rng.gen_range(0..=k));
            for _ in 0..rng.gen_range(1..200) {
                cm.add(rng.gen_range(0..=k), rng.gen_range(0..=k));
            }
            let (mf1, ta, ida) = oracle(&cm);
            assert!((macro_f1(&cm) - mf1).abs() < 1e-12);
            assert!((total_accuracy(&cm).unwrap() - ta).abs() < 1e-12);
            assert!((id_accuracy(&cm).unwrap() - ida).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_invariant_under_class_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = 4;
        let draw = |rng: &mut ChaCha8Rng| {
            let c = rng.gen_range(0..=k);
            if c == k {
                Verdict::Unknown
            } else {
                Verdict::Known(c)
            }
        };
        let preds: Vec<Verdict> = (0..200).map(|_| draw(&mut rng)).collect();
        let golds: Vec<Verdict> = (0..200).map(|_| draw(&mut rng)).collect();
        let perm = [2usize, 0, 3, 1];
        let apply = |v: &Verdict| match v {
            Verdict::Known(c) => Verdict::Known(perm[*c]),
            Verdict::Unknown => Verdict::Unknown,
        };
        let cm = confusion(&preds, &golds, k).unwrap();
        let permuted = confusion(
            &preds.iter().map(apply).collect::<Vec<_>>(),
            &golds.iter().map(apply).collect::<Vec<_>>(),
            k,
        )
        .unwrap();
        assert!((macro_f1(&cm) - macro_f1(&permuted)).abs() < 1e-12);
        assert!(
            (total_accuracy(&cm).unwrap() - total_accuracy(&permuted).unwrap()).abs() < 1e-12
        );
        assert!((id_accuracy(&cm).unwrap() - id_accuracy(&permuted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn report_serializes_with_fixed_fields() {
        let cm = from_rows(&[&[8, 1, 1], &[0, 9, 1], &[2, 0, 8]]);
        let report = MetricsReport::from_confusion(&cm).unwrap();
        assert_eq!(report.per_class.len(), 3);
        assert_eq!(report.confusion[0], vec![8, 1, 1]);
        let json = serde_json::to_string(&report).unwrap();
        for key in ["macro_f1", "total_accuracy", "id_accuracy", "per_class", "confusion"] {
            assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
        }
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
