//! Error metrics over the hidden entries of a window.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::Scalar;

/// Running sums of squared and absolute errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorAccumulator {
    pub squared: f64,
    pub absolute: f64,
    pub count: usize,
}

impl ErrorAccumulator {
    /// Adds every entry where `mask` is false and the node is not excluded.
    pub fn add<T: Scalar>(&mut self, pred: &Array2<T>, targets: &Array2<T>, mask: &Array2<bool>, excluded: &[usize]) -> Result<()> {
        if pred.dim() != targets.dim() || pred.dim() != mask.dim() {
            return input("prediction, target and mask shapes differ");
        }
        for (((_, n), &p), (&t, &m)) in pred.indexed_iter().zip(targets.iter().zip(mask)) {
            if m || excluded.contains(&n) {
                continue;
            }
            let e = p.to_f64_lossy() - t.to_f64_lossy();
            self.squared += e * e;
            self.absolute += e.abs();
            self.count += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ErrorAccumulator) {
        self.squared += other.squared;
        self.absolute += other.absolute;
        self.count += other.count;
    }

    pub fn mse(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.squared / self.count as f64
        }
    }

    pub fn mae(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.absolute / self.count as f64
        }
    }

    pub fn rmse(&self) -> f64 {
        self.mse().sqrt()
    }
}

fn single<T: Scalar>(pred: &Array2<T>, targets: &Array2<T>, mask: &Array2<bool>) -> Result<ErrorAccumulator> {
    let mut acc = ErrorAccumulator::default();
    acc.add(pred, targets, mask, &[])?;
    if acc.count == 0 {
        return input("no missing entries to score");
    }
    Ok(acc)
}

pub fn mse<T: Scalar>(pred: &Array2<T>, targets: &Array2<T>, mask: &Array2<bool>) -> Result<f64> {
    Ok(single(pred, targets, mask)?.mse())
}

pub fn mae<T: Scalar>(pred: &Array2<T>, targets: &Array2<T>, mask: &Array2<bool>) -> Result<f64> {
    Ok(single(pred, targets, mask)?.mae())
}

pub fn rmse<T: Scalar>(pred: &Array2<T>, targets: &Array2<T>, mask: &Array2<bool>) -> Result<f64> {
    Ok(single(pred, targets, mask)?.rmse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_computed_metrics() {
        let targets = array![[0.5, 0.5], [0.5, 0.5]];
        let pred = array![[0.8, 0.1], [0.9, 0.5]];
        let mask = array![[false, false], [true, true]];
        assert!((mse(&pred, &targets, &mask).unwrap() - 0.125).abs() < 1e-12);
        assert!((mae(&pred, &targets, &mask).unwrap() - 0.35).abs() < 1e-12);
        assert!((rmse(&pred, &targets, &mask).unwrap() - 0.125f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&pred, &targets, &mask).unwrap() - 0.35355).abs() < 1e-5);
        assert_eq!(mse(&targets, &targets, &mask).unwrap(), 0.0);
        assert_eq!(mae(&targets, &targets, &mask).unwrap(), 0.0);
        assert!(mse(&pred, &targets, &Array2::from_elem((2, 2), true)).is_err());
    }

    #[test]
    fn exclusion_and_merge() {
        let targets = array![[0.0, 0.0]];
        let pred = array![[1.0, 3.0]];
        let mask = array![[false, false]];
        let mut a = ErrorAccumulator::default();
        a.add(&pred, &targets, &mask, &[1]).unwrap();
        assert_eq!((a.count, a.mse()), (1, 1.0));
        let mut b = ErrorAccumulator::default();
        b.add(&pred, &targets, &mask, &[0]).unwrap();
        a.merge(&b);
        assert_eq!((a.count, a.mse(), a.mae()), (2, 5.0, 2.0));
    }
}
