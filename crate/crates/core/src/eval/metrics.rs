use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terminal energies closer to zero than this (J) give no APE.
pub const APE_GUARD: f64 = 1.0;

/// `|(y_T - f_T) / y_T|` for cumulative energies at the last sample.
pub fn ape_terminal(y_t: f64, f_t: f64) -> Result<f64> {
    if !(y_t.abs() >= APE_GUARD) {
        return Err(Error::UndefinedApe(y_t));
    }
    Ok(((y_t - f_t) / y_t).abs())
}

/// Physics terminal energy plus the corrective model's terminal residual.
pub fn hybrid_predict(phys_pred_t: f64, corrective_t: f64) -> f64 {
    phys_pred_t + corrective_t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Data("no errors to summarize".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Summary {
        min,
        avg: avg.clamp(min, max),
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ape_values() {
        assert_eq!(ape_terminal(10.0, 9.0).unwrap(), 0.1);
        assert_eq!(ape_terminal(2000.0, 2500.0).unwrap(), 0.25);
        assert_eq!(ape_terminal(-50.0, -50.0).unwrap(), 0.0);
        assert!(matches!(ape_terminal(0.5, 1.0), Err(Error::UndefinedApe(_))));
        assert!(ape_terminal(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn hybrid_values() {
        assert_eq!(hybrid_predict(3500.0, 400.0), 3900.0);
        assert_eq!(hybrid_predict(3500.0, 0.0), 3500.0);
        let (y, phys) = (4200.0, 3500.0);
        assert_eq!(ape_terminal(y, hybrid_predict(phys, y - phys)).unwrap(), 0.0);
    }

    #[test]
    fn summary_values() {
        let s = summarize(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((s.min, s.max), (0.1, 0.3));
        assert!((s.avg - 0.2).abs() < 1e-15);
        let one = summarize(&[0.7]).unwrap();
        assert_eq!((one.min, one.avg, one.max), (0.7, 0.7, 0.7));
        assert!(summarize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn summary_is_ordered(v in proptest::collection::vec(0.0f64..10.0, 1..50)) {
            let s = summarize(&v).unwrap();
            prop_assert!(s.min <= s.avg && s.avg <= s.max);
        }
    }
}
