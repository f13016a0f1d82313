use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Threshold grid of a ReLU spline; the basis is `min(x, tau_j)` per knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluSplineSpec {
    pub thresholds: Vec<f64>,
}

impl ReluSplineSpec {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::config("ReLU spline needs at least one threshold"));
        }
        if thresholds.iter().any(|v| !v.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::config(format!(
                "ReLU spline thresholds must be finite and strictly increasing: {thresholds:?}"
            )));
        }
        Ok(ReluSplineSpec { thresholds })
    }

    /// `n` equidistant knots `lo + j (hi - lo) / n`, `j = 1..=n`.
    pub fn equidistant(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(hi > lo) {
            return Err(Error::config(format!(
                "cannot place {n} knots on [{lo}, {hi}]"
            )));
        }
        Self::new(
            (1..=n)
                .map(|j| lo + j as f64 * (hi - lo) / n as f64)
                .collect(),
        )
    }

    /// Multiples of `step` strictly below `hi`, followed by `hi` itself.
    pub fn stepped(step: f64, hi: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi > 0.0) {
            return Err(Error::config(format!(
                "invalid spline step {step} up to {hi}"
            )));
        }
        let mut knots: Vec<f64> = (1..)
            .map(|j| j as f64 * step)
            .take_while(|&k| k < hi)
            .collect();
        knots.push(hi);
        Self::new(knots)
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    #[inline]
    pub fn fill(&self, x: f64, out: &mut [f64]) {
        for (o, &k) in out.iter_mut().zip(&self.thresholds) {
            *o = x.min(k);
        }
    }
}

pub fn relu_basis(x: f64, spec: &ReluSplineSpec) -> Result<Vec<f64>> {
    if spec.thresholds.is_empty() {
        return Err(Error::config("empty ReLU threshold grid"));
    }
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite spline input {x}")));
    }
    let mut out = vec![0.0; spec.len()];
    spec.fill(x, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s = ReluSplineSpec::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(relu_basis(1.5, &s).unwrap(), vec![1.0, 1.5]);
        let p = ReluSplineSpec::new(vec![0.5, 3.0, 9.0]).unwrap();
        assert_eq!(relu_basis(0.0, &p).unwrap(), vec![0.0; 3]);
        assert_eq!(relu_basis(100.0, &p).unwrap(), p.thresholds);
        assert!(relu_basis(1.0, &ReluSplineSpec { thresholds: vec![] }).is_err());
        assert!(ReluSplineSpec::new(vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn grids() {
        let e = ReluSplineSpec::equidistant(0.0, 125.0, 10).unwrap();
        assert_eq!(e.len(), 10);
        assert_eq!(e.thresholds[0], 12.5);
        assert_eq!(*e.thresholds.last().unwrap(), 125.0);
        let s = ReluSplineSpec::stepped(32.0, 125.0).unwrap();
        assert_eq!(s.thresholds, vec![32.0, 64.0, 96.0, 125.0]);
        let t = ReluSplineSpec::stepped(25.0, 125.0).unwrap();
        assert_eq!(t.thresholds, vec![25.0, 50.0, 75.0, 100.0, 125.0]);
    }

    proptest! {
        #[test]
        fn components_are_concave_nondecreasing(a in -50.0f64..50.0, b in -50.0f64..50.0, w in 0.0f64..1.0) {
            let s = ReluSplineSpec::equidistant(-20.0, 20.0, 7).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let fa = relu_basis(lo, &s).unwrap();
            let fb = relu_basis(hi, &s).unwrap();
            let fm = relu_basis(w * lo + (1.0 - w) * hi, &s).unwrap();
            for j in 0..s.len() {
                prop_assert!(fa[j] <= fb[j]);
                prop_assert!(fm[j] >= w * fa[j] + (1.0 - w) * fb[j] - 1e-12);
            }
        }
    }
}
