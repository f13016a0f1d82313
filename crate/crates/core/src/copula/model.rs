use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::constant::fit_constant_dependence;
use super::matrix::{check_correlation, factor, repair_correlation, restrict};
use super::pit::PseudoObs;
use super::timevarying::{fit_time_varying, PairCurve};
use crate::features::calendar::{active_hours, HOURS, MAX_SESSION};
use crate::{seed, Error, Result};

pub const REPAIR_METHOD: &str = "eigenvalue clipping at 1e-8 with unit-diagonal rescaling";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceKind {
    Independent,
    Constant,
    TimeVarying,
}

impl DependenceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Self::Independent),
            "constant" => Ok(Self::Constant),
            "time_varying" => Ok(Self::TimeVarying),
            _ => Err(Error::config(format!("unknown dependence kind {s:?}"))),
        }
    }
}

/// Fitted cross-hour dependence of the normal scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DependenceModel {
    Independent,
    Constant {
        /// Repaired 24x24 correlation matrix, row major.
        corr: Vec<f64>,
        raw: Vec<f64>,
        counts: Vec<usize>,
        repair: String,
    },
    TimeVarying {
        curves: Vec<PairCurve>,
        sd: Vec<f64>,
        repair: String,
    },
}

impl DependenceModel {
    pub fn fit(kind: DependenceKind, p: &PseudoObs) -> Self {
        match kind {
            DependenceKind::Independent => DependenceModel::Independent,
            DependenceKind::Constant => {
                let e = fit_constant_dependence(p);
                DependenceModel::Constant {
                    corr: e.repaired.as_slice().to_vec(),
                    raw: e.raw.as_slice().to_vec(),
                    counts: e.counts,
                    repair: REPAIR_METHOD.into(),
                }
            }
            DependenceKind::TimeVarying => {
                let e = fit_time_varying(p);
                DependenceModel::TimeVarying {
                    curves: e.curves,
                    sd: e.sd,
                    repair: REPAIR_METHOD.into(),
                }
            }
        }
    }

    pub fn kind(&self) -> DependenceKind {
        match self {
            DependenceModel::Independent => DependenceKind::Independent,
            DependenceModel::Constant { .. } => DependenceKind::Constant,
            DependenceModel::TimeVarying { .. } => DependenceKind::TimeVarying,
        }
    }

    /// Raw (unrepaired) correlation of hours `a` and `b` at bucket `t`.
    pub fn rho(&self, t: usize, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        match self {
            DependenceModel::Independent => 0.0,
            DependenceModel::Constant { corr, .. } => corr[a * HOURS + b],
            DependenceModel::TimeVarying { curves, .. } => {
                let (lo, hi) = (a.min(b), a.max(b));
                let idx = lo * HOURS - lo * (lo + 1) / 2 + (hi - lo - 1);
                curves[idx].rho(t)
            }
        }
    }

    pub fn plan(&self) -> Result<SamplingPlan> {
        match self {
            DependenceModel::Independent => Ok(SamplingPlan::independent()),
            DependenceModel::Constant { corr, .. } => {
                if corr.len() != HOURS * HOURS {
                    return Err(Error::schema(format!(
                        "constant correlation needs {} entries",
                        HOURS * HOURS
                    )));
                }
                SamplingPlan::from_matrix(&DMatrix::from_column_slice(HOURS, HOURS, corr))
            }
            DependenceModel::TimeVarying { curves, .. } => {
                if curves.len() != HOURS * (HOURS - 1) / 2 {
                    return Err(Error::schema(
                        "time-varying model needs one curve per hour pair",
                    ));
                }
                SamplingPlan::from_fn(|t, a, b| self.rho(t, a, b))
            }
        }
    }
}

/// Ground-truth dependence for synthetic worlds: equicorrelation across the
/// hours active at `t`, constant or moving linearly from `start` at t = 0 to
/// `end` at the longest session's last bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthDependence {
    Independent,
    Constant { rho: f64 },
    Ramp { start: f64, end: f64 },
}

impl TruthDependence {
    pub fn rho(&self, t: usize) -> f64 {
        match *self {
            TruthDependence::Independent => 0.0,
            TruthDependence::Constant { rho } => rho,
            TruthDependence::Ramp { start, end } => {
                start + (end - start) * t as f64 / (MAX_SESSION - 1) as f64
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| (0.0..1.0).contains(&r);
        let valid = match *self {
            TruthDependence::Independent => true,
            TruthDependence::Constant { rho } => ok(rho),
            TruthDependence::Ramp { start, end } => ok(start) && ok(end),
        };
        if !valid {
            return Err(Error::config(format!(
                "equicorrelation must lie in [0, 1): {self:?}"
            )));
        }
        Ok(())
    }

    pub fn plan(&self) -> Result<SamplingPlan> {
        self.validate()?;
        match self {
            TruthDependence::Independent => Ok(SamplingPlan::independent()),
            _ => SamplingPlan::from_fn(|t, _, _| self.rho(t)),
        }
    }
}

/// Correlation matrices and their factors for every bucket, restricted to
/// the hours trading at that bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub matrices: Vec<Option<DMatrix<f64>>>,
    factors: Vec<Option<DMatrix<f64>>>,
}

impl SamplingPlan {
    pub fn independent() -> Self {
        SamplingPlan {
            matrices: vec![None; MAX_SESSION],
            factors: vec![None; MAX_SESSION],
        }
    }

    fn with_matrices(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let mut factors = Vec::with_capacity(mats.len());
        for (t, m) in mats.iter().enumerate() {
            check_correlation(m).map_err(|e| Error::numerical(format!("bucket {t}: {e}\n{m}")))?;
            factors.push(Some(factor(m)?));
        }
        Ok(SamplingPlan {
            matrices: mats.into_iter().map(Some).collect(),
            factors,
        })
    }

    /// Restrictions of one repaired full matrix.
    pub fn from_matrix(full: &DMatrix<f64>) -> Result<Self> {
        let full = repair_correlation(full);
        Self::with_matrices(
            (0..MAX_SESSION)
                .map(|t| restrict(&full, active_hours(t)))
                .collect(),
        )
    }

    /// Per-bucket matrices from `rho(t, a, b)`, each repaired separately.
    pub fn from_fn(rho: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mats = (0..MAX_SESSION)
            .map(|t| {
                let r = active_hours(t);
                let n = r.len();
                let m = DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        1.0
                    } else {
                        rho(t, r.start + i, r.start + j)
                    }
                });
                repair_correlation(&m)
            })
            .collect();
        Self::with_matrices(mats)
    }

    /// Fills `out` (one entry per active hour at `t`) with correlated
    /// standard normal draws.
    pub fn draw<R: Rng + ?Sized>(&self, t: usize, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), active_hours(t).len());
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if let Some(l) = &self.factors[t] {
            for i in (0..out.len()).rev() {
                let mut s = 0.0;
                for j in 0..=i {
                    s += l[(i, j)] * out[j];
                }
                out[i] = s;
            }
        }
    }
}

/// `n_paths` draws over the hours active at `t`.
pub fn sample_z(
    model: &DependenceModel,
    t: usize,
    n_paths: usize,
    seed_root: u64,
) -> Result<Vec<Vec<f64>>> {
    if t >= MAX_SESSION {
        return Err(Error::domain(format!("bucket {t} outside every session")));
    }
    let plan = model.plan()?;
    let n = active_hours(t).len();
    Ok((0..n_paths)
        .map(|m| {
            let mut rng = seed::rng(seed_root, &[seed::label("z"), t as u64, m as u64]);
            let mut out = vec![0.0; n];
            plan.draw(t, &mut rng, &mut out);
            out
        })
        .collect())
}
