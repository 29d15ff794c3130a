use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};

use super::model::{code, Key};

/// Covariates a propensity conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    Marginal,
    Z,
    ZW,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PropensityLearner {
    #[default]
    FrequencyTable,
    LogisticIrls,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityReport {
    pub conditioning: Conditioning,
    pub learner: PropensityLearner,
    pub clip: f64,
    /// Fraction of training rows whose prediction for `X = 1` was clipped.
    pub clip_rate: f64,
    pub n_cells: usize,
}

/// `P(X = x | V)` for `V` in {nothing, Z, (Z, W)}, clipped to `[clip, 1 - clip]`.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    conditioning: Conditioning,
    learner: PropensityLearner,
    clip: f64,
    marginal: f64,
    z_table: BTreeMap<Key, (usize, usize)>,
    zw_table: BTreeMap<Key, (usize, usize)>,
    beta: Option<DVector<f64>>,
    clip_rate: f64,
}

fn key(v: &[f64]) -> Result<Key> {
    v.iter().map(|&x| code(x)).collect()
}

fn design_row(conditioning: Conditioning, z: &[f64], w: &[f64]) -> Vec<f64> {
    let mut r = vec![1.0];
    r.extend_from_slice(z);
    if conditioning == Conditioning::ZW {
        r.extend_from_slice(w);
    }
    r
}

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn irls(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let ridge = 1e-8 * x.nrows() as f64;
    for _ in 0..100 {
        let eta = x * &beta;
        let mu = eta.map(|e| sigmoid(e).clamp(1e-12, 1.0 - 1e-12));
        let wts = mu.map(|m| m * (1.0 - m));
        let mut xtwx = DMatrix::zeros(p, p);
        for i in 0..x.nrows() {
            let row = x.row(i);
            xtwx += row.transpose() * row * wts[i];
        }
        for j in 1..p {
            xtwx[(j, j)] += ridge;
        }
        let grad = x.transpose() * (y - &mu) - {
            let mut pen = beta.clone() * ridge;
            pen[0] = 0.0;
            pen
        };
        let step = xtwx
            .cholesky()
            .ok_or_else(|| Error::Estimation("logistic propensity: singular information matrix".into()))?
            .solve(&grad);
        beta += &step;
        if step.norm() < 1e-10 {
            return Ok(beta);
        }
    }
    Ok(beta)
}

/// Fits `P(X | V)`; `clip` must lie in `(0, 0.5)`.
pub fn fit_propensity(cohort: &Cohort, conditioning: Conditioning, learner: PropensityLearner, clip: f64) -> Result<PropensityModel> {
    if !(clip > 0.0 && clip < 0.5) {
        return Err(Error::InvalidParameter(format!("clip {clip} must lie in (0, 0.5)")));
    }
    cohort.require_both_groups()?;
    let n = cohort.len();
    let n1 = cohort.count_group(1);
    let mut model = PropensityModel {
        conditioning,
        learner,
        clip,
        marginal: n1 as f64 / n as f64,
        z_table: BTreeMap::new(),
        zw_table: BTreeMap::new(),
        beta: None,
        clip_rate: 0.0,
    };
    match learner {
        PropensityLearner::FrequencyTable => {
            if conditioning != Conditioning::Marginal {
                for r in cohort.rows() {
                    let kz = key(r.z)?;
                    let e = model.z_table.entry(kz.clone()).or_insert((0, 0));
                    e.0 += usize::from(r.x);
                    e.1 += 1;
                    if conditioning == Conditioning::ZW {
                        let mut kzw = kz;
                        kzw.extend(key(r.w)?);
                        let e = model.zw_table.entry(kzw).or_insert((0, 0));
                        e.0 += usize::from(r.x);
                        e.1 += 1;
                    }
                }
            }
        }
        PropensityLearner::LogisticIrls => {
            if conditioning != Conditioning::Marginal {
                let rows: Vec<Vec<f64>> = cohort.rows().map(|r| design_row(conditioning, r.z, r.w)).collect();
                let p = rows[0].len();
                let x = DMatrix::from_row_iterator(n, p, rows.into_iter().flatten());
                let y = DVector::from_iterator(n, cohort.x().iter().map(|&v| f64::from(v)));
                model.beta = Some(irls(&x, &y)?);
            }
        }
    }
    let clipped = cohort
        .rows()
        .map(|r| model.predict_raw(r.z, r.w))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&p| p < clip || p > 1.0 - clip)
        .count();
    model.clip_rate = clipped as f64 / n as f64;
    Ok(model)
}

impl PropensityModel {
    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    /// Unclipped `P(X = 1 | V)`; frequency tables back off from `(Z, W)` to `Z` to the marginal.
    pub fn predict_raw(&self, z: &[f64], w: &[f64]) -> Result<f64> {
        if self.conditioning == Conditioning::Marginal {
            return Ok(self.marginal);
        }
        if let Some(beta) = &self.beta {
            let row = design_row(self.conditioning, z, w);
            if row.len() != beta.len() {
                return Err(Error::Schema("covariate dimensions differ from the fitted propensity".into()));
            }
            let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            return Ok(sigmoid(eta));
        }
        let kz = key(z)?;
        if self.conditioning == Conditioning::ZW {
            let mut kzw = kz.clone();
            kzw.extend(key(w)?);
            if let Some(&(a, b)) = self.zw_table.get(&kzw) {
                return Ok(a as f64 / b as f64);
            }
        }
        if let Some(&(a, b)) = self.z_table.get(&kz) {
            return Ok(a as f64 / b as f64);
        }
        Ok(self.marginal)
    }

    /// Clipped `P(X = x | V)`.
    pub fn predict(&self, x: u8, z: &[f64], w: &[f64]) -> Result<f64> {
        let p1 = self.predict_raw(z, w)?.clamp(self.clip, 1.0 - self.clip);
        Ok(if x == 1 { p1 } else { 1.0 - p1 })
    }

    pub fn report(&self) -> PropensityReport {
        PropensityReport {
            conditioning: self.conditioning,
            learner: self.learner,
            clip: self.clip,
            clip_rate: self.clip_rate,
            n_cells: match self.conditioning {
                Conditioning::Marginal => 1,
                Conditioning::Z => self.z_table.len(),
                Conditioning::ZW => self.zw_table.len(),
            },
        }
    }
}
