//! Bagged survival trees grown with the log-rank splitting rule.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::survival::{union_breakpoints, CurveKind, RiskTable, StepCurve};

use super::model::{Fallback, Predicted, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { n_trees: 50, min_leaf: 10, max_depth: 6 }
    }
}

const MAX_THRESHOLDS: usize = 16;
const ALL_DISTINCT_UP_TO: usize = 32;

#[derive(Debug)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(Arc<Predicted>, usize),
}

#[derive(Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, features: &[f64]) -> &Arc<Predicted> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(p, _) => return p,
                Node::Split { feature, threshold, left, right } => {
                    i = if features[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug)]
pub(crate) struct TreeEnsemble {
    target: Target,
    trees: Vec<Tree>,
}

struct Data<'a> {
    cohort: &'a Cohort,
    features: Vec<f64>,
    p: usize,
    event: Vec<bool>,
    target: Target,
    params: TreeParams,
}

fn row_features(x: u8, z: &[f64], w: &[f64]) -> Vec<f64> {
    std::iter::once(f64::from(x)).chain(z.iter().copied()).chain(w.iter().copied()).collect()
}

fn thresholds(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() <= 1 {
        return Vec::new();
    }
    if distinct.len() <= ALL_DISTINCT_UP_TO {
        distinct.pop();
        return distinct;
    }
    let n = values.len();
    let mut out: Vec<f64> = (1..=MAX_THRESHOLDS)
        .map(|q| values[((q * n) / (MAX_THRESHOLDS + 1)).min(n - 1)])
        .collect();
    out.dedup();
    let max = *distinct.last().expect("nonempty");
    out.retain(|&t| t < max);
    out
}

struct Best {
    stat: f64,
    feature: usize,
    threshold: f64,
}

impl Data<'_> {
    fn time(&self, i: usize) -> f64 {
        self.cohort.times()[i]
    }

    /// Best log-rank split of `rows`, which are sorted by time.
    fn best_split(&self, rows: &[usize]) -> Option<Best> {
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut s = 0;
        while s < rows.len() {
            let t = self.time(rows[s]);
            let mut e = s;
            while e < rows.len() && self.time(rows[e]) == t {
                e += 1;
            }
            groups.push((s, e));
            s = e;
        }
        let n_total = rows.len();
        let mut best: Option<Best> = None;
        for f in 0..self.p {
            let thr = thresholds(rows.iter().map(|&i| self.features[i * self.p + f]).collect());
            if thr.is_empty() {
                continue;
            }
            let nb = thr.len() + 1;
            let bin = |i: usize| thr.partition_point(|&t| t < self.features[i * self.p + f]);
            let mut cnt = vec![0usize; nb];
            let mut d = vec![0usize; groups.len() * nb];
            let mut leave = vec![0usize; groups.len() * nb];
            for (j, &(s, e)) in groups.iter().enumerate() {
                for &i in &rows[s..e] {
                    let b = bin(i);
                    cnt[b] += 1;
                    leave[j * nb + b] += 1;
                    if self.event[i] {
                        d[j * nb + b] += 1;
                    }
                }
            }
            let mut left_size = 0;
            for b in 0..thr.len() {
                left_size += cnt[b];
                if left_size < self.params.min_leaf || n_total - left_size < self.params.min_leaf {
                    continue;
                }
                let (mut n, mut nl) = (n_total as f64, left_size as f64);
                let (mut num, mut var) = (0.0, 0.0);
                for j in 0..groups.len() {
                    let row_d = &d[j * nb..(j + 1) * nb];
                    let row_l = &leave[j * nb..(j + 1) * nb];
                    let dj: usize = row_d.iter().sum();
                    let dl: usize = row_d[..=b].iter().sum();
                    if dj > 0 && n > 1.0 {
                        let dj = dj as f64;
                        let frac = nl / n;
                        num += dl as f64 - dj * frac;
                        var += dj * frac * (1.0 - frac) * (n - dj) / (n - 1.0);
                    }
                    n -= row_l.iter().sum::<usize>() as f64;
                    nl -= row_l[..=b].iter().sum::<usize>() as f64;
                }
                if var <= 1e-12 {
                    continue;
                }
                let stat = num * num / var;
                if best.as_ref().map_or(true, |bst| stat > bst.stat) {
                    best = Some(Best { stat, feature: f, threshold: thr[b] });
                }
            }
        }
        best
    }

    fn leaf(&self, rows: &[usize]) -> Result<Node> {
        let times: Vec<f64> = rows.iter().map(|&i| self.time(i)).collect();
        let deltas: Vec<u8> = rows.iter().map(|&i| self.cohort.deltas()[i]).collect();
        let table = RiskTable::new(&times, &deltas, self.cohort.n_causes())?;
        Ok(Node::Leaf(Arc::new(Predicted::from_table(&table, self.target, Fallback::None)?), rows.len()))
    }

    fn grow(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> Result<usize> {
        let id = nodes.len();
        nodes.push(Node::Leaf(Arc::new(placeholder()), 0));
        let has_event = rows.iter().any(|&i| self.event[i]);
        let split = if depth < self.params.max_depth && has_event && rows.len() >= 2 * self.params.min_leaf {
            self.best_split(&rows)
        } else {
            None
        };
        match split {
            None => nodes[id] = self.leaf(&rows)?,
            Some(b) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.features[i * self.p + b.feature] <= b.threshold);
                let left = self.grow(l, depth + 1, nodes)?;
                let right = self.grow(r, depth + 1, nodes)?;
                nodes[id] = Node::Split { feature: b.feature, threshold: b.threshold, left, right };
            }
        }
        Ok(id)
    }
}

fn placeholder() -> Predicted {
    let s = StepCurve::constant(CurveKind::Survival, 1.0).expect("constant");
    let h = StepCurve::constant(CurveKind::CumulativeHazard, 0.0).expect("constant");
    Predicted { survival: s, cumulative_hazard: h, cif: Vec::new(), fallback: Fallback::None }
}

impl TreeEnsemble {
    pub(crate) fn fit(cohort: &Cohort, target: Target, params: TreeParams, seed: u64) -> Result<Self> {
        if params.n_trees == 0 || params.min_leaf == 0 {
            return Err(Error::InvalidParameter("tree ensemble needs at least one tree and min_leaf >= 1".into()));
        }
        let p = 1 + cohort.z_dim() + cohort.w_dim();
        let features: Vec<f64> = cohort.rows().flat_map(|r| row_features(r.x, r.z, r.w)).collect();
        let event = cohort
            .deltas()
            .iter()
            .map(|&d| match target {
                Target::Event => d == 1,
                Target::AllCause | Target::Competing => d >= 1,
                Target::Censoring => d == 0,
            })
            .collect();
        let data = Data { cohort, features, p, event, target, params };
        let n = cohort.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                rows.sort_by(|&a, &c| cohort.times()[a].total_cmp(&cohort.times()[c]).then(a.cmp(&c)));
                let mut nodes = Vec::new();
                data.grow(rows, 0, &mut nodes)?;
                Ok(Tree { nodes })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TreeEnsemble { target, trees })
    }

    /// Averages leaf cumulative hazards (and incidences) over trees; survival is
    /// `exp(-mean CHF)`, or `1 - sum_k mean CIF_k` for the competing target.
    pub(crate) fn predict(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Predicted> {
        let f = row_features(x, z, w);
        let leaves: Vec<&Arc<Predicted>> = self.trees.iter().map(|t| t.leaf(&f)).collect();
        let mut curves: Vec<&StepCurve<f64>> = leaves.iter().map(|p| &p.cumulative_hazard).collect();
        for p in &leaves {
            curves.extend(p.cif.iter());
        }
        let grid = union_breakpoints(&curves);
        let m = leaves.len() as f64;
        let chf: Vec<f64> = grid.iter().map(|&t| leaves.iter().map(|p| p.cumulative_hazard.at(t)).sum::<f64>() / m).collect();
        let n_cif = leaves.first().map_or(0, |p| p.cif.len());
        let cif = (0..n_cif)
            .map(|k| {
                let v = grid.iter().map(|&t| leaves.iter().map(|p| p.cif[k].at(t)).sum::<f64>() / m).collect();
                StepCurve::new_clamped(CurveKind::Cif, 0.0, grid.clone(), v)
            })
            .collect::<Result<Vec<_>>>()?;
        let surv: Vec<f64> = if self.target == Target::Competing {
            (0..grid.len()).map(|j| 1.0 - cif.iter().map(|c| c.values()[j]).sum::<f64>()).collect()
        } else {
            chf.iter().map(|h| (-h).exp()).collect()
        };
        Ok(Predicted {
            survival: StepCurve::new_clamped(CurveKind::Survival, 1.0, grid.clone(), surv)?,
            cumulative_hazard: StepCurve::new_clamped(CurveKind::CumulativeHazard, 0.0, grid, chf)?,
            cif,
            fallback: Fallback::None,
        })
    }

    /// Smallest leaf size over all trees, counting bootstrap rows with multiplicity.
    pub(crate) fn min_leaf_size(&self) -> usize {
        self.trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                Node::Leaf(_, size) => Some(*size),
                Node::Split { .. } => None,
            })
            .min()
            .unwrap_or(0)
    }
}
