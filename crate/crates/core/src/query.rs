//! Potential-outcome queries and the outcome functionals they are evaluated on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intervention triple `(x_y, x_w, x_z)`: the direct path is set to `x_y`,
/// mediators are drawn as under `x_w`, and the population is `X = x_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Query {
    pub x_y: u8,
    pub x_w: u8,
    pub x_z: u8,
}

pub type PotentialOutcomeQuery = Query;

impl Query {
    pub fn new(x_y: u8, x_w: u8, x_z: u8) -> Result<Self> {
        if x_y > 1 || x_w > 1 || x_z > 1 {
            return Err(Error::InvalidParameter(format!("query ({x_y},{x_w},{x_z}) must have entries in {{0,1}}")));
        }
        Ok(Query { x_y, x_w, x_z })
    }

    /// The observational query `(x, x, x)`.
    pub fn observational(x: u8) -> Self {
        Query { x_y: x, x_w: x, x_z: x }
    }

    /// All eight triples in lexicographic order.
    pub fn all() -> Vec<Query> {
        let mut out = Vec::with_capacity(8);
        for x_y in 0..2 {
            for x_w in 0..2 {
                for x_z in 0..2 {
                    out.push(Query { x_y, x_w, x_z });
                }
            }
        }
        out
    }

    /// The four queries the decompositions need, for the transition `x0 -> x1`:
    /// `(x1,x0,x0)`, `(x0,x0,x0)`, `(x1,x1,x0)`, `(x1,x1,x1)`.
    pub fn decomposition_set(x0: u8, x1: u8) -> [Query; 4] {
        [
            Query { x_y: x1, x_w: x0, x_z: x0 },
            Query { x_y: x0, x_w: x0, x_z: x0 },
            Query { x_y: x1, x_w: x1, x_z: x0 },
            Query { x_y: x1, x_w: x1, x_z: x1 },
        ]
    }

    /// File-name friendly label, e.g. `po_100`.
    pub fn label(&self) -> String {
        format!("po_{}{}{}", self.x_y, self.x_w, self.x_z)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x_y, self.x_w, self.x_z)
    }
}

/// Outcome functional `Phi(t)` of the conditional event-time law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `P(T > t)` for the primary event (cause 1).
    Survival,
    /// Cumulative incidence of `cause` in the presence of the other causes.
    Cif { cause: usize },
    /// `int_0^{min(t, horizon)} S(u) du`.
    Rmst { horizon: f64 },
    /// `P(min_k T_k > t)`.
    AllCauseSurvival,
    /// Cumulative hazard of the primary event.
    CumulativeHazard,
}

impl FunctionalKind {
    pub fn validate(&self, n_causes: usize) -> Result<()> {
        match *self {
            FunctionalKind::Cif { cause } if cause == 0 || cause > n_causes => {
                Err(Error::CauseOutOfRange { cause, n_causes })
            }
            FunctionalKind::Rmst { horizon } if !(horizon > 0.0 && horizon.is_finite()) => {
                Err(Error::InvalidParameter(format!("rmst horizon {horizon} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Functionals whose curves are non-increasing in time.
    pub fn is_survival_like(&self) -> bool {
        matches!(self, FunctionalKind::Survival | FunctionalKind::AllCauseSurvival)
    }

    /// Functionals bounded in `[0, 1]`.
    pub fn is_probability(&self) -> bool {
        !matches!(self, FunctionalKind::Rmst { .. } | FunctionalKind::CumulativeHazard)
    }

    pub fn label(&self) -> String {
        match self {
            FunctionalKind::Survival => "survival".into(),
            FunctionalKind::Cif { cause } => format!("cif{cause}"),
            FunctionalKind::Rmst { horizon } => format!("rmst{horizon}"),
            FunctionalKind::AllCauseSurvival => "all_cause_survival".into(),
            FunctionalKind::CumulativeHazard => "cumulative_hazard".into(),
        }
    }
}

impl FromStr for FunctionalKind {
    type Err = Error;

    /// Accepts `survival`, `cif:K`, `rmst:H`, `all_cause_survival`, `cumulative_hazard`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let bad = || Error::InvalidParameter(format!("unknown functional `{s}`"));
        match (head, arg) {
            ("survival", None) => Ok(FunctionalKind::Survival),
            ("all_cause_survival", None) => Ok(FunctionalKind::AllCauseSurvival),
            ("cumulative_hazard", None) => Ok(FunctionalKind::CumulativeHazard),
            ("cif", Some(a)) => Ok(FunctionalKind::Cif { cause: a.parse().map_err(|_| bad())? }),
            ("rmst", Some(a)) => Ok(FunctionalKind::Rmst { horizon: a.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_entries_binary() {
        assert!(Query::new(0, 1, 2).is_err());
        assert_eq!(Query::all().len(), 8);
        assert_eq!(Query::observational(1).label(), "po_111");
    }

    #[test]
    fn functional_parsing() {
        assert_eq!("cif:2".parse::<FunctionalKind>().unwrap(), FunctionalKind::Cif { cause: 2 });
        assert_eq!("rmst:30".parse::<FunctionalKind>().unwrap(), FunctionalKind::Rmst { horizon: 30.0 });
        assert!("cif".parse::<FunctionalKind>().is_err());
        assert!(FunctionalKind::Cif { cause: 2 }.validate(1).is_err());
        assert!(FunctionalKind::Rmst { horizon: 0.0 }.validate(1).is_err());
    }
}
