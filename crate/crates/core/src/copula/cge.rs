//! Copula-graphic estimator: recover marginal event and censoring survival from
//! the two observable cumulative incidences under an assumed Archimedean copula.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::survival::{union_breakpoints, CurveKind, StepCurve};

use super::archimedean::CopulaSpec;

/// Per-grid-point bounds and midpoint estimates of the bounded recursion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CgeState<F> {
    pub grid: Vec<F>,
    pub s_lower: Vec<F>,
    pub s_upper: Vec<F>,
    pub g_lower: Vec<F>,
    pub g_upper: Vec<F>,
    pub s_hat: Vec<F>,
    pub g_hat: Vec<F>,
    pub cif_t: Vec<F>,
    pub cif_c: Vec<F>,
    pub s_all: Vec<F>,
    /// Generator-inverse arguments that fell outside the generator's range.
    pub clamped: usize,
}

impl<F: Real> CgeState<F> {
    pub fn survival(&self) -> Result<StepCurve<F>> {
        StepCurve::new_clamped(CurveKind::Survival, F::one(), self.grid.clone(), self.s_hat.clone())
    }

    pub fn censoring_survival(&self) -> Result<StepCurve<F>> {
        StepCurve::new_clamped(CurveKind::Survival, F::one(), self.grid.clone(), self.g_hat.clone())
    }

    /// Largest `S_upper - S_lower` over the grid.
    pub fn max_width(&self) -> F {
        self.s_upper
            .iter()
            .zip(&self.s_lower)
            .fold(F::zero(), |acc, (&u, &l)| acc.max(u - l))
    }
}

struct Inv<'a, F> {
    copula: &'a CopulaSpec<F>,
    clamped: usize,
}

impl<F: Real> Inv<'_, F> {
    fn phi(&self, u: F) -> F {
        self.copula.generator(u)
    }

    /// `phi^{-1}(a - b)`; an infinite minuend with infinite subtrahend maps to 0.
    fn inv_diff(&mut self, a: F, b: F) -> F {
        if a.is_infinite() {
            return F::zero();
        }
        let s = a - b;
        let tol = F::lit(1e-9) * a.abs().max(F::one());
        let s = if s < F::zero() {
            if s < -tol {
                self.clamped += 1;
            }
            F::zero()
        } else {
            s
        };
        let r = self.copula.generator_inverse_checked(s);
        if r.clamped {
            self.clamped += 1;
        }
        r.value
    }
}

fn check_inputs<F: Real>(grid: &[F], cif_t: &[F], cif_c: &[F]) -> Result<()> {
    if grid.len() != cif_t.len() || grid.len() != cif_c.len() {
        return Err(Error::LengthMismatch("grid and CIF value lengths differ".into()));
    }
    let tol = F::lit(1e-12);
    let mut prev = (F::zero(), F::zero());
    for i in 0..grid.len() {
        if i > 0 && grid[i] <= grid[i - 1] {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        if cif_t[i] < prev.0 - tol || cif_c[i] < prev.1 - tol || cif_t[i] < -tol || cif_c[i] < -tol {
            return Err(Error::InvalidCurve(format!("cumulative incidence decreases at t = {}", grid[i])));
        }
        if cif_t[i] + cif_c[i] > F::one() + tol {
            return Err(Error::CifSumExceedsOne(grid[i].as_f64()));
        }
        prev = (cif_t[i], cif_c[i]);
    }
    Ok(())
}

/// Bounded recursion on CIF values given at `grid` (values are the CIFs at each grid time).
///
/// Each step brackets `S` and `G` by attributing the joint increment to
/// whichever process moves first, advances on the midpoint of the `S` bracket
/// and re-projects `G` onto `phi(S_all) = phi(S) + phi(G)`.
pub fn cge_bounded_values<F: Real>(grid: &[F], cif_t: &[F], cif_c: &[F], copula: &CopulaSpec<F>) -> Result<CgeState<F>> {
    check_inputs(grid, cif_t, cif_c)?;
    let n = grid.len();
    let mut inv = Inv { copula, clamped: 0 };
    let mut st = CgeState {
        grid: grid.to_vec(),
        s_lower: Vec::with_capacity(n),
        s_upper: Vec::with_capacity(n),
        g_lower: Vec::with_capacity(n),
        g_upper: Vec::with_capacity(n),
        s_hat: Vec::with_capacity(n),
        g_hat: Vec::with_capacity(n),
        cif_t: Vec::with_capacity(n),
        cif_c: Vec::with_capacity(n),
        s_all: Vec::with_capacity(n),
        clamped: 0,
    };
    let (mut s_prev, mut g_prev, mut all_prev) = (F::one(), F::one(), F::one());
    let (mut ft_prev, mut fc_prev) = (F::zero(), F::zero());
    for i in 0..n {
        let ft = cif_t[i].max(ft_prev);
        let fc = cif_c[i].max(fc_prev);
        let s_all = (F::one() - ft - fc).max(F::zero()).min(all_prev);
        let dt = ft - ft_prev;
        let dc = fc - fc_prev;
        let (sl, su, gl, gu, sh, gh) = if (dt <= F::zero() && dc <= F::zero()) || all_prev <= F::zero() {
            (s_prev, s_prev, g_prev, g_prev, s_prev, g_prev)
        } else {
            let h1 = (all_prev - dc).max(F::zero());
            let h2 = (all_prev - dt).max(F::zero());
            let phi_all = inv.phi(s_all);
            let g_up = inv.inv_diff(inv.phi(h1), inv.phi(s_prev)).min(g_prev);
            let s_lo = inv.inv_diff(phi_all, inv.phi(g_up));
            let s_up = inv.inv_diff(inv.phi(h2), inv.phi(g_prev)).min(s_prev);
            let g_lo = inv.inv_diff(phi_all, inv.phi(s_up));
            let s_lo = s_lo.min(s_up);
            let g_lo = g_lo.min(g_up);
            let s_mid = (s_lo + s_up) / F::lit(2.0);
            let g_mid = inv.inv_diff(phi_all, inv.phi(s_mid)).max(g_lo).min(g_up);
            (s_lo, s_up, g_lo, g_up, s_mid, g_mid)
        };
        st.s_lower.push(sl);
        st.s_upper.push(su);
        st.g_lower.push(gl);
        st.g_upper.push(gu);
        st.s_hat.push(sh);
        st.g_hat.push(gh);
        st.cif_t.push(ft);
        st.cif_c.push(fc);
        st.s_all.push(s_all);
        s_prev = sh;
        g_prev = gh;
        all_prev = s_all;
        ft_prev = ft;
        fc_prev = fc;
    }
    st.clamped = inv.clamped;
    Ok(st)
}

/// Bounded recursion evaluating both CIF curves on `grid`. The bounds are sharp
/// when `grid` contains every jump time of both curves.
pub fn cge_bounded<F: Real>(cif_t: &StepCurve<F>, cif_c: &StepCurve<F>, copula: &CopulaSpec<F>, grid: &[F]) -> Result<CgeState<F>> {
    check_cif(cif_t)?;
    check_cif(cif_c)?;
    let ft: Vec<F> = grid.iter().map(|&t| cif_t.evaluate(t)).collect::<Result<_>>()?;
    let fc: Vec<F> = grid.iter().map(|&t| cif_c.evaluate(t)).collect::<Result<_>>()?;
    cge_bounded_values(grid, &ft, &fc, copula)
}

fn check_cif<F: Real>(c: &StepCurve<F>) -> Result<()> {
    if c.kind() != CurveKind::Cif {
        return Err(Error::InvalidCurve(format!("expected a CIF curve, got {:?}", c.kind())));
    }
    Ok(())
}

/// Classical single-jump recursion; requires the two CIFs never to jump at the same time.
pub fn cge_classical<F: Real>(cif_t: &StepCurve<F>, cif_c: &StepCurve<F>, copula: &CopulaSpec<F>) -> Result<(StepCurve<F>, StepCurve<F>)> {
    check_cif(cif_t)?;
    check_cif(cif_c)?;
    let grid = union_breakpoints(&[cif_t, cif_c]);
    let mut inv = Inv { copula, clamped: 0 };
    let (mut s, mut g) = (F::one(), F::one());
    let (mut ft_prev, mut fc_prev) = (F::zero(), F::zero());
    let mut s_vals = Vec::with_capacity(grid.len());
    let mut g_vals = Vec::with_capacity(grid.len());
    for &t in &grid {
        let ft = cif_t.at(t);
        let fc = cif_c.at(t);
        if ft + fc > F::one() + F::lit(1e-12) {
            return Err(Error::CifSumExceedsOne(t.as_f64()));
        }
        let jt = ft > ft_prev;
        let jc = fc > fc_prev;
        if jt && jc {
            return Err(Error::CoincidentJumps(t.as_f64()));
        }
        let phi_all = inv.phi((F::one() - ft - fc).max(F::zero()));
        if jt {
            s = inv.inv_diff(phi_all, inv.phi(g)).min(s);
        } else if jc {
            g = inv.inv_diff(phi_all, inv.phi(s)).min(g);
        }
        s_vals.push(s);
        g_vals.push(g);
        ft_prev = ft;
        fc_prev = fc;
    }
    Ok((
        StepCurve::new_clamped(CurveKind::Survival, F::one(), grid.clone(), s_vals)?,
        StepCurve::new_clamped(CurveKind::Survival, F::one(), grid, g_vals)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::CopulaFamily;
    use crate::survival::RiskTable;

    fn cif(bps: Vec<f64>, vals: Vec<f64>) -> StepCurve<f64> {
        StepCurve::new(CurveKind::Cif, 0.0, bps, vals).unwrap()
    }

    #[test]
    fn independence_classical_equals_kaplan_meier() {
        let times = [0.5f64, 1.0, 1.7, 2.2, 3.1, 3.9, 4.4, 5.0];
        let deltas = [1u8, 0, 1, 1, 0, 1, 0, 1];
        let cr: Vec<u8> = deltas.iter().map(|&d| if d == 1 { 1 } else { 2 }).collect();
        let table = RiskTable::new(&times, &cr, 2).unwrap();
        let (s, g) = cge_classical(&table.cif(1).unwrap(), &table.cif(2).unwrap(), &CopulaSpec::independence()).unwrap();
        let km = crate::survival::kaplan_meier(&times, &deltas).unwrap();
        let inv: Vec<u8> = deltas.iter().map(|&d| 1 - d).collect();
        let km_c = crate::survival::kaplan_meier(&times, &inv).unwrap();
        for &t in &times {
            assert!((s.at(t) - km.at(t)).abs() < 1e-12);
            assert!((g.at(t) - km_c.at(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn no_censoring_gives_complement() {
        let ft = cif(vec![1.0, 2.0, 3.0], vec![0.2, 0.5, 0.9]);
        let fc = cif(vec![], vec![]);
        let cl = CopulaSpec::new(CopulaFamily::Clayton, 0.5).unwrap();
        let (s, _) = cge_classical(&ft, &fc, &cl).unwrap();
        for &t in &[1.0, 2.0, 3.0] {
            assert!((s.at(t) - (1.0 - ft.at(t))).abs() < 1e-12);
        }
    }

    #[test]
    fn clayton_three_step_hand_recursion() {
        // theta = 2: phi(u) = (u^-2 - 1)/2, phi^{-1}(s) = (1 + 2s)^{-1/2}
        let phi = |u: f64| (u.powi(-2) - 1.0) / 2.0;
        let inv = |s: f64| (1.0 + 2.0 * s).powf(-0.5);
        let ft = cif(vec![1.0, 3.0], vec![0.2, 0.35]);
        let fc = cif(vec![2.0], vec![0.1]);
        let cl = CopulaSpec::new(CopulaFamily::Clayton, 0.5).unwrap();
        let (s, g) = cge_classical(&ft, &fc, &cl).unwrap();
        let s1 = inv(phi(0.8) - phi(1.0));
        let g2 = inv(phi(0.7) - phi(s1));
        let s3 = inv(phi(0.55) - phi(g2));
        assert!((s.at(1.0) - s1).abs() < 1e-12);
        assert!((g.at(2.0) - g2).abs() < 1e-12);
        assert!((s.at(3.0) - s3).abs() < 1e-12);
    }

    #[test]
    fn coincident_jumps_rejected() {
        let ft = cif(vec![1.0], vec![0.2]);
        let fc = cif(vec![1.0], vec![0.1]);
        let err = cge_classical(&ft, &fc, &CopulaSpec::independence()).unwrap_err();
        assert!(matches!(err, Error::CoincidentJumps(t) if t == 1.0));
    }

    #[test]
    fn bounded_reduces_to_classical_on_disjoint_jumps() {
        let ft = cif(vec![1.0, 3.0, 4.0], vec![0.2, 0.35, 0.4]);
        let fc = cif(vec![2.0, 5.0], vec![0.1, 0.3]);
        for c in [CopulaSpec::independence(), CopulaSpec::new(CopulaFamily::Clayton, 0.5).unwrap(), CopulaSpec::new(CopulaFamily::Frank, 0.3).unwrap()] {
            let (s, g) = cge_classical(&ft, &fc, &c).unwrap();
            let grid = [1.0, 2.0, 3.0, 4.0, 5.0];
            let st = cge_bounded(&ft, &fc, &c, &grid).unwrap();
            for (i, &t) in grid.iter().enumerate() {
                assert!((st.s_lower[i] - st.s_upper[i]).abs() < 1e-10);
                assert!((st.s_hat[i] - s.at(t)).abs() < 1e-10);
                assert!((st.g_hat[i] - g.at(t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn collapse_when_no_event_increment() {
        let c = CopulaSpec::new(CopulaFamily::Clayton, 0.5).unwrap();
        let st = cge_bounded_values(&[1.0f64, 2.0], &[0.1, 0.1], &[0.0, 0.2], &c).unwrap();
        assert!((st.s_lower[1] - st.s_hat[0]).abs() < 1e-14);
        assert!((st.s_upper[1] - st.s_hat[0]).abs() < 1e-14);
    }

    #[test]
    fn cif_sum_above_one_rejected() {
        let err = cge_bounded_values(&[1.0, 2.0], &[0.5, 0.7], &[0.2, 0.4], &CopulaSpec::<f64>::independence()).unwrap_err();
        assert!(matches!(err, Error::CifSumExceedsOne(t) if t == 2.0));
    }

    #[test]
    fn bounds_ordered_and_identity_holds() {
        let c = CopulaSpec::new(CopulaFamily::Gumbel, 0.4).unwrap();
        let grid: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let ft: Vec<f64> = grid.iter().map(|t| 0.4 * (1.0 - (-t / 8.0f64).exp())).collect();
        let fc: Vec<f64> = grid.iter().map(|t| 0.3 * (1.0 - (-t / 5.0f64).exp())).collect();
        let st = cge_bounded_values(&grid, &ft, &fc, &c).unwrap();
        for i in 0..grid.len() {
            assert!(st.s_lower[i] <= st.s_hat[i] + 1e-15 && st.s_hat[i] <= st.s_upper[i] + 1e-15);
            assert!(st.g_lower[i] <= st.g_upper[i] + 1e-15);
            let lhs = c.generator(st.s_all[i]);
            let rhs = c.generator(st.s_hat[i]) + c.generator(st.g_hat[i]);
            assert!((lhs - rhs).abs() < 1e-8);
            if i > 0 {
                assert!(st.s_hat[i] <= st.s_hat[i - 1] && st.g_hat[i] <= st.g_hat[i - 1]);
            }
        }
    }

    #[test]
    fn generic_over_f32() {
        let c = CopulaSpec::<f32>::new(CopulaFamily::Clayton, 0.5).unwrap();
        let st = cge_bounded_values(&[1.0f32, 2.0], &[0.1, 0.2], &[0.05, 0.1], &c).unwrap();
        assert!(st.s_hat[1] < 1.0 && st.s_hat[1] > 0.7);
    }
}
