use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::Cohort;
use crate::copula::CopulaSpec;
use crate::error::{Error, Result};

use super::spec::{SCMSpec, TimeLaw};

/// Sampled cohort together with the latent primary-event and censoring times.
#[derive(Debug, Clone)]
pub struct SampledCohort {
    pub cohort: Cohort,
    /// Latent `T_1` per row (`+inf` when the event never happens).
    pub latent_event: Vec<f64>,
    /// Latent `C` per row.
    pub latent_censor: Vec<f64>,
}

struct Inverter {
    times: Vec<f64>,
    surv: Vec<f64>,
}

impl Inverter {
    fn new(law: &TimeLaw) -> Self {
        Inverter { times: law.times.clone(), surv: law.survival_at_support() }
    }

    /// `min{t_j : S(t_j) <= a}`, so that `P(T > t_j) = P(a < S(t_j)) = S(t_j)` for uniform `a`.
    fn draw(&self, a: f64) -> f64 {
        let idx = self.surv.partition_point(|&s| s > a);
        self.times.get(idx).copied().unwrap_or(f64::INFINITY)
    }
}

struct Cell {
    events: Vec<Inverter>,
    censor: Inverter,
}

fn categorical<R: Rng>(rng: &mut R, cum: &[f64]) -> usize {
    let u: f64 = rng.gen::<f64>() * cum.last().copied().unwrap_or(1.0);
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn cumulative(p: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    p.map(|v| {
        acc += v;
        acc
    })
    .collect()
}

/// Draws `n` rows. `(T_1, C)` follow the spec's copula; further causes are independent.
/// The observed time is the minimum latent time; ties go to the event, and among
/// causes to the lowest index.
pub fn sample_cohort_with_latent(spec: &SCMSpec, n: usize, seed: u64) -> Result<SampledCohort> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let copula: CopulaSpec<f64> = spec.coupling.copula()?;
    let nz = spec.z_support.len();
    let nw = spec.w_support.len();
    let xz_cum = cumulative((0..2u8).flat_map(|x| spec.z_support.iter().map(move |&z| (x, z))).map(|(x, z)| spec.p_xz(x, z)));
    let mut w_cum = Vec::with_capacity(2 * nz);
    let mut cells = Vec::with_capacity(2 * nz * nw);
    for x in 0..2u8 {
        for &z in &spec.z_support {
            w_cum.push(cumulative(spec.w_support.iter().map(|&w| spec.p_w_given_xz(x, z, w))));
            for &w in &spec.w_support {
                cells.push(Cell {
                    events: (1..=spec.n_causes).map(|k| Inverter::new(spec.event_law(x, z, w, k))).collect(),
                    censor: Inverter::new(spec.censor_law(x, z, w)),
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    let mut ms = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    let mut lt = Vec::with_capacity(n);
    let mut lc = Vec::with_capacity(n);
    for _ in 0..n {
        let xz = categorical(&mut rng, &xz_cum);
        let x = (xz / nz) as u8;
        let zi = xz % nz;
        let wi = categorical(&mut rng, &w_cum[xz]);
        let cell = &cells[xz * nw + wi];
        let (a, b) = copula.sample_pair(&mut rng);
        let t1 = cell.events[0].draw(a);
        let c = cell.censor.draw(b);
        let mut m = t1;
        let mut delta = 1u8;
        for (k, inv) in cell.events.iter().enumerate().skip(1) {
            let tk = inv.draw(rng.gen::<f64>());
            if tk < m {
                m = tk;
                delta = (k + 1) as u8;
            }
        }
        if c < m {
            m = c;
            delta = 0;
        }
        debug_assert!(m.is_finite());
        xs.push(x);
        zs.push(spec.z_support[zi]);
        ws.push(spec.w_support[wi]);
        ms.push(m);
        ds.push(delta);
        lt.push(t1);
        lc.push(c);
    }
    let cohort = Cohort::from_scalar_columns(xs, zs, ws, ms, ds, spec.n_causes)?;
    Ok(SampledCohort { cohort, latent_event: lt, latent_censor: lc })
}

/// Draws `n` rows from `spec` with a seeded ChaCha generator.
pub fn sample_cohort(spec: &SCMSpec, n: usize, seed: u64) -> Result<Cohort> {
    Ok(sample_cohort_with_latent(spec, n, seed)?.cohort)
}
