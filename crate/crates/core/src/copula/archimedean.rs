//! Archimedean copula generators parameterised by Kendall's tau.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaFamily {
    Independence,
    Clayton,
    Gumbel,
    Frank,
}

impl std::str::FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independence" | "indep" => Ok(CopulaFamily::Independence),
            "clayton" => Ok(CopulaFamily::Clayton),
            "gumbel" => Ok(CopulaFamily::Gumbel),
            "frank" => Ok(CopulaFamily::Frank),
            other => Err(Error::InvalidParameter(format!("unknown copula family `{other}`"))),
        }
    }
}

/// Copula family together with its Kendall's tau and the implied generator parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec<F> {
    family: CopulaFamily,
    kendall_tau: F,
    theta: F,
}

/// Result of a generator inversion; `clamped` marks arguments outside the generator's range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverse<F> {
    pub value: F,
    pub clamped: bool,
}

/// Generator parameter implied by Kendall's tau.
pub fn tau_to_theta(family: CopulaFamily, tau: f64) -> Result<f64> {
    let out_of_range = || Error::InvalidParameter(format!("kendall tau {tau} outside the admissible range for {family:?}"));
    match family {
        CopulaFamily::Independence => {
            if tau != 0.0 {
                return Err(out_of_range());
            }
            Ok(0.0)
        }
        CopulaFamily::Clayton => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(out_of_range());
            }
            Ok(2.0 * tau / (1.0 - tau))
        }
        CopulaFamily::Gumbel => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(out_of_range());
            }
            Ok(1.0 / (1.0 - tau))
        }
        CopulaFamily::Frank => {
            if !(tau > -1.0 && tau < 1.0) || tau == 0.0 {
                return Err(out_of_range());
            }
            Ok(frank_theta(tau))
        }
    }
}

/// Kendall's tau implied by a generator parameter.
pub fn theta_to_tau(family: CopulaFamily, theta: f64) -> f64 {
    match family {
        CopulaFamily::Independence => 0.0,
        CopulaFamily::Clayton => theta / (theta + 2.0),
        CopulaFamily::Gumbel => 1.0 - 1.0 / theta,
        CopulaFamily::Frank => frank_tau(theta),
    }
}

/// `tau(theta) = 1 - 4/theta * (1 - D1(theta))`, written as
/// `1 - 4/theta^2 * int_0^theta (1 - t/(e^t - 1)) dt` to avoid cancellation near zero.
fn frank_tau(theta: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    if theta < 0.0 {
        return -frank_tau(-theta);
    }
    let g = |t: f64| if t == 0.0 { 0.0 } else { 1.0 - t / t.exp_m1() };
    let n = 4096;
    let h = theta / n as f64;
    let mut acc = g(0.0) + g(theta);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(i as f64 * h);
    }
    let integral = acc * h / 3.0;
    1.0 - 4.0 / (theta * theta) * integral
}

fn frank_theta(tau: f64) -> f64 {
    if tau < 0.0 {
        return -frank_theta(-tau);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while frank_tau(hi) < tau {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frank_tau(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl<F: Real> CopulaSpec<F> {
    /// `kendall_tau = 0` yields the independence copula for every family.
    pub fn new(family: CopulaFamily, kendall_tau: F) -> Result<Self> {
        if kendall_tau == F::zero() {
            return Ok(Self::independence());
        }
        let theta = tau_to_theta(family, kendall_tau.as_f64())?;
        Ok(CopulaSpec { family, kendall_tau, theta: F::lit(theta) })
    }

    pub fn independence() -> Self {
        CopulaSpec { family: CopulaFamily::Independence, kendall_tau: F::zero(), theta: F::zero() }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn kendall_tau(&self) -> F {
        self.kendall_tau
    }

    pub fn theta(&self) -> F {
        self.theta
    }

    /// Generator `phi(u)` for `u` in `[0, 1]`; `phi(0) = +inf` for every supported family.
    pub fn generator(&self, u: F) -> F {
        if u <= F::zero() {
            return F::infinity();
        }
        let u = u.min(F::one());
        let th = self.theta;
        match self.family {
            CopulaFamily::Independence => -u.ln(),
            CopulaFamily::Clayton => (-th * u.ln()).exp_m1() / th,
            CopulaFamily::Gumbel => (-u.ln()).powf(th),
            CopulaFamily::Frank => -((-th * u).exp_m1() / (-th).exp_m1()).ln(),
        }
    }

    /// Derivative `phi'(u)`.
    pub fn generator_derivative(&self, u: F) -> F {
        let th = self.theta;
        match self.family {
            CopulaFamily::Independence => -F::one() / u,
            CopulaFamily::Clayton => -u.powf(-th - F::one()),
            CopulaFamily::Gumbel => -th * (-u.ln()).powf(th - F::one()) / u,
            CopulaFamily::Frank => -th / (th * u).exp_m1(),
        }
    }

    /// Inverse generator; negative or NaN arguments clamp to `u = 1` and are flagged.
    pub fn generator_inverse_checked(&self, s: F) -> Inverse<F> {
        if s.is_nan() {
            return Inverse { value: F::zero(), clamped: true };
        }
        if s < F::zero() {
            return Inverse { value: F::one(), clamped: true };
        }
        if s.is_infinite() {
            return Inverse { value: F::zero(), clamped: false };
        }
        let th = self.theta;
        let value = match self.family {
            CopulaFamily::Independence => (-s).exp(),
            CopulaFamily::Clayton => (-(th * s).ln_1p() / th).exp(),
            CopulaFamily::Gumbel => (-s.powf(F::one() / th)).exp(),
            CopulaFamily::Frank => -((-s).exp() * (-th).exp_m1()).ln_1p() / th,
        };
        Inverse { value: value.max(F::zero()).min(F::one()), clamped: false }
    }

    pub fn generator_inverse(&self, s: F) -> F {
        self.generator_inverse_checked(s).value
    }

    /// Copula CDF `C(u, v) = phi^{-1}(phi(u) + phi(v))`.
    pub fn cdf(&self, u: F, v: F) -> F {
        self.generator_inverse(self.generator(u) + self.generator(v))
    }

    /// Conditional distribution `P(V <= v | U = u) = phi'(u) / phi'(C(u, v))`.
    pub fn conditional_cdf(&self, v: F, u: F) -> F {
        if v <= F::zero() {
            return F::zero();
        }
        if v >= F::one() {
            return F::one();
        }
        let c = self.cdf(u, v);
        if c <= F::zero() {
            return F::zero();
        }
        (self.generator_derivative(u) / self.generator_derivative(c)).max(F::zero()).min(F::one())
    }

    /// Solves `conditional_cdf(v, u) = w` for `v`.
    pub fn conditional_inverse(&self, w: F, u: F) -> F {
        let one = F::one();
        let th = self.theta;
        match self.family {
            CopulaFamily::Independence => w,
            CopulaFamily::Clayton => {
                let inner = u.powf(-th) * (w.powf(-th / (one + th)) - one) + one;
                inner.powf(-one / th)
            }
            CopulaFamily::Frank => {
                let a = (-th * u).exp();
                let num = w * (-th).exp_m1();
                let den = a + w * (one - a);
                -(num / den).ln_1p() / th
            }
            CopulaFamily::Gumbel => self.conditional_inverse_bisect(w, u),
        }
    }

    pub(crate) fn conditional_inverse_bisect(&self, w: F, u: F) -> F {
        let mut lo = F::zero();
        let mut hi = F::one();
        for _ in 0..80 {
            let mid = (lo + hi) / F::lit(2.0);
            if self.conditional_cdf(mid, u) < w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) / F::lit(2.0)
    }

    /// Draws `(U, V)` with joint distribution function `C` by the conditional-inverse method.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (F, F) {
        let u = F::lit(open_unit(rng));
        let w = F::lit(open_unit(rng));
        (u, self.conditional_inverse(w, u).max(F::zero()).min(F::one()))
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}
