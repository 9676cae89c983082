//! Learning-rate schedules and the admissibility conditions for step sizes,
//! feature-sample sizes and inner batch sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `γ_t = 1/t`
    InverseT,
    /// `γ_t = 1/(1 + √(t−1))`
    #[default]
    Experiment,
    /// `γ_t = γ₀`
    Constant,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse_t" => Ok(ScheduleKind::InverseT),
            "experiment" => Ok(ScheduleKind::Experiment),
            "constant" => Ok(ScheduleKind::Constant),
            other => Err(Error::Config(format!("unknown schedule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    #[serde(default = "one")]
    pub gamma0: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Experiment,
            gamma0: 1.0,
        }
    }
}

impl Schedule {
    pub fn inverse_t() -> Self {
        Self {
            kind: ScheduleKind::InverseT,
            gamma0: 1.0,
        }
    }

    pub fn experiment() -> Self {
        Self::default()
    }

    pub fn constant(gamma0: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            gamma0,
        }
    }

    /// Rate for 1-based iteration `t`. The engine applies `gamma(t + 1)`
    /// during its 0-based outer iteration `t`.
    pub fn gamma(&self, t: u64) -> f64 {
        debug_assert!(t >= 1, "schedules are indexed from 1");
        let t = t.max(1) as f64;
        match self.kind {
            ScheduleKind::InverseT => 1.0 / t,
            ScheduleKind::Experiment => 1.0 / (1.0 + (t - 1.0).sqrt()),
            ScheduleKind::Constant => self.gamma0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Measured,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn measured(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::Measured,
        }
    }

    pub fn supplied(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::Supplied,
        }
    }
}

/// Problem constants: `m1` bounds `2‖ω‖`, `m2` is the strong-convexity
/// modulus, `m3` the gradient Lipschitz constant, `m4` the gradient-norm
/// variance bound and `b` the truncation-error constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub m1: Constant,
    pub m2: Constant,
    pub m3: Constant,
    pub m4: Constant,
    pub b: Constant,
}

impl TheoryConstants {
    /// All constants supplied by the caller.
    pub fn supplied(m1: f64, m2: f64, m3: f64, m4: f64, b: f64) -> Self {
        Self {
            m1: Constant::supplied(m1),
            m2: Constant::supplied(m2),
            m3: Constant::supplied(m3),
            m4: Constant::supplied(m4),
            b: Constant::supplied(b),
        }
    }

    /// The smoothness analysis assumes `M3 >= 1`.
    pub fn m3_below_one(&self) -> bool {
        self.m3.value < 1.0
    }

    /// Copy with `m3` raised to at least 1.
    pub fn with_m3_clamped(mut self) -> Self {
        self.m3.value = self.m3.value.max(1.0);
        self
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Constant(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// A bound as a real expression plus the integer value used operationally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountBound {
    pub real: f64,
    pub count: usize,
}

/// Smallest admissible feature-sample size `b` for a diminishing rate:
/// `max{c, M / (1 + 4·M·B·γ² / (c·M1²·M3²))}`, ceiled and capped at `M`.
pub fn b_lower_bound(
    m: usize,
    c: usize,
    gamma_next: f64,
    tc: &TheoryConstants,
) -> Result<CountBound> {
    if c == 0 || c > m {
        return Err(Error::Size(format!("need 1 <= c <= M, got c={c} M={m}")));
    }
    positive("gamma", gamma_next)?;
    positive("M1", tc.m1.value)?;
    positive("M3", tc.m3.value)?;
    if !(tc.b.value >= 0.0 && tc.b.value.is_finite()) {
        return Err(Error::Constant(format!(
            "B must be >= 0, got {}",
            tc.b.value
        )));
    }
    let (mf, cf) = (m as f64, c as f64);
    let ratio = 4.0 * mf * tc.b.value * gamma_next * gamma_next
        / (cf * tc.m1.value.powi(2) * tc.m3.value.powi(2));
    let real = cf.max(mf / (1.0 + ratio));
    let count = (real.ceil() as usize).min(m);
    Ok(CountBound { real, count })
}

/// Smallest inner batch size for the `1/t` rate: `M / (2·c·M2)`, at least 1.
pub fn min_inner_batch(m: usize, c: usize, tc: &TheoryConstants) -> Result<CountBound> {
    if c == 0 {
        return Err(Error::Size("c must be at least 1".into()));
    }
    positive("M2", tc.m2.value)?;
    let real = m as f64 / (2.0 * c as f64 * tc.m2.value);
    Ok(CountBound {
        real,
        count: (real.ceil() as usize).max(1),
    })
}

/// `λ = 2·M2·L / M`.
pub fn lambda_rate(m: usize, l: usize, tc: &TheoryConstants) -> f64 {
    2.0 * tc.m2.value * l as f64 / m as f64
}

/// The `1/t` rate analysis needs `λ > 1`.
pub fn lambda_precondition_holds(lambda: f64) -> bool {
    lambda > 1.0
}

/// Coefficients of `B·γ + C·γ³ = A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cubic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Cubic {
    pub fn eval(&self, g: f64) -> f64 {
        self.b * g + self.c * g * g * g - self.a
    }

    /// Real root via `−2√(B/3C)·sinh(⅓·arcsinh(−(3A/2B)·√(3C/B)))`.
    pub fn closed_form_root(&self) -> f64 {
        let Cubic { a, b, c } = *self;
        // The arcsinh argument is negative; use odd symmetry and work with
        // its magnitude x.
        let ln_x = (1.5f64).ln() + a.ln() - b.ln() + 0.5 * (3f64.ln() + c.ln() - b.ln());
        let ln_scale = std::f64::consts::LN_2 + 0.5 * (b.ln() - 3f64.ln() - c.ln());
        if ln_x < 60.0 {
            let ash = ln_x.exp().asinh();
            ln_scale.exp() * (ash / 3.0).sinh()
        } else {
            // asinh(x) = ln(2x) and sinh(u) = e^u / 2 to double precision here;
            // stay in logs so neither factor overflows.
            let u = (ln_x + std::f64::consts::LN_2) / 3.0;
            (ln_scale + u - std::f64::consts::LN_2).exp()
        }
    }

    /// Root by bisection. The cubic is increasing on `γ > 0`, and the root lies
    /// between `min{A/2B, (A/2C)^⅓}` and `min{A/B, (A/C)^⅓}`.
    pub fn bisection_root(&self) -> f64 {
        let mut lo = (self.a / (2.0 * self.b)).min((self.a / (2.0 * self.c)).cbrt());
        let mut hi = (self.a / self.b).min((self.a / self.c).cbrt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Closed-form root checked against bisection.
    pub fn certified_root(&self) -> Result<f64> {
        let closed = self.closed_form_root();
        let bis = self.bisection_root();
        if !closed.is_finite() || (closed - bis).abs() > 1e-6 * bis.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Root {
                closed_form: closed,
                bisection: bis,
            });
        }
        Ok(closed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateParts {
    pub one: f64,
    /// `1/(L·M3·Q·P)`
    pub lip: f64,
    pub g1: f64,
    pub g2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantRateBound {
    pub gamma_max: f64,
    pub parts: RateParts,
    pub cubic1: Cubic,
    pub cubic2: Cubic,
}

/// The two cubics whose roots bound an admissible constant learning rate.
pub fn rate_cubics(
    l: usize,
    q: usize,
    p: usize,
    m: usize,
    c_min: usize,
    tc: &TheoryConstants,
) -> (Cubic, Cubic) {
    let lf = l as f64;
    let qp = (q * p) as f64;
    let m2 = tc.m2.value;
    let m3 = tc.m3.value;
    let common = lf.powi(4) * (1.0 + lf.powi(3) * m3 * m3 * qp);
    let c1 = Cubic {
        a: c_min as f64 / (m3 * m as f64),
        b: lf + (lf - 1.0) * lf * m3 * qp / m2,
        c: common * m3 * m3 * qp,
    };
    let c2 = Cubic {
        a: c_min as f64 / m as f64,
        b: (lf - 1.0) * lf * m3 * qp + m3 * lf,
        c: common * m3 * m3 * m3 * qp,
    };
    (c1, c2)
}

/// Upper end of the admissible constant-rate interval,
/// `min{1, 1/(L·M3·Q·P), γ1, γ2}`.
pub fn constant_rate_bound(
    l: usize,
    q: usize,
    p: usize,
    m: usize,
    c_min: usize,
    tc: &TheoryConstants,
) -> Result<ConstantRateBound> {
    for (name, v) in [("L", l), ("Q", q), ("P", p), ("M", m), ("c_min", c_min)] {
        if v == 0 {
            return Err(Error::Constant(format!("{name} must be positive")));
        }
    }
    positive("M2", tc.m2.value)?;
    positive("M3", tc.m3.value)?;
    let (cubic1, cubic2) = rate_cubics(l, q, p, m, c_min, tc);
    let g1 = cubic1.certified_root()?;
    let g2 = cubic2.certified_root()?;
    let parts = RateParts {
        one: 1.0,
        lip: 1.0 / (l as f64 * tc.m3.value * (q * p) as f64),
        g1,
        g2,
    };
    let gamma_max = parts.one.min(parts.lip).min(g1).min(g2);
    Ok(ConstantRateBound {
        gamma_max,
        parts,
        cubic1,
        cubic2,
    })
}

/// Shape of the constant-rate error neighbourhood, `M·L³·γ/(2·M2)`, with the
/// unidentifiable leading constant set to 1. Only meaningful for comparing
/// settings against each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeOnly {
    pub value: f64,
    pub label: &'static str,
}

pub fn strong_convexity_gap_bound(
    m: usize,
    l: usize,
    tc: &TheoryConstants,
    gamma: f64,
) -> ShapeOnly {
    ShapeOnly {
        value: m as f64 * (l as f64).powi(3) * gamma / (2.0 * tc.m2.value),
        label: "SHAPE-ONLY",
    }
}
