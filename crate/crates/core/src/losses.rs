//! Truncated Cauchy loss, its half-quadratic weight map, and the IRLS
//! weight functions of the robust NMF family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Smoothing floor for the L1 and L2,1 weights.
pub const TAU_SMOOTH: f64 = 1e-8;

/// Truncation level of the loss in units of `(e / gamma)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Sigma {
    Finite(f64),
    Unbounded,
}

impl Sigma {
    #[inline]
    pub fn contains(self, x: f64) -> bool {
        match self {
            Sigma::Finite(s) => x <= s,
            Sigma::Unbounded => true,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sigma::Finite(s) => s,
            Sigma::Unbounded => f64::INFINITY,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Sigma::Finite(s) if !(s > 0.0) => Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {s}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedCauchyLoss {
    pub gamma: f64,
    pub sigma: Sigma,
}

impl TruncatedCauchyLoss {
    pub fn new(gamma: f64, sigma: Sigma) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        sigma.validate()?;
        Ok(TruncatedCauchyLoss { gamma, sigma })
    }

    /// Residual magnitude beyond which the loss is flat, `gamma * sqrt(sigma)`.
    pub fn cutoff(&self) -> f64 {
        self.gamma * self.sigma.value().sqrt()
    }

    /// `g((e / gamma)^2)` for one residual.
    #[inline]
    pub fn entry(&self, e: f64) -> f64 {
        let x = (e / self.gamma) * (e / self.gamma);
        g_unchecked(x, self.sigma)
    }

    /// Half the summed loss over a residual matrix.
    pub fn objective_from_residual(&self, residual: &DenseMatrix) -> f64 {
        let mut acc = 0.0;
        for &e in residual.as_slice() {
            acc += self.entry(e);
        }
        0.5 * acc
    }
}

#[inline]
fn g_unchecked(x: f64, sigma: Sigma) -> f64 {
    match sigma {
        Sigma::Finite(s) if x > s => s.ln_1p(),
        _ => x.ln_1p(),
    }
}

/// `ln(1 + x)` up to `sigma`, flat at `ln(1 + sigma)` beyond it.
pub fn g(x: f64, sigma: Sigma) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::NegativeArgument {
            what: "x",
            value: x,
        });
    }
    Ok(g_unchecked(x, sigma))
}

/// `(1/2) sum_ij g(((V - WH) / gamma)_ij^2)`.
pub fn objective(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    loss: &TruncatedCauchyLoss,
) -> Result<f64> {
    let wh = w.matmul(h)?;
    let residual = v.sub(&wh)?;
    Ok(loss.objective_from_residual(&residual))
}

#[inline]
pub(crate) fn hq_weight_unchecked(x: f64, sigma: Sigma) -> f64 {
    if sigma.contains(x) {
        1.0 / (1.0 + x)
    } else {
        0.0
    }
}

/// Magnitude of the half-quadratic maximizer: `1 / (1 + x)` for
/// `x <= sigma`, zero past the truncation.
pub fn hq_weight(x: f64, sigma: Sigma) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::NegativeArgument {
            what: "x",
            value: x,
        });
    }
    Ok(hq_weight_unchecked(x, sigma))
}

/// Convex conjugate of `f = -g`, `f*(y) = sup_x (x y + g(x))` over `x >= 0`.
///
/// `+inf` for `y > 0`, and at `y = 0` for the unbounded loss. For `y < -1`
/// the supremum sits at `x = 0`.
pub fn conjugate(y: f64, sigma: Sigma) -> f64 {
    if y > 0.0 {
        return f64::INFINITY;
    }
    if y < -1.0 {
        // sup over x >= 0 of xy + g(x) is attained at x = 0.
        return 0.0;
    }
    match sigma {
        Sigma::Unbounded => {
            if y == 0.0 {
                f64::INFINITY
            } else {
                -1.0 - y - (-y).ln()
            }
        }
        Sigma::Finite(s) => {
            if y <= -1.0 / (1.0 + s) {
                -1.0 - y - (-y).ln()
            } else {
                s * y + s.ln_1p()
            }
        }
    }
}

/// Maximum of `y x - f*(y)` over a uniform grid on `[-1, 0]`.
///
/// With an exact conjugate this recovers `-g(x)` up to the grid spacing.
pub fn verify_conjugacy(x: f64, sigma: Sigma) -> f64 {
    const STEPS: usize = 200_000;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=STEPS {
        let y = -1.0 + k as f64 / STEPS as f64;
        let val = y * x - conjugate(y, sigma);
        if val > best {
            best = val;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    L2,
    L1,
    L21Column,
    Huber,
    Cim,
    Cauchy,
    TruncatedCauchy,
}

impl WeightKind {
    pub const ALL: [WeightKind; 7] = [
        WeightKind::L2,
        WeightKind::L1,
        WeightKind::L21Column,
        WeightKind::Huber,
        WeightKind::Cim,
        WeightKind::Cauchy,
        WeightKind::TruncatedCauchy,
    ];
}

/// IRLS weight map normalized to one at zero residual.
///
/// Parameters are kind-specific; missing ones are reported when the weight
/// is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub kind: WeightKind,
    /// Huber cutoff `c`.
    pub cutoff: Option<f64>,
    /// CIM kernel width.
    pub width: Option<f64>,
    /// Cauchy scale.
    pub gamma: Option<f64>,
    /// Truncation for the truncated-cauchy kind.
    pub sigma: Option<Sigma>,
}

impl WeightFunction {
    pub fn new(kind: WeightKind) -> Self {
        WeightFunction {
            kind,
            cutoff: None,
            width: None,
            gamma: None,
            sigma: None,
        }
    }

    pub fn l2() -> Self {
        Self::new(WeightKind::L2)
    }

    pub fn l1() -> Self {
        Self::new(WeightKind::L1)
    }

    pub fn l21() -> Self {
        Self::new(WeightKind::L21Column)
    }

    pub fn huber(cutoff: f64) -> Self {
        WeightFunction {
            cutoff: Some(cutoff),
            ..Self::new(WeightKind::Huber)
        }
    }

    pub fn cim(width: f64) -> Self {
        WeightFunction {
            width: Some(width),
            ..Self::new(WeightKind::Cim)
        }
    }

    pub fn cauchy(gamma: f64) -> Self {
        WeightFunction {
            gamma: Some(gamma),
            ..Self::new(WeightKind::Cauchy)
        }
    }

    pub fn truncated_cauchy(gamma: f64, sigma: Sigma) -> Self {
        WeightFunction {
            gamma: Some(gamma),
            sigma: Some(sigma),
            ..Self::new(WeightKind::TruncatedCauchy)
        }
    }

    /// Weight for residual `e`. For `L21Column`, `e` is the residual norm
    /// of the whole column.
    pub fn weight(&self, e: f64) -> Result<f64> {
        let a = e.abs();
        Ok(match self.kind {
            WeightKind::L2 => 1.0,
            WeightKind::L1 | WeightKind::L21Column => TAU_SMOOTH / a.max(TAU_SMOOTH),
            WeightKind::Huber => {
                let c = self.cutoff.ok_or(Error::MissingParameter("cutoff"))?;
                if a <= c {
                    1.0
                } else {
                    c / a
                }
            }
            WeightKind::Cim => {
                let s = self.width.ok_or(Error::MissingParameter("width"))?;
                (-(e * e) / (2.0 * s * s)).exp()
            }
            WeightKind::Cauchy => {
                let gamma = self.gamma.ok_or(Error::MissingParameter("gamma"))?;
                let r = e / gamma;
                1.0 / (1.0 + r * r)
            }
            WeightKind::TruncatedCauchy => {
                let gamma = self.gamma.ok_or(Error::MissingParameter("gamma"))?;
                let sigma = self.sigma.ok_or(Error::MissingParameter("sigma"))?;
                let r = e / gamma;
                hq_weight_unchecked(r * r, sigma)
            }
        })
    }
}

pub fn baseline_weight(e: f64, func: &WeightFunction) -> Result<f64> {
    func.weight(e)
}
