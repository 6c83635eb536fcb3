//! Linear service-cost model for flexibility provision and grid losses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pq;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("cost factor `{0}` must be finite and non-negative")]
    NegativeFactor(&'static str),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("signed components must be non-negative")]
    NegativeComponent,
    #[error("directional prices must be given as a complete quadruple")]
    IncompleteSigned,
    #[error("both {0}+ and {0}- are nonzero")]
    BothDirections(&'static str),
}

/// Direction-dependent prices, € per MWh / Mvarh.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignedFactors {
    pub p_plus: f64,
    pub p_minus: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

impl SignedFactors {
    pub fn symmetric(c_s_p: f64, c_s_q: f64) -> Self {
        SignedFactors {
            p_plus: c_s_p,
            p_minus: c_s_p,
            q_plus: c_s_q,
            q_minus: c_s_q,
        }
    }
}

/// Service prices of one unit.
///
/// `c_s_p` / `c_s_q` apply to the magnitude of a deviation. The optional
/// directional prices distinguish increase and decrease; they are given as a
/// complete quadruple or not at all, and are only used when costs are
/// resolved in [`CostMode::Signed`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFactors {
    #[serde(default)]
    pub c_s_p: f64,
    #[serde(default)]
    pub c_s_q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_s_p_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_s_p_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_s_q_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_s_q_minus: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostMode {
    #[default]
    Magnitude,
    Signed,
}

impl CostFactors {
    pub fn new(c_s_p: f64, c_s_q: f64) -> Self {
        CostFactors {
            c_s_p,
            c_s_q,
            ..Default::default()
        }
    }

    pub fn with_signed(mut self, s: SignedFactors) -> Self {
        self.c_s_p_plus = Some(s.p_plus);
        self.c_s_p_minus = Some(s.p_minus);
        self.c_s_q_plus = Some(s.q_plus);
        self.c_s_q_minus = Some(s.q_minus);
        self
    }

    /// The directional quadruple, if given.
    pub fn signed(&self) -> Option<SignedFactors> {
        Some(SignedFactors {
            p_plus: self.c_s_p_plus?,
            p_minus: self.c_s_p_minus?,
            q_plus: self.c_s_q_plus?,
            q_minus: self.c_s_q_minus?,
        })
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let check = |v: f64, name: &'static str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(MarketError::NegativeFactor(name))
            }
        };
        check(self.c_s_p, "c_s_p")?;
        check(self.c_s_q, "c_s_q")?;
        let parts = [
            (self.c_s_p_plus, "c_s_p_plus"),
            (self.c_s_p_minus, "c_s_p_minus"),
            (self.c_s_q_plus, "c_s_q_plus"),
            (self.c_s_q_minus, "c_s_q_minus"),
        ];
        let given = parts.iter().filter(|(v, _)| v.is_some()).count();
        if given != 0 && given != 4 {
            return Err(MarketError::IncompleteSigned);
        }
        for (v, name) in parts {
            if let Some(v) = v {
                check(v, name)?;
            }
        }
        Ok(())
    }

    /// The four directional prices in effect for `mode`. Units without a
    /// signed quadruple fall back to their symmetric prices.
    pub fn resolve(&self, mode: CostMode) -> SignedFactors {
        match (mode, self.signed()) {
            (CostMode::Signed, Some(s)) => s,
            _ => SignedFactors::symmetric(self.c_s_p, self.c_s_q),
        }
    }
}

/// Service cost of a deviation using magnitudes: `(|dp|·c_s_p + |dq|·c_s_q)·d`.
pub fn service_cost(dp: f64, dq: f64, factors: &CostFactors, d: f64) -> f64 {
    (dp.abs() * factors.c_s_p + dq.abs() * factors.c_s_q) * d
}

/// Service cost with separate increase and decrease components.
pub fn service_cost_signed(
    dp_plus: f64,
    dp_minus: f64,
    dq_plus: f64,
    dq_minus: f64,
    factors: &SignedFactors,
    d: f64,
) -> Result<f64, MarketError> {
    if dp_plus < 0.0 || dp_minus < 0.0 || dq_plus < 0.0 || dq_minus < 0.0 {
        return Err(MarketError::NegativeComponent);
    }
    if dp_plus > 0.0 && dp_minus > 0.0 {
        return Err(MarketError::BothDirections("dp"));
    }
    if dq_plus > 0.0 && dq_minus > 0.0 {
        return Err(MarketError::BothDirections("dq"));
    }
    Ok((dp_plus * factors.p_plus
        + dp_minus * factors.p_minus
        + dq_plus * factors.q_plus
        + dq_minus * factors.q_minus)
        * d)
}

/// Cost of a signed deviation, routing each component to its direction.
pub fn cost_of_delta(delta: Pq, factors: &SignedFactors, d: f64) -> f64 {
    let cp = if delta.p >= 0.0 {
        delta.p * factors.p_plus
    } else {
        -delta.p * factors.p_minus
    };
    let cq = if delta.q >= 0.0 {
        delta.q * factors.q_plus
    } else {
        -delta.q * factors.q_minus
    };
    (cp + cq) * d
}

/// Pricing of grid losses relative to the operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPriceSpec {
    /// €/MWh.
    pub c_loss: f64,
    /// Losses at the operating point, MW.
    pub p_loss_0: f64,
    /// Hours.
    pub duration: f64,
}

impl LossPriceSpec {
    pub fn new(c_loss: f64, p_loss_0: f64, duration: f64) -> Result<Self, MarketError> {
        if !(c_loss.is_finite() && c_loss >= 0.0) {
            return Err(MarketError::NegativeFactor("c_loss"));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(MarketError::NonPositiveDuration(duration));
        }
        Ok(LossPriceSpec {
            c_loss,
            p_loss_0,
            duration,
        })
    }
}

/// Only loss increases are charged.
pub fn loss_cost(p_loss_j: f64, loss: &LossPriceSpec) -> f64 {
    let delta = p_loss_j - loss.p_loss_0;
    if delta > 0.0 {
        delta * loss.c_loss * loss.duration
    } else {
        0.0
    }
}

/// Total cost of one operating state: per-bus service costs plus loss cost.
pub fn particle_cost(bus_costs: &[f64], loss: &LossPriceSpec, p_loss_j: f64) -> f64 {
    bus_costs.iter().sum::<f64>() + loss_cost(p_loss_j, loss)
}
