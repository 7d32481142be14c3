//! Reaction terms f(x, t) with their antiderivatives, declared growth
//! envelopes and monotonicity class of t -> f(x, t) / t^(p-1).
//!
//! All kinds are extended by f(x, t) := f(x, 0) for t <= 0, matching the
//! convention used when classifying non-negative critical points.

use serde::{Deserialize, Serialize};

use crate::error::{AnisoError, Result};
use crate::grid::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    StrictlyDecreasing,
    NonIncreasing,
    Other,
}

/// Growth envelope data: `sign(t) f(x,t) <= mu (|t| + theta)^(q-1)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Envelope {
    pub mu: f64,
    pub theta: f64,
    pub q: f64,
}

#[derive(Clone, Debug)]
pub enum ReactionKind {
    /// f(t) = value for every t.
    Constant(f64),
    /// f(t) = coeff * t^exponent on t > 0, zero on t <= 0 (exponent > 0).
    Power { coeff: f64, exponent: f64 },
    /// f(t) = mu (t + theta) on t > 0, mu * theta on t <= 0.
    Affine { mu: f64, theta: f64 },
    /// Piecewise-linear interpolation of (ts, fs); constant beyond the table.
    Tabulated { ts: Vec<f64>, fs: Vec<f64> },
    /// f(x, t) = weight(x) * t^exponent on t > 0, zero on t <= 0.
    WeightedPower { weight: Vec<f64>, exponent: f64 },
}

#[derive(Clone, Debug)]
pub struct Reaction {
    pub kind: ReactionKind,
    pub envelope: Envelope,
    pub monotonicity: Monotonicity,
}

impl Reaction {
    pub fn new(kind: ReactionKind, envelope: Envelope, monotonicity: Monotonicity) -> Result<Self> {
        if !(envelope.mu >= 0.0 && envelope.theta >= 0.0 && envelope.q >= 1.0) {
            return Err(AnisoError::InvalidReaction(
                "envelope needs mu, theta >= 0 and q >= 1".into(),
            ));
        }
        match &kind {
            ReactionKind::Power { exponent, .. } => {
                if !(*exponent > 0.0) {
                    return Err(AnisoError::InvalidReaction(
                        "power exponent must be positive".into(),
                    ));
                }
            }
            ReactionKind::Tabulated { ts, fs } => {
                if ts.len() != fs.len() || ts.len() < 2 {
                    return Err(AnisoError::InvalidReaction(
                        "tabulated reaction needs matching grids of length >= 2".into(),
                    ));
                }
                if !ts.windows(2).all(|w| w[1] > w[0]) {
                    return Err(AnisoError::InvalidReaction(
                        "tabulated t-grid must be strictly increasing".into(),
                    ));
                }
            }
            _ => {}
        }
        let r = Reaction {
            kind,
            envelope,
            monotonicity,
        };
        r.check_envelope()?;
        Ok(r)
    }

    pub fn constant(value: f64) -> Result<Self> {
        // sign(t) f = sign(t) value <= |value| (|t|+0)^0.
        Reaction::new(
            ReactionKind::Constant(value),
            Envelope {
                mu: value.abs(),
                theta: 0.0,
                q: 1.0,
            },
            Monotonicity::StrictlyDecreasing,
        )
    }

    pub fn power(coeff: f64, exponent: f64, p: f64) -> Result<Self> {
        let mono = if exponent + 1.0 < p {
            Monotonicity::StrictlyDecreasing
        } else if exponent + 1.0 == p {
            Monotonicity::NonIncreasing
        } else {
            Monotonicity::Other
        };
        Reaction::new(
            ReactionKind::Power { coeff, exponent },
            Envelope {
                mu: coeff.max(0.0),
                theta: 0.0,
                q: exponent + 1.0,
            },
            mono,
        )
    }

    pub fn affine(mu: f64, theta: f64) -> Result<Self> {
        Reaction::new(
            ReactionKind::Affine { mu, theta },
            Envelope {
                mu,
                theta,
                q: 2.0,
            },
            Monotonicity::StrictlyDecreasing,
        )
    }

    fn eval_raw(&self, node: usize, t: f64) -> f64 {
        match &self.kind {
            ReactionKind::Constant(v) => *v,
            ReactionKind::Power { coeff, exponent } => {
                if t > 0.0 {
                    coeff * t.powf(*exponent)
                } else {
                    0.0
                }
            }
            ReactionKind::Affine { mu, theta } => mu * (t + theta),
            ReactionKind::Tabulated { ts, fs } => {
                let t = t.clamp(ts[0], *ts.last().unwrap());
                let idx = match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
                    Ok(i) => return fs[i],
                    Err(i) => i.clamp(1, ts.len() - 1),
                };
                let (t0, t1) = (ts[idx - 1], ts[idx]);
                let w = (t - t0) / (t1 - t0);
                fs[idx - 1] * (1.0 - w) + fs[idx] * w
            }
            ReactionKind::WeightedPower { weight, exponent } => {
                if t > 0.0 {
                    weight[node] * t.powf(*exponent)
                } else {
                    0.0
                }
            }
        }
    }

    /// f(x, t) with the non-positive extension f(x, t <= 0) = f(x, 0).
    pub fn eval(&self, node: usize, t: f64) -> f64 {
        if t <= 0.0 {
            self.eval_raw(node, 0.0)
        } else {
            self.eval_raw(node, t)
        }
    }

    /// F(x, t) = integral of f(x, .) from 0 to t (under the extension).
    pub fn antiderivative(&self, node: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return self.eval_raw(node, 0.0) * t;
        }
        match &self.kind {
            ReactionKind::Constant(v) => v * t,
            ReactionKind::Power { coeff, exponent } => {
                coeff * t.powf(exponent + 1.0) / (exponent + 1.0)
            }
            ReactionKind::Affine { mu, theta } => mu * (0.5 * t * t + theta * t),
            ReactionKind::Tabulated { ts, fs } => {
                // Exact integral of the piecewise-linear interpolant.
                let mut acc = 0.0;
                let mut prev_t = 0.0;
                let mut prev_f = self.eval_raw(node, 0.0);
                for (&tk, &fk) in ts.iter().zip(fs) {
                    if tk <= 0.0 {
                        continue;
                    }
                    let seg_end = tk.min(t);
                    if seg_end > prev_t {
                        let f_end = self.eval_raw(node, seg_end);
                        acc += 0.5 * (prev_f + f_end) * (seg_end - prev_t);
                        prev_t = seg_end;
                        prev_f = f_end;
                    }
                    let _ = fk;
                    if tk >= t {
                        break;
                    }
                }
                if t > prev_t {
                    let f_end = self.eval_raw(node, t);
                    acc += 0.5 * (prev_f + f_end) * (t - prev_t);
                }
                acc
            }
            ReactionKind::WeightedPower { weight, exponent } => {
                weight[node] * t.powf(exponent + 1.0) / (exponent + 1.0)
            }
        }
    }

    /// Nodal values f(x, u(x)).
    pub fn eval_field(&self, u: &ScalarField) -> Vec<f64> {
        u.values()
            .iter()
            .enumerate()
            .map(|(k, &t)| self.eval(k, t))
            .collect()
    }

    /// Quadrature integral of f(x, u) u.
    pub fn fu_total(&self, u: &ScalarField) -> f64 {
        let w = u.domain().node_weight();
        u.values()
            .iter()
            .enumerate()
            .map(|(k, &t)| self.eval(k, t) * t)
            .sum::<f64>()
            * w
    }

    /// Quadrature integral of F(x, u).
    pub fn big_f_total(&self, u: &ScalarField) -> f64 {
        let w = u.domain().node_weight();
        u.values()
            .iter()
            .enumerate()
            .map(|(k, &t)| self.antiderivative(k, t))
            .sum::<f64>()
            * w
    }

    pub fn is_x_independent(&self) -> bool {
        !matches!(self.kind, ReactionKind::WeightedPower { .. })
    }

    /// Whether f(x, t) >= 0 for t <= 0 (with the extension, f(x, 0) >= 0).
    pub fn nonneg_for_nonpos_t(&self) -> bool {
        match &self.kind {
            ReactionKind::WeightedPower { weight, .. } => weight.iter().all(|w| *w >= 0.0),
            _ => self.eval_raw(0, 0.0) >= 0.0,
        }
    }

    fn sample_ts(&self, theta: f64) -> Vec<f64> {
        let mut ts = vec![0.0];
        for k in -6..=4 {
            let t = 10f64.powi(k) * (1.0 + theta);
            ts.push(t);
            ts.push(-t);
            ts.push(2.5 * t);
        }
        ts
    }

    fn check_envelope(&self) -> Result<()> {
        let Envelope { mu, theta, q } = self.envelope;
        let nodes = match &self.kind {
            ReactionKind::WeightedPower { weight, .. } => weight.len(),
            _ => 1,
        };
        for node in 0..nodes {
            for &t in &self.sample_ts(theta) {
                let f = self.eval(node, t);
                let bound = mu * (t.abs() + theta).powf(q - 1.0);
                if t.signum() * f > bound * (1.0 + 1e-12) + 1e-300 {
                    return Err(AnisoError::InvalidReaction(format!(
                        "declared envelope violated at t = {t}: sign(t) f = {} > {bound}",
                        t.signum() * f
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sampled finite-difference check of the declared monotonicity of
    /// t -> f(x,t)/t^(p-1) on a logarithmic grid.
    pub fn check_monotonicity(&self, p: f64) -> Result<()> {
        if self.monotonicity == Monotonicity::Other {
            return Ok(());
        }
        let nodes = match &self.kind {
            ReactionKind::WeightedPower { weight, .. } => weight.len(),
            _ => 1,
        };
        let grid: Vec<f64> = (0..80)
            .map(|k| 10f64.powf(-4.0 + 6.0 * k as f64 / 79.0))
            .collect();
        for node in 0..nodes {
            let ratios: Vec<f64> = grid
                .iter()
                .map(|&t| self.eval(node, t) / t.powf(p - 1.0))
                .collect();
            for w in ratios.windows(2) {
                let slack = 1e-10 * (1.0 + w[0].abs());
                if w[1] > w[0] + slack {
                    return Err(AnisoError::InvalidReaction(format!(
                        "declared monotone but f(t)/t^(p-1) increases: {} -> {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Serialized reaction description for configs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionSpec {
    Constant {
        value: f64,
    },
    Power {
        coeff: f64,
        exponent: f64,
    },
    Affine {
        mu: f64,
        theta: f64,
    },
    Tabulated {
        ts: Vec<f64>,
        fs: Vec<f64>,
        envelope: Envelope,
        monotonicity: Monotonicity,
    },
}

impl ReactionSpec {
    pub fn build(&self, p: f64) -> Result<Reaction> {
        match self {
            ReactionSpec::Constant { value } => Reaction::constant(*value),
            ReactionSpec::Power { coeff, exponent } => Reaction::power(*coeff, *exponent, p),
            ReactionSpec::Affine { mu, theta } => Reaction::affine(*mu, *theta),
            ReactionSpec::Tabulated {
                ts,
                fs,
                envelope,
                monotonicity,
            } => Reaction::new(
                ReactionKind::Tabulated {
                    ts: ts.clone(),
                    fs: fs.clone(),
                },
                *envelope,
                *monotonicity,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn constant_reaction_basics() {
        let r = Reaction::constant(2.0).unwrap();
        assert_eq!(r.eval(0, -1.0), 2.0);
        assert_eq!(r.eval(0, 3.0), 2.0);
        assert_eq!(r.antiderivative(0, 2.0), 4.0);
        assert_eq!(r.antiderivative(0, -1.0), -2.0);
        r.check_monotonicity(2.0).unwrap();
        assert!(r.nonneg_for_nonpos_t());
    }

    #[test]
    fn power_reaction_extension_and_monotonicity() {
        let r = Reaction::power(3.0, 1.0, 2.0).unwrap();
        assert_eq!(r.monotonicity, Monotonicity::NonIncreasing);
        assert_eq!(r.eval(0, -2.0), 0.0);
        assert!((r.eval(0, 2.0) - 6.0).abs() < 1e-15);
        assert!((r.antiderivative(0, 2.0) - 6.0).abs() < 1e-15);
        r.check_monotonicity(2.0).unwrap();

        let sup = Reaction::power(1.0, 2.0, 2.0).unwrap();
        assert_eq!(sup.monotonicity, Monotonicity::Other);
        // Declared non-increasing but actually increasing: rejected.
        let bad = Reaction::new(
            ReactionKind::Power {
                coeff: 1.0,
                exponent: 2.0,
            },
            Envelope {
                mu: 1.0,
                theta: 0.0,
                q: 3.0,
            },
            Monotonicity::NonIncreasing,
        )
        .unwrap();
        assert!(bad.check_monotonicity(2.0).is_err());
    }

    #[test]
    fn affine_reaction() {
        let r = Reaction::affine(2.0, 1.0).unwrap();
        assert_eq!(r.eval(0, 1.0), 4.0);
        assert_eq!(r.eval(0, -5.0), 2.0); // extension: f(0) = mu theta
        assert!((r.antiderivative(0, 2.0) - 2.0 * (2.0 + 2.0)).abs() < 1e-15);
        r.check_monotonicity(2.0).unwrap();
    }

    #[test]
    fn envelope_violation_rejected() {
        // Claim mu = 0.1 for f = 1: violated at any t > 0.
        let err = Reaction::new(
            ReactionKind::Constant(1.0),
            Envelope {
                mu: 0.1,
                theta: 0.0,
                q: 1.0,
            },
            Monotonicity::StrictlyDecreasing,
        );
        assert!(err.is_err());
    }

    #[test]
    fn tabulated_interpolation_and_integral() {
        let r = Reaction::new(
            ReactionKind::Tabulated {
                ts: vec![0.0, 1.0, 2.0],
                fs: vec![1.0, 2.0, 0.5],
            },
            Envelope {
                mu: 2.0,
                theta: 1.0,
                q: 2.0,
            },
            Monotonicity::Other,
        )
        .unwrap();
        assert!((r.eval(0, 0.5) - 1.5).abs() < 1e-15);
        assert!((r.eval(0, 5.0) - 0.5).abs() < 1e-15); // clamped
        // Integral over [0,1]: trapezoid of 1 -> 2 is 1.5.
        assert!((r.antiderivative(0, 1.0) - 1.5).abs() < 1e-12);
        // Over [0, 1.5]: 1.5 + trapezoid of 2 -> 1.25 over width 0.5.
        assert!((r.antiderivative(0, 1.5) - (1.5 + 0.5 * (2.0 + 1.25) / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn field_totals() {
        let dom = Domain::interval(3, 4.0).unwrap(); // h = 1
        let u = ScalarField::from_values(&dom, vec![1.0, 2.0, -1.0]).unwrap();
        let r = Reaction::constant(2.0).unwrap();
        // f u: 2*1 + 2*2 + 2*(-1) = 4.
        assert!((r.fu_total(&u) - 4.0).abs() < 1e-14);
        // F(u) = 2u: 2 + 4 - 2 = 4.
        assert!((r.big_f_total(&u) - 4.0).abs() < 1e-14);
    }
}
