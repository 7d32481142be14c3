//! Explicit constants and iteration machinery behind the a-priori sup bound:
//! the Gagliardo-Nirenberg interpolation constant, the geometric level-set
//! iteration lemma with its explicit smallness threshold, the assembled
//! sup-bound formula, and a direct per-level verification of the gradient
//! level-set inequality.

use serde::{Deserialize, Serialize};

use crate::error::{AnisoError, Result};
use crate::gauge::Energy;
use crate::grid::ScalarField;

/// Documented discretization slack for continuum inequalities checked with
/// forward differences and piecewise-constant quadrature.
pub const EPS_H: f64 = 0.05;

/// Unit-ball volumes for dimensions 1..=3; higher dimensions are out of scope.
pub fn unit_ball_volume(n: usize) -> Result<f64> {
    match n {
        1 => Ok(2.0),
        2 => Ok(std::f64::consts::PI),
        3 => Ok(4.0 * std::f64::consts::PI / 3.0),
        _ => Err(AnisoError::InvalidParameter(format!(
            "unit-ball volume table covers dimensions 1..=3, got {n}"
        ))),
    }
}

/// Critical Sobolev exponent; `None` encodes "any finite exponent" (p >= N).
pub fn critical_exponent(n: usize, p: f64) -> Option<f64> {
    if p < n as f64 {
        Some(n as f64 * p / (n as f64 - p))
    } else {
        None
    }
}

/// Parameters of the geometric level-truncation iteration
/// (decay inequality with constants `b`, exponents `beta`, `delta`,
/// superlinearity `gamma`, integrand power `q`, starting level `h0`).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IterationParams {
    pub b: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub q: f64,
    pub h0: f64,
}

impl IterationParams {
    pub fn new(b: f64, beta: f64, gamma: f64, delta: f64, q: f64, h0: f64) -> Result<Self> {
        let all_finite = [b, beta, gamma, delta, q, h0].iter().all(|x| x.is_finite());
        if !all_finite || b < 0.0 || beta < 0.0 || delta < 0.0 || gamma <= 0.0 || q < 1.0 || h0 <= 0.0
        {
            return Err(AnisoError::InvalidParameter(format!(
                "iteration parameters need b,beta,delta >= 0, gamma > 0, q >= 1, h0 > 0; got b={b} beta={beta} gamma={gamma} delta={delta} q={q} h0={h0}"
            )));
        }
        Ok(IterationParams {
            b,
            beta,
            gamma,
            delta,
            q,
            h0,
        })
    }

    /// Growth factor `A = 4^(beta+delta)` of the dyadic level ladder.
    pub fn a(&self) -> f64 {
        4f64.powf(self.beta + self.delta)
    }
}

/// Gagliardo-Nirenberg data: the interpolation constant and the exponents it
/// serves.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GnParams {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub constant: f64,
    /// `None` means unrestricted (any finite exponent admissible).
    pub critical: Option<f64>,
}

impl GnParams {
    pub fn new(n: usize, p: f64, q: f64) -> Result<Self> {
        Ok(GnParams {
            n,
            p,
            q,
            constant: gn_constant(n, p, q)?,
            critical: critical_exponent(n, p),
        })
    }
}

/// `G = (1/(N omega_N^(1/N))) (qp + p - q)/p` for `N >= 2`, `p, q >= 1`.
pub fn gn_constant(n: usize, p: f64, q: f64) -> Result<f64> {
    if n < 2 {
        return Err(AnisoError::InvalidParameter(
            "GN form requires N >= 2".into(),
        ));
    }
    if !(p >= 1.0 && q >= 1.0) {
        return Err(AnisoError::InvalidParameter(
            "GN exponents need p >= 1 and q >= 1".into(),
        ));
    }
    let omega = unit_ball_volume(n)?;
    let nf = n as f64;
    Ok((q * p + p - q) / p / (nf * omega.powf(1.0 / nf)))
}

/// Quadrature check of the interpolation inequality on a 2d field extended by
/// zero: returns LHS/RHS. The contract is ratio <= 1 + [`EPS_H`] for smooth
/// fields resolved by the grid.
pub fn gn_verify(u: &ScalarField, p: f64, q: f64) -> Result<f64> {
    let dom = u.domain();
    if dom.dim() != 2 || dom.is_path_graph() {
        return Err(AnisoError::InvalidParameter(
            "interpolation check needs a 2d continuum domain".into(),
        ));
    }
    let n = 2.0f64;
    if u.norm_inf() == 0.0 {
        return Err(AnisoError::InvalidField("zero field".into()));
    }
    let g = gn_constant(2, p, q)?;
    let s = n * (q * p + p - q) / ((n - 1.0) * p);
    let lhs = u
        .map(|t| t.abs().powf(s))
        .integrate()
        .powf((n - 1.0) / n);
    let grad_term = u.gradient().p_power_total(p).powf(1.0 / p);
    let mass = u.map(|t| t.abs().powf(q)).integrate();
    let dual = 1.0 - 1.0 / p;
    let mass_term = if dual == 0.0 { 1.0 } else { mass.powf(dual) };
    Ok(lhs / (g * grad_term * mass_term))
}

/// Sup bound from the level-truncation lemma: the explicit threshold
/// `max(2 h0, A^((gamma+1)/(gamma beta)) (b^(1/gamma) I0)^(gamma/beta))`.
pub fn degiorgi_sup(params: &IterationParams, i0: f64) -> Result<f64> {
    if params.beta == 0.0 {
        return Err(AnisoError::InvalidParameter(
            "only qualitative boundedness; no formula".into(),
        ));
    }
    if i0 < 0.0 {
        return Err(AnisoError::InvalidParameter(
            "starting integral must be non-negative".into(),
        ));
    }
    let a = params.a();
    let c = a.powf((params.gamma + 1.0) / (params.gamma * params.beta));
    let clause = c * (params.b.powf(1.0 / params.gamma) * i0).powf(params.gamma / params.beta);
    Ok((2.0 * params.h0).max(clause))
}

/// The sup-bound formula `max(theta, C ((mu/c)^(N/p) uq_norm)^(p/(pq+(p-q)N)))`
/// assembled through the iteration lemma with the proof-level parameter
/// choices. `uq_norm` is the integral of |u|^q.
pub fn theorem_sup_bound(
    c: f64,
    mu: f64,
    theta: f64,
    n: usize,
    p: f64,
    q: f64,
    uq_norm: f64,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(AnisoError::InvalidParameter(
            "coercivity constant must be positive".into(),
        ));
    }
    if mu < 0.0 || theta < 0.0 || uq_norm < 0.0 {
        return Err(AnisoError::InvalidParameter(
            "mu, theta and the norm must be non-negative".into(),
        ));
    }
    if q < 1.0 {
        return Err(AnisoError::InvalidParameter("q must be >= 1".into()));
    }
    if let Some(pc) = critical_exponent(n, p) {
        if q >= pc {
            return Err(AnisoError::InvalidParameter(
                "exponent beta vanishes at q = p*".into(),
            ));
        }
    }
    let params = sup_bound_params(c, mu, n, p, q, theta)?;
    let bound = degiorgi_sup(&params, uq_norm)?;
    Ok(theta.max(bound))
}

/// The iteration parameters used by [`theorem_sup_bound`], exposed so the
/// continuity of the assembled constant can be probed directly.
pub fn sup_bound_params(
    c: f64,
    mu: f64,
    n: usize,
    p: f64,
    q: f64,
    theta: f64,
) -> Result<IterationParams> {
    let g = gn_constant(n, p, q)?;
    let nf = n as f64;
    let denom = q * p + p - q;
    let c_t3 = (4f64.powf(q - 1.0) * g.powf(p)).powf(q / denom);
    let mu_scaled = mu / c;
    let b = c_t3 * mu_scaled.powf(q / denom);
    let beta = q * (q * p + (p - q) * nf) / (nf * denom);
    let gamma = q * p / (nf * denom);
    let delta = q * q / denom;
    let h0 = (theta / 2.0).max(f64::MIN_POSITIVE);
    IterationParams::new(b, beta, gamma, delta, q, h0)
}

/// One row of the level-set inequality report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSetRow {
    pub k: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub rows: Vec<LevelSetRow>,
    pub all_pass: bool,
    /// Levels below theta/2 that were skipped (the inequality is only claimed
    /// from theta/2 up).
    pub skipped: usize,
}

/// Checks, level by level, that the truncated gradient mass
/// `int |D(u-k)+|^p` is at most `mu 4^(q-1) int_{u>=k} (k^q + (u-k)^q)`,
/// with slack `1 + EPS_H`. Assumes the energy has been rescaled so its
/// coercivity constant is 1 (pass `mu/c` otherwise).
pub fn levelset_verify(
    u: &ScalarField,
    _energy: &Energy,
    mu: f64,
    theta: f64,
    q: f64,
    p: f64,
    ks: &[f64],
) -> LevelSetReport {
    let mut rows = Vec::new();
    let mut skipped = 0;
    let scale = 1e-14 * (1.0 + u.gradient().p_power_total(p));
    for &k in ks {
        if k < theta / 2.0 {
            skipped += 1;
            continue;
        }
        let lhs = u.excess(k).gradient().p_power_total(p);
        let above = u.level_set_measure(k);
        let excess_mass = u.excess(k).map(|t| t.powf(q)).integrate();
        let rhs = mu * 4f64.powf(q - 1.0) * (k.powf(q) * above + excess_mass);
        let pass = lhs <= (1.0 + EPS_H) * rhs + scale;
        rows.push(LevelSetRow { k, lhs, rhs, pass });
    }
    let all_pass = rows.iter().all(|r| r.pass);
    LevelSetReport {
        rows,
        all_pass,
        skipped,
    }
}

/// Evenly spaced level grid from theta/2 to the sup of the field.
pub fn default_k_grid(u: &ScalarField, theta: f64, count: usize) -> Vec<f64> {
    let lo = theta / 2.0;
    let hi = u.max().max(lo);
    let count = count.max(2);
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}
