//! Discrete energy critical points via semi-linearized fixed-point iteration,
//! first Dirichlet eigenvalues (free and sign-constrained) via normalized
//! descent on the Rayleigh quotient, subgradient-selection recovery, and the
//! multi-start classification experiment for uniqueness statements.

pub mod inner;
pub mod reaction;

use serde::{Deserialize, Serialize};

use crate::error::{AnisoError, Result};
use crate::gauge::{Energy, EnergyKind};
use crate::grid::{DomainRef, GradientField, ScalarField};
use crate::picone::proportionality_detect;
use crate::util::{dot, parallel_map, seeded_rng};
use rand::Rng as _;

pub use inner::{normalized_dual_residual, solve_subproblem, InnerOptions, InnerResult};
pub use reaction::{Envelope, Monotonicity, Reaction, ReactionKind, ReactionSpec};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Relative sup-norm tolerance on successive outer iterates.
    pub tol_fp: f64,
    /// Damping weight on the new iterate.
    pub damping: f64,
    pub max_outer: usize,
    pub inner: InnerOptions,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_fp: 1e-8,
            damping: 0.7,
            max_outer: 300,
            inner: InnerOptions::default(),
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CriticalPointResult {
    pub u: ScalarField,
    /// Selection from the subdifferential at Du used by the certificates.
    pub xi: GradientField,
    pub iterations: usize,
    pub fixed_point_residual: f64,
    /// Normalized dual residual of the final subproblem certificate.
    pub subproblem_gap: f64,
    /// |p int H(Du) - int f(.,u) u|, absolute and relative.
    pub identity_defect: f64,
    pub identity_defect_rel: f64,
    pub euler_defect_mean: f64,
    pub euler_defect_max: f64,
    pub j_value: f64,
    /// Some(check) when the reaction is non-negative for t <= 0.
    pub nonnegative_ok: Option<bool>,
    pub seed: u64,
}

/// Serializable scalar summary of a critical-point run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPointSummary {
    pub iterations: usize,
    pub fixed_point_residual: f64,
    pub subproblem_gap: f64,
    pub identity_defect: f64,
    pub identity_defect_rel: f64,
    pub euler_defect_mean: f64,
    pub euler_defect_max: f64,
    pub j_value: f64,
    pub sup_norm: f64,
    pub min_value: f64,
    pub nonnegative_ok: Option<bool>,
    pub seed: u64,
}

impl CriticalPointResult {
    pub fn summary(&self) -> CriticalPointSummary {
        CriticalPointSummary {
            iterations: self.iterations,
            fixed_point_residual: self.fixed_point_residual,
            subproblem_gap: self.subproblem_gap,
            identity_defect: self.identity_defect,
            identity_defect_rel: self.identity_defect_rel,
            euler_defect_mean: self.euler_defect_mean,
            euler_defect_max: self.euler_defect_max,
            j_value: self.j_value,
            sup_norm: self.u.norm_inf(),
            min_value: self.u.min(),
            nonnegative_ok: self.nonnegative_ok,
            seed: self.seed,
        }
    }
}

/// Minimizes the frozen-reaction convex functional
/// `v -> sum H(Dv) w - sum g v w`; `g` carries the frozen nodal reaction.
pub fn semilinearized_solve(
    energy: &Energy,
    dom: &DomainRef,
    g: &ScalarField,
    opts: &InnerOptions,
) -> Result<InnerResult> {
    solve_subproblem(energy, dom, g.values(), opts)
}

fn validate_problem(energy: &Energy, dom: &DomainRef) -> Result<()> {
    if energy.dim() != dom.dim() {
        return Err(AnisoError::InvalidEnergy(format!(
            "energy dimension {} does not match domain dimension {}",
            energy.dim(),
            dom.dim()
        )));
    }
    let (c, _) = energy.growth();
    if !(c > 0.0) {
        return Err(AnisoError::InvalidEnergy(
            "energy must be coercive (c > 0)".into(),
        ));
    }
    if !(energy.homogeneity() > 1.0) {
        return Err(AnisoError::InvalidEnergy(
            "solver requires homogeneity p > 1".into(),
        ));
    }
    Ok(())
}

/// Fixed-point iteration `u_{k+1} = (1-w) u_k + w argmin J_{u_k}` with a
/// final undamped certificate pass.
pub fn critical_point(
    energy: &Energy,
    dom: &DomainRef,
    reaction: &Reaction,
    u_init: &ScalarField,
    opts: &SolverOptions,
) -> Result<CriticalPointResult> {
    validate_problem(energy, dom)?;
    reaction.check_monotonicity(energy.homogeneity())?;
    let p = energy.homogeneity();
    // A constant reaction freezes to the same subproblem regardless of the
    // iterate, so damping only slows the exact one-step fixed point down.
    let omega = if matches!(reaction.kind, ReactionKind::Constant(_)) {
        1.0
    } else {
        opts.damping
    };
    let mut u = u_init.clone();
    let mut iterations = 0usize;
    let mut res_history: Vec<f64> = Vec::new();
    let mut converged = false;
    for k in 0..opts.max_outer {
        let g = reaction.eval_field(&u);
        let sol = solve_subproblem(energy, dom, &g, &opts.inner)?;
        let next = u.scaled(1.0 - omega).plus(&sol.v.scaled(omega));
        let res = next.minus(&u).norm_inf() / (1.0 + next.norm_inf());
        u = next;
        iterations = k + 1;
        res_history.push(res);
        if res <= opts.tol_fp {
            converged = true;
            break;
        }
        // Oscillation guard: no contraction over a long window.
        if k >= 40 && res > 0.9 * res_history[k - 20] && res > 10.0 * opts.tol_fp {
            return Err(AnisoError::SolverFailure(
                "no fixed point found; reaction may violate monotonicity".into(),
            ));
        }
    }
    if !converged {
        return Err(AnisoError::SolverFailure(
            "no fixed point found; reaction may violate monotonicity".into(),
        ));
    }

    // Undamped tail: sharpen towards the exact argmin of its own functional.
    let mut last = None;
    for _ in 0..6 {
        let g = reaction.eval_field(&u);
        let sol = solve_subproblem(energy, dom, &g, &opts.inner)?;
        let res = sol.v.minus(&u).norm_inf() / (1.0 + sol.v.norm_inf());
        u = sol.v.clone();
        iterations += 1;
        let done = res <= opts.tol_fp * 0.1;
        last = Some((sol, res));
        if done {
            break;
        }
    }
    let (sol, fixed_point_residual) = last.expect("at least one pass");

    // Certificates against the final frozen reaction.
    let g = reaction.eval_field(&u);
    let subproblem_gap = normalized_dual_residual(dom, sol.xi.components(), &g);
    let du = u.gradient();
    let energy_term = du.energy_total(energy);
    let fu = reaction.fu_total(&u);
    let identity_defect = (p * energy_term - fu).abs();
    let identity_defect_rel = identity_defect / (1.0 + p * energy_term.abs());
    let (euler_defect_mean, euler_defect_max) = euler_defect_stats(energy, &du, &sol.xi);
    let j_value = energy_term - reaction.big_f_total(&u);
    let nonnegative_ok = if reaction.nonneg_for_nonpos_t() {
        Some(u.min() >= -1e-10 * (1.0 + u.norm_inf()))
    } else {
        None
    };
    Ok(CriticalPointResult {
        u,
        xi: sol.xi,
        iterations,
        fixed_point_residual,
        subproblem_gap,
        identity_defect,
        identity_defect_rel,
        euler_defect_mean,
        euler_defect_max,
        j_value,
        nonnegative_ok,
        seed: opts.seed,
    })
}

fn euler_defect_stats(energy: &Energy, du: &GradientField, xi: &GradientField) -> (f64, f64) {
    let dom = du.domain();
    let p = energy.homogeneity();
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..dom.num_cells() {
        let z = du.cell(c);
        let d = p * energy.eval(z) - dot(xi.cell(c), z);
        max = max.max(d.abs());
        sum += d.abs();
        count += 1;
    }
    (sum / count.max(1) as f64, max)
}

/// J(u) = int H(Du) - F(x, u).
pub fn functional_value(energy: &Energy, reaction: &Reaction, u: &ScalarField) -> f64 {
    u.gradient().energy_total(energy) - reaction.big_f_total(u)
}

/// Recovery of a subdifferential selection at a given field by vanishing
/// smoothing: polytope gauges get the gradient of
/// `(M_K(z)^2 + eps^2 s^2)^(p/2)` along the lowest-index active facet for a
/// decreasing epsilon ladder; differentiable families return the exact
/// gradient.
#[derive(Clone, Debug)]
pub struct XiRecovery {
    pub xi: GradientField,
    pub exact: bool,
    pub euler_defect_mean: f64,
    pub euler_defect_max: f64,
    /// (epsilon, max Euler defect) per smoothing level (empty when exact).
    pub defects_by_epsilon: Vec<(f64, f64)>,
    /// Normalized dual residual against `g`, when given.
    pub divergence_residual: Option<f64>,
}

pub fn recover_xi(energy: &Energy, u: &ScalarField, g: Option<&[f64]>) -> Result<XiRecovery> {
    let dom = u.domain();
    let dim = dom.dim();
    let p = energy.homogeneity();
    let du = u.gradient();
    let canon = energy.canonical();
    let (xi, exact, defects_by_epsilon) = match canon.kind() {
        EnergyKind::Polytope(gauge) => {
            let mut s: f64 = 0.0;
            for c in 0..dom.num_cells() {
                let z = du.cell(c);
                s = s.max(dot(z, z).sqrt());
            }
            if s == 0.0 {
                s = 1.0;
            }
            let mut xi = vec![0.0; dom.num_cells() * dim];
            let mut ladder = Vec::new();
            for eps_rel in [1e-3, 1e-4, 1e-5] {
                let eps = eps_rel * s;
                let mut max_defect: f64 = 0.0;
                for c in 0..dom.num_cells() {
                    let z = du.cell(c);
                    let m = gauge.eval(z);
                    if !(m > 0.0) {
                        for k in 0..dim {
                            xi[c * dim + k] = 0.0;
                        }
                        continue;
                    }
                    let sel = gauge.active_facets(z)[0];
                    let a = &gauge.facets()[sel];
                    let scale = p * (m * m + eps * eps).powf(p / 2.0 - 1.0) * m;
                    for k in 0..dim {
                        xi[c * dim + k] = scale * a[k];
                    }
                    let defect = p * canon.eval(z) - dot(&xi[c * dim..(c + 1) * dim], z);
                    max_defect = max_defect.max(defect.abs());
                }
                ladder.push((eps, max_defect));
            }
            (xi, false, ladder)
        }
        _ => {
            let mut xi = vec![0.0; dom.num_cells() * dim];
            for c in 0..dom.num_cells() {
                let set = canon.subdiff(du.cell(c))?;
                xi[c * dim..(c + 1) * dim].copy_from_slice(set.selection());
            }
            (xi, true, Vec::new())
        }
    };
    let divergence_residual = g.map(|g| normalized_dual_residual(dom, &xi, g));
    let xi = GradientField::from_components(dom, xi)?;
    let (euler_defect_mean, euler_defect_max) = euler_defect_stats(energy, &du, &xi);
    Ok(XiRecovery {
        xi,
        exact,
        euler_defect_mean,
        euler_defect_max,
        defects_by_epsilon,
        divergence_residual,
    })
}

// ---------------------------------------------------------------------------
// Eigenvalues
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConstraint {
    Free,
    Plus,
    Minus,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub n_random_starts: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            max_iter: 4000,
            n_random_starts: 3,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub lambda: f64,
    pub v: ScalarField,
    pub constraint: SignConstraint,
    /// Accepted (monotone non-increasing) Rayleigh values of the winning run.
    pub rayleigh_history: Vec<f64>,
    pub starts: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub constraint: SignConstraint,
    pub norm_p: f64,
    pub starts: usize,
    pub history_len: usize,
}

impl EigenResult {
    pub fn summary(&self, p: f64) -> EigenSummary {
        EigenSummary {
            lambda: self.lambda,
            constraint: self.constraint,
            norm_p: self.v.norm_p(p),
            starts: self.starts,
            history_len: self.rayleigh_history.len(),
        }
    }
}

/// Rayleigh quotient `int H(Dv) / int |v|^p`.
pub fn rayleigh_quotient(energy: &Energy, v: &ScalarField) -> f64 {
    let p = energy.homogeneity();
    let num = v.gradient().energy_total(energy);
    let den = v.map(|t| t.abs().powf(p)).integrate();
    num / den
}

fn project_constraint(v: &ScalarField, constraint: SignConstraint, p: f64) -> Option<ScalarField> {
    let clamped = match constraint {
        SignConstraint::Free => v.clone(),
        SignConstraint::Plus => v.positive_part(),
        SignConstraint::Minus => v.negative_part().scaled(-1.0),
    };
    let norm = clamped.norm_p(p);
    if norm < 1e-300 {
        None
    } else {
        Some(clamped.scaled(1.0 / norm))
    }
}

fn rayleigh_gradient(energy: &Energy, v: &ScalarField, r: f64) -> Result<Vec<f64>> {
    let dom = v.domain();
    let dim = dom.dim();
    let p = energy.homogeneity();
    let dv = v.gradient();
    let mut sel = vec![0.0; dom.num_cells() * dim];
    for c in 0..dom.num_cells() {
        let set = energy.subdiff(dv.cell(c))?;
        sel[c * dim..(c + 1) * dim].copy_from_slice(set.selection());
    }
    let num_grad = dom.div_transpose(&sel);
    let cw = dom.cell_weight();
    let nw = dom.node_weight();
    let den = v.map(|t| t.abs().powf(p)).integrate();
    Ok(v
        .values()
        .iter()
        .zip(&num_grad)
        .map(|(&vi, &ng)| {
            let dg = if vi == 0.0 {
                0.0
            } else {
                p * vi.abs().powf(p - 2.0) * vi * nw
            };
            (cw * ng - r * dg) / den
        })
        .collect())
}

fn eigen_descend(
    energy: &Energy,
    start: &ScalarField,
    constraint: SignConstraint,
    opts: &EigenOptions,
) -> Option<(f64, ScalarField, Vec<f64>)> {
    let p = energy.homogeneity();
    let mut v = project_constraint(start, constraint, p)?;
    let mut r = rayleigh_quotient(energy, &v);
    let mut history = vec![r];
    let mut stall = 0usize;
    for _ in 0..opts.max_iter {
        let grad = match rayleigh_gradient(energy, &v, r) {
            Ok(g) => g,
            Err(_) => break,
        };
        let gn = dot(&grad, &grad).sqrt();
        if gn < 1e-300 {
            break;
        }
        let dir = ScalarField::from_values(v.domain(), grad.iter().map(|g| -g / gn).collect())
            .expect("sized");
        // Line search over the rotation angle towards the normalized
        // negative gradient: coarse scan plus golden-section refinement.
        let phi = |theta: f64| -> f64 {
            let trial = v.scaled(theta.cos()).plus(&dir.scaled(theta.sin()));
            match project_constraint(&trial, constraint, p) {
                Some(w) => rayleigh_quotient(energy, &w),
                None => f64::INFINITY,
            }
        };
        let mut best_theta = 0.0;
        let mut best_val = r;
        for k in 1..=16 {
            let theta = 1.2 * k as f64 / 16.0;
            let val = phi(theta);
            if val < best_val {
                best_val = val;
                best_theta = theta;
            }
        }
        let mut lo = (best_theta - 0.15).max(0.0);
        let mut hi = (best_theta + 0.15).min(1.2);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - gr * (hi - lo);
        let mut x2 = lo + gr * (hi - lo);
        let mut f1 = phi(x1);
        let mut f2 = phi(x2);
        for _ in 0..48 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - gr * (hi - lo);
                f1 = phi(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + gr * (hi - lo);
                f2 = phi(x2);
            }
        }
        let (theta, val) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
        let (theta, val) = if val < best_val {
            (theta, val)
        } else {
            (best_theta, best_val)
        };
        if theta == 0.0 || !(val < r) {
            stall += 1;
            if stall >= 3 {
                break;
            }
            continue;
        }
        let trial = v.scaled(theta.cos()).plus(&dir.scaled(theta.sin()));
        v = match project_constraint(&trial, constraint, p) {
            Some(w) => w,
            None => break,
        };
        let improvement = r - val;
        r = val;
        history.push(r);
        if improvement <= 1e-15 * (1.0 + r.abs()) {
            stall += 1;
            if stall >= 4 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    Some((r, v, history))
}

fn default_starts(
    dom: &DomainRef,
    constraint: SignConstraint,
    opts: &EigenOptions,
) -> Vec<ScalarField> {
    let bump = ScalarField::from_values(
        dom,
        (0..dom.num_nodes())
            .map(|k| dom.boundary_distance(k))
            .collect(),
    )
    .expect("sized");
    let ones = ScalarField::from_values(dom, vec![1.0; dom.num_nodes()]).expect("sized");
    let mut starts = vec![bump.clone(), ones];
    let mut rng = seeded_rng(opts.seed);
    for _ in 0..opts.n_random_starts {
        let vals: Vec<f64> = (0..dom.num_nodes())
            .map(|_| rng.random_range(0.05..1.0))
            .collect();
        starts.push(ScalarField::from_values(dom, vals).expect("sized"));
    }
    match constraint {
        SignConstraint::Minus => starts.iter().map(|s| s.scaled(-1.0)).collect(),
        SignConstraint::Free => {
            let mut all = starts.clone();
            all.push(bump.scaled(-1.0));
            all
        }
        SignConstraint::Plus => starts,
    }
}

/// First Dirichlet eigenvalue under a sign constraint: multi-start projected
/// descent with per-step renormalization to unit p-norm and nodewise
/// clamping, keeping the best monotone run.
pub fn eigen(
    energy: &Energy,
    dom: &DomainRef,
    constraint: SignConstraint,
    opts: &EigenOptions,
) -> Result<EigenResult> {
    eigen_with_starts(energy, dom, constraint, opts, &[])
}

pub fn eigen_with_starts(
    energy: &Energy,
    dom: &DomainRef,
    constraint: SignConstraint,
    opts: &EigenOptions,
    extra_starts: &[ScalarField],
) -> Result<EigenResult> {
    validate_problem(energy, dom)?;
    let mut starts = default_starts(dom, constraint, opts);
    starts.extend(extra_starts.iter().cloned());
    let n = starts.len();
    let runs = parallel_map(n, |i| eigen_descend(energy, &starts[i], constraint, opts));
    let mut best: Option<(f64, ScalarField, Vec<f64>)> = None;
    for run in runs.into_iter().flatten() {
        if best.as_ref().map_or(true, |(b, _, _)| run.0 < *b) {
            best = Some(run);
        }
    }
    let (lambda, v, rayleigh_history) =
        best.ok_or_else(|| AnisoError::SolverFailure("all eigen starts failed to decrease".into()))?;
    // Exact renormalization at return.
    let p = energy.homogeneity();
    let v = v.scaled(1.0 / v.norm_p(p));
    Ok(EigenResult {
        lambda,
        v,
        constraint,
        rayleigh_history,
        starts: n,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenRelationsReport {
    pub lambda_free: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub min_relation_defect: f64,
    pub min_relation_pass: bool,
    /// Reflected-energy positive eigenvalue, compared against lambda_minus.
    pub lambda_plus_reflected: f64,
    pub reflection_defect: f64,
    pub reflection_pass: bool,
    /// Whether the domain declares a symmetry T with -T a symmetry of H.
    pub symmetry_applies: bool,
    pub sign_gap: f64,
    pub symmetry_pass: Option<bool>,
    pub tol: f64,
}

/// Computes the free and sign-constrained eigenvalues, checks the min
/// relation, the reflection identity and (when a domain symmetry opposes the
/// energy) equality of the sign-constrained values.
pub fn eigen_relations_check(
    energy: &Energy,
    dom: &DomainRef,
    opts: &EigenOptions,
    tol: f64,
) -> Result<EigenRelationsReport> {
    let plus = eigen(energy, dom, SignConstraint::Plus, opts)?;
    let minus = eigen(energy, dom, SignConstraint::Minus, opts)?;
    // Warm-start the free problem with both constrained minimizers (they are
    // feasible), so the free value can only improve on them.
    let free = eigen_with_starts(
        energy,
        dom,
        SignConstraint::Free,
        opts,
        &[plus.v.clone(), minus.v.clone()],
    )?;
    let reflected = Energy::reflected(energy.clone());
    let plus_reflected = eigen(&reflected, dom, SignConstraint::Plus, opts)?;

    let min_defect = (free.lambda - plus.lambda.min(minus.lambda)).abs();
    let refl_defect = (minus.lambda - plus_reflected.lambda).abs();

    let mut symmetry_applies = false;
    for sym in dom.symmetries() {
        let minus_t: Vec<Vec<f64>> = sym
            .matrix
            .iter()
            .map(|row| row.iter().map(|x| -x).collect())
            .collect();
        if energy.symmetry_check(&minus_t)? {
            symmetry_applies = true;
            break;
        }
    }
    let sign_gap = (plus.lambda - minus.lambda).abs();
    let rel = 1.0 + free.lambda.abs();
    Ok(EigenRelationsReport {
        lambda_free: free.lambda,
        lambda_plus: plus.lambda,
        lambda_minus: minus.lambda,
        min_relation_defect: min_defect,
        min_relation_pass: min_defect <= tol * rel,
        lambda_plus_reflected: plus_reflected.lambda,
        reflection_defect: refl_defect,
        reflection_pass: refl_defect <= tol * rel,
        symmetry_applies,
        sign_gap,
        symmetry_pass: if symmetry_applies {
            Some(sign_gap <= 100.0 * tol * rel)
        } else {
            None
        },
        tol,
    })
}

// ---------------------------------------------------------------------------
// Classification experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub monotonicity: Monotonicity,
    pub strictly_convex: bool,
    pub n_runs: usize,
    pub classification: String,
    pub max_pairwise_distance_rel: Option<f64>,
    pub pairwise_proportional: Option<bool>,
    pub proportionality_ks: Vec<f64>,
    pub rayleigh_values: Vec<f64>,
    pub lambda_plus: Option<f64>,
    pub minimality_violations: usize,
    pub identity_defect_rel_max: f64,
    pub pass: bool,
    pub witnesses: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub n_starts: usize,
    pub tol: f64,
    pub solver: SolverOptions,
    /// Start amplitudes; defaults to a logarithmic ladder when empty.
    pub amplitudes: Vec<f64>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            n_starts: 10,
            tol: 1e-6,
            solver: SolverOptions::default(),
            amplitudes: Vec::new(),
        }
    }
}

/// Runs `critical_point` from many random positive starts and classifies the
/// outcome: strictly decreasing reactions must produce one solution,
/// non-increasing ones a proportional family, and proportional families with
/// a genuine ratio must consist of first-eigenvalue minimizers.
pub fn uniqueness_experiment(
    energy: &Energy,
    dom: &DomainRef,
    reaction: &Reaction,
    opts: &ExperimentOptions,
) -> Result<ClassificationReport> {
    validate_problem(energy, dom)?;
    if reaction.monotonicity == Monotonicity::Other {
        return Ok(ClassificationReport {
            monotonicity: reaction.monotonicity,
            strictly_convex: energy.is_strictly_convex(),
            n_runs: 0,
            classification: "hypothesis not met: monotonicity class 'other'".into(),
            max_pairwise_distance_rel: None,
            pairwise_proportional: None,
            proportionality_ks: Vec::new(),
            rayleigh_values: Vec::new(),
            lambda_plus: None,
            minimality_violations: 0,
            identity_defect_rel_max: 0.0,
            pass: true,
            witnesses: Vec::new(),
        });
    }

    let n = opts.n_starts.max(2);
    let amplitudes: Vec<f64> = if opts.amplitudes.is_empty() {
        (0..n)
            .map(|i| 10f64.powf(-1.5 + 3.0 * i as f64 / (n - 1) as f64))
            .collect()
    } else {
        opts.amplitudes.clone()
    };
    let starts: Vec<ScalarField> = (0..n)
        .map(|i| {
            let mut rng = seeded_rng(opts.solver.seed.wrapping_add(i as u64));
            let vals: Vec<f64> = (0..dom.num_nodes())
                .map(|k| {
                    let base = dom.boundary_distance(k);
                    amplitudes[i % amplitudes.len()] * base * rng.random_range(0.5..1.5)
                })
                .collect();
            ScalarField::from_values(dom, vals).expect("sized")
        })
        .collect();

    let runs: Vec<Result<CriticalPointResult>> = parallel_map(n, |i| {
        let mut o = opts.solver.clone();
        o.seed = opts.solver.seed.wrapping_add(i as u64);
        critical_point(energy, dom, reaction, &starts[i], &o)
    });
    let mut solutions = Vec::new();
    for r in runs {
        solutions.push(r?);
    }

    let mut witnesses = Vec::new();
    let sup = solutions
        .iter()
        .map(|s| s.u.norm_inf())
        .fold(0.0f64, f64::max);
    let identity_defect_rel_max = solutions
        .iter()
        .map(|s| s.identity_defect_rel)
        .fold(0.0f64, f64::max);

    // Part-1 sampled check: each solution beats a corpus of non-negative
    // comparison fields.
    let mut minimality_violations = 0usize;
    {
        let mut rng = seeded_rng(opts.solver.seed ^ 0x5151);
        let mut corpus: Vec<ScalarField> = Vec::new();
        for _ in 0..12 {
            let amp: f64 = rng.random_range(0.1..2.0);
            let vals: Vec<f64> = (0..dom.num_nodes())
                .map(|k| amp * dom.boundary_distance(k) * rng.random_range(0.0..1.5))
                .collect();
            corpus.push(ScalarField::from_values(dom, vals).expect("sized"));
        }
        for s in &solutions {
            corpus.push(s.u.scaled(0.9));
            corpus.push(s.u.scaled(1.1));
        }
        for s in &solutions {
            let ju = functional_value(energy, reaction, &s.u);
            for v in &corpus {
                let jv = functional_value(energy, reaction, v);
                if jv < ju - opts.tol * (1.0 + ju.abs()) {
                    minimality_violations += 1;
                    witnesses.push(format!(
                        "comparison field beats solution: J(v) = {jv} < J(u) = {ju}"
                    ));
                }
            }
        }
    }

    let report = match reaction.monotonicity {
        Monotonicity::StrictlyDecreasing => {
            let mut max_dist: f64 = 0.0;
            for i in 0..solutions.len() {
                for j in (i + 1)..solutions.len() {
                    max_dist = max_dist
                        .max(solutions[i].u.minus(&solutions[j].u).norm_inf() / sup.max(1e-300));
                }
            }
            let pass = max_dist <= opts.tol && minimality_violations == 0;
            if max_dist > opts.tol {
                witnesses.push(format!(
                    "strictly decreasing reaction but solutions differ by {max_dist:.3e} (rel)"
                ));
            }
            ClassificationReport {
                monotonicity: reaction.monotonicity,
                strictly_convex: energy.is_strictly_convex(),
                n_runs: n,
                classification: "unique".into(),
                max_pairwise_distance_rel: Some(max_dist),
                pairwise_proportional: None,
                proportionality_ks: Vec::new(),
                rayleigh_values: Vec::new(),
                lambda_plus: None,
                minimality_violations,
                identity_defect_rel_max,
                pass,
                witnesses,
            }
        }
        Monotonicity::NonIncreasing => {
            let mut proportional = true;
            let mut ks = Vec::new();
            for i in 0..solutions.len() {
                for j in (i + 1)..solutions.len() {
                    match proportionality_detect(&solutions[i].u, &solutions[j].u, opts.tol) {
                        Some(k) => ks.push(k),
                        None => {
                            proportional = false;
                            witnesses.push(format!(
                                "solutions {i} and {j} are not proportional at tol {}",
                                opts.tol
                            ));
                        }
                    }
                }
            }
            let genuine_ratio = ks.iter().any(|k| (k - 1.0).abs() > 10.0 * opts.tol);
            let mut rayleigh_values = Vec::new();
            let mut lambda_plus = None;
            let mut classification = "proportional family".to_string();
            let mut eigen_pass = true;
            if energy.is_strictly_convex()
                && proportional
                && genuine_ratio
                && reaction.is_x_independent()
            {
                let eopts = EigenOptions {
                    seed: opts.solver.seed,
                    ..EigenOptions::default()
                };
                let plus = eigen(energy, dom, SignConstraint::Plus, &eopts)?;
                lambda_plus = Some(plus.lambda);
                for s in &solutions {
                    let r = rayleigh_quotient(energy, &s.u);
                    rayleigh_values.push(r);
                    if (r - plus.lambda).abs() > opts.tol * (1.0 + plus.lambda.abs()) {
                        eigen_pass = false;
                        witnesses.push(format!(
                            "Rayleigh quotient {r} differs from lambda+ {}",
                            plus.lambda
                        ));
                    }
                }
                classification = "first-eigenfunction family".into();
            }
            ClassificationReport {
                monotonicity: reaction.monotonicity,
                strictly_convex: energy.is_strictly_convex(),
                n_runs: n,
                classification,
                max_pairwise_distance_rel: None,
                pairwise_proportional: Some(proportional),
                proportionality_ks: ks,
                rayleigh_values,
                lambda_plus,
                minimality_violations,
                identity_defect_rel_max,
                pass: proportional && eigen_pass && minimality_violations == 0,
                witnesses,
            }
        }
        Monotonicity::Other => unreachable!(),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::gallery;
    use crate::grid::Domain;

    #[test]
    fn constant_reaction_converges_in_one_outer_iteration() {
        let dom = Domain::interval(60, 1.0).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let reaction = Reaction::constant(2.0).unwrap();
        let start = ScalarField::from_fn(&dom, |x, _| x);
        let res =
            critical_point(&energy, &dom, &reaction, &start, &SolverOptions::default()).unwrap();
        // J_u does not depend on u: the first damped step plus the undamped
        // tail land on the solution immediately.
        assert!(res.iterations <= 8, "iterations {}", res.iterations);
        let exact = ScalarField::from_fn(&dom, |x, _| x * (1.0 - x) / 2.0);
        assert!(res.u.minus(&exact).norm_inf() < 1e-3);
        assert!(res.identity_defect_rel < 1e-10);
        assert_eq!(res.nonnegative_ok, Some(true));
    }

    #[test]
    fn torsion_scaling_linearity() {
        let dom = Domain::interval(40, 1.0).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let opts = SolverOptions::default();
        let r1 = critical_point(
            &energy,
            &dom,
            &Reaction::constant(1.0).unwrap(),
            &ScalarField::zeros(&dom),
            &opts,
        )
        .unwrap();
        let r2 = critical_point(
            &energy,
            &dom,
            &Reaction::constant(2.0).unwrap(),
            &ScalarField::zeros(&dom),
            &opts,
        )
        .unwrap();
        let err = r2.u.minus(&r1.u.scaled(2.0)).norm_inf();
        assert!(err < 1e-9 * (1.0 + r2.u.norm_inf()));
    }

    #[test]
    fn interval_eigenvalue_close_to_pi_squared() {
        let dom = Domain::interval(60, 1.0).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let res = eigen(&energy, &dom, SignConstraint::Free, &EigenOptions::default()).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((res.lambda - pi2).abs() < 0.02, "lambda {}", res.lambda);
        for w in res.rayleigh_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!((res.v.norm_p(2.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigenfunction_is_fixed_point() {
        let dom = Domain::interval(50, 1.0).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let eres = eigen(&energy, &dom, SignConstraint::Plus, &EigenOptions::default()).unwrap();
        let reaction = Reaction::power(2.0 * eres.lambda, 1.0, 2.0).unwrap();
        let start = eres.v.scaled(3.0);
        let res =
            critical_point(&energy, &dom, &reaction, &start, &SolverOptions::default()).unwrap();
        // The amplitude is preserved and the shape stays the eigenfunction.
        let k = proportionality_detect(&eres.v, &res.u, 1e-6).unwrap();
        assert!((k - 3.0).abs() < 1e-3, "k = {k}");
        assert!(res.identity_defect_rel < 1e-8);
    }

    #[test]
    fn relations_on_symmetric_interval_non_even_gauge() {
        let dom = Domain::interval(40, 1.0).unwrap();
        let energy = Energy::polytope(gallery::skewed_interval(), 2.0).unwrap();
        let rep = eigen_relations_check(&energy, &dom, &EigenOptions::default(), 1e-8).unwrap();
        assert!(rep.min_relation_pass, "defect {}", rep.min_relation_defect);
        assert!(rep.reflection_pass, "defect {}", rep.reflection_defect);
        // The interval reflection makes -T = identity a symmetry of any H.
        assert!(rep.symmetry_applies);
        assert_eq!(rep.symmetry_pass, Some(true));
    }

    #[test]
    fn classification_guard_for_other_monotonicity() {
        let dom = Domain::interval(20, 1.0).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let reaction = Reaction::power(1.0, 2.0, 2.0).unwrap(); // superlinear
        let rep =
            uniqueness_experiment(&energy, &dom, &reaction, &ExperimentOptions::default()).unwrap();
        assert!(rep.classification.contains("hypothesis not met"));
        assert!(rep.pass);
    }
}
