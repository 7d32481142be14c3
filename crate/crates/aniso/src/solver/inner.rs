//! Convex subproblem solver: minimize `sum_c H(Dv_c) w_c - sum_i g_i v_i w_i`
//! over nodal values with zero Dirichlet extension.
//!
//! The quadratic Euclidean case is solved by conjugate gradients. Everything
//! else runs a short normalized subgradient phase followed by Newton-CG on a
//! smoothed cell model with a decreasing smoothing schedule, an exact
//! rescaling along the homogeneity ray, and a final projection of the
//! smoothed gradient selection onto the true subdifferential with a few
//! least-squares sweeps over the ridge-cell hull weights.

use crate::error::{AnisoError, Result};
use crate::gauge::{Energy, EnergyKind};
use crate::grid::{DomainRef, GradientField, ScalarField};
use crate::util::dot;

#[derive(Clone, Debug)]
pub struct InnerOptions {
    /// Target normalized dual residual ||D^t xi - g|| / (1 + ||g||).
    pub tol: f64,
    /// Final smoothing width relative to the gradient scale.
    pub tau_final_rel: f64,
    pub max_newton_per_stage: usize,
    pub max_cg: usize,
    pub subgradient_iters: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            tol: 1e-9,
            tau_final_rel: 1e-8,
            max_newton_per_stage: 80,
            max_cg: 0, // 0 = twice the node count
            subgradient_iters: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InnerResult {
    pub v: ScalarField,
    /// Per-cell selection from the true subdifferential at Dv.
    pub xi: GradientField,
    /// Normalized dual residual of `xi` against `g`.
    pub residual: f64,
    pub newton_iters: usize,
    pub cg_iters: usize,
}

/// Smoothed cell energy models with value/gradient/Hessian-vector products.
enum CellModel {
    Quad,
    PowerEuclid { p: f64, eps2: f64 },
    Orthant { w: [f64; 4] },
    SoftGauge { facets: Vec<Vec<f64>>, p: f64, tau: f64 },
}

impl CellModel {
    fn val(&self, z: &[f64]) -> f64 {
        match self {
            CellModel::Quad => dot(z, z),
            CellModel::PowerEuclid { p, eps2 } => (dot(z, z) + eps2).powf(p / 2.0),
            CellModel::Orthant { w } => {
                let xp = z[0].max(0.0);
                let xm = (-z[0]).max(0.0);
                let yp = z[1].max(0.0);
                let ym = (-z[1]).max(0.0);
                w[0] * xp * xp + w[1] * xm * xm + w[2] * yp * yp + w[3] * ym * ym
            }
            CellModel::SoftGauge { facets, p, tau } => {
                let l = soft_max(facets, z, *tau).0;
                l.powf(*p)
            }
        }
    }

    fn grad(&self, z: &[f64], out: &mut [f64]) {
        match self {
            CellModel::Quad => {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = 2.0 * zi;
                }
            }
            CellModel::PowerEuclid { p, eps2 } => {
                let s = p * (dot(z, z) + eps2).powf(p / 2.0 - 1.0);
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = s * zi;
                }
            }
            CellModel::Orthant { w } => {
                out[0] = 2.0 * w[0] * z[0].max(0.0) - 2.0 * w[1] * (-z[0]).max(0.0);
                out[1] = 2.0 * w[2] * z[1].max(0.0) - 2.0 * w[3] * (-z[1]).max(0.0);
            }
            CellModel::SoftGauge { facets, p, tau } => {
                let (l, weights) = soft_max(facets, z, *tau);
                let s = p * l.powf(p - 1.0);
                out.fill(0.0);
                for (wi, a) in weights.iter().zip(facets) {
                    for (o, ak) in out.iter_mut().zip(a) {
                        *o += s * wi * ak;
                    }
                }
            }
        }
    }

    fn hvp(&self, z: &[f64], d: &[f64], out: &mut [f64]) {
        match self {
            CellModel::Quad => {
                for (o, di) in out.iter_mut().zip(d) {
                    *o = 2.0 * di;
                }
            }
            CellModel::PowerEuclid { p, eps2 } => {
                let n2 = dot(z, z) + eps2;
                let zd = dot(z, d);
                let s1 = p * (p - 2.0) * n2.powf(p / 2.0 - 2.0) * zd;
                let s2 = p * n2.powf(p / 2.0 - 1.0);
                for k in 0..d.len() {
                    out[k] = s1 * z[k] + s2 * d[k];
                }
            }
            CellModel::Orthant { w } => {
                let cx = if z[0] >= 0.0 { w[0] } else { w[1] };
                let cy = if z[1] >= 0.0 { w[2] } else { w[3] };
                out[0] = 2.0 * cx * d[0];
                out[1] = 2.0 * cy * d[1];
            }
            CellModel::SoftGauge { facets, p, tau } => {
                let (l, weights) = soft_max(facets, z, *tau);
                let dim = z.len();
                let mut abar = vec![0.0; dim];
                let mut abar_d = 0.0;
                let mut curved = vec![0.0; dim];
                for (wi, a) in weights.iter().zip(facets) {
                    let sd = dot(a, d);
                    abar_d += wi * sd;
                    for k in 0..dim {
                        abar[k] += wi * a[k];
                        curved[k] += wi * sd * a[k];
                    }
                }
                let s1 = p * (p - 1.0) * l.powf(p - 2.0) * abar_d;
                let s2 = p * l.powf(p - 1.0) / tau;
                for k in 0..dim {
                    out[k] = s1 * abar[k] + s2 * (curved[k] - abar_d * abar[k]);
                }
            }
        }
    }

    fn set_smoothing(&mut self, value: f64) {
        match self {
            CellModel::PowerEuclid { eps2, .. } => *eps2 = value * value,
            CellModel::SoftGauge { tau, .. } => *tau = value,
            _ => {}
        }
    }

    fn needs_continuation(&self) -> bool {
        matches!(
            self,
            CellModel::PowerEuclid { .. } | CellModel::SoftGauge { .. }
        )
    }
}

/// Stable log-sum-exp max: returns (tau-softened max of (a_i, z), weights).
fn soft_max(facets: &[Vec<f64>], z: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let s: Vec<f64> = facets.iter().map(|a| dot(a, z)).collect();
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = s.iter().map(|si| ((si - m) / tau).exp()).collect();
    let zsum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= zsum;
    }
    (m + tau * zsum.ln(), weights)
}

struct Objective<'a> {
    dom: &'a DomainRef,
    model: CellModel,
    g: &'a [f64],
}

impl Objective<'_> {
    fn value(&self, v: &[f64]) -> f64 {
        let field = ScalarField::from_values(self.dom, v.to_vec()).expect("sized");
        let grad = field.gradient();
        let dim = self.dom.dim();
        let cw = self.dom.cell_weight();
        let nw = self.dom.node_weight();
        let mut total = 0.0;
        for c in 0..self.dom.num_cells() {
            total += self.model.val(&grad.components()[c * dim..(c + 1) * dim]);
        }
        total * cw - nw * dot(self.g, v)
    }

    /// Returns (value, gradient, cell gradients of v).
    fn value_grad(&self, v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let field = ScalarField::from_values(self.dom, v.to_vec()).expect("sized");
        let dv = field.gradient();
        let dim = self.dom.dim();
        let cw = self.dom.cell_weight();
        let nw = self.dom.node_weight();
        let mut total = 0.0;
        let mut cell_grad = vec![0.0; self.dom.num_cells() * dim];
        let mut buf = vec![0.0; dim];
        for c in 0..self.dom.num_cells() {
            let z = &dv.components()[c * dim..(c + 1) * dim];
            total += self.model.val(z);
            self.model.grad(z, &mut buf);
            cell_grad[c * dim..(c + 1) * dim].copy_from_slice(&buf);
        }
        let mut grad = self.dom.div_transpose(&cell_grad);
        for (gi, g0) in grad.iter_mut().zip(self.g) {
            *gi = cw * *gi - nw * g0;
        }
        (total * cw - nw * dot(self.g, v), grad, dv.components().to_vec())
    }

    /// Hessian-vector product at the point whose cell gradients are `dv`.
    fn hvp(&self, dv: &[f64], d: &[f64], cg_buf: &mut Vec<f64>) -> Vec<f64> {
        let field = ScalarField::from_values(self.dom, d.to_vec()).expect("sized");
        let dd = field.gradient();
        let dim = self.dom.dim();
        let cw = self.dom.cell_weight();
        cg_buf.resize(self.dom.num_cells() * dim, 0.0);
        let mut buf = vec![0.0; dim];
        for c in 0..self.dom.num_cells() {
            let z = &dv[c * dim..(c + 1) * dim];
            let zd = &dd.components()[c * dim..(c + 1) * dim];
            self.model.hvp(z, zd, &mut buf);
            cg_buf[c * dim..(c + 1) * dim].copy_from_slice(&buf);
        }
        let mut out = self.dom.div_transpose(cg_buf);
        for o in out.iter_mut() {
            *o *= cw;
        }
        out
    }
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Normalized residual scale shared by the stopping tests.
fn residual_scale(dom: &DomainRef, g: &[f64]) -> f64 {
    let nw = dom.node_weight();
    1.0 + (nw * dot(g, g)).sqrt()
}

fn grad_to_residual(dom: &DomainRef, grad_norm: f64, scale: f64) -> f64 {
    grad_norm / dom.node_weight().sqrt() / scale
}

/// Conjugate gradients on `Hd = -grad` with Hessian-vector products.
fn newton_cg_direction(
    obj: &Objective,
    dv: &[f64],
    grad: &[f64],
    max_cg: usize,
    forcing: f64,
    cg_count: &mut usize,
) -> Vec<f64> {
    let n = grad.len();
    let mut d = vec![0.0; n];
    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let rhs_norm = l2(&r);
    if rhs_norm == 0.0 {
        return d;
    }
    let tol = forcing * rhs_norm;
    let mut rr = dot(&r, &r);
    let mut scratch = Vec::new();
    for _ in 0..max_cg {
        *cg_count += 1;
        let hp = obj.hvp(dv, &p, &mut scratch);
        let php = dot(&p, &hp);
        if php <= 1e-300 {
            if l2(&d) == 0.0 {
                return r; // steepest descent fallback
            }
            return d;
        }
        let alpha = rr / php;
        for k in 0..n {
            d[k] += alpha * p[k];
            r[k] -= alpha * hp[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    d
}

/// Newton-CG with Armijo backtracking until the normalized residual target.
fn newton_loop(
    obj: &Objective,
    v: &mut Vec<f64>,
    target: f64,
    scale: f64,
    opts: &InnerOptions,
    newton_count: &mut usize,
    cg_count: &mut usize,
) {
    let max_cg = if opts.max_cg == 0 {
        2 * v.len() + 30
    } else {
        opts.max_cg
    };
    for _ in 0..opts.max_newton_per_stage {
        let (f0, grad, dv) = obj.value_grad(v);
        let res = grad_to_residual(obj.dom, l2(&grad), scale);
        if res <= target {
            return;
        }
        *newton_count += 1;
        let forcing = 0.05f64.max((res / 10.0).min(0.3));
        let d = newton_cg_direction(obj, &dv, &grad, max_cg, forcing, cg_count);
        let slope = dot(&grad, &d);
        let (d, slope) = if slope < 0.0 {
            (d, slope)
        } else {
            let sd: Vec<f64> = grad.iter().map(|g| -g).collect();
            let sl = -dot(&grad, &grad);
            (sd, sl)
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _bt in 0..50 {
            let trial: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if obj.value(&trial) <= f0 + 1e-4 * t * slope {
                *v = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return; // stuck at numerical floor
        }
    }
}

/// Normalized subgradient warm phase with square-summable steps.
fn subgradient_phase(energy: &Energy, dom: &DomainRef, g: &[f64], iters: usize) -> Vec<f64> {
    let n = dom.num_nodes();
    let mut v = vec![0.0; n];
    if iters == 0 {
        return v;
    }
    let mut best = v.clone();
    let diam = dom.measure().powf(1.0 / dom.dim() as f64);
    let g_inf = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let step0 = 0.05 * (1.0 + g_inf) * diam * diam;
    let cw = dom.cell_weight();
    let nw = dom.node_weight();
    let value = |vals: &[f64]| -> Result<f64> {
        let field = ScalarField::from_values(dom, vals.to_vec())?;
        Ok(field.gradient().energy_total(energy) - nw * dot(g, vals))
    };
    let mut best_val = value(&v).unwrap_or(f64::INFINITY);
    for k in 0..iters {
        let field = match ScalarField::from_values(dom, v.clone()) {
            Ok(f) => f,
            Err(_) => break,
        };
        let dvf = field.gradient();
        let dim = dom.dim();
        let mut sel = vec![0.0; dom.num_cells() * dim];
        let mut ok = true;
        for c in 0..dom.num_cells() {
            match energy.subdiff(dvf.cell(c)) {
                Ok(set) => sel[c * dim..(c + 1) * dim].copy_from_slice(set.selection()),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let mut grad = dom.div_transpose(&sel);
        for (gi, g0) in grad.iter_mut().zip(g) {
            *gi = cw * *gi - nw * g0;
        }
        let norm = l2(&grad);
        if norm < 1e-300 {
            break;
        }
        let step = step0 / (1.0 + k as f64).powf(0.75) / norm;
        for (vi, gi) in v.iter_mut().zip(&grad) {
            *vi -= step * gi;
        }
        if let Ok(val) = value(&v) {
            if val < best_val {
                best_val = val;
                best = v.clone();
            }
        }
    }
    best
}

/// Projects the smoothed gradient selection onto the true subdifferential and
/// returns per-cell generator lists for ridge cells.
struct Selection {
    xi: Vec<f64>,
    /// (cell, generators) for cells whose subdifferential has >= 2 generators.
    ridge: Vec<(usize, Vec<Vec<f64>>)>,
}

fn true_selection(
    energy: &Energy,
    dom: &DomainRef,
    dv: &[f64],
    tau_abs: f64,
    widen_rel: f64,
) -> Result<Selection> {
    let dim = dom.dim();
    let p = energy.homogeneity();
    let canon = energy.canonical();
    let mut xi = vec![0.0; dom.num_cells() * dim];
    let mut ridge = Vec::new();
    match canon.kind() {
        EnergyKind::Polytope(gauge) => {
            let m_count = gauge.facets().len() as f64;
            for c in 0..dom.num_cells() {
                let z = &dv[c * dim..(c + 1) * dim];
                let m = gauge.eval(z);
                let scale = p * m.abs().powf(p - 1.0);
                if !(m > 0.0) || scale == 0.0 {
                    continue; // z = 0: xi = 0 for p > 1
                }
                let theta = (1e-12 * (1.0 + m.abs()))
                    .max(3.0 * tau_abs * (1.0 + m_count).ln())
                    .max(widen_rel * (1.0 + m.abs()));
                let active: Vec<usize> = gauge
                    .facets()
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| dot(a, z) >= m - theta)
                    .map(|(i, _)| i)
                    .collect();
                if active.len() == 1 {
                    let a = &gauge.facets()[active[0]];
                    for k in 0..dim {
                        xi[c * dim + k] = scale * a[k];
                    }
                } else {
                    // Soft weights restricted to the active set.
                    let tau = tau_abs.max(1e-300);
                    let mut ws: Vec<f64> = active
                        .iter()
                        .map(|&i| ((dot(&gauge.facets()[i], z) - m) / tau).exp())
                        .collect();
                    let sum: f64 = ws.iter().sum();
                    for w in ws.iter_mut() {
                        *w /= sum;
                    }
                    let gens: Vec<Vec<f64>> = active
                        .iter()
                        .map(|&i| gauge.facets()[i].iter().map(|a| scale * a).collect())
                        .collect();
                    for (w, gen) in ws.iter().zip(&gens) {
                        for k in 0..dim {
                            xi[c * dim + k] += w * gen[k];
                        }
                    }
                    ridge.push((c, gens));
                }
            }
        }
        _ => {
            for c in 0..dom.num_cells() {
                let z = &dv[c * dim..(c + 1) * dim];
                let set = canon.subdiff(z)?;
                xi[c * dim..(c + 1) * dim].copy_from_slice(set.selection());
            }
        }
    }
    Ok(Selection { xi, ridge })
}

/// Dual residual vector `D^t xi - g` (nodal).
fn dual_residual_vec(dom: &DomainRef, xi: &[f64], g: &[f64]) -> Vec<f64> {
    let mut r = dom.div_transpose(xi);
    for (ri, gi) in r.iter_mut().zip(g) {
        *ri -= gi;
    }
    r
}

pub fn normalized_dual_residual(dom: &DomainRef, xi: &[f64], g: &[f64]) -> f64 {
    let r = dual_residual_vec(dom, xi, g);
    let nw = dom.node_weight();
    (nw * dot(&r, &r)).sqrt() / residual_scale(dom, g)
}

/// Least-squares sweeps over ridge-cell hull weights: moves mass between
/// generator pairs to shrink the dual residual, staying inside the hull.
fn improve_selection(dom: &DomainRef, sel: &mut Selection, g: &[f64], sweeps: usize) {
    if sel.ridge.is_empty() {
        return;
    }
    let dim = dom.dim();
    let inv_h = 1.0 / dom.spacing();
    let path = dom.is_path_graph();
    let mut r = dual_residual_vec(dom, &sel.xi, g);

    // Hull weights per ridge cell, recovered from xi by least squares on the
    // generator pairs (we only track pairwise transfers, so start from the
    // projection weights implicitly encoded in xi and operate on deltas).
    // For the transfer step only the stencil response of a generator
    // difference matters.
    for _ in 0..sweeps {
        for (c, gens) in &sel.ridge {
            let cell = dom.cells()[*c];
            for i in 0..gens.len() {
                for j in (i + 1)..gens.len() {
                    let d: Vec<f64> = gens[j]
                        .iter()
                        .zip(&gens[i])
                        .map(|(a, b)| a - b)
                        .collect();
                    // Stencil response phi of moving weight t from i to j:
                    // nodal vector with <= dim+1 entries.
                    let mut nodes: Vec<(usize, f64)> = Vec::with_capacity(dim + 1);
                    if path {
                        if cell.anchor >= 0 {
                            nodes.push((cell.anchor as usize, d[0]));
                        }
                        if cell.nbr[0] >= 0 {
                            nodes.push((cell.nbr[0] as usize, -d[0]));
                        }
                    } else {
                        let mut asum = 0.0;
                        for k in 0..dim {
                            asum += d[k];
                            if cell.nbr[k] >= 0 {
                                nodes.push((cell.nbr[k] as usize, d[k] * inv_h));
                            }
                        }
                        if cell.anchor >= 0 {
                            nodes.push((cell.anchor as usize, -asum * inv_h));
                        }
                    }
                    let phi2: f64 = nodes.iter().map(|(_, x)| x * x).sum();
                    if phi2 < 1e-300 {
                        continue;
                    }
                    let phir: f64 = nodes.iter().map(|(n, x)| x * r[*n]).sum();
                    // Unconstrained optimum of ||r + t phi||^2.
                    let mut t = -phir / phi2;
                    // Keep xi inside the hull: the current point plus t*(gj-gi)
                    // must stay a convex combination. Track per-component
                    // feasibility by bounding the transfer so xi stays within
                    // the segment between the extreme generators; with more
                    // than two generators this is conservative but safe.
                    let xi_c = &sel.xi[c * dim..(c + 1) * dim];
                    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                    for k in 0..dim {
                        let dk = d[k];
                        if dk.abs() < 1e-300 {
                            continue;
                        }
                        let toward_j = (gens[j][k] - xi_c[k]) / dk;
                        let toward_i = (gens[i][k] - xi_c[k]) / dk;
                        let (a, b) = if toward_i <= toward_j {
                            (toward_i, toward_j)
                        } else {
                            (toward_j, toward_i)
                        };
                        lo = lo.max(a);
                        hi = hi.min(b);
                    }
                    if lo > hi {
                        continue;
                    }
                    t = t.clamp(lo.max(-1.0), hi.min(1.0));
                    if t.abs() < 1e-300 {
                        continue;
                    }
                    for k in 0..dim {
                        sel.xi[c * dim + k] += t * d[k];
                    }
                    for (n, x) in &nodes {
                        r[*n] += t * x;
                    }
                }
            }
        }
    }
}

/// Solves the semi-linearized convex problem; deterministic cold start.
pub fn solve_subproblem(
    energy: &Energy,
    dom: &DomainRef,
    g: &[f64],
    opts: &InnerOptions,
) -> Result<InnerResult> {
    if g.len() != dom.num_nodes() {
        return Err(AnisoError::InvalidField(format!(
            "reaction vector has {} entries for {} nodes",
            g.len(),
            dom.num_nodes()
        )));
    }
    let p = energy.homogeneity();
    if !(p > 1.0) {
        return Err(AnisoError::InvalidEnergy(
            "subproblem solver requires homogeneity p > 1".into(),
        ));
    }
    let canon = energy.canonical();
    let scale = residual_scale(dom, g);
    let mut newton_iters = 0usize;
    let mut cg_iters = 0usize;

    let (model0, a_scale) = match canon.kind() {
        EnergyKind::Euclidean { .. } if p == 2.0 => (CellModel::Quad, 1.0),
        EnergyKind::Euclidean { .. } => (CellModel::PowerEuclid { p, eps2: 0.0 }, 1.0),
        EnergyKind::OrthantQuadratic { weights } => (CellModel::Orthant { w: *weights }, 1.0),
        EnergyKind::Polytope(gauge) => {
            let a_scale = gauge
                .facets()
                .iter()
                .map(|a| dot(a, a).sqrt())
                .fold(0.0f64, f64::max);
            (
                CellModel::SoftGauge {
                    facets: gauge.facets().to_vec(),
                    p,
                    tau: 1.0,
                },
                a_scale,
            )
        }
        EnergyKind::Reflected(_) => unreachable!("canonical removes reflections"),
    };

    let mut obj = Objective {
        dom,
        model: model0,
        g,
    };

    let mut v = if matches!(obj.model, CellModel::Quad) {
        // Quadratic: straight CG on 2 D^t D v = g.
        let mut v = vec![0.0; dom.num_nodes()];
        let quad = Objective {
            dom,
            model: CellModel::Quad,
            g,
        };
        let (_, grad0, dv0) = quad.value_grad(&v);
        let d = newton_cg_direction(&quad, &dv0, &grad0, 40 * dom.num_nodes() + 200, 1e-14, &mut cg_iters);
        for (vi, di) in v.iter_mut().zip(&d) {
            *vi += di;
        }
        // One polish pass for round-off.
        let (_, grad1, dv1) = quad.value_grad(&v);
        if grad_to_residual(dom, l2(&grad1), scale) > opts.tol * 0.1 {
            let d1 = newton_cg_direction(&quad, &dv1, &grad1, 4 * dom.num_nodes() + 200, 1e-14, &mut cg_iters);
            for (vi, di) in v.iter_mut().zip(&d1) {
                *vi += di;
            }
        }
        newton_iters += 1;
        v
    } else {
        let mut v = subgradient_phase(energy, dom, g, opts.subgradient_iters);
        if obj.model.needs_continuation() {
            // Smoothing scale from the warm start's gradients (fallback 1).
            let f = ScalarField::from_values(dom, v.clone())?;
            let dvn = f.gradient();
            let mut s_ref = 0.0f64;
            for c in 0..dom.num_cells() {
                s_ref = s_ref.max(l2(dvn.cell(c)));
            }
            if !(s_ref > 0.0) {
                s_ref = 1.0;
            }
            let unit = s_ref * a_scale.max(1e-12);
            let mut tau_rel = 1e-1;
            loop {
                obj.model.set_smoothing(tau_rel * unit);
                let target = if tau_rel <= opts.tau_final_rel * 1.0000001 {
                    opts.tol * 0.3
                } else {
                    (0.03 * tau_rel).max(opts.tol * 0.3)
                };
                newton_loop(&obj, &mut v, target, scale, opts, &mut newton_iters, &mut cg_iters);
                if tau_rel <= opts.tau_final_rel * 1.0000001 {
                    break;
                }
                tau_rel = (tau_rel * 0.1).max(opts.tau_final_rel);
            }
        } else {
            newton_loop(&obj, &mut v, opts.tol * 0.3, scale, opts, &mut newton_iters, &mut cg_iters);
        }
        v
    };

    // Exact rescaling along the homogeneity ray: F(tv) = t^p A - t B is
    // minimized at t = (B/(pA))^(1/(p-1)), which zeroes the ray derivative of
    // the true (unsmoothed) objective and hence the energy identity.
    let nw = dom.node_weight();
    {
        let f = ScalarField::from_values(dom, v.clone())?;
        let a_term = f.gradient().energy_total(energy);
        let b_term = nw * dot(g, &v);
        if a_term > 0.0 && b_term > 0.0 {
            let t = (b_term / (p * a_term)).powf(1.0 / (p - 1.0));
            if (t - 1.0).abs() < 0.5 {
                for vi in v.iter_mut() {
                    *vi *= t;
                }
            }
        }
    }

    let field = ScalarField::from_values(dom, v)?;
    let dv = field.gradient();
    let tau_abs = match &obj.model {
        CellModel::SoftGauge { tau, .. } => *tau,
        _ => 0.0,
    };
    // Certificate selection. The computed v sits within optimizer accuracy
    // of the exact discrete minimizer, whose near-ridge cells need mixed
    // hull weights; widen the activity threshold until the dual residual
    // stops improving. Widened cells carry an epsilon-subgradient whose
    // epsilon shows up in the reported Euler defects.
    let mut best: Option<(Vec<f64>, f64)> = None;
    for widen_rel in [0.0, 1e-9, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3] {
        let mut sel = true_selection(energy, dom, dv.components(), tau_abs, widen_rel)?;
        improve_selection(dom, &mut sel, g, 8);
        let res = normalized_dual_residual(dom, &sel.xi, g);
        if best.as_ref().map_or(true, |(_, b)| res < *b) {
            best = Some((sel.xi, res));
        }
        if best.as_ref().map_or(false, |(_, b)| *b <= opts.tol) {
            break;
        }
        if sel.ridge.is_empty() && widen_rel == 0.0 {
            break; // differentiable kinds: nothing to widen
        }
    }
    let (xi_vec, residual) = best.expect("at least one selection");
    let xi = GradientField::from_components(dom, xi_vec)?;
    Ok(InnerResult {
        v: field,
        xi,
        residual,
        newton_iters,
        cg_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::gallery;
    use crate::grid::Domain;

    #[test]
    fn quadratic_torsion_matches_closed_form() {
        // minimize sum |Dv|^2 h - sum g v h with g = 2: -2 v'' = 2, i.e.
        // v = x(1-x)/2 up to O(h^2).
        let dom = Domain::interval(199, 1.0).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let g = vec![2.0; dom.num_nodes()];
        let sol = solve_subproblem(&energy, &dom, &g, &InnerOptions::default()).unwrap();
        let exact = ScalarField::from_fn(&dom, |x, _| x * (1.0 - x) / 2.0);
        let err = sol.v.minus(&exact).norm_inf();
        assert!(err < 1e-4, "max err {err}");
        assert!(sol.residual < 1e-10, "residual {}", sol.residual);
    }

    #[test]
    fn zero_reaction_gives_zero() {
        let dom = Domain::interval(30, 1.0).unwrap();
        for energy in [
            Energy::euclidean(1, 2.0).unwrap(),
            Energy::polytope(gallery::skewed_interval(), 2.0).unwrap(),
        ] {
            let g = vec![0.0; dom.num_nodes()];
            let sol = solve_subproblem(&energy, &dom, &g, &InnerOptions::default()).unwrap();
            assert!(sol.v.norm_inf() < 1e-12);
        }
    }

    #[test]
    fn scaling_linearity_for_quadratic() {
        let dom = Domain::unit_square(12).unwrap();
        let energy = Energy::euclidean(2, 2.0).unwrap();
        let g1 = vec![1.0; dom.num_nodes()];
        let g2 = vec![2.0; dom.num_nodes()];
        let s1 = solve_subproblem(&energy, &dom, &g1, &InnerOptions::default()).unwrap();
        let s2 = solve_subproblem(&energy, &dom, &g2, &InnerOptions::default()).unwrap();
        let err = s2.v.minus(&s1.v.scaled(2.0)).norm_inf();
        assert!(err < 1e-10 * (1.0 + s2.v.norm_inf()), "err {err}");
    }

    #[test]
    fn polytope_subproblem_certificate() {
        let dom = Domain::interval(40, 1.0).unwrap();
        let energy = Energy::polytope(gallery::skewed_interval(), 2.0).unwrap();
        let g = vec![1.0; dom.num_nodes()];
        let opts = InnerOptions {
            tol: 1e-8,
            ..InnerOptions::default()
        };
        let sol = solve_subproblem(&energy, &dom, &g, &opts).unwrap();
        assert!(sol.residual < 1e-7, "residual {}", sol.residual);
        // The energy identity along the ray holds after the exact rescale.
        let a = sol.v.gradient().energy_total(&energy);
        let b = dom.node_weight() * dot(&g, sol.v.values());
        assert!((2.0 * a - b).abs() <= 1e-11 * (1.0 + b.abs()));
        // v is a genuine approximate minimizer: random perturbations only
        // increase the objective.
        let obj = |vals: &[f64]| -> f64 {
            let f = ScalarField::from_values(&dom, vals.to_vec()).unwrap();
            f.gradient().energy_total(&energy) - dom.node_weight() * dot(&g, vals)
        };
        let f0 = obj(sol.v.values());
        let mut rng = crate::util::seeded_rng(5);
        use rand::Rng as _;
        for _ in 0..50 {
            let trial: Vec<f64> = sol
                .v
                .values()
                .iter()
                .map(|x| x + rng.random_range(-1e-3..1e-3))
                .collect();
            assert!(obj(&trial) >= f0 - 1e-9 * (1.0 + f0.abs()));
        }
    }

    #[test]
    fn orthant_subproblem_solves() {
        let dom = Domain::unit_square(10).unwrap();
        let energy = Energy::orthant_quadratic([2.0, 1.0, 1.0, 2.0]).unwrap();
        let g = vec![1.0; dom.num_nodes()];
        let sol = solve_subproblem(&energy, &dom, &g, &InnerOptions::default()).unwrap();
        assert!(sol.residual < 1e-9, "residual {}", sol.residual);
        assert!(sol.v.min() > 0.0);
    }

    #[test]
    fn power_euclid_subproblem_solves() {
        let dom = Domain::interval(40, 1.0).unwrap();
        let energy = Energy::euclidean(1, 3.0).unwrap();
        let g = vec![3.0; dom.num_nodes()];
        let sol = solve_subproblem(&energy, &dom, &g, &InnerOptions::default()).unwrap();
        // p-Poisson closed form: 3 |v'| v' ' = -3 ... the certificate and
        // symmetry are enough here.
        assert!(sol.residual < 1e-6, "residual {}", sol.residual);
        let vals = sol.v.values();
        let n = vals.len();
        for k in 0..n / 2 {
            assert!((vals[k] - vals[n - 1 - k]).abs() < 1e-6);
        }
    }
}
