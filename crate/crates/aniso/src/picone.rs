//! Pointwise non-smooth Picone inequality verification: for positive `u`,
//! non-negative `v` and a per-cell subgradient selection `xi` of `H` at `Du`,
//! the quantity `H(Dv) - (1/p)(xi, D(v^p / u^{p-1}))` is non-negative cell by
//! cell when the derivative of the quotient is expanded by the chain rule.
//! The same residual with the discrete gradient of the nodal quotient field
//! is reported for diagnostics; forward differences satisfy it only up to
//! consistency error.

use serde::{Deserialize, Serialize};

use crate::error::{AnisoError, Result};
use crate::gauge::Energy;
use crate::grid::{GradientField, ScalarField};
use crate::util::dot;

/// Relative positivity floor required of `u` (guards `v^p / u^{p-1}`).
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Tolerance at which a supplied selection is accepted as a subgradient.
pub const SELECTION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiconeReport {
    /// Indices (into the domain cell list) of the interior-anchored cells
    /// the residuals are evaluated on.
    pub cells: Vec<usize>,
    /// Residual with `D(v^p/u^{p-1})` expanded by the chain rule; this is the
    /// normative check and is non-negative up to round-off.
    pub chain_residual: Vec<f64>,
    /// Residual with the discrete gradient of the nodal quotient field.
    pub discrete_residual: Vec<f64>,
    pub min_chain_residual: f64,
    pub min_discrete_residual: f64,
    /// Fraction of cells where the chain-rule residual vanishes to 1e-12.
    pub equality_cells_fraction: f64,
}

/// Builds the deterministic lowest-index subgradient selection of `energy`
/// along a gradient field.
pub fn subdiff_selection(energy: &Energy, du: &GradientField) -> Result<GradientField> {
    let dom = du.domain();
    let dim = dom.dim();
    let mut comps = vec![0.0; dom.num_cells() * dim];
    for c in 0..dom.num_cells() {
        let set = energy.subdiff(du.cell(c))?;
        comps[c * dim..(c + 1) * dim].copy_from_slice(set.selection());
    }
    GradientField::from_components(dom, comps)
}

/// Checks `xi(cell) in dH(Du(cell))` via the Euler identity and sampled
/// subgradient inequalities; reports the worst defect on failure.
pub fn validate_selection(energy: &Energy, du: &GradientField, xi: &GradientField) -> Result<()> {
    let dom = du.domain();
    let dim = dom.dim();
    let p = energy.homogeneity();
    let mut worst: f64 = 0.0;
    let mut worst_cell = 0usize;
    let probes: Vec<Vec<f64>> = {
        let mut dirs = Vec::new();
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 0.25;
            dirs.push(e.clone());
            e[k] = -0.25;
            dirs.push(e);
        }
        dirs.push(vec![0.1; dim]);
        dirs
    };
    for &c in dom.interior_cells() {
        let z = du.cell(c);
        let g = xi.cell(c);
        let h = energy.eval(z);
        let scale = 1.0 + p * h;
        let euler = (p * h - dot(g, z)).abs() / scale;
        if euler > worst {
            worst = euler;
            worst_cell = c;
        }
        for w in &probes {
            let zw: Vec<f64> = z.iter().zip(w).map(|(a, b)| a + b).collect();
            let gap = (energy.eval(&zw) - h - dot(g, w)) / scale;
            if -gap > worst {
                worst = -gap;
                worst_cell = c;
            }
        }
    }
    if worst > SELECTION_TOL {
        return Err(AnisoError::InvalidField(format!(
            "xi is not a valid subgradient selection: worst defect {worst:.3e} at cell {worst_cell}"
        )));
    }
    Ok(())
}

/// Per-cell Picone residuals for the pair `(u, v)` under `energy`, using the
/// supplied subgradient selection at `Du`.
pub fn picone_residual(
    energy: &Energy,
    u: &ScalarField,
    v: &ScalarField,
    xi: &GradientField,
) -> Result<PiconeReport> {
    if !u.same_domain(v) {
        return Err(AnisoError::InvalidField(
            "u and v live on different domains".into(),
        ));
    }
    let umin = u.min();
    if umin <= 0.0 || umin < POSITIVITY_FLOOR * u.norm_inf() {
        return Err(AnisoError::InvalidField(
            "Picone requires inf u > 0".into(),
        ));
    }
    if v.min() < 0.0 {
        return Err(AnisoError::InvalidField("Picone requires v >= 0".into()));
    }
    let dom = u.domain();
    let p = energy.homogeneity();
    let du = u.gradient();
    let dv = v.gradient();
    validate_selection(energy, &du, xi)?;

    // Nodal quotient v^p / u^{p-1} for the discrete-gradient route.
    let quotient = ScalarField::from_values(
        dom,
        u.values()
            .iter()
            .zip(v.values())
            .map(|(&a, &b)| b.powf(p) / a.powf(p - 1.0))
            .collect(),
    )?;
    let dq = quotient.gradient();

    let dim = dom.dim();
    let mut cells = Vec::with_capacity(dom.interior_cells().len());
    let mut chain = Vec::with_capacity(dom.interior_cells().len());
    let mut discrete = Vec::with_capacity(dom.interior_cells().len());
    let mut equal = 0usize;
    for &c in dom.interior_cells() {
        let a = dom.cells()[c].anchor as usize;
        let t = v.values()[a] / u.values()[a];
        let tp = t.powf(p);
        let tp1 = t.powf(p - 1.0);
        let zu = du.cell(c);
        let zv = dv.cell(c);
        let g = xi.cell(c);
        let hv = energy.eval(zv);
        let mut pair = 0.0;
        for k in 0..dim {
            pair += g[k] * ((1.0 - p) * tp * zu[k] + p * tp1 * zv[k]);
        }
        let r = hv - pair / p;
        let rd = hv - dot(g, dq.cell(c)) / p;
        if r.abs() <= 1e-12 * (1.0 + hv.abs()) {
            equal += 1;
        }
        cells.push(c);
        chain.push(r);
        discrete.push(rd);
    }
    let min_chain = chain.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_discrete = discrete.iter().cloned().fold(f64::INFINITY, f64::min);
    let frac = equal as f64 / cells.len().max(1) as f64;
    Ok(PiconeReport {
        cells,
        chain_residual: chain,
        discrete_residual: discrete,
        min_chain_residual: min_chain,
        min_discrete_residual: min_discrete,
        equality_cells_fraction: frac,
    })
}

/// Least-squares proportionality test: returns `k` minimizing `||v - k u||_2`
/// when the relative misfit `||v - k u||_2 / ||k u||_2` is below `tol`.
pub fn proportionality_detect(u: &ScalarField, v: &ScalarField, tol: f64) -> Option<f64> {
    if !u.same_domain(v) {
        return None;
    }
    let uu: f64 = u.values().iter().map(|a| a * a).sum();
    let uv: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    if uu == 0.0 {
        return None;
    }
    let k = uv / uu;
    if !(k > 0.0) {
        return None;
    }
    let mis: f64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| {
            let d = b - k * a;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    let scale = (k * k * uu).sqrt();
    if scale == 0.0 {
        return None;
    }
    if mis / scale <= tol {
        Some(k)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::gallery;
    use crate::grid::{Domain, DomainRef};
    use crate::util::seeded_rng;
    use rand::Rng as _;
    use rand_chacha::ChaCha8Rng;

    fn positive_field(dom: &DomainRef, rng: &mut ChaCha8Rng) -> ScalarField {
        let vals = (0..dom.num_nodes())
            .map(|_| rng.random_range(0.2..2.0))
            .collect();
        ScalarField::from_values(dom, vals).unwrap()
    }

    #[test]
    fn equality_case_multiples() {
        let dom = Domain::interval(25, 26.0).unwrap(); // h = 1 keeps gradients O(1)
        let mut rng = seeded_rng(31);
        let u = positive_field(&dom, &mut rng);
        let v = u.scaled(3.0);
        for energy in [
            Energy::polytope(gallery::skewed_interval(), 2.0).unwrap(),
            Energy::euclidean(1, 2.5).unwrap(),
        ] {
            let xi = subdiff_selection(&energy, &u.gradient()).unwrap();
            let rep = picone_residual(&energy, &u, &v, &xi).unwrap();
            assert!(rep.chain_residual.iter().all(|r| r.abs() <= 1e-12));
            assert!((rep.equality_cells_fraction - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn euclidean_quadratic_closed_form() {
        // For H = |z|^2, p = 2 the chain-rule residual is |Dv - (v/u) Du|^2.
        // Two nodes with h = 1: at the cell anchored at the first node,
        // u = v = 1, Du = 1, Dv = 3, so the residual is |3 - 1|^2 = 4.
        let dom = Domain::interval(2, 3.0).unwrap();
        let u = ScalarField::from_values(&dom, vec![1.0, 2.0]).unwrap();
        let v = ScalarField::from_values(&dom, vec![1.0, 4.0]).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let xi = subdiff_selection(&energy, &u.gradient()).unwrap();
        let rep = picone_residual(&energy, &u, &v, &xi).unwrap();
        let idx = rep
            .cells
            .iter()
            .position(|&c| dom.cells()[c].anchor == 0)
            .unwrap();
        assert!((rep.chain_residual[idx] - 4.0).abs() < 1e-12);

        // Equality case v = u on the same pair.
        let same = picone_residual(&energy, &u, &u, &xi).unwrap();
        assert!(same.chain_residual.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn random_pairs_nonnegative_chain_residual() {
        let mut rng = seeded_rng(37);
        let domains = vec![
            Domain::interval(20, 1.0).unwrap(),
            Domain::unit_square(7).unwrap(),
        ];
        for dom in &domains {
            let dim = dom.dim();
            let energies: Vec<Energy> = if dim == 1 {
                vec![
                    Energy::euclidean(1, 2.0).unwrap(),
                    Energy::polytope(gallery::skewed_interval(), 1.5).unwrap(),
                ]
            } else {
                vec![
                    Energy::euclidean(2, 3.0).unwrap(),
                    Energy::polytope(gallery::linf_ball_2d(), 2.0).unwrap(),
                    Energy::orthant_quadratic([2.0, 1.0, 1.0, 2.0]).unwrap(),
                    Energy::reflected(Energy::polytope(gallery::skewed_box_2d(), 2.0).unwrap()),
                ]
            };
            for energy in &energies {
                for _ in 0..50 {
                    let u = positive_field(dom, &mut rng);
                    let v = positive_field(dom, &mut rng);
                    let xi = subdiff_selection(energy, &u.gradient()).unwrap();
                    let rep = picone_residual(energy, &u, &v, &xi).unwrap();
                    assert!(
                        rep.min_chain_residual >= -1e-10,
                        "min {}",
                        rep.min_chain_residual
                    );
                }
            }
        }
    }

    #[test]
    fn positivity_required() {
        let dom = Domain::interval(10, 1.0).unwrap();
        let u = ScalarField::zeros(&dom);
        let v = ScalarField::from_fn(&dom, |x, _| x);
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let xi = subdiff_selection(&energy, &u.gradient()).unwrap();
        let err = picone_residual(&energy, &u, &v, &xi).unwrap_err();
        assert!(err.to_string().contains("inf u > 0"));
    }

    #[test]
    fn invalid_selection_rejected() {
        let dom = Domain::interval(10, 1.0).unwrap();
        let mut rng = seeded_rng(41);
        let u = positive_field(&dom, &mut rng);
        let v = positive_field(&dom, &mut rng);
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let mut xi = subdiff_selection(&energy, &u.gradient()).unwrap();
        let comps: Vec<f64> = xi.components().iter().map(|c| c + 1.5).collect();
        xi = GradientField::from_components(&dom, comps).unwrap();
        assert!(picone_residual(&energy, &u, &v, &xi).is_err());
    }

    #[test]
    fn proportionality_examples() {
        let dom = Domain::interval(30, 1.0).unwrap();
        let mut rng = seeded_rng(43);
        let u = positive_field(&dom, &mut rng);
        let v = u.scaled(2.0);
        assert!((proportionality_detect(&u, &v, 1e-8).unwrap() - 2.0).abs() < 1e-14);

        let tol = 1e-4;
        // Perturbation of relative size 10 tol: rejected.
        let mut big = v.clone();
        let amp = 10.0 * tol * v.values().iter().map(|x| x * x).sum::<f64>().sqrt()
            / (v.values().len() as f64).sqrt();
        for (k, val) in big.values_mut().iter_mut().enumerate() {
            *val += amp * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        assert!(proportionality_detect(&u, &big, tol).is_none());

        // Noise of relative size tol/10: accepted, k recovered within tol.
        let mut small = u.scaled(3.0);
        let nrm = small.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        let n = small.values().len();
        for (k, val) in small.values_mut().iter_mut().enumerate() {
            *val +=
                (tol / 10.0) * nrm / (n as f64).sqrt() * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        let k = proportionality_detect(&u, &small, tol).unwrap();
        assert!((k - 3.0).abs() < tol * 3.0);
    }

    #[test]
    fn epsilon_stability_monotone() {
        let dom = Domain::unit_square(6).unwrap();
        let mut rng = seeded_rng(47);
        let u = positive_field(&dom, &mut rng);
        let v = positive_field(&dom, &mut rng);
        let energy = Energy::polytope(gallery::linf_ball_2d(), 2.0).unwrap();
        let mut residuals = Vec::new();
        for eps in [1e-4, 1e-6, 1e-8] {
            let ue = u.map(|t| t + eps);
            let xi = subdiff_selection(&energy, &ue.gradient()).unwrap();
            let rep = picone_residual(&energy, &ue, &v, &xi).unwrap();
            residuals.push(rep.chain_residual);
        }
        for c in 0..residuals[0].len() {
            let d1 = (residuals[0][c] - residuals[2][c]).abs();
            let d2 = (residuals[1][c] - residuals[2][c]).abs();
            assert!(d2 <= d1 + 1e-13, "cell {c}: {d1} vs {d2}");
        }
    }
}
