//! Convex, positively p-homogeneous energies built from polytope gauges and
//! a few closed-form families, together with their subdifferentials,
//! reflections and symmetry checks.

use serde::{Deserialize, Serialize};

use crate::error::{AnisoError, Result};
use crate::util::{dot, neg, norm2, unit_directions};

/// Relative threshold deciding which facets count as active in a
/// subdifferential query.
pub const ACTIVE_FACET_TOL: f64 = 1e-12;

/// A convex body `K = { z : (a_i, z) <= 1 for all i }` with 0 in its
/// interior, described by its facet normals.
#[derive(Clone, Debug, PartialEq)]
pub struct Gauge {
    facets: Vec<Vec<f64>>,
    dim: usize,
}

impl Gauge {
    /// Builds a gauge from facet normals, checking that they positively span
    /// the space (equivalently, that 0 is interior to the body).
    pub fn new(facets: Vec<Vec<f64>>) -> Result<Self> {
        if facets.is_empty() {
            return Err(AnisoError::InvalidGauge("no facet normals given".into()));
        }
        let dim = facets[0].len();
        if dim == 0 {
            return Err(AnisoError::InvalidGauge("zero-dimensional normal".into()));
        }
        for (i, a) in facets.iter().enumerate() {
            if a.len() != dim {
                return Err(AnisoError::InvalidGauge(format!(
                    "facet {i} has dimension {} but facet 0 has {dim}",
                    a.len()
                )));
            }
            if !a.iter().all(|x| x.is_finite()) {
                return Err(AnisoError::InvalidGauge(format!("facet {i} is not finite")));
            }
            if norm2(a) == 0.0 {
                return Err(AnisoError::InvalidGauge(format!("facet {i} is zero")));
            }
        }
        let gauge = Gauge { facets, dim };
        gauge.check_positive_spanning()?;
        Ok(gauge)
    }

    fn check_positive_spanning(&self) -> Result<()> {
        if self.facets.len() < self.dim + 1 {
            return Err(AnisoError::InvalidGauge(format!(
                "{} normals cannot positively span dimension {}",
                self.facets.len(),
                self.dim
            )));
        }
        let samples = match self.dim {
            1 => 2,
            2 => 1024,
            3 => 4096,
            _ => 8192,
        };
        let scale = self
            .facets
            .iter()
            .map(|a| norm2(a))
            .fold(0.0f64, f64::max);
        for e in unit_directions(self.dim, samples) {
            let m = self.eval(&e);
            if m <= 1e-12 * scale {
                return Err(AnisoError::InvalidGauge(format!(
                    "normals do not positively span: gauge <= 0 along {e:?}"
                )));
            }
        }
        Ok(())
    }

    /// Minkowski functional `M_K(z) = max_i (a_i, z)`; vanishes at the origin.
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.facets
            .iter()
            .map(|a| dot(a, z))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of facets attaining the max at `z`, up to [`ACTIVE_FACET_TOL`].
    pub fn active_facets(&self, z: &[f64]) -> Vec<usize> {
        let m = self.eval(z);
        let tol = ACTIVE_FACET_TOL * (1.0 + m.abs());
        self.facets
            .iter()
            .enumerate()
            .filter(|(_, a)| dot(a, z) >= m - tol)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn facets(&self) -> &[Vec<f64>] {
        &self.facets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// (min, max) of the gauge over the unit sphere. The max is exact
    /// (attained at a facet normal direction); in dimensions 1 and 2 the min
    /// is exact as well, in dimension >= 3 it is a certified lower bound
    /// obtained by deflating a sampled minimum by the grid covering radius.
    pub fn sphere_range(&self) -> (f64, f64) {
        let max = self.facets.iter().map(|a| norm2(a)).fold(0.0f64, f64::max);
        let min = match self.dim {
            1 => self.eval(&[1.0]).min(self.eval(&[-1.0])),
            2 => self.sphere_min_2d(),
            _ => {
                let n = 8192;
                let sampled = unit_directions(self.dim, n)
                    .iter()
                    .map(|e| self.eval(e))
                    .fold(f64::INFINITY, f64::min);
                let covering = 3.0 / (n as f64).sqrt();
                (sampled - max * covering).max(0.0)
            }
        };
        (min, max)
    }

    // The upper envelope of t -> (a_i, e(t)) is piecewise sinusoidal; its
    // minimum over the circle sits at an envelope crossing or at a facet's
    // own stationary angle, so evaluating at those angles is exact.
    fn sphere_min_2d(&self) -> f64 {
        let mut angles: Vec<f64> = Vec::new();
        for a in &self.facets {
            let phi = a[1].atan2(a[0]);
            angles.push(phi);
            angles.push(phi + std::f64::consts::PI);
        }
        for i in 0..self.facets.len() {
            for j in (i + 1)..self.facets.len() {
                let dx = self.facets[i][0] - self.facets[j][0];
                let dy = self.facets[i][1] - self.facets[j][1];
                if dx.abs() + dy.abs() > 0.0 {
                    let theta = dx.atan2(-dy);
                    angles.push(theta);
                    angles.push(theta + std::f64::consts::PI);
                }
            }
        }
        angles
            .iter()
            .map(|t| self.eval(&[t.cos(), t.sin()]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// The closed-form energy families supported at construction time.
#[derive(Clone, Debug)]
pub enum EnergyKind {
    /// `H(z) = M_K(z)^p` for a polytope gauge `K`.
    Polytope(Gauge),
    /// `H(z) = |z|^p`.
    Euclidean { dim: usize },
    /// `H(z) = w0 z1+^2 + w1 z1-^2 + w2 z2+^2 + w3 z2-^2` (dimension 2, p = 2).
    OrthantQuadratic { weights: [f64; 4] },
    /// `H(z) = inner(-z)`.
    Reflected(Box<Energy>),
}

/// A convex, positively p-homogeneous energy density together with its
/// growth constants `c |z|^p <= H(z) <= d |z|^p`.
#[derive(Clone, Debug)]
pub struct Energy {
    kind: EnergyKind,
    p: f64,
    growth: (f64, f64),
    strictly_convex: bool,
}

/// Generators whose convex hull is the subdifferential at a point.
#[derive(Clone, Debug)]
pub struct SubgradientSet {
    pub generators: Vec<Vec<f64>>,
    /// False only for sets produced by smoothing approximations.
    pub exact: bool,
}

impl SubgradientSet {
    /// Deterministic single selection: the lowest-index generator.
    pub fn selection(&self) -> &[f64] {
        &self.generators[0]
    }
}

impl Energy {
    pub fn polytope(gauge: Gauge, p: f64) -> Result<Self> {
        check_homogeneity_exponent(p)?;
        let (rmin, rmax) = gauge.sphere_range();
        if rmin <= 0.0 {
            return Err(AnisoError::InvalidEnergy(
                "gauge too anisotropic for certified growth constants".into(),
            ));
        }
        let strictly_convex = gauge.dim() == 1 && p > 1.0;
        Ok(Energy {
            p,
            growth: (rmin.powf(p), rmax.powf(p)),
            strictly_convex,
            kind: EnergyKind::Polytope(gauge),
        })
    }

    pub fn euclidean(dim: usize, p: f64) -> Result<Self> {
        check_homogeneity_exponent(p)?;
        if dim == 0 {
            return Err(AnisoError::InvalidEnergy("dimension must be >= 1".into()));
        }
        Ok(Energy {
            kind: EnergyKind::Euclidean { dim },
            p,
            growth: (1.0, 1.0),
            strictly_convex: p > 1.0,
        })
    }

    pub fn orthant_quadratic(weights: [f64; 4]) -> Result<Self> {
        if !weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(AnisoError::InvalidEnergy(
                "orthant-quadratic weights must be positive".into(),
            ));
        }
        let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = weights.iter().cloned().fold(0.0f64, f64::max);
        Ok(Energy {
            kind: EnergyKind::OrthantQuadratic { weights },
            p: 2.0,
            growth: (min, max),
            strictly_convex: true,
        })
    }

    pub fn reflected(inner: Energy) -> Self {
        Energy {
            p: inner.p,
            growth: inner.growth,
            strictly_convex: inner.strictly_convex,
            kind: EnergyKind::Reflected(Box::new(inner)),
        }
    }

    pub fn kind(&self) -> &EnergyKind {
        &self.kind
    }

    pub fn homogeneity(&self) -> f64 {
        self.p
    }

    /// Growth constants `(c, d)` with `c |z|^p <= H(z) <= d |z|^p`.
    pub fn growth(&self) -> (f64, f64) {
        self.growth
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.strictly_convex
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            EnergyKind::Polytope(g) => g.dim(),
            EnergyKind::Euclidean { dim } => *dim,
            EnergyKind::OrthantQuadratic { .. } => 2,
            EnergyKind::Reflected(e) => e.dim(),
        }
    }

    /// Unwraps reflection wrappers into a closed-form family: facets are
    /// negated, orthant weights swap their one-sided pairs.
    pub fn canonical(&self) -> Energy {
        match &self.kind {
            EnergyKind::Reflected(inner) => {
                let inner = inner.canonical();
                match inner.kind {
                    EnergyKind::Polytope(g) => {
                        let facets = g.facets().iter().map(|a| neg(a)).collect();
                        Energy {
                            kind: EnergyKind::Polytope(Gauge {
                                facets,
                                dim: g.dim(),
                            }),
                            ..inner
                        }
                    }
                    EnergyKind::Euclidean { .. } => inner,
                    EnergyKind::OrthantQuadratic { weights: w } => Energy {
                        kind: EnergyKind::OrthantQuadratic {
                            weights: [w[1], w[0], w[3], w[2]],
                        },
                        ..inner
                    },
                    EnergyKind::Reflected(_) => unreachable!("canonical removes reflections"),
                }
            }
            _ => self.clone(),
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.kind {
            EnergyKind::Polytope(g) => {
                let m = g.eval(z);
                if self.p == 2.0 {
                    m * m
                } else if self.p == 1.0 {
                    m
                } else {
                    m.powf(self.p)
                }
            }
            EnergyKind::Euclidean { .. } => {
                let n2 = dot(z, z);
                if self.p == 2.0 {
                    n2
                } else {
                    n2.powf(self.p / 2.0)
                }
            }
            EnergyKind::OrthantQuadratic { weights } => {
                let xp = z[0].max(0.0);
                let xm = (-z[0]).max(0.0);
                let yp = z[1].max(0.0);
                let ym = (-z[1]).max(0.0);
                weights[0] * xp * xp + weights[1] * xm * xm + weights[2] * yp * yp
                    + weights[3] * ym * ym
            }
            EnergyKind::Reflected(inner) => inner.eval(&neg(z)),
        }
    }

    /// Subdifferential at `z` as a generator set. Polytope gauges return one
    /// generator per active facet; the differentiable families return the
    /// gradient.
    pub fn subdiff(&self, z: &[f64]) -> Result<SubgradientSet> {
        let zero = z.iter().all(|x| *x == 0.0);
        if zero {
            if self.p == 1.0 {
                return Err(AnisoError::InvalidEnergy(
                    "subdifferential is the full polar ball; unsupported".into(),
                ));
            }
            return Ok(SubgradientSet {
                generators: vec![vec![0.0; self.dim()]],
                exact: true,
            });
        }
        match &self.kind {
            EnergyKind::Polytope(g) => {
                let m = g.eval(z);
                let scale = if self.p == 1.0 {
                    1.0
                } else {
                    self.p * m.powf(self.p - 1.0)
                };
                let generators = g
                    .active_facets(z)
                    .into_iter()
                    .map(|i| g.facets()[i].iter().map(|a| scale * a).collect())
                    .collect();
                Ok(SubgradientSet {
                    generators,
                    exact: true,
                })
            }
            EnergyKind::Euclidean { .. } => {
                let n2 = dot(z, z);
                let scale = if self.p == 2.0 {
                    2.0
                } else {
                    self.p * n2.powf(self.p / 2.0 - 1.0)
                };
                Ok(SubgradientSet {
                    generators: vec![z.iter().map(|x| scale * x).collect()],
                    exact: true,
                })
            }
            EnergyKind::OrthantQuadratic { weights } => {
                let gx = 2.0 * weights[0] * z[0].max(0.0) - 2.0 * weights[1] * (-z[0]).max(0.0);
                let gy = 2.0 * weights[2] * z[1].max(0.0) - 2.0 * weights[3] * (-z[1]).max(0.0);
                Ok(SubgradientSet {
                    generators: vec![vec![gx, gy]],
                    exact: true,
                })
            }
            EnergyKind::Reflected(inner) => {
                let set = inner.subdiff(&neg(z))?;
                Ok(SubgradientSet {
                    generators: set.generators.iter().map(|g| neg(g)).collect(),
                    exact: set.exact,
                })
            }
        }
    }

    /// `p H(z) - (xi, z)`. Non-negative whenever `xi` is a subgradient at `z`,
    /// and zero for every generator returned by [`Energy::subdiff`].
    pub fn euler_defect(&self, z: &[f64], xi: &[f64]) -> f64 {
        self.p * self.eval(z) - dot(xi, z)
    }

    /// Whether the orthogonal map `t` (row-major dim x dim) preserves `H`.
    /// Polytope gauges get an exact facet-set test, the other families a
    /// deterministic sampled test at tolerance 1e-10.
    pub fn symmetry_check(&self, t: &[Vec<f64>]) -> Result<bool> {
        let n = self.dim();
        check_orthogonal(t, n)?;
        let canon = self.canonical();
        match canon.kind {
            EnergyKind::Polytope(ref g) => {
                // H(Tz) = max_i (T^t a_i, z)^p, so compare {T^t a_i} with {a_j} as sets.
                let mapped: Vec<Vec<f64>> = g
                    .facets()
                    .iter()
                    .map(|a| (0..n).map(|k| (0..n).map(|r| t[r][k] * a[r]).sum()).collect())
                    .collect();
                Ok(facet_sets_equal(&mapped, g.facets()))
            }
            _ => {
                let dirs = unit_directions(n, 512);
                for e in dirs {
                    let te: Vec<f64> = (0..n).map(|r| dot(&t[r], &e)).collect();
                    let a = canon.eval(&te);
                    let b = canon.eval(&e);
                    if (a - b).abs() > 1e-10 * (1.0 + b.abs()) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    pub fn to_spec(&self) -> EnergySpec {
        match &self.kind {
            EnergyKind::Polytope(g) => EnergySpec::Polytope {
                p: self.p,
                facets: g.facets().to_vec(),
            },
            EnergyKind::Euclidean { dim } => EnergySpec::Euclidean {
                p: self.p,
                dim: *dim,
            },
            EnergyKind::OrthantQuadratic { weights } => EnergySpec::OrthantQuadratic {
                weights: weights.to_vec(),
                p: Some(2.0),
            },
            EnergyKind::Reflected(e) => EnergySpec::Reflected {
                inner: Box::new(e.to_spec()),
            },
        }
    }

    pub fn from_spec(spec: &EnergySpec) -> Result<Energy> {
        match spec {
            EnergySpec::Polytope { p, facets } => Energy::polytope(Gauge::new(facets.clone())?, *p),
            EnergySpec::Euclidean { p, dim } => Energy::euclidean(*dim, *p),
            EnergySpec::OrthantQuadratic { weights, p } => {
                if let Some(p) = p {
                    if *p != 2.0 {
                        return Err(AnisoError::InvalidEnergy(
                            "orthant_quadratic requires p = 2".into(),
                        ));
                    }
                }
                let w: [f64; 4] = weights.as_slice().try_into().map_err(|_| {
                    AnisoError::InvalidEnergy("orthant_quadratic needs exactly 4 weights".into())
                })?;
                Energy::orthant_quadratic(w)
            }
            EnergySpec::Reflected { inner } => Ok(Energy::reflected(Energy::from_spec(inner)?)),
        }
    }

    pub fn from_json(text: &str) -> Result<Energy> {
        let spec: EnergySpec = serde_json::from_str(text).map_err(|e| AnisoError::Config {
            path: "energy".into(),
            message: e.to_string(),
        })?;
        Energy::from_spec(&spec)
    }
}

/// Serialized form of an [`Energy`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergySpec {
    Polytope { p: f64, facets: Vec<Vec<f64>> },
    Euclidean { p: f64, dim: usize },
    OrthantQuadratic {
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
    },
    Reflected { inner: Box<EnergySpec> },
}

fn check_homogeneity_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(AnisoError::InvalidEnergy(format!(
            "homogeneity exponent must satisfy p >= 1, got {p}"
        )));
    }
    Ok(())
}

fn check_orthogonal(t: &[Vec<f64>], n: usize) -> Result<()> {
    if t.len() != n || t.iter().any(|row| row.len() != n) {
        return Err(AnisoError::InvalidParameter(format!(
            "expected a {n}x{n} matrix"
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let entry: f64 = (0..n).map(|k| t[k][i] * t[k][j]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            if (entry - expect).abs() > 1e-12 {
                return Err(AnisoError::InvalidParameter(
                    "matrix is not orthogonal to 1e-12".into(),
                ));
            }
        }
    }
    Ok(())
}

fn facet_sets_equal(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    for v in a {
        let scale = 1.0 + norm2(v);
        let hit = b.iter().enumerate().find(|(j, w)| {
            !used[*j] && v.iter().zip(w.iter()).all(|(x, y)| (x - y).abs() <= 1e-9 * scale)
        });
        match hit {
            Some((j, _)) => used[j] = true,
            None => return false,
        }
    }
    true
}

/// Convenience constructors for gauges used throughout the tests and examples.
pub mod gallery {
    use super::*;

    /// Normals of the sup-norm unit ball in dimension 2.
    pub fn linf_ball_2d() -> Gauge {
        Gauge::new(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .expect("valid gauge")
    }

    /// A non-even 2d body: -1/2 <= z1 <= 1, |z2| <= 1.
    pub fn skewed_box_2d() -> Gauge {
        Gauge::new(vec![
            vec![1.0, 0.0],
            vec![-2.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .expect("valid gauge")
    }

    /// A non-even interval gauge: K = [-2, 1/2].
    pub fn skewed_interval() -> Gauge {
        Gauge::new(vec![vec![2.0], vec![-0.5]]).expect("valid gauge")
    }

    /// Octahedron-like body in dimension 3 with one stretched vertex class.
    pub fn octahedron_3d() -> Gauge {
        let mut facets = Vec::new();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let w = if sz > 0.0 { 1.0 } else { 0.7 };
                    facets.push(vec![sx * w, sy * w, sz * w]);
                }
            }
        }
        Gauge::new(facets).expect("valid gauge")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::{random_vector, seeded_rng};
    use rand::Rng as _;

    fn linf2() -> Energy {
        Energy::polytope(gallery::linf_ball_2d(), 2.0).unwrap()
    }

    // One-sided finite-difference directional derivative of H at z along w;
    // for convex H this approximates max over the subdifferential of (xi, w).
    fn directional_derivative(e: &Energy, z: &[f64], w: &[f64]) -> f64 {
        let t = 1e-7;
        let zp: Vec<f64> = z.iter().zip(w).map(|(a, b)| a + t * b).collect();
        (e.eval(&zp) - e.eval(z)) / t
    }

    fn support(set: &SubgradientSet, w: &[f64]) -> f64 {
        set.generators
            .iter()
            .map(|g| dot(g, w))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn gauge_eval_examples() {
        let g = gallery::linf_ball_2d();
        assert_eq!(g.eval(&[2.0, 1.0]), 2.0);
        assert_eq!(g.eval(&[0.0, 0.0]), 0.0);
        let skew = Gauge::new(vec![
            vec![1.0, 0.0],
            vec![-0.5, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        assert_eq!(skew.eval(&[-4.0, 0.0]), 2.0);
    }

    #[test]
    fn malformed_gauge_rejected() {
        // All normals in a halfplane: cannot positively span.
        let err = Gauge::new(vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn energy_eval_examples() {
        let e3 = Energy::euclidean(2, 3.0).unwrap();
        assert!((e3.eval(&[2.0, 0.0]) - 8.0).abs() < 1e-12);
        let oq = Energy::orthant_quadratic([2.0, 1.0, 2.0, 1.0]).unwrap();
        assert!((oq.eval(&[1.0, -1.0]) - 3.0).abs() < 1e-15);
        assert!((linf2().eval(&[2.0, 1.0]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn subdiff_single_facet() {
        let set = linf2().subdiff(&[2.0, 1.0]).unwrap();
        assert_eq!(set.generators, vec![vec![4.0, 0.0]]);
        // Finite-difference oracle along a few directions.
        for w in [[1.0, 0.0], [0.0, 1.0], [-1.0, 2.0], [0.3, -0.7]] {
            let dd = directional_derivative(&linf2(), &[2.0, 1.0], &w);
            assert!((dd - support(&set, &w)).abs() < 1e-5, "dir {w:?}");
        }
    }

    #[test]
    fn subdiff_ridge_returns_all_active_facets() {
        let set = linf2().subdiff(&[2.0, 2.0]).unwrap();
        assert_eq!(set.generators.len(), 2);
        assert!(set.generators.contains(&vec![4.0, 0.0]));
        assert!(set.generators.contains(&vec![0.0, 4.0]));
        for w in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 3.0]] {
            let dd = directional_derivative(&linf2(), &[2.0, 2.0], &w);
            assert!((dd - support(&set, &w)).abs() < 1e-5, "dir {w:?}");
        }
    }

    #[test]
    fn subdiff_at_origin() {
        for e in [
            linf2(),
            Energy::euclidean(3, 1.5).unwrap(),
            Energy::orthant_quadratic([2.0, 1.0, 1.0, 2.0]).unwrap(),
        ] {
            let set = e.subdiff(&vec![0.0; e.dim()]).unwrap();
            assert_eq!(set.generators, vec![vec![0.0; e.dim()]]);
        }
    }

    #[test]
    fn subdiff_p1_origin_unsupported() {
        let e = Energy::polytope(gallery::linf_ball_2d(), 1.0).unwrap();
        assert!(e.subdiff(&[0.0, 0.0]).is_err());
        assert!(e.subdiff(&[1.0, 0.0]).is_ok());
    }

    #[test]
    fn euler_defect_vanishes_on_generators() {
        let mut rng = seeded_rng(7);
        let energies = vec![
            linf2(),
            Energy::polytope(gallery::skewed_box_2d(), 2.0).unwrap(),
            Energy::polytope(gallery::skewed_interval(), 3.0).unwrap(),
            Energy::euclidean(2, 2.0).unwrap(),
            Energy::euclidean(3, 1.5).unwrap(),
            Energy::orthant_quadratic([2.0, 1.0, 2.0, 1.0]).unwrap(),
            Energy::reflected(Energy::polytope(gallery::skewed_box_2d(), 2.0).unwrap()),
        ];
        for e in &energies {
            for _ in 0..200 {
                let z = random_vector(&mut rng, e.dim(), 3.0);
                for gsub in e.subdiff(&z).unwrap().generators {
                    let d = e.euler_defect(&z, &gsub);
                    assert!(d.abs() <= 1e-12 * (1.0 + e.eval(&z)), "defect {d}");
                }
            }
        }
    }

    #[test]
    fn euler_defect_positive_for_foreign_subgradient() {
        // A subgradient taken at a different base point violates the Euler
        // identity at z and yields a strictly positive defect.
        let e = linf2();
        let xi = e.subdiff(&[2.0, 1.0]).unwrap().generators[0].clone(); // (4, 0)
        let d = e.euler_defect(&[1.0, 2.0], &xi);
        assert!((d - 4.0).abs() < 1e-12); // 2*4 - (4,0).(1,2) = 8 - 4
    }

    #[test]
    fn euler_defect_euclidean_identity() {
        let e = Energy::euclidean(2, 2.0).unwrap();
        let z = [0.3, -1.2];
        let xi: Vec<f64> = z.iter().map(|x| 2.0 * x).collect();
        assert!(e.euler_defect(&z, &xi).abs() < 1e-14);
    }

    #[test]
    fn symmetry_checks() {
        let rot = vec![vec![0.0, -1.0], vec![1.0, 0.0]];
        let swap = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let minus = vec![vec![-1.0, 0.0], vec![0.0, -1.0]];
        let eu = Energy::euclidean(2, 2.0).unwrap();
        assert!(eu.symmetry_check(&rot).unwrap());
        let oq = Energy::orthant_quadratic([2.0, 1.0, 2.0, 1.0]).unwrap();
        assert!(!oq.symmetry_check(&minus).unwrap());
        assert!(oq.symmetry_check(&swap).unwrap());
        assert!(linf2().symmetry_check(&rot).unwrap());
        let not_orth = vec![vec![1.0, 0.1], vec![0.0, 1.0]];
        assert!(eu.symmetry_check(&not_orth).is_err());
    }

    #[test]
    fn homogeneity_invariant() {
        let mut rng = seeded_rng(11);
        let energies = vec![
            linf2(),
            Energy::polytope(gallery::octahedron_3d(), 2.5).unwrap(),
            Energy::euclidean(2, 3.0).unwrap(),
            Energy::orthant_quadratic([2.0, 1.0, 1.0, 2.0]).unwrap(),
            Energy::reflected(linf2()),
        ];
        for e in &energies {
            for _ in 0..1000 {
                let z = random_vector(&mut rng, e.dim(), 2.0);
                let lam: f64 = rng.random_range(1e-3..10.0);
                let lhs = e.eval(&z.iter().map(|x| lam * x).collect::<Vec<_>>());
                let rhs = lam.powf(e.homogeneity()) * e.eval(&z);
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn subgradient_inequality_sampled() {
        let mut rng = seeded_rng(13);
        let energies = vec![
            linf2(),
            Energy::polytope(gallery::skewed_box_2d(), 1.5).unwrap(),
            Energy::euclidean(2, 2.0).unwrap(),
            Energy::orthant_quadratic([2.0, 1.0, 2.0, 1.0]).unwrap(),
        ];
        for e in &energies {
            for _ in 0..1000 {
                let z = random_vector(&mut rng, e.dim(), 2.0);
                let w = random_vector(&mut rng, e.dim(), 2.0);
                let hz = e.eval(&z);
                let zw: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a + b).collect();
                let hzw = e.eval(&zw);
                for gsub in e.subdiff(&z).unwrap().generators {
                    assert!(hzw - hz - dot(&gsub, &w) >= -1e-9);
                }
            }
        }
    }

    #[test]
    fn reflection_involution() {
        let mut rng = seeded_rng(17);
        let base = Energy::polytope(gallery::skewed_box_2d(), 2.0).unwrap();
        let twice = Energy::reflected(Energy::reflected(base.clone()));
        for _ in 0..200 {
            let z = random_vector(&mut rng, 2, 3.0);
            assert_eq!(base.eval(&z), twice.eval(&z));
        }
        // Reflection itself evaluates the inner energy at -z.
        let once = Energy::reflected(base.clone());
        let z = [0.4, -1.1];
        assert_eq!(once.eval(&z), base.eval(&[-0.4, 1.1]));
    }

    #[test]
    fn growth_sandwich() {
        let mut rng = seeded_rng(19);
        let energies = vec![
            linf2(),
            Energy::polytope(gallery::skewed_box_2d(), 2.0).unwrap(),
            Energy::polytope(gallery::octahedron_3d(), 2.0).unwrap(),
            Energy::polytope(gallery::skewed_interval(), 2.0).unwrap(),
            Energy::orthant_quadratic([2.0, 1.0, 1.0, 2.0]).unwrap(),
        ];
        for e in &energies {
            let (c, d) = e.growth();
            assert!(c > 0.0 && c <= d);
            for _ in 0..500 {
                let z = random_vector(&mut rng, e.dim(), 3.0);
                let n2 = dot(&z, &z);
                let np = n2.powf(e.homogeneity() / 2.0);
                let h = e.eval(&z);
                assert!(c * np <= h * (1.0 + 1e-12) + 1e-300);
                assert!(h <= d * np * (1.0 + 1e-12) + 1e-300);
            }
        }
    }

    #[test]
    fn canonical_unwraps_reflection() {
        let oq = Energy::orthant_quadratic([2.0, 1.0, 3.0, 4.0]).unwrap();
        let refl = Energy::reflected(oq.clone()).canonical();
        match refl.kind() {
            EnergyKind::OrthantQuadratic { weights } => {
                assert_eq!(*weights, [1.0, 2.0, 4.0, 3.0]);
            }
            _ => panic!("expected orthant quadratic"),
        }
        let mut rng = seeded_rng(23);
        for _ in 0..100 {
            let z = random_vector(&mut rng, 2, 2.0);
            assert_eq!(refl.eval(&z), oq.eval(&[-z[0], -z[1]]));
        }
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"kind":"polytope","p":2.0,"facets":[[1.0,0.0],[-2.0,0.0],[0.0,1.0],[0.0,-1.0]]}"#;
        let e = Energy::from_json(text).unwrap();
        assert_eq!(e.dim(), 2);
        let back = serde_json::to_string(&e.to_spec()).unwrap();
        let e2 = Energy::from_json(&back).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0]), e2.eval(&[1.0, 2.0]));

        let refl = r#"{"kind":"reflected","inner":{"kind":"euclidean","p":2.0,"dim":2}}"#;
        assert!(Energy::from_json(refl).is_ok());
        let oq = r#"{"kind":"orthant_quadratic","weights":[2.0,1.0,1.0,2.0]}"#;
        assert!(Energy::from_json(oq).is_ok());
    }

    #[test]
    fn sphere_range_exact_2d() {
        // Skewed box: min of max(cos, -2cos, sin, -sin) over the circle.
        let g = gallery::skewed_box_2d();
        let (min, max) = g.sphere_range();
        assert!((max - 2.0).abs() < 1e-12);
        assert!((min - 0.5f64.sqrt()).abs() < 1e-9, "min {min}");
    }
}
