//! Discrete domains (intervals, rectangles, masked 2d shapes, path graphs),
//! scalar fields with zero Dirichlet extension, forward-difference gradients
//! and piecewise-constant quadrature.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{AnisoError, Result};
use crate::gauge::Energy;

pub type DomainRef = Arc<Domain>;

#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    Interval { n: usize, length: f64 },
    Rectangle { nx: usize, ny: usize, lx: f64, ly: f64 },
    Mask2d { nx: usize, ny: usize, origin: [f64; 2] },
    PathGraph { n: usize },
}

/// One gradient cell: a forward-difference stencil anchored at a lattice
/// point. Index -1 stands for a ghost node carrying the value 0.
#[derive(Clone, Copy, Debug)]
pub struct Cell {
    pub anchor: i64,
    pub nbr: [i64; 2],
}

/// An orthogonal lattice map leaving the interior node set invariant.
#[derive(Clone, Debug)]
pub struct Symmetry {
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct Domain {
    kind: DomainKind,
    h: f64,
    dim: usize,
    node_index: Vec<[i64; 2]>,
    coords: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    /// Indices into `cells` whose anchor is an interior node.
    interior_cells: Vec<usize>,
    boundary_dist: Vec<f64>,
    symmetries: Vec<Symmetry>,
    node_weight: f64,
    cell_weight: f64,
    connected: bool,
}

impl Domain {
    pub fn interval(n: usize, length: f64) -> Result<DomainRef> {
        if n == 0 || !(length > 0.0) {
            return Err(AnisoError::InvalidDomain(
                "interval needs n >= 1 interior nodes and positive length".into(),
            ));
        }
        let h = length / (n + 1) as f64;
        let node_index: Vec<[i64; 2]> = (1..=n as i64).map(|i| [i, 0]).collect();
        let coords = node_index.iter().map(|ij| [ij[0] as f64 * h, 0.0]).collect();
        let id = |i: i64| -> i64 {
            if i >= 1 && i <= n as i64 {
                i - 1
            } else {
                -1
            }
        };
        let cells: Vec<Cell> = (0..=n as i64)
            .map(|i| Cell {
                anchor: id(i),
                nbr: [id(i + 1), -1],
            })
            .collect();
        let interior_cells = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.anchor >= 0)
            .map(|(k, _)| k)
            .collect();
        let boundary_dist = (1..=n as i64)
            .map(|i| h * i.min(n as i64 + 1 - i) as f64)
            .collect();
        let symmetries = vec![
            Symmetry { matrix: vec![vec![1.0]] },
            Symmetry { matrix: vec![vec![-1.0]] },
        ];
        Ok(Arc::new(Domain {
            kind: DomainKind::Interval { n, length },
            h,
            dim: 1,
            node_index,
            coords,
            cells,
            interior_cells,
            boundary_dist,
            symmetries,
            node_weight: h,
            cell_weight: h,
            connected: true,
        }))
    }

    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<DomainRef> {
        if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) {
            return Err(AnisoError::InvalidDomain(
                "rectangle needs positive node counts and side lengths".into(),
            ));
        }
        let hx = lx / (nx + 1) as f64;
        let hy = ly / (ny + 1) as f64;
        if (hx - hy).abs() > 1e-9 * hx {
            return Err(AnisoError::InvalidDomain(format!(
                "spacing mismatch: lx/(nx+1) = {hx} but ly/(ny+1) = {hy}"
            )));
        }
        let mask = vec![true; nx * ny];
        Self::lattice_2d(
            DomainKind::Rectangle { nx, ny, lx, ly },
            nx,
            ny,
            hx,
            [0.0, 0.0],
            &mask,
        )
    }

    pub fn unit_square(n: usize) -> Result<DomainRef> {
        Self::rectangle(n, n, 1.0, 1.0)
    }

    /// Masked 2d lattice; `mask` is `nx * ny` in i-major order, node `(i, j)`
    /// (1-based lattice index) sits at `origin + (i h, j h)`.
    pub fn mask2d(nx: usize, ny: usize, h: f64, origin: [f64; 2], mask: &[bool]) -> Result<DomainRef> {
        if mask.len() != nx * ny {
            return Err(AnisoError::InvalidDomain(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                nx * ny
            )));
        }
        if !(h > 0.0) {
            return Err(AnisoError::InvalidDomain("spacing must be positive".into()));
        }
        if !mask.iter().any(|m| *m) {
            return Err(AnisoError::InvalidDomain("mask selects no nodes".into()));
        }
        Self::lattice_2d(DomainKind::Mask2d { nx, ny, origin }, nx, ny, h, origin, mask)
    }

    /// Axis-aligned mask approximating the disk of given radius centred at
    /// the origin: nodes (k h, l h) with k^2 + l^2 h^2 < r^2.
    pub fn disk(radius: f64, h: f64) -> Result<DomainRef> {
        if !(radius > 0.0 && h > 0.0 && radius > h) {
            return Err(AnisoError::InvalidDomain(
                "disk needs radius > h > 0".into(),
            ));
        }
        let k_max = (radius / h).ceil() as i64;
        let n = (2 * k_max - 1) as usize;
        let mut mask = vec![false; n * n];
        for i in 1..=n as i64 {
            for j in 1..=n as i64 {
                let x = (i - k_max) as f64 * h;
                let y = (j - k_max) as f64 * h;
                if x * x + y * y < radius * radius {
                    mask[((i - 1) as usize) * n + (j - 1) as usize] = true;
                }
            }
        }
        let origin = [-(k_max as f64) * h, -(k_max as f64) * h];
        Self::mask2d(n, n, h, origin, &mask)
    }

    /// L-shaped mask: the unit square minus its upper-right quadrant.
    pub fn l_shape(n: usize) -> Result<DomainRef> {
        if n < 3 {
            return Err(AnisoError::InvalidDomain("l_shape needs n >= 3".into()));
        }
        let h = 1.0 / (n + 1) as f64;
        let half = (n + 1) / 2;
        let mut mask = vec![false; n * n];
        for i in 1..=n {
            for j in 1..=n {
                if !(i > half && j > half) {
                    mask[(i - 1) * n + (j - 1)] = true;
                }
            }
        }
        Self::mask2d(n, n, h, [0.0, 0.0], &mask)
    }

    pub fn path_graph(n: usize) -> Result<DomainRef> {
        if n < 3 {
            return Err(AnisoError::InvalidDomain(
                "path graph needs n >= 3 nodes".into(),
            ));
        }
        let interior: Vec<i64> = (1..=(n - 2) as i64).collect();
        let node_index: Vec<[i64; 2]> = interior.iter().map(|&i| [i, 0]).collect();
        let coords = interior.iter().map(|&i| [i as f64, 0.0]).collect();
        let id = |i: i64| -> i64 {
            if i >= 1 && i <= (n - 2) as i64 {
                i - 1
            } else {
                -1
            }
        };
        let cells: Vec<Cell> = (0..(n - 1) as i64)
            .map(|e| Cell {
                anchor: id(e),
                nbr: [id(e + 1), -1],
            })
            .collect();
        let interior_cells = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.anchor >= 0)
            .map(|(k, _)| k)
            .collect();
        let boundary_dist = interior
            .iter()
            .map(|&i| i.min((n - 1) as i64 - i) as f64)
            .collect();
        let symmetries = vec![
            Symmetry { matrix: vec![vec![1.0]] },
            Symmetry { matrix: vec![vec![-1.0]] },
        ];
        Ok(Arc::new(Domain {
            kind: DomainKind::PathGraph { n },
            h: 1.0,
            dim: 1,
            node_index,
            coords,
            cells,
            interior_cells,
            boundary_dist,
            symmetries,
            node_weight: 1.0,
            cell_weight: 1.0,
            connected: true,
        }))
    }

    fn lattice_2d(
        kind: DomainKind,
        nx: usize,
        ny: usize,
        h: f64,
        origin: [f64; 2],
        mask: &[bool],
    ) -> Result<DomainRef> {
        let stride = ny + 2;
        let mut id = vec![-1i64; (nx + 2) * stride];
        let mut node_index = Vec::new();
        let mut coords = Vec::new();
        for i in 1..=nx {
            for j in 1..=ny {
                if mask[(i - 1) * ny + (j - 1)] {
                    id[i * stride + j] = node_index.len() as i64;
                    node_index.push([i as i64, j as i64]);
                    coords.push([origin[0] + i as f64 * h, origin[1] + j as f64 * h]);
                }
            }
        }
        let lookup = |i: usize, j: usize| -> i64 {
            if i <= nx + 1 && j <= ny + 1 {
                id[i * stride + j]
            } else {
                -1
            }
        };
        let mut cells = Vec::new();
        let mut interior_cells = Vec::new();
        for i in 0..=nx {
            for j in 0..=ny {
                let anchor = lookup(i, j);
                let nbr = [lookup(i + 1, j), lookup(i, j + 1)];
                if anchor >= 0 || nbr[0] >= 0 || nbr[1] >= 0 {
                    if anchor >= 0 {
                        interior_cells.push(cells.len());
                    }
                    cells.push(Cell { anchor, nbr });
                }
            }
        }
        let n_nodes = node_index.len();

        // Multi-source BFS from nodes touching the exterior.
        let neighbors = |k: usize| -> Vec<i64> {
            let [i, j] = node_index[k];
            vec![
                lookup((i - 1) as usize, j as usize),
                lookup((i + 1) as usize, j as usize),
                lookup(i as usize, (j - 1) as usize),
                lookup(i as usize, (j + 1) as usize),
            ]
        };
        let mut depth = vec![usize::MAX; n_nodes];
        let mut queue = std::collections::VecDeque::new();
        for k in 0..n_nodes {
            if neighbors(k).iter().any(|&n| n < 0) {
                depth[k] = 1;
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            for nb in neighbors(k) {
                if nb >= 0 && depth[nb as usize] == usize::MAX {
                    depth[nb as usize] = depth[k] + 1;
                    queue.push_back(nb as usize);
                }
            }
        }
        let boundary_dist = depth.iter().map(|&d| d as f64 * h).collect();

        // Connectivity via BFS from node 0.
        let mut seen = vec![false; n_nodes];
        let mut queue = std::collections::VecDeque::new();
        seen[0] = true;
        queue.push_back(0usize);
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for nb in neighbors(k) {
                if nb >= 0 && !seen[nb as usize] {
                    seen[nb as usize] = true;
                    count += 1;
                    queue.push_back(nb as usize);
                }
            }
        }
        let connected = count == n_nodes;

        // Dihedral lattice maps preserving the interior node set, in doubled
        // coordinates about the lattice centre so half-integer centres stay
        // exact.
        let candidates: [[[i64; 2]; 2]; 8] = [
            [[1, 0], [0, 1]],
            [[-1, 0], [0, 1]],
            [[1, 0], [0, -1]],
            [[-1, 0], [0, -1]],
            [[0, 1], [1, 0]],
            [[0, -1], [1, 0]],
            [[0, 1], [-1, 0]],
            [[0, -1], [-1, 0]],
        ];
        let c2 = [(nx + 1) as i64, (ny + 1) as i64];
        let mut symmetries = Vec::new();
        for m in candidates {
            let ok = node_index.iter().all(|&[i, j]| {
                let p = [2 * i - c2[0], 2 * j - c2[1]];
                let q = [
                    m[0][0] * p[0] + m[0][1] * p[1] + c2[0],
                    m[1][0] * p[0] + m[1][1] * p[1] + c2[1],
                ];
                if q[0] % 2 != 0 || q[1] % 2 != 0 {
                    return false;
                }
                let (qi, qj) = (q[0] / 2, q[1] / 2);
                qi >= 1 && qj >= 1 && lookup(qi as usize, qj as usize) >= 0
            });
            if ok {
                symmetries.push(Symmetry {
                    matrix: vec![
                        vec![m[0][0] as f64, m[0][1] as f64],
                        vec![m[1][0] as f64, m[1][1] as f64],
                    ],
                });
            }
        }

        Ok(Arc::new(Domain {
            kind,
            h,
            dim: 2,
            node_index,
            coords,
            cells,
            interior_cells,
            boundary_dist,
            symmetries,
            node_weight: h * h,
            cell_weight: h * h,
            connected,
        }))
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn is_path_graph(&self) -> bool {
        matches!(self.kind, DomainKind::PathGraph { .. })
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.node_index.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn interior_cells(&self) -> &[usize] {
        &self.interior_cells
    }

    pub fn node_coords(&self, k: usize) -> [f64; 2] {
        self.coords[k]
    }

    pub fn node_lattice_index(&self, k: usize) -> [i64; 2] {
        self.node_index[k]
    }

    /// Lattice-graph distance to the exterior, in units of length.
    pub fn boundary_distance(&self, k: usize) -> f64 {
        self.boundary_dist[k]
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn symmetries(&self) -> &[Symmetry] {
        &self.symmetries
    }

    /// |Omega| under the piecewise-constant quadrature.
    pub fn measure(&self) -> f64 {
        self.node_weight * self.num_nodes() as f64
    }

    pub fn node_weight(&self) -> f64 {
        self.node_weight
    }

    pub fn cell_weight(&self) -> f64 {
        self.cell_weight
    }

    fn value_at(&self, values: &[f64], id: i64) -> f64 {
        if id < 0 {
            0.0
        } else {
            values[id as usize]
        }
    }

    /// Adjoint of the cell gradient: scatters per-cell vectors back onto
    /// nodes so that sum_c (grad u)_c . xi_c = sum_i u_i (D^t xi)_i.
    pub fn div_transpose(&self, comps: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        if self.is_path_graph() {
            for (c, cell) in self.cells.iter().enumerate() {
                let v = comps[c];
                if cell.anchor >= 0 {
                    out[cell.anchor as usize] += v;
                }
                if cell.nbr[0] >= 0 {
                    out[cell.nbr[0] as usize] -= v;
                }
            }
        } else {
            let inv_h = 1.0 / self.h;
            for (c, cell) in self.cells.iter().enumerate() {
                let mut a_sum = 0.0;
                for k in 0..self.dim {
                    let v = comps[c * self.dim + k];
                    a_sum += v;
                    if cell.nbr[k] >= 0 {
                        out[cell.nbr[k] as usize] += v * inv_h;
                    }
                }
                if cell.anchor >= 0 {
                    out[cell.anchor as usize] -= a_sum * inv_h;
                }
            }
        }
        out
    }
}

/// Nodal values on the interior of a domain, extended by zero outside.
#[derive(Clone, Debug)]
pub struct ScalarField {
    domain: DomainRef,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(domain: &DomainRef) -> Self {
        ScalarField {
            domain: domain.clone(),
            values: vec![0.0; domain.num_nodes()],
        }
    }

    pub fn from_values(domain: &DomainRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_nodes() {
            return Err(AnisoError::InvalidField(format!(
                "{} values for a domain with {} nodes",
                values.len(),
                domain.num_nodes()
            )));
        }
        Ok(ScalarField {
            domain: domain.clone(),
            values,
        })
    }

    pub fn from_fn(domain: &DomainRef, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..domain.num_nodes())
            .map(|k| {
                let [x, y] = domain.node_coords(k);
                f(x, y)
            })
            .collect();
        ScalarField {
            domain: domain.clone(),
            values,
        }
    }

    pub fn domain(&self) -> &DomainRef {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_domain(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain)
            || (self.domain.kind() == other.domain.kind()
                && self.domain.num_nodes() == other.domain.num_nodes())
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn plus(&self, other: &ScalarField) -> ScalarField {
        assert!(self.same_domain(other), "field domain mismatch");
        ScalarField {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn minus(&self, other: &ScalarField) -> ScalarField {
        assert!(self.same_domain(other), "field domain mismatch");
        ScalarField {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn positive_part(&self) -> ScalarField {
        ScalarField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    pub fn negative_part(&self) -> ScalarField {
        ScalarField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| (-v).max(0.0)).collect(),
        }
    }

    /// Nodewise `min(u, k)`.
    pub fn truncate_above(&self, k: f64) -> ScalarField {
        ScalarField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| v.min(k)).collect(),
        }
    }

    /// Nodewise `(u - k)_+`.
    pub fn excess(&self, k: f64) -> ScalarField {
        ScalarField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| (v - k).max(0.0)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Quadrature Lp norm `(sum |u|^p w)^(1/p)`.
    pub fn norm_p(&self, p: f64) -> f64 {
        let w = self.domain.node_weight();
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (w * s).powf(1.0 / p)
    }

    /// Quadrature integral of the nodal values.
    pub fn integrate(&self) -> f64 {
        self.domain.node_weight() * self.values.iter().sum::<f64>()
    }

    /// Quadrature measure of the superlevel set {u >= k}.
    pub fn level_set_measure(&self, k: f64) -> f64 {
        self.domain.node_weight() * self.values.iter().filter(|v| **v >= k).count() as f64
    }

    pub fn gradient(&self) -> GradientField {
        let dom = &self.domain;
        let dim = dom.dim();
        let mut comps = vec![0.0; dom.num_cells() * dim];
        if dom.is_path_graph() {
            for (c, cell) in dom.cells().iter().enumerate() {
                comps[c] = dom.value_at(&self.values, cell.anchor)
                    - dom.value_at(&self.values, cell.nbr[0]);
            }
        } else {
            let inv_h = 1.0 / dom.spacing();
            for (c, cell) in dom.cells().iter().enumerate() {
                let a = dom.value_at(&self.values, cell.anchor);
                for k in 0..dim {
                    comps[c * dim + k] = (dom.value_at(&self.values, cell.nbr[k]) - a) * inv_h;
                }
            }
        }
        GradientField {
            domain: dom.clone(),
            comps,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut text = String::new();
        if self.domain.dim() == 1 {
            text.push_str("i,x,u\n");
            for (k, v) in self.values.iter().enumerate() {
                let [i, _] = self.domain.node_lattice_index(k);
                let [x, _] = self.domain.node_coords(k);
                writeln!(text, "{i},{x:.16e},{v:.16e}").ok();
            }
        } else {
            text.push_str("i,j,x,y,u\n");
            for (k, v) in self.values.iter().enumerate() {
                let [i, j] = self.domain.node_lattice_index(k);
                let [x, y] = self.domain.node_coords(k);
                writeln!(text, "{i},{j},{x:.16e},{y:.16e},{v:.16e}").ok();
            }
        }
        w.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8 csv")
    }

    /// Reads a field CSV written by [`ScalarField::write_csv`], reconstructing
    /// the continuum domain from its indices and coordinates.
    pub fn read_csv(text: &str) -> Result<ScalarField> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| AnisoError::InvalidField("empty csv".into()))?
            .trim();
        let parse =
            |s: &str, what: &str, row: usize| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| {
                    AnisoError::InvalidField(format!("row {row}: cannot parse {what} '{s}'"))
                })
            };
        match header {
            "i,x,u" => {
                let mut rows: Vec<(i64, f64, f64)> = Vec::new();
                for (r, line) in lines.enumerate() {
                    let parts: Vec<&str> = line.split(',').collect();
                    if parts.len() != 3 {
                        return Err(AnisoError::InvalidField(format!(
                            "row {r}: expected 3 columns"
                        )));
                    }
                    rows.push((
                        parse(parts[0], "index", r)? as i64,
                        parse(parts[1], "x", r)?,
                        parse(parts[2], "u", r)?,
                    ));
                }
                if rows.is_empty() {
                    return Err(AnisoError::InvalidField("csv has no data rows".into()));
                }
                rows.sort_by_key(|r| r.0);
                let n = rows.last().unwrap().0;
                if n < 1 || rows.len() != n as usize || rows[0].0 != 1 {
                    return Err(AnisoError::InvalidField(
                        "1d csv must cover indices 1..=n".into(),
                    ));
                }
                let (i0, x0, _) = rows[rows.len() - 1];
                let h = x0 / i0 as f64;
                for &(i, x, _) in &rows {
                    if (x - i as f64 * h).abs() > 1e-9 * (1.0 + x.abs()) {
                        return Err(AnisoError::InvalidField(
                            "1d csv coordinates are not an equispaced grid".into(),
                        ));
                    }
                }
                let dom = Domain::interval(n as usize, (n + 1) as f64 * h)?;
                ScalarField::from_values(&dom, rows.iter().map(|r| r.2).collect())
            }
            "i,j,x,y,u" => {
                let mut rows: Vec<(i64, i64, f64, f64, f64)> = Vec::new();
                for (r, line) in lines.enumerate() {
                    let parts: Vec<&str> = line.split(',').collect();
                    if parts.len() != 5 {
                        return Err(AnisoError::InvalidField(format!(
                            "row {r}: expected 5 columns"
                        )));
                    }
                    rows.push((
                        parse(parts[0], "i", r)? as i64,
                        parse(parts[1], "j", r)? as i64,
                        parse(parts[2], "x", r)?,
                        parse(parts[3], "y", r)?,
                        parse(parts[4], "u", r)?,
                    ));
                }
                if rows.len() < 2 {
                    return Err(AnisoError::InvalidField(
                        "2d csv needs at least two rows".into(),
                    ));
                }
                rows.sort_by_key(|r| (r.0, r.1));
                let h = infer_spacing(&rows)?;
                let origin = [rows[0].2 - rows[0].0 as f64 * h, rows[0].3 - rows[0].1 as f64 * h];
                for &(i, j, x, y, _) in &rows {
                    let ex = origin[0] + i as f64 * h;
                    let ey = origin[1] + j as f64 * h;
                    if (x - ex).abs() > 1e-9 * (1.0 + x.abs())
                        || (y - ey).abs() > 1e-9 * (1.0 + y.abs())
                    {
                        return Err(AnisoError::InvalidField(
                            "2d csv coordinates are not an equispaced grid".into(),
                        ));
                    }
                }
                let nx = rows.iter().map(|r| r.0).max().unwrap();
                let ny = rows.iter().map(|r| r.1).max().unwrap();
                if rows.iter().any(|r| r.0 < 1 || r.1 < 1) {
                    return Err(AnisoError::InvalidField(
                        "2d csv indices must be >= 1".into(),
                    ));
                }
                let mut mask = vec![false; (nx * ny) as usize];
                for &(i, j, ..) in &rows {
                    mask[((i - 1) * ny + (j - 1)) as usize] = true;
                }
                let full = rows.len() == (nx * ny) as usize;
                let dom = if full && origin[0].abs() < 1e-9 && origin[1].abs() < 1e-9 {
                    Domain::rectangle(
                        nx as usize,
                        ny as usize,
                        (nx + 1) as f64 * h,
                        (ny + 1) as f64 * h,
                    )?
                } else {
                    Domain::mask2d(nx as usize, ny as usize, h, origin, &mask)?
                };
                ScalarField::from_values(&dom, rows.iter().map(|r| r.4).collect())
            }
            other => Err(AnisoError::InvalidField(format!(
                "unrecognized csv header '{other}'"
            ))),
        }
    }
}

fn infer_spacing(rows: &[(i64, i64, f64, f64, f64)]) -> Result<f64> {
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.0 != a.0 {
            return Ok((b.2 - a.2) / (b.0 - a.0) as f64);
        }
        if b.1 != a.1 {
            return Ok((b.3 - a.3) / (b.1 - a.1) as f64);
        }
    }
    Err(AnisoError::InvalidField(
        "cannot infer grid spacing from csv".into(),
    ))
}

/// Per-cell gradient vectors of a scalar field.
#[derive(Clone, Debug)]
pub struct GradientField {
    domain: DomainRef,
    comps: Vec<f64>,
}

impl GradientField {
    pub fn from_components(domain: &DomainRef, comps: Vec<f64>) -> Result<Self> {
        if comps.len() != domain.num_cells() * domain.dim() {
            return Err(AnisoError::InvalidField(format!(
                "{} components for {} cells of dimension {}",
                comps.len(),
                domain.num_cells(),
                domain.dim()
            )));
        }
        Ok(GradientField {
            domain: domain.clone(),
            comps,
        })
    }

    pub fn domain(&self) -> &DomainRef {
        &self.domain
    }

    pub fn components(&self) -> &[f64] {
        &self.comps
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        let d = self.domain.dim();
        &self.comps[c * d..(c + 1) * d]
    }

    /// Quadrature integral of `H` over the cells.
    pub fn energy_total(&self, energy: &Energy) -> f64 {
        let w = self.domain.cell_weight();
        (0..self.domain.num_cells())
            .map(|c| energy.eval(self.cell(c)))
            .sum::<f64>()
            * w
    }

    /// Quadrature integral of the Euclidean p-th power |Du|^p.
    pub fn p_power_total(&self, p: f64) -> f64 {
        let w = self.domain.cell_weight();
        let d = self.domain.dim();
        (0..self.domain.num_cells())
            .map(|c| {
                let z = &self.comps[c * d..(c + 1) * d];
                let n2: f64 = z.iter().map(|x| x * x).sum();
                if p == 2.0 {
                    n2
                } else {
                    n2.powf(p / 2.0)
                }
            })
            .sum::<f64>()
            * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_field(dom: &DomainRef, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
        let vals = (0..dom.num_nodes())
            .map(|_| rng.random_range(lo..hi))
            .collect();
        ScalarField::from_values(dom, vals).unwrap()
    }

    #[test]
    fn interval_geometry() {
        let dom = Domain::interval(9, 1.0).unwrap();
        assert_eq!(dom.num_nodes(), 9);
        assert!((dom.spacing() - 0.1).abs() < 1e-15);
        assert!((dom.measure() - 0.9).abs() < 1e-12);
        assert_eq!(dom.num_cells(), 10);
    }

    #[test]
    fn gradient_zero_field() {
        let dom = Domain::unit_square(8).unwrap();
        let u = ScalarField::zeros(&dom);
        assert!(u.gradient().components().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn gradient_matches_hand_assembled_stencil() {
        // Two interior nodes on (0, 3) with h = 1, u = (1, 0): cells at
        // lattice 0, 1, 2 carry differences u1-0, u2-u1, 0-u2.
        let dom = Domain::interval(2, 3.0).unwrap();
        let u = ScalarField::from_values(&dom, vec![1.0, 0.0]).unwrap();
        let g = u.gradient();
        assert_eq!(g.components(), &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn path_graph_example_convention() {
        let dom = Domain::path_graph(3).unwrap();
        let u = ScalarField::from_values(&dom, vec![1.0]).unwrap();
        let g = u.gradient();
        // Du = (u(0)-u(1), u(1)-u(2)) = (-1, 1)
        assert_eq!(g.components(), &[-1.0, 1.0]);
    }

    #[test]
    fn gradient_linearity_and_locality() {
        let dom = Domain::unit_square(6).unwrap();
        let mut rng = seeded_rng(3);
        let a = random_field(&dom, &mut rng, -1.0, 1.0);
        let b = ScalarField::from_fn(&dom, |x, y| x - y * y);
        let lin = a.scaled(2.5).plus(&b.scaled(-1.5));
        let g1 = lin.gradient();
        let mut manual = a.gradient().components().to_vec();
        for (m, gb) in manual.iter_mut().zip(b.gradient().components()) {
            *m = 2.5 * *m - 1.5 * gb;
        }
        for (x, y) in g1.components().iter().zip(&manual) {
            assert!((x - y).abs() < 1e-12);
        }
        // Locality: constant field has zero gradient on inner cells only.
        let c = ScalarField::from_fn(&dom, |_, _| 1.0);
        let gc = c.gradient();
        for &ci in dom.interior_cells() {
            let cell = dom.cells()[ci];
            if cell.nbr[0] >= 0 && cell.nbr[1] >= 0 {
                assert_eq!(gc.cell(ci), &[0.0, 0.0]);
            }
        }
    }

    #[test]
    fn quadrature_examples() {
        let dom = Domain::interval(999, 1.0).unwrap();
        let u = ScalarField::from_fn(&dom, |x, _| x * (1.0 - x));
        assert!((u.integrate() - 1.0 / 6.0).abs() < 1e-5);

        let ones = ScalarField::from_fn(&dom, |_, _| 1.0);
        assert!((ones.integrate() - dom.measure()).abs() < 1e-12);
    }

    #[test]
    fn level_set_examples() {
        let dom = Domain::interval(99, 1.0).unwrap();
        let zero = ScalarField::zeros(&dom);
        assert_eq!(zero.level_set_measure(1.0), 0.0);
        let two = ScalarField::from_fn(&dom, |_, _| 2.0);
        assert!((two.level_set_measure(1.0) - dom.measure()).abs() < 1e-12);
        let ramp = ScalarField::from_fn(&dom, |x, _| x);
        let m = ramp.level_set_measure(0.5);
        assert!((m - 0.5).abs() <= dom.spacing() + 1e-12, "measure {m}");
    }

    #[test]
    fn chebyshev_inequality_exact() {
        let dom = Domain::unit_square(12).unwrap();
        let mut rng = seeded_rng(5);
        let u = random_field(&dom, &mut rng, 0.0, 2.0);
        for q in [1.0, 2.0, 3.0] {
            for (lvl, k) in [(0.2, 0.9), (0.5, 1.5), (1.0, 1.2)] {
                let lhs = u.level_set_measure(k);
                let rhs = u.excess(lvl).map(|v| v.powf(q)).integrate()
                    / (k - lvl).powf(q);
                assert!(lhs <= rhs + 1e-12, "q={q} lvl={lvl} k={k}");
            }
        }
    }

    #[test]
    fn div_transpose_is_adjoint() {
        let dom = Domain::l_shape(7).unwrap();
        let mut rng = seeded_rng(9);
        let u = random_field(&dom, &mut rng, -1.0, 1.0);
        let xi: Vec<f64> = (0..dom.num_cells() * dom.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let g = u.gradient();
        let lhs: f64 = g.components().iter().zip(&xi).map(|(a, b)| a * b).sum();
        let dt = dom.div_transpose(&xi);
        let rhs: f64 = u.values().iter().zip(&dt).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn norm_triangle_and_homogeneity() {
        let dom = Domain::interval(40, 2.0).unwrap();
        let mut rng = seeded_rng(21);
        for p in [1.0, 1.5, 2.0, 3.0] {
            for _ in 0..50 {
                let a = random_field(&dom, &mut rng, -1.0, 1.0);
                let b = random_field(&dom, &mut rng, -1.0, 1.0);
                let s: f64 = rng.random_range(0.0..3.0);
                assert!(
                    a.plus(&b).norm_p(p) <= a.norm_p(p) + b.norm_p(p) + 1e-12,
                    "triangle p={p}"
                );
                assert!(
                    (a.scaled(s).norm_p(p) - s * a.norm_p(p)).abs()
                        <= 1e-10 * (1.0 + a.norm_p(p)),
                    "homogeneity p={p}"
                );
            }
        }
    }

    #[test]
    fn disk_and_lshape_masks() {
        let disk = Domain::disk(1.0, 1.0 / 16.0).unwrap();
        assert!(disk.is_connected());
        // Mask measure approximates pi within a few percent at this h.
        assert!((disk.measure() - std::f64::consts::PI).abs() < 0.15);
        // Full dihedral symmetry group of the square lattice disk.
        assert_eq!(disk.symmetries().len(), 8);

        let l = Domain::l_shape(9).unwrap();
        assert!(l.is_connected());
        // Identity and the diagonal swap survive.
        assert_eq!(l.symmetries().len(), 2);
    }

    #[test]
    fn csv_round_trip_1d_and_2d() {
        let dom = Domain::interval(7, 1.0).unwrap();
        let u = ScalarField::from_fn(&dom, |x, _| (3.0 * x).sin());
        let text = u.to_csv_string();
        let v = ScalarField::read_csv(&text).unwrap();
        assert_eq!(u.values(), v.values());
        assert_eq!(v.domain().kind(), dom.kind());

        let dom2 = Domain::disk(0.5, 0.1).unwrap();
        let w = ScalarField::from_fn(&dom2, |x, y| x + 2.0 * y);
        let text2 = w.to_csv_string();
        let w2 = ScalarField::read_csv(&text2).unwrap();
        assert_eq!(w.values(), w2.values());
        assert_eq!(w2.domain().num_nodes(), dom2.num_nodes());
    }

    #[test]
    fn rectangle_spacing_mismatch_rejected() {
        assert!(Domain::rectangle(10, 10, 1.0, 2.0).is_err());
        assert!(Domain::rectangle(10, 21, 1.0, 2.0).is_ok());
    }
}
