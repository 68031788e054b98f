//! Patch geometry, multi-patch domains, interface topology and the
//! classification of local coefficients into Dirichlet / interior / interface /
//! primal sets.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::splines::{make_space, SplineSpace1D};

pub type Point = [f64; 2];

/// Patch side in the parameter domain; `West` is `ξ = 0`, `South` is `η = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Parameter point at position `t ∈ [0, 1]` along the side.
    pub fn param(self, t: f64) -> (f64, f64) {
        match self {
            Side::West => (0.0, t),
            Side::East => (1.0, t),
            Side::South => (t, 0.0),
            Side::North => (t, 1.0),
        }
    }

    /// Parameter direction running along the side (0 = ξ, 1 = η).
    pub fn tangent_direction(self) -> usize {
        match self {
            Side::West | Side::East => 1,
            Side::South | Side::North => 0,
        }
    }

    /// End corners at `t = 0` and `t = 1`.
    pub fn corners(self) -> [Corner; 2] {
        match self {
            Side::West => [Corner::SouthWest, Corner::NorthWest],
            Side::East => [Corner::SouthEast, Corner::NorthEast],
            Side::South => [Corner::SouthWest, Corner::SouthEast],
            Side::North => [Corner::NorthWest, Corner::NorthEast],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Corner {
    SouthWest,
    SouthEast,
    NorthWest,
    NorthEast,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::SouthWest, Corner::SouthEast, Corner::NorthWest, Corner::NorthEast];

    pub fn param(self) -> (f64, f64) {
        match self {
            Corner::SouthWest => (0.0, 0.0),
            Corner::SouthEast => (1.0, 0.0),
            Corner::NorthWest => (0.0, 1.0),
            Corner::NorthEast => (1.0, 1.0),
        }
    }

    pub fn sides(self) -> [Side; 2] {
        match self {
            Corner::SouthWest => [Side::West, Side::South],
            Corner::SouthEast => [Side::East, Side::South],
            Corner::NorthWest => [Side::West, Side::North],
            Corner::NorthEast => [Side::East, Side::North],
        }
    }
}

/// Geometry map `G_k : (0,1)² → Ω^(k)`.
#[derive(Clone, Debug, PartialEq)]
pub enum GeometryMap {
    /// Corners in the order SW, SE, NW, NE.
    Bilinear { corners: [Point; 4] },
    /// `(ξ, η) ↦ ρ(ξ)(cos φ(η), sin φ(η))` with `ρ`, `φ` affine.
    AnnulusSector { r_in: f64, r_out: f64, theta0: f64, theta1: f64 },
}

impl GeometryMap {
    pub fn eval(&self, xi: f64, eta: f64) -> Point {
        match *self {
            GeometryMap::Bilinear { corners: c } => {
                let w = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), (1.0 - xi) * eta, xi * eta];
                let mut p = [0.0; 2];
                for (wk, ck) in w.iter().zip(&c) {
                    p[0] += wk * ck[0];
                    p[1] += wk * ck[1];
                }
                p
            }
            GeometryMap::AnnulusSector { r_in, r_out, theta0, theta1 } => {
                let rho = r_in + xi * (r_out - r_in);
                let phi = theta0 + eta * (theta1 - theta0);
                [rho * phi.cos(), rho * phi.sin()]
            }
        }
    }

    /// `J[i][j] = ∂x_i / ∂ξ_j`.
    pub fn jacobian(&self, xi: f64, eta: f64) -> [[f64; 2]; 2] {
        match *self {
            GeometryMap::Bilinear { corners: c } => {
                let dxi = [-(1.0 - eta), 1.0 - eta, -eta, eta];
                let deta = [-(1.0 - xi), -xi, 1.0 - xi, xi];
                let mut j = [[0.0; 2]; 2];
                for k in 0..4 {
                    for i in 0..2 {
                        j[i][0] += dxi[k] * c[k][i];
                        j[i][1] += deta[k] * c[k][i];
                    }
                }
                j
            }
            GeometryMap::AnnulusSector { r_in, r_out, theta0, theta1 } => {
                let rho = r_in + xi * (r_out - r_in);
                let phi = theta0 + eta * (theta1 - theta0);
                let (drho, dphi) = (r_out - r_in, theta1 - theta0);
                [
                    [drho * phi.cos(), -rho * dphi * phi.sin()],
                    [drho * phi.sin(), rho * dphi * phi.cos()],
                ]
            }
        }
    }

    pub fn det_jacobian(&self, xi: f64, eta: f64) -> f64 {
        let j = self.jacobian(xi, eta);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    fn boundary_samples(&self, per_side: usize) -> Vec<Point> {
        let mut pts = Vec::with_capacity(4 * per_side);
        for side in Side::ALL {
            for s in 0..=per_side {
                let (xi, eta) = side.param(s as f64 / per_side as f64);
                pts.push(self.eval(xi, eta));
            }
        }
        pts
    }

    /// Patch diameter `H_k`, estimated from boundary samples.
    pub fn diameter(&self) -> f64 {
        let pts = self.boundary_samples(16);
        let mut d: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                d = d.max(dist(a, b));
            }
        }
        d
    }

    /// Smallest `C` with `‖∇G‖ ≤ C H` and `‖∇G⁻¹‖ ≤ C / H` over a `samples × samples` grid.
    pub fn regularity_constant(&self, samples: usize) -> f64 {
        let h = self.diameter();
        let mut c: f64 = 0.0;
        for a in 0..=samples {
            for b in 0..=samples {
                let (s_max, s_min) = singular_values(self.jacobian(a as f64 / samples as f64, b as f64 / samples as f64));
                c = c.max(s_max / h).max(h / s_min);
            }
        }
        c
    }
}

fn singular_values(j: [[f64; 2]; 2]) -> (f64, f64) {
    let (a, b, c, d) = (j[0][0], j[0][1], j[1][0], j[1][1]);
    let s1 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((s1 + disc) / 2.0).sqrt();
    let smin = ((s1 - disc) / 2.0).max(0.0).sqrt();
    (smax, smin)
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Geometry of one patch before discretization, with the number of extra
/// level-0 interior knots per parameter direction.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGeometry {
    pub map: GeometryMap,
    pub extra_inner: [usize; 2],
}

/// A named multi-patch layout, discretized on demand for a given `(p, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub name: String,
    pub patches: Vec<PatchGeometry>,
}

impl Domain {
    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn discretize(&self, p: usize, r: usize) -> Result<MultiPatch> {
        let patches = self
            .patches
            .iter()
            .map(|g| {
                Ok(Patch {
                    map: g.map.clone(),
                    spaces: [make_space(p, r, g.extra_inner[0])?, make_space(p, r, g.extra_inner[1])?],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MultiPatch::new(patches)
    }
}

/// Mapped tensor-product spline patch; coefficient `(i, j)` sits at `i * n_η + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub map: GeometryMap,
    pub spaces: [SplineSpace1D; 2],
}

impl Patch {
    pub fn dims(&self) -> [usize; 2] {
        [self.spaces[0].dim(), self.spaces[1].dim()]
    }

    pub fn num_coefs(&self) -> usize {
        self.spaces[0].dim() * self.spaces[1].dim()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.spaces[1].dim() + j
    }

    /// Tensor indices of the coefficients on `side`, ordered by increasing side parameter.
    pub fn side_indices(&self, side: Side) -> Vec<usize> {
        let [nx, ny] = self.dims();
        match side {
            Side::West => (0..ny).map(|j| self.index(0, j)).collect(),
            Side::East => (0..ny).map(|j| self.index(nx - 1, j)).collect(),
            Side::South => (0..nx).map(|i| self.index(i, 0)).collect(),
            Side::North => (0..nx).map(|i| self.index(i, ny - 1)).collect(),
        }
    }

    pub fn corner_index(&self, corner: Corner) -> usize {
        let [nx, ny] = self.dims();
        match corner {
            Corner::SouthWest => self.index(0, 0),
            Corner::SouthEast => self.index(nx - 1, 0),
            Corner::NorthWest => self.index(0, ny - 1),
            Corner::NorthEast => self.index(nx - 1, ny - 1),
        }
    }

    pub fn corner_point(&self, corner: Corner) -> Point {
        let (xi, eta) = corner.param();
        self.map.eval(xi, eta)
    }

    pub fn side_point(&self, side: Side, t: f64) -> Point {
        let (xi, eta) = side.param(t);
        self.map.eval(xi, eta)
    }

    /// Evaluates the spline with tensor coefficients `coefs` at `(ξ, η)`.
    pub fn evaluate(&self, coefs: &[f64], xi: f64, eta: f64) -> Result<f64> {
        let bx = self.spaces[0].eval_basis(xi, 0)?;
        let by = self.spaces[1].eval_basis(eta, 0)?;
        let mut s = 0.0;
        for (a, vx) in bx.values.iter().enumerate() {
            for (b, vy) in by.values.iter().enumerate() {
                s += vx * vy * coefs[self.index(bx.first + a, by.first + b)];
            }
        }
        Ok(s)
    }
}

/// Patches plus the set of Dirichlet sides (all outer sides).
#[derive(Clone, Debug)]
pub struct MultiPatch {
    patches: Vec<Patch>,
    dirichlet: BTreeSet<(usize, Side)>,
    topology: Topology,
}

/// Default relative coincidence tolerance for corners and sides.
pub const MATCH_TOL: f64 = 1e-8;

impl MultiPatch {
    /// Detects interfaces and marks every unmatched side Dirichlet.
    pub fn new(patches: Vec<Patch>) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::Geometry("a domain needs at least one patch".into()));
        }
        let topology = detect_topology(&patches, MATCH_TOL)?;
        let mut dirichlet: BTreeSet<(usize, Side)> =
            (0..patches.len()).flat_map(|k| Side::ALL.map(|s| (k, s))).collect();
        for itf in &topology.interfaces {
            dirichlet.remove(&(itf.patch_a, itf.side_a));
            dirichlet.remove(&(itf.patch_b, itf.side_b));
        }
        Ok(MultiPatch {
            patches,
            dirichlet,
            topology,
        })
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn is_dirichlet(&self, patch: usize, side: Side) -> bool {
        self.dirichlet.contains(&(patch, side))
    }

    pub fn dirichlet_sides(&self) -> &BTreeSet<(usize, Side)> {
        &self.dirichlet
    }

    /// Topology detected at construction (tolerance [`MATCH_TOL`]).
    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point> = self
            .patches
            .iter()
            .flat_map(|p| Corner::ALL.map(|c| p.corner_point(c)))
            .collect();
        let mut d: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                d = d.max(dist(a, b));
            }
        }
        d.max(self.patches.iter().map(|p| p.map.diameter()).fold(0.0, f64::max))
    }

    /// Total number of coefficients over all patches, Dirichlet ones included.
    pub fn num_local_coefs(&self) -> usize {
        self.patches.iter().map(Patch::num_coefs).sum()
    }
}

/// A whole common edge between two patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interface {
    pub patch_a: usize,
    pub side_a: Side,
    pub patch_b: usize,
    pub side_b: Side,
    /// The side parameters run in opposite directions.
    pub reversed: bool,
}

/// Geometrically coincident patch corners.
#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub point: Point,
    pub corners: Vec<(usize, Corner)>,
}

impl Vertex {
    pub fn multiplicity(&self) -> usize {
        let s: BTreeSet<usize> = self.corners.iter().map(|c| c.0).collect();
        s.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub interfaces: Vec<Interface>,
    pub vertices: Vec<Vertex>,
}

/// Largest number of patches allowed to share a vertex.
pub const MAX_VERTEX_MULTIPLICITY: usize = 8;

/// Rebuilds the topology of `mp` with relative tolerance `tol`.
pub fn build_topology(mp: &MultiPatch, tol: f64) -> Result<Topology> {
    detect_topology(&mp.patches, tol)
}

/// `[x_min, y_min, x_max, y_max]` of sampled side points, widened by `margin`.
fn side_box(patch: &Patch, side: Side, margin: f64) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for s in 0..=16 {
        let q = patch.side_point(side, s as f64 / 16.0);
        b = [b[0].min(q[0]), b[1].min(q[1]), b[2].max(q[0]), b[3].max(q[1])];
    }
    [b[0] - margin, b[1] - margin, b[2] + margin, b[3] + margin]
}

fn boxes_overlap(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

fn distance_to_side(patch: &Patch, side: Side, q: &Point) -> f64 {
    const N: usize = 64;
    let f = |t: f64| dist(&patch.side_point(side, t), q);
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for s in 0..=N {
        let t = s as f64 / N as f64;
        let d = f(t);
        if d < best {
            best = d;
            best_t = t;
        }
    }
    // golden-section refinement on the bracketing interval
    let (mut a, mut b) = ((best_t - 1.0 / N as f64).max(0.0), (best_t + 1.0 / N as f64).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.min(f(0.5 * (a + b)))
}

fn detect_topology(patches: &[Patch], tol: f64) -> Result<Topology> {
    let diams: Vec<f64> = patches.iter().map(|p| p.map.diameter()).collect();
    let boxes: Vec<[[f64; 4]; 4]> =
        patches.iter().zip(&diams).map(|(p, &d)| Side::ALL.map(|s| side_box(p, s, 0.05 * d))).collect();
    let mut interfaces = Vec::new();
    let mut used: BTreeSet<(usize, Side)> = BTreeSet::new();
    const SAMPLES: usize = 8;
    for a in 0..patches.len() {
        for b in a + 1..patches.len() {
            let eps = tol * diams[a].min(diams[b]);
            for sa in Side::ALL {
                let (a0, a1) = (patches[a].side_point(sa, 0.0), patches[a].side_point(sa, 1.0));
                for sb in Side::ALL {
                    let (b0, b1) = (patches[b].side_point(sb, 0.0), patches[b].side_point(sb, 1.0));
                    let reversed = if dist(&a0, &b0) < eps && dist(&a1, &b1) < eps {
                        Some(false)
                    } else if dist(&a0, &b1) < eps && dist(&a1, &b0) < eps {
                        Some(true)
                    } else {
                        None
                    };
                    match reversed {
                        Some(rev) => {
                            for s in 1..SAMPLES {
                                let t = s as f64 / SAMPLES as f64;
                                let tb = if rev { 1.0 - t } else { t };
                                if dist(&patches[a].side_point(sa, t), &patches[b].side_point(sb, tb)) >= eps {
                                    return Err(Error::Topology(format!(
                                        "patches {a}/{b}: sides {sa:?}/{sb:?} share endpoints but not their parameterization"
                                    )));
                                }
                            }
                            for key in [(a, sa), (b, sb)] {
                                if !used.insert(key) {
                                    return Err(Error::Topology(format!(
                                        "side {:?} of patch {} matches more than one side",
                                        key.1, key.0
                                    )));
                                }
                            }
                            check_matching_spaces(patches, a, sa, b, sb, rev)?;
                            interfaces.push(Interface {
                                patch_a: a,
                                side_a: sa,
                                patch_b: b,
                                side_b: sb,
                                reversed: rev,
                            });
                        }
                        None if !boxes_overlap(&boxes[a][sa.index()], &boxes[b][sb.index()]) => {}
                        None => {
                            // an interior point of one side lying on the other is a partial overlap
                            for s in 1..SAMPLES {
                                let t = s as f64 / SAMPLES as f64;
                                let on_a = distance_to_side(&patches[a], sa, &patches[b].side_point(sb, t)) < eps;
                                let on_b = distance_to_side(&patches[b], sb, &patches[a].side_point(sa, t)) < eps;
                                if on_a || on_b {
                                    return Err(Error::Topology(format!(
                                        "patches {a}/{b}: sides {sa:?}/{sb:?} overlap partially"
                                    )));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let diam_all = {
        let pts: Vec<Point> = patches.iter().flat_map(|p| Corner::ALL.map(|c| p.corner_point(c))).collect();
        let mut d: f64 = 0.0;
        for (i, x) in pts.iter().enumerate() {
            for y in &pts[i + 1..] {
                d = d.max(dist(x, y));
            }
        }
        d.max(diams.iter().cloned().fold(0.0, f64::max))
    };
    let eps_v = tol * diam_all;
    let mut vertices: Vec<Vertex> = Vec::new();
    for (k, patch) in patches.iter().enumerate() {
        for c in Corner::ALL {
            let pt = patch.corner_point(c);
            match vertices.iter_mut().find(|v| dist(&v.point, &pt) < eps_v) {
                Some(v) => v.corners.push((k, c)),
                None => vertices.push(Vertex {
                    point: pt,
                    corners: vec![(k, c)],
                }),
            }
        }
    }
    if let Some(v) = vertices.iter().find(|v| v.multiplicity() > MAX_VERTEX_MULTIPLICITY) {
        return Err(Error::Topology(format!(
            "{} patches share the vertex at {:?}",
            v.multiplicity(),
            v.point
        )));
    }
    Ok(Topology { interfaces, vertices })
}

fn check_matching_spaces(patches: &[Patch], a: usize, sa: Side, b: usize, sb: Side, reversed: bool) -> Result<()> {
    let ka = patches[a].spaces[sa.tangent_direction()].knot_vector();
    let kb = patches[b].spaces[sb.tangent_direction()].knot_vector();
    let matches = ka.degree() == kb.degree()
        && ka.knots().len() == kb.knots().len()
        && if reversed {
            ka.knots().iter().zip(kb.knots().iter().rev()).all(|(x, y)| (x - (1.0 - y)).abs() < 1e-14)
        } else {
            ka.knots() == kb.knots()
        };
    if matches {
        Ok(())
    } else {
        Err(Error::Topology(format!(
            "patches {a}/{b}: knot vectors differ along sides {sa:?}/{sb:?}"
        )))
    }
}

/// Role of a local coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    Dirichlet,
    Interior,
    /// Interface coefficient that is not a primal corner.
    Interface,
    /// Corner coefficient at a non-Dirichlet vertex.
    Primal,
}

/// Index sets of one patch. Positions in `interior`, `gamma`, `primal` and
/// `delta` refer to the free (non-Dirichlet) numbering.
#[derive(Clone, Debug)]
pub struct PatchDofs {
    pub dims: [usize; 2],
    pub kinds: Vec<DofKind>,
    /// Tensor index of each free coefficient, increasing.
    pub free: Vec<usize>,
    /// Tensor index → free position.
    pub free_pos: Vec<Option<usize>>,
    pub interior: Vec<usize>,
    /// Non-Dirichlet coefficients with non-vanishing trace (primal corners included).
    pub gamma: Vec<usize>,
    pub primal: Vec<usize>,
    /// Global primal id of each local primal coefficient (`R_c`).
    pub primal_global: Vec<usize>,
    pub delta: Vec<usize>,
    pub dirichlet_sides: [bool; 4],
}

impl PatchDofs {
    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn count(&self, kind: DofKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Free position → position in `delta`, `None` for primal coefficients.
    pub fn delta_map(&self) -> Vec<Option<usize>> {
        let mut m = vec![None; self.num_free()];
        for (d, &f) in self.delta.iter().enumerate() {
            m[f] = Some(d);
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct DofClassification {
    pub patches: Vec<PatchDofs>,
    pub num_primal: usize,
    /// Vertex id (into `Topology::vertices`) of each global primal dof.
    pub primal_vertices: Vec<usize>,
}

pub fn classify_dofs(mp: &MultiPatch, topo: &Topology) -> DofClassification {
    let dirichlet_vertex: Vec<bool> = topo
        .vertices
        .iter()
        .map(|v| v.corners.iter().any(|&(k, c)| c.sides().iter().any(|&s| mp.is_dirichlet(k, s))))
        .collect();
    let mut primal_vertices = Vec::new();
    let mut primal_id = vec![usize::MAX; topo.vertices.len()];
    for (vid, v) in topo.vertices.iter().enumerate() {
        if !dirichlet_vertex[vid] && !v.corners.is_empty() {
            primal_id[vid] = primal_vertices.len();
            primal_vertices.push(vid);
        }
    }
    let mut corner_vertex = vec![[usize::MAX; 4]; mp.num_patches()];
    for (vid, v) in topo.vertices.iter().enumerate() {
        for &(k, c) in &v.corners {
            corner_vertex[k][c as usize] = vid;
        }
    }
    let patches = mp
        .patches()
        .iter()
        .enumerate()
        .map(|(k, patch)| {
            let [nx, ny] = patch.dims();
            let dsides = Side::ALL.map(|s| mp.is_dirichlet(k, s));
            let mut kinds = Vec::with_capacity(nx * ny);
            let mut primal_corner = Vec::new();
            for i in 0..nx {
                for j in 0..ny {
                    let on = [i == 0, i == nx - 1, j == 0, j == ny - 1];
                    let kind = if (0..4).any(|s| on[s] && dsides[s]) {
                        DofKind::Dirichlet
                    } else if (on[0] || on[1]) && (on[2] || on[3]) {
                        let corner = match (on[1], on[3]) {
                            (false, false) => Corner::SouthWest,
                            (true, false) => Corner::SouthEast,
                            (false, true) => Corner::NorthWest,
                            (true, true) => Corner::NorthEast,
                        };
                        let vid = corner_vertex[k][corner as usize];
                        if dirichlet_vertex[vid] {
                            DofKind::Dirichlet
                        } else {
                            primal_corner.push((patch.index(i, j), primal_id[vid]));
                            DofKind::Primal
                        }
                    } else if on.iter().any(|&b| b) {
                        DofKind::Interface
                    } else {
                        DofKind::Interior
                    };
                    kinds.push(kind);
                }
            }
            let mut free = Vec::new();
            let mut free_pos = vec![None; kinds.len()];
            let (mut interior, mut gamma, mut primal, mut delta) = (vec![], vec![], vec![], vec![]);
            for (t, &kind) in kinds.iter().enumerate() {
                if kind == DofKind::Dirichlet {
                    continue;
                }
                let f = free.len();
                free_pos[t] = Some(f);
                free.push(t);
                match kind {
                    DofKind::Interior => {
                        interior.push(f);
                        delta.push(f);
                    }
                    DofKind::Interface => {
                        gamma.push(f);
                        delta.push(f);
                    }
                    DofKind::Primal => {
                        gamma.push(f);
                        primal.push(f);
                    }
                    DofKind::Dirichlet => unreachable!(),
                }
            }
            // primal corners were pushed in tensor order, matching `primal`
            let primal_global = primal_corner.iter().map(|&(_, g)| g).collect();
            PatchDofs {
                dims: [nx, ny],
                kinds,
                free,
                free_pos,
                interior,
                gamma,
                primal,
                primal_global,
                delta,
                dirichlet_sides: dsides,
            }
        })
        .collect();
    DofClassification {
        patches,
        num_primal: primal_vertices.len(),
        primal_vertices,
    }
}

/// Numbering of the conforming global space: every free local coefficient is
/// mapped to a global index, with matched interface coefficients identified.
#[derive(Clone, Debug)]
pub struct GlobalNumbering {
    /// `map[k][t]` is the global index of tensor coefficient `t` of patch `k`.
    pub map: Vec<Vec<Option<usize>>>,
    pub num_dofs: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn global_numbering(mp: &MultiPatch, topo: &Topology, dofs: &DofClassification) -> GlobalNumbering {
    let offsets: Vec<usize> = mp
        .patches()
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.num_coefs();
            Some(o)
        })
        .collect();
    let total = mp.num_local_coefs();
    let mut parent: Vec<usize> = (0..total).collect();
    let union = |x: usize, y: usize, parent: &mut Vec<usize>| {
        let (rx, ry) = (find(parent, x), find(parent, y));
        if rx != ry {
            parent[rx.max(ry)] = rx.min(ry);
        }
    };
    for itf in &topo.interfaces {
        let ia = mp.patches()[itf.patch_a].side_indices(itf.side_a);
        let mut ib = mp.patches()[itf.patch_b].side_indices(itf.side_b);
        if itf.reversed {
            ib.reverse();
        }
        for (x, y) in ia.iter().zip(&ib) {
            union(offsets[itf.patch_a] + x, offsets[itf.patch_b] + y, &mut parent);
        }
    }
    for v in &topo.vertices {
        let (k0, c0) = v.corners[0];
        for &(k, c) in &v.corners[1..] {
            union(
                offsets[k0] + mp.patches()[k0].corner_index(c0),
                offsets[k] + mp.patches()[k].corner_index(c),
                &mut parent,
            );
        }
    }
    let mut id = vec![usize::MAX; total];
    let mut num_dofs = 0;
    let mut map = Vec::with_capacity(mp.num_patches());
    for (k, pd) in dofs.patches.iter().enumerate() {
        let mut m = vec![None; pd.kinds.len()];
        for (t, slot) in m.iter_mut().enumerate() {
            if pd.kinds[t] == DofKind::Dirichlet {
                continue;
            }
            let root = find(&mut parent, offsets[k] + t);
            if id[root] == usize::MAX {
                id[root] = num_dofs;
                num_dofs += 1;
            }
            *slot = Some(id[root]);
        }
        map.push(m);
    }
    GlobalNumbering { map, num_dofs }
}

fn bilinear_patch(x0: f64, x1: f64, y0: f64, y1: f64) -> GeometryMap {
    GeometryMap::Bilinear {
        corners: [[x0, y0], [x1, y0], [x0, y1], [x1, y1]],
    }
}

/// Quarter annulus split into `n_radial × n_angular` polar patches.
pub fn quarter_annulus(n_radial: usize, n_angular: usize, r_in: f64, r_out: f64) -> Result<Domain> {
    if n_radial == 0 || n_angular == 0 {
        return Err(Error::Parameter("patch counts must be positive".into()));
    }
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::Parameter(format!("invalid radii {r_in}, {r_out}")));
    }
    let dr = (r_out - r_in) / n_radial as f64;
    let dphi = FRAC_PI_2 / n_angular as f64;
    let mut patches = Vec::with_capacity(n_radial * n_angular);
    for i in 0..n_radial {
        for j in 0..n_angular {
            patches.push(PatchGeometry {
                map: GeometryMap::AnnulusSector {
                    r_in: r_in + i as f64 * dr,
                    r_out: r_in + (i + 1) as f64 * dr,
                    theta0: j as f64 * dphi,
                    theta1: (j + 1) as f64 * dphi,
                },
                extra_inner: [0, 0],
            });
        }
    }
    Ok(Domain {
        name: format!("annulus{}", n_radial * n_angular),
        patches,
    })
}

/// `m × m` affine patches tiling the unit square.
pub fn unit_square_grid(m: usize) -> Result<Domain> {
    if m < 1 {
        return Err(Error::Parameter("grid size must be at least 1".into()));
    }
    let h = 1.0 / m as f64;
    let mut patches = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            patches.push(PatchGeometry {
                map: bilinear_patch(i as f64 * h, (i + 1) as f64 * h, j as f64 * h, (j + 1) as f64 * h),
                extra_inner: [0, 0],
            });
        }
    }
    Ok(Domain {
        name: format!("square{m}x{m}"),
        patches,
    })
}

/// Built-in non-convex layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FootprintLayout {
    /// Three unit blocks of 2×2 square patches forming an L.
    LShape12,
    /// A warped 25-patch foot: narrow heel, a notched arch of elongated
    /// patches carrying one extra inner knot, and three separated toes.
    Footprint25,
}

/// Cells of a tensor grid with column widths and row heights; a boolean mask
/// selects the active cells. Returns patches in column-major cell order.
fn masked_grid(widths: &[f64], heights: &[f64], active: impl Fn(usize, usize) -> bool, warp: impl Fn(Point) -> Point) -> Vec<PatchGeometry> {
    let xs: Vec<f64> = std::iter::once(0.0).chain(widths.iter().scan(0.0, |a, w| { *a += w; Some(*a) })).collect();
    let ys: Vec<f64> = std::iter::once(0.0).chain(heights.iter().scan(0.0, |a, h| { *a += h; Some(*a) })).collect();
    let mut patches = Vec::new();
    for cx in 0..widths.len() {
        for cy in 0..heights.len() {
            if !active(cx, cy) {
                continue;
            }
            let corners = [
                warp([xs[cx], ys[cy]]),
                warp([xs[cx + 1], ys[cy]]),
                warp([xs[cx], ys[cy + 1]]),
                warp([xs[cx + 1], ys[cy + 1]]),
            ];
            let (w, h) = (widths[cx], heights[cy]);
            patches.push(PatchGeometry {
                map: GeometryMap::Bilinear { corners },
                extra_inner: [usize::from(w >= 2.0 * h), usize::from(h >= 2.0 * w)],
            });
        }
    }
    patches
}

pub fn footprint_like(layout: FootprintLayout) -> Result<Domain> {
    match layout {
        FootprintLayout::LShape12 => Ok(Domain {
            name: "lshape12".into(),
            patches: masked_grid(&[0.5; 4], &[0.5; 4], |cx, cy| cx < 2 || cy < 2, |p| p),
        }),
        FootprintLayout::Footprint25 => {
            let heights = [1.0, 1.0, 2.0, 2.0, 1.0, 1.0];
            let active = |cx: usize, cy: usize| match cy {
                0 => (1..=3).contains(&cx),
                3 => cx >= 1,
                5 => cx % 2 == 0,
                _ => true,
            };
            // gentle smooth warp; keeps every bilinear cell convex
            let warp = |p: Point| {
                let (x, y) = (p[0] / 5.0, p[1] / 8.0);
                [
                    0.2 * (p[0] + 0.4 * (std::f64::consts::PI * y).sin()),
                    0.2 * (p[1] + 0.3 * (std::f64::consts::PI * x).sin()),
                ]
            };
            Ok(Domain {
                name: "footprint".into(),
                patches: masked_grid(&[1.0; 5], &heights, active, warp),
            })
        }
    }
}

/// Domain catalog addressable by name.
pub fn catalog(name: &str) -> Result<Domain> {
    match name {
        "annulus32" => quarter_annulus(4, 8, 1.0, 2.0),
        "square1x1" => unit_square_grid(1),
        "square2x2" => unit_square_grid(2),
        "square4x4" => unit_square_grid(4),
        "lshape12" => footprint_like(FootprintLayout::LShape12),
        "footprint" => footprint_like(FootprintLayout::Footprint25),
        other => Err(Error::Parameter(format!("unknown domain '{other}'"))),
    }
}

pub const CATALOG: [&str; 6] = ["annulus32", "square1x1", "square2x2", "square4x4", "lshape12", "footprint"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_patch_square() {
        let mp = catalog("square1x1").unwrap().discretize(2, 1).unwrap();
        assert!(mp.topology().interfaces.is_empty());
        assert_eq!(mp.dirichlet_sides().len(), 4);
        let c = classify_dofs(&mp, mp.topology());
        assert_eq!(c.num_primal, 0);
        assert!(c.patches[0].gamma.is_empty());
        assert_eq!(c.patches[0].num_free(), 4);
        assert_eq!(mp.patches()[0].map.eval(0.25, 0.75), [0.25, 0.75]);
    }

    #[test]
    fn grid_combinatorics() {
        let mp = catalog("square2x2").unwrap().discretize(1, 0).unwrap();
        assert_eq!(mp.num_patches(), 4);
        assert_eq!(mp.topology().interfaces.len(), 4);
        assert!(mp.topology().interfaces.iter().all(|i| !i.reversed));
        let mp3 = unit_square_grid(3).unwrap().discretize(1, 0).unwrap();
        assert_eq!(mp3.topology().interfaces.len(), 12);
        let c = classify_dofs(&mp3, mp3.topology());
        assert_eq!(c.num_primal, 4);
    }

    #[test]
    fn invalid_domains() {
        assert!(quarter_annulus(4, 8, 2.0, 1.0).is_err());
        assert!(quarter_annulus(4, 8, 0.0, 1.0).is_err());
        assert!(unit_square_grid(0).is_err());
        assert!(catalog("yeti").is_err());
    }

    #[test]
    fn partial_overlap_rejected() {
        let p = |x0, x1, y0, y1| Patch {
            map: bilinear_patch(x0, x1, y0, y1),
            spaces: [make_space(1, 0, 0).unwrap(), make_space(1, 0, 0).unwrap()],
        };
        // a T-junction: the east side of the first patch spans two patches
        let err = MultiPatch::new(vec![p(0.0, 1.0, 0.0, 2.0), p(1.0, 2.0, 0.0, 1.0), p(1.0, 2.0, 1.0, 2.0)]);
        assert!(matches!(err, Err(Error::Topology(_))), "{err:?}");
    }

    #[test]
    fn non_matching_knots_rejected() {
        let mk = |x0: f64, x1: f64, extra| Patch {
            map: bilinear_patch(x0, x1, 0.0, 1.0),
            spaces: [make_space(2, 1, 0).unwrap(), make_space(2, 1, extra).unwrap()],
        };
        assert!(MultiPatch::new(vec![mk(0.0, 1.0, 0), mk(1.0, 2.0, 1)]).is_err());
    }

    #[test]
    fn reversed_orientation_detected() {
        let a = Patch {
            map: bilinear_patch(0.0, 1.0, 0.0, 1.0),
            spaces: [make_space(2, 1, 0).unwrap(), make_space(2, 1, 0).unwrap()],
        };
        // second patch rotated by 180 degrees in parameter space
        let b = Patch {
            map: GeometryMap::Bilinear {
                corners: [[2.0, 1.0], [1.0, 1.0], [2.0, 0.0], [1.0, 0.0]],
            },
            spaces: a.spaces.clone(),
        };
        let mp = MultiPatch::new(vec![a, b]).unwrap();
        let itf = mp.topology().interfaces[0];
        assert!(mp.patches()[1].map.det_jacobian(0.5, 0.5) > 0.0);
        assert_eq!((itf.side_a, itf.side_b, itf.reversed), (Side::East, Side::East, true));
    }
}
