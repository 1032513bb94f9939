//! Tetrahedral template meshes and the graph machinery built on top of them.
//!
//! A [`TetMesh`] owns the rest positions and tetrahedra of a template. On
//! construction every tet is oriented to positive signed volume, the
//! boundary triangles are extracted (faces used by exactly one tet) and two
//! weighted graphs are derived: the full tet edge graph, used for
//! partitioning the volume, and the surface edge graph, used for geodesic
//! farthest point sampling.

mod fixtures;
mod graph;
pub mod medit;
mod targets;

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use graph::{shortest_paths, Graph, ShortestPaths};
pub use targets::{
    generate_bend_targets, read_target_dir, read_xyz, write_xyz, BendTargets, Hinge, TargetSet,
};

pub type Vec3 = [f64; 3];

pub(crate) mod geom {
    use super::Vec3;

    #[inline]
    pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn add(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn scale(a: Vec3, s: f64) -> Vec3 {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    #[inline]
    pub fn dot(a: Vec3, b: Vec3) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    #[inline]
    pub fn norm(a: Vec3) -> f64 {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn dist(a: Vec3, b: Vec3) -> f64 {
        norm(sub(a, b))
    }

    /// Six times the signed volume of the tet `(p0, p1, p2, p3)`.
    #[inline]
    pub fn det6(p0: Vec3, p1: Vec3, p2: Vec3, p3: Vec3) -> f64 {
        dot(sub(p1, p0), cross(sub(p2, p0), sub(p3, p0)))
    }
}

/// Outward-facing faces of a positively oriented tet, one per opposite corner.
pub(crate) const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

pub(crate) const TET_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// A tetrahedral template mesh with derived surface and edge graphs.
#[derive(Debug, Clone)]
pub struct TetMesh {
    positions: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    surface_tris: Vec<[usize; 3]>,
    surface_vertices: Vec<usize>,
    edge_graph: Graph,
    surface_graph: Graph,
}

impl TetMesh {
    /// Builds a mesh from 0-based connectivity, fixing tet orientation and
    /// deriving surface and graphs.
    pub fn new(positions: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::InvalidMesh("no vertices".into()));
        }
        if tets.is_empty() {
            return Err(Error::InvalidMesh("no tetrahedra".into()));
        }
        if let Some((i, p)) = positions
            .iter()
            .enumerate()
            .find(|(_, p)| p.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!(
                "vertex {i} has non-finite coordinates {p:?}"
            )));
        }

        let diag = bbox_diagonal(&positions);
        let min_det = 6.0 * 1e-12 * diag.powi(3);
        for (t, tet) in tets.iter_mut().enumerate() {
            if let Some(&bad) = tet.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "tet {t} references vertex {bad}, but the mesh has {n} vertices"
                )));
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if tet[a] == tet[b] {
                        return Err(Error::InvalidMesh(format!(
                            "tet {t} repeats vertex {}",
                            tet[a]
                        )));
                    }
                }
            }
            let d = geom::det6(
                positions[tet[0]],
                positions[tet[1]],
                positions[tet[2]],
                positions[tet[3]],
            );
            if d.abs() <= min_det {
                return Err(Error::InvalidMesh(format!(
                    "tet {t} is degenerate (volume {:.3e})",
                    d / 6.0
                )));
            }
            if d < 0.0 {
                tet.swap(2, 3);
            }
        }

        let surface_tris = extract_surface(&tets);
        let mut on_surface = vec![false; n];
        for tri in &surface_tris {
            for &v in tri {
                on_surface[v] = true;
            }
        }
        let surface_vertices: Vec<usize> = (0..n).filter(|&v| on_surface[v]).collect();

        let tet_edges = tets
            .iter()
            .flat_map(|t| TET_EDGES.iter().map(move |e| (t[e[0]], t[e[1]])));
        let edge_graph = Graph::from_edges(&positions, tet_edges);
        if !edge_graph.is_connected() {
            return Err(Error::InvalidMesh("tet edge graph is disconnected".into()));
        }
        let tri_edges = surface_tris
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]);
        let surface_graph = Graph::from_edges(&positions, tri_edges);

        Ok(Self {
            positions,
            tets,
            surface_tris,
            surface_vertices,
            edge_graph,
            surface_graph,
        })
    }

    /// Same connectivity, new rest positions.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} positions, got {}",
                self.positions.len(),
                positions.len()
            )));
        }
        Self::new(positions, self.tets.clone())
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn surface_tris(&self) -> &[[usize; 3]] {
        &self.surface_tris
    }

    /// Ascending indices of vertices touched by a surface triangle.
    pub fn surface_vertices(&self) -> &[usize] {
        &self.surface_vertices
    }

    pub fn edge_graph(&self) -> &Graph {
        &self.edge_graph
    }

    pub fn surface_graph(&self) -> &Graph {
        &self.surface_graph
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn centroid(&self) -> Vec3 {
        centroid(&self.positions)
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.positions)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.positions)
    }

    /// Signed volume of tet `t`; positive for every tet after construction.
    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t];
        let p = &self.positions;
        geom::det6(p[a], p[b], p[c], p[d]) / 6.0
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// SHA-256 over the little-endian bytes of positions and connectivity.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.positions.len() as u64).to_le_bytes());
        for p in &self.positions {
            for c in p {
                h.update(c.to_le_bytes());
            }
        }
        h.update((self.tets.len() as u64).to_le_bytes());
        for t in &self.tets {
            for &v in t {
                h.update((v as u64).to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Translates the centroid to the origin and scales so the farthest
    /// vertex lies on the unit sphere.
    pub fn normalize_unit_sphere(&self) -> Result<(TetMesh, Similarity)> {
        let sim = Similarity::unit_sphere(&self.positions)?;
        let mesh = self.with_positions(sim.apply_all(&self.positions))?;
        Ok((mesh, sim))
    }

    /// Axis-aligned box `[0, extent]` split into `cells` cubes, each cut into
    /// six tets along its main diagonal (a conforming Kuhn triangulation).
    pub fn box_grid(cells: [usize; 3], extent: Vec3) -> Result<Self> {
        fixtures::box_grid(cells, extent)
    }
}

/// The similarity transform `x -> (x - center) * scale` used for normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub center: Vec3,
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn unit_sphere(positions: &[Vec3]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidMesh("no vertices".into()));
        }
        let center = centroid(positions);
        let radius = positions
            .iter()
            .map(|&p| geom::dist(p, center))
            .fold(0.0, f64::max);
        if !(radius > 0.0) {
            return Err(Error::InvalidMesh(
                "all vertices coincide, cannot normalize".into(),
            ));
        }
        Ok(Self {
            center,
            scale: 1.0 / radius,
        })
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        geom::scale(geom::sub(p, self.center), self.scale)
    }

    #[inline]
    pub fn invert(&self, p: Vec3) -> Vec3 {
        geom::add(geom::scale(p, 1.0 / self.scale), self.center)
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|&p| self.apply(p)).collect()
    }

    pub fn invert_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|&p| self.invert(p)).collect()
    }
}

/// An assignment of every vertex to exactly one of `K` regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    regions: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

impl Partition {
    /// Assigns each vertex to the seed nearest in the tet edge graph.
    ///
    /// Distances are shortest paths with Euclidean edge weights; a vertex
    /// equidistant from several seeds goes to the one listed first.
    pub fn by_proximity(mesh: &TetMesh, seeds: &[usize]) -> Result<Self> {
        validate_seeds(seeds, mesh.num_vertices())?;
        let sp = shortest_paths(mesh.edge_graph(), seeds);
        let mut regions = vec![Vec::new(); seeds.len()];
        for (v, &l) in sp.labels.iter().enumerate() {
            regions[l].push(v);
        }
        Ok(Self {
            regions,
            labels: sp.labels,
        })
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    /// Ascending vertex indices of region `l`.
    pub fn region(&self, l: usize) -> &[usize] {
        &self.regions[l]
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn max_region_size(&self) -> usize {
        self.regions.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Geodesic farthest point sampling over the surface edge graph.
///
/// Starts at the surface vertex farthest (Euclidean) from the centroid of all
/// vertices, then repeatedly adds the surface vertex whose shortest-path
/// distance to the chosen set is largest. Ties go to the lowest index.
pub fn surface_geodesic_fps(mesh: &TetMesh, k: usize) -> Result<Vec<usize>> {
    let surface = mesh.surface_vertices();
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if k > surface.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds the {} surface vertices",
            surface.len()
        )));
    }
    let c = mesh.centroid();
    let p = mesh.positions();
    let mut start = surface[0];
    let mut best = geom::dist(p[start], c);
    for &v in &surface[1..] {
        let d = geom::dist(p[v], c);
        if d > best {
            best = d;
            start = v;
        }
    }

    let mut chosen = vec![start];
    let mut min_dist = vec![f64::INFINITY; mesh.num_vertices()];
    let mut selected = vec![false; mesh.num_vertices()];
    selected[start] = true;
    while chosen.len() < k {
        let last = *chosen.last().unwrap();
        let sp = shortest_paths(mesh.surface_graph(), &[last]);
        for &v in surface {
            min_dist[v] = min_dist[v].min(sp.distances[v]);
        }
        let mut next = None;
        let mut far = f64::NEG_INFINITY;
        for &v in surface {
            if !selected[v] && min_dist[v] > far {
                far = min_dist[v];
                next = Some(v);
            }
        }
        let next = next.expect("k <= surface vertex count");
        selected[next] = true;
        chosen.push(next);
    }
    Ok(chosen)
}

pub(crate) fn validate_seeds(seeds: &[usize], n: usize) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let mut seen = vec![false; n];
    for &s in seeds {
        if s >= n {
            return Err(Error::InvalidArgument(format!(
                "vertex index {s} out of range for {n} vertices"
            )));
        }
        if seen[s] {
            return Err(Error::InvalidArgument(format!("vertex index {s} repeated")));
        }
        seen[s] = true;
    }
    Ok(())
}

fn extract_surface(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let key = |f: [usize; 3]| {
        let mut k = f;
        k.sort_unstable();
        k
    };
    let mut counts: HashMap<[usize; 3], u32> = HashMap::with_capacity(tets.len() * 4);
    for t in tets {
        for f in TET_FACES {
            *counts.entry(key([t[f[0]], t[f[1]], t[f[2]]])).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for t in tets {
        for f in TET_FACES {
            let tri = [t[f[0]], t[f[1]], t[f[2]]];
            if counts[&key(tri)] == 1 {
                out.push(tri);
            }
        }
    }
    out
}

pub(crate) fn centroid(positions: &[Vec3]) -> Vec3 {
    let mut c = [0.0; 3];
    for p in positions {
        for i in 0..3 {
            c[i] += p[i];
        }
    }
    let n = positions.len().max(1) as f64;
    geom::scale(c, 1.0 / n)
}

pub(crate) fn bounding_box(positions: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

pub(crate) fn bbox_diagonal(positions: &[Vec3]) -> f64 {
    let (lo, hi) = bounding_box(positions);
    geom::dist(hi, lo)
}
