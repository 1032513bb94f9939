//! Corresponded target shapes and the synthetic hinge-bend generator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{geom, Similarity, TetMesh, Vec3};
use crate::error::{Error, Result};

/// `M` target shapes, each given as template-ordered corresponding positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    targets: Vec<Vec<Vec3>>,
}

impl TargetSet {
    pub fn new(targets: Vec<Vec<Vec3>>) -> Result<Self> {
        let Some(first) = targets.first() else {
            return Err(Error::InvalidArgument("a target set needs at least one target".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidArgument("targets have no vertices".into()));
        }
        if let Some(i) = targets.iter().position(|t| t.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "target {i} has {} vertices, expected {n}",
                targets[i].len()
            )));
        }
        Ok(Self { targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.targets[0].len()
    }

    pub fn get(&self, i: usize) -> &[Vec3] {
        &self.targets[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Vec3]> {
        self.targets.iter().map(Vec::as_slice)
    }

    /// Targets of `self` followed by those of `other`.
    pub fn union(&self, other: &TargetSet) -> Result<TargetSet> {
        let mut t = self.targets.clone();
        t.extend(other.targets.iter().cloned());
        TargetSet::new(t)
    }

    pub fn transformed(&self, sim: &Similarity) -> TargetSet {
        TargetSet {
            targets: self.targets.iter().map(|t| sim.apply_all(t)).collect(),
        }
    }

    pub fn check_matches(&self, mesh: &TetMesh) -> Result<()> {
        if self.num_vertices() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "targets have {} vertices but the template has {}",
                self.num_vertices(),
                mesh.num_vertices()
            )));
        }
        Ok(())
    }
}

/// Parses an `.xyz` file: one `x y z` triple per line; blank and `#` lines skipped.
pub fn read_xyz(text: &str) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut p = [0.0; 3];
        let mut fields = line.split_whitespace();
        for c in p.iter_mut() {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse(i + 1, "expected three coordinates"))?;
            *c = f
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("invalid coordinate {f:?}")))?;
        }
        if fields.next().is_some() {
            return Err(Error::parse(i + 1, "expected exactly three coordinates"));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_xyz(points: &[Vec3]) -> String {
    let mut s = String::with_capacity(points.len() * 48);
    for p in points {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    s
}

/// Loads every `*.xyz` file of `dir` in lexicographic filename order.
pub fn read_target_dir(dir: &Path) -> Result<TargetSet> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "xyz"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .xyz files in {}",
            dir.display()
        )));
    }
    let mut targets = Vec::with_capacity(files.len());
    for f in &files {
        let text = fs::read_to_string(f)?;
        targets.push(read_xyz(&text).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", f.display()),
            },
            e => e,
        })?);
    }
    TargetSet::new(targets)
}

/// A hinge: vertices on the positive side of the plane through `point` with
/// normal `normal` rotate about the line through `point` along `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    pub point: Vec3,
    pub normal: Vec3,
    pub axis: Vec3,
    /// Width of the blending band on the positive side. `None` means 10% of
    /// the template's bounding-box diagonal.
    pub falloff: Option<f64>,
}

impl Hinge {
    /// Hinge through the bounding-box center bending along +x about z.
    pub fn centered(mesh: &TetMesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        Self {
            point: geom::scale(geom::add(lo, hi), 0.5),
            normal: [1.0, 0.0, 0.0],
            axis: [0.0, 0.0, 1.0],
            falloff: None,
        }
    }

    pub fn at(point: Vec3) -> Self {
        Self {
            point,
            normal: [1.0, 0.0, 0.0],
            axis: [0.0, 0.0, 1.0],
            falloff: None,
        }
    }
}

/// Generated targets together with the bend angle drawn for each.
#[derive(Debug, Clone)]
pub struct BendTargets {
    pub targets: TargetSet,
    pub angles: Vec<f64>,
}

/// Bends the template about `hinge` `m` times with angles drawn uniformly
/// from `angle_range` by a ChaCha8 generator seeded with `seed`.
///
/// The rotation amount ramps from 0 at the plane to the full angle at the
/// far edge of the falloff band with a smoothstep, so the result has no tear.
pub fn generate_bend_targets(
    mesh: &TetMesh,
    m: usize,
    seed: u64,
    hinge: &Hinge,
    angle_range: (f64, f64),
) -> Result<BendTargets> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let (lo, hi) = angle_range;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid angle range [{lo}, {hi}]"
        )));
    }
    let nn = geom::norm(hinge.normal);
    let na = geom::norm(hinge.axis);
    if !(nn > 0.0) || !(na > 0.0) {
        return Err(Error::InvalidArgument("hinge normal and axis must be nonzero".into()));
    }
    let normal = geom::scale(hinge.normal, 1.0 / nn);
    let axis = geom::scale(hinge.axis, 1.0 / na);
    if geom::dot(normal, axis).abs() > 1e-9 {
        return Err(Error::InvalidArgument(
            "hinge axis must lie in the hinge plane".into(),
        ));
    }
    let band = hinge.falloff.unwrap_or(0.1 * mesh.bbox_diagonal());
    if !(band >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid falloff width {band}")));
    }

    let (blo, bhi) = mesh.bounding_box();
    let mut smin = f64::INFINITY;
    let mut smax = f64::NEG_INFINITY;
    for bits in 0..8 {
        let c = [
            if bits & 1 == 0 { blo[0] } else { bhi[0] },
            if bits & 2 == 0 { blo[1] } else { bhi[1] },
            if bits & 4 == 0 { blo[2] } else { bhi[2] },
        ];
        let s = geom::dot(normal, geom::sub(c, hinge.point));
        smin = smin.min(s);
        smax = smax.max(s);
    }
    if smin > 0.0 || smax < 0.0 {
        return Err(Error::InvalidArgument(
            "hinge plane does not intersect the mesh bounding box".into(),
        ));
    }

    let weights: Vec<f64> = mesh
        .positions()
        .iter()
        .map(|&p| blend(geom::dot(normal, geom::sub(p, hinge.point)), band))
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidArgument(
            "no vertices on the positive side of the hinge".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = (0..m).map(|_| rng.random_range(lo..=hi)).collect();
    let targets = angles
        .iter()
        .map(|&theta| {
            mesh.positions()
                .iter()
                .zip(&weights)
                .map(|(&p, &w)| rotate_about(p, hinge.point, axis, w * theta))
                .collect()
        })
        .collect();
    Ok(BendTargets {
        targets: TargetSet::new(targets)?,
        angles,
    })
}

fn blend(s: f64, band: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= band {
        1.0
    } else {
        let t = s / band;
        t * t * (3.0 - 2.0 * t)
    }
}

fn rotate_about(p: Vec3, origin: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    if angle == 0.0 {
        return p;
    }
    let v = geom::sub(p, origin);
    let (s, c) = angle.sin_cos();
    let k = geom::cross(axis, v);
    let along = geom::scale(axis, geom::dot(axis, v) * (1.0 - c));
    geom::add(
        origin,
        geom::add(geom::add(geom::scale(v, c), geom::scale(k, s)), along),
    )
}
