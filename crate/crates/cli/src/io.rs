//! File access for the commands. Every output goes through [`write_atomic`].

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use optctrl::mesh::medit::parse_medit;
use optctrl::mesh::{read_target_dir, read_xyz};
use optctrl::{TargetSet, TetMesh, Vec3};

use crate::error::{CliError, CliResult};

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_template(path: &Path) -> CliResult<TetMesh> {
    parse_medit(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

pub fn load_targets(dir: &Path, mesh: &TetMesh) -> CliResult<TargetSet> {
    let targets = read_target_dir(dir).map_err(|e| CliError::input(dir, e))?;
    targets.check_matches(mesh).map_err(|e| CliError::input(dir, e))?;
    Ok(targets)
}

pub fn load_points(path: &Path) -> CliResult<Vec<Vec3>> {
    read_xyz(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

/// Surface of `mesh` at `positions`, only the vertices the surface uses.
/// A leading comment maps each OBJ vertex back to its 0-based mesh index.
pub fn surface_obj(mesh: &TetMesh, positions: &[Vec3]) -> String {
    let surface = mesh.surface_vertices();
    let mut local = vec![usize::MAX; mesh.num_vertices()];
    for (i, &v) in surface.iter().enumerate() {
        local[v] = i;
    }
    let mut s = String::new();
    let _ = writeln!(s, "# {} surface vertices of a {}-vertex mesh", surface.len(), mesh.num_vertices());
    let _ = write!(s, "# vertex indices:");
    for &v in surface {
        let _ = write!(s, " {v}");
    }
    s.push('\n');
    for &v in surface {
        let p = positions[v];
        let _ = writeln!(s, "v {} {} {}", p[0], p[1], p[2]);
    }
    for t in mesh.surface_tris() {
        let _ = writeln!(s, "f {} {} {}", local[t[0]] + 1, local[t[1]] + 1, local[t[2]] + 1);
    }
    s
}

/// `vertex,distance,normalized_distance` for every mesh vertex.
pub fn distance_csv(distance: &[f64], normalized: &[f64]) -> String {
    let mut s = String::from("vertex,distance,normalized_distance\n");
    for (v, (d, n)) in distance.iter().zip(normalized).enumerate() {
        let _ = writeln!(s, "{v},{d},{n}");
    }
    s
}
