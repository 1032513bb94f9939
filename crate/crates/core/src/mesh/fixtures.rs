use super::{TetMesh, Vec3};
use crate::error::{Error, Result};

pub(super) fn box_grid(cells: [usize; 3], extent: Vec3) -> Result<TetMesh> {
    if cells.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "box grid needs at least one cell per axis, got {cells:?}"
        )));
    }
    let [nx, ny, nz] = cells;
    let (vx, vy, vz) = (nx + 1, ny + 1, nz + 1);
    let id = |i: usize, j: usize, k: usize| i + vx * (j + vy * k);

    let mut positions = Vec::with_capacity(vx * vy * vz);
    for k in 0..vz {
        for j in 0..vy {
            for i in 0..vx {
                positions.push([
                    extent[0] * i as f64 / nx as f64,
                    extent[1] * j as f64 / ny as f64,
                    extent[2] * k as f64 / nz as f64,
                ]);
            }
        }
    }

    // Each cube is split along the 0 -> 7 diagonal, one tet per axis ordering.
    const PATHS: [[usize; 2]; 6] = [[1, 3], [1, 5], [2, 3], [2, 6], [4, 5], [4, 6]];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corner =
                    |bits: usize| id(i + (bits & 1), j + ((bits >> 1) & 1), k + ((bits >> 2) & 1));
                for [a, b] in PATHS {
                    tets.push([corner(0), corner(a), corner(b), corner(7)]);
                }
            }
        }
    }
    TetMesh::new(positions, tets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let m = box_grid([3, 2, 1], [3.0, 2.0, 1.0]).unwrap();
        assert_eq!(m.num_vertices(), 4 * 3 * 2);
        assert_eq!(m.num_tets(), 36);
        // Two triangles per boundary square.
        assert_eq!(m.surface_tris().len(), 2 * 2 * (3 * 2 + 3 * 1 + 2 * 1));
        assert!((m.total_volume() - 6.0).abs() < 1e-12);
        // A 3x2x1 box has no interior vertices.
        assert_eq!(m.surface_vertices().len(), m.num_vertices());
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(box_grid([0, 1, 1], [1.0; 3]).is_err());
    }
}
