//! Biharmonic deformation weights on tetrahedral meshes and a data-driven
//! search for the control points that best reproduce a family of target
//! shapes.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: tetrahedral templates, graphs, sampling, partitions, targets.
//! * [`operators`]: the FEM Bilaplacian, its regularized inverse and the
//!   shaved full-rank variant.
//! * [`biharmonic`]: weights and deformations from several equivalent solves.
//! * [`search`]: the fitting objective, the region/vertex coordinate search
//!   and the baselines it is measured against.

pub mod biharmonic;
pub mod dense;
pub mod error;
pub mod mesh;
pub mod operators;
pub mod search;

pub use biharmonic::{BiharmonicWeights, ControlPositions, SolvePath, Selector};
pub use error::{Error, Result};
pub use mesh::{Partition, Similarity, TargetSet, TetMesh, Vec3};
pub use operators::{BilaplacianOperator, ShavedOperator, SparseMatrix};
pub use search::{DistanceKind, FitReport, FittingProblem, SearchConfig};
