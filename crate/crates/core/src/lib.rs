//! Scattering resonances of the Dirichlet Laplacian exterior to rough planar obstacles.
//!
//! The library assembles, for a bounded obstacle `U` and an artificial circular
//! interface of radius `X`, the truncated operator family `T_n(k)` whose
//! determinant vanishes exactly at the scattering resonances of the exterior
//! problem. The pipeline is
//!
//! ```text
//! obstacle -> pixelation/polygons -> triangulation of B_X \ U
//!          -> FEM reference solves + eigenpairs -> spectral model
//!          -> det T_n(k) evaluations -> zero finding / certified boxes
//! ```
//!
//! Modules follow the pipeline: [`geometry`] (obstacles, pixelation, set
//! distances), [`mesh`] (triangulation and boundary pairing), [`specfun`]
//! (complex Hankel machinery), [`fem`] (assembly, solves, eigenpairs),
//! [`ntd`] (the spectral model and `T_n(k)`), and [`zerofind`] (minimisation
//! and certified zero localisation).

pub mod error;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod ntd;
pub mod specfun;
pub mod zerofind;

pub use error::Error;

/// Double-precision complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Planar point.
pub type P2 = [f64; 2];
