//! H(div)-conforming mixed finite elements for the Brinkman equation.
//!
//! BDM1/RT1 velocities with discontinuous pressures, a symmetric interior
//! penalty formulation for the viscous term, elementwise pressure
//! postprocessing, a parameter-robust residual error estimator, adaptive
//! newest-vertex bisection, and a two-multiplier hybridization with
//! elementwise condensation for domain decomposition.

pub mod adapt;
pub mod assembly;
pub mod bench;
pub mod estimate;
pub mod hybrid;
pub mod mesh;
pub mod postprocess;
pub mod problem;
pub mod quad;
pub mod solve;
pub mod spaces;
pub mod sparse;
pub mod spe10;
