//! Turns task sentences into goal functions and reward functions for a
//! tabletop pick-and-place scene, checks them, and runs them in a small simulator.

pub mod codegen;
pub mod corpus;
pub mod descriptor;
pub mod encoder;
pub mod geom;
pub mod llm;
pub mod prompt;
pub mod reward;
pub mod runs;
pub mod sandbox;
pub mod scene;
pub mod sim;
pub mod validator;

pub use geom::Real;

pub type Vec3 = geom::Vec3<f64>;
pub type Quat = geom::Quat<f64>;
pub type Pose = geom::Pose<f64>;
