pub mod error;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod subspace;
pub mod datamodel;
pub mod algorithms;
pub mod theory;
pub mod experiments;
