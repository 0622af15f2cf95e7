pub mod bounds;
pub mod closed_forms;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod solver;
pub mod ufm;
pub mod cli;
