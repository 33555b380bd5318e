//! Application models built on the decomposition engine.

pub mod acca;
pub mod alp;
pub mod nhss;
