//! Comparison settings: multidimensional lattice random walks with their
//! strong-transience criteria, and critical branching processes with
//! migration whose square root is a near-critical chain.

pub mod branching;
pub mod rwalk;
