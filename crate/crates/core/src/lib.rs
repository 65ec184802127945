pub mod grid;
pub mod penalty;
pub mod functional;
pub mod analysis;
pub mod potential;
pub mod solve;
pub mod validate;
