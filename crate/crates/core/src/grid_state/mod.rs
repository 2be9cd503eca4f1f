//! Mass grid, piecewise-constant density state and moment evaluation.

mod density;
mod grid;
mod initial;

pub use density::{moment, DensityState};
pub use grid::{build_grid, Grid};
pub use initial::{init_density, read_table_csv, InitialDataSpec};
