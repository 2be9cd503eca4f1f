use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{ensure_finite, Result};

/// Piecewise-constant number density plus the mass that has left the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityState {
    /// Number density per unit mass in each cell.
    pub g: Vec<f64>,
    pub t: f64,
    /// Mass lost through the top edge by coagulation.
    pub gel_mass: f64,
    /// Fragment mass that fell below the bottom edge.
    pub dust_mass: f64,
    pub dust_number: f64,
    /// Signed mass removed by clamping round-off negatives to zero.
    pub clamp_mass: f64,
}

impl DensityState {
    pub fn zeros(n_cells: usize) -> Self {
        Self::from_density(vec![0.0; n_cells])
    }

    pub fn from_density(g: Vec<f64>) -> Self {
        Self { g, t: 0.0, gel_mass: 0.0, dust_mass: 0.0, dust_number: 0.0, clamp_mass: 0.0 }
    }

    /// Particle count per cell, `g_i Δ_i`.
    pub fn numbers(&self, grid: &Grid) -> Vec<f64> {
        self.g.iter().zip(grid.widths()).map(|(g, w)| g * w).collect()
    }

    /// `N1 + gel + dust + clamp`, constant in time for the sectional scheme.
    pub fn ledger_total(&self, grid: &Grid) -> f64 {
        let n1: f64 = self.g.iter().enumerate().map(|(i, g)| g * grid.cell_power_integral(i, 1.0)).sum();
        n1 + self.gel_mass + self.dust_mass + self.clamp_mass
    }
}

/// `N_p = ∫ m^p g dm`, integrated exactly against the piecewise-constant density.
pub fn moment(state: &DensityState, grid: &Grid, p: f64) -> Result<f64> {
    ensure_finite("p", p)?;
    Ok(state
        .g
        .iter()
        .enumerate()
        .map(|(i, g)| g * grid.cell_power_integral(i, p))
        .sum())
}
