use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of the truncated mass window into cells.
///
/// `pivots` are the points where rates are sampled (geometric means of the
/// edges for grids from [`build_grid`]). `centroids` are the cell mass
/// centroids `∫m dm / Δ`; a cell holding `N` particles carries exactly
/// `N · centroid` mass under the piecewise-constant reconstruction, so the
/// sectional scheme assigns newborn particles between centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    edges: Vec<f64>,
    pivots: Vec<f64>,
    centroids: Vec<f64>,
    widths: Vec<f64>,
    coag_min: f64,
}

/// Geometric grid on `[m_min, m_max]` with `ceil(cells_per_decade · log10(m_max/m_min))` cells.
pub fn build_grid(m_min: f64, m_max: f64, cells_per_decade: usize, coag_min: f64) -> Result<Grid> {
    if !(m_min > 0.0 && m_max > m_min && m_max.is_finite()) {
        return Err(Error::Grid(format!("need 0 < m_min < m_max, got [{m_min}, {m_max}]")));
    }
    if cells_per_decade == 0 {
        return Err(Error::Grid("cells_per_decade must be at least 1".into()));
    }
    let decades = (m_max / m_min).log10();
    let n = ((cells_per_decade as f64 * decades) - 1e-9).ceil().max(1.0) as usize;
    let span = m_max / m_min;
    let mut edges: Vec<f64> = (0..=n).map(|i| m_min * span.powf(i as f64 / n as f64)).collect();
    edges[0] = m_min;
    edges[n] = m_max;
    let pivots = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    Grid::from_parts(edges, pivots, coag_min)
}

impl Grid {
    /// General grid from explicit edges and rate-sampling pivots.
    pub fn from_parts(edges: Vec<f64>, pivots: Vec<f64>, coag_min: f64) -> Result<Grid> {
        if edges.len() < 2 {
            return Err(Error::Grid("need at least one cell".into()));
        }
        if !(edges[0] > 0.0) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Grid("edges must be positive and finite".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("edges must be strictly increasing".into()));
        }
        if pivots.len() != edges.len() - 1 {
            return Err(Error::Grid(format!(
                "{} pivots given for {} cells",
                pivots.len(),
                edges.len() - 1
            )));
        }
        for (i, (&p, w)) in pivots.iter().zip(edges.windows(2)).enumerate() {
            if !(p > w[0] && p < w[1]) {
                return Err(Error::Grid(format!("pivot {p} of cell {i} is not inside ({}, {})", w[0], w[1])));
            }
        }
        let top = *edges.last().unwrap();
        if !(coag_min >= edges[0] && coag_min <= top) {
            return Err(Error::Grid(format!(
                "coag_min = {coag_min} must lie in [{}, {top}]",
                edges[0]
            )));
        }
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let centroids = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Grid { edges, pivots, centroids, widths, coag_min })
    }

    pub fn n_cells(&self) -> usize {
        self.pivots.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn coag_min(&self) -> f64 {
        self.coag_min
    }

    pub fn bottom_edge(&self) -> f64 {
        self.edges[0]
    }

    pub fn top_edge(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// `∫_cell m^p dm`.
    pub fn cell_power_integral(&self, i: usize, p: f64) -> f64 {
        let (a, b) = (self.edges[i], self.edges[i + 1]);
        if p == -1.0 {
            (b / a).ln()
        } else if p == 0.0 {
            self.widths[i]
        } else if p == 1.0 {
            // Exact product form: `Δ · centroid`.
            self.widths[i] * self.centroids[i]
        } else {
            let q = p + 1.0;
            // a^q ((b/a)^q - 1) / q avoids cancellation for narrow cells.
            a.powf(q) * ((b / a).ln() * q).exp_m1() / q
        }
    }

    /// Per-cell weights `w_i` with `N_p = Σ g_i w_i`.
    pub fn moment_weights(&self, p: f64) -> Vec<f64> {
        (0..self.n_cells()).map(|i| self.cell_power_integral(i, p)).collect()
    }

    /// `∫_cell min(m, cap) dm`.
    pub fn cell_capped_mass(&self, i: usize, cap: f64) -> f64 {
        let (a, b) = (self.edges[i], self.edges[i + 1]);
        if cap >= b {
            self.cell_power_integral(i, 1.0)
        } else if cap <= a {
            cap * (b - a)
        } else {
            0.5 * (cap * cap - a * a) + cap * (b - cap)
        }
    }

    /// Index of the cell containing `m` (half-open cells, top edge included in the last).
    pub fn locate(&self, m: f64) -> Option<usize> {
        let n = self.n_cells();
        if m < self.edges[0] || m > self.edges[n] {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= m);
        Some(idx.saturating_sub(1).min(n - 1))
    }

    /// Constant edge ratio to 1e-12 relative.
    pub fn is_geometric(&self) -> bool {
        let r0 = self.edges[1] / self.edges[0];
        self.edges.windows(2).all(|w| ((w[1] / w[0]) / r0 - 1.0).abs() <= 1e-12)
    }
}
