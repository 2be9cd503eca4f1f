//! Sectional right-hand side of the truncated equation.
//!
//! Coagulation uses the fixed-pivot two-point rule: a pair of cells `(i, j)`
//! produces a particle of mass `v = c_i + c_j` (centroids), which is split
//! between the bracketing centroids so that both number and mass are
//! preserved. Sums beyond the top edge leave the grid entirely and their mass
//! is booked to the gel ledger.
//!
//! Breakage of a donor of mass `c_j` distributes the fragments falling in each
//! centroid interval `[c_k, c_{k+1}]` onto its two ends with the same
//! number-and-mass rule, using the closed-form integrals of `b`. Fragments in
//! `[e_0, c_0]` are placed in cell 0 conserving mass only, and fragments below
//! the bottom edge become dust. Every event therefore conserves
//! `Σ N_k c_k + gel + dust` exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid_state::{DensityState, Grid};
use crate::kernels::{
    coag_rate_unchecked, fragment_mass_unchecked, fragment_number_unchecked, selection_rate_unchecked,
    KernelModel,
};

/// Rows per work unit. Fixed so the summation order never depends on the
/// number of worker threads.
const ROWS_PER_CHUNK: usize = 8;

/// Where the product of a coagulation event goes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PairTarget {
    /// Fraction `f_lo` to cell `lo`, `1 - f_lo` to `lo + 1`.
    Split { lo: usize, f_lo: f64 },
    /// Sum lies between the top centroid and the top edge: one particle in the
    /// top cell, `excess` mass to gel.
    Top { excess: f64 },
    /// Sum exceeds the top edge: the whole `mass` goes to gel.
    Overflow { mass: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub j: usize,
    pub rate: f64,
    pub target: PairTarget,
}

/// Active coagulation pairs; row `i` lists partners `j >= i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoagTable {
    rows: Vec<Vec<PairEntry>>,
}

impl CoagTable {
    pub fn n_cells(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[PairEntry] {
        &self.rows[i]
    }

    /// Entry for the unordered pair `{i, j}`.
    pub fn entry(&self, i: usize, j: usize) -> Option<&PairEntry> {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.rows.get(lo)?.iter().find(|e| e.j == hi)
    }

    /// Rate of the unordered pair, zero when inactive.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.entry(i, j).map_or(0.0, |e| e.rate)
    }
}

pub fn precompute_coag_table(grid: &Grid, model: &KernelModel) -> CoagTable {
    let n = grid.n_cells();
    let c = grid.centroids();
    let p = grid.pivots();
    let top = grid.top_edge();
    let active: Vec<bool> = p.iter().map(|&m| m >= grid.coag_min()).collect();

    let rows = (0..n)
        .map(|i| {
            if !active[i] {
                return Vec::new();
            }
            (i..n)
                .filter(|&j| active[j])
                .filter_map(|j| {
                    let rate = coag_rate_unchecked(p[i], p[j], model);
                    if rate == 0.0 {
                        return None;
                    }
                    let v = c[i] + c[j];
                    let below = c.partition_point(|&ck| ck < v);
                    let target = if below == n {
                        if v <= top {
                            PairTarget::Top { excess: v - c[n - 1] }
                        } else {
                            PairTarget::Overflow { mass: v }
                        }
                    } else {
                        let lo = below - 1;
                        PairTarget::Split { lo, f_lo: (c[lo + 1] - v) / (c[lo + 1] - c[lo]) }
                    };
                    Some(PairEntry { j, rate, target })
                })
                .collect()
        })
        .collect();
    CoagTable { rows }
}

/// Breakage products of one donor cell, per breakup event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragDonor {
    pub selection: f64,
    /// `(cell, particles)` received by each cell.
    pub births: Vec<(usize, f64)>,
    pub dust_number: f64,
    pub dust_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragTable {
    donors: Vec<FragDonor>,
}

impl FragTable {
    pub fn donor(&self, j: usize) -> &FragDonor {
        &self.donors[j]
    }

    pub fn is_inert(&self) -> bool {
        self.donors.iter().all(|d| d.selection == 0.0)
    }
}

pub fn precompute_frag_table(grid: &Grid, model: &KernelModel) -> FragTable {
    let c = grid.centroids();
    let e0 = grid.bottom_edge();
    let gamma = model.gamma;
    let donors = (0..grid.n_cells())
        .map(|j| {
            let selection = selection_rate_unchecked(grid.pivots()[j], model);
            if selection == 0.0 {
                return FragDonor { selection, births: Vec::new(), dust_number: 0.0, dust_mass: 0.0 };
            }
            let d = c[j];
            let mut births = vec![0.0; j + 1];
            births[0] += fragment_mass_unchecked(e0, c[0], d, gamma) / c[0];
            for k in 0..j {
                let (a, b) = (c[k], c[k + 1]);
                let num = fragment_number_unchecked(a, b, d, gamma);
                let mass = fragment_mass_unchecked(a, b, d, gamma);
                births[k] += (b * num - mass) / (b - a);
                births[k + 1] += (mass - a * num) / (b - a);
            }
            FragDonor {
                selection,
                births: births.into_iter().enumerate().filter(|(_, x)| *x != 0.0).collect(),
                dust_number: fragment_number_unchecked(0.0, e0, d, gamma),
                dust_mass: fragment_mass_unchecked(0.0, e0, d, gamma),
            }
        })
        .collect();
    FragTable { donors }
}

/// Time derivative of the density and of the gel/dust ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsBundle {
    pub dgdt: Vec<f64>,
    pub gel_mass_rate: f64,
    pub dust_mass_rate: f64,
    pub dust_number_rate: f64,
}

impl RhsBundle {
    pub fn zeros(n: usize) -> Self {
        Self { dgdt: vec![0.0; n], gel_mass_rate: 0.0, dust_mass_rate: 0.0, dust_number_rate: 0.0 }
    }

    pub fn add(&mut self, other: &RhsBundle) {
        for (a, b) in self.dgdt.iter_mut().zip(&other.dgdt) {
            *a += b;
        }
        self.gel_mass_rate += other.gel_mass_rate;
        self.dust_mass_rate += other.dust_mass_rate;
        self.dust_number_rate += other.dust_number_rate;
    }

    pub fn is_finite(&self) -> bool {
        self.dgdt.iter().all(|x| x.is_finite())
            && self.gel_mass_rate.is_finite()
            && self.dust_mass_rate.is_finite()
            && self.dust_number_rate.is_finite()
    }

    /// `d/dt (N1 + gel + dust)`; zero up to round-off.
    pub fn mass_balance(&self, grid: &Grid) -> f64 {
        let sol: f64 = self
            .dgdt
            .iter()
            .enumerate()
            .map(|(i, d)| d * grid.cell_power_integral(i, 1.0))
            .sum();
        sol + self.gel_mass_rate + self.dust_mass_rate
    }
}

struct Partial {
    dn: Vec<f64>,
    gel: f64,
    dust_n: f64,
    dust_m: f64,
}

fn merge(partials: Vec<Partial>, grid: &Grid) -> RhsBundle {
    let mut out = RhsBundle::zeros(grid.n_cells());
    let mut dn = vec![0.0; grid.n_cells()];
    for p in partials {
        for (a, b) in dn.iter_mut().zip(&p.dn) {
            *a += b;
        }
        out.gel_mass_rate += p.gel;
        out.dust_number_rate += p.dust_n;
        out.dust_mass_rate += p.dust_m;
    }
    for ((d, n), w) in out.dgdt.iter_mut().zip(dn).zip(grid.widths()) {
        *d = n / w;
    }
    out
}

fn chunk_starts(n: usize) -> Vec<usize> {
    (0..n).step_by(ROWS_PER_CHUNK).collect()
}

/// Coagulation part: fixed-pivot birth, pair death, overflow to gel.
pub fn coag_rhs(state: &DensityState, grid: &Grid, table: &CoagTable) -> RhsBundle {
    let n = grid.n_cells();
    let numbers = state.numbers(grid);
    let partials = chunk_starts(n)
        .into_par_iter()
        .map(|start| {
            let mut p = Partial { dn: vec![0.0; n], gel: 0.0, dust_n: 0.0, dust_m: 0.0 };
            for i in start..(start + ROWS_PER_CHUNK).min(n) {
                let ni = numbers[i];
                if ni == 0.0 {
                    continue;
                }
                for e in table.row(i) {
                    let nj = numbers[e.j];
                    if nj == 0.0 {
                        continue;
                    }
                    let events = if e.j == i { 0.5 * e.rate * ni * ni } else { e.rate * ni * nj };
                    p.dn[i] -= events;
                    p.dn[e.j] -= events;
                    match e.target {
                        PairTarget::Split { lo, f_lo } => {
                            p.dn[lo] += events * f_lo;
                            p.dn[lo + 1] += events * (1.0 - f_lo);
                        }
                        PairTarget::Top { excess } => {
                            p.dn[n - 1] += events;
                            p.gel += events * excess;
                        }
                        PairTarget::Overflow { mass } => p.gel += events * mass,
                    }
                }
            }
            p
        })
        .collect();
    merge(partials, grid)
}

/// Fragmentation part with a precomputed breakage table.
pub fn frag_rhs_with(state: &DensityState, grid: &Grid, table: &FragTable) -> RhsBundle {
    let n = grid.n_cells();
    let numbers = state.numbers(grid);
    let partials = chunk_starts(n)
        .into_par_iter()
        .map(|start| {
            let mut p = Partial { dn: vec![0.0; n], gel: 0.0, dust_n: 0.0, dust_m: 0.0 };
            for j in start..(start + ROWS_PER_CHUNK).min(n) {
                let donor = table.donor(j);
                let events = donor.selection * numbers[j];
                if events == 0.0 {
                    continue;
                }
                p.dn[j] -= events;
                for &(k, count) in &donor.births {
                    p.dn[k] += events * count;
                }
                p.dust_n += events * donor.dust_number;
                p.dust_m += events * donor.dust_mass;
            }
            p
        })
        .collect();
    merge(partials, grid)
}

/// Fragmentation part; builds the breakage table on the fly.
pub fn frag_rhs(state: &DensityState, grid: &Grid, model: &KernelModel) -> RhsBundle {
    frag_rhs_with(state, grid, &precompute_frag_table(grid, model))
}

/// Full right-hand side.
pub fn rhs(state: &DensityState, grid: &Grid, model: &KernelModel, table: &CoagTable) -> RhsBundle {
    let mut out = coag_rhs(state, grid, table);
    out.add(&frag_rhs(state, grid, model));
    out
}

/// Both tables for one `(grid, model)` pair.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub coag: CoagTable,
    pub frag: FragTable,
}

impl Scheme {
    pub fn new(grid: &Grid, model: &KernelModel) -> Self {
        Self { coag: precompute_coag_table(grid, model), frag: precompute_frag_table(grid, model) }
    }

    pub fn rhs(&self, state: &DensityState, grid: &Grid) -> RhsBundle {
        let mut out = coag_rhs(state, grid, &self.coag);
        if !self.frag.is_inert() {
            out.add(&frag_rhs_with(state, grid, &self.frag));
        }
        out
    }
}
