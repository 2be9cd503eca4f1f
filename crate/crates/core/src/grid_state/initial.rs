use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DensityState, Grid};
use crate::error::{ensure_finite, Error, Result};

/// Initial number density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDataSpec {
    /// `amplitude · exp(-m / scale)`
    Exponential { amplitude: f64, scale: f64 },
    /// `number` particles deposited in the cell containing `mass`.
    Monodisperse { mass: f64, number: f64 },
    /// `m^exponent` on `[m_min, m_max]`, zero elsewhere.
    PowerCutoff { exponent: f64, m_min: f64, m_max: f64 },
    /// `inner(m - delta)` for `m > delta`; vanishes on `(0, delta)`.
    Shifted { delta: f64, inner: Box<InitialDataSpec> },
    /// Piecewise-linear density through `(mass, density)` points.
    Table { points: Vec<(f64, f64)> },
    /// Two-column CSV `(mass, density)`, header optional.
    TableFile { path: PathBuf },
}

impl InitialDataSpec {
    fn validate(&self) -> Result<()> {
        match self {
            InitialDataSpec::Exponential { amplitude, scale } => {
                ensure_finite("initial.amplitude", *amplitude)?;
                ensure_finite("initial.scale", *scale)?;
                if *amplitude < 0.0 || *scale <= 0.0 {
                    return Err(Error::InitialData("exponential needs amplitude >= 0 and scale > 0".into()));
                }
            }
            InitialDataSpec::Monodisperse { mass, number } => {
                ensure_finite("initial.mass", *mass)?;
                ensure_finite("initial.number", *number)?;
                if *mass <= 0.0 || *number < 0.0 {
                    return Err(Error::InitialData("monodisperse needs mass > 0 and number >= 0".into()));
                }
            }
            InitialDataSpec::PowerCutoff { exponent, m_min, m_max } => {
                ensure_finite("initial.exponent", *exponent)?;
                if !(*m_min > 0.0 && m_max > m_min && m_max.is_finite()) {
                    return Err(Error::InitialData("power_cutoff needs 0 < m_min < m_max".into()));
                }
            }
            InitialDataSpec::Shifted { delta, inner } => {
                ensure_finite("initial.delta", *delta)?;
                if *delta <= 0.0 {
                    return Err(Error::InitialData("shifted needs delta > 0".into()));
                }
                inner.validate()?;
            }
            InitialDataSpec::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InitialData("table needs at least two points".into()));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InitialData("table masses must be strictly increasing".into()));
                }
                if let Some(&(m, d)) = points.iter().find(|(m, d)| !(m.is_finite() && d.is_finite() && *d >= 0.0)) {
                    return Err(Error::InitialData(format!("invalid table row ({m}, {d})")));
                }
            }
            InitialDataSpec::TableFile { .. } => {}
        }
        Ok(())
    }

    /// `∫_a^b g^in dm` for the continuous (non-atomic) families.
    fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            InitialDataSpec::Exponential { amplitude, scale } => {
                -amplitude * scale * (-a / scale).exp() * (-(b - a) / scale).exp_m1()
            }
            InitialDataSpec::PowerCutoff { exponent, m_min, m_max } => {
                let (lo, hi) = (a.max(*m_min), b.min(*m_max));
                if hi <= lo {
                    0.0
                } else if *exponent == -1.0 {
                    (hi / lo).ln()
                } else {
                    let q = exponent + 1.0;
                    (hi.powf(q) - lo.powf(q)) / q
                }
            }
            InitialDataSpec::Shifted { delta, inner } => {
                let lo = (a - delta).max(0.0);
                let hi = b - delta;
                if hi <= 0.0 {
                    0.0
                } else {
                    inner.integral(lo, hi)
                }
            }
            InitialDataSpec::Table { points } => table_integral(points, a, b),
            InitialDataSpec::Monodisperse { .. } | InitialDataSpec::TableFile { .. } => {
                unreachable!("atoms and files are resolved before integration")
            }
        }
    }

    /// Location and count of the atom, if the data is (a shift of) a monodisperse atom.
    fn atom(&self) -> Option<(f64, f64)> {
        match self {
            InitialDataSpec::Monodisperse { mass, number } => Some((*mass, *number)),
            InitialDataSpec::Shifted { delta, inner } => inner.atom().map(|(m, n)| (m + delta, n)),
            _ => None,
        }
    }

    fn resolve_files(&self) -> Result<InitialDataSpec> {
        Ok(match self {
            InitialDataSpec::TableFile { path } => InitialDataSpec::Table { points: read_table_csv(path)? },
            InitialDataSpec::Shifted { delta, inner } => {
                InitialDataSpec::Shifted { delta: *delta, inner: Box::new(inner.resolve_files()?) }
            }
            other => other.clone(),
        })
    }

    /// Outermost table masses not covered by the grid.
    fn table_offenders(&self, grid: &Grid) -> Vec<f64> {
        match self {
            InitialDataSpec::Table { points } => points
                .iter()
                .map(|p| p.0)
                .filter(|&m| m < grid.bottom_edge() || m > grid.top_edge())
                .collect(),
            InitialDataSpec::Shifted { delta, inner } => {
                let shifted: Vec<f64> = match inner.as_ref() {
                    InitialDataSpec::Table { points } => points.iter().map(|p| p.0 + delta).collect(),
                    _ => return inner.table_offenders(grid).iter().map(|m| m + delta).collect(),
                };
                shifted
                    .into_iter()
                    .filter(|&m| m < grid.bottom_edge() || m > grid.top_edge())
                    .collect()
            }
            _ => Vec::new(),
        }
    }
}

fn table_integral(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let lo = a.max(x0);
        let hi = b.min(x1);
        if hi <= lo {
            continue;
        }
        let slope = (y1 - y0) / (x1 - x0);
        let y_lo = y0 + slope * (lo - x0);
        let y_hi = y0 + slope * (hi - x0);
        total += 0.5 * (y_lo + y_hi) * (hi - lo);
    }
    total
}

/// Reads `(mass, density)` rows; a non-numeric first row is treated as a header.
pub fn read_table_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::InitialData(format!(
                "{}: row {} has {} columns, expected 2",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(m), Ok(d)) => points.push((m, d)),
            _ if line == 0 => continue,
            _ => {
                return Err(Error::InitialData(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InitialData(format!("{}: masses must be strictly increasing", path.display())));
    }
    Ok(points)
}

/// Cell averages of the initial density; ledger fields start at zero.
pub fn init_density(grid: &Grid, spec: &InitialDataSpec) -> Result<DensityState> {
    let spec = spec.resolve_files()?;
    spec.validate()?;
    let offenders = spec.table_offenders(grid);
    if !offenders.is_empty() {
        return Err(Error::InitialData(format!(
            "table masses outside the grid [{}, {}]: {:?}",
            grid.bottom_edge(),
            grid.top_edge(),
            offenders
        )));
    }

    let mut state = DensityState::zeros(grid.n_cells());
    if let Some((mass, number)) = spec.atom() {
        let i = grid.locate(mass).ok_or_else(|| {
            Error::InitialData(format!(
                "monodisperse mass {mass} outside the grid [{}, {}]",
                grid.bottom_edge(),
                grid.top_edge()
            ))
        })?;
        state.g[i] = number / grid.widths()[i];
        return Ok(state);
    }

    let edges = grid.edges();
    for (i, g) in state.g.iter_mut().enumerate() {
        *g = spec.integral(edges[i], edges[i + 1]) / grid.widths()[i];
    }
    if let Some(bad) = state.g.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InitialData(format!("initial density produced invalid value {bad}")));
    }
    Ok(state)
}
