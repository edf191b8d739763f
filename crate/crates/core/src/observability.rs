//! Lie-derivative observability matrices and rank sweeps.
//!
//! All systems here have a constant process function, so the `k`-th Lie
//! derivative is the `k`-th directional derivative of `h` along `f` and the
//! rows have closed forms. A nested central-difference path is kept for
//! cross-checking.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Systems whose observability is analysed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservedSystem {
    /// State `[ψ]`, `ψ̇ = -ω`, `y = b sin ψ`.
    Planar { baseline: f64, omega: f64 },
    /// State `[θ, ψ]`, `θ̇ = 0`, `ψ̇ = -ω`, `y = b cos θ sin ψ`.
    Spherical { baseline: f64, omega: f64 },
    /// Spherical model with θ known; state `[ψ]`.
    AzimuthSubsystem {
        baseline: f64,
        omega: f64,
        elevation: f64,
    },
    /// Spherical model with ψ known at the evaluation instant; state `[θ]`, `θ̇ = 0`.
    ElevationSubsystem { baseline: f64, azimuth: f64 },
    /// State `[D]`, `Ḋ = 0`, `y = b Δd / sqrt(Δd² + D²)`.
    Distance { baseline: f64, delta_d: f64 },
}

impl ObservedSystem {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Planar { .. } => "planar",
            Self::Spherical { .. } => "spherical",
            Self::AzimuthSubsystem { .. } => "azimuth-subsystem",
            Self::ElevationSubsystem { .. } => "elevation-subsystem",
            Self::Distance { .. } => "distance",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::Spherical { .. } => 2,
            _ => 1,
        }
    }

    pub fn baseline(&self) -> f64 {
        match *self {
            Self::Planar { baseline, .. }
            | Self::Spherical { baseline, .. }
            | Self::AzimuthSubsystem { baseline, .. }
            | Self::ElevationSubsystem { baseline, .. }
            | Self::Distance { baseline, .. } => baseline,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::LengthMismatch(x.len(), self.state_dim()));
        }
        let params_finite = match *self {
            Self::Planar { baseline, omega } | Self::Spherical { baseline, omega } => {
                baseline.is_finite() && omega.is_finite()
            }
            Self::AzimuthSubsystem {
                baseline,
                omega,
                elevation,
            } => baseline.is_finite() && omega.is_finite() && elevation.is_finite(),
            Self::ElevationSubsystem { baseline, azimuth } => {
                baseline.is_finite() && azimuth.is_finite()
            }
            Self::Distance { baseline, delta_d } => baseline.is_finite() && delta_d.is_finite(),
        };
        if !params_finite || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::UndefinedState(format!("{x:?} ({self:?})")));
        }
        if let Self::Distance { delta_d, .. } = *self {
            if x[0] < 0.0 || (x[0] == 0.0 && delta_d == 0.0) {
                return Err(Error::UndefinedState(format!(
                    "D = {}, delta_d = {delta_d}",
                    x[0]
                )));
            }
        }
        Ok(())
    }

    /// Measurement `h(x)`.
    pub fn measure(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Planar { baseline, .. } => baseline * x[0].sin(),
            Self::Spherical { baseline, .. } => baseline * x[0].cos() * x[1].sin(),
            Self::AzimuthSubsystem {
                baseline,
                elevation,
                ..
            } => baseline * elevation.cos() * x[0].sin(),
            Self::ElevationSubsystem { baseline, azimuth } => baseline * x[0].cos() * azimuth.sin(),
            Self::Distance { baseline, delta_d } => {
                baseline * delta_d / (delta_d * delta_d + x[0] * x[0]).sqrt()
            }
        }
    }

    /// Process function `f(x)` (constant for every system here).
    pub fn process(&self) -> Vec<f64> {
        match *self {
            Self::Planar { omega, .. } | Self::AzimuthSubsystem { omega, .. } => vec![-omega],
            Self::Spherical { omega, .. } => vec![0.0, -omega],
            Self::ElevationSubsystem { .. } | Self::Distance { .. } => vec![0.0],
        }
    }

    /// Gradient of the `k`-th Lie derivative of `h` along `f`.
    fn analytic_row(&self, x: &[f64], k: usize) -> Vec<f64> {
        use std::f64::consts::FRAC_PI_2;
        let shift = k as f64 * FRAC_PI_2;
        match *self {
            Self::Planar { baseline, omega } => {
                vec![baseline * (-omega).powi(k as i32) * (x[0] + shift).cos()]
            }
            Self::Spherical { baseline, omega } => {
                let (theta, psi) = (x[0], x[1]);
                let g = (-omega).powi(k as i32);
                vec![
                    -baseline * theta.sin() * g * (psi + shift).sin(),
                    baseline * theta.cos() * g * (psi + shift).cos(),
                ]
            }
            Self::AzimuthSubsystem {
                baseline,
                omega,
                elevation,
            } => vec![baseline * elevation.cos() * (-omega).powi(k as i32) * (x[0] + shift).cos()],
            Self::ElevationSubsystem { baseline, azimuth } => {
                if k == 0 {
                    vec![-baseline * x[0].sin() * azimuth.sin()]
                } else {
                    vec![0.0]
                }
            }
            Self::Distance { baseline, delta_d } => {
                if k == 0 {
                    let dist = x[0];
                    let r2 = delta_d * delta_d + dist * dist;
                    vec![-baseline * delta_d * dist / (r2 * r2.sqrt())]
                } else {
                    vec![0.0]
                }
            }
        }
    }
}

/// Stacks the gradients of `L_f^0 h, ..., L_f^{rows-1} h` evaluated at `x`.
pub fn lie_observability_matrix(
    sys: &ObservedSystem,
    x: &[f64],
    rows: usize,
) -> Result<DMatrix<f64>> {
    sys.check(x)?;
    let n = sys.state_dim();
    if rows < n {
        return Err(Error::InvalidParameter {
            name: "rows",
            reason: format!("need at least {n} rows"),
        });
    }
    let mut m = DMatrix::zeros(rows, n);
    for k in 0..rows {
        for (j, v) in sys.analytic_row(x, k).into_iter().enumerate() {
            m[(k, j)] = v;
        }
    }
    Ok(m)
}

/// Same matrix as [`lie_observability_matrix`], built by nested central
/// differences with the given step.
pub fn numeric_lie_matrix(
    sys: &ObservedSystem,
    x: &[f64],
    rows: usize,
    step: f64,
) -> Result<DMatrix<f64>> {
    sys.check(x)?;
    let n = sys.state_dim();
    let f = sys.process();

    fn lie(sys: &ObservedSystem, f: &[f64], x: &[f64], k: usize, h: f64) -> f64 {
        if k == 0 {
            return sys.measure(x);
        }
        grad(sys, f, x, k - 1, h)
            .iter()
            .zip(f)
            .map(|(g, fi)| g * fi)
            .sum()
    }

    fn grad(sys: &ObservedSystem, f: &[f64], x: &[f64], k: usize, h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (lie(sys, f, &xp, k, h) - lie(sys, f, &xm, k, h)) / (2.0 * h)
            })
            .collect()
    }

    let mut m = DMatrix::zeros(rows, n);
    for k in 0..rows {
        for (j, v) in grad(sys, &f, x, k, step).into_iter().enumerate() {
            m[(k, j)] = v;
        }
    }
    Ok(m)
}

/// `det` of the first two rows of the spherical observability matrix.
pub fn det_omega_3d(theta: f64, _psi: f64, b: f64, omega: f64) -> f64 {
    -b * b * omega * theta.sin() * theta.cos()
}

/// Singular-value threshold relative to the largest singular value.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-8;

/// Rank and extreme singular values of `m`.
///
/// A singular value counts toward the rank when it is at least
/// `relative · max(σ_max, scale)`. The `scale` floor matters for single-column
/// matrices, where `σ_min = σ_max` and a purely relative test can never fire.
pub fn numeric_rank(m: &DMatrix<f64>, relative: f64, scale: f64) -> (usize, f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = relative * max.max(scale);
    let rank = sv.iter().filter(|&&s| s >= tol).count();
    (rank, min, max)
}

/// Which system to sweep; baseline and rotation rate are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSystem {
    Planar,
    Spherical,
    AzimuthSubsystem,
    ElevationSubsystem,
    Distance,
}

impl SweepSystem {
    /// Names of the two grid axes (with units).
    pub fn axes(&self) -> (&'static str, &'static str) {
        match self {
            Self::Distance => ("distance_m", "delta_d_m"),
            _ => ("elevation_deg", "psi_deg"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "planar" | "2d" => Self::Planar,
            "spherical" | "3d" => Self::Spherical,
            "azimuth-subsystem" => Self::AzimuthSubsystem,
            "elevation-subsystem" => Self::ElevationSubsystem,
            "distance" => Self::Distance,
            _ => return None,
        })
    }

    pub const ALL: [SweepSystem; 5] = [
        Self::Planar,
        Self::Spherical,
        Self::AzimuthSubsystem,
        Self::ElevationSubsystem,
        Self::Distance,
    ];

    /// System and state at grid point `(a, b)`; angles in degrees.
    fn at(&self, baseline: f64, omega: f64, a: f64, b: f64) -> (ObservedSystem, Vec<f64>) {
        let (theta, psi) = (a.to_radians(), b.to_radians());
        match self {
            Self::Planar => (ObservedSystem::Planar { baseline, omega }, vec![psi]),
            Self::Spherical => (
                ObservedSystem::Spherical { baseline, omega },
                vec![theta, psi],
            ),
            Self::AzimuthSubsystem => (
                ObservedSystem::AzimuthSubsystem {
                    baseline,
                    omega,
                    elevation: theta,
                },
                vec![psi],
            ),
            Self::ElevationSubsystem => (
                ObservedSystem::ElevationSubsystem {
                    baseline,
                    azimuth: psi,
                },
                vec![theta],
            ),
            Self::Distance => (
                ObservedSystem::Distance {
                    baseline,
                    delta_d: b,
                },
                vec![a],
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub baseline: f64,
    pub omega: f64,
    /// number of stacked Lie rows
    pub rows: usize,
    pub relative_tolerance: f64,
}

impl SweepGrid {
    /// Inclusive range `start, start+step, ..., <= end`.
    pub fn range(start: f64, end: f64, step: f64) -> Vec<f64> {
        let n = ((end - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + i as f64 * step).collect()
    }

    /// Angle grid: elevation 0..=90, ψ -180..=180, both in `step_deg` increments.
    pub fn angles(step_deg: f64, baseline: f64, omega: f64) -> Self {
        Self {
            first: Self::range(0.0, 90.0, step_deg),
            second: Self::range(-180.0, 180.0, step_deg),
            baseline,
            omega,
            rows: 2,
            relative_tolerance: DEFAULT_RELATIVE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub first: f64,
    pub second: f64,
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `false` when the state is outside the model's domain
    pub defined: bool,
}

impl CellResult {
    pub fn singular(&self, dim: usize) -> bool {
        self.defined && self.rank < dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityReport {
    pub system: SweepSystem,
    pub state_dim: usize,
    pub cells: Vec<CellResult>,
}

/// Evaluates rank over the grid and flags rank-deficient cells. Undefined
/// cells (e.g. `D = 0` with `Δd = 0`) are recorded but never flagged.
pub fn singularity_sweep(system: SweepSystem, grid: &SweepGrid) -> ObservabilityReport {
    let points: Vec<(f64, f64)> = grid
        .first
        .iter()
        .flat_map(|&a| grid.second.iter().map(move |&b| (a, b)))
        .collect();
    let (probe, _) = system.at(grid.baseline, grid.omega, 1.0, 1.0);
    let state_dim = probe.state_dim();
    let cells = points
        .par_iter()
        .map(|&(a, b)| {
            let (sys, x) = system.at(grid.baseline, grid.omega, a, b);
            match lie_observability_matrix(&sys, &x, grid.rows.max(state_dim)) {
                Ok(m) => {
                    let (rank, sigma_min, sigma_max) =
                        numeric_rank(&m, grid.relative_tolerance, grid.baseline.abs());
                    CellResult {
                        first: a,
                        second: b,
                        rank,
                        sigma_min,
                        sigma_max,
                        defined: true,
                    }
                }
                Err(_) => CellResult {
                    first: a,
                    second: b,
                    rank: 0,
                    sigma_min: f64::NAN,
                    sigma_max: f64::NAN,
                    defined: false,
                },
            }
        })
        .collect();
    ObservabilityReport {
        system,
        state_dim,
        cells,
    }
}

impl ObservabilityReport {
    pub fn singular_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.singular(self.state_dim))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (a, b) = self.system.axes();
        writeln!(w, "{a},{b},rank,sigma_min,sigma_max,singular,defined")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{:e},{:e},{},{}",
                c.first,
                c.second,
                c.rank,
                c.sigma_min,
                c.sigma_max,
                c.singular(self.state_dim),
                c.defined
            )?;
        }
        Ok(())
    }

    /// Human-readable summary: which axis values contain singular cells.
    pub fn summary(&self) -> String {
        let (a, b) = self.system.axes();
        let singular: Vec<_> = self.singular_cells().collect();
        let undefined = self.cells.iter().filter(|c| !c.defined).count();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "system {:?}: {} cells, {} rank-deficient, {} undefined",
            self.system,
            self.cells.len(),
            singular.len(),
            undefined
        );
        let mut firsts: Vec<f64> = Vec::new();
        let mut seconds: Vec<f64> = Vec::new();
        for c in &singular {
            if !firsts.contains(&c.first) {
                firsts.push(c.first);
            }
            if !seconds.contains(&c.second) {
                seconds.push(c.second);
            }
        }
        firsts.sort_by(f64::total_cmp);
        seconds.sort_by(f64::total_cmp);
        // An axis value is reported as a singular line when every defined cell on it is singular.
        let full = |on_first: bool, v: f64| {
            self.cells
                .iter()
                .filter(|c| {
                    c.defined
                        && if on_first {
                            c.first == v
                        } else {
                            c.second == v
                        }
                })
                .all(|c| c.singular(self.state_dim))
        };
        let lines_a: Vec<_> = firsts.iter().filter(|&&v| full(true, v)).collect();
        let lines_b: Vec<_> = seconds.iter().filter(|&&v| full(false, v)).collect();
        let _ = writeln!(s, "  singular for every {b} at {a} = {lines_a:?}");
        let _ = writeln!(s, "  singular for every {a} at {b} = {lines_b:?}");
        s
    }
}
