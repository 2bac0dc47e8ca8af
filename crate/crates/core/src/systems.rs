//! Benchmark systems: method-of-lines right-hand sides, initial conditions,
//! and the per-coordinate affine rescaling used by the correction models.
//!
//! Four systems are provided:
//! * `linear` — decoupled u' = λu, the oracle system for exactness tests;
//! * `burgers` — 1D viscous Burgers with periodic boundary identification;
//! * `diffusion_reaction` — 2D FitzHugh-Nagumo-type reaction-diffusion with
//!   no-flux (zero-gradient ghost) boundaries;
//! * `brusselator` — 2D/3D Brusselator with periodic boundaries.
//!
//! All PDE states pack the u-grid first, then the v-grid, row-major.
//! Initial-condition noise is drawn from seed-derived ChaCha streams, so
//! states are bitwise reproducible across platforms and thread counts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::derived_rng;

/// Margin applied when fitting [`RescaleMap`] from an observed trajectory.
pub const RESCALE_MARGIN: f64 = 0.25;
/// Floor for per-coordinate half-ranges (guards constant coordinates).
pub const MIN_HALF_RANGE: f64 = 1e-8;

const TAG_INIT_U: u64 = 101;
const TAG_INIT_V: u64 = 102;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub d: usize,
    pub lambda: f64,
}

impl Default for LinearSpec {
    fn default() -> Self {
        Self { d: 4, lambda: -1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurgersSpec {
    /// Number of spatial grid nodes.
    pub d: usize,
    /// Domain is [-half_width, half_width] with periodic identification.
    pub half_width: f64,
    /// Viscosity.
    pub nu: f64,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        Self {
            d: 128,
            half_width: 1.0,
            nu: 0.01,
        }
    }
}

impl BurgersSpec {
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.d as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionReactionSpec {
    pub nx: usize,
    pub ny: usize,
    pub du: f64,
    pub dv: f64,
    pub c: f64,
}

impl Default for DiffusionReactionSpec {
    fn default() -> Self {
        Self {
            nx: 8,
            ny: 8,
            du: 1e-3,
            dv: 5e-3,
            c: 5e-3,
        }
    }
}

impl DiffusionReactionSpec {
    /// Grid spacing on the square (-1,1)².
    pub fn dx(&self) -> f64 {
        2.0 / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        2.0 / self.ny as f64
    }
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrusselatorSpec {
    /// 2 or 3 spatial dimensions.
    pub spatial_dim: usize,
    pub n_per_axis: usize,
    pub d0: f64,
    pub d1: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for BrusselatorSpec {
    fn default() -> Self {
        Self {
            spatial_dim: 2,
            n_per_axis: 8,
            d0: 0.1,
            d1: 0.01,
            a: 1.0,
            b: 3.0,
        }
    }
}

impl BrusselatorSpec {
    /// Grid spacing on the periodic cube (-1,1)^spatial_dim.
    pub fn dx(&self) -> f64 {
        2.0 / self.n_per_axis as f64
    }
    pub fn cells(&self) -> usize {
        self.n_per_axis.pow(self.spatial_dim as u32)
    }
}

/// A benchmark system: dimension, right-hand side, and initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemSpec {
    Linear(LinearSpec),
    Burgers(BurgersSpec),
    DiffusionReaction(DiffusionReactionSpec),
    Brusselator(BrusselatorSpec),
}

impl SystemSpec {
    /// State dimension d.
    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Linear(s) => s.d,
            SystemSpec::Burgers(s) => s.d,
            SystemSpec::DiffusionReaction(s) => 2 * s.cells(),
            SystemSpec::Brusselator(s) => 2 * s.cells(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Linear(_) => "linear",
            SystemSpec::Burgers(_) => "burgers",
            SystemSpec::DiffusionReaction(_) => "diffusion_reaction",
            SystemSpec::Brusselator(s) => {
                if s.spatial_dim == 2 {
                    "brusselator2d"
                } else {
                    "brusselator3d"
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            SystemSpec::Linear(s) => {
                if s.d == 0 {
                    return Err("linear system needs d >= 1".into());
                }
            }
            SystemSpec::Burgers(s) => {
                if s.d < 3 {
                    return Err("burgers grid needs d >= 3".into());
                }
                if s.half_width <= 0.0 {
                    return Err("burgers half_width must be positive".into());
                }
                if s.nu < 0.0 {
                    return Err("burgers viscosity must be non-negative".into());
                }
            }
            SystemSpec::DiffusionReaction(s) => {
                if s.nx < 3 || s.ny < 3 {
                    return Err("diffusion_reaction grid needs nx, ny >= 3".into());
                }
            }
            SystemSpec::Brusselator(s) => {
                if s.spatial_dim != 2 && s.spatial_dim != 3 {
                    return Err("brusselator spatial_dim must be 2 or 3".into());
                }
                if s.n_per_axis < 3 {
                    return Err("brusselator grid needs n_per_axis >= 3".into());
                }
            }
        }
        Ok(())
    }

    /// Evaluates the right-hand side into `out` (all systems are autonomous;
    /// `t` is accepted for interface uniformity).
    pub fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]) {
        let _ = t;
        debug_assert_eq!(state.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match self {
            SystemSpec::Linear(s) => {
                for (o, &u) in out.iter_mut().zip(state) {
                    *o = s.lambda * u;
                }
            }
            SystemSpec::Burgers(s) => burgers_rhs(s, state, out),
            SystemSpec::DiffusionReaction(s) => diffusion_reaction_rhs(s, state, out),
            SystemSpec::Brusselator(s) => brusselator_rhs(s, state, out),
        }
    }

    /// Initial state at t0. Stochastic systems draw from streams derived
    /// from `seed`; deterministic systems ignore it.
    pub fn initial_state(&self, seed: u64) -> Vec<f64> {
        match self {
            SystemSpec::Linear(s) => (1..=s.d).map(|j| j as f64).collect(),
            SystemSpec::Burgers(s) => {
                let dx = s.dx();
                (0..s.d)
                    .map(|j| {
                        let x = -s.half_width + j as f64 * dx;
                        0.5 * ((4.5 * std::f64::consts::PI * x).cos() + 1.0)
                    })
                    .collect()
            }
            SystemSpec::DiffusionReaction(s) => {
                let cells = s.cells();
                let mut state = Vec::with_capacity(2 * cells);
                let mut ru = derived_rng(seed, &[TAG_INIT_U]);
                for _ in 0..cells {
                    state.push(ru.sample::<f64, _>(StandardNormal));
                }
                let mut rv = derived_rng(seed, &[TAG_INIT_V]);
                for _ in 0..cells {
                    state.push(rv.sample::<f64, _>(StandardNormal));
                }
                state
            }
            SystemSpec::Brusselator(s) => {
                let cells = s.cells();
                let mut state = vec![s.a; cells];
                let mut rv = derived_rng(seed, &[TAG_INIT_V]);
                for _ in 0..cells {
                    state.push(rv.sample::<f64, _>(StandardNormal));
                }
                state
            }
        }
    }
}

/// v_t = ν v_xx − v v_x with second-order central differences on a periodic
/// grid of `d` nodes.
fn burgers_rhs(spec: &BurgersSpec, v: &[f64], out: &mut [f64]) {
    let d = spec.d;
    let dx = spec.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let inv_2dx = 1.0 / (2.0 * dx);
    for j in 0..d {
        let jp = if j + 1 == d { 0 } else { j + 1 };
        let jm = if j == 0 { d - 1 } else { j - 1 };
        let vxx = (v[jp] - 2.0 * v[j] + v[jm]) * inv_dx2;
        let vx = (v[jp] - v[jm]) * inv_2dx;
        out[j] = spec.nu * vxx - v[j] * vx;
    }
}

/// 5-point Laplacian with zero-gradient ghost cells (clamped indices),
/// row-major `nx × ny` grid where the first axis has spacing `dx`.
pub(crate) fn neumann_laplacian_2d(
    w: &[f64],
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    out: &mut [f64],
) {
    let inv_dx2 = 1.0 / (dx * dx);
    let inv_dy2 = 1.0 / (dy * dy);
    for ix in 0..nx {
        let ixp = if ix + 1 == nx { ix } else { ix + 1 };
        let ixm = if ix == 0 { ix } else { ix - 1 };
        for iy in 0..ny {
            let iyp = if iy + 1 == ny { iy } else { iy + 1 };
            let iym = if iy == 0 { iy } else { iy - 1 };
            let c = w[ix * ny + iy];
            out[ix * ny + iy] = (w[ixp * ny + iy] - 2.0 * c + w[ixm * ny + iy]) * inv_dx2
                + (w[ix * ny + iyp] - 2.0 * c + w[ix * ny + iym]) * inv_dy2;
        }
    }
}

/// u_t = D_u Δu + (u − u³ − c − v); v_t = D_v Δv + (u − v).
fn diffusion_reaction_rhs(spec: &DiffusionReactionSpec, state: &[f64], out: &mut [f64]) {
    let cells = spec.cells();
    let (u, v) = state.split_at(cells);
    let (out_u, out_v) = out.split_at_mut(cells);
    neumann_laplacian_2d(u, spec.nx, spec.ny, spec.dx(), spec.dy(), out_u);
    for o in out_u.iter_mut() {
        *o *= spec.du;
    }
    neumann_laplacian_2d(v, spec.nx, spec.ny, spec.dx(), spec.dy(), out_v);
    for o in out_v.iter_mut() {
        *o *= spec.dv;
    }
    for i in 0..cells {
        out_u[i] += u[i] - u[i] * u[i] * u[i] - spec.c - v[i];
        out_v[i] += u[i] - v[i];
    }
}

/// Periodic 5-point Laplacian on an `n × n` grid with spacing `dx`.
pub(crate) fn periodic_laplacian_2d(w: &[f64], n: usize, dx: f64, out: &mut [f64]) {
    let inv_dx2 = 1.0 / (dx * dx);
    for ix in 0..n {
        let ixp = (ix + 1) % n;
        let ixm = (ix + n - 1) % n;
        for iy in 0..n {
            let iyp = (iy + 1) % n;
            let iym = (iy + n - 1) % n;
            let c = w[ix * n + iy];
            out[ix * n + iy] =
                (w[ixp * n + iy] + w[ixm * n + iy] + w[ix * n + iyp] + w[ix * n + iym] - 4.0 * c)
                    * inv_dx2;
        }
    }
}

/// Periodic 7-point Laplacian on an `n × n × n` grid with spacing `dx`.
pub(crate) fn periodic_laplacian_3d(w: &[f64], n: usize, dx: f64, out: &mut [f64]) {
    let inv_dx2 = 1.0 / (dx * dx);
    let idx = |ix: usize, iy: usize, iz: usize| (ix * n + iy) * n + iz;
    for ix in 0..n {
        let ixp = (ix + 1) % n;
        let ixm = (ix + n - 1) % n;
        for iy in 0..n {
            let iyp = (iy + 1) % n;
            let iym = (iy + n - 1) % n;
            for iz in 0..n {
                let izp = (iz + 1) % n;
                let izm = (iz + n - 1) % n;
                let c = w[idx(ix, iy, iz)];
                out[idx(ix, iy, iz)] = (w[idx(ixp, iy, iz)]
                    + w[idx(ixm, iy, iz)]
                    + w[idx(ix, iyp, iz)]
                    + w[idx(ix, iym, iz)]
                    + w[idx(ix, iy, izp)]
                    + w[idx(ix, iy, izm)]
                    - 6.0 * c)
                    * inv_dx2;
            }
        }
    }
}

/// u_t = D₀Δu + a − (1+b)u + vu²; v_t = D₁Δv + bu − vu².
fn brusselator_rhs(spec: &BrusselatorSpec, state: &[f64], out: &mut [f64]) {
    let cells = spec.cells();
    let (u, v) = state.split_at(cells);
    let (out_u, out_v) = out.split_at_mut(cells);
    let dx = spec.dx();
    if spec.spatial_dim == 2 {
        periodic_laplacian_2d(u, spec.n_per_axis, dx, out_u);
        periodic_laplacian_2d(v, spec.n_per_axis, dx, out_v);
    } else {
        periodic_laplacian_3d(u, spec.n_per_axis, dx, out_u);
        periodic_laplacian_3d(v, spec.n_per_axis, dx, out_v);
    }
    for i in 0..cells {
        let u2 = u[i] * u[i];
        out_u[i] = spec.d0 * out_u[i] + spec.a - (1.0 + spec.b) * u[i] + v[i] * u2;
        out_v[i] = spec.d1 * out_v[i] + spec.b * u[i] - v[i] * u2;
    }
}

/// Per-coordinate affine map sending an observed state envelope into [-1,1].
///
/// Fitted once per run from the initial coarse trajectory and then frozen;
/// the margin leaves headroom for later iterates that drift slightly outside
/// the fitted envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    center: Vec<f64>,
    half_range: Vec<f64>,
}

impl RescaleMap {
    /// Fits centers and half-ranges from the per-coordinate min/max over
    /// `trajectory`; half-ranges get `(1 + margin)` headroom and are floored
    /// at [`MIN_HALF_RANGE`].
    pub fn fit(trajectory: &[Vec<f64>], margin: f64) -> Self {
        assert!(
            !trajectory.is_empty(),
            "rescale map needs at least one state"
        );
        let d = trajectory[0].len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for state in trajectory {
            assert_eq!(state.len(), d, "trajectory states must share a dimension");
            for (j, &x) in state.iter().enumerate() {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let half_range: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| ((1.0 + margin) * 0.5 * (b - a)).max(MIN_HALF_RANGE))
            .collect();
        Self { center, half_range }
    }

    /// An identity map (center 0, half-range 1) of dimension `d`.
    pub fn identity(d: usize) -> Self {
        Self {
            center: vec![0.0; d],
            half_range: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_range(&self) -> &[f64] {
        &self.half_range
    }

    /// Raw coordinates → scaled coordinates (observed envelope → [-1,1]).
    pub fn rescale(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        x.iter()
            .zip(self.center.iter().zip(&self.half_range))
            .map(|(&xi, (&c, &h))| (xi - c) / h)
            .collect()
    }

    /// Scaled coordinates → raw coordinates.
    pub fn unrescale(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.dim());
        y.iter()
            .zip(self.center.iter().zip(&self.half_range))
            .map(|(&yi, (&c, &h))| c + h * yi)
            .collect()
    }

    /// Scales a raw-coordinate difference (the affine offset cancels).
    pub fn rescale_difference(&self, dx: &[f64]) -> Vec<f64> {
        assert_eq!(dx.len(), self.dim());
        dx.iter()
            .zip(&self.half_range)
            .map(|(&di, &h)| di / h)
            .collect()
    }

    /// Maps a rescaled-coordinate difference back to raw coordinates.
    pub fn unrescale_difference(&self, dy: &[f64]) -> Vec<f64> {
        assert_eq!(dy.len(), self.dim());
        dy.iter()
            .zip(&self.half_range)
            .map(|(&di, &h)| di * h)
            .collect()
    }
}
