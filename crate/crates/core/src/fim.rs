//! Two-target Fisher information atoms and their selection-weighted sums.
//!
//! For one `(r, i, p)` triple and sample `n`, with `c = d_i + d_r` and `t` the
//! sample time, the 4x4 information matrix over `[u1, v1, u2, v2]` is
//!
//! ```text
//! [ J1(1)     Re J2 ]      J1(q) = s |a_q|^2  M,   J2 = s a_1 conj(a_2) M h(t; dv) phi(du)
//! [ Re J2     J1(2) ]      M = [[c^2/2, c t], [c t, 2 t^2]],   s = 32 pi^2 / (lambda^2 sigma^2)
//! ```
//!
//! and an atom is the sum of these over the `N` samples. Atoms depend on the
//! targets only through `(du, dv)` and on the geometry only through `c`, so the
//! cache stores one atom per distinct `(d_i + d_r, p, grid point)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeltaTheta, RadarConfig};
use crate::selection::Selection;

/// Information contributed by one transmitter-pulse-receiver triple.
pub type FimAtom = Matrix4<f64>;

fn structure(c: f64, t: f64) -> Matrix2<f64> {
    Matrix2::new(0.5 * c * c, c * t, c * t, 2.0 * t * t)
}

fn prefactor(cfg: &RadarConfig) -> f64 {
    let lambda = cfg.wavelength();
    32.0 * PI * PI / (lambda * lambda * cfg.noise_std * cfg.noise_std)
}

fn alpha(cfg: &RadarConfig, q: usize) -> Complex64 {
    cfg.alpha.get(q).copied().unwrap_or_default()
}

fn check(cfg: &RadarConfig, r: usize, i: usize, p: usize, n: usize) -> Result<()> {
    for (what, index, len) in [
        ("receiver", r, cfg.receivers),
        ("transmitter", i, cfg.transmitters),
        ("pulse", p, cfg.pulses),
        ("sample", n, cfg.samples),
    ] {
        if index >= len {
            return Err(Error::IndexOutOfRange { what, index, len });
        }
    }
    Ok(())
}

/// Single-target information block `J1(q)` of one sample.
pub fn single_target_block(
    cfg: &RadarConfig,
    r: usize,
    i: usize,
    p: usize,
    n: usize,
    q: usize,
) -> Result<Matrix2<f64>> {
    check(cfg, r, i, p, n)?;
    let c = cfg.pair_offset(r, i);
    let t = cfg.sample_time(p, n);
    Ok(structure(c, t) * (prefactor(cfg) * alpha(cfg, q).norm_sqr()))
}

/// Cross-information block `J2` between the two targets of one sample.
pub fn cross_block(
    cfg: &RadarConfig,
    r: usize,
    i: usize,
    p: usize,
    n: usize,
    dtheta: DeltaTheta,
) -> Result<Matrix2<Complex64>> {
    check(cfg, r, i, p, n)?;
    let c = cfg.pair_offset(r, i);
    let t = cfg.sample_time(p, n);
    Ok(structure(c, t).map(|x| x * cross_factor(cfg, c, t, dtheta)))
}

fn cross_factor(cfg: &RadarConfig, c: f64, t: f64, dtheta: DeltaTheta) -> Complex64 {
    let lambda = cfg.wavelength();
    let phase = 4.0 * PI * dtheta.dv * t / lambda + 2.0 * PI * c * dtheta.du / lambda;
    alpha(cfg, 0) * alpha(cfg, 1).conj() * prefactor(cfg) * Complex64::from_polar(1.0, phase)
}

/// Closed-form atom for a pair offset `c = d_i + d_r` and pulse `p`.
fn atom_for_offset(cfg: &RadarConfig, c: f64, p: usize, dtheta: DeltaTheta) -> FimAtom {
    let s = prefactor(cfg);
    let a1 = alpha(cfg, 0).norm_sqr() * s;
    let a2 = alpha(cfg, 1).norm_sqr() * s;
    let mut f = Matrix4::zeros();
    for n in 0..cfg.samples {
        let t = cfg.sample_time(p, n);
        let m = structure(c, t);
        let x = cross_factor(cfg, c, t, dtheta).re;
        for a in 0..2 {
            for b in 0..2 {
                f[(a, b)] += a1 * m[(a, b)];
                f[(a + 2, b + 2)] += a2 * m[(a, b)];
                f[(a, b + 2)] += x * m[(a, b)];
                f[(a + 2, b)] += x * m[(a, b)];
            }
        }
    }
    f
}

/// Unweighted atom `F_{r,i,p}(dtheta)`, summed over the samples of one pulse.
pub fn atom(cfg: &RadarConfig, r: usize, i: usize, p: usize, dtheta: DeltaTheta) -> Result<FimAtom> {
    check(cfg, r, i, p, 0)?;
    Ok(atom_for_offset(cfg, cfg.pair_offset(r, i), p, dtheta))
}

/// `diag(gamma)^-1 F diag(gamma)^-1`.
pub fn apply_weights(f: &FimAtom, gamma: &[f64; 4]) -> Result<FimAtom> {
    if gamma.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::NonPositiveWeight);
    }
    Ok(Matrix4::from_fn(|a, b| f[(a, b)] / (gamma[a] * gamma[b])))
}

/// Discrete set of two-target parameter differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaGrid {
    pub points: Vec<DeltaTheta>,
    pub du_range: (f64, f64),
    pub dv_range: (f64, f64),
    pub exclusion_radius: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Cartesian grid over `du_range x dv_range` (end points included) without the
/// points whose span-normalized norm is below `exclusion_radius`.
pub fn build_grid(
    du_range: (f64, f64),
    dv_range: (f64, f64),
    nu: usize,
    nv: usize,
    exclusion_radius: f64,
) -> Result<DeltaGrid> {
    let span = |r: (f64, f64)| r.1 - r.0;
    DeltaGrid::elliptic(
        du_range,
        dv_range,
        nu,
        nv,
        (span(du_range), span(dv_range)),
        exclusion_radius,
    )
}

impl DeltaGrid {
    /// Cartesian grid that drops points inside the ellipse
    /// `(du / su)^2 + (dv / sv)^2 < radius^2`. A zero scale ignores that axis.
    pub fn elliptic(
        du_range: (f64, f64),
        dv_range: (f64, f64),
        nu: usize,
        nv: usize,
        scales: (f64, f64),
        exclusion_radius: f64,
    ) -> Result<Self> {
        if nu == 0 || nv == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(du_range.1 >= du_range.0) || !(dv_range.1 >= dv_range.0) {
            return Err(Error::InvalidConfig("grid ranges must be ordered".into()));
        }
        let norm = |x: f64, s: f64| if s > 0.0 { x / s } else { 0.0 };
        let mut points = Vec::with_capacity(nu * nv);
        for du in linspace(du_range.0, du_range.1, nu) {
            for dv in linspace(dv_range.0, dv_range.1, nv) {
                let rho = norm(du, scales.0).hypot(norm(dv, scales.1));
                if rho >= exclusion_radius {
                    points.push(DeltaTheta { du, dv });
                }
            }
        }
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(Self {
            points,
            du_range,
            dv_range,
            exclusion_radius,
        })
    }

    /// Symmetric grid of `extent` resolution cells per side, excluding the
    /// `exclusion` cells around the origin. `du` is clipped to `[-2, 2]`.
    pub fn resolution_cells(
        cfg: &RadarConfig,
        extent: f64,
        per_axis: usize,
        exclusion: f64,
    ) -> Result<Self> {
        let ru = cfg.angle_resolution();
        let rv = cfg.velocity_resolution();
        let umax = (extent * ru).min(2.0);
        let vmax = extent * rv;
        Self::elliptic((-umax, umax), (-vmax, vmax), per_axis, per_axis, (ru, rv), exclusion)
    }

    /// Default design grid: `du` in `[-0.5, 0.5]` and `dv` in `[-10, 10]` m/s on
    /// a 25 x 25 lattice, without the resolution cell around the origin.
    pub fn default_for(cfg: &RadarConfig) -> Result<Self> {
        Self::elliptic(
            (-0.5, 0.5),
            (-10.0, 10.0),
            25,
            25,
            (cfg.angle_resolution(), cfg.velocity_resolution()),
            1.0,
        )
    }

    pub fn from_points(points: Vec<DeltaTheta>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let fold = |f: fn(&DeltaTheta) -> f64| {
            points
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        };
        Ok(Self {
            du_range: fold(|p| p.du),
            dv_range: fold(|p| p.dv),
            exclusion_radius: 0.0,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Dense, immutable table of every atom over the candidate triples and grid.
///
/// Triples whose pairs share `d_i + d_r` share storage; [`FimCache::atom`]
/// presents the full `(r, i, p, d)` view.
#[derive(Clone, Debug)]
pub struct FimCache {
    transmitters: usize,
    pulses: usize,
    receivers: usize,
    /// Storage cell of pair `(r, i)` at `r * I + i`.
    pair_cell: Vec<usize>,
    num_cells: usize,
    /// Indexed by `(cell * P + p) * D + d`.
    atoms: Vec<FimAtom>,
    grid: DeltaGrid,
    weighted: bool,
}

impl FimCache {
    /// Computes every atom of `cfg` over `grid`, applying the compensation
    /// weights when `weighted` is set.
    pub fn build(cfg: &RadarConfig, grid: &DeltaGrid, weighted: bool) -> Result<Self> {
        cfg.validate()?;
        if cfg.alpha.len() < 2 {
            return Err(Error::TargetCount {
                expected: 2,
                found: cfg.alpha.len(),
            });
        }
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let (ni, nr, np) = (cfg.transmitters, cfg.receivers, cfg.pulses);
        // d_i + d_r = (r - i) d exactly, so the index difference names the cell.
        let pair_cell = (0..nr)
            .flat_map(|r| (0..ni).map(move |i| r + ni - 1 - i))
            .collect();
        let num_cells = ni + nr - 1;
        let mut atoms = Vec::with_capacity(num_cells * np * grid.len());
        for cell in 0..num_cells {
            let offset = cfg.index_offset(cell as i64 - (ni - 1) as i64);
            for p in 0..np {
                for dtheta in &grid.points {
                    let a = atom_for_offset(cfg, offset, p, *dtheta);
                    atoms.push(if weighted { apply_weights(&a, &cfg.gamma)? } else { a });
                }
            }
        }
        Ok(Self {
            transmitters: ni,
            pulses: np,
            receivers: nr,
            pair_cell,
            num_cells,
            atoms,
            grid: grid.clone(),
            weighted,
        })
    }

    /// Cache over explicit atoms, indexed `((r * I + i) * P + p) * D + d`.
    pub fn from_atoms(
        transmitters: usize,
        pulses: usize,
        receivers: usize,
        grid: DeltaGrid,
        atoms: Vec<FimAtom>,
        weighted: bool,
    ) -> Result<Self> {
        let expected = transmitters * pulses * receivers * grid.len();
        if atoms.len() != expected || grid.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} atoms, got {}",
                atoms.len()
            )));
        }
        Ok(Self {
            transmitters,
            pulses,
            receivers,
            pair_cell: (0..receivers * transmitters).collect(),
            num_cells: receivers * transmitters,
            atoms,
            grid,
            weighted,
        })
    }

    pub fn transmitters(&self) -> usize {
        self.transmitters
    }

    pub fn pulses(&self) -> usize {
        self.pulses
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn num_tx_pulses(&self) -> usize {
        self.transmitters * self.pulses
    }

    pub fn grid(&self) -> &DeltaGrid {
        &self.grid
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn empty_selection(&self) -> Selection {
        Selection::empty(self.transmitters, self.pulses, self.receivers)
    }

    pub fn full_selection(&self) -> Selection {
        Selection::full_dims(self.transmitters, self.pulses, self.receivers)
    }

    fn slot(&self, r: usize, i: usize, p: usize) -> usize {
        (self.pair_cell[r * self.transmitters + i] * self.pulses + p) * self.grid.len()
    }

    /// Atom of receiver `r`, transmitter `i`, pulse `p` at grid point `d`.
    pub fn atom(&self, r: usize, i: usize, p: usize, d: usize) -> &FimAtom {
        &self.atoms[self.slot(r, i, p) + d]
    }

    /// Atoms of one triple over the whole grid.
    pub fn atoms_over_grid(&self, r: usize, i: usize, p: usize) -> &[FimAtom] {
        let s = self.slot(r, i, p);
        &self.atoms[s..s + self.grid.len()]
    }

    fn check_selection(&self, sel: &Selection) -> Result<()> {
        if sel.num_transmitters() != self.transmitters
            || sel.pulses_per_transmitter() != self.pulses
            || sel.num_candidate_receivers() != self.receivers
        {
            return Err(Error::DimensionMismatch(
                "selection does not match the cached configuration".into(),
            ));
        }
        Ok(())
    }

    /// Assembled information at every grid point for a Boolean selection.
    pub fn assemble(&self, sel: &Selection) -> Result<Vec<FimAtom>> {
        self.check_selection(sel)?;
        let mut weights = vec![0.0; self.num_cells * self.pulses];
        for r in sel.selected_receivers() {
            for (i, p) in sel.selected_pulses() {
                weights[self.pair_cell[r * self.transmitters + i] * self.pulses + p] += 1.0;
            }
        }
        Ok(self.sum_cells(&weights))
    }

    /// Assembled information with fractional weights `b_r * A_ip`.
    pub fn assemble_fractional(&self, pulse_w: &[f64], rx_w: &[f64]) -> Result<Vec<FimAtom>> {
        if pulse_w.len() != self.num_tx_pulses() || rx_w.len() != self.receivers {
            return Err(Error::DimensionMismatch("fractional weight lengths".into()));
        }
        Ok(self.assemble_pairs(|a, r| pulse_w[a] * rx_w[r]))
    }

    /// Assembled information with an arbitrary weight per
    /// (transmit pulse `a = i * P + p`, receiver `r`) pair.
    pub fn assemble_pairs(&self, weight: impl Fn(usize, usize) -> f64) -> Vec<FimAtom> {
        let mut weights = vec![0.0; self.num_cells * self.pulses];
        for r in 0..self.receivers {
            for i in 0..self.transmitters {
                for p in 0..self.pulses {
                    let w = weight(i * self.pulses + p, r);
                    if w != 0.0 {
                        weights[self.pair_cell[r * self.transmitters + i] * self.pulses + p] += w;
                    }
                }
            }
        }
        self.sum_cells(&weights)
    }

    fn sum_cells(&self, weights: &[f64]) -> Vec<FimAtom> {
        let d_len = self.grid.len();
        let mut out = vec![Matrix4::zeros(); d_len];
        for (slot, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let atoms = &self.atoms[slot * d_len..(slot + 1) * d_len];
            for (acc, a) in out.iter_mut().zip(atoms) {
                *acc += a * w;
            }
        }
        out
    }

    /// Information of transmit pulse `a` summed over the receivers in `rx`,
    /// over the whole grid.
    pub fn pulse_information(&self, a: usize, rx: &[bool]) -> Vec<FimAtom> {
        let (i, p) = (a / self.pulses, a % self.pulses);
        let mut out = vec![Matrix4::zeros(); self.grid.len()];
        for r in (0..self.receivers).filter(|&r| rx[r]) {
            for (acc, f) in out.iter_mut().zip(self.atoms_over_grid(r, i, p)) {
                *acc += f;
            }
        }
        out
    }
}
