//! Scalar design criteria over assembled FIMs, and the (modified) frame
//! potential of a selection.
//!
//! Internally every FIM criterion is a cost to be minimised: the CRLB trace,
//! its largest eigenvalue, or the negated regularized log-determinant. The
//! natural-sign value is what reports show.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{DeltaGrid, FimAtom, FimCache};
use crate::model::RadarConfig;
use crate::selection::Selection;

/// Condition-number cap above which the CRLB falls back to a pseudo-inverse.
pub const DEFAULT_COND_CAP: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CriterionKind {
    AOpt,
    DOpt,
    EOpt,
    Mfp,
    Fp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Aggregation {
    /// Worst case over the grid.
    #[default]
    MaxOverGrid,
    MeanOverGrid,
}

/// Which targets the criterion accounts for. `Single` keeps the block of the
/// first target only, i.e. the one-target FIM.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetModel {
    Single,
    #[default]
    Two,
}

/// Parameters that are estimated; the others are treated as known, which
/// keeps the corresponding principal block of the FIM.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSet {
    Angle,
    Velocity,
    #[default]
    Both,
}

/// Row normalization of the modified frame potential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfpNormalization {
    /// `|<g, g'>|^2 / (|g|^2 |g'|^2)^2`.
    #[default]
    Literal,
    /// Squared cosine similarity `|<g, g'>|^2 / (|g|^2 |g'|^2)`.
    Cosine,
}

/// Normalization applied to each pair term of a frame potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameNorm {
    None,
    Literal,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub kind: CriterionKind,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Log-det regularization. Derived from the atoms when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub targets: TargetModel,
    #[serde(default)]
    pub params: ParamSet,
    #[serde(default)]
    pub normalization: MfpNormalization,
}

impl Criterion {
    pub fn new(kind: CriterionKind, aggregation: Aggregation) -> Self {
        Self {
            kind,
            aggregation,
            epsilon: None,
            targets: TargetModel::Two,
            params: ParamSet::Both,
            normalization: MfpNormalization::Literal,
        }
    }

    pub fn a_opt() -> Self {
        Self::new(CriterionKind::AOpt, Aggregation::MaxOverGrid)
    }

    pub fn d_opt() -> Self {
        Self::new(CriterionKind::DOpt, Aggregation::MeanOverGrid)
    }

    pub fn e_opt() -> Self {
        Self::new(CriterionKind::EOpt, Aggregation::MaxOverGrid)
    }

    pub fn mfp() -> Self {
        Self::new(CriterionKind::Mfp, Aggregation::MeanOverGrid)
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn with_targets(mut self, targets: TargetModel) -> Self {
        self.targets = targets;
        self
    }

    pub fn with_params(mut self, params: ParamSet) -> Self {
        self.params = params;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_normalization(mut self, normalization: MfpNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn is_fim_based(&self) -> bool {
        matches!(self.kind, CriterionKind::AOpt | CriterionKind::DOpt | CriterionKind::EOpt)
    }

    /// Whether larger natural values are better.
    pub fn maximizes(&self) -> bool {
        self.kind == CriterionKind::DOpt
    }

    /// Indices of `[u1, v1, u2, v2]` kept by the criterion.
    pub fn indices(&self) -> &'static [usize] {
        match (self.targets, self.params) {
            (TargetModel::Single, ParamSet::Angle) => &[0],
            (TargetModel::Single, ParamSet::Velocity) => &[1],
            (TargetModel::Single, ParamSet::Both) => &[0, 1],
            (TargetModel::Two, ParamSet::Angle) => &[0, 2],
            (TargetModel::Two, ParamSet::Velocity) => &[1, 3],
            (TargetModel::Two, ParamSet::Both) => &[0, 1, 2, 3],
        }
    }

    /// Regularization actually used: the configured one, or `1e-6` times the
    /// median trace of the kept block over all cached atoms.
    pub fn resolve_epsilon(&self, cache: &FimCache) -> f64 {
        if let Some(eps) = self.epsilon {
            return eps;
        }
        let idx = self.indices();
        let mut traces = Vec::new();
        for r in 0..cache.receivers() {
            for i in 0..cache.transmitters() {
                for p in 0..cache.pulses() {
                    traces.extend(
                        cache
                            .atoms_over_grid(r, i, p)
                            .iter()
                            .map(|f| idx.iter().map(|&k| f[(k, k)]).sum::<f64>()),
                    );
                }
            }
        }
        let mid = traces.len() / 2;
        let median = *traces.select_nth_unstable_by(mid, f64::total_cmp).1;
        let scale = if median > 0.0 {
            median
        } else {
            traces.iter().copied().fold(0.0, f64::max)
        };
        if scale > 0.0 {
            1e-6 * scale
        } else {
            1e-6
        }
    }

    /// Cost of one assembled FIM (lower is better).
    pub fn point_cost(&self, f: &FimAtom, epsilon: f64) -> Result<f64> {
        let idx = self.indices();
        let cost = match self.kind {
            CriterionKind::AOpt => principal(f, idx, |m| fixed::a_opt(m), |m| dynamic::a_opt(m)),
            CriterionKind::EOpt => principal(f, idx, |m| fixed::e_opt(m), |m| dynamic::e_opt(m)),
            CriterionKind::DOpt => -principal(
                f,
                idx,
                |m| fixed::d_opt(m, epsilon),
                |m| dynamic::d_opt(m, epsilon),
            ),
            CriterionKind::Mfp | CriterionKind::Fp => {
                return Err(Error::IllegalCombination(
                    "frame potentials are not functions of the FIM".into(),
                ))
            }
        };
        Ok(cost)
    }

    /// Aggregated cost over the grid.
    pub fn cost(&self, fims: &[FimAtom], epsilon: f64) -> Result<f64> {
        let costs = fims
            .iter()
            .map(|f| self.point_cost(f, epsilon))
            .collect::<Result<Vec<_>>>()?;
        aggregate(&costs, self.aggregation)
    }

    /// Converts an aggregated cost to the natural-sign objective.
    pub fn natural(&self, cost: f64) -> f64 {
        if self.maximizes() {
            -cost
        } else {
            cost
        }
    }

    /// Natural-sign objective of a selection.
    pub fn evaluate(&self, cache: &FimCache, sel: &Selection) -> Result<f64> {
        let eps = self.resolve_epsilon(cache);
        Ok(self.natural(self.cost(&cache.assemble(sel)?, eps)?))
    }
}

fn principal<R>(
    f: &FimAtom,
    idx: &[usize],
    full: impl Fn(&Matrix4<f64>) -> R,
    sub: impl Fn(&DMatrix<f64>) -> R,
) -> R {
    if idx.len() == 4 {
        full(f)
    } else {
        sub(&DMatrix::from_fn(idx.len(), idx.len(), |a, b| f[(idx[a], idx[b])]))
    }
}

macro_rules! small_ops {
    ($name:ident, $mat:ty) => {
        mod $name {
            use super::*;

            pub fn norm1(m: &$mat) -> f64 {
                m.column_iter()
                    .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            }

            pub fn inverse(m: &$mat, cap: f64) -> Option<$mat> {
                let inv = m.clone().try_inverse()?;
                let cond = norm1(m) * norm1(&inv);
                (cond.is_finite() && cond < cap).then_some(inv)
            }

            #[allow(dead_code)]
            pub fn pinv(m: &$mat) -> $mat {
                let eig = m.clone().symmetric_eigen();
                let tol = eig.eigenvalues.amax() * 1e-12;
                let mut out = m.map(|_| 0.0);
                for (k, &l) in eig.eigenvalues.iter().enumerate() {
                    if l > tol {
                        let v = eig.eigenvectors.column(k);
                        out += v * v.transpose() / l;
                    }
                }
                out
            }

            pub fn a_opt(m: &$mat) -> f64 {
                inverse(m, DEFAULT_COND_CAP).map_or(f64::INFINITY, |c| c.trace())
            }

            pub fn e_opt(m: &$mat) -> f64 {
                if inverse(m, DEFAULT_COND_CAP).is_none() {
                    return f64::INFINITY;
                }
                1.0 / m.clone().symmetric_eigenvalues().min()
            }

            pub fn min_eig(m: &$mat) -> f64 {
                m.clone().symmetric_eigenvalues().min()
            }

            pub fn d_opt(m: &$mat, eps: f64) -> f64 {
                let n = m.nrows();
                let mut a = m.clone();
                for k in 0..n {
                    a[(k, k)] += eps;
                }
                let logdet = match a.clone().cholesky() {
                    Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>(),
                    None => a
                        .symmetric_eigenvalues()
                        .iter()
                        .map(|l| l.max(eps * 1e-12).ln())
                        .sum(),
                };
                logdet - n as f64 * eps.ln()
            }
        }
    };
}

small_ops!(fixed, Matrix4<f64>);
small_ops!(dynamic, DMatrix<f64>);

/// CRLB together with a flag telling whether the pseudo-inverse was used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crlb {
    pub matrix: Matrix4<f64>,
    pub singular: bool,
}

/// `F^-1` when the 1-norm condition number is below `DEFAULT_COND_CAP`,
/// otherwise the eigen pseudo-inverse with eigenvalues below `|F| 1e-12`
/// dropped.
pub fn crlb(f: &FimAtom) -> Crlb {
    crlb_with_cap(f, DEFAULT_COND_CAP)
}

pub fn crlb_with_cap(f: &FimAtom, cap: f64) -> Crlb {
    match fixed::inverse(f, cap) {
        Some(matrix) => Crlb {
            matrix,
            singular: false,
        },
        None => Crlb {
            matrix: fixed::pinv(f),
            singular: true,
        },
    }
}

/// Trace of the CRLB; infinite when the FIM is singular.
pub fn a_opt(f: &FimAtom) -> f64 {
    fixed::a_opt(f)
}

/// Largest CRLB eigenvalue, `1 / lambda_min(F)`; infinite when singular.
pub fn e_opt(f: &FimAtom) -> f64 {
    fixed::e_opt(f)
}

/// `logdet(F + eps I) - 4 log(eps)`, zero for the zero matrix.
pub fn d_opt(f: &FimAtom, epsilon: f64) -> f64 {
    fixed::d_opt(f, epsilon)
}

/// Smallest eigenvalue of the principal block of `f` on `idx`.
pub fn min_eigenvalue(f: &FimAtom, idx: &[usize]) -> f64 {
    principal(f, idx, fixed::min_eig, dynamic::min_eig)
}

pub fn aggregate(values: &[f64], aggregation: Aggregation) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(match aggregation {
        Aggregation::MaxOverGrid => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::MeanOverGrid => values.iter().sum::<f64>() / values.len() as f64,
    })
}

/// Pairwise frame-potential terms between every pair of measurement classes.
///
/// Measurements sharing the pair offset `d_i + d_r` and the pulse index have
/// identical derivative rows, so a selection enters only through how many of
/// its measurements fall into each class `cell * P + p`. The potential of a
/// selection is then the quadratic form `n^T K n` of those counts.
#[derive(Clone, Debug)]
pub struct FrameKernel {
    transmitters: usize,
    pulses: usize,
    receivers: usize,
    classes: usize,
    /// Per-point kernels, kept when small enough.
    points: Option<Vec<Vec<f64>>>,
    mean: Vec<f64>,
    cfg: RadarConfig,
    grid: DeltaGrid,
    norm: FrameNorm,
}

const KERNEL_STORE_LIMIT: usize = 1 << 22;

impl FrameKernel {
    pub fn build(cfg: &RadarConfig, grid: &DeltaGrid, norm: FrameNorm) -> Result<Self> {
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
        let classes = (cfg.transmitters + cfg.receivers - 1) * cfg.pulses;
        let store = classes * classes * grid.len() <= KERNEL_STORE_LIMIT;
        let mut mean = vec![0.0; classes * classes];
        let mut points = store.then(Vec::new);
        for d in 0..grid.len() {
            let k = point_kernel(cfg, grid, d, norm);
            for (m, x) in mean.iter_mut().zip(&k) {
                *m += x / grid.len() as f64;
            }
            if let Some(points) = points.as_mut() {
                points.push(k);
            }
        }
        Ok(Self {
            transmitters: cfg.transmitters,
            pulses: cfg.pulses,
            receivers: cfg.receivers,
            classes,
            points,
            mean,
            cfg: cfg.clone(),
            grid: grid.clone(),
            norm,
        })
    }

    pub fn grid(&self) -> &DeltaGrid {
        &self.grid
    }

    pub fn full_selection(&self) -> Selection {
        Selection::full_dims(self.transmitters, self.pulses, self.receivers)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Class of measurement `(r, i, p)`.
    pub fn class_of(&self, r: usize, i: usize, p: usize) -> usize {
        (r + self.transmitters - 1 - i) * self.pulses + p
    }

    /// Grid-mean kernel, row-major `classes x classes`.
    pub fn mean_kernel(&self) -> &[f64] {
        &self.mean
    }

    /// Kernel of one grid point.
    pub fn kernel_at(&self, d: usize) -> std::borrow::Cow<'_, [f64]> {
        match &self.points {
            Some(points) => std::borrow::Cow::Borrowed(&points[d]),
            None => std::borrow::Cow::Owned(point_kernel(&self.cfg, &self.grid, d, self.norm)),
        }
    }

    pub fn counts(&self, sel: &Selection) -> Result<Vec<f64>> {
        if sel.num_transmitters() != self.transmitters
            || sel.pulses_per_transmitter() != self.pulses
            || sel.num_candidate_receivers() != self.receivers
        {
            return Err(Error::DimensionMismatch(
                "selection does not match the frame kernel".into(),
            ));
        }
        let mut n = vec![0.0; self.classes];
        for r in sel.selected_receivers() {
            for (i, p) in sel.selected_pulses() {
                n[self.class_of(r, i, p)] += 1.0;
            }
        }
        Ok(n)
    }

    pub fn quadratic(&self, kernel: &[f64], counts: &[f64]) -> f64 {
        let c = self.classes;
        let mut total = 0.0;
        for (a, &na) in counts.iter().enumerate() {
            if na == 0.0 {
                continue;
            }
            let row = &kernel[a * c..(a + 1) * c];
            total += na * row.iter().zip(counts).map(|(k, nb)| k * nb).sum::<f64>();
        }
        total
    }

    /// Potential of `sel` at grid point `d`.
    pub fn value_at(&self, sel: &Selection, d: usize) -> Result<f64> {
        Ok(self.quadratic(&self.kernel_at(d), &self.counts(sel)?))
    }

    /// Grid-mean potential of `sel`.
    pub fn mean_value(&self, sel: &Selection) -> Result<f64> {
        Ok(self.quadratic(&self.mean, &self.counts(sel)?))
    }

    pub fn aggregated(&self, sel: &Selection, aggregation: Aggregation) -> Result<f64> {
        match aggregation {
            Aggregation::MeanOverGrid => self.mean_value(sel),
            Aggregation::MaxOverGrid => {
                let counts = self.counts(sel)?;
                let values: Vec<f64> = (0..self.grid.len())
                    .map(|d| self.quadratic(&self.kernel_at(d), &counts))
                    .collect();
                aggregate(&values, aggregation)
            }
        }
    }

    /// `G(X) = MFP(U) - MFP(U \ X)` on the grid-mean kernel, with `X` given
    /// as ground-set elements (pulses first, then receivers).
    pub fn g_value(&self, removed: &[usize]) -> Result<f64> {
        let full = Selection::full_dims(self.transmitters, self.pulses, self.receivers);
        let mut rest = full.clone();
        for &e in removed {
            rest.set_element(e, false)?;
        }
        Ok(self.mean_value(&full)? - self.mean_value(&rest)?)
    }
}

/// Weighted derivative rows of every measurement class at sample `n`, with
/// the first target at `dtheta` and the second at the origin.
fn class_rows(cfg: &RadarConfig, grid: &DeltaGrid, d: usize, n: usize) -> Vec<[Complex64; 4]> {
    let lambda = cfg.wavelength();
    let dtheta = grid.points[d];
    let scale = 2.0 * PI / lambda;
    let g = cfg.gamma;
    let cells = cfg.transmitters + cfg.receivers - 1;
    let mut rows = Vec::with_capacity(cells * cfg.pulses);
    for cell in 0..cells {
        let c = cfg.index_offset(cell as i64 - (cfg.transmitters - 1) as i64);
        for p in 0..cfg.pulses {
            let t = cfg.sample_time(p, n);
            let phase = 4.0 * PI * dtheta.dv * t / lambda + 2.0 * PI * c * dtheta.du / lambda;
            let y1 = cfg.alpha[0] * Complex64::from_polar(1.0, phase);
            let y2 = cfg.alpha[1];
            let j = Complex64::new(0.0, scale);
            rows.push([
                j * c * y1 / g[0],
                j * 2.0 * t * y1 / g[1],
                j * c * y2 / g[2],
                j * 2.0 * t * y2 / g[3],
            ]);
        }
    }
    rows
}

fn pair_term(a: &[Complex64; 4], b: &[Complex64; 4], na: f64, nb: f64, norm: FrameNorm) -> f64 {
    let inner: Complex64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
    let num = inner.norm_sqr();
    match norm {
        FrameNorm::None => num,
        _ if na == 0.0 || nb == 0.0 => 0.0,
        FrameNorm::Literal => num / (na * nb).powi(2),
        FrameNorm::Cosine => num / (na * nb),
    }
}

fn point_kernel(cfg: &RadarConfig, grid: &DeltaGrid, d: usize, norm: FrameNorm) -> Vec<f64> {
    let classes = (cfg.transmitters + cfg.receivers - 1) * cfg.pulses;
    let mut k = vec![0.0; classes * classes];
    for n in 0..cfg.samples {
        let rows = class_rows(cfg, grid, d, n);
        let norms: Vec<f64> = rows
            .iter()
            .map(|g| g.iter().map(|x| x.norm_sqr()).sum())
            .collect();
        for a in 0..classes {
            for b in a..classes {
                let t = pair_term(&rows[a], &rows[b], norms[a], norms[b], norm);
                k[a * classes + b] += t;
                if a != b {
                    k[b * classes + a] += t;
                }
            }
        }
    }
    k
}

fn single_point_grid(dtheta: crate::model::DeltaTheta) -> DeltaGrid {
    DeltaGrid {
        points: vec![dtheta],
        du_range: (dtheta.du, dtheta.du),
        dv_range: (dtheta.dv, dtheta.dv),
        exclusion_radius: 0.0,
    }
}

fn potential(
    cfg: &RadarConfig,
    sel: &Selection,
    dtheta: crate::model::DeltaTheta,
    norm: FrameNorm,
) -> Result<f64> {
    sel.check_dims(cfg)?;
    FrameKernel::build(cfg, &single_point_grid(dtheta), norm)?.value_at(sel, 0)
}

/// Frame potential of the weighted derivative rows of the selected
/// measurements, both orderings and the diagonal included.
pub fn frame_potential(
    cfg: &RadarConfig,
    sel: &Selection,
    dtheta: crate::model::DeltaTheta,
) -> Result<f64> {
    potential(cfg, sel, dtheta, FrameNorm::None)
}

/// Frame potential with every pair term divided by `(|g|^2 |g'|^2)^2`.
pub fn modified_frame_potential(
    cfg: &RadarConfig,
    sel: &Selection,
    dtheta: crate::model::DeltaTheta,
) -> Result<f64> {
    potential(cfg, sel, dtheta, FrameNorm::Literal)
}

/// Frame potential with squared-cosine normalization.
pub fn cosine_frame_potential(
    cfg: &RadarConfig,
    sel: &Selection,
    dtheta: crate::model::DeltaTheta,
) -> Result<f64> {
    potential(cfg, sel, dtheta, FrameNorm::Cosine)
}

impl From<MfpNormalization> for FrameNorm {
    fn from(n: MfpNormalization) -> Self {
        match n {
            MfpNormalization::Literal => FrameNorm::Literal,
            MfpNormalization::Cosine => FrameNorm::Cosine,
        }
    }
}

impl Criterion {
    /// Frame normalization used by frame-potential criteria.
    pub fn frame_norm(&self) -> FrameNorm {
        match self.kind {
            CriterionKind::Fp => FrameNorm::None,
            _ => self.normalization.into(),
        }
    }
}
