//! Small primal-dual interior-point solver for block-diagonal semidefinite
//! programs in the dual (inequality) form
//!
//! ```text
//! maximize b'y   subject to   Z_j = C_j - sum_k y_k A_kj  >= 0  for every block j
//! ```
//!
//! with primal `minimize sum_j <C_j, X_j>` s.t. `sum_j <A_kj, X_j> = b_k`,
//! `X_j >= 0`. Uses the HKM search direction with a Mehrotra
//! predictor-corrector and an infeasible starting point. Diagonal blocks
//! carry linear inequalities.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub(crate) enum Block {
    Dense {
        c: DMatrix<f64>,
        /// `(k, A_k)` for the variables that touch this block.
        a: Vec<(usize, DMatrix<f64>)>,
    },
    Diag {
        c: DVector<f64>,
        a: Vec<(usize, DVector<f64>)>,
    },
}

impl Block {
    fn dim(&self) -> usize {
        match self {
            Block::Dense { c, .. } => c.nrows(),
            Block::Diag { c, .. } => c.len(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Problem {
    pub b: DVector<f64>,
    pub blocks: Vec<Block>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Settings {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub y: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
enum Mat {
    Dense(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl Mat {
    fn dot(&self, other: &Mat) -> f64 {
        match (self, other) {
            (Mat::Dense(a), Mat::Dense(b)) => a.dot(b),
            (Mat::Diag(a), Mat::Diag(b)) => a.dot(b),
            _ => unreachable!("block kinds always match"),
        }
    }

    fn axpy(&mut self, alpha: f64, other: &Mat) {
        match (self, other) {
            (Mat::Dense(a), Mat::Dense(b)) => *a += b * alpha,
            (Mat::Diag(a), Mat::Diag(b)) => *a += b * alpha,
            _ => unreachable!("block kinds always match"),
        }
    }

    fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest `alpha` with `x + alpha dx` positive semidefinite (infinite when
/// every direction is feasible).
fn max_step(x: &Mat, dx: &Mat) -> f64 {
    match (x, dx) {
        (Mat::Dense(x), Mat::Dense(dx)) => {
            let Some(chol) = x.clone().cholesky() else {
                return 0.0;
            };
            let l = chol.l();
            let Some(t) = l.solve_lower_triangular(dx) else {
                return 0.0;
            };
            let Some(s) = l.solve_lower_triangular(&t.transpose()) else {
                return 0.0;
            };
            let lmin = sym(s).symmetric_eigenvalues().min();
            if lmin >= 0.0 {
                f64::INFINITY
            } else {
                -1.0 / lmin
            }
        }
        (Mat::Diag(x), Mat::Diag(dx)) => x
            .iter()
            .zip(dx.iter())
            .filter(|(_, &d)| d < 0.0)
            .map(|(&v, &d)| -v / d)
            .fold(f64::INFINITY, f64::min),
        _ => unreachable!("block kinds always match"),
    }
}

fn inverse_spd(z: &Mat) -> Option<Mat> {
    match z {
        Mat::Dense(z) => z.clone().cholesky().map(|c| Mat::Dense(sym(c.inverse()))),
        Mat::Diag(z) => z
            .iter()
            .all(|&v| v > 0.0)
            .then(|| Mat::Diag(z.map(|v| 1.0 / v))),
    }
}

struct State {
    x: Vec<Mat>,
    y: DVector<f64>,
    z: Vec<Mat>,
}

impl Problem {
    fn num_vars(&self) -> usize {
        self.b.len()
    }

    fn c(&self, j: usize) -> Mat {
        match &self.blocks[j] {
            Block::Dense { c, .. } => Mat::Dense(c.clone()),
            Block::Diag { c, .. } => Mat::Diag(c.clone()),
        }
    }

    /// `sum_k y_k A_kj`.
    fn adjoint(&self, j: usize, y: &DVector<f64>) -> Mat {
        match &self.blocks[j] {
            Block::Dense { c, a } => {
                let mut out = DMatrix::zeros(c.nrows(), c.ncols());
                for (k, ak) in a {
                    if y[*k] != 0.0 {
                        out += ak * y[*k];
                    }
                }
                Mat::Dense(out)
            }
            Block::Diag { c, a } => {
                let mut out = DVector::zeros(c.len());
                for (k, ak) in a {
                    if y[*k] != 0.0 {
                        out += ak * y[*k];
                    }
                }
                Mat::Diag(out)
            }
        }
    }

    /// `out_k += <A_kj, X_j>` over all blocks.
    fn apply(&self, x: &[Mat]) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_vars());
        for (block, xj) in self.blocks.iter().zip(x) {
            match (block, xj) {
                (Block::Dense { a, .. }, Mat::Dense(xj)) => {
                    for (k, ak) in a {
                        out[*k] += ak.dot(xj);
                    }
                }
                (Block::Diag { a, .. }, Mat::Diag(xj)) => {
                    for (k, ak) in a {
                        out[*k] += ak.dot(xj);
                    }
                }
                _ => unreachable!("block kinds always match"),
            }
        }
        out
    }

    fn dual_residual(&self, st: &State) -> Vec<Mat> {
        (0..self.blocks.len())
            .map(|j| {
                let mut r = self.c(j);
                r.axpy(-1.0, &st.z[j]);
                r.axpy(-1.0, &self.adjoint(j, &st.y));
                r
            })
            .collect()
    }

    /// Schur complement `M_kl = sum_j tr(A_kj X_j A_lj Z_j^-1)`.
    fn schur(&self, x: &[Mat], g: &[Mat]) -> DMatrix<f64> {
        let m = self.num_vars();
        let mut out = DMatrix::zeros(m, m);
        for ((block, xj), gj) in self.blocks.iter().zip(x).zip(g) {
            match (block, xj, gj) {
                (Block::Dense { a, .. }, Mat::Dense(xj), Mat::Dense(gj)) => {
                    let left: Vec<DMatrix<f64>> = a.iter().map(|(_, ak)| ak * xj).collect();
                    let right: Vec<DMatrix<f64>> = a.iter().map(|(_, ak)| gj * ak).collect();
                    for (p, (k, _)) in a.iter().enumerate() {
                        for (q, (l, _)) in a.iter().enumerate().skip(p) {
                            let v = left[p].dot(&right[q]);
                            out[(*k, *l)] += v;
                            if p != q {
                                out[(*l, *k)] += v;
                            }
                        }
                    }
                }
                (Block::Diag { a, .. }, Mat::Diag(xj), Mat::Diag(gj)) => {
                    let w = xj.component_mul(gj);
                    let scaled: Vec<DVector<f64>> = a.iter().map(|(_, ak)| ak.component_mul(&w)).collect();
                    for (p, (k, _)) in a.iter().enumerate() {
                        for (q, (l, al)) in a.iter().enumerate().skip(p) {
                            let v = scaled[p].dot(al);
                            out[(*k, *l)] += v;
                            if p != q {
                                out[(*l, *k)] += v;
                            }
                        }
                    }
                }
                _ => unreachable!("block kinds always match"),
            }
        }
        out
    }

    fn initial_state(&self) -> State {
        let mut x = Vec::new();
        let mut z = Vec::new();
        for block in &self.blocks {
            let n = block.dim() as f64;
            let (norms, cnorm): (Vec<(usize, f64)>, f64) = match block {
                Block::Dense { c, a } => (a.iter().map(|(k, ak)| (*k, ak.norm())).collect(), c.norm()),
                Block::Diag { c, a } => (a.iter().map(|(k, ak)| (*k, ak.norm())).collect(), c.norm()),
            };
            let xi = norms
                .iter()
                .map(|(k, an)| n * (1.0 + self.b[*k].abs()) / (1.0 + an))
                .fold(n.sqrt().max(10.0), f64::max);
            let eta = norms
                .iter()
                .map(|(_, an)| *an)
                .fold(n.sqrt().max(10.0).max(cnorm), f64::max);
            match block {
                Block::Dense { c, .. } => {
                    x.push(Mat::Dense(DMatrix::identity(c.nrows(), c.nrows()) * xi));
                    z.push(Mat::Dense(DMatrix::identity(c.nrows(), c.nrows()) * eta));
                }
                Block::Diag { c, .. } => {
                    x.push(Mat::Diag(DVector::from_element(c.len(), xi)));
                    z.push(Mat::Diag(DVector::from_element(c.len(), eta)));
                }
            }
        }
        State {
            x,
            y: DVector::zeros(self.num_vars()),
            z,
        }
    }

    /// `X_j dZ_j G_j` style products for the direction, symmetrized.
    fn direction_x(
        x: &Mat,
        dz: &Mat,
        g: &Mat,
        sigma_mu: f64,
        corr: Option<(&Mat, &Mat)>,
    ) -> Mat {
        match (x, dz, g) {
            (Mat::Dense(x), Mat::Dense(dz), Mat::Dense(g)) => {
                let mut h = g * sigma_mu - x - x * dz * g;
                if let Some((Mat::Dense(dxa), Mat::Dense(dza))) = corr {
                    h -= dxa * dza * g;
                }
                Mat::Dense(sym(h))
            }
            (Mat::Diag(x), Mat::Diag(dz), Mat::Diag(g)) => {
                let mut h = g * sigma_mu - x - x.component_mul(dz).component_mul(g);
                if let Some((Mat::Diag(dxa), Mat::Diag(dza))) = corr {
                    h -= dxa.component_mul(dza).component_mul(g);
                }
                Mat::Diag(h)
            }
            _ => unreachable!("block kinds always match"),
        }
    }

    /// `H_j = sigma mu G - X - X Rd G - corr`, the part of `dX` independent of `dy`.
    fn rhs_part(x: &Mat, rd: &Mat, g: &Mat, sigma_mu: f64, corr: Option<(&Mat, &Mat)>) -> Mat {
        Self::direction_x(x, rd, g, sigma_mu, corr)
    }

    fn solve_direction(
        &self,
        st: &State,
        g: &[Mat],
        chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        rp: &DVector<f64>,
        rd: &[Mat],
        sigma_mu: f64,
        corr: Option<(&[Mat], &[Mat])>,
    ) -> (Vec<Mat>, DVector<f64>, Vec<Mat>) {
        let h: Vec<Mat> = (0..self.blocks.len())
            .map(|j| {
                Self::rhs_part(&st.x[j], &rd[j], &g[j], sigma_mu, corr.map(|(a, b)| (&a[j], &b[j])))
            })
            .collect();
        let rhs = rp - self.apply(&h);
        let dy = chol.solve(&rhs);
        let dz: Vec<Mat> = (0..self.blocks.len())
            .map(|j| {
                let mut d = rd[j].clone();
                d.axpy(-1.0, &self.adjoint(j, &dy));
                d
            })
            .collect();
        let dx: Vec<Mat> = (0..self.blocks.len())
            .map(|j| {
                Self::direction_x(&st.x[j], &dz[j], &g[j], sigma_mu, corr.map(|(a, b)| (&a[j], &b[j])))
            })
            .collect();
        (dx, dy, dz)
    }

    fn step_lengths(st: &State, dx: &[Mat], dz: &[Mat]) -> (f64, f64) {
        let ap = st.x.iter().zip(dx).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min);
        let ad = st.z.iter().zip(dz).map(|(z, d)| max_step(z, d)).fold(f64::INFINITY, f64::min);
        (ap, ad)
    }

    pub(crate) fn solve(&self, settings: Settings) -> Solution {
        let mut st = self.initial_state();
        let total_dim: f64 = self.blocks.iter().map(|b| b.dim() as f64).sum();
        let bnorm = self.b.norm();
        let cnorm = (0..self.blocks.len()).map(|j| self.c(j).norm_sq()).sum::<f64>().sqrt();
        let mut best: Option<Solution> = None;
        let mut best_score = f64::INFINITY;

        for iter in 0..=settings.max_iter {
            let rp = &self.b - self.apply(&st.x);
            let rd = self.dual_residual(&st);
            let pobj: f64 = (0..self.blocks.len()).map(|j| self.c(j).dot(&st.x[j])).sum();
            let dobj = self.b.dot(&st.y);
            let pres = rp.norm() / (1.0 + bnorm);
            let dres = rd.iter().map(Mat::norm_sq).sum::<f64>().sqrt() / (1.0 + cnorm);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let score = pres.max(dres).max(gap);
            let snapshot = |converged| Solution {
                y: st.y.clone(),
                iterations: iter,
                primal_residual: pres,
                dual_residual: dres,
                gap,
                converged,
            };
            // Only dual-feasible iterates are meaningful as selections.
            if dres < settings.tol.sqrt() && score < best_score {
                best_score = score;
                best = Some(snapshot(false));
            }
            if score < settings.tol {
                return snapshot(true);
            }
            if iter == settings.max_iter {
                break;
            }

            let mu: f64 = st.x.iter().zip(&st.z).map(|(x, z)| x.dot(z)).sum::<f64>() / total_dim;
            let Some(g) = st.z.iter().map(inverse_spd).collect::<Option<Vec<_>>>() else {
                break;
            };
            let mut m = self.schur(&st.x, &g);
            let scale = m.diagonal().amax().max(1e-300);
            let chol = match m.clone().cholesky() {
                Some(c) => c,
                None => {
                    for k in 0..m.nrows() {
                        m[(k, k)] += 1e-12 * scale;
                    }
                    match m.cholesky() {
                        Some(c) => c,
                        None => break,
                    }
                }
            };

            let (dxa, _, dza) = self.solve_direction(&st, &g, &chol, &rp, &rd, 0.0, None);
            let (ap, ad) = Self::step_lengths(&st, &dxa, &dza);
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let mut mu_aff = 0.0;
            for j in 0..self.blocks.len() {
                let mut x = st.x[j].clone();
                x.axpy(ap, &dxa[j]);
                let mut z = st.z[j].clone();
                z.axpy(ad, &dza[j]);
                mu_aff += x.dot(&z);
            }
            mu_aff /= total_dim;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let (dx, dy, dz) =
                self.solve_direction(&st, &g, &chol, &rp, &rd, sigma * mu, Some((&dxa, &dza)));
            let (ap, ad) = Self::step_lengths(&st, &dx, &dz);
            let tau = if score < 1e-3 { 0.98 } else { 0.95 };
            let (ap, ad) = ((tau * ap).min(1.0), (tau * ad).min(1.0));
            for j in 0..self.blocks.len() {
                st.x[j].axpy(ap, &dx[j]);
                st.z[j].axpy(ad, &dz[j]);
            }
            st.y += dy * ad;
        }
        best.unwrap_or(Solution {
            y: st.y.clone(),
            iterations: settings.max_iter,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
            converged: false,
        })
    }
}
