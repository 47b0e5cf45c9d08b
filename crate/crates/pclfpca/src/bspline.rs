//! Cubic B-spline least-squares smoothing.
//!
//! The basis is built on a clamped knot vector: boundary knots repeated
//! `order` times and interior knots equally spaced over the grid span, which
//! gives `n_basis = interior_knots + order` functions and exact partition of
//! unity on the grid.

use nalgebra::DMatrix;

use crate::dataset::{FunctionalDataset, TimeGrid};
use crate::error::{Error, Result};

pub const CUBIC_ORDER: usize = 4;

/// B-spline basis evaluated on a fixed time grid.
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    order: usize,
    knots: Vec<f64>,
    n_basis: usize,
    /// `T x n_basis` matrix of basis evaluations.
    design_matrix: DMatrix<f64>,
    /// Projection onto the basis span, `T x T`; applied from the right to
    /// row-curves.
    hat_matrix: DMatrix<f64>,
}

impl BSplineBasis {
    /// Cubic basis with `interior_knots` equally spaced interior knots.
    pub fn cubic(grid: &TimeGrid, interior_knots: usize) -> Result<Self> {
        Self::new(grid, CUBIC_ORDER, interior_knots)
    }

    /// Cubic basis with the default size `min(T/2, 25)` basis functions.
    pub fn default_for(grid: &TimeGrid) -> Result<Self> {
        let n_basis = (grid.len() / 2).min(25).max(CUBIC_ORDER);
        Self::new(grid, CUBIC_ORDER, n_basis - CUBIC_ORDER)
    }

    pub fn new(grid: &TimeGrid, order: usize, interior_knots: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::Config("spline order must be at least 1".into()));
        }
        let n_basis = interior_knots + order;
        let t_len = grid.len();
        if n_basis > t_len {
            return Err(Error::Dimension(format!(
                "{n_basis} basis functions exceed {t_len} grid points"
            )));
        }
        let points = grid.points();
        let (lo, hi) = (points[0], points[t_len - 1]);

        // Clamped knot vector: `order` copies of each boundary, equally
        // spaced interior knots strictly inside the span.
        let mut knots = Vec::with_capacity(2 * order + interior_knots);
        knots.extend(std::iter::repeat(lo).take(order));
        for i in 1..=interior_knots {
            knots.push(lo + grid.span() * i as f64 / (interior_knots + 1) as f64);
        }
        knots.extend(std::iter::repeat(hi).take(order));

        let mut design = DMatrix::zeros(t_len, n_basis);
        for (ti, &t) in points.iter().enumerate() {
            let row = eval_basis_row(&knots, order, n_basis, t, hi);
            for (b, v) in row.into_iter().enumerate() {
                design[(ti, b)] = v;
            }
        }

        // Least-squares projection via thin SVD of the design matrix.
        let svd = design.clone().svd(true, false);
        let tol = 1e-10 * svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < n_basis {
            return Err(Error::Numerical(format!(
                "rank-deficient B-spline design matrix ({rank} < {n_basis}) for {interior_knots} interior knots on a {t_len}-point grid"
            )));
        }
        let u = svd.u.as_ref().expect("requested U");
        let u_r = u.columns(0, rank).into_owned();
        let hat_matrix = &u_r * u_r.transpose();

        Ok(Self {
            order,
            knots,
            n_basis,
            design_matrix: design,
            hat_matrix,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.design_matrix
    }
}

/// Cox-de Boor evaluation of all basis functions at one point.
fn eval_basis_row(knots: &[f64], order: usize, n_basis: usize, t: f64, hi: f64) -> Vec<f64> {
    let n_intervals = knots.len() - 1;
    let mut b = vec![0.0; n_intervals];
    for j in 0..n_intervals {
        let last_proper = knots[j + 1] >= hi && knots[j] < hi;
        if (t >= knots[j] && t < knots[j + 1]) || (t >= hi && last_proper) {
            b[j] = 1.0;
            break;
        }
    }
    for k in 2..=order {
        for j in 0..(n_intervals + 1 - k) {
            let d1 = knots[j + k - 1] - knots[j];
            let d2 = knots[j + k] - knots[j + 1];
            let left = if d1 > 0.0 { (t - knots[j]) / d1 * b[j] } else { 0.0 };
            let right = if d2 > 0.0 {
                (knots[j + k] - t) / d2 * b[j + 1]
            } else {
                0.0
            };
            b[j] = left + right;
        }
    }
    b.truncate(n_basis);
    b
}

/// Project every curve onto the span of the basis (least squares per row).
pub fn smooth(dataset: &FunctionalDataset, basis: &BSplineBasis) -> Result<FunctionalDataset> {
    if basis.design_matrix.nrows() != dataset.n_points() {
        return Err(Error::Dimension(format!(
            "basis built on {} points, dataset has {}",
            basis.design_matrix.nrows(),
            dataset.n_points()
        )));
    }
    let smoothed = dataset.values() * &basis.hat_matrix;
    FunctionalDataset::new(smoothed, dataset.grid().clone(), dataset.labels().map(|l| l.to_vec()))
}
