//! Projection solver: alternate between clipping each constraint's spectrum to
//! the negative-definite cone and a least-squares re-fit of the unknowns,
//! with the dual (Douglas-Rachford) correction that keeps the iteration from
//! stalling on the intersection boundary.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LmiProblem, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    /// Budget exhausted. This is not a proof of infeasibility.
    NotFound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Iteration cap for each start.
    pub budget: usize,
    /// Start seeds, tried in order; seed 0 starts from the origin.
    pub seeds: Vec<u64>,
    /// Spectra are clipped to `target_factor` times the margin.
    pub target_factor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { budget: 20_000, seeds: vec![0, 1, 2], target_factor: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    pub status: SolveStatus,
    /// Flat coordinates, see [`LmiProblem::values`].
    pub x: DVector<f64>,
    /// Max eigenvalue for negative-definite constraints, min for positive-definite.
    pub extremes: Vec<f64>,
    /// Iterations over all starts.
    pub iterations: usize,
}

impl LmiSolution {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// Spectral projection of a symmetric matrix onto `{Z : Z <= -level I}`.
pub fn project_negdef(m: &DMatrix<f64>, level: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let clipped = eig.eigenvalues.map(|l| l.min(-level));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// `sum max(0, lambda + margin)^2` over the spectrum.
pub fn violation(m: &DMatrix<f64>, margin: f64) -> f64 {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    eig.eigenvalues.iter().map(|l| (l + margin).max(0.0).powi(2)).sum()
}

struct Normalized {
    /// `vec(F_i0)` of the negated-if-needed, scaled constraint.
    constant: DVector<f64>,
    /// Columns `vec(F_ik)`.
    coeffs: DMatrix<f64>,
    dim: usize,
    scale: f64,
    margin: f64,
}

fn normalize(problem: &LmiProblem) -> Vec<Normalized> {
    let n = problem.scalar_count();
    problem
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let sign = match c.sense {
                Sense::NegDef => 1.0,
                Sense::PosDef => -1.0,
            };
            let d = c.dim();
            let coef_norm: f64 = c.coefficients.iter().map(|f| f.norm_squared()).sum::<f64>().sqrt();
            let mut scale = coef_norm + c.constant.norm();
            if scale == 0.0 {
                scale = 1.0;
            }
            let mut coeffs = DMatrix::zeros(d * d, n);
            for (k, f) in c.coefficients.iter().enumerate() {
                coeffs.set_column(k, &DVector::from_column_slice((f * (sign / scale)).as_slice()));
            }
            Normalized {
                constant: DVector::from_column_slice((&c.constant * (sign / scale)).as_slice()),
                coeffs,
                dim: d,
                scale,
                margin: problem.margin(i),
            }
        })
        .collect()
}

fn as_matrix(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(d, d, v.as_slice())
}

/// Searches for `x` satisfying every constraint with its margin.
pub fn solve(problem: &LmiProblem, opts: &SolveOptions) -> LmiSolution {
    let n = problem.scalar_count();
    let cons = normalize(problem);

    let mut gram = DMatrix::<f64>::zeros(n, n);
    for c in &cons {
        gram += c.coeffs.transpose() * &c.coeffs;
    }
    let tol = 1e-12 * gram.amax().max(1.0);
    let gram_inv = gram.pseudo_inverse(tol).unwrap_or_else(|_| DMatrix::zeros(n, n));

    let mut total = 0;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for &seed in &opts.seeds {
        let mut x = if seed == 0 {
            DVector::zeros(n)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
        };
        let mut z: Vec<DVector<f64>> = cons
            .iter()
            .map(|c| {
                if seed == 0 {
                    DVector::zeros(c.dim * c.dim)
                } else {
                    let f = &c.constant + &c.coeffs * &x;
                    let p = project_negdef(&as_matrix(&f, c.dim), opts.target_factor * c.margin / c.scale);
                    DVector::from_column_slice(p.as_slice())
                }
            })
            .collect();
        let mut u: Vec<DVector<f64>> = cons.iter().map(|c| DVector::zeros(c.dim * c.dim)).collect();

        for _ in 0..opts.budget {
            total += 1;
            let mut rhs = DVector::zeros(n);
            for (i, c) in cons.iter().enumerate() {
                rhs += c.coeffs.tr_mul(&(&z[i] - &u[i] - &c.constant));
            }
            x = &gram_inv * rhs;

            let mut ok = true;
            let mut worst = f64::NEG_INFINITY;
            for (i, c) in cons.iter().enumerate() {
                let f = &c.constant + &c.coeffs * &x;
                let fm = as_matrix(&f, c.dim);
                let eig = SymmetricEigen::new((&fm + fm.transpose()) * 0.5);
                let top = eig.eigenvalues.max() * c.scale;
                worst = worst.max(top + c.margin);
                if top > -c.margin {
                    ok = false;
                }
                let w = &fm + as_matrix(&u[i], c.dim);
                let p = project_negdef(&w, opts.target_factor * c.margin / c.scale);
                let pz = DVector::from_column_slice(p.as_slice());
                u[i] += &f - &pz;
                z[i] = pz;
            }
            if best.as_ref().is_none_or(|(w, _)| worst < *w) {
                best = Some((worst, x.clone()));
            }
            if ok && problem.is_feasible(&x).unwrap_or(false) {
                let extremes = problem.extremes(&x).unwrap_or_default();
                return LmiSolution { status: SolveStatus::Feasible, x, extremes, iterations: total };
            }
        }
    }
    let x = best.map(|(_, x)| x).unwrap_or_else(|| DVector::zeros(n));
    let extremes = problem.extremes(&x).unwrap_or_else(|_| vec![f64::NAN; problem.constraints.len()]);
    LmiSolution { status: SolveStatus::NotFound, x, extremes, iterations: total }
}
