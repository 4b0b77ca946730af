//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares, generic over the floating-point type.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::Float;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("no observations")]
    Empty,
    #[error("row {row} has {got} columns, expected {expected}")]
    Shape { row: usize, got: usize, expected: usize },
    #[error("complete separation: coefficient for `{term}` diverges")]
    Separation { term: String },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
}

/// Dense design matrix with named columns and a 0/1 response.
#[derive(Clone, Debug, PartialEq)]
pub struct Design<T> {
    pub names: Vec<String>,
    pub rows: Vec<Vec<T>>,
    pub y: Vec<T>,
}

impl<T: Real> Design<T> {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    fn check_shape(&self) -> Result<(), RegressionError> {
        if self.rows.is_empty() {
            return Err(RegressionError::Empty);
        }
        for (row, r) in self.rows.iter().enumerate() {
            if r.len() != self.p() {
                return Err(RegressionError::Shape {
                    row,
                    got: r.len(),
                    expected: self.p(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrlsOptions {
    /// Convergence threshold on the largest coefficient change. `None`
    /// picks 1e-8, loosened to the precision of `T` when that is coarser.
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    /// Coefficients past this magnitude are treated as diverging.
    pub separation_bound: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            tolerance: None,
            max_iterations: 100,
            separation_bound: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit<T> {
    pub names: Vec<String>,
    pub coef: Vec<T>,
    /// Wald standard errors from the inverse observed information.
    pub se: Vec<T>,
    pub log_likelihood: T,
    /// Log-likelihood at the start and after every iteration.
    pub trace: Vec<T>,
    /// Score vector at the solution.
    pub gradient: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
    /// Mean fitted probability of successes minus that of failures.
    pub tjur_r2: T,
}

fn sigmoid<T: Real>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + Float::exp(-eta))
    } else {
        let e = Float::exp(eta);
        e / (T::one() + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
fn softplus<T: Real>(eta: T) -> T {
    if eta > T::zero() {
        eta + Float::ln_1p(Float::exp(-eta))
    } else {
        Float::ln_1p(Float::exp(eta))
    }
}

fn linear<T: Real>(row: &[T], beta: &[T]) -> T {
    row.iter().zip(beta).map(|(x, b)| *x * *b).sum()
}

pub fn log_likelihood<T: Real>(design: &Design<T>, beta: &[T]) -> T {
    design
        .rows
        .iter()
        .zip(&design.y)
        .map(|(row, y)| {
            let eta = linear(row, beta);
            *y * eta - softplus(eta)
        })
        .sum()
}

/// Analytic score: `X^T (y - mu)`.
pub fn gradient<T: Real>(design: &Design<T>, beta: &[T]) -> Vec<T> {
    let mut g = vec![T::zero(); design.p()];
    for (row, y) in design.rows.iter().zip(&design.y) {
        let r = *y - sigmoid(linear(row, beta));
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj = *gj + *xj * r;
        }
    }
    g
}

fn information<T: Real + RealField>(design: &Design<T>, beta: &[T]) -> DMatrix<T> {
    let p = design.p();
    let mut h = DMatrix::<T>::zeros(p, p);
    for row in &design.rows {
        let mu = sigmoid(linear(row, beta));
        let w = mu * (T::one() - mu);
        for i in 0..p {
            let wi = w * row[i];
            for j in i..p {
                h[(i, j)] += wi * row[j];
            }
        }
    }
    h.fill_lower_triangle_with_upper_triangle();
    h
}

/// Rejects designs whose columns are linearly dependent, naming a zero
/// column when there is one.
fn check_rank<T: Real + RealField>(design: &Design<T>) -> Result<(), RegressionError> {
    let p = design.p();
    let mut gram = DMatrix::<T>::zeros(p, p);
    for row in &design.rows {
        for i in 0..p {
            for j in i..p {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    gram.fill_lower_triangle_with_upper_triangle();
    for (j, name) in design.names.iter().enumerate() {
        if gram[(j, j)] == T::zero() {
            return Err(RegressionError::RankDeficient(format!("column `{name}` is all zero")));
        }
    }
    // Correlation scaling so the eigenvalue test does not depend on units.
    let scale: Vec<T> = (0..p).map(|j| T::one() / Float::sqrt(gram[(j, j)])).collect();
    let corr = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let eig = corr.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(T::infinity(), Float::min);
    let limit = Float::max(T::lit(1e-10), T::epsilon() * T::lit(1e3));
    if min <= limit {
        return Err(RegressionError::RankDeficient(format!(
            "columns {} are linearly dependent",
            design.names.join(", ")
        )));
    }
    Ok(())
}

/// Fits `P(y = 1) = 1 / (1 + exp(-x^T beta))` by Newton-Raphson (IRLS)
/// with step-halving, so the log-likelihood never decreases.
pub fn fit_logistic<T: Real + RealField>(
    design: &Design<T>,
    opts: &IrlsOptions,
) -> Result<LogisticFit<T>, RegressionError> {
    design.check_shape()?;
    check_rank(design)?;
    let p = design.p();
    let tol = T::lit(
        opts.tolerance
            .unwrap_or_else(|| 1e-8f64.max(T::epsilon().as_f64() * 1e3)),
    );
    let bound = T::lit(opts.separation_bound);
    let mut beta = vec![T::zero(); p];
    let mut ll = log_likelihood(design, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let g = DVector::from_vec(gradient(design, &beta));
        let h = information(design, &beta);
        let step = match h.cholesky() {
            Some(chol) => chol.solve(&g),
            None => return Err(separation(design, &beta)),
        };
        // A full Newton step this small sits below the resolution of the
        // likelihood, so it is taken without a line search.
        if step.iter().map(|s| Float::abs(*s)).fold(T::zero(), Float::max) < tol {
            beta = beta.iter().zip(step.iter()).map(|(b, s)| *b + *s).collect();
            ll = Float::max(ll, log_likelihood(design, &beta));
            trace.push(ll);
            converged = true;
            break;
        }
        let mut t = T::one();
        let (mut next, mut next_ll, mut uphill);
        loop {
            next = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| *b + t * *s)
                .collect::<Vec<T>>();
            next_ll = log_likelihood(design, &next);
            // Near the optimum the gain drops below the rounding of the
            // summed likelihood. The likelihood is concave, so a slope that
            // is still non-negative at `next` means the segment only rose.
            let slope: T = gradient(design, &next)
                .iter()
                .zip(step.iter())
                .map(|(g, s)| *g * *s)
                .sum();
            uphill = next_ll >= ll || slope >= T::zero();
            if uphill || t < T::lit(1e-10) {
                break;
            }
            t /= T::lit(2.0);
        }
        let change = step.iter().map(|s| Float::abs(t * *s)).fold(T::zero(), Float::max);
        if uphill {
            beta = next;
            ll = Float::max(ll, next_ll);
        }
        trace.push(ll);
        if let Some(j) = beta
            .iter()
            .position(|b| Float::abs(*b) > bound || !Float::is_finite(*b))
        {
            return Err(RegressionError::Separation {
                term: design.names[j].clone(),
            });
        }
        if change < tol {
            converged = true;
            break;
        }
    }

    let h = information(design, &beta);
    let cov = h
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| separation(design, &beta))?;
    let se = (0..p).map(|j| Float::sqrt(cov[(j, j)])).collect();

    let (mut s1, mut n1, mut s0, mut n0) = (T::zero(), 0usize, T::zero(), 0usize);
    for (row, y) in design.rows.iter().zip(&design.y) {
        let mu = sigmoid(linear(row, &beta));
        if *y > T::lit(0.5) {
            s1 += mu;
            n1 += 1;
        } else {
            s0 += mu;
            n0 += 1;
        }
    }
    let mean = |s: T, n: usize| if n == 0 { T::zero() } else { s / T::lit(n as f64) };
    let tjur_r2 = mean(s1, n1) - mean(s0, n0);

    Ok(LogisticFit {
        names: design.names.clone(),
        gradient: gradient(design, &beta),
        coef: beta,
        se,
        log_likelihood: ll,
        trace,
        iterations,
        converged,
        n: design.n(),
        tjur_r2,
    })
}

/// Separation error for the largest coefficient, or the first column if
/// every coefficient is still small.
fn separation<T: Real>(design: &Design<T>, beta: &[T]) -> RegressionError {
    let j = beta
        .iter()
        .enumerate()
        .max_by(|a, b| {
            Float::abs(*a.1)
                .partial_cmp(&Float::abs(*b.1))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map_or(0, |(j, _)| j);
    RegressionError::Separation {
        term: design.names[j].clone(),
    }
}
