//! Legendre polynomials and Gauss-Legendre quadrature.
//!
//! Polynomials are evaluated with the three-term recurrence
//! `(l+1) P_{l+1}(z) = (2l+1) z P_l(z) - l P_{l-1}(z)`, which is stable on
//! `[-1, 1]` well past degree 50. Quadrature nodes are the roots of `P_n`,
//! located by Newton iterations on the same recurrence, so the rule is exact
//! for polynomials of degree `2n - 1`.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Result, SpharError};
use crate::real::{cast, pi, Real};

fn check_argument<F: Real>(z: F) -> Result<()> {
    if z.abs() > F::one() {
        return Err(SpharError::Domain(format!(
            "Legendre polynomials are evaluated on [-1, 1], got {z}"
        )));
    }
    Ok(())
}

/// Evaluate `P_degree(z)`.
pub fn legendre_eval<F: Real>(degree: usize, z: F) -> Result<F> {
    check_argument(z)?;
    let mut prev = F::one();
    if degree == 0 {
        return Ok(prev);
    }
    let mut cur = z;
    for l in 1..degree {
        let l_f = cast::<F>(l as f64);
        let next = ((cast::<F>(2.0) * l_f + F::one()) * z * cur - l_f * prev) / (l_f + F::one());
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Evaluate `P_0(z), ..., P_max_degree(z)` in one recurrence pass.
pub fn legendre_all<F: Real>(max_degree: usize, z: F) -> Result<Vec<F>> {
    check_argument(z)?;
    let mut values = Vec::with_capacity(max_degree + 1);
    values.push(F::one());
    if max_degree == 0 {
        return Ok(values);
    }
    values.push(z);
    for l in 1..max_degree {
        let l_f = cast::<F>(l as f64);
        let next = ((cast::<F>(2.0) * l_f + F::one()) * z * values[l] - l_f * values[l - 1])
            / (l_f + F::one());
        values.push(next);
    }
    Ok(values)
}

/// Batched Legendre evaluations: row `l`, column `g` holds `P_l(grid[g])`.
#[derive(Debug, Clone)]
pub struct LegendreTable<F> {
    max_degree: usize,
    grid: Vec<F>,
    values: Array2<F>,
}

impl<F: Real> LegendreTable<F> {
    /// Tabulate `P_0..P_max_degree` on the given grid.
    pub fn new(max_degree: usize, grid: &[F]) -> Result<Self> {
        let mut values = Array2::zeros((max_degree + 1, grid.len()));
        for (g, &z) in grid.iter().enumerate() {
            for (l, v) in legendre_all(max_degree, z)?.into_iter().enumerate() {
                values[[l, g]] = v;
            }
        }
        Ok(Self {
            max_degree,
            grid: grid.to_vec(),
            values,
        })
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn grid(&self) -> &[F] {
        &self.grid
    }

    pub fn values(&self) -> ArrayView2<'_, F> {
        self.values.view()
    }

    /// All grid values of `P_l`.
    pub fn row(&self, l: usize) -> ArrayView1<'_, F> {
        self.values.row(l)
    }

    pub fn value(&self, l: usize, g: usize) -> F {
        self.values[[l, g]]
    }
}

/// Nodes and weights of the `order`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are returned in ascending order and are symmetric about zero by
/// construction; weights are positive. The rule integrates polynomials of
/// degree `2 * order - 1` exactly.
pub fn gauss_legendre_nodes<F: Real>(order: usize) -> Result<(Vec<F>, Vec<F>)> {
    if order == 0 {
        return Err(SpharError::Domain(
            "Gauss-Legendre order must be at least 1".into(),
        ));
    }
    let n = order;
    let n_f = cast::<F>(n as f64);
    let mut nodes = vec![F::zero(); n];
    let mut weights = vec![F::zero(); n];
    let tol = cast::<F>(1e-14).max(F::epsilon() * cast::<F>(4.0));
    let upper_half = n.div_ceil(2);
    for i in 1..=upper_half {
        // Tricomi-style initial guess for the i-th largest root.
        let mut z: F =
            (pi::<F>() * (cast::<F>(i as f64) - cast::<F>(0.25)) / (n_f + cast::<F>(0.5))).cos();
        if n % 2 == 1 && i == upper_half {
            z = F::zero();
        }
        let mut dp = F::zero();
        for _ in 0..100 {
            // P_n(z) and P_{n-1}(z) by the recurrence.
            let mut p_prev = F::one();
            let mut p_cur = z;
            for l in 1..n {
                let l_f = cast::<F>(l as f64);
                let next = ((cast::<F>(2.0) * l_f + F::one()) * z * p_cur - l_f * p_prev)
                    / (l_f + F::one());
                p_prev = p_cur;
                p_cur = next;
            }
            dp = n_f * (z * p_cur - p_prev) / (z * z - F::one());
            let step = p_cur / dp;
            z -= step;
            if step.abs() <= tol {
                break;
            }
        }
        let w = cast::<F>(2.0) / ((F::one() - z * z) * dp * dp);
        nodes[n - i] = z;
        nodes[i - 1] = -z;
        weights[n - i] = w;
        weights[i - 1] = w;
    }
    Ok((nodes, weights))
}

/// Integrate `f` over `[-1, 1]` with the `order`-point Gauss-Legendre rule.
pub fn integrate<F: Real>(order: usize, f: impl Fn(F) -> F) -> Result<F> {
    let (nodes, weights) = gauss_legendre_nodes(order)?;
    Ok(nodes.iter().zip(&weights).map(|(&x, &w)| w * f(x)).sum())
}
