//! Gaussian quadrature rules and barycentric interpolation.
//!
//! Gauss-Jacobi rules integrate `(1 - x)^alpha (1 + x)^beta f(x)` on `[-1, 1]`
//! exactly for polynomial `f` of degree `2n - 1`. Nodes come from the
//! Golub-Welsch eigenvalue problem and are polished with Newton steps on the
//! three-term recurrence; weights use the closed-form Christoffel expression.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{FracError, Result};

/// A quadrature rule: nodes and matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of `weight * f(node)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affine map of a plain (Legendre-type) rule from `[-1, 1]` onto `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> Rule {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        Rule {
            nodes: self.nodes.iter().map(|&x| mid + half * x).collect(),
            weights: self.weights.iter().map(|&w| w * half).collect(),
        }
    }
}

/// A Gauss-Jacobi rule on `[-1, 1]` that remembers its exponents, so it can be
/// mapped onto an interval with the weight `(hi - t)^alpha (t - lo)^beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiRule {
    pub alpha: f64,
    pub beta: f64,
    pub rule: Rule,
}

impl JacobiRule {
    pub fn new(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        Ok(Self {
            alpha,
            beta,
            rule: gauss_jacobi(n, alpha, beta)?,
        })
    }

    /// Maps onto `[lo, hi]` for the weight `(hi - t)^alpha (t - lo)^beta`.
    pub fn mapped(&self, lo: f64, hi: f64) -> Rule {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let scale = half.powf(self.alpha + self.beta + 1.0);
        Rule {
            nodes: self.rule.nodes.iter().map(|&x| mid + half * x).collect(),
            weights: self.rule.weights.iter().map(|&w| w * scale).collect(),
        }
    }

    /// `∫_lo^hi (hi - t)^alpha (t - lo)^beta f(t) dt`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let scale = half.powf(self.alpha + self.beta + 1.0);
        scale
            * self
                .rule
                .nodes
                .iter()
                .zip(&self.rule.weights)
                .map(|(&x, &w)| w * f(mid + half * x))
                .sum::<f64>()
    }
}

pub fn gauss_legendre(n: usize) -> Result<Rule> {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Jacobi polynomial `P_n^{(alpha, beta)}(x)` together with `P_{n-1}`.
pub(crate) fn jacobi_pair(n: usize, alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    if n == 0 {
        return (p_prev, 0.0);
    }
    let mut p = 0.5 * (alpha - beta) + 0.5 * (alpha + beta + 2.0) * x;
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + alpha + beta;
        let a1 = 2.0 * k * (k + alpha + beta) * (s - 2.0);
        let a2 = (s - 1.0) * (alpha * alpha - beta * beta);
        let a3 = (s - 2.0) * (s - 1.0) * s;
        let a4 = 2.0 * (k + alpha - 1.0) * (k + beta - 1.0) * s;
        let next = ((a2 + a3 * x) * p - a4 * p_prev) / a1;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Derivative of `P_n^{(alpha, beta)}` from the pair `(P_n, P_{n-1})`.
fn jacobi_derivative(n: usize, alpha: f64, beta: f64, x: f64, p: f64, p_prev: f64) -> f64 {
    let nf = n as f64;
    let s = 2.0 * nf + alpha + beta;
    (nf * ((alpha - beta) - s * x) * p + 2.0 * (nf + alpha) * (nf + beta) * p_prev)
        / (s * (1.0 - x * x))
}

/// Gauss-Jacobi rule with `n` nodes for the weight `(1 - x)^alpha (1 + x)^beta`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<Rule> {
    if n == 0 {
        return Err(FracError::InvalidArgument("quadrature needs at least one node".into()));
    }
    if !(alpha > -1.0 && beta > -1.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(FracError::InvalidArgument(format!(
            "Jacobi exponents must exceed -1, got alpha={alpha}, beta={beta}"
        )));
    }
    let ab = alpha + beta;
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            let s = 2.0 * kf + ab;
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        jacobi[(k, k)] = diag;
        if k + 1 < n {
            let j = kf + 1.0;
            let off2 = if k == 0 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let s = 2.0 * j + ab;
                4.0 * j * (j + alpha) * (j + beta) * (j + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            let off = off2.sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let nf = n as f64;
    let log_const = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(nf + alpha + 1.0)
        + ln_gamma(nf + beta + 1.0)
        - ln_gamma(nf + ab + 1.0)
        - ln_gamma(nf + 1.0);
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, pm) = jacobi_pair(n, alpha, beta, *x);
            let dp = jacobi_derivative(n, alpha, beta, *x, p, pm);
            let step = p / dp;
            if step.is_finite() {
                *x -= step;
            }
        }
        let (p, pm) = jacobi_pair(n, alpha, beta, *x);
        let dp = jacobi_derivative(n, alpha, beta, *x, p, pm);
        weights.push(log_const.exp() / ((1.0 - *x * *x) * dp * dp));
    }
    Ok(Rule { nodes, weights })
}

/// Barycentric Lagrange interpolation through a fixed set of nodes.
#[derive(Debug, Clone)]
pub struct Barycentric {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    pub fn new(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let mut weights = vec![1.0; n];
        for j in 0..n {
            for k in 0..n {
                if k != j {
                    weights[j] /= nodes[j] - nodes[k];
                }
            }
        }
        // Rescale to keep the weights near unit size; the formula is scale-invariant.
        let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        for w in &mut weights {
            *w /= max;
        }
        Self {
            nodes: nodes.to_vec(),
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cardinal-function values `l_j(x)` for every node `j`.
    pub fn cardinals(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        if let Some(j) = self.nodes.iter().position(|&xj| xj == x) {
            out[j] = 1.0;
            return out;
        }
        let mut denom = 0.0;
        for (j, (&xj, &wj)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let t = wj / (x - xj);
            out[j] = t;
            denom += t;
        }
        for v in &mut out {
            *v /= denom;
        }
        out
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        self.cardinals(x)
            .iter()
            .zip(values)
            .map(|(l, v)| l * v)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(6).unwrap();
        // degree 11 is the exactness limit
        let exact = 2.0 / 11.0 + 2.0;
        let got = rule.integrate(|x| x.powi(10) + 1.0 + x.powi(11));
        assert_relative_eq!(got, exact, max_relative = 1e-14);
    }

    #[test]
    fn jacobi_moments_match_beta_function() {
        for &(alpha, beta) in &[(-0.5, 0.0), (-0.75, 0.3), (0.5, -0.5), (-0.5, -0.5)] {
            let rule = gauss_jacobi(12, alpha, beta).unwrap();
            // ∫ (1-x)^α (1+x)^β dx = 2^{α+β+1} B(α+1, β+1)
            let mu0 = 2f64.powf(alpha + beta + 1.0) * gamma(alpha + 1.0) * gamma(beta + 1.0)
                / gamma(alpha + beta + 2.0);
            assert_relative_eq!(rule.weights.iter().sum::<f64>(), mu0, max_relative = 1e-12);
            // first moment: ∫ (1-x)^α (1+x)^β (1+x) = 2^{α+β+2} B(α+1, β+2)
            let mu1 = 2f64.powf(alpha + beta + 2.0) * gamma(alpha + 1.0) * gamma(beta + 2.0)
                / gamma(alpha + beta + 3.0);
            assert_relative_eq!(rule.integrate(|x| 1.0 + x), mu1, max_relative = 1e-12);
        }
    }

    #[test]
    fn mapped_jacobi_handles_endpoint_singularity() {
        let rule = JacobiRule::new(10, -0.5, 0.0).unwrap();
        // ∫_0^2 (2 - t)^{-1/2} dt = 2 sqrt(2)
        let got = rule.integrate(0.0, 2.0, |_| 1.0);
        assert_relative_eq!(got, 2.0 * 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(gauss_jacobi(4, -1.0, 0.0).is_err());
        assert!(gauss_jacobi(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn barycentric_reproduces_polynomials() {
        let rule = gauss_legendre(9).unwrap();
        let bary = Barycentric::new(&rule.nodes);
        let values: Vec<f64> = rule.nodes.iter().map(|x| 3.0 * x.powi(5) - x + 0.5).collect();
        for &x in &[-1.0, -0.3, 0.0, 0.77, 1.0] {
            let p = 3.0 * f64::powi(x, 5) - x + 0.5;
            assert_relative_eq!(bary.interpolate(&values, x), p, epsilon = 1e-12);
        }
    }
}
