use crate::error::{Error, Result};
use crate::scalar::Real;

/// Highest polynomial degree for which [`triangle_quadrature`] has a rule.
pub const MAX_TRIANGLE_DEGREE: usize = 20;

/// Quadrature on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub degree: usize,
    pub points: Vec<[T; 2]>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([T; 2]) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut x = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let half = T::lit(0.5);
    let nf = T::from_usize_lossy(n);
    for i in 0..n {
        let guess = T::PI() * (T::from_usize_lossy(i) + T::lit(0.75)) / (nf + half);
        let mut z = guess.cos();
        let mut dp = T::one();
        for _ in 0..100 {
            // Three-term recurrence for P_n and its derivative.
            let mut p0 = T::one();
            let mut p1 = z;
            for k in 2..=n {
                let kf = T::from_usize_lossy(k);
                let p2 = ((T::lit(2.0) * kf - T::one()) * z * p1 - (kf - T::one()) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { T::one() } else { p1 };
            let pn1 = if n <= 1 { T::one() } else { p0 };
            dp = nf * (z * pn - pn1) / (z * z - T::one());
            let dz = pn / dp;
            z -= dz;
            if dz.abs() <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        x[i] = half * (T::one() - z);
        w[i] = T::one() / ((T::one() - z * z) * dp * dp);
    }
    (x, w)
}

/// A rule exact for polynomials of total degree `degree` on the reference
/// triangle; weights sum to the reference area 1/2.
pub fn triangle_quadrature<T: Real>(degree: usize) -> Result<QuadratureRule<T>> {
    let third = T::lit(1.0) / T::lit(3.0);
    let half = T::lit(0.5);
    match degree {
        0 | 1 => Ok(QuadratureRule {
            degree: 1,
            points: vec![[third, third]],
            weights: vec![half],
        }),
        2 => {
            let a = T::lit(1.0) / T::lit(6.0);
            let b = T::lit(2.0) / T::lit(3.0);
            Ok(QuadratureRule {
                degree: 2,
                points: vec![[a, a], [b, a], [a, b]],
                weights: vec![a; 3],
            })
        }
        3..=5 => {
            // Radon's seven-point rule.
            let s15 = T::lit(15.0).sqrt();
            let a1 = (T::lit(6.0) - s15) / T::lit(21.0);
            let a2 = (T::lit(6.0) + s15) / T::lit(21.0);
            let w1 = (T::lit(155.0) - s15) / T::lit(2400.0);
            let w2 = (T::lit(155.0) + s15) / T::lit(2400.0);
            let two = T::lit(2.0);
            let one = T::one();
            Ok(QuadratureRule {
                degree: 5,
                points: vec![
                    [third, third],
                    [a1, a1],
                    [one - two * a1, a1],
                    [a1, one - two * a1],
                    [a2, a2],
                    [one - two * a2, a2],
                    [a2, one - two * a2],
                ],
                weights: vec![T::lit(9.0) / T::lit(80.0), w1, w1, w1, w2, w2, w2],
            })
        }
        6..=MAX_TRIANGLE_DEGREE => Ok(collapsed_rule(degree)),
        _ => Err(Error::invalid(format!(
            "no triangle rule of degree {degree} (maximum {MAX_TRIANGLE_DEGREE})"
        ))),
    }
}

/// Conical product rule from the square via `(u, v) -> (u, v (1 - u))`.
fn collapsed_rule<T: Real>(degree: usize) -> QuadratureRule<T> {
    // The Jacobian (1 - u) raises the degree in u by one.
    let n = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre::<T>(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = x[i];
            points.push([u, x[j] * (T::one() - u)]);
            weights.push(w[i] * w[j] * (T::one() - u));
        }
    }
    QuadratureRule {
        degree: 2 * n - 2,
        points,
        weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // Closed form over the reference triangle: m! n! / (m + n + 2)!
    fn monomial_integral(m: u32, n: u32) -> f64 {
        factorial(m) * factorial(n) / factorial(m + n + 2)
    }

    #[test]
    fn centroid_rule() {
        let q = triangle_quadrature::<f64>(1).unwrap();
        assert_eq!(q.len(), 1);
        assert!((q.points[0][0] - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(q.weights[0], 0.5);
    }

    #[test]
    fn weights_sum_to_half() {
        for d in 0..=MAX_TRIANGLE_DEGREE {
            let q = triangle_quadrature::<f64>(d).unwrap();
            let s: f64 = q.weights.iter().sum();
            assert!((s - 0.5).abs() < 1e-14, "degree {d}");
            assert!(q.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn x2y2_integral() {
        let q = triangle_quadrature::<f64>(4).unwrap();
        let v = q.integrate(|p| p[0] * p[0] * p[1] * p[1]);
        assert!((v - 1.0 / 180.0).abs() < 1e-15);
        assert!((monomial_integral(2, 2) - 1.0 / 180.0).abs() < 1e-18);
    }

    #[test]
    fn exact_on_monomials() {
        for d in 0..=12 {
            let q = triangle_quadrature::<f64>(d).unwrap();
            for m in 0..=d as u32 {
                for n in 0..=(d as u32 - m) {
                    let v = q.integrate(|p| p[0].powi(m as i32) * p[1].powi(n as i32));
                    let exact = monomial_integral(m, n);
                    assert!((v - exact).abs() < 1e-14, "rule {d}: x^{m} y^{n}: {v} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(triangle_quadrature::<f64>(MAX_TRIANGLE_DEGREE + 1).is_err());
    }

    #[test]
    fn gauss_five_points() {
        let (x, w) = gauss_legendre::<f64>(5);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        // Exact for degree 9 on [0, 1].
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((v - 0.1).abs() < 1e-15);
    }
}
