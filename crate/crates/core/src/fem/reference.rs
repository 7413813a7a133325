//! Reference-triangle bases for the Raviart–Thomas and discontinuous
//! Lagrange families.

use crate::error::{Error, Result};
use crate::linalg::DenseLu;
use crate::mesh::LOCAL_EDGES;
use crate::scalar::Real;

use super::quadrature::{gauss_legendre, triangle_quadrature};

/// Element family of a function space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Raviart–Thomas, `H(div)`-conforming vector fields.
    Rt,
    /// Discontinuous Lagrange scalars.
    Dg,
}

/// Gauss points used for every edge moment.
pub const EDGE_GAUSS_POINTS: usize = 10;

/// Quadrature degree for the interior moments of the reference dofs.
const INTERIOR_MOMENT_DEGREE: usize = 14;

/// Vertices of the reference triangle.
pub(crate) fn reference_vertex<T: Real>(v: usize) -> [T; 2] {
    match v {
        0 => [T::zero(), T::zero()],
        1 => [T::one(), T::zero()],
        _ => [T::zero(), T::one()],
    }
}

/// Polynomial of total degree at most two in the monomials
/// `1, x, y, x^2, xy, y^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Poly<T>([T; 6]);

impl<T: Real> Poly<T> {
    fn zero() -> Self {
        Self([T::zero(); 6])
    }

    fn monomial(k: usize) -> Self {
        let mut c = [T::zero(); 6];
        c[k] = T::one();
        Self(c)
    }

    fn eval(&self, p: [T; 2]) -> T {
        let [x, y] = p;
        let c = &self.0;
        c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    }

    fn dx(&self, p: [T; 2]) -> T {
        let [x, y] = p;
        let c = &self.0;
        c[1] + T::lit(2.0) * c[3] * x + c[4] * y
    }

    fn dy(&self, p: [T; 2]) -> T {
        let [x, y] = p;
        let c = &self.0;
        c[2] + c[4] * x + T::lit(2.0) * c[5] * y
    }

    fn axpy(&mut self, a: T, other: &Self) {
        for (s, o) in self.0.iter_mut().zip(other.0) {
            *s += a * o;
        }
    }
}

const ONE: usize = 0;
const X: usize = 1;
const Y: usize = 2;
const XX: usize = 3;
const XY: usize = 4;
const YY: usize = 5;

/// Spanning set of the RT space before dualisation.
fn rt_spanning_set<T: Real>(order: usize) -> Vec<[Poly<T>; 2]> {
    let m = Poly::monomial;
    let z = Poly::zero;
    match order {
        1 => vec![[m(ONE), z()], [z(), m(ONE)], [m(X), m(Y)]],
        _ => vec![
            [m(ONE), z()],
            [m(X), z()],
            [m(Y), z()],
            [z(), m(ONE)],
            [z(), m(X)],
            [z(), m(Y)],
            [m(XX), m(XY)],
            [m(XY), m(YY)],
        ],
    }
}

/// The standard RT degrees of freedom applied to a vector field on the
/// reference triangle: per local edge the normal-flux moments against
/// Legendre polynomials of degree `< order`, then (order 2) the two interior
/// moments `∫ u_x`, `∫ u_y`.
///
/// Edge normals are outward and scaled by the edge length, so the lowest
/// moment is the total flux through the edge. Higher moments are taken along
/// the counterclockwise edge parameter.
pub fn rt_dofs<T: Real>(order: usize, mut u: impl FnMut([T; 2]) -> [T; 2]) -> Vec<T> {
    let (gx, gw) = gauss_legendre::<T>(EDGE_GAUSS_POINTS);
    let mut out = Vec::with_capacity(rt_num_dofs(order));
    for [a, b] in LOCAL_EDGES {
        let va = reference_vertex::<T>(a);
        let vb = reference_vertex::<T>(b);
        let d = [vb[0] - va[0], vb[1] - va[1]];
        let nu = [d[1], -d[0]];
        for m in 0..order {
            let mut acc = T::zero();
            for (&s, &w) in gx.iter().zip(&gw) {
                let p = [va[0] + s * d[0], va[1] + s * d[1]];
                let v = u(p);
                let leg = if m == 0 { T::one() } else { T::lit(2.0) * s - T::one() };
                acc += w * leg * (v[0] * nu[0] + v[1] * nu[1]);
            }
            out.push(acc);
        }
    }
    if order == 2 {
        let q = triangle_quadrature::<T>(INTERIOR_MOMENT_DEGREE).expect("tabulated degree");
        let mut ix = T::zero();
        let mut iy = T::zero();
        for (&p, &w) in q.points.iter().zip(&q.weights) {
            let v = u(p);
            ix += w * v[0];
            iy += w * v[1];
        }
        out.push(ix);
        out.push(iy);
    }
    out
}

fn rt_num_dofs(order: usize) -> usize {
    match order {
        1 => 3,
        _ => 8,
    }
}

/// Number of dofs carried by each edge and each cell interior.
pub(crate) fn dof_layout(family: Family, order: usize) -> (usize, usize) {
    match (family, order) {
        (Family::Rt, 1) => (1, 0),
        (Family::Rt, _) => (2, 2),
        (Family::Dg, 0) => (0, 1),
        (Family::Dg, _) => (0, 3),
    }
}

/// A nodal basis on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone)]
pub struct ReferenceBasis<T> {
    family: Family,
    order: usize,
    vector: Vec<[Poly<T>; 2]>,
    scalar: Vec<Poly<T>>,
}

impl<T: Real> ReferenceBasis<T> {
    pub fn new(family: Family, order: usize) -> Result<Self> {
        match family {
            Family::Rt => reference_rt_basis(order),
            Family::Dg => reference_dg_basis(order),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_dofs(&self) -> usize {
        match self.family {
            Family::Rt => self.vector.len(),
            Family::Dg => self.scalar.len(),
        }
    }

    /// Vector values of every basis function (RT only; empty for DG).
    pub fn eval_vector(&self, p: [T; 2]) -> Vec<[T; 2]> {
        self.vector.iter().map(|[a, b]| [a.eval(p), b.eval(p)]).collect()
    }

    /// Reference divergences of every basis function (RT only; empty for DG).
    pub fn eval_div(&self, p: [T; 2]) -> Vec<T> {
        self.vector.iter().map(|[a, b]| a.dx(p) + b.dy(p)).collect()
    }

    /// Scalar values of every basis function (DG only; empty for RT).
    pub fn eval_scalar(&self, p: [T; 2]) -> Vec<T> {
        self.scalar.iter().map(|s| s.eval(p)).collect()
    }
}

/// RT basis of order 1 (lowest order, three edge fluxes) or order 2.
pub fn reference_rt_basis<T: Real>(order: usize) -> Result<ReferenceBasis<T>> {
    if !(1..=2).contains(&order) {
        return Err(Error::invalid(format!("RT order {order} unsupported (1 or 2)")));
    }
    let span = rt_spanning_set::<T>(order);
    let n = span.len();
    // dofs[k][i] = dof k applied to spanning function i.
    let cols: Vec<Vec<T>> = span
        .iter()
        .map(|[a, b]| rt_dofs(order, |p| [a.eval(p), b.eval(p)]))
        .collect();
    let dof_matrix: Vec<Vec<T>> = (0..n).map(|k| (0..n).map(|i| cols[i][k]).collect()).collect();
    let coeffs = DenseLu::new(&dof_matrix)?.inverse();
    let vector = (0..n)
        .map(|j| {
            let mut phi = [Poly::zero(), Poly::zero()];
            for (i, [a, b]) in span.iter().enumerate() {
                phi[0].axpy(coeffs[i][j], a);
                phi[1].axpy(coeffs[i][j], b);
            }
            phi
        })
        .collect();
    Ok(ReferenceBasis {
        family: Family::Rt,
        order,
        vector,
        scalar: Vec::new(),
    })
}

/// DG basis of order 0 (constant) or 1 (barycentric coordinates).
pub fn reference_dg_basis<T: Real>(order: usize) -> Result<ReferenceBasis<T>> {
    let one = T::one();
    let scalar = match order {
        0 => vec![Poly::monomial(ONE)],
        1 => {
            let mut l0 = Poly::monomial(ONE);
            l0.axpy(-one, &Poly::monomial(X));
            l0.axpy(-one, &Poly::monomial(Y));
            vec![l0, Poly::monomial(X), Poly::monomial(Y)]
        }
        _ => return Err(Error::invalid(format!("DG order {order} unsupported (0 or 1)"))),
    };
    Ok(ReferenceBasis {
        family: Family::Dg,
        order,
        vector: Vec::new(),
        scalar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rt0_closed_form() {
        let b = reference_rt_basis::<f64>(1).unwrap();
        for p in [[0.2, 0.3], [0.0, 0.0], [0.5, 0.25]] {
            let v = b.eval_vector(p);
            let [x, y] = p;
            let expect = [[x, y], [x - 1.0, y], [x, y - 1.0]];
            for j in 0..3 {
                assert!(close(v[j][0], expect[j][0], 1e-14) && close(v[j][1], expect[j][1], 1e-14));
            }
            assert!(b.eval_div(p).iter().all(|&d| close(d, 2.0, 1e-14)));
        }
    }

    #[test]
    fn rt0_unit_edge_fluxes() {
        // Independent check with explicit unit normals and edge lengths.
        let phi = |j: usize, p: [f64; 2]| match j {
            0 => p,
            1 => [p[0] - 1.0, p[1]],
            _ => [p[0], p[1] - 1.0],
        };
        let (gx, gw) = gauss_legendre::<f64>(5);
        let s2 = 2f64.sqrt();
        let edges: [([f64; 2], [f64; 2], [f64; 2], f64); 3] = [
            ([1.0, 0.0], [0.0, 1.0], [1.0 / s2, 1.0 / s2], s2),
            ([0.0, 1.0], [0.0, 0.0], [-1.0, 0.0], 1.0),
            ([0.0, 0.0], [1.0, 0.0], [0.0, -1.0], 1.0),
        ];
        for (i, (a, b, n, len)) in edges.iter().enumerate() {
            for j in 0..3 {
                let flux: f64 = gx
                    .iter()
                    .zip(&gw)
                    .map(|(&s, &w)| {
                        let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let v = phi(j, p);
                        w * len * (v[0] * n[0] + v[1] * n[1])
                    })
                    .sum();
                assert!(close(flux, if i == j { 1.0 } else { 0.0 }, 1e-14), "edge {i} basis {j}");
            }
        }
    }

    #[test]
    fn rt_dof_matrix_is_identity() {
        for order in 1..=2 {
            let b = reference_rt_basis::<f64>(order).unwrap();
            let n = b.num_dofs();
            assert_eq!(n, if order == 1 { 3 } else { 8 });
            for j in 0..n {
                let d = rt_dofs(order, |p| b.eval_vector(p)[j]);
                for (k, v) in d.iter().enumerate() {
                    assert!(close(*v, if k == j { 1.0 } else { 0.0 }, 1e-12), "order {order}: {k},{j} = {v}");
                }
            }
        }
    }

    #[test]
    fn rt1_divergence_is_linear() {
        // div of RT1 fields lies in P1: check the second differences vanish.
        let b = reference_rt_basis::<f64>(2).unwrap();
        let p0 = b.eval_div([0.0, 0.0]);
        let px = b.eval_div([1.0, 0.0]);
        let py = b.eval_div([0.0, 1.0]);
        let pm = b.eval_div([0.3, 0.4]);
        for j in 0..8 {
            let lin = p0[j] + 0.3 * (px[j] - p0[j]) + 0.4 * (py[j] - p0[j]);
            assert!(close(pm[j], lin, 1e-12));
        }
    }

    #[test]
    fn dg_bases() {
        let b0 = reference_dg_basis::<f64>(0).unwrap();
        assert_eq!(b0.eval_scalar([1.0 / 3.0, 1.0 / 3.0]), vec![1.0]);
        let b1 = reference_dg_basis::<f64>(1).unwrap();
        for v in 0..3 {
            let vals = b1.eval_scalar(reference_vertex(v));
            for (i, x) in vals.iter().enumerate() {
                assert_eq!(*x, if i == v { 1.0 } else { 0.0 });
            }
        }
        let s: f64 = b1.eval_scalar([0.17, 0.61]).iter().sum();
        assert!(close(s, 1.0, 1e-15));
    }

    #[test]
    fn unsupported_orders() {
        assert!(reference_rt_basis::<f64>(0).is_err());
        assert!(reference_rt_basis::<f64>(3).is_err());
        assert!(reference_dg_basis::<f64>(2).is_err());
    }
}
