//! Pointwise geometry of a cell map and the contravariant Piola transform.

use crate::error::{Error, Result};
use crate::mesh::CellGeometry;
use crate::scalar::{cross3, dot3, norm3, scale3, Real, Vec3};

/// Below this area element a cell map is treated as degenerate.
pub const MIN_AREA_ELEMENT: f64 = 1e-14;

/// Geometry of a cell map at one reference point.
#[derive(Debug, Clone, Copy)]
pub struct PointGeometry<T> {
    /// Physical point (planar points have zero third component).
    pub x: Vec3<T>,
    /// Jacobian columns `dx/dξ` and `dx/dη`.
    pub jac: [Vec3<T>; 2],
    /// Area element `|J_ξ × J_η|`, equal to `|det J|` on the plane.
    pub g: T,
    /// Unit normal `J_ξ × J_η / g`; `(0, 0, 1)` on the plane.
    pub normal: Vec3<T>,
    /// Inverse of the metric `JᵀJ`.
    ginv: [[T; 2]; 2],
}

impl<T: Real> PointGeometry<T> {
    pub fn new(cell: &CellGeometry<T>, xi: [T; 2]) -> Result<Self> {
        let (x, jac) = cell.map(xi);
        let n = cross3(&jac[0], &jac[1]);
        let g = norm3(&n);
        if !(g > T::lit(MIN_AREA_ELEMENT)) {
            return Err(Error::Geometry(format!("degenerate cell map (area element {g:e})")));
        }
        let g11 = dot3(&jac[0], &jac[0]);
        let g12 = dot3(&jac[0], &jac[1]);
        let g22 = dot3(&jac[1], &jac[1]);
        let det = g * g;
        Ok(Self {
            x,
            jac,
            g,
            normal: scale3(T::one() / g, &n),
            ginv: [[g22 / det, -g12 / det], [-g12 / det, g11 / det]],
        })
    }

    /// `J v̂ / g`.
    pub fn push_forward(&self, v: [T; 2]) -> Vec3<T> {
        let s = T::one() / self.g;
        let j = &self.jac;
        [
            s * (j[0][0] * v[0] + j[1][0] * v[1]),
            s * (j[0][1] * v[0] + j[1][1] * v[1]),
            s * (j[0][2] * v[0] + j[1][2] * v[1]),
        ]
    }

    /// `div̂ / g`.
    pub fn push_forward_div(&self, d: T) -> T {
        d / self.g
    }

    /// Inverse Piola `g (JᵀJ)⁻¹ Jᵀ u`. Any component of `u` normal to the
    /// cell's tangent plane is discarded.
    pub fn pull_back(&self, u: &Vec3<T>) -> [T; 2] {
        let a = dot3(&self.jac[0], u);
        let b = dot3(&self.jac[1], u);
        [
            self.g * (self.ginv[0][0] * a + self.ginv[0][1] * b),
            self.g * (self.ginv[1][0] * a + self.ginv[1][1] * b),
        ]
    }

    /// Orthogonal projection onto the cell's tangent plane.
    pub fn tangent_part(&self, u: &Vec3<T>) -> Vec3<T> {
        let c = dot3(&self.normal, u);
        [u[0] - c * self.normal[0], u[1] - c * self.normal[1], u[2] - c * self.normal[2]]
    }

    /// `n × u`, the counterclockwise quarter turn within the tangent plane.
    pub fn perp(&self, u: &Vec3<T>) -> Vec3<T> {
        cross3(&self.normal, u)
    }
}

/// Pushes reference RT values and divergences forward at one point.
pub fn piola_push_forward<T: Real>(
    pg: &PointGeometry<T>,
    values: &[[T; 2]],
    divs: &[T],
) -> (Vec<Vec3<T>>, Vec<T>) {
    (
        values.iter().map(|v| pg.push_forward(*v)).collect(),
        divs.iter().map(|&d| pg.push_forward_div(d)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::reference::reference_rt_basis;
    use crate::mesh::Mesh;

    fn planar(nodes: [[f64; 2]; 3]) -> CellGeometry<f64> {
        let mut n = [[0.0; 3]; 6];
        for k in 0..3 {
            n[k] = [nodes[k][0], nodes[k][1], 0.0];
        }
        CellGeometry { degree: 1, nodes: n }
    }

    #[test]
    fn identity_map() {
        let cell = planar([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let b = reference_rt_basis::<f64>(1).unwrap();
        let p = [0.2, 0.3];
        let pg = PointGeometry::new(&cell, p).unwrap();
        let (vals, divs) = piola_push_forward(&pg, &b.eval_vector(p), &b.eval_div(p));
        for (v, r) in vals.iter().zip(b.eval_vector(p)) {
            assert_eq!([v[0], v[1], v[2]], [r[0], r[1], 0.0]);
        }
        assert!(divs.iter().all(|&d| (d - 2.0).abs() < 1e-13));
    }

    #[test]
    fn affine_det_two() {
        let cell = planar([[1.0, 1.0], [3.0, 1.0], [1.0, 2.0]]);
        let b = reference_rt_basis::<f64>(1).unwrap();
        let pg = PointGeometry::new(&cell, [0.25, 0.25]).unwrap();
        assert!((pg.g - 2.0).abs() < 1e-15);
        let (_, divs) = piola_push_forward(&pg, &b.eval_vector([0.25, 0.25]), &b.eval_div([0.25, 0.25]));
        assert!(divs.iter().all(|&d| (d - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sphere_cell_fields_are_tangent() {
        let mesh = Mesh::<f64>::icosphere(0, 1).unwrap();
        let b = reference_rt_basis::<f64>(1).unwrap();
        for c in 0..mesh.num_cells() {
            let pg = PointGeometry::new(&mesh.cell_geometry(c), [0.3, 0.2]).unwrap();
            let (vals, _) = piola_push_forward(&pg, &b.eval_vector([0.3, 0.2]), &b.eval_div([0.3, 0.2]));
            for v in vals {
                assert!(dot3(&v, &pg.normal).abs() <= 1e-14);
            }
            assert!(dot3(&pg.normal, &pg.x) > 0.0);
        }
    }

    #[test]
    fn pull_back_inverts_push_forward() {
        let mesh = Mesh::<f64>::icosphere(1, 2).unwrap();
        let pg = PointGeometry::new(&mesh.cell_geometry(7), [0.1, 0.6]).unwrap();
        let v = [0.7, -1.3];
        let back = pg.pull_back(&pg.push_forward(v));
        assert!((back[0] - v[0]).abs() < 1e-13 && (back[1] - v[1]).abs() < 1e-13);
        let t = pg.tangent_part(&[1.0, 2.0, 3.0]);
        assert!(dot3(&t, &pg.normal).abs() < 1e-15);
        let p = pg.perp(&t);
        assert!(dot3(&p, &t).abs() < 1e-14);
    }

    #[test]
    fn degenerate_cell() {
        let cell = planar([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!(matches!(PointGeometry::new(&cell, [0.2, 0.2]), Err(Error::Geometry(_))));
    }
}
