use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;

use super::reference::{dof_layout, Family, ReferenceBasis};

/// An element family and order bound to a mesh, with its global numbering.
///
/// RT dofs are numbered edge by edge (`order` moments per edge) followed by
/// the interior moments cell by cell; DG dofs cell by cell. On planar meshes
/// the dofs of boundary edges carry the constraint `u·n = 0` and are excluded
/// from the free numbering used by assembled operators.
#[derive(Debug, Clone)]
pub struct FunctionSpace<T> {
    mesh: Arc<Mesh<T>>,
    basis: ReferenceBasis<T>,
    dim: usize,
    ndofs_cell: usize,
    cell_dofs: Vec<usize>,
    cell_signs: Vec<T>,
    boundary_dofs: Vec<usize>,
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
}

impl<T: Real> FunctionSpace<T> {
    pub fn new(mesh: Arc<Mesh<T>>, family: Family, order: usize) -> Result<Self> {
        let basis = ReferenceBasis::new(family, order)?;
        if family == Family::Rt
            && order == 2
            && mesh.is_surface()
            && mesh.geometry_degree() < 2
        {
            return Err(Error::invalid(
                "order-2 RT spaces on curved surfaces require quadratic geometry",
            ));
        }
        let (per_edge, per_cell) = dof_layout(family, order);
        let ne = mesh.num_edges();
        let nc = mesh.num_cells();
        let dim = ne * per_edge + nc * per_cell;
        let ndofs_cell = basis.num_dofs();
        let mut cell_dofs = Vec::with_capacity(nc * ndofs_cell);
        let mut cell_signs = Vec::with_capacity(nc * ndofs_cell);
        for c in 0..nc {
            for &(e, sign) in mesh.cell_edges(c) {
                for m in 0..per_edge {
                    cell_dofs.push(e * per_edge + m);
                    // The normal and the edge parameter flip together, so
                    // odd Legendre moments need no sign change.
                    let s = if m % 2 == 0 { T::from_i8(sign).expect("sign") } else { T::one() };
                    cell_signs.push(s);
                }
            }
            for k in 0..per_cell {
                cell_dofs.push(ne * per_edge + c * per_cell + k);
                cell_signs.push(T::one());
            }
        }
        let boundary_dofs: Vec<usize> = if family == Family::Rt && !mesh.is_surface() {
            mesh.boundary_edges()
                .iter()
                .flat_map(|&e| (0..per_edge).map(move |m| e * per_edge + m))
                .collect()
        } else {
            Vec::new()
        };
        let mut free_index = vec![Some(0); dim];
        for &d in &boundary_dofs {
            free_index[d] = None;
        }
        let mut free_dofs = Vec::with_capacity(dim - boundary_dofs.len());
        for (d, slot) in free_index.iter_mut().enumerate() {
            if slot.is_some() {
                *slot = Some(free_dofs.len());
                free_dofs.push(d);
            }
        }
        Ok(Self {
            mesh,
            basis,
            dim,
            ndofs_cell,
            cell_dofs,
            cell_signs,
            boundary_dofs,
            free_index,
            free_dofs,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.basis.family()
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn basis(&self) -> &ReferenceBasis<T> {
        &self.basis
    }

    /// Global dimension, including constrained boundary dofs.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_cell_dofs(&self) -> usize {
        self.ndofs_cell
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c * self.ndofs_cell..(c + 1) * self.ndofs_cell]
    }

    /// Orientation factors mapping local reference dofs to global ones.
    pub fn cell_signs(&self, c: usize) -> &[T] {
        &self.cell_signs[c * self.ndofs_cell..(c + 1) * self.ndofs_cell]
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn num_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    /// Global coefficients to free coefficients.
    pub fn restrict(&self, full: &[T]) -> Vec<T> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Free coefficients to global coefficients, zero on constrained dofs.
    pub fn extend(&self, free: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (&d, &v) in self.free_dofs.iter().zip(free) {
            out[d] = v;
        }
        out
    }

    /// True when the cell geometry is not affine.
    pub fn is_curved(&self) -> bool {
        self.mesh.geometry_degree() > 1
    }

    /// Approximation order `k`: the RT order, or the DG degree plus one.
    pub fn approximation_order(&self) -> usize {
        match self.family() {
            Family::Rt => self.order(),
            Family::Dg => self.order() + 1,
        }
    }

    /// Quadrature degree used for volume integrals on this space's mesh.
    pub fn quadrature_degree(&self) -> usize {
        2 * self.approximation_order() + if self.is_curved() { 4 } else { 2 }
    }

    /// Checks that `self` (RT) and `w` (DG) form a compatible pair on one mesh.
    pub fn check_pair(&self, w: &FunctionSpace<T>) -> Result<()> {
        if !Arc::ptr_eq(&self.mesh, &w.mesh) {
            return Err(Error::invalid("velocity and elevation spaces live on different meshes"));
        }
        if self.family() != Family::Rt || w.family() != Family::Dg {
            return Err(Error::invalid("expected an RT velocity space and a DG elevation space"));
        }
        if self.order() != w.order() + 1 {
            return Err(Error::invalid(format!(
                "RT order {} does not pair with DG order {}",
                self.order(),
                w.order()
            )));
        }
        Ok(())
    }
}

pub fn build_space<T: Real>(
    mesh: &Arc<Mesh<T>>,
    family: Family,
    order: usize,
) -> Result<Arc<FunctionSpace<T>>> {
    FunctionSpace::new(Arc::clone(mesh), family, order).map(Arc::new)
}

/// A coefficient vector in a function space.
#[derive(Debug, Clone)]
pub struct Field<T> {
    space: Arc<FunctionSpace<T>>,
    coeffs: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(space: Arc<FunctionSpace<T>>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: coeffs.len(),
            });
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: Arc<FunctionSpace<T>>) -> Self {
        let coeffs = vec![T::zero(); space.dim()];
        Self { space, coeffs }
    }

    pub fn space(&self) -> &Arc<FunctionSpace<T>> {
        &self.space
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// Coefficients on the free dofs of the space.
    pub fn free_coeffs(&self) -> Vec<T> {
        self.space.restrict(&self.coeffs)
    }

    /// A field in the same space with new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<T>) -> Result<Self> {
        Self::new(Arc::clone(&self.space), coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let sphere = Arc::new(Mesh::<f64>::icosphere(1, 1).unwrap());
        assert_eq!(build_space(&sphere, Family::Rt, 1).unwrap().dim(), 120);
        let rect = Arc::new(Mesh::<f64>::rect(2, 2).unwrap());
        assert_eq!(build_space(&rect, Family::Dg, 0).unwrap().dim(), 8);
        let ico0 = Arc::new(Mesh::<f64>::icosphere(0, 1).unwrap());
        assert_eq!(build_space(&ico0, Family::Dg, 1).unwrap().dim(), 60);
        let rt1 = build_space(&rect, Family::Rt, 2).unwrap();
        assert_eq!(rt1.dim(), 16 * 2 + 8 * 2);
    }

    #[test]
    fn curved_order_two_needs_quadratic_geometry() {
        let flat = Arc::new(Mesh::<f64>::icosphere(1, 1).unwrap());
        assert!(build_space(&flat, Family::Rt, 2).is_err());
        let curved = Arc::new(Mesh::<f64>::icosphere(1, 2).unwrap());
        assert!(build_space(&curved, Family::Rt, 2).is_ok());
    }

    #[test]
    fn boundary_dofs_on_rect_only() {
        let rect = Arc::new(Mesh::<f64>::rect(2, 2).unwrap());
        let v = build_space(&rect, Family::Rt, 1).unwrap();
        assert_eq!(v.boundary_dofs().len(), 8);
        assert_eq!(v.num_free(), 8);
        let full: Vec<f64> = (0..v.dim()).map(|i| i as f64).collect();
        let back = v.extend(&v.restrict(&full));
        for d in 0..v.dim() {
            let expect = if v.free_index(d).is_some() { d as f64 } else { 0.0 };
            assert_eq!(back[d], expect);
        }
        let sphere = Arc::new(Mesh::<f64>::icosphere(0, 1).unwrap());
        assert!(build_space(&sphere, Family::Rt, 1).unwrap().boundary_dofs().is_empty());
    }

    #[test]
    fn pairs() {
        let mesh = Arc::new(Mesh::<f64>::rect(1, 1).unwrap());
        let v = build_space(&mesh, Family::Rt, 1).unwrap();
        let w0 = build_space(&mesh, Family::Dg, 0).unwrap();
        let w1 = build_space(&mesh, Family::Dg, 1).unwrap();
        assert!(v.check_pair(&w0).is_ok());
        assert!(v.check_pair(&w1).is_err());
        let other = Arc::new(Mesh::<f64>::rect(1, 1).unwrap());
        let w_other = build_space(&other, Family::Dg, 0).unwrap();
        assert!(v.check_pair(&w_other).is_err());
    }

    #[test]
    fn field_length_checked() {
        let mesh = Arc::new(Mesh::<f64>::rect(1, 1).unwrap());
        let w = build_space(&mesh, Family::Dg, 0).unwrap();
        assert!(Field::new(Arc::clone(&w), vec![0.0; 3]).is_err());
        assert_eq!(Field::zeros(w).coeffs(), &[0.0, 0.0]);
    }
}
