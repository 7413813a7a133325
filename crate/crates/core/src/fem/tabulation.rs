//! Basis values pushed forward to every quadrature point of a mesh.

use crate::error::Result;
use crate::scalar::{Real, Vec3};

use super::geometry::PointGeometry;
use super::quadrature::triangle_quadrature;
use super::reference::Family;
use super::space::FunctionSpace;

/// Quadrature points, weights and physical basis values for all cells.
///
/// Entry `(c, q)` lives at flat index `c * nq + q`; basis values at
/// `(c * nq + q) * ndof + i`. RT values already carry the global orientation
/// signs. DG functions are `ψ̂ ḡ / g` with `ḡ` the area element at the cell
/// centroid, so that the divergence of every RT field lies in the paired DG
/// space on curved cells too; on flat cells this is plain composition.
#[derive(Debug, Clone)]
pub struct Tabulation<T> {
    pub family: Family,
    pub num_cells: usize,
    pub nq: usize,
    pub ndof: usize,
    pub ref_points: Vec<[T; 2]>,
    /// Physical quadrature points.
    pub x: Vec<Vec3<T>>,
    /// Unit normals of the cell map.
    pub normal: Vec<Vec3<T>>,
    /// Quadrature weight times area element.
    pub wg: Vec<T>,
    pub vectors: Vec<Vec3<T>>,
    pub divs: Vec<T>,
    pub scalars: Vec<T>,
}

impl<T: Real> Tabulation<T> {
    pub fn new(space: &FunctionSpace<T>, degree: usize) -> Result<Self> {
        let rule = triangle_quadrature::<T>(degree)?;
        let mesh = space.mesh();
        let basis = space.basis();
        let family = space.family();
        let nc = mesh.num_cells();
        let nq = rule.len();
        let ndof = space.num_cell_dofs();
        let ref_vec: Vec<Vec<[T; 2]>> = rule.points.iter().map(|&p| basis.eval_vector(p)).collect();
        let ref_div: Vec<Vec<T>> = rule.points.iter().map(|&p| basis.eval_div(p)).collect();
        let ref_scal: Vec<Vec<T>> = rule.points.iter().map(|&p| basis.eval_scalar(p)).collect();
        let third = T::one() / T::lit(3.0);

        let mut tab = Self {
            family,
            num_cells: nc,
            nq,
            ndof,
            ref_points: rule.points.clone(),
            x: Vec::with_capacity(nc * nq),
            normal: Vec::with_capacity(nc * nq),
            wg: Vec::with_capacity(nc * nq),
            vectors: Vec::new(),
            divs: Vec::new(),
            scalars: Vec::new(),
        };
        match family {
            Family::Rt => {
                tab.vectors.reserve(nc * nq * ndof);
                tab.divs.reserve(nc * nq * ndof);
            }
            Family::Dg => tab.scalars.reserve(nc * nq * ndof),
        }
        for c in 0..nc {
            let geom = mesh.cell_geometry(c);
            let signs = space.cell_signs(c);
            let g_bar = PointGeometry::new(&geom, [third, third])?.g;
            for (q, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let pg = PointGeometry::new(&geom, p)?;
                tab.x.push(pg.x);
                tab.normal.push(pg.normal);
                tab.wg.push(w * pg.g);
                match family {
                    Family::Rt => {
                        for i in 0..ndof {
                            let v = pg.push_forward(ref_vec[q][i]);
                            let s = signs[i];
                            tab.vectors.push([s * v[0], s * v[1], s * v[2]]);
                            tab.divs.push(s * pg.push_forward_div(ref_div[q][i]));
                        }
                    }
                    Family::Dg => {
                        let scale = g_bar / pg.g;
                        tab.scalars.extend(ref_scal[q].iter().map(|&v| v * scale));
                    }
                }
            }
        }
        Ok(tab)
    }

    /// Tabulation at the space's default assembly degree.
    pub fn for_space(space: &FunctionSpace<T>) -> Result<Self> {
        Self::new(space, space.quadrature_degree())
    }

    #[inline]
    pub fn point(&self, c: usize, q: usize) -> usize {
        c * self.nq + q
    }

    #[inline]
    pub fn vector(&self, c: usize, q: usize) -> &[Vec3<T>] {
        let k = (c * self.nq + q) * self.ndof;
        &self.vectors[k..k + self.ndof]
    }

    #[inline]
    pub fn div(&self, c: usize, q: usize) -> &[T] {
        let k = (c * self.nq + q) * self.ndof;
        &self.divs[k..k + self.ndof]
    }

    #[inline]
    pub fn scalar(&self, c: usize, q: usize) -> &[T] {
        let k = (c * self.nq + q) * self.ndof;
        &self.scalars[k..k + self.ndof]
    }
}
