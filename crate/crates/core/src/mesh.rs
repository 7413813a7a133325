//! Triangulations of the unit square and icosahedral approximations of the
//! unit sphere, with canonical edge orientation and per-cell geometry maps.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::{cross3, dot3, norm3, scale3, sub3, Real, Vec3};

/// Local edge `k` joins these two local vertices and lies opposite vertex `k`.
/// The pairs follow the counterclockwise traversal of the cell.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

/// Largest icosphere refinement level accepted by [`Mesh::icosphere`].
pub const MAX_ICOSPHERE_LEVEL: usize = 7;

/// An oriented triangulation embedded in 2D or 3D.
///
/// Edges are stored as `(v_min, v_max)` by global vertex id. A cell records,
/// for each local edge, the global edge id and a sign that is `+1` when the
/// cell's counterclockwise traversal runs from `v_min` to `v_max`, i.e. when the
/// cell's outward normal on that edge agrees with the canonical edge normal.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    dim: usize,
    coords: Vec<T>,
    cells: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<[(usize, i8); 3]>,
    edge_cells: Vec<[Option<usize>; 2]>,
    boundary_edges: Vec<usize>,
    geometry_degree: u8,
    // Mid-edge geometry nodes, populated for quadratic geometry only.
    edge_nodes: Vec<Vec3<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats<T> {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_cells: usize,
    pub h_max: T,
    pub euler_characteristic: i64,
}

/// The polynomial map from the reference triangle onto one cell.
///
/// Nodes are the three vertices, followed for quadratic geometry by the
/// mid-edge nodes in local edge order.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry<T> {
    pub degree: u8,
    pub nodes: [Vec3<T>; 6],
}

impl<T: Real> CellGeometry<T> {
    /// Physical point and Jacobian columns `(dx/dξ, dx/dη)` at a reference point.
    pub fn map(&self, xi: [T; 2]) -> (Vec3<T>, [Vec3<T>; 2]) {
        let (s, t) = (xi[0], xi[1]);
        let one = T::one();
        let zero = T::zero();
        let mut x = [zero; 3];
        let mut d_s = [zero; 3];
        let mut d_t = [zero; 3];
        if self.degree == 1 {
            let n = [one - s - t, s, t];
            let dn_s = [-one, one, zero];
            let dn_t = [-one, zero, one];
            for a in 0..3 {
                for k in 0..3 {
                    x[k] += n[a] * self.nodes[a][k];
                    d_s[k] += dn_s[a] * self.nodes[a][k];
                    d_t[k] += dn_t[a] * self.nodes[a][k];
                }
            }
        } else {
            let two = T::lit(2.0);
            let four = T::lit(4.0);
            let l0 = one - s - t;
            // Vertices 0..3, then mid-edge nodes of edges (1,2), (2,0), (0,1).
            let n = [
                l0 * (two * l0 - one),
                s * (two * s - one),
                t * (two * t - one),
                four * s * t,
                four * t * l0,
                four * l0 * s,
            ];
            let dn_s = [
                -(four * l0 - one),
                four * s - one,
                zero,
                four * t,
                -four * t,
                four * (l0 - s),
            ];
            let dn_t = [
                -(four * l0 - one),
                zero,
                four * t - one,
                four * s,
                four * (l0 - t),
                -four * s,
            ];
            for a in 0..6 {
                for k in 0..3 {
                    x[k] += n[a] * self.nodes[a][k];
                    d_s[k] += dn_s[a] * self.nodes[a][k];
                    d_t[k] += dn_t[a] * self.nodes[a][k];
                }
            }
        }
        (x, [d_s, d_t])
    }
}

impl<T: Real> Mesh<T> {
    /// Unit square split into `nx * ny` squares, each cut along the diagonal
    /// from lower-left to upper-right.
    pub fn rect(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("rect mesh needs nx, ny >= 1"));
        }
        let mut coords = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push(T::from_usize_lossy(i) / T::from_usize_lossy(nx));
                coords.push(T::from_usize_lossy(j) / T::from_usize_lossy(ny));
            }
        }
        let id = |i: usize, j: usize| i + j * (nx + 1);
        let mut cells = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (ll, lr, ur, ul) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                cells.push([ll, lr, ur]);
                cells.push([ll, ur, ul]);
            }
        }
        Self::from_cells(2, coords, cells, 1)
    }

    /// Regular icosahedron refined `level` times by midpoint subdivision, every
    /// new vertex projected radially onto the unit sphere.
    pub fn icosphere(level: usize, geometry_degree: u8) -> Result<Self> {
        if level > MAX_ICOSPHERE_LEVEL {
            return Err(Error::Resource(format!(
                "icosphere level {level} exceeds the limit of {MAX_ICOSPHERE_LEVEL}"
            )));
        }
        if geometry_degree != 1 && geometry_degree != 2 {
            return Err(Error::invalid(format!(
                "geometry degree must be 1 or 2, got {geometry_degree}"
            )));
        }
        let phi = (T::one() + T::lit(5.0).sqrt()) / T::lit(2.0);
        let (o, z) = (T::one(), T::zero());
        let raw: [Vec3<T>; 12] = [
            [-o, phi, z],
            [o, phi, z],
            [-o, -phi, z],
            [o, -phi, z],
            [z, -o, phi],
            [z, o, phi],
            [z, -o, -phi],
            [z, o, -phi],
            [phi, z, -o],
            [phi, z, o],
            [-phi, z, -o],
            [-phi, z, o],
        ];
        let mut verts: Vec<Vec3<T>> = raw.iter().map(normalized).collect();
        let mut cells: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for c in cells.iter_mut() {
            let n = cross3(&sub3(&verts[c[1]], &verts[c[0]]), &sub3(&verts[c[2]], &verts[c[0]]));
            if dot3(&n, &verts[c[0]]) < T::zero() {
                c.swap(1, 2);
            }
        }

        for _ in 0..level {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3<T>>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    let m = scale3(T::lit(0.5), &crate::scalar::add3(&verts[a], &verts[b]));
                    verts.push(normalized(&m));
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(cells.len() * 4);
            for &[a, b, c] in &cells {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.push([a, ab, ca]);
                next.push([b, bc, ab]);
                next.push([c, ca, bc]);
                next.push([ab, bc, ca]);
            }
            cells = next;
        }

        let coords = verts.iter().flat_map(|v| v.iter().copied()).collect();
        Self::from_cells(3, coords, cells, geometry_degree)
    }

    /// Builds connectivity from raw cells. Quadratic geometry places the
    /// mid-edge nodes at the radially projected edge midpoints, so it is only
    /// meaningful for surfaces of the unit sphere.
    pub fn from_cells(
        dim: usize,
        coords: Vec<T>,
        cells: Vec<[usize; 3]>,
        geometry_degree: u8,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("embedding dimension {dim} unsupported")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::invalid("coordinate array length not a multiple of dim"));
        }
        if geometry_degree == 2 && dim != 3 {
            return Err(Error::invalid("quadratic geometry is only used for sphere meshes"));
        }
        let nv = coords.len() / dim;
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_cells: Vec<[Option<usize>; 2]> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (c, verts) in cells.iter().enumerate() {
            if verts.iter().any(|&v| v >= nv) {
                return Err(Error::invalid(format!("cell {c} references a missing vertex")));
            }
            let mut local = [(0usize, 0i8); 3];
            for (k, [la, lb]) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (verts[*la], verts[*lb]);
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_cells.push([None, None]);
                    edges.len() - 1
                });
                if edge_cells[e][0].is_none() {
                    edge_cells[e][0] = Some(c);
                } else if edge_cells[e][1].is_none() {
                    edge_cells[e][1] = Some(c);
                } else {
                    return Err(Error::invalid(format!("edge {key:?} shared by more than two cells")));
                }
                local[k] = (e, if a < b { 1 } else { -1 });
            }
            cell_edges.push(local);
        }
        let boundary_edges = edge_cells
            .iter()
            .enumerate()
            .filter(|(_, cs)| cs[1].is_none())
            .map(|(e, _)| e)
            .collect();

        let mut mesh = Mesh {
            dim,
            coords,
            cells,
            edges,
            cell_edges,
            edge_cells,
            boundary_edges,
            geometry_degree,
            edge_nodes: Vec::new(),
        };
        if geometry_degree == 2 {
            mesh.edge_nodes = mesh
                .edges
                .iter()
                .map(|&[a, b]| {
                    let m = crate::scalar::add3(&mesh.vertex(a), &mesh.vertex(b));
                    normalized(&m)
                })
                .collect();
        }
        mesh.check_orientation()?;
        Ok(mesh)
    }

    fn check_orientation(&self) -> Result<()> {
        for c in 0..self.num_cells() {
            let (x, jac) = self.cell_geometry(c).map([T::lit(1.0 / 3.0); 2]);
            let n = cross3(&jac[0], &jac[1]);
            let outward = if self.dim == 2 { n[2] } else { dot3(&n, &x) };
            if !(outward > T::zero()) {
                return Err(Error::Geometry(format!("cell {c} has nonpositive oriented area")));
            }
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    pub fn is_surface(&self) -> bool {
        self.dim == 3
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn geometry_degree(&self) -> u8 {
        self.geometry_degree
    }

    /// Vertex coordinates, padded with a zero third component on planar meshes.
    pub fn vertex(&self, v: usize) -> Vec3<T> {
        let p = &self.coords[v * self.dim..(v + 1) * self.dim];
        if self.dim == 2 {
            [p[0], p[1], T::zero()]
        } else {
            [p[0], p[1], p[2]]
        }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_edges(&self, c: usize) -> &[(usize, i8); 3] {
        &self.cell_edges[c]
    }

    /// Incident cells of an edge; the second is `None` on the boundary.
    pub fn edge_cells(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_cells[e]
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary_edges
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_cells[e][1].is_none()
    }

    pub fn cell_geometry(&self, c: usize) -> CellGeometry<T> {
        let [a, b, d] = self.cells[c];
        let mut nodes = [[T::zero(); 3]; 6];
        nodes[0] = self.vertex(a);
        nodes[1] = self.vertex(b);
        nodes[2] = self.vertex(d);
        if self.geometry_degree == 2 {
            for k in 0..3 {
                nodes[3 + k] = self.edge_nodes[self.cell_edges[c][k].0];
            }
        }
        CellGeometry {
            degree: self.geometry_degree,
            nodes,
        }
    }

    /// Geometry nodes of a cell: 3 for flat cells, 6 for quadratic cells.
    pub fn geometry_nodes(&self, c: usize) -> Vec<Vec3<T>> {
        let g = self.cell_geometry(c);
        let n = if g.degree == 2 { 6 } else { 3 };
        g.nodes[..n].to_vec()
    }

    pub fn statistics(&self) -> MeshStats<T> {
        let h_max = self
            .edges
            .iter()
            .map(|&[a, b]| norm3(&sub3(&self.vertex(a), &self.vertex(b))))
            .fold(T::zero(), T::max);
        let (v, e, f) = (self.num_vertices(), self.num_edges(), self.num_cells());
        MeshStats {
            num_vertices: v,
            num_edges: e,
            num_cells: f,
            h_max,
            euler_characteristic: v as i64 - e as i64 + f as i64,
        }
    }
}

/// Free-function form of [`Mesh::rect`].
pub fn build_rect_mesh<T: Real>(nx: usize, ny: usize) -> Result<Mesh<T>> {
    Mesh::rect(nx, ny)
}

/// Free-function form of [`Mesh::icosphere`].
pub fn build_icosphere<T: Real>(level: usize, geometry_degree: u8) -> Result<Mesh<T>> {
    Mesh::icosphere(level, geometry_degree)
}

pub fn mesh_statistics<T: Real>(mesh: &Mesh<T>) -> MeshStats<T> {
    mesh.statistics()
}

fn normalized<T: Real>(v: &Vec3<T>) -> Vec3<T> {
    scale3(T::one() / norm3(v), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_counts() {
        let m = Mesh::<f64>::rect(2, 2).unwrap();
        let s = m.statistics();
        assert_eq!((s.num_vertices, s.num_edges, s.num_cells), (9, 16, 8));
        assert_eq!(s.euler_characteristic, 1);
        let m = Mesh::<f64>::rect(1, 1).unwrap();
        let s = m.statistics();
        assert_eq!((s.num_vertices, s.num_edges, s.num_cells), (4, 5, 2));
        assert_eq!(m.boundary_edges().len(), 4);
    }

    #[test]
    fn rect_h_max_is_cell_diagonal() {
        let s = Mesh::<f64>::rect(4, 4).unwrap().statistics();
        assert!((s.h_max - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn rect_rejects_zero() {
        assert!(Mesh::<f64>::rect(0, 3).is_err());
    }

    #[test]
    fn icosahedron_counts() {
        let s = Mesh::<f64>::icosphere(0, 1).unwrap().statistics();
        assert_eq!((s.num_vertices, s.num_edges, s.num_cells), (12, 30, 20));
        assert_eq!(s.euler_characteristic, 2);
        let m = Mesh::<f64>::icosphere(4, 1).unwrap();
        assert_eq!(m.num_cells(), 5120);
        assert_eq!(m.statistics().euler_characteristic, 2);
        assert!(m.boundary_edges().is_empty());
    }

    #[test]
    fn icosphere_level_guard() {
        let err = Mesh::<f64>::icosphere(MAX_ICOSPHERE_LEVEL + 1, 1).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn quadratic_nodes_on_sphere() {
        let m = Mesh::<f64>::icosphere(1, 2).unwrap();
        assert_eq!(m.num_cells(), 80);
        for c in 0..m.num_cells() {
            let nodes = m.geometry_nodes(c);
            assert_eq!(nodes.len(), 6);
            for n in nodes {
                assert!((norm3(&n) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn vertices_on_unit_sphere() {
        let m = Mesh::<f64>::icosphere(3, 1).unwrap();
        for v in 0..m.num_vertices() {
            assert!((norm3(&m.vertex(v)) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn orientation_signs_cancel() {
        for m in [Mesh::<f64>::rect(3, 2).unwrap(), Mesh::icosphere(2, 1).unwrap()] {
            let mut sum = vec![0i32; m.num_edges()];
            let mut count = vec![0usize; m.num_edges()];
            for c in 0..m.num_cells() {
                for &(e, s) in m.cell_edges(c) {
                    sum[e] += s as i32;
                    count[e] += 1;
                }
            }
            for e in 0..m.num_edges() {
                if m.is_boundary_edge(e) {
                    assert_eq!(count[e], 1);
                } else {
                    assert_eq!(count[e], 2);
                    assert_eq!(sum[e], 0, "edge {e}");
                }
            }
        }
    }

    #[test]
    fn h_max_halves_under_refinement() {
        let h: Vec<f64> = (0..5)
            .map(|l| Mesh::<f64>::icosphere(l, 1).unwrap().statistics().h_max)
            .collect();
        for level in 0..4 {
            eprintln!("h ratio {level}->{}: {}", level + 1, h[level + 1] / h[level]);
        }
        // The first split projects midpoints a long way out, so only the
        // later levels halve cleanly.
        assert!((h[1] / h[0] - 0.5877852522924732).abs() < 1e-12);
        for level in 1..4 {
            let r = h[level + 1] / h[level];
            assert!((0.45..=0.55).contains(&r), "level {level}: ratio {r}");
        }
    }

    #[test]
    fn refinement_nests_vertices() {
        let coarse = Mesh::<f64>::icosphere(2, 1).unwrap();
        let fine = Mesh::<f64>::icosphere(3, 1).unwrap();
        for v in 0..coarse.num_vertices() {
            let d = norm3(&sub3(&coarse.vertex(v), &fine.vertex(v)));
            assert!(d < 1e-14);
        }
    }

    #[test]
    fn edge_list_is_deterministic() {
        let a = Mesh::<f64>::icosphere(2, 2).unwrap();
        let b = Mesh::<f64>::icosphere(2, 2).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.cells(), b.cells());
    }

    #[test]
    fn single_precision_mesh() {
        let m = Mesh::<f32>::icosphere(2, 1).unwrap();
        assert_eq!(m.statistics().euler_characteristic, 2);
    }
}
