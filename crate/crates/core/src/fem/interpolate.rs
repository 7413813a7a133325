//! The commuting projections: canonical RT interpolation `Π` and the
//! cellwise `L²` projection `π` onto DG spaces, plus pointwise evaluation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::DenseLu;
use crate::mesh::LOCAL_EDGES;
use crate::scalar::{add3, cross3, dot3, norm3, scale3, Real, Vec3};

use super::geometry::PointGeometry;
use super::reference::{reference_vertex, rt_dofs, Family};
use super::space::{Field, FunctionSpace};
use super::tabulation::Tabulation;

fn expect_family<T: Real>(space: &FunctionSpace<T>, family: Family) -> Result<()> {
    if space.family() != family {
        return Err(Error::invalid(format!(
            "expected a {family:?} space, got {:?}",
            space.family()
        )));
    }
    Ok(())
}

/// Canonical interpolation into an RT space.
///
/// The field is pulled back to each reference cell (which discards any
/// component normal to the discrete surface) and the reference dofs are
/// applied. Edge moments seen from the two incident cells are averaged; on
/// the plane they agree exactly.
pub fn interpolate_hdiv<T: Real>(
    space: &Arc<FunctionSpace<T>>,
    u: impl Fn(&Vec3<T>) -> Vec3<T>,
) -> Result<Field<T>> {
    expect_family(space, Family::Rt)?;
    let mesh = space.mesh();
    let order = space.order();
    let mut sum = vec![T::zero(); space.dim()];
    let mut count = vec![0u32; space.dim()];
    for c in 0..mesh.num_cells() {
        let geom = mesh.cell_geometry(c);
        let mut failure = None;
        let local = rt_dofs(order, |p| match PointGeometry::new(&geom, p) {
            Ok(pg) => pg.pull_back(&u(&pg.x)),
            Err(e) => {
                failure.get_or_insert(e);
                [T::zero(); 2]
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        for ((&d, &s), &v) in space.cell_dofs(c).iter().zip(space.cell_signs(c)).zip(&local) {
            sum[d] += s * v;
            count[d] += 1;
        }
    }
    let coeffs = sum
        .into_iter()
        .zip(count)
        .map(|(s, n)| if n > 1 { s / T::from_u32(n).expect("count") } else { s })
        .collect();
    Field::new(Arc::clone(space), coeffs)
}

/// Per-cell DG mass matrices from a tabulation.
pub(crate) fn local_dg_masses<T: Real>(tab: &Tabulation<T>) -> Vec<Vec<Vec<T>>> {
    (0..tab.num_cells)
        .map(|c| {
            let mut m = vec![vec![T::zero(); tab.ndof]; tab.ndof];
            for q in 0..tab.nq {
                let wg = tab.wg[tab.point(c, q)];
                let psi = tab.scalar(c, q);
                for i in 0..tab.ndof {
                    for j in 0..tab.ndof {
                        m[i][j] += wg * psi[i] * psi[j];
                    }
                }
            }
            m
        })
        .collect()
}

/// `L²` projection onto a DG space by cellwise mass solves.
pub fn project_l2<T: Real>(
    space: &Arc<FunctionSpace<T>>,
    s: impl Fn(&Vec3<T>) -> T,
) -> Result<Field<T>> {
    expect_family(space, Family::Dg)?;
    let tab = Tabulation::for_space(space)?;
    project_l2_with(space, &tab, s)
}

pub(crate) fn project_l2_with<T: Real>(
    space: &Arc<FunctionSpace<T>>,
    tab: &Tabulation<T>,
    s: impl Fn(&Vec3<T>) -> T,
) -> Result<Field<T>> {
    let masses = local_dg_masses(tab);
    let mut coeffs = vec![T::zero(); space.dim()];
    for (c, m) in masses.iter().enumerate() {
        let mut b = vec![T::zero(); tab.ndof];
        for q in 0..tab.nq {
            let k = tab.point(c, q);
            let sv = s(&tab.x[k]) * tab.wg[k];
            for (bi, &psi) in b.iter_mut().zip(tab.scalar(c, q)) {
                *bi += sv * psi;
            }
        }
        let local = DenseLu::new(m)?.solve(&b);
        for (&d, v) in space.cell_dofs(c).iter().zip(local) {
            coeffs[d] = v;
        }
    }
    Field::new(Arc::clone(space), coeffs)
}

/// `‖s − πs‖` in `L²`.
pub fn projection_error<T: Real>(
    space: &Arc<FunctionSpace<T>>,
    s: impl Fn(&Vec3<T>) -> T,
) -> Result<T> {
    expect_family(space, Family::Dg)?;
    let tab = Tabulation::for_space(space)?;
    let proj = project_l2_with(space, &tab, &s)?;
    let mut acc = T::zero();
    for c in 0..tab.num_cells {
        let dofs = space.cell_dofs(c);
        for q in 0..tab.nq {
            let k = tab.point(c, q);
            let uh: T = dofs.iter().zip(tab.scalar(c, q)).map(|(&d, &p)| proj.coeffs()[d] * p).sum();
            let e = s(&tab.x[k]) - uh;
            acc += tab.wg[k] * e * e;
        }
    }
    Ok(acc.sqrt())
}

/// Value of a field at a point of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue<T> {
    Scalar(T),
    Vector(Vec3<T>),
}

/// Evaluates a field at reference point `xi` of cell `cell`.
pub fn evaluate_field<T: Real>(field: &Field<T>, cell: usize, xi: [T; 2]) -> Result<FieldValue<T>> {
    let space = field.space();
    let mesh = space.mesh();
    if cell >= mesh.num_cells() {
        return Err(Error::invalid(format!(
            "cell {cell} out of range ({} cells)",
            mesh.num_cells()
        )));
    }
    let geom = mesh.cell_geometry(cell);
    let pg = PointGeometry::new(&geom, xi)?;
    let dofs = space.cell_dofs(cell);
    let signs = space.cell_signs(cell);
    let coeffs = field.coeffs();
    match space.family() {
        Family::Rt => {
            let mut v = [T::zero(); 3];
            for (i, r) in space.basis().eval_vector(xi).into_iter().enumerate() {
                let phi = pg.push_forward(r);
                let a = signs[i] * coeffs[dofs[i]];
                for k in 0..3 {
                    v[k] += a * phi[k];
                }
            }
            Ok(FieldValue::Vector(v))
        }
        Family::Dg => {
            let third = T::one() / T::lit(3.0);
            let scale = PointGeometry::new(&geom, [third, third])?.g / pg.g;
            let v = space
                .basis()
                .eval_scalar(xi)
                .into_iter()
                .zip(dofs)
                .map(|(p, &d)| p * scale * coeffs[d])
                .sum();
            Ok(FieldValue::Scalar(v))
        }
    }
}

/// Largest relative mismatch of the normal flux across interior edges,
/// sampled at two points per edge. Zero for an `H(div)`-conforming field.
pub fn max_normal_jump<T: Real>(u: &Field<T>) -> Result<T> {
    expect_family(u.space(), Family::Rt)?;
    let mesh = u.space().mesh();
    let mut worst = T::zero();
    for e in 0..mesh.num_edges() {
        let [Some(c0), Some(c1)] = mesh.edge_cells(e) else { continue };
        for s in [T::lit(0.5), T::lit(0.2)] {
            let mut flux = [T::zero(); 2];
            let mut scale = T::one();
            for (side, &c) in [c0, c1].iter().enumerate() {
                let k = mesh
                    .cell_edges(c)
                    .iter()
                    .position(|&(ee, _)| ee == e)
                    .expect("edge lists are consistent");
                let [la, lb] = LOCAL_EDGES[k];
                let (a, b) = (mesh.cells()[c][la], mesh.cells()[c][lb]);
                // Same physical point from both sides: parameter runs from min to max id.
                let t = if a < b { s } else { T::one() - s };
                let va = reference_vertex::<T>(la);
                let vb = reference_vertex::<T>(lb);
                let xi = [va[0] + t * (vb[0] - va[0]), va[1] + t * (vb[1] - va[1])];
                let pg = PointGeometry::new(&mesh.cell_geometry(c), xi)?;
                let tangent = add3(&scale3(vb[0] - va[0], &pg.jac[0]), &scale3(vb[1] - va[1], &pg.jac[1]));
                // Outward conormal scaled by the edge line element.
                let conormal = cross3(&tangent, &pg.normal);
                let FieldValue::Vector(val) = evaluate_field(u, c, xi)? else {
                    unreachable!("RT fields evaluate to vectors")
                };
                flux[side] = dot3(&val, &conormal);
                scale = scale.max(norm3(&val) * norm3(&conormal));
            }
            worst = worst.max((flux[0] + flux[1]).abs() / scale);
        }
    }
    Ok(worst)
}
