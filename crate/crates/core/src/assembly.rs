//! Sparse operators of the mixed weak form and the momentum forcing vector.
//!
//! Velocity operators act on the free dofs of the RT space (boundary normal
//! dofs of planar meshes are eliminated); elevation operators on all DG dofs.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::ForcingSpec;
use crate::error::{Error, Result};
use crate::fem::{Family, FunctionSpace, Tabulation};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::scalar::{cross3, dot3, Real, Vec3};

/// A scalar coefficient evaluated at physical points.
#[derive(Clone)]
pub enum CoefficientField<T> {
    Constant(T),
    Function(Arc<dyn Fn(&Vec3<T>) -> T + Send + Sync>),
}

impl<T: Real> CoefficientField<T> {
    pub fn constant(v: T) -> Self {
        Self::Constant(v)
    }

    pub fn from_fn(f: impl Fn(&Vec3<T>) -> T + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: &Vec3<T>) -> T {
        match self {
            Self::Constant(v) => *v,
            Self::Function(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(v) if *v == T::zero())
    }

    /// Pointwise `self / other`.
    pub fn ratio(&self, other: &Self) -> Self {
        match (self, other) {
            (Self::Constant(a), Self::Constant(b)) => Self::Constant(*a / *b),
            _ => {
                let (a, b) = (self.clone(), other.clone());
                Self::from_fn(move |x| a.eval(x) / b.eval(x))
            }
        }
    }

    /// Pointwise `s * self`.
    pub fn scaled(&self, s: T) -> Self {
        match self {
            Self::Constant(a) => Self::Constant(s * *a),
            _ => {
                let a = self.clone();
                Self::from_fn(move |x| s * a.eval(x))
            }
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for CoefficientField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Which RT dofs an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofSelection {
    /// Constrained boundary dofs eliminated.
    Free,
    /// Every global dof.
    All,
}

fn rt_index<T: Real>(space: &FunctionSpace<T>, sel: DofSelection, d: usize) -> Option<usize> {
    match sel {
        DofSelection::Free => space.free_index(d),
        DofSelection::All => Some(d),
    }
}

fn rt_size<T: Real>(space: &FunctionSpace<T>, sel: DofSelection) -> usize {
    match sel {
        DofSelection::Free => space.num_free(),
        DofSelection::All => space.dim(),
    }
}

fn require<T: Real>(space: &FunctionSpace<T>, family: Family) -> Result<()> {
    if space.family() != family {
        return Err(Error::invalid(format!("expected a {family:?} space")));
    }
    Ok(())
}

/// Generic RT-RT bilinear form: `integrand(point, φ_j, φ_i)` times `w g`.
fn assemble_rt_form<T: Real>(
    space: &FunctionSpace<T>,
    tab: &Tabulation<T>,
    sel: DofSelection,
    integrand: impl Fn(usize, &Vec3<T>, &Vec3<T>) -> T,
) -> CsrMatrix<T> {
    let n = rt_size(space, sel);
    let nd = tab.ndof;
    let mut b = TripletBuilder::new(n, n);
    let mut local = vec![T::zero(); nd * nd];
    for c in 0..tab.num_cells {
        local.iter_mut().for_each(|v| *v = T::zero());
        for q in 0..tab.nq {
            let k = tab.point(c, q);
            let phi = tab.vector(c, q);
            for i in 0..nd {
                for j in 0..nd {
                    local[i * nd + j] += tab.wg[k] * integrand(k, &phi[j], &phi[i]);
                }
            }
        }
        let dofs = space.cell_dofs(c);
        for i in 0..nd {
            let Some(r) = rt_index(space, sel, dofs[i]) else { continue };
            for j in 0..nd {
                if let Some(col) = rt_index(space, sel, dofs[j]) {
                    b.push(r, col, local[i * nd + j]);
                }
            }
        }
    }
    b.build()
}

fn check_positive<T: Real>(tab: &Tabulation<T>, kappa: &CoefficientField<T>, what: &str) -> Result<()> {
    for x in &tab.x {
        let v = kappa.eval(x);
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::invalid(format!(
                "{what} must be positive, found {v} at {x:?}"
            )));
        }
    }
    Ok(())
}

/// `M[i,j] = ∫ κ φ_j·φ_i` on the free dofs.
pub fn assemble_weighted_mass_v<T: Real>(
    space: &FunctionSpace<T>,
    kappa: &CoefficientField<T>,
) -> Result<CsrMatrix<T>> {
    require(space, Family::Rt)?;
    let tab = Tabulation::for_space(space)?;
    assemble_weighted_mass_v_with(space, &tab, kappa, DofSelection::Free)
}

pub fn assemble_weighted_mass_v_with<T: Real>(
    space: &FunctionSpace<T>,
    tab: &Tabulation<T>,
    kappa: &CoefficientField<T>,
    sel: DofSelection,
) -> Result<CsrMatrix<T>> {
    check_positive(tab, kappa, "velocity mass weight")?;
    let w: Vec<T> = tab.x.iter().map(|x| kappa.eval(x)).collect();
    Ok(assemble_rt_form(space, tab, sel, |k, a, b| w[k] * dot3(a, b)))
}

/// Like [`assemble_weighted_mass_v_with`] but allowing a weight that vanishes
/// (drag coefficients). Negative values are still rejected.
pub fn assemble_nonnegative_mass_v_with<T: Real>(
    space: &FunctionSpace<T>,
    tab: &Tabulation<T>,
    kappa: &CoefficientField<T>,
    sel: DofSelection,
) -> Result<CsrMatrix<T>> {
    let w: Vec<T> = tab.x.iter().map(|x| kappa.eval(x)).collect();
    if let Some(v) = w.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
        return Err(Error::invalid(format!("weight must be nonnegative, found {v}")));
    }
    Ok(assemble_rt_form(space, tab, sel, |k, a, b| w[k] * dot3(a, b)))
}

/// `R[i,j] = ∫ w (n × φ_j)·φ_i`, skew-symmetric.
pub fn assemble_perp<T: Real>(space: &FunctionSpace<T>, weight: &CoefficientField<T>) -> Result<CsrMatrix<T>> {
    require(space, Family::Rt)?;
    let tab = Tabulation::for_space(space)?;
    Ok(assemble_perp_with(space, &tab, weight, DofSelection::Free))
}

pub fn assemble_perp_with<T: Real>(
    space: &FunctionSpace<T>,
    tab: &Tabulation<T>,
    weight: &CoefficientField<T>,
    sel: DofSelection,
) -> CsrMatrix<T> {
    let w: Vec<T> = tab.x.iter().map(|x| weight.eval(x)).collect();
    assemble_rt_form(space, tab, sel, |k, pj, pi| {
        w[k] * dot3(&cross3(&tab.normal[k], pj), pi)
    })
}

/// `B[i,j] = ∫ (∇·φ_j) ψ_i`, rows over DG dofs, columns over free RT dofs.
pub fn assemble_div<T: Real>(v: &FunctionSpace<T>, w: &FunctionSpace<T>) -> Result<CsrMatrix<T>> {
    assemble_div_selected(v, w, DofSelection::Free)
}

/// As [`assemble_div`], keeping columns for constrained boundary dofs.
pub fn assemble_div_all<T: Real>(v: &FunctionSpace<T>, w: &FunctionSpace<T>) -> Result<CsrMatrix<T>> {
    assemble_div_selected(v, w, DofSelection::All)
}

fn assemble_div_selected<T: Real>(
    v: &FunctionSpace<T>,
    w: &FunctionSpace<T>,
    sel: DofSelection,
) -> Result<CsrMatrix<T>> {
    require(v, Family::Rt)?;
    require(w, Family::Dg)?;
    if !Arc::ptr_eq(v.mesh(), w.mesh()) {
        return Err(Error::invalid("divergence operator needs spaces on one mesh"));
    }
    let degree = v.quadrature_degree();
    let tv = Tabulation::new(v, degree)?;
    let tw = Tabulation::new(w, degree)?;
    Ok(assemble_div_with(v, w, &tv, &tw, sel))
}

/// Divergence operator from tabulations sharing one quadrature rule.
pub fn assemble_div_with<T: Real>(
    v: &FunctionSpace<T>,
    w: &FunctionSpace<T>,
    tv: &Tabulation<T>,
    tw: &Tabulation<T>,
    sel: DofSelection,
) -> CsrMatrix<T> {
    let mut b = TripletBuilder::new(w.dim(), rt_size(v, sel));
    let (nv, nw) = (tv.ndof, tw.ndof);
    let mut local = vec![T::zero(); nw * nv];
    for c in 0..tv.num_cells {
        local.iter_mut().for_each(|x| *x = T::zero());
        for q in 0..tv.nq {
            let k = tv.point(c, q);
            let div = tv.div(c, q);
            let psi = tw.scalar(c, q);
            for i in 0..nw {
                for j in 0..nv {
                    local[i * nv + j] += tv.wg[k] * div[j] * psi[i];
                }
            }
        }
        let (rows, cols) = (w.cell_dofs(c), v.cell_dofs(c));
        for i in 0..nw {
            for j in 0..nv {
                if let Some(col) = rt_index(v, sel, cols[j]) {
                    b.push(rows[i], col, local[i * nv + j]);
                }
            }
        }
    }
    b.build()
}

/// Block-diagonal DG mass matrix.
pub fn assemble_mass_w<T: Real>(w: &FunctionSpace<T>) -> Result<CsrMatrix<T>> {
    require(w, Family::Dg)?;
    let tab = Tabulation::for_space(w)?;
    Ok(assemble_weighted_mass_w_with(w, &tab, &CoefficientField::Constant(T::one())))
}

/// DG mass matrix `∫ κ ψ_j ψ_i`.
pub fn assemble_weighted_mass_w_with<T: Real>(
    w: &FunctionSpace<T>,
    tab: &Tabulation<T>,
    kappa: &CoefficientField<T>,
) -> CsrMatrix<T> {
    let nd = tab.ndof;
    let mut b = TripletBuilder::new(w.dim(), w.dim());
    for c in 0..tab.num_cells {
        let dofs = w.cell_dofs(c);
        let mut local = vec![T::zero(); nd * nd];
        for q in 0..tab.nq {
            let k = tab.point(c, q);
            let wk = tab.wg[k] * kappa.eval(&tab.x[k]);
            let psi = tab.scalar(c, q);
            for i in 0..nd {
                for j in 0..nd {
                    local[i * nd + j] += wk * psi[i] * psi[j];
                }
            }
        }
        for i in 0..nd {
            for j in 0..nd {
                b.push(dofs[i], dofs[j], local[i * nd + j]);
            }
        }
    }
    b.build()
}

/// The DG dof groups of each cell, for block-diagonal solves.
pub fn cell_dof_groups<T: Real>(w: &FunctionSpace<T>) -> Vec<Vec<usize>> {
    (0..w.mesh().num_cells()).map(|c| w.cell_dofs(c).to_vec()).collect()
}

/// Momentum forcing vector `(F(t), φ_i)` on the free dofs.
pub fn assemble_momentum_rhs<T: Real>(
    space: &FunctionSpace<T>,
    forcing: &ForcingSpec<T>,
    t: T,
) -> Result<Vec<T>> {
    require(space, Family::Rt)?;
    if forcing.is_zero() {
        return Ok(vec![T::zero(); space.num_free()]);
    }
    let tab = Tabulation::for_space(space)?;
    Ok(assemble_momentum_rhs_with(space, &tab, forcing, t, DofSelection::Free))
}

pub fn assemble_momentum_rhs_with<T: Real>(
    space: &FunctionSpace<T>,
    tab: &Tabulation<T>,
    forcing: &ForcingSpec<T>,
    t: T,
    sel: DofSelection,
) -> Vec<T> {
    let mut out = vec![T::zero(); rt_size(space, sel)];
    if forcing.is_zero() {
        return out;
    }
    let nd = tab.ndof;
    let mut local = vec![T::zero(); nd];
    for c in 0..tab.num_cells {
        local.iter_mut().for_each(|v| *v = T::zero());
        for q in 0..tab.nq {
            let k = tab.point(c, q);
            let (x, n, wg) = (&tab.x[k], &tab.normal[k], tab.wg[k]);
            let phi = tab.vector(c, q);
            let div = tab.div(c, q);
            forcing.for_each_term(&mut |term| match term {
                ForcingTerm::Vector(f) => {
                    let fv = f(x, n, t);
                    for i in 0..nd {
                        local[i] += wg * dot3(&fv, &phi[i]);
                    }
                }
                ForcingTerm::Potential(p, gain) => {
                    let s = gain * p(x, t) * wg;
                    for i in 0..nd {
                        local[i] += s * div[i];
                    }
                }
            });
        }
        for (&d, &v) in space.cell_dofs(c).iter().zip(&local) {
            if let Some(r) = rt_index(space, sel, d) {
                out[r] += v;
            }
        }
    }
    out
}

/// One elementary contribution of a [`ForcingSpec`].
pub(crate) enum ForcingTerm<'a, T> {
    Vector(&'a (dyn Fn(&Vec3<T>, &Vec3<T>, T) -> Vec3<T> + Send + Sync)),
    Potential(&'a (dyn Fn(&Vec3<T>, T) -> T + Send + Sync), T),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_space;
    use crate::mesh::Mesh;

    fn reference_triangle() -> Arc<Mesh<f64>> {
        Arc::new(Mesh::from_cells(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![[0, 1, 2]], 1).unwrap())
    }

    #[test]
    fn reference_mass_entry() {
        let v = build_space(&reference_triangle(), Family::Rt, 1).unwrap();
        let tab = Tabulation::for_space(&v).unwrap();
        let m = assemble_weighted_mass_v_with(&v, &tab, &CoefficientField::Constant(1.0), DofSelection::All).unwrap();
        // Hypotenuse basis (x, y): ∫ x² + y² = 2 * 1/12.
        assert!((m.get(0, 0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn reference_div_row() {
        let mesh = reference_triangle();
        let v = build_space(&mesh, Family::Rt, 1).unwrap();
        let w = build_space(&mesh, Family::Dg, 0).unwrap();
        let b = assemble_div_all(&v, &w).unwrap();
        let row: Vec<f64> = (0..3).map(|j| b.get(0, j)).collect();
        for (j, x) in row.iter().enumerate() {
            let sign = f64::from(mesh.cell_edges(0)[j].1);
            assert!((x - sign).abs() < 1e-15);
        }
        // Every dof is on the boundary, so nothing is free.
        assert_eq!(assemble_div(&v, &w).unwrap().ncols(), 0);
    }

    #[test]
    fn weight_validation() {
        let v = build_space(&Arc::new(Mesh::<f64>::rect(2, 2).unwrap()), Family::Rt, 1).unwrap();
        assert!(assemble_weighted_mass_v(&v, &CoefficientField::Constant(0.0)).is_err());
        assert!(assemble_weighted_mass_v(&v, &CoefficientField::from_fn(|x| x[0] - 0.5)).is_err());
    }

    #[test]
    fn perp_is_skew_and_vanishes_for_zero_f() {
        let mesh = Arc::new(Mesh::<f64>::icosphere(1, 1).unwrap());
        let v = build_space(&mesh, Family::Rt, 1).unwrap();
        let r = assemble_perp(&v, &CoefficientField::from_fn(|x| x[2] + 0.3)).unwrap();
        assert!(r.skew_defect() <= 1e-13);
        let z = assemble_perp(&v, &CoefficientField::Constant(0.0)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn dg0_mass_is_area() {
        let mesh = Arc::new(Mesh::<f64>::rect(2, 3).unwrap());
        let w = build_space(&mesh, Family::Dg, 0).unwrap();
        let m = assemble_mass_w(&w).unwrap();
        for i in 0..w.dim() {
            assert!((m.get(i, i) - 1.0 / 12.0).abs() < 1e-15);
        }
    }
}
