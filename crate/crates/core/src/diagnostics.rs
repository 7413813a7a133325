//! Energies, error norms, the discrete Helmholtz decomposition, the steady
//! forced-damped state, constant estimators and rate fits.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_div_with, assemble_weighted_mass_v_with, assemble_weighted_mass_w_with, cell_dof_groups,
    CoefficientField, DofSelection,
};
use crate::dynamics::{ForcingSpec, ManufacturedSolution, Model, State};
use crate::error::{Error, Result};
use crate::fem::{Field, FunctionSpace, Tabulation};
use crate::linalg::{
    solve_general, solve_spd, BlockDiagonal, BlockSystem, CsrMatrix, SolverConfig,
};
use crate::scalar::{dot, dot3, Real};

/// Energy and the norms it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport<T> {
    pub t: T,
    /// `½‖u‖²_{1/H} + (β/2ε²)‖η‖²`.
    pub e1: T,
    /// `½‖u_t‖²_{1/H} + (β/2ε²)‖∇·u‖²`, when computed.
    pub e2: Option<T>,
    pub u_norm_wh: T,
    pub eta_norm: T,
    pub div_u_norm: T,
}

fn quad_form<T: Real>(m: &CsrMatrix<T>, x: &[T]) -> T {
    dot(x, &m.spmv(x).expect("dims")).max(T::zero())
}

fn norms<T: Real>(model: &Model<T>, state: &State<T>) -> (T, T, T) {
    let u = state.u.free_coeffs();
    let u_norm = quad_form(&model.mass_v, &u).sqrt();
    let eta_norm = quad_form(&model.mass_w, state.eta.coeffs()).sqrt();
    let bu = model.div.spmv(&u).expect("dims");
    let d = model.mass_w_inverse().apply(&bu);
    let div_norm = dot(&d, &bu).max(T::zero()).sqrt();
    (u_norm, eta_norm, div_norm)
}

/// First-order energy from assembled mass quadratic forms.
pub fn energy_first_order<T: Real>(model: &Model<T>, state: &State<T>) -> EnergyReport<T> {
    let (u_norm, eta_norm, div_norm) = norms(model, state);
    let half = T::lit(0.5);
    EnergyReport {
        t: state.t,
        e1: half * u_norm * u_norm + half * model.params.pressure_coefficient() * eta_norm * eta_norm,
        e2: None,
        u_norm_wh: u_norm,
        eta_norm,
        div_u_norm: div_norm,
    }
}

/// Free coefficients of `u_t` from the momentum equation at the current state.
pub fn momentum_tendency<T: Real>(
    model: &Model<T>,
    state: &State<T>,
    forcing: &ForcingSpec<T>,
    cfg: &SolverConfig<T>,
) -> Result<Vec<T>> {
    let r = model.momentum_residual(state, forcing);
    solve_spd(&model.mass_v, &r, cfg)
}

/// Both energies; the second uses `u_t` recovered by a weighted mass solve.
pub fn energy_second_order<T: Real>(
    model: &Model<T>,
    state: &State<T>,
    forcing: &ForcingSpec<T>,
) -> Result<EnergyReport<T>> {
    let mut rep = energy_first_order(model, state);
    let ut = momentum_tendency(model, state, forcing, &SolverConfig::cg(T::lit(T::DEFAULT_TOL) * T::lit(1e-2)))?;
    let half = T::lit(0.5);
    rep.e2 = Some(
        half * quad_form(&model.mass_v, &ut)
            + half * model.params.pressure_coefficient() * rep.div_u_norm * rep.div_u_norm,
    );
    Ok(rep)
}

/// Divergent and solenoidal parts of a velocity field.
#[derive(Debug, Clone)]
pub struct HelmholtzParts<T> {
    pub ud: Field<T>,
    pub us: Field<T>,
}

fn saddle_solver<T: Real>() -> SolverConfig<T> {
    SolverConfig::with_tol(T::lit(T::DEFAULT_TOL) * T::lit(1e-2))
}

/// Solves `(1/H w, v) − (p, ∇·v) = 0`, `(∇·w, q) = (r, q)` for the divergent
/// field `w` with prescribed divergence moments `r`.
fn divergent_with_moments<T: Real>(model: &Model<T>, r: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let nu = model.mass_v.nrows();
    let sys = BlockSystem::new(
        model.mass_v.clone(),
        model.grad.scaled(-T::one()),
        model.div.clone(),
        None,
    )?
    .with_nullspace(model.pressure_nullspace().clone());
    let mut rhs = vec![T::zero(); nu];
    rhs.extend_from_slice(r);
    let x = solve_general(&sys, &rhs, &saddle_solver())?;
    let (w, p) = x.split_at(nu);
    Ok((w.to_vec(), p.to_vec()))
}

/// `u = u^D + u^S` with `u^D` orthogonal (in the `1/H` inner product) to the
/// divergence-free `u^S`. Constrained boundary coefficients stay in `u^S`.
pub fn helmholtz_decompose<T: Real>(model: &Model<T>, u: &Field<T>) -> Result<HelmholtzParts<T>> {
    let bu = model.div.spmv(&u.free_coeffs())?;
    let (w, _) = divergent_with_moments(model, &bu)?;
    let v = model.velocity_space();
    let ud = v.extend(&w);
    let us: Vec<T> = u.coeffs().iter().zip(&ud).map(|(&a, &b)| a - b).collect();
    Ok(HelmholtzParts {
        ud: Field::new(Arc::clone(v), ud)?,
        us: Field::new(Arc::clone(v), us)?,
    })
}

/// `(1/H)`-weighted inner product of two velocity fields.
pub fn inner_wh<T: Real>(model: &Model<T>, a: &Field<T>, b: &Field<T>) -> T {
    let fa = a.free_coeffs();
    dot(&fa, &model.mass_v.spmv(&b.free_coeffs()).expect("dims"))
}

/// Steady solution of `(C/H u, v) + (f/(εH) u^⊥, v) − (β/ε²)(η, ∇·v) = (F, v)`,
/// `(∇·u, w) = 0`, with zero-mean elevation. The forcing is evaluated at `t`.
pub fn solve_steady_geotryptic<T: Real>(
    model: &Model<T>,
    forcing: &ForcingSpec<T>,
    t: T,
    cfg: &SolverConfig<T>,
) -> Result<(Field<T>, Field<T>)> {
    if model.drag.max_abs() == T::zero() {
        return Err(Error::invalid("the steady problem needs positive drag somewhere"));
    }
    let nu = model.mass_v.nrows();
    let a = model.drag.linear_combination(T::one(), &model.perp, T::one())?;
    let kappa = model.params.pressure_coefficient();
    let sys = BlockSystem::new(a, model.grad.scaled(-kappa), model.div.clone(), None)?
        .with_nullspace(model.pressure_nullspace().clone());
    let mut rhs = model.momentum_rhs(forcing, t);
    rhs.resize(nu + model.div.nrows(), T::zero());
    let x = solve_general(&sys, &rhs, cfg)?;
    let state = model.state_from_free(&x[..nu], x[nu..].to_vec(), t)?;
    Ok((state.u, state.eta))
}

/// Errors against a manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Errors<T> {
    /// `‖u − u_exact‖_{1/H}`.
    pub u_wh: T,
    pub eta: T,
    pub div_u: T,
    /// `‖u_t − u_t,exact‖_{1/H}`, with `u_t` from the momentum equation.
    pub u_t_wh: T,
}

/// Quadrature of pointwise differences; exact vectors are projected onto the
/// tangent plane of each discrete cell.
pub fn l2_errors<T: Real>(
    model: &Model<T>,
    state: &State<T>,
    ms: &ManufacturedSolution<T>,
    forcing: &ForcingSpec<T>,
) -> Result<L2Errors<T>> {
    let ut_free = momentum_tendency(model, state, forcing, &SolverConfig::cg(T::lit(T::DEFAULT_TOL) * T::lit(1e-2)))?;
    let v = model.velocity_space();
    let w = model.elevation_space();
    let ut = v.extend(&ut_free);
    let tv = model.velocity_tabulation();
    let tw = model.elevation_tabulation();
    let (uc, ec) = (state.u.coeffs(), state.eta.coeffs());
    let t = state.t;
    let mut acc = [T::zero(); 4];
    for c in 0..tv.num_cells {
        let (vd, wd) = (v.cell_dofs(c), w.cell_dofs(c));
        for q in 0..tv.nq {
            let k = tv.point(c, q);
            let x = &tv.x[k];
            let n = &tv.normal[k];
            let inv_h = T::one() / model.params.depth.eval(x);
            let mut uh = [T::zero(); 3];
            let mut uth = [T::zero(); 3];
            let mut divh = T::zero();
            for (i, (phi, &dv)) in tv.vector(c, q).iter().zip(tv.div(c, q)).enumerate() {
                let (a, b) = (uc[vd[i]], ut[vd[i]]);
                for d in 0..3 {
                    uh[d] += a * phi[d];
                    uth[d] += b * phi[d];
                }
                divh += a * dv;
            }
            let etah: T = wd.iter().zip(tw.scalar(c, q)).map(|(&d, &p)| ec[d] * p).sum();
            let tangent = |f: [T; 3]| {
                let s = dot3(&f, n);
                [f[0] - s * n[0], f[1] - s * n[1], f[2] - s * n[2]]
            };
            let eu = tangent(ms.u(x, t));
            let eut = tangent(ms.u_t(x, t));
            let du = [uh[0] - eu[0], uh[1] - eu[1], uh[2] - eu[2]];
            let dut = [uth[0] - eut[0], uth[1] - eut[1], uth[2] - eut[2]];
            let de = etah - ms.eta(x, t);
            let dd = divh - ms.div_u(x, t);
            let wg = tv.wg[k];
            acc[0] += wg * inv_h * dot3(&du, &du);
            acc[1] += wg * de * de;
            acc[2] += wg * dd * dd;
            acc[3] += wg * inv_h * dot3(&dut, &dut);
        }
    }
    Ok(L2Errors {
        u_wh: acc[0].sqrt(),
        eta: acc[1].sqrt(),
        div_u: acc[2].sqrt(),
        u_t_wh: acc[3].sqrt(),
    })
}

const POINCARE_ITERATIONS: usize = 30;
const INVERSE_ITERATIONS: usize = 100;
const EIGEN_STAGNATION: f64 = 1e-8;

/// Largest ratio `‖u^D‖_{1/H} / ‖∇·u^D‖_{1/H}` over divergent fields, by
/// inverse iteration on the generalised eigenproblem restricted to the
/// divergent subspace.
pub fn estimate_poincare_constant<T: Real>(model: &Model<T>) -> Result<T> {
    let w = model.elevation_space();
    let inv_h = CoefficientField::Constant(T::one()).ratio(&model.params.depth);
    let mass_w_h = assemble_weighted_mass_w_with(w, model.elevation_tabulation(), &inv_h);
    let mass_w_h_inv = BlockDiagonal::inverse_of(&mass_w_h, &cell_dof_groups(w))?;
    let ns = model.pressure_nullspace();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut p: Vec<T> = (0..w.dim()).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect();
    ns.project_primal(&mut p);
    let mut lambda = T::zero();
    for it in 0..POINCARE_ITERATIONS {
        let mp = model.mass_w.spmv(&p)?;
        let mut r = model.mass_w.spmv(&mass_w_h_inv.apply(&mp))?;
        ns.project_dual(&mut r);
        let (u, p_new) = divergent_with_moments(model, &r)?;
        let u_norm2 = quad_form(&model.mass_v, &u);
        if u_norm2 == T::zero() {
            return Err(Error::invalid("no divergent fields in this space"));
        }
        let d = model.mass_w_inverse().apply(&model.div.spmv(&u)?);
        let next = quad_form(&mass_w_h, &d) / u_norm2;
        let scale = T::one() / u_norm2.sqrt();
        p = p_new.into_iter().map(|v| v * scale).collect();
        let converged = it > 0 && (next - lambda).abs() <= T::lit(EIGEN_STAGNATION) * next;
        lambda = next;
        if converged {
            break;
        }
    }
    Ok(T::one() / lambda.sqrt())
}

/// `h_max √λ_max` for `Bᵀ M_W⁻¹ B x = λ M_V x` with unweighted masses.
pub fn estimate_inverse_constant<T: Real>(
    v: &Arc<FunctionSpace<T>>,
    w: &Arc<FunctionSpace<T>>,
    h_max: T,
) -> Result<T> {
    v.check_pair(w)?;
    let degree = v.quadrature_degree();
    let tv = Tabulation::new(v, degree)?;
    let tw = Tabulation::new(w, degree)?;
    let one = CoefficientField::Constant(T::one());
    let mass_v = assemble_weighted_mass_v_with(v, &tv, &one, DofSelection::Free)?;
    let div = assemble_div_with(v, w, &tv, &tw, DofSelection::Free);
    let mass_w = assemble_weighted_mass_w_with(w, &tw, &one);
    let mass_w_inv = BlockDiagonal::inverse_of(&mass_w, &cell_dof_groups(w))?;
    inverse_constant_from_operators(&mass_v, &div, &mass_w_inv, h_max)
}

/// Power iteration behind [`estimate_inverse_constant`]; returns zero when
/// `div` vanishes.
pub fn inverse_constant_from_operators<T: Real>(
    mass_v: &CsrMatrix<T>,
    div: &CsrMatrix<T>,
    mass_w_inv: &BlockDiagonal<T>,
    h_max: T,
) -> Result<T> {
    let n = mass_v.nrows();
    if n == 0 || div.max_abs() == T::zero() {
        return Ok(T::zero());
    }
    let cfg = SolverConfig::cg(T::lit(T::DEFAULT_TOL));
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ce);
    let mut x: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect();
    let mut lambda = T::zero();
    for it in 0..INVERSE_ITERATIONS {
        let bx = div.spmv(&x)?;
        let y = div.spmv_transpose(&mass_w_inv.apply(&bx));
        let mx = mass_v.spmv(&x)?;
        let next = dot(&x, &y) / dot(&x, &mx);
        let z = solve_spd(mass_v, &y, &cfg)?;
        let zn = quad_form(mass_v, &z).sqrt();
        if zn == T::zero() {
            return Ok(T::zero());
        }
        x = z.into_iter().map(|v| v / zn).collect();
        let converged = it > 0 && (next - lambda).abs() <= T::lit(EIGEN_STAGNATION) * next;
        lambda = next;
        if converged {
            break;
        }
    }
    Ok(h_max * lambda.max(T::zero()).sqrt())
}

/// Least-squares line `y = slope x + intercept` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> Result<LinearFit<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("a fit needs at least two points"));
    }
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let sxx: T = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let syy: T = y.iter().map(|&b| (b - my) * (b - my)).sum();
    if sxx == T::zero() {
        return Err(Error::invalid("abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == T::zero() { T::one() } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

fn logs<T: Real>(v: &[T], what: &str) -> Result<Vec<T>> {
    v.iter()
        .map(|&a| {
            if a > T::zero() && a.is_finite() {
                Ok(a.ln())
            } else {
                Err(Error::invalid(format!("{what} must be positive, found {a}")))
            }
        })
        .collect()
}

/// Slope of `log(error)` against `log(h)` and the fit's `R²`.
pub fn fit_convergence_rate<T: Real>(h: &[T], err: &[T]) -> Result<(T, T)> {
    let fit = linear_fit(&logs(h, "mesh sizes")?, &logs(err, "errors")?)?;
    Ok((fit.slope, fit.r_squared))
}

/// Decay rate `a` of `y ≈ b e^{−a t}` and the `R²` of `log y` against `t`.
pub fn fit_exponential_decay<T: Real>(t: &[T], y: &[T]) -> Result<(T, T)> {
    let fit = linear_fit(t, &logs(y, "values")?)?;
    Ok((-fit.slope, fit.r_squared))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_fits() {
        let (s, r2) = fit_convergence_rate(&[0.5f64, 0.25], &[0.1, 0.05]).unwrap();
        assert!((s - 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
        let (s, _) = fit_convergence_rate(&[0.5f64, 0.25, 0.125], &[4e-2, 1e-2, 2.5e-3]).unwrap();
        assert!((s - 2.0).abs() < 1e-14);
        assert!(fit_convergence_rate(&[0.5], &[0.1]).is_err());
        assert!(fit_convergence_rate(&[0.5, 0.25], &[0.1, 0.0]).is_err());
        assert!(fit_convergence_rate(&[0.5, -0.25], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn exponential_fit() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|&t| 3.0 * (-0.7 * t).exp()).collect();
        let (rate, r2) = fit_exponential_decay(&t, &y).unwrap();
        assert!((rate - 0.7).abs() < 1e-12 && r2 > 1.0 - 1e-12);
    }

    #[test]
    fn zero_divergence_guard() {
        let m = CsrMatrix::<f64>::identity(4);
        let z = CsrMatrix::<f64>::zeros(2, 4);
        let inv = BlockDiagonal::inverse_of(&CsrMatrix::identity(2), &[vec![0], vec![1]]).unwrap();
        assert_eq!(inverse_constant_from_operators(&m, &z, &inv, 0.3).unwrap(), 0.0);
    }
}
