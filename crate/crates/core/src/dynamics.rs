//! The time-dependent model: parameters, forcing, manufactured solutions and
//! the implicit-midpoint and symplectic-Euler steppers.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_div_with, assemble_nonnegative_mass_v_with, assemble_momentum_rhs_with,
    assemble_perp_with, assemble_weighted_mass_v_with, assemble_weighted_mass_w_with,
    cell_dof_groups, CoefficientField, DofSelection, ForcingTerm,
};
use crate::diagnostics::{energy_first_order, EnergyReport};
use crate::error::{Error, Result};
use crate::fem::{interpolate::project_l2_with, Field, FunctionSpace, Tabulation};
use crate::linalg::{
    fgmres, pcg, BlockDiagonal, CsrMatrix, Jacobi, KrylovMethod, PressureNullspace, SolverConfig,
};
use crate::scalar::{cross3, Real, Vec3};

pub type VectorForcingFn<T> = Arc<dyn Fn(&Vec3<T>, &Vec3<T>, T) -> Vec3<T> + Send + Sync>;
pub type PotentialFn<T> = Arc<dyn Fn(&Vec3<T>, T) -> T + Send + Sync>;

/// The momentum forcing functional `v ↦ (F, v)`.
#[derive(Clone)]
pub enum ForcingSpec<T> {
    Zero,
    /// `∫ F(x, n, t)·v`; the field may use the local unit surface normal `n`.
    Pointwise(VectorForcingFn<T>),
    /// `γ ∫ η̄(x, t) ∇·v`.
    DivergenceForm { potential: PotentialFn<T>, gain: T },
    Sum(Vec<ForcingSpec<T>>),
}

impl<T: Real> ForcingSpec<T> {
    pub fn pointwise(f: impl Fn(&Vec3<T>, &Vec3<T>, T) -> Vec3<T> + Send + Sync + 'static) -> Self {
        Self::Pointwise(Arc::new(f))
    }

    pub fn divergence_form(potential: impl Fn(&Vec3<T>, T) -> T + Send + Sync + 'static, gain: T) -> Self {
        Self::DivergenceForm {
            potential: Arc::new(potential),
            gain,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Sum(parts) => parts.iter().all(Self::is_zero),
            _ => false,
        }
    }

    pub fn plus(self, other: Self) -> Self {
        match (self, other) {
            (Self::Zero, b) => b,
            (a, Self::Zero) => a,
            (Self::Sum(mut a), Self::Sum(b)) => {
                a.extend(b);
                Self::Sum(a)
            }
            (Self::Sum(mut a), b) => {
                a.push(b);
                Self::Sum(a)
            }
            (a, b) => Self::Sum(vec![a, b]),
        }
    }

    pub(crate) fn for_each_term<'a>(&'a self, f: &mut dyn FnMut(ForcingTerm<'a, T>)) {
        match self {
            Self::Zero => {}
            Self::Pointwise(g) => f(ForcingTerm::Vector(g.as_ref())),
            Self::DivergenceForm { potential, gain } => f(ForcingTerm::Potential(potential.as_ref(), *gain)),
            Self::Sum(parts) => parts.iter().for_each(|p| p.for_each_term(f)),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for ForcingSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Pointwise(_) => f.write_str("Pointwise(..)"),
            Self::DivergenceForm { gain, .. } => {
                f.debug_struct("DivergenceForm").field("gain", gain).finish_non_exhaustive()
            }
            Self::Sum(parts) => f.debug_tuple("Sum").field(parts).finish(),
        }
    }
}

/// Nondimensional parameters and coefficient fields of the model.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    /// Rossby number.
    pub epsilon: T,
    /// Burger number.
    pub beta: T,
    pub coriolis: CoefficientField<T>,
    pub drag: CoefficientField<T>,
    pub depth: CoefficientField<T>,
    /// Lower bound the depth must respect at every quadrature point.
    pub depth_min: T,
}

impl<T: Real> ModelParams<T> {
    /// Unit depth, no drag, and Coriolis parameter equal to the `z`
    /// coordinate (the sine of latitude on the unit sphere).
    pub fn new(epsilon: T, beta: T) -> Self {
        Self {
            epsilon,
            beta,
            coriolis: CoefficientField::from_fn(|x: &Vec3<T>| x[2]),
            drag: CoefficientField::Constant(T::zero()),
            depth: CoefficientField::Constant(T::one()),
            depth_min: T::one(),
        }
    }

    pub fn with_coriolis(mut self, f: CoefficientField<T>) -> Self {
        self.coriolis = f;
        self
    }

    pub fn with_drag(mut self, c: CoefficientField<T>) -> Self {
        self.drag = c;
        self
    }

    pub fn with_depth(mut self, h: CoefficientField<T>, depth_min: T) -> Self {
        self.depth = h;
        self.depth_min = depth_min;
        self
    }

    /// `β / ε²`, the pressure-gradient coefficient.
    pub fn pressure_coefficient(&self) -> T {
        self.beta / (self.epsilon * self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !(self.beta > T::zero()) {
            return Err(Error::invalid("epsilon and beta must be positive"));
        }
        if !(self.depth_min > T::zero()) {
            return Err(Error::invalid("depth lower bound must be positive"));
        }
        Ok(())
    }

    fn check_at(&self, points: &[Vec3<T>]) -> Result<()> {
        for x in points {
            let h = self.depth.eval(x);
            if !(h >= self.depth_min) {
                return Err(Error::invalid(format!(
                    "depth {h} below lower bound {} at {x:?}",
                    self.depth_min
                )));
            }
            let c = self.drag.eval(x);
            if !(c >= T::zero()) {
                return Err(Error::invalid(format!("negative drag {c} at {x:?}")));
            }
            if !self.coriolis.eval(x).is_finite() {
                return Err(Error::invalid(format!("non-finite Coriolis parameter at {x:?}")));
            }
        }
        Ok(())
    }
}

/// Linearized momentum and elevation at one time.
#[derive(Debug, Clone)]
pub struct State<T> {
    pub u: Field<T>,
    pub eta: Field<T>,
    pub t: T,
}

/// Closed-form solution on the unit sphere used for convergence studies:
///
/// `u = −cos(Ωt)/12 · ∇_s(xyz)`, `η = −sin(Ωt)/Ω · xyz`.
///
/// Since `Δ_s(xyz) = −12 xyz`, `∇_s·u = cos(Ωt) xyz = −η_t` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution<T> {
    pub omega: T,
}

impl<T: Real> ManufacturedSolution<T> {
    pub fn new(omega: T) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::invalid("manufactured frequency must be finite"));
        }
        Ok(Self { omega })
    }

    fn grad_xyz(x: &Vec3<T>) -> Vec3<T> {
        let three = T::lit(3.0);
        let p = x[0] * x[1] * x[2];
        [
            x[1] * x[2] - three * p * x[0],
            x[0] * x[2] - three * p * x[1],
            x[0] * x[1] - three * p * x[2],
        ]
    }

    pub fn u(&self, x: &Vec3<T>, t: T) -> Vec3<T> {
        let s = -(self.omega * t).cos() / T::lit(12.0);
        Self::grad_xyz(x).map(|v| s * v)
    }

    pub fn u_t(&self, x: &Vec3<T>, t: T) -> Vec3<T> {
        let s = self.omega * (self.omega * t).sin() / T::lit(12.0);
        Self::grad_xyz(x).map(|v| s * v)
    }

    pub fn eta(&self, x: &Vec3<T>, t: T) -> T {
        // sin(Ωt)/Ω, continuous at Ω = 0.
        let w = self.omega * t;
        let sinc_t = if w.abs() < T::lit(1e-8) { t } else { w.sin() / self.omega };
        -sinc_t * x[0] * x[1] * x[2]
    }

    pub fn eta_t(&self, x: &Vec3<T>, t: T) -> T {
        -(self.omega * t).cos() * x[0] * x[1] * x[2]
    }

    /// Surface divergence of `u` on the unit sphere.
    pub fn div_u(&self, x: &Vec3<T>, t: T) -> T {
        (self.omega * t).cos() * x[0] * x[1] * x[2]
    }
}

/// Forcing that makes the manufactured solution satisfy the momentum
/// equation: `(u_t/H + f/(εH) n×u + C/H u, v) − (β/ε²)(η, ∇·v)`.
pub fn mms_forcing<T: Real>(ms: &ManufacturedSolution<T>, params: &ModelParams<T>) -> ForcingSpec<T> {
    let ms = *ms;
    let p = params.clone();
    let pointwise = ForcingSpec::pointwise(move |x: &Vec3<T>, n: &Vec3<T>, t: T| {
        let h = p.depth.eval(x);
        let u = ms.u(x, t);
        let ut = ms.u_t(x, t);
        let perp = cross3(n, &u);
        let fc = p.coriolis.eval(x) / (p.epsilon * h);
        let c = p.drag.eval(x) / h;
        [0, 1, 2].map(|k| ut[k] / h + fc * perp[k] + c * u[k])
    });
    let pressure = ForcingSpec::divergence_form(move |x: &Vec3<T>, t: T| ms.eta(x, t), -params.pressure_coefficient());
    pointwise.plus(pressure)
}

/// Assembled operators of the semidiscrete system on an RT/DG pair.
///
/// Velocity operators act on free dofs: `mass_v = (1/H φ, φ)`,
/// `drag = (C/H φ, φ)`, `perp = (f/(εH) φ^⊥, φ)`; `div` maps free velocity
/// dofs to DG moments.
pub struct Model<T> {
    pub params: ModelParams<T>,
    v: Arc<FunctionSpace<T>>,
    w: Arc<FunctionSpace<T>>,
    tab_v: Tabulation<T>,
    tab_w: Tabulation<T>,
    pub mass_v: CsrMatrix<T>,
    pub drag: CsrMatrix<T>,
    pub perp: CsrMatrix<T>,
    pub div: CsrMatrix<T>,
    pub grad: CsrMatrix<T>,
    pub mass_w: CsrMatrix<T>,
    mass_w_inv: BlockDiagonal<T>,
    mean: PressureNullspace<T>,
    closed: bool,
    has_coriolis: bool,
}

impl<T: Real> fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("velocity_dofs", &self.v.num_free())
            .field("elevation_dofs", &self.w.dim())
            .field("closed", &self.closed)
            .finish_non_exhaustive()
    }
}

impl<T: Real> Model<T> {
    pub fn new(v: Arc<FunctionSpace<T>>, w: Arc<FunctionSpace<T>>, params: ModelParams<T>) -> Result<Self> {
        params.validate()?;
        v.check_pair(&w)?;
        let degree = v.quadrature_degree();
        let tab_v = Tabulation::new(&v, degree)?;
        let tab_w = Tabulation::new(&w, degree)?;
        params.check_at(&tab_v.x)?;

        let sel = DofSelection::Free;
        let one = CoefficientField::Constant(T::one());
        let inv_h = one.ratio(&params.depth);
        let mass_v = assemble_weighted_mass_v_with(&v, &tab_v, &inv_h, sel)?;
        let drag_w = params.drag.ratio(&params.depth);
        let drag = assemble_nonnegative_mass_v_with(&v, &tab_v, &drag_w, sel)?;
        let has_coriolis = !params.coriolis.is_zero();
        let fw = params.coriolis.ratio(&params.depth.scaled(params.epsilon));
        let perp = assemble_perp_with(&v, &tab_v, &fw, sel);
        let div = assemble_div_with(&v, &w, &tab_v, &tab_w, sel);
        let grad = div.transpose();
        let mass_w = assemble_weighted_mass_w_with(&w, &tab_w, &one);
        let mass_w_inv = BlockDiagonal::inverse_of(&mass_w, &cell_dof_groups(&w))?;
        let unit = project_l2_with(&w, &tab_w, |_| T::one())?;
        let mean = PressureNullspace::new(unit.into_coeffs(), &mass_w);
        let closed = v.mesh().is_surface();
        Ok(Self {
            params,
            v,
            w,
            tab_v,
            tab_w,
            mass_v,
            drag,
            perp,
            div,
            grad,
            mass_w,
            mass_w_inv,
            mean,
            closed,
            has_coriolis,
        })
    }

    pub fn velocity_space(&self) -> &Arc<FunctionSpace<T>> {
        &self.v
    }

    pub fn elevation_space(&self) -> &Arc<FunctionSpace<T>> {
        &self.w
    }

    pub fn velocity_tabulation(&self) -> &Tabulation<T> {
        &self.tab_v
    }

    pub fn elevation_tabulation(&self) -> &Tabulation<T> {
        &self.tab_w
    }

    pub fn mass_w_inverse(&self) -> &BlockDiagonal<T> {
        &self.mass_w_inv
    }

    /// True for surface meshes (no boundary).
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Projector removing the mean of elevation fields.
    pub fn mean_projector(&self) -> &PressureNullspace<T> {
        &self.mean
    }

    /// Constants are in the kernel of `Bᵀ` both on closed surfaces and with
    /// no-flux walls, so saddle-point solves always fix the elevation mean.
    pub fn pressure_nullspace(&self) -> &PressureNullspace<T> {
        &self.mean
    }

    pub fn zero_state(&self) -> State<T> {
        State {
            u: Field::zeros(Arc::clone(&self.v)),
            eta: Field::zeros(Arc::clone(&self.w)),
            t: T::zero(),
        }
    }

    /// Builds a state from free velocity and elevation coefficients.
    pub fn state_from_free(&self, u_free: &[T], eta: Vec<T>, t: T) -> Result<State<T>> {
        if u_free.len() != self.v.num_free() {
            return Err(Error::DimensionMismatch {
                expected: self.v.num_free(),
                actual: u_free.len(),
            });
        }
        Ok(State {
            u: Field::new(Arc::clone(&self.v), self.v.extend(u_free))?,
            eta: Field::new(Arc::clone(&self.w), eta)?,
            t,
        })
    }

    /// `(F(t), φ_i)` on the free dofs.
    pub fn momentum_rhs(&self, forcing: &ForcingSpec<T>, t: T) -> Vec<T> {
        assemble_momentum_rhs_with(&self.v, &self.tab_v, forcing, t, DofSelection::Free)
    }

    /// `F − (R + D) u + (β/ε²) Bᵀ η` on free dofs: the momentum tendency
    /// before the `1/H` mass solve.
    pub fn momentum_residual(&self, state: &State<T>, forcing: &ForcingSpec<T>) -> Vec<T> {
        let u = state.u.free_coeffs();
        let mut r = self.momentum_rhs(forcing, state.t);
        let ru = self.perp.spmv(&u).expect("dims");
        let du = self.drag.spmv(&u).expect("dims");
        let gp = self.grad.spmv(state.eta.coeffs()).expect("dims");
        let kappa = self.params.pressure_coefficient();
        for i in 0..r.len() {
            r[i] += kappa * gp[i] - ru[i] - du[i];
        }
        r
    }

    /// Coefficients of `∇·u` in the elevation space.
    pub fn divergence(&self, u: &Field<T>) -> Vec<T> {
        let b = self.div.spmv(&u.free_coeffs()).expect("dims");
        self.mass_w_inv.apply(&b)
    }

    /// Random state with coefficients uniform in `[−1, 1]` and zero-mean
    /// elevation.
    pub fn random_state(&self, seed: u64) -> State<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<T> {
            (0..n).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect()
        };
        let u = draw(self.v.num_free());
        let mut eta = draw(self.w.dim());
        self.mean.project_primal(&mut eta);
        self.state_from_free(&u, eta, T::zero()).expect("sizes match")
    }

    pub fn energy(&self, state: &State<T>) -> EnergyReport<T> {
        energy_first_order(self, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitMidpoint,
    SymplecticEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig<T> {
    pub dt: T,
    pub scheme: Scheme,
    pub solver: SolverConfig<T>,
}

impl<T: Real> StepperConfig<T> {
    pub fn new(dt: T, scheme: Scheme) -> Self {
        Self {
            dt,
            scheme,
            solver: SolverConfig::with_tol(T::lit(T::DEFAULT_TOL * 1e-2).max(T::epsilon() * T::lit(100.0))),
        }
    }

    pub fn with_tol(mut self, rel_tol: T) -> Self {
        self.solver.rel_tol = rel_tol;
        self
    }
}

/// A time stepper with its system matrix factored in for a fixed `dt`.
///
/// Implicit midpoint eliminates the elevation update exactly, leaving one
/// velocity system per step for the midpoint average `w = (uⁿ + uⁿ⁺¹)/2`:
///
/// `[(2/Δt) M + R + D + (βΔt/2ε²) Bᵀ M_W⁻¹ B] w = (2/Δt) M uⁿ + F + (β/ε²) Bᵀ ηⁿ`,
///
/// then `uⁿ⁺¹ = 2w − uⁿ` and `ηⁿ⁺¹ = ηⁿ − Δt M_W⁻¹ B w`. Symplectic Euler
/// solves `[M/Δt + (R + D)/2] uⁿ⁺¹ = [M/Δt − (R + D)/2] uⁿ + (β/ε²) Bᵀ ηⁿ + Fⁿ`
/// and updates `η` with the new velocity.
pub struct Stepper<'m, T> {
    model: &'m Model<T>,
    cfg: StepperConfig<T>,
    lhs: CsrMatrix<T>,
    explicit: CsrMatrix<T>,
    jacobi: Jacobi<T>,
    symmetric: bool,
}

impl<'m, T: Real> Stepper<'m, T> {
    pub fn new(model: &'m Model<T>, cfg: StepperConfig<T>) -> Result<Self> {
        if !(cfg.dt > T::zero()) || !cfg.dt.is_finite() {
            return Err(Error::invalid("time step must be positive"));
        }
        let dt = cfg.dt;
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let rd = model.perp.linear_combination(T::one(), &model.drag, T::one())?;
        let (lhs, explicit) = match cfg.scheme {
            Scheme::ImplicitMidpoint => {
                let minv_b = model.mass_w_inv.to_csr().matmul(&model.div)?;
                let graddiv = model.grad.matmul(&minv_b)?;
                let gain = model.params.pressure_coefficient() * dt * half;
                let a = model.mass_v.linear_combination(two / dt, &rd, T::one())?;
                let a = a.linear_combination(T::one(), &graddiv, gain)?;
                (a, model.mass_v.scaled(two / dt))
            }
            Scheme::SymplecticEuler => {
                let a = model.mass_v.linear_combination(T::one() / dt, &rd, half)?;
                let e = model.mass_v.linear_combination(T::one() / dt, &rd, -half)?;
                (a, e)
            }
        };
        let symmetric = !model.has_coriolis || model.perp.max_abs() == T::zero();
        Ok(Self {
            model,
            cfg,
            jacobi: Jacobi::new(&lhs),
            lhs,
            explicit,
            symmetric,
        })
    }

    pub fn config(&self) -> &StepperConfig<T> {
        &self.cfg
    }

    /// The velocity system matrix (free dofs).
    pub fn system_matrix(&self) -> &CsrMatrix<T> {
        &self.lhs
    }

    fn solve(&self, rhs: &[T], x: &mut [T]) -> Result<()> {
        let solver = SolverConfig {
            method: if self.symmetric { KrylovMethod::Cg } else { KrylovMethod::Gmres },
            ..self.cfg.solver
        };
        match solver.method {
            KrylovMethod::Cg => pcg(&self.lhs, &self.jacobi, rhs, x, &solver)?,
            KrylovMethod::Gmres => fgmres(&self.lhs, &self.jacobi, rhs, x, &solver, None)?,
        };
        Ok(())
    }

    pub fn step(&self, state: &State<T>, forcing: &ForcingSpec<T>) -> Result<State<T>> {
        let m = self.model;
        let dt = self.cfg.dt;
        let kappa = m.params.pressure_coefficient();
        let un = state.u.free_coeffs();
        let eta = state.eta.coeffs();
        let t_force = match self.cfg.scheme {
            Scheme::ImplicitMidpoint => state.t + dt * T::lit(0.5),
            Scheme::SymplecticEuler => state.t,
        };
        let mut rhs = self.explicit.spmv(&un)?;
        let f = m.momentum_rhs(forcing, t_force);
        let g = m.grad.spmv(eta)?;
        for i in 0..rhs.len() {
            rhs[i] += f[i] + kappa * g[i];
        }
        let mut x = un.clone();
        self.solve(&rhs, &mut x)?;
        // `x` is the midpoint average for implicit midpoint, uⁿ⁺¹ otherwise.
        let dη = m.mass_w_inv.apply(&m.div.spmv(&x)?);
        let eta_new: Vec<T> = eta.iter().zip(&dη).map(|(&e, &d)| e - dt * d).collect();
        let u_new: Vec<T> = match self.cfg.scheme {
            Scheme::ImplicitMidpoint => x.iter().zip(&un).map(|(&w, &u)| T::lit(2.0) * w - u).collect(),
            Scheme::SymplecticEuler => x,
        };
        m.state_from_free(&u_new, eta_new, state.t + dt)
    }
}

/// One implicit-midpoint step.
pub fn step_implicit_midpoint<T: Real>(
    model: &Model<T>,
    state: &State<T>,
    forcing: &ForcingSpec<T>,
    cfg: &StepperConfig<T>,
) -> Result<State<T>> {
    let cfg = StepperConfig { scheme: Scheme::ImplicitMidpoint, ..*cfg };
    Stepper::new(model, cfg)?.step(state, forcing)
}

/// One symplectic-Euler step.
pub fn step_symplectic_euler<T: Real>(
    model: &Model<T>,
    state: &State<T>,
    forcing: &ForcingSpec<T>,
    cfg: &StepperConfig<T>,
) -> Result<State<T>> {
    let cfg = StepperConfig { scheme: Scheme::SymplecticEuler, ..*cfg };
    Stepper::new(model, cfg)?.step(state, forcing)
}

/// Per-step callback; receives the step index (from 1) and the new state.
pub type Observer<'a, T> = dyn FnMut(usize, &State<T>) -> Result<()> + 'a;

/// Result of [`run`]: the first-order energy after every step and the final state.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub energies: Vec<EnergyReport<T>>,
    pub final_state: State<T>,
}

/// Advances `n_steps` with the configured scheme, recording the energy and
/// calling every observer after each step.
pub fn run<T: Real>(
    model: &Model<T>,
    initial: State<T>,
    forcing: &ForcingSpec<T>,
    cfg: &StepperConfig<T>,
    n_steps: usize,
    observers: &mut [&mut Observer<'_, T>],
) -> Result<Trajectory<T>> {
    let stepper = Stepper::new(model, *cfg)?;
    let mut state = initial;
    let mut energies = Vec::with_capacity(n_steps);
    for step in 1..=n_steps {
        let wrap = |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        state = stepper.step(&state, forcing).map_err(wrap)?;
        energies.push(model.energy(&state));
        for obs in observers.iter_mut() {
            obs(step, &state).map_err(wrap)?;
        }
    }
    Ok(Trajectory {
        energies,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_space, Family};
    use crate::linalg::dense_solve;
    use crate::mesh::Mesh;

    fn rect_model(n: usize) -> Model<f64> {
        let mesh = Arc::new(Mesh::rect(n, n).unwrap());
        let v = build_space(&mesh, Family::Rt, 1).unwrap();
        let w = build_space(&mesh, Family::Dg, 0).unwrap();
        let params = ModelParams::new(0.5, 0.7)
            .with_coriolis(CoefficientField::Constant(1.0))
            .with_drag(CoefficientField::Constant(0.3))
            .with_depth(CoefficientField::from_fn(|x| 1.0 + 0.2 * x[0]), 1.0);
        Model::new(v, w, params).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let model = rect_model(3);
        for scheme in [Scheme::ImplicitMidpoint, Scheme::SymplecticEuler] {
            let cfg = StepperConfig::new(0.1, scheme);
            let s = Stepper::new(&model, cfg).unwrap().step(&model.zero_state(), &ForcingSpec::Zero).unwrap();
            assert!(s.u.coeffs().iter().chain(s.eta.coeffs()).all(|&v| v == 0.0));
            assert!((s.t - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn midpoint_matches_dense_block_oracle() {
        // Full coupled system in (u¹, η¹) solved densely, no elimination.
        let model = rect_model(2);
        let dt = 0.05;
        let s0 = model.random_state(3);
        let forcing = ForcingSpec::pointwise(|x: &Vec3<f64>, _n: &Vec3<f64>, t: f64| [x[1] + t, -x[0], 0.0]);
        let cfg = StepperConfig::new(dt, Scheme::ImplicitMidpoint).with_tol(1e-14);
        let s1 = step_implicit_midpoint(&model, &s0, &forcing, &cfg).unwrap();

        let (m, r, d, b) = (
            model.mass_v.to_dense(),
            model.perp.to_dense(),
            model.drag.to_dense(),
            model.div.to_dense(),
        );
        let mw = model.mass_w.to_dense();
        let kappa = model.params.pressure_coefficient();
        let (nu, np) = (m.len(), mw.len());
        let mut a = vec![vec![0.0; nu + np]; nu + np];
        let mut rhs = vec![0.0; nu + np];
        let u0 = s0.u.free_coeffs();
        let e0 = s0.eta.coeffs();
        let f = model.momentum_rhs(&forcing, dt / 2.0);
        for i in 0..nu {
            for j in 0..nu {
                a[i][j] = m[i][j] / dt + 0.5 * (r[i][j] + d[i][j]);
                rhs[i] += (m[i][j] / dt - 0.5 * (r[i][j] + d[i][j])) * u0[j];
            }
            for k in 0..np {
                a[i][nu + k] = -0.5 * kappa * b[k][i];
                rhs[i] += 0.5 * kappa * b[k][i] * e0[k];
            }
            rhs[i] += f[i];
        }
        for k in 0..np {
            for l in 0..np {
                a[nu + k][nu + l] = mw[k][l] / dt;
                rhs[nu + k] += mw[k][l] / dt * e0[l];
            }
            for j in 0..nu {
                a[nu + k][j] = 0.5 * b[k][j];
                rhs[nu + k] -= 0.5 * b[k][j] * u0[j];
            }
        }
        let x = dense_solve(&a, &rhs).unwrap();
        let u1 = s1.u.free_coeffs();
        for i in 0..nu {
            assert!((x[i] - u1[i]).abs() < 1e-9);
        }
        for k in 0..np {
            assert!((x[nu + k] - s1.eta.coeffs()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn symplectic_eta_update_is_cellwise() {
        let model = rect_model(2);
        let s0 = model.random_state(11);
        let cfg = StepperConfig::new(0.02, Scheme::SymplecticEuler).with_tol(1e-14);
        let s1 = step_symplectic_euler(&model, &s0, &ForcingSpec::Zero, &cfg).unwrap();
        let bu = model.div.spmv(&s1.u.free_coeffs()).unwrap();
        // DG0: each cell is a 1x1 block, area * dη = −Δt * flux.
        for c in 0..model.mass_w.nrows() {
            let expect = s0.eta.coeffs()[c] - 0.02 * bu[c] / model.mass_w.get(c, c);
            assert!((s1.eta.coeffs()[c] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn random_state_has_zero_mean_and_is_seeded() {
        let model = rect_model(3);
        let a = model.random_state(7);
        let b = model.random_state(7);
        assert_eq!(a.u.coeffs(), b.u.coeffs());
        let mean: f64 = model.mass_w.spmv(a.eta.coeffs()).unwrap().iter().sum();
        assert!(mean.abs() < 1e-14);
        assert!(a.u.coeffs().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn manufactured_continuity() {
        let ms = ManufacturedSolution::new(2.0f64).unwrap();
        let x = [0.48f64, -0.6, 0.64];
        for t in [0.0, 0.13, 0.7] {
            assert!((ms.eta_t(&x, t) + ms.div_u(&x, t)).abs() < 1e-15);
            // η_t by central difference agrees with the closed form.
            let fd = (ms.eta(&x, t + 1e-6) - ms.eta(&x, t - 1e-6)) / 2e-6;
            assert!((fd - ms.eta_t(&x, t)).abs() < 1e-8);
        }
        let still = ManufacturedSolution::new(0.0f64).unwrap();
        assert!((still.eta(&x, 0.5) + 0.5 * x[0] * x[1] * x[2]).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        let mesh = Arc::new(Mesh::<f64>::rect(1, 1).unwrap());
        let v = build_space(&mesh, Family::Rt, 1).unwrap();
        let w = build_space(&mesh, Family::Dg, 0).unwrap();
        let shallow = ModelParams::new(0.1, 0.1).with_depth(CoefficientField::Constant(0.5), 1.0);
        assert!(Model::new(Arc::clone(&v), Arc::clone(&w), shallow).is_err());
        let negative = ModelParams::new(0.1, 0.1).with_drag(CoefficientField::Constant(-1.0));
        assert!(Model::new(Arc::clone(&v), Arc::clone(&w), negative).is_err());
        let model = Model::new(v, w, ModelParams::new(0.1, 0.1)).unwrap();
        assert!(Stepper::new(&model, StepperConfig::new(0.0, Scheme::ImplicitMidpoint)).is_err());
    }
}
