//! Concrete ingredients for the periodic wave instance: delayed sine
//! nonlinearity, integral impulses, logarithmic and point-evaluation
//! nonlocal maps, and the problem builder tying them to [`MildSolver`].
//!
//! [`MildSolver`]: crate::mild::MildSolver

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evolution::Coefficient;
use crate::gramian::KernelDescriptor;
use crate::mild::{HistoryFn, Impulse, ImpulseSchedule, NonlocalBounds, ProblemConfig};
use crate::scalar::Real;
use crate::spectral::{evaluate_on_grid, project_to_modes, HistorySegment, ModeBasis, SpectralField};
use crate::trajectory::{divide_exactly, PiecewiseTrajectory};

/// Scalar kernel `(t, ξ, z) ↦ value`.
pub type ScalarKernel<T> = Arc<dyn Fn(T, T, T) -> T + Send + Sync>;

/// Impulse kernel family `g_i(t, ξ, z)`.
#[derive(Clone)]
pub enum ImpulseKernel<T: Real> {
    /// `a(1 + cos(ξ - z))e^{-t}`; nonnegative, so `x = 0` maximizes `|ρ_i|` pointwise.
    Smooth { amplitude: T },
    /// User kernel; the derivative is needed to build `ρ_i'`.
    Custom { kernel: ScalarKernel<T>, derivative: Option<ScalarKernel<T>> },
}

impl<T: Real> fmt::Debug for ImpulseKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Smooth { amplitude } => f.debug_struct("Smooth").field("amplitude", amplitude).finish(),
            Self::Custom { derivative, .. } => {
                f.debug_struct("Custom").field("has_derivative", &derivative.is_some()).finish_non_exhaustive()
            }
        }
    }
}

impl<T: Real> ImpulseKernel<T> {
    fn value(&self, t: T, xi: T, z: T) -> T {
        match self {
            Self::Smooth { amplitude } => *amplitude * (T::one() + (xi - z).cos()) * (-t).exp(),
            Self::Custom { kernel, .. } => kernel(t, xi, z),
        }
    }

    fn derivative(&self, t: T, xi: T, z: T) -> Result<T> {
        match self {
            Self::Smooth { .. } => Ok(-self.value(t, xi, z)),
            Self::Custom { derivative: Some(d), .. } => Ok(d(t, xi, z)),
            Self::Custom { derivative: None, .. } => {
                Err(Error::Config("impulse kernel has no time derivative".into()))
            }
        }
    }
}

/// One impulse interval `(start, end]` with its kernel.
#[derive(Debug, Clone)]
pub struct WaveImpulse<T: Real> {
    pub start: T,
    pub end: T,
    pub kernel: ImpulseKernel<T>,
}

/// Parameters of the wave instance. `delay` is both the state delay `r` and
/// the history length.
#[derive(Clone)]
pub struct WaveInstance<T: Real> {
    pub n_modes: usize,
    pub grid_size: Option<usize>,
    pub horizon: T,
    pub delay: T,
    pub step: T,
    /// Nonlinearity gain `k₀`.
    pub k0: T,
    pub p: T,
    pub lambda: T,
    pub coefficient: Coefficient<T>,
    pub control: KernelDescriptor<T>,
    pub impulses: Vec<WaveImpulse<T>>,
    /// `l = ‖ϱ‖_{L¹}` of the constant weight `ϱ = l/(τ + r)`.
    pub nonlocal_weight: T,
    /// Upper limit `τ` of the nonlocal integral; the horizon when unset.
    pub nonlocal_end: Option<T>,
    /// Nodes `(τ_j, c_j)` of the point-evaluation map.
    pub nonlocal_nodes: Vec<(T, T)>,
    pub history: HistoryFn<T>,
    pub velocity: SpectralField<T>,
    pub target: SpectralField<T>,
    pub tolerance: T,
    pub max_iterations: usize,
    pub substeps: Option<usize>,
}

impl<T: Real> fmt::Debug for WaveInstance<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveInstance")
            .field("n_modes", &self.n_modes)
            .field("horizon", &self.horizon)
            .field("delay", &self.delay)
            .field("step", &self.step)
            .field("k0", &self.k0)
            .field("lambda", &self.lambda)
            .field("impulses", &self.impulses)
            .field("nonlocal_weight", &self.nonlocal_weight)
            .field("nonlocal_nodes", &self.nonlocal_nodes)
            .finish_non_exhaustive()
    }
}

impl<T: Real> WaveInstance<T> {
    /// Zero data, no impulses, no nonlocal terms, `b ≡ 0`, `B = I`, `p = 2`.
    pub fn new(n_modes: usize, horizon: T, delay: T, step: T) -> Self {
        Self {
            n_modes,
            grid_size: None,
            horizon,
            delay,
            step,
            k0: T::zero(),
            p: T::lit(2.0),
            lambda: T::lit(1e-2),
            coefficient: Coefficient::zero(),
            control: KernelDescriptor::ModeDiagonal(vec![T::one()]),
            impulses: Vec::new(),
            nonlocal_weight: T::zero(),
            nonlocal_end: None,
            nonlocal_nodes: Vec::new(),
            history: Arc::new(move |_| SpectralField::zeros(n_modes)),
            velocity: SpectralField::zeros(n_modes),
            target: SpectralField::zeros(n_modes),
            tolerance: T::lit(1e-10),
            max_iterations: 200,
            substeps: None,
        }
    }

    pub fn basis(&self) -> Result<ModeBasis<T>> {
        match self.grid_size {
            Some(m) => ModeBasis::with_grid(self.n_modes, m),
            None => ModeBasis::new(self.n_modes),
        }
    }

    fn nonlocal_limit(&self) -> Result<T> {
        let tau = self.nonlocal_end.unwrap_or(self.horizon);
        if tau > self.horizon || tau <= -self.delay {
            return Err(Error::Config("nonlocal upper limit must lie in (-r, T]".into()));
        }
        Ok(tau)
    }

    /// `M_g = l`, `M_h = Σ c_j`.
    pub fn nonlocal_bounds(&self) -> NonlocalBounds<T> {
        NonlocalBounds {
            m_g: self.nonlocal_weight,
            m_h: self.nonlocal_nodes.iter().fold(T::zero(), |s, &(_, c)| s + c),
        }
    }

    /// Assembles the problem with every wave ingredient bound in.
    pub fn problem_config(&self) -> Result<ProblemConfig<T>> {
        if !(self.k0 >= T::zero()) {
            return Err(Error::Config("k0 must be nonnegative".into()));
        }
        if !(self.nonlocal_weight >= T::zero()) {
            return Err(Error::Config("nonlocal weight must be nonnegative".into()));
        }
        if self.nonlocal_nodes.iter().any(|&(_, c)| !(c >= T::zero())) {
            return Err(Error::Config("nonlocal node weights must be nonnegative".into()));
        }
        self.nonlocal_limit()?;
        let basis = Arc::new(self.basis()?);
        let inst = Arc::new(self.clone());

        let mut impulses = Vec::with_capacity(self.impulses.len());
        for (i, imp) in self.impulses.iter().enumerate() {
            // fail early on a kernel without derivative
            imp.kernel.derivative(imp.start, T::zero(), T::zero())?;
            let (a, b) = (inst.clone(), basis.clone());
            let (c, d) = (inst.clone(), basis.clone());
            impulses.push(Impulse {
                start: imp.start,
                end: imp.end,
                map: Arc::new(move |t, x| wave_impulse(i, t, x, &a, &b)),
                velocity: Arc::new(move |t, x| wave_impulse_deriv(i, t, x, &c, &d)),
            });
        }
        let schedule = ImpulseSchedule::new(impulses, self.horizon)?;

        let nonlinearity = if self.k0 > T::zero() {
            let (a, b) = (inst.clone(), basis.clone());
            Some(Arc::new(move |t: T, seg: &HistorySegment<'_, T>| wave_nonlinearity(t, seg, &a, &b))
                as crate::mild::Nonlinearity<T>)
        } else {
            None
        };
        let nonlocal_g = if self.nonlocal_weight > T::zero() {
            let (a, b) = (inst.clone(), basis.clone());
            Some(Arc::new(move |x: &PiecewiseTrajectory<T>| wave_nonlocal_g(x, &a, &b)) as crate::mild::NonlocalMap<T>)
        } else {
            None
        };
        let nonlocal_h = if self.nonlocal_nodes.is_empty() {
            None
        } else {
            let a = inst.clone();
            Some(Arc::new(move |x: &PiecewiseTrajectory<T>| wave_nonlocal_h(x, &a)) as crate::mild::NonlocalMap<T>)
        };

        Ok(ProblemConfig {
            horizon: self.horizon,
            n_modes: self.n_modes,
            grid_size: self.grid_size,
            delay: self.delay,
            step: self.step,
            lambda: self.lambda,
            p: self.p,
            coefficient: self.coefficient.clone(),
            kernel: self.control.clone(),
            schedule,
            history: self.history.clone(),
            velocity: self.velocity.clone(),
            nonlocal_g,
            nonlocal_h,
            nonlinearity,
            target: self.target.clone(),
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            substeps: self.substeps,
            nonlocal_bounds: Some(self.nonlocal_bounds()),
        })
    }
}

/// `f(t, x_t)(ξ) = k₀cos(2πt/T)·sin(x(t - r, ξ))`, pointwise on the grid then projected.
pub fn wave_nonlinearity<T: Real>(
    t: T,
    segment: &HistorySegment<'_, T>,
    inst: &WaveInstance<T>,
    basis: &ModeBasis<T>,
) -> Result<SpectralField<T>> {
    if segment.delay() < inst.delay - segment.step() * T::lit(1e-9) {
        return Err(Error::Domain("history segment shorter than the delay".into()));
    }
    let amp = inst.k0 * (T::two_pi() * t / inst.horizon).cos();
    let delayed = segment.at_offset(-inst.delay)?;
    let values: Vec<T> = evaluate_on_grid(&delayed, basis)?.into_iter().map(|v| amp * v.sin()).collect();
    project_to_modes(&values, basis)
}

/// `γ(t) = k₀(2π)^{1/p}|cos(2πt/T)|`.
pub fn gamma<T: Real>(t: T, inst: &WaveInstance<T>) -> T {
    inst.k0 * T::two_pi().powf(T::one() / inst.p) * (T::two_pi() * t / inst.horizon).cos().abs()
}

fn impulse_integral<T: Real>(
    t: T,
    x_left: &SpectralField<T>,
    basis: &ModeBasis<T>,
    kernel: impl Fn(T, T, T) -> Result<T>,
) -> Result<SpectralField<T>> {
    let v = evaluate_on_grid(x_left, basis)?;
    let c2: Vec<T> = v.iter().map(|vz| vz.cos() * vz.cos()).collect();
    let nodes = basis.nodes();
    let w = basis.weight();
    let values = nodes
        .iter()
        .map(|&xi| {
            nodes.iter().zip(&c2).try_fold(T::zero(), |acc, (&z, &c)| Ok(acc + kernel(t, xi, z)? * c)).map(|s| s * w)
        })
        .collect::<Result<Vec<T>>>()?;
    project_to_modes(&values, basis)
}

fn impulse_checked<T: Real>(i: usize, inst: &WaveInstance<T>) -> Result<&WaveImpulse<T>> {
    inst.impulses
        .get(i)
        .ok_or(Error::IndexOutOfRange { index: i, limit: inst.impulses.len() })
}

/// `ρ_i(t, x)(ξ) = ∫ g_i(t, ξ, z)cos²(x(z))dz` by the periodic trapezoid rule.
pub fn wave_impulse<T: Real>(
    i: usize,
    t: T,
    x_left: &SpectralField<T>,
    inst: &WaveInstance<T>,
    basis: &ModeBasis<T>,
) -> Result<SpectralField<T>> {
    let imp = impulse_checked(i, inst)?;
    impulse_integral(t, x_left, basis, |t, xi, z| Ok(imp.kernel.value(t, xi, z)))
}

/// `∂_t ρ_i`, from `∂_t g_i`.
pub fn wave_impulse_deriv<T: Real>(
    i: usize,
    t: T,
    x_left: &SpectralField<T>,
    inst: &WaveInstance<T>,
    basis: &ModeBasis<T>,
) -> Result<SpectralField<T>> {
    let imp = impulse_checked(i, inst)?;
    impulse_integral(t, x_left, basis, |t, xi, z| imp.kernel.derivative(t, xi, z))
}

/// Sampled `(d_i, e_i)`: sup of `‖ρ_i‖` and `‖ρ_i'‖` over 17 times in
/// `[t_i, s_i]` and the states `{0} ∪ candidates`.
pub fn impulse_bounds<T: Real>(
    i: usize,
    inst: &WaveInstance<T>,
    basis: &ModeBasis<T>,
    candidates: &[SpectralField<T>],
) -> Result<(T, T)> {
    let imp = impulse_checked(i, inst)?;
    let zero = SpectralField::zeros(inst.n_modes);
    let mut d = T::zero();
    let mut e = T::zero();
    for j in 0..=16 {
        let t = imp.start + (imp.end - imp.start) * T::from_count(j) / T::lit(16.0);
        for x in std::iter::once(&zero).chain(candidates) {
            d = d.max(wave_impulse(i, t, x, inst, basis)?.norm());
            e = e.max(wave_impulse_deriv(i, t, x, inst, basis)?.norm());
        }
    }
    Ok((d, e))
}

/// `g(x)(ξ) = ∫_{-r}^{τ} ϱ log(1 + |x(s, ξ)|) ds` with constant `ϱ = l/(τ + r)`,
/// trapezoid in time; the two sides of `s = 0` use `φ(0)` and `x(0)` respectively,
/// and the two sides of each `t_i` use the left and right limits.
pub fn wave_nonlocal_g<T: Real>(
    x: &PiecewiseTrajectory<T>,
    inst: &WaveInstance<T>,
    basis: &ModeBasis<T>,
) -> Result<SpectralField<T>> {
    let tau = inst.nonlocal_limit()?;
    let h = x.step();
    let rho = inst.nonlocal_weight / (tau + inst.delay);
    let m = basis.grid_size();
    if rho == T::zero() {
        return Ok(SpectralField::zeros(inst.n_modes));
    }
    let mut acc = vec![T::zero(); m];
    let mut add = |field: &SpectralField<T>, w: T| -> Result<()> {
        for (a, v) in acc.iter_mut().zip(evaluate_on_grid(field, basis)?) {
            *a += w * (T::one() + v.abs()).ln();
        }
        Ok(())
    };
    let half = h * T::lit(0.5);
    // [-r, 0]: history samples, closed by φ(0)
    let hist = x.history();
    for (j, f) in hist.iter().enumerate() {
        add(f, if j == 0 { half } else { h })?;
    }
    add(x.history_end(), half)?;
    // [0, τ] or [τ, 0] shortened piece
    if tau > T::zero() {
        let k_tau = divide_exactly(tau, h)
            .ok_or_else(|| Error::Config("time step must divide the nonlocal upper limit".into()))?;
        let states = x.states();
        if k_tau >= states.len() {
            return Err(Error::Config("nonlocal upper limit beyond the trajectory".into()));
        }
        for (k, f) in states.iter().enumerate().take(k_tau + 1) {
            add(f, if k == 0 || k == k_tau { half } else { h })?;
        }
        // x jumps at t_i: the panel right of t_i uses x(t_i⁺) = ρ_i(t_i, x(t_i⁻))
        for (i, imp) in inst.impulses.iter().enumerate() {
            let k = x.index_of(imp.start)?;
            if k > 0 && k < k_tau {
                let right = wave_impulse(i, imp.start, &states[k], inst, basis)?;
                add(&states[k], -half)?;
                add(&right, half)?;
            }
        }
    } else if tau < T::zero() {
        return Err(Error::Config("nonlocal upper limit below 0 is not supported".into()));
    }
    let values: Vec<T> = acc.into_iter().map(|a| a * rho).collect();
    project_to_modes(&values, basis)
}

/// `h(x) = Σ c_j x(τ_j)` with linear interpolation between grid nodes.
pub fn wave_nonlocal_h<T: Real>(x: &PiecewiseTrajectory<T>, inst: &WaveInstance<T>) -> Result<SpectralField<T>> {
    inst.nonlocal_nodes.iter().try_fold(SpectralField::zeros(inst.n_modes), |acc, &(tau, c)| {
        if tau < -x.delay() || tau > x.horizon() {
            return Err(Error::Domain(format!("nonlocal node {:e} outside the trajectory", tau.as_f64())));
        }
        Ok(acc.axpy(c, &x.value_at(tau)?))
    })
}
