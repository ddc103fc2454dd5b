//! Piecewise mild-solution operator `Φ_λ` for the controlled problem with
//! delay, non-instantaneous impulses and nonlocal initial data, together with
//! its fixed-point iteration and an independent residual check.
//!
//! Grid layout of a trajectory with impulse intervals `(t_i, s_i]`:
//! indices `[0, t_1]` carry the first Duhamel branch, `(t_i, s_i]` the
//! impulse law `ρ_i(t, x(t_i⁻))`, and `(s_i, t_{i+1}]` the Duhamel branch
//! restarted at `s_i`. The value stored at `t_i` is the left limit `x(t_i⁻)`.

use std::fmt;
use std::sync::Arc;

use log::{debug, warn};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::evolution::{Coefficient, EvolutionTable};
use crate::gramian::{
    assemble_gramian_on_grid, build_control_operator, resolvent_solve, ControlOperator, FeedbackLaw, Gramian,
    KernelDescriptor,
};
use crate::quadrature::running_weights_piecewise;
use crate::scalar::{Cplx, Real};
use crate::spectral::{HistorySegment, ModeBasis, SpectralField};
use crate::trajectory::{PiecewiseTrajectory, TimeGrid};

/// Initial history `φ` on `[-q, 0]`.
pub type HistoryFn<T> = Arc<dyn Fn(T) -> SpectralField<T> + Send + Sync>;
/// Nonlocal initial map `x ↦ g(x)` or `x ↦ h(x)`.
pub type NonlocalMap<T> = Arc<dyn Fn(&PiecewiseTrajectory<T>) -> Result<SpectralField<T>> + Send + Sync>;
/// Delayed nonlinearity `(t, x_t) ↦ f(t, x_t)`.
pub type Nonlinearity<T> = Arc<dyn Fn(T, &HistorySegment<'_, T>) -> Result<SpectralField<T>> + Send + Sync>;
/// Impulse law `(t, x(t_i⁻)) ↦ ρ_i(t, x(t_i⁻))`.
pub type ImpulseMap<T> = Arc<dyn Fn(T, &SpectralField<T>) -> Result<SpectralField<T>> + Send + Sync>;

/// Impulse acting on `(start, end]`, with its time derivative.
#[derive(Clone)]
pub struct Impulse<T: Real> {
    pub start: T,
    pub end: T,
    pub map: ImpulseMap<T>,
    pub velocity: ImpulseMap<T>,
}

impl<T: Real> fmt::Debug for Impulse<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Impulse").field("start", &self.start).field("end", &self.end).finish_non_exhaustive()
    }
}

/// Checks `0 < t_1 ≤ s_1 ≤ t_2 ≤ … ≤ s_N ≤ T` with strictly increasing `t_i`.
pub fn validate_schedule<T: Real>(times: &[(T, T)], horizon: T) -> Result<()> {
    let mut prev_end = T::zero();
    for (i, &(t, s)) in times.iter().enumerate() {
        let k = i + 1;
        if !(t > prev_end) && !(k > 1 && t == prev_end && t > times[i - 1].0) {
            return Err(Error::Config(format!(
                "impulse {k}: need t_{k} > {} (ordering 0 < t_1 <= s_1 <= t_2 < ...)",
                if k == 1 { "0".to_string() } else { format!("s_{}", k - 1) }
            )));
        }
        if s < t {
            return Err(Error::Config(format!("impulse {k}: need t_{k} <= s_{k}")));
        }
        if s > horizon {
            return Err(Error::Config(format!("impulse {k}: s_{k} exceeds the horizon")));
        }
        prev_end = s;
    }
    Ok(())
}

/// Ordered impulse intervals.
#[derive(Clone, Debug, Default)]
pub struct ImpulseSchedule<T: Real> {
    impulses: Vec<Impulse<T>>,
}

impl<T: Real> ImpulseSchedule<T> {
    pub fn new(impulses: Vec<Impulse<T>>, horizon: T) -> Result<Self> {
        let times: Vec<(T, T)> = impulses.iter().map(|i| (i.start, i.end)).collect();
        validate_schedule(&times, horizon)?;
        Ok(Self { impulses })
    }

    pub fn empty() -> Self {
        Self { impulses: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.impulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impulses.is_empty()
    }

    pub fn impulses(&self) -> &[Impulse<T>] {
        &self.impulses
    }
}

/// Growth constants of the nonlocal maps, `‖g(x)‖ ≤ M_g(‖x‖ + 1)` and likewise for `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlocalBounds<T> {
    pub m_g: T,
    pub m_h: T,
}

/// Full problem instance.
#[derive(Clone)]
pub struct ProblemConfig<T: Real> {
    pub horizon: T,
    pub n_modes: usize,
    /// Physical grid size; `4N + 1` when unset.
    pub grid_size: Option<usize>,
    pub delay: T,
    pub step: T,
    pub lambda: T,
    /// Duality exponent of the feedback law.
    pub p: T,
    pub coefficient: Coefficient<T>,
    pub kernel: KernelDescriptor<T>,
    pub schedule: ImpulseSchedule<T>,
    pub history: HistoryFn<T>,
    pub velocity: SpectralField<T>,
    pub nonlocal_g: Option<NonlocalMap<T>>,
    pub nonlocal_h: Option<NonlocalMap<T>>,
    pub nonlinearity: Option<Nonlinearity<T>>,
    pub target: SpectralField<T>,
    pub tolerance: T,
    pub max_iterations: usize,
    /// RK4 steps per grid step; per-mode default when unset.
    pub substeps: Option<usize>,
    pub nonlocal_bounds: Option<NonlocalBounds<T>>,
}

impl<T: Real> fmt::Debug for ProblemConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemConfig")
            .field("horizon", &self.horizon)
            .field("n_modes", &self.n_modes)
            .field("delay", &self.delay)
            .field("step", &self.step)
            .field("lambda", &self.lambda)
            .field("p", &self.p)
            .field("impulses", &self.schedule.len())
            .finish_non_exhaustive()
    }
}

impl<T: Real> ProblemConfig<T> {
    /// Linear, impulse-free instance with zero data, `b ≡ 0` and `B = I`.
    pub fn linear(horizon: T, n_modes: usize, delay: T, step: T, lambda: T, target: SpectralField<T>) -> Self {
        Self {
            horizon,
            n_modes,
            grid_size: None,
            delay,
            step,
            lambda,
            p: T::lit(2.0),
            coefficient: Coefficient::zero(),
            kernel: KernelDescriptor::ModeDiagonal(vec![T::one()]),
            schedule: ImpulseSchedule::empty(),
            history: Arc::new(move |_| SpectralField::zeros(n_modes)),
            velocity: SpectralField::zeros(n_modes),
            nonlocal_g: None,
            nonlocal_h: None,
            nonlinearity: None,
            target,
            tolerance: T::lit(1e-10),
            max_iterations: 200,
            substeps: None,
            nonlocal_bounds: Some(NonlocalBounds { m_g: T::zero(), m_h: T::zero() }),
        }
    }
}

// Control window `[s_i, t_{i+1}]` in grid indices.
#[derive(Debug, Clone)]
struct Window<T: Real> {
    start: usize,
    end: usize,
    gramian: Gramian<T>,
}

/// Constants entering the smallness condition `K[1 + (M̃M_B)²T/λ] < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityConstants<T> {
    /// `M = sup ‖C(t,s)‖`.
    pub cosine_bound: T,
    /// `M̃ = sup ‖S(t,s)‖`.
    pub sine_bound: T,
    /// `M_B = ‖B‖`.
    pub control_norm: T,
    pub horizon: T,
    pub lambda: T,
    pub m_g: T,
    pub m_h: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility<T> {
    pub value: T,
    pub feasible: bool,
}

/// `K[1 + (M̃M_B)²T/λ]` with `K = M·M_g + M̃·M_h`, and whether it is below one.
pub fn feasibility_check<T: Real>(c: &FeasibilityConstants<T>) -> Result<Feasibility<T>> {
    if !(c.lambda > T::zero()) {
        return Err(Error::Config("feasibility needs λ > 0".into()));
    }
    let k = c.cosine_bound * c.m_g + c.sine_bound * c.m_h;
    let mb = c.sine_bound * c.control_norm;
    let value = k * (T::one() + mb * mb * c.horizon / c.lambda);
    Ok(Feasibility { value, feasible: value < T::one() })
}

/// One application of `Φ_λ`.
#[derive(Debug, Clone)]
pub struct PhiOutput<T: Real> {
    pub trajectory: PiecewiseTrajectory<T>,
    /// Interval defects `g_i(x)`, one per control window.
    pub defects: Vec<SpectralField<T>>,
    /// Assembled control on the grid, zero on every `(t_i, s_i]`.
    pub control: Vec<SpectralField<T>>,
}

/// Outcome of the successive-approximation loop.
#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    pub trajectory: PiecewiseTrajectory<T>,
    pub control: Vec<SpectralField<T>>,
    /// `g_i(x*)` evaluated on the returned trajectory.
    pub defects: Vec<SpectralField<T>>,
    pub iterations: usize,
    pub residual_history: Vec<T>,
    pub converged: bool,
    /// `‖x(T) - x_T‖`.
    pub terminal_error: T,
    /// `‖x(T) - x_T + λR(λ,Ψ_N)g_N(x)‖`.
    pub terminal_identity: T,
    /// `‖Φ_λ(x*) - x*‖` from one extra application.
    pub reapplication_residual: T,
}

impl<T: Real> Solution<T> {
    pub fn final_residual(&self) -> T {
        self.residual_history.last().copied().unwrap_or(T::zero())
    }

    /// Largest ratio of consecutive residuals over the last iterations.
    pub fn contraction_ratio(&self) -> Option<T> {
        let h = &self.residual_history;
        if h.len() < 3 {
            return None;
        }
        let tail = &h[1..];
        tail.windows(2)
            .filter(|w| w[0] > T::zero())
            .map(|w| w[1] / w[0])
            .fold(None, |m: Option<T>, r| Some(m.map_or(r, |m| m.max(r))))
    }
}

/// Sup-norm residuals of the mild-solution identity per branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationReport<T> {
    /// Duhamel branch on `[0, t_1]`.
    pub initial_branch: T,
    /// Impulse branches `(t_i, s_i]`.
    pub impulse_branch: T,
    /// Duhamel branches on `(s_i, t_{i+1}]`.
    pub restart_branch: T,
    /// `‖x(0) - φ(0) - g(x)‖`.
    pub initial_condition: T,
    /// `‖C(s_i,s_i)ρ_i + S(s_i,s_i)ρ_i' - ρ_i(s_i, ·)‖`.
    pub interface: T,
}

impl<T: Real> VerificationReport<T> {
    pub fn max(&self) -> T {
        self.initial_branch
            .max(self.impulse_branch)
            .max(self.restart_branch)
            .max(self.initial_condition)
            .max(self.interface)
    }
}

/// Precomputed tables, control operator and window Gramians for one instance.
#[derive(Clone)]
pub struct MildSolver<T: Real> {
    config: ProblemConfig<T>,
    basis: ModeBasis<T>,
    table: Arc<EvolutionTable<T>>,
    control: Arc<ControlOperator<T>>,
    windows: Arc<Vec<Window<T>>>,
    // impulse (t_i, s_i) grid indices
    impulse_indices: Vec<(usize, usize)>,
    history: Vec<SpectralField<T>>,
    history_end: SpectralField<T>,
}

fn zeros_like<T: Real>(n: usize) -> SpectralField<T> {
    SpectralField::zeros(n)
}

fn mode_series<T: Real>(fields: &[SpectralField<T>], idx: usize) -> Vec<Cplx<T>> {
    fields.iter().map(|f| f.coeffs()[idx]).collect()
}

/// Grid index of a jump of `x` with its left and right values.
type StateJump<T> = (usize, SpectralField<T>, SpectralField<T>);

/// Forcing on a window: `left[j]` at local node `j`, plus the value to the
/// right of the nodes where the delayed argument crosses a jump of `x`.
struct Forcing<T: Real> {
    left: Vec<SpectralField<T>>,
    jumps: Vec<(usize, SpectralField<T>)>,
}

impl<T: Real> Forcing<T> {
    fn is_real(&self) -> bool {
        self.left.iter().chain(self.jumps.iter().map(|j| &j.1)).all(|f| f.is_real())
    }

    fn mode_jumps(&self, idx: usize) -> Vec<(usize, Cplx<T>)> {
        self.jumps.iter().map(|(j, f)| (*j, f.coeffs()[idx])).collect()
    }

    fn right(&self, j: usize) -> &SpectralField<T> {
        self.jumps.iter().find(|r| r.0 == j).map_or(&self.left[j], |r| &r.1)
    }
}

fn combine<T: Real>(real: bool, coeffs: DVector<Cplx<T>>) -> SpectralField<T> {
    if real {
        SpectralField::real_projected(coeffs)
    } else {
        SpectralField::complex(coeffs)
    }
}

impl<T: Real> MildSolver<T> {
    pub fn new(config: ProblemConfig<T>) -> Result<Self> {
        if !(config.lambda > T::zero()) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(config.p >= T::lit(2.0)) {
            return Err(Error::UnsupportedExponent(config.p.as_f64()));
        }
        if !(config.delay > T::zero()) {
            return Err(Error::Config("delay must be positive".into()));
        }
        let basis = match config.grid_size {
            Some(m) => ModeBasis::with_grid(config.n_modes, m)?,
            None => ModeBasis::new(config.n_modes)?,
        };
        for (name, f) in [("velocity", &config.velocity), ("target", &config.target)] {
            if f.n_modes() != config.n_modes {
                return Err(Error::Config(format!("{name} has {} modes, expected {}", f.n_modes(), config.n_modes)));
            }
        }
        let grid = TimeGrid::new(config.horizon, config.step)?;
        let times: Vec<(T, T)> = config.schedule.impulses().iter().map(|i| (i.start, i.end)).collect();
        validate_schedule(&times, config.horizon)?;
        let impulse_indices: Vec<(usize, usize)> = times
            .iter()
            .map(|&(t, s)| Ok((grid.index_of(t)?, grid.index_of(s)?)))
            .collect::<Result<_>>()
            .map_err(|_: Error| Error::Config("time step must divide every impulse time".into()))?;
        let table = EvolutionTable::build(config.n_modes, config.coefficient.clone(), grid, config.substeps)?;
        let control = build_control_operator(config.kernel.clone(), &basis)?;
        let mut windows = Vec::with_capacity(impulse_indices.len() + 1);
        let mut start = 0;
        for &(ti, si) in impulse_indices.iter().chain(std::iter::once(&(grid.n_steps(), grid.n_steps()))) {
            let gramian = assemble_gramian_on_grid(&table, &control, start, ti)?;
            windows.push(Window { start, end: ti, gramian });
            start = si;
        }
        let (history, history_end) = PiecewiseTrajectory::sample_history(config.delay, config.step, |t| (config.history)(t))?;
        if let Some(bad) = history.iter().chain(std::iter::once(&history_end)).find(|f| f.n_modes() != config.n_modes) {
            return Err(Error::Config(format!("history has {} modes, expected {}", bad.n_modes(), config.n_modes)));
        }
        Ok(Self {
            config,
            basis,
            table: Arc::new(table),
            control: Arc::new(control),
            windows: Arc::new(windows),
            impulse_indices,
            history,
            history_end,
        })
    }

    /// Same instance with a different `λ`; tables and Gramians are shared.
    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        let mut s = self.clone();
        s.config.lambda = lambda;
        Ok(s)
    }

    pub fn config(&self) -> &ProblemConfig<T> {
        &self.config
    }

    pub fn basis(&self) -> &ModeBasis<T> {
        &self.basis
    }

    pub fn table(&self) -> &EvolutionTable<T> {
        &self.table
    }

    pub fn control_operator(&self) -> &ControlOperator<T> {
        &self.control
    }

    /// Window Gramians `Ψ_{s_i}^{t_{i+1}}`, `i = 0..=N`.
    pub fn gramians(&self) -> Vec<&Gramian<T>> {
        self.windows.iter().map(|w| &w.gramian).collect()
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        self.table.grid()
    }

    /// Grid indices `(t_i, s_i)` of the impulse intervals.
    pub fn impulse_indices(&self) -> &[(usize, usize)] {
        &self.impulse_indices
    }

    pub fn feasibility(&self) -> Result<Feasibility<T>> {
        let nb = self
            .config
            .nonlocal_bounds
            .ok_or_else(|| Error::Config("feasibility needs the nonlocal growth constants M_g and M_h".into()))?;
        let b = self.table.bounds();
        feasibility_check(&FeasibilityConstants {
            cosine_bound: b.cosine,
            sine_bound: b.sine,
            control_norm: self.control.norm(),
            horizon: self.config.horizon,
            lambda: self.config.lambda,
            m_g: nb.m_g,
            m_h: nb.m_h,
        })
    }

    fn n(&self) -> usize {
        self.config.n_modes
    }

    fn trajectory(&self, states: Vec<SpectralField<T>>) -> Result<PiecewiseTrajectory<T>> {
        PiecewiseTrajectory::new(self.config.step, self.history.clone(), self.history_end.clone(), states)
    }

    /// `C(t,0)φ(0) + S(t,0)η` on the whole grid.
    pub fn free_trajectory(&self) -> Result<PiecewiseTrajectory<T>> {
        let grid = *self.grid();
        let states = (0..=grid.n_steps())
            .map(|k| {
                let t = grid.time(k);
                Ok(&self.table.apply_c(t, T::zero(), &self.history_end)?
                    + &self.table.apply_s(t, T::zero(), &self.config.velocity)?)
            })
            .collect::<Result<_>>()?;
        self.trajectory(states)
    }

    fn nonlocal(&self, x: &PiecewiseTrajectory<T>) -> Result<(SpectralField<T>, SpectralField<T>)> {
        let g = match &self.config.nonlocal_g {
            Some(g) => g(x)?,
            None => zeros_like(self.n()),
        };
        let h = match &self.config.nonlocal_h {
            Some(h) => h(x)?,
            None => zeros_like(self.n()),
        };
        Ok((g, h))
    }

    /// Grid indices where `x` jumps, with both one-sided values: `0` when the
    /// nonlocal map moves `x(0)` off `φ(0)`, and every impulse start.
    fn state_jumps(&self, x: &PiecewiseTrajectory<T>) -> Result<Vec<StateJump<T>>> {
        let grid = *self.grid();
        let mut out = Vec::new();
        if (x.history_end() - &x.states()[0]).max_abs() > T::zero() {
            out.push((0, x.history_end().clone(), x.states()[0].clone()));
        }
        for (imp, &(ti, _)) in self.config.schedule.impulses().iter().zip(&self.impulse_indices) {
            let left = x.left_limit(ti);
            out.push((ti, left.clone(), (imp.map)(grid.time(ti), left)?));
        }
        Ok(out)
    }

    fn forcing(&self, x: &PiecewiseTrajectory<T>, a: usize, e: usize) -> Result<Forcing<T>> {
        let grid = *self.grid();
        let Some(f) = &self.config.nonlinearity else {
            return Ok(Forcing { left: vec![zeros_like(self.n()); e - a + 1], jumps: Vec::new() });
        };
        let mut left = (a..=e)
            .map(|k| f(grid.time(k), &x.history_segment_at(k)?))
            .collect::<Result<Vec<_>>>()?;
        // the oldest sample of the window at τ_k sits at τ_k - r
        let lag = x.history().len();
        let mut jumps = Vec::new();
        for (jt, l, r) in self.state_jumps(x)? {
            let k = jt + lag;
            if k < a || k > e {
                continue;
            }
            let t = grid.time(k);
            let mut samples: Vec<&SpectralField<T>> = x.history_segment_at(k)?.samples().to_vec();
            samples[0] = &l;
            left[k - a] = f(t, &HistorySegment::new(samples.clone(), x.step())?)?;
            samples[0] = &r;
            jumps.push((k - a, f(t, &HistorySegment::new(samples, x.step())?)?));
        }
        Ok(Forcing { left, jumps })
    }

    // Initial data `(v, w)` of window `i` from the input trajectory.
    fn window_data(
        &self,
        i: usize,
        x: &PiecewiseTrajectory<T>,
        g: &SpectralField<T>,
        h: &SpectralField<T>,
    ) -> Result<(SpectralField<T>, SpectralField<T>)> {
        if i == 0 {
            return Ok((&self.history_end + g, &self.config.velocity + h));
        }
        let imp = &self.config.schedule.impulses()[i - 1];
        let left = x.left_limit(self.impulse_indices[i - 1].0);
        Ok(((imp.map)(imp.end, left)?, (imp.velocity)(imp.end, left)?))
    }

    /// `(Φ_λ x)` on the grid, with the defects and the assembled control.
    pub fn apply_phi(&self, x: &PiecewiseTrajectory<T>) -> Result<PhiOutput<T>> {
        let grid = *self.grid();
        let k_max = grid.n_steps();
        if x.states().len() != k_max + 1 || x.n_modes() != self.n() {
            return Err(Error::Dimension { expected: k_max + 1, found: x.states().len() });
        }
        let n = self.n();
        let nm = n as i64;
        let d = 2 * n + 1;
        let (g, h) = self.nonlocal(x)?;
        let mut states = vec![zeros_like(n); k_max + 1];
        let mut control = vec![zeros_like(n); k_max + 1];
        let mut defects = Vec::with_capacity(self.windows.len());
        for (i, win) in self.windows.iter().enumerate() {
            let (a, e) = (win.start, win.end);
            let (v0, w0) = self.window_data(i, x, &g, &h)?;
            let f = self.forcing(x, a, e)?;
            let real = v0.is_real() && w0.is_real() && f.is_real();
            let s_a = grid.time(a);
            let free: Vec<SpectralField<T>> = (a..=e)
                .map(|k| {
                    let t = grid.time(k);
                    Ok(&self.table.apply_c(t, s_a, &v0)? + &self.table.apply_s(t, s_a, &w0)?)
                })
                .collect::<Result<_>>()?;
            let mut fint = vec![DVector::zeros(d); e - a + 1];
            for m in -nm..=nm {
                let idx = (m + nm) as usize;
                let series = self.table.duhamel_piecewise(m, a, &mode_series(&f.left, idx), &f.mode_jumps(idx));
                for (j, val) in series.into_iter().enumerate() {
                    fint[j][idx] = val;
                }
            }
            let last = e - a;
            let defect = &(&self.config.target - &free[last]) - &combine(real, fint[last].clone());
            let law = FeedbackLaw::new(self.config.lambda, &win.gramian, &defect, self.config.p, &self.basis)?;
            let u: Vec<SpectralField<T>> =
                (a..=e).map(|k| law.eval(grid.time(k), &self.table, &self.control)).collect::<Result<_>>()?;
            let bu: Vec<SpectralField<T>> = u.iter().map(|uk| self.control.apply(uk)).collect::<Result<_>>()?;
            let real = real && bu.iter().all(|b| b.is_real());
            let mut cint = vec![DVector::zeros(d); e - a + 1];
            for m in -nm..=nm {
                let idx = (m + nm) as usize;
                for (j, val) in self.table.duhamel(m, a, &mode_series(&bu, idx)).into_iter().enumerate() {
                    cint[j][idx] = val;
                }
            }
            let first = if i == 0 { 0 } else { 1 };
            for j in first..=last {
                let forced = combine(real, &fint[j] + &cint[j]);
                states[a + j] = &free[j] + &forced;
                control[a + j] = u[j].clone();
            }
            defects.push(defect);
        }
        for (imp, &(ti, si)) in self.config.schedule.impulses().iter().zip(&self.impulse_indices) {
            let left = x.left_limit(ti);
            for (k, state) in states.iter_mut().enumerate().take(si + 1).skip(ti + 1) {
                *state = (imp.map)(grid.time(k), left)?;
                control[k] = zeros_like(n);
            }
        }
        Ok(PhiOutput { trajectory: self.trajectory(states)?, defects, control })
    }

    /// Successive approximation from the free trajectory; never fails on
    /// non-convergence, which is reported through [`Solution::converged`].
    pub fn fixed_point_iterate(&self) -> Result<Solution<T>> {
        let mut x = self.free_trajectory()?;
        let mut history = Vec::new();
        let mut converged = false;
        let mut last: Option<PhiOutput<T>> = None;
        for it in 0..self.config.max_iterations {
            let out = self.apply_phi(&x)?;
            let r = out.trajectory.sup_distance(&x)?;
            history.push(r);
            debug!("fixed-point iteration {}: residual {:e}", it + 1, r.as_f64());
            x = out.trajectory.clone();
            last = Some(out);
            if !r.is_finite() {
                break;
            }
            if r <= self.config.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            warn!("fixed point not reached after {} iterations", history.len());
        }
        let control = match last {
            Some(out) => out.control,
            None => vec![zeros_like(self.n()); x.states().len()],
        };
        let check = self.apply_phi(&x)?;
        let reapplication_residual = check.trajectory.sup_distance(&x)?;
        let k_max = self.grid().n_steps();
        let terminal = &x.states()[k_max] - &self.config.target;
        let last_window = self.windows.last().expect("at least one window");
        let g_n = check.defects.last().expect("at least one defect");
        let z = resolvent_solve(self.config.lambda, &last_window.gramian, g_n, self.config.p, &self.basis)?;
        let terminal_identity = (&terminal + &z).norm();
        Ok(Solution {
            terminal_error: terminal.norm(),
            trajectory: x,
            control,
            defects: check.defects,
            iterations: history.len(),
            residual_history: history,
            converged,
            terminal_identity,
            reapplication_residual,
        })
    }

    /// Like [`Self::fixed_point_iterate`] but non-convergence is an error
    /// carrying the residual history.
    pub fn fixed_point_solve(&self) -> Result<Solution<T>> {
        let sol = self.fixed_point_iterate()?;
        if sol.converged {
            Ok(sol)
        } else {
            Err(Error::NoConvergence {
                iterations: sol.iterations,
                residual_history: sol.residual_history.iter().map(|r| r.as_f64()).collect(),
            })
        }
    }

    /// Re-evaluates the mild-solution formula for `x` by direct quadrature of
    /// `S(τ_k, σ)` (no factorization) and compares branch by branch.
    pub fn verify_mild_solution(&self, x: &PiecewiseTrajectory<T>) -> Result<VerificationReport<T>> {
        let grid = *self.grid();
        let k_max = grid.n_steps();
        if x.states().len() != k_max + 1 {
            return Err(Error::Dimension { expected: k_max + 1, found: x.states().len() });
        }
        let n = self.n();
        let nm = n as i64;
        let (g, h) = self.nonlocal(x)?;
        let mut report = VerificationReport {
            initial_branch: T::zero(),
            impulse_branch: T::zero(),
            restart_branch: T::zero(),
            initial_condition: (&(&x.states()[0] - &self.history_end) - &g).norm(),
            interface: T::zero(),
        };
        for (i, win) in self.windows.iter().enumerate() {
            let (a, e) = (win.start, win.end);
            let (v0, w0) = self.window_data(i, x, &g, &h)?;
            let f = self.forcing(x, a, e)?;
            let breaks: Vec<usize> = f.jumps.iter().map(|j| j.0).collect();
            let s_a = grid.time(a);
            // series(j, right) is the sample at local node j, from the right side if asked;
            // only the forcing is split at its jumps, the control keeps the plain rule
            let direct = |k: usize, split: bool, series: &dyn Fn(usize, bool) -> Cplx<T>, m: i64| -> Cplx<T> {
                let w = running_weights_piecewise(k - a, e - a + 1, if split { &breaks } else { &[] }, grid.step());
                w.iter().enumerate().fold(Cplx::new(T::zero(), T::zero()), |acc, (j, &(wl, wr))| {
                    let s = self.table.pair_at(m, k, a + j).s;
                    acc + s * series(j, false) * wl + s * series(j, true) * wr
                })
            };
            let side = |j: usize, right: bool| if right { f.right(j) } else { &f.left[j] };
            let end_free = &self.table.apply_c(grid.time(e), s_a, &v0)? + &self.table.apply_s(grid.time(e), s_a, &w0)?;
            let fint_end = SpectralField::from_fn(n, false, |m| direct(e, true, &|j, r| side(j, r).mode(m), m))?;
            let defect = &(&self.config.target - &end_free) - &fint_end;
            let law = FeedbackLaw::new(self.config.lambda, &win.gramian, &defect, self.config.p, &self.basis)?;
            let bu: Vec<SpectralField<T>> = (a..=e)
                .map(|k| self.control.apply(&law.eval(grid.time(k), &self.table, &self.control)?))
                .collect::<Result<_>>()?;
            let first = if i == 0 { a } else { a + 1 };
            for k in first..=e {
                let t = grid.time(k);
                let free = &self.table.apply_c(t, s_a, &v0)? + &self.table.apply_s(t, s_a, &w0)?;
                let forced =
                    SpectralField::from_fn(n, false, |m| direct(k, true, &|j, r| side(j, r).mode(m), m) + direct(k, false, &|j, _| bu[j].mode(m), m))?;
                let r = (&(&x.states()[k] - &free) - &forced).norm();
                if i == 0 {
                    report.initial_branch = report.initial_branch.max(r);
                } else {
                    report.restart_branch = report.restart_branch.max(r);
                }
            }
            if i > 0 {
                // branch-3 formula at t = s_i against the impulse value there
                let rho = &v0;
                let at_anchor = &self.table.apply_c(s_a, s_a, &v0)? + &self.table.apply_s(s_a, s_a, &w0)?;
                report.interface = report.interface.max((&at_anchor - rho).norm());
            }
            let _ = nm;
        }
        for (imp, &(ti, si)) in self.config.schedule.impulses().iter().zip(&self.impulse_indices) {
            let left = x.left_limit(ti);
            for k in ti + 1..=si {
                let r = (&x.states()[k] - &(imp.map)(grid.time(k), left)?).norm();
                report.impulse_branch = report.impulse_branch.max(r);
            }
        }
        Ok(report)
    }
}
