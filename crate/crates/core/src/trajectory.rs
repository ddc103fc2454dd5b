//! Uniform time grids and field-valued trajectories on `[-q, T]`.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{HistorySegment, SpectralField};

/// Uniform grid `τ_k = k·Δt`, `k = 0..=K`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    step: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    /// Grid with step `step`; `step` must divide `horizon`.
    pub fn new(horizon: T, step: T) -> Result<Self> {
        if !(step > T::zero()) || !(horizon > T::zero()) {
            return Err(Error::Config("horizon and time step must be positive".into()));
        }
        let n = divide_exactly(horizon, step)
            .ok_or_else(|| Error::Config(format!("step {:e} does not divide horizon {:e}", step.as_f64(), horizon.as_f64())))?;
        Ok(Self { step, n_steps: n })
    }

    /// Grid with `n_steps` equal steps on `[0, horizon]`.
    pub fn with_steps(horizon: T, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || !(horizon > T::zero()) {
            return Err(Error::Config("grid needs a positive horizon and at least one step".into()));
        }
        Ok(Self { step: horizon / T::from_count(n_steps), n_steps })
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> T {
        self.time(self.n_steps)
    }

    pub fn time(&self, index: usize) -> T {
        self.step * T::from_count(index)
    }

    /// Index of a grid-aligned time.
    pub fn index_of(&self, t: T) -> Result<usize> {
        match divide_exactly(t, self.step) {
            Some(k) if k <= self.n_steps => Ok(k),
            Some(k) => Err(Error::IndexOutOfRange { index: k, limit: self.n_steps }),
            None if t == T::zero() => Ok(0),
            None => Err(Error::Domain(format!("time {:e} is not on the grid", t.as_f64()))),
        }
    }

    /// Largest `k` with `τ_k <= t` and the remainder `t - τ_k`, for `t ∈ [0, T]`.
    pub fn locate(&self, t: T) -> Result<(usize, T)> {
        let slack = self.step * T::lit(1e-9);
        if t < -slack || t > self.horizon() + slack {
            return Err(Error::Domain(format!("time {:e} outside [0, {:e}]", t.as_f64(), self.horizon().as_f64())));
        }
        if let Ok(k) = self.index_of(t) {
            return Ok((k, T::zero()));
        }
        let k = (t / self.step).floor().to_usize().unwrap_or(0).min(self.n_steps);
        Ok((k, t - self.time(k)))
    }
}

/// `Some(k)` when `x = k·step` up to a relative `1e-9` of the step.
pub(crate) fn divide_exactly<T: Real>(x: T, step: T) -> Option<usize> {
    if x < T::zero() {
        return None;
    }
    let ratio = x / step;
    let k = ratio.round();
    if (ratio - k).abs() <= T::lit(1e-9) * T::one().max(k) {
        k.to_usize()
    } else {
        None
    }
}

/// Trajectory sampled on `[-q, T]` with step `Δt`.
///
/// `history[j]` sits at `-q + jΔt` for `j < q/Δt`; `history_end` is the left
/// limit `φ(0)` at `0⁻`, which may differ from `states[0] = x(0)` when the
/// nonlocal initial map is nonzero. `states[k]` is `x(kΔt)`; at an impulse
/// time `t_i` it is the left limit `x(t_i⁻)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory<T: Real> {
    step: T,
    history: Vec<SpectralField<T>>,
    history_end: SpectralField<T>,
    states: Vec<SpectralField<T>>,
}

impl<T: Real> PiecewiseTrajectory<T> {
    pub fn new(
        step: T,
        history: Vec<SpectralField<T>>,
        history_end: SpectralField<T>,
        states: Vec<SpectralField<T>>,
    ) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::Domain("trajectory needs a nonempty history".into()));
        }
        if !(step > T::zero()) {
            return Err(Error::Domain("trajectory step must be positive".into()));
        }
        let n = history_end.n_modes();
        let found = history.iter().chain(&states).find(|f| f.n_modes() != n);
        if let Some(f) = found {
            return Err(Error::Dimension { expected: 2 * n + 1, found: 2 * f.n_modes() + 1 });
        }
        Ok(Self { step, history, history_end, states })
    }

    /// Samples `φ(-q + jΔt)` for `j = 0..q/Δt` plus `φ(0)` of a history closure.
    pub fn sample_history(
        delay: T,
        step: T,
        mut phi: impl FnMut(T) -> SpectralField<T>,
    ) -> Result<(Vec<SpectralField<T>>, SpectralField<T>)> {
        let kq = divide_exactly(delay, step)
            .filter(|k| *k > 0)
            .ok_or_else(|| Error::Config("time step must divide the delay".into()))?;
        let history = (0..kq).map(|j| phi(step * T::from_int(j as i64 - kq as i64))).collect();
        Ok((history, phi(T::zero())))
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn delay(&self) -> T {
        self.step * T::from_count(self.history.len())
    }

    pub fn horizon(&self) -> T {
        self.step * T::from_count(self.states.len().saturating_sub(1))
    }

    pub fn n_modes(&self) -> usize {
        self.history_end.n_modes()
    }

    pub fn history(&self) -> &[SpectralField<T>] {
        &self.history
    }

    pub fn history_end(&self) -> &SpectralField<T> {
        &self.history_end
    }

    pub fn states(&self) -> &[SpectralField<T>] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [SpectralField<T>] {
        &mut self.states
    }

    pub fn into_states(self) -> Vec<SpectralField<T>> {
        self.states
    }

    /// Grid index of a grid-aligned time in `[0, T]`.
    pub fn index_of(&self, t: T) -> Result<usize> {
        match divide_exactly(t, self.step) {
            Some(k) if k < self.states.len() => Ok(k),
            Some(k) => Err(Error::IndexOutOfRange { index: k, limit: self.states.len().saturating_sub(1) }),
            None => Err(Error::Domain(format!("time {:e} is not a grid point in [0, T]", t.as_f64()))),
        }
    }

    /// Sample at signed grid index `k` (`-q/Δt <= k <= K`), taking `x(0)` at `k = 0`.
    fn at_signed(&self, k: i64) -> &SpectralField<T> {
        if k < 0 {
            &self.history[(k + self.history.len() as i64) as usize]
        } else {
            &self.states[k as usize]
        }
    }

    /// Left limit `x(τ_k⁻)`.
    pub fn left_limit(&self, k: usize) -> &SpectralField<T> {
        if k == 0 {
            &self.history_end
        } else {
            &self.states[k]
        }
    }

    /// `x(t)` for `t ∈ [-q, T]` by linear interpolation between grid samples.
    ///
    /// On `[-q, 0)` the history is interpolated towards `φ(0)`; from `0` on the
    /// states are used, so the jump at `0` is kept.
    pub fn value_at(&self, t: T) -> Result<SpectralField<T>> {
        let q = self.delay();
        let slack = self.step * T::lit(1e-9);
        if t < -q - slack || t > self.horizon() + slack {
            return Err(Error::Domain(format!("time {:e} outside [-q, T]", t.as_f64())));
        }
        let pos = (t + q) / self.step;
        let rounded = pos.round();
        let kq = self.history.len() as i64;
        if (pos - rounded).abs() <= T::lit(1e-9) * T::one().max(rounded) {
            let k = rounded.to_i64().unwrap_or(0) - kq;
            return Ok(self.at_signed(k).clone());
        }
        let j = pos.floor().to_i64().unwrap_or(0);
        let theta = pos - T::from_int(j);
        let k = j - kq;
        let lo = self.at_signed(k);
        let hi = if k + 1 == 0 { &self.history_end } else { self.at_signed(k + 1) };
        Ok(lo.lerp(hi, theta))
    }

    /// History window `x_t` on `[t - q, t)` for a grid-aligned `t ∈ [0, T]`.
    ///
    /// The final sample is the left limit `x(t⁻)`; at `t = 0` the window is the
    /// initial history `φ` itself.
    pub fn history_segment(&self, t: T) -> Result<HistorySegment<'_, T>> {
        let i = self.index_of(t)?;
        self.history_segment_at(i)
    }

    pub fn history_segment_at(&self, i: usize) -> Result<HistorySegment<'_, T>> {
        if i >= self.states.len() {
            return Err(Error::IndexOutOfRange { index: i, limit: self.states.len().saturating_sub(1) });
        }
        let kq = self.history.len() as i64;
        let mut samples: Vec<&SpectralField<T>> = (0..kq).map(|j| self.at_signed(i as i64 - kq + j)).collect();
        samples.push(self.left_limit(i));
        HistorySegment::new(samples, self.step)
    }

    /// The initial history `φ` on `[-q, 0]`.
    pub fn initial_history(&self) -> Result<HistorySegment<'_, T>> {
        let mut samples: Vec<&SpectralField<T>> = self.history.iter().collect();
        samples.push(&self.history_end);
        HistorySegment::new(samples, self.step)
    }

    /// `max_k ‖x(τ_k) - y(τ_k)‖` over `[0, T]`.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        if self.states.len() != other.states.len() {
            return Err(Error::Dimension { expected: self.states.len(), found: other.states.len() });
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .fold(T::zero(), |m, (a, b)| m.max((a - b).norm())))
    }
}
