//! Non-autonomous evolution operators `S(t,s)`, `C(t,s)` of
//! `y'' = A(t)y` with `A(t) = ∂_ξ² + b(t)∂_ξ` on the circle.
//!
//! On the mode `e^{inξ}` the operator acts as `-n² + inb(t)`, so each mode
//! obeys the scalar ODE `h'' = (-n² + inb(t))h`. The table integrates the
//! fundamental pair anchored at `t = 0` once per mode and obtains any other
//! anchor by composition with the (constant) Wronskian. For `b` real the
//! mode `-n` is the complex conjugate of mode `n`, so only `n >= 0` is stored.

use log::warn;

use crate::error::{Error, Result};
use crate::quadrature::cumulative_piecewise;
use crate::scalar::{cabs, cplx, Cplx, Real};
use crate::spectral::{ModeBasis, SpectralField};
use crate::trajectory::TimeGrid;

/// Time-dependent coefficient `b(t)` of the first-order spatial term.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient<T> {
    Constant(T),
    /// `amplitude · cos(frequency · t + phase)`.
    Sinusoidal { amplitude: T, frequency: T, phase: T },
    /// Piecewise-linear interpolation of samples, constant beyond the ends.
    Tabulated { times: Vec<T>, values: Vec<T> },
}

impl<T: Real> Coefficient<T> {
    pub fn zero() -> Self {
        Coefficient::Constant(T::zero())
    }

    pub fn cosine(amplitude: T) -> Self {
        Coefficient::Sinusoidal { amplitude, frequency: T::one(), phase: T::zero() }
    }

    pub fn tabulated(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Config("tabulated coefficient needs matching, nonempty time and value lists".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("tabulated coefficient times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("tabulated coefficient values must be finite".into()));
        }
        Ok(Coefficient::Tabulated { times, values })
    }

    pub fn eval(&self, t: T) -> T {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Sinusoidal { amplitude, frequency, phase } => *amplitude * (*frequency * t + *phase).cos(),
            Coefficient::Tabulated { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[last] {
                    return values[last];
                }
                let j = times.partition_point(|x| *x <= t) - 1;
                let theta = (t - times[j]) / (times[j + 1] - times[j]);
                values[j] + (values[j + 1] - values[j]) * theta
            }
        }
    }

    /// `δ = max |b(τ_k)|` over the grid.
    pub fn sup_on(&self, grid: &TimeGrid<T>) -> T {
        (0..=grid.n_steps()).fold(T::zero(), |m, k| m.max(self.eval(grid.time(k)).abs()))
    }
}

/// Internal RK4 step bound required for stability of mode `n`.
pub fn stability_limit<T: Real>(n: i64) -> T {
    T::lit(1e-3).min(T::lit(0.1) / T::from_int(n.abs().max(1)))
}

// Internal step used by default: keeps the accumulated RK4 phase error of the
// fastest mode near 1e-10 over a horizon of 2π.
fn accuracy_limit<T: Real>(n: i64) -> T {
    T::lit(1e-3).min(T::lit(0.004) / T::from_int(n.abs().max(1)))
}

fn default_substeps<T: Real>(step: T, n: i64) -> usize {
    let ratio = step / accuracy_limit::<T>(n);
    (ratio - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1)
}

type State<T> = [Cplx<T>; 2];

#[inline]
fn rhs<T: Real>(n: T, b: &Coefficient<T>, t: T, y: State<T>) -> State<T> {
    let a = cplx(-n * n, n * b.eval(t));
    [y[1], a * y[0]]
}

fn rk4<T: Real>(n: T, b: &Coefficient<T>, t: T, h: T, y: State<T>) -> State<T> {
    let half = h * T::lit(0.5);
    let k1 = rhs(n, b, t, y);
    let k2 = rhs(n, b, t + half, [y[0] + k1[0] * half, y[1] + k1[1] * half]);
    let k3 = rhs(n, b, t + half, [y[0] + k2[0] * half, y[1] + k2[1] * half]);
    let k4 = rhs(n, b, t + h, [y[0] + k3[0] * h, y[1] + k3[1] * h]);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    [
        y[0] + (k1[0] + k2[0] * two + k3[0] * two + k4[0]) * sixth,
        y[1] + (k1[1] + k2[1] * two + k3[1] * two + k4[1]) * sixth,
    ]
}

// Advances `y` from `t0` by `span` in `substeps` equal RK4 steps.
fn advance<T: Real>(n: T, b: &Coefficient<T>, t0: T, span: T, substeps: usize, mut y: State<T>) -> State<T> {
    let h = span / T::from_count(substeps);
    for j in 0..substeps {
        y = rk4(n, b, t0 + h * T::from_count(j), h, y);
    }
    y
}

/// Samples of one mode solution on the grid points `τ_k >= s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSolution<T> {
    /// Grid index of the anchor `s`.
    pub start_index: usize,
    pub h: Vec<Cplx<T>>,
    pub dh: Vec<Cplx<T>>,
}

/// Classical RK4 for `h'' = (-n² + inb(t))h` from the anchor `s` with data
/// `(h(s), h'(s))`, sampled on every grid point from `s` to `T`.
///
/// `substeps` RK4 steps are taken per grid step; the default keeps the
/// internal step below `min(1e-3, 0.004/max(1,|n|))`.
pub fn solve_mode_ivp<T: Real>(
    n: i64,
    b: &Coefficient<T>,
    anchor: T,
    init: (Cplx<T>, Cplx<T>),
    grid: &TimeGrid<T>,
    substeps: Option<usize>,
) -> Result<ModeSolution<T>> {
    let start = grid.index_of(anchor)?;
    let m = substeps.unwrap_or_else(|| default_substeps(grid.step(), n)).max(1);
    let internal = grid.step() / T::from_count(m);
    let limit = stability_limit::<T>(n);
    if internal > limit * (T::one() + T::lit(1e-9)) {
        return Err(Error::StepTooLarge { mode: n, step: internal.as_f64(), limit: limit.as_f64() });
    }
    let nf = T::from_int(n);
    let len = grid.n_steps() - start + 1;
    let mut h = Vec::with_capacity(len);
    let mut dh = Vec::with_capacity(len);
    let mut y = [init.0, init.1];
    h.push(y[0]);
    dh.push(y[1]);
    for k in start..grid.n_steps() {
        y = advance(nf, b, grid.time(k), grid.step(), m, y);
        h.push(y[0]);
        dh.push(y[1]);
    }
    Ok(ModeSolution { start_index: start, h, dh })
}

/// `C(t,s)`, `S(t,s)` and their `t`-derivatives for one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalPair<T> {
    pub c: Cplx<T>,
    pub s: Cplx<T>,
    pub dc: Cplx<T>,
    pub ds: Cplx<T>,
}

impl<T: Real> FundamentalPair<T> {
    fn conj(self) -> Self {
        Self { c: self.c.conj(), s: self.s.conj(), dc: self.dc.conj(), ds: self.ds.conj() }
    }
}

/// Fundamental solutions of one mode anchored at `t = 0`, plus their Wronskian.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeColumns<T> {
    pub c: Vec<Cplx<T>>,
    pub dc: Vec<Cplx<T>>,
    pub s: Vec<Cplx<T>>,
    pub ds: Vec<Cplx<T>>,
    /// `c·s' - s·c'`, identically one up to integration error.
    pub wronskian: Vec<Cplx<T>>,
}

#[derive(Debug, Clone, Copy)]
struct Sample<T> {
    c: Cplx<T>,
    dc: Cplx<T>,
    s: Cplx<T>,
    ds: Cplx<T>,
    w: Cplx<T>,
}

impl<T: Real> ModeColumns<T> {
    fn sample(&self, k: usize) -> Sample<T> {
        Sample { c: self.c[k], dc: self.dc[k], s: self.s[k], ds: self.ds[k], w: self.wronskian[k] }
    }
}

// The pair anchored at `a`, evaluated where the anchor-0 columns are `x`.
#[inline]
fn compose<T: Real>(x: &Sample<T>, a: &Sample<T>) -> FundamentalPair<T> {
    FundamentalPair {
        c: (x.c * a.ds - x.s * a.dc) / a.w,
        s: (x.s * a.c - x.c * a.s) / a.w,
        dc: (x.dc * a.ds - x.ds * a.dc) / a.w,
        ds: (x.ds * a.c - x.dc * a.s) / a.w,
    }
}

/// Computed operator bounds over the sampled anchors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorBounds<T> {
    /// `M = max ‖C(t,s)‖`.
    pub cosine: T,
    /// `M̃ = max ‖S(t,s)‖`.
    pub sine: T,
    /// Finite-difference estimate of the Lipschitz constant of `t ↦ S(t,s)`.
    pub lipschitz: T,
    /// `δ = sup |b|`.
    pub delta: T,
}

/// Per-mode fundamental pairs on a time grid; realizes `C(t,s)` and `S(t,s)`.
#[derive(Debug, Clone)]
pub struct EvolutionTable<T: Real> {
    grid: TimeGrid<T>,
    n_modes: usize,
    coefficient: Coefficient<T>,
    modes: Vec<ModeColumns<T>>,
    substeps: Vec<usize>,
    bounds: OperatorBounds<T>,
}

/// Builds the table for every mode of `basis` on `grid`.
pub fn build_evolution_table<T: Real>(
    basis: &ModeBasis<T>,
    b: Coefficient<T>,
    grid: TimeGrid<T>,
) -> Result<EvolutionTable<T>> {
    EvolutionTable::build(basis.n_modes(), b, grid, None)
}

impl<T: Real> EvolutionTable<T> {
    /// `substeps` overrides the per-mode default number of RK4 steps per grid step.
    pub fn build(n_modes: usize, b: Coefficient<T>, grid: TimeGrid<T>, substeps: Option<usize>) -> Result<Self> {
        let mut modes = Vec::with_capacity(n_modes + 1);
        let mut steps = Vec::with_capacity(n_modes + 1);
        let one = cplx(T::one(), T::zero());
        let zero = cplx(T::zero(), T::zero());
        for n in 0..=n_modes as i64 {
            let m = substeps.unwrap_or_else(|| default_substeps(grid.step(), n));
            let cs = solve_mode_ivp(n, &b, T::zero(), (one, zero), &grid, Some(m))?;
            let ss = solve_mode_ivp(n, &b, T::zero(), (zero, one), &grid, Some(m))?;
            let wronskian = (0..cs.h.len()).map(|k| cs.h[k] * ss.dh[k] - ss.h[k] * cs.dh[k]).collect();
            modes.push(ModeColumns { c: cs.h, dc: cs.dh, s: ss.h, ds: ss.dh, wronskian });
            steps.push(m);
        }
        let delta = b.sup_on(&grid);
        let mut table = Self {
            grid,
            n_modes,
            coefficient: b,
            modes,
            substeps: steps,
            bounds: OperatorBounds { cosine: T::zero(), sine: T::zero(), lipschitz: T::zero(), delta },
        };
        table.bounds = table.sample_bounds();
        Ok(table)
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn coefficient(&self) -> &Coefficient<T> {
        &self.coefficient
    }

    pub fn bounds(&self) -> OperatorBounds<T> {
        self.bounds
    }

    /// Anchor-0 columns of mode `|n|`.
    pub fn columns(&self, n_abs: usize) -> &ModeColumns<T> {
        &self.modes[n_abs]
    }

    /// Running Duhamel integrals `∫_{τ_a}^{τ_k} s_n(τ_k, σ) g(σ) dσ` for
    /// `k = a, …, a + g.len() - 1`, where `g[j]` is sampled at `τ_{a+j}`.
    ///
    /// Uses `s_n(t,σ) = (s(t)c(σ) - c(t)s(σ))/W(σ)` so the whole sweep costs one
    /// pair of cumulative quadratures per mode.
    pub fn duhamel(&self, n: i64, start: usize, g: &[Cplx<T>]) -> Vec<Cplx<T>> {
        self.duhamel_piecewise(n, start, g, &[])
    }

    /// [`Self::duhamel`] for a forcing with jumps: `g[j]` is the left value and
    /// `(j, right)` the value used to the right of local node `j`.
    pub fn duhamel_piecewise(&self, n: i64, start: usize, g: &[Cplx<T>], jumps: &[(usize, Cplx<T>)]) -> Vec<Cplx<T>> {
        let cols = &self.modes[n.unsigned_abs() as usize];
        let pick = |v: Cplx<T>| if n < 0 { v.conj() } else { v };
        let fa = |k: usize| -pick(cols.s[k]) / pick(cols.wronskian[k]);
        let fb = |k: usize| pick(cols.c[k]) / pick(cols.wronskian[k]);
        let a: Vec<_> = g.iter().enumerate().map(|(j, gj)| fa(start + j) * *gj).collect();
        let b: Vec<_> = g.iter().enumerate().map(|(j, gj)| fb(start + j) * *gj).collect();
        let ja: Vec<_> = jumps.iter().map(|&(j, r)| (j, fa(start + j) * r)).collect();
        let jb: Vec<_> = jumps.iter().map(|&(j, r)| (j, fb(start + j) * r)).collect();
        let ia = cumulative_piecewise(&a, &ja, self.grid.step());
        let ib = cumulative_piecewise(&b, &jb, self.grid.step());
        (0..g.len())
            .map(|j| {
                let k = start + j;
                pick(cols.c[k]) * ia[j] + pick(cols.s[k]) * ib[j]
            })
            .collect()
    }

    /// Sample anchors used for the operator bounds and diagnostics.
    pub fn sample_anchors(&self) -> Vec<usize> {
        let k = self.grid.n_steps();
        let count = 64.min(k + 1);
        let mut v: Vec<usize> = (0..count)
            .map(|l| if count == 1 { 0 } else { (l * k + (count - 1) / 2) / (count - 1) })
            .collect();
        v.dedup();
        v
    }

    fn sample_bounds(&self) -> OperatorBounds<T> {
        let mut bounds = self.bounds;
        let k_max = self.grid.n_steps();
        for cols in &self.modes {
            for &j in &self.sample_anchors() {
                let a = cols.sample(j);
                let mut prev: Option<Cplx<T>> = None;
                for i in j..=k_max {
                    let p = compose(&cols.sample(i), &a);
                    bounds.cosine = bounds.cosine.max(cabs(p.c));
                    bounds.sine = bounds.sine.max(cabs(p.s));
                    if let Some(s_prev) = prev {
                        bounds.lipschitz = bounds.lipschitz.max(cabs(p.s - s_prev) / self.grid.step());
                    }
                    prev = Some(p.s);
                }
            }
        }
        bounds
    }

    /// Anchor-0 columns of mode `|n|` at any `t ∈ [0, T]`; off-grid times are
    /// reached by RK4 continuation from the preceding grid node.
    fn sample_at(&self, n_abs: usize, t: T) -> Result<Sample<T>> {
        let (k, r) = self.grid.locate(t)?;
        let cols = &self.modes[n_abs];
        let base = cols.sample(k);
        if r == T::zero() {
            return Ok(base);
        }
        let internal = self.grid.step() / T::from_count(self.substeps[n_abs]);
        let m = (r / internal).ceil().to_usize().unwrap_or(1).max(1);
        let nf = T::from_count(n_abs);
        let t0 = self.grid.time(k);
        let yc = advance(nf, &self.coefficient, t0, r, m, [base.c, base.dc]);
        let ys = advance(nf, &self.coefficient, t0, r, m, [base.s, base.ds]);
        Ok(Sample { c: yc[0], dc: yc[1], s: ys[0], ds: ys[1], w: yc[0] * ys[1] - ys[0] * yc[1] })
    }

    /// Fundamental pair of mode `n` on grid indices, without ordering checks.
    pub fn pair_at(&self, n: i64, t_index: usize, s_index: usize) -> FundamentalPair<T> {
        let cols = &self.modes[n.unsigned_abs() as usize];
        let p = compose(&cols.sample(t_index), &cols.sample(s_index));
        if n < 0 {
            p.conj()
        } else {
            p
        }
    }

    /// Fundamental pair of mode `n` at arbitrary `t, s ∈ [0, T]` (any order).
    pub fn pair(&self, n: i64, t: T, s: T) -> Result<FundamentalPair<T>> {
        let n_abs = n.unsigned_abs() as usize;
        if n_abs > self.n_modes {
            return Err(Error::IndexOutOfRange { index: n_abs, limit: self.n_modes });
        }
        let x = self.sample_at(n_abs, t)?;
        let a = self.sample_at(n_abs, s)?;
        let p = compose(&x, &a);
        Ok(if n < 0 { p.conj() } else { p })
    }

    fn check_order(&self, t: T, s: T) -> Result<()> {
        if t < s - self.grid.step() * T::lit(1e-9) {
            return Err(Error::Domain(format!("evolution needs s <= t (t = {:e}, s = {:e})", t.as_f64(), s.as_f64())));
        }
        Ok(())
    }

    fn check_field(&self, w: &SpectralField<T>) -> Result<()> {
        if w.n_modes() != self.n_modes {
            return Err(Error::Dimension { expected: 2 * self.n_modes + 1, found: 2 * w.n_modes() + 1 });
        }
        Ok(())
    }

    /// Per-mode multipliers `pick(pair_n(t,s))` for `n = 0..=N`.
    fn multipliers(&self, t: T, s: T, pick: impl Fn(&FundamentalPair<T>) -> Cplx<T>) -> Result<Vec<Cplx<T>>> {
        let on_grid = self.grid.index_of(t).ok().zip(self.grid.index_of(s).ok());
        (0..=self.n_modes)
            .map(|n| {
                let p = match on_grid {
                    Some((i, j)) => self.pair_at(n as i64, i, j),
                    None => self.pair(n as i64, t, s)?,
                };
                Ok(pick(&p))
            })
            .collect()
    }

    fn apply_diag(&self, w: &SpectralField<T>, d: &[Cplx<T>], adjoint: bool) -> SpectralField<T> {
        w.map_modes(true, |n| {
            let v = d[n.unsigned_abs() as usize];
            // the multiplier of mode -n is the conjugate of that of mode n
            let v = if n < 0 { v.conj() } else { v };
            if adjoint {
                v.conj()
            } else {
                v
            }
        })
    }

    /// `S(t,s)w`, mode-diagonal.
    pub fn apply_s(&self, t: T, s: T, w: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.check_order(t, s)?;
        self.check_field(w)?;
        let d = self.multipliers(t, s, |p| p.s)?;
        Ok(self.apply_diag(w, &d, false))
    }

    /// `C(t,s)v`, mode-diagonal.
    pub fn apply_c(&self, t: T, s: T, v: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.check_order(t, s)?;
        self.check_field(v)?;
        let d = self.multipliers(t, s, |p| p.c)?;
        Ok(self.apply_diag(v, &d, false))
    }

    /// `S(t,s)*x`: multiplication by `conj(s_n(t,s))`.
    pub fn apply_s_adjoint(&self, t: T, s: T, x: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.check_order(t, s)?;
        self.check_field(x)?;
        let d = self.multipliers(t, s, |p| p.s)?;
        Ok(self.apply_diag(x, &d, true))
    }
}

/// Samples of `|s_n(t, s)| ≤ e^{δ(t-s)}/|n|` for every mode `n ≠ 0`, every
/// sampled anchor `s` and every grid time `t ≥ s`: `(checked, violated)`.
pub fn growth_bound_violations<T: Real>(table: &EvolutionTable<T>, slack: T) -> (usize, usize) {
    let grid = table.grid;
    let delta = table.bounds.delta;
    let mut checked = 0;
    let mut violated = 0;
    for n in 1..=table.n_modes as i64 {
        for &j in &table.sample_anchors() {
            for i in j..=grid.n_steps() {
                let bound = (delta * (grid.time(i) - grid.time(j))).exp() / T::from_int(n);
                checked += 1;
                if cabs(table.pair_at(n, i, j).s) > bound + slack {
                    violated += 1;
                }
            }
        }
    }
    (checked, violated)
}

/// Autonomous cosine family on mode `n`: `cos(nτ)`.
pub fn autonomous_cosine<T: Real>(n: i64, tau: T) -> T {
    (T::from_int(n) * tau).cos()
}

/// Autonomous sine family on mode `n`: `sin(nτ)/n`, and `τ` for `n = 0`.
pub fn autonomous_sine<T: Real>(n: i64, tau: T) -> T {
    if n == 0 {
        tau
    } else {
        let nf = T::from_int(n);
        (nf * tau).sin() / nf
    }
}

/// Residuals of the evolution-operator axioms, sampled over the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomReport<T> {
    /// `max ‖S(t,t)‖` over all grid points.
    pub s_diagonal: T,
    /// `max |s_n(s+ε,s)/ε - 1|`.
    pub forward_quotient: T,
    /// `max |-s_n(s,s-ε)/ε + 1|`, the `s`-derivative at `t = s` against `-I`.
    pub backward_quotient: T,
    /// `max |c_n(t,s) + ∂_s s_n(t,s)|` by central differences in `s`.
    pub cosine_identity: T,
    /// `max |∂_t² s_n - (-n² + inb(t)) s_n|` by a fourth-order stencil.
    pub ode_residual: T,
    /// Difference-quotient Lipschitz estimate of `t ↦ S(t,s)`.
    pub lipschitz: T,
    /// `M̃ · max(1, N) · e^{δT}`, reported for comparison only.
    pub lipschitz_heuristic: T,
    pub epsilon: T,
}

/// Checks the evolution-operator axioms with the default `ε = 1e-4`.
pub fn check_evolution_axioms<T: Real>(table: &EvolutionTable<T>) -> AxiomReport<T> {
    check_evolution_axioms_with(table, T::lit(1e-4))
}

pub fn check_evolution_axioms_with<T: Real>(table: &EvolutionTable<T>, epsilon: T) -> AxiomReport<T> {
    let grid = table.grid;
    let k_max = grid.n_steps();
    let horizon = grid.horizon();
    let anchors = table.sample_anchors();
    let nm = table.n_modes as i64;
    let mut r = AxiomReport {
        s_diagonal: T::zero(),
        forward_quotient: T::zero(),
        backward_quotient: T::zero(),
        cosine_identity: T::zero(),
        ode_residual: T::zero(),
        lipschitz: table.bounds.lipschitz,
        lipschitz_heuristic: table.bounds.sine
            * T::from_count(table.n_modes.max(1))
            * (table.bounds.delta * horizon).exp(),
        epsilon,
    };
    for n in 0..=nm {
        for k in 0..=k_max {
            r.s_diagonal = r.s_diagonal.max(cabs(table.pair_at(n, k, k).s));
        }
    }
    let one = cplx(T::one(), T::zero());
    let h = grid.step();
    let stencil = T::lit(12.0) * h * h;
    for n in -nm..=nm {
        let nf = T::from_int(n);
        for &j in &anchors {
            let s = grid.time(j);
            if s + epsilon <= horizon {
                if let Ok(p) = table.pair(n, s + epsilon, s) {
                    r.forward_quotient = r.forward_quotient.max(cabs(p.s / epsilon - one));
                }
            }
            if s - epsilon >= T::zero() {
                if let Ok(p) = table.pair(n, s, s - epsilon) {
                    r.backward_quotient = r.backward_quotient.max(cabs(-p.s / epsilon + one));
                }
            }
            // C = -∂_s S at a few later times
            if s - epsilon >= T::zero() && s + epsilon <= horizon {
                for frac in [0.25, 0.5, 1.0] {
                    let t = s + (horizon - s) * T::lit(frac);
                    if t < s + epsilon {
                        continue;
                    }
                    if let (Ok(plus), Ok(minus), Ok(mid)) =
                        (table.pair(n, t, s + epsilon), table.pair(n, t, s - epsilon), table.pair(n, t, s))
                    {
                        let ds = (plus.s - minus.s) / (epsilon * T::lit(2.0));
                        r.cosine_identity = r.cosine_identity.max(cabs(mid.c + ds));
                    }
                }
            }
            if k_max >= j + 4 {
                for i in j + 2..=k_max - 2 {
                    let f = |m: usize| table.pair_at(n, m, j).s;
                    let d2 = (-f(i - 2) + f(i - 1) * T::lit(16.0) - f(i) * T::lit(30.0) + f(i + 1) * T::lit(16.0)
                        - f(i + 2))
                        / stencil;
                    let a = cplx(-nf * nf, nf * table.coefficient.eval(grid.time(i)));
                    r.ode_residual = r.ode_residual.max(cabs(d2 - a * f(i)));
                }
            }
        }
    }
    if !(r.lipschitz <= r.lipschitz_heuristic) {
        warn!(
            "Lipschitz estimate {:e} exceeds heuristic bound {:e}",
            r.lipschitz.as_f64(),
            r.lipschitz_heuristic.as_f64()
        );
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c1(re: f64) -> Cplx<f64> {
        cplx(re, 0.0)
    }

    #[test]
    fn mode_one_reproduces_sine() {
        let grid = TimeGrid::new(2.0, 1e-3).unwrap();
        let sol = solve_mode_ivp(1, &Coefficient::zero(), 0.5, (c1(0.0), c1(1.0)), &grid, Some(1)).unwrap();
        assert_eq!(sol.start_index, 500);
        for (k, h) in sol.h.iter().enumerate() {
            let tau = k as f64 * 1e-3;
            assert!((h - c1(tau.sin())).norm() < 1e-8);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let sol = solve_mode_ivp(5, &Coefficient::cosine(0.3), 0.0, (c1(0.0), c1(0.0)), &grid, None).unwrap();
        assert!(sol.h.iter().chain(&sol.dh).all(|v| *v == c1(0.0)));
    }

    #[test]
    fn growth_bound_for_constant_coefficient() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let sol = solve_mode_ivp(2, &Coefficient::Constant(1.0), 0.0, (c1(0.0), c1(1.0)), &grid, None).unwrap();
        assert!(sol.h.last().unwrap().norm() <= 0.5 * 1f64.exp());
    }

    #[test]
    fn coarse_step_is_rejected() {
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let err = solve_mode_ivp(200, &Coefficient::zero(), 0.0, (c1(1.0), c1(0.0)), &grid, Some(1)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { mode: 200, .. }));
        assert!(solve_mode_ivp(200, &Coefficient::zero(), 0.0, (c1(1.0), c1(0.0)), &grid, None).is_ok());
    }

    #[test]
    fn autonomous_table_matches_closed_forms() {
        let grid = TimeGrid::with_steps(2.0, 2000).unwrap();
        let table = EvolutionTable::build(4, Coefficient::zero(), grid, None).unwrap();
        let mut err: f64 = 0.0;
        for n in -4..=4 {
            for &j in &[0usize, 700, 1500] {
                for i in (j..=2000).step_by(37) {
                    let tau = grid.time(i) - grid.time(j);
                    let p = table.pair_at(n, i, j);
                    err = err.max((p.c - c1(autonomous_cosine(n, tau))).norm());
                    err = err.max((p.s - c1(autonomous_sine(n, tau))).norm());
                }
            }
        }
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn mode_zero_is_linear() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let table = EvolutionTable::build(1, Coefficient::zero(), grid, None).unwrap();
        let p = table.pair(0, 0.8, 0.3).unwrap();
        assert!((p.c - c1(1.0)).norm() < 1e-12);
        assert!((p.s - c1(0.5)).norm() < 1e-12);
    }

    #[test]
    fn growth_bound_holds_for_cosine_coefficient() {
        let grid = TimeGrid::<f64>::new(2.0, 1e-3).unwrap();
        let table = EvolutionTable::build(3, Coefficient::cosine(0.3), grid, None).unwrap();
        let delta = table.bounds().delta;
        assert!((delta - 0.3).abs() < 1e-12);
        for &j in &table.sample_anchors() {
            for i in j..=grid.n_steps() {
                let p = table.pair_at(3, i, j);
                let bound = (delta * (grid.time(i) - grid.time(j))).exp() / 3.0;
                assert!(p.s.norm() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_identities_are_exact() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let table = EvolutionTable::build(3, Coefficient::cosine(0.3), grid, None).unwrap();
        let w = SpectralField::from_fn(3, true, |n| cplx(1.0 / (1.0 + n as f64 * n as f64), 0.1 * n as f64)).unwrap();
        for t in [0.0, 0.3, 0.75, 1.0, 0.41234] {
            assert_eq!(table.apply_s(t, t, &w).unwrap().max_abs(), 0.0);
            assert_eq!(table.apply_c(t, t, &w).unwrap(), w);
            assert_eq!(table.apply_s_adjoint(t, t, &w).unwrap().max_abs(), 0.0);
        }
        assert!(matches!(table.apply_s(0.2, 0.5, &w), Err(Error::Domain(_))));
    }

    #[test]
    fn difference_quotient_at_anchor() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let table = EvolutionTable::build(2, Coefficient::zero(), grid, None).unwrap();
        let w = SpectralField::cosine(2, 1, 1.0).unwrap();
        let eps = 1e-4;
        let q = table.apply_s(0.5 + eps, 0.5, &w).unwrap().scale(1.0 / eps);
        assert!((&q - &w).max_abs() < 1e-6);
    }

    #[test]
    fn adjoint_is_real_symmetric_without_drift() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let table = EvolutionTable::build(2, Coefficient::zero(), grid, None).unwrap();
        let w = SpectralField::sine(2, 2, 0.7).unwrap();
        let a = table.apply_s(0.9, 0.2, &w).unwrap();
        let b = table.apply_s_adjoint(0.9, 0.2, &w).unwrap();
        assert!((&a - &b).max_abs() < 1e-12);
    }

    #[test]
    fn off_grid_continuation_is_accurate() {
        let grid = TimeGrid::new(PI, PI / 1000.0).unwrap();
        let table = EvolutionTable::build(3, Coefficient::zero(), grid, None).unwrap();
        let p = table.pair(3, 1.2345, 0.321).unwrap();
        assert!((p.s - c1(autonomous_sine(3, 1.2345 - 0.321))).norm() < 1e-10);
        assert!((p.c - c1(autonomous_cosine(3, 1.2345 - 0.321))).norm() < 1e-10);
    }

    #[test]
    fn axioms_hold_for_autonomous_table() {
        let grid = TimeGrid::<f64>::new(1.0, 1e-3).unwrap();
        let table = EvolutionTable::build(4, Coefficient::zero(), grid, None).unwrap();
        let r = check_evolution_axioms(&table);
        assert_eq!(r.s_diagonal, 0.0);
        assert!(r.forward_quotient <= 1e-4);
        assert!(r.backward_quotient <= 1e-4);
        assert!(r.cosine_identity <= 1e-4);
        assert!(r.ode_residual <= 1e-4);
        assert!(r.lipschitz.is_finite());
    }

    #[test]
    fn duhamel_matches_closed_form_sine_integral() {
        let grid = TimeGrid::<f64>::new(2.0, 1e-3).unwrap();
        let table = EvolutionTable::build(2, Coefficient::zero(), grid, None).unwrap();
        let g = vec![c1(1.0); 1201];
        for n in [-2i64, -1, 0, 1, 2] {
            let v = table.duhamel(n, 300, &g);
            for (j, vj) in v.iter().enumerate().step_by(97) {
                let tau = j as f64 * 1e-3;
                let exact = if n == 0 { tau * tau / 2.0 } else { (1.0 - (n as f64 * tau).cos()) / (n * n) as f64 };
                assert!((vj - c1(exact)).norm() < 1e-11, "n = {n}, j = {j}");
            }
        }
    }

    #[test]
    fn tabulated_coefficient_interpolates() {
        let b = Coefficient::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(b.eval(0.5), 1.0);
        assert_eq!(b.eval(1.5), 1.0);
        assert_eq!(b.eval(3.0), 0.0);
        assert!(Coefficient::tabulated(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn adjoint_pairing(seed in prop::collection::vec(-1.0f64..1.0, 20), t in 0.3f64..1.0, s in 0.0f64..0.3) {
            let grid = TimeGrid::new(1.0, 1e-3).unwrap();
            let table = EvolutionTable::build(4, Coefficient::cosine(0.3), grid, Some(1)).unwrap();
            let w = SpectralField::from_fn(4, false, |n| cplx(seed[(n + 4) as usize], seed[(n + 9) as usize])).unwrap();
            let x = SpectralField::from_fn(4, false, |n| cplx(seed[(n + 10) as usize], seed[(n + 5) as usize])).unwrap();
            let lhs = table.apply_s(t, s, &w).unwrap().inner(&x);
            let rhs = w.inner(&table.apply_s_adjoint(t, s, &x).unwrap());
            prop_assert!((lhs - rhs).norm() <= 1e-10);
        }
    }
}
