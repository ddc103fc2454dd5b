//! Fourier-mode representation of 2π-periodic fields.
//!
//! A field `z` on `[0, 2π)` is stored through its coefficients on the modes
//! `-N..=N` with respect to the eigenfunctions `w_n(ξ) = e^{inξ}/(2π)`, so
//! that `z(ξ) = Σ c_n w_n(ξ)` and `c_n = ∫ z(ξ) e^{-inξ} dξ`. With this
//! normalisation `‖w_n‖² = 1/(2π)`; the L² inner product in coefficient
//! space is therefore a uniform rescaling of the Euclidean one, and every
//! adjoint is a plain conjugate transpose.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::{cabs, cis, creal, Cplx, Real};
use crate::trajectory::PiecewiseTrajectory;

/// Relative tolerance used when checking Hermitian symmetry of real fields.
pub(crate) fn symmetry_tol<T: Real>() -> T {
    T::default_epsilon() * T::lit(1e4)
}

/// Truncated Fourier basis together with its equispaced physical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis<T> {
    n_modes: usize,
    grid_size: usize,
    nodes: Vec<T>,
    // phases[n][k] = e^{i n ξ_k} for n = 0..=N
    phases: Vec<Vec<Cplx<T>>>,
}

impl<T: Real> ModeBasis<T> {
    /// Basis with the default grid `M = 4N + 1`.
    pub fn new(n_modes: usize) -> Result<Self> {
        Self::with_grid(n_modes, 4 * n_modes + 1)
    }

    pub fn with_grid(n_modes: usize, grid_size: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Config("mode count N must be positive".into()));
        }
        if grid_size < 4 * n_modes + 1 {
            return Err(Error::Config(format!(
                "grid size {grid_size} is below 4N + 1 = {}",
                4 * n_modes + 1
            )));
        }
        let h = T::two_pi() / T::from_count(grid_size);
        let nodes: Vec<T> = (0..grid_size).map(|k| h * T::from_count(k)).collect();
        let phases = (0..=n_modes)
            .map(|n| {
                nodes
                    .iter()
                    .map(|&xi| cis(T::from_count(n) * xi))
                    .collect()
            })
            .collect();
        Ok(Self { n_modes, grid_size, nodes, phases })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Number of coefficients, `2N + 1`.
    pub fn dim(&self) -> usize {
        2 * self.n_modes + 1
    }

    /// Physical grid points `ξ_k = 2πk/M`.
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Spatial quadrature weight `2π/M`.
    pub fn weight(&self) -> T {
        T::two_pi() / T::from_count(self.grid_size)
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let n = self.n_modes as i64;
        -n..=n
    }
}

/// Complex Fourier coefficients on the modes `-N..=N`.
///
/// Fields flagged `real` represent real-valued functions and always satisfy
/// `c_{-n} = conj(c_n)` exactly; the constructors enforce it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField<T: Real> {
    coeffs: DVector<Cplx<T>>,
    real: bool,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(n_modes: usize) -> Self {
        Self { coeffs: DVector::zeros(2 * n_modes + 1), real: true }
    }

    /// Wraps coefficients. With `real = true` the Hermitian symmetry is
    /// checked to a relative tolerance and then imposed exactly.
    pub fn from_coeffs(coeffs: DVector<Cplx<T>>, real: bool) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(Error::Dimension { expected: coeffs.len() + 1, found: coeffs.len() });
        }
        let field = Self { coeffs, real: false };
        if real {
            let defect = field.hermitian_defect();
            let scale = T::one() + field.max_abs();
            if defect > symmetry_tol::<T>() * scale {
                return Err(Error::SymmetryViolation { defect: defect.as_f64() });
            }
            Ok(field.symmetrized())
        } else {
            Ok(field)
        }
    }

    /// Builds a field from a per-mode closure; `real` as in [`Self::from_coeffs`].
    pub fn from_fn(n_modes: usize, real: bool, mut f: impl FnMut(i64) -> Cplx<T>) -> Result<Self> {
        let n = n_modes as i64;
        let coeffs = DVector::from_iterator(2 * n_modes + 1, (-n..=n).map(&mut f));
        Self::from_coeffs(coeffs, real)
    }

    /// Imposes Hermitian symmetry without checking. For results of operators
    /// that map real fields to real fields up to rounding.
    pub(crate) fn real_projected(coeffs: DVector<Cplx<T>>) -> Self {
        Self { coeffs, real: false }.symmetrized()
    }

    pub(crate) fn complex(coeffs: DVector<Cplx<T>>) -> Self {
        Self { coeffs, real: false }
    }

    /// The constant function `value`.
    pub fn constant(n_modes: usize, value: T) -> Self {
        let mut f = Self::zeros(n_modes);
        f.coeffs[n_modes] = creal(T::two_pi() * value);
        f
    }

    /// `amplitude · cos(kξ)`.
    pub fn cosine(n_modes: usize, k: usize, amplitude: T) -> Result<Self> {
        if k > n_modes {
            return Err(Error::IndexOutOfRange { index: k, limit: n_modes });
        }
        if k == 0 {
            return Ok(Self::constant(n_modes, amplitude));
        }
        let mut f = Self::zeros(n_modes);
        let c = creal(T::pi() * amplitude);
        f.coeffs[n_modes + k] = c;
        f.coeffs[n_modes - k] = c;
        Ok(f)
    }

    /// `amplitude · sin(kξ)`.
    pub fn sine(n_modes: usize, k: usize, amplitude: T) -> Result<Self> {
        if k > n_modes {
            return Err(Error::IndexOutOfRange { index: k, limit: n_modes });
        }
        let mut f = Self::zeros(n_modes);
        if k == 0 {
            return Ok(f);
        }
        let c = Cplx::new(T::zero(), -T::pi() * amplitude);
        f.coeffs[n_modes + k] = c;
        f.coeffs[n_modes - k] = c.conj();
        Ok(f)
    }

    pub fn n_modes(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeffs(&self) -> &DVector<Cplx<T>> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<Cplx<T>> {
        self.coeffs
    }

    /// Coefficient of mode `n`, `|n| <= N`.
    pub fn mode(&self, n: i64) -> Cplx<T> {
        self.coeffs[(n + self.n_modes() as i64) as usize]
    }

    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(cabs(*c)))
    }

    /// `max_n |c_{-n} - conj(c_n)|`.
    pub fn hermitian_defect(&self) -> T {
        let n = self.n_modes();
        (0..=n).fold(T::zero(), |m, k| {
            m.max(cabs(self.coeffs[n - k] - self.coeffs[n + k].conj()))
        })
    }

    fn symmetrized(mut self) -> Self {
        let n = self.n_modes();
        let half = T::lit(0.5);
        self.coeffs[n] = creal(self.coeffs[n].re);
        for k in 1..=n {
            let avg = (self.coeffs[n + k] + self.coeffs[n - k].conj()) * half;
            self.coeffs[n + k] = avg;
            self.coeffs[n - k] = avg.conj();
        }
        self.real = true;
        self
    }

    /// L² inner product `∫ x conj(y) dξ`.
    pub fn inner(&self, other: &Self) -> Cplx<T> {
        let s = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .fold(Cplx::new(T::zero(), T::zero()), |acc, (a, b)| acc + *a * b.conj());
        s / T::two_pi()
    }

    /// Real duality pairing `Re ⟨x, y⟩`.
    pub fn pairing(&self, other: &Self) -> T {
        self.inner(other).re
    }

    /// Discrete L² norm.
    pub fn norm(&self) -> T {
        let s = self.coeffs.iter().fold(T::zero(), |acc, c| acc + c.norm_sqr());
        (s / T::two_pi()).sqrt()
    }

    pub fn scale(&self, factor: T) -> Self {
        Self { coeffs: self.coeffs.map(|c| c * factor), real: self.real }
    }

    /// Multiplies each coefficient by `diag(n)`; the result is flagged real
    /// when `conjugate_symmetric` holds for the multipliers and the input is real.
    pub fn map_modes(&self, conjugate_symmetric: bool, mut diag: impl FnMut(i64) -> Cplx<T>) -> Self {
        let n = self.n_modes() as i64;
        let coeffs = DVector::from_iterator(
            self.coeffs.len(),
            (-n..=n).zip(self.coeffs.iter()).map(|(m, c)| *c * diag(m)),
        );
        if self.real && conjugate_symmetric {
            Self::real_projected(coeffs)
        } else {
            Self::complex(coeffs)
        }
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        Self {
            coeffs: &self.coeffs + other.coeffs.map(|c| c * a),
            real: self.real && other.real,
        }
    }

    /// Linear interpolation `(1 - θ) self + θ other`.
    pub fn lerp(&self, other: &Self, theta: T) -> Self {
        if theta == T::zero() {
            return self.clone();
        }
        self.scale(T::one() - theta).axpy(theta, other)
    }
}

impl<T: Real> Add for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn add(self, rhs: Self) -> SpectralField<T> {
        SpectralField { coeffs: &self.coeffs + &rhs.coeffs, real: self.real && rhs.real }
    }
}

impl<T: Real> Sub for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn sub(self, rhs: Self) -> SpectralField<T> {
        SpectralField { coeffs: &self.coeffs - &rhs.coeffs, real: self.real && rhs.real }
    }
}

impl<T: Real> Neg for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn neg(self) -> SpectralField<T> {
        SpectralField { coeffs: -&self.coeffs, real: self.real }
    }
}

impl<T: Real> Mul<T> for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn mul(self, rhs: T) -> SpectralField<T> {
        self.scale(rhs)
    }
}

/// Trapezoid-rule Fourier coefficients of a real grid function.
pub fn project_to_modes<T: Real>(grid_values: &[T], basis: &ModeBasis<T>) -> Result<SpectralField<T>> {
    if grid_values.len() != basis.grid_size() {
        return Err(Error::Dimension { expected: basis.grid_size(), found: grid_values.len() });
    }
    let n = basis.n_modes();
    let w = basis.weight();
    let mut coeffs = DVector::zeros(basis.dim());
    for m in 0..=n {
        let phases = &basis.phases[m];
        let mut acc = Cplx::new(T::zero(), T::zero());
        for (v, p) in grid_values.iter().zip(phases) {
            acc += p.conj() * *v;
        }
        coeffs[n + m] = acc * w;
    }
    coeffs[n] = creal(coeffs[n].re);
    for m in 1..=n {
        coeffs[n - m] = coeffs[n + m].conj();
    }
    Ok(SpectralField { coeffs, real: true })
}

/// Point values `Σ c_n w_n(ξ_k)` of a Hermitian-symmetric field.
pub fn evaluate_on_grid<T: Real>(field: &SpectralField<T>, basis: &ModeBasis<T>) -> Result<Vec<T>> {
    if field.n_modes() != basis.n_modes() {
        return Err(Error::Dimension { expected: basis.dim(), found: field.coeffs.len() });
    }
    if !field.is_real() {
        let defect = field.hermitian_defect();
        if defect > symmetry_tol::<T>() * (T::one() + field.max_abs()) {
            return Err(Error::SymmetryViolation { defect: defect.as_f64() });
        }
    }
    let n = basis.n_modes();
    let two = T::lit(2.0);
    let inv = T::one() / T::two_pi();
    let values = (0..basis.grid_size())
        .map(|k| {
            let mut acc = field.coeffs[n].re;
            for m in 1..=n {
                acc += two * (field.coeffs[n + m] * basis.phases[m][k]).re;
            }
            acc * inv
        })
        .collect();
    Ok(values)
}

/// `(∫ |v|^p dξ)^{1/p}` by the trapezoid rule on the physical grid.
pub fn lp_norm_grid<T: Real>(values: &[T], p: T) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let w = T::two_pi() / T::from_count(values.len());
    let s = values.iter().fold(T::zero(), |acc, v| acc + v.abs().powf(p));
    (s * w).powf(T::one() / p)
}

/// Point values of `J(x)(ξ) = ‖x‖_p^{2-p} |x(ξ)|^{p-2} x(ξ)` on the grid.
///
/// For `p = 2` this is just the field itself evaluated on the grid.
pub fn duality_map_grid<T: Real>(field: &SpectralField<T>, p: T, basis: &ModeBasis<T>) -> Result<Vec<T>> {
    if !(p >= T::lit(2.0)) {
        return Err(Error::UnsupportedExponent(p.as_f64()));
    }
    if p > T::lit(2.0) && !field.is_real() {
        return Err(Error::UnsupportedExponent(p.as_f64()));
    }
    let values = evaluate_on_grid(field, basis)?;
    if p == T::lit(2.0) {
        return Ok(values);
    }
    let norm = lp_norm_grid(&values, p);
    if norm == T::zero() {
        return Ok(values);
    }
    let two = T::lit(2.0);
    let scale = norm.powf(two - p);
    Ok(values
        .iter()
        .map(|&v| scale * v.abs().powf(p - two) * v)
        .collect())
}

/// Duality mapping of `L^p` restricted to the truncated mode space.
///
/// `p = 2` is the identity. For `p > 2` the pointwise map is applied on the
/// physical grid and projected back; the pairing `⟨x, J(x)⟩` then equals the
/// grid `‖x‖_p²` to rounding because `x` has no modes beyond `N`.
pub fn duality_map<T: Real>(field: &SpectralField<T>, p: T, basis: &ModeBasis<T>) -> Result<SpectralField<T>> {
    if !(p >= T::lit(2.0)) {
        return Err(Error::UnsupportedExponent(p.as_f64()));
    }
    if p == T::lit(2.0) {
        return Ok(field.clone());
    }
    let values = duality_map_grid(field, p, basis)?;
    project_to_modes(&values, basis)
}

/// Samples of a field-valued function on `[-q, 0]` at uniform offsets.
///
/// `samples[j]` sits at offset `-q + j·step`; the final sample is the left
/// limit at offset 0. The segment borrows its samples, so a history window of
/// a trajectory costs one pointer per sample.
#[derive(Debug, Clone)]
pub struct HistorySegment<'a, T: Real> {
    samples: Vec<&'a SpectralField<T>>,
    step: T,
}

impl<'a, T: Real> HistorySegment<'a, T> {
    pub fn new(samples: Vec<&'a SpectralField<T>>, step: T) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain("history segment needs at least two samples".into()));
        }
        if !(step > T::zero()) {
            return Err(Error::Domain("history step must be positive".into()));
        }
        Ok(Self { samples, step })
    }

    /// Delay length `q`.
    pub fn delay(&self) -> T {
        self.step * T::from_count(self.samples.len() - 1)
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn samples(&self) -> &[&'a SpectralField<T>] {
        &self.samples
    }

    /// Value at offset `s ∈ [-q, 0]` by linear interpolation (`s = 0` is the left limit).
    pub fn at_offset(&self, offset: T) -> Result<SpectralField<T>> {
        let q = self.delay();
        let slack = self.step * T::lit(1e-9);
        if offset < -q - slack || offset > slack {
            return Err(Error::Domain(format!(
                "offset {:e} outside [-{:e}, 0]",
                offset.as_f64(),
                q.as_f64()
            )));
        }
        let pos = ((offset + q) / self.step).max(T::zero());
        let last = self.samples.len() - 1;
        let j = pos.floor().to_usize().unwrap_or(0).min(last);
        let theta = pos - T::from_count(j);
        if j == last || theta <= slack / self.step {
            return Ok(self.samples[j].clone());
        }
        Ok(self.samples[j].lerp(self.samples[j + 1], theta))
    }
}

/// Mean history norm `(1/q) ∫_{-q}^0 ‖φ(s)‖ ds` (trapezoid rule).
pub fn d_norm<T: Real>(history: &HistorySegment<'_, T>) -> T {
    let norms: Vec<T> = history.samples.iter().map(|f| f.norm()).collect();
    crate::quadrature::trapezoid(&norms, history.step) / history.delay()
}

/// `(1/q) ∫_{-q}^0 ‖x(s)‖ ds + sup_{t ∈ [0,T]} ‖x(t)‖`.
pub fn pc_norm<T: Real>(trajectory: &PiecewiseTrajectory<T>) -> Result<T> {
    if trajectory.states().is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    let history = trajectory.initial_history()?;
    let sup = trajectory
        .states()
        .iter()
        .fold(T::zero(), |m, f| m.max(f.norm()));
    Ok(d_norm(&history) + sup)
}
