//! Control operator, interval Gramians, resolvent solves and the
//! regularized feedback controls built from them.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::evolution::EvolutionTable;
use crate::quadrature::composite_weights;
use crate::scalar::{cabs, cis, cplx, creal, Cplx, Real};
use crate::spectral::{duality_map, evaluate_on_grid, symmetry_tol, ModeBasis, SpectralField};

/// Integral kernel `K(ζ, ξ)` defining `(Bu)(ξ) = ∫ K(ζ, ξ) u(ζ) dζ`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelDescriptor<T> {
    /// `K(ξ, ζ) = 1 + ξ² + ζ²` on `[0, 2π)²`.
    Polynomial,
    /// `B w_n = κ_n w_n`. One gain for all modes, `N + 1` gains indexed by
    /// `|n|`, or `2N + 1` gains indexed by `n = -N..=N`.
    ModeDiagonal(Vec<T>),
    /// Samples `K(ξ_j, ζ_k)` on the physical grid; must be symmetric.
    Tabulated(DMatrix<T>),
}

/// Matrix of `B` in mode coordinates, `B_{mn} = ⟨B w_n, w_m⟩`-coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOperator<T: Real> {
    matrix: DMatrix<Cplx<T>>,
    descriptor: KernelDescriptor<T>,
    norm: T,
    preserves_real: bool,
}

fn mode_index(n: i64, n_modes: usize) -> usize {
    (n + n_modes as i64) as usize
}

/// `true` when `A_{-m,-n} = conj(A_{m,n})`, i.e. `A` maps real fields to real fields.
fn is_real_structured<T: Real>(a: &DMatrix<Cplx<T>>) -> bool {
    let d = a.nrows();
    let scale = T::one() + a.iter().fold(T::zero(), |m, v| m.max(cabs(*v)));
    let tol = symmetry_tol::<T>() * scale;
    (0..d).all(|i| (0..d).all(|j| cabs(a[(d - 1 - i, d - 1 - j)] - a[(i, j)].conj()) <= tol))
}

// Projects onto the real structure exactly.
fn real_structure<T: Real>(a: &DMatrix<Cplx<T>>) -> DMatrix<Cplx<T>> {
    let d = a.nrows();
    let half = T::lit(0.5);
    DMatrix::from_fn(d, a.ncols(), |i, j| (a[(i, j)] + a[(d - 1 - i, a.ncols() - 1 - j)].conj()) * half)
}

fn hermitian_part<T: Real>(a: &DMatrix<Cplx<T>>) -> DMatrix<Cplx<T>> {
    (a + a.adjoint()) * creal(T::lit(0.5))
}

fn largest_singular_value<T: Real>(a: &DMatrix<Cplx<T>>) -> T {
    a.clone().singular_values().iter().fold(T::zero(), |m, v| m.max(*v))
}

/// Builds the mode matrix of `B` by spatial trapezoid quadrature.
pub fn build_control_operator<T: Real>(
    descriptor: KernelDescriptor<T>,
    basis: &ModeBasis<T>,
) -> Result<ControlOperator<T>> {
    let n = basis.n_modes();
    let d = basis.dim();
    let m = basis.grid_size();
    let matrix = match &descriptor {
        KernelDescriptor::ModeDiagonal(gains) => {
            let gain = |k: i64| -> Result<T> {
                match gains.len() {
                    1 => Ok(gains[0]),
                    len if len == n + 1 => Ok(gains[k.unsigned_abs() as usize]),
                    len if len == d => Ok(gains[mode_index(k, n)]),
                    len => Err(Error::Config(format!("mode_diagonal needs 1, {} or {d} gains, got {len}", n + 1))),
                }
            };
            let mut mat = DMatrix::zeros(d, d);
            for k in basis.modes() {
                mat[(mode_index(k, n), mode_index(k, n))] = creal(gain(k)?);
            }
            mat
        }
        KernelDescriptor::Polynomial | KernelDescriptor::Tabulated(_) => {
            let samples = match &descriptor {
                KernelDescriptor::Tabulated(table) => {
                    if table.nrows() != m || table.ncols() != m {
                        return Err(Error::Dimension { expected: m, found: table.nrows() });
                    }
                    let scale = T::one() + table.amax();
                    let defect = (table - table.transpose()).amax();
                    if defect > symmetry_tol::<T>() * scale {
                        return Err(Error::SymmetryViolation { defect: defect.as_f64() });
                    }
                    table.clone()
                }
                _ => {
                    let x = basis.nodes();
                    DMatrix::from_fn(m, m, |j, k| T::one() + x[j] * x[j] + x[k] * x[k])
                }
            };
            // F[k, c] = e^{i n_c ζ_k}
            let f = DMatrix::from_fn(m, d, |k, c| cis(T::from_int(c as i64 - n as i64) * basis.nodes()[k]));
            // kt[j, k] = K(ζ_k, ξ_j)
            let kt = samples.transpose().map(creal);
            let scale = T::two_pi() / T::from_count(m * m);
            (f.adjoint() * kt * f) * creal(scale)
        }
    };
    let norm = largest_singular_value(&matrix);
    let preserves_real = is_real_structured(&matrix);
    let matrix = if preserves_real { real_structure(&matrix) } else { matrix };
    Ok(ControlOperator { matrix, descriptor, norm, preserves_real })
}

impl<T: Real> ControlOperator<T> {
    pub fn matrix(&self) -> &DMatrix<Cplx<T>> {
        &self.matrix
    }

    pub fn descriptor(&self) -> &KernelDescriptor<T> {
        &self.descriptor
    }

    /// `M_B`, the largest singular value.
    pub fn norm(&self) -> T {
        self.norm
    }

    pub fn n_modes(&self) -> usize {
        (self.matrix.nrows() - 1) / 2
    }

    pub fn preserves_real(&self) -> bool {
        self.preserves_real
    }

    fn wrap(&self, input_real: bool, coeffs: DVector<Cplx<T>>) -> SpectralField<T> {
        if input_real && self.preserves_real {
            SpectralField::real_projected(coeffs)
        } else {
            SpectralField::complex(coeffs)
        }
    }

    pub fn apply(&self, u: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.check(u)?;
        Ok(self.wrap(u.is_real(), &self.matrix * u.coeffs()))
    }

    pub fn apply_adjoint(&self, x: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.check(x)?;
        Ok(self.wrap(x.is_real(), self.matrix.ad_mul(x.coeffs())))
    }

    /// `BB*`.
    pub fn gram(&self) -> DMatrix<Cplx<T>> {
        &self.matrix * self.matrix.adjoint()
    }

    fn check(&self, u: &SpectralField<T>) -> Result<()> {
        if u.coeffs().len() != self.matrix.ncols() {
            return Err(Error::Dimension { expected: self.matrix.ncols(), found: u.coeffs().len() });
        }
        Ok(())
    }
}

/// Hermitian positive-semidefinite Gramian `∫_a^b S(b,t)BB*S(b,t)* dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gramian<T: Real> {
    matrix: DMatrix<Cplx<T>>,
    interval: (T, T),
    nodes: usize,
    preserves_real: bool,
}

impl<T: Real> Gramian<T> {
    /// Wraps a Hermitian matrix, which is then symmetrized exactly.
    pub fn from_matrix(matrix: DMatrix<Cplx<T>>, interval: (T, T), nodes: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows().is_multiple_of(2) {
            return Err(Error::Dimension { expected: matrix.nrows() | 1, found: matrix.ncols() });
        }
        let scale = T::one() + matrix.iter().fold(T::zero(), |m, v| m.max(cabs(*v)));
        let defect = (&matrix - matrix.adjoint()).iter().fold(T::zero(), |m, v| m.max(cabs(*v)));
        if defect > symmetry_tol::<T>() * scale {
            return Err(Error::SymmetryViolation { defect: defect.as_f64() });
        }
        let matrix = hermitian_part(&matrix);
        let preserves_real = is_real_structured(&matrix);
        let matrix = if preserves_real { real_structure(&matrix) } else { matrix };
        Ok(Self { matrix, interval, nodes, preserves_real })
    }

    pub fn matrix(&self) -> &DMatrix<Cplx<T>> {
        &self.matrix
    }

    pub fn interval(&self) -> (T, T) {
        self.interval
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn n_modes(&self) -> usize {
        (self.matrix.nrows() - 1) / 2
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut v: Vec<T> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        v
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().first().copied().unwrap_or(T::zero())
    }

    /// `⟨x, Ψx⟩` in the field inner product.
    pub fn quadratic_form(&self, x: &SpectralField<T>) -> T {
        let y = &self.matrix * x.coeffs();
        SpectralField::complex(y).inner(x).re
    }

    pub fn apply(&self, x: &SpectralField<T>) -> SpectralField<T> {
        let y = &self.matrix * x.coeffs();
        if x.is_real() && self.preserves_real {
            SpectralField::real_projected(y)
        } else {
            SpectralField::complex(y)
        }
    }
}

fn zero_gramian<T: Real>(d: usize, a: T, b: T, nodes: usize) -> Gramian<T> {
    warn!("degenerate Gramian interval [{:e}, {:e}]; returning zero", a.as_f64(), b.as_f64());
    Gramian { matrix: DMatrix::zeros(d, d), interval: (a, b), nodes, preserves_real: true }
}

// Σ_j w_j D_j Q D_j*, with D_j = diag(s_n(b, t_j)).
fn accumulate<T: Real>(
    q: &DMatrix<Cplx<T>>,
    weights: &[T],
    n_modes: usize,
    mut sine: impl FnMut(i64, usize) -> Result<Cplx<T>>,
) -> Result<DMatrix<Cplx<T>>> {
    let d = 2 * n_modes + 1;
    let nm = n_modes as i64;
    let mut psi = DMatrix::zeros(d, d);
    let mut s = vec![cplx(T::zero(), T::zero()); d];
    for (j, w) in weights.iter().enumerate() {
        if *w == T::zero() {
            continue;
        }
        for n in -nm..=nm {
            s[mode_index(n, n_modes)] = sine(n, j)?;
        }
        for c in 0..d {
            let sc = s[c].conj() * *w;
            for r in 0..d {
                psi[(r, c)] += s[r] * q[(r, c)] * sc;
            }
        }
    }
    Ok(psi)
}

fn check_interval<T: Real>(table: &EvolutionTable<T>, a: T, b: T) -> Result<()> {
    let horizon = table.grid().horizon();
    let slack = table.grid().step() * T::lit(1e-9);
    if a < -slack || b > horizon + slack || a > b {
        return Err(Error::Domain(format!(
            "Gramian interval [{:e}, {:e}] not within [0, {:e}]",
            a.as_f64(),
            b.as_f64(),
            horizon.as_f64()
        )));
    }
    Ok(())
}

/// Composite Simpson Gramian on `nodes` equal subintervals of `[a, b]`.
pub fn assemble_gramian<T: Real>(
    table: &EvolutionTable<T>,
    control: &ControlOperator<T>,
    a: T,
    b: T,
    nodes: usize,
) -> Result<Gramian<T>> {
    if nodes < 8 || !nodes.is_multiple_of(2) {
        return Err(Error::Config(format!("Gramian node count must be even and at least 8, got {nodes}")));
    }
    check_interval(table, a, b)?;
    let d = 2 * table.n_modes() + 1;
    if control.matrix().nrows() != d {
        return Err(Error::Dimension { expected: d, found: control.matrix().nrows() });
    }
    if a == b {
        return Ok(zero_gramian(d, a, b, nodes));
    }
    let h = (b - a) / T::from_count(nodes);
    let weights = composite_weights(nodes, h);
    let q = control.gram();
    let times: Vec<T> = (0..=nodes).map(|j| if j == nodes { b } else { a + h * T::from_count(j) }).collect();
    let psi = accumulate(&q, &weights, table.n_modes(), |n, j| Ok(table.pair(n, b, times[j])?.s))?;
    Gramian::from_matrix(hermitian_part(&psi), (a, b), nodes)
}

/// Gramian on the table's own time nodes `τ_a..=τ_b`, with the weights used by
/// the cumulative Duhamel integrals, so that control integrals and the Gramian
/// agree to rounding.
pub fn assemble_gramian_on_grid<T: Real>(
    table: &EvolutionTable<T>,
    control: &ControlOperator<T>,
    start: usize,
    end: usize,
) -> Result<Gramian<T>> {
    let grid = table.grid();
    if start > end || end > grid.n_steps() {
        return Err(Error::IndexOutOfRange { index: end, limit: grid.n_steps() });
    }
    let d = 2 * table.n_modes() + 1;
    if control.matrix().nrows() != d {
        return Err(Error::Dimension { expected: d, found: control.matrix().nrows() });
    }
    let (a, b) = (grid.time(start), grid.time(end));
    if start == end {
        return Ok(zero_gramian(d, a, b, 0));
    }
    let weights = composite_weights(end - start, grid.step());
    let q = control.gram();
    let psi = accumulate(&q, &weights, table.n_modes(), |n, j| Ok(table.pair_at(n, end, start + j).s))?;
    Gramian::from_matrix(hermitian_part(&psi), (a, b), end - start)
}

/// Options for the nonlinear resolvent branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventOptions<T> {
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for ResolventOptions<T> {
    fn default() -> Self {
        Self { tolerance: T::lit(1e-10), max_iterations: 10_000 }
    }
}

/// `‖λz + ΨJ[z] - λy‖`.
pub fn resolvent_residual<T: Real>(
    lambda: T,
    psi: &Gramian<T>,
    y: &SpectralField<T>,
    z: &SpectralField<T>,
    p: T,
    basis: &ModeBasis<T>,
) -> Result<T> {
    let jz = duality_map(z, p, basis)?;
    let r = z.coeffs() * creal(lambda) + psi.matrix() * jz.coeffs() - y.coeffs() * creal(lambda);
    Ok(SpectralField::complex(r).norm())
}

/// Solves `λz + ΨJ[z] = λy`, i.e. returns `z_λ(y) = λ(λI + ΨJ)^{-1}y`.
///
/// `p = 2` is a direct LU solve. For `p > 2` Newton steps with backtracking
/// start from the `p = 2` solution; a frozen-weight solve stands in when
/// backtracking stalls.
pub fn resolvent_solve<T: Real>(
    lambda: T,
    psi: &Gramian<T>,
    y: &SpectralField<T>,
    p: T,
    basis: &ModeBasis<T>,
) -> Result<SpectralField<T>> {
    resolvent_solve_with(lambda, psi, y, p, basis, ResolventOptions::default())
}

pub fn resolvent_solve_with<T: Real>(
    lambda: T,
    psi: &Gramian<T>,
    y: &SpectralField<T>,
    p: T,
    basis: &ModeBasis<T>,
    options: ResolventOptions<T>,
) -> Result<SpectralField<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::Domain(format!("λ must be positive, got {:e}", lambda.as_f64())));
    }
    let d = psi.matrix().nrows();
    if y.coeffs().len() != d {
        return Err(Error::Dimension { expected: d, found: y.coeffs().len() });
    }
    if !(p >= T::lit(2.0)) {
        return Err(Error::UnsupportedExponent(p.as_f64()));
    }
    let wrap = |c: DVector<Cplx<T>>| {
        if y.is_real() && psi.preserves_real {
            SpectralField::real_projected(c)
        } else {
            SpectralField::complex(c)
        }
    };
    let shifted = |w: &DMatrix<Cplx<T>>| -> Result<DVector<Cplx<T>>> {
        let mut a = psi.matrix() * w;
        for i in 0..d {
            a[(i, i)] += creal(lambda);
        }
        a.lu()
            .solve(&(y.coeffs() * creal(lambda)))
            .ok_or_else(|| Error::Domain("singular resolvent system".into()))
    };
    let linear = wrap(shifted(&DMatrix::identity(d, d))?);
    if p == T::lit(2.0) {
        return Ok(linear);
    }
    if !linear.is_real() {
        return Err(Error::UnsupportedExponent(p.as_f64()));
    }
    let target = options.tolerance * T::one().max(lambda * y.norm());
    let residual_vec = |z: &SpectralField<T>| -> Result<DVector<Cplx<T>>> {
        let jz = duality_map(z, p, basis)?;
        Ok(z.coeffs() * creal(lambda) + psi.matrix() * jz.coeffs() - y.coeffs() * creal(lambda))
    };
    let mut z = linear;
    let mut res = resolvent_residual(lambda, psi, y, &z, p, basis)?;
    let mut iterations = 0;
    while res > target {
        if iterations >= options.max_iterations {
            return Err(Error::IterationFailure { iterations, residual: res.as_f64() });
        }
        iterations += 1;
        // Newton step on F(z) = λz + ΨJ[z] - λy, halved until F shrinks
        let mut jac = psi.matrix() * duality_jacobian(&z, p, basis)?;
        for i in 0..d {
            jac[(i, i)] += creal(lambda);
        }
        let f = residual_vec(&z)?;
        let mut accepted = false;
        if let Some(delta) = jac.lu().solve(&f) {
            let mut theta = T::one();
            while theta > T::lit(1e-4) {
                let candidate = wrap(z.coeffs() - &delta * creal(theta));
                let cres = resolvent_residual(lambda, psi, y, &candidate, p, basis)?;
                if cres < res {
                    z = candidate;
                    res = cres;
                    accepted = true;
                    break;
                }
                theta *= T::lit(0.5);
            }
        }
        if !accepted {
            // frozen-weight step as a fallback; stop if it cannot improve either
            let candidate = wrap(shifted(&duality_weights(&z, p, basis)?)?);
            let cres = resolvent_residual(lambda, psi, y, &candidate, p, basis)?;
            if !(cres < res) {
                return Err(Error::IterationFailure { iterations, residual: res.as_f64() });
            }
            z = candidate;
            res = cres;
        }
    }
    Ok(z)
}

/// Derivative of the truncated duality map at `z`:
/// `(p-1)W(z) + (2-p)‖z‖^{2-2p} P(G) ⊗ r`, where `G = |z|^{p-2}z` on the grid,
/// `P` projects to modes and `r·h = ∫ G h`.
fn duality_jacobian<T: Real>(z: &SpectralField<T>, p: T, basis: &ModeBasis<T>) -> Result<DMatrix<Cplx<T>>> {
    let two = T::lit(2.0);
    let mut jac = duality_weights(z, p, basis)? * creal(p - T::one());
    let v = evaluate_on_grid(z, basis)?;
    let norm = crate::spectral::lp_norm_grid(&v, p);
    if norm == T::zero() {
        return Ok(jac);
    }
    let g: Vec<T> = v.iter().map(|x| x.abs().powf(p - two) * *x).collect();
    let col = crate::spectral::project_to_modes(&g, basis)?;
    let n = basis.n_modes() as i64;
    let inv_m = T::one() / T::from_count(basis.grid_size());
    let row: Vec<Cplx<T>> = (-n..=n)
        .map(|m| {
            g.iter().zip(basis.nodes()).fold(cplx(T::zero(), T::zero()), |acc, (gj, xj)| {
                acc + cis(T::from_int(m) * *xj) * *gj
            }) * inv_m
        })
        .collect();
    let scale = (two - p) * norm.powf(two - two * p);
    for r in 0..jac.nrows() {
        for c in 0..jac.ncols() {
            jac[(r, c)] += col.coeffs()[r] * row[c] * scale;
        }
    }
    Ok(jac)
}

/// Mode matrix of multiplication by `‖z‖_p^{2-p}|z(ξ)|^{p-2}`, so that
/// `J[z] = W(z) z` on the truncated space.
fn duality_weights<T: Real>(z: &SpectralField<T>, p: T, basis: &ModeBasis<T>) -> Result<DMatrix<Cplx<T>>> {
    let v = evaluate_on_grid(z, basis)?;
    let norm = crate::spectral::lp_norm_grid(&v, p);
    let d = basis.dim();
    if norm == T::zero() {
        return Ok(DMatrix::zeros(d, d));
    }
    let two = T::lit(2.0);
    let scale = norm.powf(two - p);
    let w: Vec<T> = v.iter().map(|x| scale * x.abs().powf(p - two)).collect();
    let n = basis.n_modes() as i64;
    let inv_m = T::one() / T::from_count(basis.grid_size());
    // hat[k] = (1/M) Σ_j w_j e^{i k ξ_j}, k = -2N..=2N
    let hat: Vec<Cplx<T>> = (-2 * n..=2 * n)
        .map(|k| {
            let s = w.iter().enumerate().fold(cplx(T::zero(), T::zero()), |acc, (j, wj)| {
                acc + cis(T::from_int(k) * basis.nodes()[j]) * *wj
            });
            s * inv_m
        })
        .collect();
    Ok(DMatrix::from_fn(d, d, |r, c| hat[(c as i64 - r as i64 + 2 * n) as usize]))
}

/// Regularized feedback on one control window: `u(t) = B*S*(b,t)v`, where
/// `v = J[R(λ,Ψ)g]` is fixed by the interval defect `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw<T: Real> {
    interval: (T, T),
    direction: SpectralField<T>,
}

impl<T: Real> FeedbackLaw<T> {
    pub fn new(
        lambda: T,
        psi: &Gramian<T>,
        defect: &SpectralField<T>,
        p: T,
        basis: &ModeBasis<T>,
    ) -> Result<Self> {
        let z = resolvent_solve(lambda, psi, defect, p, basis)?;
        let direction = duality_map(&z, p, basis)?.scale(T::one() / lambda);
        Ok(Self { interval: psi.interval(), direction })
    }

    /// `J[R(λ,Ψ)g]`.
    pub fn direction(&self) -> &SpectralField<T> {
        &self.direction
    }

    pub fn interval(&self) -> (T, T) {
        self.interval
    }

    pub fn eval(&self, t: T, table: &EvolutionTable<T>, control: &ControlOperator<T>) -> Result<SpectralField<T>> {
        let (a, b) = self.interval;
        let slack = table.grid().step() * T::lit(1e-9);
        if t < a - slack || t > b + slack {
            return Err(Error::Domain(format!(
                "control time {:e} outside [{:e}, {:e}]",
                t.as_f64(),
                a.as_f64(),
                b.as_f64()
            )));
        }
        let sv = table.apply_s_adjoint(b, t.min(b), &self.direction)?;
        control.apply_adjoint(&sv)
    }
}

/// `u(t) = B*S*(b,t)J[R(λ,Ψ)g]` for `t` in the Gramian's interval `[a, b]`.
#[allow(clippy::too_many_arguments)]
pub fn control_eval<T: Real>(
    t: T,
    defect: &SpectralField<T>,
    table: &EvolutionTable<T>,
    control: &ControlOperator<T>,
    psi: &Gramian<T>,
    lambda: T,
    p: T,
    basis: &ModeBasis<T>,
) -> Result<SpectralField<T>> {
    FeedbackLaw::new(lambda, psi, defect, p, basis)?.eval(t, table, control)
}

/// Result of the linear feedback problem without impulses.
#[derive(Debug, Clone)]
pub struct LinearFeedback<T: Real> {
    /// `u(τ_k)` on the table grid.
    pub control: Vec<SpectralField<T>>,
    /// `x(τ_k)` on the table grid.
    pub states: Vec<SpectralField<T>>,
    /// `ℓ = x_T - C(T,0)v - S(T,0)w`.
    pub ell: SpectralField<T>,
    /// `x(T) - x_T` from the simulated trajectory.
    pub terminal_defect: SpectralField<T>,
    /// `-λR(λ,Ψ)ℓ`, the predicted terminal defect.
    pub predicted_defect: SpectralField<T>,
    pub gramian: Gramian<T>,
}

impl<T: Real> LinearFeedback<T> {
    pub fn terminal_error(&self) -> T {
        self.terminal_defect.norm()
    }
}

/// Feedback control of the linear problem `x'' = A(t)x + Bu` on `[0, T]`
/// steering `x(0) = v`, `x'(0) = w` towards `x_T`.
#[allow(clippy::too_many_arguments)]
pub fn linear_feedback_control<T: Real>(
    v: &SpectralField<T>,
    w: &SpectralField<T>,
    target: &SpectralField<T>,
    table: &EvolutionTable<T>,
    control: &ControlOperator<T>,
    lambda: T,
    p: T,
    basis: &ModeBasis<T>,
) -> Result<LinearFeedback<T>> {
    let grid = *table.grid();
    let k_max = grid.n_steps();
    let horizon = grid.horizon();
    let free_end = &table.apply_c(horizon, T::zero(), v)? + &table.apply_s(horizon, T::zero(), w)?;
    let ell = target - &free_end;
    let gramian = assemble_gramian_on_grid(table, control, 0, k_max)?;
    let law = FeedbackLaw::new(lambda, &gramian, &ell, p, basis)?;
    let controls: Vec<SpectralField<T>> = (0..=k_max)
        .map(|k| law.eval(grid.time(k), table, control))
        .collect::<Result<_>>()?;
    let forcing: Vec<SpectralField<T>> = controls.iter().map(|u| control.apply(u)).collect::<Result<_>>()?;
    let d = basis.dim();
    let nm = basis.n_modes() as i64;
    let mut integrals = vec![DVector::zeros(d); k_max + 1];
    for n in -nm..=nm {
        let idx = mode_index(n, basis.n_modes());
        let g: Vec<Cplx<T>> = forcing.iter().map(|f| f.coeffs()[idx]).collect();
        for (k, val) in table.duhamel(n, 0, &g).into_iter().enumerate() {
            integrals[k][idx] = val;
        }
    }
    let real = v.is_real() && w.is_real() && target.is_real() && control.preserves_real();
    let states: Vec<SpectralField<T>> = integrals
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let t = grid.time(k);
            let forced = if real { SpectralField::real_projected(c) } else { SpectralField::complex(c) };
            Ok(&(&table.apply_c(t, T::zero(), v)? + &table.apply_s(t, T::zero(), w)?) + &forced)
        })
        .collect::<Result<_>>()?;
    let terminal_defect = &states[k_max] - target;
    let z = resolvent_solve(lambda, &gramian, &ell, p, basis)?;
    Ok(LinearFeedback { control: controls, states, ell, terminal_defect, predicted_defect: -&z, gramian })
}

/// Eigenvalue summary of a Gramian.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T: Real> {
    pub min_eigenvalue: T,
    pub max_eigenvalue: T,
    /// `min > 1e-10 · max`.
    pub positive_definite: bool,
    /// Orthonormal eigenvectors whose eigenvalues fall below the threshold.
    pub null_space: Vec<DVector<Cplx<T>>>,
}

pub fn controllability_certificate<T: Real>(psi: &Gramian<T>) -> Certificate<T> {
    let eig = SymmetricEigen::new(psi.matrix().clone());
    let (min, max) = eig
        .eigenvalues
        .iter()
        .fold((T::max_value().unwrap_or(T::one()), T::zero()), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let threshold = T::lit(1e-10) * max;
    let null_space = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= threshold)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    Certificate { min_eigenvalue: min, max_eigenvalue: max, positive_definite: min > threshold && max > T::zero(), null_space }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Coefficient;
    use crate::trajectory::TimeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn identity_b(n: usize) -> ControlOperator<f64> {
        build_control_operator(KernelDescriptor::ModeDiagonal(vec![1.0]), &ModeBasis::new(n).unwrap()).unwrap()
    }

    #[test]
    fn unit_gains_give_identity() {
        let b = identity_b(3);
        assert_eq!(b.matrix(), &DMatrix::identity(7, 7));
        assert!((b.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn polynomial_kernel_is_rank_two_and_self_adjoint() {
        let basis = ModeBasis::<f64>::new(4).unwrap();
        let b = build_control_operator(KernelDescriptor::Polynomial, &basis).unwrap();
        let mut sv: Vec<f64> = b.matrix().clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[1] > 1.0);
        assert!(sv[2] <= 1e-10, "{sv:?}");
        let asym = (b.matrix() - b.matrix().adjoint()).iter().fold(0.0f64, |m, v| m.max(v.norm()));
        assert!(asym <= 1e-12 * b.norm());
        assert!(b.preserves_real());
    }

    #[test]
    fn asymmetric_table_is_rejected() {
        let basis = ModeBasis::<f64>::new(1).unwrap();
        let table = DMatrix::from_fn(5, 5, |i, j| (i * 7 + j) as f64);
        assert!(matches!(
            build_control_operator(KernelDescriptor::Tabulated(table), &basis),
            Err(Error::SymmetryViolation { .. })
        ));
        let sym = DMatrix::from_fn(5, 5, |i, j| ((i + 1) * (j + 1)) as f64);
        assert!(build_control_operator(KernelDescriptor::Tabulated(sym), &basis).is_ok());
    }

    #[test]
    fn scalar_sine_gramian() {
        let grid = TimeGrid::<f64>::with_steps(PI, 3142).unwrap();
        let table = EvolutionTable::build(1, Coefficient::zero(), grid, None).unwrap();
        let b = identity_b(1);
        let psi = assemble_gramian(&table, &b, 0.0, PI, 128).unwrap();
        assert!((psi.matrix()[(2, 2)].re - PI / 2.0).abs() < 1e-6);
        let on_grid = assemble_gramian_on_grid(&table, &b, 0, 3142).unwrap();
        assert!((on_grid.matrix()[(2, 2)].re - PI / 2.0).abs() < 1e-6);
        let zero = assemble_gramian(&table, &b, 1.0, 1.0, 8).unwrap();
        assert_eq!(zero.matrix().camax(), 0.0);
        assert!(assemble_gramian(&table, &b, 0.0, PI, 7).is_err());
    }

    #[test]
    fn certificates() {
        let grid = TimeGrid::<f64>::with_steps(PI, 3142).unwrap();
        let table = EvolutionTable::build(4, Coefficient::zero(), grid, None).unwrap();
        let basis = ModeBasis::new(4).unwrap();
        let psi = assemble_gramian(&table, &identity_b(4), 0.0, PI, 128).unwrap();
        assert!(controllability_certificate(&psi).positive_definite);

        let zero_b = build_control_operator(KernelDescriptor::ModeDiagonal(vec![0.0]), &basis).unwrap();
        let psi0 = assemble_gramian(&table, &zero_b, 0.0, PI, 128).unwrap();
        let cert = controllability_certificate(&psi0);
        assert_eq!(cert.min_eigenvalue, 0.0);
        assert!(!cert.positive_definite);
        assert_eq!(cert.null_space.len(), 9);

        let poly = build_control_operator(KernelDescriptor::Polynomial, &basis).unwrap();
        let psi_p = assemble_gramian(&table, &poly, 0.0, PI, 128).unwrap();
        let cert = controllability_certificate(&psi_p);
        assert!(!cert.positive_definite);
        assert!(!cert.null_space.is_empty());
    }

    #[test]
    fn resolvent_scalar_and_zero() {
        let basis = ModeBasis::<f64>::new(1).unwrap();
        let y = SpectralField::cosine(1, 1, 0.8).unwrap();
        let zero = Gramian::from_matrix(DMatrix::zeros(3, 3), (0.0, 1.0), 8).unwrap();
        let z = resolvent_solve(0.3, &zero, &y, 2.0, &basis).unwrap();
        assert!((&z - &y).max_abs() < 1e-15);
        let psi = Gramian::from_matrix(DMatrix::identity(3, 3) * creal(2.5), (0.0, 1.0), 8).unwrap();
        let z = resolvent_solve(0.5, &psi, &y, 2.0, &basis).unwrap();
        assert!((&z - &y.scale(0.5 / 3.0)).max_abs() < 1e-15);
        assert!(resolvent_solve(0.0, &psi, &y, 2.0, &basis).is_err());
    }

    fn random_real_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Gramian<f64> {
        let d = 2 * n + 1;
        let a = DMatrix::from_fn(d, d, |_, _| cplx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let a = real_structure(&a) * creal(scale);
        Gramian::from_matrix(&a * a.adjoint(), (0.0, 1.0), 8).unwrap()
    }

    fn random_real_field(rng: &mut ChaCha8Rng, n: usize) -> SpectralField<f64> {
        let half: Vec<Cplx<f64>> = (0..=n).map(|_| cplx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        SpectralField::from_fn(n, true, |k| {
            let c = half[k.unsigned_abs() as usize];
            if k == 0 {
                creal(c.re)
            } else if k < 0 {
                c.conj()
            } else {
                c
            }
        })
        .unwrap()
    }

    #[test]
    fn nonlinear_resolvent_converges_and_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let basis = ModeBasis::<f64>::new(3).unwrap();
        for _ in 0..10 {
            let psi = random_real_psd(&mut rng, 3, 1.0);
            let y = random_real_field(&mut rng, 3);
            for lambda in [1.0, 1e-2] {
                let z = resolvent_solve(lambda, &psi, &y, 4.0, &basis).unwrap();
                assert!(resolvent_residual(lambda, &psi, &y, &z, 4.0, &basis).unwrap() <= 1e-10);
                let zn = crate::spectral::lp_norm_grid(&evaluate_on_grid(&z, &basis).unwrap(), 4.0);
                let yn = crate::spectral::lp_norm_grid(&evaluate_on_grid(&y, &basis).unwrap(), 4.0);
                assert!(zn <= yn + 1e-10);
            }
        }
    }

    #[test]
    fn control_vanishes_at_window_end_and_for_zero_defect() {
        let grid = TimeGrid::<f64>::with_steps(PI, 3142).unwrap();
        let table = EvolutionTable::build(1, Coefficient::zero(), grid, None).unwrap();
        let basis = ModeBasis::new(1).unwrap();
        let b = identity_b(1);
        let psi = assemble_gramian(&table, &b, 0.0, PI, 128).unwrap();
        let d = SpectralField::cosine(1, 1, 1.0).unwrap();
        let u = control_eval(PI, &d, &table, &b, &psi, 1.0, 2.0, &basis).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        let zero = control_eval(1.0, &SpectralField::zeros(1), &table, &b, &psi, 1.0, 2.0, &basis).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        for t in [0.0, 0.7, 2.0] {
            let u = control_eval(t, &d, &table, &b, &psi, 1.0, 2.0, &basis).unwrap();
            let expected = (PI - t).sin() * d.mode(1).re / (1.0 + PI / 2.0);
            assert!((u.mode(1).re - expected).abs() < 1e-6, "t = {t}");
        }
        assert!(control_eval(3.5, &d, &table, &b, &psi, 1.0, 2.0, &basis).is_err());
    }

    #[test]
    fn linear_feedback_identities() {
        let n = 3;
        let grid = TimeGrid::<f64>::with_steps(PI, 3142).unwrap();
        let table = EvolutionTable::build(n, Coefficient::cosine(0.3), grid, None).unwrap();
        let basis = ModeBasis::new(n).unwrap();
        let b = identity_b(n);
        let v = SpectralField::cosine(n, 1, 0.5).unwrap();
        let w = SpectralField::sine(n, 2, 0.2).unwrap();
        // target on the free trajectory
        let free = &table.apply_c(PI, 0.0, &v).unwrap() + &table.apply_s(PI, 0.0, &w).unwrap();
        let r = linear_feedback_control(&v, &w, &free, &table, &b, 1e-2, 2.0, &basis).unwrap();
        assert!(r.control.iter().all(|u| u.max_abs() < 1e-14));
        assert!(r.terminal_error() < 1e-12);

        let target = SpectralField::constant(n, 0.3);
        let r = linear_feedback_control(&v, &w, &target, &table, &b, 1e-2, 2.0, &basis).unwrap();
        assert!((&r.terminal_defect - &r.predicted_defect).norm() < 1e-8);
    }
}
