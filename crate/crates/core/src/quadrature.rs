//! Composite Newton–Cotes rules on uniform grids.
//!
//! The cumulative integrator and [`composite_weights`] are built from the same
//! panels, so the last entry of [`cumulative`] equals the weighted sum with
//! [`composite_weights`] up to rounding. The mild solver relies on this to
//! make its terminal-error identity hold to machine precision.

use std::ops::{Add, Mul, Sub};

use num_traits::Zero;

use crate::scalar::Real;

/// Trapezoid rule for samples spaced `h` apart.
pub fn trapezoid<T: Real>(values: &[T], h: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner = values[1..n - 1].iter().fold(T::zero(), |a, v| a + *v);
            h * (inner + (values[0] + values[n - 1]) * T::lit(0.5))
        }
    }
}

/// Weights for `n_intervals + 1` equispaced samples.
///
/// Even counts use composite Simpson; odd counts `>= 3` close with the 3/8
/// rule on the last three intervals; a single interval is the trapezoid rule.
pub fn composite_weights<T: Real>(n_intervals: usize, h: T) -> Vec<T> {
    let mut w = vec![T::zero(); n_intervals + 1];
    match n_intervals {
        0 => return w,
        1 => {
            w[0] = h * T::lit(0.5);
            w[1] = h * T::lit(0.5);
            return w;
        }
        _ => {}
    }
    let simpson_end = if n_intervals.is_multiple_of(2) { n_intervals } else { n_intervals - 3 };
    let third = h / T::lit(3.0);
    for j in (0..simpson_end).step_by(2) {
        w[j] += third;
        w[j + 1] += T::lit(4.0) * third;
        w[j + 2] += third;
    }
    if simpson_end < n_intervals {
        let e = T::lit(3.0) * h / T::lit(8.0);
        let j = simpson_end;
        w[j] += e;
        w[j + 1] += T::lit(3.0) * e;
        w[j + 2] += T::lit(3.0) * e;
        w[j + 3] += e;
    }
    w
}

/// `∫` of equispaced samples with [`composite_weights`].
pub fn integrate<T, V>(values: &[V], h: T) -> V
where
    T: Real,
    V: Copy + Zero + Add<Output = V> + Mul<T, Output = V>,
{
    if values.len() < 2 {
        return V::zero();
    }
    let w = composite_weights(values.len() - 1, h);
    values.iter().zip(w).fold(V::zero(), |acc, (v, wi)| acc + *v * wi)
}

/// Running integrals `I_k = ∫_{τ_0}^{τ_k}` of equispaced samples.
///
/// Fourth-order at every `k >= 2`: even `k` chains Simpson panels, odd `k`
/// appends a 3/8 panel to `I_{k-3}`. `I_1` uses the three-point formula
/// `h(5f_0 + 8f_1 - f_2)/12` when `f_2` exists.
pub fn cumulative<T, V>(values: &[V], h: T) -> Vec<V>
where
    T: Real,
    V: Copy + Zero + Add<Output = V> + Sub<Output = V> + Mul<T, Output = V>,
{
    let n = values.len();
    let mut out = vec![V::zero(); n];
    if n < 2 {
        return out;
    }
    let f = values;
    out[1] = if n == 2 {
        (f[0] + f[1]) * (h * T::lit(0.5))
    } else {
        (f[0] * T::lit(5.0) + f[1] * T::lit(8.0) - f[2]) * (h / T::lit(12.0))
    };
    let third = h / T::lit(3.0);
    let eighth = T::lit(3.0) * h / T::lit(8.0);
    for k in 2..n {
        out[k] = if k % 2 == 0 {
            out[k - 2] + (f[k - 2] + f[k - 1] * T::lit(4.0) + f[k]) * third
        } else {
            out[k - 3] + (f[k - 3] + (f[k - 2] + f[k - 1]) * T::lit(3.0) + f[k]) * eighth
        };
    }
    out
}

/// Weights `w` with `cumulative(f, h)[k] == Σ w_j f_j`, for a series of
/// `n_points` samples. Length is `k + 1`, except 3 for `k = 1` with a third sample.
pub fn running_weights<T: Real>(k: usize, n_points: usize, h: T) -> Vec<T> {
    assert!(k < n_points, "index beyond the series");
    if k == 0 {
        return vec![T::zero()];
    }
    if k == 1 {
        if n_points == 2 {
            return vec![h * T::lit(0.5), h * T::lit(0.5)];
        }
        let c = h / T::lit(12.0);
        return vec![T::lit(5.0) * c, T::lit(8.0) * c, -c];
    }
    let third = h / T::lit(3.0);
    let eighth = T::lit(3.0) * h / T::lit(8.0);
    let mut w = vec![T::zero(); k + 1];
    // odd k: Simpson chain to k - 3, then one 3/8 panel
    let even_end = if k.is_multiple_of(2) { k } else { k - 3 };
    for a in (0..even_end).step_by(2) {
        w[a] += third;
        w[a + 1] += T::lit(4.0) * third;
        w[a + 2] += third;
    }
    if k % 2 == 1 {
        let a = k - 3;
        w[a] += eighth;
        w[a + 1] += T::lit(3.0) * eighth;
        w[a + 2] += T::lit(3.0) * eighth;
        w[a + 3] += eighth;
    }
    w
}

/// Break nodes that actually split `[0, n_points - 1]`: sorted, deduplicated,
/// the last node dropped.
fn effective_breaks(breaks: impl Iterator<Item = usize>, n_points: usize) -> Vec<usize> {
    let mut b: Vec<usize> = breaks.filter(|&j| j + 1 < n_points).collect();
    b.sort_unstable();
    b.dedup();
    b
}

/// [`cumulative`] for a series with jumps. `values[j]` is the left value at
/// node `j`; each `(j, right)` in `jumps` supplies the value used by the panels
/// to the right of `j`. Each piece between jumps gets its own cumulative rule.
pub fn cumulative_piecewise<T, V>(values: &[V], jumps: &[(usize, V)], h: T) -> Vec<V>
where
    T: Real,
    V: Copy + Zero + Add<Output = V> + Sub<Output = V> + Mul<T, Output = V>,
{
    let n = values.len();
    let breaks = effective_breaks(jumps.iter().map(|j| j.0), n);
    if breaks.is_empty() {
        return cumulative(values, h);
    }
    let right = |j: usize| jumps.iter().rev().find(|r| r.0 == j).map(|r| r.1);
    let mut out = vec![V::zero(); n];
    let mut edges = vec![0];
    edges.extend(breaks.iter().copied().filter(|&j| j > 0));
    edges.push(n.saturating_sub(1));
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mut piece = values[a..=b].to_vec();
        if let Some(r) = right(a) {
            piece[0] = r;
        }
        let base = out[a];
        for (j, c) in cumulative(&piece, h).into_iter().enumerate().skip(1) {
            out[a + j] = base + c;
        }
    }
    out
}

/// Weights reproducing `cumulative_piecewise(f, jumps, h)[k]` as
/// `Σ left_j f_j + Σ right_j r_j`, returned as `(left_j, right_j)` for
/// `j = 0..=k` (one extra node may appear, as in [`running_weights`]).
/// `right_j` is zero away from the break nodes.
pub fn running_weights_piecewise<T: Real>(k: usize, n_points: usize, breaks: &[usize], h: T) -> Vec<(T, T)> {
    assert!(k < n_points, "index beyond the series");
    let breaks = effective_breaks(breaks.iter().copied(), n_points);
    let mut edges = vec![0];
    edges.extend(breaks.iter().copied().filter(|&j| j > 0));
    edges.push(n_points - 1);
    let mut w = vec![(T::zero(), T::zero()); k.max(1) + 2];
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a >= k {
            break;
        }
        let local = running_weights(k.min(b) - a, b - a + 1, h);
        for (j, wj) in local.into_iter().enumerate() {
            if j == 0 && breaks.contains(&a) {
                w[a].1 += wj;
            } else {
                w[a + j].0 += wj;
            }
        }
    }
    w.truncate((k + 2).min(n_points));
    w
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(order: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    let nf = order as f64;
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(order, x);
        if d != 0.0 {
            dp = d;
        }
        nodes.push(T::lit(x));
        weights.push(T::lit(2.0 / ((1.0 - x * x) * dp * dp)));
    }
    (nodes, weights)
}

// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        for n in [2usize, 3, 4, 5, 8, 9] {
            let v: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powi(3)).collect();
            let exact = (n as f64 * h).powi(4) / 4.0;
            assert!((integrate(&v, h) - exact).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn trapezoid_for_single_interval() {
        assert_eq!(composite_weights(1, 2.0), vec![1.0, 1.0]);
        assert!(composite_weights::<f64>(0, 1.0).iter().all(|w| *w == 0.0));
    }

    #[test]
    fn sine_integral_converges_fourth_order() {
        let err = |n: usize| {
            let h = std::f64::consts::PI / n as f64;
            let v: Vec<f64> = (0..=n).map(|k| (k as f64 * h).sin()).collect();
            (integrate(&v, h) - 2.0).abs()
        };
        let order = (err(16) / err(32)).log2();
        assert!(order > 3.8, "order {order}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre::<f64>(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn cumulative_endpoint_matches_weights(values in prop::collection::vec(-10.0f64..10.0, 2..40), h in 0.01f64..1.0) {
            let c = cumulative(&values, h);
            let direct = integrate(&values, h);
            prop_assert!((c[values.len() - 1] - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn cumulative_exact_for_quadratics(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, n in 3usize..30) {
            let h = 0.05;
            let f = |t: f64| a + b * t + c * t * t;
            let v: Vec<f64> = (0..=n).map(|k| f(k as f64 * h)).collect();
            let cum = cumulative(&v, h);
            for (k, ik) in cum.iter().enumerate() {
                let t = k as f64 * h;
                let exact = a * t + b * t * t / 2.0 + c * t * t * t / 3.0;
                prop_assert!((ik - exact).abs() < 1e-12);
            }
        }

        #[test]
        fn running_weights_reproduce_cumulative(values in prop::collection::vec(-10.0f64..10.0, 2..30), h in 0.01f64..1.0) {
            let c = cumulative(&values, h);
            for (k, ck) in c.iter().enumerate() {
                let w = running_weights(k, values.len(), h);
                let s: f64 = w.iter().zip(&values).map(|(w, v)| w * v).sum();
                prop_assert!((s - ck).abs() <= 1e-12 * (1.0 + ck.abs()));
            }
        }

        #[test]
        fn piecewise_weights_reproduce_piecewise_cumulative(
            values in prop::collection::vec(-10.0f64..10.0, 2..30),
            raw in prop::collection::vec((0usize..30, -10.0f64..10.0), 0..4),
            h in 0.01f64..1.0,
        ) {
            let jumps: Vec<(usize, f64)> = raw.into_iter().map(|(j, r)| (j % values.len(), r)).collect();
            let breaks: Vec<usize> = jumps.iter().map(|j| j.0).collect();
            let c = cumulative_piecewise(&values, &jumps, h);
            for (k, ck) in c.iter().enumerate() {
                let w = running_weights_piecewise(k, values.len(), &breaks, h);
                let s: f64 = w.iter().enumerate().map(|(j, (l, r))| {
                    let right = jumps.iter().rev().find(|x| x.0 == j).map_or(0.0, |x| x.1);
                    l * values[j] + r * right
                }).sum();
                prop_assert!((s - ck).abs() <= 1e-12 * (1.0 + ck.abs()));
            }
        }
    }

    #[test]
    fn piecewise_rule_is_exact_for_piecewise_quadratics() {
        // f = t² left of t = 0.5, 1 + t right of it
        let h = 0.05;
        let mut left: Vec<f64> = (0..=20).map(|k| (k as f64 * h).powi(2)).collect();
        for (k, x) in left.iter_mut().enumerate().skip(11) {
            *x = 1.0 + k as f64 * h;
        }
        let c = cumulative_piecewise(&left, &[(10, 1.5)], h);
        let exact = 0.5f64.powi(3) / 3.0 + 0.5 + 0.5 * (1.0 - 0.25);
        assert!((c[20] - exact).abs() < 1e-13, "{}", c[20] - exact);
        assert!((c[10] - 0.5f64.powi(3) / 3.0).abs() < 1e-13);
        // without the jump the rule smears it
        assert!((cumulative(&left, h)[20] - exact).abs() > 1e-3);
    }
}
