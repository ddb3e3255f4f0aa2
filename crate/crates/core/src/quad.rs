//! Panel quadrature shared by the kernel and profile modules.
//!
//! Everything here is composite Gauss-Legendre on explicit panel edges. The
//! error estimate per panel is the difference between the 8-point rule and
//! the embedded 4-point rule; callers refine by rebuilding edges at a higher
//! grading density. Endpoint singularities are handled by the callers via
//! geometric grading or substitution, never inside this module.

/// 8-point Gauss-Legendre abscissas on [-1, 1] (positive half). Public within
/// the crate so callers that need explicit nodes (precomputed kernel-weighted
/// quadratures) can lay out panels themselves.
pub(crate) const GL8_X: [f64; 4] = [
    0.1834346424956498,
    0.5255324099163290,
    0.7966664774136267,
    0.9602898564975363,
];
pub(crate) const GL8_W: [f64; 4] = [
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

/// 4-point Gauss-Legendre abscissas on [-1, 1] (positive half).
const GL4_X: [f64; 2] = [0.3399810435848563, 0.8611363115940526];
const GL4_W: [f64; 2] = [0.6521451548625461, 0.3478548451374538];

/// Integrate f over [a, b] with the 8-point rule; the second return is the
/// absolute difference against the embedded 4-point rule.
pub(crate) fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut v8 = 0.0;
    for i in 0..4 {
        v8 += GL8_W[i] * (f(c + r * GL8_X[i]) + f(c - r * GL8_X[i]));
    }
    v8 *= r;
    let mut v4 = 0.0;
    for i in 0..2 {
        v4 += GL4_W[i] * (f(c + r * GL4_X[i]) + f(c - r * GL4_X[i]));
    }
    v4 *= r;
    (v8, (v8 - v4).abs())
}

/// Composite integration over consecutive panel edges.
pub(crate) fn integrate_edges<F: Fn(f64) -> f64>(f: &F, edges: &[f64]) -> (f64, f64) {
    let mut val = 0.0;
    let mut err = 0.0;
    for w in edges.windows(2) {
        let (v, e) = gl_panel(f, w[0], w[1]);
        val += v;
        err += e;
    }
    (val, err)
}

/// Uniform panel edges over [a, b].
pub(crate) fn edges_uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

/// Panel edges on [a, b] geometrically graded toward `b`.
///
/// Offsets from b shrink from (b - a) down to `min_offset` at `per_decade`
/// panels per decade; the final edge is b itself, so the last panel is the
/// sliver [b - min_offset, b]. The integrand must be bounded on that sliver
/// (or the caller replaces the sliver with an analytic/extrapolated term and
/// passes edges without it).
pub(crate) fn edges_graded_toward_end(
    a: f64,
    b: f64,
    min_offset: f64,
    per_decade: usize,
) -> Vec<f64> {
    let span = b - a;
    assert!(span > 0.0 && min_offset > 0.0 && min_offset < span);
    let ratio = 10f64.powf(-1.0 / per_decade.max(1) as f64);
    let mut offsets = vec![span];
    let mut d = span;
    while d * ratio > min_offset {
        d *= ratio;
        offsets.push(d);
    }
    offsets.push(min_offset);
    let mut edges: Vec<f64> = offsets.into_iter().map(|d| b - d).collect();
    edges.push(b);
    edges
}

/// Panel edges on [a, b] geometrically graded toward `a` (mirror image).
pub(crate) fn edges_graded_toward_start(
    a: f64,
    b: f64,
    min_offset: f64,
    per_decade: usize,
) -> Vec<f64> {
    let mut edges = edges_graded_toward_end(0.0, b - a, min_offset, per_decade);
    edges.iter_mut().for_each(|e| *e = b - *e);
    edges.reverse();
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        // GL8 integrates degree <= 15 exactly.
        let f = |x: f64| 3.0 * x * x + 2.0 * x + 1.0;
        let (v, e) = gl_panel(&f, -1.0, 2.0);
        let exact = (8.0 + 1.0) + (4.0 - 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-13, "v={v} exact={exact}");
        assert!(e < 1e-12);
    }

    #[test]
    fn graded_edges_resolve_endpoint_power() {
        // integral of x^(-1/2) over (0, 1] = 2; grade toward 0.
        let f = |x: f64| x.powf(-0.5);
        let edges = edges_graded_toward_start(0.0, 1.0, 1e-14, 40);
        let (v, _) = integrate_edges(&f, &edges);
        // the [0, 1e-14] sliver is excluded by construction error below:
        // edges include 0, and GL nodes are interior, so the sliver panel
        // contributes its (finite) quadrature; for x^(-1/2) that misses
        // ~2*sqrt(1e-14) of mass.
        assert!(
            (v - 2.0).abs() < 1e-6,
            "graded quadrature of x^-1/2 gave {v}"
        );
    }

    #[test]
    fn uniform_edges_cover_interval() {
        let e = edges_uniform(1.0, 3.0, 4);
        assert_eq!(e.len(), 5);
        assert_eq!(e[0], 1.0);
        assert_eq!(e[4], 3.0);
    }

    #[test]
    fn graded_edges_are_monotone() {
        let e = edges_graded_toward_end(0.0, 2.0, 1e-9, 20);
        for w in e.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert_eq!(*e.last().unwrap(), 2.0);
        let e2 = edges_graded_toward_start(0.5, 2.0, 1e-9, 20);
        for w in e2.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert_eq!(e2[0], 0.5);
    }
}
