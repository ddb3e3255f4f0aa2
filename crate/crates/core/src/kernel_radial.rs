//! Radial reduction of the singular interaction kernel.
//!
//! For a radial field in dimension N the interaction kernel |x - y|^(-(N-theta))
//! collapses, after integrating over the sphere, to a one-dimensional kernel
//! in the radius ratio sigma:
//!
//!   K_theta(sigma) = |S^(N-2)| * int_0^pi sin(xi)^(N-2)
//!                     * (1 - 2 sigma cos(xi) + sigma^2)^(-(N-theta)/2) d(xi)
//!
//! evaluated here in the cancellation-free form (1-sigma)^2 + 4 sigma sin^2(xi/2).
//! K_theta blows up like |1-sigma|^(theta-1) at sigma = 1 (integrably for
//! theta > 0) and satisfies the inversion identity
//! K_theta(1/sigma) = sigma^(N-theta) K_theta(sigma) exactly.

use crate::error::{Error, Result};
use crate::quad::{
    edges_graded_toward_end, edges_graded_toward_start, edges_uniform, integrate_edges,
};

/// Dimension and kernel exponent for the radial reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularKernelSpec {
    n: u32,
    theta: f64,
}

impl AngularKernelSpec {
    /// Requires integer dimension N >= 2 and theta < N (so the kernel
    /// exponent (N - theta)/2 is positive).
    pub fn new(n: u32, theta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "angular kernel needs dimension >= 2, got {n}"
            )));
        }
        if !theta.is_finite() || theta >= n as f64 {
            return Err(Error::InvalidParameter(format!(
                "kernel exponent needs theta < N, got theta = {theta}, N = {n}"
            )));
        }
        Ok(AngularKernelSpec { n, theta })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Gamma at half-integer arguments: gamma_half(m) = Gamma(m/2), m >= 1.
/// Exact recursion from Gamma(1/2) = sqrt(pi) and Gamma(1) = 1.
fn gamma_half(m: u32) -> f64 {
    match m {
        0 => f64::INFINITY,
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (0.5 * (m - 2) as f64) * gamma_half(m - 2),
    }
}

/// Surface measure of the unit sphere S^(n-1) in R^n.
pub fn sphere_measure(n: u32) -> f64 {
    let pi = std::f64::consts::PI;
    2.0 * pi.powf(0.5 * n as f64) / gamma_half(n)
}

/// Relative tolerance targeted by the kernel quadratures.
const KERNEL_REL_TOL: f64 = 1e-10;

fn angular_integrand(xi: f64, sigma: f64, expo: f64, n: u32) -> f64 {
    let half = (0.5 * xi).sin();
    let q = (1.0 - sigma) * (1.0 - sigma) + 4.0 * sigma * half * half;
    let s = xi.sin();
    let base = if n == 2 { 1.0 } else { s.powi(n as i32 - 2) };
    base * q.powf(-expo)
}

/// Angular kernel K_theta(sigma) for sigma >= 0.
///
/// At sigma = 1 the value is +infinity when theta <= 1 (the integrable
/// blow-up of the radial kernel); for theta > 1 the integral converges and
/// is evaluated. Errors with `QuadratureFailure` if the internal panel
/// refinement cannot certify ~1e-10 relative accuracy.
pub fn angular_kernel(sigma: f64, spec: &AngularKernelSpec) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    let n = spec.n;
    let theta = spec.theta;
    let expo = 0.5 * (n as f64 - theta);
    let pi = std::f64::consts::PI;
    let prefactor = 2.0 * pi.powf(0.5 * (n as f64 - 1.0)) / gamma_half(n - 1);

    if sigma == 1.0 {
        if theta <= 1.0 {
            return Ok(f64::INFINITY);
        }
        // integrand ~ xi^(theta-2), integrable; graded panels plus the
        // analytic power sliver at xi = 0.
        let f = |xi: f64| angular_integrand(xi, 1.0, expo, n);
        let xi0 = 1e-10_f64;
        let sliver = xi0.powf(theta - 1.0) / (theta - 1.0);
        let mut edges = edges_graded_toward_start(xi0, 1.0, 1e-8 * xi0.max(1e-30), 30);
        edges.extend(edges_uniform(1.0, pi, 8).into_iter().skip(1));
        let (v, _) = integrate_edges(&f, &edges);
        return Ok(prefactor * (v + sliver));
    }

    let delta = (1.0 - sigma).abs();
    let f = |xi: f64| angular_integrand(xi, sigma, expo, n);

    let mut per_decade = 30usize;
    let mut uniform = 8usize;
    for attempt in 0..3 {
        // flat chunk [0, xi0]: integrand ~ xi^(N-2) * delta^(-2 expo)
        let xi0 = 1e-6 * delta.min(1.0);
        let chunk = xi0.powi(n as i32 - 1) / (n as f64 - 1.0)
            * ((1.0 - sigma) * (1.0 - sigma)).powf(-expo);
        let mut edges = edges_graded_toward_start(xi0, 1.0, 0.4 * xi0, per_decade);
        edges.extend(edges_uniform(1.0, pi, uniform).into_iter().skip(1));
        let (v, err) = integrate_edges(&f, &edges);
        let total = prefactor * (v + chunk);
        let rel = err / v.abs().max(f64::MIN_POSITIVE);
        if rel <= KERNEL_REL_TOL || attempt == 2 {
            if rel > KERNEL_REL_TOL {
                return Err(Error::QuadratureFailure {
                    requested: KERNEL_REL_TOL,
                    achieved: rel,
                });
            }
            return Ok(total);
        }
        per_decade *= 2;
        uniform *= 2;
    }
    unreachable!()
}

/// Weighted kernel moment: integral of sigma^(N-1-a) * K_theta(sigma) over
/// [lower, upper]. `upper` may be infinite, which requires a > theta (decay
/// of the integrand); an interval whose closure contains sigma = 1 requires
/// theta > 0 (integrability of the kernel blow-up); lower = 0 requires a < N.
pub fn kernel_moment(spec: &AngularKernelSpec, a: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower >= 0.0) || !lower.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lower bound must be finite and nonnegative, got {lower}"
        )));
    }
    if !(upper > lower) {
        return Err(Error::InvalidParameter(format!(
            "need lower < upper, got [{lower}, {upper}]"
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidParameter("moment order must be finite".into()));
    }
    let n = spec.n as f64;
    let theta = spec.theta;
    if lower == 0.0 && a >= n {
        return Err(Error::InvalidParameter(format!(
            "moment diverges at sigma = 0 for a >= N (a = {a}, N = {n})"
        )));
    }

    if upper.is_infinite() {
        if a <= theta {
            return Err(Error::InvalidParameter(format!(
                "infinite upper limit requires a > theta, got a = {a}, theta = {theta}"
            )));
        }
        // map [X, inf) to (0, 1/X] by sigma -> 1/sigma using the inversion
        // identity; the mapped power is sigma^(a - theta - 1).
        let x = lower.max(2.0);
        let head = if lower < x {
            segment(spec, n - 1.0 - a, lower, x)?
        } else {
            0.0
        };
        let tail = segment(spec, a - theta - 1.0, 0.0, 1.0 / x)?;
        return Ok(head + tail);
    }

    segment(spec, n - 1.0 - a, lower, upper)
}

/// integral of sigma^q * K_theta(sigma) over finite [a, b], splitting at the
/// sigma = 1 singularity and substituting it away on each side.
fn segment(spec: &AngularKernelSpec, q: f64, a: f64, b: f64) -> Result<f64> {
    let theta = spec.theta;
    if a <= 1.0 && b >= 1.0 && theta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "moment across sigma = 1 requires theta > 0, got {theta}"
        )));
    }
    if a < 1.0 && b > 1.0 {
        return Ok(segment(spec, q, a, 1.0)? + segment(spec, q, 1.0, b)?);
    }

    let g = |sigma: f64| -> f64 {
        let k = angular_kernel(sigma, spec).unwrap_or(f64::NAN);
        sigma.powf(q) * k
    };

    // side touching the singularity: substitute u = |1 - sigma|^t with
    // t = min(theta, 1/2), which makes the integrand bounded at u = 0.
    if b == 1.0 || a == 1.0 {
        let t = theta.min(0.5);
        let width = if b == 1.0 { 1.0 - a } else { b - a };
        let d0 = 0.5 * width.min(1.0);
        let (reg, sing_sign) = if b == 1.0 {
            (segment_regular(spec, q, a, 1.0 - d0)?, -1.0)
        } else {
            (segment_regular(spec, q, 1.0 + d0, b)?, 1.0)
        };
        let u0 = d0.powf(t);
        let h = |u: f64| -> f64 {
            let d = u.powf(1.0 / t);
            let sigma = 1.0 + sing_sign * d;
            g(sigma) * u.powf(1.0 / t - 1.0) / t
        };
        // below d_min the shifted sigma is no longer resolvable from 1;
        // the substituted integrand is continuous there, so that sliver
        // contributes its (bounded) edge value times its length.
        let d_min = 1e-13_f64;
        let u_min = d_min.powf(t).min(0.5 * u0);
        let sliver = h(u_min) * u_min;
        let edges = edges_graded_toward_start(u_min, u0, 1e-6 * u0, 20);
        let (sing, _) = integrate_edges(&h, &edges);
        return Ok(reg + sing + sliver);
    }

    // segment starting at 0: substitute w = sigma^(1+q) if the power is
    // singular, otherwise plain grading suffices.
    if a == 0.0 {
        if q <= -1.0 {
            return Err(Error::InvalidParameter(format!(
                "power sigma^{q} is not integrable at 0"
            )));
        }
        if q < 0.0 {
            let w0 = b.powf(1.0 + q);
            let h = |w: f64| -> f64 {
                if w <= 0.0 {
                    return 0.0;
                }
                let sigma = w.powf(1.0 / (1.0 + q));
                angular_kernel(sigma, spec).unwrap_or(f64::NAN) / (1.0 + q)
            };
            let edges = edges_graded_toward_start(0.0, w0, 1e-12 * w0, 20);
            let (v, _) = integrate_edges(&h, &edges);
            return Ok(v);
        }
        let edges = edges_graded_toward_start(0.0, b, 1e-10 * b, 16);
        let (v, _) = integrate_edges(&g, &edges);
        return Ok(v);
    }

    segment_regular(spec, q, a, b)
}

/// Smooth part away from sigma = 0 and sigma = 1: double-graded panels.
fn segment_regular(spec: &AngularKernelSpec, q: f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let g = |sigma: f64| -> f64 {
        sigma.powf(q) * angular_kernel(sigma, spec).unwrap_or(f64::NAN)
    };
    let mid = 0.5 * (a + b);
    let min_off = 1e-6 * (b - a);
    let mut edges = edges_graded_toward_start(a, mid, min_off, 12);
    edges.extend(
        edges_graded_toward_end(mid, b, min_off, 12)
            .into_iter()
            .skip(1),
    );
    let (v, _) = integrate_edges(&g, &edges);
    if !v.is_finite() {
        return Err(Error::QuadratureFailure {
            requested: KERNEL_REL_TOL,
            achieved: f64::INFINITY,
        });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_measures_are_the_classical_values() {
        let pi = std::f64::consts::PI;
        assert!((sphere_measure(1) - 2.0).abs() < 1e-15);
        assert!((sphere_measure(2) - 2.0 * pi).abs() < 1e-14);
        assert!((sphere_measure(3) - 4.0 * pi).abs() < 1e-13);
        assert!((sphere_measure(4) - 2.0 * pi * pi).abs() < 1e-13);
    }

    #[test]
    fn kernel_at_zero_is_the_sphere_measure() {
        // at sigma = 0 the kernel factor is 1 and only the angular area is
        // left, independently of theta.
        for &(n, theta) in &[(2u32, 0.3), (3, 0.5), (4, -0.75), (5, 1.2), (3, -1.5)] {
            let spec = AngularKernelSpec::new(n, theta).unwrap();
            let k0 = angular_kernel(0.0, &spec).unwrap();
            let want = sphere_measure(n);
            assert!(
                ((k0 - want) / want).abs() < 1e-10,
                "N={n} theta={theta}: K(0)={k0:.12e} vs |S^(N-1)|={want:.12e}"
            );
        }
    }

    #[test]
    fn poisson_closed_form_in_two_dimensions() {
        // N = 2, theta = 0: the angular integral is the classical
        // int_0^pi (1 - 2 sigma cos + sigma^2)^-1 = pi/(1 - sigma^2).
        let spec = AngularKernelSpec::new(2, 0.0).unwrap();
        for &sigma in &[0.1, 0.5, 0.9, 0.99] {
            let k = angular_kernel(sigma, &spec).unwrap();
            let want = 2.0 * std::f64::consts::PI / (1.0 - sigma * sigma);
            assert!(
                ((k - want) / want).abs() < 1e-9,
                "sigma={sigma}: {k:.12e} vs {want:.12e}"
            );
        }
    }

    #[test]
    fn inversion_identity() {
        for &(n, theta) in &[(2u32, 0.5), (3, 0.5), (3, -0.75), (4, 0.25)] {
            let spec = AngularKernelSpec::new(n, theta).unwrap();
            for &sigma in &[0.3, 0.7, 0.9, 0.99] {
                let k = angular_kernel(sigma, &spec).unwrap();
                let kinv = angular_kernel(1.0 / sigma, &spec).unwrap();
                let want = sigma.powf(n as f64 - theta) * k;
                assert!(
                    ((kinv - want) / want).abs() < 1e-9,
                    "N={n} theta={theta} sigma={sigma}: {kinv:.12e} vs {want:.12e}"
                );
            }
        }
    }

    #[test]
    fn kernel_is_positive_and_grows_toward_one() {
        let spec = AngularKernelSpec::new(3, 0.5).unwrap();
        let mut last = 0.0;
        for &sigma in &[0.0, 0.2, 0.4, 0.6, 0.8, 0.95] {
            let k = angular_kernel(sigma, &spec).unwrap();
            assert!(k > last, "kernel not increasing at sigma={sigma}");
            last = k;
        }
        assert_eq!(angular_kernel(1.0, &spec).unwrap(), f64::INFINITY);
    }

    #[test]
    fn moment_matches_direct_double_quadrature() {
        // away from sigma = 1 the defining double integral is smooth; a
        // plain dense tensor rule is an independent oracle.
        let spec = AngularKernelSpec::new(3, 0.5).unwrap();
        let a = 1.0;
        let got = kernel_moment(&spec, a, 3.0, 4.0).unwrap();

        let expo = 0.5 * (3.0 - 0.5);
        let pref = sphere_measure(2); // |S^(N-2)| for N = 3 is 2 pi
        let pi = std::f64::consts::PI;
        let nsig = 400;
        let nxi = 400;
        let mut oracle = 0.0;
        for i in 0..nsig {
            // composite Simpson in sigma
            let hs = 1.0 / nsig as f64;
            let s0 = 3.0 + i as f64 * hs;
            let inner = |sigma: f64| -> f64 {
                let mut acc = 0.0;
                let hx = pi / nxi as f64;
                for j in 0..nxi {
                    let x0 = j as f64 * hx;
                    let f = |xi: f64| {
                        let half = (0.5 * xi).sin();
                        let q = (1.0 - sigma) * (1.0 - sigma) + 4.0 * sigma * half * half;
                        xi.sin() * q.powf(-expo)
                    };
                    acc += hx / 6.0 * (f(x0) + 4.0 * f(x0 + 0.5 * hx) + f(x0 + hx));
                }
                sigma.powf(3.0 - 1.0 - a) * pref * acc
            };
            oracle += hs / 6.0 * (inner(s0) + 4.0 * inner(s0 + 0.5 * hs) + inner(s0 + hs));
        }
        assert!(
            ((got - oracle) / oracle).abs() < 1e-8,
            "moment {got:.12e} vs oracle {oracle:.12e}"
        );
    }

    #[test]
    fn moment_is_additive_across_the_tail_map() {
        let spec = AngularKernelSpec::new(3, 0.5).unwrap();
        let a = 1.0;
        let whole = kernel_moment(&spec, a, 3.0, f64::INFINITY).unwrap();
        let head = kernel_moment(&spec, a, 3.0, 40.0).unwrap();
        let tail = kernel_moment(&spec, a, 40.0, f64::INFINITY).unwrap();
        assert!(
            ((whole - (head + tail)) / whole).abs() < 1e-8,
            "{whole:.12e} vs {head:.12e} + {tail:.12e}"
        );
        assert!(whole > 0.0 && head > 0.0 && tail > 0.0);
    }

    #[test]
    fn moment_across_one_is_finite_for_positive_theta() {
        let spec = AngularKernelSpec::new(2, 0.5).unwrap();
        let m = kernel_moment(&spec, 0.75, 0.5, 2.0).unwrap();
        assert!(m.is_finite() && m > 0.0);
    }

    #[test]
    fn rejects_invalid_requests() {
        assert!(AngularKernelSpec::new(1, 0.0).is_err());
        assert!(AngularKernelSpec::new(3, 3.0).is_err());
        let spec = AngularKernelSpec::new(3, 0.5).unwrap();
        assert!(angular_kernel(-0.1, &spec).is_err());
        assert!(kernel_moment(&spec, 0.4, 0.5, f64::INFINITY).is_err()); // a <= theta
        assert!(kernel_moment(&spec, 1.0, 2.0, 1.0).is_err()); // reversed
        assert!(kernel_moment(&spec, 3.0, 0.0, 0.5).is_err()); // a >= N at 0
        let neg = AngularKernelSpec::new(3, -0.5).unwrap();
        assert!(kernel_moment(&neg, 1.0, 0.5, 2.0).is_err()); // spans 1, theta <= 0
    }
}
