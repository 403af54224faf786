#pragma once

#include <functional>
#include <span>

namespace fdbisim::analytic {

/// Standard normal CDF.
double normal_cdf(double x);
/// 1 - normal_cdf(x), accurate in the upper tail.
double normal_sf(double x);

/// Adaptive Gauss-Kronrod integral of f over [a, b]; either bound may be
/// infinite. Absolute tolerance 1e-9 unless overridden.
double integrate(const std::function<double(double)>& f, double a, double b, double abs_tol = 1e-9);

/// Brownian transition mass P_t(x, D) of the interval D = (lo, hi).
double gaussian_kernel(double x, double lo, double hi, double t);

/// P^x(T_0 < t) for standard Brownian motion.
double bm_hit_zero_cdf(double x, double t);

/// E^z[exp(-lambda (T_0 ^ T_1))] for standard Brownian motion started in (0,1).
double bm_two_barrier_laplace(double z, double lambda);

/// E^z[exp(-lambda (T_{-1} ^ T_1))] for standard Brownian motion started in (-1,1).
double bm_interval_barrier_laplace(double z, double lambda);

/// Density of the hitting time of 0 for Brownian motion with drift a started at z.
double drifted_bm_hit_zero_density(double z, double a, double s);

/// E^z[exp(-lambda (T_0 ^ T_1))] for Brownian motion with drift a > 0 started in (0,1).
double drifted_two_barrier_laplace(double z, double a, double lambda);

/// E^z[exp(-lambda (T_{-1} ^ T_1))] for drift a > 0 started in (-1,1).
double drifted_interval_barrier_laplace(double z, double a, double lambda);

/// E^z[exp(-lambda T_b)] for drift a > 0 started outside [-1,1] with b the
/// nearer end of the interval. May be < 1 at lambda = 0 (escape to infinity).
double drifted_outside_interval_laplace(double z, double a, double lambda);

/// g_z(k) = sinh((1-z)k) e^{-az} + sinh(zk) e^{a(1-z)}.
double g_function(double z, double a, double k);
/// h_z(k) = sinh((z+1)k) e^{a(1-z)} + sinh((1-z)k) e^{-a(1+z)}.
double h_function(double z, double a, double k);

/// True iff max_k |g_{z1}(k) - g_{z2}(k)| / max(1, g_{z1}(k)) <= tol over the grid.
bool g_injectivity_check(double z1, double z2, double a, std::span<const double> k_grid, double tol);
/// Same test with h in place of g; z1, z2 in (-1,1).
bool h_injectivity_check(double z1, double z2, double a, std::span<const double> k_grid, double tol);

/// Laplace transform of the time Brownian motion absorbed at 0 and `upper`
/// first reaches the level b, started at z.
double absorbed_bm_reach_b_laplace(double z, double b, double upper, double lambda);

/// P^x(death before t) for Brownian motion absorbed at 0.
double absorbed_bm_death_cdf(double x, double t);

/// log(sinh(x)) for x > 0, overflow-free.
double log_sinh(double x);
/// log(cosh(x)), overflow-free.
double log_cosh(double x);

}  // namespace fdbisim::analytic
