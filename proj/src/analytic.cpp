#include "fdbisim/analytic.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "fdbisim/core.hpp"

namespace fdbisim::analytic {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

// sinh(a)/sinh(b) for a >= 0, b > 0.
double sinh_ratio(double a, double b) {
  if (a == 0.0) return 0.0;
  if (std::max(a, b) <= 30.0) return std::sinh(a) / std::sinh(b);
  return std::exp(log_sinh(a) - log_sinh(b));
}

double cosh_ratio(double a, double b) {
  if (std::max(std::fabs(a), std::fabs(b)) <= 30.0) return std::cosh(a) / std::cosh(b);
  return std::exp(log_cosh(a) - log_cosh(b));
}

}  // namespace

double log_sinh(double x) {
  if (x > 30.0) return x - std::numbers::ln2 + std::log1p(-std::exp(-2.0 * x));
  return std::log(std::sinh(x));
}

double log_cosh(double x) {
  x = std::fabs(x);
  if (x > 30.0) return x - std::numbers::ln2 + std::log1p(std::exp(-2.0 * x));
  return std::log(std::cosh(x));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double integrate(const std::function<double(double)>& f, double a, double b, double abs_tol) {
  if (a == b) return 0.0;
  double error = 0.0;
  // Relative-to-L1 tolerance; for the probability densities integrated here
  // the L1 norm is at most one, so this bounds the absolute error too.
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 25, abs_tol, &error);
}

double gaussian_kernel(double x, double lo, double hi, double t) {
  require(t > 0.0, "gaussian_kernel needs t > 0");
  require(lo <= hi, "gaussian_kernel needs lo <= hi");
  const double s = std::sqrt(t);
  const double a = (lo - x) / s;
  const double b = (hi - x) / s;
  // Stay in whichever tail keeps both terms small.
  if (a > 0.0) return normal_sf(a) - normal_sf(b);
  return normal_cdf(b) - normal_cdf(a);
}

double bm_hit_zero_cdf(double x, double t) {
  require(t > 0.0, "bm_hit_zero_cdf needs t > 0");
  return 2.0 * normal_sf(std::fabs(x) / std::sqrt(t));
}

double bm_two_barrier_laplace(double z, double lambda) {
  require(z > 0.0 && z < 1.0, "bm_two_barrier_laplace needs z in (0,1)");
  require(lambda >= 0.0, "bm_two_barrier_laplace needs lambda >= 0");
  const double k = std::sqrt(2.0 * lambda);
  return cosh_ratio((z - 0.5) * k, 0.5 * k);
}

double bm_interval_barrier_laplace(double z, double lambda) {
  require(z > -1.0 && z < 1.0, "bm_interval_barrier_laplace needs z in (-1,1)");
  require(lambda >= 0.0, "bm_interval_barrier_laplace needs lambda >= 0");
  const double k = std::sqrt(2.0 * lambda);
  return cosh_ratio(z * k, k);
}

double drifted_bm_hit_zero_density(double z, double a, double s) {
  require(s > 0.0, "drifted_bm_hit_zero_density needs s > 0");
  require(z != 0.0, "drifted_bm_hit_zero_density needs z != 0");
  const double e = -(z + a * s) * (z + a * s) / (2.0 * s);
  return std::fabs(z) / std::sqrt(2.0 * std::numbers::pi * s * s * s) * std::exp(e);
}

double drifted_two_barrier_laplace(double z, double a, double lambda) {
  require(z > 0.0 && z < 1.0, "drifted_two_barrier_laplace needs z in (0,1)");
  require(a > 0.0, "drifted_two_barrier_laplace needs a > 0");
  require(lambda >= 0.0, "drifted_two_barrier_laplace needs lambda >= 0");
  const double k = std::sqrt(2.0 * lambda + a * a);
  return sinh_ratio((1.0 - z) * k, k) * std::exp(-a * z) + sinh_ratio(z * k, k) * std::exp(a * (1.0 - z));
}

double drifted_interval_barrier_laplace(double z, double a, double lambda) {
  require(z > -1.0 && z < 1.0, "drifted_interval_barrier_laplace needs z in (-1,1)");
  require(a > 0.0, "drifted_interval_barrier_laplace needs a > 0");
  require(lambda >= 0.0, "drifted_interval_barrier_laplace needs lambda >= 0");
  const double k = std::sqrt(2.0 * lambda + a * a);
  return sinh_ratio((z + 1.0) * k, 2.0 * k) * std::exp(a * (1.0 - z)) +
         sinh_ratio((1.0 - z) * k, 2.0 * k) * std::exp(-a * (1.0 + z));
}

double drifted_outside_interval_laplace(double z, double a, double lambda) {
  require(std::fabs(z) > 1.0, "drifted_outside_interval_laplace needs |z| > 1");
  require(a > 0.0, "drifted_outside_interval_laplace needs a > 0");
  require(lambda >= 0.0, "drifted_outside_interval_laplace needs lambda >= 0");
  const double k = std::sqrt(2.0 * lambda + a * a);
  if (z > 1.0) return std::exp((1.0 - z) * (a + k));
  return std::exp((1.0 + z) * (k - a));
}

double g_function(double z, double a, double k) {
  return std::sinh((1.0 - z) * k) * std::exp(-a * z) + std::sinh(z * k) * std::exp(a * (1.0 - z));
}

double h_function(double z, double a, double k) {
  return std::sinh((z + 1.0) * k) * std::exp(a * (1.0 - z)) + std::sinh((1.0 - z) * k) * std::exp(-a * (1.0 + z));
}

namespace {

template <class F>
bool injectivity_check(F&& fn, double z1, double z2, std::span<const double> k_grid, double tol) {
  for (double k : k_grid) {
    const double v1 = fn(z1, k);
    const double v2 = fn(z2, k);
    if (std::fabs(v1 - v2) / std::max(1.0, v1) > tol) return false;
  }
  return true;
}

}  // namespace

bool g_injectivity_check(double z1, double z2, double a, std::span<const double> k_grid, double tol) {
  return injectivity_check([a](double z, double k) { return g_function(z, a, k); }, z1, z2, k_grid, tol);
}

bool h_injectivity_check(double z1, double z2, double a, std::span<const double> k_grid, double tol) {
  return injectivity_check([a](double z, double k) { return h_function(z, a, k); }, z1, z2, k_grid, tol);
}

double absorbed_bm_reach_b_laplace(double z, double b, double upper, double lambda) {
  require(upper > 0.0, "absorbed_bm_reach_b_laplace needs upper > 0");
  require(b > 0.0 && b < upper, "absorbed_bm_reach_b_laplace needs b in (0, upper)");
  require(z > 0.0 && z < upper, "absorbed_bm_reach_b_laplace needs z in (0, upper)");
  require(lambda >= 0.0, "absorbed_bm_reach_b_laplace needs lambda >= 0");
  if (z == b) return 1.0;
  const double k = std::sqrt(2.0 * lambda);
  if (z < b) return k == 0.0 ? z / b : sinh_ratio(z * k, b * k);
  if (std::isinf(upper)) return std::exp(-(z - b) * k);
  return k == 0.0 ? (upper - z) / (upper - b) : sinh_ratio((upper - z) * k, (upper - b) * k);
}

double absorbed_bm_death_cdf(double x, double t) {
  require(x > 0.0, "absorbed_bm_death_cdf needs x > 0");
  require(t > 0.0, "absorbed_bm_death_cdf needs t > 0");
  return bm_hit_zero_cdf(x, t);
}

}  // namespace fdbisim::analytic
