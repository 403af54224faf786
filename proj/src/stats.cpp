#include "fdbisim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fdbisim::stats {

double state_feature(const State& s) {
  if (const auto* v = std::get_if<double>(&s)) return *v;
  if (const auto* c = std::get_if<ClockedState>(&s)) return static_cast<double>(c->base);
  if (const auto* b = std::get_if<BranchPoint>(&s)) return 1000.0 * b->branch + b->pos;
  return std::nan("");
}

namespace {

/// Maps values to bin indices; bin 0 is reserved for NaN (the cemetery).
class Binner {
 public:
  Binner(std::span<const double> a, std::span<const double> b, std::size_t bins) {
    std::vector<double> pooled;
    pooled.reserve(a.size() + b.size());
    for (double v : a)
      if (!std::isnan(v)) pooled.push_back(v);
    for (double v : b)
      if (!std::isnan(v)) pooled.push_back(v);
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> distinct = pooled;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() <= bins) {
      categorical_ = true;
      edges_ = std::move(distinct);
    } else {
      for (std::size_t k = 1; k < bins; ++k) {
        const double q = pooled[k * pooled.size() / bins];
        if (edges_.empty() || q > edges_.back()) edges_.push_back(q);
      }
    }
  }

  std::size_t count() const { return edges_.size() + 2; }

  std::size_t operator()(double v) const {
    if (std::isnan(v)) return 0;
    if (categorical_)
      return 1 + static_cast<std::size_t>(std::lower_bound(edges_.begin(), edges_.end(), v) - edges_.begin());
    return 1 + static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), v) - edges_.begin());
  }

 private:
  bool categorical_ = false;
  std::vector<double> edges_;
};

TwoSampleResult chi2_from_counts(const std::vector<double>& ca, const std::vector<double>& cb, double na, double nb) {
  TwoSampleResult r;
  if (na == 0 || nb == 0) return r;
  const double k1 = std::sqrt(nb / na);
  const double k2 = std::sqrt(na / nb);
  std::size_t used = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    const double tot = ca[i] + cb[i];
    if (tot == 0) continue;
    ++used;
    const double d = k1 * ca[i] - k2 * cb[i];
    r.chi2 += d * d / tot;
  }
  r.dof = used > 0 ? used - 1 : 0;
  r.z = wilson_hilferty_z(r.chi2, r.dof);
  return r;
}

}  // namespace

double wilson_hilferty_z(double chi2, std::size_t dof) {
  if (dof == 0) return 0.0;
  const double k = static_cast<double>(dof);
  const double c = 2.0 / (9.0 * k);
  return (std::cbrt(chi2 / k) - (1.0 - c)) / std::sqrt(c);
}

TwoSampleResult two_sample_chi2(std::span<const double> a, std::span<const double> b, std::size_t bins) {
  const Binner bin(a, b, bins);
  std::vector<double> ca(bin.count(), 0.0), cb(bin.count(), 0.0);
  for (double v : a) ca[bin(v)] += 1.0;
  for (double v : b) cb[bin(v)] += 1.0;
  return chi2_from_counts(ca, cb, static_cast<double>(a.size()), static_cast<double>(b.size()));
}

TwoSampleResult two_sample_chi2_joint(std::span<const double> a1, std::span<const double> a2,
                                      std::span<const double> b1, std::span<const double> b2,
                                      std::size_t bins_per_axis) {
  if (a1.size() != a2.size() || b1.size() != b2.size()) throw PreconditionError("paired samples differ in length");
  const Binner x(a1, b1, bins_per_axis);
  const Binner y(a2, b2, bins_per_axis);
  const std::size_t cells = x.count() * y.count();
  std::vector<double> ca(cells, 0.0), cb(cells, 0.0);
  for (std::size_t i = 0; i < a1.size(); ++i) ca[x(a1[i]) * y.count() + y(a2[i])] += 1.0;
  for (std::size_t i = 0; i < b1.size(); ++i) cb[x(b1[i]) * y.count() + y(b2[i])] += 1.0;
  return chi2_from_counts(ca, cb, static_cast<double>(a1.size()), static_cast<double>(b1.size()));
}

EstimateWithCI summarize(std::span<const double> values, std::uint64_t seed) {
  EstimateWithCI e;
  e.n_samples = values.size();
  e.seed = seed;
  if (values.empty()) return e;
  const double n = static_cast<double>(values.size());
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.std_err = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return e;
}

}  // namespace fdbisim::stats
