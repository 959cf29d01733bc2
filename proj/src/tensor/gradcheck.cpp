#include "lrd/tensor/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>

namespace lrd {

double finite_diff_gradcheck(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x,
                             double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradcheck: eps must be positive");
  Tensor64 probe = x.detach();
  probe.set_requires_grad(true);
  Tensor64 y = f(probe);
  y.backward();
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  const auto base = x.data();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus(base.begin(), base.end());
    std::vector<double> minus(base.begin(), base.end());
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = f(Tensor64(x.shape(), std::move(plus))).item();
    const double fm = f(Tensor64(x.shape(), std::move(minus))).item();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, err);
  }
  return worst;
}

Tensor64 random_tensor64(const Shape& shape, std::mt19937_64& rng, double lo, double hi,
                         double min_abs) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& e : v) {
    do {
      e = dist(rng);
    } while (std::abs(e) < min_abs);
  }
  return Tensor64(shape, std::move(v));
}

bool GradcheckReport::all_passed() const {
  return std::all_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.passed; });
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& o : outcomes)
    if (!o.passed) out.push_back(o.name);
  return out;
}

GradcheckReport run_gradcheck(const std::vector<GradcheckCase>& cases, int seeds, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  for (const auto& c : cases) {
    GradcheckOutcome o{c.name, 0.0, 0, true};
    for (int s = 0; s < seeds; ++s) {
      double err;
      try {
        err = c.run(static_cast<std::uint64_t>(s) + 1);
      } catch (const std::exception&) {
        err = std::numeric_limits<double>::infinity();
      }
      o.max_relative_error = std::max(o.max_relative_error, err);
      ++o.seeds;
    }
    o.passed = o.max_relative_error < tolerance;
    report.outcomes.push_back(o);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace lrd
