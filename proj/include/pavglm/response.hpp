#pragma once

// Exponential-family observation models p(y | eta) = b(y) exp(eta * T(y) - A(eta, y)).
//
// T(y) is the canonical statistic: y itself for the count and binary models,
// y / sigma^2 for the Gaussian model with known variance. The cumulant A may
// depend on y (negative binomial), so derivatives are always taken in eta with
// y held fixed.

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "pavglm/format.hpp"

namespace pavglm {

enum class FamilyKind { gaussian, poisson, negative_binomial, binary };

// Counts evaluations where exp(eta) would overflow and the cumulant was
// reported as +inf instead.
inline std::atomic<std::uint64_t>& overflow_events() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

namespace detail {

inline constexpr double kEtaOverflow = 700.0;

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double trim_number(std::string_view s) {
  std::string buf(s);
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(buf, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad number in family spec: '" + buf + "'");
  }
  if (pos != buf.size()) throw std::invalid_argument("bad number in family spec: '" + buf + "'");
  return v;
}

}  // namespace detail

class ResponseFamily {
 public:
  static ResponseFamily gaussian(double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
      throw std::invalid_argument("gaussian family needs sigma2 > 0");
    return ResponseFamily(FamilyKind::gaussian, 0.0, sigma2);
  }
  static ResponseFamily poisson() { return ResponseFamily(FamilyKind::poisson, 0.0, 0.0); }
  static ResponseFamily negative_binomial(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate))
      throw std::invalid_argument("negative binomial family needs rate r > 0");
    return ResponseFamily(FamilyKind::negative_binomial, rate, 0.0);
  }
  static ResponseFamily binary() { return ResponseFamily(FamilyKind::binary, 0.0, 0.0); }

  // Accepts `gaussian(sigma2=...)`, `poisson`, `negbin(r=...)`, `binary`.
  static ResponseFamily parse(std::string_view spec) {
    auto strip = [](std::string_view s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
      return s;
    };
    spec = strip(spec);
    std::string_view name = spec;
    std::string_view key;
    std::string_view value;
    if (auto open = spec.find('('); open != std::string_view::npos) {
      if (spec.back() != ')') throw std::invalid_argument("unbalanced parentheses in family spec");
      name = strip(spec.substr(0, open));
      auto args = strip(spec.substr(open + 1, spec.size() - open - 2));
      auto eq = args.find('=');
      if (eq == std::string_view::npos) throw std::invalid_argument("family argument must be key=value");
      key = strip(args.substr(0, eq));
      value = strip(args.substr(eq + 1));
    }
    if (name == "poisson" && key.empty()) return poisson();
    if (name == "binary" && key.empty()) return binary();
    if (name == "negbin" && key == "r") return negative_binomial(detail::trim_number(value));
    if (name == "gaussian" && key == "sigma2") return gaussian(detail::trim_number(value));
    throw std::invalid_argument("unknown response family '" + std::string(spec) + "'");
  }

  std::string to_string() const {
    switch (kind_) {
      case FamilyKind::gaussian: return "gaussian(sigma2=" + shortest(sigma2_) + ")";
      case FamilyKind::poisson: return "poisson";
      case FamilyKind::negative_binomial: return "negbin(r=" + shortest(rate_) + ")";
      case FamilyKind::binary: return "binary";
    }
    return {};
  }

  FamilyKind kind() const { return kind_; }
  double rate() const { return rate_; }
  double sigma2() const { return sigma2_; }

  // Family of the sum of k iid observations sharing the same latent value.
  // Only the negative binomial changes (rate k r); Poisson sums stay Poisson
  // with the latent read as the log of the summed intensity.
  ResponseFamily aggregated(int k) const {
    if (k < 1) throw std::invalid_argument("replicate count must be >= 1");
    if (k == 1) return *this;
    switch (kind_) {
      case FamilyKind::negative_binomial: return negative_binomial(rate_ * k);
      case FamilyKind::poisson: return *this;
      default:
        throw std::invalid_argument("replicate aggregation is only defined for count families");
    }
  }

  void check_observation(double y) const {
    const bool ok = [&] {
      if (!std::isfinite(y)) return false;
      switch (kind_) {
        case FamilyKind::gaussian: return true;
        case FamilyKind::poisson:
        case FamilyKind::negative_binomial: return y >= 0.0 && y == std::floor(y);
        case FamilyKind::binary: return y == 0.0 || y == 1.0;
      }
      return false;
    }();
    if (!ok) throw std::domain_error("observation " + shortest(y) + " outside the sample space of " + to_string());
  }

  // Canonical statistic T(y).
  double statistic(double y) const { return kind_ == FamilyKind::gaussian ? y / sigma2_ : y; }

  // Cumulant A(eta, y).
  double cumulant(double eta, double y) const {
    check_observation(y);
    switch (kind_) {
      case FamilyKind::gaussian: return eta * eta / (2.0 * sigma2_);
      case FamilyKind::poisson:
        if (eta > detail::kEtaOverflow) return overflowed();
        return std::exp(eta);
      case FamilyKind::negative_binomial: return (rate_ + y) * detail::softplus(eta - std::log(rate_));
      case FamilyKind::binary: return detail::softplus(eta);
    }
    return 0.0;
  }

  double cumulant_d1(double eta, double y) const {
    check_observation(y);
    switch (kind_) {
      case FamilyKind::gaussian: return eta / sigma2_;
      case FamilyKind::poisson:
        if (eta > detail::kEtaOverflow) return overflowed();
        return std::exp(eta);
      case FamilyKind::negative_binomial: return (rate_ + y) * detail::logistic(eta - std::log(rate_));
      case FamilyKind::binary: return detail::logistic(eta);
    }
    return 0.0;
  }

  double cumulant_d2(double eta, double y) const {
    check_observation(y);
    switch (kind_) {
      case FamilyKind::gaussian: return 1.0 / sigma2_;
      case FamilyKind::poisson:
        if (eta > detail::kEtaOverflow) return overflowed();
        return std::exp(eta);
      case FamilyKind::negative_binomial: {
        const double p = detail::logistic(eta - std::log(rate_));
        const double q = detail::logistic(std::log(rate_) - eta);
        return (rate_ + y) * p * q;
      }
      case FamilyKind::binary: return detail::logistic(eta) * detail::logistic(-eta);
    }
    return 0.0;
  }

  // log b(y). For the negative binomial this is log C(y+r-1, y) - y log r,
  // extended to non-integer r through log-gamma.
  double log_base(double y) const {
    check_observation(y);
    switch (kind_) {
      case FamilyKind::gaussian:
        return -y * y / (2.0 * sigma2_) - 0.5 * std::log(2.0 * std::numbers::pi * sigma2_);
      case FamilyKind::poisson: return -std::lgamma(y + 1.0);
      case FamilyKind::negative_binomial:
        return std::lgamma(y + rate_) - std::lgamma(rate_) - std::lgamma(y + 1.0) - y * std::log(rate_);
      case FamilyKind::binary: return 0.0;
    }
    return 0.0;
  }

  double log_density(double eta, double y) const {
    return eta * statistic(y) - cumulant(eta, y) + log_base(y);
  }

  // E[Y | eta] on the observation scale.
  double conditional_mean(double eta) const {
    switch (kind_) {
      case FamilyKind::gaussian: return eta;
      case FamilyKind::poisson:
      case FamilyKind::negative_binomial: return std::exp(eta);
      case FamilyKind::binary: return detail::logistic(eta);
    }
    return 0.0;
  }

  // exp(eta): the intensity reading of the latent curve used for plotting.
  static double intensity(double eta) { return std::exp(eta); }

  template <class Engine>
  double sample(double eta, Engine& rng) const {
    switch (kind_) {
      case FamilyKind::gaussian: return std::normal_distribution<double>(eta, std::sqrt(sigma2_))(rng);
      case FamilyKind::poisson: return draw_poisson(std::exp(eta), rng);
      case FamilyKind::negative_binomial: {
        // gamma-Poisson mixture with mean e^eta and shape r
        const double mu = std::exp(eta);
        const double lambda = std::gamma_distribution<double>(rate_, mu / rate_)(rng);
        return draw_poisson(lambda, rng);
      }
      case FamilyKind::binary: return std::bernoulli_distribution(detail::logistic(eta))(rng) ? 1.0 : 0.0;
    }
    return 0.0;
  }

  double sample(double eta, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    return sample(eta, rng);
  }

 private:
  ResponseFamily(FamilyKind kind, double rate, double sigma2) : kind_(kind), rate_(rate), sigma2_(sigma2) {}

  static double overflowed() {
    overflow_events().fetch_add(1, std::memory_order_relaxed);
    return std::numeric_limits<double>::infinity();
  }

  template <class Engine>
  static double draw_poisson(double mean, Engine& rng) {
    if (!(mean > 0.0)) return 0.0;
    return static_cast<double>(std::poisson_distribution<long long>(mean)(rng));
  }

  FamilyKind kind_;
  double rate_;
  double sigma2_;
};

}  // namespace pavglm
