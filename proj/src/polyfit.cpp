// SPDX-License-Identifier: Apache-2.0
#include "hecnn/polyfit.hpp"

#include <algorithm>
#include <cmath>

#include "hecnn/error.hpp"

namespace hecnn::polyfit {

std::string_view to_string(ActivationKind kind) noexcept {
  switch (kind) {
    case ActivationKind::swish: return "swish";
    case ActivationKind::relu: return "relu";
    case ActivationKind::square: return "square";
    case ActivationKind::identity: return "identity";
  }
  return "unknown";
}

ActivationKind parse_activation_kind(std::string_view name) {
  if (name == "swish") return ActivationKind::swish;
  if (name == "relu") return ActivationKind::relu;
  if (name == "square") return ActivationKind::square;
  if (name == "identity") return ActivationKind::identity;
  throw Error(ErrorCode::invalid_argument, "unknown activation '" + std::string(name) + "'");
}

double evaluate_activation(ActivationKind kind, double x) noexcept {
  switch (kind) {
    case ActivationKind::swish: return x / (1.0 + std::exp(-x));
    case ActivationKind::relu: return x > 0.0 ? x : 0.0;
    case ActivationKind::square: return x * x;
    case ActivationKind::identity: return x;
  }
  return x;
}

void FitSpec::validate() const {
  if (degree < 1) throw Error(ErrorCode::invalid_argument, "degree must be >= 1");
  if (samples < degree + 1) throw Error(ErrorCode::invalid_argument, "samples must be >= degree + 1");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorCode::invalid_argument, "range must satisfy lo < hi");
  }
}

double eval_poly(const Polynomial& p, double x) noexcept {
  double acc = 0.0;
  for (auto it = p.coeffs.rbegin(); it != p.coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

std::vector<double> fit_grid(const FitSpec& spec) {
  std::vector<double> xs(static_cast<std::size_t>(spec.samples));
  const double step = (spec.hi - spec.lo) / static_cast<double>(spec.samples - 1);
  for (int i = 0; i < spec.samples; ++i) xs[static_cast<std::size_t>(i)] = spec.lo + step * i;
  xs.back() = spec.hi;
  return xs;
}

namespace {

// Least squares min ||A c - b|| via Householder QR. A is rows x cols, column-major.
std::vector<double> householder_solve(std::vector<double> a, std::vector<double> b, std::size_t rows,
                                      std::size_t cols) {
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[c * rows + r]; };
  double max_diag = 0.0;
  std::vector<double> diag(cols);
  for (std::size_t k = 0; k < cols; ++k) {
    double norm = 0.0;
    for (std::size_t r = k; r < rows; ++r) norm += at(r, k) * at(r, k);
    norm = std::sqrt(norm);
    const double alpha = at(k, k) > 0 ? -norm : norm;
    // v = x - alpha e1, stored in column k below the diagonal.
    at(k, k) -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t r = k; r < rows; ++r) vnorm2 += at(r, k) * at(r, k);
    diag[k] = alpha;
    max_diag = std::max(max_diag, std::abs(alpha));
    if (vnorm2 == 0.0) continue;
    for (std::size_t c = k + 1; c < cols; ++c) {
      double dot = 0.0;
      for (std::size_t r = k; r < rows; ++r) dot += at(r, k) * at(r, c);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t r = k; r < rows; ++r) at(r, c) -= f * at(r, k);
    }
    double dot = 0.0;
    for (std::size_t r = k; r < rows; ++r) dot += at(r, k) * b[r];
    const double f = 2.0 * dot / vnorm2;
    for (std::size_t r = k; r < rows; ++r) b[r] -= f * at(r, k);
  }
  std::vector<double> x(cols);
  for (std::size_t k = cols; k-- > 0;) {
    if (std::abs(diag[k]) <= 1e-13 * max_diag || diag[k] == 0.0) {
      throw Error(ErrorCode::singular_system, "least-squares system is rank deficient");
    }
    double s = b[k];
    for (std::size_t c = k + 1; c < cols; ++c) s -= at(k, c) * x[c];
    x[k] = s / diag[k];
  }
  return x;
}

}  // namespace

Polynomial fit_samples(std::span<const double> xs, std::span<const double> ys, int degree) {
  if (degree < 0 || xs.size() != ys.size() || xs.size() < static_cast<std::size_t>(degree) + 1) {
    throw Error(ErrorCode::invalid_argument, "need at least degree + 1 samples");
  }
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double mid = 0.5 * (*lo_it + *hi_it);
  const double half = 0.5 * (*hi_it - *lo_it);
  if (!(half > 0.0)) throw Error(ErrorCode::singular_system, "all sample points coincide");

  // Fit in t = (x - mid) / half for conditioning, then expand back to powers of x.
  const std::size_t rows = xs.size();
  const std::size_t cols = static_cast<std::size_t>(degree) + 1;
  std::vector<double> a(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double t = (xs[r] - mid) / half;
    double p = 1.0;
    for (std::size_t c = 0; c < cols; ++c) {
      a[c * rows + r] = p;
      p *= t;
    }
  }
  const std::vector<double> in_t = householder_solve(std::move(a), {ys.begin(), ys.end()}, rows, cols);

  // sum_k a_k ((x - mid)/half)^k = sum_k a_k half^-k sum_j C(k,j) x^j (-mid)^(k-j)
  std::vector<long double> in_x(cols, 0.0L);
  for (std::size_t k = 0; k < cols; ++k) {
    const long double ak = static_cast<long double>(in_t[k]) / std::pow(static_cast<long double>(half), k);
    long double binom = 1.0L;
    for (std::size_t j = 0; j <= k; ++j) {
      in_x[j] += ak * binom * std::pow(static_cast<long double>(-mid), static_cast<long double>(k - j));
      binom = binom * static_cast<long double>(k - j) / static_cast<long double>(j + 1);
    }
  }
  Polynomial out;
  out.coeffs.reserve(cols);
  for (long double c : in_x) {
    const double v = static_cast<double>(c);
    out.coeffs.push_back(std::abs(v) < kCoeffCutoff ? 0.0 : v);
  }
  return out;
}

Polynomial fit_polynomial(const FitSpec& spec) {
  spec.validate();
  const std::vector<double> xs = fit_grid(spec);
  std::vector<double> ys(xs.size());
  std::transform(xs.begin(), xs.end(), ys.begin(), [&](double x) { return evaluate_activation(spec.kind, x); });
  return fit_samples(xs, ys, spec.degree);
}

double max_fit_error(const Polynomial& p, const FitSpec& spec) {
  FitSpec dense = spec;
  dense.samples = spec.samples * 10;
  double worst = 0.0;
  for (double x : fit_grid(dense)) {
    worst = std::max(worst, std::abs(eval_poly(p, x) - evaluate_activation(spec.kind, x)));
  }
  return worst;
}

double grid_residual(const Polynomial& p, const FitSpec& spec) {
  double rss = 0.0;
  for (double x : fit_grid(spec)) {
    const double r = eval_poly(p, x) - evaluate_activation(spec.kind, x);
    rss += r * r;
  }
  return rss;
}

}  // namespace hecnn::polyfit
