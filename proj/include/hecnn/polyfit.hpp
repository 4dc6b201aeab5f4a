// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hecnn::polyfit {

enum class ActivationKind { swish, relu, square, identity };

std::string_view to_string(ActivationKind kind) noexcept;
ActivationKind parse_activation_kind(std::string_view name);

/// Reference value of the activation at x.
double evaluate_activation(ActivationKind kind, double x) noexcept;

struct FitSpec {
  ActivationKind kind = ActivationKind::swish;
  int degree = 4;
  double lo = -4.0;
  double hi = 4.0;
  int samples = 1001;

  /// Throws Error(invalid_argument) when degree < 1, samples <= degree or lo >= hi.
  void validate() const;
};

/// Ascending-order coefficients: coeffs[i] multiplies x^i.
struct Polynomial {
  std::vector<double> coeffs;

  int degree() const noexcept { return coeffs.empty() ? -1 : static_cast<int>(coeffs.size()) - 1; }
  double leading() const noexcept { return coeffs.empty() ? 0.0 : coeffs.back(); }
  bool is_monic() const noexcept { return !coeffs.empty() && coeffs.back() == 1.0; }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;
};

/// Horner evaluation.
double eval_poly(const Polynomial& p, double x) noexcept;

/// Coefficients with |c| below this are zeroed after fitting.
inline constexpr double kCoeffCutoff = 1e-8;

/// Unweighted least-squares fit over a uniform grid of spec.samples points on [lo, hi].
/// Solved by Householder QR on a range-normalized Vandermonde matrix.
Polynomial fit_polynomial(const FitSpec& spec);

/// Same as fit_polynomial but against arbitrary sampled targets (user-supplied activations).
Polynomial fit_samples(std::span<const double> xs, std::span<const double> ys, int degree);

/// Max |p(x) - f(x)| over a uniform grid of 10 * spec.samples points.
double max_fit_error(const Polynomial& p, const FitSpec& spec);

/// Residual sum of squares on the fitting grid of spec.
double grid_residual(const Polynomial& p, const FitSpec& spec);

/// Uniform grid of spec.samples points on [lo, hi], endpoints included.
std::vector<double> fit_grid(const FitSpec& spec);

}  // namespace hecnn::polyfit
