#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "avgsgd/common.hpp"

namespace avgsgd {

/// Exponential moving average with constant parameter alpha in (0, 1).
struct Ema {
  double alpha = 0.995;
};
/// Output is the last iterate w_{N-1}.
struct NoAveraging {};
/// Uniform average of w_0 ... w_{N-1}.
struct IterateAveraging {};
/// Uniform average of w_s ... w_{N-1}.
struct TailAveraging {
  std::size_t start = 0;
};
/// Arbitrary per-step averaging parameters alpha_0 ... alpha_{N-1}.
struct CustomAlphas {
  std::vector<double> alphas;
};
using SchemeKind = std::variant<Ema, NoAveraging, IterateAveraging, TailAveraging, CustomAlphas>;

/// Averaging scheme of the class
///
///   wbar_0 = w_0,  wbar_t = alpha_{t-1} wbar_{t-1} + (1 - alpha_{t-1}) w_{t-1},
///
/// whose output over a horizon N is the affine combination
///
///   wbar_N = beta_0 w_0 + sum_{t<N} c_t w_t,
///   beta_t = prod_{k=t}^{N-1} alpha_k  (beta_N = 1),   c_t = beta_{t+1} - beta_t >= 0.
class AveragingScheme {
 public:
  [[nodiscard]] std::size_t horizon() const { return alphas_.size(); }
  [[nodiscard]] std::span<const double> alphas() const { return alphas_; }
  /// beta_0 ... beta_N (length N + 1).
  [[nodiscard]] std::span<const double> betas() const { return betas_; }
  /// c_0 ... c_{N-1}.
  [[nodiscard]] std::span<const double> increments() const { return increments_; }
  [[nodiscard]] const SchemeKind& kind() const { return kind_; }
  /// Short label such as "ema", "none", "ia", "ta", "custom".
  [[nodiscard]] std::string label() const;
  /// The same averaging rule truncated to horizon n <= N (a custom scheme
  /// carrying the first n alphas; labels are preserved).
  [[nodiscard]] AveragingScheme prefix(std::size_t n) const;

 private:
  friend AveragingScheme make_scheme(const SchemeKind&, std::size_t);
  AveragingScheme(SchemeKind kind, std::vector<double> alphas, std::vector<double> betas);

  SchemeKind kind_;
  std::vector<double> alphas_;
  std::vector<double> betas_;
  std::vector<double> increments_;
};

AveragingScheme make_scheme(const SchemeKind& kind, std::size_t horizon);

struct SchemeWeights {
  std::vector<double> betas;
  std::vector<double> increments;
};
SchemeWeights scheme_weights(const AveragingScheme& scheme);

/// Parses `ema:0.995`, `none`, `ia`, `ta:1000`, `custom:@file` (one alpha per
/// line, '#' comments allowed). Relative custom paths resolve against `base_dir`.
SchemeKind parse_scheme_spec(std::string_view text, const std::filesystem::path& base_dir = {});
/// Inverse of parse_scheme_spec for the named kinds; custom kinds are written
/// inline as `custom:[a0, a1, ...]`, which parse_scheme_spec also accepts.
std::string format_scheme_spec(const SchemeKind& kind);

}  // namespace avgsgd
