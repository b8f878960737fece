#include "avgsgd/schemes.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace avgsgd {

AveragingScheme::AveragingScheme(SchemeKind kind, std::vector<double> alphas,
                                 std::vector<double> betas)
    : kind_(std::move(kind)), alphas_(std::move(alphas)), betas_(std::move(betas)) {
  const std::size_t n = alphas_.size();
  increments_.resize(n);
  for (std::size_t t = 0; t < n; ++t) increments_[t] = betas_[t + 1] - betas_[t];
}

std::string AveragingScheme::label() const {
  struct Visitor {
    std::string operator()(const Ema&) const { return "ema"; }
    std::string operator()(const NoAveraging&) const { return "none"; }
    std::string operator()(const IterateAveraging&) const { return "ia"; }
    std::string operator()(const TailAveraging&) const { return "ta"; }
    std::string operator()(const CustomAlphas&) const { return "custom"; }
  };
  return std::visit(Visitor{}, kind_);
}

AveragingScheme AveragingScheme::prefix(std::size_t n) const {
  if (n == 0 || n > horizon()) throw ValidationError("scheme: prefix length must be in [1, N]");
  if (n == horizon()) return *this;
  std::vector<double> alphas(alphas_.begin(), alphas_.begin() + static_cast<std::ptrdiff_t>(n));
  AveragingScheme out = make_scheme(CustomAlphas{alphas}, n);
  out.kind_ = kind_;
  return out;
}

namespace {

void require_alpha(double a, std::size_t t) {
  if (!(a >= 0.0 && a <= 1.0)) {
    std::ostringstream msg;
    msg << "scheme: alpha_" << t << " = " << a << " is outside [0, 1]";
    throw ValidationError(msg.str());
  }
}

}  // namespace

AveragingScheme make_scheme(const SchemeKind& kind, std::size_t horizon) {
  if (horizon == 0) throw ValidationError("scheme: horizon N must be positive");
  const std::size_t n = horizon;
  std::vector<double> alphas(n);
  std::vector<double> betas(n + 1);
  betas[n] = 1.0;

  // Named schemes use their closed-form betas; custom schemes take the
  // backward product.
  if (const auto* ema = std::get_if<Ema>(&kind)) {
    if (!(ema->alpha > 0.0 && ema->alpha < 1.0)) {
      throw ValidationError("scheme: ema requires alpha in (0, 1)");
    }
    for (std::size_t t = 0; t < n; ++t) {
      alphas[t] = ema->alpha;
      betas[t] = std::pow(ema->alpha, static_cast<double>(n - t));
    }
  } else if (std::holds_alternative<NoAveraging>(kind)) {
    for (std::size_t t = 0; t < n; ++t) {
      alphas[t] = 0.0;
      betas[t] = 0.0;
    }
  } else if (std::holds_alternative<IterateAveraging>(kind)) {
    for (std::size_t t = 0; t < n; ++t) {
      alphas[t] = static_cast<double>(t) / static_cast<double>(t + 1);
      betas[t] = static_cast<double>(t) / static_cast<double>(n);
    }
  } else if (const auto* ta = std::get_if<TailAveraging>(&kind)) {
    const std::size_t s = ta->start;
    if (s >= n) {
      std::ostringstream msg;
      msg << "scheme: tail averaging requires 0 <= s < N (got s = " << s << ", N = " << n << ")";
      throw ValidationError(msg.str());
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (t < s) {
        alphas[t] = 0.0;
        betas[t] = 0.0;
      } else {
        alphas[t] = static_cast<double>(t - s) / static_cast<double>(t - s + 1);
        betas[t] = static_cast<double>(t - s) / static_cast<double>(n - s);
      }
    }
  } else {
    const auto& custom = std::get<CustomAlphas>(kind);
    if (custom.alphas.size() != n) {
      std::ostringstream msg;
      msg << "scheme: custom alpha sequence has length " << custom.alphas.size()
          << " but N = " << n;
      throw ValidationError(msg.str());
    }
    for (std::size_t t = 0; t < n; ++t) {
      require_alpha(custom.alphas[t], t);
      alphas[t] = custom.alphas[t];
    }
    for (std::size_t t = n; t-- > 0;) betas[t] = alphas[t] * betas[t + 1];
  }
  return AveragingScheme(kind, std::move(alphas), std::move(betas));
}

SchemeWeights scheme_weights(const AveragingScheme& scheme) {
  return SchemeWeights{{scheme.betas().begin(), scheme.betas().end()},
                       {scheme.increments().begin(), scheme.increments().end()}};
}

namespace {

std::vector<double> parse_alpha_list(std::string_view body) {
  std::vector<double> out;
  std::string item;
  std::istringstream in{std::string(body)};
  while (std::getline(in, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_real(item, "custom scheme alpha"));
  }
  return out;
}

std::vector<double> read_alpha_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("scheme: cannot open custom alpha file '" + path.string() + "'");
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_real(line, "custom scheme alpha"));
  }
  return out;
}

}  // namespace

SchemeKind parse_scheme_spec(std::string_view text, const std::filesystem::path& base_dir) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  const bool has_arg = colon != std::string_view::npos;

  if (head == "none" && !has_arg) return NoAveraging{};
  if (head == "ia" && !has_arg) return IterateAveraging{};
  if (head == "ema" && has_arg) return Ema{parse_real(arg, "ema alpha")};
  if (head == "ta" && has_arg) return TailAveraging{parse_u64(arg, "tail averaging start")};
  if (head == "custom" && has_arg) {
    if (!arg.empty() && arg.front() == '@') {
      std::filesystem::path p{std::string(arg.substr(1))};
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      return CustomAlphas{read_alpha_file(p)};
    }
    if (arg.size() >= 2 && arg.front() == '[' && arg.back() == ']') {
      return CustomAlphas{parse_alpha_list(arg.substr(1, arg.size() - 2))};
    }
  }
  throw ValidationError("scheme: unrecognized scheme spec '" + std::string(text) +
                        "' (expected ema:<alpha>, none, ia, ta:<s>, custom:@<file>)");
}

std::string format_scheme_spec(const SchemeKind& kind) {
  if (const auto* e = std::get_if<Ema>(&kind)) return "ema:" + format_real(e->alpha);
  if (std::holds_alternative<NoAveraging>(kind)) return "none";
  if (std::holds_alternative<IterateAveraging>(kind)) return "ia";
  if (const auto* t = std::get_if<TailAveraging>(&kind)) return "ta:" + std::to_string(t->start);
  const auto& c = std::get<CustomAlphas>(kind);
  std::string out = "custom:[";
  for (std::size_t i = 0; i < c.alphas.size(); ++i) {
    if (i) out += ",";
    out += format_real(c.alphas[i]);
  }
  return out + "]";
}

}  // namespace avgsgd
