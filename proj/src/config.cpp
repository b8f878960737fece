#include "avgsgd/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace avgsgd {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool is_list(std::string_view v) { return v.size() >= 2 && v.front() == '[' && v.back() == ']'; }

// Splits "[a, b, c]" at top-level commas (nested brackets are kept intact).
std::vector<std::string> split_list(std::string_view v, std::string_view key) {
  if (!is_list(v)) throw ValidationError(std::string(key) + ": expected a [list]");
  std::vector<std::string> items;
  const std::string_view inner = v.substr(1, v.size() - 2);
  if (trim(inner).empty()) return items;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= inner.size(); ++i) {
    if (i == inner.size() || (inner[i] == ',' && depth == 0)) {
      std::string item = trim(inner.substr(start, i - start));
      if (item.empty()) throw ValidationError(std::string(key) + ": empty list element");
      items.push_back(std::move(item));
      start = i + 1;
    } else if (inner[i] == '[') {
      ++depth;
    } else if (inner[i] == ']') {
      --depth;
    }
  }
  if (depth != 0) throw ValidationError(std::string(key) + ": unbalanced brackets");
  return items;
}

std::vector<std::string> as_items(std::string_view v, std::string_view key) {
  if (is_list(v)) return split_list(v, key);
  return {trim(v)};
}

std::string join(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out + "]";
}

template <class T, class F>
std::string join_with(const std::vector<T>& v, F&& fmt) {
  std::vector<std::string> items;
  for (const auto& x : v) items.push_back(fmt(x));
  return join(items);
}

std::string key_str(std::string_view key) { return std::string(key); }

std::size_t parse_size(std::string_view text, std::string_view key) {
  return static_cast<std::size_t>(parse_u64(text, key));
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::string_view)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  std::string key;
  Setter set;
  Getter get;
};

template <class Member>
Field real_field(std::string key, Member m) {
  return {key, [m](ExperimentConfig& c, std::string_view v, std::string_view k) {
            c.*m = parse_real(trim(v), k);
          },
          [m](const ExperimentConfig& c) { return format_real(c.*m); }};
}

template <class Member>
Field size_field(std::string key, Member m) {
  return {key, [m](ExperimentConfig& c, std::string_view v, std::string_view k) {
            using T = std::remove_reference_t<decltype(c.*m)>;
            c.*m = static_cast<T>(parse_u64(trim(v), k));
          },
          [m](const ExperimentConfig& c) { return std::to_string(c.*m); }};
}

Field choice_field(std::string key, std::string ExperimentConfig::*m,
                   std::initializer_list<std::string_view> allowed) {
  std::vector<std::string_view> keep(allowed);
  return {key, [m, keep](ExperimentConfig& c, std::string_view v, std::string_view k) {
            const std::string val = trim(v);
            if (std::find(keep.begin(), keep.end(), val) == keep.end()) {
              std::string msg = key_str(k) + ": expected one of";
              for (auto a : keep) msg += " " + std::string(a);
              throw ValidationError(msg + ", got '" + val + "'");
            }
            c.*m = val;
          },
          [m](const ExperimentConfig& c) { return c.*m; }};
}

Field real_list_field(std::string key, std::vector<double> ExperimentConfig::*m) {
  return {key, [m](ExperimentConfig& c, std::string_view v, std::string_view k) {
            std::vector<double> out;
            for (const auto& item : as_items(v, k)) out.push_back(parse_real(item, k));
            c.*m = std::move(out);
          },
          [m](const ExperimentConfig& c) {
            return join_with(c.*m, [](double x) { return format_real(x); });
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(choice_field("spectrum", &ExperimentConfig::spectrum, {"power_law", "explicit"}));
    f.push_back(real_field("spectrum_a", &ExperimentConfig::spectrum_a));
    f.push_back(real_list_field("spectrum_values", &ExperimentConfig::spectrum_values));
    f.push_back(size_field("d", &ExperimentConfig::d));
    f.push_back(choice_field("displacement", &ExperimentConfig::displacement,
                             {"gaussian", "source", "explicit"}));
    f.push_back(size_field("displacement_seed", &ExperimentConfig::displacement_seed));
    f.push_back(real_field("source_b", &ExperimentConfig::source_b));
    f.push_back(real_list_field("displacement_values", &ExperimentConfig::displacement_values));
    f.push_back(real_field("sigma2", &ExperimentConfig::sigma2));
    f.push_back(choice_field("moment_model", &ExperimentConfig::moment_model, {"gaussian", "custom"}));
    f.push_back(real_field("psi", &ExperimentConfig::psi));
    f.push_back(real_field("beta", &ExperimentConfig::beta));
    f.push_back(choice_field("noise_model", &ExperimentConfig::noise_model,
                             {"well_specified", "diagonal"}));
    f.push_back(real_list_field("noise_values", &ExperimentConfig::noise_values));
    f.push_back({"schemes",
                 [](ExperimentConfig& c, std::string_view v, std::string_view k) {
                   auto items = as_items(v, k);
                   if (items.empty()) throw ValidationError("schemes: at least one scheme required");
                   for (const auto& s : items) parse_scheme_spec(s, c.base_dir);
                   c.schemes = std::move(items);
                 },
                 [](const ExperimentConfig& c) { return join(c.schemes); }});
    f.push_back(real_list_field("alphas", &ExperimentConfig::alphas));
    f.push_back(real_field("delta", &ExperimentConfig::delta));
    f.push_back(size_field("N", &ExperimentConfig::N));
    f.push_back(size_field("batch", &ExperimentConfig::batch));
    f.push_back(size_field("trials", &ExperimentConfig::trials));
    f.push_back(size_field("seed", &ExperimentConfig::seed));
    f.push_back(size_field("stride", &ExperimentConfig::stride));
    f.push_back(choice_field("mode", &ExperimentConfig::mode, {"full", "bias_only", "var_only"}));
    f.push_back({"out",
                 [](ExperimentConfig& c, std::string_view v, std::string_view) { c.out = trim(v); },
                 [](const ExperimentConfig& c) { return c.out; }});
    f.push_back(size_field("memory_budget_mb", &ExperimentConfig::memory_budget_mb));
    f.push_back(size_field("jobs", &ExperimentConfig::jobs));
    f.push_back(real_field("samples", &ExperimentConfig::samples));
    f.push_back({"batch_grid",
                 [](ExperimentConfig& c, std::string_view v, std::string_view k) {
                   std::vector<std::size_t> out;
                   for (const auto& item : as_items(v, k)) out.push_back(parse_size(item, k));
                   c.batch_grid = std::move(out);
                 },
                 [](const ExperimentConfig& c) {
                   return join_with(c.batch_grid, [](std::size_t x) { return std::to_string(x); });
                 }});
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

bool is_sweepable(std::string_view key) {
  const auto& keys = sweepable_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

}  // namespace

const std::vector<std::string>& sweepable_keys() {
  static const std::vector<std::string> keys = {
      "spectrum_a", "d",      "displacement_seed", "source_b", "sigma2", "psi",    "beta",
      "delta",      "N",      "batch",             "trials",   "seed",   "samples"};
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, std::string_view value) {
  const Field& field = find_field(key);
  const std::string v = trim(value);
  if (is_sweepable(key) && is_list(v)) {
    auto items = split_list(v, key);
    if (items.empty()) throw ValidationError(key + ": sweep grid must not be empty");
    ExperimentConfig probe = config;
    for (auto& item : items) {
      field.set(probe, item, key);
      item = field.get(probe);  // canonical text
    }
    config.grids[key] = std::move(items);
    return;
  }
  field.set(config, v, key);
  config.grids.erase(key);
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig config;
  config.base_dir = base_dir;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    try {
      set_config_value(config, key, std::string_view(body).substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path());
}

std::string format_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key + " = ";
    if (auto it = config.grids.find(f.key); it != config.grids.end()) {
      out += join(it->second);
    } else {
      out += f.get(config);
    }
    out += '\n';
  }
  return out;
}

ProblemInstance build_instance(const ExperimentConfig& c) {
  const SpectrumSpec spectrum_spec =
      c.spectrum == "explicit" ? SpectrumSpec{ExplicitValues{c.spectrum_values}}
                               : SpectrumSpec{PowerLaw{c.spectrum_a}};
  Spectrum spectrum = make_spectrum(spectrum_spec, c.d);
  DisplacementSpec displacement;
  if (c.displacement == "source") {
    displacement = SourceCondition{c.source_b};
  } else if (c.displacement == "explicit") {
    displacement = ExplicitDisplacement{c.displacement_values};
  } else {
    displacement = GaussianRandom{c.displacement_seed};
  }
  const MomentModel moments =
      c.moment_model == "custom" ? MomentModel{CustomMoments{c.psi, c.beta}} : GaussianMoments{};
  const NoiseModel noise =
      c.noise_model == "diagonal" ? NoiseModel{DiagonalNoise{c.noise_values}} : WellSpecified{};
  return make_instance(spectrum, displacement, c.sigma2, moments, noise);
}

std::vector<SchemeKind> build_scheme_kinds(const ExperimentConfig& config) {
  std::vector<SchemeKind> kinds;
  for (const auto& s : config.schemes) kinds.push_back(parse_scheme_spec(s, config.base_dir));
  return kinds;
}

void validate_config(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
  };
  for (const auto& cell : expand_grid(c)) {
    const ExperimentConfig& x = cell.config;
    require(x.d >= 1, "d: must be at least 1");
    require(x.delta > 0.0, "delta: must be positive");
    require(x.N >= 1, "N: must be at least 1");
    require(x.batch >= 1, "batch: must be at least 1");
    require(x.stride >= 1, "stride: must be at least 1");
    require(x.samples > 0.0, "samples: must be positive");
    require(!x.schemes.empty(), "schemes: at least one scheme required");
    for (double a : x.alphas) require(a > 0.0 && a < 1.0, "alphas: each value must lie in (0, 1)");
    for (std::size_t b : x.batch_grid) require(b >= 1, "batch_grid: entries must be at least 1");
    build_instance(x);
    for (const auto& kind : build_scheme_kinds(x)) make_scheme(kind, x.N);
  }
}

std::vector<SweepCell> expand_grid(const ExperimentConfig& config) {
  ExperimentConfig base = config;
  base.grids.clear();
  std::vector<SweepCell> cells{{"base", base}};
  bool first = true;
  for (const auto& [key, values] : config.grids) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells) {
      for (const auto& v : values) {
        SweepCell c = cell;
        set_config_value(c.config, key, v);
        c.label = (first ? std::string() : cell.label + ";") + key + "=" + v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
    first = false;
  }
  return cells;
}

}  // namespace avgsgd
