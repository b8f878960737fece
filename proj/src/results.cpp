#include "avgsgd/results.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "avgsgd/common.hpp"

namespace avgsgd {

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::exact: return "exact";
    case Provenance::mc: return "mc";
    case Provenance::bound_upper: return "bound_upper";
    case Provenance::bound_lower: return "bound_lower";
  }
  return "exact";
}

const std::vector<std::string>& quantity_vocabulary() {
  static const std::vector<std::string> v = {
      "bias",          "variance",    "risk",          "excess",   "eff_bias", "eff_var",
      "feature_noise", "label_noise", "bound",         "k_star",   "k_dagger", "b_i",
      "variance_minform", "term1",    "term2",         "critical_batch", "case"};
  return v;
}

void ResultTable::add(ResultRow row) {
  const auto& vocab = quantity_vocabulary();
  if (std::find(vocab.begin(), vocab.end(), row.quantity) == vocab.end()) {
    throw ValidationError("unknown result quantity '" + row.quantity + "'");
  }
  rows_.push_back(std::move(row));
}

void ResultTable::append(const ResultTable& other) {
  rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

std::string format_sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.16e", x);
  return buf;
}

std::string ResultTable::to_csv() const {
  std::string out = "experiment_id,t,scheme,quantity,value,stderr,provenance\n";
  for (const auto& r : rows_) {
    out += r.experiment_id + ',' + r.t + ',' + r.scheme + ',' + r.quantity + ',' +
           format_sci(r.value) + ',' + (r.stderr_ ? format_sci(*r.stderr_) : std::string()) + ',' +
           provenance_name(r.provenance) + '\n';
  }
  return out;
}

namespace {

std::string fixed(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string render_log_plot(const std::string& title, const std::string& x_label,
                            const std::vector<PlotSeries>& series) {
  constexpr double width = 720, height = 440, left = 70, right = 170, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!(s.y[k] > 0.0) || !std::isfinite(s.y[k])) continue;
      x_min = std::min(x_min, s.x[k]);
      x_max = std::max(x_max, s.x[k]);
      y_min = std::min(y_min, std::log10(s.y[k]));
      y_max = std::max(y_max, std::log10(s.y[k]));
    }
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (x_max == x_min) x_max = x_min + 1;
  y_min = std::floor(y_min);
  y_max = std::ceil(y_max);
  if (y_max == y_min) y_max = y_min + 1;
  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double ly) { return top + (y_max - ly) / (y_max - y_min) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(width) +
                    "\" height=\"" + fixed(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(left) + "\" y=\"24\" font-size=\"14\">" + escape(title) + "</text>\n";
  svg += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) +
         "\" height=\"" + fixed(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = y_min; e <= y_max; e += 1.0) {
    svg += "<line x1=\"" + fixed(left) + "\" x2=\"" + fixed(left + pw) + "\" y1=\"" + fixed(py(e)) +
           "\" y2=\"" + fixed(py(e)) + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(py(e) + 4) +
           "\" text-anchor=\"end\">1e" + std::to_string(static_cast<int>(e)) + "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double x = x_min + (x_max - x_min) * k / 4.0;
    svg += "<text x=\"" + fixed(px(x)) + "\" y=\"" + fixed(top + ph + 18) +
           "\" text-anchor=\"middle\">" + fixed(x) + "</text>\n";
  }
  svg += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(height - 10) +
         "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t k = 0; k < ser.x.size() && k < ser.y.size(); ++k) {
      if (!(ser.y[k] > 0.0) || !std::isfinite(ser.y[k])) continue;
      if (!points.empty()) points += ' ';
      points += fixed(px(ser.x[k])) + ',' + fixed(py(std::log10(ser.y[k])));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\"" +
           (ser.dashed ? " stroke-dasharray=\"4 3\"" : "") + " points=\"" + points + "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(s);
    svg += "<line x1=\"" + fixed(left + pw + 10) + "\" x2=\"" + fixed(left + pw + 34) + "\" y1=\"" +
           fixed(ly - 4) + "\" y2=\"" + fixed(ly - 4) + "\" stroke=\"" + color + "\"" +
           (ser.dashed ? " stroke-dasharray=\"4 3\"" : "") + "/>\n";
    svg += "<text x=\"" + fixed(left + pw + 40) + "\" y=\"" + fixed(ly) + "\">" + escape(ser.name) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::uint64_t write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("out: cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw ValidationError("out: failed writing '" + path.string() + "'");
  return fnv1a64(text);
}

}  // namespace avgsgd
