#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Tabular results, CSV/SVG rendering and run manifests.

namespace avgsgd {

enum class Provenance { exact, mc, bound_upper, bound_lower };
const char* provenance_name(Provenance p);

/// Quantity names used in the `quantity` column.
const std::vector<std::string>& quantity_vocabulary();

struct ResultRow {
  std::string experiment_id;
  std::string t;  ///< step index, coordinate index (b_i rows) or "final"
  std::string scheme;
  std::string quantity;
  double value = 0.0;
  std::optional<double> stderr_;
  Provenance provenance = Provenance::exact;
};

class ResultTable {
 public:
  /// Throws ValidationError if `quantity` is not in the vocabulary.
  void add(ResultRow row);
  void append(const ResultTable& other);
  [[nodiscard]] const std::vector<ResultRow>& rows() const { return rows_; }

  /// Header `experiment_id,t,scheme,quantity,value,stderr,provenance`, LF line
  /// endings, values as %.16e (17 significant digits).
  [[nodiscard]] std::string to_csv() const;

 private:
  std::vector<ResultRow> rows_;
};

/// %.16e text of a double.
std::string format_sci(double x);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

/// Polyline plot with a log10 y axis. Non-positive y values are skipped.
/// Output depends only on the inputs (no timestamps).
std::string render_log_plot(const std::string& title, const std::string& x_label,
                            const std::vector<PlotSeries>& series);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t x);

/// Writes `text` to `path`, creating parent directories. Returns its FNV-1a hash.
std::uint64_t write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace avgsgd
