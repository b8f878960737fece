#include "avgsgd/harness.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "avgsgd/bounds.hpp"
#include "avgsgd/exact_engine.hpp"
#include "avgsgd/montecarlo.hpp"

namespace avgsgd {

namespace {

struct NamedScheme {
  std::string name;  // CSV-safe
  SchemeKind kind;
};

std::vector<NamedScheme> named_schemes(const ExperimentConfig& config) {
  std::vector<NamedScheme> out;
  const auto kinds = build_scheme_kinds(config);
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    std::string name = config.schemes[k];
    if (name.find(',') != std::string::npos || name.find('@') != std::string::npos) {
      name = "custom" + std::to_string(k);
    }
    out.push_back({name, kinds[k]});
  }
  return out;
}

std::vector<std::size_t> checkpoints(std::size_t horizon, std::size_t stride) {
  std::vector<std::size_t> ts;
  for (std::size_t t = 0; t <= horizon; t += stride) ts.push_back(t);
  if (ts.back() != horizon) ts.push_back(horizon);
  return ts;
}

exact::ExactOptions exact_options(const ExperimentConfig& config, std::size_t batch) {
  exact::ExactOptions opts;
  opts.batch = batch;
  opts.memory_budget_bytes = config.memory_budget_mb << 20;
  opts.jobs = resolve_jobs(config.jobs);
  return opts;
}

ResultRow row(std::string id, std::string t, std::string scheme, std::string quantity,
              double value, Provenance p, std::optional<double> se = std::nullopt) {
  return ResultRow{std::move(id), std::move(t), std::move(scheme), std::move(quantity),
                   value, se, p};
}

void add_path_rows(ResultTable& table, const std::string& id, const std::string& scheme,
                   const std::string& quantity, const std::vector<double>& values,
                   const std::vector<std::size_t>& ts, Provenance p,
                   const std::vector<double>* se = nullptr) {
  for (std::size_t t : ts) {
    table.add(row(id, std::to_string(t), scheme, quantity, values[t], p,
                  se ? std::optional<double>((*se)[t]) : std::nullopt));
  }
}

void add_final_risk(ResultTable& table, const std::string& id, const std::string& scheme,
                    const exact::RiskReport& r) {
  table.add(row(id, "final", scheme, "bias", r.bias, Provenance::exact));
  table.add(row(id, "final", scheme, "variance", r.variance, Provenance::exact));
  if (r.excess_is_exact) table.add(row(id, "final", scheme, "excess", r.excess_risk, Provenance::exact));
}

void add_bound(ResultTable& table, const std::string& id, const std::string& scheme,
               const bounds::BoundReport& r) {
  const Provenance p =
      r.kind == bounds::BoundKind::lower ? Provenance::bound_lower : Provenance::bound_upper;
  table.add(row(id, "final", scheme, "eff_bias", r.effective_bias, p));
  table.add(row(id, "final", scheme, "eff_var", r.effective_variance, p));
  table.add(row(id, "final", scheme, "feature_noise", r.feature_noise_term, p));
  table.add(row(id, "final", scheme, "label_noise", r.label_noise_term, p));
  table.add(row(id, "final", scheme, "bound", r.excess_risk_bound(), p));
  table.add(row(id, "final", scheme, "k_star", static_cast<double>(r.k_star), p));
  table.add(row(id, "final", scheme, "k_dagger", static_cast<double>(r.k_dagger), p));
}

// Upper bound (mini-batch form when batch > 1) and lower bound for an
// EMA scheme; inadmissible ones are reported on `log`.
void add_risk_bounds(ResultTable& table, const std::string& id, const std::string& scheme,
                        const ProblemInstance& inst, const ExperimentConfig& c, double alpha,
                        std::ostream& log) {
  try {
    add_bound(table, id, scheme,
              c.batch == 1 ? bounds::ema_upper_bound(inst, c.delta, alpha, c.N)
                           : bounds::minibatch_upper_bound(inst, c.delta, alpha, c.N, c.batch));
  } catch (const PreconditionError& e) {
    log << id << ": upper bound for " << scheme << " skipped: " << e.what() << '\n';
  }
  try {
    if (c.batch != 1) throw PreconditionError("lower bound is stated for batch size 1");
    add_bound(table, id, scheme, bounds::ema_lower_bound(inst, c.delta, alpha, c.N));
  } catch (const PreconditionError& e) {
    log << id << ": lower bound for " << scheme << " skipped: " << e.what() << '\n';
  }
}

std::string file_safe(std::string s) {
  for (char& ch : s) {
    if (ch == ':' || ch == '/' || ch == ' ') ch = '_';
  }
  return s;
}

mc::Mode config_mode(const ExperimentConfig& c) { return mc::parse_mode(c.mode); }

const char* mode_quantity(mc::Mode m) {
  switch (m) {
    case mc::Mode::bias_only: return "bias";
    case mc::Mode::var_only: return "variance";
    case mc::Mode::full: return "risk";
  }
  return "risk";
}

}  // namespace

Subcommand parse_subcommand(const std::string& name) {
  static const std::pair<const char*, Subcommand> table[] = {
      {"exact", Subcommand::exact},     {"bounds", Subcommand::bounds},
      {"simulate", Subcommand::simulate}, {"figures", Subcommand::figures},
      {"sweep", Subcommand::sweep},     {"critical_batch", Subcommand::critical_batch},
      {"verify", Subcommand::verify}};
  for (const auto& [n, s] : table) {
    if (name == n) return s;
  }
  throw ValidationError("unknown subcommand '" + name + "'");
}

const char* subcommand_name(Subcommand sub) {
  switch (sub) {
    case Subcommand::exact: return "exact";
    case Subcommand::bounds: return "bounds";
    case Subcommand::simulate: return "simulate";
    case Subcommand::figures: return "figures";
    case Subcommand::sweep: return "sweep";
    case Subcommand::critical_batch: return "critical_batch";
    case Subcommand::verify: return "verify";
  }
  return "exact";
}

ResultTable exact_table(const ExperimentConfig& config) {
  validate_config(config);
  const auto inst = build_instance(config);
  const auto ts = checkpoints(config.N, config.stride);
  ResultTable table;
  for (const auto& s : named_schemes(config)) {
    const auto scheme = make_scheme(s.kind, config.N);
    const auto path = exact::risk_path(inst, scheme, config.delta, config.batch);
    add_path_rows(table, "exact", s.name, "bias", path.bias, ts, Provenance::exact);
    add_path_rows(table, "exact", s.name, "variance", path.variance, ts, Provenance::exact);
    if (inst.well_specified()) {
      std::vector<double> excess(path.bias.size());
      for (std::size_t t = 0; t < excess.size(); ++t) excess[t] = 0.5 * (path.bias[t] + path.variance[t]);
      add_path_rows(table, "exact", s.name, "excess", excess, ts, Provenance::exact);
    }
    add_final_risk(table, "exact", s.name,
                   exact::exact_risk(inst, scheme, config.delta, exact_options(config, config.batch)));
  }
  return table;
}

ResultTable bounds_table(const ExperimentConfig& config, std::ostream& log) {
  validate_config(config);
  const auto inst = build_instance(config);
  const auto& spectrum = inst.spectrum();
  ResultTable table;
  std::optional<double> first_alpha;
  std::optional<std::size_t> tail_start;
  for (const auto& s : named_schemes(config)) {
    if (const auto* ta = std::get_if<TailAveraging>(&s.kind); ta && !tail_start) tail_start = ta->start;
    const auto* ema = std::get_if<Ema>(&s.kind);
    if (!ema) continue;
    if (!first_alpha) first_alpha = ema->alpha;
    const auto scheme = make_scheme(s.kind, config.N);
    add_final_risk(table, "bounds", s.name,
                   exact::exact_risk(inst, scheme, config.delta, exact_options(config, config.batch)));
    add_risk_bounds(table, "bounds", s.name, inst, config, ema->alpha, log);
    for (std::size_t i = 0; i < spectrum.dimension(); ++i) {
      const auto env = bounds::decay_rate_envelope(config.delta, spectrum[i], ema->alpha, config.N);
      const std::string idx = std::to_string(i + 1);
      table.add(row("bounds", idx, s.name, "b_i",
                    bounds::decay_rate(config.delta, spectrum[i], ema->alpha, config.N),
                    Provenance::exact));
      table.add(row("bounds", idx, s.name, "case", env.case_id, Provenance::exact));
    }
  }
  if (!first_alpha) throw ValidationError("schemes: bounds need at least one ema scheme");
  const auto cmp = bounds::scheme_comparison(spectrum, config.delta, config.N, *first_alpha,
                                             tail_start.value_or(config.N / 3));
  for (const auto& r : cmp.rows) {
    table.add(row("comparison", "final", r.scheme, "variance_minform", r.variance_min_form,
                  Provenance::exact));
    table.add(row("comparison", "final", r.scheme, "k_star", static_cast<double>(r.k_star),
                  Provenance::exact));
    table.add(row("comparison", "final", r.scheme, "k_dagger", static_cast<double>(r.k_dagger),
                  Provenance::exact));
    for (std::size_t i = 0; i < r.decay.size(); ++i) {
      table.add(row("comparison", std::to_string(i + 1), r.scheme, "b_i", r.decay[i],
                    Provenance::exact));
    }
  }
  return table;
}

ResultTable simulate_table(const ExperimentConfig& config) {
  validate_config(config);
  if (config.trials == 0) throw ValidationError("trials: simulate needs at least one trial");
  const auto inst = build_instance(config);
  const auto mode = config_mode(config);
  const auto ts = checkpoints(config.N, config.stride);
  ResultTable table;
  const auto schemes = named_schemes(config);
  for (std::size_t k = 0; k < schemes.size(); ++k) {
    const auto scheme = make_scheme(schemes[k].kind, config.N);
    const auto est = mc::simulate_paths(inst, scheme, config.delta, config.batch, mode,
                                        config.trials, derive_seed(config.seed, k),
                                        resolve_jobs(config.jobs));
    add_path_rows(table, "simulate", schemes[k].name, mode_quantity(mode), est.mean, ts,
                  Provenance::mc, &est.stderr_);
  }
  return table;
}

ResultTable sweep_table(const ExperimentConfig& config, std::ostream& log) {
  validate_config(config);
  const auto cells = expand_grid(config);
  std::vector<ResultTable> tables(cells.size());
  std::vector<std::string> logs(cells.size());
  parallel_for(cells.size(), resolve_jobs(config.jobs), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto& cfg = cells[c].config;
      const auto inst = build_instance(cfg);
      std::ostringstream cell_log;
      for (const auto& s : named_schemes(cfg)) {
        const auto scheme = make_scheme(s.kind, cfg.N);
        auto opts = exact_options(cfg, cfg.batch);
        opts.jobs = 1;
        add_final_risk(tables[c], cells[c].label, s.name,
                       exact::exact_risk(inst, scheme, cfg.delta, opts));
        if (const auto* ema = std::get_if<Ema>(&s.kind)) {
          add_risk_bounds(tables[c], cells[c].label, s.name, inst, cfg, ema->alpha, cell_log);
        }
      }
      logs[c] = cell_log.str();
    }
  });
  ResultTable table;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    table.append(tables[c]);
    log << logs[c];
  }
  return table;
}

ResultTable critical_batch_table(const ExperimentConfig& config) {
  validate_config(config);
  if (config.spectrum != "power_law") {
    throw ValidationError("spectrum: critical batch needs a power_law spectrum");
  }
  std::optional<double> alpha;
  std::string scheme_name;
  for (const auto& s : named_schemes(config)) {
    if (const auto* ema = std::get_if<Ema>(&s.kind)) {
      alpha = ema->alpha;
      scheme_name = s.name;
      break;
    }
  }
  if (!alpha) throw ValidationError("schemes: critical batch needs an ema scheme");
  const auto inst = build_instance(config);
  const auto scheme = make_scheme(Ema{*alpha}, config.N);
  const double n = static_cast<double>(config.N);
  ResultTable table;
  for (std::size_t b : config.batch_grid) {
    const auto r = bounds::critical_batch_scaling(config.spectrum_a, config.source_b, config.delta, *alpha, n,
                                      static_cast<double>(b), config.samples);
    const std::string id = "B=" + std::to_string(b);
    table.add(row(id, "final", scheme_name, "term1", r.variance_term1, Provenance::bound_upper));
    table.add(row(id, "final", scheme_name, "term2", r.variance_term2, Provenance::bound_upper));
    const auto risk = exact::exact_risk(inst, scheme, config.delta, exact_options(config, b));
    table.add(row(id, "final", scheme_name, "variance", risk.variance, Provenance::exact));
  }
  const auto r = bounds::critical_batch_scaling(config.spectrum_a, config.source_b, config.delta, *alpha, n,
                                    1.0, config.samples);
  table.add(row("critical_batch", "final", scheme_name, "critical_batch", r.critical_batch,
                Provenance::bound_upper));
  return table;
}

namespace {

struct FigureCurve {
  std::string scheme;
  SchemeKind kind;
};

// One panel pair (bias, variance) of exact curves with optional MC overlays.
void render_figure(const ExperimentConfig& config, const std::string& fig,
                   const std::vector<FigureCurve>& curves, std::size_t seed_base,
                   RunOutcome& outcome, const std::filesystem::path& dir) {
  const auto inst = build_instance(config);
  const auto ts = checkpoints(config.N, config.stride);
  std::vector<double> xs(ts.begin(), ts.end());
  struct Panel {
    const char* quantity;
    mc::Mode mode;
    std::vector<PlotSeries> series;
  };
  Panel panels[] = {{"bias", mc::Mode::bias_only, {}}, {"variance", mc::Mode::var_only, {}}};
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto scheme = make_scheme(curves[k].kind, config.N);
    const auto path = exact::risk_path(inst, scheme, config.delta, config.batch);
    for (std::size_t p = 0; p < 2; ++p) {
      auto& panel = panels[p];
      const auto& values = p == 0 ? path.bias : path.variance;
      ResultTable table;
      add_path_rows(table, fig, curves[k].scheme, panel.quantity, values, ts, Provenance::exact);
      PlotSeries exact_series{curves[k].scheme, xs, {}, false};
      for (std::size_t t : ts) exact_series.y.push_back(values[t]);
      panel.series.push_back(std::move(exact_series));
      if (config.trials > 0) {
        const std::uint64_t seed = derive_seed(config.seed, seed_base + 2 * k + p);
        const auto est = mc::simulate_paths(inst, scheme, config.delta, config.batch, panel.mode,
                                            config.trials, seed, resolve_jobs(config.jobs));
        add_path_rows(table, fig, curves[k].scheme, panel.quantity, est.mean, ts, Provenance::mc,
                      &est.stderr_);
        PlotSeries mc_series{curves[k].scheme + " (mc)", xs, {}, true};
        for (std::size_t t : ts) mc_series.y.push_back(est.mean[t]);
        panel.series.push_back(std::move(mc_series));
        outcome.seeds.emplace_back(fig + "." + panel.quantity + "." + curves[k].scheme, seed);
      }
      const std::string name = fig + "_" + panel.quantity + "_" + file_safe(curves[k].scheme) + ".csv";
      outcome.artifacts.push_back({name, write_text_file(dir / name, table.to_csv())});
    }
  }
  for (auto& panel : panels) {
    const std::string name = fig + "_" + panel.quantity + ".svg";
    const std::string svg =
        render_log_plot(fig + ": " + panel.quantity + " error", "step t", panel.series);
    outcome.artifacts.push_back({name, write_text_file(dir / name, svg)});
  }
}

}  // namespace

RunOutcome run(const ExperimentConfig& config, Subcommand sub, std::ostream& log) {
  RunOutcome outcome;
  if (sub == Subcommand::verify) {
    const auto checks = run_verify(resolve_jobs(config.jobs), config.seed);
    std::size_t width = 0;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    for (const auto& c : checks) {
      log << (c.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width))
          << c.name << "  " << c.detail << '\n';
      outcome.ok = outcome.ok && c.passed;
    }
    log << (outcome.ok ? "verify: all checks passed\n" : "verify: FAILED\n");
    return outcome;
  }
  validate_config(config);
  const std::filesystem::path dir = config.out;
  auto emit = [&](const std::string& name, const ResultTable& table) {
    outcome.artifacts.push_back({name, write_text_file(dir / name, table.to_csv())});
  };
  switch (sub) {
    case Subcommand::exact: emit("exact.csv", exact_table(config)); break;
    case Subcommand::bounds: emit("bounds.csv", bounds_table(config, log)); break;
    case Subcommand::simulate: {
      emit("simulate.csv", simulate_table(config));
      for (std::size_t k = 0; k < config.schemes.size(); ++k) {
        outcome.seeds.emplace_back("simulate." + named_schemes(config)[k].name,
                                   derive_seed(config.seed, k));
      }
      break;
    }
    case Subcommand::sweep: emit("sweep.csv", sweep_table(config, log)); break;
    case Subcommand::critical_batch: emit("critical_batch.csv", critical_batch_table(config)); break;
    case Subcommand::figures: {
      std::vector<FigureCurve> fig1;
      for (const auto& s : named_schemes(config)) fig1.push_back({s.name, s.kind});
      render_figure(config, "fig1", fig1, 0, outcome, dir);
      std::vector<FigureCurve> fig2;
      for (double a : config.alphas) fig2.push_back({"ema:" + format_real(a), Ema{a}});
      render_figure(config, "fig2", fig2, 2 * fig1.size(), outcome, dir);
      break;
    }
    case Subcommand::verify: break;
  }

  std::string manifest = "subcommand = " + std::string(subcommand_name(sub)) + "\n";
  std::istringstream cfg(format_config(config));
  for (std::string line; std::getline(cfg, line);) manifest += "config." + line + "\n";
  manifest += "seed.master = " + std::to_string(config.seed) + "\n";
  for (const auto& [name, seed] : outcome.seeds) {
    manifest += "seed." + name + " = " + std::to_string(seed) + "\n";
  }
  for (const auto& a : outcome.artifacts) {
    manifest += "checksum." + a.name + " = fnv1a64:" + hex64(a.checksum) + "\n";
  }
  write_text_file(dir / "manifest.txt", manifest);
  for (const auto& a : outcome.artifacts) log << "wrote " << (dir / a.name).string() << '\n';
  return outcome;
}

}  // namespace avgsgd
