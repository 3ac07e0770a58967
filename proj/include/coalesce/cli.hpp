#pragma once

// Command-line front end: `explain`, `compare` and `bench`.
//
// Exit codes: 0 success, 1 compute or validation error, 2 usage error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coalesce/coalitions.hpp"
#include "coalesce/constrained_solver.hpp"
#include "coalesce/error.hpp"
#include "coalesce/exact_oracle.hpp"
#include "coalesce/parallel.hpp"
#include "coalesce/shapley.hpp"
#include "coalesce/synthetic.hpp"
#include "coalesce/tabular.hpp"

namespace coalesce::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

enum class Method { Approx, Exact, Both };

struct CoalitionMode {
  bool sampled = false;
  std::size_t draws = 0;
};

struct RunConfig {
  std::string train_path;
  std::string prediction_column;
  std::string predictions_path;
  std::string explain_path;  // empty: explain every training row
  std::set<std::string> categorical;
  std::set<std::string> numeric;
  std::set<std::string> drop;

  Method method = Method::Approx;
  CoalitionMode coalitions;
  std::string coalitions_spec = "all";
  std::uint64_t seed = 0;
  double anchor_weight = kDefaultAnchorWeight;
  int max_exhaustive = kDefaultMaxExhaustiveFeatures;

  double kappa_multiplier = kDefaultKappaMultiplier;
  std::size_t chunk_size = kDefaultChunkSize;
  bool joint_assembly = false;
  unsigned threads = default_threads();

  std::string output;
  std::string manifest;
  std::string emit_v;
  double tolerance = 1e-5;

  // bench
  std::vector<int> p_grid{8, 10, 12};
  std::size_t bench_rows = 2000;
  std::size_t bench_explain = 10;
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Approx: return "approx";
    case Method::Exact: return "exact";
    case Method::Both: return "both";
  }
  return "?";
}

inline CoalitionMode parse_coalitions(const std::string& spec) {
  if (spec == "all") return {};
  const std::string prefix = "sample:";
  if (spec.rfind(prefix, 0) == 0) {
    const auto rest = spec.substr(prefix.size());
    char* end = nullptr;
    const auto n = std::strtoull(rest.c_str(), &end, 10);
    if (!rest.empty() && end && *end == '\0' && n > 0) return {true, static_cast<std::size_t>(n)};
  }
  throw CLI::ValidationError("--coalitions", "expected 'all' or 'sample:N' with N >= 1, got '" + spec + "'");
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::string real(double v) { return format_real(v); }

inline std::string round2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  return s == "-0.00" ? "0.00" : s;
}

/// "out.csv" + "approx" -> "out.approx.csv"
inline std::string with_suffix(const std::string& path, const std::string& tag) {
  std::filesystem::path p(path);
  auto ext = p.extension().string();
  if (ext.empty()) ext = ".csv";
  return (p.parent_path() / (p.stem().string() + "." + tag + ext)).string();
}

inline void require_readable(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, std::string(what) + " '" + path + "' is not readable");
}

inline void require_writable_dir(const std::string& path) {
  if (path.empty()) return;
  auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty() && !std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::Io, "output directory '" + dir.string() + "' does not exist");
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  return out;
}

inline void validate(const RunConfig& c, bool needs_train) {
  if (needs_train) {
    require_readable(c.train_path, "training file");
    if (!c.predictions_path.empty()) require_readable(c.predictions_path, "predictions file");
    if (!c.explain_path.empty()) require_readable(c.explain_path, "rows-to-explain file");
  }
  for (const auto* p : {&c.output, &c.manifest, &c.emit_v}) require_writable_dir(*p);
  if (c.chunk_size < 1) throw Error(ErrorKind::InvalidArgument, "--chunk-size must be at least 1");
  if (!(c.kappa_multiplier > 0) || !std::isfinite(c.kappa_multiplier)) {
    throw Error(ErrorKind::InvalidArgument, "--kappa-multiplier must be positive and finite");
  }
  if (!(c.anchor_weight > 0) || !std::isfinite(c.anchor_weight)) {
    throw Error(ErrorKind::InvalidArgument, "--anchor-weight must be positive and finite");
  }
}

struct Inputs {
  DesignArtifacts data;
  std::vector<std::vector<std::string>> rows;
  CoalitionPlan plan;
};

inline Inputs load_inputs(const RunConfig& c) {
  TableHints hints;
  hints.categorical = c.categorical;
  hints.numeric = c.numeric;
  hints.drop = c.drop;
  hints.prediction_column = c.prediction_column;
  auto table = load_table(c.train_path, hints);

  PredictionVector f;
  if (!c.predictions_path.empty()) {
    f = load_predictions(c.predictions_path);
  } else {
    f = *table.predictions;
  }
  if (f.size() != table.rows.size()) {
    throw Error(ErrorKind::DimensionMismatch, std::to_string(f.size()) + " predictions for " +
                                                  std::to_string(table.rows.size()) + " training rows");
  }

  Inputs in;
  in.rows = c.explain_path.empty() ? table.rows : load_rows(c.explain_path, table.schema);
  in.data = DesignArtifacts::build(table.schema, table.rows, std::move(f));
  const int p = in.data.p();
  in.plan = c.coalitions.sampled ? sample_coalitions(p, c.coalitions.draws, c.seed, c.anchor_weight)
                                 : enumerate_all(p, c.max_exhaustive, c.anchor_weight);
  return in;
}

inline ApproxSettings approx_settings(const RunConfig& c) {
  ApproxSettings s;
  s.kappa_multiplier = c.kappa_multiplier;
  s.solver.chunk_size = c.chunk_size;
  s.solver.threads = c.threads;
  s.solver.joint_assembly = c.joint_assembly;
  return s;
}

inline void write_phi_csv(std::ostream& os, const FeatureSchema& schema, const BatchExplanation& batch) {
  os << "row_id,base_value";
  for (const auto& f : schema.features) os << ",phi_" << f.name;
  os << '\n';
  for (std::size_t r = 0; r < batch.results.size(); ++r) {
    if (!batch.results[r]) continue;
    const auto& res = *batch.results[r];
    os << r << ',' << real(res.phi0);
    for (Eigen::Index i = 0; i < res.phi.size(); ++i) os << ',' << real(res.phi[i]);
    os << '\n';
  }
}

inline void write_v_csv(std::ostream& os, const CoalitionPlan& plan, const BatchExplanation& batch) {
  os << "row_id,mask,v\n";
  for (std::size_t r = 0; r < batch.results.size(); ++r) {
    if (!batch.results[r]) continue;
    for (std::size_t s = 0; s < plan.size(); ++s) {
      os << r << ',' << plan.coalitions[s].mask << ','
         << real(batch.v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s))) << '\n';
    }
  }
}

inline nlohmann::ordered_json config_json(const RunConfig& c, const char* command) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["train"] = c.train_path;
  j["prediction_column"] = c.prediction_column;
  j["predictions"] = c.predictions_path;
  j["explain"] = c.explain_path;
  j["categorical"] = c.categorical;
  j["numeric"] = c.numeric;
  j["drop"] = c.drop;
  j["method"] = to_string(c.method);
  j["coalitions"] = c.coalitions_spec;
  j["seed"] = c.seed;
  j["anchor_weight"] = c.anchor_weight;
  j["max_exhaustive_features"] = c.max_exhaustive;
  j["kappa_multiplier"] = c.kappa_multiplier;
  j["chunk_size"] = c.chunk_size;
  j["joint_assembly"] = c.joint_assembly;
  j["threads"] = c.threads;
  j["output"] = c.output;
  j["emit_v"] = c.emit_v;
  return j;
}

inline void report_failures(std::ostream& err, const BatchExplanation& batch, const char* tag) {
  for (const auto& f : batch.failures) err << "error (" << tag << ") row " << f.row << ": " << f.message << '\n';
}

struct Gaps {
  double efficiency = 0.0;
  double base = 0.0;
};

inline Gaps max_gaps(const BatchExplanation& batch) {
  Gaps g;
  for (const auto& r : batch.results) {
    if (!r) continue;
    g.efficiency = std::max(g.efficiency, std::abs(r->efficiency_gap));
    g.base = std::max(g.base, std::abs(r->base_gap));
  }
  return g;
}

}  // namespace detail

inline int cmd_explain(const RunConfig& c, std::ostream& err = std::cerr) {
  detail::validate(c, true);
  if (c.output.empty()) throw Error(ErrorKind::InvalidArgument, "--output is required");
  const auto in = detail::load_inputs(c);

  nlohmann::ordered_json manifest = detail::config_json(c, "explain");
  manifest["p"] = in.data.p();
  manifest["q"] = in.data.q();
  manifest["n_train"] = in.data.design.rows();
  manifest["n_explained"] = in.rows.size();
  manifest["n_coalitions"] = in.plan.size();
  manifest["kappa"] = kappa_default(in.data.gram, c.kappa_multiplier);
  manifest["outputs"] = nlohmann::ordered_json::array();

  bool failed = false;
  auto emit = [&](const BatchExplanation& batch, const std::string& tag, bool suffixed) {
    const auto phi_path = suffixed ? detail::with_suffix(c.output, tag) : c.output;
    {
      auto os = detail::open_output(phi_path);
      detail::write_phi_csv(os, in.data.schema, batch);
    }
    manifest["outputs"].push_back(phi_path);
    if (!c.emit_v.empty()) {
      const auto v_path = suffixed ? detail::with_suffix(c.emit_v, tag) : c.emit_v;
      auto os = detail::open_output(v_path);
      detail::write_v_csv(os, in.plan, batch);
      manifest["outputs"].push_back(v_path);
    }
    const auto gaps = detail::max_gaps(batch);
    manifest["diagnostics"][tag] = {{"max_abs_efficiency_gap", gaps.efficiency},
                                    {"max_abs_base_gap", gaps.base},
                                    {"failed_rows", batch.failures.size()}};
    detail::report_failures(err, batch, tag.c_str());
    failed = failed || !batch.failures.empty();
  };

  const bool both = c.method == Method::Both;
  if (c.method != Method::Exact) emit(explain_approx(in.data, in.plan, in.rows, detail::approx_settings(c)), "approx", both);
  if (c.method != Method::Approx) emit(explain_exact_batch(in.data, in.plan, in.rows, c.threads), "exact", both);

  if (!c.manifest.empty()) {
    auto os = detail::open_output(c.manifest);
    os << manifest.dump(2) << '\n';
  }
  return failed ? kExitError : kExitOk;
}

/// Summary of an approx-vs-exact run on one plan.
struct CompareReport {
  std::vector<std::string> features;
  std::vector<double> max_abs_dphi;  // per feature, over rows
  double max_abs_dphi0 = 0.0;
  double max_abs_dphi_all = 0.0;     // over features and rows
  double max_abs_phi_exact = 0.0;
  std::vector<Mask> masks;
  std::vector<double> max_abs_dv;    // per coalition, over rows
  double approx_seconds = 0.0;
  double exact_seconds = 0.0;
  std::size_t rows = 0;

  double speedup() const { return approx_seconds > 0 ? exact_seconds / approx_seconds : 0.0; }
};

inline CompareReport compare_batches(const FeatureSchema& schema, const CoalitionPlan& plan,
                                     const BatchExplanation& approx, const BatchExplanation& exact) {
  CompareReport rep;
  rep.features = schema.names();
  rep.max_abs_dphi.assign(schema.size(), 0.0);
  rep.masks.reserve(plan.size());
  for (const auto& c : plan.coalitions) rep.masks.push_back(c.mask);
  rep.max_abs_dv.assign(plan.size(), 0.0);
  for (std::size_t r = 0; r < approx.results.size(); ++r) {
    if (!approx.results[r] || !exact.results[r]) continue;
    ++rep.rows;
    const auto& a = *approx.results[r];
    const auto& e = *exact.results[r];
    rep.max_abs_dphi0 = std::max(rep.max_abs_dphi0, std::abs(a.phi0 - e.phi0));
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      rep.max_abs_dphi[i] = std::max(rep.max_abs_dphi[i], std::abs(a.phi[k] - e.phi[k]));
      rep.max_abs_phi_exact = std::max(rep.max_abs_phi_exact, std::abs(e.phi[k]));
    }
    for (std::size_t s = 0; s < plan.size(); ++s) {
      const auto ri = static_cast<Eigen::Index>(r);
      const auto si = static_cast<Eigen::Index>(s);
      rep.max_abs_dv[s] = std::max(rep.max_abs_dv[s], std::abs(approx.v(ri, si) - exact.v(ri, si)));
    }
  }
  for (double d : rep.max_abs_dphi) rep.max_abs_dphi_all = std::max(rep.max_abs_dphi_all, d);
  return rep;
}

inline nlohmann::ordered_json to_json(const CompareReport& rep, double tolerance) {
  nlohmann::ordered_json j;
  j["rows_compared"] = rep.rows;
  j["max_abs_dphi"] = rep.max_abs_dphi_all;
  j["max_abs_dphi0"] = rep.max_abs_dphi0;
  j["max_abs_phi_exact"] = rep.max_abs_phi_exact;
  j["relative_dphi"] = rep.max_abs_phi_exact > 0 ? rep.max_abs_dphi_all / rep.max_abs_phi_exact : 0.0;
  j["tolerance"] = tolerance;
  j["pass"] = rep.max_abs_dphi_all <= tolerance;
  j["seconds"] = {{"approx", rep.approx_seconds}, {"exact", rep.exact_seconds}};
  j["speedup"] = rep.speedup();
  auto& feats = j["features"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rep.features.size(); ++i) {
    feats.push_back({{"name", rep.features[i]}, {"max_abs_dphi", rep.max_abs_dphi[i]}});
  }
  auto& coal = j["coalitions"] = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < rep.masks.size(); ++s) coal.push_back({{"mask", rep.masks[s]}, {"max_abs_dv", rep.max_abs_dv[s]}});
  return j;
}

inline int cmd_compare(const RunConfig& c, std::ostream& human = std::cout, std::ostream& err = std::cerr) {
  detail::validate(c, true);
  if (!(c.tolerance >= 0)) throw Error(ErrorKind::InvalidArgument, "--tolerance must be non-negative");
  const auto in = detail::load_inputs(c);

  auto t0 = detail::Clock::now();
  const auto approx = explain_approx(in.data, in.plan, in.rows, detail::approx_settings(c));
  const double approx_s = detail::seconds_since(t0);
  t0 = detail::Clock::now();
  const auto exact = explain_exact_batch(in.data, in.plan, in.rows, c.threads);
  const double exact_s = detail::seconds_since(t0);
  detail::report_failures(err, approx, "approx");
  detail::report_failures(err, exact, "exact");

  auto rep = compare_batches(in.data.schema, in.plan, approx, exact);
  rep.approx_seconds = approx_s;
  rep.exact_seconds = exact_s;

  // Table-style view of the first explained row, two decimals.
  for (std::size_t r = 0; r < approx.results.size(); ++r) {
    if (!approx.results[r] || !exact.results[r]) continue;
    human << "row " << r << "\nmethod";
    for (const auto& n : rep.features) human << '\t' << n;
    human << "\nexact";
    for (Eigen::Index i = 0; i < exact.results[r]->phi.size(); ++i) human << '\t' << detail::round2(exact.results[r]->phi[i]);
    human << "\napprox";
    for (Eigen::Index i = 0; i < approx.results[r]->phi.size(); ++i) human << '\t' << detail::round2(approx.results[r]->phi[i]);
    human << '\n';
    break;
  }
  char line[256];
  std::snprintf(line, sizeof line, "max |dphi| = %.3e (relative %.3e), tolerance %.3e\n", rep.max_abs_dphi_all,
                rep.max_abs_phi_exact > 0 ? rep.max_abs_dphi_all / rep.max_abs_phi_exact : 0.0, c.tolerance);
  human << line;
  std::snprintf(line, sizeof line, "approx %.3f s, exact %.3f s, speedup %.2f\n", approx_s, exact_s, rep.speedup());
  human << line;

  const auto j = to_json(rep, c.tolerance);
  if (!c.output.empty()) {
    auto os = detail::open_output(c.output);
    os << j.dump(2) << '\n';
  }
  if (!c.manifest.empty()) {
    auto m = detail::config_json(c, "compare");
    m["tolerance"] = c.tolerance;
    m["n_coalitions"] = in.plan.size();
    auto os = detail::open_output(c.manifest);
    os << m.dump(2) << '\n';
  }
  const bool ok = rep.max_abs_dphi_all <= c.tolerance && approx.failures.empty() && exact.failures.empty();
  return ok ? kExitOk : kExitError;
}

struct BenchRecord {
  int p = 0;
  std::size_t n_coalitions = 0;
  std::string method;
  double seconds = 0.0;
  std::size_t peak_block_bytes = 0;
  double speedup_vs_sequential = 0.0;
  double max_abs_dphi_vs_sequential = 0.0;
};

/// Synthetic data for p features: a quarter (rounded down) categorical with three levels.
inline SyntheticData bench_data(int p, std::size_t rows, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.rows = rows;
  spec.categorical = p / 4;
  spec.numeric = p - spec.categorical;
  spec.levels = 3;
  spec.seed = seed;
  return make_synthetic(spec);
}

/// Times, for one p, the batched approximate path, the Gram-subset oracle and
/// the sequential refit-per-coalition profile on the same plan and rows.
inline std::vector<BenchRecord> bench_one(int p, const RunConfig& c) {
  const auto syn = bench_data(p, c.bench_rows, c.seed);
  const auto data = DesignArtifacts::build(syn.schema, syn.rows, syn.f);
  const auto plan = c.coalitions.sampled ? sample_coalitions(p, c.coalitions.draws, c.seed, c.anchor_weight)
                                         : enumerate_all(p, c.max_exhaustive, c.anchor_weight);
  const auto n_explain = std::min(c.bench_explain, syn.rows.size());
  const std::vector<std::vector<std::string>> rows(syn.rows.begin(), syn.rows.begin() + static_cast<std::ptrdiff_t>(n_explain));
  const auto q = static_cast<Eigen::Index>(data.q());

  SolveStats stats;
  auto t0 = detail::Clock::now();
  const auto approx = explain_approx(data, plan, rows, detail::approx_settings(c), &stats);
  const double approx_s = detail::seconds_since(t0);

  t0 = detail::Clock::now();
  const auto exact = explain_exact_batch(data, plan, rows, c.threads);
  const double exact_s = detail::seconds_since(t0);

  t0 = detail::Clock::now();
  Eigen::MatrixXd x_rows(static_cast<Eigen::Index>(rows.size()), q);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x_rows.row(static_cast<Eigen::Index>(r)) = encode_row(data.schema, data.design.column_map, rows[r]).transpose();
  }
  const Eigen::MatrixXd v_seq = explain_sequential(data.design, data.f, plan, x_rows);
  const KernelShapSystem system(build_Z(plan), plan.weights);
  std::vector<ShapleyResult> seq;
  for (Eigen::Index r = 0; r < v_seq.rows(); ++r) seq.push_back(system.solve(v_seq.row(r).transpose()));
  const double seq_s = detail::seconds_since(t0);

  auto max_dphi = [&](const BatchExplanation& b) {
    double d = 0.0;
    for (std::size_t r = 0; r < seq.size(); ++r) {
      if (!b.results[r]) return std::nan("");
      d = std::max(d, (b.results[r]->phi - seq[r].phi).cwiseAbs().maxCoeff());
    }
    return d;
  };

  const auto n = plan.size();
  const auto dense_block = static_cast<std::size_t>(q * q) * sizeof(double);
  const auto seq_bytes = static_cast<std::size_t>(data.design.values.rows() * q) * sizeof(double);
  auto ratio = [&](double s) { return s > 0 ? seq_s / s : 0.0; };
  return {
      {p, n, "approx", approx_s, stats.peak_block_bytes, ratio(approx_s), max_dphi(approx)},
      {p, n, "exact", exact_s, dense_block, ratio(exact_s), max_dphi(exact)},
      {p, n, "sequential", seq_s, seq_bytes, 1.0, 0.0},
  };
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "p,n_coalitions,method,seconds,peak_block_bytes,speedup_vs_sequential,max_abs_dphi_vs_sequential\n";
  for (const auto& r : records) {
    os << r.p << ',' << r.n_coalitions << ',' << r.method << ',' << detail::real(r.seconds) << ','
       << r.peak_block_bytes << ',' << detail::real(r.speedup_vs_sequential) << ','
       << detail::real(r.max_abs_dphi_vs_sequential) << '\n';
  }
}

inline int cmd_bench(const RunConfig& c, std::ostream& human = std::cout) {
  detail::validate(c, false);
  if (c.p_grid.empty()) throw Error(ErrorKind::InvalidArgument, "--p-grid is empty");
  std::vector<BenchRecord> all;
  for (int p : c.p_grid) {
    auto recs = bench_one(p, c);
    for (const auto& r : recs) {
      char line[200];
      std::snprintf(line, sizeof line, "p=%-3d coalitions=%-8zu %-10s %10.4f s  speedup vs sequential %8.2f\n", r.p,
                    r.n_coalitions, r.method.c_str(), r.seconds, r.speedup_vs_sequential);
      human << line;
    }
    all.insert(all.end(), recs.begin(), recs.end());
  }
  if (!c.output.empty()) {
    auto os = detail::open_output(c.output);
    write_bench_csv(os, all);
  }
  return kExitOk;
}

namespace detail {

inline std::set<std::string> split_names(const std::vector<std::string>& items) {
  std::set<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty()) out.insert(name);
    }
  }
  return out;
}

inline void add_data_options(CLI::App* sub, RunConfig& c, std::vector<std::string>& cat, std::vector<std::string>& num,
                             std::vector<std::string>& drop) {
  sub->add_option("--train", c.train_path, "Training CSV (header row required)")->required();
  auto* col = sub->add_option("--prediction-column", c.prediction_column, "Column of --train holding model predictions");
  auto* file = sub->add_option("--predictions", c.predictions_path, "Single-column file of model predictions");
  col->excludes(file);
  sub->add_option("--explain", c.explain_path, "CSV of rows to explain (default: every training row)");
  sub->add_option("--categorical", cat, "Force columns to categorical (comma separated)");
  sub->add_option("--numeric", num, "Force columns to numeric (comma separated)");
  sub->add_option("--drop", drop, "Ignore these columns (comma separated)");
}

inline void add_solver_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--coalitions", c.coalitions_spec, "'all' or 'sample:N'");
  sub->add_option("--seed", c.seed, "Sampling / synthetic data seed (fallback: COALESCE_SEED)");
  sub->add_option("--anchor-weight", c.anchor_weight, "Kernel weight of the empty and full coalitions");
  sub->add_option("--max-exhaustive-features", c.max_exhaustive, "Largest p allowed with --coalitions all");
  sub->add_option("--kappa-multiplier", c.kappa_multiplier, "kappa = multiplier * max diag(X^T X)");
  sub->add_option("--chunk-size", c.chunk_size, "Coalition blocks materialized at once");
  sub->add_flag("--joint-assembly", c.joint_assembly, "Factor each chunk as one assembled sparse block-diagonal matrix");
  sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--manifest", c.manifest, "Write a JSON run manifest here");
}

}  // namespace detail

/// Parses arguments and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Conditional Shapley values from all coalition regressions at once"};
  app.require_subcommand(1);
  RunConfig c;
  std::vector<std::string> cat, num, drop;
  std::string method = "approx";
  std::string p_grid = "8,10,12";

  auto* explain = app.add_subcommand("explain", "Estimate Shapley values for rows");
  detail::add_data_options(explain, c, cat, num, drop);
  detail::add_solver_options(explain, c);
  explain->add_option("--method", method, "approx | exact | both")->check(CLI::IsMember({"approx", "exact", "both"}));
  explain->add_option("--output", c.output, "Shapley value CSV")->required();
  explain->add_option("--emit-v", c.emit_v, "Also write the per-coalition v table (row_id, mask, v)");

  auto* compare = app.add_subcommand("compare", "Run approximate and exact paths on one plan and report deviations");
  detail::add_data_options(compare, c, cat, num, drop);
  detail::add_solver_options(compare, c);
  compare->add_option("--tolerance", c.tolerance, "Exit 0 iff max |phi_approx - phi_exact| <= tolerance");
  compare->add_option("--output", c.output, "JSON deviation report");

  auto* bench = app.add_subcommand("bench", "Time approximate vs sequential fitting on synthetic data");
  detail::add_solver_options(bench, c);
  bench->add_option("--p-grid", p_grid, "Comma separated feature counts");
  bench->add_option("--rows", c.bench_rows, "Synthetic training rows")->check(CLI::PositiveNumber);
  bench->add_option("--explain-rows", c.bench_explain, "Rows explained per method")->check(CLI::PositiveNumber);
  bench->add_option("--output", c.output, "Benchmark CSV");

  try {
    app.parse(argc, argv);
    c.categorical = detail::split_names(cat);
    c.numeric = detail::split_names(num);
    c.drop = detail::split_names(drop);
    c.method = method == "exact" ? Method::Exact : method == "both" ? Method::Both : Method::Approx;
    c.coalitions = parse_coalitions(c.coalitions_spec);
    auto* active = app.get_subcommands().front();
    if (active->count("--seed") == 0) {
      if (const char* env = std::getenv("COALESCE_SEED")) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (*env == '\0' || *end != '\0') throw CLI::ValidationError("COALESCE_SEED", "not an unsigned integer");
        c.seed = v;
      }
    }
    if (active != bench && c.prediction_column.empty() && c.predictions_path.empty()) {
      throw CLI::ValidationError("predictions", "one of --prediction-column or --predictions is required");
    }
    if (active == bench) {
      c.p_grid.clear();
      for (const auto& s : detail::split_names({p_grid})) c.p_grid.push_back(std::stoi(s));
      std::sort(c.p_grid.begin(), c.p_grid.end());
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    auto* active = app.get_subcommands().front();
    if (active == explain) return cmd_explain(c, err);
    if (active == compare) return cmd_compare(c, out, err);
    return cmd_bench(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace coalesce::cli
