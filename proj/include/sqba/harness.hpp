#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "sqba/attack.hpp"
#include "sqba/dataset.hpp"
#include "sqba/errors.hpp"
#include "sqba/hsja.hpp"
#include "sqba/io.hpp"
#include "sqba/oracle.hpp"

namespace sqba {

// Relative perturbation size: l2 distance scaled by the clean example's
// norm. The success criterion is rho <= 0.1.
inline double rho(const Tensor& x, const Tensor& x_tilde) {
  const double nx = l2_norm(x);
  if (nx == 0.0) throw std::invalid_argument("rho: zero reference example");
  return l2_distance(x, x_tilde) / nx;
}

// Seeded random subset of dataset indices the network classifies correctly,
// returned in ascending order so downstream reports are stably ordered.
inline std::vector<std::size_t> prepare_eval_set(const Network& net, const Dataset& data,
                                                 std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> correct;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict(net, data.images[i]) == data.labels[i]) correct.push_back(i);
  if (n > correct.size())
    throw DataError("prepare_eval_set: only " + std::to_string(correct.size()) +
                    " correctly classified examples, need " + std::to_string(n));
  std::mt19937_64 rng(seed);
  std::shuffle(correct.begin(), correct.end(), rng);
  correct.resize(n);
  std::sort(correct.begin(), correct.end());
  return correct;
}

struct ExperimentSpec {
  std::string target;
  std::vector<std::string> surrogates;
  std::string dataset;
  std::vector<long long> budgets = {100, 250, 500, 750, 1000};
  double rho_budget = 0.1;
  std::vector<std::string> methods = {"sqba", "hsja"};
  int sample_count = 200;
  std::uint64_t seed = 0;
};

inline void validate_spec(const ExperimentSpec& spec) {
  if (spec.budgets.empty()) throw std::invalid_argument("experiment: no budgets");
  for (std::size_t i = 0; i < spec.budgets.size(); ++i) {
    if (spec.budgets[i] <= 0) throw std::invalid_argument("experiment: budgets must be positive");
    if (i > 0 && spec.budgets[i] <= spec.budgets[i - 1])
      throw std::invalid_argument("experiment: budgets must be ascending");
  }
  if (spec.rho_budget <= 0.0) throw std::invalid_argument("experiment: rho budget");
  if (spec.sample_count < 0) throw std::invalid_argument("experiment: sample count");
  for (const std::string& m : spec.methods)
    if (m != "sqba" && m != "hsja")
      throw std::invalid_argument("experiment: unknown method \"" + m + "\"");
}

// One attack run in a sweep. Success events allow evaluating every budget
// from the single max-budget run: success at budget b means some verified
// iterate reached rho <= rho_budget within b queries.
struct AttackRecord {
  std::string method;
  std::string surrogate;  // "none" for surrogate-free methods
  std::size_t example = 0;
  std::uint64_t seed = 0;
  long long queries_used = 0;
  int iterations = 0;
  long long first_success_queries = -1;
  double best_rho = std::numeric_limits<double>::infinity();
  bool success = false;  // at the maximum budget
  std::vector<SuccessEvent> events;
};

struct SummaryRow {
  std::string method;
  std::string surrogate;
  long long budget = 0;
  double asr_percent = 0.0;
  int n = 0;
  double mean_queries_on_success = std::numeric_limits<double>::quiet_NaN();
  double mean_rho_on_success = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
  std::vector<SummaryRow> summary;
  std::vector<AttackRecord> records;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Best rho reached within the first `budget` queries, or infinity.
inline double rho_at_budget(const std::vector<SuccessEvent>& events, long long budget) {
  double best = std::numeric_limits<double>::infinity();
  for (const SuccessEvent& e : events)
    if (e.queries <= budget) best = std::min(best, e.rho);
  return best;
}

}  // namespace detail

// Runs every (method, surrogate) pair over the filtered examples, one
// max-budget attack each, then scores all budget columns from the recorded
// success events. Deterministic: per-attack seeds derive from the spec seed
// and the (method, surrogate, example) coordinates only.
inline ExperimentResult run_experiment(const Network& target,
                                       const std::vector<std::pair<std::string, const Network*>>&
                                           surrogates,
                                       const Dataset& data, const ExperimentSpec& spec) {
  validate_spec(spec);
  const std::vector<std::size_t> eval =
      prepare_eval_set(target, data, static_cast<std::size_t>(spec.sample_count), spec.seed);
  const long long max_budget = spec.budgets.back();

  // Row keys in report order: methods as listed, surrogates as listed.
  struct RowKey {
    std::string method;
    std::string surrogate;
    const Network* net;  // null for surrogate-free methods
  };
  std::vector<RowKey> rows;
  for (const std::string& m : spec.methods) {
    if (m == "sqba") {
      if (surrogates.empty()) throw std::invalid_argument("experiment: sqba needs a surrogate");
      for (const auto& [name, net] : surrogates) rows.push_back({m, name, net});
    } else {
      rows.push_back({m, "none", nullptr});
    }
  }

  ExperimentResult out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const std::size_t idx : eval) {
      const Tensor& x = data.images[idx];
      const int label = data.labels[idx];
      HardLabelOracle oracle(target, label, max_budget);
      const std::uint64_t seed =
          detail::mix_seed(spec.seed, detail::mix_seed(r + 1, idx));
      AttackResult res;
      if (rows[r].method == "sqba") {
        SqbaConfig cfg;
        cfg.query_budget = max_budget;
        cfg.rho_budget = spec.rho_budget;
        cfg.seed = seed;
        res = sqba_attack(*rows[r].net, oracle, x, label, cfg);
      } else {
        HsjaConfig cfg;
        cfg.query_budget = max_budget;
        cfg.rho_budget = spec.rho_budget;
        cfg.seed = seed;
        res = hsja_attack(oracle, x, label, cfg);
      }
      AttackRecord rec;
      rec.method = rows[r].method;
      rec.surrogate = rows[r].surrogate;
      rec.example = idx;
      rec.seed = seed;
      rec.queries_used = res.queries_used;
      rec.iterations = res.iterations;
      rec.first_success_queries = res.first_success_queries;
      rec.best_rho = res.final_rho;
      rec.success = res.success;
      rec.events = std::move(res.events);
      out.records.push_back(std::move(rec));
    }
  }

  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const long long budget : spec.budgets) {
      SummaryRow row;
      row.method = rows[r].method;
      row.surrogate = rows[r].surrogate;
      row.budget = budget;
      row.n = static_cast<int>(eval.size());
      int successes = 0;
      double sum_queries = 0.0, sum_rho = 0.0;
      for (const AttackRecord& rec : out.records) {
        if (rec.method != row.method || rec.surrogate != row.surrogate) continue;
        if (rec.first_success_queries < 0 || rec.first_success_queries > budget) continue;
        ++successes;
        sum_queries += static_cast<double>(rec.first_success_queries);
        sum_rho += detail::rho_at_budget(rec.events, budget);
      }
      if (row.n > 0) row.asr_percent = 100.0 * successes / row.n;
      if (successes > 0) {
        row.mean_queries_on_success = sum_queries / successes;
        row.mean_rho_on_success = sum_rho / successes;
      }
      out.summary.push_back(row);
    }
  }
  return out;
}

// File-path variant used by the CLI.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  const Network target = load_network(spec.target);
  std::vector<Network> surrogate_nets;
  surrogate_nets.reserve(spec.surrogates.size());
  for (const std::string& path : spec.surrogates) surrogate_nets.push_back(load_network(path));
  std::vector<std::pair<std::string, const Network*>> surrogates;
  for (std::size_t i = 0; i < surrogate_nets.size(); ++i)
    surrogates.emplace_back(spec.surrogates[i], &surrogate_nets[i]);
  const Dataset data = load_dataset(spec.dataset);
  return run_experiment(target, surrogates, data, spec);
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

// summary.csv: one row per (method, surrogate, budget). attacks.csv: one
// row per attack. Both UTF-8 with LF endings, ordered as produced by
// run_experiment, so identical inputs yield byte-identical files.
inline void emit_report(const ExperimentResult& result, const std::string& summary_path,
                        const std::string& attacks_path) {
  std::ofstream sum(summary_path, std::ios::binary);
  if (!sum) throw FormatError("cannot open for writing: " + summary_path);
  sum << "method,surrogate,budget,asr,n,mean_queries_on_success,mean_rho_on_success\n";
  for (const SummaryRow& row : result.summary) {
    char asr[32];
    std::snprintf(asr, sizeof asr, "%.2f", row.asr_percent);
    sum << row.method << ',' << row.surrogate << ',' << row.budget << ',' << asr << ','
        << row.n << ',' << detail::fmt_double(row.mean_queries_on_success) << ','
        << detail::fmt_double(row.mean_rho_on_success) << '\n';
  }
  if (!sum) throw FormatError("write failed: " + summary_path);

  std::ofstream att(attacks_path, std::ios::binary);
  if (!att) throw FormatError("cannot open for writing: " + attacks_path);
  att << "method,surrogate,example,seed,queries_used,iterations,first_success_queries,"
         "best_rho,success\n";
  for (const AttackRecord& rec : result.records) {
    att << rec.method << ',' << rec.surrogate << ',' << rec.example << ',' << rec.seed << ','
        << rec.queries_used << ',' << rec.iterations << ',' << rec.first_success_queries << ','
        << detail::fmt_double(rec.best_rho) << ',' << (rec.success ? 1 : 0) << '\n';
  }
  if (!att) throw FormatError("write failed: " + attacks_path);
}

// JSON sweep configuration mirroring ExperimentSpec. "surrogates" accepts a
// single string or an array. Missing optional keys keep their defaults.
inline ExperimentSpec load_experiment_spec(std::istream& is) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad experiment config: ") + e.what());
  }
  ExperimentSpec spec;
  try {
    spec.target = j.at("target").get<std::string>();
    spec.dataset = j.at("dataset").get<std::string>();
    if (j.contains("surrogates")) {
      if (j["surrogates"].is_string())
        spec.surrogates = {j["surrogates"].get<std::string>()};
      else
        spec.surrogates = j["surrogates"].get<std::vector<std::string>>();
    }
    if (j.contains("budgets")) spec.budgets = j["budgets"].get<std::vector<long long>>();
    if (j.contains("rho_budget")) spec.rho_budget = j["rho_budget"].get<double>();
    if (j.contains("methods")) spec.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("sample_count")) spec.sample_count = j["sample_count"].get<int>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad experiment config: ") + e.what());
  }
  validate_spec(spec);
  return spec;
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open: " + path);
  return load_experiment_spec(is);
}

}  // namespace sqba
