// End-to-end acceptance checks. Each test evaluates one numbered criterion
// and prints a single "[ACCEPT] criterion N: PASS|FAIL" line so the suite's
// verdict can be read straight off the log. Shared models are trained once
// in a global environment.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sqba/attack.hpp"
#include "sqba/dataset.hpp"
#include "sqba/dgm.hpp"
#include "sqba/harness.hpp"
#include "sqba/hsja.hpp"
#include "sqba/io.hpp"
#include "sqba/network.hpp"
#include "sqba/oracle.hpp"
#include "sqba/surrogate.hpp"
#include "sqba/tracker.hpp"
#include "sqba/train.hpp"
#include "test_util.hpp"

using namespace sqba;

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int criterion, bool pass) {
  std::printf("[ACCEPT] criterion %d: %s\n", criterion, pass ? "PASS" : "FAIL");
  std::fflush(stdout);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Models and data shared by the expensive criteria: a 16x16 ten-class
// synthetic set, an MLP surrogate, and a CNN target trained on it once.
struct Fixture {
  Dataset train_set;
  Dataset test_set;
  Network mlp;
  Network cnn;
  double mlp_acc = 0.0;
  double cnn_acc = 0.0;
  std::optional<ExperimentResult> experiment;  // filled by criterion 9
  ExperimentSpec experiment_spec;
};

Fixture* fix = nullptr;

class TrainedModelsEnv : public ::testing::Environment {
 public:
  void SetUp() override {
    const auto start = Clock::now();
    fix = new Fixture;
    const Shape shape{1, 16, 16};
    const auto protos = make_prototypes(shape, 10, 5);
    fix->train_set = sample_dataset(protos, 2000, 11, 1.0);
    fix->test_set = sample_dataset(protos, 1000, 12, 1.0);

    fix->mlp = make_mlp(shape, {128, 64}, 10, 301);
    TrainConfig mc;
    mc.epochs = 10;
    mc.seed = 1;
    train(fix->mlp, fix->train_set, mc);
    fix->mlp_acc = accuracy(fix->mlp, fix->test_set);

    fix->cnn = make_cnn(shape, 10, 302);
    TrainConfig cc;
    cc.epochs = 10;
    cc.seed = 2;
    train(fix->cnn, fix->train_set, cc);
    fix->cnn_acc = accuracy(fix->cnn, fix->test_set);

    std::printf("[setup] mlp test acc %.4f, cnn test acc %.4f (%.1fs)\n", fix->mlp_acc,
                fix->cnn_acc, secs_since(start));
    std::fflush(stdout);
  }
};

}  // namespace

// Criterion 1: analytic input gradients of the loss match central finite
// differences (eps 1e-4, rtol 1e-3) on 20+ coordinates of 10 random
// networks, in under 10 seconds.
TEST(Acceptance, Criterion01GradientsMatchFiniteDifferences) {
  const auto start = Clock::now();
  bool pass = true;
  std::string note;
  try {
    const Shape shape{1, 5, 5};
    std::mt19937_64 rng(777);
    for (int n = 0; n < 10; ++n) {
      const Network net =
          n < 5 ? make_mlp(shape, {12, 8}, 3, 100 + n) : make_cnn(shape, 3, 200 + n);
      const Tensor x = testutil::random_image(shape, rng);
      const int c = n % 3;
      const Tensor g = loss_grad_input(net, x, c);
      std::vector<std::size_t> coords(shape.size());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(20);
      for (const std::size_t i : coords) {
        const double fd = testutil::fd_loss_grad(net, x, c, i, 1e-4);
        if (!testutil::grad_close(g.v[i], fd, 1e-3)) {
          pass = false;
          note += "net " + std::to_string(n) + " coord " + std::to_string(i) + ": analytic " +
                  std::to_string(g.v[i]) + " vs fd " + std::to_string(fd) + "; ";
        }
      }
    }
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  const double elapsed = secs_since(start);
  if (elapsed >= 10.0) {
    pass = false;
    note += "took " + std::to_string(elapsed) + "s; ";
  }
  report(1, pass);
  EXPECT_TRUE(pass) << note;
}

// Criterion 2: on a 10-D linear two-class model with the probe point on the
// boundary, the 1000-probe Monte Carlo estimate aligns with the boundary
// normal (cos >= 0.3) in at least 95 of 100 seeded trials, in under 30s.
TEST(Acceptance, Criterion02MonteCarloAlignsWithNormal) {
  const auto start = Clock::now();
  bool pass = true;
  std::string note;
  int hits = 0;
  try {
    for (int trial = 0; trial < 100; ++trial) {
      std::mt19937_64 wrng(3000 + trial);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<double> w(10);
      double norm = 0.0;
      do {
        norm = 0.0;
        for (double& wi : w) {
          wi = gauss(wrng);
          norm += wi * wi;
        }
        norm = std::sqrt(norm);
      } while (norm < 0.5);
      const Network net = testutil::hyperplane_net(w, 0.0);
      const Tensor x(Shape{1, 1, 10}, 0.0);  // exactly on the boundary
      HardLabelOracle oracle(net, 0, 100000);
      std::mt19937_64 prng(9000 + trial);
      const McEstimate est = mc_gradient(oracle, x, 0.05, 1000, prng);
      const Tensor wt(std::vector<double>(w.begin(), w.end()), Shape{1, 1, 10});
      if (!est.exhausted && cos_angle(est.gradient, wt) >= 0.3) ++hits;
    }
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  const double elapsed = secs_since(start);
  if (hits < 95) pass = false;
  if (elapsed >= 30.0) pass = false;
  note += "aligned trials " + std::to_string(hits) + "/100, " + std::to_string(elapsed) + "s";
  report(2, pass);
  EXPECT_TRUE(pass) << note;
}

// Criterion 3: the white-box attack flips all of 200 correctly classified
// CNN examples with the default config, every output verifies adversarial,
// and tuning shrinks the mean relative perturbation by at least 20%, all in
// under 5 minutes.
TEST(Acceptance, Criterion03WhiteBoxAttackFlipsEverythingAndTunes) {
  const auto start = Clock::now();
  ASSERT_NE(fix, nullptr);
  bool pass = true;
  std::string note;
  int successes = 0;
  int tuned_adversarial = 0;
  double sum_untuned = 0.0;
  double sum_tuned = 0.0;
  try {
    // A coarse attack step leaves real overshoot past the boundary for the
    // tuner to reclaim, and the tuner's per-coordinate step must be finer
    // than that overshoot or its first move re-crosses the boundary.
    DgmConfig cfg;
    cfg.epsilon = 0.10;
    cfg.tune_lr = 1e-3;
    const auto eval = prepare_eval_set(fix->cnn, fix->test_set, 200, 21);
    for (const std::size_t idx : eval) {
      const Tensor& x = fix->test_set.images[idx];
      const int label = fix->test_set.labels[idx];
      try {
        const Tensor adv = dgm_attack(fix->cnn, x, label, cfg);
        if (predict(fix->cnn, adv) == label) continue;
        ++successes;
        const Tensor tuned = dgm_tune(fix->cnn, x, adv, label, cfg);
        if (predict(fix->cnn, tuned) != label) ++tuned_adversarial;
        sum_untuned += rho(x, adv);
        sum_tuned += rho(x, tuned);
      } catch (const AttackFailed&) {
      }
    }
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  const double mean_reduction =
      sum_untuned > 0.0 ? (sum_untuned - sum_tuned) / sum_untuned : 0.0;
  const double elapsed = secs_since(start);
  if (successes != 200) pass = false;
  if (tuned_adversarial != successes) pass = false;
  if (mean_reduction < 0.20) pass = false;
  if (elapsed >= 300.0) pass = false;
  note += "successes " + std::to_string(successes) + "/200, tuned adversarial " +
          std::to_string(tuned_adversarial) + ", mean rho reduction " +
          std::to_string(mean_reduction) + ", " + std::to_string(elapsed) + "s";
  report(3, pass);
  EXPECT_TRUE(pass) << note;
}

// Criterion 4: the confidence-based penalty weight hits its closed-form
// values: cap 0.3 at lambda 0, e^-4 at lambda 1, e^-2 at lambda 0.5.
TEST(Acceptance, Criterion04PenaltyWeightPointChecks) {
  const bool pass = penalty_weight(0.0) == 0.3 &&
                    std::abs(penalty_weight(1.0) - std::exp(-4.0)) <= 1e-9 &&
                    std::abs(penalty_weight(0.5) - std::exp(-2.0)) <= 1e-9;
  report(4, pass);
  EXPECT_TRUE(pass);
}

// Criterion 5: the angle profile on the trained CNN over 500 examples decays
// then flattens: mean cos at eta 0.05 exceeds eta 0.3 by at least 0.2, and
// the means past eta 0.2 vary by less than 0.1. Under 5 minutes.
TEST(Acceptance, Criterion05AngleProfileDecaysThenFlattens) {
  const auto start = Clock::now();
  ASSERT_NE(fix, nullptr);
  bool pass = true;
  std::string note;
  try {
    Dataset subset;
    subset.shape = fix->test_set.shape;
    subset.num_classes = fix->test_set.num_classes;
    subset.range = fix->test_set.range;
    subset.images.assign(fix->test_set.images.begin(), fix->test_set.images.begin() + 500);
    subset.labels.assign(fix->test_set.labels.begin(), fix->test_set.labels.begin() + 500);

    const std::vector<double> grid{0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0};
    const std::vector<AngleRow> rows = angle_profile({&fix->cnn}, subset, grid);
    for (const AngleRow& row : rows) {
      note += "eta " + std::to_string(row.eta) + ": mean " +
              std::to_string(row.mean_cos_angle) + " (n=" + std::to_string(row.n) + "); ";
      if (row.n < 1) pass = false;
    }
    const double near = rows[0].mean_cos_angle;  // eta 0.05
    const double far = rows[3].mean_cos_angle;   // eta 0.3
    if (near - far < 0.2) pass = false;
    double tail_min = rows[3].mean_cos_angle, tail_max = rows[3].mean_cos_angle;
    for (std::size_t j = 3; j < rows.size(); ++j) {  // etas past 0.2
      tail_min = std::min(tail_min, rows[j].mean_cos_angle);
      tail_max = std::max(tail_max, rows[j].mean_cos_angle);
    }
    if (tail_max - tail_min >= 0.1) pass = false;
    note += "drop " + std::to_string(near - far) + ", tail spread " +
            std::to_string(tail_max - tail_min);
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  if (secs_since(start) >= 300.0) pass = false;
  report(5, pass);
  EXPECT_TRUE(pass) << note;
}

// Criterion 6: the boundary bisection lands within tol * D(x, x_dot) of the
// true linear boundary and stays adversarial, on 100 random instances.
TEST(Acceptance, Criterion06BisectionLandsOnLinearBoundary) {
  bool pass = true;
  std::string note;
  int ok = 0;
  try {
    std::mt19937_64 rng(606);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int dim = 8;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> w(dim);
      double wnorm = 0.0;
      do {
        wnorm = 0.0;
        for (double& wi : w) {
          wi = gauss(rng);
          wnorm += wi * wi;
        }
        wnorm = std::sqrt(wnorm);
      } while (wnorm < 1.0);
      const double b = 0.3 * gauss(rng);
      const Network net = testutil::hyperplane_net(w, b);

      Tensor x(Shape{1, 1, dim}, 0.0);
      for (double& v : x.v) v = uni(rng);
      const int c = predict(net, x);
      double margin = b;
      for (int j = 0; j < dim; ++j) margin += w[j] * x.v[j];

      // Step along the normal to a point with an opposite-side margin.
      const double want = (c == 1 ? -1.0 : 1.0) * (0.25 + 0.75 * uni(rng));
      const double step = (want - margin) / (wnorm * wnorm);
      Tensor x_dot = x;
      for (int j = 0; j < dim; ++j) x_dot.v[j] += step * w[j];
      ASSERT_NE(predict(net, x_dot), c);

      HardLabelOracle oracle(net, c, 1000000);
      const double tol = 1e-3;
      const Tensor proj = binary_search_projection(oracle, x, x_dot, tol);
      double proj_margin = b;
      for (int j = 0; j < dim; ++j) proj_margin += w[j] * proj.v[j];
      const double plane_dist = std::abs(proj_margin) / wnorm;
      const bool close = plane_dist <= tol * l2_distance(x, x_dot) + 1e-12;
      const bool adversarial = predict(net, proj) != c;
      if (close && adversarial) {
        ++ok;
      } else {
        note += "instance " + std::to_string(i) + ": plane dist " +
                std::to_string(plane_dist) + ", adversarial " + std::to_string(adversarial) +
                "; ";
      }
    }
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  if (ok != 100) pass = false;
  report(6, pass);
  EXPECT_TRUE(pass) << note << "ok " << ok << "/100";
}

// Criterion 7: across 1000 randomized attacks with budgets cycling through
// {1, 10, 100}, the oracle count never exceeds the budget, and every
// reported success re-verifies as adversarial with rho <= 0.1.
TEST(Acceptance, Criterion07BudgetsAreHardAndSuccessesVerify) {
  bool pass = true;
  std::string note;
  int violations = 0;
  try {
    const Shape shape{1, 3, 3};
    const long long budgets[3] = {1, 10, 100};
    std::mt19937_64 rng(707);
    for (int run = 0; run < 1000; ++run) {
      const long long budget = budgets[run % 3];
      const Network target = make_mlp(shape, {6}, 3, 10000 + run);
      const Tensor x = testutil::random_image(shape, rng);
      int label = predict(target, x);
      if (run % 5 == 0) label = (label + 1 + run % 2) % 3;  // exercise the trivial path

      HardLabelOracle oracle(target, label, budget);
      AttackResult res;
      if (run % 2 == 0) {
        const Network surrogate = make_mlp(shape, {5}, 3, 20000 + run);
        SqbaConfig cfg;
        cfg.query_budget = budget;
        cfg.seed = static_cast<std::uint64_t>(run);
        res = sqba_attack(surrogate, oracle, x, label, cfg);
      } else {
        HsjaConfig cfg;
        cfg.query_budget = budget;
        cfg.seed = static_cast<std::uint64_t>(run);
        res = hsja_attack(oracle, x, label, cfg);
      }

      bool run_ok = res.queries_used <= budget && oracle.queries_used() == res.queries_used;
      if (res.success) {
        run_ok = run_ok && res.adversarial.has_value() &&
                 predict(target, *res.adversarial) != label &&
                 rho(x, *res.adversarial) <= 0.1 + 1e-15 && res.first_success_queries >= 1 &&
                 res.first_success_queries <= res.queries_used;
      }
      if (!run_ok) {
        ++violations;
        if (violations <= 5)
          note += "run " + std::to_string(run) + " budget " + std::to_string(budget) +
                  " queries " + std::to_string(res.queries_used) + "; ";
      }
    }
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  if (violations != 0) pass = false;
  report(7, pass);
  EXPECT_TRUE(pass) << note << violations << " violations";
}

// Criterion 8: with the surrogate disabled, beta forced to 0, and the
// baseline's probe schedule and init, the shared loop reproduces the
// baseline attack iterate for iterate on 20 instances.
TEST(Acceptance, Criterion08BetaZeroReducesToBaseline) {
  bool pass = true;
  std::string note;
  try {
    std::mt19937_64 rng(808);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.35, 0.65);
    const int dim = 8;
    for (int i = 0; i < 20; ++i) {
      std::vector<double> w(dim);
      double wnorm = 0.0;
      do {
        wnorm = 0.0;
        for (double& wi : w) {
          wi = gauss(rng);
          wnorm += wi * wi;
        }
        wnorm = std::sqrt(wnorm);
      } while (wnorm < 1.0);
      Tensor x(Shape{1, 1, dim}, 0.0);
      double wx = 0.0;
      for (int j = 0; j < dim; ++j) {
        x.v[j] = uni(rng);
        wx += w[j] * x.v[j];
      }
      const Network net = testutil::hyperplane_net(w, -wx - 0.15);  // x is class 0

      const std::uint64_t seed = 31 + static_cast<std::uint64_t>(i);
      HardLabelOracle o1(net, 0, 350);
      SqbaConfig sc;
      sc.query_budget = 350;
      sc.mc_base = 100;
      sc.init_random_max_tries = 50;
      sc.force_beta_zero = true;
      sc.record_iterates = true;
      sc.seed = seed;
      const AttackResult a = run_boundary_attack(nullptr, o1, x, 0, sc);

      HardLabelOracle o2(net, 0, 350);
      HsjaConfig hc;
      hc.query_budget = 350;
      hc.record_iterates = true;
      hc.seed = seed;
      const AttackResult b = hsja_attack(o2, x, 0, hc);

      bool same = a.queries_used == b.queries_used && a.iterations == b.iterations &&
                  a.success == b.success && a.final_rho == b.final_rho &&
                  a.first_success_queries == b.first_success_queries &&
                  a.iterates.size() == b.iterates.size() && !a.iterates.empty();
      for (std::size_t j = 0; same && j < a.iterates.size(); ++j)
        same = a.iterates[j].v == b.iterates[j].v;
      if (!same) {
        pass = false;
        note += "instance " + std::to_string(i) + " diverged (" +
                std::to_string(a.iterates.size()) + " vs " + std::to_string(b.iterates.size()) +
                " iterates); ";
      }
    }
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  report(8, pass);
  EXPECT_TRUE(pass) << note;
}

// Criterion 9: both trained models reach 90% test accuracy; over 200
// filtered examples the surrogate-guided attack beats the baseline by at
// least 2x attack success rate at budgets 100 and 250 and reaches 30% at
// budget 100. Under 30 minutes.
TEST(Acceptance, Criterion09GuidedAttackBeatsBaseline) {
  const auto start = Clock::now();
  ASSERT_NE(fix, nullptr);
  bool pass = true;
  std::string note;
  try {
    if (fix->mlp_acc < 0.90 || fix->cnn_acc < 0.90) {
      pass = false;
      note += "model accuracy below 0.90; ";
    }
    ExperimentSpec spec;
    spec.budgets = {100, 250, 500};
    spec.sample_count = 200;
    spec.seed = 7;
    fix->experiment_spec = spec;
    fix->experiment = run_experiment(fix->cnn, {{"mlp", &fix->mlp}}, fix->test_set, spec);

    const auto asr = [&](const std::string& method, long long budget) {
      for (const SummaryRow& row : fix->experiment->summary)
        if (row.method == method && row.budget == budget) return row.asr_percent;
      throw std::logic_error("missing summary row");
    };
    const double s100 = asr("sqba", 100), s250 = asr("sqba", 250);
    const double h100 = asr("hsja", 100), h250 = asr("hsja", 250);
    note += "sqba " + std::to_string(s100) + "/" + std::to_string(s250) + " vs hsja " +
            std::to_string(h100) + "/" + std::to_string(h250) + " at 100/250; ";
    if (s100 < 2.0 * h100) pass = false;
    if (s250 < 2.0 * h250) pass = false;
    if (s100 < 30.0) pass = false;
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  const double elapsed = secs_since(start);
  if (elapsed >= 1800.0) pass = false;
  note += std::to_string(elapsed) + "s";
  report(9, pass);
  EXPECT_TRUE(pass) << note;
}

// Criterion 10: within every (method, surrogate) row of the comparison just
// run, the success rate is exactly non-decreasing in the budget.
TEST(Acceptance, Criterion10SuccessRateMonotoneInBudget) {
  ASSERT_NE(fix, nullptr);
  bool pass = true;
  std::string note;
  if (!fix->experiment) {
    pass = false;
    note = "no experiment result from criterion 9";
  } else {
    const std::size_t k = fix->experiment_spec.budgets.size();
    const auto& rows = fix->experiment->summary;
    if (rows.empty() || rows.size() % k != 0) {
      pass = false;
      note = "unexpected summary shape";
    } else {
      for (std::size_t g = 0; g < rows.size(); g += k) {
        for (std::size_t j = 1; j < k; ++j) {
          if (rows[g + j].asr_percent < rows[g + j - 1].asr_percent) {
            pass = false;
            note += rows[g].method + "/" + rows[g].surrogate + " drops at budget " +
                    std::to_string(rows[g + j].budget) + "; ";
          }
        }
      }
    }
  }
  report(10, pass);
  EXPECT_TRUE(pass) << note;
}

// Criterion 11: an identical sweep specification produces byte-identical
// CSV reports.
TEST(Acceptance, Criterion11SweepIsByteDeterministic) {
  ASSERT_NE(fix, nullptr);
  bool pass = true;
  std::string note;
  try {
    ExperimentSpec spec;
    spec.budgets = {60, 200};
    spec.sample_count = 10;
    spec.seed = 4242;
    const ExperimentResult r1 =
        run_experiment(fix->cnn, {{"mlp", &fix->mlp}}, fix->test_set, spec);
    const ExperimentResult r2 =
        run_experiment(fix->cnn, {{"mlp", &fix->mlp}}, fix->test_set, spec);
    const std::string s1 = testing::TempDir() + "accept_summary1.csv";
    const std::string a1 = testing::TempDir() + "accept_attacks1.csv";
    const std::string s2 = testing::TempDir() + "accept_summary2.csv";
    const std::string a2 = testing::TempDir() + "accept_attacks2.csv";
    emit_report(r1, s1, a1);
    emit_report(r2, s2, a2);
    const std::string sum1 = slurp(s1), att1 = slurp(a1);
    if (sum1 != slurp(s2) || att1 != slurp(a2)) {
      pass = false;
      note += "reports differ between runs; ";
    }
    if (std::count(att1.begin(), att1.end(), '\n') != 21) {  // header + 2 rows x 10
      pass = false;
      note += "unexpected attacks row count; ";
    }
  } catch (const std::exception& e) {
    pass = false;
    note += std::string("exception: ") + e.what();
  }
  report(11, pass);
  EXPECT_TRUE(pass) << note;
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::AddGlobalTestEnvironment(new TrainedModelsEnv);
  return RUN_ALL_TESTS();
}
