// Command-line front end: dataset generation, model training, single-method
// attack runs, full comparison sweeps, surrogate angle profiles, and
// white-box attack evaluation, all over the binary model/dataset formats.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sqba/attack.hpp"
#include "sqba/dataset.hpp"
#include "sqba/dgm.hpp"
#include "sqba/harness.hpp"
#include "sqba/hsja.hpp"
#include "sqba/io.hpp"
#include "sqba/network.hpp"
#include "sqba/oracle.hpp"
#include "sqba/surrogate.hpp"
#include "sqba/train.hpp"

namespace {

using namespace sqba;

void add_gendata(CLI::App& app) {
  auto* cmd = app.add_subcommand("gendata", "Generate a synthetic labeled image dataset");
  struct GendataOpts {
    std::string out;
    int channels = 1, height = 16, width = 16, classes = 10, count = 1000;
    std::uint64_t proto_seed = 5, seed = 11;
    double amplitude = 0.8, noise = 0.18;
  };
  auto opts = std::make_shared<GendataOpts>();
  cmd->add_option("--out", opts->out, "Output dataset file")->required();
  cmd->add_option("--channels", opts->channels, "Image channels");
  cmd->add_option("--height", opts->height, "Image height");
  cmd->add_option("--width", opts->width, "Image width");
  cmd->add_option("--classes", opts->classes, "Number of classes");
  cmd->add_option("--count", opts->count, "Number of examples");
  cmd->add_option("--proto-seed", opts->proto_seed, "Class prototype seed");
  cmd->add_option("--seed", opts->seed, "Sampling seed");
  cmd->add_option("--amplitude", opts->amplitude, "Class signal amplitude");
  cmd->add_option("--noise", opts->noise, "Gaussian noise sigma");
  cmd->callback([opts] {
    const Dataset ds = make_synthetic_images(
        Shape{opts->channels, opts->height, opts->width}, opts->classes, opts->count,
        opts->proto_seed, opts->seed, opts->amplitude, opts->noise);
    save_dataset(ds, opts->out);
    std::printf("wrote %zu examples (%dx%dx%d, %d classes) to %s\n", ds.size(),
                opts->channels, opts->height, opts->width, opts->classes, opts->out.c_str());
  });
}

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Train a model on a dataset");
  struct TrainOpts {
    std::string arch = "mlp", dataset, test, out, optimizer = "adam";
    std::vector<int> hidden = {128, 64};
    int epochs = 10, batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
  };
  auto opts = std::make_shared<TrainOpts>();
  cmd->add_option("--arch", opts->arch, "Architecture: mlp or cnn")
      ->check(CLI::IsMember({"mlp", "cnn"}));
  cmd->add_option("--hidden", opts->hidden, "MLP hidden layer widths")->delimiter(',');
  cmd->add_option("--dataset", opts->dataset, "Training dataset file")->required();
  cmd->add_option("--test", opts->test, "Optional held-out dataset for accuracy");
  cmd->add_option("--out", opts->out, "Output model file")->required();
  cmd->add_option("--epochs", opts->epochs, "Training epochs");
  cmd->add_option("--batch", opts->batch, "Minibatch size");
  cmd->add_option("--lr", opts->lr, "Learning rate");
  cmd->add_option("--optimizer", opts->optimizer, "Optimizer: adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}));
  cmd->add_option("--seed", opts->seed, "Init and shuffle seed");
  cmd->callback([opts] {
    const Dataset data = load_dataset(opts->dataset);
    Network net = opts->arch == "cnn"
                      ? make_cnn(data.shape, data.num_classes, opts->seed, data.range)
                      : make_mlp(data.shape, opts->hidden, data.num_classes, opts->seed,
                                 data.range);
    TrainConfig cfg;
    cfg.epochs = opts->epochs;
    cfg.batch_size = opts->batch;
    cfg.lr = opts->lr;
    cfg.optimizer = opts->optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
    cfg.seed = opts->seed;
    const double loss = train(net, data, cfg);
    std::printf("final epoch loss %.6f, train accuracy %.4f\n", loss, accuracy(net, data));
    if (!opts->test.empty())
      std::printf("test accuracy %.4f\n", accuracy(net, load_dataset(opts->test)));
    save_network(net, opts->out);
    std::printf("wrote model to %s\n", opts->out.c_str());
  });
}

void add_attack(CLI::App& app) {
  auto* cmd = app.add_subcommand("attack", "Attack a model over sampled examples");
  struct AttackOpts {
    std::string target, surrogate, dataset, method = "sqba", out;
    long long budget = 1000;
    double rho_budget = 0.1;
    int count = 10;
    std::uint64_t seed = 0;
  };
  auto opts = std::make_shared<AttackOpts>();
  cmd->add_option("--target", opts->target, "Target model file")->required();
  cmd->add_option("--surrogate", opts->surrogate, "Surrogate model file (sqba only)");
  cmd->add_option("--dataset", opts->dataset, "Dataset file")->required();
  cmd->add_option("--method", opts->method, "Attack method: sqba or hsja")
      ->check(CLI::IsMember({"sqba", "hsja"}));
  cmd->add_option("--budget", opts->budget, "Query budget per attack");
  cmd->add_option("--rho", opts->rho_budget, "Relative perturbation success threshold");
  cmd->add_option("--count", opts->count, "Number of examples to attack");
  cmd->add_option("--seed", opts->seed, "Sampling and attack seed");
  cmd->add_option("--out", opts->out, "Per-attack CSV output")->required();
  cmd->callback([opts] {
    if (opts->method == "sqba" && opts->surrogate.empty())
      throw std::invalid_argument("attack: --method sqba requires --surrogate");
    const Network target = load_network(opts->target);
    Network surrogate_net;
    if (!opts->surrogate.empty()) surrogate_net = load_network(opts->surrogate);
    const Dataset data = load_dataset(opts->dataset);
    const auto eval =
        prepare_eval_set(target, data, static_cast<std::size_t>(opts->count), opts->seed);
    const std::string surrogate_name = opts->method == "sqba" ? opts->surrogate : "none";

    std::ofstream csv(opts->out, std::ios::binary);
    if (!csv) throw FormatError("cannot open for writing: " + opts->out);
    csv << "method,surrogate,example,seed,queries_used,iterations,first_success_queries,"
           "best_rho,success\n";
    int successes = 0;
    double sum_queries = 0.0;
    for (const std::size_t idx : eval) {
      const Tensor& x = data.images[idx];
      const int label = data.labels[idx];
      HardLabelOracle oracle(target, label, opts->budget);
      const std::uint64_t seed = detail::mix_seed(opts->seed, idx);
      AttackResult res;
      if (opts->method == "sqba") {
        SqbaConfig cfg;
        cfg.query_budget = opts->budget;
        cfg.rho_budget = opts->rho_budget;
        cfg.seed = seed;
        res = sqba_attack(surrogate_net, oracle, x, label, cfg);
      } else {
        HsjaConfig cfg;
        cfg.query_budget = opts->budget;
        cfg.rho_budget = opts->rho_budget;
        cfg.seed = seed;
        res = hsja_attack(oracle, x, label, cfg);
      }
      if (res.success) {
        ++successes;
        sum_queries += static_cast<double>(res.first_success_queries);
      }
      csv << opts->method << ',' << surrogate_name << ',' << idx << ',' << seed << ','
          << res.queries_used << ',' << res.iterations << ',' << res.first_success_queries
          << ',' << detail::fmt_double(res.final_rho) << ',' << (res.success ? 1 : 0) << '\n';
    }
    if (!csv) throw FormatError("write failed: " + opts->out);
    std::printf("%s: %d/%zu succeeded within %lld queries", opts->method.c_str(), successes,
                eval.size(), opts->budget);
    if (successes > 0) std::printf(", mean first success %.1f queries", sum_queries / successes);
    std::printf("; rows in %s\n", opts->out.c_str());
  });
}

void add_sweep(CLI::App& app) {
  auto* cmd = app.add_subcommand("sweep", "Run a budget sweep from a JSON config");
  struct SweepOpts {
    std::string config, summary = "summary.csv", attacks = "attacks.csv";
  };
  auto opts = std::make_shared<SweepOpts>();
  cmd->add_option("--config", opts->config, "JSON experiment config")->required();
  cmd->add_option("--summary", opts->summary, "Summary CSV output");
  cmd->add_option("--attacks", opts->attacks, "Per-attack CSV output");
  cmd->callback([opts] {
    const ExperimentSpec spec = load_experiment_spec(opts->config);
    const ExperimentResult result = run_experiment(spec);
    emit_report(result, opts->summary, opts->attacks);
    for (const SummaryRow& row : result.summary)
      std::printf("%s/%s budget %lld: asr %.2f%% (n=%d)\n", row.method.c_str(),
                  row.surrogate.c_str(), row.budget, row.asr_percent, row.n);
    std::printf("wrote %s and %s\n", opts->summary.c_str(), opts->attacks.c_str());
  });
}

void add_angles(CLI::App& app) {
  auto* cmd = app.add_subcommand("angles", "Profile surrogate gradient angles over a dataset");
  struct AnglesOpts {
    std::vector<std::string> surrogates;
    std::string dataset, out;
    std::vector<double> etas = {0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0};
    int count = 0;
  };
  auto opts = std::make_shared<AnglesOpts>();
  cmd->add_option("--surrogate", opts->surrogates, "Surrogate model file (repeatable)")
      ->required();
  cmd->add_option("--dataset", opts->dataset, "Dataset file")->required();
  cmd->add_option("--etas", opts->etas, "Ascending step sizes in (0, 1]")->delimiter(',');
  cmd->add_option("--count", opts->count, "Limit to the first N examples (0 = all)");
  cmd->add_option("--out", opts->out, "Angle profile CSV output")->required();
  cmd->callback([opts] {
    std::vector<Network> nets;
    nets.reserve(opts->surrogates.size());
    for (const std::string& path : opts->surrogates) nets.push_back(load_network(path));
    std::vector<const Network*> ptrs;
    for (const Network& n : nets) ptrs.push_back(&n);
    Dataset data = load_dataset(opts->dataset);
    if (opts->count > 0 && static_cast<std::size_t>(opts->count) < data.size()) {
      data.images.resize(opts->count);
      data.labels.resize(opts->count);
    }
    const std::vector<AngleRow> rows = angle_profile(ptrs, data, opts->etas);
    std::ofstream csv(opts->out, std::ios::binary);
    if (!csv) throw FormatError("cannot open for writing: " + opts->out);
    csv << "eta,mean_cos_angle,std,n_examples\n";
    for (const AngleRow& row : rows)
      csv << detail::fmt_double(row.eta) << ',' << detail::fmt_double(row.mean_cos_angle)
          << ',' << detail::fmt_double(row.stddev) << ',' << row.n << '\n';
    if (!csv) throw FormatError("write failed: " + opts->out);
    for (const AngleRow& row : rows)
      std::printf("eta %.3f: mean cos %.4f (std %.4f, n=%d)\n", row.eta, row.mean_cos_angle,
                  row.stddev, row.n);
    std::printf("wrote %s\n", opts->out.c_str());
  });
}

void add_dgm(CLI::App& app) {
  auto* cmd = app.add_subcommand("dgm", "Run the white-box attack and tuner over a dataset");
  struct DgmOpts {
    std::string model, dataset, out, norm = "l2";
    int count = 10;
    double epsilon = 0.02;
    int max_iters = 500;
    std::uint64_t seed = 0;
  };
  auto opts = std::make_shared<DgmOpts>();
  cmd->add_option("--model", opts->model, "Model file")->required();
  cmd->add_option("--dataset", opts->dataset, "Dataset file")->required();
  cmd->add_option("--count", opts->count, "Number of examples to attack");
  cmd->add_option("--epsilon", opts->epsilon, "Per-step scale");
  cmd->add_option("--max-iters", opts->max_iters, "Iteration cap");
  cmd->add_option("--norm", opts->norm, "Gradient normalization: l2 or linf")
      ->check(CLI::IsMember({"l2", "linf"}));
  cmd->add_option("--seed", opts->seed, "Example sampling seed");
  cmd->add_option("--out", opts->out, "Per-example CSV output")->required();
  cmd->callback([opts] {
    const Network net = load_network(opts->model);
    const Dataset data = load_dataset(opts->dataset);
    const auto eval =
        prepare_eval_set(net, data, static_cast<std::size_t>(opts->count), opts->seed);
    DgmConfig cfg;
    cfg.epsilon = opts->epsilon;
    cfg.max_iterations = opts->max_iters;
    cfg.norm_mode = opts->norm == "linf" ? NormMode::linf : NormMode::l2;

    std::ofstream csv(opts->out, std::ios::binary);
    if (!csv) throw FormatError("cannot open for writing: " + opts->out);
    csv << "example,label,success,rho_untuned,rho_tuned\n";
    int successes = 0;
    double sum_untuned = 0.0, sum_tuned = 0.0;
    for (const std::size_t idx : eval) {
      const Tensor& x = data.images[idx];
      const int label = data.labels[idx];
      double rho_untuned = std::numeric_limits<double>::quiet_NaN();
      double rho_tuned = std::numeric_limits<double>::quiet_NaN();
      int success = 0;
      try {
        const Tensor adv = dgm_attack(net, x, label, cfg);
        const Tensor tuned = dgm_tune(net, x, adv, label, cfg);
        rho_untuned = rho(x, adv);
        rho_tuned = rho(x, tuned);
        success = 1;
        ++successes;
        sum_untuned += rho_untuned;
        sum_tuned += rho_tuned;
      } catch (const AttackFailed&) {
      }
      csv << idx << ',' << label << ',' << success << ',' << detail::fmt_double(rho_untuned)
          << ',' << detail::fmt_double(rho_tuned) << '\n';
    }
    if (!csv) throw FormatError("write failed: " + opts->out);
    std::printf("%d/%zu flipped", successes, eval.size());
    if (successes > 0)
      std::printf(", mean rho %.4f untuned -> %.4f tuned", sum_untuned / successes,
                  sum_tuned / successes);
    std::printf("; rows in %s\n", opts->out.c_str());
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-efficient hard-label adversarial attack toolkit"};
  app.require_subcommand(1);
  add_gendata(app);
  add_train(app);
  add_attack(app);
  add_sweep(app);
  add_angles(app);
  add_dgm(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
