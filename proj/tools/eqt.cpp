// eqt: group-equivariant tensor toolbox.
//
// Subcommands: basis (isotropic-basis inspection), verify (equivariance
// audit suite), gen (dataset generation), train, eval, report.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "eqt/config.hpp"
#include "eqt/experiments.hpp"
#include "eqt/isotropic.hpp"
#include "eqt/training.hpp"

namespace {

using namespace eqt;

Metric parse_metric_string(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("metric must look like euclidean:3, minkowski:1,3 or symplectic:4");
  const std::string kind = s.substr(0, colon);
  const std::string rest = s.substr(colon + 1);
  if (kind == "euclidean") return Metric::euclidean(std::stoi(rest));
  if (kind == "symplectic") return Metric::symplectic(std::stoi(rest));
  if (kind == "minkowski") {
    const auto comma = rest.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("minkowski metric needs s,t as in minkowski:1,3");
    const int s_plus = std::stoi(rest.substr(0, comma));
    const int s_minus = std::stoi(rest.substr(comma + 1));
    return Metric::minkowski(s_plus, s_plus + s_minus);
  }
  throw std::invalid_argument("unknown metric kind: " + kind);
}

int run_basis(const std::string& metric_str, int order, const std::string& parity_str,
              const std::string& out_file) {
  const Metric metric = parse_metric_string(metric_str);
  int parity = 0;
  if (parity_str == "+" || parity_str == "+1") parity = +1;
  else if (parity_str == "-" || parity_str == "-1") parity = -1;
  else throw std::invalid_argument("parity must be + or -");

  const IsotropicBasis basis = isotropic_basis(order, parity, metric);
  std::cout << basis.size() << " elements\n";
  for (std::size_t i = 0; i < basis.size(); ++i)
    std::cout << "sigma_" << i + 1 << " = " << perm_to_string(basis.elements[i].sigma) << "\n";

  if (!out_file.empty()) {
    std::ofstream os(out_file, std::ios::binary);
    if (!os) throw std::invalid_argument("cannot write " + out_file);
    for (const auto& el : basis.elements) write_tensor(os, el.value);
    std::cout << "wrote " << basis.size() << " tensor records to " << out_file << "\n";
  }
  return 0;
}

struct AuditLine {
  std::string model;
  std::string group;
  double defect;
  double bound; // 0 = report only
};

void print_membership_residuals(const std::string& group, int trials, Rng& rng) {
  const auto report = [&](const std::string& name, const Metric& metric, auto&& sampler) {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) worst = std::max(worst, verify_membership(sampler(), metric));
    std::cout << "membership group=" << name << " trials=" << trials << " max_residual="
              << std::scientific << std::setprecision(3) << worst << std::defaultfloat << "\n";
  };
  if (group == "all" || group == "o3")
    report("o3", Metric::euclidean(3), [&] { return sample_orthogonal(3, rng); });
  if (group == "all" || group == "lorentz")
    report("lorentz", Metric::minkowski(1, 4), [&] { return sample_lorentz(rng); });
  if (group == "all" || group == "sp4")
    report("sp4", Metric::symplectic(4), [&] { return sample_symplectic(4, rng); });
}

int run_verify(const std::string& group, int trials, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AuditLine> lines;
  print_membership_residuals(group, trials, rng);

  const bool all = group == "all";
  if (all || group == "o3") {
    Rng init = rng.substream(1);
    VecToTensorModel vec_model(3, 2, Metric::euclidean(3), {16, 16}, Activation::Gelu, init);
    lines.push_back({"vectors_to_matrix", "o3", equivariance_audit(vec_model, rng, trials), 1e-9});

    SignatureModel sig(5, 3, Metric::euclidean(3), {16, 16}, Activation::Gelu, init);
    lines.push_back({"signature_model", "o3", equivariance_audit(sig, rng, trials), 1e-9});

    EigenEquivariantModel eig(3, {23, 23, 23}, Activation::Gelu, init);
    lines.push_back({"eigen_spectral_model", "o3", equivariance_audit(eig, rng, trials), 1e-8});

    SparseHModel full(SparseHModel::Variant::Full, 12, 5, {32, 32}, Activation::ReLU, init);
    lines.push_back({"sparse_h_full", "o5", equivariance_audit(full, rng, trials), 1e-9});
    SparseHModel diag(SparseHModel::Variant::Diag, 12, 5, {32, 32}, Activation::ReLU, init);
    lines.push_back({"sparse_h_diag", "o5", equivariance_audit(diag, rng, trials), 1e-9});

    DenseNet mlp({9, 32, 32, 3}, Activation::Gelu);
    mlp.init(init);
    lines.push_back({"mlp_baseline (report only)", "o3", equivariance_audit(mlp, 3, 3, rng, trials), 0.0});
  }
  if (all || group == "lorentz") {
    Rng init = rng.substream(2);
    VecToTensorModel vec_model(3, 2, Metric::minkowski(1, 4), {16, 16}, Activation::Gelu, init);
    lines.push_back({"vectors_to_matrix", "lorentz", equivariance_audit(vec_model, rng, trials), 1e-7});
    SignatureModel sig(5, 3, Metric::minkowski(1, 4), {16, 16}, Activation::Gelu, init);
    lines.push_back({"signature_model", "lorentz", equivariance_audit(sig, rng, trials), 1e-7});
  }
  if (all || group == "sp4") {
    Rng init = rng.substream(3);
    VecToTensorModel vec_model(3, 2, Metric::symplectic(4), {16, 16}, Activation::Gelu, init);
    lines.push_back({"vectors_to_matrix", "sp4", equivariance_audit(vec_model, rng, trials), 1e-7});
  }
  if (lines.empty()) throw std::invalid_argument("unknown group: " + group + " (o3|lorentz|sp4|all)");

  bool ok = true;
  for (const auto& l : lines) {
    const bool pass = l.bound == 0.0 || l.defect < l.bound;
    ok = ok && pass;
    std::cout << "model=" << l.model << " group=" << l.group << " trials=" << trials
              << " defect=" << std::scientific << std::setprecision(3) << l.defect;
    if (l.bound > 0.0)
      std::cout << " bound=" << l.bound << (pass ? " [ok]" : " [FAIL]");
    std::cout << "\n" << std::defaultfloat;
  }
  return ok ? 0 : 2;
}

Config load_config_with_seed(const std::string& config_file, long seed_flag) {
  Config cfg = Config::load(config_file);
  if (seed_flag >= 0) cfg.set("seed", std::to_string(seed_flag));
  return cfg;
}

int run_gen(const std::string& config_file, long seed, const std::string& out_dir) {
  const Config cfg = load_config_with_seed(config_file, seed);
  const auto files = gen_experiment(cfg, out_dir);
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

int run_train(const std::string& config_file, long seed, const std::string& out_dir) {
  const Config cfg = load_config_with_seed(config_file, seed);
  const TrainResult r = train_experiment(cfg, out_dir);
  std::cout << "checkpoint " << r.checkpoint.string() << "\n";
  std::cout << "metrics " << r.metrics_csv.string() << "\n";
  std::cout << "test_metric " << std::setprecision(10) << r.final_test_metric << "\n";
  for (const auto& [k, v] : r.extra) std::cout << k << " " << v << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data) {
  std::cout << "metric " << std::setprecision(10) << eval_experiment(checkpoint, data) << "\n";
  return 0;
}

int run_report(const std::string& in_dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") csvs.push_back(entry.path());
  std::sort(csvs.begin(), csvs.end());
  if (csvs.empty()) {
    std::cout << "no metrics CSVs under " << in_dir << "\n";
    return 0;
  }
  std::cout << std::left << std::setw(40) << "file" << std::setw(8) << "split" << std::setw(12)
            << "metric" << std::setw(8) << "epoch" << "value\n";
  for (const auto& f : csvs) {
    std::ifstream is(f);
    std::string line;
    std::getline(is, line); // header
    std::map<std::string, std::pair<long, double>> last;
    std::map<std::string, std::string> metric_name;
    while (std::getline(is, line)) {
      std::stringstream ss(line);
      std::string epoch, split, metric, value;
      std::getline(ss, epoch, ',');
      std::getline(ss, split, ',');
      std::getline(ss, metric, ',');
      std::getline(ss, value, ',');
      last[split] = {std::stol(epoch), std::stod(value)};
      metric_name[split] = metric;
    }
    const auto rel = fs::relative(f, in_dir).string();
    for (const auto& [split, ev] : last)
      std::cout << std::left << std::setw(40) << rel << std::setw(8) << split << std::setw(12)
                << metric_name[split] << std::setw(8) << ev.first << std::setprecision(8)
                << ev.second << "\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"eqt: group-equivariant tensor functions, isotropic bases, and experiments"};
  app.require_subcommand(1);
  app.fallthrough(); // lets --seed appear after the subcommand name

  long seed = -1;
  app.add_option("--seed", seed, "Seed overriding the config's (fully determines all randomness)");

  auto* basis = app.add_subcommand("basis", "Enumerate an isotropic tensor basis");
  int order = 2;
  std::string parity = "+";
  std::string metric = "euclidean:3";
  std::string basis_out;
  basis->add_option("--order", order, "Tensor order k")->required();
  basis->add_option("--parity", parity, "Parity + or -");
  basis->add_option("--metric", metric, "euclidean:D | minkowski:S,T | symplectic:D");
  basis->add_option("--out", basis_out, "Write the basis tensors as EQT1 records");

  auto* verify = app.add_subcommand("verify", "Run the randomized equivariance audit suite");
  std::string group = "all";
  int trials = 32;
  verify->add_option("--group", group, "o3 | lorentz | sp4 | all");
  verify->add_option("--trials", trials, "Trials per model");

  auto* gen = app.add_subcommand("gen", "Generate experiment datasets (EQD1 files)");
  std::string gen_config, gen_out = "out";
  gen->add_option("--config", gen_config, "Experiment config file")->required();
  gen->add_option("--out", gen_out, "Output directory");

  auto* train = app.add_subcommand("train", "Train a model per config; writes checkpoint + CSV");
  std::string train_config, train_out = "out";
  train->add_option("--config", train_config, "Experiment config file")->required();
  train->add_option("--out", train_out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
  std::string eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint (EQC1)")->required();
  eval->add_option("--data", eval_data, "Dataset file (EQD1)")->required();

  auto* report = app.add_subcommand("report", "Aggregate metrics CSVs into a summary table");
  std::string report_in = "out";
  report->add_option("--in", report_in, "Directory containing metrics CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e); // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e); // prints the diagnostic
    return 1;    // every parse problem is a validation error
  }

  try {
    if (basis->parsed()) return run_basis(metric, order, parity, basis_out);
    if (verify->parsed()) return run_verify(group, trials, seed < 0 ? 0 : static_cast<std::uint64_t>(seed));
    if (gen->parsed()) return run_gen(gen_config, seed, gen_out);
    if (train->parsed()) return run_train(train_config, seed, train_out);
    if (eval->parsed()) return run_eval(eval_ckpt, eval_data);
    if (report->parsed()) return run_report(report_in);
  } catch (const eqt::numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
