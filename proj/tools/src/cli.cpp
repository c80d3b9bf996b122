#include "nemo/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "nemo/cnml.hpp"
#include "nemo/errors.hpp"
#include "nemo/optimizer.hpp"
#include "nemo/profile.hpp"
#include "nemo/tasks.hpp"

namespace nemo {

namespace {

namespace fs = std::filesystem;

// Missing inputs are usage errors, not runtime failures.
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* kind() const noexcept override { return "usage"; }
};

std::string read_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("no such file: " + path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

OfflineDataset read_dataset(const std::string& path) {
  read_file(path);
  return load_dataset(path);
}

NemoConfig read_config(const std::string& path) {
  if (path.empty()) return NemoConfig{};
  return nemo_config_from_json(read_json(path));
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

Evaluator read_task(const std::string& path) {
  if (path.empty()) return {};
  SyntheticTask task = task_from_metadata(read_json(path));
  return [task = std::move(task)](std::span<const double> x) {
    return task.evaluate(x);
  };
}

nlohmann::json percentiles_json(std::span<const double> s) {
  if (s.empty()) return nullptr;
  const ScoreSummary sum = summarize(s);
  return {{"mean", sum.mean}, {"p50", sum.p50}, {"p100", sum.p100}};
}

nlohmann::json run_summary(const std::string& name, const RunResult& r) {
  return {{"name", name},
          {"algorithm", r.algorithm},
          {"config", to_json(r.config, r.dataset_size)},
          {"model_updates", r.model_updates},
          {"final_proxy", percentiles_json(r.final_proxy)},
          {"final_truth", percentiles_json(r.final_truth)},
          {"events", r.events.size()}};
}

RunResult run_algorithm(const std::string& algo, const NemoConfig& config,
                        const OfflineDataset& data, const Evaluator& truth) {
  if (algo == "nemo") return run_nemo(config, data, truth);
  if (algo == "forward") return run_forward_baseline(config, data, truth);
  return run_ensemble_baseline(config, data, config.n_members, truth);
}

struct OracleCheckConfig {
  int K = 4;
  ModelConfig model;
  OracleOptions oracle;
  std::vector<std::vector<double>> queries;
};

OracleCheckConfig oracle_check_config(const nlohmann::json& j) {
  OracleCheckConfig c;
  try {
    if (j.contains("schema_version") && j.at("schema_version") != kSchemaVersion) {
      throw ConfigError("unsupported oracle config schema_version");
    }
    if (j.contains("K")) c.K = j.at("K").get<int>();
    ModelConfig defaults;
    defaults.hidden = {};
    defaults.head_scale = c.K;
    c.model = model_config_from_json(j.value("model", nlohmann::json::object()),
                                     defaults);
    c.oracle = oracle_options_from_json(
        j.value("oracle", nlohmann::json::object()));
    if (j.contains("queries")) {
      c.queries = j.at("queries").get<std::vector<std::vector<double>>>();
    }
    if (j.contains("grid")) {
      for (auto& x : parse_grid(j.at("grid").get<std::string>())) {
        c.queries.push_back(std::move(x));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("oracle config: ") + e.what());
  }
  if (c.queries.empty()) throw ConfigError("oracle config: no queries");
  return c;
}

nlohmann::json oracle_check(const OfflineDataset& data,
                            const OracleCheckConfig& c) {
  const QuantizationScheme scheme = build_scheme(data.y, c.K);
  const std::vector<double> g = g_table(scheme);
  nlohmann::json queries = nlohmann::json::array();
  bool all_hold = true;
  bool all_converged = true;
  double worst_margin = -std::numeric_limits<double>::infinity();
  for (const auto& x : c.queries) {
    if (static_cast<int>(x.size()) != data.dim) {
      throw ConfigError("oracle config: query dimension differs from data");
    }
    const OracleResult oracle =
        exact_cnml_oracle(data, x, scheme, c.model, c.oracle);
    const RegretReport regret = regret_report(oracle, g);
    std::size_t worst = 0;
    for (std::size_t k = 0; k < regret.functional_regrets.size(); ++k) {
      if (regret.functional_regrets[k] > regret.functional_regrets[worst]) {
        worst = k;
      }
    }
    const PinskerReport pinsker =
        pinsker_chain_check(oracle.fits[worst].pmf, oracle.pmf.probs, g);
    nlohmann::json fits = nlohmann::json::array();
    for (const BinFit& f : oracle.fits) {
      fits.push_back({{"bin", f.bin},
                      {"objective", f.objective},
                      {"converged", f.converged},
                      {"iterations", f.iterations},
                      {"best_restart", f.best_restart}});
    }
    all_hold = all_hold && regret.bound_holds(1e-3);
    all_converged = all_converged && oracle.converged();
    worst_margin = std::max(worst_margin,
                            regret.max_functional_regret - regret.bound);
    queries.push_back({{"x", x},
                       {"pmf", to_json(oracle.pmf)},
                       {"gamma", regret.gamma},
                       {"regret", to_json(regret)},
                       {"pinsker_worst_label", worst},
                       {"pinsker", to_json(pinsker)},
                       {"fits", std::move(fits)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"scheme", to_json(scheme)},
          {"model", to_json(c.model)},
          {"oracle", to_json(c.oracle)},
          {"queries", std::move(queries)},
          {"summary",
           {{"bound_holds", all_hold},
            {"bound_slack", 1e-3},
            {"max_regret_minus_bound", worst_margin},
            {"converged", all_converged}}}};
}

void error_line(std::ostream& err, const std::string& kind,
                const std::string& message) {
  err << nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump()
      << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Offline model-based optimization with amortized CNML", "nemo"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_task, gen_out, gen_task_out;
  int gen_n = 50, gen_dim = 4;
  std::uint64_t gen_seed = 0;
  double gen_noise = 0.0, gen_lo = -3.0, gen_hi = 3.0;
  gen->add_option("--task", gen_task, "sin1d | narrow")
      ->required()
      ->check(CLI::IsMember({"sin1d", "narrow"}));
  gen->add_option("--n", gen_n, "number of rows")->capture_default_str();
  gen->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
  gen->add_option("--out", gen_out, "dataset CSV (stdout when omitted)");
  gen->add_option("--task-out", gen_task_out,
                  "task description JSON, used by run --task");
  gen->add_option("--noise-sd", gen_noise, "sin1d observation noise")
      ->capture_default_str();
  gen->add_option("--lo", gen_lo, "sin1d support lower end")
      ->capture_default_str();
  gen->add_option("--hi", gen_hi, "sin1d support upper end")
      ->capture_default_str();
  gen->add_option("--dim", gen_dim, "narrow input dimension")
      ->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "run an optimizer on a dataset");
  std::string run_algo, run_data, run_config, run_out, run_traj, run_task;
  run->add_option("--algo", run_algo, "nemo | forward | ensemble")
      ->required()
      ->check(CLI::IsMember({"nemo", "forward", "ensemble"}));
  run->add_option("--data", run_data, "dataset CSV")->required();
  run->add_option("--config", run_config, "config JSON (defaults if omitted)");
  run->add_option("--out", run_out, "result JSON (stdout when omitted)");
  run->add_option("--trajectory", run_traj, "per-iteration CSV");
  run->add_option("--task", run_task, "task JSON for ground-truth scores");

  // profile
  auto* prof = app.add_subcommand("profile", "uncertainty profile on a grid");
  std::string prof_data, prof_config, prof_grid, prof_out,
      prof_estimator = "cnml";
  CnmlProfileOptions prof_opts;
  prof->add_option("--data", prof_data, "dataset CSV (1-D inputs)")->required();
  prof->add_option("--config", prof_config, "config JSON");
  prof->add_option("--grid", prof_grid, "lo:hi:steps")->required();
  prof->add_option("--out", prof_out, "profile CSV (stdout when omitted)");
  prof->add_option("--estimator", prof_estimator, "cnml | ensemble")
      ->check(CLI::IsMember({"cnml", "ensemble"}))
      ->capture_default_str();
  prof->add_option("--inner-steps", prof_opts.inner_steps,
                   "augmented updates per grid point")
      ->capture_default_str();

  // oracle-check
  auto* oc = app.add_subcommand("oracle-check",
                                "exact CNML, regret and bound report");
  std::string oc_data, oc_config, oc_out;
  oc->add_option("--data", oc_data, "dataset CSV")->required();
  oc->add_option("--config", oc_config, "oracle config JSON")->required();
  oc->add_option("--out", oc_out, "report JSON (stdout when omitted)");

  // ablate
  auto* abl = app.add_subcommand("ablate", "ablation protocols");
  std::string abl_which, abl_data, abl_config, abl_out, abl_task;
  std::vector<int> abl_steps{1, 2, 4};
  abl->add_option("--which", abl_which, "no-nml | categorical | step-ratio")
      ->required()
      ->check(CLI::IsMember({"no-nml", "categorical", "step-ratio"}));
  abl->add_option("--data", abl_data, "dataset CSV")->required();
  abl->add_option("--config", abl_config, "base config JSON");
  abl->add_option("--out", abl_out, "summary JSON (stdout when omitted)");
  abl->add_option("--task", abl_task, "task JSON for ground-truth scores");
  abl->add_option("--steps", abl_steps, "inner_steps values for step-ratio")
      ->delimiter(',')
      ->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (*gen) {
      GeneratedTask g = gen_task == "sin1d"
                            ? gen_sin1d(gen_n, gen_noise, {gen_lo, gen_hi},
                                        gen_seed)
                            : gen_narrow_support(gen_dim, gen_n, gen_seed);
      emit(gen_out, dataset_to_csv(g.data), out);
      if (!gen_task_out.empty()) {
        write_file_atomic(gen_task_out, dump(g.task.metadata));
      }
    } else if (*run) {
      const OfflineDataset data = read_dataset(run_data);
      const NemoConfig config = read_config(run_config);
      const RunResult r =
          run_algorithm(run_algo, config, data, read_task(run_task));
      emit(run_out, dump(to_json(r)), out);
      if (!run_traj.empty()) write_file_atomic(run_traj, trajectory_to_csv(r));
    } else if (*prof) {
      const OfflineDataset data = read_dataset(prof_data);
      if (data.dim != 1) {
        throw ConfigError("profile: grid profiles need 1-D inputs");
      }
      const NemoConfig config = read_config(prof_config);
      const auto grid = parse_grid(prof_grid);
      prof_opts.seed = config.seed;
      prof_opts.minibatch_size = config.minibatch_size;
      std::vector<ProfileRow> rows;
      if (prof_estimator == "cnml") {
        NemoState st = nemo_setup(config, data);
        rows = uncertainty_profile(
            cnml_estimator(st.ensemble, data, st.bins, prof_opts), grid,
            st.ensemble.scheme);
      } else {
        const QuantizationScheme scheme = build_scheme(data.y, config.K);
        rows = uncertainty_profile(
            mixture_estimator(train_bootstrap_ensemble(config, data, scheme,
                                                       config.n_members)),
            grid, scheme);
      }
      emit(prof_out, profile_to_csv(rows), out);
    } else if (*oc) {
      const OfflineDataset data = read_dataset(oc_data);
      const auto c = oracle_check_config(read_json(oc_config));
      emit(oc_out, dump(oracle_check(data, c)), out);
    } else if (*abl) {
      const OfflineDataset data = read_dataset(abl_data);
      const NemoConfig base = read_config(abl_config);
      const Evaluator truth = read_task(abl_task);
      nlohmann::json variants = nlohmann::json::array();
      if (abl_which == "no-nml") {
        NemoConfig frozen = base;
        frozen.lr_model = 0.0;
        variants.push_back(run_summary("nemo", run_nemo(base, data, truth)));
        variants.push_back(
            run_summary("no-nml", run_nemo(frozen, data, truth)));
      } else if (abl_which == "categorical") {
        NemoConfig logistic = base, categorical = base;
        logistic.head = Head::kLogistic;
        categorical.head = Head::kCategorical;
        variants.push_back(
            run_summary("logistic", run_nemo(logistic, data, truth)));
        variants.push_back(
            run_summary("categorical", run_nemo(categorical, data, truth)));
      } else {
        for (int s : abl_steps) {
          NemoConfig c = base;
          c.inner_steps = s;
          variants.push_back(run_summary("inner_steps=" + std::to_string(s),
                                         run_nemo(c, data, truth)));
        }
      }
      emit(abl_out,
           dump({{"schema_version", kSchemaVersion},
                 {"which", abl_which},
                 {"variants", std::move(variants)}}),
           out);
    }
  } catch (const ConfigError& e) {
    error_line(err, e.kind(), e.what());
    return kExitUsage;
  } catch (const Error& e) {
    error_line(err, e.kind(), e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    error_line(err, "internal", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace nemo
