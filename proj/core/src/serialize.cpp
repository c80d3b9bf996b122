#include <cstdio>
#include <set>
#include <sstream>

#include "nemo/errors.hpp"
#include "nemo/optimizer.hpp"

namespace nemo {

namespace {

nlohmann::json to_json(const ScoreSummary& s) {
  return {{"mean", s.mean}, {"p50", s.p50}, {"p100", s.p100}};
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

template <class T>
void read_optional(const nlohmann::json& j, const char* key,
                   std::optional<T>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v);
  out = v;
}

}  // namespace

NemoConfig nemo_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "schema_version", "K", "M", "T", "lr_model", "lr_input", "tau",
      "inner_steps", "query_weight", "init", "hidden", "head", "head_scale",
      "minibatch_size", "pretrain_epochs", "pretrain_lr", "all_candidates",
      "n_members", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError("unknown config field '" + key + "'");
    }
  }
  if (j.contains("schema_version") &&
      j.at("schema_version") != kSchemaVersion) {
    throw ConfigError("unsupported config schema_version");
  }
  NemoConfig c;
  read(j, "K", c.K);
  read(j, "M", c.M);
  read(j, "T", c.T);
  read(j, "lr_model", c.lr_model);
  read(j, "lr_input", c.lr_input);
  read(j, "tau", c.tau);
  read(j, "inner_steps", c.inner_steps);
  read_optional(j, "query_weight", c.query_weight);
  std::string init = to_string(c.init);
  read(j, "init", init);
  c.init = init_strategy_from_string(init);
  read(j, "hidden", c.hidden);
  std::string head = to_string(c.head);
  read(j, "head", head);
  c.head = head_from_string(head);
  read_optional(j, "head_scale", c.head_scale);
  read(j, "minibatch_size", c.minibatch_size);
  read(j, "pretrain_epochs", c.pretrain_epochs);
  read(j, "pretrain_lr", c.pretrain_lr);
  read(j, "all_candidates", c.all_candidates);
  read(j, "n_members", c.n_members);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json to_json(const NemoConfig& c, std::size_t n) {
  return {{"schema_version", kSchemaVersion},
          {"K", c.K},
          {"M", c.M},
          {"T", c.T},
          {"lr_model", c.lr_model},
          {"lr_input", c.lr_input},
          {"tau", c.tau},
          {"inner_steps", c.inner_steps},
          {"query_weight", c.effective_query_weight(n)},
          {"init", to_string(c.init)},
          {"hidden", c.hidden},
          {"head", to_string(c.head)},
          {"head_scale", c.model_config().head_scale},
          {"minibatch_size", c.minibatch_size},
          {"pretrain_epochs", c.pretrain_epochs},
          {"pretrain_lr", c.pretrain_lr},
          {"all_candidates", c.all_candidates},
          {"n_members", c.n_members},
          {"seed", c.seed}};
}

nlohmann::json to_json(const RunResult& r) {
  nlohmann::json traj = nlohmann::json::array();
  for (const IterationRecord& rec : r.trajectory) {
    nlohmann::json e = {{"iteration", rec.iteration},
                        {"objective", rec.objective},
                        {"proxy", to_json(rec.proxy)}};
    if (rec.truth) e["truth"] = to_json(*rec.truth);
    traj.push_back(std::move(e));
  }
  nlohmann::json events = nlohmann::json::array();
  for (const RunEvent& ev : r.events) {
    events.push_back({{"iteration", ev.iteration},
                      {"candidate", ev.candidate},
                      {"message", ev.message}});
  }
  nlohmann::json final_scores = {{"proxy", r.final_proxy},
                                 {"proxy_percentiles",
                                  to_json(summarize(r.final_proxy))}};
  if (!r.final_truth.empty()) {
    final_scores["truth"] = r.final_truth;
    final_scores["truth_percentiles"] = to_json(summarize(r.final_truth));
  }
  return {{"schema_version", kSchemaVersion},
          {"algorithm", r.algorithm},
          {"config", to_json(r.config, r.dataset_size)},
          {"seed", r.config.seed},
          {"dataset_size", r.dataset_size},
          {"scheme", to_json(r.scheme)},
          {"model_updates", r.model_updates},
          {"final_batch", r.final_batch.x},
          {"final_scores", std::move(final_scores)},
          {"trajectory", std::move(traj)},
          {"events", std::move(events)}};
}

std::string trajectory_to_csv(const RunResult& r) {
  std::ostringstream out;
  out << "iteration,objective,proxy_mean,proxy_p50,proxy_p100,truth_mean,"
         "truth_p50,truth_p100\n";
  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (const IterationRecord& rec : r.trajectory) {
    out << rec.iteration;
    put(rec.objective);
    put(rec.proxy.mean);
    put(rec.proxy.p50);
    put(rec.proxy.p100);
    if (rec.truth) {
      put(rec.truth->mean);
      put(rec.truth->p50);
      put(rec.truth->p100);
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace nemo
