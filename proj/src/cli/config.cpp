#include "arithlab/cli/config.hpp"

#include <fstream>
#include <set>

namespace arithlab::cli {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& section, std::vector<std::string>& offenders) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) offenders.push_back(section.empty() ? key : section + "." + key);
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.train.model = cfg.model;
  cfg.train.data = cfg.data;
  return cfg;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  std::vector<std::string> offenders;
  reject_unknown(j, {"config_version", "model", "data", "train", "eval", "interp", "survey"},
                 "", offenders);
  if (j.value("config_version", kVersion) != kVersion)
    throw std::invalid_argument("unsupported config_version");

  RunConfig cfg;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"n_digits", "n_layers", "n_heads", "d_head", "seed"}, "model", offenders);
    cfg.model.n_digits = m.value("n_digits", cfg.model.n_digits);
    cfg.model.n_layers = m.value("n_layers", cfg.model.n_layers);
    cfg.model.n_heads = m.value("n_heads", cfg.model.n_heads);
    cfg.model.d_head = m.value("d_head", cfg.model.d_head);
    cfg.model.seed = m.value("seed", cfg.model.seed);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d,
                   {"enriched_fraction", "equal_operand_freq", "add_weight", "sub_weight",
                    "seed"},
                   "data", offenders);
    cfg.data.enriched_fraction = d.value("enriched_fraction", cfg.data.enriched_fraction);
    cfg.data.equal_operand_freq = d.value("equal_operand_freq", cfg.data.equal_operand_freq);
    cfg.data.add_weight = d.value("add_weight", cfg.data.add_weight);
    cfg.data.sub_weight = d.value("sub_weight", cfg.data.sub_weight);
    cfg.data.seed = d.value("seed", cfg.data.seed);
  }
  cfg.data.n_digits = cfg.model.n_digits;
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t,
                   {"batch_size", "total_steps", "lr", "weight_decay", "beta1", "beta2", "eps",
                    "stop_loss", "stop_patience", "checkpoint_every", "per_digit_every", "init",
                    "donor", "freeze", "freeze_every"},
                   "train", offenders);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.total_steps = t.value("total_steps", cfg.train.total_steps);
    cfg.train.optim.lr = t.value("lr", cfg.train.optim.lr);
    cfg.train.optim.weight_decay = t.value("weight_decay", cfg.train.optim.weight_decay);
    cfg.train.optim.beta1 = t.value("beta1", cfg.train.optim.beta1);
    cfg.train.optim.beta2 = t.value("beta2", cfg.train.optim.beta2);
    cfg.train.optim.eps = t.value("eps", cfg.train.optim.eps);
    cfg.train.stop_loss = t.value("stop_loss", cfg.train.stop_loss);
    cfg.train.stop_patience = t.value("stop_patience", cfg.train.stop_patience);
    cfg.train.checkpoint_every = t.value("checkpoint_every", cfg.train.checkpoint_every);
    cfg.train.per_digit_every = t.value("per_digit_every", cfg.train.per_digit_every);
    const auto init = t.value("init", std::string("fresh"));
    if (init == "fresh") {
      cfg.train.init.kind = train::InitKind::Fresh;
    } else if (init == "from_addition") {
      cfg.train.init.kind = train::InitKind::FromAddition;
    } else {
      offenders.push_back("train.init=" + init);
    }
    cfg.train.init.donor_path = t.value("donor", std::string());
    const auto freeze = t.value("freeze", std::string("none"));
    if (freeze == "none") {
      cfg.train.freeze.kind = train::FreezeKind::None;
    } else if (freeze == "attention") {
      cfg.train.freeze.kind = train::FreezeKind::AttentionEvery;
    } else if (freeze == "all") {
      cfg.train.freeze.kind = train::FreezeKind::AllEvery;
    } else {
      offenders.push_back("train.freeze=" + freeze);
    }
    cfg.train.freeze.every = t.value("freeze_every", cfg.train.freeze.every);
  }
  cfg.train.model = cfg.model;
  cfg.train.data = cfg.data;
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, {"n_questions", "sub_fraction", "seed", "threads"}, "eval", offenders);
    cfg.eval.n_questions = e.value("n_questions", cfg.eval.n_questions);
    cfg.eval.sub_fraction = e.value("sub_fraction", cfg.eval.sub_fraction);
    cfg.eval.seed = e.value("seed", cfg.eval.seed);
    cfg.eval.threads = e.value("threads", cfg.eval.threads);
  }
  if (j.contains("interp")) {
    const auto& i = j.at("interp");
    reject_unknown(i,
                   {"mode", "reference_questions", "reference_sub_fraction", "useful_threshold",
                    "attention_threshold", "pca_accept", "intervention_accept", "probe_count",
                    "pca_per_class", "intervention_pairs", "seed", "schema"},
                   "interp", offenders);
    const auto mode = i.value("mode", std::string("mean"));
    if (mode == "mean") {
      cfg.interp.mode = interp::AblationMode::Mean;
    } else if (mode == "zero") {
      cfg.interp.mode = interp::AblationMode::Zero;
    } else {
      offenders.push_back("interp.mode=" + mode);
    }
    cfg.interp.reference_questions = i.value("reference_questions", cfg.interp.reference_questions);
    cfg.interp.reference_sub_fraction =
        i.value("reference_sub_fraction", cfg.interp.reference_sub_fraction);
    cfg.interp.useful_threshold = i.value("useful_threshold", cfg.interp.useful_threshold);
    cfg.interp.attention_threshold = i.value("attention_threshold", cfg.interp.attention_threshold);
    cfg.interp.pca_accept = i.value("pca_accept", cfg.interp.pca_accept);
    cfg.interp.intervention_accept = i.value("intervention_accept", cfg.interp.intervention_accept);
    cfg.interp.probe_count = i.value("probe_count", cfg.interp.probe_count);
    cfg.interp.pca_per_class = i.value("pca_per_class", cfg.interp.pca_per_class);
    cfg.interp.intervention_pairs = i.value("intervention_pairs", cfg.interp.intervention_pairs);
    cfg.interp.seed = i.value("seed", cfg.interp.seed);
    cfg.interp_schema = i.value("schema", cfg.interp_schema);
  }
  if (j.contains("survey")) {
    const auto& s = j.at("survey");
    reject_unknown(s,
                   {"base_url", "auth_env", "models", "timeout_secs", "max_concurrent",
                    "max_retries"},
                   "survey", offenders);
    cfg.survey.base_url = s.value("base_url", cfg.survey.base_url);
    cfg.survey.auth_env = s.value("auth_env", cfg.survey.auth_env);
    if (s.contains("models")) cfg.survey.models = s.at("models").get<std::vector<std::string>>();
    cfg.survey.timeout_secs = s.value("timeout_secs", cfg.survey.timeout_secs);
    cfg.survey.max_concurrent = s.value("max_concurrent", cfg.survey.max_concurrent);
    cfg.survey.max_retries = s.value("max_retries", cfg.survey.max_retries);
  }

  if (!offenders.empty()) {
    std::string msg = "unknown or invalid config keys:";
    for (const auto& o : offenders) msg += " " + o;
    throw std::invalid_argument(msg);
  }
  cfg.model.validate();
  cfg.data.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  f >> j;
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"config_version", kVersion},
      {"model", model::config_to_json(model)},
      {"data",
       {{"enriched_fraction", data.enriched_fraction},
        {"equal_operand_freq", data.equal_operand_freq},
        {"add_weight", data.add_weight},
        {"sub_weight", data.sub_weight},
        {"seed", data.seed}}},
      {"train",
       {{"batch_size", train.batch_size},
        {"total_steps", train.total_steps},
        {"lr", train.optim.lr},
        {"weight_decay", train.optim.weight_decay},
        {"beta1", train.optim.beta1},
        {"beta2", train.optim.beta2},
        {"eps", train.optim.eps},
        {"stop_loss", train.stop_loss},
        {"stop_patience", train.stop_patience},
        {"checkpoint_every", train.checkpoint_every},
        {"per_digit_every", train.per_digit_every},
        {"init", train.init.kind == train::InitKind::Fresh ? "fresh" : "from_addition"},
        {"donor", train.init.donor_path},
        {"freeze", train.freeze.kind == train::FreezeKind::None
                       ? "none"
                       : (train.freeze.kind == train::FreezeKind::AttentionEvery ? "attention"
                                                                                 : "all")},
        {"freeze_every", train.freeze.every}}},
      {"eval",
       {{"n_questions", eval.n_questions},
        {"sub_fraction", eval.sub_fraction},
        {"seed", eval.seed},
        {"threads", eval.threads}}},
      {"interp",
       {{"mode", interp.mode == interp::AblationMode::Mean ? "mean" : "zero"},
        {"reference_questions", interp.reference_questions},
        {"reference_sub_fraction", interp.reference_sub_fraction},
        {"useful_threshold", interp.useful_threshold},
        {"attention_threshold", interp.attention_threshold},
        {"pca_accept", interp.pca_accept},
        {"intervention_accept", interp.intervention_accept},
        {"probe_count", interp.probe_count},
        {"pca_per_class", interp.pca_per_class},
        {"intervention_pairs", interp.intervention_pairs},
        {"seed", interp.seed},
        {"schema", interp_schema}}},
      {"survey",
       {{"base_url", survey.base_url},
        {"auth_env", survey.auth_env},
        {"models", survey.models},
        {"timeout_secs", survey.timeout_secs},
        {"max_concurrent", survey.max_concurrent},
        {"max_retries", survey.max_retries}}},
  };
}

std::uint64_t RunConfig::config_hash() const {
  const std::string dump = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : dump) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::config_hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash()));
  return buf;
}

}  // namespace arithlab::cli
