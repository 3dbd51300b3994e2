#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "arithlab/eval/evaluator.hpp"
#include "arithlab/interp/analyzer.hpp"
#include "arithlab/survey/survey.hpp"
#include "arithlab/train/trainer.hpp"

namespace arithlab::cli {

// One versioned JSON document driving every command. Unknown keys are
// rejected with the full list of offenders.
struct RunConfig {
  static constexpr int kVersion = 1;

  model::ModelConfig model;
  datagen::EnrichmentConfig data;
  train::TrainConfig train;  // model/data mirrored in
  struct EvalSection {
    std::int64_t n_questions = 1000000;
    double sub_fraction = 0.0;
    std::uint64_t seed = 9;
    int threads = 0;
  } eval;
  interp::Analyzer::Options interp;
  std::string interp_schema = "auto";  // auto | addition | subtraction | mixed
  survey::GatewayConfig survey;

  static RunConfig defaults();
  static RunConfig load(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // FNV-1a over the canonical serialized form; embedded in artifacts.
  std::uint64_t config_hash() const;
  std::string config_hash_hex() const;
};

}  // namespace arithlab::cli
