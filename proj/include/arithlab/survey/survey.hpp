#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "arithlab/arith/types.hpp"

namespace arithlab::survey {

struct GatewayConfig {
  std::string base_url = "http://localhost:8787";
  std::string auth_env = "ARITHLAB_GATEWAY_TOKEN";
  std::vector<std::string> models;
  int timeout_secs = 30;
  int max_concurrent = 4;
  int max_retries = 2;

  void validate() const;
};

struct Prompt {
  std::string text;      // e.g. "Answer concisely: 774+229="
  std::string expected;  // decimal answer string
  int digit_count = 0;   // operand width, derived from the embedded question
};

// Ordered prompts with strictly increasing digit counts. Expected answers
// are revalidated against the exact oracle at load time.
struct PromptSuite {
  std::string op_label = "addition";
  std::vector<Prompt> prompts;

  static PromptSuite default_addition();  // the bundled cascading-carry set
  static PromptSuite from_json(const nlohmann::json& j);
  static PromptSuite load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
};

// First maximal digit run, with an optional leading minus and thousands
// separators stripped; npos-style failure when no digits appear.
std::optional<std::string> parse_response(const std::string& text);

struct ModelRun {
  std::string model;
  int score = 0;
  std::string error;  // transport/auth failure note, empty on success
  nlohmann::json transcript = nlohmann::json::array();
};

struct SurveyResults {
  std::vector<ModelRun> runs;

  nlohmann::json to_json() const;
};

// Prompts go out strictly in order per model, stopping at the first failure;
// the score is the digit count of the last consecutive success. Models run
// concurrently up to max_concurrent. Endpoint errors are recorded per model
// and never abort the sweep.
SurveyResults run_survey(const GatewayConfig& cfg, const PromptSuite& suite);

// One row per model, ordered by model id: model,score,prompts_sent,error.
std::string export_scores_csv(const SurveyResults& results);

// Unpadded decimal form of an answer ("+1003" -> "1003", "-0004" -> "-4").
std::string answer_decimal_string(const arith::Answer& answer);

}  // namespace arithlab::survey
