#include "arithlab/survey/survey.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "arithlab/arith/oracle.hpp"
#include "arithlab/arith/vocab.hpp"

namespace arithlab::survey {

void GatewayConfig::validate() const {
  if (timeout_secs <= 0) throw std::invalid_argument("gateway timeout must be positive");
  if (max_concurrent < 1) throw std::invalid_argument("gateway concurrency must be >= 1");
  if (max_retries < 0) throw std::invalid_argument("gateway retries must be >= 0");
}

std::string answer_decimal_string(const arith::Answer& answer) {
  std::string digits;
  for (arith::Digit d : answer.msf()) digits += static_cast<char>('0' + d);
  const auto first = digits.find_first_not_of('0');
  digits = first == std::string::npos ? "0" : digits.substr(first);
  if (answer.sign() == arith::Sign::Minus && digits != "0") return "-" + digits;
  return digits;
}

namespace {

// Extracts the arithmetic expression embedded in a prompt ("...: 774+229=").
arith::Question question_in_prompt(const std::string& text) {
  const auto start = text.find_last_of(": ");
  const std::string expr = start == std::string::npos ? text : text.substr(start + 1);
  return arith::parse_question(expr);
}

}  // namespace

void PromptSuite::validate() const {
  if (prompts.empty()) throw std::invalid_argument("prompt suite is empty");
  int last_digits = 0;
  for (const auto& p : prompts) {
    const auto q = question_in_prompt(p.text);
    if (q.n_digits() <= last_digits)
      throw std::invalid_argument("prompt digit counts must strictly increase");
    last_digits = q.n_digits();
    const auto truth = answer_decimal_string(arith::oracle_eval(q));
    if (truth != p.expected)
      throw std::invalid_argument("suite expected answer disagrees with the oracle for \"" +
                                  p.text + "\" (oracle says " + truth + ")");
  }
}

PromptSuite PromptSuite::default_addition() {
  PromptSuite s;
  s.op_label = "addition";
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"Answer concisely: 6+5=", "11"},
      {"Answer concisely: 19+87=", "106"},
      {"Answer concisely: 774+229=", "1003"},
      {"Answer concisely: 6587+3416=", "10003"},
      {"Answer concisely: 22605+77398=", "100003"},
      {"Answer concisely: 532847+467159=", "1000006"},
      {"Answer concisely: 5613709+4386294=", "10000003"},
      {"Answer concisely: 72582383+27417619=", "100000002"},
      {"Answer concisely: 206727644+793272359=", "1000000003"},
      {"Answer concisely: 7580116456+2419883549=", "10000000005"},
      {"Answer concisely: 52449010267+47550989737=", "100000000004"},
      {"Answer concisely: 888522030597+111477969406=", "1000000000003"},
  };
  for (const auto& [text, expected] : rows) {
    Prompt p;
    p.text = text;
    p.expected = expected;
    p.digit_count = question_in_prompt(text).n_digits();
    s.prompts.push_back(std::move(p));
  }
  s.validate();
  return s;
}

PromptSuite PromptSuite::from_json(const nlohmann::json& j) {
  PromptSuite s;
  s.op_label = j.value("op_label", "addition");
  for (const auto& p : j.at("prompts")) {
    Prompt prompt;
    prompt.text = p.at("text").get<std::string>();
    prompt.expected = p.at("expected").get<std::string>();
    prompt.digit_count = question_in_prompt(prompt.text).n_digits();
    s.prompts.push_back(std::move(prompt));
  }
  s.validate();
  return s;
}

PromptSuite PromptSuite::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open prompt suite: " + path);
  nlohmann::json j;
  f >> j;
  return from_json(j);
}

nlohmann::json PromptSuite::to_json() const {
  nlohmann::json prompts_j = nlohmann::json::array();
  for (const auto& p : prompts)
    prompts_j.push_back(
        {{"text", p.text}, {"expected", p.expected}, {"digit_count", p.digit_count}});
  return {{"op_label", op_label}, {"prompts", prompts_j}};
}

std::optional<std::string> parse_response(const std::string& text) {
  std::size_t i = 0;
  while (i < text.size() && !std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i == text.size()) return std::nullopt;
  const bool negative = i > 0 && text[i - 1] == '-';
  std::string digits;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits += c;
      ++i;
    } else if (c == ',' && i + 1 < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      ++i;  // thousands separator inside the run
    } else {
      break;
    }
  }
  const auto first = digits.find_first_not_of('0');
  digits = first == std::string::npos ? "0" : digits.substr(first);
  if (negative && digits != "0") return "-" + digits;
  return digits;
}

namespace {

struct Endpoint {
  std::string host_port;  // "host:port" for httplib::Client
};

ModelRun survey_one_model(const GatewayConfig& cfg, const PromptSuite& suite,
                          const std::string& model, const std::string& token) {
  ModelRun run;
  run.model = model;
  httplib::Client client(cfg.base_url);
  client.set_connection_timeout(cfg.timeout_secs, 0);
  client.set_read_timeout(cfg.timeout_secs, 0);

  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

  for (const auto& prompt : suite.prompts) {
    const nlohmann::json body = {
        {"model", model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt.text}}})}};

    httplib::Result res;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
      if (res && res->status < 500) break;
    }
    if (!res) {
      run.error = "transport error: " + httplib::to_string(res.error());
      break;
    }
    if (res->status != 200) {
      run.error = "http status " + std::to_string(res->status);
      break;
    }

    std::string content;
    try {
      const auto j = nlohmann::json::parse(res->body);
      content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      run.error = std::string("malformed gateway response: ") + e.what();
      break;
    }

    const auto parsed = parse_response(content);
    const bool ok = parsed.has_value() && *parsed == prompt.expected;
    nlohmann::json entry = {{"prompt", prompt.text},
                            {"response", content},
                            {"expected", prompt.expected},
                            {"correct", ok}};
    entry["parsed"] = parsed ? nlohmann::json(*parsed) : nlohmann::json();
    run.transcript.push_back(std::move(entry));
    if (!ok) break;  // first failure ends this model's run
    run.score = prompt.digit_count;
  }
  return run;
}

}  // namespace

SurveyResults run_survey(const GatewayConfig& cfg, const PromptSuite& suite) {
  cfg.validate();
  suite.validate();
  std::string token;
  if (!cfg.auth_env.empty()) {
    if (const char* v = std::getenv(cfg.auth_env.c_str())) token = v;
  }

  SurveyResults results;
  results.runs.resize(cfg.models.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.models.size()) return;
      results.runs[i] = survey_one_model(cfg, suite, cfg.models[i], token);
    }
  };
  const int threads = std::min<int>(cfg.max_concurrent, static_cast<int>(cfg.models.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

nlohmann::json SurveyResults::to_json() const {
  nlohmann::json runs_j = nlohmann::json::array();
  for (const auto& r : runs)
    runs_j.push_back({{"model", r.model},
                      {"score", r.score},
                      {"error", r.error},
                      {"transcript", r.transcript}});
  return {{"runs", runs_j}};
}

std::string export_scores_csv(const SurveyResults& results) {
  std::vector<const ModelRun*> ordered;
  for (const auto& r : results.runs) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const ModelRun* a, const ModelRun* b) { return a->model < b->model; });
  std::string out = "model,score,prompts_sent,error\n";
  for (const auto* r : ordered) {
    out += r->model + "," + std::to_string(r->score) + "," +
           std::to_string(r->transcript.size()) + "," + r->error + "\n";
  }
  return out;
}

}  // namespace arithlab::survey
