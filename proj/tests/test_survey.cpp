#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "arithlab/arith/oracle.hpp"
#include "arithlab/arith/vocab.hpp"
#include "arithlab/survey/survey.hpp"

using namespace arithlab;
using survey::GatewayConfig;
using survey::PromptSuite;

TEST_CASE("parse_response extracts the first integer") {
  CHECK(*survey::parse_response("1003") == "1003");
  CHECK(*survey::parse_response("The answer is 1,003.") == "1003");
  CHECK(*survey::parse_response("= -42 (negative)") == "-42");
  CHECK(*survey::parse_response("007") == "7");
  CHECK(*survey::parse_response("about 12, then 99") == "12");
  CHECK(!survey::parse_response("about one thousand").has_value());
  CHECK(!survey::parse_response("").has_value());
}

TEST_CASE("default suite validates against the oracle") {
  const auto suite = PromptSuite::default_addition();
  CHECK(suite.prompts.size() == 12);
  CHECK(suite.prompts.front().digit_count == 1);
  CHECK(suite.prompts.back().digit_count == 12);
  CHECK(suite.prompts[2].text == "Answer concisely: 774+229=");
  CHECK(suite.prompts[2].expected == "1003");

  // Tampered expected answers are rejected at load.
  auto j = suite.to_json();
  j["prompts"][4]["expected"] = "123456";
  CHECK_THROWS(PromptSuite::from_json(j));

  // Non-increasing digit counts are rejected.
  auto j2 = suite.to_json();
  std::swap(j2["prompts"][0], j2["prompts"][1]);
  CHECK_THROWS(PromptSuite::from_json(j2));
}

TEST_CASE("answer_decimal_string strips padding") {
  CHECK(survey::answer_decimal_string(arith::Answer(arith::Sign::Plus, {1, 0, 0, 3})) == "1003");
  CHECK(survey::answer_decimal_string(arith::Answer(arith::Sign::Minus, {0, 0, 0, 4})) == "-4");
  CHECK(survey::answer_decimal_string(arith::Answer(arith::Sign::Plus, {0, 0})) == "0");
}

TEST_CASE("mock gateway: scoring, early stop, and error isolation") {
  // The mock answers correctly up to a per-model prompt budget, then lies;
  // "oracle" always answers correctly, "broken" returns HTTP 500.
  httplib::Server server;
  server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const auto model = body.at("model").get<std::string>();
    const auto prompt = body.at("messages")[0].at("content").get<std::string>();
    if (model == "broken") {
      res.status = 500;
      return;
    }
    const auto colon = prompt.find(": ");
    const auto q = arith::parse_question(prompt.substr(colon + 2));
    std::string answer = survey::answer_decimal_string(arith::oracle_eval(q));
    int budget = 12;
    if (model == "fails-at-4") budget = 3;
    if (model == "fails-first") budget = 0;
    if (model == "wordy") answer = "The sum equals " + answer + ", I believe.";
    static thread_local int ignored = 0;
    (void)ignored;
    // Budget is per request sequence: infer the index from the digit count.
    const int idx = q.n_digits() - 1;
    if (idx >= budget && model != "oracle" && model != "wordy") answer = "9999999999999999";
    const nlohmann::json out = {
        {"choices",
         nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", answer}}}}})}};
    res.set_content(out.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  GatewayConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.models = {"oracle", "fails-at-4", "fails-first", "broken", "wordy"};
  cfg.max_concurrent = 2;
  cfg.max_retries = 1;
  cfg.auth_env.clear();

  const auto suite = PromptSuite::default_addition();
  const auto results = survey::run_survey(cfg, suite);
  server.stop();
  server_thread.join();

  REQUIRE(results.runs.size() == 5);
  std::map<std::string, const survey::ModelRun*> by_name;
  for (const auto& r : results.runs) by_name[r.model] = &r;

  CHECK(by_name["oracle"]->score == 12);
  CHECK(by_name["oracle"]->transcript.size() == 12);
  CHECK(by_name["wordy"]->score == 12);  // parser digs the number out of prose
  CHECK(by_name["fails-at-4"]->score == 3);
  CHECK(by_name["fails-at-4"]->transcript.size() == 4);  // stopped at first failure
  CHECK(by_name["fails-first"]->score == 0);
  CHECK(by_name["broken"]->score == 0);
  CHECK(!by_name["broken"]->error.empty());
  CHECK(by_name["oracle"]->error.empty());

  const auto csv = survey::export_scores_csv(results);
  CHECK(csv.find("model,score") == 0);
  CHECK(csv.find("oracle,12") != std::string::npos);
  CHECK(csv.find("fails-at-4,3") != std::string::npos);
  // Deterministic ordering by model id.
  CHECK(csv.find("broken") < csv.find("fails-at-4"));
  CHECK(csv.find("fails-at-4") < csv.find("oracle"));

  const auto j = results.to_json();
  CHECK(j.at("runs").size() == 5);
}
