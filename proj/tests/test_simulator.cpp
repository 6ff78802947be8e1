#include <doctest.h>

#include "evorec/simulator.hpp"
#include "helpers.hpp"

using namespace evorec;

namespace {

Gateway mock_from(const testutil::TempDir& tmp, const nlohmann::json& entries) {
  auto script = tmp.path() / "script.json";
  testutil::write_mock_script(script, entries);
  GatewayConfig cfg;
  cfg.provider = GatewayConfig::Provider::Mock;
  cfg.script_path = script;
  return Gateway(cfg);
}

Persona basic_persona(const UserId& u) {
  TraitLevels l;
  return render_persona(u, l, TraitVector{5, 1.0, 2});
}

}  // namespace

TEST_CASE("sample_users is deterministic and validates n") {
  auto d = testutil::make_block_dataset(5, 8, 6);
  auto a = sample_users(d, 4, 9);
  auto b = sample_users(d, 4, 9);
  CHECK(a == b);
  CHECK(a.size() == 4);
  CHECK_THROWS(sample_users(d, d.users.size() + 1, 9));
  // returned in dataset order
  size_t last = 0;
  for (const auto& u : a) {
    size_t idx = d.user_index(u);
    CHECK(idx >= last);
    last = idx;
  }
}

TEST_CASE("critique_user parses a complete verdict set") {
  auto d = testutil::make_block_dataset(4, 8, 6);
  testutil::TempDir tmp("sim");
  auto llm = mock_from(
      tmp, nlohmann::json::array(
               {{{"instruction_id", "I_SIM"},
                 {"reply",
                  "{\"verdicts\": [{\"item\": \"i00\", \"accept\": true, \"reason\": \"fits\"},"
                  "{\"item\": \"i01\", \"accept\": false, \"reason\": \"wrong category\"}],"
                  "\"failure_tags\": [\"category_mismatch\"], \"text\": \"mixed bag\"}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  auto c = critique_user(basic_persona("u00"), d, {"i02"}, {"i00", "i01"}, prompts, llm);
  CHECK_FALSE(c.fallback);
  REQUIRE(c.verdicts.size() == 2);
  CHECK(c.verdicts[0].item == "i00");
  CHECK(c.verdicts[0].accept);
  CHECK(c.verdicts[1].reason == "wrong category");
  CHECK(c.failure_tags == std::vector<std::string>{"category_mismatch"});
}

TEST_CASE("critique_user falls back after two bad replies") {
  auto d = testutil::make_block_dataset(4, 8, 6);
  testutil::TempDir tmp("sim");
  // valid JSON but missing a verdict for i01 both times
  auto llm = mock_from(tmp, nlohmann::json::array(
                                {{{"instruction_id", "I_SIM"},
                                  {"reply", "{\"verdicts\": [{\"item\": \"i00\", \"accept\": true}],"
                                            "\"failure_tags\": [\"other\"]}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  auto c = critique_user(basic_persona("u00"), d, {"i02"}, {"i00", "i01"}, prompts, llm);
  CHECK(c.fallback);
  CHECK(c.failure_tags == std::vector<std::string>{"other"});
  REQUIRE(c.verdicts.size() == 2);
  for (const auto& v : c.verdicts) CHECK_FALSE(v.accept);
}

TEST_CASE("critique_user rejects tags outside the vocabulary") {
  auto d = testutil::make_block_dataset(4, 8, 6);
  testutil::TempDir tmp("sim");
  auto llm = mock_from(tmp, nlohmann::json::array(
                                {{{"instruction_id", "I_SIM"},
                                  {"reply", "{\"verdicts\": [{\"item\": \"i00\", \"accept\": true}],"
                                            "\"failure_tags\": [\"made_up_tag\"]}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  auto c = critique_user(basic_persona("u00"), d, {}, {"i00"}, prompts, llm);
  CHECK(c.fallback);  // unknown tag invalidates the reply
}

TEST_CASE("summarize_reports computes exact prevalences") {
  std::vector<UserCritique> cs(4);
  cs[0].failure_tags = {"category_mismatch", "low_diversity"};
  cs[1].failure_tags = {"category_mismatch"};
  cs[2].failure_tags = {"other"};
  cs[3].failure_tags = {"category_mismatch"};
  for (auto& c : cs) c.user = "u";
  testutil::TempDir tmp("sim");
  auto llm = mock_from(tmp, nlohmann::json::array({{{"instruction_id", "I_SUMMARIZE"},
                                                    {"reply", "{\"narrative\": \"summary\"}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  auto r = summarize_reports(cs, prompts, llm);
  CHECK(r.sample_size == 4);
  REQUIRE_FALSE(r.common_failures.empty());
  CHECK(r.common_failures[0].tag == "category_mismatch");
  CHECK(r.common_failures[0].prevalence == doctest::Approx(0.75));
  CHECK(r.narrative == "summary");
  for (size_t i = 1; i < r.common_failures.size(); ++i) {
    CHECK(r.common_failures[i - 1].prevalence >= r.common_failures[i].prevalence);
  }
}

TEST_CASE("run_simulator critiques the sampled users concurrently") {
  auto d = testutil::make_block_dataset(5, 8, 6);
  testutil::TempDir tmp("sim");
  auto llm = mock_from(
      tmp, nlohmann::json::array({{{"instruction_id", "I_SIM"}, {"reply", "{\"bad\": 1}"}},
                                  {{"instruction_id", "I_SUMMARIZE"},
                                   {"reply", "{\"narrative\": \"n\"}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  auto personas = build_personas(d);
  std::vector<UserCritique> critiques;
  auto recommender = [&](const UserId&) { return std::vector<ItemId>{"i00", "i01"}; };
  auto r = run_simulator(d, personas, recommender, 6, 11, prompts, llm, 3, &critiques);
  CHECK(r.sample_size == 6);
  CHECK(critiques.size() == 6);
  // the scripted reply is unusable, so every critique degrades to [other]
  REQUIRE(r.common_failures.size() == 1);
  CHECK(r.common_failures[0].tag == "other");
  CHECK(r.common_failures[0].prevalence == doctest::Approx(1.0));
}

TEST_CASE("session accounting: depth 1, view 0.5, satisfy 8") {
  auto d = testutil::make_block_dataset(4, 8, 6);
  testutil::TempDir tmp("sess");
  auto llm = mock_from(
      tmp, nlohmann::json::array(
               {{{"instruction_id", "I_SESSION"},
                 {"reply", "{\"viewed\": [\"i00\"], \"continue\": false}"}},
                {{"instruction_id", "I_SATISFY"}, {"reply", "{\"satisfy\": 8}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  Pager pager = [](int page) {
    return page == 0 ? std::vector<ItemId>{"i00", "i01"} : std::vector<ItemId>{};
  };
  auto out = simulate_session(basic_persona("u00"), d, pager, prompts, llm, 5);
  CHECK(out.depth == 1);
  CHECK(out.view == doctest::Approx(0.5));
  CHECK(out.satisfy == doctest::Approx(8.0));
}

TEST_CASE("session depth never exceeds max_pages") {
  auto d = testutil::make_block_dataset(4, 8, 6);
  testutil::TempDir tmp("sess");
  auto llm = mock_from(
      tmp, nlohmann::json::array(
               {{{"instruction_id", "I_SESSION"},
                 {"reply", "{\"viewed\": [], \"continue\": true}"}},
                {{"instruction_id", "I_SATISFY"}, {"reply", "{\"satisfy\": 99}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  Pager pager = [](int) { return std::vector<ItemId>{"i00"}; };  // never exhausted
  auto out = simulate_session(basic_persona("u00"), d, pager, prompts, llm, 3);
  CHECK(out.depth == 3);
  CHECK(out.satisfy == 10.0);  // clamped into [1,10]
  CHECK(out.view == 0.0);
}

TEST_CASE("viewed items outside the shown page are not counted") {
  auto d = testutil::make_block_dataset(4, 8, 6);
  testutil::TempDir tmp("sess");
  auto llm = mock_from(
      tmp, nlohmann::json::array(
               {{{"instruction_id", "I_SESSION"},
                 {"reply", "{\"viewed\": [\"i00\", \"hallucinated\"], \"continue\": false}"}},
                {{"instruction_id", "I_SATISFY"}, {"reply", "{\"satisfy\": 5}"}}}));
  auto prompts = PromptRegistry::with_builtins();
  Pager pager = [](int page) {
    return page == 0 ? std::vector<ItemId>{"i00", "i01", "i02", "i03"} : std::vector<ItemId>{};
  };
  auto out = simulate_session(basic_persona("u00"), d, pager, prompts, llm, 2);
  CHECK(out.view == doctest::Approx(0.25));
}
