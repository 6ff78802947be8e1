#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evorec/common.hpp"

namespace evorec {

class GatewayError : public Error {
 public:
  using Error::Error;
};

class MockMissError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

// Raised when a reply cannot be coerced into the requested schema after the
// configured number of re-asks. Carries the raw reply for post-mortems.
class LlmParseError : public GatewayError {
 public:
  LlmParseError(const std::string& what, std::string raw)
      : GatewayError(what), raw_reply(std::move(raw)) {}
  std::string raw_reply;
};

struct PromptTemplate {
  std::string instruction_id;
  std::string text;  // named {placeholders}
  std::string expected_output_schema;  // schema id, informational
};

class PromptRegistry {
 public:
  // Registers the built-in template set (I_SIM, I_SUMMARIZE, I_DIAG, I_PLAN,
  // I_REPORT, I_CODE, I_ANALYZE, I_PLAN_DIAG, I_REPORT_DIAG, I_CODE_DIAG,
  // I_SESSION, I_SATISFY, I_JUDGE).
  static PromptRegistry with_builtins();

  void register_template(PromptTemplate t);
  // Overrides from a directory of <instruction_id>.txt files.
  void load_directory(const std::filesystem::path& dir);

  const PromptTemplate& get(const std::string& instruction_id) const;
  bool has(const std::string& instruction_id) const;

  std::string render(const std::string& instruction_id,
                     const std::map<std::string, std::string>& bindings) const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

struct GatewayConfig {
  enum class Provider { Mock, Live, Replay };
  Provider provider = Provider::Mock;
  std::string model = "gpt-5-mini";
  std::string base_url = "https://api.openai.com";
  std::string api_key_env = "EVOREC_API_KEY";
  int timeout_seconds = 60;
  int max_retries = 2;
  int rate_limit_rpm = 60;  // live mode only
  std::filesystem::path script_path;      // mock mode
  std::filesystem::path transcript_path;  // optional, append-only JSONL
};

struct ChatRequest {
  std::string instruction_id;
  std::string prompt;
  std::string state_key;  // mock-script routing key, may be empty
};

struct TranscriptEntry {
  int64_t index = 0;
  std::string instruction_id;
  std::string state_key;
  std::string prompt_hash;
  std::string reply_hash;
  std::string prompt;
  std::string reply;
  double latency_seconds = 0;
};

// Provider-agnostic chat gateway. Thread-safe; the rate limiter and the
// transcript log are serialized internally.
class Gateway {
 public:
  explicit Gateway(GatewayConfig cfg);

  // Free-form reply.
  std::string chat(const ChatRequest& req);

  // Reply coerced to a JSON object. On a malformed reply the gateway re-asks
  // up to `max_retries` times with the parse error appended, then throws
  // LlmParseError.
  nlohmann::json chat_json(const ChatRequest& req);

  const GatewayConfig& config() const { return cfg_; }

  // test hook: injectable clock/sleep for the rate limiter
  void set_clock_for_testing(std::function<double()> now, std::function<void(double)> sleep);

 private:
  std::string chat_once(const ChatRequest& req);
  std::string mock_lookup(const ChatRequest& req);
  std::string live_call(const std::string& prompt);
  std::string replay_lookup(const ChatRequest& req);
  void log_call(const ChatRequest& req, const std::string& reply, double latency);
  void rate_limit_wait();

  GatewayConfig cfg_;
  nlohmann::json script_;  // mock entries
  std::vector<TranscriptEntry> replay_;  // replay source, consumed in order
  std::map<std::string, size_t> replay_cursor_;
  std::mutex mu_;
  std::mutex rate_mu_;  // separate: rate_limit_wait runs while mu_ is held
  int64_t call_index_ = 0;
  std::vector<double> recent_calls_;  // timestamps for rate limiting
  std::function<double()> now_;
  std::function<void(double)> sleep_;
};

std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& p);

// Extracts the first top-level JSON object embedded in free text.
// Throws ParseError when none parses.
nlohmann::json extract_json_object(const std::string& text);

}  // namespace evorec
