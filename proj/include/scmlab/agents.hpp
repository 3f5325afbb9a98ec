#pragma once

// Agents: scripted policies and LLM players behind one decide() call, with
// bracketed-integer parsing, retry/fallback and transcript capture.

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <variant>
#include <vector>

#include "scmlab/llm_client.hpp"
#include "scmlab/policies.hpp"
#include "scmlab/prompts.hpp"

namespace scmlab {

struct ScriptedAgent {
  PolicyConfig policy;
};

struct LlmAgent {
  std::string model_id;
  double temperature = 0.0;
  std::optional<RiskPreference> risk;
  int max_retries = 2;
};

struct ActionBounds {
  Units lo = 0;
  Units hi = 0;
};

struct AgentSpec {
  std::string id;
  std::string name;  // shown to LLM players; defaults to Firm_<k> in markets
  std::variant<ScriptedAgent, LlmAgent> kind;
  std::optional<ActionBounds> bounds;

  bool is_llm() const { return std::holds_alternative<LlmAgent>(kind); }
};

inline std::vector<ValidationIssue> validate(const AgentSpec& a) {
  std::vector<ValidationIssue> out;
  if (a.id.empty()) out.push_back({"agents.id", "agent id must not be empty"});
  if (const auto* llm = std::get_if<LlmAgent>(&a.kind); llm && llm->max_retries < 0)
    out.push_back({"agents." + a.id + ".max_retries", "must be >= 0"});
  if (a.bounds && a.bounds->lo > a.bounds->hi)
    out.push_back({"agents." + a.id + ".bounds", "lo must not exceed hi"});
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

enum class ParseErrorKind { no_action_found, negative_action, out_of_range };

class ParseError : public std::runtime_error {
public:
  ParseError(ParseErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ParseErrorKind kind() const noexcept { return kind_; }

private:
  ParseErrorKind kind_;
};

/// Returns the integer in the last [n] token of the reply.
inline Units parse_action(std::string_view text) {
  static const std::regex token(R"(\[\s*(-?\d+)\s*\])");
  std::cregex_iterator it(text.data(), text.data() + text.size(), token), end;
  std::optional<std::cmatch> last;
  for (; it != end; ++it) last = *it;
  if (!last) throw ParseError(ParseErrorKind::no_action_found, "no bracketed integer in reply");

  const auto& g = (*last)[1];
  if (*g.first == '-') throw ParseError(ParseErrorKind::negative_action, "bracketed action is negative");
  Units value = 0;
  const auto [ptr, ec] = std::from_chars(g.first, g.second, value);
  if (ec != std::errc{} || ptr != g.second)
    throw ParseError(ParseErrorKind::out_of_range, "bracketed action does not fit in 64 bits");
  return value;
}

// ---------------------------------------------------------------------------
// Transcripts

struct Transcript {
  std::string episode_id;
  std::string agent_id;
  Units round = 0;
  std::vector<ChatMessage> messages;
  std::vector<std::string> raw_responses;
  std::optional<Units> parsed_action;
  Units action = 0;
  int retry_count = 0;
  int transport_retries = 0;
  bool fallback = false;
  bool clamped = false;
  double latency_s = 0.0;
  std::optional<TokenUsage> usage;
  std::string error;

  std::string raw_response() const { return raw_responses.empty() ? std::string{} : raw_responses.back(); }
};

inline nlohmann::json to_json(const Transcript& t) {
  nlohmann::json j = {
      {"episode", t.episode_id},
      {"agent", t.agent_id},
      {"round", t.round},
      {"messages", t.messages},
      {"raw_responses", t.raw_responses},
      {"raw_response", t.raw_response()},
      {"parsed_action", t.parsed_action ? nlohmann::json(*t.parsed_action) : nlohmann::json(nullptr)},
      {"action", t.action},
      {"retry_count", t.retry_count},
      {"transport_retries", t.transport_retries},
      {"fallback", t.fallback},
      {"clamped", t.clamped},
      {"latency_s", t.latency_s},
  };
  if (t.usage)
    j["usage"] = {{"prompt_tokens", t.usage->prompt_tokens},
                  {"completion_tokens", t.usage->completion_tokens},
                  {"total_tokens", t.usage->total_tokens}};
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

/// Append-only transcript store: one JSON-lines file per agent under `dir`.
/// With an empty directory transcripts are kept in memory only.
class TranscriptSink {
public:
  TranscriptSink() = default;
  explicit TranscriptSink(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  void append(const Transcript& t) {
    std::lock_guard lock(mutex_);
    if (!dir_.empty()) {
      std::ofstream out(dir_ / (t.agent_id + ".jsonl"), std::ios::app | std::ios::binary);
      out << to_json(t).dump() << '\n';
      out.flush();
      if (!out) throw std::runtime_error("failed to write transcript for " + t.agent_id);
    }
    kept_.push_back(t);
  }

  std::vector<Transcript> transcripts() const {
    std::lock_guard lock(mutex_);
    return kept_;
  }

private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::vector<Transcript> kept_;
};

// ---------------------------------------------------------------------------
// Decisions

class AgentError : public std::runtime_error {
public:
  AgentError(const std::string& what, Transcript transcript)
      : std::runtime_error(what), transcript_(std::move(transcript)) {}
  const Transcript& transcript() const noexcept { return transcript_; }

private:
  Transcript transcript_;
};

struct DecisionRequest {
  std::string episode_id;
  Units round = 0;
  const PromptBundle* prompts = nullptr;  // required for LLM agents
  std::function<Units()> scripted;        // required for scripted agents
  std::optional<Units> previous_action;   // fallback after retry exhaustion
};

struct Decision {
  Units action = 0;
  Transcript transcript;
};

inline Units clamp_to(Units v, const std::optional<ActionBounds>& bounds, bool& clamped) {
  clamped = false;
  if (!bounds) return v;
  const Units c = std::clamp(v, bounds->lo, bounds->hi);
  clamped = c != v;
  return c;
}

/// Scripted agents evaluate their policy. LLM agents send the prompts, parse
/// the reply, and on parse failure retry with a corrective message; after
/// max_retries they fall back to the previous action, else 0. The transcript
/// is persisted before the action is returned.
inline Decision decide(const AgentSpec& agent, const DecisionRequest& req, ChatClient* client,
                       TranscriptSink* sink = nullptr) {
  Decision d;
  auto& t = d.transcript;
  t.episode_id = req.episode_id;
  t.agent_id = agent.id;
  t.round = req.round;

  if (std::holds_alternative<ScriptedAgent>(agent.kind)) {
    if (!req.scripted) throw std::invalid_argument("scripted agent " + agent.id + " has no policy hook");
    const Units raw = req.scripted();
    t.parsed_action = raw;
    t.action = d.action = clamp_to(raw, agent.bounds, t.clamped);
    if (sink) sink->append(t);
    return d;
  }

  const auto& llm = std::get<LlmAgent>(agent.kind);
  if (!client) throw std::invalid_argument("LLM agent " + agent.id + " has no client configured");
  if (!req.prompts) throw std::invalid_argument("LLM agent " + agent.id + " needs prompts");

  if (!req.prompts->system_message.empty()) t.messages.push_back({"system", req.prompts->system_message});
  t.messages.push_back({"user", req.prompts->process_message});

  for (int attempt = 0;; ++attempt) {
    ChatExchange ex;
    try {
      ex = client->complete(t.messages, llm.temperature, agent.id);
    } catch (const LlmError& e) {
      t.error = e.what();
      if (sink) sink->append(t);
      throw AgentError("agent " + agent.id + ": " + e.what(), t);
    }
    t.raw_responses.push_back(ex.response);
    t.transport_retries += ex.transport_retries;
    t.latency_s += ex.latency_s;
    if (ex.usage) {
      if (!t.usage) t.usage = TokenUsage{};
      t.usage->prompt_tokens += ex.usage->prompt_tokens;
      t.usage->completion_tokens += ex.usage->completion_tokens;
      t.usage->total_tokens += ex.usage->total_tokens;
    }
    t.messages.push_back({"assistant", ex.response});
    t.retry_count = attempt;
    try {
      const Units parsed = parse_action(ex.response);
      t.parsed_action = parsed;
      t.action = d.action = clamp_to(parsed, agent.bounds, t.clamped);
      break;
    } catch (const ParseError& e) {
      t.error = e.what();
      if (attempt >= llm.max_retries) {
        t.fallback = true;
        t.action = d.action = clamp_to(req.previous_action.value_or(0), agent.bounds, t.clamped);
        break;
      }
      t.messages.push_back({"user", std::string(templates::corrective_instruction)});
    }
  }
  if (t.parsed_action) t.error.clear();
  if (sink) sink->append(t);
  return d;
}

}  // namespace scmlab
