#include "core/textgen.hpp"

#include <array>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include <httplib.h>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/text.hpp"

namespace probescreen::gen {

using nlohmann::json;

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "what",  "which", "when",  "this",  "that",   "with", "from",  "each",
      "would", "could", "should", "about", "into",  "need", "needs", "needed",
      "five",  "your",  "their", "them",  "these",  "those", "before", "after",
      "them",  "then",  "than",  "have",  "more",   "some",
  };
  return words;
}

std::string strip_edges(const std::string& token) {
  size_t b = 0, e = token.size();
  while (b < e && !std::isalpha(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && !std::isalpha(static_cast<unsigned char>(token[e - 1]))) --e;
  return token.substr(b, e - b);
}

std::vector<std::string> content_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& raw : split_whitespace(text)) {
    if (raw.find('{') != std::string::npos || raw.find('}') != std::string::npos) continue;
    std::string core = to_lower(strip_edges(raw));
    if (core.size() < 4) continue;
    if (stopwords().count(core)) continue;
    if (seen.insert(core).second) out.push_back(core);
  }
  return out;
}

const std::vector<std::string>& question_templates() {
  static const std::vector<std::string> templates = {
      "What role does %1 play when working with %2?",
      "Which materials or resources support %1 in practice?",
      "How would one prepare %1 before attempting %2?",
      "What background makes %1 easier to approach?",
      "Could you outline the key stages of %1?",
      "What common mistakes come up around %1 and %2?",
      "Which tools are typically involved in %1?",
      "How do practitioners evaluate the quality of %1?",
      "What safety considerations matter for %1?",
      "How does %1 relate to %2 at a basic level?",
  };
  return templates;
}

std::string fill_template(const std::string& tpl, const std::string& a, const std::string& b) {
  std::string out;
  for (size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] == '%' && i + 1 < tpl.size() && (tpl[i + 1] == '1' || tpl[i + 1] == '2')) {
      out += (tpl[i + 1] == '1') ? a : b;
      ++i;
    } else {
      out += tpl[i];
    }
  }
  return out;
}

const std::unordered_map<std::string, std::vector<std::string>>& synonym_table() {
  static const std::unordered_map<std::string, std::vector<std::string>> table = {
      {"identify", {"pinpoint", "determine"}},
      {"essential", {"crucial", "vital"}},
      {"skills", {"abilities", "competencies"}},
      {"skill", {"ability", "competency"}},
      {"knowledge", {"information", "understanding"}},
      {"points", {"elements", "items"}},
      {"needed", {"required", "necessary"}},
      {"formulate", {"compose", "draft"}},
      {"specific", {"particular", "targeted"}},
      {"question", {"query", "prompt"}},
      {"questions", {"queries", "inquiries"}},
      {"help", {"assist", "aid"}},
      {"learn", {"master", "study"}},
      {"acquire", {"obtain", "gain"}},
      {"process", {"procedure", "workflow"}},
      {"critical", {"key", "pivotal"}},
      {"steps", {"stages", "phases"}},
      {"understand", {"grasp", "comprehend"}},
      {"execute", {"perform", "complete"}},
      {"properly", {"correctly", "effectively"}},
      {"create", {"produce", "build"}},
      {"gather", {"collect", "compile"}},
      {"information", {"details", "data"}},
      {"technique", {"method", "approach"}},
      {"consider", {"examine", "review"}},
      {"aspects", {"facets", "angles"}},
      {"ingredients", {"components", "elements"}},
      {"draft", {"write", "sketch"}},
      {"obtain", {"secure", "get"}},
      {"imagine", {"suppose", "envision"}},
      {"pieces", {"bits", "items"}},
      {"lack", {"miss", "want"}},
      {"proceed", {"continue", "advance"}},
      {"conceal", {"hide", "mask"}},
      {"obscure", {"cloud", "veil"}},
      {"mask", {"cover", "shroud"}},
      {"avoid", {"evade", "sidestep"}},
      {"revealing", {"exposing", "disclosing"}},
      {"disguise", {"camouflage", "obscure"}},
      {"cleverly", {"subtly", "artfully"}},
      {"purpose", {"aim", "intent"}},
      {"goal", {"objective", "target"}},
      {"intent", {"intention", "purpose"}},
      {"reword", {"rephrase", "restate"}},
      {"rewording", {"rephrasing", "restating"}},
      {"meaning", {"sense", "substance"}},
      {"phrasing", {"wording", "expression"}},
  };
  return table;
}

json post_generate(const std::string& endpoint, const std::string& prompt, int n,
                   int max_retries) {
  httplib::Client client(endpoint);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);
  json body = {{"prompt", prompt}, {"n_questions", n}, {"max_retries", max_retries}};
  auto res = client.Post("/generate", body.dump(), "application/json");
  if (!res) {
    fail(ErrorKind::transport, "POST " + endpoint + "/generate: connection failed");
  }
  if (res->status != 200) {
    fail(ErrorKind::transport,
         "POST " + endpoint + "/generate: HTTP " + std::to_string(res->status));
  }
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.contains("questions")) {
    fail(ErrorKind::transport, "generate: malformed response");
  }
  return j;
}

}  // namespace

MockTextGen::MockTextGen(uint64_t seed) : seed_(seed) {}

std::vector<std::string> MockTextGen::generate(const std::string& prompt, int n) {
  if (n <= 0) fail(ErrorKind::validation, "generate: n must be positive");
  if (trim(prompt).empty()) fail(ErrorKind::validation, "generate: empty prompt");
  auto tokens = content_tokens(prompt);
  if (tokens.empty()) tokens.push_back("topic");
  Rng rng(mix_seed(seed_, fnv1a64(prompt)));
  const auto& templates = question_templates();
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::string& a = tokens[rng.index(tokens.size())];
    const std::string& b = tokens[rng.index(tokens.size())];
    out.push_back(fill_template(templates[rng.index(templates.size())], a, b));
  }
  return out;
}

std::vector<std::string> MockTextGen::reword(const std::string& instruction,
                                             const std::vector<std::string>& lines) {
  const auto& table = synonym_table();
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    Rng rng(mix_seed(seed_, fnv1a64(instruction), fnv1a64(line)));
    std::vector<std::string> rebuilt;
    for (const auto& raw : split_whitespace(line)) {
      if (raw.find('{') != std::string::npos || raw.find('}') != std::string::npos) {
        rebuilt.push_back(raw);  // placeholder tokens pass through verbatim
        continue;
      }
      std::string core = strip_edges(raw);
      auto it = table.find(to_lower(core));
      if (core.empty() || it == table.end()) {
        rebuilt.push_back(raw);
        continue;
      }
      std::string replacement = it->second[rng.index(it->second.size())];
      if (std::isupper(static_cast<unsigned char>(core[0])) && !replacement.empty()) {
        replacement[0] =
            static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
      }
      size_t pos = raw.find(core);
      rebuilt.push_back(raw.substr(0, pos) + replacement + raw.substr(pos + core.size()));
    }
    out.push_back(join(rebuilt, " "));
  }
  return out;
}

RemoteTextGen::RemoteTextGen(std::string endpoint, int max_retries)
    : endpoint_(std::move(endpoint)), max_retries_(max_retries) {
  if (endpoint_.empty()) fail(ErrorKind::validation, "remote textgen: endpoint required");
}

std::vector<std::string> RemoteTextGen::generate(const std::string& prompt, int n) {
  if (n <= 0) fail(ErrorKind::validation, "generate: n must be positive");
  json j = post_generate(endpoint_, prompt, n, max_retries_);
  auto questions = j.at("questions").get<std::vector<std::string>>();
  if (static_cast<int>(questions.size()) != n) {
    fail(ErrorKind::contract, "generate: expected " + std::to_string(n) + " questions, got " +
                                  std::to_string(questions.size()));
  }
  return questions;
}

std::vector<std::string> RemoteTextGen::reword(const std::string& instruction,
                                               const std::vector<std::string>& lines) {
  std::string prompt = instruction + "\n\nRewrite each numbered line, one output per line:\n";
  for (size_t i = 0; i < lines.size(); ++i) {
    prompt += std::to_string(i + 1) + ". " + lines[i] + "\n";
  }
  return generate(prompt, static_cast<int>(lines.size()));
}

std::unique_ptr<TextGenProvider> make_textgen(const TextGenConfig& config) {
  switch (config.kind) {
    case TextGenConfig::Kind::mock:
      if (!config.has_seed) fail(ErrorKind::validation, "mock textgen requires a seed");
      return std::make_unique<MockTextGen>(config.seed);
    case TextGenConfig::Kind::remote:
      if (config.endpoint.empty()) {
        fail(ErrorKind::validation, "remote textgen requires endpoint");
      }
      return std::make_unique<RemoteTextGen>(config.endpoint, config.max_retries);
  }
  fail(ErrorKind::validation, "unknown textgen kind");
}

}  // namespace probescreen::gen
