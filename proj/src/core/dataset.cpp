#include "core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/text.hpp"

namespace probescreen::data {

using nlohmann::json;

const char* source_name(Source s) {
  switch (s) {
    case Source::evolved: return "evolved";
    case Source::handcrafted_control: return "handcrafted_control";
    case Source::conversation_sampled: return "conversation_sampled";
    case Source::reworded: return "reworded";
    case Source::truncated: return "truncated";
  }
  return "unknown";
}

Source source_from_name(const std::string& name) {
  if (name == "evolved") return Source::evolved;
  if (name == "handcrafted_control") return Source::handcrafted_control;
  if (name == "conversation_sampled") return Source::conversation_sampled;
  if (name == "reworded") return Source::reworded;
  if (name == "truncated") return Source::truncated;
  fail(ErrorKind::validation, "unknown source '" + name + "'");
}

json record_to_json(const QuestionSetRecord& r) {
  return json{{"id", r.id},
              {"questions", r.questions},
              {"label", r.label},
              {"topic", r.topic ? json(*r.topic) : json(nullptr)},
              {"source", source_name(r.source)},
              {"adherent", r.adherent},
              {"parent_id", r.parent_id ? json(*r.parent_id) : json(nullptr)}};
}

QuestionSetRecord record_from_json(const json& j, size_t min_questions) {
  QuestionSetRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.questions = j.at("questions").get<std::vector<std::string>>();
    r.label = j.at("label").get<int>();
    if (j.contains("topic") && !j.at("topic").is_null()) {
      r.topic = j.at("topic").get<std::string>();
    }
    r.source = source_from_name(j.at("source").get<std::string>());
    r.adherent = j.at("adherent").get<bool>();
    if (j.contains("parent_id") && !j.at("parent_id").is_null()) {
      r.parent_id = j.at("parent_id").get<std::string>();
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("record: ") + e.what());
  }
  if (r.id.empty()) fail(ErrorKind::validation, "record: empty id");
  if (r.label != 0 && r.label != 1) fail(ErrorKind::validation, "record: label must be 0 or 1");
  if (r.questions.size() < min_questions) {
    fail(ErrorKind::validation, "record '" + r.id + "': " +
                                    std::to_string(r.questions.size()) +
                                    " questions, minimum is " +
                                    std::to_string(min_questions));
  }
  for (const auto& q : r.questions) {
    if (trim(q).empty()) fail(ErrorKind::validation, "record '" + r.id + "': empty question");
  }
  if ((r.source == Source::reworded || r.source == Source::truncated) && !r.parent_id) {
    fail(ErrorKind::validation, "record '" + r.id + "': " + source_name(r.source) +
                                    " records must reference a parent_id");
  }
  return r;
}

std::vector<QuestionSetRecord> load_dataset(const std::string& path,
                                            const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open dataset " + path);
  std::vector<QuestionSetRecord> records;
  std::vector<std::string> problems;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      problems.push_back(path + ":" + std::to_string(lineno) + ": invalid JSON");
      continue;
    }
    try {
      records.push_back(record_from_json(j, options.min_questions));
    } catch (const Error& e) {
      problems.push_back(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " bad record(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(ErrorKind::validation, msg);
  }
  return records;
}

void save_dataset(const std::vector<QuestionSetRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write dataset " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

std::vector<Conversation> load_conversations(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open conversations " + path);
  std::vector<Conversation> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      fail(ErrorKind::validation,
           path + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    Conversation c;
    try {
      c.conversation_id = j.at("conversation_id").get<std::string>();
      for (const auto& t : j.at("turns")) {
        c.turns.push_back(Turn{t.at("role").get<std::string>(),
                               t.at("text").get<std::string>()});
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::validation,
           path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<QuestionSetRecord> sample_negative_sets(const std::vector<Conversation>& conversations,
                                                    size_t n_sets, uint64_t seed) {
  std::vector<size_t> eligible;
  for (size_t i = 0; i < conversations.size(); ++i) {
    size_t user_turns = 0;
    for (const auto& t : conversations[i].turns) {
      if (t.role == "user" && !trim(t.text).empty()) ++user_turns;
    }
    if (user_turns >= 5) eligible.push_back(i);
  }
  if (eligible.size() < n_sets) {
    fail(ErrorKind::validation, "sample_negative_sets: need " + std::to_string(n_sets) +
                                    " conversations with >= 5 user turns, only " +
                                    std::to_string(eligible.size()) + " eligible");
  }
  Rng rng(seed);
  rng.shuffle(eligible);
  std::vector<QuestionSetRecord> out;
  for (size_t k = 0; k < n_sets; ++k) {
    const Conversation& c = conversations[eligible[k]];
    QuestionSetRecord r;
    r.id = "neg-" + c.conversation_id;
    r.label = 0;
    r.source = Source::conversation_sampled;
    r.adherent = true;
    for (const auto& t : c.turns) {
      if (t.role == "user" && !trim(t.text).empty()) {
        r.questions.push_back(t.text);
        if (r.questions.size() == 5) break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

double word_overlap(const std::string& original, const std::string& reworded) {
  auto orig_tokens = split_whitespace(to_lower(original));
  auto new_tokens = split_whitespace(to_lower(reworded));
  if (orig_tokens.empty() || new_tokens.empty()) {
    fail(ErrorKind::validation, "word_overlap: empty text");
  }
  std::map<std::string, long> counts;
  for (const auto& t : new_tokens) ++counts[t];
  long matched = 0;
  for (const auto& t : orig_tokens) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(orig_tokens.size());
}

bool validate_rewording(const QuestionSetRecord& parent, const QuestionSetRecord& child,
                        double threshold) {
  if (parent.questions.size() != child.questions.size()) {
    fail(ErrorKind::validation, "validate_rewording: question count mismatch (" +
                                    std::to_string(parent.questions.size()) + " vs " +
                                    std::to_string(child.questions.size()) + ")");
  }
  for (size_t i = 0; i < parent.questions.size(); ++i) {
    if (word_overlap(parent.questions[i], child.questions[i]) < threshold) return false;
  }
  return true;
}

QuestionSetRecord truncate_turns(const QuestionSetRecord& record, size_t n) {
  if (n < 3) {
    fail(ErrorKind::validation, "truncate_turns: n must be >= 3");
  }
  if (record.questions.size() < n) {
    fail(ErrorKind::validation, "truncate_turns: record '" + record.id + "' has only " +
                                    std::to_string(record.questions.size()) + " questions");
  }
  QuestionSetRecord child = record;
  child.id = record.id + "-trunc" + std::to_string(n);
  child.questions.assign(record.questions.begin(),
                         record.questions.begin() + static_cast<long>(n));
  child.source = Source::truncated;
  child.parent_id = record.id;
  return child;
}

namespace {

// Follow parent links as far as the dataset resolves them.
std::string root_of(const std::string& id,
                    const std::unordered_map<std::string, const QuestionSetRecord*>& by_id) {
  std::string current = id;
  std::unordered_set<std::string> seen;
  for (;;) {
    auto it = by_id.find(current);
    if (it == by_id.end() || !it->second->parent_id) return current;
    if (!seen.insert(current).second) {
      fail(ErrorKind::validation, "make_split: parent cycle at '" + current + "'");
    }
    current = *it->second->parent_id;
  }
}

}  // namespace

SplitManifest make_split(const std::vector<QuestionSetRecord>& records, uint64_t seed,
                         double ratio, bool stratified) {
  if (records.empty()) fail(ErrorKind::validation, "make_split: empty dataset");
  if (ratio <= 0.0 || ratio >= 1.0) {
    fail(ErrorKind::validation, "make_split: ratio must be in (0,1)");
  }
  std::unordered_map<std::string, const QuestionSetRecord*> by_id;
  for (const auto& r : records) {
    if (!by_id.emplace(r.id, &r).second) {
      fail(ErrorKind::validation, "make_split: duplicate id '" + r.id + "'");
    }
  }

  // Roots are records without a parent in this dataset; children inherit
  // their root's fold.
  std::vector<const QuestionSetRecord*> roots;
  std::unordered_map<std::string, std::string> root_id_of;
  for (const auto& r : records) {
    std::string root = root_of(r.id, by_id);
    root_id_of[r.id] = root;
    if (root == r.id) roots.push_back(&r);
  }

  std::unordered_set<std::string> train_roots;
  auto assign = [&](std::vector<std::string>& ids, uint64_t stratum) {
    std::sort(ids.begin(), ids.end());
    Rng rng(mix_seed(seed, fnv1a64("split"), stratum));
    rng.shuffle(ids);
    size_t n_train = static_cast<size_t>(std::floor(ratio * static_cast<double>(ids.size())));
    for (size_t i = 0; i < n_train; ++i) train_roots.insert(ids[i]);
  };

  if (stratified) {
    std::vector<std::string> pos, neg;
    for (const auto* r : roots) (r->label == 1 ? pos : neg).push_back(r->id);
    if (pos.empty() || neg.empty()) {
      fail(ErrorKind::validation, "make_split: stratified split requires both classes");
    }
    assign(pos, 1);
    assign(neg, 0);
  } else {
    std::vector<std::string> all;
    for (const auto* r : roots) all.push_back(r->id);
    assign(all, 2);
  }

  SplitManifest m;
  m.seed = seed;
  m.ratio = ratio;
  m.stratified = stratified;
  for (const auto& r : records) {
    bool in_train = train_roots.count(root_id_of.at(r.id)) > 0;
    (in_train ? m.train_ids : m.test_ids).push_back(r.id);
  }
  return m;
}

json manifest_to_json(const SplitManifest& m) {
  return json{{"seed", m.seed},
              {"ratio", m.ratio},
              {"stratified", m.stratified},
              {"train_ids", m.train_ids},
              {"test_ids", m.test_ids}};
}

SplitManifest manifest_from_json(const json& j) {
  SplitManifest m;
  try {
    m.seed = j.at("seed").get<uint64_t>();
    m.ratio = j.at("ratio").get<double>();
    m.stratified = j.at("stratified").get<bool>();
    m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("manifest json: ") + e.what());
  }
  return m;
}

void save_manifest(const SplitManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write manifest " + path);
  out << manifest_to_json(m).dump(2) << "\n";
}

SplitManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::io, "manifest is not valid JSON: " + path);
  return manifest_from_json(j);
}

}  // namespace probescreen::data
