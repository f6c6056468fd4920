#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace probescreen::data {

enum class Source {
  evolved,
  handcrafted_control,
  conversation_sampled,
  reworded,
  truncated,
};

const char* source_name(Source s);
Source source_from_name(const std::string& name);

// One question set: the unit of analysis. label 1 = deceptive, 0 = benign.
struct QuestionSetRecord {
  std::string id;
  std::vector<std::string> questions;
  int label = 0;
  std::optional<std::string> topic;
  Source source = Source::handcrafted_control;
  bool adherent = true;
  std::optional<std::string> parent_id;
};

struct LoadOptions {
  size_t min_questions = 3;
};

nlohmann::json record_to_json(const QuestionSetRecord& r);
QuestionSetRecord record_from_json(const nlohmann::json& j, size_t min_questions = 3);

// JSONL, one record per line. Malformed lines are reported with their line
// numbers and the load fails if any line is bad.
std::vector<QuestionSetRecord> load_dataset(const std::string& path,
                                            const LoadOptions& options = {});
void save_dataset(const std::vector<QuestionSetRecord>& records, const std::string& path);

struct Turn {
  std::string role;  // "user" or anything else
  std::string text;
};

struct Conversation {
  std::string conversation_id;
  std::vector<Turn> turns;
};

std::vector<Conversation> load_conversations(const std::string& path);

// Benign sets: the first 5 user-side turns of each sampled conversation.
// A conversation is used at most once; deterministic in seed. Throws when
// there are fewer eligible conversations than n_sets.
std::vector<QuestionSetRecord> sample_negative_sets(const std::vector<Conversation>& conversations,
                                                    size_t n_sets, uint64_t seed);

// |multiset intersection of lowercased whitespace tokens| / |original tokens|.
double word_overlap(const std::string& original, const std::string& reworded);

// True iff word_overlap >= threshold for every question pair position-wise.
bool validate_rewording(const QuestionSetRecord& parent, const QuestionSetRecord& child,
                        double threshold = 0.8);

// Child record with the first n questions, source=truncated, parent link.
// n must be >= 3 (features are undefined below three questions).
QuestionSetRecord truncate_turns(const QuestionSetRecord& record, size_t n = 3);

struct SplitManifest {
  uint64_t seed = 0;
  double ratio = 0.7;
  bool stratified = true;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

// Deterministic stratified split over root records (floor(n*ratio) per
// stratum to train). Transformed records inherit their root's fold, so a
// reworded/truncated child never leaks across the split.
SplitManifest make_split(const std::vector<QuestionSetRecord>& records, uint64_t seed,
                         double ratio = 0.7, bool stratified = true);

nlohmann::json manifest_to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const SplitManifest& m, const std::string& path);
SplitManifest load_manifest(const std::string& path);

}  // namespace probescreen::data
