#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace probescreen::gen {

// Text generation behind the same provider split as embeddings: a remote
// HTTP service or a deterministic mock. No model weights in-repo.
class TextGenProvider {
public:
  virtual ~TextGenProvider() = default;

  // Produce exactly n questions for an instantiated prompt.
  virtual std::vector<std::string> generate(const std::string& prompt, int n) = 0;

  // Apply a rewording instruction to each line, preserving line count.
  virtual std::vector<std::string> reword(const std::string& instruction,
                                          const std::vector<std::string>& lines) = 0;
};

struct TextGenConfig {
  enum class Kind { remote, mock };
  Kind kind = Kind::mock;
  std::string endpoint;
  uint64_t seed = 0;
  bool has_seed = false;
  int max_retries = 3;
};

// Pure function of (seed, inputs). Questions are composed from content
// tokens of the prompt; rewording applies a fixed synonym table with a
// seeded choice among alternatives. "{task}" tokens pass through untouched.
class MockTextGen : public TextGenProvider {
public:
  explicit MockTextGen(uint64_t seed);

  std::vector<std::string> generate(const std::string& prompt, int n) override;
  std::vector<std::string> reword(const std::string& instruction,
                                  const std::vector<std::string>& lines) override;

private:
  uint64_t seed_;
};

// POST {endpoint}/generate with {"prompt", "n_questions", "max_retries"}
// -> {"questions": [...]}. Rewording goes over the same wire with the
// instruction and numbered lines folded into the prompt.
class RemoteTextGen : public TextGenProvider {
public:
  RemoteTextGen(std::string endpoint, int max_retries);

  std::vector<std::string> generate(const std::string& prompt, int n) override;
  std::vector<std::string> reword(const std::string& instruction,
                                  const std::vector<std::string>& lines) override;

private:
  std::string endpoint_;
  int max_retries_;
};

std::unique_ptr<TextGenProvider> make_textgen(const TextGenConfig& config);

}  // namespace probescreen::gen
