#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace probescreen::emb {

// Fixed-dimension real vector. All entries finite; dim == values.size().
struct Embedding {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
};

inline constexpr double kNormEps = 1e-12;

double dot(const Embedding& a, const Embedding& b);
double norm(const Embedding& v);

// dot(a,b) / (|a||b|), clamped to [-1,1]. Throws on dim mismatch or when
// either norm is <= kNormEps.
double cosine_similarity(const Embedding& a, const Embedding& b);

enum class ProviderKind { remote, cache, mock };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::mock;
  std::string endpoint;    // remote: base URL, e.g. http://127.0.0.1:8080
  std::string cache_path;  // cache: JSONL file of {"h": sha256hex, "v": [...]}
  uint64_t seed = 0;       // mock
  bool has_seed = false;
  int dim = 384;
};

// Providers are immutable after construction and safe for concurrent use.
class Embedder {
public:
  virtual ~Embedder() = default;

  virtual int dim() const = 0;

  // Returns a dim()-length embedding. Text must be non-empty after trim.
  virtual Embedding embed(const std::string& text) const = 0;

  // Element i equals embed(texts[i]); order preserved. Errors carry the
  // index of the first failing element.
  virtual std::vector<Embedding> batch(const std::vector<std::string>& texts) const;
};

// Pure function of (seed, text): each whitespace token hashes to a seeded
// unit gaussian direction; the contributions are summed and the sum is
// renormalized to unit length.
class MockEmbedder : public Embedder {
public:
  MockEmbedder(uint64_t seed, int dim);

  int dim() const override { return dim_; }
  Embedding embed(const std::string& text) const override;

private:
  uint64_t seed_;
  int dim_;
};

// Read-only lookup of precomputed vectors keyed by sha256(text).
class CacheEmbedder : public Embedder {
public:
  CacheEmbedder(const std::string& path, int dim);

  int dim() const override { return dim_; }
  Embedding embed(const std::string& text) const override;

private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  int dim_;
};

// HTTP client for POST {endpoint}/embed, body {"texts":[...]} ->
// {"dim": int, "vectors": [[...],...]}.
class RemoteEmbedder : public Embedder {
public:
  RemoteEmbedder(std::string endpoint, int dim);

  int dim() const override { return dim_; }
  Embedding embed(const std::string& text) const override;
  std::vector<Embedding> batch(const std::vector<std::string>& texts) const override;

private:
  std::string endpoint_;
  int dim_;
};

std::unique_ptr<Embedder> make_embedder(const ProviderConfig& config);

std::string sha256_hex(std::string_view data);

}  // namespace probescreen::emb
