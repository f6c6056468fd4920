#include "core/embedding.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include <httplib.h>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/text.hpp"

namespace probescreen::emb {

using nlohmann::json;

double dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

double norm(const Embedding& v) { return std::sqrt(dot(v, v)); }

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    fail(ErrorKind::validation, "cosine_similarity: dim mismatch (" +
                                    std::to_string(a.dim()) + " vs " +
                                    std::to_string(b.dim()) + ")");
  }
  double na = norm(a), nb = norm(b);
  if (na <= kNormEps || nb <= kNormEps) {
    fail(ErrorKind::degenerate_vector, "cosine_similarity: near-zero norm");
  }
  double c = dot(a, b) / (na * nb);
  return std::min(1.0, std::max(-1.0, c));
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

void require_nonempty(const std::string& text, size_t index = SIZE_MAX) {
  if (trim(text).empty()) {
    std::string where =
        index == SIZE_MAX ? "" : " at index " + std::to_string(index);
    fail(ErrorKind::validation, "embed: empty text" + where);
  }
}

}  // namespace

std::vector<Embedding> Embedder::batch(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(embed(texts[i]));
    } catch (const Error& e) {
      fail(e.kind(), "batch element " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

MockEmbedder::MockEmbedder(uint64_t seed, int dim) : seed_(seed), dim_(dim) {
  if (dim <= 0) fail(ErrorKind::validation, "mock embedder: dim must be positive");
}

Embedding MockEmbedder::embed(const std::string& text) const {
  require_nonempty(text);
  std::vector<double> acc(dim_, 0.0);
  for (const auto& token : split_whitespace(text)) {
    Rng rng(mix_seed(seed_, fnv1a64(token)));
    std::vector<double> v(dim_);
    double n2 = 0.0;
    for (int i = 0; i < dim_; ++i) {
      v[i] = rng.normal();
      n2 += v[i] * v[i];
    }
    double n = std::sqrt(n2);
    if (n <= kNormEps) {
      v.assign(dim_, 0.0);
      v[0] = 1.0;
      n = 1.0;
    }
    for (int i = 0; i < dim_; ++i) acc[i] += v[i] / n;
  }
  double n2 = 0.0;
  for (double x : acc) n2 += x * x;
  double n = std::sqrt(n2);
  if (n <= kNormEps) {
    // Token contributions cancelled; fall back to a whole-text direction.
    Rng rng(mix_seed(seed_ ^ 0x5bf03635ULL, fnv1a64(text)));
    n2 = 0.0;
    for (int i = 0; i < dim_; ++i) {
      acc[i] = rng.normal();
      n2 += acc[i] * acc[i];
    }
    n = std::sqrt(n2);
  }
  for (double& x : acc) x /= n;
  return Embedding{std::move(acc)};
}

struct CacheEmbedder::Impl {
  std::unordered_map<std::string, std::vector<double>> entries;
};

CacheEmbedder::CacheEmbedder(const std::string& path, int dim) : dim_(dim) {
  if (dim <= 0) fail(ErrorKind::validation, "cache embedder: dim must be positive");
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cache embedder: cannot open " + path);
  auto impl = std::make_shared<Impl>();
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("h") || !j.contains("v")) {
      fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": malformed cache record");
    }
    std::vector<double> v = j.at("v").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != dim_) {
      fail(ErrorKind::io, path + ":" + std::to_string(lineno) +
                              ": vector length " + std::to_string(v.size()) +
                              " != dim " + std::to_string(dim_));
    }
    impl->entries[j.at("h").get<std::string>()] = std::move(v);
  }
  impl_ = std::move(impl);
}

Embedding CacheEmbedder::embed(const std::string& text) const {
  require_nonempty(text);
  auto it = impl_->entries.find(sha256_hex(text));
  if (it == impl_->entries.end()) {
    fail(ErrorKind::cache_miss, "cache embedder: no entry for text");
  }
  return Embedding{it->second};
}

namespace {

// Splits "http://host:port" into a client base; httplib accepts the full
// scheme://host:port form directly.
json post_json(const std::string& endpoint, const std::string& path, const json& body) {
  httplib::Client client(endpoint);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    fail(ErrorKind::transport, "POST " + endpoint + path + ": connection failed");
  }
  if (res->status != 200) {
    fail(ErrorKind::transport, "POST " + endpoint + path + ": HTTP " +
                                   std::to_string(res->status));
  }
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded()) {
    fail(ErrorKind::transport, "POST " + endpoint + path + ": invalid JSON response");
  }
  return j;
}

}  // namespace

RemoteEmbedder::RemoteEmbedder(std::string endpoint, int dim)
    : endpoint_(std::move(endpoint)), dim_(dim) {
  if (endpoint_.empty()) fail(ErrorKind::validation, "remote embedder: endpoint required");
  if (dim <= 0) fail(ErrorKind::validation, "remote embedder: dim must be positive");
}

Embedding RemoteEmbedder::embed(const std::string& text) const {
  auto v = batch({text});
  return std::move(v.front());
}

std::vector<Embedding> RemoteEmbedder::batch(const std::vector<std::string>& texts) const {
  for (size_t i = 0; i < texts.size(); ++i) require_nonempty(texts[i], i);
  if (texts.empty()) return {};
  json body = {{"texts", texts}};
  json resp = post_json(endpoint_, "/embed", body);
  if (!resp.contains("dim") || !resp.contains("vectors")) {
    fail(ErrorKind::transport, "remote embedder: response missing dim/vectors");
  }
  if (resp.at("dim").get<int>() != dim_) {
    fail(ErrorKind::contract, "remote embedder: server dim " +
                                  resp.at("dim").dump() + " != configured " +
                                  std::to_string(dim_));
  }
  auto vectors = resp.at("vectors").get<std::vector<std::vector<double>>>();
  if (vectors.size() != texts.size()) {
    fail(ErrorKind::contract, "remote embedder: got " + std::to_string(vectors.size()) +
                                  " vectors for " + std::to_string(texts.size()) + " texts");
  }
  std::vector<Embedding> out;
  out.reserve(vectors.size());
  for (size_t i = 0; i < vectors.size(); ++i) {
    if (static_cast<int>(vectors[i].size()) != dim_) {
      fail(ErrorKind::contract, "remote embedder: vector " + std::to_string(i) +
                                    " has length " + std::to_string(vectors[i].size()));
    }
    for (double x : vectors[i]) {
      if (!std::isfinite(x)) {
        fail(ErrorKind::contract, "remote embedder: non-finite entry in vector " +
                                      std::to_string(i));
      }
    }
    out.push_back(Embedding{std::move(vectors[i])});
  }
  return out;
}

std::unique_ptr<Embedder> make_embedder(const ProviderConfig& config) {
  switch (config.kind) {
    case ProviderKind::mock:
      if (!config.has_seed) fail(ErrorKind::validation, "mock provider requires a seed");
      return std::make_unique<MockEmbedder>(config.seed, config.dim);
    case ProviderKind::cache:
      if (config.cache_path.empty()) {
        fail(ErrorKind::validation, "cache provider requires cache_path");
      }
      return std::make_unique<CacheEmbedder>(config.cache_path, config.dim);
    case ProviderKind::remote:
      if (config.endpoint.empty()) {
        fail(ErrorKind::validation, "remote provider requires endpoint");
      }
      return std::make_unique<RemoteEmbedder>(config.endpoint, config.dim);
  }
  fail(ErrorKind::validation, "unknown provider kind");
}

}  // namespace probescreen::emb
