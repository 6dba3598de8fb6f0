#pragma once

// Pipeline configuration: a flat TOML-style file ("key = value", optional
// [section] headers that prefix keys with "section.") plus overrides.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace trialmatch {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the key/value text. Strings may be double-quoted; '#' starts a
/// comment outside quotes. Throws ConfigError with the line number.
std::map<std::string, std::string> parse_key_values(const std::string& text);

struct PipelineConfig {
  std::filesystem::path ontology;
  std::filesystem::path corpus;
  std::filesystem::path topics;
  std::filesystem::path qrels;     // optional; metrics are skipped without it
  std::filesystem::path output_dir = "runs";
  std::filesystem::path store_dir;   // default <output_dir>/store
  std::filesystem::path cache_path;  // default <output_dir>/label_cache.jsonl

  // labeler
  std::string labeler = "rule-mock";  // rule-mock | noisy | external
  double noise_rate = 0.1;
  std::string endpoint = "https://api.openai.com";
  std::string endpoint_path = "/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_in_flight = 4;
  int timeout_ms = 60000;
  int max_retries = 5;

  // first stage
  std::string retrieval = "condition";  // condition | bm25
  int n_level = 1;
  int first_stage_k = 500;
  bool demographic_filter = true;
  std::string normalization = "approx";  // exact | approx
  int lsh_bands = 32;
  int lsh_rows = 4;
  std::string shingles = "tokens";  // tokens | chars:<k>

  // second stage
  int rerank_k = 25;
  std::string method = "hybrid";  // ov (no re-ranking) or a scoring method token
  std::string gate = "lenient";
  std::string counting = "per-category";  // per-category | once
  std::string categorization = "lazy";    // lazy | eager

  // evaluation
  int relevance_threshold = 2;
  std::string gain = "linear";

  int workers = 4;
  std::uint64_t seed = 42;
  std::string run_tag = "trialmatch";

  /// Sets one field from its textual value. Throws ConfigError for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Range and enum checks. Throws ConfigError.
  void validate() const;
  /// Checks that input paths exist. Throws ConfigError.
  void check_paths() const;

  std::filesystem::path effective_store_dir() const;
  std::filesystem::path effective_cache_path() const;

  std::string to_toml() const;
  static std::vector<std::string> keys();
};

/// Reads the file, resolves relative paths against its directory, applies
/// "key=value" overrides in order (their paths relative to the working
/// directory), makes every path absolute and validates.
PipelineConfig load_config(const std::filesystem::path& path,
                           const std::vector<std::string>& overrides = {});

/// Applies "key=value" overrides. Throws ConfigError on a malformed item.
void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace trialmatch
