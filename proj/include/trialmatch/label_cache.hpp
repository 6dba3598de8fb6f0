#pragma once

// Persistent, append-only label cache and the caching labeler decorator.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>

#include "trialmatch/labeling.hpp"

namespace trialmatch {

struct CacheKey {
  std::string patient_id;  // empty for trial-only calls (categorization)
  std::string trial_id;    // empty for patient-only calls (extraction)
  std::string slot;        // criterion index, "COARSE", "EXTRACT" or "CATEGORIZE:<i>"
  std::string template_hash;
  std::string labeler;

  auto tie() const { return std::tie(patient_id, trial_id, slot, template_hash, labeler); }
  friend bool operator<(const CacheKey& a, const CacheKey& b) { return a.tie() < b.tie(); }
  friend bool operator==(const CacheKey& a, const CacheKey& b) { return a.tie() == b.tie(); }
};

struct CacheEntry {
  std::string label;         // canonical, human-readable
  std::string raw_response;  // what the labeler returned, parsed on replay
};

/// JSONL store. Each line holds the key fields, label, raw_response and a
/// timestamp. A truncated trailing line (interrupted write) is ignored on
/// open. An empty path gives an in-memory cache.
class LabelCache {
 public:
  using Producer = std::function<CacheEntry()>;

  LabelCache() = default;
  /// Throws LabelingError::kCacheIo when the file cannot be opened.
  explicit LabelCache(std::filesystem::path path);

  LabelCache(const LabelCache&) = delete;
  LabelCache& operator=(const LabelCache&) = delete;

  /// Cached entry on hit; otherwise runs `producer` once per key (concurrent
  /// callers for the same key wait for the first), persists and returns.
  CacheEntry get_or_label(const CacheKey& key, const Producer& producer);

  std::optional<CacheEntry> lookup(const CacheKey& key) const;
  std::size_t size() const;
  std::size_t hits() const;
  std::size_t misses() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void append(const CacheKey& key, const CacheEntry& entry);

  std::filesystem::path path_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::map<CacheKey, CacheEntry> entries_;
  std::map<CacheKey, std::shared_future<CacheEntry>> pending_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Labeler decorator that answers from a LabelCache and only calls the inner
/// labeler on a miss. Cached raw responses are re-parsed, so a replay yields
/// exactly what the recorded run saw.
class CachingLabeler : public Labeler {
 public:
  CachingLabeler(Labeler& inner, LabelCache& cache) : inner_(inner), cache_(cache) {}

  std::string id() const override { return inner_.id(); }

  LabelerReply<PatientExtraction> extract_patient(const PromptTemplate& tmpl,
                                                  const std::string& patient_id,
                                                  std::string_view note) override;
  LabelerReply<CategorySet> categorize(const PromptTemplate& tmpl, const std::string& trial_id,
                                       std::size_t index, std::string_view criterion) override;
  LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate& tmpl,
                                                 const std::string& trial_id, std::size_t index,
                                                 const Criterion& criterion,
                                                 const PatientContext& ctx) override;
  LabelerReply<CoarseLabel> label_trial(const PromptTemplate& tmpl, const TrialRecord& trial,
                                        const PatientContext& ctx) override;

 private:
  Labeler& inner_;
  LabelCache& cache_;
};

}  // namespace trialmatch
