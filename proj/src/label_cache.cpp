#include "trialmatch/label_cache.hpp"

#include <chrono>
#include <ctime>

#include <json.hpp>

#include "trialmatch/text.hpp"

namespace trialmatch {

namespace {

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LabelingError cache_io(const std::string& what) {
  return LabelingError(LabelingError::Kind::kCacheIo, what);
}

}  // namespace

LabelCache::LabelCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  bool needs_newline = false;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw cache_io("cannot read label cache " + path_.string());
    std::string line;
    while (std::getline(in, line)) {
      needs_newline = in.eof();  // last line had no terminator
      if (text::trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;  // torn write
      try {
        CacheKey k{j.at("patient"), j.at("trial"), j.at("slot"), j.at("template_hash"),
                   j.value("labeler", "")};
        entries_[k] = {j.at("label"), j.at("raw_response")};
      } catch (const nlohmann::json::exception&) {
        continue;
      }
    }
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw cache_io("cannot open label cache " + path_.string() + " for append");
  if (needs_newline) out_ << '\n';
}

void LabelCache::append(const CacheKey& key, const CacheEntry& entry) {
  if (path_.empty()) return;
  nlohmann::ordered_json j;
  j["patient"] = key.patient_id;
  j["trial"] = key.trial_id;
  j["slot"] = key.slot;
  j["template_hash"] = key.template_hash;
  j["labeler"] = key.labeler;
  j["label"] = entry.label;
  j["raw_response"] = entry.raw_response;
  j["timestamp"] = utc_timestamp();
  out_ << j.dump() << '\n';
  out_.flush();
  if (!out_) throw cache_io("write failed on " + path_.string());
}

CacheEntry LabelCache::get_or_label(const CacheKey& key, const Producer& producer) {
  std::promise<CacheEntry> promise;
  {
    std::unique_lock lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      ++hits_;
      return it->second;
    }
    if (auto it = pending_.find(key); it != pending_.end()) {
      auto fut = it->second;
      ++hits_;
      lock.unlock();
      return fut.get();
    }
    ++misses_;
    pending_.emplace(key, promise.get_future().share());
  }

  try {
    CacheEntry entry = producer();
    std::lock_guard lock(mu_);
    append(key, entry);
    entries_.emplace(key, entry);
    pending_.erase(key);
    promise.set_value(entry);
    return entry;
  } catch (...) {
    std::lock_guard lock(mu_);
    pending_.erase(key);
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::optional<CacheEntry> LabelCache::lookup(const CacheKey& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t LabelCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t LabelCache::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

// ---------------------------------------------------------------------------

LabelerReply<PatientExtraction> CachingLabeler::extract_patient(const PromptTemplate& tmpl,
                                                                const std::string& patient_id,
                                                                std::string_view note) {
  CacheKey key{patient_id, "", "EXTRACT:" + text::hex64(text::fnv1a64(note)), tmpl.hash,
               inner_.id()};
  CacheEntry e = cache_.get_or_label(key, [&] {
    auto r = inner_.extract_patient(tmpl, patient_id, note);
    return CacheEntry{"extraction", r.raw_response};
  });
  return {parse_extraction_response(e.raw_response), e.raw_response};
}

LabelerReply<CategorySet> CachingLabeler::categorize(const PromptTemplate& tmpl,
                                                     const std::string& trial_id,
                                                     std::size_t index,
                                                     std::string_view criterion) {
  CacheKey key{"", trial_id,
               "CATEGORIZE:" + std::to_string(index) + ":" + text::hex64(text::fnv1a64(criterion)),
               tmpl.hash, inner_.id()};
  CacheEntry e = cache_.get_or_label(key, [&] {
    auto r = inner_.categorize(tmpl, trial_id, index, criterion);
    return CacheEntry{to_string(r.value), r.raw_response};
  });
  return {parse_categorization_response(e.raw_response), e.raw_response};
}

LabelerReply<EligibilityLabel> CachingLabeler::label_criterion(const PromptTemplate& tmpl,
                                                               const std::string& trial_id,
                                                               std::size_t index,
                                                               const Criterion& criterion,
                                                               const PatientContext& ctx) {
  CacheKey key{ctx.patient_id, trial_id, std::to_string(index), tmpl.hash, inner_.id()};
  CacheEntry e = cache_.get_or_label(key, [&] {
    auto r = inner_.label_criterion(tmpl, trial_id, index, criterion, ctx);
    return CacheEntry{to_string(r.value), r.raw_response};
  });
  return {parse_fine_response(e.raw_response), e.raw_response};
}

LabelerReply<CoarseLabel> CachingLabeler::label_trial(const PromptTemplate& tmpl,
                                                      const TrialRecord& trial,
                                                      const PatientContext& ctx) {
  CacheKey key{ctx.patient_id, trial.id, "COARSE", tmpl.hash, inner_.id()};
  CacheEntry e = cache_.get_or_label(key, [&] {
    auto r = inner_.label_trial(tmpl, trial, ctx);
    return CacheEntry{to_string(r.value), r.raw_response};
  });
  return {parse_coarse_response(e.raw_response), e.raw_response};
}

}  // namespace trialmatch
