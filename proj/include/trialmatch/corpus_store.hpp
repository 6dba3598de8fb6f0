#pragma once

// Content-addressed persistence for ingested trials and patients, and the
// JSON forms of the corpus, topic and record files.

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trialmatch/core_model.hpp"
#include "trialmatch/labeling.hpp"

namespace trialmatch {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One raw CTR line: {"id", "condition": [..], "eligibility": {"inclusion",
/// "exclusion"}, "age": {"min", "max"}, "gender", "text"}. Ages may be numbers
/// or strings such as "18 Years". Throws StoreError.
RawTrial parse_raw_trial(std::string_view json_line);
std::string raw_trial_to_json(const RawTrial& raw);

struct Topic {
  std::string id;
  std::string note;
};

/// JSONL {"id", "note"}. Throws StoreError on malformed lines or duplicates.
std::vector<Topic> read_topics(const std::filesystem::path& path);
void write_topics(std::ostream& out, const std::vector<Topic>& topics);

std::string trial_to_json(const TrialRecord& r);
TrialRecord trial_from_json(std::string_view json);
std::string patient_to_json(const PatientProfile& p);
PatientProfile patient_from_json(std::string_view json);

/// Throws StoreError when a record breaks its invariants (empty id, criteria
/// without text, empty age set).
void validate_record(const TrialRecord& r);
void validate_record(const PatientProfile& p);

/// Which labeler and template produced a stored artifact.
struct ExtractionProvenance {
  std::string labeler;
  std::string template_hash;
};

/// Two append-only JSONL files (trials.jsonl, patients.jsonl) keyed by a
/// content hash of the inputs. Putting an existing key is a no-op, so an
/// interrupted ingestion can simply be re-run. Torn trailing lines are
/// ignored on open. Reads and writes are serialized internally.
class CorpusStore {
 public:
  explicit CorpusStore(std::filesystem::path dir);

  CorpusStore(const CorpusStore&) = delete;
  CorpusStore& operator=(const CorpusStore&) = delete;

  bool has_trial(const std::string& key) const;
  bool has_patient(const std::string& key) const;

  /// Returns false when the key is already stored.
  bool put_trial(const std::string& key, const TrialRecord& r, const ExtractionProvenance& prov);
  bool put_patient(const std::string& key, const PatientProfile& p,
                   const ExtractionProvenance& prov);

  std::optional<TrialRecord> trial_by_key(const std::string& key) const;
  std::optional<PatientProfile> patient_by_key(const std::string& key) const;

  /// Latest stored record per id, ascending id.
  std::vector<TrialRecord> trials() const;
  std::vector<PatientProfile> patients() const;

  std::size_t trial_count() const;
  std::size_t patient_count() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  struct Table {
    std::map<std::string, std::string> by_key;  // key -> record json
    std::map<std::string, std::string> latest;  // id -> key
    std::ofstream out;
  };

  void open(Table& t, const std::filesystem::path& file);
  bool put(Table& t, const std::string& key, const std::string& id, const std::string& record,
           const ExtractionProvenance& prov);

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  Table trials_;
  Table patients_;
};

}  // namespace trialmatch
