#include "trialmatch/corpus_store.hpp"

#include <chrono>
#include <json.hpp>
#include <set>

#include "trialmatch/text.hpp"

namespace trialmatch {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<std::string> string_list(const json& j, const char* field, const std::string& where) {
  std::vector<std::string> out;
  if (!j.contains(field) || j[field].is_null()) return out;
  const json& v = j[field];
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
    return out;
  }
  if (!v.is_array()) throw StoreError(where + ": '" + field + "' must be a list of strings");
  for (const auto& e : v) {
    if (!e.is_string()) throw StoreError(where + ": '" + field + "' must be a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::optional<std::string> age_field(const json& age, const char* field) {
  if (!age.is_object() || !age.contains(field) || age[field].is_null()) return std::nullopt;
  const json& v = age[field];
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return std::to_string(static_cast<long long>(v.get<double>()));
  if (v.is_string()) return v.get<std::string>();
  throw StoreError(std::string("age.") + field + " must be a number or string");
}

ordered_json age_json(const AgeSet& a) {
  ordered_json out = ordered_json::array();
  for (const auto& iv : a.intervals()) out.push_back({iv.lo, iv.hi});
  return out;
}

AgeSet age_from(const json& j) {
  std::vector<AgeInterval> ivs;
  for (const auto& p : j) ivs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  return AgeSet(std::move(ivs));
}

template <typename Set>
ordered_json list_json(const Set& s) {
  ordered_json out = ordered_json::array();
  for (const auto& x : s) out.push_back(x);
  return out;
}

PhraseSet phrases_from(const json& j) {
  PhraseSet out;
  for (const auto& e : j) out.insert(e.get<std::string>());
  return out;
}

ConceptSet concepts_from(const json& j) {
  ConceptSet out;
  for (const auto& e : j) out.insert(e.get<std::string>());
  return out;
}

json parse_json(std::string_view s, const std::string& what) {
  try {
    return json::parse(s);
  } catch (const json::exception& e) {
    throw StoreError(what + ": " + e.what());
  }
}

}  // namespace

RawTrial parse_raw_trial(std::string_view json_line) {
  json j = parse_json(json_line, "trial record");
  if (!j.is_object()) throw StoreError("trial record must be a JSON object");
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
    throw StoreError("trial record without a string id");
  RawTrial r;
  r.id = j["id"].get<std::string>();
  std::string where = "trial " + r.id;
  r.conditions = string_list(j, "condition", where);
  if (j.contains("eligibility")) {
    const json& e = j["eligibility"];
    if (!e.is_object()) throw StoreError(where + ": eligibility must be an object");
    r.inclusion = string_list(e, "inclusion", where);
    r.exclusion = string_list(e, "exclusion", where);
  }
  if (j.contains("age")) {
    r.min_age = age_field(j["age"], "min");
    r.max_age = age_field(j["age"], "max");
  }
  if (j.contains("gender") && j["gender"].is_string()) r.gender = j["gender"].get<std::string>();
  if (j.contains("text") && j["text"].is_string()) r.text = j["text"].get<std::string>();
  return r;
}

std::string raw_trial_to_json(const RawTrial& raw) {
  ordered_json j;
  j["id"] = raw.id;
  j["condition"] = raw.conditions;
  j["eligibility"] = {{"inclusion", raw.inclusion}, {"exclusion", raw.exclusion}};
  ordered_json age = ordered_json::object();
  age["min"] = raw.min_age ? ordered_json(*raw.min_age) : ordered_json(nullptr);
  age["max"] = raw.max_age ? ordered_json(*raw.max_age) : ordered_json(nullptr);
  j["age"] = age;
  j["gender"] = raw.gender.value_or("All");
  j["text"] = raw.text;
  return j.dump();
}

std::vector<Topic> read_topics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open topics file " + path.string());
  std::vector<Topic> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j = parse_json(line, "topics line " + std::to_string(lineno));
    if (!j.is_object() || !j.contains("id") || !j.contains("note") || !j["note"].is_string())
      throw StoreError("topics line " + std::to_string(lineno) + ": expected {\"id\", \"note\"}");
    Topic t;
    t.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    t.note = j["note"].get<std::string>();
    if (!seen.insert(t.id).second) throw StoreError("duplicate topic id " + t.id);
    out.push_back(std::move(t));
  }
  return out;
}

void write_topics(std::ostream& out, const std::vector<Topic>& topics) {
  for (const auto& t : topics) {
    ordered_json j;
    j["id"] = t.id;
    j["note"] = t.note;
    out << j.dump() << "\n";
  }
}

std::string trial_to_json(const TrialRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["age"] = age_json(r.age);
  j["gender"] = r.gender.to_string();
  j["condition_raw"] = list_json(r.condition_raw);
  j["condition_norm"] = list_json(r.condition_norm);
  ordered_json crits = ordered_json::array();
  for (const auto& c : r.criteria) {
    crits.push_back({{"text", c.text},
                     {"polarity", to_string(c.polarity)},
                     {"categories", c.categories.bits()}});
  }
  j["criteria"] = crits;
  j["raw_text"] = r.raw_text;
  return j.dump();
}

TrialRecord trial_from_json(std::string_view s) {
  json j = parse_json(s, "stored trial");
  try {
    TrialRecord r;
    r.id = j.at("id").get<std::string>();
    r.age = age_from(j.at("age"));
    r.gender = GenderSet::parse(j.at("gender").get<std::string>());
    r.condition_raw = phrases_from(j.at("condition_raw"));
    r.condition_norm = concepts_from(j.at("condition_norm"));
    for (const auto& c : j.at("criteria")) {
      r.criteria.push_back({c.at("text").get<std::string>(),
                            parse_polarity(c.at("polarity").get<std::string>()),
                            CategorySet::from_bits(c.at("categories").get<std::uint8_t>())});
    }
    r.raw_text = j.value("raw_text", "");
    return r;
  } catch (const json::exception& e) {
    throw StoreError(std::string("stored trial: ") + e.what());
  }
}

std::string patient_to_json(const PatientProfile& p) {
  ordered_json j;
  j["id"] = p.id;
  j["age"] = age_json(p.age);
  j["gender"] = p.gender.to_string();
  j["treatment"] = list_json(p.treatment);
  j["diagnosis_raw"] = list_json(p.diagnosis_raw);
  j["diagnosis_norm"] = list_json(p.diagnosis_norm);
  j["diagnosis_expanded"] = list_json(p.diagnosis_expanded);
  j["demographics"] = list_json(p.demographics);
  j["disease"] = list_json(p.disease);
  j["note_text"] = p.note_text;
  return j.dump();
}

PatientProfile patient_from_json(std::string_view s) {
  json j = parse_json(s, "stored patient");
  try {
    PatientProfile p;
    p.id = j.at("id").get<std::string>();
    p.age = age_from(j.at("age"));
    p.gender = GenderSet::parse(j.at("gender").get<std::string>());
    p.treatment = phrases_from(j.at("treatment"));
    p.diagnosis_raw = phrases_from(j.at("diagnosis_raw"));
    p.diagnosis_norm = concepts_from(j.at("diagnosis_norm"));
    p.diagnosis_expanded = concepts_from(j.at("diagnosis_expanded"));
    p.demographics = phrases_from(j.at("demographics"));
    p.disease = phrases_from(j.at("disease"));
    p.note_text = j.value("note_text", "");
    return p;
  } catch (const json::exception& e) {
    throw StoreError(std::string("stored patient: ") + e.what());
  }
}

void validate_record(const TrialRecord& r) {
  if (r.id.empty()) throw StoreError("trial without id");
  if (r.age.empty()) throw StoreError("trial " + r.id + " has an empty age set");
  if (r.criteria.empty()) throw StoreError("trial " + r.id + " has no criteria");
  for (const auto& c : r.criteria)
    if (text::trim(c.text).empty()) throw StoreError("trial " + r.id + " has an empty criterion");
}

void validate_record(const PatientProfile& p) {
  if (p.id.empty()) throw StoreError("patient without id");
  if (p.age.empty()) throw StoreError("patient " + p.id + " has an empty age set");
  if (!p.diagnosis_expanded.includes(p.diagnosis_norm))
    throw StoreError("patient " + p.id + ": expanded diagnoses must include the normalized ones");
}

// ---------------------------------------------------------------------------

CorpusStore::CorpusStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw StoreError("cannot create store directory " + dir_.string() + ": " + ec.message());
  open(trials_, dir_ / "trials.jsonl");
  open(patients_, dir_ / "patients.jsonl");
}

void CorpusStore::open(Table& t, const std::filesystem::path& file) {
  {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        continue;  // torn write
      }
      if (!j.is_object() || !j.contains("key") || !j.contains("record")) continue;
      std::string key = j["key"].get<std::string>();
      t.by_key[key] = j["record"].dump();
      t.latest[j["record"].value("id", "")] = key;
    }
  }
  // A torn last line has no newline; start appends on a fresh line.
  bool needs_newline = false;
  if (std::filesystem::exists(file) && std::filesystem::file_size(file) > 0) {
    std::ifstream tail(file, std::ios::binary);
    tail.seekg(-1, std::ios::end);
    needs_newline = tail.get() != '\n';
  }
  t.out.open(file, std::ios::app);
  if (!t.out) throw StoreError("cannot open " + file.string() + " for append");
  if (needs_newline) t.out << "\n";
}

bool CorpusStore::put(Table& t, const std::string& key, const std::string& id,
                      const std::string& record, const ExtractionProvenance& prov) {
  std::lock_guard lock(mu_);
  if (t.by_key.count(key)) return false;
  ordered_json line;
  line["key"] = key;
  line["id"] = id;
  line["labeler"] = prov.labeler;
  line["template_hash"] = prov.template_hash;
  line["stored_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
  line["record"] = ordered_json::parse(record);
  t.out << line.dump() << "\n";
  t.out.flush();
  if (!t.out) throw StoreError("write to store failed");
  t.by_key[key] = record;
  t.latest[id] = key;
  return true;
}

bool CorpusStore::has_trial(const std::string& key) const {
  std::lock_guard lock(mu_);
  return trials_.by_key.count(key) != 0;
}

bool CorpusStore::has_patient(const std::string& key) const {
  std::lock_guard lock(mu_);
  return patients_.by_key.count(key) != 0;
}

bool CorpusStore::put_trial(const std::string& key, const TrialRecord& r,
                            const ExtractionProvenance& prov) {
  validate_record(r);
  return put(trials_, key, r.id, trial_to_json(r), prov);
}

bool CorpusStore::put_patient(const std::string& key, const PatientProfile& p,
                              const ExtractionProvenance& prov) {
  validate_record(p);
  return put(patients_, key, p.id, patient_to_json(p), prov);
}

std::optional<TrialRecord> CorpusStore::trial_by_key(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = trials_.by_key.find(key);
  if (it == trials_.by_key.end()) return std::nullopt;
  return trial_from_json(it->second);
}

std::optional<PatientProfile> CorpusStore::patient_by_key(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = patients_.by_key.find(key);
  if (it == patients_.by_key.end()) return std::nullopt;
  return patient_from_json(it->second);
}

std::vector<TrialRecord> CorpusStore::trials() const {
  std::lock_guard lock(mu_);
  std::vector<TrialRecord> out;
  for (const auto& [id, key] : trials_.latest) out.push_back(trial_from_json(trials_.by_key.at(key)));
  return out;
}

std::vector<PatientProfile> CorpusStore::patients() const {
  std::lock_guard lock(mu_);
  std::vector<PatientProfile> out;
  for (const auto& [id, key] : patients_.latest)
    out.push_back(patient_from_json(patients_.by_key.at(key)));
  return out;
}

std::size_t CorpusStore::trial_count() const {
  std::lock_guard lock(mu_);
  return trials_.by_key.size();
}

std::size_t CorpusStore::patient_count() const {
  std::lock_guard lock(mu_);
  return patients_.by_key.size();
}

}  // namespace trialmatch
