#include "trialmatch/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>

#include "trialmatch/text.hpp"

namespace trialmatch {

using nlohmann::ordered_json;

const std::vector<ShellPlan>& default_shell_plan() {
  static const std::vector<ShellPlan> plan = {
      {0, 12, 3, 3}, {1, 8, 5, 5}, {2, 2, 4, 2}, {3, 1, 5, 2}, {4, 0, 6, 2}};
  return plan;
}

namespace {

// Engine output is fully specified by the standard; distributions are not,
// so draws are reduced by hand to stay identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
};

const std::vector<std::string> kSites = {
    "hepatic",   "renal",    "pulmonary", "cardiac",   "gastric",  "colonic",  "pancreatic",
    "thyroid",   "adrenal",  "ovarian",   "prostatic", "dermal",   "retinal",  "cochlear",
    "splenic",   "vesical",  "uterine",   "esophageal", "laryngeal", "osseous"};

const std::vector<std::string> kComorbidities = {
    "hypertension",   "diabetes mellitus", "hyperlipidemia",  "asthma",
    "hypothyroidism", "osteoarthritis",    "atrial fibrillation", "chronic kidney disease",
    "gout",           "migraine",          "glaucoma",        "psoriasis"};

const std::vector<std::string> kAbsent = {"tobacco use",     "alcohol abuse",  "heart failure",
                                          "hepatitis b",     "epilepsy",       "stroke",
                                          "venous thrombosis", "bipolar disorder"};

const std::vector<std::string> kDrugs = {"metformin",    "lisinopril",   "atorvastatin",
                                         "levothyroxine", "allopurinol", "amlodipine"};

const std::vector<std::string> kUnknownHistory = {"prior chemotherapy", "prior organ transplant",
                                                  "prior radiotherapy to the chest",
                                                  "prior investigational agent"};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make() {
    static const std::vector<std::string> onset = {"b", "d", "f", "g", "k", "l", "m", "n",
                                                   "p", "r", "s", "t", "v", "z", "br", "tr"};
    static const std::vector<std::string> vowel = {"a", "e", "i", "o", "u"};
    static const std::vector<std::string> suffix = {"osis", "oma", "itis", "emia", "pathy", "algia"};
    for (;;) {
      std::string w;
      std::size_t syl = 2 + rng_.below(2);
      for (std::size_t i = 0; i < syl; ++i) w += rng_.pick(onset) + rng_.pick(vowel);
      w += rng_.pick(suffix);
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

struct Node {
  ConceptId id;
  std::string label;
  std::string synonym;
};

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

struct Patient {
  int age;
  bool female;
  std::vector<std::string> present;  // two comorbidities
  std::string absent;
  std::string drug;
  double bmi;
};

struct Criteria {
  std::vector<std::string> inclusion, exclusion;
  std::vector<EligibilityLabel> fine;
};

// Criteria whose rule-engine verdicts for `pt` are known by construction.
Criteria make_criteria(const Patient& pt, const std::string& diagnosis_label, bool on_diagnosis,
                       bool trigger, Rng& rng) {
  using L = EligibilityLabel;
  Criteria c;
  std::vector<std::pair<std::string, L>> inc, exc;
  int lo = std::max(18, pt.age - rng.between(5, 20));
  int hi = std::min(90, pt.age + rng.between(5, 20));
  inc.emplace_back("Aged " + std::to_string(lo) + " to " + std::to_string(hi) + " years", L::kEligible);
  if (on_diagnosis) inc.emplace_back("Diagnosis of " + diagnosis_label, L::kEligible);
  switch (rng.below(3)) {
    case 0:
      inc.emplace_back("History of " + rng.pick(pt.present), L::kEligible);
      break;
    case 1:
      inc.emplace_back("Currently taking " + pt.drug, L::kEligible);
      break;
    default:
      inc.emplace_back("BMI of " + std::to_string(static_cast<int>(std::floor(pt.bmi)) - rng.between(2, 6)) +
                           " or higher",
                       L::kEligible);
  }
  if (rng.below(2) == 0) inc.emplace_back(rng.pick(kUnknownHistory), L::kNotEnoughInfo);
  exc.emplace_back("History of " + pt.absent, L::kEligible);
  exc.emplace_back("BMI greater than " + std::to_string(static_cast<int>(std::ceil(pt.bmi)) + rng.between(3, 8)),
                   L::kEligible);

  if (trigger) {
    switch (rng.below(3)) {
      case 0:
        exc.emplace_back("History of " + rng.pick(pt.present), L::kExcluded);
        break;
      case 1:
        inc.emplace_back("BMI of " + std::to_string(static_cast<int>(std::ceil(pt.bmi)) + rng.between(3, 8)) +
                             " or higher",
                         L::kExcluded);
        break;
      default:
        exc.emplace_back("Currently taking " + pt.drug, L::kExcluded);
    }
  }
  for (auto& [t, l] : inc) {
    c.inclusion.push_back(t);
    c.fine.push_back(l);
  }
  for (auto& [t, l] : exc) {
    c.exclusion.push_back(t);
    c.fine.push_back(l);
  }
  return c;
}

}  // namespace

Benchmark generate_benchmark(const BenchmarkParams& params) {
  Rng rng(params.seed);
  WordMaker words(rng);
  Benchmark b;

  b.ontology.push_back({"C000000", "clinical finding", {}, {}});
  std::size_t next_id = 1;
  auto new_id = [&] {
    char buf[16];
    std::snprintf(buf, sizeof buf, "C%06zu", next_id++);
    return std::string(buf);
  };
  auto add = [&](const std::string& site, const ConceptId& parent) {
    std::string code = words.make();
    Node n{new_id(), site + " " + code, code + " of " + site + " type"};
    b.ontology.push_back({n.id, n.label, {n.synonym}, {parent}});
    return n;
  };

  // Decoy leaves far from every topic branch; attached as second conditions
  // so off-diagnosis trials score below on-diagnosis ones.
  std::vector<Node> decoys;
  for (int i = 0; i < 10; ++i) decoys.push_back(add("systemic", "C000000"));

  const auto& plan = default_shell_plan();
  std::size_t total_trials = 0;
  for (const auto& s : plan) total_trials += s.size();
  total_trials *= params.topics;
  std::vector<std::size_t> trial_numbers(total_trials);
  for (std::size_t i = 0; i < total_trials; ++i) trial_numbers[i] = 1000001 + i * 7;
  rng.shuffle(trial_numbers);
  std::size_t trial_cursor = 0;

  for (std::size_t t = 0; t < params.topics; ++t) {
    std::string site = t < kSites.size() ? kSites[t] : words.make();
    std::string topic_id = "P" + std::to_string(t + 1);
    int depth = 5 + static_cast<int>(t % 3);

    // Chain root -> a1 -> ... -> a_depth (the diagnosis), a side leaf on each
    // chain node, and a descendant tree under the diagnosis.
    std::vector<Node> chain;
    std::vector<Node> side;
    ConceptId parent = "C000000";
    for (int d = 1; d <= depth; ++d) {
      chain.push_back(add(site, parent));
      parent = chain.back().id;
    }
    for (int d = 1; d < depth; ++d) side.push_back(add(site, chain[static_cast<std::size_t>(d - 1)].id));
    const Node& dx = chain.back();
    Node k1 = add(site, dx.id), k2 = add(site, dx.id);
    Node g1 = add(site, k1.id), g2 = add(site, k2.id);
    Node gg = add(site, g1.id);
    Node ggg = add(site, gg.id);

    // Concepts at each undirected distance from the diagnosis.
    auto at = [&](int d) { return chain[static_cast<std::size_t>(depth - 1 - d)]; };
    auto side_at = [&](int d) { return side[static_cast<std::size_t>(depth - 1 - d)]; };
    std::vector<std::vector<Node>> rings = {
        {dx},
        {at(1), k1, k2},
        {at(2), side_at(1), g1, g2},
        {at(3), side_at(2), gg},
        {at(4), side_at(3), ggg},
    };

    Patient pt;
    pt.age = rng.between(30, 70);
    pt.female = t % 2 == 0;
    std::vector<std::string> pool = kComorbidities;
    rng.shuffle(pool);
    pt.present = {pool[0], pool[1]};
    pt.absent = rng.pick(kAbsent);
    pt.drug = rng.pick(kDrugs);
    pt.bmi = rng.between(200, 340) / 10.0;

    const char* he = pt.female ? "She" : "He";
    const char* his = pt.female ? "Her" : "His";
    std::string note = "A " + std::to_string(pt.age) + "-year-old " + (pt.female ? "woman" : "man") +
                       " presents for evaluation. " + he + " was diagnosed with " + dx.label + ". " + he +
                       " has a history of " + pt.present[0] + " and " + pt.present[1] + ". " + he +
                       " has no history of " + pt.absent + ". " + he + " is taking " + pt.drug + ". " + his +
                       " BMI is " + fmt1(pt.bmi) + ".";
    b.topics.push_back({topic_id, note});
    b.topic_truth[topic_id] = {topic_id, pt.age, pt.female ? GenderSet::female() : GenderSet::male(),
                               dx.id, depth};

    for (const auto& shell : plan) {
      const auto& ring = rings[static_cast<std::size_t>(shell.distance)];
      std::vector<int> outcomes;
      outcomes.insert(outcomes.end(), shell.eligible, 2);
      outcomes.insert(outcomes.end(), shell.excluded, 1);
      outcomes.insert(outcomes.end(), shell.violators, 0);
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        int grade = outcomes[i];
        const Node& cond = ring[i % ring.size()];
        RawTrial raw;
        raw.id = "NCT0" + std::to_string(trial_numbers[trial_cursor++]);
        raw.conditions.push_back(i % 3 == 2 ? cond.synonym : cond.label);
        if (shell.distance > 0) raw.conditions.push_back(decoys[rng.below(decoys.size())].label);

        Criteria crit = make_criteria(pt, dx.label, shell.distance == 0, grade == 1, rng);
        TrialTruth truth;
        truth.trial_id = raw.id;
        truth.topic_id = topic_id;
        truth.shell = shell.distance;
        truth.grade = grade;
        truth.fine = crit.fine;
        truth.coarse = grade == 2 ? CoarseLabel::kEligible : CoarseLabel::kExcluded;

        int lo = std::max(18, pt.age - rng.between(5, 20));
        int hi = std::min(90, pt.age + rng.between(5, 20));
        std::string gender = rng.below(2) == 0 ? "All" : (pt.female ? "Female" : "Male");
        if (grade == 0) {
          if (i % 2 == 0) {
            lo = pt.age + rng.between(1, 10);
            hi = lo + rng.between(5, 20);
            truth.violation = "age";
          } else {
            gender = pt.female ? "Male" : "Female";
            truth.violation = "gender";
          }
          // The planted violation settles the outcome whatever the criteria say.
          truth.coarse = CoarseLabel::kExcluded;
        }
        // Keep the age criterion consistent with the structured bounds.
        crit.inclusion[0] = "Aged " + std::to_string(lo) + " to " + std::to_string(hi) + " years";
        if (grade == 0 && truth.violation == std::string("age")) truth.fine[0] = EligibilityLabel::kExcluded;
        raw.min_age = std::to_string(lo) + " Years";
        raw.max_age = std::to_string(hi) + " Years";
        raw.gender = gender;
        raw.inclusion = crit.inclusion;
        raw.exclusion = crit.exclusion;
        raw.text = "Conditions: ";
        for (std::size_t c = 0; c < raw.conditions.size(); ++c)
          raw.text += (c ? "; " : "") + raw.conditions[c];
        raw.text += ". Inclusion criteria: ";
        for (const auto& s : raw.inclusion) raw.text += s + ". ";
        raw.text += "Exclusion criteria: ";
        for (const auto& s : raw.exclusion) raw.text += s + ". ";

        b.qrels.add(topic_id, raw.id, grade);
        b.trial_truth[raw.id] = std::move(truth);
        b.trials.push_back(std::move(raw));
      }
    }
  }
  std::sort(b.trials.begin(), b.trials.end(),
            [](const RawTrial& a, const RawTrial& c) { return a.id < c.id; });
  return b;
}

void write_benchmark(const Benchmark& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("ontology.jsonl");
    for (const auto& c : b.ontology) {
      ordered_json j;
      j["id"] = c.id;
      j["label"] = c.preferred_label;
      j["synonyms"] = c.synonyms;
      j["parents"] = c.parents;
      out << j.dump() << "\n";
    }
  }
  {
    auto out = open("corpus.jsonl");
    for (const auto& r : b.trials) out << raw_trial_to_json(r) << "\n";
  }
  {
    auto out = open("topics.jsonl");
    write_topics(out, b.topics);
  }
  {
    auto out = open("qrels.txt");
    write_qrels(out, b.qrels);
  }
  {
    ordered_json j;
    ordered_json topics = ordered_json::object();
    for (const auto& [id, t] : b.topic_truth) {
      topics[id] = {{"age", t.age},
                    {"gender", t.gender.to_string()},
                    {"diagnosis", t.diagnosis},
                    {"depth", t.diagnosis_depth}};
    }
    ordered_json trials = ordered_json::object();
    for (const auto& [id, t] : b.trial_truth) {
      ordered_json fine = ordered_json::array();
      for (auto l : t.fine) fine.push_back(to_string(l));
      trials[id] = {{"topic", t.topic_id},
                    {"shell", t.shell},
                    {"grade", t.grade},
                    {"violation", t.violation ? ordered_json(*t.violation) : ordered_json(nullptr)},
                    {"coarse", to_string(t.coarse)},
                    {"fine", fine}};
    }
    j["topics"] = topics;
    j["trials"] = trials;
    auto out = open("truth.json");
    out << j.dump(1) << "\n";
  }
  {
    auto out = open("config.toml");
    out << "ontology = \"ontology.jsonl\"\n"
           "corpus = \"corpus.jsonl\"\n"
           "topics = \"topics.jsonl\"\n"
           "qrels = \"qrels.txt\"\n"
           "output_dir = \"runs\"\n"
           "seed = 42\n\n"
           "[labeler]\nkind = \"rule-mock\"\n\n"
           "[retrieval]\nn_level = 1\nk = 500\nnormalization = \"approx\"\n\n"
           "[rerank]\nk = 25\nmethod = \"hybrid\"\ngate = \"lenient\"\n";
  }
}

}  // namespace trialmatch
