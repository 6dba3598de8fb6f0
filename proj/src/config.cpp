#include "trialmatch/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "trialmatch/rerank.hpp"
#include "trialmatch/text.hpp"

namespace trialmatch {

namespace {

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(std::string_view v, std::size_t lineno) {
  v = text::trim(v);
  if (v.size() >= 2 && v.front() == '"') {
    if (v.back() != '"') throw ConfigError("line " + std::to_string(lineno) + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        char n = v[++i];
        out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
      } else {
        out.push_back(v[i]);
      }
    }
    return out;
  }
  return std::string(v);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string t = text::to_lower(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
  bool is_string;
};

template <typename M>
Field path_field(std::string key, M member) {
  return {key, [member](PipelineConfig& c, const std::string& v) { c.*member = v; },
          [member](const PipelineConfig& c) { return (c.*member).string(); }, true};
}

template <typename M>
Field string_field(std::string key, M member) {
  return {key, [member](PipelineConfig& c, const std::string& v) { c.*member = v; },
          [member](const PipelineConfig& c) { return c.*member; }, true};
}

template <typename M>
Field int_field(std::string key, M member) {
  return {key,
          [key, member](PipelineConfig& c, const std::string& v) {
            c.*member = static_cast<std::remove_reference_t<decltype(c.*member)>>(to_int(key, v));
          },
          [member](const PipelineConfig& c) { return std::to_string(c.*member); }, false};
}

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> f = {
      path_field("ontology", &C::ontology),
      path_field("corpus", &C::corpus),
      path_field("topics", &C::topics),
      path_field("qrels", &C::qrels),
      path_field("output_dir", &C::output_dir),
      path_field("store_dir", &C::store_dir),
      path_field("cache_path", &C::cache_path),
      int_field("workers", &C::workers),
      {"seed",
       [](C& c, const std::string& v) {
         c.seed = static_cast<std::uint64_t>(to_int("seed", v));
       },
       [](const C& c) { return std::to_string(c.seed); }, false},
      string_field("run_tag", &C::run_tag),
      string_field("labeler.kind", &C::labeler),
      {"labeler.noise_rate",
       [](C& c, const std::string& v) { c.noise_rate = to_double("labeler.noise_rate", v); },
       [](const C& c) { return text::format_double(c.noise_rate); }, false},
      string_field("labeler.endpoint", &C::endpoint),
      string_field("labeler.path", &C::endpoint_path),
      string_field("labeler.model", &C::model),
      string_field("labeler.api_key_env", &C::api_key_env),
      int_field("labeler.max_in_flight", &C::max_in_flight),
      int_field("labeler.timeout_ms", &C::timeout_ms),
      int_field("labeler.max_retries", &C::max_retries),
      string_field("retrieval.mode", &C::retrieval),
      int_field("retrieval.n_level", &C::n_level),
      int_field("retrieval.k", &C::first_stage_k),
      {"retrieval.demographic_filter",
       [](C& c, const std::string& v) {
         c.demographic_filter = to_bool("retrieval.demographic_filter", v);
       },
       [](const C& c) { return std::string(c.demographic_filter ? "true" : "false"); }, false},
      string_field("retrieval.normalization", &C::normalization),
      int_field("retrieval.lsh_bands", &C::lsh_bands),
      int_field("retrieval.lsh_rows", &C::lsh_rows),
      string_field("retrieval.shingles", &C::shingles),
      int_field("rerank.k", &C::rerank_k),
      string_field("rerank.method", &C::method),
      string_field("rerank.gate", &C::gate),
      string_field("rerank.counting", &C::counting),
      string_field("rerank.categorization", &C::categorization),
      int_field("eval.relevance_threshold", &C::relevance_threshold),
      string_field("eval.gain", &C::gain),
  };
  return f;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& body) {
  std::map<std::string, std::string> out;
  std::istringstream in(body);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body_part = strip_comment(line);
    std::string_view l = text::trim(body_part);
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = std::string(text::trim(l.substr(1, l.size() - 2)));
      continue;
    }
    auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key(text::trim(l.substr(0, eq)));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out[key] = unquote(l.substr(eq + 1), lineno);
  }
  return out;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

void PipelineConfig::validate() const {
  require(labeler == "rule-mock" || labeler == "noisy" || labeler == "external",
          "labeler.kind must be rule-mock, noisy or external");
  require(noise_rate >= 0.0 && noise_rate <= 1.0, "labeler.noise_rate must lie in [0,1]");
  require(max_in_flight >= 1, "labeler.max_in_flight must be >= 1");
  require(timeout_ms >= 1, "labeler.timeout_ms must be >= 1");
  require(max_retries >= 0, "labeler.max_retries must be >= 0");
  require(retrieval == "condition" || retrieval == "bm25", "retrieval.mode must be condition or bm25");
  require(n_level >= 0 && n_level <= 10, "retrieval.n_level must lie in [0,10]");
  require(first_stage_k >= 1, "retrieval.k must be >= 1");
  require(normalization == "exact" || normalization == "approx",
          "retrieval.normalization must be exact or approx");
  require(lsh_bands >= 1 && lsh_rows >= 1, "LSH bands and rows must be >= 1");
  if (shingles != "tokens") {
    auto parts = text::split(shingles, ':');
    require(parts.size() == 2 && parts[0] == "chars", "retrieval.shingles must be tokens or chars:<k>");
    require(to_int("retrieval.shingles", parts[1]) >= 1, "character shingle size must be >= 1");
  }
  require(rerank_k >= 1, "rerank.k must be >= 1");
  if (method != "ov") {
    try {
      ScoringMethod::parse(method);
      parse_gate_mode(gate);
    } catch (const RerankError& e) {
      throw ConfigError(e.what());
    }
  }
  require(counting == "per-category" || counting == "once", "rerank.counting must be per-category or once");
  require(categorization == "lazy" || categorization == "eager",
          "rerank.categorization must be lazy or eager");
  require(relevance_threshold >= 1 && relevance_threshold <= 2,
          "eval.relevance_threshold must be 1 or 2");
  require(gain == "linear" || gain == "exponential", "eval.gain must be linear or exponential");
  require(workers >= 1, "workers must be >= 1");
}

void PipelineConfig::check_paths() const {
  for (const auto* p : {&ontology, &corpus, &topics}) {
    require(!p->empty(), "ontology, corpus and topics paths are required");
    require(std::filesystem::exists(*p), "path does not exist: " + p->string());
  }
  if (!qrels.empty()) require(std::filesystem::exists(qrels), "path does not exist: " + qrels.string());
}

std::filesystem::path PipelineConfig::effective_store_dir() const {
  return store_dir.empty() ? output_dir / "store" : store_dir;
}

std::filesystem::path PipelineConfig::effective_cache_path() const {
  return cache_path.empty() ? output_dir / "label_cache.jsonl" : cache_path;
}

std::string PipelineConfig::to_toml() const {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    auto dot = f.key.find('.');
    std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      // Top-level keys must precede every section header.
      if (sec.empty()) throw std::logic_error("top-level key after a section: " + f.key);
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    std::string v = f.get(*this);
    out += name + " = " + (f.is_string ? quote(v) : v) + "\n";
  }
  return out;
}

void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + o);
    cfg.set(std::string(text::trim(o.substr(0, eq))), std::string(text::trim(o.substr(eq + 1))));
  }
}

PipelineConfig load_config(const std::filesystem::path& path,
                           const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig cfg;
  for (const auto& [k, v] : parse_key_values(ss.str())) cfg.set(k, v);
  // File paths are relative to the config file; override paths to the caller.
  auto base = path.parent_path();
  for (auto* p : {&cfg.ontology, &cfg.corpus, &cfg.topics, &cfg.qrels, &cfg.output_dir, &cfg.store_dir,
                  &cfg.cache_path}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  apply_overrides(cfg, overrides);
  for (auto* p : {&cfg.ontology, &cfg.corpus, &cfg.topics, &cfg.qrels, &cfg.output_dir, &cfg.store_dir,
                  &cfg.cache_path}) {
    if (!p->empty()) *p = std::filesystem::absolute(*p).lexically_normal();
  }
  cfg.validate();
  return cfg;
}

}  // namespace trialmatch
