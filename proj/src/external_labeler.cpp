#include "trialmatch/external_labeler.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace trialmatch {

namespace {

LabelingError transport(const std::string& what) {
  return LabelingError(LabelingError::Kind::kTransport, what);
}

// Releases a semaphore slot on scope exit.
struct SlotGuard {
  std::counting_semaphore<1024>& sem;
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
};

}  // namespace

HttpChatClient::HttpChatClient(HttpChatConfig cfg, Sleeper sleeper)
    : cfg_(std::move(cfg)),
      sleep_(sleeper ? std::move(sleeper)
                     : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      slots_(std::clamp(cfg_.max_in_flight, 1, 1024)) {
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
  }
}

std::string HttpChatClient::complete(const std::string& prompt) {
  nlohmann::json body = {
      {"model", cfg_.model},
      {"temperature", cfg_.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  double backoff = cfg_.initial_backoff_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      sleep_(std::chrono::milliseconds(static_cast<long long>(backoff)));
      backoff = std::min(backoff * cfg_.backoff_multiplier, static_cast<double>(cfg_.max_backoff_ms));
    }
    httplib::Result res;
    {
      SlotGuard guard(slots_);
      httplib::Client cli(cfg_.base_url);
      auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      res = cli.Post(cfg_.path, headers, payload, "application/json");
    }
    if (!res) {
      last_error = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw transport("HTTP " + std::to_string(res->status) + " from " + cfg_.base_url + cfg_.path);
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    try {
      if (j.is_discarded()) throw transport("response body is not JSON");
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw transport(std::string("unexpected response shape: ") + e.what());
    }
  }
  throw transport("giving up after " + std::to_string(cfg_.max_retries + 1) +
                  " attempts: " + last_error);
}

// ---------------------------------------------------------------------------

template <typename T, typename Parse>
LabelerReply<T> ExternalServiceLabeler::ask(const std::string& prompt, Parse parse) {
  std::string raw = client_->complete(prompt);
  for (int attempt = 0;; ++attempt) {
    try {
      return {parse(raw), raw};
    } catch (const LabelingError& e) {
      if (e.kind() != LabelingError::Kind::kMalformedOutput || attempt >= repair_attempts_) throw;
    }
    std::string repair = prompt;
    repair += "\n\nYour previous answer was:\n";
    repair += raw;
    repair += "\n\nIt does not follow the required output format. Answer again using exactly "
              "the output format given above and nothing else.";
    raw = client_->complete(repair);
  }
}

LabelerReply<PatientExtraction> ExternalServiceLabeler::extract_patient(
    const PromptTemplate& tmpl, const std::string&, std::string_view note) {
  return ask<PatientExtraction>(tmpl.render({{"note", std::string(note)}}),
                                parse_extraction_response);
}

LabelerReply<CategorySet> ExternalServiceLabeler::categorize(const PromptTemplate& tmpl,
                                                             const std::string&, std::size_t,
                                                             std::string_view criterion) {
  return ask<CategorySet>(tmpl.render({{"criterion", std::string(criterion)}}),
                          parse_categorization_response);
}

LabelerReply<EligibilityLabel> ExternalServiceLabeler::label_criterion(
    const PromptTemplate& tmpl, const std::string&, std::size_t, const Criterion& criterion,
    const PatientContext& ctx) {
  return ask<EligibilityLabel>(
      tmpl.render({{"criteria", "- " + criterion.text}, {"patient", ctx.render_bullets()}}),
      parse_fine_response);
}

LabelerReply<CoarseLabel> ExternalServiceLabeler::label_trial(const PromptTemplate& tmpl,
                                                              const TrialRecord& trial,
                                                              const PatientContext& ctx) {
  std::string inclusion, exclusion;
  for (const auto& c : trial.criteria) {
    std::string& dst = c.polarity == Polarity::kInclusion ? inclusion : exclusion;
    dst += c.text;
    dst += "\n";
  }
  if (!inclusion.empty()) inclusion.pop_back();
  if (!exclusion.empty()) exclusion.pop_back();
  return ask<CoarseLabel>(tmpl.render({{"inclusion", inclusion},
                                       {"exclusion", exclusion},
                                       {"patient", ctx.render_profile()}}),
                          parse_coarse_response);
}

}  // namespace trialmatch
