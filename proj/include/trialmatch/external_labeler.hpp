#pragma once

// Labeler backed by a chat-completion HTTP service.

#include <chrono>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>

#include "trialmatch/labeling.hpp"

namespace trialmatch {

/// Sends one prompt, returns the assistant text. Throws
/// LabelingError::kTransport on failure.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string model() const = 0;
};

struct HttpChatConfig {
  std::string base_url = "http://127.0.0.1:8000";  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.0;
  int timeout_ms = 60000;
  int max_retries = 5;  // retries after the first attempt
  int initial_backoff_ms = 500;
  double backoff_multiplier = 2.0;
  int max_backoff_ms = 30000;
  int max_in_flight = 4;
};

/// POSTs {"model", "messages":[{"role":"user","content":prompt}],
/// "temperature"} and reads choices[0].message.content. 429, 5xx and
/// connection failures are retried with exponential backoff; other statuses
/// fail immediately. At most `max_in_flight` requests run at once.
class HttpChatClient : public ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpChatClient(HttpChatConfig cfg, Sleeper sleeper = {});

  std::string complete(const std::string& prompt) override;
  std::string model() const override { return cfg_.model; }
  const HttpChatConfig& config() const { return cfg_; }

 private:
  HttpChatConfig cfg_;
  Sleeper sleep_;
  std::counting_semaphore<1024> slots_;
  std::string api_key_;
};

/// Renders the shipped prompt templates, sends them through a ChatClient and
/// validates the responses. One repair re-prompt is issued when a response
/// cannot be parsed; a second failure raises kMalformedOutput.
class ExternalServiceLabeler : public Labeler {
 public:
  explicit ExternalServiceLabeler(std::shared_ptr<ChatClient> client, int repair_attempts = 1)
      : client_(std::move(client)), repair_attempts_(repair_attempts) {}

  std::string id() const override { return "external:" + client_->model(); }

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
  template <typename T, typename Parse>
  LabelerReply<T> ask(const std::string& prompt, Parse parse);

  std::shared_ptr<ChatClient> client_;
  int repair_attempts_;
};

}  // namespace trialmatch
