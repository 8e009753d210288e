#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "grit/image.hpp"

namespace grit {

// Prompt templates. Placeholders are substituted in a single left-to-right
// pass; substituted text is never rescanned.
inline constexpr std::string_view kQuestionSlot = "{$question}";
inline constexpr std::string_view kAnswerSlot = "{$answer}";
inline constexpr std::string_view kPredictedSlot = "{$predicted_content}";
inline constexpr std::string_view kReasoningSlot =
    "{$grounded_reasoning_masked}";

std::string_view answer_prompt_template();
std::string_view correlation_prompt_template();
// Instruction appended to model inputs so they emit grounded reasoning.
std::string_view grounded_prompt_suffix();

std::string render_answer_prompt(std::string_view question,
                                 std::string_view gt_answer,
                                 std::string_view predicted);
std::string render_correlation_prompt(std::string_view masked_reasoning);

// Lowercase, drop ASCII punctuation, collapse whitespace, then drop leading
// articles ("a", "an", "the").
std::string normalize_answer(std::string_view text);

// 1 iff both answers normalize to the same string.
int rule_judge(std::string_view question, std::string_view predicted,
               std::string_view gt);

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TransportError : public JudgeError {
 public:
  using JudgeError::JudgeError;
};
class ParseError : public JudgeError {
 public:
  using JudgeError::JudgeError;
};
class AuthError : public JudgeError {
 public:
  using JudgeError::JudgeError;
};

// First JSON object in `text` carrying a numeric "score". The unquoted form
// {score: 1} that the answer prompt literally asks for is accepted too.
std::optional<double> find_score(std::string_view text);

// 0 or 1 by the first case-insensitive "Image 0" / "Image 1". Throws
// ParseError when neither occurs.
int parse_binary_choice(std::string_view response);

struct JudgeRequest {
  std::string prompt;
  // Encoded raster images (PNG bytes), at most two.
  std::vector<std::string> images;
  int max_retries = 3;
  std::chrono::milliseconds timeout{30000};

  void validate() const;
};

struct JudgeVerdict {
  double score = 0.0;  // clamped to [0, 1]
  std::string raw_response;
};

// Caps the number of concurrent in-flight judge requests.
class InflightLimiter {
 public:
  explicit InflightLimiter(std::size_t capacity);

  void acquire();
  void release();
  std::size_t capacity() const { return capacity_; }

  // Process-wide limiter shared by clients that do not supply their own.
  static std::shared_ptr<InflightLimiter> global();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t capacity_;
  std::size_t in_flight_ = 0;
};

inline constexpr std::size_t kDefaultInflightCap = 4;
inline constexpr std::string_view kJudgeApiKeyEnv = "JUDGE_API_KEY";

struct RemoteJudgeConfig {
  // http[s]://host[:port][/path]
  std::string url;
  std::string api_key;
  std::chrono::milliseconds initial_backoff{250};
  std::shared_ptr<InflightLimiter> limiter;  // null: global limiter
};

// Minimal JSON-over-HTTP judge client. POSTs {"prompt", "images": [base64]}
// and treats the response body as the judge's text reply.
class RemoteJudgeClient {
 public:
  explicit RemoteJudgeClient(RemoteJudgeConfig config);
  ~RemoteJudgeClient();
  RemoteJudgeClient(const RemoteJudgeClient&) = delete;
  RemoteJudgeClient& operator=(const RemoteJudgeClient&) = delete;

  // Scored verdict; retries transport failures and unparseable replies.
  JudgeVerdict judge(const JudgeRequest& request);

  // Binary image choice for correlation trials.
  int choose_image(const JudgeRequest& request);

  // HTTP calls issued so far, including retries.
  std::size_t calls_made() const;

 private:
  template <typename Parse>
  auto with_retries(const JudgeRequest& request, Parse&& parse);
  std::string post_once(const JudgeRequest& request);

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Answer-correctness judge: raw score in [0, 1] for (question, predicted, gt).
class AnswerJudge {
 public:
  virtual ~AnswerJudge() = default;
  virtual double score(std::string_view question, std::string_view predicted,
                       std::string_view gt) = 0;
};

class RuleAnswerJudge final : public AnswerJudge {
 public:
  double score(std::string_view question, std::string_view predicted,
               std::string_view gt) override;
};

class RemoteAnswerJudge final : public AnswerJudge {
 public:
  RemoteAnswerJudge(std::shared_ptr<RemoteJudgeClient> client,
                    JudgeRequest request_template);
  double score(std::string_view question, std::string_view predicted,
               std::string_view gt) override;

 private:
  std::shared_ptr<RemoteJudgeClient> client_;
  JudgeRequest template_;
};

// Picks which of two overlaid images matches the prompt: returns 0 or 1.
class CorrelationJudge {
 public:
  virtual ~CorrelationJudge() = default;
  virtual int choose(std::string_view prompt, const RgbImage& image0,
                     const RgbImage& image1) = 0;
};

class RemoteCorrelationJudge final : public CorrelationJudge {
 public:
  RemoteCorrelationJudge(std::shared_ptr<RemoteJudgeClient> client,
                         JudgeRequest request_template);
  int choose(std::string_view prompt, const RgbImage& image0,
             const RgbImage& image1) override;

 private:
  std::shared_ptr<RemoteJudgeClient> client_;
  JudgeRequest template_;
};

// Threshold applied to raw judge scores to obtain the binary s_gpt.
inline constexpr double kBinaryJudgeThreshold = 0.5;
inline int binarize_judge_score(double raw) {
  return raw >= kBinaryJudgeThreshold ? 1 : 0;
}

}  // namespace grit
