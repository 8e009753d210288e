#include "grit/judge.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <utility>

#include <nlohmann/json.hpp>

namespace grit {
namespace {

constexpr std::string_view kAnswerPrompt =
    "You are responsible for proofreading the answers, you need to give a "
    "score to the model’s answer by referring to the standard answer, "
    "based on the given question. The full score is 1 point and the minimum "
    "score is 0 points. Please output the score in the json form "
    "\"{score: <score>}\". The evaluation criteria require that the closer "
    "the model’s answer is to the standard answer, the higher the "
    "score.\n"
    "\n"
    "Question: {$question}\n"
    "\n"
    "Standard answer: {$answer}\n"
    "\n"
    "Model’s answer: {$predicted_content}";

constexpr std::string_view kCorrelationPrompt =
    "Please decide which image has the bounding boxes that match the "
    "following description:\n"
    "{$grounded_reasoning_masked}\n"
    "\n"
    "Reply with exactly \"Image 0\" or \"Image 1\".";

constexpr std::string_view kPromptSuffix =
    "First, think between <think> and </think> while output necessary "
    "coordinates needed to answer the question in JSON with key 'bbox_2d'. "
    "Then, based on the thinking contents and coordinates, rethink between "
    "<rethink> </rethink> and then answer the question after <answer>.";

using Substitution = std::pair<std::string_view, std::string_view>;

std::string substitute(std::string_view tmpl,
                       std::initializer_list<Substitution> subs) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    std::size_t best = std::string_view::npos;
    const Substitution* hit = nullptr;
    for (const auto& sub : subs) {
      const std::size_t at = tmpl.find(sub.first, pos);
      if (at < best) {
        best = at;
        hit = &sub;
      }
    }
    if (hit == nullptr) break;
    out.append(tmpl.substr(pos, best - pos));
    out.append(hit->second);
    pos = best + hit->first.size();
  }
  if (pos < tmpl.size()) out.append(tmpl.substr(pos));
  return out;
}

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::optional<double> lenient_score(std::string_view object) {
  static const std::regex kUnquoted(
      R"(^\{\s*['"]?score['"]?\s*:\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*\}$)");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_match(object.begin(), object.end(), m, kUnquoted)) {
    return std::stod(m[1].str());
  }
  return std::nullopt;
}

}  // namespace

std::string_view answer_prompt_template() { return kAnswerPrompt; }
std::string_view correlation_prompt_template() { return kCorrelationPrompt; }
std::string_view grounded_prompt_suffix() { return kPromptSuffix; }

std::string render_answer_prompt(std::string_view question,
                                 std::string_view gt_answer,
                                 std::string_view predicted) {
  return substitute(kAnswerPrompt, {{kQuestionSlot, question},
                                    {kAnswerSlot, gt_answer},
                                    {kPredictedSlot, predicted}});
}

std::string render_correlation_prompt(std::string_view masked_reasoning) {
  return substitute(kCorrelationPrompt, {{kReasoningSlot, masked_reasoning}});
}

std::string normalize_answer(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (const unsigned char c : text) {
    if (std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (!is_ascii_punct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));

  std::size_t first = 0;
  while (first < words.size() &&
         (words[first] == "a" || words[first] == "an" ||
          words[first] == "the")) {
    ++first;
  }
  std::string out;
  for (std::size_t i = first; i < words.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

int rule_judge(std::string_view /*question*/, std::string_view predicted,
               std::string_view gt) {
  return normalize_answer(predicted) == normalize_answer(gt) ? 1 : 0;
}

std::optional<double> find_score(std::string_view text) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos;
       open = text.find('{', open + 1)) {
    int depth = 0;
    std::size_t close = std::string_view::npos;
    for (std::size_t i = open; i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}' && --depth == 0) {
        close = i;
        break;
      }
    }
    if (close == std::string_view::npos) continue;
    const std::string_view object = text.substr(open, close - open + 1);
    const auto parsed = nlohmann::json::parse(object, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) {
      const auto it = parsed.find("score");
      if (it != parsed.end() && it->is_number()) return it->get<double>();
    }
    if (auto score = lenient_score(object)) return score;
  }
  return std::nullopt;
}

int parse_binary_choice(std::string_view response) {
  const std::string lower = to_lower_ascii(response);
  const std::size_t zero = lower.find("image 0");
  const std::size_t one = lower.find("image 1");
  if (zero == std::string::npos && one == std::string::npos) {
    throw ParseError("response names neither \"Image 0\" nor \"Image 1\"");
  }
  return zero < one ? 0 : 1;
}

void JudgeRequest::validate() const {
  if (prompt.empty()) throw std::invalid_argument("judge prompt is empty");
  if (images.size() > 2) {
    throw std::invalid_argument("judge requests carry at most two images");
  }
  if (max_retries < 0) {
    throw std::invalid_argument("max_retries must be non-negative");
  }
}

InflightLimiter::InflightLimiter(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) {
    throw std::invalid_argument("in-flight cap must be at least 1");
  }
}

void InflightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return in_flight_ < capacity_; });
  ++in_flight_;
}

void InflightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

std::shared_ptr<InflightLimiter> InflightLimiter::global() {
  static const auto limiter =
      std::make_shared<InflightLimiter>(kDefaultInflightCap);
  return limiter;
}

double RuleAnswerJudge::score(std::string_view question,
                              std::string_view predicted,
                              std::string_view gt) {
  return rule_judge(question, predicted, gt);
}

RemoteAnswerJudge::RemoteAnswerJudge(std::shared_ptr<RemoteJudgeClient> client,
                                     JudgeRequest request_template)
    : client_(std::move(client)), template_(std::move(request_template)) {}

double RemoteAnswerJudge::score(std::string_view question,
                                std::string_view predicted,
                                std::string_view gt) {
  JudgeRequest request = template_;
  request.prompt = render_answer_prompt(question, gt, predicted);
  return client_->judge(request).score;
}

RemoteCorrelationJudge::RemoteCorrelationJudge(
    std::shared_ptr<RemoteJudgeClient> client, JudgeRequest request_template)
    : client_(std::move(client)), template_(std::move(request_template)) {}

int RemoteCorrelationJudge::choose(std::string_view prompt,
                                   const RgbImage& image0,
                                   const RgbImage& image1) {
  JudgeRequest request = template_;
  request.prompt = std::string(prompt);
  request.images = {encode_png(image0), encode_png(image1)};
  return client_->choose_image(request);
}

}  // namespace grit
