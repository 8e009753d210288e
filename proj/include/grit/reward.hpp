#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "grit/judge.hpp"
#include "grit/trace.hpp"

namespace grit {

enum class JudgeMode { kRule, kRemote };

struct RewardConfig {
  bool counting_reward_enabled = true;
  double bleu_weight = 0.1;
  JudgeMode judge_mode = JudgeMode::kRule;

  void validate() const;
};

struct FormatReward {
  double s_st = 0.0;  // 0.5 per correctly placed token pair
  double s_bf = 0.0;  // 0.5 when at least one box is present
  double r_format = 0.0;
};

struct AnswerReward {
  double s_gpt = 0.0;  // binary
  double s_bleu = 0.0;
  double r_ans = 0.0;
  double judge_raw = 0.0;  // judge score before thresholding
};

struct RewardBreakdown {
  double s_st = 0.0;
  double s_bf = 0.0;
  double r_format = 0.0;
  std::optional<double> r_count;
  std::optional<double> s_gpt;
  double s_bleu = 0.0;
  double r_ans = 0.0;
  double total = 0.0;
  std::optional<double> judge_raw;
};

// What a trace is scored against.
struct RewardTarget {
  std::string question;
  std::string answer;
  std::optional<std::size_t> gt_count;  // present only for counting tasks
};

class ConfigError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

FormatReward format_reward(const GroundedTrace& trace);

// 0.5 when the number of boxes equals gt_count. Throws ConfigError when the
// counting reward is disabled.
double counting_reward(const GroundedTrace& trace, std::size_t gt_count,
                       const RewardConfig& config);

// Sentence-level BLEU-1: clipped unigram precision times the brevity penalty,
// over lowercased, punctuation-stripped whitespace tokens. No smoothing.
double bleu1(std::string_view candidate, std::string_view reference);

AnswerReward answer_reward(std::string_view question,
                           std::string_view predicted,
                           std::string_view gt_answer, AnswerJudge& judge,
                           double bleu_weight = 0.1);

RewardBreakdown total_reward(const GroundedTrace& trace,
                             const RewardTarget& target,
                             const RewardConfig& config, AnswerJudge& judge);

}  // namespace grit
