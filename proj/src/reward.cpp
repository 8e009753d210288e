#include "grit/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <vector>

namespace grit {
namespace {

constexpr double kPairScore = 0.5;
constexpr double kBoxFormatScore = 0.5;
constexpr double kCountScore = 0.5;

std::vector<std::string> bleu_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (const unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c >= 128 || !std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

}  // namespace

void RewardConfig::validate() const {
  if (!(bleu_weight >= 0.0)) throw ConfigError("bleu_weight must be >= 0");
}

FormatReward format_reward(const GroundedTrace& trace) {
  const TokenPairReport& report = trace.token_report;
  FormatReward r;
  r.s_st = (report.think_pair_ok ? kPairScore : 0.0) +
           (report.rethink_pair_ok && report.pairs_ordered_ok ? kPairScore
                                                              : 0.0);
  r.s_bf = trace.boxes.empty() ? 0.0 : kBoxFormatScore;
  r.r_format = r.s_st + r.s_bf;
  return r;
}

double counting_reward(const GroundedTrace& trace, std::size_t gt_count,
                       const RewardConfig& config) {
  if (!config.counting_reward_enabled) {
    throw ConfigError("counting reward requested while disabled");
  }
  return trace.boxes.size() == gt_count ? kCountScore : 0.0;
}

double bleu1(std::string_view candidate, std::string_view reference) {
  const auto cand = bleu_tokens(candidate);
  const auto ref = bleu_tokens(reference);
  if (cand.empty()) return 0.0;

  std::map<std::string, std::size_t> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  std::map<std::string, std::size_t> cand_counts;
  for (const auto& t : cand) ++cand_counts[t];

  std::size_t clipped = 0;
  for (const auto& [token, count] : cand_counts) {
    const auto it = ref_counts.find(token);
    if (it != ref_counts.end()) clipped += std::min(count, it->second);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double precision = static_cast<double>(clipped) / c;
  const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return precision * brevity;
}

AnswerReward answer_reward(std::string_view question,
                           std::string_view predicted,
                           std::string_view gt_answer, AnswerJudge& judge,
                           double bleu_weight) {
  AnswerReward r;
  r.judge_raw = std::clamp(judge.score(question, predicted, gt_answer), 0.0, 1.0);
  r.s_gpt = binarize_judge_score(r.judge_raw);
  r.s_bleu = bleu1(predicted, gt_answer);
  r.r_ans = r.s_gpt + bleu_weight * r.s_bleu;
  return r;
}

RewardBreakdown total_reward(const GroundedTrace& trace,
                             const RewardTarget& target,
                             const RewardConfig& config, AnswerJudge& judge) {
  config.validate();
  RewardBreakdown out;
  const FormatReward format = format_reward(trace);
  out.s_st = format.s_st;
  out.s_bf = format.s_bf;
  out.r_format = format.r_format;
  if (config.counting_reward_enabled && target.gt_count) {
    out.r_count = counting_reward(trace, *target.gt_count, config);
  }
  const AnswerReward answer =
      answer_reward(target.question, trace.answer_or_empty(), target.answer,
                    judge, config.bleu_weight);
  out.s_gpt = answer.s_gpt;
  out.s_bleu = answer.s_bleu;
  out.r_ans = answer.r_ans;
  out.judge_raw = answer.judge_raw;
  out.total = out.r_format + out.r_count.value_or(0.0) + out.r_ans;
  return out;
}

}  // namespace grit
