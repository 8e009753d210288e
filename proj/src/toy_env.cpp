#include "grit/toy_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace grit::toy {
namespace {

std::string render_token(TokenId t) {
  using namespace vocab;
  switch (t) {
    case kThink:
      return std::string(kThinkOpen);
    case kThinkEnd:
      return std::string(kThinkClose);
    case kRethink:
      return std::string(kRethinkOpen);
    case kRethinkEnd:
      return std::string(kRethinkClose);
    case kAnswer:
      return std::string(kAnswerMarker);
    case kFiller:
      return "obj";
    case kEos:
      return "";
    default:
      break;
  }
  if (is_cell(t)) {
    const BoundingBox b = cell_box(t - kFirstCell);
    return "(" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " +
           std::to_string(b.x2) + ", " + std::to_string(b.y2) + ")";
  }
  if (is_digit(t)) return std::to_string(t - kFirstDigit);
  throw std::out_of_range("token id outside the toy vocabulary");
}

// Rendered text plus the byte range each token occupies in it.
struct Rendering {
  std::string text;
  std::vector<ByteSpan> spans;
};

Rendering render(const std::vector<TokenId>& tokens) {
  Rendering r;
  for (const TokenId t : tokens) {
    const std::string piece = render_token(t);
    if (piece.empty()) {
      r.spans.push_back({r.text.size(), r.text.size()});
      continue;
    }
    if (!r.text.empty()) r.text.push_back(' ');
    r.spans.push_back({r.text.size(), r.text.size() + piece.size()});
    r.text += piece;
  }
  return r;
}

std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = uniform_unit(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the cumulative total; take the last supported token.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

double standard_normal(Rng& rng) {
  const double u1 = 1.0 - uniform_unit(rng);  // (0, 1]
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::optional<std::size_t> first_index(const std::vector<TokenId>& tokens,
                                       TokenId id, std::size_t from = 0) {
  for (std::size_t i = from; i < tokens.size(); ++i) {
    if (tokens[i] == id) return i;
  }
  return std::nullopt;
}

std::size_t count_of(const std::vector<TokenId>& tokens, TokenId id) {
  return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), id));
}

std::optional<std::string> segment_between(const Rendering& r,
                                           const std::vector<TokenId>& tokens,
                                           TokenId open, TokenId close) {
  const auto o = first_index(tokens, open);
  if (!o) return std::nullopt;
  const auto c = first_index(tokens, close, *o + 1);
  if (!c) return std::nullopt;
  const std::size_t begin = r.spans[*o].end;
  const std::size_t end = r.spans[*c].begin;
  return std::string(trim(std::string_view(r.text).substr(begin, end - begin)));
}

}  // namespace

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index over an empty range");
  const std::uint64_t bound = n;
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t x = rng();
  while (x > limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string vocab::name(TokenId t) {
  if (is_cell(t)) return "CELL(" + std::to_string(t - kFirstCell) + ")";
  if (is_digit(t)) return "DIGIT(" + std::to_string(t - kFirstDigit) + ")";
  if (t == kFiller) return "FILLER";
  if (t == kEos) return "EOS";
  return render_token(t);
}

BoundingBox cell_box(std::size_t cell) {
  if (cell >= kCellCount) throw std::out_of_range("cell index out of range");
  const int col = static_cast<int>(cell % kGridSide);
  const int row = static_cast<int>(cell / kGridSide);
  return {col * kCellSize, row * kCellSize, (col + 1) * kCellSize,
          (row + 1) * kCellSize};
}

ToyTask make_task(std::vector<std::size_t> object_cells) {
  std::sort(object_cells.begin(), object_cells.end());
  if (object_cells.size() > kMaxObjects ||
      std::adjacent_find(object_cells.begin(), object_cells.end()) !=
          object_cells.end()) {
    throw std::invalid_argument("a toy task holds at most 3 distinct cells");
  }
  ToyTask task;
  for (const std::size_t c : object_cells) task.objects.push_back(cell_box(c));
  task.object_cells = std::move(object_cells);
  task.gt_count = task.object_cells.size();
  task.gt_answer = std::to_string(task.gt_count);
  return task;
}

ToyTask sample_task(Rng& rng) {
  const std::size_t k = uniform_index(rng, kMaxObjects + 1);
  std::vector<std::size_t> cells(kCellCount);
  for (std::size_t i = 0; i < kCellCount; ++i) cells[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(cells[i], cells[i + uniform_index(rng, kCellCount - i)]);
  }
  cells.resize(k);
  return make_task(std::move(cells));
}

Completion rollout(const TabularPolicy& policy, const ToyTask& task, Rng& rng,
                   std::size_t max_len, Decoding decoding) {
  if (max_len > kMaxLen) {
    throw std::invalid_argument("max_len exceeds the toy state space");
  }
  if (policy.state_count() != kStateCount || policy.vocab_size() != vocab::kSize) {
    throw ShapeError("policy does not match the toy state/vocabulary sizes");
  }
  Completion c;
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    const StateId s = state_of(task.gt_count, pos);
    TokenId t = 0;
    if (decoding == Decoding::kGreedy) {
      const auto row = policy.row(s);
      t = static_cast<TokenId>(std::max_element(row.begin(), row.end()) -
                               row.begin());
    } else {
      t = sample_categorical(policy.probabilities(s), rng);
    }
    c.tokens.push_back(t);
    c.states.push_back(s);
    if (t == vocab::kEos) break;
  }
  return c;
}

std::string detokenize(const std::vector<TokenId>& tokens) {
  return render(tokens).text;
}

GroundedTrace structural_trace(const std::vector<TokenId>& tokens) {
  using namespace vocab;
  const Rendering r = render(tokens);
  GroundedTrace trace;
  trace.raw_text = r.text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_cell(tokens[i])) {
      trace.boxes.push_back({cell_box(tokens[i] - kFirstCell), r.spans[i]});
    }
  }
  trace.think_segment = segment_between(r, tokens, kThink, kThinkEnd);
  trace.rethink_segment = segment_between(r, tokens, kRethink, kRethinkEnd);
  if (const auto a = first_index(tokens, kAnswer)) {
    trace.answer_segment =
        std::string(trim(std::string_view(r.text).substr(r.spans[*a].end)));
  }

  auto pair_ok = [&](TokenId open, TokenId close) {
    return count_of(tokens, open) == 1 && count_of(tokens, close) == 1 &&
           *first_index(tokens, open) < *first_index(tokens, close);
  };
  TokenPairReport& report = trace.token_report;
  report.think_pair_ok = pair_ok(kThink, kThinkEnd);
  report.rethink_pair_ok = pair_ok(kRethink, kRethinkEnd);
  report.pairs_ordered_ok =
      report.think_pair_ok && report.rethink_pair_ok &&
      *first_index(tokens, kThinkEnd) < *first_index(tokens, kRethink);
  report.answer_marker_present = first_index(tokens, kAnswer).has_value();
  return trace;
}

TabularPolicy initial_policy(const InitConfig& init, std::uint64_t seed) {
  TabularPolicy policy(kStateCount, vocab::kSize, 0.0);
  Rng rng(seed);
  for (StateId s = 0; s < kStateCount; ++s) {
    auto row = policy.row(s);
    for (TokenId t = vocab::kThink; t <= vocab::kAnswer; ++t) row[t] = init.tag_logit;
    for (std::size_t c = 0; c < kCellCount; ++c) row[vocab::cell(c)] = init.cell_logit;
    row[vocab::kFiller] = init.filler_logit;
    row[vocab::kEos] = init.eos_logit;
    if (init.order_bonus != 0.0) {
      const double pos = static_cast<double>(s % kMaxLen);
      for (TokenId t = vocab::kThink; t <= vocab::kAnswer; ++t) {
        const double centre = static_cast<double>(t - vocab::kThink) * (kMaxLen - 3) / 4.0;
        const double z = (pos - centre) / init.order_width;
        row[t] += init.order_bonus * std::exp(-0.5 * z * z);
      }
    }
    if (init.noise_std > 0.0) {
      for (double& l : row) l += init.noise_std * standard_normal(rng);
    }
  }
  return policy;
}

RewardBreakdown score_completion(const std::vector<TokenId>& tokens,
                                 const ToyTask& task,
                                 const RewardConfig& config) {
  RuleAnswerJudge judge;
  return total_reward(parse_trace(detokenize(tokens)), task.target(), config,
                      judge);
}

TrainResult train(const TrainConfig& config,
                  const RewardOverride& reward_override) {
  config.grpo.validate();
  config.reward.validate();
  if (config.tasks_per_step == 0) {
    throw std::invalid_argument("tasks_per_step must be >= 1");
  }
  if (config.old_refresh_interval == 0) {
    throw std::invalid_argument("old_refresh_interval must be >= 1");
  }

  TrainResult result;
  result.log.seed = config.seed;
  result.log.config = config;
  result.reference = initial_policy(config.init, config.seed);
  result.policy = result.reference;
  TabularPolicy old = result.policy;

  Rng rng(config.seed);
  const std::size_t n = config.grpo.group_size;
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (step % config.old_refresh_interval == 0) old = result.policy;

    TrainingRecord record;
    record.step = step;
    double sum_format = 0.0, sum_count = 0.0, sum_ans = 0.0, sum_total = 0.0;
    bool any_count = false;
    PolicyGradient grad(kStateCount, vocab::kSize, 0.0);

    for (std::size_t task_index = 0; task_index < config.tasks_per_step;
         ++task_index) {
      const ToyTask task = sample_task(rng);
      CompletionGroup group;
      group.sample_id = std::to_string(step) + ":" + std::to_string(task_index);
      group.delta = config.grpo.delta;
      for (std::size_t i = 0; i < n; ++i) {
        group.completions.push_back(rollout(old, task, rng, config.max_len));
        const auto& tokens = group.completions.back().tokens;
        if (reward_override) {
          const double r = reward_override(tokens, task);
          group.rewards.push_back(r);
          sum_total += r;
          continue;
        }
        const RewardBreakdown b = score_completion(tokens, task, config.reward);
        group.rewards.push_back(b.total);
        sum_format += b.r_format;
        sum_ans += b.r_ans;
        sum_total += b.total;
        if (b.r_count) {
          any_count = true;
          sum_count += *b.r_count;
        }
      }
      group.advantages = group_advantages(group.rewards, config.grpo.delta,
                                          config.grpo.std_kind);
      record.objective +=
          grpo_objective(group, result.policy, old, result.reference, config.grpo);
      record.kl += kl_categorical(result.policy, result.reference,
                                  visited_states(group));
      const PolicyGradient g =
          grpo_gradient(group, result.policy, old, result.reference, config.grpo);
      for (std::size_t i = 0; i < g.logits().size(); ++i) {
        grad.logits()[i] += g.logits()[i];
      }
    }

    const double groups = static_cast<double>(config.tasks_per_step);
    const double completions = groups * static_cast<double>(n);
    for (double& v : grad.logits()) v /= groups;
    record.objective /= groups;
    record.kl /= groups;
    record.mean_r_format = sum_format / completions;
    record.mean_r_ans = sum_ans / completions;
    record.mean_total = sum_total / completions;
    if (any_count) record.mean_r_count = sum_count / completions;
    result.log.records.push_back(record);

    result.policy =
        apply_update(result.policy, grad, config.grpo.learning_rate);
  }
  return result;
}

HeldOutReport evaluate_held_out(const TabularPolicy& policy, std::size_t tasks,
                                std::uint64_t seed, Decoding decoding,
                                std::size_t max_len) {
  HeldOutReport report;
  report.tasks = tasks;
  if (tasks == 0) return report;
  Rng rng(seed);
  RewardConfig config;
  config.counting_reward_enabled = false;
  double correct = 0.0, count_error = 0.0, format = 0.0;
  for (std::size_t i = 0; i < tasks; ++i) {
    const ToyTask task = sample_task(rng);
    const Completion c = rollout(policy, task, rng, max_len, decoding);
    const GroundedTrace trace = parse_trace(detokenize(c.tokens));
    correct += rule_judge(kQuestion, trace.answer_or_empty(), task.gt_answer);
    count_error += std::abs(static_cast<double>(trace.boxes.size()) -
                            static_cast<double>(task.gt_count));
    format += format_reward(trace).r_format;
  }
  const double n = static_cast<double>(tasks);
  report.answer_accuracy = correct / n;
  report.mean_abs_count_error = count_error / n;
  report.mean_r_format = format / n;
  return report;
}

double trailing_mean_r_format(const TrainingLog& log, std::size_t window) {
  if (log.records.empty()) return 0.0;
  const std::size_t take = std::min(window, log.records.size());
  double sum = 0.0;
  for (std::size_t i = log.records.size() - take; i < log.records.size(); ++i) {
    sum += log.records[i].mean_r_format;
  }
  return sum / static_cast<double>(take);
}

}  // namespace grit::toy
