#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "grit/grpo.hpp"
#include "grit/reward.hpp"
#include "grit/trace.hpp"

namespace grit::toy {

// Synthetic counting world: a 100x100 image divided into a 4x4 grid of 25px
// cells, with k in {0..3} target objects each occupying one cell.
inline constexpr int kImageSize = 100;
inline constexpr int kGridSide = 4;
inline constexpr int kCellSize = kImageSize / kGridSide;
inline constexpr std::size_t kCellCount = kGridSide * kGridSide;
inline constexpr std::size_t kMaxObjects = 3;
inline constexpr std::size_t kMaxLen = 16;
inline constexpr const char* kQuestion = "How many targets are pictured here?";

using Rng = std::mt19937_64;

// Uniform in [0, n) without modulo bias.
std::size_t uniform_index(Rng& rng, std::size_t n);
// Uniform in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

struct ToyTask {
  std::vector<std::size_t> object_cells;  // distinct, ascending
  std::vector<BoundingBox> objects;
  std::string gt_answer;
  std::size_t gt_count = 0;

  RewardTarget target() const { return {kQuestion, gt_answer, gt_count}; }
};

// Token ids of the toy vocabulary.
namespace vocab {
inline constexpr TokenId kThink = 0;
inline constexpr TokenId kThinkEnd = 1;
inline constexpr TokenId kRethink = 2;
inline constexpr TokenId kRethinkEnd = 3;
inline constexpr TokenId kAnswer = 4;
inline constexpr TokenId kFirstCell = 5;
inline constexpr TokenId kFirstDigit = kFirstCell + kCellCount;
inline constexpr TokenId kFiller = kFirstDigit + 10;
inline constexpr TokenId kEos = kFiller + 1;
inline constexpr std::size_t kSize = kEos + 1;

constexpr TokenId cell(std::size_t i) { return kFirstCell + i; }
constexpr TokenId digit(std::size_t d) { return kFirstDigit + d; }
constexpr bool is_cell(TokenId t) { return t >= kFirstCell && t < kFirstDigit; }
constexpr bool is_digit(TokenId t) { return t >= kFirstDigit && t < kFiller; }

std::string name(TokenId t);
}  // namespace vocab

inline constexpr std::size_t kStateCount = (kMaxObjects + 1) * kMaxLen;

constexpr StateId state_of(std::size_t k, std::size_t position) {
  return k * kMaxLen + position;
}

BoundingBox cell_box(std::size_t cell);

ToyTask sample_task(Rng& rng);
ToyTask make_task(std::vector<std::size_t> object_cells);

enum class Decoding { kSample, kGreedy };

// Autoregressive rollout in states (k, position); stops after EOS or at
// max_len tokens.
Completion rollout(const TabularPolicy& policy, const ToyTask& task, Rng& rng,
                   std::size_t max_len = kMaxLen,
                   Decoding decoding = Decoding::kSample);

// Special tokens render literally, CELL(i) as "(x1, y1, x2, y2)", DIGIT(d) as
// the digit, FILLER as "obj"; joined by single spaces. EOS renders nothing.
std::string detokenize(const std::vector<TokenId>& tokens);

// The trace a parser would recover from detokenize(tokens), assembled
// directly from the token sequence.
GroundedTrace structural_trace(const std::vector<TokenId>& tokens);

// Starting (and reference) policy: mostly filler, rare coordinates and
// early stops, plus seeded logit noise.
struct InitConfig {
  double tag_logit = 0.0;
  double cell_logit = -3.0;
  double filler_logit = 2.0;
  double eos_logit = -3.0;
  double noise_std = 0.1;
  // Bump for each structural tag near its usual place in the template.
  double order_bonus = 4.0;
  double order_width = 1.5;
};

// GRPO settings for the toy trainer. The KL average runs over every visited
// state, so the per-state pull is weak and needs a larger beta than the
// library default.
inline GrpoConfig toy_grpo_defaults() {
  GrpoConfig g;
  g.beta = 1.0;
  g.learning_rate = 20.0;
  return g;
}

TabularPolicy initial_policy(const InitConfig& init, std::uint64_t seed);

struct TrainConfig {
  GrpoConfig grpo = toy_grpo_defaults();
  RewardConfig reward;
  InitConfig init;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  std::size_t tasks_per_step = 16;
  std::size_t max_len = kMaxLen;
  // The sampling policy is refreshed from the current one every this many
  // steps (1: fully on-policy).
  std::size_t old_refresh_interval = 1;
};

struct TrainingRecord {
  std::size_t step = 0;
  double mean_r_format = 0.0;
  std::optional<double> mean_r_count;
  double mean_r_ans = 0.0;
  double mean_total = 0.0;
  double objective = 0.0;
  double kl = 0.0;

  friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

struct TrainingLog {
  std::vector<TrainingRecord> records;
  std::uint64_t seed = 0;
  TrainConfig config;
};

struct TrainResult {
  TrainingLog log;
  TabularPolicy policy;
  TabularPolicy reference;
};

// Replaces the reward stack, e.g. for bandit sanity checks.
using RewardOverride =
    std::function<double(const std::vector<TokenId>&, const ToyTask&)>;

RewardBreakdown score_completion(const std::vector<TokenId>& tokens,
                                 const ToyTask& task,
                                 const RewardConfig& config);

TrainResult train(const TrainConfig& config,
                  const RewardOverride& reward_override = {});

struct HeldOutReport {
  std::size_t tasks = 0;
  double answer_accuracy = 0.0;   // rule judge
  double mean_abs_count_error = 0.0;  // E|boxes - k|
  double mean_r_format = 0.0;
};

HeldOutReport evaluate_held_out(const TabularPolicy& policy, std::size_t tasks,
                                std::uint64_t seed,
                                Decoding decoding = Decoding::kGreedy,
                                std::size_t max_len = kMaxLen);

// Mean over the trailing `window` records (all records if fewer).
double trailing_mean_r_format(const TrainingLog& log, std::size_t window);

}  // namespace grit::toy
