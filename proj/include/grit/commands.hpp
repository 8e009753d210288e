#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>

#include "grit/judge.hpp"
#include "grit/metrics.hpp"
#include "grit/reward.hpp"
#include "grit/toy_env.hpp"

namespace grit::cli {

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitFatal = 2 };

struct ScoreOptions {
  RewardConfig reward;
  std::size_t jobs = 1;
};

// Scores every trace against its sample; writes one line per trace in input
// order plus a summary line. Judge transport/auth failures propagate.
int run_score(const std::filesystem::path& samples_path,
              const std::filesystem::path& traces_path, std::ostream& out,
              const ScoreOptions& options, AnswerJudge& judge);

using CorrelationJudgeFactory = std::function<std::unique_ptr<CorrelationJudge>(
    const GroundedTrace& trace, const RgbImage& image)>;

struct EvalOptions {
  bool acc = true;
  bool giou = true;
  bool correlation = false;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  OverlayStyle style;
};

// acc_judge is required when options.acc is set, correlation_judges when
// options.correlation is set.
int run_eval(const std::filesystem::path& samples_path,
             const std::filesystem::path& traces_path, std::ostream& out,
             const EvalOptions& options, AnswerJudge* acc_judge,
             const CorrelationJudgeFactory& correlation_judges);

struct TrainToyOptions {
  toy::TrainConfig config;
  std::filesystem::path log_path;
  std::optional<std::filesystem::path> policy_path;
};

int run_train_toy(const TrainToyOptions& options);

// Stream derived from (seed, record, repeat) so trials do not depend on
// scheduling order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t record,
                          std::uint64_t repeat);

}  // namespace grit::cli
