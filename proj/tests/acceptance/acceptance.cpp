// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "grit/grpo.hpp"
#include "grit/judge.hpp"
#include "grit/metrics.hpp"
#include "grit/reward.hpp"
#include "grit/toy_env.hpp"
#include "grit/trace.hpp"
#include "test_support.hpp"

using namespace grit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// 1. Zebra reward breakdown.
Result reward_exactness() {
  const std::string text = testing::zebra_trace();
  const RewardTarget target{"How many zebras are pictured here?", "7", 7};
  RuleAnswerJudge judge;
  const RewardConfig config;
  const RewardBreakdown first = total_reward(parse_trace(text), target, config, judge);

  std::vector<double> times;
  bool stable = true;
  for (int i = 0; i < 200; ++i) {
    const auto t0 = Clock::now();
    const RewardBreakdown b = total_reward(parse_trace(text), target, config, judge);
    times.push_back(seconds_since(t0));
    stable = stable && same_bits(b.total, first.total) && same_bits(b.r_ans, first.r_ans) &&
             same_bits(b.r_format, first.r_format);
  }
  std::nth_element(times.begin(), times.begin() + 100, times.end());
  const double median_ms = times[100] * 1e3;

  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  const bool values = first.s_st == 1.0 && first.s_bf == 0.5 && first.r_format == 1.5 &&
                      first.r_count == 0.5 && near(first.r_ans, 1.1) && near(first.total, 3.1);
  return {values && stable && median_ms < 1.0,
          fmt("s_st=%.3f s_bf=%.3f r_format=%.3f r_count=%.3f r_ans=%.6f total=%.6f "
              "stable=%d median=%.4fms",
              first.s_st, first.s_bf, first.r_format, first.r_count.value_or(-1), first.r_ans,
              first.total, stable, median_ms)};
}

// 2. Group-normalized advantages.
Result advantages() {
  const std::vector<double> r{1, 0, 0, 0};
  const auto a = group_advantages(r, 1e-8);
  const double expect[] = {1.7320508, -0.5773503, -0.5773503, -0.5773503};
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(a[i] - expect[i]));

  bool zeros = true;
  for (double v : group_advantages(std::vector<double>{2.5, 2.5, 2.5, 2.5}, 1e-8)) {
    zeros = zeros && v == 0.0;
  }

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10, 10);
  std::uniform_int_distribution<int> n(2, 16);
  double worst_mean = 0.0;
  for (int g = 0; g < 1000; ++g) {
    std::vector<double> rewards(n(rng));
    for (double& v : rewards) v = u(rng);
    double mean = 0.0;
    for (double v : group_advantages(rewards, 1e-8)) mean += v;
    worst_mean = std::max(worst_mean, std::abs(mean / rewards.size()));
  }
  return {worst <= 1e-6 && zeros && worst_mean <= 1e-9,
          fmt("max |A - ref|=%.2e all-equal->zeros=%d max |mean A| over 1000 groups=%.2e", worst,
              zeros, worst_mean)};
}

// 3. Analytic gradient against central differences.
Result gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> vocab_d(2, 5), states_d(1, 4), len_d(1, 4);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> reward(0.0, 3.0);
  const double h = 1e-5;
  double worst = 0.0;
  int checked = 0, redrawn = 0;
  while (checked < 100) {
    const std::size_t vocab = vocab_d(rng), states = states_d(rng);
    // Spread of the current policy around the sampling policy; larger values
    // push some ratios onto the clipped branch.
    const double spread = checked % 2 == 0 ? 0.05 : 0.4;
    TabularPolicy old(states, vocab), policy(states, vocab), ref(states, vocab);
    for (std::size_t i = 0; i < old.logits().size(); ++i) {
      old.logits()[i] = unit(rng);
      policy.logits()[i] = old.logits()[i] + spread * unit(rng);
      ref.logits()[i] = unit(rng);
    }
    CompletionGroup group;
    std::uniform_int_distribution<std::size_t> tok(0, vocab - 1), st(0, states - 1);
    for (int i = 0; i < 4; ++i) {
      Completion c;
      for (std::size_t t = len_d(rng); t > 0; --t) {
        c.tokens.push_back(tok(rng));
        c.states.push_back(st(rng));
      }
      group.completions.push_back(c);
      group.rewards.push_back(reward(rng));
    }
    group.advantages = group_advantages(group.rewards, group.delta);

    GrpoConfig config;
    config.epsilon = 0.2;
    config.beta = checked % 4 < 2 ? 0.0 : 0.04;

    // The objective has a kink where a ratio meets a clip bound; central
    // differences across it do not estimate a derivative, so redraw.
    bool kink = false;
    for (const auto& c : group.completions) {
      const double s = std::exp(sequence_logprob(policy, c.tokens, c.states) -
                                sequence_logprob(old, c.tokens, c.states));
      const double margin = 50 * h * (1.0 + s) * static_cast<double>(c.tokens.size());
      kink = kink || std::abs(s - 0.8) < margin || std::abs(s - 1.2) < margin;
    }
    if (kink) {
      ++redrawn;
      continue;
    }

    const PolicyGradient g = grpo_gradient(group, policy, old, ref, config);
    for (std::size_t i = 0; i < policy.logits().size(); ++i) {
      const double saved = policy.logits()[i];
      policy.logits()[i] = saved + h;
      const double up = grpo_objective(group, policy, old, ref, config);
      policy.logits()[i] = saved - h;
      const double down = grpo_objective(group, policy, old, ref, config);
      policy.logits()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double err = std::abs(fd - g.logits()[i]) /
                         std::max({std::abs(fd), std::abs(g.logits()[i]), 1e-6});
      worst = std::max(worst, err);
    }
    ++checked;
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-5 && elapsed < 10.0,
          fmt("instances=%d (redrawn near clip kink: %d) max rel err=%.2e time=%.2fs", checked,
              redrawn, worst, elapsed)};
}

// 4. Sweep IoU against a pixel grid.
Result iou_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> coord(0, 64), count(1, 5);
  auto boxes = [&] {
    std::vector<BoundingBox> out(count(rng));
    for (auto& b : out) b = BoundingBox::from_corners(coord(rng), coord(rng), coord(rng), coord(rng));
    return out;
  };
  auto paint = [](const std::vector<BoundingBox>& bs) {
    std::vector<char> grid(64 * 64, 0);
    for (const auto& b : bs) {
      for (int y = b.y1; y < b.y2; ++y) {
        for (int x = b.x1; x < b.x2; ++x) grid[y * 64 + x] = 1;
      }
    }
    return grid;
  };
  int mismatches = 0, empty_unions = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto pred = boxes(), gt = boxes();
    const auto gp = paint(pred), gg = paint(gt);
    int64_t inter = 0, uni = 0;
    for (int p = 0; p < 64 * 64; ++p) {
      inter += gp[p] && gg[p];
      uni += gp[p] || gg[p];
    }
    if (uni == 0) {
      ++empty_unions;
      try {
        grounding_iou(pred, gt, {64, 64});
        ++mismatches;
      } catch (const std::invalid_argument&) {
      }
      continue;
    }
    const double want = static_cast<double>(inter) / static_cast<double>(uni);
    if (grounding_iou(pred, gt, {64, 64}) != want) ++mismatches;
  }
  const double elapsed = seconds_since(t0);
  return {mismatches == 0 && elapsed < 30.0,
          fmt("instances=10000 mismatches=%d (empty unions: %d) time=%.2fs", mismatches,
              empty_unions, elapsed)};
}

// 5 and 6 share the default-config training run.
struct ToyRuns {
  toy::TrainResult on;
  double on_seconds = 0.0;
  toy::TrainResult off;
};

ToyRuns run_toy() {
  ToyRuns runs;
  toy::TrainConfig config;
  config.seed = 0;
  const auto t0 = Clock::now();
  runs.on = toy::train(config);
  runs.on_seconds = seconds_since(t0);
  config.reward.counting_reward_enabled = false;
  runs.off = toy::train(config);
  return runs;
}

constexpr std::uint64_t kHeldOutSeed = 0x5eed0fe11;

Result toy_learning(const ToyRuns& runs) {
  const toy::TrainConfig defaults;
  const auto initial = toy::evaluate_held_out(toy::initial_policy(defaults.init, 0), 2000,
                                              kHeldOutSeed, toy::Decoding::kSample);
  const double ma = toy::trailing_mean_r_format(runs.on.log, 100);
  const auto held = toy::evaluate_held_out(runs.on.policy, 500, kHeldOutSeed);
  const bool pass = runs.on.log.records.size() == 2000 && ma >= 1.4 &&
                    held.answer_accuracy >= 0.9 && initial.mean_r_format < 0.3 &&
                    runs.on_seconds < 300.0;
  return {pass, fmt("MA100 r_format=%.4f (>=1.4) held-out acc=%.3f (>=0.9) initial "
                    "r_format=%.4f (<0.3) steps=%zu time=%.1fs",
                    ma, held.answer_accuracy, initial.mean_r_format,
                    runs.on.log.records.size(), runs.on_seconds)};
}

Result counting_ablation(const ToyRuns& runs) {
  // Expected |boxes - k| under each trained policy's sampling distribution.
  const auto on = toy::evaluate_held_out(runs.on.policy, 500, kHeldOutSeed, toy::Decoding::kSample);
  const auto off =
      toy::evaluate_held_out(runs.off.policy, 500, kHeldOutSeed, toy::Decoding::kSample);
  return {on.mean_abs_count_error <= off.mean_abs_count_error,
          fmt("E|boxes-k| counting on=%.4f off=%.4f (MA100 r_format on=%.4f off=%.4f)",
              on.mean_abs_count_error, off.mean_abs_count_error,
              toy::trailing_mean_r_format(runs.on.log, 100),
              toy::trailing_mean_r_format(runs.off.log, 100))};
}

// 7. Correlation harness null and oracle.
Result correlation_null() {
  RgbImage image(96, 64);
  std::mt19937_64 paint(7);
  for (auto& byte : image.bytes()) byte = static_cast<std::uint8_t>(paint());
  const GroundedTrace trace =
      parse_trace("<think>a cup (10, 8, 40, 30) near a plate (50, 20, 90, 60)</think>"
                  "<answer>yes");
  const int n = 2000;
  AlwaysFirstJudge blind;
  std::mt19937_64 rng(77);
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += correlation_trial(trace, image, blind, rng).hit.value();
  const double rate = static_cast<double>(hits) / n;
  const double sigma = std::sqrt(0.25 / n);

  GeometricOracleJudge oracle(image, trace.box_list());
  int oracle_hits = 0;
  for (int i = 0; i < n; ++i) oracle_hits += correlation_trial(trace, image, oracle, rng).hit.value();
  const double oracle_rate = static_cast<double>(oracle_hits) / n;
  return {std::abs(rate - 0.5) <= 3 * sigma && oracle_rate == 1.0,
          fmt("blind judge=%.4f (0.5 +- %.4f over %d trials) oracle=%.4f", rate, 3 * sigma, n,
              oracle_rate)};
}

// 8. Prompt templates against golden files.
Result prompt_fidelity() {
  auto golden = [](const char* name) {
    return testing::read_file(testing::data_path(std::string("golden/") + name));
  };
  auto replace = [](std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    if (at != std::string::npos) s.replace(at, from.size(), to);
    return s;
  };
  const std::string answer = golden("answer_prompt.txt");
  const std::string corr = golden("correlation_prompt.txt");
  const std::string suffix = golden("prompt_suffix.txt");
  bool ok = std::string(answer_prompt_template()) == answer &&
            std::string(correlation_prompt_template()) == corr &&
            std::string(grounded_prompt_suffix()) == suffix;
  ok = ok && answer.find("responsible for proofreading the answers") != std::string::npos &&
       corr.find("exactly \"Image 0\" or \"Image 1\"") != std::string::npos &&
       suffix.find("output necessary coordinates needed") != std::string::npos;
  const std::string expect_answer =
      replace(replace(replace(answer, "{$question}", "How many?"), "{$answer}", "3"),
              "{$predicted_content}", "three");
  ok = ok && render_answer_prompt("How many?", "3", "three") == expect_answer;
  ok = ok && render_correlation_prompt("a [REGION] b") ==
                 replace(corr, "{$grounded_reasoning_masked}", "a [REGION] b");
  return {ok, fmt("answer=%zuB correlation=%zuB suffix=%zuB byte-identical=%d", answer.size(),
                  corr.size(), suffix.size(), ok)};
}

// 9. Parser fuzz.
std::string fuzz_input(std::mt19937_64& rng, int kind) {
  static const std::vector<std::string> pieces{
      "(", ")", "[", "]", ",", ", ", " ", "-", ".", "0", "7", "12", "640", "99999999999",
      "<think>", "</think>", "<rethink>", "</rethink>", "<answer>", "bbox_2d", ":", "\n", "obj"};
  std::uniform_int_distribution<int> len(0, 160), byte(0, 255), count(0, 60);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::string text;
  if (kind == 0) {
    text.resize(static_cast<std::size_t>(len(rng)));
    for (char& c : text) c = static_cast<char>(byte(rng));
  } else {
    // Fragments of coordinate syntax mixed with whole quadruplets.
    std::uniform_int_distribution<int> value(-50, 700), coin(0, 3);
    for (int n = count(rng); n > 0; --n) {
      if (coin(rng) != 0) {
        text += pieces[pick(rng)];
        continue;
      }
      const bool square = coin(rng) == 0;
      text += square ? "[" : "(";
      for (int k = 0; k < 4; ++k) {
        if (k > 0) text += coin(rng) == 0 ? "," : ", ";
        text += std::to_string(value(rng));
        if (coin(rng) == 0 && coin(rng) == 0) text += ".5";
      }
      text += square ? "]" : ")";
    }
  }
  return text;
}

Result parser_fuzz() {
  std::mt19937_64 rng(9);
  std::size_t boxes = 0, violations = 0, crashes = 0;
  for (int i = 0; i < 100000; ++i) {
    const std::string text = fuzz_input(rng, i % 2);
    try {
      const GroundedTrace t = parse_trace(text);
      for (const auto& lb : t.boxes) {
        ++boxes;
        if (!lb.box.is_normalized() || lb.span.begin > lb.span.end || lb.span.end > text.size()) {
          ++violations;
        }
      }
      mask_coordinates(text);
    } catch (...) {
      ++crashes;
    }
  }
  return {crashes == 0 && violations == 0,
          fmt("inputs=100000 crashes=%zu boxes=%zu corner violations=%zu", crashes, boxes,
              violations)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Result()>& check) {
    Result r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failures += r.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s\n", r.pass ? "PASS" : "FAIL", id, name, r.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "reward exactness", reward_exactness);
  report(2, "advantage normalization", advantages);
  report(3, "gradient check", gradient_check);
  report(4, "IoU oracle", iou_oracle);
  ToyRuns runs;
  bool trained = false;
  std::string train_error;
  try {
    runs = run_toy();
    trained = true;
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  report(5, "toy learning", [&] {
    return trained ? toy_learning(runs) : Result{false, "training threw: " + train_error};
  });
  report(6, "counting ablation", [&] {
    return trained ? counting_ablation(runs) : Result{false, "training threw: " + train_error};
  });
  report(7, "correlation harness", correlation_null);
  report(8, "prompt fidelity", prompt_fidelity);
  report(9, "parser fuzz", parser_fuzz);
  return failures == 0 ? 0 : 1;
}
