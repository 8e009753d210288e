#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "grit/commands.hpp"
#include "grit/io.hpp"
#include "test_support.hpp"

using namespace grit;
using io::json;

namespace {

struct Workdir {
  std::filesystem::path root;
  Workdir() {
    static int n = 0;
    root = std::filesystem::temp_directory_path() /
           ("grit_cli_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    std::filesystem::create_directories(root);
  }
  ~Workdir() { std::filesystem::remove_all(root); }

  std::filesystem::path jsonl(const std::string& name, const std::vector<json>& rows) const {
    const auto p = root / name;
    std::ofstream out(p);
    for (const auto& r : rows) out << r.dump() << '\n';
    return p;
  }
};

json zebra_sample() {
  return {{"id", "zebra"},
          {"image_width", 640},
          {"image_height", 427},
          {"question", "How many zebras are pictured here?"},
          {"answer", "7"},
          {"gt_count", 7}};
}

std::vector<json> parse_lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

}  // namespace

TEST_CASE("score: zebra trace end to end") {
  Workdir w;
  const auto samples = w.jsonl("samples.jsonl", {zebra_sample()});
  const auto traces = w.jsonl(
      "traces.jsonl", {{{"id", "t1"}, {"sample_id", "zebra"}, {"text", testing::zebra_trace()}},
                       {{"id", "t2"}, {"sample_id", "zebra"}, {"text", ""}}});
  std::ostringstream out;
  RuleAnswerJudge judge;
  CHECK(cli::run_score(samples, traces, out, {}, judge) == cli::kExitOk);
  const auto lines = parse_lines(out.str());
  REQUIRE(lines.size() == 3);
  const auto first = io::ScoreLine::from_json(lines[0]);
  CHECK(first.breakdown.total == doctest::Approx(3.1).epsilon(1e-12));
  CHECK(first.breakdown.r_count == 0.5);
  CHECK(first.box_count == 7);
  const auto empty = io::ScoreLine::from_json(lines[1]);
  CHECK(empty.breakdown.total == 0.0);
  CHECK(empty.box_count == 0);
  CHECK(lines[2]["summary"]["count"] == 2);
  CHECK(lines[2]["summary"]["errors"] == 0);

  cli::ScoreOptions off;
  off.reward.counting_reward_enabled = false;
  off.jobs = 3;
  std::ostringstream out_off;
  CHECK(cli::run_score(samples, traces, out_off, off, judge) == cli::kExitOk);
  const auto lines_off = parse_lines(out_off.str());
  CHECK_FALSE(io::ScoreLine::from_json(lines_off[0]).breakdown.r_count.has_value());
  CHECK(io::ScoreLine::from_json(lines_off[0]).breakdown.total ==
        doctest::Approx(2.6).epsilon(1e-12));
  CHECK(lines_off.back()["summary"]["mean_r_count"].is_null());
}

TEST_CASE("score: dangling sample id is a partial failure") {
  Workdir w;
  const auto samples = w.jsonl("samples.jsonl", {zebra_sample()});
  const auto traces = w.jsonl(
      "traces.jsonl", {{{"id", "t1"}, {"sample_id", "zebra"}, {"text", "<answer>7"}},
                       {{"id", "t2"}, {"sample_id", "nope"}, {"text", "<answer>7"}}});
  std::ostringstream out;
  RuleAnswerJudge judge;
  CHECK(cli::run_score(samples, traces, out, {}, judge) == cli::kExitPartial);
  const auto lines = parse_lines(out.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].contains("error"));
  CHECK(lines[2]["summary"]["errors"] == 1);
  CHECK(lines[2]["summary"]["count"] == 1);

  CHECK_THROWS_AS(cli::run_score(w.root / "missing.jsonl", traces, out, {}, judge), io::IoError);
}

TEST_CASE("eval: accuracy, grounding IoU and correlation") {
  Workdir w;
  json sample = zebra_sample();
  sample["gt_boxes"] = {{10, 10, 50, 50}, {60, 60, 90, 90}};
  const auto samples = w.jsonl("samples.jsonl", {sample});
  std::vector<json> rows;
  for (int i = 0; i < 300; ++i) {
    rows.push_back({{"id", "t" + std::to_string(i)},
                    {"sample_id", "zebra"},
                    {"text", "<think>one (10, 10, 50, 50) two (60, 60, 90, 90)</think><answer>7"}});
  }
  const auto traces = w.jsonl("traces.jsonl", rows);

  cli::EvalOptions options;
  options.correlation = true;
  options.repeats = 3;
  options.seed = 5;
  options.jobs = 2;
  RuleAnswerJudge judge;
  const cli::CorrelationJudgeFactory always_first = [](const GroundedTrace&, const RgbImage&) {
    return std::make_unique<AlwaysFirstJudge>();
  };
  std::ostringstream out;
  CHECK(cli::run_eval(samples, traces, out, options, &judge, always_first) == cli::kExitOk);
  const auto lines = parse_lines(out.str());
  REQUIRE(lines.size() == 301);
  const auto first = io::ReportLine::from_json(lines[0]);
  CHECK(first.record.acc_score == 1.0);
  CHECK(first.record.giou == 1.0);
  CHECK(first.record.correlation_hits.size() == 3);
  const json& summary = lines.back()["summary"];
  CHECK(summary["mean_acc"] == 1.0);
  CHECK(summary["mean_giou"] == 1.0);
  // 900 fair-coin trials.
  CHECK(std::abs(summary["correlation_mean"].get<double>() - 0.5) <= 3 * std::sqrt(0.25 / 900));

  std::ostringstream again;
  cli::run_eval(samples, traces, again, options, &judge, always_first);
  CHECK(again.str() == out.str());

  const cli::CorrelationJudgeFactory oracle = [](const GroundedTrace& t, const RgbImage& image) {
    return std::make_unique<GeometricOracleJudge>(image, t.box_list());
  };
  std::ostringstream out_oracle;
  cli::run_eval(samples, traces, out_oracle, options, &judge, oracle);
  CHECK(parse_lines(out_oracle.str()).back()["summary"]["correlation_mean"] == 1.0);

  CHECK_THROWS_AS(cli::run_eval(samples, traces, out, options, nullptr, always_first), ConfigError);
}

TEST_CASE("train-toy writes a log and a policy") {
  Workdir w;
  cli::TrainToyOptions options;
  options.config.steps = 0;
  options.log_path = w.root / "log.jsonl";
  options.policy_path = w.root / "policy.json";
  CHECK(cli::run_train_toy(options) == cli::kExitOk);
  CHECK(std::filesystem::file_size(options.log_path) == 0);
  std::ifstream in(*options.policy_path);
  const TabularPolicy p = io::policy_from_json(json::parse(in));
  CHECK(p == toy::initial_policy(options.config.init, options.config.seed));

  options.config.steps = 5;
  options.config.seed = 7;
  CHECK(cli::run_train_toy(options) == cli::kExitOk);
  const std::string first = testing::read_file(options.log_path);
  CHECK(parse_lines(first).size() == 5);
  cli::run_train_toy(options);
  CHECK(testing::read_file(options.log_path) == first);
}
