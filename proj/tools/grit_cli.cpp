// grit: command-line front end for trace parsing, reward scoring, evaluation
// and the toy GRPO trainer.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grit/commands.hpp"
#include "grit/io.hpp"
#include "grit/judge.hpp"
#include "grit/metrics.hpp"
#include "grit/reward.hpp"
#include "grit/toy_env.hpp"
#include "grit/trace.hpp"

namespace {

using nlohmann::json;

struct JudgeFlags {
  std::string mode = "rule";
  std::string url;
  int timeout_ms = 30000;
  int retries = 3;
};

class FatalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::shared_ptr<grit::RemoteJudgeClient> make_remote_client(const JudgeFlags& f) {
  if (f.url.empty()) {
    throw FatalError("--judge remote needs --judge-url (e.g. http://localhost:8080/judge)");
  }
  const char* key = std::getenv(std::string(grit::kJudgeApiKeyEnv).c_str());
  if (key == nullptr || *key == '\0') {
    throw FatalError("--judge remote needs the JUDGE_API_KEY environment variable");
  }
  grit::RemoteJudgeConfig config;
  config.url = f.url;
  config.api_key = key;
  return std::make_shared<grit::RemoteJudgeClient>(config);
}

grit::JudgeRequest request_template(const JudgeFlags& f) {
  grit::JudgeRequest r;
  r.max_retries = f.retries;
  r.timeout = std::chrono::milliseconds(f.timeout_ms);
  return r;
}

std::unique_ptr<grit::AnswerJudge> make_answer_judge(const JudgeFlags& f) {
  if (f.mode == "remote") {
    return std::make_unique<grit::RemoteAnswerJudge>(make_remote_client(f),
                                                     request_template(f));
  }
  return std::make_unique<grit::RuleAnswerJudge>();
}

json trace_to_json(const grit::GroundedTrace& t) {
  json j;
  auto opt = [](const std::optional<std::string>& s) {
    return s ? json(*s) : json(nullptr);
  };
  j["think"] = opt(t.think_segment);
  j["rethink"] = opt(t.rethink_segment);
  j["answer"] = opt(t.answer_segment);
  j["boxes"] = json::array();
  for (const auto& b : t.boxes) {
    j["boxes"].push_back({{"box", {b.box.x1, b.box.y1, b.box.x2, b.box.y2}},
                          {"span", {b.span.begin, b.span.end}},
                          {"degenerate", b.box.is_degenerate()}});
  }
  j["token_report"] = {{"think_pair_ok", t.token_report.think_pair_ok},
                       {"rethink_pair_ok", t.token_report.rethink_pair_ok},
                       {"pairs_ordered_ok", t.token_report.pairs_ordered_ok},
                       {"answer_marker_present",
                        t.token_report.answer_marker_present}};
  j["overflow_skipped"] = t.overflow_skipped;
  j["masked"] = grit::mask_coordinates(t.raw_text);
  return j;
}

// Output goes to the named file, or stdout when the name is empty or "-".
class OutputSink {
 public:
  explicit OutputSink(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw FatalError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

bool on_off(const std::string& v) { return v == "on"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grounded-reasoning trace parsing, GRPO-GR rewards and evaluation"};
  app.set_config("--config", "", "TOML/INI file with default flag values");
  app.require_subcommand(1);
  app.fallthrough();

  JudgeFlags judge_flags;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--judge", judge_flags.mode, "Answer judge")
      ->check(CLI::IsMember({"rule", "remote"}))
      ->capture_default_str();
  app.add_option("--judge-url", judge_flags.url, "Remote judge endpoint");
  app.add_option("--judge-timeout-ms", judge_flags.timeout_ms)->capture_default_str();
  app.add_option("--judge-retries", judge_flags.retries)
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads for corpus commands")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // parse
  auto* parse = app.add_subcommand("parse", "Parse grounded-reasoning traces");
  std::string parse_text, parse_file, parse_traces;
  bool emit_suffix = false;
  parse->add_option("--text", parse_text, "Trace text");
  parse->add_option("--file", parse_file, "File holding one trace");
  parse->add_option("--traces", parse_traces, "traces.jsonl to parse line by line");
  parse->add_flag("--emit-prompt-suffix", emit_suffix,
                  "Print the grounded-reasoning prompt suffix and exit");

  // score
  auto* score = app.add_subcommand("score", "Compute GRPO-GR rewards for traces");
  std::string samples_path, traces_path, out_path;
  std::string counting = "on";
  double bleu_weight = 0.1;
  score->add_option("--samples", samples_path)->required();
  score->add_option("--traces", traces_path)->required();
  score->add_option("--out", out_path, "scores.jsonl (default stdout)");
  score->add_option("--counting-reward", counting)
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  score->add_option("--bleu-weight", bleu_weight)
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate traces: ACC, GIoU, correlation");
  std::vector<std::string> metrics{"acc", "giou"};
  std::size_t repeats = 3;
  std::string correlation_judge = "remote";
  eval->add_option("--samples", samples_path)->required();
  eval->add_option("--traces", traces_path)->required();
  eval->add_option("--out", out_path, "report.jsonl (default stdout)");
  eval->add_option("--metrics", metrics, "Any of acc, giou, correlation")
      ->delimiter(',')
      ->check(CLI::IsMember({"acc", "giou", "correlation"}))
      ->capture_default_str();
  eval->add_option("--repeats", repeats, "Correlation repeats")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval->add_option("--correlation-judge", correlation_judge,
                   "remote, or always-first / oracle for harness checks")
      ->check(CLI::IsMember({"remote", "always-first", "oracle"}))
      ->capture_default_str();

  // train-toy
  auto* train = app.add_subcommand("train-toy", "Train the tabular toy policy with GRPO-GR");
  grit::cli::TrainToyOptions train_opts;
  std::string log_path = "train_log.jsonl";
  std::string policy_path;
  std::string train_counting = "on";
  auto& tc = train_opts.config;
  train->add_option("--steps", tc.steps)->capture_default_str();
  train->add_option("--group-size", tc.grpo.group_size)->capture_default_str();
  train->add_option("--epsilon", tc.grpo.epsilon)->capture_default_str();
  train->add_option("--beta", tc.grpo.beta)->capture_default_str();
  train->add_option("--lr", tc.grpo.learning_rate)->capture_default_str();
  train->add_option("--tasks-per-step", tc.tasks_per_step)->capture_default_str();
  train->add_option("--refresh-interval", tc.old_refresh_interval,
                    "Steps between sampling-policy refreshes")
      ->capture_default_str();
  train->add_option("--counting-reward", train_counting)
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  train->add_option("--log", log_path, "Training log (JSON Lines)")->capture_default_str();
  train->add_option("--policy-out", policy_path, "Final policy file (JSON)");

  // judge-answer
  auto* judge_answer = app.add_subcommand("judge-answer", "Single judge call for debugging");
  std::string question, predicted, gt;
  judge_answer->add_option("--question", question)->required();
  judge_answer->add_option("--predicted", predicted)->required();
  judge_answer->add_option("--gt", gt)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*parse) {
      if (emit_suffix) {
        std::cout << grit::grounded_prompt_suffix() << '\n';
        return grit::cli::kExitOk;
      }
      if (!parse_traces.empty()) {
        for (const auto& t : grit::io::read_jsonl<grit::io::TraceRecord>(parse_traces)) {
          json j = trace_to_json(grit::parse_trace(t.text));
          j["id"] = t.id;
          grit::io::write_jsonl(std::cout, j);
        }
        return grit::cli::kExitOk;
      }
      std::string text = parse_text;
      if (!parse_file.empty()) {
        std::ifstream in(parse_file, std::ios::binary);
        if (!in) throw FatalError("cannot open " + parse_file);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
      } else if (parse_text.empty()) {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        text = ss.str();
      }
      std::cout << trace_to_json(grit::parse_trace(text)).dump(2) << '\n';
      return grit::cli::kExitOk;
    }

    if (*score) {
      grit::cli::ScoreOptions opts;
      opts.reward.counting_reward_enabled = on_off(counting);
      opts.reward.bleu_weight = bleu_weight;
      opts.reward.judge_mode = judge_flags.mode == "remote" ? grit::JudgeMode::kRemote
                                                            : grit::JudgeMode::kRule;
      opts.jobs = jobs;
      auto judge = make_answer_judge(judge_flags);
      OutputSink sink(out_path);
      return grit::cli::run_score(samples_path, traces_path, sink.stream(), opts, *judge);
    }

    if (*eval) {
      grit::cli::EvalOptions opts;
      auto has = [&](const char* m) {
        return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
      };
      opts.acc = has("acc");
      opts.giou = has("giou");
      opts.correlation = has("correlation");
      opts.repeats = repeats;
      opts.seed = seed;
      opts.jobs = jobs;

      std::unique_ptr<grit::AnswerJudge> acc_judge;
      if (opts.acc) acc_judge = make_answer_judge(judge_flags);

      grit::cli::CorrelationJudgeFactory factory;
      if (opts.correlation) {
        if (correlation_judge == "remote") {
          if (judge_flags.mode != "remote") {
            throw FatalError(
                "the correlation metric needs a vision-language judge: pass "
                "--judge remote --judge-url URL (and set JUDGE_API_KEY), or drop "
                "correlation from --metrics");
          }
          auto client = make_remote_client(judge_flags);
          const auto tmpl = request_template(judge_flags);
          factory = [client, tmpl](const grit::GroundedTrace&, const grit::RgbImage&) {
            return std::make_unique<grit::RemoteCorrelationJudge>(client, tmpl);
          };
        } else if (correlation_judge == "always-first") {
          factory = [](const grit::GroundedTrace&, const grit::RgbImage&) {
            return std::make_unique<grit::AlwaysFirstJudge>();
          };
        } else {
          const grit::OverlayStyle style = opts.style;
          factory = [style](const grit::GroundedTrace& trace, const grit::RgbImage& image) {
            const auto boxes = grit::clamp_boxes(trace.box_list(), {image.width(), image.height()});
            return std::make_unique<grit::GeometricOracleJudge>(image, boxes, style);
          };
        }
      }
      OutputSink sink(out_path);
      return grit::cli::run_eval(samples_path, traces_path, sink.stream(), opts,
                                 acc_judge.get(), factory);
    }

    if (*train) {
      tc.seed = seed;
      tc.reward.counting_reward_enabled = on_off(train_counting);
      train_opts.log_path = log_path;
      if (!policy_path.empty()) train_opts.policy_path = policy_path;
      tc.grpo.validate();
      return grit::cli::run_train_toy(train_opts);
    }

    if (*judge_answer) {
      auto judge = make_answer_judge(judge_flags);
      const double raw = judge->score(question, predicted, gt);
      std::cout << json{{"score", raw}, {"s_gpt", grit::binarize_judge_score(raw)}}.dump()
                << '\n';
      return grit::cli::kExitOk;
    }
  } catch (const grit::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return grit::cli::kExitPartial;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return grit::cli::kExitFatal;
  }
  return grit::cli::kExitOk;
}
