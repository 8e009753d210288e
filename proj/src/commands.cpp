#include "grit/commands.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "grit/io.hpp"

namespace grit::cli {
namespace {

using io::json;

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// thrown by any task is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::map<std::string, const io::SampleRecord*> index_samples(
    const std::vector<io::SampleRecord>& samples) {
  std::map<std::string, const io::SampleRecord*> by_id;
  for (const auto& s : samples) {
    if (!by_id.emplace(s.id, &s).second) {
      throw io::SchemaError(0, "id", "duplicate sample id \"" + s.id + "\"");
    }
  }
  return by_id;
}

json mean_or_null(double sum, std::size_t count) {
  return count == 0 ? json(nullptr) : json(sum / static_cast<double>(count));
}

RgbImage load_sample_image(const io::SampleRecord& sample,
                           const std::filesystem::path& samples_dir) {
  if (!sample.image_path) {
    return RgbImage(sample.image_width, sample.image_height);
  }
  std::filesystem::path path = *sample.image_path;
  if (path.is_relative()) path = samples_dir / path;
  return load_image(path);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t record,
                          std::uint64_t repeat) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (record * 8 + repeat + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int run_score(const std::filesystem::path& samples_path,
              const std::filesystem::path& traces_path, std::ostream& out,
              const ScoreOptions& options, AnswerJudge& judge) {
  options.reward.validate();
  const auto samples = io::read_jsonl<io::SampleRecord>(samples_path);
  const auto traces = io::read_jsonl<io::TraceRecord>(traces_path);
  const auto by_id = index_samples(samples);

  std::vector<io::ScoreLine> lines(traces.size());
  parallel_for(traces.size(), options.jobs, [&](std::size_t i) {
    const io::TraceRecord& t = traces[i];
    io::ScoreLine& line = lines[i];
    line.trace_id = t.id;
    line.sample_id = t.sample_id;
    const auto it = by_id.find(t.sample_id);
    if (it == by_id.end()) {
      line.kind = io::ScoreLine::Kind::kError;
      line.error = "unknown sample_id \"" + t.sample_id + "\"";
      return;
    }
    const GroundedTrace trace = parse_trace(t.text);
    try {
      line.breakdown =
          total_reward(trace, it->second->target(), options.reward, judge);
      line.box_count = trace.boxes.size();
    } catch (const ParseError& e) {
      line.kind = io::ScoreLine::Kind::kError;
      line.error = e.what();
    }
  });

  std::size_t scored = 0, errors = 0, counted = 0;
  double s_st = 0, s_bf = 0, r_format = 0, r_count = 0, s_bleu = 0, r_ans = 0,
         total = 0;
  for (const auto& line : lines) {
    io::write_jsonl(out, line.to_json());
    if (line.kind == io::ScoreLine::Kind::kError) {
      ++errors;
      continue;
    }
    const RewardBreakdown& b = line.breakdown;
    ++scored;
    s_st += b.s_st;
    s_bf += b.s_bf;
    r_format += b.r_format;
    s_bleu += b.s_bleu;
    r_ans += b.r_ans;
    total += b.total;
    if (b.r_count) {
      ++counted;
      r_count += *b.r_count;
    }
  }
  io::ScoreLine summary;
  summary.kind = io::ScoreLine::Kind::kSummary;
  summary.summary = {{"count", scored},
                     {"errors", errors},
                     {"mean_s_st", mean_or_null(s_st, scored)},
                     {"mean_s_bf", mean_or_null(s_bf, scored)},
                     {"mean_r_format", mean_or_null(r_format, scored)},
                     {"mean_r_count", mean_or_null(r_count, counted)},
                     {"mean_s_bleu", mean_or_null(s_bleu, scored)},
                     {"mean_r_ans", mean_or_null(r_ans, scored)},
                     {"mean_total", mean_or_null(total, scored)}};
  io::write_jsonl(out, summary.to_json());
  return errors == 0 ? kExitOk : kExitPartial;
}

int run_eval(const std::filesystem::path& samples_path,
             const std::filesystem::path& traces_path, std::ostream& out,
             const EvalOptions& options, AnswerJudge* acc_judge,
             const CorrelationJudgeFactory& correlation_judges) {
  if (options.acc && acc_judge == nullptr) {
    throw ConfigError("acc metric needs an answer judge");
  }
  if (options.correlation && !correlation_judges) {
    throw ConfigError("correlation metric needs a correlation judge");
  }
  const auto samples = io::read_jsonl<io::SampleRecord>(samples_path);
  const auto traces = io::read_jsonl<io::TraceRecord>(traces_path);
  const auto by_id = index_samples(samples);
  const std::filesystem::path samples_dir = samples_path.parent_path();

  std::vector<io::ReportLine> lines(traces.size());
  parallel_for(traces.size(), options.jobs, [&](std::size_t i) {
    const io::TraceRecord& t = traces[i];
    io::ReportLine& line = lines[i];
    line.record.sample_id = t.sample_id;
    line.record.trace_id = t.id;
    const auto it = by_id.find(t.sample_id);
    try {
      if (it == by_id.end()) {
        throw std::invalid_argument("unknown sample_id \"" + t.sample_id + "\"");
      }
      const io::SampleRecord& sample = *it->second;
      const GroundedTrace trace = parse_trace(t.text);
      io::EvalRecord& r = line.record;
      if (options.acc) {
        r.acc_score = std::clamp(
            acc_judge->score(sample.question, trace.answer_or_empty(),
                             sample.answer),
            0.0, 1.0);
      }
      if (options.giou && sample.gt_boxes && !sample.gt_boxes->empty()) {
        r.giou = grounding_iou(trace.box_list(), *sample.gt_boxes,
                               {sample.image_width, sample.image_height});
      }
      if (options.correlation) {
        if (trace.boxes.empty()) {
          r.correlation_skipped = true;
        } else {
          const RgbImage image = load_sample_image(sample, samples_dir);
          auto judge = correlation_judges(trace, image);
          for (std::size_t rep = 0; rep < options.repeats; ++rep) {
            std::mt19937_64 rng(derive_seed(options.seed, i, rep));
            const auto outcome =
                correlation_trial(trace, image, *judge, rng, options.style);
            r.correlation_hits.push_back(*outcome.hit);
          }
        }
      }
    } catch (const ParseError& e) {
      line.kind = io::ReportLine::Kind::kError;
      line.error = e.what();
    } catch (const std::invalid_argument& e) {
      line.kind = io::ReportLine::Kind::kError;
      line.error = e.what();
    } catch (const ImageError& e) {
      line.kind = io::ReportLine::Kind::kError;
      line.error = e.what();
    }
  });

  std::size_t records = 0, errors = 0, acc_n = 0, giou_n = 0, skipped = 0;
  double acc_sum = 0, giou_sum = 0;
  std::vector<std::vector<int>> hits;
  for (const auto& line : lines) {
    io::write_jsonl(out, line.to_json());
    if (line.kind == io::ReportLine::Kind::kError) {
      ++errors;
      continue;
    }
    ++records;
    const io::EvalRecord& r = line.record;
    if (r.acc_score) {
      ++acc_n;
      acc_sum += *r.acc_score;
    }
    if (r.giou) {
      ++giou_n;
      giou_sum += *r.giou;
    }
    if (r.correlation_skipped) ++skipped;
    hits.push_back(r.correlation_hits);
  }
  json summary = {{"records", records},
                  {"errors", errors},
                  {"mean_acc", mean_or_null(acc_sum, acc_n)},
                  {"mean_giou", mean_or_null(giou_sum, giou_n)},
                  {"giou_count", giou_n}};
  if (options.correlation) {
    const bool any = std::any_of(hits.begin(), hits.end(),
                                 [](const auto& h) { return !h.empty(); });
    if (any) {
      const CorrelationSummary c = aggregate_correlation(hits, options.repeats);
      summary["correlation_mean"] = c.mean;
      summary["correlation_std"] = c.std;
    } else {
      summary["correlation_mean"] = nullptr;
      summary["correlation_std"] = nullptr;
    }
    summary["correlation_repeats"] = options.repeats;
    summary["correlation_skipped"] = skipped;
  }
  io::ReportLine summary_line;
  summary_line.kind = io::ReportLine::Kind::kSummary;
  summary_line.summary = std::move(summary);
  io::write_jsonl(out, summary_line.to_json());
  return errors == 0 ? kExitOk : kExitPartial;
}

int run_train_toy(const TrainToyOptions& options) {
  const toy::TrainResult result = toy::train(options.config);
  {
    std::ofstream log(options.log_path);
    if (!log) throw io::IoError("cannot write " + options.log_path.string());
    for (const auto& record : result.log.records) {
      io::write_jsonl(log, io::to_json(record));
    }
  }
  if (options.policy_path) {
    std::ofstream policy(*options.policy_path);
    if (!policy) {
      throw io::IoError("cannot write " + options.policy_path->string());
    }
    policy << io::policy_to_json(result.policy, &options.config,
                                 result.log.records.size())
                  .dump(1)
           << '\n';
  }
  return kExitOk;
}

}  // namespace grit::cli
