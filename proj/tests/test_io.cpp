#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "grit/io.hpp"
#include "grit/toy_env.hpp"

using namespace grit;
using io::json;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("grit_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kSample =
    R"({"id": "s1", "image_width": 640, "image_height": 480, "question": "How many?", "answer": "2", "gt_boxes": [[10, 10, 0, 0], [5, 5, 9, 9]], "gt_count": 2, "source": "unit"})";

}  // namespace

TEST_CASE("sample records parse with passthrough fields") {
  TempDir dir;
  write(dir.file("s.jsonl"), std::string(kSample) + "\n\n" +
                                 R"({"id": 7, "image_width": 10, "image_height": 10, "question": "q", "answer": "a", "task_type": "relation"})" +
                                 "\n");
  const auto samples = io::read_jsonl<io::SampleRecord>(dir.file("s.jsonl"));
  REQUIRE(samples.size() == 2);
  const auto& s = samples[0];
  CHECK(s.id == "s1");
  CHECK(s.task_type == io::TaskType::kCounting);
  CHECK(s.gt_count == 2u);
  REQUIRE(s.gt_boxes.has_value());
  CHECK((*s.gt_boxes)[0] == BoundingBox{0, 0, 10, 10});
  CHECK(s.extra["source"] == "unit");
  CHECK(s.to_json()["source"] == "unit");
  CHECK(samples[1].id == "7");
  CHECK(samples[1].task_type == io::TaskType::kRelation);
  CHECK_FALSE(samples[1].gt_count.has_value());

  const auto again = io::SampleRecord::from_json(s.to_json());
  CHECK(again.to_json() == s.to_json());
}

TEST_CASE("schema errors carry line numbers and fields") {
  TempDir dir;
  write(dir.file("bad.jsonl"),
        std::string(kSample) + "\n" +
            R"({"id": "s2", "image_width": 1, "image_height": 1, "answer": "a"})" + "\n");
  try {
    io::read_jsonl<io::SampleRecord>(dir.file("bad.jsonl"));
    FAIL("expected a schema error");
  } catch (const io::SchemaError& e) {
    CHECK(e.line() == 2);
    CHECK(e.field() == "question");
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("question") != std::string::npos);
  }

  write(dir.file("junk.jsonl"), "{\"id\": 1}\nnot json\n");
  try {
    io::read_jsonl<io::TraceRecord>(dir.file("junk.jsonl"));
    FAIL("expected a schema error");
  } catch (const io::SchemaError& e) {
    CHECK(e.line() == 1);
  }

  const auto bad = [](const char* text) {
    return io::SampleRecord::from_json(json::parse(text));
  };
  CHECK_THROWS_AS(bad(R"({"id": "x", "image_width": 0, "image_height": 5, "question": "q", "answer": "a"})"),
                  io::SchemaError);
  CHECK_THROWS_AS(bad(R"({"id": "x", "image_width": 5, "image_height": 5, "question": "q", "answer": "a", "gt_count": 2, "task_type": "other"})"),
                  io::SchemaError);
  CHECK_THROWS_AS(bad(R"({"id": "x", "image_width": 5, "image_height": 5, "question": "q", "answer": "a", "gt_boxes": [[1, 2, 3]]})"),
                  io::SchemaError);
  CHECK_THROWS_AS(bad(R"({"id": "x", "image_width": 5, "image_height": 5, "question": "q", "answer": "a", "gt_count": -1})"),
                  io::SchemaError);
  CHECK_THROWS_AS(io::read_jsonl<io::SampleRecord>(dir.file("missing.jsonl")), io::IoError);
}

TEST_CASE("score and report lines round-trip") {
  RewardBreakdown b;
  b.s_st = 1.0;
  b.s_bf = 0.5;
  b.r_format = 1.5;
  b.r_count = 0.5;
  b.s_gpt = 1.0;
  b.s_bleu = 1.0;
  b.r_ans = 1.1;
  b.total = 3.1;
  b.judge_raw = 1.0;

  io::ScoreLine score;
  score.trace_id = "t1";
  score.sample_id = "s1";
  score.breakdown = b;
  score.box_count = 7;
  const auto back = io::ScoreLine::from_json(json::parse(score.to_json().dump()));
  CHECK(back.kind == io::ScoreLine::Kind::kScore);
  CHECK(back.breakdown.total == 3.1);
  CHECK(back.breakdown.r_count == 0.5);
  CHECK(back.box_count == 7);
  CHECK(back.to_json() == score.to_json());

  io::ScoreLine error;
  error.kind = io::ScoreLine::Kind::kError;
  error.trace_id = "t2";
  error.sample_id = "nope";
  error.error = "unknown sample";
  CHECK(io::ScoreLine::from_json(error.to_json()).kind == io::ScoreLine::Kind::kError);

  io::ScoreLine summary;
  summary.kind = io::ScoreLine::Kind::kSummary;
  summary.summary = {{"count", 1}};
  CHECK(io::ScoreLine::from_json(summary.to_json()).summary["count"] == 1);

  io::ReportLine report;
  report.record = {"s1", "t1", 0.75, 0.5, {1, 0, 1}, false};
  const auto r = io::ReportLine::from_json(json::parse(report.to_json().dump()));
  CHECK(r.record.acc_score == 0.75);
  CHECK(r.record.giou == 0.5);
  CHECK(r.record.correlation_hits == std::vector<int>{1, 0, 1});
  CHECK(r.to_json() == report.to_json());
}

TEST_CASE("training records round-trip") {
  toy::TrainingRecord rec;
  rec.step = 3;
  rec.mean_r_format = 0.1 + 0.2;
  rec.mean_r_count = 0.25;
  rec.mean_r_ans = 1.0 / 3.0;
  rec.mean_total = 2.0 / 3.0;
  rec.objective = -1e-17;
  rec.kl = 0.125;
  CHECK(io::training_record_from_json(json::parse(io::to_json(rec).dump())) == rec);
}

TEST_CASE("policy files round-trip bit-exactly") {
  TabularPolicy p(toy::kStateCount, toy::vocab::kSize);
  for (std::size_t i = 0; i < p.logits().size(); ++i) {
    p.logits()[i] = std::sin(static_cast<double>(i)) * 1e3 / 7.0;
  }
  p.logits()[5] = -0.0;
  toy::TrainConfig config;
  const json j = io::policy_to_json(p, &config, 12);
  CHECK(j["format"] == io::kPolicyFormat);
  CHECK(j["vocabulary"].size() == toy::vocab::kSize);
  CHECK(j["vocabulary"][0] == "<think>");
  CHECK(j["training"]["steps_run"] == 12);
  const TabularPolicy back = io::policy_from_json(json::parse(j.dump()));
  CHECK(back == p);
  CHECK(std::signbit(back.logits()[5]));

  json wrong = j;
  wrong["version"] = 99;
  CHECK_THROWS_AS(io::policy_from_json(wrong), io::SchemaError);
  wrong = j;
  wrong["logits"][0] = "zz";
  CHECK_THROWS_AS(io::policy_from_json(wrong), io::SchemaError);
}
