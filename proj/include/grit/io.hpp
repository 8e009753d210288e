#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grit/grpo.hpp"
#include "grit/reward.hpp"
#include "grit/toy_env.hpp"
#include "grit/trace.hpp"

namespace grit::io {

using nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A record violated its schema. line is 1-based; 0 when not read from a file.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::size_t line, std::string field, std::string detail);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string field_;
  std::string detail_;
};

enum class TaskType { kCounting, kRelation, kOther };
std::string to_string(TaskType t);

struct SampleRecord {
  std::string id;
  std::optional<std::string> image_path;
  int image_width = 0;
  int image_height = 0;
  std::string question;
  std::string answer;
  std::optional<std::vector<BoundingBox>> gt_boxes;
  std::optional<std::size_t> gt_count;
  TaskType task_type = TaskType::kOther;
  json extra = json::object();  // fields this schema does not know

  RewardTarget target() const { return {question, answer, gt_count}; }
  static SampleRecord from_json(const json& j);
  json to_json() const;
};

struct TraceRecord {
  std::string id;
  std::string sample_id;
  std::string text;
  json extra = json::object();

  static TraceRecord from_json(const json& j);
  json to_json() const;
};

// One line of scores.jsonl: a reward breakdown, a per-record error, or the
// trailing corpus summary.
struct ScoreLine {
  enum class Kind { kScore, kError, kSummary };
  Kind kind = Kind::kScore;
  std::string trace_id;
  std::string sample_id;
  RewardBreakdown breakdown;
  std::size_t box_count = 0;
  std::string error;
  json summary = json::object();

  static ScoreLine from_json(const json& j);
  json to_json() const;
};

struct EvalRecord {
  std::string sample_id;
  std::string trace_id;
  std::optional<double> acc_score;
  std::optional<double> giou;
  std::vector<int> correlation_hits;
  bool correlation_skipped = false;
};

// One line of report.jsonl.
struct ReportLine {
  enum class Kind { kRecord, kError, kSummary };
  Kind kind = Kind::kRecord;
  EvalRecord record;
  std::string error;
  json summary = json::object();

  static ReportLine from_json(const json& j);
  json to_json() const;
};

json to_json(const RewardBreakdown& b);
RewardBreakdown breakdown_from_json(const json& j);

json to_json(const toy::TrainingRecord& r);
toy::TrainingRecord training_record_from_json(const json& j);

// Tabular policy file: versioned JSON whose logits are stored as IEEE-754 bit
// patterns (16 hex digits each) so they round-trip exactly.
inline constexpr const char* kPolicyFormat = "grit.tabular_policy";
inline constexpr int kPolicyVersion = 1;
json policy_to_json(const TabularPolicy& policy,
                    const toy::TrainConfig* config = nullptr,
                    std::size_t steps_run = 0);
TabularPolicy policy_from_json(const json& j);

json to_json(const toy::TrainConfig& config);

// Reads one JSON object per non-blank line and converts it with
// Record::from_json. Errors carry the 1-based line number.
template <typename Record>
std::vector<Record> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw SchemaError(number, "", "line is not a JSON object");
    }
    try {
      out.push_back(Record::from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError(number, e.field(), e.detail());
    }
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return out;
}

void write_jsonl(std::ostream& out, const json& record);

}  // namespace grit::io
