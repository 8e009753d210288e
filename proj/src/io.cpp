#include "grit/io.hpp"

#include <bit>
#include <cstdio>
#include <initializer_list>
#include <ostream>

namespace grit::io {
namespace {

std::string format_schema_message(std::size_t line, const std::string& field,
                                  const std::string& detail) {
  std::string msg;
  if (line > 0) msg += "line " + std::to_string(line) + ": ";
  if (!field.empty()) msg += "field \"" + field + "\": ";
  return msg + detail;
}

const json& require(const json& j, const char* field) {
  const auto it = j.find(field);
  if (it == j.end() || it->is_null()) {
    throw SchemaError(0, field, "missing required field");
  }
  return *it;
}

std::string require_string(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_string()) throw SchemaError(0, field, "expected a string");
  return v.get<std::string>();
}

// Ids may be written as strings or integers.
std::string require_id(const json& j, const char* field) {
  const json& v = require(j, field);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.dump();
  throw SchemaError(0, field, "expected a string or integer id");
}

double require_number(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number()) throw SchemaError(0, field, "expected a number");
  return v.get<double>();
}

std::optional<double> optional_number(const json& j, const char* field) {
  const auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw SchemaError(0, field, "expected a number");
  return it->get<double>();
}

int64_t require_integer(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number_integer()) throw SchemaError(0, field, "expected an integer");
  return v.get<int64_t>();
}

json without(const json& j, std::initializer_list<const char*> known) {
  json extra = json::object();
  for (const auto& [key, value] : j.items()) {
    bool is_known = false;
    for (const char* k : known) is_known = is_known || key == k;
    if (!is_known) extra[key] = value;
  }
  return extra;
}

void merge_extra(json& out, const json& extra) {
  for (const auto& [key, value] : extra.items()) {
    if (!out.contains(key)) out[key] = value;
  }
}

TaskType parse_task_type(const std::string& s) {
  if (s == "counting") return TaskType::kCounting;
  if (s == "relation") return TaskType::kRelation;
  if (s == "other") return TaskType::kOther;
  throw SchemaError(0, "task_type", "expected counting, relation or other");
}

BoundingBox box_from_json(const json& v, const char* field) {
  if (!v.is_array() || v.size() != 4) {
    throw SchemaError(0, field, "boxes are [x1, y1, x2, y2] arrays");
  }
  std::array<int32_t, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number_integer()) {
      throw SchemaError(0, field, "box coordinates must be integers");
    }
    const auto value = v[i].get<int64_t>();
    if (value < INT32_MIN || value > INT32_MAX) {
      throw SchemaError(0, field, "box coordinate out of 32-bit range");
    }
    c[i] = static_cast<int32_t>(value);
  }
  return BoundingBox::from_corners(c[0], c[1], c[2], c[3]);
}

json box_to_json(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

std::string bits_hex(double v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<uint64_t>(v)));
  return buf;
}

double hex_bits(const std::string& s) {
  if (s.size() != 16) throw SchemaError(0, "logits", "expected 16 hex digits");
  std::size_t used = 0;
  uint64_t bits = 0;
  try {
    bits = std::stoull(s, &used, 16);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != 16) throw SchemaError(0, "logits", "malformed hex logit");
  return std::bit_cast<double>(bits);
}

}  // namespace

SchemaError::SchemaError(std::size_t line, std::string field,
                         std::string detail)
    : std::runtime_error(format_schema_message(line, field, detail)),
      line_(line),
      field_(std::move(field)),
      detail_(std::move(detail)) {}

std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::kCounting:
      return "counting";
    case TaskType::kRelation:
      return "relation";
    case TaskType::kOther:
      return "other";
  }
  return "other";
}

SampleRecord SampleRecord::from_json(const json& j) {
  SampleRecord r;
  r.id = require_id(j, "id");
  if (const auto it = j.find("image_path"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError(0, "image_path", "expected a string");
    r.image_path = it->get<std::string>();
  }
  const int64_t w = require_integer(j, "image_width");
  const int64_t h = require_integer(j, "image_height");
  if (w <= 0 || h <= 0 || w > INT32_MAX || h > INT32_MAX) {
    throw SchemaError(0, w <= 0 || w > INT32_MAX ? "image_width" : "image_height",
                      "image dimensions must be positive");
  }
  r.image_width = static_cast<int>(w);
  r.image_height = static_cast<int>(h);
  r.question = require_string(j, "question");
  r.answer = require_string(j, "answer");
  if (const auto it = j.find("gt_boxes"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError(0, "gt_boxes", "expected an array");
    std::vector<BoundingBox> boxes;
    for (const auto& b : *it) boxes.push_back(box_from_json(b, "gt_boxes"));
    r.gt_boxes = std::move(boxes);
  }
  if (const auto it = j.find("gt_count"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<int64_t>() < 0) {
      throw SchemaError(0, "gt_count", "expected a non-negative integer");
    }
    r.gt_count = it->get<std::size_t>();
  }
  if (const auto it = j.find("task_type"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError(0, "task_type", "expected a string");
    r.task_type = parse_task_type(it->get<std::string>());
  } else if (r.gt_count) {
    r.task_type = TaskType::kCounting;
  }
  if (r.gt_count && r.task_type != TaskType::kCounting) {
    throw SchemaError(0, "gt_count", "gt_count requires task_type \"counting\"");
  }
  r.extra = without(j, {"id", "image_path", "image_width", "image_height",
                        "question", "answer", "gt_boxes", "gt_count",
                        "task_type"});
  return r;
}

json SampleRecord::to_json() const {
  json j;
  j["id"] = id;
  if (image_path) j["image_path"] = *image_path;
  j["image_width"] = image_width;
  j["image_height"] = image_height;
  j["question"] = question;
  j["answer"] = answer;
  if (gt_boxes) {
    j["gt_boxes"] = json::array();
    for (const auto& b : *gt_boxes) j["gt_boxes"].push_back(box_to_json(b));
  }
  if (gt_count) j["gt_count"] = *gt_count;
  j["task_type"] = to_string(task_type);
  merge_extra(j, extra);
  return j;
}

TraceRecord TraceRecord::from_json(const json& j) {
  TraceRecord r;
  r.id = require_id(j, "id");
  r.sample_id = require_id(j, "sample_id");
  r.text = require_string(j, "text");
  r.extra = without(j, {"id", "sample_id", "text"});
  return r;
}

json TraceRecord::to_json() const {
  json j{{"id", id}, {"sample_id", sample_id}, {"text", text}};
  merge_extra(j, extra);
  return j;
}

json to_json(const RewardBreakdown& b) {
  json j;
  j["s_st"] = b.s_st;
  j["s_bf"] = b.s_bf;
  j["r_format"] = b.r_format;
  if (b.r_count) j["r_count"] = *b.r_count;
  if (b.s_gpt) j["s_gpt"] = *b.s_gpt;
  j["s_bleu"] = b.s_bleu;
  j["r_ans"] = b.r_ans;
  j["total"] = b.total;
  if (b.judge_raw) j["judge_raw"] = *b.judge_raw;
  return j;
}

RewardBreakdown breakdown_from_json(const json& j) {
  RewardBreakdown b;
  b.s_st = require_number(j, "s_st");
  b.s_bf = require_number(j, "s_bf");
  b.r_format = require_number(j, "r_format");
  b.r_count = optional_number(j, "r_count");
  b.s_gpt = optional_number(j, "s_gpt");
  b.s_bleu = require_number(j, "s_bleu");
  b.r_ans = require_number(j, "r_ans");
  b.total = require_number(j, "total");
  b.judge_raw = optional_number(j, "judge_raw");
  return b;
}

ScoreLine ScoreLine::from_json(const json& j) {
  ScoreLine line;
  if (const auto it = j.find("summary"); it != j.end()) {
    if (!it->is_object()) throw SchemaError(0, "summary", "expected an object");
    line.kind = Kind::kSummary;
    line.summary = *it;
    return line;
  }
  line.trace_id = require_id(j, "trace_id");
  line.sample_id = require_id(j, "sample_id");
  if (j.contains("error")) {
    line.kind = Kind::kError;
    line.error = require_string(j, "error");
    return line;
  }
  line.kind = Kind::kScore;
  line.breakdown = breakdown_from_json(j);
  const int64_t boxes = require_integer(j, "boxes");
  if (boxes < 0) throw SchemaError(0, "boxes", "expected a non-negative count");
  line.box_count = static_cast<std::size_t>(boxes);
  return line;
}

json ScoreLine::to_json() const {
  if (kind == Kind::kSummary) return json{{"summary", summary}};
  json j{{"trace_id", trace_id}, {"sample_id", sample_id}};
  if (kind == Kind::kError) {
    j["error"] = error;
    return j;
  }
  j.update(io::to_json(breakdown));
  j["boxes"] = box_count;
  return j;
}

ReportLine ReportLine::from_json(const json& j) {
  ReportLine line;
  if (const auto it = j.find("summary"); it != j.end()) {
    if (!it->is_object()) throw SchemaError(0, "summary", "expected an object");
    line.kind = Kind::kSummary;
    line.summary = *it;
    return line;
  }
  line.record.sample_id = require_id(j, "sample_id");
  if (j.contains("trace_id")) line.record.trace_id = require_id(j, "trace_id");
  if (j.contains("error")) {
    line.kind = Kind::kError;
    line.error = require_string(j, "error");
    return line;
  }
  EvalRecord& r = line.record;
  r.acc_score = optional_number(j, "acc_score");
  r.giou = optional_number(j, "giou");
  if (const auto it = j.find("correlation_hits"); it != j.end()) {
    if (!it->is_array()) {
      throw SchemaError(0, "correlation_hits", "expected an array");
    }
    for (const auto& h : *it) {
      if (!h.is_number_integer() || (h.get<int>() != 0 && h.get<int>() != 1)) {
        throw SchemaError(0, "correlation_hits", "hits are 0 or 1");
      }
      r.correlation_hits.push_back(h.get<int>());
    }
  }
  if (const auto it = j.find("correlation_skipped"); it != j.end()) {
    if (!it->is_boolean()) {
      throw SchemaError(0, "correlation_skipped", "expected a boolean");
    }
    r.correlation_skipped = it->get<bool>();
  }
  return line;
}

json ReportLine::to_json() const {
  if (kind == Kind::kSummary) return json{{"summary", summary}};
  json j{{"sample_id", record.sample_id}, {"trace_id", record.trace_id}};
  if (kind == Kind::kError) {
    j["error"] = error;
    return j;
  }
  if (record.acc_score) j["acc_score"] = *record.acc_score;
  if (record.giou) j["giou"] = *record.giou;
  j["correlation_hits"] = record.correlation_hits;
  if (record.correlation_skipped) j["correlation_skipped"] = true;
  return j;
}

json to_json(const toy::TrainingRecord& r) {
  json j;
  j["step"] = r.step;
  j["mean_r_format"] = r.mean_r_format;
  if (r.mean_r_count) j["mean_r_count"] = *r.mean_r_count;
  j["mean_r_ans"] = r.mean_r_ans;
  j["mean_total"] = r.mean_total;
  j["objective"] = r.objective;
  j["kl"] = r.kl;
  return j;
}

toy::TrainingRecord training_record_from_json(const json& j) {
  toy::TrainingRecord r;
  const int64_t step = require_integer(j, "step");
  if (step < 0) throw SchemaError(0, "step", "expected a non-negative step");
  r.step = static_cast<std::size_t>(step);
  r.mean_r_format = require_number(j, "mean_r_format");
  r.mean_r_count = optional_number(j, "mean_r_count");
  r.mean_r_ans = require_number(j, "mean_r_ans");
  r.mean_total = require_number(j, "mean_total");
  r.objective = require_number(j, "objective");
  r.kl = require_number(j, "kl");
  return r;
}

json to_json(const toy::TrainConfig& c) {
  json j;
  j["epsilon"] = c.grpo.epsilon;
  j["beta"] = c.grpo.beta;
  j["delta"] = c.grpo.delta;
  j["group_size"] = c.grpo.group_size;
  j["learning_rate"] = c.grpo.learning_rate;
  j["std"] = c.grpo.std_kind == StdKind::kPopulation ? "population" : "sample";
  j["counting_reward"] = c.reward.counting_reward_enabled;
  j["bleu_weight"] = c.reward.bleu_weight;
  j["init"] = {{"tag_logit", c.init.tag_logit},
               {"cell_logit", c.init.cell_logit},
               {"filler_logit", c.init.filler_logit},
               {"eos_logit", c.init.eos_logit},
               {"noise_std", c.init.noise_std},
               {"order_bonus", c.init.order_bonus},
               {"order_width", c.init.order_width}};
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["tasks_per_step"] = c.tasks_per_step;
  j["max_len"] = c.max_len;
  j["old_refresh_interval"] = c.old_refresh_interval;
  return j;
}

json policy_to_json(const TabularPolicy& policy, const toy::TrainConfig* config,
                    std::size_t steps_run) {
  json j;
  j["format"] = kPolicyFormat;
  j["version"] = kPolicyVersion;
  j["state_count"] = policy.state_count();
  j["vocab_size"] = policy.vocab_size();
  if (policy.vocab_size() == toy::vocab::kSize) {
    json names = json::array();
    for (TokenId t = 0; t < toy::vocab::kSize; ++t) names.push_back(toy::vocab::name(t));
    j["vocabulary"] = std::move(names);
  }
  json bits = json::array();
  for (const double v : policy.logits()) bits.push_back(bits_hex(v));
  j["logits"] = std::move(bits);
  if (config != nullptr) {
    j["training"] = {{"config", to_json(*config)}, {"steps_run", steps_run}};
  }
  return j;
}

TabularPolicy policy_from_json(const json& j) {
  if (require_string(j, "format") != kPolicyFormat) {
    throw SchemaError(0, "format", "not a tabular policy file");
  }
  if (require_integer(j, "version") != kPolicyVersion) {
    throw SchemaError(0, "version", "unsupported policy file version");
  }
  const int64_t states = require_integer(j, "state_count");
  const int64_t vocab = require_integer(j, "vocab_size");
  if (states <= 0 || vocab <= 0) {
    throw SchemaError(0, "state_count", "table dimensions must be positive");
  }
  const json& logits = require(j, "logits");
  if (!logits.is_array() ||
      logits.size() != static_cast<std::size_t>(states * vocab)) {
    throw SchemaError(0, "logits", "expected state_count * vocab_size entries");
  }
  TabularPolicy policy(static_cast<std::size_t>(states),
                       static_cast<std::size_t>(vocab));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!logits[i].is_string()) throw SchemaError(0, "logits", "expected hex strings");
    policy.logits()[i] = hex_bits(logits[i].get<std::string>());
  }
  return policy;
}

void write_jsonl(std::ostream& out, const json& record) {
  out << record.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

}  // namespace grit::io
