#include "grit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace grit {

BoundingBox clamp_box(const BoundingBox& box, ImageDims dims) {
  auto clip = [](int32_t v, int32_t hi) { return std::clamp(v, 0, hi); };
  return {clip(box.x1, dims.width), clip(box.y1, dims.height),
          clip(box.x2, dims.width), clip(box.y2, dims.height)};
}

std::vector<BoundingBox> clamp_boxes(std::span<const BoundingBox> boxes,
                                     ImageDims dims) {
  std::vector<BoundingBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back(clamp_box(b, dims));
  return out;
}

int64_t union_area(std::span<const BoundingBox> boxes) {
  std::vector<int32_t> xs;
  xs.reserve(boxes.size() * 2);
  for (const auto& b : boxes) {
    if (b.is_degenerate()) continue;
    xs.push_back(b.x1);
    xs.push_back(b.x2);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  int64_t area = 0;
  std::vector<std::pair<int32_t, int32_t>> spans;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const int32_t left = xs[i];
    const int32_t right = xs[i + 1];
    spans.clear();
    for (const auto& b : boxes) {
      if (!b.is_degenerate() && b.x1 <= left && b.x2 >= right) {
        spans.emplace_back(b.y1, b.y2);
      }
    }
    if (spans.empty()) continue;
    std::sort(spans.begin(), spans.end());
    int64_t covered = 0;
    int32_t run_start = spans.front().first;
    int32_t run_end = spans.front().second;
    for (const auto& [lo, hi] : spans) {
      if (lo > run_end) {
        covered += int64_t{run_end} - run_start;
        run_start = lo;
        run_end = hi;
      } else {
        run_end = std::max(run_end, hi);
      }
    }
    covered += int64_t{run_end} - run_start;
    area += covered * (int64_t{right} - left);
  }
  return area;
}

double grounding_iou(std::span<const BoundingBox> pred,
                     std::span<const BoundingBox> gt, ImageDims dims) {
  if (gt.empty()) {
    throw std::invalid_argument("grounding IoU needs at least one gt box");
  }
  if (pred.empty()) return 0.0;
  const auto p = clamp_boxes(pred, dims);
  const auto g = clamp_boxes(gt, dims);
  std::vector<BoundingBox> both = p;
  both.insert(both.end(), g.begin(), g.end());
  const int64_t joint = union_area(both);
  if (joint == 0) {
    throw std::invalid_argument("grounding IoU undefined: both unions are empty");
  }
  const int64_t inter = union_area(p) + union_area(g) - joint;
  return static_cast<double>(inter) / static_cast<double>(joint);
}

std::vector<BoundingBox> sample_negative_boxes(std::mt19937_64& rng,
                                               std::size_t n, ImageDims dims) {
  if (n == 0) throw std::invalid_argument("need at least one negative box");
  if (dims.width <= 0 || dims.height <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  std::uniform_int_distribution<int32_t> xdist(0, dims.width);
  std::uniform_int_distribution<int32_t> ydist(0, dims.height);
  const int64_t image_area = int64_t{dims.width} * dims.height;
  std::vector<BoundingBox> out;
  out.reserve(n);
  while (out.size() < n) {
    const int32_t ax = xdist(rng), bx = xdist(rng);
    const int32_t ay = ydist(rng), by = ydist(rng);
    const BoundingBox b = BoundingBox::from_corners(ax, ay, bx, by);
    if (b.area() * 100 < image_area) continue;
    out.push_back(b);
  }
  return out;
}

RgbImage render_overlay(const RgbImage& image,
                        std::span<const BoundingBox> boxes,
                        const OverlayStyle& style) {
  if (image.empty()) throw std::invalid_argument("cannot draw on an empty image");
  if (style.stroke_width < 1) {
    throw std::invalid_argument("stroke width must be >= 1");
  }
  RgbImage out = image;
  const ImageDims dims{image.width(), image.height()};
  const int w = style.stroke_width;
  for (const auto& raw : boxes) {
    const BoundingBox b = clamp_box(raw, dims);
    for (int y = b.y1; y < b.y2; ++y) {
      const bool row_band = y < b.y1 + w || y >= b.y2 - w;
      for (int x = b.x1; x < b.x2; ++x) {
        if (row_band || x < b.x1 + w || x >= b.x2 - w) out.set(x, y, style.color);
      }
    }
  }
  return out;
}

CorrelationOutcome correlation_trial(const GroundedTrace& trace,
                                     const RgbImage& image,
                                     CorrelationJudge& judge,
                                     std::mt19937_64& rng,
                                     const OverlayStyle& style) {
  CorrelationOutcome outcome;
  if (trace.boxes.empty()) return outcome;
  const ImageDims dims{image.width(), image.height()};
  const auto positives = clamp_boxes(trace.box_list(), dims);
  const auto negatives = sample_negative_boxes(rng, positives.size(), dims);
  const RgbImage positive = render_overlay(image, positives, style);
  const RgbImage negative = render_overlay(image, negatives, style);

  outcome.positive_slot = static_cast<int>(rng() >> 63);
  const std::string prompt =
      render_correlation_prompt(mask_coordinates(trace.raw_text));
  const int choice = outcome.positive_slot == 0
                         ? judge.choose(prompt, positive, negative)
                         : judge.choose(prompt, negative, positive);
  outcome.hit = choice == outcome.positive_slot ? 1 : 0;
  return outcome;
}

CorrelationSummary aggregate_correlation(
    const std::vector<std::vector<int>>& per_record_hits, std::size_t repeats) {
  if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
  std::vector<double> sums(repeats, 0.0);
  std::size_t records = 0;
  for (const auto& hits : per_record_hits) {
    if (hits.empty()) continue;
    if (hits.size() != repeats) {
      throw std::invalid_argument("record has " + std::to_string(hits.size()) +
                                  " trials, expected " + std::to_string(repeats));
    }
    for (std::size_t r = 0; r < repeats; ++r) sums[r] += hits[r];
    ++records;
  }
  if (records == 0) {
    throw std::invalid_argument("no correlation trials to aggregate");
  }
  CorrelationSummary summary;
  for (double& s : sums) {
    s /= static_cast<double>(records);
    summary.mean += s;
  }
  summary.mean /= static_cast<double>(repeats);
  double var = 0.0;
  for (const double s : sums) var += (s - summary.mean) * (s - summary.mean);
  summary.std = std::sqrt(var / static_cast<double>(repeats));
  return summary;
}

GeometricOracleJudge::GeometricOracleJudge(RgbImage base,
                                           std::vector<BoundingBox> true_boxes,
                                           OverlayStyle style)
    : expected_(render_overlay(base, true_boxes, style)) {}

int GeometricOracleJudge::choose(std::string_view, const RgbImage& image0,
                                 const RgbImage& image1) {
  if (image0 == expected_) return 0;
  if (image1 == expected_) return 1;
  throw JudgeError("oracle judge: neither image carries the true overlay");
}

}  // namespace grit
