#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grit/image.hpp"
#include "grit/judge.hpp"
#include "grit/trace.hpp"

namespace grit {

struct ImageDims {
  int width = 0;
  int height = 0;
};

// Clips a box to [0, width] x [0, height]. A box entirely outside the image
// collapses to zero area.
BoundingBox clamp_box(const BoundingBox& box, ImageDims dims);
std::vector<BoundingBox> clamp_boxes(std::span<const BoundingBox> boxes,
                                     ImageDims dims);

// Exact area of the union of continuous rectangles (x2-x1)*(y2-y1), computed
// by a coordinate-compressed sweep over x slabs.
int64_t union_area(std::span<const BoundingBox> boxes);

// IoU between the union of predicted boxes and the union of ground-truth
// boxes, after clamping both to the image. Empty prediction gives 0. Throws
// std::invalid_argument when gt is empty or both unions have zero area.
double grounding_iou(std::span<const BoundingBox> pred,
                     std::span<const BoundingBox> gt, ImageDims dims);

// n boxes with corners uniform over the image, corner-sorted, re-drawn while
// their area is below 1% of the image.
std::vector<BoundingBox> sample_negative_boxes(std::mt19937_64& rng,
                                               std::size_t n, ImageDims dims);

struct OverlayStyle {
  int stroke_width = 3;
  Rgb color = {255, 0, 0};
};

// Draws each box outline as the band of pixels within stroke_width of the
// box edge, inside the box. Boxes are clamped to the image first.
RgbImage render_overlay(const RgbImage& image,
                        std::span<const BoundingBox> boxes,
                        const OverlayStyle& style = {});

struct CorrelationOutcome {
  std::optional<int> hit;  // absent when the trace has no boxes
  int positive_slot = 0;   // which image ("Image 0"/"Image 1") was positive
};

// One cross-modal correlation trial: the trace's boxes versus an equal number
// of random negatives, drawn on `image` and shown to the judge in random
// order with the trace's coordinates masked.
CorrelationOutcome correlation_trial(const GroundedTrace& trace,
                                     const RgbImage& image,
                                     CorrelationJudge& judge,
                                     std::mt19937_64& rng,
                                     const OverlayStyle& style = {});

struct CorrelationSummary {
  double mean = 0.0;
  double std = 0.0;  // population std across repeats
};

// per_record_hits[i] holds the hits of record i, one per repeat. Records with
// no hits (skipped trials) are ignored. Throws std::invalid_argument when no
// record qualifies or a record has the wrong number of repeats.
CorrelationSummary aggregate_correlation(
    const std::vector<std::vector<int>>& per_record_hits,
    std::size_t repeats = 3);

// Judge stand-ins for testing the correlation harness.
class AlwaysFirstJudge final : public CorrelationJudge {
 public:
  int choose(std::string_view, const RgbImage&, const RgbImage&) override {
    return 0;
  }
};

// Re-renders the true overlay and picks the image that matches it exactly.
class GeometricOracleJudge final : public CorrelationJudge {
 public:
  GeometricOracleJudge(RgbImage base, std::vector<BoundingBox> true_boxes,
                       OverlayStyle style = {});
  int choose(std::string_view, const RgbImage& image0,
             const RgbImage& image1) override;

 private:
  RgbImage expected_;
};

}  // namespace grit
