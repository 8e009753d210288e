#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace grit {

// Axis-aligned rectangle in image pixel coordinates, origin top-left.
// Corners are normalized so that x1 <= x2 and y1 <= y2.
struct BoundingBox {
  int32_t x1 = 0;
  int32_t y1 = 0;
  int32_t x2 = 0;
  int32_t y2 = 0;

  // Builds a box from two arbitrary corners, swapping inverted coordinates.
  static BoundingBox from_corners(int32_t ax, int32_t ay, int32_t bx,
                                  int32_t by);

  int64_t width() const { return int64_t{x2} - x1; }
  int64_t height() const { return int64_t{y2} - y1; }
  int64_t area() const { return width() * height(); }
  bool is_degenerate() const { return area() == 0; }
  bool is_normalized() const { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Half-open byte range [begin, end) into the text a box was extracted from.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const ByteSpan&, const ByteSpan&) = default;
};

struct LocatedBox {
  BoundingBox box;
  ByteSpan span;

  friend bool operator==(const LocatedBox&, const LocatedBox&) = default;
};

struct BoxExtraction {
  std::vector<LocatedBox> boxes;
  // Candidate quadruplets dropped because an integer did not fit in 32 bits.
  std::size_t overflow_skipped = 0;
};

struct TokenPairReport {
  bool think_pair_ok = false;
  bool rethink_pair_ok = false;
  bool pairs_ordered_ok = false;
  bool answer_marker_present = false;

  friend bool operator==(const TokenPairReport&,
                         const TokenPairReport&) = default;
};

struct GroundedTrace {
  std::string raw_text;
  std::optional<std::string> think_segment;
  std::optional<std::string> rethink_segment;
  std::optional<std::string> answer_segment;
  std::vector<LocatedBox> boxes;
  TokenPairReport token_report;
  std::size_t overflow_skipped = 0;

  // The answer text, or "" when the trace has no <answer> marker.
  std::string answer_or_empty() const {
    return answer_segment.value_or(std::string{});
  }
  std::vector<BoundingBox> box_list() const;
};

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kRethinkOpen = "<rethink>";
inline constexpr std::string_view kRethinkClose = "</rethink>";
inline constexpr std::string_view kAnswerMarker = "<answer>";
inline constexpr std::string_view kRegionToken = "[REGION]";

// Finds integer quadruplets "a, b, c, d", optionally wrapped in (...) or
// [...]. Matches are leftmost-longest and non-overlapping. Integers that are
// part of a decimal number do not start or end a match.
BoxExtraction extract_boxes(std::string_view text);

TokenPairReport detect_token_pairs(std::string_view text);

// Total: never throws on any byte string.
GroundedTrace parse_trace(std::string_view text);

// Replaces every extracted box (brackets included) with "[REGION]".
std::string mask_coordinates(std::string_view text);

// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

}  // namespace grit
