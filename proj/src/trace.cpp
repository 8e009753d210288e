#include "grit/trace.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <utility>

namespace grit {
namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

enum class ScanStatus { kNone, kOverflow, kOk };

struct Candidate {
  ScanStatus status = ScanStatus::kNone;
  std::array<int32_t, 4> values{};
  std::size_t end = 0;
  // Offset of the first integer that did not fit in 32 bits.
  std::size_t overflow_at = std::string_view::npos;
};

class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  Candidate try_match(std::size_t start) const {
    const char c = text_[start];
    if (c == '(' || c == '[') {
      Candidate bracketed = scan_bracketed(start, c == '(' ? ')' : ']');
      if (bracketed.status != ScanStatus::kNone) return bracketed;
    }
    if (c == '-' || is_digit(c)) return scan_bare(start);
    return {};
  }

 private:
  std::size_t skip_space(std::size_t pos) const {
    while (pos < text_.size() && is_space(text_[pos])) ++pos;
    return pos;
  }

  ScanStatus scan_int(std::size_t& pos, int32_t& out) const {
    std::size_t p = pos;
    bool negative = false;
    if (p < text_.size() && text_[p] == '-') {
      negative = true;
      ++p;
    }
    if (p >= text_.size() || !is_digit(text_[p])) return ScanStatus::kNone;
    constexpr int64_t kLimit = int64_t{std::numeric_limits<int32_t>::max()} + 1;
    int64_t value = 0;
    bool overflow = false;
    for (; p < text_.size() && is_digit(text_[p]); ++p) {
      if (!overflow) {
        value = value * 10 + (text_[p] - '0');
        overflow = value > kLimit;
      }
    }
    if (negative) value = -value;
    if (value > std::numeric_limits<int32_t>::max() ||
        value < std::numeric_limits<int32_t>::min()) {
      overflow = true;
    }
    pos = p;
    out = overflow ? 0 : static_cast<int32_t>(value);
    return overflow ? ScanStatus::kOverflow : ScanStatus::kOk;
  }

  // Four comma-separated integers starting at `pos` (no leading space).
  Candidate scan_quadruplet(std::size_t pos) const {
    Candidate result;
    result.status = ScanStatus::kOk;
    for (std::size_t i = 0; i < 4; ++i) {
      if (i > 0) {
        pos = skip_space(pos);
        if (pos >= text_.size() || text_[pos] != ',') return {};
        pos = skip_space(pos + 1);
      }
      const std::size_t int_start = pos;
      const ScanStatus st = scan_int(pos, result.values[i]);
      if (st == ScanStatus::kNone) return {};
      if (st == ScanStatus::kOverflow &&
          result.status != ScanStatus::kOverflow) {
        result.status = ScanStatus::kOverflow;
        result.overflow_at = int_start;
      }
    }
    result.end = pos;
    return result;
  }

  Candidate scan_bracketed(std::size_t start, char closing) const {
    Candidate inner = scan_quadruplet(skip_space(start + 1));
    if (inner.status == ScanStatus::kNone) return {};
    const std::size_t close = skip_space(inner.end);
    if (close >= text_.size() || text_[close] != closing) return {};
    inner.end = close + 1;
    return inner;
  }

  Candidate scan_bare(std::size_t start) const {
    if (start > 0) {
      const char prev = text_[start - 1];
      if (is_digit(prev) || prev == '.') return {};
    }
    Candidate c = scan_quadruplet(start);
    if (c.status == ScanStatus::kNone) return {};
    // "1, 2, 3, 4.5" ends in a decimal, not an integer.
    if (c.end + 1 < text_.size() && text_[c.end] == '.' &&
        is_digit(text_[c.end + 1])) {
      return {};
    }
    return c;
  }

  std::string_view text_;
};

struct Occurrences {
  std::size_t count = 0;
  std::size_t first = std::string_view::npos;
};

Occurrences find_all(std::string_view text, std::string_view needle) {
  Occurrences occ;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    if (occ.count == 0) occ.first = pos;
    ++occ.count;
  }
  return occ;
}

bool single_pair(const Occurrences& open, const Occurrences& close) {
  return open.count == 1 && close.count == 1 && open.first < close.first;
}

std::optional<std::string> delimited(std::string_view text,
                                     std::string_view open,
                                     std::string_view close) {
  const std::size_t begin = text.find(open);
  if (begin == std::string_view::npos) return std::nullopt;
  const std::size_t inner = begin + open.size();
  const std::size_t end = text.find(close, inner);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(trim(text.substr(inner, end - inner)));
}

}  // namespace

BoundingBox BoundingBox::from_corners(int32_t ax, int32_t ay, int32_t bx,
                                      int32_t by) {
  return BoundingBox{std::min(ax, bx), std::min(ay, by), std::max(ax, bx),
                     std::max(ay, by)};
}

std::vector<BoundingBox> GroundedTrace::box_list() const {
  std::vector<BoundingBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back(b.box);
  return out;
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

BoxExtraction extract_boxes(std::string_view text) {
  BoxExtraction out;
  const Scanner scanner(text);
  std::size_t last_overflow = std::string_view::npos;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const Candidate c = scanner.try_match(pos);
    switch (c.status) {
      case ScanStatus::kOk: {
        const auto& v = c.values;
        out.boxes.push_back(
            {BoundingBox::from_corners(v[0], v[1], v[2], v[3]), {pos, c.end}});
        pos = c.end;
        break;
      }
      case ScanStatus::kOverflow:
        // A bracketed and a bare attempt can trip over the same integer.
        if (c.overflow_at != last_overflow) {
          ++out.overflow_skipped;
          last_overflow = c.overflow_at;
        }
        pos = c.end;
        break;
      case ScanStatus::kNone:
        ++pos;
        break;
    }
  }
  return out;
}

TokenPairReport detect_token_pairs(std::string_view text) {
  const Occurrences think_open = find_all(text, kThinkOpen);
  const Occurrences think_close = find_all(text, kThinkClose);
  const Occurrences rethink_open = find_all(text, kRethinkOpen);
  const Occurrences rethink_close = find_all(text, kRethinkClose);

  TokenPairReport report;
  report.think_pair_ok = single_pair(think_open, think_close);
  report.rethink_pair_ok = single_pair(rethink_open, rethink_close);
  report.pairs_ordered_ok = report.think_pair_ok && report.rethink_pair_ok &&
                            think_close.first < rethink_open.first;
  report.answer_marker_present =
      text.find(kAnswerMarker) != std::string_view::npos;
  return report;
}

GroundedTrace parse_trace(std::string_view text) {
  GroundedTrace trace;
  trace.raw_text = std::string(text);
  trace.think_segment = delimited(text, kThinkOpen, kThinkClose);
  trace.rethink_segment = delimited(text, kRethinkOpen, kRethinkClose);
  if (const std::size_t a = text.find(kAnswerMarker);
      a != std::string_view::npos) {
    trace.answer_segment =
        std::string(trim(text.substr(a + kAnswerMarker.size())));
  }
  BoxExtraction extraction = extract_boxes(text);
  trace.boxes = std::move(extraction.boxes);
  trace.overflow_skipped = extraction.overflow_skipped;
  trace.token_report = detect_token_pairs(text);
  return trace;
}

std::string mask_coordinates(std::string_view text) {
  const BoxExtraction extraction = extract_boxes(text);
  std::string out;
  out.reserve(text.size());
  std::size_t cursor = 0;
  for (const auto& located : extraction.boxes) {
    out.append(text.substr(cursor, located.span.begin - cursor));
    out.append(kRegionToken);
    cursor = located.span.end;
  }
  out.append(text.substr(cursor));
  return out;
}

}  // namespace grit
