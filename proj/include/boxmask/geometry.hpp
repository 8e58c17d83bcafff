#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace boxmask {

/// Axis-aligned rectangle in continuous pixel coordinates. The convention is
/// half-open: the box covers integer pixel positions p with
/// x_min <= p.x < x_max and y_min <= p.y < y_max, so on integer grids
/// area() equals the covered pixel count exactly.
struct Box {
  double x_min, y_min, x_max, y_max;

  Box(double x0, double y0, double x1, double y1)
      : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
    if (!(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
          std::isfinite(y1)))
      throw std::invalid_argument("Box: coordinates must be finite");
    if (!(x0 < x1 && y0 < y1))
      throw std::invalid_argument("Box: extent must be strictly positive");
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

inline bool box_less(const Box& a, const Box& b) {
  return std::tie(a.x_min, a.y_min, a.x_max, a.y_max) <
         std::tie(b.x_min, b.y_min, b.x_max, b.y_max);
}

/// Smallest box covering both arguments.
inline Box cover(const Box& a, const Box& b) {
  return Box(std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min),
             std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max));
}

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

/// Intersection over union; 0 for disjoint boxes, 1 iff identical.
inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

/// Integer pixel rect [x0,x1) x [y0,y1) covered by a box, clamped to a
/// width x height raster. May be empty after clamping.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long pixel_count() const {
    return static_cast<long long>(width()) * height();
  }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

inline PixelRect pixel_extent(const Box& b, int raster_width,
                              int raster_height) {
  PixelRect r;
  r.x0 = std::max(0, static_cast<int>(std::ceil(b.x_min)));
  r.y0 = std::max(0, static_cast<int>(std::ceil(b.y_min)));
  r.x1 = std::min(raster_width, static_cast<int>(std::ceil(b.x_max)));
  r.y1 = std::min(raster_height, static_cast<int>(std::ceil(b.y_max)));
  if (r.x1 < r.x0) r.x1 = r.x0;
  if (r.y1 < r.y0) r.y1 = r.y0;
  return r;
}

/// Box plus a 1-based category; the ground-truth-side currency.
struct LabeledBox {
  Box box;
  int category;

  LabeledBox(Box b, int cat) : box(b), category(cat) {
    if (cat < 1) throw std::invalid_argument("LabeledBox: category must be >= 1");
  }

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

/// Detection-side box: 1-based category, per-class confidences in [0,1]
/// (independent sigmoid-style scores, not a distribution) and the scalar
/// confidence used for ranking and suppression.
struct ScoredBox {
  Box box;
  int category;
  std::vector<double> scores;
  double scalar_score;

  ScoredBox(Box b, int cat, std::vector<double> per_class, double scalar)
      : box(b), category(cat), scores(std::move(per_class)), scalar_score(scalar) {
    if (cat < 1) throw std::invalid_argument("ScoredBox: category must be >= 1");
    if (!(scalar >= 0.0 && scalar <= 1.0))
      throw std::invalid_argument("ScoredBox: scalar_score must be in [0,1]");
    for (double s : scores)
      if (!(s >= 0.0 && s <= 1.0))
        throw std::invalid_argument("ScoredBox: scores must be in [0,1]");
  }

  /// Confidence for a 1-based category; 0 when the vector carries no entry.
  double score_for(int cat) const {
    if (cat < 1 || static_cast<std::size_t>(cat) > scores.size()) return 0.0;
    return scores[static_cast<std::size_t>(cat) - 1];
  }
};

/// Dense category labeling: 0 = background, 255 = ignore, 1..n_c = classes.
struct SemanticMask {
  static constexpr std::uint8_t kIgnore = 255;

  int width = 0, height = 0;
  std::vector<std::uint8_t> labels;  // row-major, length width*height

  SemanticMask() = default;
  SemanticMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        labels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w < 0 || h < 0)
      throw std::invalid_argument("SemanticMask: negative dimensions");
  }

  std::uint8_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  bool same_shape(const SemanticMask& o) const {
    return width == o.width && height == o.height;
  }
};

/// One maximal 8-connected same-category region of a mask.
struct Component {
  int category;
  std::size_t pixel_count;
  Box bounds;  // circumscribed rectangle, tight on all four sides
};

/// Extracts the 8-connected components of every non-background, non-ignore
/// category. Output is ordered by category ascending, then by the component's
/// first pixel in raster order.
inline std::vector<Component> connected_components(const SemanticMask& mask) {
  struct Raw {
    int category;
    std::size_t first_index;
    std::size_t count;
    int min_x, min_y, max_x, max_y;
  };
  std::vector<Raw> raw;
  const std::size_t n = mask.labels.size();
  std::vector<std::uint8_t> visited(n, 0);
  std::vector<std::size_t> stack;

  for (std::size_t start = 0; start < n; ++start) {
    const std::uint8_t label = mask.labels[start];
    if (label == 0 || label == SemanticMask::kIgnore || visited[start]) continue;
    Raw c{label, start, 0,
          static_cast<int>(start % mask.width), static_cast<int>(start / mask.width),
          static_cast<int>(start % mask.width), static_cast<int>(start / mask.width)};
    visited[start] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(idx % mask.width);
      const int y = static_cast<int>(idx / mask.width);
      ++c.count;
      c.min_x = std::min(c.min_x, x);
      c.min_y = std::min(c.min_y, y);
      c.max_x = std::max(c.max_x, x);
      c.max_y = std::max(c.max_y, y);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (!mask.in_bounds(nx, ny)) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * mask.width + nx;
          if (visited[nidx] || mask.labels[nidx] != label) continue;
          visited[nidx] = 1;
          stack.push_back(nidx);
        }
    }
    raw.push_back(c);
  }

  std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
    return std::tie(a.category, a.first_index) < std::tie(b.category, b.first_index);
  });

  std::vector<Component> out;
  out.reserve(raw.size());
  for (const Raw& c : raw)
    out.push_back(Component{c.category, c.count,
                            Box(c.min_x, c.min_y, c.max_x + 1.0, c.max_y + 1.0)});
  return out;
}

namespace detail {

/// Greedy per-category suppression. Entries are visited in the order induced
/// by `less` (a strict total order, highest priority first); an entry is kept
/// iff its IOU with every already-kept entry of the same category is <=
/// threshold. Kept entries come back in visit order.
template <typename T, typename BoxFn, typename CatFn, typename Less>
std::vector<T> suppress(std::vector<T> entries, double threshold, BoxFn box_of,
                        CatFn cat_of, Less less) {
  std::sort(entries.begin(), entries.end(), less);
  std::vector<T> kept;
  for (auto& e : entries) {
    bool keep = true;
    for (const auto& k : kept) {
      if (cat_of(k) == cat_of(e) && iou(box_of(k), box_of(e)) > threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(std::move(e));
  }
  return kept;
}

}  // namespace detail

/// Greedy per-class non-maximum suppression. Boxes are ranked by scalar_score
/// descending (ties: smaller x_min, then y_min, then the remaining fields, so
/// the result does not depend on input order); a box survives iff its IOU
/// with every kept box of the same category is <= threshold.
inline std::vector<ScoredBox> nms(std::vector<ScoredBox> boxes, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("nms: threshold must be in [0,1]");
  auto less = [](const ScoredBox& a, const ScoredBox& b) {
    if (a.scalar_score != b.scalar_score) return a.scalar_score > b.scalar_score;
    if (a.box != b.box) return box_less(a.box, b.box);
    if (a.category != b.category) return a.category < b.category;
    return a.scores < b.scores;
  };
  return detail::suppress(
      std::move(boxes), threshold, [](const ScoredBox& s) { return s.box; },
      [](const ScoredBox& s) { return s.category; }, less);
}

/// Which sides of `predicted` lie within `tol` of the matching side of
/// `reference`; the tolerance is a fraction of the reference width (left,
/// right) or height (top, bottom). All-false when the boxes do not overlap.
struct TouchSides {
  bool left = false, right = false, top = false, bottom = false;

  int count() const {
    return static_cast<int>(left) + static_cast<int>(right) +
           static_cast<int>(top) + static_cast<int>(bottom);
  }
  /// The touch predicate: at least two sides within tolerance.
  bool at_least_two() const { return count() >= 2; }
};

inline TouchSides touch(const Box& reference, const Box& predicted,
                        double tol = 0.1) {
  TouchSides t;
  if (intersection_area(reference, predicted) <= 0) return t;
  const double dx = tol * reference.width();
  const double dy = tol * reference.height();
  t.left = std::abs(reference.x_min - predicted.x_min) <= dx;
  t.right = std::abs(reference.x_max - predicted.x_max) <= dx;
  t.top = std::abs(reference.y_min - predicted.y_min) <= dy;
  t.bottom = std::abs(reference.y_max - predicted.y_max) <= dy;
  return t;
}

/// Combines a reference box with a predicted one: each side takes the
/// reference coordinate if that side touches, the predicted coordinate
/// otherwise. nullopt when the touch predicate fails or the combination
/// would be degenerate; callers skip such pairings.
inline std::optional<Box> crop(const Box& reference, const Box& predicted,
                               double tol = 0.1) {
  const TouchSides t = touch(reference, predicted, tol);
  if (!t.at_least_two()) return std::nullopt;
  const double x0 = t.left ? reference.x_min : predicted.x_min;
  const double x1 = t.right ? reference.x_max : predicted.x_max;
  const double y0 = t.top ? reference.y_min : predicted.y_min;
  const double y1 = t.bottom ? reference.y_max : predicted.y_max;
  if (!(x0 < x1 && y0 < y1)) return std::nullopt;
  return Box(x0, y0, x1, y1);
}

}  // namespace boxmask
