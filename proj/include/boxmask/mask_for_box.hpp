#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "boxmask/geometry.hpp"

namespace boxmask {

/// Thresholds and bonuses of the box refinement procedure. The defaults are
/// the working values of the full pipeline; all ratios live in [0,1].
struct RefinementParams {
  double split_conf = 0.4;   // prediction confidence gate for splitting
  double split_iou = 0.6;    // at or below this IOU a split candidate is cropped
  double split_bonus = 0.1;  // confidence bonus for split outputs
  double merge_conf = 0.1;   // confidence gate for accepting a merge
  double merge_bonus = 0.4;  // confidence bonus for merge outputs
  double conf_cap = 0.9;     // ceiling applied to boosted confidences
  double add_conf = 0.5;     // confidence gate for the adding pass
  double add_iou = 0.8;      // at or above this IOU a reference is added as-is
  double nms_iou = 0.4;      // suppression threshold on the shortlist
  double touch_tol = 0.1;    // side tolerance as a fraction of reference extent
  int max_powerset_members = 16;  // subset enumeration guard per class

  void validate() const {
    const double ratios[] = {split_conf, split_iou,  split_bonus, merge_conf,
                             merge_bonus, conf_cap,  add_conf,    add_iou,
                             nms_iou,     touch_tol};
    for (double r : ratios)
      if (!(r >= 0.0 && r <= 1.0))
        throw std::invalid_argument("RefinementParams: ratios must be in [0,1]");
    if (max_powerset_members < 2)
      throw std::invalid_argument(
          "RefinementParams: max_powerset_members must be >= 2");
  }
};

enum class Origin { kSplit, kMerge, kAdd, kLeftover };

inline const char* to_string(Origin o) {
  switch (o) {
    case Origin::kSplit: return "split";
    case Origin::kMerge: return "merge";
    case Origin::kAdd: return "add";
    case Origin::kLeftover: return "leftover";
  }
  return "?";
}

inline Origin origin_from_string(const std::string& s) {
  if (s == "split") return Origin::kSplit;
  if (s == "merge") return Origin::kMerge;
  if (s == "add") return Origin::kAdd;
  if (s == "leftover") return Origin::kLeftover;
  throw std::invalid_argument("unknown origin tag: " + s);
}

/// A detection training target produced by refinement. Confidence of split
/// and merge outputs is capped; leftover outputs replicate a reference box
/// exactly and carry confidence 1. train_classification stays false: refined
/// boxes are meant to drive localization terms only.
struct RefinedBox {
  Box box;
  int category;
  double confidence;
  Origin origin;
  bool train_classification = false;
};

/// Reference boxes: the circumscribed rectangle of every mask component.
inline std::vector<LabeledBox> extract_reference_boxes(const SemanticMask& mask) {
  std::vector<LabeledBox> refs;
  for (const Component& c : connected_components(mask))
    refs.emplace_back(c.bounds, c.category);
  return refs;
}

namespace detail {

/// Total order used to canonicalize the predictions list, so refinement does
/// not depend on the order predictions arrive in.
inline bool prediction_less(const ScoredBox& a, const ScoredBox& b) {
  if (a.box != b.box) return box_less(a.box, b.box);
  if (a.scalar_score != b.scalar_score) return a.scalar_score > b.scalar_score;
  if (a.category != b.category) return a.category < b.category;
  return a.scores < b.scores;
}

/// Index of the prediction with maximal IOU against `target`; ties resolve to
/// the earliest entry. Returns npos on an empty list.
inline std::size_t argmax_iou(const std::vector<ScoredBox>& predictions,
                              const Box& target) {
  std::size_t best = static_cast<std::size_t>(-1);
  double best_iou = -1.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double v = iou(target, predictions[i].box);
    if (v > best_iou) {
      best_iou = v;
      best = i;
    }
  }
  return best;
}

inline bool refined_less(const RefinedBox& a, const RefinedBox& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.box != b.box) return box_less(a.box, b.box);
  if (a.category != b.category) return a.category < b.category;
  return static_cast<int>(a.origin) < static_cast<int>(b.origin);
}

}  // namespace detail

/// Refines reference boxes (mask-component rectangles) against predicted
/// boxes. Four passes run in order:
///   splitting — confident predictions carve instance boxes out of a
///     reference via touch/crop; each matched prediction crops a fresh copy
///     of the original reference, so one multi-instance reference can yield
///     several independent instances;
///   merging — subsets of still-unmatched references of a class are merged
///     to their covering rectangle and accepted when the best-overlapping
///     prediction is confident enough;
///   adding — references sufficiently covered by a confident prediction are
///     emitted as-is (or cropped when only touching);
///   suppression + leftovers — the shortlist passes per-class NMS, then
///     unconsumed references are appended unchanged with confidence 1.
inline std::vector<RefinedBox> refine(const std::vector<LabeledBox>& references,
                                      std::vector<ScoredBox> predictions,
                                      const RefinementParams& params = {}) {
  params.validate();
  std::sort(predictions.begin(), predictions.end(), detail::prediction_less);

  std::vector<RefinedBox> shortlist;
  std::vector<char> leftover(references.size(), 1);

  // Splitting.
  for (std::size_t r = 0; r < references.size(); ++r) {
    const Box& ref = references[r].box;
    const int cat = references[r].category;
    for (const ScoredBox& pred : predictions) {
      const double conf = pred.score_for(cat);
      if (!(conf > params.split_conf)) continue;
      std::optional<Box> candidate;
      if (iou(ref, pred.box) <= params.split_iou) {
        candidate = crop(ref, pred.box, params.touch_tol);
        if (!candidate) continue;  // no touch or degenerate combination
      } else {
        candidate = ref;
      }
      shortlist.push_back(RefinedBox{*candidate, cat,
                                     std::min(params.conf_cap, conf + params.split_bonus),
                                     Origin::kSplit});
      leftover[r] = 0;
    }
  }

  // Merging, per category ascending over the references still left over.
  std::map<int, std::vector<std::size_t>> per_class;
  for (std::size_t r = 0; r < references.size(); ++r)
    if (leftover[r]) per_class[references[r].category].push_back(r);

  for (const auto& [cat, members] : per_class) {
    const std::size_t n = members.size();
    if (n < 2) continue;

    struct Candidate {
      Box box;
      std::vector<std::size_t> subset;  // indices into `members`
    };
    std::vector<Candidate> candidates;

    if (n <= static_cast<std::size_t>(params.max_powerset_members)) {
      // Enumerate all subsets of size >= 2 and deduplicate by merged box.
      // Subsets yielding the same rectangle are closed under union, so the
      // union of their bit masks is the largest subset producing that box;
      // the merge is attributed to it.
      std::map<std::array<double, 4>, std::uint64_t> merged;
      for (std::uint64_t mask = 1; mask < (1ull << n); ++mask) {
        if (std::popcount(mask) < 2) continue;
        bool first = true;
        double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (!(mask & (1ull << i))) continue;
          const Box& b = references[members[i]].box;
          if (first) {
            x0 = b.x_min; y0 = b.y_min; x1 = b.x_max; y1 = b.y_max;
            first = false;
          } else {
            x0 = std::min(x0, b.x_min); y0 = std::min(y0, b.y_min);
            x1 = std::max(x1, b.x_max); y1 = std::max(y1, b.y_max);
          }
        }
        merged[{x0, y0, x1, y1}] |= mask;
      }
      for (const auto& [key, mask] : merged) {
        Candidate c{Box(key[0], key[1], key[2], key[3]), {}};
        for (std::size_t i = 0; i < n; ++i)
          if (mask & (1ull << i)) c.subset.push_back(i);
        candidates.push_back(std::move(c));
      }
      // Larger subsets take precedence; remaining ties are impossible since
      // merged boxes are unique at this point.
      std::sort(candidates.begin(), candidates.end(),
                [](const Candidate& a, const Candidate& b) {
                  if (a.subset.size() != b.subset.size())
                    return a.subset.size() > b.subset.size();
                  return box_less(a.box, b.box);
                });
    } else {
      // Subset enumeration would be exponential; fall back to greedy pairwise
      // merging. Repeatedly merge the pair whose covering box has maximal IOU
      // with any prediction, while that best-overlap prediction clears the
      // confidence gate.
      struct Item {
        Box box;
        std::vector<std::size_t> subset;  // sorted indices into `members`
      };
      std::vector<Item> pool;
      for (std::size_t i = 0; i < n; ++i)
        pool.push_back(Item{references[members[i]].box, {i}});

      while (pool.size() > 1 && !predictions.empty()) {
        // Best pair by IOU of its covering box with any prediction; ties go
        // to the lexicographically smaller covering box, then member set.
        double best_iou = -1.0;
        std::size_t best_a = 0, best_b = 0;
        std::optional<Box> best_box;
        std::vector<std::size_t> best_subset;
        for (std::size_t a = 0; a + 1 < pool.size(); ++a) {
          for (std::size_t b = a + 1; b < pool.size(); ++b) {
            const Box m = cover(pool[a].box, pool[b].box);
            const std::size_t p = detail::argmax_iou(predictions, m);
            const double v = iou(m, predictions[p].box);
            std::vector<std::size_t> subset = pool[a].subset;
            subset.insert(subset.end(), pool[b].subset.begin(),
                          pool[b].subset.end());
            std::sort(subset.begin(), subset.end());
            const bool better =
                v > best_iou ||
                (v == best_iou && best_box &&
                 (box_less(m, *best_box) ||
                  (m == *best_box && subset < best_subset)));
            if (better) {
              best_iou = v;
              best_a = a;
              best_b = b;
              best_box = m;
              best_subset = std::move(subset);
            }
          }
        }
        const std::size_t p = detail::argmax_iou(predictions, *best_box);
        if (!(predictions[p].score_for(cat) > params.merge_conf)) break;
        Item merged{*best_box, std::move(best_subset)};
        pool.erase(pool.begin() + best_b);
        pool.erase(pool.begin() + best_a);
        pool.push_back(std::move(merged));
        std::sort(pool.begin(), pool.end(),
                  [](const Item& x, const Item& y) { return x.subset < y.subset; });
      }
      for (Item& it : pool)
        if (it.subset.size() > 1)
          candidates.push_back(Candidate{it.box, std::move(it.subset)});
      std::sort(candidates.begin(), candidates.end(),
                [](const Candidate& a, const Candidate& b) {
                  if (a.subset.size() != b.subset.size())
                    return a.subset.size() > b.subset.size();
                  return box_less(a.box, b.box);
                });
    }

    // Accept candidates whose members are all still unconsumed, so every
    // reference joins at most one merge.
    for (const Candidate& c : candidates) {
      bool available = true;
      for (std::size_t i : c.subset)
        if (!leftover[members[i]]) { available = false; break; }
      if (!available) continue;
      if (predictions.empty()) break;
      const std::size_t p = detail::argmax_iou(predictions, c.box);
      const double conf = predictions[p].score_for(cat);
      if (!(conf > params.merge_conf)) continue;
      shortlist.push_back(RefinedBox{c.box, cat,
                                     std::min(params.conf_cap, conf + params.merge_bonus),
                                     Origin::kMerge});
      for (std::size_t i : c.subset) leftover[members[i]] = 0;
    }
  }

  // Adding well-predicted boxes; scans all original references.
  for (const LabeledBox& ref : references) {
    for (const ScoredBox& pred : predictions) {
      const double conf = pred.score_for(ref.category);
      if (!(conf > params.add_conf)) continue;
      if (iou(ref.box, pred.box) >= params.add_iou) {
        shortlist.push_back(RefinedBox{ref.box, ref.category, conf, Origin::kAdd});
      } else if (std::optional<Box> cropped =
                     crop(ref.box, pred.box, params.touch_tol)) {
        shortlist.push_back(RefinedBox{*cropped, ref.category, conf, Origin::kAdd});
      }
    }
  }

  // Suppression, then unconsumed references ride along unchanged.
  std::vector<RefinedBox> refined = detail::suppress(
      std::move(shortlist), params.nms_iou,
      [](const RefinedBox& r) { return r.box; },
      [](const RefinedBox& r) { return r.category; }, detail::refined_less);
  for (std::size_t r = 0; r < references.size(); ++r)
    if (leftover[r])
      refined.push_back(RefinedBox{references[r].box, references[r].category, 1.0,
                                   Origin::kLeftover});
  return refined;
}

/// End-to-end: component rectangles from the mask, then refinement.
inline std::vector<RefinedBox> refine_from_mask(
    const SemanticMask& mask, const std::vector<ScoredBox>& predictions,
    const RefinementParams& params = {}) {
  return refine(extract_reference_boxes(mask), predictions, params);
}

}  // namespace boxmask
