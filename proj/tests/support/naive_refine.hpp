#pragma once

// Plain nested-loop transcription of the box refinement procedure, coded
// independently of boxmask::refine and kept deliberately literal. The suites
// run both against randomized inputs and require identical outputs.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "boxmask/geometry.hpp"
#include "boxmask/mask_for_box.hpp"

namespace boxmask::testing {

namespace naive {

inline double iou_of(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  return inter / (area_a + area_b - inter);
}

struct Touch {
  bool left, right, top, bottom;
  bool ok() const {
    return static_cast<int>(left) + static_cast<int>(right) +
               static_cast<int>(top) + static_cast<int>(bottom) >= 2;
  }
};

inline Touch touch_of(const Box& ref, const Box& pred, double tol) {
  const double iw = std::min(ref.x_max, pred.x_max) - std::max(ref.x_min, pred.x_min);
  const double ih = std::min(ref.y_max, pred.y_max) - std::max(ref.y_min, pred.y_min);
  if (iw <= 0 || ih <= 0) return Touch{false, false, false, false};
  const double dx = tol * (ref.x_max - ref.x_min);
  const double dy = tol * (ref.y_max - ref.y_min);
  return Touch{std::abs(ref.x_min - pred.x_min) <= dx,
               std::abs(ref.x_max - pred.x_max) <= dx,
               std::abs(ref.y_min - pred.y_min) <= dy,
               std::abs(ref.y_max - pred.y_max) <= dy};
}

inline std::optional<Box> crop_of(const Box& ref, const Box& pred, double tol) {
  const Touch t = touch_of(ref, pred, tol);
  if (!t.ok()) return std::nullopt;
  const double x0 = t.left ? ref.x_min : pred.x_min;
  const double x1 = t.right ? ref.x_max : pred.x_max;
  const double y0 = t.top ? ref.y_min : pred.y_min;
  const double y1 = t.bottom ? ref.y_max : pred.y_max;
  if (!(x0 < x1 && y0 < y1)) return std::nullopt;
  return Box(x0, y0, x1, y1);
}

inline std::array<double, 4> key_of(const Box& b) {
  return {b.x_min, b.y_min, b.x_max, b.y_max};
}

}  // namespace naive

inline std::vector<RefinedBox> naive_refine(
    const std::vector<LabeledBox>& references,
    std::vector<ScoredBox> predictions, const RefinementParams& P = {}) {
  using naive::iou_of;

  // Canonical prediction order (contract: the result must not depend on the
  // order predictions arrive in).
  std::sort(predictions.begin(), predictions.end(),
            [](const ScoredBox& a, const ScoredBox& b) {
              if (!(a.box == b.box)) return box_less(a.box, b.box);
              if (a.scalar_score != b.scalar_score)
                return a.scalar_score > b.scalar_score;
              if (a.category != b.category) return a.category < b.category;
              return a.scores < b.scores;
            });

  struct Entry {
    Box box;
    int cat;
    double conf;
    Origin origin;
  };
  std::vector<Entry> shortlist;
  std::set<std::size_t> leftover;
  for (std::size_t r = 0; r < references.size(); ++r) leftover.insert(r);

  // A. Splitting.
  for (std::size_t r = 0; r < references.size(); ++r) {
    const Box L = references[r].box;
    const int j = references[r].category;
    for (const ScoredBox& pred : predictions) {
      if (!(pred.score_for(j) > P.split_conf)) continue;
      Box candidate = L;  // fresh copy per prediction
      if (iou_of(L, pred.box) <= P.split_iou) {
        const auto cropped = naive::crop_of(L, pred.box, P.touch_tol);
        if (!cropped) continue;
        candidate = *cropped;
      }
      shortlist.push_back(Entry{candidate, j,
                                std::min(P.conf_cap, pred.score_for(j) + P.split_bonus),
                                Origin::kSplit});
      leftover.erase(r);
    }
  }

  // B. Merging per category.
  std::set<int> cats;
  for (std::size_t r : leftover) cats.insert(references[r].category);
  for (int j : cats) {
    std::vector<std::size_t> Bj;  // leftover references of this category
    for (std::size_t r : leftover)
      if (references[r].category == j) Bj.push_back(r);
    if (Bj.size() < 2) continue;

    // Candidate merged boxes with the member sets producing them.
    struct Cand {
      Box box;
      std::vector<std::size_t> refs;  // reference indices, sorted
    };
    std::vector<Cand> cands;

    if (Bj.size() <= static_cast<std::size_t>(P.max_powerset_members)) {
      std::map<std::array<double, 4>, std::set<std::size_t>> unique;
      const std::size_t m = Bj.size();
      std::vector<std::size_t> chosen;
      // Recursive powerset walk.
      auto walk = [&](auto&& self, std::size_t i) -> void {
        if (i == m) {
          if (chosen.size() < 2) return;
          Box merged = references[chosen[0]].box;
          for (std::size_t k = 1; k < chosen.size(); ++k)
            merged = cover(merged, references[chosen[k]].box);
          unique[naive::key_of(merged)].insert(chosen.begin(), chosen.end());
          return;
        }
        self(self, i + 1);
        chosen.push_back(Bj[i]);
        self(self, i + 1);
        chosen.pop_back();
      };
      walk(walk, 0);
      for (const auto& [key, refs] : unique)
        cands.push_back(Cand{Box(key[0], key[1], key[2], key[3]),
                             std::vector<std::size_t>(refs.begin(), refs.end())});
    } else {
      // Greedy pairwise fallback: merge the pair whose covering box best
      // overlaps any prediction, while that prediction clears the gate.
      struct Item {
        Box box;
        std::vector<std::size_t> refs;
      };
      std::vector<Item> pool;
      for (std::size_t r : Bj) pool.push_back(Item{references[r].box, {r}});
      auto best_pred_iou = [&](const Box& m) -> std::pair<double, std::size_t> {
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t p = 0; p < predictions.size(); ++p) {
          const double v = iou_of(m, predictions[p].box);
          if (v > best) {
            best = v;
            arg = p;
          }
        }
        return {best, arg};
      };
      while (pool.size() > 1 && !predictions.empty()) {
        double sel_iou = -1.0;
        std::optional<Box> sel_box;
        std::vector<std::size_t> sel_refs;
        std::size_t sel_a = 0, sel_b = 0;
        for (std::size_t a = 0; a + 1 < pool.size(); ++a)
          for (std::size_t b = a + 1; b < pool.size(); ++b) {
            const Box m = cover(pool[a].box, pool[b].box);
            const double v = best_pred_iou(m).first;
            std::vector<std::size_t> refs = pool[a].refs;
            refs.insert(refs.end(), pool[b].refs.begin(), pool[b].refs.end());
            std::sort(refs.begin(), refs.end());
            const bool better =
                v > sel_iou ||
                (v == sel_iou && sel_box &&
                 (box_less(m, *sel_box) || (m == *sel_box && refs < sel_refs)));
            if (better) {
              sel_iou = v;
              sel_box = m;
              sel_refs = std::move(refs);
              sel_a = a;
              sel_b = b;
            }
          }
        const auto [v, arg] = best_pred_iou(*sel_box);
        if (!(predictions[arg].score_for(j) > P.merge_conf)) break;
        pool.erase(pool.begin() + sel_b);
        pool.erase(pool.begin() + sel_a);
        pool.push_back(Item{*sel_box, std::move(sel_refs)});
        std::sort(pool.begin(), pool.end(),
                  [](const Item& x, const Item& y) { return x.refs < y.refs; });
      }
      for (const Item& it : pool)
        if (it.refs.size() > 1) cands.push_back(Cand{it.box, it.refs});
    }

    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.refs.size() != b.refs.size()) return a.refs.size() > b.refs.size();
      return box_less(a.box, b.box);
    });

    for (const Cand& c : cands) {
      bool all_left = true;
      for (std::size_t r : c.refs)
        if (!leftover.count(r)) { all_left = false; break; }
      if (!all_left || predictions.empty()) continue;
      double best = -1.0;
      std::size_t arg = 0;
      for (std::size_t p = 0; p < predictions.size(); ++p) {
        const double v = iou_of(c.box, predictions[p].box);
        if (v > best) {
          best = v;
          arg = p;
        }
      }
      if (predictions[arg].score_for(j) > P.merge_conf) {
        shortlist.push_back(
            Entry{c.box, j,
                  std::min(P.conf_cap, predictions[arg].score_for(j) + P.merge_bonus),
                  Origin::kMerge});
        for (std::size_t r : c.refs) leftover.erase(r);
      }
    }
  }

  // C. Adding well-predicted boxes (scans all references again).
  for (const LabeledBox& ref : references) {
    const Box L = ref.box;
    const int j = ref.category;
    for (const ScoredBox& pred : predictions) {
      if (!(pred.score_for(j) > P.add_conf)) continue;
      if (iou_of(L, pred.box) >= P.add_iou) {
        shortlist.push_back(Entry{L, j, pred.score_for(j), Origin::kAdd});
      } else if (const auto cropped = naive::crop_of(L, pred.box, P.touch_tol)) {
        shortlist.push_back(Entry{*cropped, j, pred.score_for(j), Origin::kAdd});
      }
    }
  }

  // D. Per-class NMS over the shortlist, then leftovers ride along.
  std::sort(shortlist.begin(), shortlist.end(), [](const Entry& a, const Entry& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (!(a.box == b.box)) return box_less(a.box, b.box);
    if (a.cat != b.cat) return a.cat < b.cat;
    return static_cast<int>(a.origin) < static_cast<int>(b.origin);
  });
  std::vector<Entry> kept;
  for (const Entry& e : shortlist) {
    bool keep = true;
    for (const Entry& k : kept)
      if (k.cat == e.cat && iou_of(k.box, e.box) > P.nms_iou) {
        keep = false;
        break;
      }
    if (keep) kept.push_back(e);
  }

  std::vector<RefinedBox> out;
  for (const Entry& e : kept)
    out.push_back(RefinedBox{e.box, e.cat, e.conf, e.origin});
  for (std::size_t r = 0; r < references.size(); ++r)
    if (leftover.count(r))
      out.push_back(RefinedBox{references[r].box, references[r].category, 1.0,
                               Origin::kLeftover});
  return out;
}

}  // namespace boxmask::testing
