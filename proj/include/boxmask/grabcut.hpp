#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "boxmask/common.hpp"
#include "boxmask/geometry.hpp"
#include "boxmask/image.hpp"
#include "boxmask/max_flow.hpp"

namespace boxmask {

using Rgb = std::array<double, 3>;

inline Rgb to_rgb(std::array<std::uint8_t, 3> px) {
  return {static_cast<double>(px[0]), static_cast<double>(px[1]),
          static_cast<double>(px[2])};
}

inline double sq_dist(const Rgb& a, const Rgb& b) {
  const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return d0 * d0 + d1 * d1 + d2 * d2;
}

/// Full-covariance Gaussian mixture over RGB colors. Covariances are
/// regularized by adding `reg` to the diagonal, which keeps them positive
/// definite even for single-color clusters.
class Gmm {
 public:
  struct Component {
    double weight = 0.0;
    Rgb mean{0, 0, 0};
    std::array<double, 9> cov{};      // row-major 3x3
    std::array<double, 9> inv_cov{};  // cached inverse
    double log_det = 0.0;
  };

  /// K-means++ seeding plus Lloyd refinement, then per-cluster Gaussian
  /// parameters. Requires at least one sample.
  static Gmm fit(const std::vector<Rgb>& samples, int k, double reg, Rng& rng) {
    if (samples.empty()) throw std::invalid_argument("Gmm::fit: no samples");
    if (k < 1) throw std::invalid_argument("Gmm::fit: k must be >= 1");

    // Seeding: first center uniform, the rest proportional to the squared
    // distance from the nearest chosen center.
    std::vector<Rgb> centers;
    centers.push_back(samples[rng.next_index(samples.size())]);
    std::vector<double> d2(samples.size());
    while (centers.size() < static_cast<std::size_t>(k)) {
      double total = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const Rgb& c : centers) best = std::min(best, sq_dist(samples[i], c));
        d2[i] = best;
        total += best;
      }
      std::size_t pick;
      if (total > 0) {
        const double u = rng.next_double() * total;
        double acc = 0.0;
        pick = samples.size() - 1;
        for (std::size_t i = 0; i < samples.size(); ++i) {
          acc += d2[i];
          if (u < acc) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.next_index(samples.size());  // all points coincide
      }
      centers.push_back(samples[pick]);
    }

    // Lloyd iterations with hard assignments.
    std::vector<int> assign(samples.size(), 0);
    for (int round = 0; round < 10; ++round) {
      bool changed = false;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = sq_dist(samples[i], centers[static_cast<std::size_t>(c)]);
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        if (assign[i] != best) {
          assign[i] = best;
          changed = true;
        }
      }
      if (!changed && round > 0) break;
      std::vector<Rgb> sums(static_cast<std::size_t>(k), Rgb{0, 0, 0});
      std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        for (int c = 0; c < 3; ++c) sums[assign[i]][c] += samples[i][c];
        ++counts[assign[i]];
      }
      for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
          for (int j = 0; j < 3; ++j)
            centers[static_cast<std::size_t>(c)][j] =
                sums[static_cast<std::size_t>(c)][j] /
                static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }

    Gmm gmm;
    gmm.reg_ = reg;
    gmm.components_.resize(static_cast<std::size_t>(k));
    gmm.estimate(samples, assign);
    return gmm;
  }

  /// Component index with minimal -log(w_k * N(c)); weight-0 components are
  /// skipped. The mixture always has at least one populated component.
  int assign_component(const Rgb& c) const {
    int best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < components_.size(); ++k) {
      if (components_[k].weight <= 0) continue;
      const double cost = component_cost(static_cast<int>(k), c);
      if (cost < best_cost) {
        best_cost = cost;
        best = static_cast<int>(k);
      }
    }
    return best;
  }

  /// Data cost of a color under the mixture: the minimum over components of
  /// -log(weight) - log N(c; mean, cov).
  double cost(const Rgb& c) const {
    return component_cost(assign_component(c), c);
  }

  /// Refits parameters keeping the component structure: every sample joins
  /// its current best component, then weights, means and covariances are
  /// re-estimated. Components left empty keep their parameters at weight 0.
  void refit(const std::vector<Rgb>& samples) {
    if (samples.empty()) return;  // keep the previous model
    std::vector<int> assign(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
      assign[i] = assign_component(samples[i]);
    estimate(samples, assign);
  }

  const std::vector<Component>& components() const { return components_; }

 private:
  double component_cost(int k, const Rgb& c) const {
    const Component& g = components_[static_cast<std::size_t>(k)];
    const double d0 = c[0] - g.mean[0], d1 = c[1] - g.mean[1], d2 = c[2] - g.mean[2];
    const auto& m = g.inv_cov;
    const double quad = d0 * (m[0] * d0 + m[1] * d1 + m[2] * d2) +
                        d1 * (m[3] * d0 + m[4] * d1 + m[5] * d2) +
                        d2 * (m[6] * d0 + m[7] * d1 + m[8] * d2);
    return -std::log(g.weight) +
           0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + g.log_det + quad);
  }

  void estimate(const std::vector<Rgb>& samples, const std::vector<int>& assign) {
    const std::size_t k = components_.size();
    std::vector<std::size_t> counts(k, 0);
    std::vector<Rgb> sums(k, Rgb{0, 0, 0});
    for (std::size_t i = 0; i < samples.size(); ++i) {
      ++counts[assign[i]];
      for (int j = 0; j < 3; ++j) sums[assign[i]][j] += samples[i][j];
    }
    std::vector<std::array<double, 9>> scatter(k, std::array<double, 9>{});
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::size_t c = assign[i];
      const Rgb& mean = sums[c];  // not yet divided; handled below
      (void)mean;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          scatter[c][a * 3 + b] += samples[i][a] * samples[i][b];
    }
    for (std::size_t c = 0; c < k; ++c) {
      Component& g = components_[c];
      if (counts[c] == 0) {
        g.weight = 0.0;
        continue;
      }
      const double n = static_cast<double>(counts[c]);
      g.weight = n / static_cast<double>(samples.size());
      for (int j = 0; j < 3; ++j) g.mean[j] = sums[c][j] / n;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          g.cov[a * 3 + b] = scatter[c][a * 3 + b] / n - g.mean[a] * g.mean[b];
      for (int j = 0; j < 3; ++j) g.cov[j * 3 + j] += reg_;
      invert(g);
    }
  }

  static void invert(Component& g) {
    const auto& m = g.cov;
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                       m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    if (!(det > 0))
      throw std::logic_error("Gmm: covariance not positive definite");
    g.log_det = std::log(det);
    const double inv = 1.0 / det;
    g.inv_cov = {(m[4] * m[8] - m[5] * m[7]) * inv, (m[2] * m[7] - m[1] * m[8]) * inv,
                 (m[1] * m[5] - m[2] * m[4]) * inv, (m[5] * m[6] - m[3] * m[8]) * inv,
                 (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
                 (m[3] * m[7] - m[4] * m[6]) * inv, (m[1] * m[6] - m[0] * m[7]) * inv,
                 (m[0] * m[4] - m[1] * m[3]) * inv};
  }

  double reg_ = 0.01;
  std::vector<Component> components_;
};

/// Binary foreground indicator over a box's pixel extent.
struct BinaryMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

struct GrabCutParams {
  int iterations = 5;
  int components = 5;         // GMM size per side
  double lambda_smooth = 50;  // neighbor coupling strength
  double cov_reg = 0.01;      // covariance diagonal regularizer

  void validate() const {
    if (iterations < 0) throw std::invalid_argument("GrabCutParams: iterations < 0");
    if (components < 1) throw std::invalid_argument("GrabCutParams: components < 1");
    if (!(lambda_smooth >= 0)) throw std::invalid_argument("GrabCutParams: bad lambda");
    if (!(cov_reg > 0)) throw std::invalid_argument("GrabCutParams: bad cov_reg");
  }
};

struct GrabCutResult {
  BinaryMask foreground;             // over the box's pixel extent
  std::vector<double> energy_trace;  // energy after setup and each iteration
};

namespace detail {

struct GrabCutState {
  const ImageRgb* image;
  PixelRect rect;
  std::vector<Rgb> colors;           // whole image, row-major
  std::vector<std::uint8_t> fg;      // current labels, whole image
  double beta = 0.0;
  double lambda = 50.0;

  Rgb color(int x, int y) const {
    return colors[static_cast<std::size_t>(y) * image->width + x];
  }
  bool label(int x, int y) const {
    return fg[static_cast<std::size_t>(y) * image->width + x] != 0;
  }

  double smoothness(int x0, int y0, int x1, int y1) const {
    const double w = (x0 != x1 && y0 != y1) ? 1.0 / std::numbers::sqrt2 : 1.0;
    return lambda * w *
           std::exp(-beta * sq_dist(color(x0, y0), color(x1, y1)));
  }
};

// Neighbor offsets covering each 8-connected pair exactly once.
inline constexpr int kPairOffsets[4][2] = {{1, 0}, {0, 1}, {1, 1}, {-1, 1}};

inline double total_energy(const GrabCutState& st, const Gmm& fg_gmm,
                           const Gmm& bg_gmm) {
  const int w = st.image->width, h = st.image->height;
  double data = 0.0, smooth = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      data += st.label(x, y) ? fg_gmm.cost(st.color(x, y))
                             : bg_gmm.cost(st.color(x, y));
      for (const auto& o : kPairOffsets) {
        const int nx = x + o[0], ny = y + o[1];
        if (nx < 0 || nx >= w || ny >= h) continue;
        if (st.label(x, y) != st.label(nx, ny))
          smooth += st.smoothness(x, y, nx, ny);
      }
    }
  return data + smooth;
}

}  // namespace detail

/// Box-seeded binary segmentation by iterated GMM refitting and min-cut
/// relabeling. Pixels outside the box are definite background; pixels inside
/// start as foreground and are relabeled by each cut. The returned trace
/// holds the energy after model setup and after every iteration; it is
/// non-increasing.
inline GrabCutResult grabcut(const ImageRgb& image, const Box& box,
                             const GrabCutParams& params, std::uint64_t seed) {
  params.validate();
  const int w = image.width, h = image.height;
  const PixelRect rect = pixel_extent(box, w, h);
  if (rect.empty())
    throw std::invalid_argument("grabcut: box does not cover any pixel");
  if (rect.pixel_count() < params.components)
    throw std::invalid_argument("grabcut: box smaller than the GMM size");

  GrabCutResult result;
  result.foreground = BinaryMask(rect.width(), rect.height(), 1);
  if (params.iterations == 0) return result;  // initial trimap as-is

  // Degenerate separation: a single-color image carries no evidence to tell
  // the sides apart; the whole box stays foreground.
  const auto first = image.pixel(0, 0);
  bool uniform = true;
  for (int y = 0; y < h && uniform; ++y)
    for (int x = 0; x < w; ++x)
      if (image.pixel(x, y) != first) {
        uniform = false;
        break;
      }
  if (uniform) return result;

  detail::GrabCutState st;
  st.image = &image;
  st.rect = rect;
  st.lambda = params.lambda_smooth;
  st.colors.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      st.colors[static_cast<std::size_t>(y) * w + x] = to_rgb(image.pixel(x, y));

  // Contrast normalization over every 8-neighbor pair of the image.
  double sum = 0.0;
  std::size_t pairs = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (const auto& o : detail::kPairOffsets) {
        const int nx = x + o[0], ny = y + o[1];
        if (nx < 0 || nx >= w || ny >= h) continue;
        sum += sq_dist(st.color(x, y), st.color(nx, ny));
        ++pairs;
      }
  const double mean = pairs ? sum / static_cast<double>(pairs) : 0.0;
  st.beta = mean > 0 ? 1.0 / (2.0 * mean) : 0.0;

  st.fg.assign(static_cast<std::size_t>(w) * h, 0);
  for (int y = rect.y0; y < rect.y1; ++y)
    for (int x = rect.x0; x < rect.x1; ++x)
      st.fg[static_cast<std::size_t>(y) * w + x] = 1;

  auto side_samples = [&](bool fg_side) {
    std::vector<Rgb> s;
    for (std::size_t i = 0; i < st.colors.size(); ++i)
      if ((st.fg[i] != 0) == fg_side) s.push_back(st.colors[i]);
    return s;
  };

  Rng fg_rng(mix_seed(seed, 1)), bg_rng(mix_seed(seed, 2));
  const std::vector<Rgb> bg0 = side_samples(false);
  if (bg0.empty())
    throw std::invalid_argument("grabcut: box covers the whole image");
  Gmm fg_gmm = Gmm::fit(side_samples(true), params.components, params.cov_reg, fg_rng);
  Gmm bg_gmm = Gmm::fit(bg0, params.components, params.cov_reg, bg_rng);

  result.energy_trace.push_back(detail::total_energy(st, fg_gmm, bg_gmm));

  const int nodes = static_cast<int>(rect.pixel_count());
  auto node_of = [&](int x, int y) {
    return (y - rect.y0) * rect.width() + (x - rect.x0);
  };

  for (int iter = 0; iter < params.iterations; ++iter) {
    if (iter > 0) {
      // Component reassignment and parameter refit on the current labels.
      fg_gmm.refit(side_samples(true));
      bg_gmm.refit(side_samples(false));
    }

    // Graph over box pixels; source side = foreground. Cutting the arc to
    // the sink pays the foreground data cost, cutting the source arc pays
    // the background cost; boundary smoothness folds into the sink arc since
    // everything outside the box is hard background.
    FlowNetwork net(nodes + 2, nodes, nodes + 1);
    for (int y = rect.y0; y < rect.y1; ++y) {
      for (int x = rect.x0; x < rect.x1; ++x) {
        const Rgb c = st.color(x, y);
        const double d_fg = fg_gmm.cost(c);
        const double d_bg = bg_gmm.cost(c);
        // Densities above 1 make costs negative; shifting both terminal arcs
        // by the per-pixel minimum keeps capacities non-negative without
        // changing the cut.
        const double shift = std::min(d_fg, d_bg);
        double to_sink = d_fg - shift;
        const double to_node = d_bg - shift;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            if (rect.contains(nx, ny)) {
              // Undirected neighbor arcs, added once per pair.
              if (dy > 0 || (dy == 0 && dx > 0))
                net.add_arc(node_of(x, y), node_of(nx, ny),
                            st.smoothness(x, y, nx, ny));
            } else {
              to_sink += st.smoothness(x, y, nx, ny);
            }
          }
        net.add_arc(nodes, node_of(x, y), to_node);
        net.add_arc(node_of(x, y), nodes + 1, to_sink);
      }
    }
    // Interior arcs must carry flow both ways.
    // (add_arc creates a zero reverse; add the mirrored arc explicitly.)
    // Remark: done inline above by adding each pair once and the mirror here.
    const MaxFlowResult cut = max_flow(net);
    for (int y = rect.y0; y < rect.y1; ++y)
      for (int x = rect.x0; x < rect.x1; ++x)
        st.fg[static_cast<std::size_t>(y) * w + x] =
            cut.source_side[static_cast<std::size_t>(node_of(x, y))] ? 1 : 0;

    const double energy = detail::total_energy(st, fg_gmm, bg_gmm);
    if (energy > result.energy_trace.back() * (1 + 1e-12) + 1e-9)
      throw std::logic_error("grabcut: energy increased");
    result.energy_trace.push_back(energy);

    // Safety: a cut can empty the foreground; further iterations then keep
    // the labeling, so stop early.
    bool any_fg = false;
    for (int y = rect.y0; y < rect.y1 && !any_fg; ++y)
      for (int x = rect.x0; x < rect.x1; ++x)
        if (st.label(x, y)) {
          any_fg = true;
          break;
        }
    if (!any_fg) break;
  }

  for (int y = rect.y0; y < rect.y1; ++y)
    for (int x = rect.x0; x < rect.x1; ++x)
      result.foreground.at(x - rect.x0, y - rect.y0) = st.label(x, y) ? 1 : 0;
  return result;
}

inline GrabCutResult grabcut(const ImageRgb& image, const Box& box,
                             std::uint64_t seed) {
  return grabcut(image, box, GrabCutParams{}, seed);
}

}  // namespace boxmask
