#include "geoctx/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "geoctx/error.hpp"

namespace geoctx::seq {

GridSpec::Cell GridSpec::decode(std::uint64_t index) const {
  const std::uint64_t n = loop_frames();
  const std::uint64_t local = index % n;
  return {static_cast<std::uint32_t>(index / n), static_cast<std::uint32_t>(local / cols),
          static_cast<std::uint32_t>(local % cols)};
}

std::size_t GridWalk::fallback_count() const {
  return static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), true));
}

GridWalk grid_walk_from(const GridSpec& spec, std::size_t length, std::uint32_t row, std::uint32_t col, Rng& rng) {
  if (spec.rows == 0 || spec.cols == 0) throw ConfigError("grid walk: grid must have at least one cell");
  if (length == 0) throw ConfigError("grid walk: length must be at least 1");
  if (row >= spec.rows || col >= spec.cols) throw ConfigError("grid walk: start cell outside the grid");

  GridWalk out;
  out.indices.reserve(length);
  std::optional<std::pair<std::uint32_t, std::uint32_t>> prev;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cand, all;
  for (std::size_t t = 0; t < length; ++t) {
    out.indices.push_back(spec.encode(row, col));
    if (t + 1 == length) break;
    cand.clear();
    all.clear();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const std::int64_t r = static_cast<std::int64_t>(row) + dr;
        const std::int64_t c = static_cast<std::int64_t>(col) + dc;
        if (r < 0 || c < 0 || r >= spec.rows || c >= spec.cols) continue;
        const std::pair<std::uint32_t, std::uint32_t> cell{static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)};
        all.push_back(cell);
        if (!prev || *prev != cell) cand.push_back(cell);
      }
    }
    bool fell_back = false;
    if (cand.empty()) {
      cand = all;
      fell_back = true;
    }
    prev = std::make_pair(row, col);
    if (!cand.empty()) {
      const auto pick = cand[rng.below(cand.size())];
      row = pick.first;
      col = pick.second;
    }
    out.fallback.push_back(fell_back);
  }
  return out;
}

GridWalk grid_walk(const GridSpec& spec, std::size_t length, std::uint64_t seed) {
  if (spec.rows == 0 || spec.cols == 0) throw ConfigError("grid walk: grid must have at least one cell");
  Rng rng(seed);
  const auto r = static_cast<std::uint32_t>(rng.below(spec.rows));
  const auto c = static_cast<std::uint32_t>(rng.below(spec.cols));
  return grid_walk_from(spec, length, r, c, rng);
}

// ------------------------------------------------------------------ streets

std::vector<Street> identify_streets(std::span<const geom::Pose> frames, double eps) {
  if (!(eps > 0.0)) throw ConfigError("street identification: eps must be positive");
  std::vector<Street> streets;
  std::size_t start = 0;
  while (start < frames.size()) {
    std::vector<geom::Vec3> unique;
    std::size_t n = 0;
    for (std::size_t f = start; f < frames.size(); ++f) {
      const geom::Vec3 p = frames[f].translation;
      const bool dup = std::any_of(unique.begin(), unique.end(), [&](const geom::Vec3& u) { return (u - p).norm() <= eps; });
      if (dup) {
        n = unique.size();
        break;
      }
      unique.push_back(p);
    }
    if (n == 0)
      throw ShapeError("street starting at frame " + std::to_string(start) +
                       ": viewpoint 0 never repeats a position; stream is truncated or malformed");
    if (start + kViewpoints * n > frames.size())
      throw ShapeError("street starting at frame " + std::to_string(start) + " has N = " + std::to_string(n) +
                       " but only " + std::to_string(frames.size() - start) + " frames remain; need " +
                       std::to_string(kViewpoints * n));
    for (int v = 1; v < kViewpoints; ++v)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t f = start + v * n + i;
        if ((frames[f].translation - unique[i]).norm() > eps)
          throw ShapeError("street starting at frame " + std::to_string(start) + ": frame " + std::to_string(f) +
                           " (viewpoint " + std::to_string(v) + ", position " + std::to_string(i) +
                           ") does not revisit the viewpoint-0 position");
      }
    Street s;
    s.first_frame = start;
    s.positions = n;
    s.poses.assign(frames.begin() + static_cast<std::ptrdiff_t>(start),
                   frames.begin() + static_cast<std::ptrdiff_t>(start + kViewpoints * n));
    streets.push_back(std::move(s));
    start += kViewpoints * n;
  }
  return streets;
}

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

std::optional<Eigen::Vector2d> segment_intersection(const Eigen::Vector2d& p, const Eigen::Vector2d& p2,
                                                    const Eigen::Vector2d& q, const Eigen::Vector2d& q2) {
  const Eigen::Vector2d r = p2 - p, s = q2 - q;
  const double denom = cross2(r, s);
  const double scale = r.norm() * s.norm();
  if (scale == 0.0 || std::abs(denom) <= 1e-12 * scale) return std::nullopt;
  const double t = cross2(q - p, s) / denom;
  const double u = cross2(q - p, r) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return Eigen::Vector2d(p + t * r);
}

Eigen::Vector2d xy(const geom::Vec3& v) { return {v.x(), v.y()}; }

}  // namespace

StreetNetwork detect_intersections(std::vector<Street> streets, double d_ext) {
  if (streets.empty()) throw ConfigError("intersection detection needs at least one street");
  if (d_ext < 0.0) throw ConfigError("segment extension must be non-negative");
  StreetNetwork net;
  net.streets = std::move(streets);
  const std::size_t s = net.streets.size();
  std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> seg(s);
  std::vector<bool> usable(s, false);
  for (std::size_t i = 0; i < s; ++i) {
    const Street& st = net.streets[i];
    const Eigen::Vector2d a = xy(st.position(0)), b = xy(st.position(st.positions - 1));
    const double len = (b - a).norm();
    if (st.positions < 2 || len == 0.0) continue;
    const Eigen::Vector2d u = (b - a) / len;
    seg[i] = {a - d_ext * u, b + d_ext * u};
    usable[i] = true;
  }
  net.adjacency.assign(s, {});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) {
      if (!usable[i] || !usable[j]) continue;
      if (auto p = segment_intersection(seg[i].first, seg[i].second, seg[j].first, seg[j].second)) {
        net.adjacency[i].push_back(net.edges.size());
        net.adjacency[j].push_back(net.edges.size());
        net.edges.push_back({i, j, *p});
      }
    }
  for (std::size_t i = 0; i < s; ++i)
    std::sort(net.adjacency[i].begin(), net.adjacency[i].end(),
              [&](std::size_t x, std::size_t y) { return net.other(x, i) < net.other(y, i); });
  return net;
}

int best_viewpoint(const Street& street, std::size_t index, const geom::Vec3& forward) {
  int best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < kViewpoints; ++v) {
    const double d = forward.dot(street.pose(v, index).rotation.col(2));
    if (d > best_dot) {
      best_dot = d;
      best = v;
    }
  }
  return best;
}

namespace {

double xy_distance(const Street& s, std::size_t i, const Eigen::Vector2d& p) { return (xy(s.position(i)) - p).norm(); }

StreetWalkState switch_street(const StreetNetwork& net, const StreetWalkState& cur, std::size_t edge) {
  const Street& from = net.streets[cur.street];
  const std::size_t next = net.other(edge, cur.street);
  const Street& to = net.streets[next];
  const Eigen::Vector2d& x = net.edges[edge].point;

  StreetWalkState out;
  out.street = next;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < to.positions; ++i) {
    const double d = xy_distance(to, i, x);
    if (d < best) {
      best = d;
      out.index = i;
    }
  }
  out.viewpoint = best_viewpoint(to, out.index, from.pose(cur.viewpoint, cur.index).rotation.col(2));
  if (to.positions == 1) {
    out.direction = 1;
  } else if (out.index == 0) {
    out.direction = 1;
  } else if (out.index + 1 == to.positions) {
    out.direction = -1;
  } else {
    const double fwd = xy_distance(to, out.index + 1, x);
    const double back = xy_distance(to, out.index - 1, x);
    out.direction = back > fwd ? -1 : 1;
  }
  return out;
}

}  // namespace

std::vector<StreetStep> street_walk_from(const StreetNetwork& net, std::size_t length,
                                         const StreetWalkOptions& options, StreetWalkState st, Rng& rng) {
  if (net.streets.empty()) throw ConfigError("street walk: empty network");
  if (st.street >= net.streets.size() || st.index >= net.streets[st.street].positions)
    throw ConfigError("street walk: start state outside the network");
  if (st.viewpoint < 0 || st.viewpoint >= kViewpoints || (st.direction != 1 && st.direction != -1))
    throw ConfigError("street walk: invalid start viewpoint or direction");

  std::vector<StreetStep> out;
  out.reserve(length);
  // An intersection just used for a switch is ignored until the walker has
  // moved d_prox away from it; otherwise p_turn = 1 would switch back at once.
  std::optional<std::size_t> suppressed;
  std::vector<std::size_t> nearby;

  for (std::size_t t = 0; t < length; ++t) {
    const Street& s = net.streets[st.street];
    out.push_back({st.street, st.index, st.viewpoint, s.frame(st.viewpoint, st.index)});

    if (suppressed && xy_distance(s, st.index, net.edges[*suppressed].point) >= options.d_prox) suppressed.reset();

    const auto next = static_cast<std::int64_t>(st.index) + st.direction;
    if (next < 0 || next >= static_cast<std::int64_t>(s.positions)) {
      if (net.degree(st.street) <= 1) {
        st.direction = -st.direction;
        const auto back = static_cast<std::int64_t>(st.index) + st.direction;
        if (back >= 0 && back < static_cast<std::int64_t>(s.positions)) st.index = static_cast<std::size_t>(back);
      } else {
        const auto& adj = net.adjacency[st.street];
        const std::size_t edge = adj[rng.below(adj.size())];
        st = switch_street(net, st, edge);
        suppressed = edge;
      }
      continue;
    }

    nearby.clear();
    for (std::size_t e : net.adjacency[st.street])
      if (e != suppressed && xy_distance(s, st.index, net.edges[e].point) < options.d_prox) nearby.push_back(e);
    if (!nearby.empty() && rng.uniform() < options.p_turn) {
      const std::size_t edge = nearby[rng.below(nearby.size())];
      st = switch_street(net, st, edge);
      suppressed = edge;
      continue;
    }
    st.index = static_cast<std::size_t>(next);
  }
  return out;
}

std::vector<StreetStep> street_walk(const StreetNetwork& net, std::size_t length, const StreetWalkOptions& options,
                                    std::uint64_t seed) {
  if (net.streets.empty()) throw ConfigError("street walk: empty network");
  if (options.p_turn < 0.0 || options.p_turn > 1.0) throw ConfigError("street walk: p_turn must be in [0, 1]");
  if (!(options.d_prox >= 0.0)) throw ConfigError("street walk: d_prox must be non-negative");
  Rng rng(seed);
  StreetWalkState st;
  st.street = static_cast<std::size_t>(rng.below(net.streets.size()));
  st.index = static_cast<std::size_t>(rng.below(net.streets[st.street].positions));
  st.viewpoint = static_cast<int>(rng.below(4));
  st.direction = rng.below(2) == 0 ? 1 : -1;
  return street_walk_from(net, length, options, st, rng);
}

// ----------------------------------------------------------------- foldback

void foldback_step(FoldbackState& state, std::int64_t frames, std::int64_t a, std::int64_t b, Rng& rng) {
  const std::int64_t raw = state.position + state.direction * state.stride;
  if (raw >= 0 && raw < frames) {
    state.position = raw;
    return;
  }
  state.direction = -state.direction;
  const auto fits = [&](std::int64_t s) {
    const std::int64_t p = state.position + state.direction * s;
    return p >= 0 && p < frames;
  };
  std::vector<std::int64_t> options;
  for (std::int64_t s = a; s <= b; ++s)
    if (s != state.stride && fits(s)) options.push_back(s);
  if (options.empty())
    for (std::int64_t s = a; s <= b; ++s)
      if (fits(s)) options.push_back(s);
  if (options.empty()) {
    const std::int64_t edge = state.direction > 0 ? frames - 1 : 0;
    state.stride = std::max<std::int64_t>(1, std::abs(edge - state.position));
    state.position = edge;
    return;
  }
  state.stride = options[rng.below(options.size())];
  state.position += state.direction * state.stride;
}

std::vector<std::int64_t> foldback_sample_from(std::int64_t frames, std::size_t count, std::int64_t a,
                                               std::int64_t b, FoldbackState start, Rng& rng) {
  if (frames < 2) throw ConfigError("foldback: sequence must have at least 2 frames");
  if (a < 1 || a > b || b >= frames)
    throw ConfigError("foldback: stride range must satisfy 1 <= a <= b < N");
  if (start.position < 0 || start.position >= frames) throw ConfigError("foldback: start outside the sequence");
  std::vector<std::int64_t> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(start.position);
    if (i + 1 < count) foldback_step(start, frames, a, b, rng);
  }
  return out;
}

std::vector<std::int64_t> foldback_sample(std::int64_t frames, std::size_t count, std::int64_t a, std::int64_t b,
                                          std::uint64_t seed) {
  if (frames < 2) throw ConfigError("foldback: sequence must have at least 2 frames");
  if (a < 1 || a > b || b >= frames)
    throw ConfigError("foldback: stride range must satisfy 1 <= a <= b < N");
  Rng rng(seed);
  FoldbackState st;
  st.position = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(frames)));
  st.stride = a + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(b - a + 1)));
  st.direction = rng.below(2) == 0 ? 1 : -1;
  return foldback_sample_from(frames, count, a, b, st, rng);
}

}  // namespace geoctx::seq
