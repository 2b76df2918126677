#pragma once

// Clock frequency planning. All RF clocks are integer hertz so the balance
// conditions are exact arithmetic, never floating-point comparisons.
//
// Conventions for a two-node link (nodes A and B, midpoint between them):
//   omega_tot  = (omega_fast_A + omega_loc_A) - (omega_fast_B + omega_loc_B)
//   omega_glob = omega_fast_A - omega_fast_B
// omega_tot is the net frequency offset the interfering signal fields would
// carry; a balanced plan makes it exactly zero. omega_glob is the midpoint
// beat used by the slow counting loop.

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasesync/dsp.hpp"

namespace phasesync {

struct FrequencyPlan {
  std::int64_t omega_loc_a_hz = 0;
  std::int64_t omega_loc_b_hz = 0;
  std::int64_t omega_fast_a_hz = 0;
  std::int64_t omega_fast_b_hz = 0;
};

struct PlanCheck {
  std::int64_t omega_tot_hz = 0;
  std::int64_t omega_glob_hz = 0;
  bool balanced = false;
};

inline PlanCheck check_plan(const FrequencyPlan& p) {
  PlanCheck c;
  c.omega_tot_hz = (p.omega_fast_a_hz + p.omega_loc_a_hz) -
                   (p.omega_fast_b_hz + p.omega_loc_b_hz);
  c.omega_glob_hz = p.omega_fast_a_hz - p.omega_fast_b_hz;
  c.balanced = (c.omega_tot_hz == 0);
  return c;
}

// Exact-integer plan for a requested midpoint beat: the fast clocks split by
// the full target, the local clocks split by half of it in the opposite
// direction (asymmetrically for odd targets) so omega_tot cancels exactly.
inline FrequencyPlan solve_plan(std::int64_t target_glob_hz, std::int64_t fast_center_hz,
                                std::int64_t loc_center_hz) {
  if (fast_center_hz <= 0 || loc_center_hz <= 0)
    throw std::invalid_argument("clock centers must be positive");
  const std::int64_t g = target_glob_hz;
  const std::int64_t half_down = g >= 0 ? g / 2 : -((-g + 1) / 2);  // floor(g/2)
  const std::int64_t half_up = g - half_down;                       // ceil(g/2)
  FrequencyPlan p;
  p.omega_fast_a_hz = fast_center_hz + g;
  p.omega_fast_b_hz = fast_center_hz;
  p.omega_loc_a_hz = loc_center_hz - half_up;
  p.omega_loc_b_hz = loc_center_hz + half_down;
  if (p.omega_loc_a_hz <= 0 || p.omega_loc_b_hz <= 0 || p.omega_fast_a_hz <= 0)
    throw std::invalid_argument("plan target pushes a clock to or below zero");
  return p;
}

// shipped default clock set: 1500 Hz midpoint beat around the standard
// 215 MHz fast and 400 MHz local centers
inline FrequencyPlan default_plan() {
  return solve_plan(1500, 215000000, 400000000);
}

struct RankedComponent {
  std::string name;
  double sigma = 0.0;
  int multiplicity = 1;
  double contribution = 0.0;  // fraction of total variance
  double sensitivity = 0.0;   // d(sigma_total)/d(sigma_i)
};

struct BudgetResult {
  double sigma_total = 0.0;
  std::vector<RankedComponent> ranked;  // descending contribution
};

// quadrature error budget with sensitivity ranking
inline BudgetResult budget(const std::vector<SigmaComponent>& components) {
  BudgetResult out;
  out.sigma_total = combine_sigmas(components);
  const double var_total = out.sigma_total * out.sigma_total;
  for (const auto& c : components) {
    RankedComponent r;
    r.name = c.name;
    r.sigma = c.sigma;
    r.multiplicity = c.multiplicity;
    const double var = static_cast<double>(c.multiplicity) * c.sigma * c.sigma;
    r.contribution = var_total > 0.0 ? var / var_total : 0.0;
    r.sensitivity = out.sigma_total > 0.0
                        ? static_cast<double>(c.multiplicity) * c.sigma / out.sigma_total
                        : 0.0;
    out.ranked.push_back(r);
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const RankedComponent& a, const RankedComponent& b) {
                     return a.contribution > b.contribution;
                   });
  return out;
}

struct NodeClocks {
  int node = 0;  // 1-based
  std::int64_t omega_fast_hz = 0;
  std::int64_t omega_loc_hz = 0;
};

struct StarPlan {
  std::vector<NodeClocks> nodes;
  std::vector<std::int64_t> pairwise_beats_hz;  // |fast_j - fast_k| for j < k
};

namespace detail {
// greedy Sidon (B2) sequence: all pairwise differences distinct
inline std::vector<std::int64_t> sidon_prefix(std::size_t count) {
  std::vector<std::int64_t> seq;
  std::set<std::int64_t> diffs;
  std::int64_t candidate = 1;
  while (seq.size() < count) {
    bool ok = true;
    std::vector<std::int64_t> fresh;
    for (std::int64_t a : seq) {
      const std::int64_t d = candidate - a;
      if (diffs.count(d)) {
        ok = false;
        break;
      }
      fresh.push_back(d);
    }
    if (ok) {
      seq.push_back(candidate);
      diffs.insert(fresh.begin(), fresh.end());
    }
    ++candidate;
  }
  return seq;
}
}  // namespace detail

// Star extension to n nodes sharing one midpoint: every node keeps
// omega_fast + omega_loc equal to the base plan's common sum, so every pair
// is balanced; fast clocks are offset along a scaled Sidon sequence, which
// makes all pairwise midpoint beats distinct. For n = 2 this returns exactly
// the base plan's two clock pairs.
inline StarPlan extend_star(const FrequencyPlan& base, int n_nodes,
                            std::int64_t max_beat_hz = 10000) {
  if (n_nodes < 2) throw std::invalid_argument("star needs at least 2 nodes");
  if (max_beat_hz < 1) throw std::invalid_argument("max beat must be >= 1 Hz");
  const PlanCheck chk = check_plan(base);
  if (!chk.balanced)
    throw std::invalid_argument("star extension requires a balanced base plan");
  const std::int64_t g = std::abs(chk.omega_glob_hz);
  if (g == 0) throw std::invalid_argument("base plan has no midpoint beat");

  const auto sidon = detail::sidon_prefix(static_cast<std::size_t>(n_nodes));
  std::vector<std::int64_t> offsets(sidon.size());
  for (std::size_t k = 0; k < sidon.size(); ++k) offsets[k] = sidon[k] - sidon.front();
  const std::int64_t span = offsets.back();
  std::int64_t unit = std::min<std::int64_t>(g, max_beat_hz / span);
  if (unit < 1)
    throw std::invalid_argument("cannot fit " + std::to_string(n_nodes) +
                                " nodes under the pairwise beat ceiling");

  const std::int64_t sum = base.omega_fast_b_hz + base.omega_loc_b_hz;
  StarPlan star;
  for (int node = 1; node <= n_nodes; ++node) {
    // node 1 takes the largest offset so the two-node case reproduces A, B
    const std::int64_t off = offsets[static_cast<std::size_t>(n_nodes - node)] * unit;
    NodeClocks nc;
    nc.node = node;
    nc.omega_fast_hz = base.omega_fast_b_hz + off;
    nc.omega_loc_hz = sum - nc.omega_fast_hz;
    if (nc.omega_loc_hz <= 0 || nc.omega_fast_hz <= 0)
      throw std::invalid_argument("star offsets push a clock to or below zero");
    star.nodes.push_back(nc);
  }
  for (std::size_t j = 0; j < star.nodes.size(); ++j)
    for (std::size_t k = j + 1; k < star.nodes.size(); ++k)
      star.pairwise_beats_hz.push_back(
          std::abs(star.nodes[j].omega_fast_hz - star.nodes[k].omega_fast_hz));
  return star;
}

}  // namespace phasesync
