// From clock frequencies to an expected readout fringe: lay out a balanced
// plan, stack the per-loop jitter budget, and see what contrast survives.

#include <cstdio>

#include "phasesync/dsp.hpp"
#include "phasesync/planner.hpp"

using namespace phasesync;

int main() {
  const FrequencyPlan plan = default_plan();
  const PlanCheck chk = check_plan(plan);
  std::printf("clock plan (Hz):\n");
  std::printf("  loc_a %11lld   loc_b %11lld\n",
              static_cast<long long>(plan.omega_loc_a_hz),
              static_cast<long long>(plan.omega_loc_b_hz));
  std::printf("  fast_a %10lld   fast_b %10lld\n",
              static_cast<long long>(plan.omega_fast_a_hz),
              static_cast<long long>(plan.omega_fast_b_hz));
  std::printf("net detuning %lld Hz, midpoint beat %lld Hz\n\n",
              static_cast<long long>(chk.omega_tot_hz),
              static_cast<long long>(chk.omega_glob_hz));

  // two nodes contribute a local and a fast loop each, the midpoint one more
  const std::vector<SigmaComponent> parts = {
      {"local", 12.0, 2}, {"fast", 21.0, 2}, {"global", 8.0, 1}};
  const BudgetResult bud = budget(parts);
  std::printf("jitter budget (deg):\n");
  for (const auto& r : bud.ranked)
    std::printf("  %-7s %5.1f x%d  -> %4.1f%% of variance\n", r.name.c_str(),
                r.sigma, r.multiplicity, 100.0 * r.contribution);
  std::printf("quadrature total: %.1f deg\n", bud.sigma_total);

  const double sigma_rad = bud.sigma_total * pi / 180.0;
  std::printf("expected fringe contrast exp(-sigma^2/2): %.3f\n",
              contrast_from_sigma(sigma_rad));
  return 0;
}
