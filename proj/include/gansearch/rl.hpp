#pragma once

#include "gansearch/controller.hpp"
#include "gansearch/optim.hpp"

namespace gansearch {

// Moving-average reward baseline. First reward initializes the value; after
// that every update is a convex combination of past rewards.
struct BaselineState {
  double value = 0.0;
  double decay = 0.9;
  bool initialized = false;
};

BaselineState update_baseline(BaselineState state, double reward);

struct ReinforceStats {
  double surrogate_loss = 0.0;
  double total_log_prob = 0.0;
  double total_entropy = 0.0;
  double advantage = 0.0;
};

// One Adam step on theta minimizing
//   -[(reward - b) * sum log pi(a_t) + entropy_weight * sum H_t],
// using the pre-update baseline b; the baseline is updated afterwards.
ReinforceStats reinforce_update(ControllerState& ctrl, const SampleTrace& trace, double reward,
                                BaselineState& baseline, double entropy_weight,
                                const AdamHp& hp);

}  // namespace gansearch
