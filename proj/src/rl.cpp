#include "gansearch/rl.hpp"

#include <cmath>
#include <unordered_set>

#include "gansearch/errors.hpp"

namespace gansearch {

BaselineState update_baseline(BaselineState state, double reward) {
  if (!std::isfinite(reward))
    throw NumericError("update_baseline: non-finite reward " + std::to_string(reward));
  if (!state.initialized) {
    state.value = reward;
    state.initialized = true;
  } else {
    state.value = state.decay * state.value + (1.0 - state.decay) * reward;
  }
  return state;
}

ReinforceStats reinforce_update(ControllerState& ctrl, const SampleTrace& trace, double reward,
                                BaselineState& baseline, double entropy_weight, const AdamHp& hp) {
  if (trace.stage != ctrl.stage)
    throw StateError("reinforce_update: trace stage " + std::to_string(trace.stage) +
                     " vs controller stage " + std::to_string(ctrl.stage));
  if (!std::isfinite(reward))
    throw NumericError("reinforce_update: non-finite reward");

  const Tensor* seed = trace.seed_hidden.numel() > 0 ? &trace.seed_hidden : nullptr;
  GradientContext g;
  ScoreResult score = log_prob_and_entropy(g, ctrl, trace.tokens, seed);

  ReinforceStats stats;
  stats.advantage = reward - (baseline.initialized ? baseline.value : 0.0);
  stats.total_log_prob = g.value(score.total_log_prob).scalar();
  stats.total_entropy = g.value(score.total_entropy).scalar();

  Value loss = add(g, affine(g, score.total_log_prob, -static_cast<float>(stats.advantage), 0.0f),
                   affine(g, score.total_entropy, -static_cast<float>(entropy_weight), 0.0f));
  stats.surrogate_loss = g.value(loss).scalar();
  g.backward(loss);

  std::unordered_set<const Parameter*> touched;
  for (const Parameter* p : g.touched_parameters()) touched.insert(p);
  for (auto& [name, p] : ctrl.params) {
    if (!touched.count(&p)) continue;
    adam_step(name, p, hp);
    p.zero_grad();
  }

  baseline = update_baseline(baseline, reward);
  return stats;
}

}  // namespace gansearch
