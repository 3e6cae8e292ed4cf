#include "gansearch/controller.hpp"

#include <cmath>

#include "gansearch/errors.hpp"

namespace gansearch {

int ControllerState::embed_rows() const {
  int rows = 1;
  for (int t = 0; t < spec.slot_count(); ++t) rows += spec.vocab(t);
  return rows;
}

int ControllerState::embed_row_index(int slot, int value) const {
  int row = 1;
  for (int t = 0; t < slot; ++t) row += spec.vocab(t);
  return row + value;
}

ControllerState new_stage_controller(int stage, int hidden_size, Rng& rng) {
  if (stage < 0) throw ConfigError("new_stage_controller: stage must be >= 0");
  if (hidden_size < 1) throw ConfigError("new_stage_controller: hidden_size must be >= 1");
  ControllerState ctrl;
  ctrl.stage = stage;
  ctrl.hidden_size = hidden_size;
  ctrl.spec = TokenSpec{stage};
  const int H = hidden_size;
  const float ws = 1.0f / std::sqrt(static_cast<float>(H));
  ctrl.params.emplace("ctrl.lstm.wih", Parameter(Tensor::randn({4 * H, H}, rng, ws)));
  ctrl.params.emplace("ctrl.lstm.whh", Parameter(Tensor::randn({4 * H, H}, rng, ws)));
  ctrl.params.emplace("ctrl.lstm.b", Parameter(Tensor::zeros({4 * H})));
  ctrl.params.emplace("ctrl.embed", Parameter(Tensor::randn({ctrl.embed_rows(), H}, rng, ws)));
  for (int t = 0; t < ctrl.spec.slot_count(); ++t) {
    const std::string hp = "ctrl.head" + std::to_string(t) + ".";
    // near-zero heads start the policy close to uniform
    ctrl.params.emplace(hp + "w", Parameter(Tensor::randn({ctrl.spec.vocab(t), H}, rng, 0.01f)));
    ctrl.params.emplace(hp + "b", Parameter(Tensor::zeros({ctrl.spec.vocab(t)})));
  }
  return ctrl;
}

namespace {

Parameter& cparam(const ControllerState& ctrl, const std::string& name) {
  auto it = const_cast<ParamMap&>(ctrl.params).find(name);
  if (it == ctrl.params.end()) throw StateError("controller: missing parameter '" + name + "'");
  return it->second;
}

void check_seed(const ControllerState& ctrl, const Tensor* seed) {
  if (ctrl.stage == 0 && seed != nullptr)
    throw StateError("controller: stage 0 takes no seed_hidden");
  if (ctrl.stage > 0 && seed == nullptr)
    throw StateError("controller: stage " + std::to_string(ctrl.stage) +
                     " requires a beam seed_hidden");
  if (seed && seed->numel() != ctrl.hidden_size)
    throw ShapeError("controller: seed_hidden has " + std::to_string(seed->numel()) +
                     " elements, hidden size is " + std::to_string(ctrl.hidden_size));
}

// Walks the unrolled LSTM over the slots. When `tokens` is supplied the walk
// re-scores it; otherwise tokens are sampled with `rng`. Shared by
// sample_cell and log_prob_and_entropy so both produce identical numbers.
struct Walk {
  std::vector<int> tokens;
  std::vector<float> log_probs;
  std::vector<float> entropies;
  Value total_log_prob;
  Value total_entropy;
  Value last_hidden;
};

Walk run_controller(GradientContext& g, const ControllerState& ctrl,
                    const std::vector<int>* tokens, Rng* rng, const Tensor* seed) {
  check_seed(ctrl, seed);
  const int H = ctrl.hidden_size;
  if (tokens && static_cast<int>(tokens->size()) != ctrl.spec.slot_count())
    throw DataError("controller: " + std::to_string(tokens->size()) + " tokens for " +
                    std::to_string(ctrl.spec.slot_count()) + " slots");

  Value wih = g.leaf(cparam(ctrl, "ctrl.lstm.wih"));
  Value whh = g.leaf(cparam(ctrl, "ctrl.lstm.whh"));
  Value lb = g.leaf(cparam(ctrl, "ctrl.lstm.b"));
  Value embed = g.leaf(cparam(ctrl, "ctrl.embed"));

  Value h;
  if (seed) {
    Tensor h0({1, H});
    for (int i = 0; i < H; ++i) h0[i] = (*seed)[i];
    h = g.constant(std::move(h0));
  } else {
    h = g.constant(Tensor({1, H}));
  }
  Value c = g.constant(Tensor({1, H}));
  Value x = embed_row(g, embed, 0);

  Walk walk;
  for (int t = 0; t < ctrl.spec.slot_count(); ++t) {
    auto [h2, c2] = lstm_step(g, x, h, c, wih, whh, lb);
    h = h2;
    c = c2;
    const std::string hp = "ctrl.head" + std::to_string(t) + ".";
    Value logits = linear(g, h, g.leaf(cparam(ctrl, hp + "w")), g.leaf(cparam(ctrl, hp + "b")));
    Value lp = log_softmax_rows(g, logits);

    const Tensor& lpv = g.value(lp);
    const int V = ctrl.spec.vocab(t);
    int tok;
    if (tokens) {
      tok = (*tokens)[static_cast<size_t>(t)];
      if (tok < 0 || tok >= V)
        throw DataError("controller: token " + std::to_string(tok) + " out of range [0," +
                        std::to_string(V) + ") in slot " + ctrl.spec.slot_name(t));
    } else {
      // inverse-CDF draw over exp(lp)
      const float r = rng->uniform();
      float cum = 0.0f;
      tok = V - 1;
      for (int v = 0; v < V; ++v) {
        cum += std::exp(lpv[v]);
        if (r < cum) {
          tok = v;
          break;
        }
      }
    }
    walk.tokens.push_back(tok);
    walk.log_probs.push_back(g.value(lp)[tok]);

    Value picked = gather_rows(g, lp, {tok});
    Value probs = exp(g, lp);
    Value ent = affine(g, sum_all(g, mul(g, probs, lp)), -1.0f, 0.0f);
    walk.entropies.push_back(g.value(ent).scalar());

    walk.total_log_prob = t == 0 ? picked : add(g, walk.total_log_prob, picked);
    walk.total_entropy = t == 0 ? ent : add(g, walk.total_entropy, ent);

    x = embed_row(g, embed, ctrl.embed_row_index(t, tok));
  }
  walk.last_hidden = h;
  return walk;
}

}  // namespace

SampleTrace sample_cell(const ControllerState& ctrl, const Tensor* seed_hidden, Rng& rng) {
  GradientContext g(false);
  Walk walk = run_controller(g, ctrl, nullptr, &rng, seed_hidden);
  SampleTrace trace;
  trace.stage = ctrl.stage;
  trace.tokens = std::move(walk.tokens);
  trace.log_probs = std::move(walk.log_probs);
  trace.entropies = std::move(walk.entropies);
  const Tensor& hv = g.value(walk.last_hidden);
  trace.final_hidden = Tensor({ctrl.hidden_size});
  for (int i = 0; i < ctrl.hidden_size; ++i) trace.final_hidden[i] = hv[i];
  if (seed_hidden) trace.seed_hidden = *seed_hidden;
  return trace;
}

ScoreResult log_prob_and_entropy(GradientContext& g, const ControllerState& ctrl,
                                 const std::vector<int>& tokens, const Tensor* seed_hidden) {
  Walk walk = run_controller(g, ctrl, &tokens, nullptr, seed_hidden);
  ScoreResult res;
  res.total_log_prob = walk.total_log_prob;
  res.total_entropy = walk.total_entropy;
  res.log_probs = std::move(walk.log_probs);
  res.entropies = std::move(walk.entropies);
  return res;
}

Tensor seed_from_beam(const SampleTrace& trace) {
  if (!trace.complete()) throw StateError("seed_from_beam: incomplete trace");
  return trace.final_hidden;
}

}  // namespace gansearch
