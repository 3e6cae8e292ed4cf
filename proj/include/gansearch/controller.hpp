#pragma once

#include <optional>
#include <vector>

#include "gansearch/genotype.hpp"
#include "gansearch/networks.hpp"

namespace gansearch {

// Stage-local autoregressive LSTM policy over one cell's token slots.
// Parameters:
//   ctrl.lstm.wih [4H,H], ctrl.lstm.whh [4H,H], ctrl.lstm.b [4H]
//   ctrl.embed [1 + sum(vocab), H]   (row 0 is the learned start token)
//   ctrl.head{t}.{w,b}               (softmax classifier per slot)
struct ControllerState {
  int stage = 0;
  int hidden_size = 64;
  TokenSpec spec;
  ParamMap params;

  int embed_rows() const;
  // Row of the (slot, value) embedding; row 0 is the start token.
  int embed_row_index(int slot, int value) const;
};

// One sampled cell: tokens plus everything needed to re-score the sample and
// to seed the next stage's controller. seed_hidden is empty at stage 0.
struct SampleTrace {
  int stage = 0;
  std::vector<int> tokens;
  std::vector<float> log_probs;
  std::vector<float> entropies;
  Tensor final_hidden;  // [H]
  Tensor seed_hidden;   // [H] or empty; the sampling input, kept for re-scoring

  bool complete() const {
    return !tokens.empty() && tokens.size() == log_probs.size() &&
           tokens.size() == entropies.size() && final_hidden.numel() > 0;
  }
};

// Fresh theta for the stage's token spec.
ControllerState new_stage_controller(int stage, int hidden_size, Rng& rng);

// Autoregressive sampling; each step's sampled token is embedded and fed to
// the next step. seed_hidden must be present iff stage > 0 (beam hand-off,
// entering as the initial LSTM hidden state with a zero cell state).
SampleTrace sample_cell(const ControllerState& ctrl, const Tensor* seed_hidden, Rng& rng);

struct ScoreResult {
  Value total_log_prob;
  Value total_entropy;
  std::vector<float> log_probs;
  std::vector<float> entropies;
};

// Differentiable re-scoring of a token sequence: the same per-step
// log-probabilities and entropies sample_cell would record.
ScoreResult log_prob_and_entropy(GradientContext& g, const ControllerState& ctrl,
                                 const std::vector<int>& tokens, const Tensor* seed_hidden);

// The stored final hidden vector, for the next stage's seed_hidden.
Tensor seed_from_beam(const SampleTrace& trace);

}  // namespace gansearch
