#pragma once

#include <cstdint>
#include <string>

namespace gansearch {

// Search engine configuration. The defaults are the desk profile: a full
// multi-level search on the synthetic dataset sized for a couple of CPU
// cores. configs/full.cfg in the repository carries the full-scale values.
struct SearchConfig {
  // schedule
  int total_iters = 12;
  int shared_epochs = 2;       // shared-GAN epochs per iteration
  int ctrl_steps = 10;         // controller updates per iteration
  int num_cells = 3;
  int u_stage = 0;             // iterations per stage; 0 derives total_iters / num_cells
  int k_beams = 3;             // K: beams kept per stage
  int m_candidates = 10;       // M: candidates sampled per stage selection
  double reset_threshold = 1e-3;  // loss-stddev threshold; "inf" forces, 0 disables
  int window_len = 50;
  std::string metric = "is";   // is | recipfid
  int retrain_steps = 150;     // generator iterations when training a child from scratch

  // optimization
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double lr_ctrl = 3.5e-4;
  double entropy_weight = 1e-4;
  double baseline_decay = 0.9;
  int batch_d = 64;
  int batch_g = 64;

  // model geometry
  int z_dim = 64;
  int base_channels = 64;
  int d_channels = 32;
  int base_resolution = 4;
  int image_channels = 3;
  int hidden_size = 64;

  // data (synthetic unless a CIFAR-10 directory is given on the CLI)
  int data_train = 2560;
  int data_eval = 1024;
  int data_classes = 4;
  uint64_t data_seed = 1234;

  // evaluation
  int eval_samples_search = 500;
  int eval_samples_final = 5000;
  int is_splits = 10;
  int surrogate_epochs = 4;

  // io / rigs
  int save_every = 1;            // checkpoint every n iterations (0 disables)
  int64_t lr_zero_after = -1;    // zero G/D learning rates after this many shared steps

  int resolved_u_stage() const { return u_stage > 0 ? u_stage : total_iters / num_cells; }
  int output_resolution() const { return base_resolution << num_cells; }
};

// key=value file, '#' comments; unknown keys and malformed values raise
// ConfigError with the line number. Missing file -> ConfigError; empty file
// -> defaults.
SearchConfig parse_config(const std::string& path);
SearchConfig parse_config_text(const std::string& text);

// Effective config, one key=value per line, suitable for the run log and
// for re-parsing.
std::string config_to_string(const SearchConfig& config);

// Stable hash of the effective config (checkpoint compatibility check).
uint64_t config_hash(const SearchConfig& config);

// Throws ConfigError on inconsistent combinations.
void validate_config(const SearchConfig& config);

}  // namespace gansearch
