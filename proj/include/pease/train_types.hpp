#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pease {

struct TrainConfig {
  double learning_rate = 1e-4;
  int lr_halving_patience = 5;    // consecutive non-improving epochs
  int early_stop_patience = 10;
  int max_epochs = 100;
  int batch_size = 8;
  uint64_t seed = 0;
  // Adam moments
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_si_sdr = 0.0;
};

struct TrainState {
  int epoch = 0;  // completed epochs
  double lr = 0.0;
  double best_val_si_sdr = -std::numeric_limits<double>::infinity();
  int stale_lr = 0;    // epochs since improvement, lr-halving counter
  int stale_stop = 0;  // epochs since improvement, early-stop counter
  std::vector<EpochRecord> history;
};

struct AdamState {
  int64_t step = 0;
  std::map<std::string, Eigen::MatrixXd> m, v;
};

}  // namespace pease
