#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mcfuse/errors.hpp"

namespace mcfuse {

struct OptimConfig {
  int epochs = 30;
  int batch = 128;
  double lr = 1e-3;      // Adam, beta1 = 0.9, beta2 = 0.999
  int patience = 8;      // plateau scheduler
  double decay = 0.7;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val = 0.0;
  int best_epoch = 0;
};

inline void save_train_log_csv(const std::string& path,
                               const std::vector<EpochLog>& log,
                               const std::string& provenance = "") {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "epoch,train_loss,val_loss,lr\n";
  char buf[160];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", e.epoch,
                  e.train_loss, e.val_loss, e.lr);
    out << buf;
  }
}

}  // namespace mcfuse
