#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>

#include "matrn/train.hpp"

namespace matrn {

struct AblationCell {
  std::string name;
  TrainConfig cfg;
};

struct AblationResult {
  std::string name;
  std::vector<double> accuracies;  // one per seed

  double mean() const {
    double s = 0;
    for (double a : accuracies) s += a;
    return accuracies.empty() ? 0.0 : s / static_cast<double>(accuracies.size());
  }
  double stddev() const {
    if (accuracies.size() < 2) return 0.0;
    const double m = mean();
    double s = 0;
    for (double a : accuracies) s += (a - m) * (a - m);
    return std::sqrt(s / static_cast<double>(accuracies.size() - 1));
  }
};

/// Runs every cell on the same train/val split for each seed in `seeds`.
/// The seed reinitializes weights, shuffling, augmentation and masking.
template <class T>
std::vector<AblationResult> run_ablation(const std::vector<AblationCell>& cells,
                                         const Dataset& train_ds, const Dataset& val_ds,
                                         const std::vector<uint64_t>& seeds,
                                         const std::function<void(const std::string&)>* progress =
                                             nullptr) {
  std::vector<AblationResult> out;
  for (const auto& cell : cells) {
    AblationResult r;
    r.name = cell.name;
    for (uint64_t seed : seeds) {
      TrainConfig cfg = cell.cfg;
      cfg.seed = seed;
      Matrn<T> model(cfg);
      train_model(model, train_ds, val_ds, cfg);
      const double acc = evaluate(model, val_ds, cfg);
      r.accuracies.push_back(acc);
      if (progress) {
        std::ostringstream os;
        os << cell.name << " seed=" << seed << " acc=" << acc;
        (*progress)(os.str());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string ablation_table(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "cell" << std::right << std::setw(10) << "mean"
     << std::setw(10) << "std" << std::setw(8) << "seeds" << "\n";
  for (const auto& r : results) {
    os << std::left << std::setw(28) << r.name << std::right << std::fixed
       << std::setprecision(4) << std::setw(10) << r.mean() << std::setw(10) << r.stddev()
       << std::setw(8) << r.accuracies.size() << "\n";
  }
  return os.str();
}

inline std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << "cell,mean,std";
  size_t max_seeds = 0;
  for (const auto& r : results) max_seeds = std::max(max_seeds, r.accuracies.size());
  for (size_t i = 0; i < max_seeds; ++i) os << ",seed" << i;
  os << "\n";
  for (const auto& r : results) {
    os << r.name << "," << r.mean() << "," << r.stddev();
    for (double a : r.accuracies) os << "," << a;
    os << "\n";
  }
  return os.str();
}

}  // namespace matrn
