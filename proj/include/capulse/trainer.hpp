#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "capulse/model.hpp"
#include "capulse/series.hpp"

namespace capulse {

struct EpochRecord {
  std::size_t epoch = 0;
  double nf = 0.0;
  double sim = 0.0;
  double ind = 0.0;
  double val_nll = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_nll = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Raised when training produces a non-finite value. The model has already
/// been rolled back to the best checkpoint when this propagates.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// One optimizer step on a batch; returns the loss components.
template <typename Rng>
EpochRecord train_step(Model& m, const std::vector<const numeric::Tensor*>& batch, Rng& noise_rng) {
  numeric::Tape tape;
  auto loss = total_loss(tape, m, batch, noise_rng);
  EpochRecord r;
  r.nf = loss.nf.item();
  r.sim = loss.sim.item();
  r.ind = loss.ind.item();
  if (!std::isfinite(loss.total.item())) return {0, std::nan(""), r.sim, r.ind, 0.0};
  m.store.zero_grad();
  tape.backward(loss.total);
  m.store.adam_step(m.config.lr);
  return r;
}

using EpochCallback = std::function<void(const EpochRecord&, bool improved)>;

/// Mini-batch Adam over seeded shuffles of the training windows, tracking
/// validation NLL. Epoch 0 is an evaluation pass at the initial parameters.
/// On return `m` holds the best-validation parameters.
inline FitResult fit(Model& m, const WindowBatch& train, const WindowBatch& val, const EpochCallback& on_epoch = {}) {
  if (train.empty() || val.empty()) throw Error("fit: training and validation windows must be non-empty");
  const auto& cfg = m.config;
  auto shuffle_rng = make_rng(cfg.seed, 1);
  auto noise_rng = make_rng(cfg.seed, 2);

  FitResult result;
  EpochRecord first;
  first.nf = mean_nll(m, train);
  first.val_nll = mean_nll(m, val);
  result.history.push_back(first);
  result.best_val_nll = first.val_nll;
  numeric::ParamStore best = m.store.clone();
  if (on_epoch) on_epoch(first, true);

  std::vector<std::size_t> order(train.size());
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    auto diverged = [&](const std::string& cause) {
      m.store = std::move(best);
      return TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batches) + " (" + cause + "); restored best epoch " +
                              std::to_string(result.best_epoch));
    };
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        std::vector<const numeric::Tensor*> batch;
        for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
          batch.push_back(&train.windows[order[i]]);
        auto r = train_step(m, batch, noise_rng);
        if (!std::isfinite(r.nf) || !std::isfinite(r.sim) || !std::isfinite(r.ind)) throw Error("non-finite loss");
        rec.nf += r.nf;
        rec.sim += r.sim;
        rec.ind += r.ind;
        ++batches;
      }
      rec.val_nll = mean_nll(m, val);
      if (!std::isfinite(rec.val_nll)) throw Error("non-finite validation NLL");
    } catch (const TrainingDiverged&) {
      throw;
    } catch (const Error& e) {
      throw diverged(e.what());
    }
    rec.nf /= static_cast<double>(batches);
    rec.sim /= static_cast<double>(batches);
    rec.ind /= static_cast<double>(batches);
    result.history.push_back(rec);
    const bool improved = rec.val_nll < result.best_val_nll;
    if (improved) {
      result.best_val_nll = rec.val_nll;
      result.best_epoch = epoch;
      best = m.store.clone();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(rec, improved);
    if (since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  m.store = std::move(best);
  return result;
}

inline void write_history_csv(const FitResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "epoch,l_nf,l_sim,l_ind,val_nll\n" << std::setprecision(17);
  for (const auto& e : r.history)
    out << e.epoch << ',' << e.nf << ',' << e.sim << ',' << e.ind << ',' << e.val_nll << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace capulse
