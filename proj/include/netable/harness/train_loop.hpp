#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/graph.hpp"
#include "netable/core/optimizer.hpp"
#include "netable/core/random.hpp"

namespace netable::harness {

enum class StopRule {
  perfect_streak,       // stop once the monitor is 1.0 for `patience` consecutive epochs
  validation_patience,  // stop after `patience` epochs without improvement, restore best
};

struct LoopOptions {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t shuffle_seed = 0;
  StopRule rule = StopRule::validation_patience;
  std::size_t patience = 5;
  bool verbose = false;
  std::string label;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double monitor = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_monitor = -1.0;
  bool stopped_early = false;
};

// Mini-batch training: per example a fresh graph, gradients summed over the
// batch and averaged in the update. `loss` may return an invalid Var for an
// example with nothing to supervise. `monitor` runs after every epoch.
template <class Example>
TrainResult run_training(ad::ParameterStore& params, ad::Optimizer& opt, const std::vector<Example>& data,
                         const std::function<ad::Var(ad::Graph&, const Example&)>& loss,
                         const std::function<double()>& monitor, const LoopOptions& o) {
  if (o.batch_size == 0) throw ConfigError("batch size must be positive");
  TrainResult res;
  Rng rng(o.shuffle_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<ad::Tensor> best = params.snapshot();
  std::size_t since_best = 0, streak = 0;

  for (std::size_t epoch = 1; epoch <= o.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += o.batch_size) {
      const std::size_t end = std::min(order.size(), start + o.batch_size);
      params.zero_grad();
      std::size_t in_batch = 0;
      for (std::size_t k = start; k < end; ++k) {
        ad::Graph g;
        ad::Var l = loss(g, data[order[k]]);
        if (!l.valid()) continue;
        const double v = g.value(l).item();
        if (!std::isfinite(v)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", example " +
                                std::to_string(order[k]));
        }
        g.backward(l);
        total += v;
        ++counted;
        ++in_batch;
      }
      if (in_batch == 0) {
        params.clear_grad();
        continue;
      }
      opt.step(1.0 / static_cast<double>(in_batch));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].value.all_finite()) {
        throw DivergenceError("parameter '" + params[i].name + "' became non-finite at epoch " + std::to_string(epoch));
      }
    }
    EpochRecord rec{epoch, counted ? total / static_cast<double>(counted) : 0.0, monitor ? monitor() : 0.0};
    res.epochs.push_back(rec);
    if (o.verbose) {
      std::cerr << "[" << o.label << "] epoch " << epoch << " loss " << rec.mean_loss << " monitor " << rec.monitor
                << "\n";
    }
    if (rec.monitor > res.best_monitor) {
      res.best_monitor = rec.monitor;
      res.best_epoch = epoch;
      best = params.snapshot();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (o.rule == StopRule::perfect_streak) {
      streak = rec.monitor >= 1.0 ? streak + 1 : 0;
      if (streak >= o.patience) {
        res.stopped_early = true;
        break;
      }
    } else if (since_best >= o.patience) {
      res.stopped_early = true;
      break;
    }
  }
  if (o.rule == StopRule::validation_patience) params.restore(best);
  return res;
}

// Evaluates f(i) for i in [0, n) on `jobs` threads; results land by index so
// the output does not depend on scheduling.
template <class R>
std::vector<R> parallel_map(std::size_t n, std::size_t jobs, const std::function<R(std::size_t)>& f) {
  std::vector<R> out(n);
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      try {
        for (std::size_t i = j; i < n; i += jobs) out[i] = f(i);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace netable::harness
