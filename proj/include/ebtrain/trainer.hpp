#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ebtrain/costing.hpp"
#include "ebtrain/dataset.hpp"
#include "ebtrain/detector.hpp"
#include "ebtrain/errors.hpp"
#include "ebtrain/mask.hpp"
#include "ebtrain/network.hpp"
#include "ebtrain/optimizer.hpp"
#include "ebtrain/quantize.hpp"
#include "ebtrain/rng.hpp"
#include "ebtrain/schedule.hpp"
#include "ebtrain/surgery.hpp"

namespace ebt {

enum class Precision { Fp32, Sim8 };

/// Shuffle stream tags; the dense/search phase of a run and the dense phase
/// of its baseline share a stream so their trajectories match bitwise.
inline constexpr std::uint64_t kDensePhaseStream = 1;
inline constexpr std::uint64_t kRetrainPhaseStream = 2;

struct TrainConfig {
  int search_epochs = 20;  // t_max for the ticket search / dense baseline
  int retrain_epochs = 20;
  int batch_size = 64;
  LRSchedule search_schedule = scaled_schedule(0.1, 20);
  LRSchedule retrain_schedule = scaled_schedule(0.1, 20);
  double prune_ratio = 0.3;
  double epsilon = 0.1;
  int window = 5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double l1_gamma = 1e-4;
  Precision precision = Precision::Fp32;  // applies to the search/dense phase; retraining is always fp32
  int quant_bits = 8;
  WeightMode weight_mode = WeightMode::Inherit;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;

  void validate() const {
    if (window < 1) throw ConfigError("train config: window length must be >= 1");
    if (search_epochs < window + 1) throw ConfigError("train config: search epochs must be >= window + 1");
    if (retrain_epochs < 0) throw ConfigError("train config: retrain epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
    if (!(prune_ratio > 0.0 && prune_ratio < 1.0)) throw ConfigError("train config: pruning ratio must be in (0,1)");
    if (epsilon < 0.0) throw ConfigError("train config: epsilon must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train config: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("train config: weight decay must be >= 0");
    if (l1_gamma < 0.0) throw ConfigError("train config: l1 coefficient must be >= 0");
    if (quant_bits < 2) throw ConfigError("train config: quant bits must be >= 2");
    if (val_fraction < 0.0 || val_fraction > 0.5) throw ConfigError("train config: val fraction must be in [0,0.5]");
    search_schedule.validate();
    retrain_schedule.validate();
  }
};

struct EpochMetrics {
  std::string phase;
  int epoch = 0;  // 1-based within the phase
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double test_acc = 0.0;
  double mask_distance = -1.0;  // < 0 when not applicable
  std::uint64_t cumulative_flops = 0;
};

struct DistanceLogRow {
  int epoch = 0;
  double distance = -1.0;    // < 0 on the first epoch (no previous mask)
  double max_window = -1.0;  // < 0 until the FIFO is full
  bool triggered = false;
};

/// Result of a dense-phase run (ticket search or baseline full training).
struct DensePhaseOutcome {
  bool triggered = false;
  bool fallback = false;  // no trigger by t_max; ticket drawn at the final epoch
  int ticket_epoch = 0;   // t* (or t_max on fallback)
  int epochs_run = 0;
  ChannelMask ticket;
  std::vector<EpochMetrics> metrics;
  std::vector<ChannelMask> epoch_masks;
  std::vector<DistanceLogRow> distance_log;
  std::uint64_t flops = 0;
};

struct ExperimentReport {
  std::string mode;  // "eb-train" or "baseline"
  DensePhaseOutcome dense;
  std::vector<EpochMetrics> retrain_metrics;
  ChannelMask ticket;
  CostReport cost;
  double dense_final_acc = 0.0;    // test accuracy of the dense net when the ticket was drawn
  double retrain_final_acc = 0.0;  // test accuracy of the retrained ticket
  NetworkSpec pruned_spec;
};

/// Sequential training loop over a fixed train/val/test partition. The
/// validation split is the last `val_fraction` of the training set; batch
/// order comes from per-epoch streams derived from the seed, so a resumed run
/// replays the identical sequence.
class Trainer {
 public:
  Trainer(const Dataset& train, const Dataset& test, TrainConfig cfg)
      : train_(&train), test_(&test), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (train.size() == 0) throw ConfigError("trainer: empty training set");
    auto [tr, va] = split_train_val(train, cfg_.val_fraction);
    train_idx_ = std::move(tr);
    val_idx_ = std::move(va);
    test_idx_.resize(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) test_idx_[i] = static_cast<int>(i);
    if (static_cast<std::size_t>(cfg_.batch_size) > train_idx_.size()) {
      throw ConfigError("trainer: batch size exceeds training split size");
    }
  }

  const TrainConfig& config() const { return cfg_; }
  std::size_t train_size() const { return train_idx_.size(); }

  /// One full pass over the shuffled training split. In sim8 mode the
  /// parameters are quantized before each forward, every block's activation
  /// output and incoming error signal are quantized, and so are the weight
  /// gradients before the optimizer step. Three consecutive non-finite
  /// batches abort the run.
  double train_one_epoch(Network<float>& net, SgdState<float>& sgd, int epoch, std::uint64_t stream,
                         Precision precision) {
    std::vector<ParamRef<float>> params = net.params();
    if (sgd.velocity.size() != params.size()) throw DimensionError("trainer: optimizer state mismatch");
    std::vector<int> order = train_idx_;
    Rng rng = Rng::derive(cfg_.seed, stream, static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);

    const bool sim8 = precision == Precision::Sim8;
    TensorHook<float> quant_hook = [this](Tensor<float>& t) { quantize_sim_inplace(t, cfg_.quant_bits); };
    const TensorHook<float>* hook = sim8 ? &quant_hook : nullptr;

    double loss_sum = 0.0;
    std::size_t seen = 0;
    int strikes = 0;
    std::vector<int> labels;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg_.batch_size, order.size() - start);
      try {
        if (sim8) {
          for (auto& p : params) quantize_sim_inplace(*p.value, cfg_.quant_bits);
        }
        Tensor<float> batch = make_batch(*train_, order, start, count, labels);
        Tensor<float> logits = net.forward(batch, true, hook);
        auto [loss, grad_logits] = softmax_cross_entropy(logits, labels);
        net.backward(grad_logits, hook);
        if (sim8) {
          for (auto& p : params) quantize_sim_inplace(*p.grad, cfg_.quant_bits);
        }
        sgd_step(params, sgd, static_cast<float>(cfg_.l1_gamma));
        loss_sum += loss * static_cast<double>(count);
        seen += count;
        strikes = 0;
      } catch (const NumericError& e) {
        if (++strikes >= 3) {
          throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(start / cfg_.batch_size) + ": " + e.what());
        }
      }
    }
    if (seen == 0) throw TrainingError("training produced no finite batches at epoch " + std::to_string(epoch));
    return loss_sum / static_cast<double>(seen);
  }

  /// Eval-mode (loss, accuracy) over the given sample indices.
  std::pair<double, double> evaluate(Network<float>& net, const Dataset& ds, const std::vector<int>& idx) {
    if (idx.empty()) return {0.0, 0.0};
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<int> labels;
    for (std::size_t start = 0; start < idx.size(); start += cfg_.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg_.batch_size, idx.size() - start);
      Tensor<float> batch = make_batch(ds, idx, start, count, labels);
      Tensor<float> logits = net.forward(batch, false);
      auto [loss, grad] = softmax_cross_entropy(logits, labels);
      (void)grad;
      loss_sum += loss * static_cast<double>(count);
      const int k = logits.dim(1);
      for (std::size_t b = 0; b < count; ++b) {
        const float* row = logits.data() + b * k;
        int best = 0;
        for (int j = 1; j < k; ++j) {
          if (row[j] > row[best]) best = j;
        }
        correct += (best == labels[b]);
      }
    }
    return {loss_sum / static_cast<double>(idx.size()),
            static_cast<double>(correct) / static_cast<double>(idx.size())};
  }

  std::pair<double, double> evaluate_test(Network<float>& net) { return evaluate(net, *test_, test_idx_); }
  std::pair<double, double> evaluate_val(Network<float>& net) { return evaluate(net, *train_, val_idx_); }

  /// Dense phase shared by the ticket search and the LT-style baseline. At
  /// every epoch end a virtual mask is drawn at ratio p and fed to the
  /// detector; `stop_on_trigger` decides between early stopping (search) and
  /// observing the full schedule (baseline). `after_epoch` runs after each
  /// completed epoch (checkpoint hook). Starting from `start_epoch` > 1
  /// resumes a previous run whose state has been restored into net/sgd/det.
  DensePhaseOutcome run_dense_phase(Network<float>& net, SgdState<float>& sgd, EBDetector& det,
                                    const std::string& phase, bool stop_on_trigger, std::uint64_t& cumulative_flops,
                                    int start_epoch = 1, const std::function<void(int)>& after_epoch = {}) {
    DensePhaseOutcome out;
    const std::uint64_t epoch_flops = static_cast<std::uint64_t>(train_idx_.size()) * count_training_flops(net);
    for (int epoch = start_epoch; epoch <= cfg_.search_epochs; ++epoch) {
      sgd.lr = static_cast<float>(lr_at_epoch(cfg_.search_schedule, epoch));
      const double train_loss = train_one_epoch(net, sgd, epoch, kDensePhaseStream, cfg_.precision);
      cumulative_flops += epoch_flops;
      out.flops += epoch_flops;
      out.epochs_run = epoch;

      ChannelMask mask = compute_mask(extract_gammas(net), cfg_.prune_ratio);
      mask.source_epoch = epoch;
      const EBDetectionResult det_result = det.step(mask);
      out.epoch_masks.push_back(mask);
      out.distance_log.push_back({epoch, det.last_distance(), det.window_full() ? det.max_window() : -1.0,
                                  det_result.triggered});

      const auto [val_loss, val_acc] = evaluate_val(net);
      (void)val_acc;
      const auto [test_loss, test_acc] = evaluate_test(net);
      (void)test_loss;
      out.metrics.push_back({phase, epoch, static_cast<double>(sgd.lr), train_loss, val_loss, test_acc,
                             det.last_distance(), cumulative_flops});

      if (after_epoch) after_epoch(epoch);

      if (det_result.triggered && !out.triggered) {
        out.triggered = true;
        out.ticket_epoch = det_result.epoch;
        out.ticket = det_result.ticket;
        if (stop_on_trigger) break;
      }
    }
    if (out.epoch_masks.empty()) throw TrainingError("dense phase ran no epochs");
    if (!out.triggered) {
      out.fallback = true;
      out.ticket_epoch = out.epochs_run;
      out.ticket = out.epoch_masks.back();
    }
    return out;
  }

  /// EB search: dense training until the detector fires (or t_max fallback).
  DensePhaseOutcome eb_search(Network<float>& net) {
    SgdState<float> sgd;
    sgd.momentum = static_cast<float>(cfg_.momentum);
    sgd.weight_decay = static_cast<float>(cfg_.weight_decay);
    auto params = net.params();
    sgd.init(params);
    EBDetector det(cfg_.epsilon, cfg_.window);
    std::uint64_t cumulative = 0;
    return run_dense_phase(net, sgd, det, "search", /*stop_on_trigger=*/true, cumulative);
  }

  /// Full-precision retraining of a pruned network.
  std::vector<EpochMetrics> run_retrain_phase(Network<float>& net, const std::string& phase,
                                              std::uint64_t& cumulative_flops) {
    SgdState<float> sgd;
    sgd.momentum = static_cast<float>(cfg_.momentum);
    sgd.weight_decay = static_cast<float>(cfg_.weight_decay);
    auto params = net.params();
    sgd.init(params);
    std::vector<EpochMetrics> rows;
    const std::uint64_t epoch_flops = static_cast<std::uint64_t>(train_idx_.size()) * count_training_flops(net);
    for (int epoch = 1; epoch <= cfg_.retrain_epochs; ++epoch) {
      sgd.lr = static_cast<float>(lr_at_epoch(cfg_.retrain_schedule, epoch));
      const double train_loss = train_one_epoch(net, sgd, epoch, kRetrainPhaseStream, Precision::Fp32);
      cumulative_flops += epoch_flops;
      const auto [val_loss, val_acc] = evaluate_val(net);
      (void)val_acc;
      const auto [test_loss, test_acc] = evaluate_test(net);
      (void)test_loss;
      rows.push_back({phase, epoch, static_cast<double>(sgd.lr), train_loss, val_loss, test_acc, -1.0,
                      cumulative_flops});
    }
    return rows;
  }

  /// EB Train: search, prune at the drawn ticket, retrain the subnetwork.
  ExperimentReport eb_train() {
    ExperimentReport report;
    report.mode = "eb-train";
    Network<float> net = build_network<float>(spec_or_throw(), cfg_.seed);
    report.cost.dense_forward_per_sample = count_forward_flops(net);
    report.cost.dense_training_per_sample = count_training_flops(net);
    report.cost.dense_params = count_params(net);

    report.dense = eb_search(net);
    report.ticket = report.dense.ticket;
    report.dense_final_acc = report.dense.metrics.back().test_acc;
    report.cost.search_flops = report.dense.flops;
    report.cost.detector_overhead_flops =
        static_cast<std::uint64_t>(report.dense.epochs_run) * detector_epoch_flops(net.total_channels);

    Network<float> pruned = apply_mask(net, report.ticket, cfg_.weight_mode, cfg_.seed);
    report.pruned_spec = pruned.spec;
    report.cost.pruned_forward_per_sample = count_forward_flops(pruned);
    report.cost.pruned_training_per_sample = count_training_flops(pruned);
    report.cost.pruned_params = count_params(pruned);

    std::uint64_t cumulative = report.cost.search_flops;
    report.retrain_metrics = run_retrain_phase(pruned, "retrain", cumulative);
    report.cost.retrain_flops = cumulative - report.cost.search_flops;
    report.retrain_final_acc =
        report.retrain_metrics.empty() ? evaluate_test(pruned).second : report.retrain_metrics.back().test_acc;
    return report;
  }

  /// LT-style one-shot baseline: full dense training, prune at the final
  /// epoch ("ground-truth" winning ticket), retrain with the same budget.
  ExperimentReport baseline_lt() {
    ExperimentReport report;
    report.mode = "baseline";
    Network<float> net = build_network<float>(spec_or_throw(), cfg_.seed);
    report.cost.dense_forward_per_sample = count_forward_flops(net);
    report.cost.dense_training_per_sample = count_training_flops(net);
    report.cost.dense_params = count_params(net);

    SgdState<float> sgd;
    sgd.momentum = static_cast<float>(cfg_.momentum);
    sgd.weight_decay = static_cast<float>(cfg_.weight_decay);
    auto params = net.params();
    sgd.init(params);
    EBDetector det(cfg_.epsilon, cfg_.window);
    std::uint64_t cumulative = 0;
    report.dense = run_dense_phase(net, sgd, det, "baseline", /*stop_on_trigger=*/false, cumulative);
    // one-shot prune at the final epoch
    report.ticket = report.dense.epoch_masks.back();
    report.dense_final_acc = report.dense.metrics.back().test_acc;
    report.cost.baseline_train_flops = report.dense.flops;
    report.cost.detector_overhead_flops =
        static_cast<std::uint64_t>(report.dense.epochs_run) * detector_epoch_flops(net.total_channels);

    Network<float> pruned = apply_mask(net, report.ticket, cfg_.weight_mode, cfg_.seed);
    report.pruned_spec = pruned.spec;
    report.cost.pruned_forward_per_sample = count_forward_flops(pruned);
    report.cost.pruned_training_per_sample = count_training_flops(pruned);
    report.cost.pruned_params = count_params(pruned);

    report.retrain_metrics = run_retrain_phase(pruned, "baseline-retrain", cumulative);
    report.cost.baseline_retrain_flops = cumulative - report.cost.baseline_train_flops;
    report.retrain_final_acc =
        report.retrain_metrics.empty() ? evaluate_test(pruned).second : report.retrain_metrics.back().test_acc;
    return report;
  }

  void set_network_spec(NetworkSpec spec) { spec_ = std::move(spec); }

 private:
  NetworkSpec spec_or_throw() const {
    if (!spec_) throw ConfigError("trainer: network spec not set");
    return *spec_;
  }

  const Dataset* train_;
  const Dataset* test_;
  std::vector<int> train_idx_, val_idx_, test_idx_;
  TrainConfig cfg_;
  std::optional<NetworkSpec> spec_;
};

}  // namespace ebt
