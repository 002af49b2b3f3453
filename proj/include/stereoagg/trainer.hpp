#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stereoagg/checkpoint.hpp"
#include "stereoagg/model.hpp"
#include "stereoagg/optimizer.hpp"

namespace stereoagg {

struct TrainConfig {
  RmsPropConfig optimizer;
  Index iterations = 300;
  std::uint64_t shuffle_seed = 7;
  // Evaluate on the training set every n iterations; 0 disables.
  Index eval_interval = 0;
  // Written after the last iteration when non-empty.
  std::string checkpoint_path;

  void validate() const;
};

struct IterationRecord {
  Index iteration = 0;  // 1-based
  double loss = 0;      // mean absolute error over valid pixels
  double loss_sum = 0;  // sum over valid pixels
  std::string to_record() const;
};

struct Evaluation {
  std::vector<MetricsReport> per_sample;
  MetricsReport pooled;
};

// Eval-mode forward on every sample with the given ablation switches.
// Samples are processed in order, so the pooled report is deterministic
// apart from the timing field.
Evaluation evaluate_model(StereoModel<float>& model, const std::vector<StereoSample>& samples,
                          const AggregationConfig& aggregation);
Evaluation evaluate_model(StereoModel<float>& model, const std::vector<StereoSample>& samples);

// Sample visited at 0-based step t: epoch t / n uses the permutation seeded
// by derive_seed(shuffle_seed, epoch).
std::size_t sample_for_step(std::uint64_t shuffle_seed, std::size_t dataset_size, std::uint64_t step);

// Batch-size-1 RMSProp loop on the per-pixel L1 loss.
class Trainer {
 public:
  Trainer(StereoModel<float>& model, TrainConfig config, std::string config_echo = {});

  // Restores parameters, batch-norm statistics, accumulators and the
  // iteration counter.
  void resume(const Checkpoint& checkpoint);

  // Runs until `config.iterations` steps have been taken in total. Each
  // record is appended to `log` as it is produced. A NumericFault is
  // rethrown with the failing iteration in its message.
  std::vector<IterationRecord> run(const std::vector<StereoSample>& samples, std::ostream* log = nullptr);

  // One optimization step on a single sample.
  IterationRecord step(const StereoSample& sample);

  Checkpoint checkpoint() const;
  std::uint64_t iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }

 private:
  StereoModel<float>& model_;
  TrainConfig config_;
  std::string config_echo_;
  RmsProp<float> optimizer_;
  std::uint64_t iteration_ = 0;
};

}  // namespace stereoagg
