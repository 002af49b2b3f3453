#include "stereoagg/trainer.hpp"

#include <chrono>
#include <cstdio>

namespace stereoagg {

void TrainConfig::validate() const {
  optimizer.validate();
  if (iterations < 1) throw ConfigError("train.iterations: must be >= 1");
  if (eval_interval < 0) throw ConfigError("train.eval_interval: must be >= 0");
}

std::string IterationRecord::to_record() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "iter=%lld loss=%.9g loss_sum=%.9g", static_cast<long long>(iteration), loss,
                loss_sum);
  return buf;
}

Evaluation evaluate_model(StereoModel<float>& model, const std::vector<StereoSample>& samples,
                          const AggregationConfig& aggregation) {
  aggregation.validate();
  Evaluation out;
  NoGradGuard guard;
  for (const auto& s : samples) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor<float> pred =
        model.forward(to_tensor<float>(s.left), to_tensor<float>(s.right), Mode::eval, aggregation).disparity;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.per_sample.push_back(evaluate(to_disparity_map(pred), s.disparity, s.mask, seconds));
  }
  out.pooled = pool_reports(out.per_sample);
  return out;
}

Evaluation evaluate_model(StereoModel<float>& model, const std::vector<StereoSample>& samples) {
  return evaluate_model(model, samples, model.config().aggregation);
}

std::size_t sample_for_step(std::uint64_t shuffle_seed, std::size_t dataset_size, std::uint64_t step) {
  if (dataset_size == 0) throw ConfigError("training dataset is empty");
  const std::uint64_t epoch = step / dataset_size;
  Rng rng(derive_seed(shuffle_seed, epoch));
  return rng.permutation(dataset_size)[step % dataset_size];
}

Trainer::Trainer(StereoModel<float>& model, TrainConfig config, std::string config_echo)
    : model_(model), config_(std::move(config)), config_echo_(std::move(config_echo)), optimizer_(config_.optimizer) {
  config_.validate();
  model_.freeze_unused();
}

void Trainer::resume(const Checkpoint& checkpoint) {
  StereoModel<float> restored(model_.config(), checkpoint.params);
  for (auto& [name, t] : model_.params().tensors()) t.mutable_values() = restored.params().at(name).values();
  model_.params().norms() = restored.params().norms();
  for (const auto& [name, v] : checkpoint.rms) {
    if (!model_.params().contains(name)) throw ConfigError("checkpoint accumulator for unknown parameter " + name);
    if (v.size() != model_.params().at(name).numel()) {
      throw ConfigError("checkpoint accumulator " + name + " has the wrong size");
    }
  }
  optimizer_.accumulators() = checkpoint.rms;
  iteration_ = checkpoint.iteration;
}

IterationRecord Trainer::step(const StereoSample& sample) {
  auto& params = model_.params();
  params.zero_grad();
  const auto& b = model_.config().backbone;
  if (sample.left.height != b.height || sample.left.width != b.width || sample.left.channels != b.image_channels) {
    throw ConfigError("sample extents " + std::to_string(sample.left.height) + "x" +
                      std::to_string(sample.left.width) + " do not match backbone.height/width");
  }
  const auto result = model_.forward(to_tensor<float>(sample.left), to_tensor<float>(sample.right), Mode::train);
  const auto loss = l1_loss(result.disparity, plane_to_tensor<float>(sample.disparity),
                            plane_to_tensor<float>(sample.mask));
  const Tensor<float> normalized = scale(loss.total, 1.0f / static_cast<float>(loss.valid));
  backward(normalized);
  optimizer_.step(params);
  ++iteration_;
  return {static_cast<Index>(iteration_), static_cast<double>(normalized.item()),
          static_cast<double>(loss.total.item())};
}

std::vector<IterationRecord> Trainer::run(const std::vector<StereoSample>& samples, std::ostream* log) {
  if (samples.empty()) throw ConfigError("training dataset is empty");
  std::vector<IterationRecord> records;
  while (iteration_ < static_cast<std::uint64_t>(config_.iterations)) {
    const std::size_t index = sample_for_step(config_.shuffle_seed, samples.size(), iteration_);
    IterationRecord r;
    try {
      r = step(samples[index]);
    } catch (const NumericFault& e) {
      Tape<float>::active().clear();
      throw NumericFault("iteration " + std::to_string(iteration_ + 1) + ": " + e.op());
    }
    records.push_back(r);
    if (log) *log << r.to_record() << '\n';
    if (log && config_.eval_interval > 0 && iteration_ % static_cast<std::uint64_t>(config_.eval_interval) == 0) {
      *log << "iter=" << iteration_ << " eval " << evaluate_model(model_, samples).pooled.to_record() << '\n';
    }
    if (log) log->flush();
  }
  if (!config_.checkpoint_path.empty()) save_checkpoint(config_.checkpoint_path, checkpoint());
  return records;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.iteration = iteration_;
  c.config = config_echo_;
  for (const auto& [name, t] : model_.params().tensors()) {
    c.params.tensors().emplace(name, Tensor<float>(t.shape(), t.values()));
  }
  c.params.norms() = model_.params().norms();
  c.rms = optimizer_.accumulators();
  return c;
}

}  // namespace stereoagg
