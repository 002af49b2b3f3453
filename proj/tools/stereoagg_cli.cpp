// stereoagg command-line entry point.
//
// Exit codes: 0 ok, 2 configuration, 3 I/O, 4 numeric fault, 5 verification
// failure. Failures print one line to stderr: error=<kind> reason=<text>.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "stereoagg/baseline.hpp"
#include "stereoagg/config.hpp"
#include "stereoagg/dataset.hpp"
#include "stereoagg/gradcheck.hpp"
#include "stereoagg/image_io.hpp"

namespace fs = std::filesystem;
using namespace stereoagg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitVerification = 5;

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int fail(const char* kind, const std::exception& e, int code) {
  std::cerr << "error=" << kind << " reason=" << one_line(e.what()) << std::endl;
  return code;
}

void write_config_echo(const std::string& path, const RunConfig& config) { write_file(path, to_json(config)); }

std::string with_extension(const std::string& path, const std::string& ext) {
  return fs::path(path).replace_extension(ext).string();
}

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<StereoModel<float>> model;
};

LoadedModel load_model(const std::string& checkpoint_path) {
  Checkpoint c = load_checkpoint(checkpoint_path);
  LoadedModel out;
  out.config = parse_run_config(c.config);
  out.model = std::make_unique<StereoModel<float>>(out.config.model, std::move(c.params));
  return out;
}

void check_image_extents(const Image& image, const BackboneConfig& b, const std::string& what) {
  if (image.height != b.height || image.width != b.width || image.channels != b.image_channels) {
    throw ConfigError(what + " is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                      ", checkpoint expects backbone.height x backbone.width = " + std::to_string(b.height) + "x" +
                      std::to_string(b.width));
  }
}

AggregationConfig ablated(AggregationConfig a, const std::string& which) {
  if (which == "guidance") a.disable_guidance = true;
  if (which == "proposal") a.disable_proposal = true;
  if (which == "aggregation") a.disable_aggregation = true;
  return a;
}

std::string row_name(const AggregationConfig& a) {
  if (a.disable_aggregation) return "no-aggregation";
  if (a.disable_proposal) return "no-proposal";
  if (a.disable_guidance) return "no-guidance";
  return "full";
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config;
  std::string out;
  Index count = 16;
  Index first_index = 0;
  bool force = false;
};

int run_gen_data(const GenDataArgs& a) {
  const RunConfig config = load_run_config(a.config);
  const DatasetManifest m = write_dataset(a.out, config.scene, a.count, a.force, a.first_index);
  write_config_echo((fs::path(a.out) / "config.json").string(), config);
  std::cout << "wrote " << m.indices.size() << " samples to " << a.out << std::endl;
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
};

int run_train(const TrainArgs& a) {
  RunConfig config = load_run_config(a.config);
  const std::vector<StereoSample> samples = read_dataset(a.data);
  fs::create_directories(a.out);
  const std::string checkpoint_name = config.train.checkpoint_path.empty() ? "model.ckpt" : config.train.checkpoint_path;
  TrainConfig train = config.train;
  train.checkpoint_path = fs::path(checkpoint_name).is_absolute() ? checkpoint_name
                                                                  : (fs::path(a.out) / checkpoint_name).string();
  const std::string echo = to_json(config);
  write_file((fs::path(a.out) / "config.json").string(), echo);

  StereoModel<float> model(config.model, config.seed);
  Trainer trainer(model, train, echo);
  if (!a.resume.empty()) trainer.resume(load_checkpoint(a.resume));
  const std::string log_path = (fs::path(a.out) / "train.log").string();
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open " + log_path);
  const auto records = trainer.run(samples, &log);
  const MetricsReport final_report = evaluate_model(model, samples).pooled;
  log << "final " << final_report.to_record() << '\n';
  if (!records.empty()) std::cout << records.back().to_record() << '\n';
  std::cout << "final " << final_report.to_record() << '\n' << "checkpoint " << train.checkpoint_path << std::endl;
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string ablate;
};

int run_eval(const EvalArgs& a) {
  LoadedModel loaded = load_model(a.checkpoint);
  const std::vector<StereoSample> samples = read_dataset(a.data);
  for (const auto& s : samples) check_image_extents(s.left, loaded.config.model.backbone, "dataset image");
  std::vector<AggregationConfig> variants{loaded.config.model.aggregation};
  if (!a.ablate.empty()) variants.push_back(ablated(loaded.config.model.aggregation, a.ablate));
  std::vector<ReportRow> rows;
  for (const auto& v : variants) {
    const Evaluation e = evaluate_model(*loaded.model, samples, v);
    for (std::size_t i = 0; i < e.per_sample.size(); ++i) {
      std::cout << "row=" << row_name(v) << " sample=" << sample_stem(static_cast<Index>(i)) << ' '
                << e.per_sample[i].to_record() << '\n';
    }
    std::cout << "row=" << row_name(v) << " pooled " << e.pooled.to_record() << '\n';
    rows.emplace_back(row_name(v), e.pooled);
  }
  std::cout << format_table(rows);
  return 0;
}

struct InferArgs {
  std::string checkpoint;
  std::string left;
  std::string right;
  std::string out;
};

int run_infer(const InferArgs& a) {
  LoadedModel loaded = load_model(a.checkpoint);
  const Image left = read_image(a.left);
  const Image right = read_image(a.right);
  check_image_extents(left, loaded.config.model.backbone, "--left");
  check_image_extents(right, loaded.config.model.backbone, "--right");
  const DisparityMap disparity = to_disparity_map(loaded.model->predict(left, right));
  const fs::path parent = fs::path(a.out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_pfm(a.out, disparity);
  const auto max_d = static_cast<double>(loaded.config.model.backbone.max_disparity - 1);
  write_png(with_extension(a.out, ".png"), disparity.rows(), disparity.cols(), 3, colorize_disparity(disparity, max_d));
  write_config_echo(with_extension(a.out, ".config.json"), loaded.config);
  std::cout << "wrote " << a.out << " and " << with_extension(a.out, ".png") << std::endl;
  return 0;
}

struct CompareArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::vector<std::string> variants;
};

int run_compare(const CompareArgs& a) {
  LoadedModel loaded = load_model(a.checkpoint);
  const std::vector<StereoSample> samples = read_dataset(a.data);
  for (const auto& s : samples) check_image_extents(s.left, loaded.config.model.backbone, "dataset image");

  std::map<std::string, std::string> overrides;
  for (const auto& v : a.variants) {
    const auto eq = v.find('=');
    if (eq == std::string::npos) throw ConfigError("--variant expects NAME=CHECKPOINT, got " + v);
    overrides[v.substr(0, eq)] = v.substr(eq + 1);
  }
  const std::vector<std::pair<std::string, std::string>> ablations{
      {"full", ""}, {"no-guidance", "guidance"}, {"no-proposal", "proposal"}, {"no-aggregation", "aggregation"}};
  for (const auto& [name, path] : overrides) {
    bool known = false;
    for (const auto& [row, flag] : ablations) known = known || row == name;
    if (!known) throw ConfigError("--variant name '" + name + "' is not one of the ablation rows");
  }

  std::vector<ReportRow> rows;
  for (const auto& [row, flag] : ablations) {
    auto it = overrides.find(row);
    if (it != overrides.end()) {
      LoadedModel variant = load_model(it->second);
      rows.emplace_back(row, evaluate_model(*variant.model, samples).pooled);
    } else {
      rows.emplace_back(row, evaluate_model(*loaded.model, samples, ablated(loaded.config.model.aggregation, flag)).pooled);
    }
  }
  std::vector<MetricsReport> baseline;
  for (const auto& s : samples) {
    const auto start = std::chrono::steady_clock::now();
    const DisparityMap d = run_baseline(s.left, s.right, loaded.config.baseline);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    baseline.push_back(evaluate(d, s.disparity, s.mask, seconds));
  }
  rows.emplace_back("baseline-census-box", pool_reports(baseline));

  const std::string table = format_table(rows);
  std::cout << table;
  if (!a.out.empty()) {
    write_file(a.out, table);
    write_config_echo(with_extension(a.out, ".config.json"), loaded.config);
  }
  return 0;
}

struct GradCheckArgs {
  std::string module;
  std::uint64_t seed = 1;
  Index instances = 20;
};

int run_grad_check(const GradCheckArgs& a) {
  if (a.instances < 1) throw ConfigError("--instances: must be >= 1");
  const auto results = run_gradient_suite(a.seed, a.module, a.instances);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << r.to_line() << '\n';
    ok = ok && r.passed();
  }
  std::cout << (ok ? "all pass" : "some checks FAILED") << std::endl;
  if (!ok) throw VerificationFailure("gradient check failed");
  return 0;
}

struct VisualizeArgs {
  std::string checkpoint;
  std::string left;
  std::string out;
};

int run_visualize_guidance(const VisualizeArgs& a) {
  LoadedModel loaded = load_model(a.checkpoint);
  const Image left = read_image(a.left);
  check_image_extents(left, loaded.config.model.backbone, "--left");
  NoGradGuard guard;
  // The softmax output averages to 1/G everywhere, so the map is taken from
  // the logits and stretched to the full gray range.
  const Tensor<float> mean = guidance_mean(guidance_logits(to_tensor<float>(left), loaded.model->params()));
  const float lo = mean.values().minCoeff();
  const float hi = mean.values().maxCoeff();
  Plane<std::uint8_t> gray(left.height, left.width);
  for (Index i = 0; i < mean.numel(); ++i) {
    const float t = hi > lo ? (mean[i] - lo) / (hi - lo) : 0.0f;
    gray(i / left.width, i % left.width) = static_cast<std::uint8_t>(std::lround(255.0f * t));
  }
  const fs::path parent = fs::path(a.out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_png(a.out, gray);
  write_config_echo(with_extension(a.out, ".config.json"), loaded.config);
  std::cout << "wrote " << a.out << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo matching with two-stream learned cost aggregation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a random-dot stereo dataset");
  gen_cmd->add_option("--config", gen.config, "Run configuration (JSON)")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of samples");
  gen_cmd->add_option("--first-index", gen.first_index, "Index of the first sample");
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the network");
  train_cmd->add_option("--config", train.config, "Run configuration (JSON)")->required();
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Output directory for log, checkpoint and config echo")->required();
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--ablate", eval.ablate, "Also evaluate with one stream disabled")
      ->check(CLI::IsMember({"guidance", "proposal", "aggregation"}));

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Predict disparity for one stereo pair");
  infer_cmd->add_option("--checkpoint", infer.checkpoint)->required();
  infer_cmd->add_option("--left", infer.left, "Left (reference) PGM")->required();
  infer_cmd->add_option("--right", infer.right, "Right PGM")->required();
  infer_cmd->add_option("--out", infer.out, "Disparity PFM; a color PNG is written next to it")->required();

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "Table of full model, ablations and classical baseline");
  compare_cmd->add_option("--checkpoint", compare.checkpoint)->required();
  compare_cmd->add_option("--data", compare.data)->required();
  compare_cmd->add_option("--out", compare.out, "Also write the table to this file");
  compare_cmd->add_option("--variant", compare.variants,
                          "NAME=CHECKPOINT: evaluate a separately trained ablation for row NAME");

  GradCheckArgs grad;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  grad_cmd->add_option("--module", grad.module, "Restrict to one module")
      ->check(CLI::IsMember(gradient_suite_modules()));
  grad_cmd->add_option("--seed", grad.seed);
  grad_cmd->add_option("--instances", grad.instances);

  VisualizeArgs vis;
  auto* vis_cmd = app.add_subcommand("visualize-guidance", "Grayscale PNG of the guidance averaged over G");
  vis_cmd->add_option("--checkpoint", vis.checkpoint)->required();
  vis_cmd->add_option("--left", vis.left, "Reference PGM")->required();
  vis_cmd->add_option("--out", vis.out, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error=config reason=" << one_line(e.what()) << std::endl;
    return kExitConfig;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*infer_cmd) return run_infer(infer);
    if (*compare_cmd) return run_compare(compare);
    if (*grad_cmd) return run_grad_check(grad);
    if (*vis_cmd) return run_visualize_guidance(vis);
  } catch (const ConfigError& e) {
    return fail("config", e, kExitConfig);
  } catch (const ContractViolation& e) {
    return fail("config", e, kExitConfig);
  } catch (const IoError& e) {
    return fail("io", e, kExitIo);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e, kExitIo);
  } catch (const NumericFault& e) {
    return fail("numeric", e, kExitNumeric);
  } catch (const VerificationFailure& e) {
    return fail("verification", e, kExitVerification);
  }
  return 0;
}
