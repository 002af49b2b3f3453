#include "stereoagg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "stereoagg/model.hpp"

namespace stereoagg {

namespace {

Tensor<double> randn(const Shape& shape, Rng& rng, double scale = 1.0) {
  ArrayX<double> v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
  return Tensor<double>(shape, std::move(v));
}

Tensor<double> uniform(const Shape& shape, Rng& rng) {
  ArrayX<double> v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform();
  return Tensor<double>(shape, std::move(v));
}

Index pick(Rng& rng, Index lo, Index hi) { return lo + rng.below(hi - lo + 1); }

std::vector<Index> probe_indices(Index numel, Index count, Rng& rng) {
  if (numel <= count) {
    std::vector<Index> all(static_cast<std::size_t>(numel));
    for (Index i = 0; i < numel; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  std::set<Index> chosen;
  while (static_cast<Index>(chosen.size()) < count) chosen.insert(rng.below(numel));
  return {chosen.begin(), chosen.end()};
}

Shape random_shape(Rng& rng, Index max_rank, Index max_extent) {
  Shape s(static_cast<std::size_t>(pick(rng, 1, max_rank)));
  for (auto& e : s) e = pick(rng, 1, max_extent);
  return s;
}

// Broadcast partner of `a`: some leading axes dropped, some extents set to 1.
Shape broadcast_partner(const Shape& a, Rng& rng) {
  const auto drop = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(a.size())));
  Shape b(a.begin() + static_cast<std::ptrdiff_t>(drop), a.end());
  for (auto& e : b)
    if (rng.uniform() < 0.5) e = 1;
  return b;
}

// Copies parameters of `source` whose names start with `prefix` into inputs,
// randomizing their values so that biases and norm affines are exercised.
std::vector<std::string> take_parameters(const ParameterSet<double>& source, const std::string& prefix,
                                         std::vector<Tensor<double>>& inputs, Rng& rng) {
  std::vector<std::string> names;
  for (const auto& [name, t] : source.tensors()) {
    if (name.rfind(prefix, 0) != 0) continue;
    names.push_back(name);
    ArrayX<double> v = t.values();
    for (Index i = 0; i < v.size(); ++i) v[i] += 0.3 * rng.normal();
    inputs.emplace_back(t.shape(), std::move(v));
  }
  return names;
}

ParameterSet<double> rebuild(const std::vector<std::string>& names, const std::vector<Tensor<double>>& in,
                             std::size_t first, const ParameterSet<double>& reference) {
  ParameterSet<double> p;
  for (std::size_t i = 0; i < names.size(); ++i) p.tensors().emplace(names[i], in[first + i]);
  for (const auto& [name, s] : reference.norms()) p.norms().emplace(name, BatchNormState<double>{});
  return p;
}

struct Check {
  const char* module;
  const char* name;
  double tolerance;
  std::function<GradientComparison(Rng&, double)> instance;
};

BackboneConfig tiny_backbone() {
  BackboneConfig b;
  b.features = 2;
  b.max_disparity = 4;
  b.residual_blocks = 1;
  b.encoder_levels = 1;
  b.height = 8;
  b.width = 8;
  return b;
}

std::vector<Check> checks() {
  std::vector<Check> out;
  out.push_back({"tensor-autodiff", "conv2d", kOpTolerance, [](Rng& rng, double tol) {
                   const Index k = 1 + 2 * rng.below(3);
                   const Index stride = pick(rng, 1, 2);
                   auto x = randn({pick(rng, 1, 6), pick(rng, 1, 6), pick(rng, 1, 3)}, rng);
                   auto w = randn({k, k, x.dim(2), pick(rng, 1, 3)}, rng);
                   return compare_gradients([=](const auto& in) { return conv2d(in[0], in[1], stride); }, {x, w}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "conv3d", kOpTolerance, [](Rng& rng, double tol) {
                   Triple stride{};
                   for (auto& s : stride) s = pick(rng, 1, 2);
                   auto x = randn({pick(rng, 1, 5), pick(rng, 1, 5), pick(rng, 1, 5), pick(rng, 1, 3)}, rng);
                   auto w = randn({1 + 2 * rng.below(2), 1 + 2 * rng.below(2), 1 + 2 * rng.below(2), x.dim(3),
                                   pick(rng, 1, 3)},
                                  rng);
                   return compare_gradients([=](const auto& in) { return conv3d(in[0], in[1], stride); }, {x, w}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "conv3d_transpose", kOpTolerance, [](Rng& rng, double tol) {
                   Triple stride{};
                   for (auto& s : stride) s = pick(rng, 1, 2);
                   auto x = randn({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
                   const Index co = pick(rng, 1, 3);
                   auto w = randn({1 + 2 * rng.below(2), 1 + 2 * rng.below(2), 1 + 2 * rng.below(2), x.dim(3), co},
                                  rng);
                   const Shape os{x.dim(0) * stride[0], x.dim(1) * stride[1], x.dim(2) * stride[2], co};
                   return compare_gradients(
                       [=](const auto& in) { return conv3d_transpose(in[0], in[1], stride, os); }, {x, w}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "batch_norm_train", kOpTolerance, [](Rng& rng, double tol) {
                   const Index c = pick(rng, 1, 3);
                   // at least 4 samples per channel; two-sample batches sit next to the
                   // degenerate variance and their finite differences lose accuracy
                   auto x = randn({pick(rng, 2, 4), pick(rng, 2, 3), c}, rng);
                   auto gamma = randn({c}, rng, 0.5);
                   gamma.mutable_values() += 1.0;
                   auto beta = randn({c}, rng);
                   return compare_gradients(
                       [](const auto& in) {
                         BatchNormState<double> state;
                         return batch_norm(in[0], in[1], in[2], Mode::train, state);
                       },
                       {x, gamma, beta}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "relu", kOpTolerance, [](Rng& rng, double tol) {
                   auto x = randn(random_shape(rng, 3, 5), rng);
                   return compare_gradients([](const auto& in) { return relu(in[0]); }, {x}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "softmax", kOpTolerance, [](Rng& rng, double tol) {
                   auto x = randn(random_shape(rng, 3, 5), rng, 2.0);
                   const Index axis = rng.below(x.rank());
                   return compare_gradients([=](const auto& in) { return softmax(in[0], axis); }, {x}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "add_broadcast", kOpTolerance, [](Rng& rng, double tol) {
                   auto a = randn(random_shape(rng, 3, 4), rng);
                   auto b = randn(broadcast_partner(a.shape(), rng), rng);
                   return compare_gradients([](const auto& in) { return add(in[0], in[1]); }, {a, b}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "mul_broadcast", kOpTolerance, [](Rng& rng, double tol) {
                   auto a = randn(random_shape(rng, 3, 4), rng);
                   auto b = randn(broadcast_partner(a.shape(), rng), rng);
                   if (rng.uniform() < 0.5) std::swap(a, b);
                   return compare_gradients([](const auto& in) { return mul(in[0], in[1]); }, {a, b}, rng, tol);
                 }});
  out.push_back({"tensor-autodiff", "max_reduce", kOpTolerance, [](Rng& rng, double tol) {
                   auto x = randn(random_shape(rng, 3, 5), rng);
                   const Index axis = rng.below(x.rank());
                   return compare_gradients([=](const auto& in) { return max_reduce(in[0], axis).values; }, {x}, rng, tol);
                 }});
  out.push_back({"disparity-head", "soft_argmin", kOpTolerance, [](Rng& rng, double tol) {
                   auto c = randn({pick(rng, 1, 6), pick(rng, 1, 4), pick(rng, 1, 4)}, rng, 2.0);
                   return compare_gradients([](const auto& in) { return soft_argmin(in[0]); }, {c}, rng, tol);
                 }});
  out.push_back({"disparity-head", "l1_loss", kOpTolerance, [](Rng& rng, double tol) {
                   const Shape s{pick(rng, 1, 5), pick(rng, 1, 5)};
                   auto pred = randn(s, rng);
                   Tensor<double> truth(s, pred.values());
                   ArrayX<double> m(pred.numel());
                   for (Index i = 0; i < m.size(); ++i) {
                     // keep residuals away from the kink at zero
                     const double offset = rng.uniform(0.1, 1.0);
                     truth.mutable_values()[i] += rng.uniform() < 0.5 ? offset : -offset;
                     m[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
                   }
                   m[0] = 1.0;
                   const Tensor<double> mask(s, std::move(m));
                   return compare_gradients([=](const auto& in) { return l1_loss(in[0], in[1], mask).total; },
                                         {pred, truth}, rng, tol);
                 }});
  out.push_back({"disparity-head", "l1_soft_argmin", kComposedTolerance, [](Rng& rng, double tol) {
                   auto c = randn({pick(rng, 2, 6), pick(rng, 1, 4), pick(rng, 1, 4)}, rng, 2.0);
                   Tensor<double> truth;
                   {
                     NoGradGuard guard;
                     truth = soft_argmin(c).detach();
                   }
                   for (Index i = 0; i < truth.numel(); ++i) {
                     const double offset = rng.uniform(0.1, 1.0);
                     truth.mutable_values()[i] += rng.uniform() < 0.5 ? offset : -offset;
                   }
                   const auto mask = Tensor<double>::constant(truth.shape(), 1.0);
                   return compare_gradients([=](const auto& in) { return l1_loss(soft_argmin(in[0]), truth, mask).total; },
                                         {c}, rng, tol);
                 }});
  out.push_back({"cost-aggregation", "aggregate", kComposedTolerance, [](Rng& rng, double tol) {
                   AggregationConfig cfg;
                   cfg.proposals = pick(rng, 2, 3);
                   cfg.guidance_width = 4;
                   ParameterSet<double> source;
                   init_aggregation(cfg, 1, source, rng);
                   std::vector<Tensor<double>> inputs{randn({pick(rng, 2, 4), pick(rng, 2, 4), pick(rng, 2, 4)}, rng)};
                   inputs.push_back(uniform({inputs[0].dim(1), inputs[0].dim(2), 1}, rng));
                   const auto names = take_parameters(source, "agg.", inputs, rng);
                   return compare_gradients(
                       [=](const auto& in) {
                         auto p = rebuild(names, in, 2, source);
                         return aggregate(in[0], in[1], p, cfg);
                       },
                       inputs, rng, tol, 4);
                 }});
  out.push_back({"stereo-backbone", "cost_volume", kComposedTolerance, [](Rng& rng, double tol) {
                   const BackboneConfig b = tiny_backbone();
                   ParameterSet<double> source;
                   init_backbone(b, source, rng);
                   std::vector<Tensor<double>> inputs{
                       randn({b.half_disparity(), b.height / 2, b.width / 2, 2 * b.features}, rng)};
                   const auto names = take_parameters(source, "cost.", inputs, rng);
                   return compare_gradients(
                       [=](const auto& in) {
                         auto p = rebuild(names, in, 1, source);
                         return compute_cost_volume(in[0], p, b, Mode::train);
                       },
                       inputs, rng, tol, 4);
                 }});
  out.push_back({"stereo-backbone", "extract_features", kComposedTolerance, [](Rng& rng, double tol) {
                   const BackboneConfig b = tiny_backbone();
                   ParameterSet<double> source;
                   init_backbone(b, source, rng);
                   std::vector<Tensor<double>> inputs{uniform({b.height, b.width, 1}, rng),
                                                      uniform({b.height, b.width, 1}, rng)};
                   const auto names = take_parameters(source, "feat.", inputs, rng);
                   return compare_gradients(
                       [=](const auto& in) {
                         auto p = rebuild(names, in, 2, source);
                         const auto f = extract_features(in[0], in[1], p, b, Mode::train);
                         return concat(std::vector<Tensor<double>>{f.base, f.shift}, 2);
                       },
                       inputs, rng, tol, 4);
                 }});
  return out;
}

}  // namespace

GradientComparison compare_gradients(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs, Rng& rng,
                                     double tolerance, Index elements_per_input, double step) {
  std::vector<Tensor<double>> leaves;
  for (const auto& in : inputs) {
    leaves.emplace_back(in.shape(), in.values());
    leaves.back().set_requires_grad(true);
  }
  Tape<double>::active().clear();
  const Tensor<double> value = f(leaves);
  const Tensor<double> weights = randn(value.shape(), rng);
  backward(sum(mul(value, weights)));

  NoGradGuard guard;
  auto objective = [&] { return sum(mul(f(leaves), weights)).item(); };
  auto relative = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  GradientComparison out;
  for (auto& leaf : leaves) {
    const ArrayX<double> analytic = leaf.grad();
    for (Index j : probe_indices(leaf.numel(), elements_per_input, rng)) {
      const double original = leaf.values()[j];
      auto central = [&](double h) {
        leaf.mutable_values()[j] = original + h;
        const double plus = objective();
        leaf.mutable_values()[j] = original - h;
        const double minus = objective();
        leaf.mutable_values()[j] = original;
        return (plus - minus) / (2.0 * h);
      };
      const double numeric = central(step);
      const double fine = central(step / 10.0);
      ++out.probed;
      if (relative(numeric, fine) > tolerance) {
        ++out.skipped;
        continue;
      }
      out.max_error = std::max(out.max_error, relative(analytic[j], numeric));
    }
  }
  return out;
}

std::string GradCheckResult::to_line() const {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%-18s %s instances=%lld max_err=%.3e tol=%.0e probes=%lld skipped=%lld",
                name.c_str(), passed() ? "pass" : "FAIL", static_cast<long long>(instances), max_error, tolerance,
                static_cast<long long>(probed), static_cast<long long>(skipped));
  return buf;
}

std::vector<std::string> gradient_suite_modules() {
  return {"tensor-autodiff", "stereo-backbone", "cost-aggregation", "disparity-head"};
}

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, const std::string& module, Index instances) {
  const auto modules = gradient_suite_modules();
  if (!module.empty() && std::find(modules.begin(), modules.end(), module) == modules.end()) {
    throw ConfigError("grad-check module '" + module + "' is unknown");
  }
  std::vector<GradCheckResult> results;
  std::uint64_t stream = 0;
  for (const auto& c : checks()) {
    ++stream;
    if (!module.empty() && module != c.module) continue;
    GradCheckResult r{c.module, c.name, instances, 0.0, c.tolerance};
    Rng rng(derive_seed(seed, stream));
    for (Index i = 0; i < instances; ++i) {
      const GradientComparison g = c.instance(rng, c.tolerance);
      r.max_error = std::max(r.max_error, g.max_error);
      r.probed += g.probed;
      r.skipped += g.skipped;
    }
    results.push_back(r);
  }
  return results;
}

}  // namespace stereoagg
