#pragma once

#include <functional>
#include <string>
#include <vector>

#include "znext/gradcheck.hpp"
#include "znext/losses.hpp"
#include "znext/model.hpp"

namespace znext {

/// One registered differentiable operation or composite unit.
struct GradcheckCase {
  std::string name;
  std::string group;  // tensor, mhsiu, rgpu or model
  double tol = 1e-4;
  // Builds inputs and the function under test. `corrupt` wraps the output in
  // a gradient-scaling identity so the harness must fail.
  std::function<GradcheckReport(std::uint64_t seed, bool corrupt, const GradcheckOptions&)> run;
};

namespace detail {

inline Tensor<double> maybe_corrupt(const Tensor<double>& y, bool corrupt) {
  return corrupt ? corrupt_grad(y, 1.5) : y;
}

// Case over freshly drawn standard-normal inputs of the given shapes.
inline GradcheckCase simple_case(const std::string& name, std::vector<Shape> shapes,
                                 std::function<Tensor<double>(const std::vector<Tensor<double>>&)> f,
                                 double lo = 0, double hi = 0) {
  GradcheckCase c;
  c.name = name;
  c.group = "tensor";
  c.run = [name, shapes, f, lo, hi](std::uint64_t seed, bool corrupt, const GradcheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<double>> xs;
    for (const auto& s : shapes)
      xs.push_back(lo < hi ? rand_uniform<double>(s, rng, lo, hi) : randn<double>(s, rng));
    return gradcheck(
        name, [&](const std::vector<Tensor<double>>& in) { return maybe_corrupt(f(in), corrupt); }, xs, opt);
  };
  return c;
}

// Learnable tensors of a unit, initialized from the seed, as gradcheck inputs.
inline std::vector<Tensor<double>> learnables(TensorList<double>& list, std::uint64_t seed) {
  init_tensors(list, seed);
  Rng rng(seed + 1);
  std::vector<Tensor<double>> out;
  for (auto& nt : list) {
    if (!nt.learnable) continue;
    // Perturb biases and BN affine terms away from their trivial init.
    if (nt.init != InitKind::Kaiming)
      for (auto& v : nt.tensor.data()) v += rng.normal(0.0, 0.2);
    out.push_back(nt.tensor);
  }
  return out;
}

}  // namespace detail

/// Every registered case, in report order.
inline std::vector<GradcheckCase> gradcheck_registry() {
  using detail::simple_case;
  using V = std::vector<Tensor<double>>;
  std::vector<GradcheckCase> r;

  r.push_back(simple_case("add", {{2, 3, 4}, {1, 3, 1}}, [](const V& x) { return add(x[0], x[1]); }));
  r.push_back(simple_case("sub", {{2, 3, 4}, {2, 1, 4}}, [](const V& x) { return sub(x[0], x[1]); }));
  r.push_back(simple_case("mul", {{2, 3, 4}, {2, 3, 1}}, [](const V& x) { return mul(x[0], x[1]); }));
  r.push_back(simple_case("scale", {{3, 5}}, [](const V& x) { return scale(x[0], 1.7); }));
  r.push_back(simple_case("add_scalar", {{3, 5}}, [](const V& x) { return add_scalar(x[0], -0.3); }));
  r.push_back(simple_case("relu", {{4, 6}}, [](const V& x) { return relu(x[0]); }));
  r.push_back(simple_case("sigmoid", {{4, 6}}, [](const V& x) { return sigmoid(x[0]); }));
  r.push_back(simple_case("sum", {{3, 4}}, [](const V& x) { return sum(x[0]); }));
  r.push_back(simple_case("mean", {{3, 4}}, [](const V& x) { return mean(x[0]); }));
  r.push_back(simple_case("sum_axis", {{2, 3, 4}}, [](const V& x) { return sum_axis(x[0], 1); }));
  r.push_back(simple_case("reshape", {{2, 6}}, [](const V& x) { return reshape(x[0], Shape{3, 4}); }));
  r.push_back(simple_case("concat", {{2, 3, 2}, {2, 1, 2}}, [](const V& x) { return concat(V{x[0], x[1]}, 1); }));
  r.push_back(simple_case("split", {{2, 5, 3}}, [](const V& x) {
    auto p = split(x[0], 1, {2, 3});
    return concat(V{scale(p[0], 2.0), mul(p[1], p[1])}, 1);
  }));
  r.push_back(simple_case("transpose_last2", {{2, 3, 4}}, [](const V& x) { return transpose_last2(x[0]); }));
  r.push_back(simple_case("matmul", {{3, 4}, {4, 5}}, [](const V& x) { return matmul(x[0], x[1]); }));
  r.push_back(simple_case("matmul_batched", {{2, 3, 4}, {4, 2}}, [](const V& x) { return matmul(x[0], x[1]); }));
  r.push_back(simple_case("softmax", {{2, 4, 3}}, [](const V& x) { return softmax(x[0], 1); }));
  r.push_back(simple_case("temporal_shift", {{3, 2, 2, 2}}, [](const V& x) { return temporal_shift(x[0]); }));
  r.push_back(simple_case("conv2d", {{2, 3, 5, 5}, {4, 3, 3, 3}, {4}},
                          [](const V& x) { return conv2d(x[0], x[1], x[2], Conv2dOptions{1, 1, 1}); }));
  r.push_back(simple_case("conv2d_stride2", {{1, 2, 6, 5}, {3, 2, 3, 3}, {3}},
                          [](const V& x) { return conv2d(x[0], x[1], x[2], Conv2dOptions{2, 1, 1}); }));
  r.push_back(simple_case("conv2d_grouped", {{1, 4, 4, 4}, {6, 2, 3, 3}, {6}},
                          [](const V& x) { return conv2d(x[0], x[1], x[2], Conv2dOptions{1, 1, 2}); }));
  r.push_back(simple_case("conv2d_1x1", {{2, 3, 3, 3}, {2, 3, 1, 1}, {2}},
                          [](const V& x) { return conv2d(x[0], x[1], x[2], Conv2dOptions{1, 0, 1}); }));
  r.push_back(simple_case("adaptive_max_pool", {{1, 2, 7, 5}},
                          [](const V& x) { return adaptive_pool(x[0], 3, 2, PoolMode::Max); }));
  r.push_back(simple_case("adaptive_avg_pool", {{1, 2, 7, 5}},
                          [](const V& x) { return adaptive_pool(x[0], 3, 2, PoolMode::Avg); }));
  r.push_back(simple_case("hybrid_downsample", {{1, 2, 6, 6}},
                          [](const V& x) { return hybrid_downsample(x[0], 4, 3); }));
  r.push_back(simple_case("bilinear_up", {{1, 2, 3, 4}}, [](const V& x) { return bilinear_resize(x[0], 7, 6); }));
  r.push_back(simple_case("bilinear_down", {{1, 2, 7, 6}}, [](const V& x) { return bilinear_resize(x[0], 3, 4); }));
  r.push_back(simple_case("batchnorm_train", {{3, 2, 2, 2}, {2}, {2}}, [](const V& x) {
    Tensor<double> rm(Shape{2}), rv(Shape{2}, 1.0);
    return batchnorm2d(x[0], x[1], x[2], rm, rv, BatchNormOptions{true});
  }));
  r.push_back(simple_case("batchnorm_eval", {{2, 2, 2, 2}, {2}, {2}}, [](const V& x) {
    Tensor<double> rm(Shape{2}, 0.3), rv(Shape{2}, 1.7);
    return batchnorm2d(x[0], x[1], x[2], rm, rv, BatchNormOptions{false});
  }));
  r.push_back(simple_case("temporal_conv_circular", {{3, 2, 4, 4}, {2, 2, 3, 3, 3}},
                          [](const V& x) { return temporal_conv_circular(x[0], x[1]); }));
  r.push_back(simple_case("bce", {{2, 6}}, [](const V& x) {
    Tensor<double> g(Shape{2, 6}, std::vector<double>{1, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0});
    return bce_map(x[0], g);
  }, 0.05, 0.95));
  r.push_back(simple_case("bce_logits", {{2, 6}}, [](const V& x) {
    Tensor<double> g(Shape{2, 6}, std::vector<double>{1, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0});
    return bce_logits_map(x[0], g);
  }));
  r.push_back(simple_case("ual_pow2", {{3, 5}}, [](const V& x) { return ual_map(x[0], UalForm::Pow, 2.0); },
                          0.02, 0.98));
  r.push_back(simple_case("ual_exp1", {{3, 5}}, [](const V& x) { return ual_map(x[0], UalForm::Exp, 1.0); },
                          0.02, 0.98));
  r.push_back(simple_case("delta", {{3, 5}}, [](const V& x) { return delta(x[0]); }, 0.02, 0.98));

  {
    GradcheckCase c;
    c.name = "mhsiu_M2";
    c.group = "mhsiu";
    c.run = [](std::uint64_t seed, bool corrupt, const GradcheckOptions& opt) {
      Mhsiu<double> unit(4, 2, 3);
      TensorList<double> list;
      unit.collect("mhsiu", list);
      auto xs = detail::learnables(list, seed);
      Rng rng(seed + 2);
      V feats{randn<double>({2, 4, 4, 4}, rng), randn<double>({2, 4, 4, 4}, rng), randn<double>({2, 4, 4, 4}, rng)};
      V inputs = feats;
      inputs.insert(inputs.end(), xs.begin(), xs.end());
      return gradcheck(
          "mhsiu_M2",
          [&](const V& in) {
            return detail::maybe_corrupt(unit.forward({in[0], in[1], in[2]}, Phase::Train, 1), corrupt);
          },
          inputs, opt);
    };
    r.push_back(c);
  }
  auto rgpu_case = [](std::string name, std::size_t clip_len) {
    GradcheckCase c;
    c.name = name;
    c.group = "rgpu";
    c.run = [name, clip_len](std::uint64_t seed, bool corrupt, const GradcheckOptions& opt) {
      Rgpu<double> unit(4, 2, std::max<std::size_t>(clip_len, 1));
      TensorList<double> list;
      unit.collect("rgpu", list);
      auto xs = detail::learnables(list, seed);
      Rng rng(seed + 3);
      const std::size_t N = clip_len ? 2 * clip_len : 2;
      V inputs{randn<double>({N, 4, 4, 4}, rng), randn<double>({N, 4, 2, 2}, rng)};
      inputs.insert(inputs.end(), xs.begin(), xs.end());
      return gradcheck(
          name,
          [&](const V& in) {
            return detail::maybe_corrupt(unit.forward(in[0], in[1], clip_len, Phase::Train), corrupt);
          },
          inputs, opt);
    };
    return c;
  };
  r.push_back(rgpu_case("rgpu_G2_image", 0));
  r.push_back(rgpu_case("rgpu_G2_T2", 2));

  {
    GradcheckCase c;
    c.name = "model_micro";
    c.group = "model";
    c.tol = 1e-3;
    c.run = [](std::uint64_t seed, bool corrupt, const GradcheckOptions& opt_in) {
      ModelConfig mc;
      mc.encoder.levels = 2;
      mc.encoder.channels = 4;
      mc.heads = 2;
      mc.groups = 2;
      mc.clip_len = 2;
      Model<double> model(mc);
      auto xs = detail::learnables(model.tensors(), seed);
      Rng rng(seed + 4);
      V inputs{rand_uniform<double>({2, 3, 16, 16}, rng)};
      inputs.insert(inputs.end(), xs.begin(), xs.end());
      GradcheckOptions opt = opt_in;
      opt.max_coords = std::min<std::size_t>(opt.max_coords, 24);
      return gradcheck(
          "model_micro",
          [&](const V& in) { return detail::maybe_corrupt(model.forward_clip(in[0], 2, Phase::Train), corrupt); },
          inputs, opt);
    };
    r.push_back(c);
  }
  return r;
}

/// Runs every case in `group` ("all" for everything). `corrupt_op` names a
/// case whose backward is deliberately falsified.
inline std::vector<GradcheckReport> run_gradchecks(const std::string& group, std::uint64_t seed,
                                                   const std::string& corrupt_op = "",
                                                   std::vector<double>* tolerances = nullptr) {
  std::vector<GradcheckReport> out;
  for (const auto& c : gradcheck_registry()) {
    if (group != "all" && c.group != group) continue;
    GradcheckOptions opt;
    opt.tol = c.tol;
    opt.seed = seed;
    out.push_back(c.run(seed, c.name == corrupt_op, opt));
    if (tolerances) tolerances->push_back(c.tol);
  }
  return out;
}

}  // namespace znext
