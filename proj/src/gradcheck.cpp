#include "duat/gradcheck.hpp"

#include <cmath>

#include "duat/kernels.hpp"
#include "duat/loss.hpp"
#include "duat/model.hpp"
#include "duat/ops.hpp"

namespace duat {

GradCheckResult gradcheck(const std::string& name, const std::function<Tensor()>& eval,
                          const std::vector<Tensor>& leaves, int max_coords_per_tensor,
                          std::uint64_t coord_seed) {
  if (Engine::precision != Precision::f64) {
    throw NumericError("gradcheck requires f64 engine precision");
  }
  GradCheckResult result;
  result.name = name;

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = eval();
    tape.backward(loss);
    for (const Tensor& leaf : leaves) {
      analytic.push_back(leaf.has_grad()
                             ? leaf.grad()
                             : std::vector<double>(static_cast<std::size_t>(leaf.numel()), 0.0));
    }
  }
  for (const Tensor& leaf : leaves) {
    Tensor mutable_leaf = leaf;
    mutable_leaf.zero_grad();
  }

  // Numeric pass: central differences on a deterministic coordinate sample.
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    double* data = leaf.mutable_data();
    const std::int64_t n = leaf.numel();
    Rng rng = Rng::for_stream(coord_seed, li);
    std::vector<std::int64_t> coords;
    if (n <= max_coords_per_tensor) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_tensor; ++i) {
        coords.push_back(static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n)));
      }
    }
    auto central_diff = [&](std::int64_t i, double eps) {
      const double x = data[i];
      data[i] = x + eps;
      const double fp = eval().item();
      data[i] = x - eps;
      const double fm = eval().item();
      data[i] = x;
      return (fp - fm) / (2.0 * eps);
    };
    for (const std::int64_t i : coords) {
      const double scale = std::max(1.0, std::abs(data[i]));
      const double an = analytic[li][static_cast<std::size_t>(i)];
      auto rel_at = [&](double eps) {
        const double fd = central_diff(i, eps);
        return std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      };
      double rel = rel_at(1e-3 * scale);
      if (rel >= 1e-4) {
        // A +-1e-3 step can straddle a ReLU kink, making the difference
        // quotient itself wrong; a genuinely bad gradient stays bad at any
        // step, so re-verify with the kink window shrunk 100x.
        rel = std::min(rel, rel_at(1e-5 * scale));
      }
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.coords_checked;
    }
  }
  return result;
}

namespace {

using ops::add;
using ops::mul;
using ops::sum_all;

// Random fixed projection makes the scalar objective sensitive to every
// output coordinate.
Tensor projection(const Shape& s, Rng& rng) { return Tensor::normal(s, 0.0, 1.0, rng); }

Tensor weighted_sum(const Tensor& t, const Tensor& proj) { return sum_all(mul(t, proj)); }

Tensor rand_leaf(Shape s, Rng& rng) { return Tensor::normal(s, 0.0, 1.0, rng, true); }

Tensor rand_mask(Shape s, Rng& rng) {
  Tensor m = Tensor::zeros(s);
  for (std::int64_t i = 0; i < m.numel(); ++i) {
    m.mutable_data()[i] = rng.bernoulli(0.35) ? 1.0 : 0.0;
  }
  // Masks in the loss path must not be empty or full everywhere.
  m.mutable_data()[0] = 1.0;
  m.mutable_data()[m.numel() - 1] = 0.0;
  return m;
}

std::vector<Tensor> module_leaves(nn::Module& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.named_params()) out.push_back(*p.tensor);
  return out;
}

GradCheckCase make_case(std::string name, std::function<GradCheckResult()> run) {
  return GradCheckCase{std::move(name), std::move(run)};
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;

  auto elementwise_case = [seed](const std::string& name, auto make_expr) {
    return make_case(name, [seed, name, make_expr] {
      Rng rng = Rng::for_stream(seed, std::hash<std::string>{}(name));
      Tensor a = rand_leaf(Shape{2, 3, 4, 5}, rng);
      Tensor b = rand_leaf(Shape{2, 3, 4, 5}, rng);
      Tensor proj = projection(Shape{2, 3, 4, 5}, rng);
      return gradcheck(name, [&] { return weighted_sum(make_expr(a, b), proj); }, {a, b});
    });
  };
  cases.push_back(elementwise_case("elementwise.add",
                                   [](const Tensor& a, const Tensor& b) { return ops::add(a, b); }));
  cases.push_back(elementwise_case("elementwise.sub",
                                   [](const Tensor& a, const Tensor& b) { return ops::sub(a, b); }));
  cases.push_back(elementwise_case("elementwise.mul",
                                   [](const Tensor& a, const Tensor& b) { return ops::mul(a, b); }));

  cases.push_back(make_case("elementwise.add_bias", [seed] {
    Rng rng = Rng::for_stream(seed, 101);
    Tensor a = rand_leaf(Shape{2, 3, 4, 5}, rng);
    Tensor bias = rand_leaf(Shape{1, 3, 1, 1}, rng);
    Tensor proj = projection(Shape{2, 3, 4, 5}, rng);
    return gradcheck("elementwise.add_bias",
                     [&] { return weighted_sum(ops::add(a, bias), proj); }, {a, bias});
  }));
  cases.push_back(make_case("elementwise.mul_context", [seed] {
    Rng rng = Rng::for_stream(seed, 102);
    Tensor a = rand_leaf(Shape{2, 3, 4, 5}, rng);
    Tensor ctx = rand_leaf(Shape{2, 3, 1, 1}, rng);
    Tensor proj = projection(Shape{2, 3, 4, 5}, rng);
    return gradcheck("elementwise.mul_context",
                     [&] { return weighted_sum(ops::mul(a, ctx), proj); }, {a, ctx});
  }));
  cases.push_back(make_case("elementwise.neg", [seed] {
    Rng rng = Rng::for_stream(seed, 103);
    Tensor a = rand_leaf(Shape{1, 2, 3, 4}, rng);
    Tensor proj = projection(Shape{1, 2, 3, 4}, rng);
    return gradcheck("elementwise.neg", [&] { return weighted_sum(ops::neg(a), proj); }, {a});
  }));
  cases.push_back(make_case("elementwise.one_minus", [seed] {
    Rng rng = Rng::for_stream(seed, 104);
    Tensor a = rand_leaf(Shape{1, 2, 3, 4}, rng);
    Tensor proj = projection(Shape{1, 2, 3, 4}, rng);
    return gradcheck("elementwise.one_minus",
                     [&] { return weighted_sum(ops::one_minus(a), proj); }, {a});
  }));
  cases.push_back(make_case("elementwise.scalar_ops", [seed] {
    Rng rng = Rng::for_stream(seed, 105);
    Tensor a = rand_leaf(Shape{1, 2, 3, 4}, rng);
    Tensor proj = projection(Shape{1, 2, 3, 4}, rng);
    return gradcheck(
        "elementwise.scalar_ops",
        [&] { return weighted_sum(ops::add_scalar(ops::mul_scalar(a, 1.7), -0.3), proj); }, {a});
  }));

  cases.push_back(make_case("activation.relu", [seed] {
    Rng rng = Rng::for_stream(seed, 110);
    Tensor a = rand_leaf(Shape{2, 2, 5, 5}, rng);
    Tensor proj = projection(Shape{2, 2, 5, 5}, rng);
    return gradcheck("activation.relu", [&] { return weighted_sum(ops::relu(a), proj); }, {a});
  }));
  cases.push_back(make_case("activation.sigmoid", [seed] {
    Rng rng = Rng::for_stream(seed, 111);
    Tensor a = rand_leaf(Shape{2, 2, 5, 5}, rng);
    Tensor proj = projection(Shape{2, 2, 5, 5}, rng);
    return gradcheck("activation.sigmoid",
                     [&] { return weighted_sum(ops::sigmoid(a), proj); }, {a});
  }));

  cases.push_back(make_case("reduce.sum_all", [seed] {
    Rng rng = Rng::for_stream(seed, 115);
    Tensor a = rand_leaf(Shape{2, 3, 2, 2}, rng);
    return gradcheck("reduce.sum_all", [&] { return sum_all(mul(a, a)); }, {a});
  }));

  cases.push_back(make_case("view.reshape", [seed] {
    Rng rng = Rng::for_stream(seed, 116);
    Tensor a = rand_leaf(Shape{2, 3, 4, 2}, rng);
    Tensor proj = projection(Shape{6, 1, 2, 4}, rng);
    return gradcheck("view.reshape",
                     [&] { return weighted_sum(ops::reshape(a, Shape{6, 1, 2, 4}), proj); }, {a});
  }));
  cases.push_back(make_case("view.transpose_hw", [seed] {
    Rng rng = Rng::for_stream(seed, 117);
    Tensor a = rand_leaf(Shape{2, 3, 4, 2}, rng);
    Tensor proj = projection(Shape{2, 3, 2, 4}, rng);
    return gradcheck("view.transpose_hw",
                     [&] { return weighted_sum(ops::transpose_hw(a), proj); }, {a});
  }));

  cases.push_back(make_case("matmul.batched", [seed] {
    Rng rng = Rng::for_stream(seed, 120);
    Tensor a = rand_leaf(Shape{2, 2, 3, 4}, rng);
    Tensor b = rand_leaf(Shape{2, 2, 4, 5}, rng);
    Tensor proj = projection(Shape{2, 2, 3, 5}, rng);
    return gradcheck("matmul.batched",
                     [&] { return weighted_sum(ops::matmul(a, b), proj); }, {a, b});
  }));

  cases.push_back(make_case("softmax.axis_c", [seed] {
    Rng rng = Rng::for_stream(seed, 125);
    Tensor a = rand_leaf(Shape{2, 5, 2, 2}, rng);
    Tensor proj = projection(Shape{2, 5, 2, 2}, rng);
    return gradcheck("softmax.axis_c",
                     [&] { return weighted_sum(ops::softmax(a, 1), proj); }, {a});
  }));
  cases.push_back(make_case("softmax.axis_w", [seed] {
    Rng rng = Rng::for_stream(seed, 126);
    Tensor a = rand_leaf(Shape{1, 1, 3, 5}, rng);
    Tensor proj = projection(Shape{1, 1, 3, 5}, rng);
    return gradcheck("softmax.axis_w",
                     [&] { return weighted_sum(ops::softmax(a, 3), proj); }, {a});
  }));

  cases.push_back(make_case("resize.up", [seed] {
    Rng rng = Rng::for_stream(seed, 130);
    Tensor a = rand_leaf(Shape{1, 2, 3, 3}, rng);
    Tensor proj = projection(Shape{1, 2, 6, 6}, rng);
    return gradcheck("resize.up",
                     [&] { return weighted_sum(ops::resize_bilinear(a, 6, 6), proj); }, {a});
  }));
  cases.push_back(make_case("resize.down", [seed] {
    Rng rng = Rng::for_stream(seed, 131);
    Tensor a = rand_leaf(Shape{1, 2, 6, 6}, rng);
    Tensor proj = projection(Shape{1, 2, 3, 3}, rng);
    return gradcheck("resize.down",
                     [&] { return weighted_sum(ops::resize_bilinear(a, 3, 3), proj); }, {a});
  }));

  cases.push_back(make_case("channels.split_concat", [seed] {
    Rng rng = Rng::for_stream(seed, 135);
    Tensor a = rand_leaf(Shape{2, 6, 3, 3}, rng);
    Tensor proj = projection(Shape{2, 6, 3, 3}, rng);
    return gradcheck("channels.split_concat",
                     [&] {
                       auto [lo, hi] = ops::split_channels(a, 2);
                       return weighted_sum(ops::concat_channels({hi, lo}),
                                           proj);
                     },
                     {a});
  }));

  auto conv_case = [seed](const std::string& name, Shape in, int out_c, int k, int stride,
                          int pad, int groups) {
    return make_case(name, [=] {
      Rng rng = Rng::for_stream(seed, std::hash<std::string>{}(name));
      nn::Conv2d conv(in.c, out_c, k, stride, pad, groups, true, rng);
      Tensor x = rand_leaf(in, rng);
      kernels::Conv2dDims d{in.n, in.c, in.h, in.w, out_c, k, k, stride, pad, groups};
      Tensor proj = projection(Shape{in.n, out_c, d.ho(), d.wo()}, rng);
      std::vector<Tensor> leaves = module_leaves(conv);
      leaves.push_back(x);
      return gradcheck(name, [&] { return weighted_sum(conv.forward(x), proj); }, leaves);
    });
  };
  cases.push_back(conv_case("conv2d.pointwise", Shape{2, 4, 5, 5}, 3, 1, 1, 0, 1));
  cases.push_back(conv_case("conv2d.strided_padded", Shape{1, 3, 7, 7}, 4, 3, 2, 1, 1));
  cases.push_back(conv_case("conv2d.depthwise", Shape{2, 4, 5, 5}, 4, 3, 1, 1, 4));
  cases.push_back(conv_case("conv2d.grouped", Shape{1, 4, 6, 6}, 6, 3, 1, 1, 2));

  cases.push_back(make_case("norm.batchnorm_train", [seed] {
    Rng rng = Rng::for_stream(seed, 140);
    nn::BatchNorm2d bn(3);
    bn.set_training(true);
    Tensor x = rand_leaf(Shape{2, 3, 4, 4}, rng);
    Tensor proj = projection(Shape{2, 3, 4, 4}, rng);
    std::vector<Tensor> leaves = module_leaves(bn);
    leaves.push_back(x);
    return gradcheck("norm.batchnorm_train",
                     [&] { return weighted_sum(bn.forward(x), proj); }, leaves);
  }));
  cases.push_back(make_case("norm.batchnorm_eval", [seed] {
    Rng rng = Rng::for_stream(seed, 141);
    nn::BatchNorm2d bn(3);
    // Non-trivial running stats.
    for (int c = 0; c < 3; ++c) {
      bn.running_mean.mutable_data()[c] = rng.uniform(-0.5, 0.5);
      bn.running_var.mutable_data()[c] = rng.uniform(0.5, 1.5);
    }
    bn.set_training(false);
    Tensor x = rand_leaf(Shape{2, 3, 4, 4}, rng);
    Tensor proj = projection(Shape{2, 3, 4, 4}, rng);
    std::vector<Tensor> leaves = module_leaves(bn);
    leaves.push_back(x);
    return gradcheck("norm.batchnorm_eval",
                     [&] { return weighted_sum(bn.forward(x), proj); }, leaves);
  }));
  cases.push_back(make_case("norm.layernorm", [seed] {
    Rng rng = Rng::for_stream(seed, 142);
    nn::LayerNorm ln(5);
    Tensor x = rand_leaf(Shape{2, 5, 3, 3}, rng);
    Tensor proj = projection(Shape{2, 5, 3, 3}, rng);
    std::vector<Tensor> leaves = module_leaves(ln);
    leaves.push_back(x);
    return gradcheck("norm.layernorm", [&] { return weighted_sum(ln.forward(x), proj); },
                     leaves);
  }));

  cases.push_back(make_case("nn.mlp_expand2", [seed] {
    Rng rng = Rng::for_stream(seed, 145);
    nn::MlpExpand2 mlp(6, rng);
    Tensor x = rand_leaf(Shape{3, 6, 1, 1}, rng);
    Tensor proj = projection(Shape{3, 6, 1, 1}, rng);
    std::vector<Tensor> leaves = module_leaves(mlp);
    leaves.push_back(x);
    return gradcheck("nn.mlp_expand2", [&] { return weighted_sum(mlp.forward(x), proj); },
                     leaves);
  }));

  cases.push_back(make_case("encoder.patch_embed", [seed] {
    Rng rng = Rng::for_stream(seed, 150);
    PatchEmbed embed(3, 8, 7, 4, rng);
    Tensor x = rand_leaf(Shape{1, 3, 8, 8}, rng);
    Tensor proj = projection(Shape{1, 8, 2, 2}, rng);
    std::vector<Tensor> leaves = module_leaves(embed);
    leaves.push_back(x);
    return gradcheck("encoder.patch_embed",
                     [&] { return weighted_sum(embed.forward(x), proj); }, leaves);
  }));
  cases.push_back(make_case("encoder.sr_attention", [seed] {
    Rng rng = Rng::for_stream(seed, 151);
    SrAttention attn(8, 2, 2, rng);
    Tensor x = rand_leaf(Shape{2, 8, 4, 4}, rng);
    Tensor proj = projection(Shape{2, 8, 4, 4}, rng);
    std::vector<Tensor> leaves = module_leaves(attn);
    leaves.push_back(x);
    return gradcheck("encoder.sr_attention",
                     [&] { return weighted_sum(attn.forward(x), proj); }, leaves, 12);
  }));
  cases.push_back(make_case("encoder.block", [seed] {
    Rng rng = Rng::for_stream(seed, 152);
    EncoderBlock block(8, 2, 1, 2, rng);
    Tensor x = rand_leaf(Shape{1, 8, 4, 4}, rng);
    Tensor proj = projection(Shape{1, 8, 4, 4}, rng);
    std::vector<Tensor> leaves = module_leaves(block);
    leaves.push_back(x);
    return gradcheck("encoder.block", [&] { return weighted_sum(block.forward(x), proj); },
                     leaves, 8);
  }));

  cases.push_back(make_case("glsa.gsa", [seed] {
    Rng rng = Rng::for_stream(seed, 160);
    GsaUnit gsa(32, rng);
    Tensor x = rand_leaf(Shape{1, 32, 4, 4}, rng);
    Tensor proj = projection(Shape{1, 32, 4, 4}, rng);
    std::vector<Tensor> leaves = module_leaves(gsa);
    leaves.push_back(x);
    return gradcheck("glsa.gsa", [&] { return weighted_sum(gsa.forward(x), proj); }, leaves, 8);
  }));
  cases.push_back(make_case("glsa.lsa", [seed] {
    Rng rng = Rng::for_stream(seed, 161);
    LsaUnit lsa(32, rng);
    Tensor x = rand_leaf(Shape{1, 32, 6, 6}, rng);
    Tensor proj = projection(Shape{1, 32, 6, 6}, rng);
    std::vector<Tensor> leaves = module_leaves(lsa);
    leaves.push_back(x);
    return gradcheck("glsa.lsa", [&] { return weighted_sum(lsa.forward(x), proj); }, leaves, 8);
  }));
  cases.push_back(make_case("glsa.parallel", [seed] {
    Rng rng = Rng::for_stream(seed, 162);
    GlsaBlock glsa(GlsaArrangement::parallel, rng);
    Tensor x = rand_leaf(Shape{1, 64, 4, 4}, rng);
    Tensor proj = projection(Shape{1, 32, 4, 4}, rng);
    std::vector<Tensor> leaves = module_leaves(glsa);
    leaves.push_back(x);
    return gradcheck("glsa.parallel", [&] { return weighted_sum(glsa.forward(x), proj); },
                     leaves, 6);
  }));
  cases.push_back(make_case("glsa.serial", [seed] {
    Rng rng = Rng::for_stream(seed, 163);
    GlsaBlock glsa(GlsaArrangement::serial_gsa_lsa, rng);
    Tensor x = rand_leaf(Shape{1, 64, 4, 4}, rng);
    Tensor proj = projection(Shape{1, 32, 4, 4}, rng);
    std::vector<Tensor> leaves = module_leaves(glsa);
    leaves.push_back(x);
    return gradcheck("glsa.serial", [&] { return weighted_sum(glsa.forward(x), proj); }, leaves,
                     6);
  }));

  cases.push_back(make_case("sba.rau", [seed] {
    Rng rng = Rng::for_stream(seed, 170);
    RauUnit rau(32, rng);
    Tensor t1 = rand_leaf(Shape{1, 32, 3, 3}, rng);
    Tensor t2 = rand_leaf(Shape{1, 32, 3, 3}, rng);
    Tensor proj = projection(Shape{1, 32, 3, 3}, rng);
    std::vector<Tensor> leaves = module_leaves(rau);
    leaves.push_back(t1);
    leaves.push_back(t2);
    return gradcheck("sba.rau", [&] { return weighted_sum(rau.forward(t1, t2), proj); }, leaves,
                     8);
  }));
  cases.push_back(make_case("sba.semantic_fuse", [seed] {
    Rng rng = Rng::for_stream(seed, 171);
    SemanticFuse fuse(rng);
    Tensor f3 = rand_leaf(Shape{1, 32, 4, 4}, rng);
    Tensor f4 = rand_leaf(Shape{1, 32, 2, 2}, rng);
    Tensor proj = projection(Shape{1, 32, 8, 8}, rng);
    std::vector<Tensor> leaves = module_leaves(fuse);
    leaves.push_back(f3);
    leaves.push_back(f4);
    return gradcheck("sba.semantic_fuse",
                     [&] { return weighted_sum(fuse.forward(f3, f4, 8, 8), proj); }, leaves, 8);
  }));
  cases.push_back(make_case("sba.block", [seed] {
    Rng rng = Rng::for_stream(seed, 172);
    SbaBlock sba(rng);
    sba.set_training(true);
    Tensor fs = rand_leaf(Shape{1, 32, 4, 4}, rng);
    Tensor fb = rand_leaf(Shape{1, 32, 8, 8}, rng);
    Tensor proj = projection(Shape{1, 32, 8, 8}, rng);
    std::vector<Tensor> leaves = module_leaves(sba);
    leaves.push_back(fs);
    leaves.push_back(fb);
    return gradcheck("sba.block", [&] { return weighted_sum(sba.forward(fs, fb), proj); },
                     leaves, 6);
  }));

  cases.push_back(make_case("loss.weighted_bce", [seed] {
    Rng rng = Rng::for_stream(seed, 180);
    Tensor s = rand_leaf(Shape{2, 1, 6, 6}, rng);
    Tensor g = rand_mask(Shape{2, 1, 6, 6}, rng);
    LossConfig lc;
    Tensor w = pixel_weights(g, lc);
    return gradcheck("loss.weighted_bce", [&] { return weighted_bce_logits(s, g, w); }, {s});
  }));
  cases.push_back(make_case("loss.weighted_iou", [seed] {
    Rng rng = Rng::for_stream(seed, 181);
    Tensor s = rand_leaf(Shape{2, 1, 6, 6}, rng);
    Tensor g = rand_mask(Shape{2, 1, 6, 6}, rng);
    LossConfig lc;
    Tensor w = pixel_weights(g, lc);
    return gradcheck("loss.weighted_iou", [&] { return weighted_iou_logits(s, g, w); }, {s});
  }));
  cases.push_back(make_case("loss.structure", [seed] {
    Rng rng = Rng::for_stream(seed, 182);
    Tensor s = rand_leaf(Shape{1, 1, 8, 8}, rng);
    Tensor g = rand_mask(Shape{1, 1, 8, 8}, rng);
    LossConfig lc;
    return gradcheck("loss.structure", [&] { return structure_loss(s, g, lc); }, {s});
  }));

  cases.push_back(make_case("model.full_tiny", [seed] {
    Rng rng = Rng::for_stream(seed, 190);
    DuatConfig cfg;
    cfg.encoder = EncoderConfig::tiny();
    cfg.input_h = cfg.input_w = 64;
    cfg.seed = seed + 7;
    DuatModel model(cfg);
    model.set_training(true);
    Tensor x = Tensor::uniform(Shape{1, 3, 64, 64}, 0.0, 1.0, rng, true);
    Tensor g = Tensor::zeros(Shape{1, 1, 64, 64});
    for (int i = 20; i < 44; ++i) {
      for (int j = 20; j < 44; ++j) g.mutable_data()[i * 64 + j] = 1.0;
    }
    LossConfig lc;
    std::vector<Tensor> leaves = module_leaves(model);
    leaves.push_back(x);
    return gradcheck(
        "model.full_tiny",
        [&] { return total_loss(model.forward(x), g, lc); }, leaves, 2, seed + 11);
  }));

  return cases;
}

}  // namespace duat
