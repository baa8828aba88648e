#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pstereo/net/tape.hpp"
#include "pstereo/prep.hpp"
#include "pstereo/types.hpp"

namespace ps::net {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

/// Architecture switches. Defaults give the full dual-branch model with
/// cross-attention fusion and two hourglass refinement blocks.
struct NetConfig {
  enum class Fusion { cross_attention, cbam_plain, concat_only };

  bool use_image_branch = true;
  bool use_gradient_branch = true;
  bool use_fusion = true;
  Fusion fusion_mode = Fusion::cross_attention;
  int hourglass_blocks = 2;
  int base_channels = 128;
  bool gradient_branch_gets_lights = false;
  // Appends the gradient map to the image-branch input instead of running a
  // separate gradient extractor (an ablation of the dual-branch idea).
  bool concat_gradient_input = false;
  // Test hook: forces both attention maps to 1, so cross fusion degenerates
  // to the crossed concat(F_i, F_g).
  bool unit_attention = false;
  std::uint64_t seed = 0;
};

inline const char* fusion_name(NetConfig::Fusion f) {
  switch (f) {
    case NetConfig::Fusion::cross_attention: return "cross-attention";
    case NetConfig::Fusion::cbam_plain: return "cbam-plain";
    case NetConfig::Fusion::concat_only: return "concat-only";
  }
  return "cross-attention";
}

inline NetConfig::Fusion fusion_from_name(const std::string& s) {
  if (s == "cross-attention") return NetConfig::Fusion::cross_attention;
  if (s == "cbam-plain") return NetConfig::Fusion::cbam_plain;
  if (s == "concat-only") return NetConfig::Fusion::concat_only;
  fail(Err::bad_params, "unknown fusion mode: " + s);
}

inline nlohmann::json config_to_json(const NetConfig& c) {
  return {{"use_image_branch", c.use_image_branch},
          {"use_gradient_branch", c.use_gradient_branch},
          {"use_fusion", c.use_fusion},
          {"fusion_mode", fusion_name(c.fusion_mode)},
          {"hourglass_blocks", c.hourglass_blocks},
          {"base_channels", c.base_channels},
          {"gradient_branch_gets_lights", c.gradient_branch_gets_lights},
          {"concat_gradient_input", c.concat_gradient_input},
          {"unit_attention", c.unit_attention},
          {"seed", c.seed}};
}

inline NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.use_image_branch = j.at("use_image_branch").get<bool>();
  c.use_gradient_branch = j.at("use_gradient_branch").get<bool>();
  c.use_fusion = j.at("use_fusion").get<bool>();
  c.fusion_mode = fusion_from_name(j.at("fusion_mode").get<std::string>());
  c.hourglass_blocks = j.at("hourglass_blocks").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.gradient_branch_gets_lights = j.at("gradient_branch_gets_lights").get<bool>();
  c.concat_gradient_input = j.at("concat_gradient_input").get<bool>();
  c.unit_attention = j.at("unit_attention").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Float counterpart of MultiLevelOutput, before masking and conversion.
struct MultiLevelTensors {
  Tensor n1, n2, n3;
};

/// The dual-branch photometric-stereo network. Holds all parameters; the
/// same weights drive the plain streaming inference path and the taped
/// training path. Header order of operations is identical in both, so
/// single-threaded results agree bitwise.
class Network {
 public:
  explicit Network(NetConfig cfg) : cfg_(cfg) {
    check(cfg_.use_image_branch || cfg_.use_gradient_branch, Err::bad_params,
          "at least one branch must be enabled");
    check(cfg_.base_channels >= 2 && cfg_.base_channels % 2 == 0, Err::bad_params,
          "base_channels must be even and at least 2");
    check(cfg_.hourglass_blocks >= 0, Err::bad_params, "hourglass_blocks must be >= 0");
    build();
    init_weights();
  }

  const NetConfig& config() const { return cfg_; }

  int image_in_channels() const { return 6 + (cfg_.concat_gradient_input ? 3 : 0); }
  int gradient_in_channels() const { return 3 + (cfg_.gradient_branch_gets_lights ? 3 : 0); }
  bool dual_branch() const { return cfg_.use_image_branch && cfg_.use_gradient_branch; }
  bool has_attention() const {
    return dual_branch() && cfg_.use_fusion &&
           cfg_.fusion_mode != NetConfig::Fusion::concat_only;
  }
  /// Channel width of the aggregated volume feeding the regressor.
  int gamma_channels() const {
    return dual_branch() ? 4 * cfg_.base_channels : cfg_.base_channels;
  }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(const std::string& name) {
    for (Param& p : params_)
      if (p.name == name) return p;
    fail(Err::bad_params, "no parameter named " + name);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.count();
    return n;
  }

  void zero_grads() {
    for (Param& p : params_)
      std::fill(p.g.begin(), p.g.end(), 0.0f);
  }

  /// Per-image network inputs built from one image set: the normalized
  /// stack concat per-light constant maps for the image branch, and the
  /// gradient maps of the normalized images for the gradient branch.
  struct Inputs {
    std::vector<Tensor> image_in, grad_in;
    int h = 0, w = 0, n = 0;
  };

  Inputs prepare_inputs(const ImageStack& stack, const LightSet& lights) const {
    validate_pair(stack, lights);
    check(stack.h % 4 == 0 && stack.w % 4 == 0, Err::shape_error,
          "spatial dims must be multiples of 4");
    prep::NormalizedStack ns = prep::normalize_stack(stack);
    Inputs in;
    in.h = stack.h;
    in.w = stack.w;
    in.n = stack.n;
    for (int j = 0; j < stack.n; ++j) {
      prep::GradientMap g = prep::gradient_map(ns, j);
      if (cfg_.use_image_branch) in.image_in.push_back(image_input(ns, g, lights, j));
      if (cfg_.use_gradient_branch) in.grad_in.push_back(gradient_input(g, lights, j));
    }
    return in;
  }

  /// One extractor pass (plain kernels): (Cin,H,W) -> (C, H/2, W/2).
  Tensor extract_infer(const Tensor& in, bool gradient_branch) const {
    const auto& ext = gradient_branch ? grad_ext_ : img_ext_;
    check(!ext.empty(), Err::bad_params, "requested branch is disabled");
    check(in.c == (gradient_branch ? gradient_in_channels() : image_in_channels()),
          Err::shape_error, "extractor input has the wrong channel count");
    Tensor x = in;
    for (const ConvSpec& cs : ext) {
      x = conv_plain(x, cs);
      leaky_relu_forward(x, kSlope);
    }
    return x;
  }

  /// Fusion of one image's branch features into the stacked volume
  /// (2C, h, w), honoring fusion_mode and the unit_attention hook.
  Tensor fuse_infer(const Tensor& fg, const Tensor& fi) const {
    check(dual_branch(), Err::bad_params, "fusion needs both branches");
    check(fg.same_shape(fi), Err::shape_error, "branch feature shapes differ");
    if (!cfg_.use_fusion || cfg_.fusion_mode == NetConfig::Fusion::concat_only)
      return concat2(fg, fi);
    if (cfg_.unit_attention) {
      if (cfg_.fusion_mode == NetConfig::Fusion::cross_attention) return concat2(fi, fg);
      return concat2(fg, fi);
    }
    Tensor mc_g = channel_attention_infer(fg), ms_g = spatial_attention_infer(fg);
    Tensor mc_i = channel_attention_infer(fi), ms_i = spatial_attention_infer(fi);
    if (cfg_.fusion_mode == NetConfig::Fusion::cross_attention)
      return concat2(apply_maps(fi, mc_g, ms_g), apply_maps(fg, mc_i, ms_i));
    return concat2(apply_maps(fg, mc_g, ms_g), apply_maps(fi, mc_i, ms_i));
  }

  /// Order-invariant pooling across images: channelwise concat of the
  /// elementwise maxima of the fused, gradient, and image feature lists.
  static Tensor aggregate(const std::vector<Tensor>& psis, const std::vector<Tensor>& fgs,
                          const std::vector<Tensor>& fis) {
    std::vector<const std::vector<Tensor>*> groups;
    if (!psis.empty()) groups.push_back(&psis);
    if (!fgs.empty()) groups.push_back(&fgs);
    if (!fis.empty()) groups.push_back(&fis);
    check(!groups.empty(), Err::empty_list, "nothing to aggregate");
    int c = 0;
    for (auto* g : groups) c += (*g)[0].c;
    Tensor out(c, (*groups[0])[0].h, (*groups[0])[0].w);
    std::size_t off = 0;
    for (auto* g : groups) {
      Tensor m = max_of(*g);
      std::copy(m.v.begin(), m.v.end(), out.v.begin() + off);
      off += m.v.size();
    }
    return out;
  }

  /// Regressor (plain kernels): aggregated volume at half resolution to the
  /// three full-resolution, per-pixel-normalized maps.
  MultiLevelTensors regress_infer(const Tensor& gamma) const {
    check(gamma.c == gamma_channels(), Err::shape_error,
          "aggregated volume has the wrong channel count");
    Tensor x = gamma;
    for (const ConvSpec& cs : reg_convs_) {
      x = conv_plain(x, cs);
      leaky_relu_forward(x, kSlope);
    }
    for (const ConvSpec& ds : reg_deconvs_) {
      x = deconv_plain(x, ds);
      leaky_relu_forward(x, kSlope);
    }
    MultiLevelTensors out;
    out.n1 = l2norm_px_forward(conv_plain(x, reg_head_));
    Tensor feat = x;
    std::vector<Tensor> emitted;
    for (const HgBlock& b : hg_blocks_) {
      Tensor x1 = conv_plain(feat, b.e1);
      leaky_relu_forward(x1, kSlope);
      Tensor x2 = conv_plain(x1, b.e2);
      leaky_relu_forward(x2, kSlope);
      Tensor m = conv_plain(x2, b.m);
      leaky_relu_forward(m, kSlope);
      Tensor u1 = deconv_plain(m, b.u1);
      add_inplace(u1, x1);
      leaky_relu_forward(u1, kSlope);
      Tensor u2 = deconv_plain(u1, b.u2);
      add_inplace(u2, feat);
      leaky_relu_forward(u2, kSlope);
      feat = std::move(u2);
      emitted.push_back(l2norm_px_forward(conv_plain(feat, b.head)));
    }
    if (emitted.empty()) {
      out.n2 = out.n1;
      out.n3 = out.n1;
    } else {
      out.n2 = emitted.front();
      out.n3 = emitted.back();
    }
    return out;
  }

  /// Full streaming inference: normalizes the stack, runs both branches and
  /// fusion image by image keeping only running maxima, regresses, then
  /// zeroes out-of-mask pixels of the three unit-norm maps.
  MultiLevelOutput forward(const ImageStack& stack, const LightSet& lights,
                           const Mask& mask) const {
    check(stack.h == mask.h && stack.w == mask.w, Err::shape_mismatch,
          "stack and mask dimensions differ");
    validate_pair(stack, lights);
    check(stack.h % 4 == 0 && stack.w % 4 == 0, Err::shape_error,
          "spatial dims must be multiples of 4");
    prep::NormalizedStack ns = prep::normalize_stack(stack);

    Tensor max_psi, max_fg, max_fi;
    for (int j = 0; j < stack.n; ++j) {
      prep::GradientMap g = prep::gradient_map(ns, j);
      Tensor fi, fg;
      if (cfg_.use_image_branch) fi = extract_infer(image_input(ns, g, lights, j), false);
      if (cfg_.use_gradient_branch) fg = extract_infer(gradient_input(g, lights, j), true);
      if (dual_branch()) {
        Tensor psi = fuse_infer(fg, fi);
        running_max(max_psi, psi);
      }
      if (cfg_.use_image_branch) running_max(max_fi, fi);
      if (cfg_.use_gradient_branch) running_max(max_fg, fg);
    }

    Tensor gamma;
    if (dual_branch()) {
      gamma = Tensor(4 * cfg_.base_channels, max_psi.h, max_psi.w);
      std::size_t off = 0;
      for (const Tensor* t : {&max_psi, &max_fg, &max_fi}) {
        std::copy(t->v.begin(), t->v.end(), gamma.v.begin() + off);
        off += t->v.size();
      }
    } else {
      gamma = cfg_.use_image_branch ? std::move(max_fi) : std::move(max_fg);
    }

    MultiLevelTensors t = regress_infer(gamma);
    MultiLevelOutput out;
    out.n1 = to_normal_map(t.n1, mask);
    out.n2 = to_normal_map(t.n2, mask);
    out.n3 = to_normal_map(t.n3, mask);
    return out;
  }

  /// Tape node ids of the three normalized outputs.
  struct TrainOutputs {
    int n1 = -1, n2 = -1, n3 = -1;
    int level(int k) const { return k == 0 ? n1 : k == 1 ? n2 : n3; }
  };

  /// Training forward on a prepared sample. The same op sequence as the
  /// streaming path, recorded on the tape for backward.
  TrainOutputs forward_train(Tape& tape, const Inputs& in) {
    check(in.n >= 1, Err::empty_list, "sample holds no images");
    std::vector<int> psis, fgs, fis;
    for (int j = 0; j < in.n; ++j) {
      int fi = -1, fg = -1;
      if (cfg_.use_image_branch) fi = extract_tape(tape, tape.input(in.image_in[j]), false);
      if (cfg_.use_gradient_branch) fg = extract_tape(tape, tape.input(in.grad_in[j]), true);
      if (dual_branch()) psis.push_back(fuse_tape(tape, fg, fi));
      if (fi >= 0) fis.push_back(fi);
      if (fg >= 0) fgs.push_back(fg);
    }
    int gamma;
    if (dual_branch())
      gamma = tape.concat_ch({tape.max_over(psis), tape.max_over(fgs), tape.max_over(fis)});
    else
      gamma = tape.max_over(cfg_.use_image_branch ? fis : fgs);
    return regress_tape(tape, gamma);
  }

  void save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["config"] = config_to_json(cfg_);
    for (const Param& p : params_)
      manifest["params"].push_back({{"name", p.name}, {"shape", p.shape}});
    std::string mdump = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    check(f.is_open(), Err::io_failure, "cannot write " + path);
    f.write(kMagic, 8);
    std::uint64_t mlen = mdump.size();
    f.write(reinterpret_cast<const char*>(&mlen), 8);
    f.write(mdump.data(), static_cast<std::streamsize>(mdump.size()));
    for (const Param& p : params_)
      f.write(reinterpret_cast<const char*>(p.w.data()),
              static_cast<std::streamsize>(p.w.size() * sizeof(float)));
    check(f.good(), Err::io_failure, "write failed for " + path);
  }

  static Network load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.is_open(), Err::missing_file, "cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    check(f.good() && std::memcmp(magic, kMagic, 8) == 0, Err::io_failure,
          "not a checkpoint file: " + path);
    std::uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 8);
    check(f.good() && mlen > 0 && mlen < (1ull << 24), Err::io_failure,
          "corrupt checkpoint manifest in " + path);
    std::string mdump(mlen, '\0');
    f.read(mdump.data(), static_cast<std::streamsize>(mlen));
    check(f.good(), Err::io_failure, "truncated checkpoint manifest in " + path);
    nlohmann::json manifest = nlohmann::json::parse(mdump, nullptr, false);
    check(!manifest.is_discarded(), Err::io_failure, "unparseable checkpoint manifest");

    Network net(config_from_json(manifest.at("config")));
    const auto& plist = manifest.at("params");
    check(plist.size() == net.params_.size(), Err::config_mismatch,
          "checkpoint parameter list does not match the architecture");
    for (std::size_t i = 0; i < net.params_.size(); ++i) {
      Param& p = net.params_[i];
      check(plist[i].at("name").get<std::string>() == p.name &&
                plist[i].at("shape").get<std::vector<int>>() == p.shape,
            Err::config_mismatch, "checkpoint parameter mismatch at " + p.name);
      f.read(reinterpret_cast<char*>(p.w.data()),
             static_cast<std::streamsize>(p.w.size() * sizeof(float)));
      check(f.good(), Err::io_failure, "truncated checkpoint weights in " + path);
    }
    return net;
  }

 private:
  static constexpr float kSlope = 0.1f;
  static constexpr const char* kMagic = "PSCKPT1\n";

  struct ConvSpec {
    int w = -1, b = -1;
    int cout = 0, k = 3, s = 1, p = 1;
  };
  struct LinSpec {
    int w = -1, b = -1;
    int cout = 0;
  };
  struct HgBlock {
    ConvSpec e1, e2, m, u1, u2, head;
  };

  NetConfig cfg_;
  std::vector<Param> params_;
  std::vector<ConvSpec> img_ext_, grad_ext_;
  LinSpec att_fc1_, att_fc2_;
  ConvSpec att_spatial_;
  std::vector<ConvSpec> reg_convs_, reg_deconvs_;
  ConvSpec reg_head_;
  std::vector<HgBlock> hg_blocks_;
  std::vector<double> init_std_;  // per-param He std, biases 0

  int add_param(const std::string& name, std::vector<int> shape, double std) {
    Param p;
    p.name = name;
    p.shape = std::move(shape);
    p.init_buffers();
    params_.push_back(std::move(p));
    init_std_.push_back(std);
    return static_cast<int>(params_.size()) - 1;
  }

  ConvSpec add_conv(const std::string& name, int cin, int cout, int k, int s, int p) {
    ConvSpec cs;
    cs.cout = cout;
    cs.k = k;
    cs.s = s;
    cs.p = p;
    cs.w = add_param(name + ".w", {cout, cin, k, k}, std::sqrt(2.0 / (cin * k * k)));
    cs.b = add_param(name + ".b", {cout}, 0.0);
    return cs;
  }

  ConvSpec add_deconv(const std::string& name, int cin, int cout, int k, int s, int p) {
    ConvSpec cs;
    cs.cout = cout;
    cs.k = k;
    cs.s = s;
    cs.p = p;
    cs.w = add_param(name + ".w", {cin, cout, k, k}, std::sqrt(2.0 / (cin * k * k)));
    cs.b = add_param(name + ".b", {cout}, 0.0);
    return cs;
  }

  LinSpec add_linear(const std::string& name, int cin, int cout) {
    LinSpec ls;
    ls.cout = cout;
    ls.w = add_param(name + ".w", {cout, cin}, std::sqrt(2.0 / cin));
    ls.b = add_param(name + ".b", {cout}, 0.0);
    return ls;
  }

  void build() {
    const int c = cfg_.base_channels;
    auto extractor = [&](const std::string& prefix, int cin) {
      std::vector<ConvSpec> ext;
      ext.push_back(add_conv(prefix + ".c1", cin, c / 2, 3, 1, 1));
      ext.push_back(add_conv(prefix + ".c2", c / 2, c, 3, 2, 1));
      ext.push_back(add_conv(prefix + ".c3", c, c, 3, 1, 1));
      ext.push_back(add_conv(prefix + ".c4", c, c, 3, 1, 1));
      return ext;
    };
    if (cfg_.use_image_branch) img_ext_ = extractor("img_ext", image_in_channels());
    if (cfg_.use_gradient_branch) grad_ext_ = extractor("grad_ext", gradient_in_channels());
    if (has_attention()) {
      int hidden = std::max(c / 8, 1);
      att_fc1_ = add_linear("att.fc1", c, hidden);
      att_fc2_ = add_linear("att.fc2", hidden, c);
      att_spatial_ = add_conv("att.spatial", 2, 1, 7, 1, 3);
    }
    reg_convs_.push_back(add_conv("reg.c1", gamma_channels(), 2 * c, 3, 2, 1));
    reg_convs_.push_back(add_conv("reg.c2", 2 * c, c, 3, 1, 1));
    reg_convs_.push_back(add_conv("reg.c3", c, c, 3, 1, 1));
    reg_convs_.push_back(add_conv("reg.c4", c, c / 2, 3, 1, 1));
    reg_deconvs_.push_back(add_deconv("reg.d1", c / 2, c / 2, 4, 2, 1));
    reg_deconvs_.push_back(add_deconv("reg.d2", c / 2, c / 2, 4, 2, 1));
    reg_head_ = add_conv("reg.head", c / 2, 3, 3, 1, 1);
    for (int i = 0; i < cfg_.hourglass_blocks; ++i) {
      std::string prefix = "hg" + std::to_string(i);
      HgBlock b;
      b.e1 = add_conv(prefix + ".e1", c / 2, c / 2, 3, 2, 1);
      b.e2 = add_conv(prefix + ".e2", c / 2, c / 2, 3, 2, 1);
      b.m = add_conv(prefix + ".m", c / 2, c / 2, 3, 1, 1);
      b.u1 = add_deconv(prefix + ".u1", c / 2, c / 2, 4, 2, 1);
      b.u2 = add_deconv(prefix + ".u2", c / 2, c / 2, 4, 2, 1);
      b.head = add_conv(prefix + ".head", c / 2, 3, 3, 1, 1);
      hg_blocks_.push_back(b);
    }
  }

  void init_weights() {
    RandomStream rng(cfg_.seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      double std = init_std_[i];
      if (std == 0.0) continue;  // biases start at zero
      for (float& w : params_[i].w) w = static_cast<float>(rng.normal() * std);
    }
  }

  // ---- plain-kernel helpers ----

  Tensor conv_plain(const Tensor& x, const ConvSpec& cs) const {
    return conv2d_forward(x, params_[cs.w].w.data(), params_[cs.b].w.data(), cs.cout, cs.k, cs.s,
                          cs.p);
  }
  Tensor deconv_plain(const Tensor& x, const ConvSpec& cs) const {
    return deconv2d_forward(x, params_[cs.w].w.data(), params_[cs.b].w.data(), cs.cout, cs.k,
                            cs.s, cs.p);
  }

  static void add_inplace(Tensor& a, const Tensor& b) {
    check(a.same_shape(b), Err::shape_error, "skip connection shapes differ");
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  }

  static Tensor concat2(const Tensor& a, const Tensor& b) {
    check(a.h == b.h && a.w == b.w, Err::shape_error, "concat spatial dims differ");
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
  }

  static Tensor max_of(const std::vector<Tensor>& xs) {
    check(!xs.empty(), Err::empty_list, "nothing to pool");
    Tensor out = xs[0];
    for (std::size_t j = 1; j < xs.size(); ++j) {
      check(xs[j].same_shape(out), Err::shape_error, "max pool shapes differ");
      for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::max(out.v[i], xs[j].v[i]);
    }
    return out;
  }

  static void running_max(Tensor& acc, const Tensor& x) {
    if (acc.v.empty()) {
      acc = x;
      return;
    }
    check(acc.same_shape(x), Err::shape_error, "max pool shapes differ");
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] = std::max(acc.v[i], x.v[i]);
  }

  Tensor channel_attention_infer(const Tensor& f) const {
    std::vector<std::int64_t> scratch;
    Tensor a = gap(f), m = gmp(f, scratch);
    auto mlp = [&](const Tensor& x) {
      Tensor h = linear_forward(x, params_[att_fc1_.w].w.data(), params_[att_fc1_.b].w.data(),
                                att_fc1_.cout);
      leaky_relu_forward(h, 0.0f);
      return linear_forward(h, params_[att_fc2_.w].w.data(), params_[att_fc2_.b].w.data(),
                            att_fc2_.cout);
    };
    Tensor s = mlp(a);
    Tensor s2 = mlp(m);
    for (std::size_t i = 0; i < s.v.size(); ++i) s.v[i] += s2.v[i];
    sigmoid_forward(s);
    return s;  // (C,1,1)
  }

  Tensor spatial_attention_infer(const Tensor& f) const {
    std::vector<int> scratch;
    Tensor cat = concat2(channel_mean(f), channel_max(f, scratch));
    Tensor s = conv_plain(cat, att_spatial_);
    sigmoid_forward(s);
    return s;  // (1,h,w)
  }

  static Tensor apply_maps(const Tensor& x, const Tensor& mc, const Tensor& ms) {
    Tensor out = x;
    const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
    for (int ci = 0; ci < x.c; ++ci)
      for (std::size_t i = 0; i < hw; ++i) out.v[ci * hw + i] *= mc.v[ci] * ms.v[i];
    return out;
  }

  Tensor image_input(const prep::NormalizedStack& ns, const prep::GradientMap& g,
                     const LightSet& lights, int j) const {
    Tensor t(image_in_channels(), ns.h, ns.w);
    fill_channels(t, 0, [&](int y, int x, int c) { return ns.at(j, y, x, c); });
    fill_channels(t, 3, [&](int, int, int c) { return lights.dir(j, c); });
    if (cfg_.concat_gradient_input)
      fill_channels(t, 6, [&](int y, int x, int c) { return g.at(y, x, c); });
    return t;
  }

  Tensor gradient_input(const prep::GradientMap& g, const LightSet& lights, int j) const {
    Tensor t(gradient_in_channels(), g.h, g.w);
    fill_channels(t, 0, [&](int y, int x, int c) { return g.at(y, x, c); });
    if (cfg_.gradient_branch_gets_lights)
      fill_channels(t, 3, [&](int, int, int c) { return lights.dir(j, c); });
    return t;
  }

  template <typename F>
  static void fill_channels(Tensor& t, int c0, F&& src) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x) t.at(c0 + c, y, x) = static_cast<float>(src(y, x, c));
  }

  static NormalMap to_normal_map(const Tensor& t, const Mask& mask) {
    NormalMap nm = NormalMap::zeros(t.h, t.w);
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) {
        if (!mask.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) nm.at(y, x, c) = static_cast<double>(t.at(c, y, x));
      }
    return nm;
  }

  // ---- tape-path mirrors of the plain helpers ----

  int extract_tape(Tape& tape, int x, bool gradient_branch) {
    const auto& ext = gradient_branch ? grad_ext_ : img_ext_;
    check(!ext.empty(), Err::bad_params, "requested branch is disabled");
    check(tape.val(x).c == (gradient_branch ? gradient_in_channels() : image_in_channels()),
          Err::shape_error, "extractor input has the wrong channel count");
    for (const ConvSpec& cs : ext)
      x = tape.leaky_relu(tape.conv2d(x, params_[cs.w], params_[cs.b], cs.k, cs.s, cs.p),
                          kSlope);
    return x;
  }

  int channel_attention_tape(Tape& tape, int f) {
    auto mlp = [&](int x) {
      int h = tape.relu(tape.linear(x, params_[att_fc1_.w], params_[att_fc1_.b]));
      return tape.linear(h, params_[att_fc2_.w], params_[att_fc2_.b]);
    };
    return tape.sigmoid(tape.add(mlp(tape.gap_pool(f)), mlp(tape.gmp_pool(f))));
  }

  int spatial_attention_tape(Tape& tape, int f) {
    int cat = tape.concat_ch({tape.channel_mean_map(f), tape.channel_max_map(f)});
    return tape.sigmoid(tape.conv2d(cat, params_[att_spatial_.w], params_[att_spatial_.b],
                                    att_spatial_.k, att_spatial_.s, att_spatial_.p));
  }

  int fuse_tape(Tape& tape, int fg, int fi) {
    if (!cfg_.use_fusion || cfg_.fusion_mode == NetConfig::Fusion::concat_only)
      return tape.concat_ch({fg, fi});
    if (cfg_.unit_attention) {
      if (cfg_.fusion_mode == NetConfig::Fusion::cross_attention)
        return tape.concat_ch({fi, fg});
      return tape.concat_ch({fg, fi});
    }
    int mc_g = channel_attention_tape(tape, fg), ms_g = spatial_attention_tape(tape, fg);
    int mc_i = channel_attention_tape(tape, fi), ms_i = spatial_attention_tape(tape, fi);
    if (cfg_.fusion_mode == NetConfig::Fusion::cross_attention)
      return tape.concat_ch({tape.mul_spatial(tape.mul_channel(fi, mc_g), ms_g),
                             tape.mul_spatial(tape.mul_channel(fg, mc_i), ms_i)});
    return tape.concat_ch({tape.mul_spatial(tape.mul_channel(fg, mc_g), ms_g),
                           tape.mul_spatial(tape.mul_channel(fi, mc_i), ms_i)});
  }

  TrainOutputs regress_tape(Tape& tape, int gamma) {
    check(tape.val(gamma).c == gamma_channels(), Err::shape_error,
          "aggregated volume has the wrong channel count");
    int x = gamma;
    for (const ConvSpec& cs : reg_convs_)
      x = tape.leaky_relu(tape.conv2d(x, params_[cs.w], params_[cs.b], cs.k, cs.s, cs.p),
                          kSlope);
    for (const ConvSpec& ds : reg_deconvs_)
      x = tape.leaky_relu(tape.deconv2d(x, params_[ds.w], params_[ds.b], ds.k, ds.s, ds.p),
                          kSlope);
    TrainOutputs out;
    out.n1 = tape.l2norm_px(
        tape.conv2d(x, params_[reg_head_.w], params_[reg_head_.b], reg_head_.k, reg_head_.s,
                    reg_head_.p));
    int feat = x;
    std::vector<int> emitted;
    for (const HgBlock& b : hg_blocks_) {
      int x1 = tape.leaky_relu(
          tape.conv2d(feat, params_[b.e1.w], params_[b.e1.b], b.e1.k, b.e1.s, b.e1.p), kSlope);
      int x2 = tape.leaky_relu(
          tape.conv2d(x1, params_[b.e2.w], params_[b.e2.b], b.e2.k, b.e2.s, b.e2.p), kSlope);
      int m = tape.leaky_relu(
          tape.conv2d(x2, params_[b.m.w], params_[b.m.b], b.m.k, b.m.s, b.m.p), kSlope);
      int u1 = tape.leaky_relu(
          tape.add(tape.deconv2d(m, params_[b.u1.w], params_[b.u1.b], b.u1.k, b.u1.s, b.u1.p),
                   x1),
          kSlope);
      int u2 = tape.leaky_relu(
          tape.add(tape.deconv2d(u1, params_[b.u2.w], params_[b.u2.b], b.u2.k, b.u2.s, b.u2.p),
                   feat),
          kSlope);
      feat = u2;
      emitted.push_back(tape.l2norm_px(tape.conv2d(feat, params_[b.head.w], params_[b.head.b],
                                                   b.head.k, b.head.s, b.head.p)));
    }
    if (emitted.empty()) {
      out.n2 = out.n1;
      out.n3 = out.n1;
    } else {
      out.n2 = emitted.front();
      out.n3 = emitted.back();
    }
    return out;
  }
};

}  // namespace ps::net
