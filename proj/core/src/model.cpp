#include "seedsr/model.hpp"

#include <cmath>
#include <cstring>

#include "seedsr/errors.hpp"
#include "seedsr/rng.hpp"

namespace seedsr {

void DenoiserConfig::validate() const {
    if (hr_hw < 16) throw ConfigError("model: hr_hw must be >= 16, got " + std::to_string(hr_hw));
    const auto lad = ladder();
    if (lad[4] < 2) {
        throw ConfigError("model: hr_hw " + std::to_string(hr_hw) +
                          " pools below 2 after four halvings");
    }
    for (int c : enc_channels) {
        if (c < 1) throw ConfigError("model: encoder channels must be positive");
    }
    if (hr_c < 1 || lr_c < 1 || bottleneck_c < 1) throw ConfigError("model: channels must be positive");
    if (heads < 1 || attn_c % heads != 0) {
        throw ConfigError("model: heads " + std::to_string(heads) + " does not divide attn_c " +
                          std::to_string(attn_c));
    }
    if (t_embed_dim < 2 || t_embed_dim % 2 != 0) {
        throw ConfigError("model: t_embed_dim must be even and >= 2");
    }
    if (use_lr && lr_mode == LrMode::encoded && lr_hw > hr_hw) {
        throw ConfigError("model: lr_hw exceeds hr_hw");
    }
    if (sft_c1 < 1 || sft_c2 < 1) throw ConfigError("model: SFT widths must be positive");
}

int DenoiserConfig::lr_cond_c() const {
    return lr_mode == LrMode::encoded ? lr_c : raw_frames * raw_bands;
}

int DenoiserConfig::concat_c() const {
    int c = hr_c;
    if (use_ref) c += hr_c;
    if (use_lr) c += lr_cond_c();
    return c;
}

std::array<int, 5> DenoiserConfig::ladder() const {
    std::array<int, 5> s;
    s[0] = hr_hw;
    for (int i = 1; i < 5; ++i) s[static_cast<size_t>(i)] = s[static_cast<size_t>(i - 1)] / 2;
    return s;
}

DenoiserConfig desk_config() { return DenoiserConfig{.sft_c1 = 24, .sft_c2 = 12}; }

DenoiserConfig desk48_config() {
    DenoiserConfig c;
    c.hr_hw = 48;
    c.hr_c = 32;
    c.lr_hw = 12;
    c.lr_c = 8;
    c.enc_channels = {16, 24, 32, 40};
    c.bottleneck_c = 48;
    c.attn_c = 16;
    c.heads = 4;
    c.t_embed_dim = 32;
    return c;
}

DenoiserConfig paper_config() {
    DenoiserConfig c;
    c.hr_hw = 120;
    c.hr_c = 3840;
    c.lr_hw = 32;
    c.lr_c = 64;
    c.enc_channels = {320, 480, 560, 640};
    c.bottleneck_c = 784;
    c.attn_c = 64;
    c.heads = 16;
    c.t_embed_dim = 128;
    return c;
}

int64_t DenoiserParams::count() const {
    int64_t n = 0;
    for (const auto& [k, t] : tensors) n += t.numel();
    return n;
}

// ---------------------------------------------------------------------------
// parameter registry
// ---------------------------------------------------------------------------

namespace {

void conv_block_specs(std::vector<ParamSpec>& out, const std::string& prefix, int cin, int cout) {
    out.push_back({prefix + ".conv1.kernel", {3, 3, cin, cout}, 9 * cin});
    out.push_back({prefix + ".conv1.bias", {cout}, 0});
    out.push_back({prefix + ".ln1.gain", {cout}, -1});  // -1 => ones
    out.push_back({prefix + ".ln1.shift", {cout}, 0});
    out.push_back({prefix + ".conv2.kernel", {3, 3, cout, cout}, 9 * cout});
    out.push_back({prefix + ".conv2.bias", {cout}, 0});
    out.push_back({prefix + ".ln2.gain", {cout}, -1});
    out.push_back({prefix + ".ln2.shift", {cout}, 0});
}

void sft_specs(std::vector<ParamSpec>& out, const std::string& prefix, int cond_c, int feat_c,
               int c1, int c2) {
    out.push_back({prefix + ".conv1.kernel", {3, 3, cond_c, c1}, 9 * cond_c});
    out.push_back({prefix + ".conv1.bias", {c1}, 0});
    out.push_back({prefix + ".conv2.kernel", {3, 3, c1, c2}, 9 * c1});
    out.push_back({prefix + ".conv2.bias", {c2}, 0});
    out.push_back({prefix + ".gamma.kernel", {3, 3, c2, feat_c}, 0});  // zero => gamma 0.5
    out.push_back({prefix + ".gamma.bias", {feat_c}, 0});
    out.push_back({prefix + ".beta.kernel", {3, 3, c2, feat_c}, 9 * c2});
    out.push_back({prefix + ".beta.bias", {feat_c}, 0});
}

void attn_specs(std::vector<ParamSpec>& out, const std::string& prefix, int q_c, int kv_c,
                int attn_c, int back_c) {
    out.push_back({prefix + ".wq", {q_c, attn_c}, q_c});
    out.push_back({prefix + ".wk", {kv_c, attn_c}, kv_c});
    out.push_back({prefix + ".wv", {kv_c, attn_c}, kv_c});
    out.push_back({prefix + ".wo", {attn_c, attn_c}, attn_c});
    if (back_c > 0) out.push_back({prefix + ".wb", {attn_c, back_c}, attn_c});
}

}  // namespace

std::vector<ParamSpec> param_specs(const DenoiserConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> out;
    const auto& e = cfg.enc_channels;
    const int cc = cfg.concat_c();

    attn_specs(out, "selfattn", cc, cc, cfg.attn_c, 0);
    conv_block_specs(out, "enc1", cc, e[0]);
    conv_block_specs(out, "enc2", e[0], e[1]);
    conv_block_specs(out, "enc3", e[1], e[2]);
    conv_block_specs(out, "enc4", e[2], e[3]);
    for (int i = 1; i <= 4; ++i) {
        const std::string p = "ctxdown" + std::to_string(i);
        out.push_back({p + ".conv.kernel", {3, 3, cfg.attn_c, cfg.attn_c}, 9 * cfg.attn_c});
        out.push_back({p + ".conv.bias", {cfg.attn_c}, 0});
        out.push_back({p + ".ln.gain", {cfg.attn_c}, -1});
        out.push_back({p + ".ln.shift", {cfg.attn_c}, 0});
    }
    attn_specs(out, "xattn1", e[3], cfg.attn_c, cfg.attn_c, e[3]);
    conv_block_specs(out, "bottleneck", e[3], cfg.bottleneck_c);

    // decoder: up-convolution then conv block over [up output + skip]
    const int dec_in[4] = {cfg.bottleneck_c, e[3], e[2], e[1]};
    const int skip_c[4] = {e[2], e[1], e[0], 0};
    for (int i = 0; i < 4; ++i) {
        const std::string p = "dec" + std::to_string(i + 1);
        const int b = cfg.dec_c(i);
        out.push_back({p + ".up.kernel", {3, 3, b, dec_in[i]}, 9 * dec_in[i]});
        out.push_back({p + ".up.bias", {b}, 0});
        conv_block_specs(out, p, b + skip_c[i], b);
    }
    if (cfg.use_lr) sft_specs(out, "sft1", cfg.lr_cond_c(), cfg.dec_c(0), cfg.sft_c1, cfg.sft_c2);
    if (cfg.use_ref) sft_specs(out, "sft2", cfg.hr_c, cfg.dec_c(2), cfg.sft_c1, cfg.sft_c2);
    attn_specs(out, "xattn2", cfg.dec_c(3), cfg.attn_c, cfg.attn_c, cfg.dec_c(3));
    out.push_back({"out.kernel", {3, 3, cfg.dec_c(3), cfg.hr_c}, 9 * cfg.dec_c(3)});
    out.push_back({"out.bias", {cfg.hr_c}, 0});

    out.push_back({"tstep.mlp1.w", {cfg.t_embed_dim, cfg.t_embed_dim}, cfg.t_embed_dim});
    out.push_back({"tstep.mlp1.b", {cfg.t_embed_dim}, 0});
    out.push_back({"tstep.mlp2.w", {cfg.t_embed_dim, cfg.t_embed_dim}, cfg.t_embed_dim});
    out.push_back({"tstep.mlp2.b", {cfg.t_embed_dim}, 0});
    out.push_back({"tstep.enc_proj.w", {cfg.t_embed_dim, e[2]}, cfg.t_embed_dim});
    out.push_back({"tstep.enc_proj.b", {e[2]}, 0});
    out.push_back({"tstep.dec_proj.w", {cfg.t_embed_dim, cfg.dec_c(2)}, cfg.t_embed_dim});
    out.push_back({"tstep.dec_proj.b", {cfg.dec_c(2)}, 0});
    return out;
}

DenoiserParams init_params(const DenoiserConfig& cfg, uint64_t seed) {
    DenoiserParams p;
    for (const auto& spec : param_specs(cfg)) {
        Tensor t(spec.dims);
        if (spec.fan_in > 0) {
            // per-key stream makes init independent of enumeration order
            uint64_t h = 1469598103934665603ull;
            for (char c : spec.key) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
            Philox rng(seed, h);
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
        } else if (spec.fan_in == -1) {
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = 1.0;
        }
        p.tensors.emplace(spec.key, std::move(t));
    }
    return p;
}

// ---------------------------------------------------------------------------
// small pieces
// ---------------------------------------------------------------------------

Tensor tile_project_lr(const Tensor& e_l, int target_hw) {
    if (e_l.ndim() != 3) throw ShapeError("tile_project_lr: expected [h,w,c], got " + e_l.shape_str());
    if (e_l.dim(0) > target_hw) {
        throw ShapeError("tile_project_lr: source " + e_l.shape_str() + " larger than target " +
                         std::to_string(target_hw));
    }
    return bilinear_resize_value(e_l, target_hw, target_hw);
}

Tensor timestep_features(int tau, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep_features: dim must be even");
    Tensor f({dim});
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -2.0 * k / dim);
        f[k] = std::sin(tau * freq);
        f[half + k] = std::cos(tau * freq);
    }
    return f;
}

Tensor raw_stack_to_channels(const Tensor& raw) {
    if (raw.ndim() != 4) {
        throw ShapeError("raw_stack_to_channels: expected [frames,h,w,bands], got " +
                         raw.shape_str());
    }
    const int F = raw.dim(0), H = raw.dim(1), W = raw.dim(2), B = raw.dim(3);
    Tensor out({H, W, F * B});
    for (int f = 0; f < F; ++f)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double* src = &raw.at(f, y, x, 0);
                double* dst = &out.at(y, x, f * B);
                std::memcpy(dst, src, sizeof(double) * static_cast<size_t>(B));
            }
    return out;
}

// ---------------------------------------------------------------------------
// shape inference
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, std::vector<int>>> shape_infer(const DenoiserConfig& cfg) {
    cfg.validate();
    const auto lad = cfg.ladder();
    for (int i = 1; i < 5; ++i) {
        if (lad[static_cast<size_t>(i)] < 1) {
            throw ConfigError("shape_infer: spatial ladder collapses to 0 at stage " +
                              std::to_string(i));
        }
    }
    std::vector<std::pair<std::string, std::vector<int>>> rows;
    const auto& e = cfg.enc_channels;
    rows.push_back({"input_noised_hr", {cfg.hr_hw, cfg.hr_hw, cfg.hr_c}});
    if (cfg.use_ref) rows.push_back({"input_ref", {cfg.hr_hw, cfg.hr_hw, cfg.hr_c}});
    if (cfg.use_lr) {
        if (cfg.lr_mode == LrMode::encoded) {
            rows.push_back({"input_lr", {cfg.lr_hw, cfg.lr_hw, cfg.lr_c}});
        } else {
            rows.push_back({"input_lr", {cfg.raw_frames, cfg.raw_hw, cfg.raw_hw, cfg.raw_bands}});
        }
    }
    rows.push_back({"input_timestep", {1}});
    if (cfg.use_lr) {
        const char* name =
            cfg.lr_mode == LrMode::encoded ? "upsampled_lr" : "reshaped_upsampled_lr";
        rows.push_back({name, {cfg.hr_hw, cfg.hr_hw, cfg.lr_cond_c()}});
    }
    rows.push_back({"concat", {cfg.hr_hw, cfg.hr_hw, cfg.concat_c()}});
    for (int i = 0; i < 4; ++i) {
        rows.push_back({"encoder_block_" + std::to_string(i + 1),
                        {lad[static_cast<size_t>(i + 1)], lad[static_cast<size_t>(i + 1)],
                         e[static_cast<size_t>(i)]}});
        if (i == 2) rows.push_back({"encoder_block_3_timestep", {lad[3], lad[3], e[2]}});
    }
    rows.push_back({"attention_block", {lad[4], lad[4], e[3]}});
    rows.push_back({"bottleneck_conv_block", {lad[4], lad[4], cfg.bottleneck_c}});
    rows.push_back({"decoder_block_1", {lad[3], lad[3], cfg.dec_c(0)}});
    if (cfg.use_lr) rows.push_back({"sft_block_1", {lad[3], lad[3], cfg.dec_c(0)}});
    rows.push_back({"decoder_block_2", {lad[2], lad[2], cfg.dec_c(1)}});
    rows.push_back({"decoder_block_3", {lad[1], lad[1], cfg.dec_c(2)}});
    if (cfg.use_ref) {
        rows.push_back({"sft_block_2", {lad[1], lad[1], cfg.dec_c(2)}});
        rows.push_back({"decoder_block_3_sft_timestep", {lad[1], lad[1], cfg.dec_c(2)}});
    } else {
        rows.push_back({"decoder_block_3_timestep", {lad[1], lad[1], cfg.dec_c(2)}});
    }
    rows.push_back({"decoder_block_4", {lad[0], lad[0], cfg.dec_c(3)}});
    rows.push_back({"attention_block_2", {lad[0], lad[0], cfg.dec_c(3)}});
    rows.push_back({"output_conv_block", {lad[0], lad[0], cfg.hr_c}});
    return rows;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

ParamNodes::ParamNodes(const DenoiserParams& p, bool trainable) {
    for (const auto& [k, t] : p.tensors) {
        nodes_.emplace(k, trainable ? make_leaf(t) : make_const(t));
    }
}

const NodePtr& ParamNodes::at(const std::string& key) const {
    auto it = nodes_.find(key);
    if (it == nodes_.end()) throw ShapeError("model: missing parameter '" + key + "'");
    return it->second;
}

namespace {

template <typename Fn>
auto with_path(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const ShapeError& e) {
        throw ShapeError(path + ": " + e.what());
    }
}

NodePtr conv_block(const ParamNodes& P, const std::string& prefix, NodePtr x) {
    return with_path(prefix, [&] {
        x = conv2d(x, P.at(prefix + ".conv1.kernel"), P.at(prefix + ".conv1.bias"), 1, 1);
        x = layernorm(x, P.at(prefix + ".ln1.gain"), P.at(prefix + ".ln1.shift"));
        x = relu(x);
        x = conv2d(x, P.at(prefix + ".conv2.kernel"), P.at(prefix + ".conv2.bias"), 1, 1);
        x = layernorm(x, P.at(prefix + ".ln2.gain"), P.at(prefix + ".ln2.shift"));
        return relu(x);
    });
}

NodePtr tokens_of(NodePtr map3d) {
    const int h = map3d->value.dim(0), w = map3d->value.dim(1), c = map3d->value.dim(2);
    return reshape(map3d, {h * w, c});
}

// Residual cross/self-attention refinement of `feat` against `ctx`.
NodePtr attn_refine(const ParamNodes& P, const std::string& prefix, NodePtr feat, NodePtr ctx,
                    int heads) {
    return with_path(prefix, [&] {
        const int h = feat->value.dim(0), w = feat->value.dim(1), c = feat->value.dim(2);
        NodePtr q = matmul(tokens_of(feat), P.at(prefix + ".wq"));
        NodePtr k = matmul(tokens_of(ctx), P.at(prefix + ".wk"));
        NodePtr v = matmul(tokens_of(ctx), P.at(prefix + ".wv"));
        NodePtr a = attention(q, k, v, P.at(prefix + ".wo"), heads);
        NodePtr back = reshape(matmul(a, P.at(prefix + ".wb")), {h, w, c});
        return add(feat, back);
    });
}

NodePtr timestep_bias(const ParamNodes& P, const DenoiserConfig& cfg, int tau,
                      const std::string& site, NodePtr x) {
    NodePtr f = make_const(timestep_features(tau, cfg.t_embed_dim).reshaped({1, cfg.t_embed_dim}));
    NodePtr hmid = relu(add_row_bias(matmul(f, P.at("tstep.mlp1.w")), P.at("tstep.mlp1.b")));
    NodePtr hout = add_row_bias(matmul(hmid, P.at("tstep.mlp2.w")), P.at("tstep.mlp2.b"));
    NodePtr b = add_row_bias(matmul(hout, P.at("tstep." + site + ".w")),
                             P.at("tstep." + site + ".b"));
    const int c = b->value.dim(1);
    return add_channel_bias(x, reshape(b, {c}));
}

}  // namespace

NodePtr sft_apply(NodePtr feat, NodePtr cond, const ParamNodes& P, const std::string& prefix) {
    return with_path(prefix, [&] {
        const int H = feat->value.dim(0), W = feat->value.dim(1);
        NodePtr c1 = relu(conv2d(cond, P.at(prefix + ".conv1.kernel"),
                                 P.at(prefix + ".conv1.bias"), 1, 1));
        NodePtr c2 = relu(conv2d(c1, P.at(prefix + ".conv2.kernel"),
                                 P.at(prefix + ".conv2.bias"), 1, 1));
        NodePtr cup = bilinear_resize(c2, H, W);
        NodePtr gamma = sigmoid(conv2d(cup, P.at(prefix + ".gamma.kernel"),
                                       P.at(prefix + ".gamma.bias"), 1, 1));
        NodePtr beta = conv2d(cup, P.at(prefix + ".beta.kernel"), P.at(prefix + ".beta.bias"), 1, 1);
        return add(mul(feat, gamma), beta);
    });
}

NodePtr denoiser_forward(const ParamNodes& P, const DenoiserConfig& cfg, NodePtr e_h_tau, int tau,
                         const ConditioningBundle& cond, ShapeTrace* trace) {
    cfg.validate();
    const auto lad = cfg.ladder();
    auto record = [trace](const std::string& name, const NodePtr& n) {
        if (trace) trace->push_back({name, n->value.dims()});
    };
    record("input_noised_hr", e_h_tau);
    if (e_h_tau->value.ndim() != 3 || e_h_tau->value.dim(0) != cfg.hr_hw ||
        e_h_tau->value.dim(1) != cfg.hr_hw || e_h_tau->value.dim(2) != cfg.hr_c) {
        throw ShapeError("model: noised input " + e_h_tau->value.shape_str() + " != expected (" +
                         std::to_string(cfg.hr_hw) + "," + std::to_string(cfg.hr_hw) + "," +
                         std::to_string(cfg.hr_c) + ")");
    }

    // (1) channel concat of the noised input with the conditioning maps
    std::vector<NodePtr> parts = {e_h_tau};
    NodePtr ref_node;
    if (cfg.use_ref) {
        if (!cond.e_r) throw ShapeError("model: config expects e_r but conditioning lacks it");
        ref_node = make_const(*cond.e_r);
        with_path("input_ref", [&] {
            require_same_dims(ref_node->value, e_h_tau->value, "ref embedding");
            return 0;
        });
        record("input_ref", ref_node);
        parts.push_back(ref_node);
    }
    NodePtr lr_cond_native;  // LR conditioning at its native resolution
    if (cfg.use_lr) {
        if (cfg.lr_mode == LrMode::encoded) {
            if (!cond.e_l) throw ShapeError("model: config expects e_l but conditioning lacks it");
            if (cond.e_l->ndim() != 3 || cond.e_l->dim(0) != cfg.lr_hw ||
                cond.e_l->dim(1) != cfg.lr_hw || cond.e_l->dim(2) != cfg.lr_c) {
                throw ShapeError("input_lr: got " + cond.e_l->shape_str());
            }
            lr_cond_native = make_const(*cond.e_l);
        } else {
            if (!cond.raw_lr) throw ShapeError("model: raw LR mode but conditioning lacks raw_lr");
            lr_cond_native = make_const(raw_stack_to_channels(*cond.raw_lr));
        }
        if (trace) {
            if (cfg.lr_mode == LrMode::encoded) {
                trace->push_back({"input_lr", cond.e_l->dims()});
            } else {
                trace->push_back({"input_lr", cond.raw_lr->dims()});
            }
        }
        NodePtr lr_up = make_const(
            bilinear_resize_value(lr_cond_native->value, cfg.hr_hw, cfg.hr_hw));
        if (trace) trace->push_back({"input_timestep", {1}});
        record(cfg.lr_mode == LrMode::encoded ? "upsampled_lr" : "reshaped_upsampled_lr", lr_up);
        parts.push_back(lr_up);
    } else if (trace) {
        trace->push_back({"input_timestep", {1}});
    }
    NodePtr x = concat_channels(parts);
    record("concat", x);

    // (2) self-attention over the concatenation -> full-res context map
    NodePtr ctx_full;
    {
        NodePtr t = tokens_of(x);
        NodePtr q = matmul(t, P.at("selfattn.wq"));
        NodePtr k = matmul(t, P.at("selfattn.wk"));
        NodePtr v = matmul(t, P.at("selfattn.wv"));
        NodePtr a = with_path("selfattn",
                              [&] { return attention(q, k, v, P.at("selfattn.wo"), cfg.heads); });
        ctx_full = reshape(a, {cfg.hr_hw, cfg.hr_hw, cfg.attn_c});
    }

    // (3) encoder ladder, timestep bias after block 3
    NodePtr h = x;
    std::vector<NodePtr> skips;
    for (int i = 1; i <= 4; ++i) {
        h = conv_block(P, "enc" + std::to_string(i), h);
        h = maxpool2d(h);
        record("encoder_block_" + std::to_string(i), h);
        if (i == 3) {
            h = timestep_bias(P, cfg, tau, "enc_proj", h);
            record("encoder_block_3_timestep", h);
        }
        skips.push_back(h);
    }

    // (4) conv-block downsample of the context map to the encoder-4 size
    NodePtr ctxd = ctx_full;
    for (int i = 1; i <= 4; ++i) {
        const std::string p = "ctxdown" + std::to_string(i);
        ctxd = with_path(p, [&] {
            NodePtr c = conv2d(ctxd, P.at(p + ".conv.kernel"), P.at(p + ".conv.bias"), 1, 1);
            c = relu(layernorm(c, P.at(p + ".ln.gain"), P.at(p + ".ln.shift")));
            return maxpool2d(c);
        });
    }

    // (5) cross-attention fusing global context into the deepest encoder map
    h = attn_refine(P, "xattn1", skips[3], ctxd, cfg.heads);
    record("attention_block", h);

    // (6) bottleneck
    h = conv_block(P, "bottleneck", h);
    record("bottleneck_conv_block", h);

    // (7) decoder with skips, SFT conditioning, timestep bias after block 3
    const NodePtr dec_skips[4] = {skips[2], skips[1], skips[0], nullptr};
    for (int i = 0; i < 4; ++i) {
        const std::string p = "dec" + std::to_string(i + 1);
        const int target = lad[static_cast<size_t>(3 - i)];
        h = with_path(p + ".up", [&] {
            return transposed_conv2d(h, P.at(p + ".up.kernel"), P.at(p + ".up.bias"), 2, 0,
                                     target, target);
        });
        if (dec_skips[i]) h = concat_channels({h, dec_skips[i]});
        h = conv_block(P, p, h);
        record("decoder_block_" + std::to_string(i + 1), h);
        if (i == 0 && cfg.use_lr) {
            NodePtr c = make_const(
                bilinear_resize_value(lr_cond_native->value, target, target));
            h = sft_apply(h, c, P, "sft1");
            record("sft_block_1", h);
        }
        if (i == 2) {
            if (cfg.use_ref) {
                NodePtr c = make_const(bilinear_resize_value(ref_node->value, target, target));
                h = sft_apply(h, c, P, "sft2");
                record("sft_block_2", h);
            }
            h = timestep_bias(P, cfg, tau, "dec_proj", h);
            record(cfg.use_ref ? "decoder_block_3_sft_timestep" : "decoder_block_3_timestep", h);
        }
    }

    // (8) final cross-attention against the full-res context, (9) output conv
    h = attn_refine(P, "xattn2", h, ctx_full, cfg.heads);
    record("attention_block_2", h);
    NodePtr out = with_path("out", [&] {
        return conv2d(h, P.at("out.kernel"), P.at("out.bias"), 1, 1);
    });
    record("output_conv_block", out);
    return out;
}

Tensor denoiser_forward_value(const DenoiserParams& params, const DenoiserConfig& cfg,
                              const Tensor& e_h_tau, int tau, const ConditioningBundle& cond) {
    ParamNodes P(params, /*trainable=*/false);
    return denoiser_forward(P, cfg, make_const(e_h_tau), tau, cond)->value;
}

}  // namespace seedsr
