#pragma once

// Factorized spatiotemporal noise-prediction U-Net.
//
// Each resolution level stacks residual blocks (timestep-modulated), a
// spatial transformer (self-attention + cross-attention to instruction and
// context tokens) and a per-location temporal attention block. Disabling the
// temporal switch turns every temporal block into the identity, so the
// network acts on each frame independently.
//
// Once noise levels are attached, the output is sqrt(1 - alpha_bar(t)) * z_t
// plus the network residual: for whitened latents that term is the best
// linear noise estimate, and it keeps high-noise predictions well scaled.

#include "showme/codec.hpp"
#include "showme/lora.hpp"

#include <cmath>
#include <set>

namespace showme::model {

namespace F = torch::nn::functional;

struct NetworkConfig {
    int64_t latent_channels = 48;
    int64_t base_width = 32;
    int64_t levels = 2;
    int64_t blocks_per_level = 1;
    int64_t heads = 2;
    int64_t max_frames = 32;   // temporal attention window
    int64_t embed_dim = 32;    // instruction / context token width
    int64_t context_tokens = 4;
    int64_t num_actions = 12;
    int64_t groups = 8;

    void validate() const {
        if (latent_channels < 1 || base_width < 1 || embed_dim < 1 || heads < 1)
            fail(ErrorKind::usage, "network: widths must be positive");
        if (levels < 1 || blocks_per_level < 1) fail(ErrorKind::usage, "network: need at least one level and block");
        if (context_tokens < 1) fail(ErrorKind::usage, "network: context token count must be >= 1");
        if (base_width % groups != 0 || base_width % heads != 0 || embed_dim % heads != 0)
            fail(ErrorKind::usage, "network: widths must divide by group and head counts");
    }

    int64_t width(int64_t level) const { return base_width * (int64_t{1} << level); }
};

inline torch::Tensor timestep_features(const torch::Tensor& t, int64_t dim, torch::ScalarType dtype) {
    const int64_t half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kDouble) / static_cast<double>(half));
    auto args = t.to(torch::kDouble).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::sin(args), torch::cos(args)}, 1).to(dtype);
}

class AttentionImpl : public torch::nn::Module {
public:
    AttentionImpl(int64_t dim, int64_t kv_dim, int64_t heads)
        : heads_(heads),
          q(register_module("q", AdaptedLinear(dim, dim))),
          k(register_module("k", AdaptedLinear(kv_dim, dim))),
          v(register_module("v", AdaptedLinear(kv_dim, dim))),
          o(register_module("o", AdaptedLinear(dim, dim))) {}

    /// x: (B,n,dim), kv: (B,m,kv_dim) -> (B,n,dim)
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& kv, const ForwardContext& ctx) {
        const auto B = x.size(0), n = x.size(1), m = kv.size(1);
        auto split = [&](const torch::Tensor& t, int64_t len) {
            return t.view({B, len, heads_, -1}).transpose(1, 2);
        };
        auto qh = split(q->forward(x, ctx), n);
        auto kh = split(k->forward(kv, ctx), m);
        auto vh = split(v->forward(kv, ctx), m);
        const double scale = 1.0 / std::sqrt(static_cast<double>(qh.size(-1)));
        auto w = torch::softmax(torch::matmul(qh, kh.transpose(-2, -1)) * scale, -1);
        auto out = torch::matmul(w, vh).transpose(1, 2).reshape({B, n, -1});
        return o->forward(out, ctx);
    }

private:
    int64_t heads_;

public:
    AdaptedLinear q, k, v, o;
};
TORCH_MODULE(Attention);

class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(int64_t in, int64_t out, int64_t temb_dim, int64_t groups)
        : norm1(register_module("norm1", torch::nn::GroupNorm(groups, in))),
          conv1(register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)))),
          norm2(register_module("norm2", torch::nn::GroupNorm(groups, out))),
          conv2(register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)))),
          modulation(register_module("modulation", torch::nn::Linear(temb_dim, 2 * out))) {
        if (in != out) skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb) {
        auto h = conv1(F::silu(norm1(x)));
        auto ss = modulation(F::silu(temb)).unsqueeze(-1).unsqueeze(-1).chunk(2, 1);
        h = norm2(h) * (1 + ss[0]) + ss[1];
        h = conv2(F::silu(h));
        return (skip ? skip(x) : x) + h;
    }

    torch::nn::GroupNorm norm1;
    torch::nn::Conv2d conv1;
    torch::nn::GroupNorm norm2;
    torch::nn::Conv2d conv2;
    torch::nn::Linear modulation;
    torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

class SpatialTransformerImpl : public torch::nn::Module {
public:
    SpatialTransformerImpl(int64_t dim, int64_t ctx_dim, int64_t heads)
        : ln1(register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
          attn1(register_module("attn1", Attention(dim, dim, heads))),
          ln2(register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
          attn2(register_module("attn2", Attention(dim, ctx_dim, heads))),
          ln3(register_module("ln3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
          ff1(register_module("ff1", torch::nn::Linear(dim, 2 * dim))),
          ff2(register_module("ff2", torch::nn::Linear(2 * dim, dim))) {}

    /// x: (B,C,h,w); tokens: (B,m,ctx_dim)
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& tokens, const ForwardContext& ctx) {
        const auto B = x.size(0), C = x.size(1), h = x.size(2), w = x.size(3);
        auto t = x.flatten(2).transpose(1, 2);
        auto n1 = ln1(t);
        t = t + attn1->forward(n1, n1, ctx);
        t = t + attn2->forward(ln2(t), tokens, ctx);
        t = t + ff2(F::gelu(ff1(ln3(t))));
        return t.transpose(1, 2).reshape({B, C, h, w});
    }

    torch::nn::LayerNorm ln1;
    Attention attn1;
    torch::nn::LayerNorm ln2;
    Attention attn2;
    torch::nn::LayerNorm ln3;
    torch::nn::Linear ff1, ff2;
};
TORCH_MODULE(SpatialTransformer);

class TemporalBlockImpl : public torch::nn::Module {
public:
    TemporalBlockImpl(int64_t dim, int64_t heads, int64_t max_frames)
        : ln(register_module("ln", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
          attn(register_module("attn", Attention(dim, dim, heads))) {
        positions = register_buffer("positions", timestep_features(torch::arange(max_frames), dim, torch::kFloat));
    }

    /// x: (N*L,C,h,w); identity when the temporal switch is off.
    torch::Tensor forward(const torch::Tensor& x, int64_t frames, const ForwardContext& ctx) {
        if (!ctx.temporal_enabled) return x;
        if (frames > positions.size(0)) fail(ErrorKind::shape, "temporal block: clip longer than the attention window");
        const auto NL = x.size(0), C = x.size(1), h = x.size(2), w = x.size(3);
        const auto N = NL / frames;
        auto t = x.view({N, frames, C, h * w}).permute({0, 3, 1, 2}).reshape({N * h * w, frames, C});
        auto n = ln(t) + positions.slice(0, 0, frames).to(t.scalar_type()).unsqueeze(0);
        t = t + attn->forward(n, n, ctx);
        return t.view({N, h * w, frames, C}).permute({0, 2, 3, 1}).reshape({NL, C, h, w});
    }

    torch::nn::LayerNorm ln;
    Attention attn;
    torch::Tensor positions;
};
TORCH_MODULE(TemporalBlock);

/// Cross-attention pooling of initial-frame latent tokens into K context tokens.
class ContextProjectorImpl : public torch::nn::Module {
public:
    ContextProjectorImpl(int64_t feature_dim, int64_t embed_dim, int64_t tokens, int64_t heads)
        : attn(register_module("attn", Attention(embed_dim, feature_dim, heads))) {
        queries = register_parameter("queries", torch::randn({tokens, embed_dim}) * 0.5);
    }

    /// features: (N,C,h,w) -> (N,K,embed_dim)
    torch::Tensor forward(const torch::Tensor& features, const ForwardContext& ctx) {
        const auto N = features.size(0);
        auto kv = features.flatten(2).transpose(1, 2);
        auto q = queries.unsqueeze(0).expand({N, -1, -1});
        return attn->forward(q, kv, ctx);
    }

    Attention attn;
    torch::Tensor queries;
};
TORCH_MODULE(ContextProjector);

enum class CondMode { manipulation, prediction, repeated };

/// Conditioning for a batch of N clips of L frames.
struct ConditioningPack {
    torch::Tensor instruction;   // (N,E)
    torch::Tensor context;       // (N,K,E)
    torch::Tensor cond_latents;  // (N,L,C,h,w)
    torch::Tensor mask;          // (N,L)
    torch::Tensor uncond;        // (N) bool

    int64_t batch() const { return cond_latents.size(0); }
    int64_t frames() const { return cond_latents.size(1); }

    /// Rows `idx` of every field.
    ConditioningPack select(const torch::Tensor& idx) const {
        return {instruction.index_select(0, idx), context.index_select(0, idx), cond_latents.index_select(0, idx),
                mask.index_select(0, idx), uncond.index_select(0, idx)};
    }
};

struct AdapterState {
    AdapterSpec spec;
    bool active = true;
    bool trainable = true;
};

class DenoiserImpl : public torch::nn::Module {
public:
    explicit DenoiserImpl(NetworkConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        const auto C = cfg_.latent_channels, W = cfg_.base_width, E = cfg_.embed_dim;
        temb_dim_ = 4 * W;
        time1 = register_module("time1", torch::nn::Linear(W, temb_dim_));
        time2 = register_module("time2", torch::nn::Linear(temb_dim_, temb_dim_));
        instruction_table = register_module("instruction_table", torch::nn::Embedding(cfg_.num_actions, E));
        null_instruction = register_parameter("null_instruction", torch::randn({E}) * 0.5);
        context = register_module("context", ContextProjector(C, E, cfg_.context_tokens, cfg_.heads));
        conv_in = register_module("conv_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * C + 1, W, 3).padding(1)));

        enc = register_module("enc", torch::nn::ModuleList());
        for (int64_t l = 0; l < cfg_.levels; ++l) {
            const auto w = cfg_.width(l);
            for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) {
                const auto in = (b == 0 && l > 0) ? cfg_.width(l - 1) : w;
                enc->push_back(ResBlock(in, w, temb_dim_, cfg_.groups));
                enc->push_back(SpatialTransformer(w, E, cfg_.heads));
                enc->push_back(TemporalBlock(w, cfg_.heads, cfg_.max_frames));
            }
        }
        down = register_module("down", torch::nn::ModuleList());
        up = register_module("up", torch::nn::ModuleList());
        for (int64_t l = 0; l + 1 < cfg_.levels; ++l) {
            down->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.width(l), cfg_.width(l), 3).stride(2).padding(1)));
            up->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.width(l + 1), cfg_.width(l), 3).padding(1)));
        }
        dec = register_module("dec", torch::nn::ModuleList());
        for (int64_t l = cfg_.levels - 2; l >= 0; --l) {
            const auto w = cfg_.width(l);
            for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) {
                dec->push_back(ResBlock(b == 0 ? 2 * w : w, w, temb_dim_, cfg_.groups));
                dec->push_back(SpatialTransformer(w, E, cfg_.heads));
                dec->push_back(TemporalBlock(w, cfg_.heads, cfg_.max_frames));
            }
        }
        norm_out = register_module("norm_out", torch::nn::GroupNorm(cfg_.groups, W));
        conv_out = register_module("conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(W, C, 3).padding(1)));
    }

    const NetworkConfig& config() const { return cfg_; }

    /// noisy: (N,L,C,h,w); t: (N) -> eps_hat (N,L,C,h,w)
    torch::Tensor forward(const torch::Tensor& noisy, const torch::Tensor& t, const ConditioningPack& pack,
                          const ForwardContext& ctx) {
        if (noisy.dim() != 5 || noisy.size(2) != cfg_.latent_channels)
            fail(ErrorKind::shape, "denoiser: expected (N,L," + std::to_string(cfg_.latent_channels) + ",h,w), got " + shape_str(noisy));
        for (const auto& name : ctx.active)
            if (!adapters_.count(name)) fail(ErrorKind::usage, "denoiser: unknown adapter set '" + name + "'");
        const auto N = noisy.size(0), L = noisy.size(1), C = noisy.size(2), h = noisy.size(3), w = noisy.size(4);
        if (pack.cond_latents.sizes() != noisy.sizes() || pack.mask.size(0) != N || pack.mask.size(1) != L)
            fail(ErrorKind::shape, "denoiser: conditioning " + shape_str(pack.cond_latents) + " does not match latents " + shape_str(noisy));
        if (t.numel() != N) fail(ErrorKind::shape, "denoiser: need one timestep per clip");
        const auto dtype = noisy.scalar_type();

        auto mask = pack.mask.to(dtype).view({N, L, 1, 1, 1}).expand({N, L, 1, h, w});
        auto x = torch::cat({noisy, pack.cond_latents.to(dtype), mask}, 2).view({N * L, 2 * C + 1, h, w});

        auto temb = time2(F::silu(time1(timestep_features(t.flatten(), cfg_.base_width, dtype))));
        temb = temb.repeat_interleave(L, 0);
        auto tokens = torch::cat({pack.instruction.unsqueeze(1), pack.context}, 1).to(dtype).repeat_interleave(L, 0);

        auto hcur = conv_in(x);
        std::vector<torch::Tensor> skips;
        size_t idx = 0;
        for (int64_t l = 0; l < cfg_.levels; ++l) {
            for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) hcur = level_block(enc, idx, hcur, temb, tokens, L, ctx);
            if (l + 1 < cfg_.levels) {
                skips.push_back(hcur);
                hcur = down[static_cast<size_t>(l)]->as<torch::nn::Conv2d>()->forward(hcur);
            }
        }
        idx = 0;
        for (int64_t l = cfg_.levels - 2; l >= 0; --l) {
            auto skip = skips.back();
            skips.pop_back();
            hcur = F::interpolate(hcur, F::InterpolateFuncOptions().size(std::vector<int64_t>{skip.size(2), skip.size(3)}).mode(torch::kNearest));
            hcur = up[static_cast<size_t>(l)]->as<torch::nn::Conv2d>()->forward(hcur);
            hcur = torch::cat({hcur, skip}, 1);
            for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) hcur = level_block(dec, idx, hcur, temb, tokens, L, ctx);
        }
        auto out = conv_out(F::silu(norm_out(hcur))).view({N, L, C, h, w});
        if (!skip_gain_.defined()) return out;
        if ((t < 1).any().item<bool>() || (t >= skip_gain_.size(0)).any().item<bool>())
            fail(ErrorKind::usage, "denoiser: timestep outside the attached schedule");
        return out + skip_gain_.to(dtype).index_select(0, t.flatten().to(torch::kLong)).view({N, 1, 1, 1, 1}) * noisy;
    }

    /// Attaches alpha_bar(1..T); index 0 of the gain table is unused.
    void set_noise_levels(const std::vector<double>& alpha_bars) {
        std::vector<double> gain{0.0};
        for (double ab : alpha_bars) gain.push_back(std::sqrt(1.0 - ab));
        skip_gain_ = torch::tensor(gain, torch::kDouble);
    }

    /// Forward with the adapter sets currently flagged active.
    torch::Tensor forward(const torch::Tensor& noisy, const torch::Tensor& t, const ConditioningPack& pack,
                          bool temporal_enabled) {
        ForwardContext ctx;
        ctx.temporal_enabled = temporal_enabled;
        ctx.active = active_adapters();
        return forward(noisy, t, pack, ctx);
    }

    /// K context tokens from the initial-frame latents (N,C,h,w).
    torch::Tensor project_context(const torch::Tensor& features, const ForwardContext& ctx) {
        return context->forward(features, ctx);
    }

    /// Packs instruction, context tokens and zero-padded frame conditioning.
    ConditioningPack build_conditioning(const PatchCodec& codec, const torch::Tensor& x0, const torch::Tensor& actions,
                                        CondMode mode, int64_t L, double drop_probability, at::Generator& gen,
                                        const ForwardContext& ctx) {
        if (x0.dim() != 4) fail(ErrorKind::shape, "build_conditioning: expected x0 (N,3,H,W)");
        if (mode == CondMode::manipulation && L != 1) fail(ErrorKind::usage, "build_conditioning: manipulation has a single target frame");
        const auto N = x0.size(0);
        auto z0 = codec.encode(x0.to(dtype()));
        auto drop = torch::rand({N}, gen, torch::kDouble) < drop_probability;
        return assemble(z0, actions, mode, L, drop, ctx);
    }

    ConditioningPack assemble(const torch::Tensor& z0, const torch::Tensor& actions, CondMode mode, int64_t L,
                              const torch::Tensor& drop, const ForwardContext& ctx) {
        const auto N = z0.size(0);
        ConditioningPack p;
        p.uncond = drop.to(torch::kBool);
        auto keep = (~p.uncond).to(z0.scalar_type());
        auto instr = instruction_table(actions.to(torch::kLong));
        p.instruction = torch::where(p.uncond.unsqueeze(1), null_instruction.unsqueeze(0).expand_as(instr), instr);
        p.context = project_context(z0, ctx) * keep.view({N, 1, 1});
        p.mask = torch::zeros({N, L}, z0.options());
        if (mode == CondMode::prediction) {
            p.cond_latents = torch::zeros({N, L, z0.size(1), z0.size(2), z0.size(3)}, z0.options());
            p.cond_latents.select(1, 0).copy_(z0.detach());
            p.mask.select(1, 0).fill_(1.0);
        } else {
            p.cond_latents = z0.detach().unsqueeze(1).expand({N, L, -1, -1, -1}).contiguous();
            p.mask.fill_(1.0);
        }
        return p;
    }

    /// Same frames, with instruction and context replaced by null conditioning.
    ConditioningPack unconditional(const ConditioningPack& p) const {
        ConditioningPack u = p;
        const auto N = p.batch();
        u.uncond = torch::ones({N}, torch::kBool);
        u.instruction = null_instruction.unsqueeze(0).expand({N, -1}).to(p.instruction.scalar_type());
        u.context = torch::zeros_like(p.context);
        return u;
    }

    // ---- adapter management -------------------------------------------------

    /// Every adapter-capable projection, keyed by module path.
    std::map<std::string, AdaptedLinear> adaptable_layers() {
        std::map<std::string, AdaptedLinear> out;
        for (const auto& item : named_modules("", false))
            if (item.value()->as<AdaptedLinearImpl>())
                out.emplace(item.key(), AdaptedLinear(std::static_pointer_cast<AdaptedLinearImpl>(item.value())));
        return out;
    }

    /// Projections of spatial self/cross attention and the context projector.
    std::vector<std::string> spatial_stage_targets() {
        std::vector<std::string> out;
        for (const auto& [path, layer] : adaptable_layers())
            if (path.find(".attn1.") != std::string::npos || path.find(".attn2.") != std::string::npos ||
                path.rfind("context.", 0) == 0)
                out.push_back(path);
        return out;
    }

    /// Projections of spatial and temporal attention.
    std::vector<std::string> temporal_stage_targets() {
        std::vector<std::string> out;
        for (const auto& [path, layer] : adaptable_layers())
            if (path.find(".attn1.") != std::string::npos || path.find(".attn2.") != std::string::npos ||
                (path.find(".attn.") != std::string::npos && path.rfind("context.", 0) != 0))
                out.push_back(path);
        return out;
    }

    void attach_adapters(const AdapterSpec& spec, uint64_t seed) {
        spec.validate();
        if (auto it = adapters_.find(spec.name); it != adapters_.end()) {
            if (it->second.spec == spec) return;
            fail(ErrorKind::usage, "adapter set '" + spec.name + "' is already attached with a different spec");
        }
        auto layers = adaptable_layers();
        for (const auto& target : spec.targets)
            if (!layers.count(target)) fail(ErrorKind::usage, "adapter '" + spec.name + "': unknown target layer '" + target + "'");
        auto gen = make_generator(seed);
        for (const auto& target : spec.targets) layers.at(target)->attach(spec, gen);
        adapters_[spec.name] = AdapterState{spec, true, true};
    }

    bool has_adapter(const std::string& name) const { return adapters_.count(name) > 0; }

    const std::map<std::string, AdapterState>& adapters() const { return adapters_; }

    void set_adapter_active(const std::string& name, bool active) { state(name).active = active; }

    void set_adapter_trainable(const std::string& name, bool trainable) {
        state(name).trainable = trainable;
        for (auto& p : adapter_parameters(name)) p.set_requires_grad(trainable);
    }

    std::set<std::string> active_adapters() const {
        std::set<std::string> out;
        for (const auto& [name, s] : adapters_)
            if (s.active) out.insert(name);
        return out;
    }

    std::vector<torch::Tensor> adapter_parameters(const std::string& name) {
        state(name);
        const auto prefix = "." + adapter_param_prefix(name);
        std::vector<torch::Tensor> out;
        for (const auto& item : named_parameters())
            if (item.key().find(prefix) != std::string::npos) out.push_back(item.value());
        return out;
    }

    torch::ScalarType dtype() const { return conv_in->weight.scalar_type(); }

    torch::nn::Linear time1{nullptr}, time2{nullptr};
    torch::nn::Embedding instruction_table{nullptr};
    torch::Tensor null_instruction;
    ContextProjector context{nullptr};
    torch::nn::Conv2d conv_in{nullptr};
    torch::nn::ModuleList enc{nullptr}, down{nullptr}, up{nullptr}, dec{nullptr};
    torch::nn::GroupNorm norm_out{nullptr};
    torch::nn::Conv2d conv_out{nullptr};

private:
    torch::Tensor skip_gain_;

    AdapterState& state(const std::string& name) {
        auto it = adapters_.find(name);
        if (it == adapters_.end()) fail(ErrorKind::usage, "unknown adapter set '" + name + "'");
        return it->second;
    }

    torch::Tensor level_block(torch::nn::ModuleList& list, size_t& idx, torch::Tensor h, const torch::Tensor& temb,
                              const torch::Tensor& tokens, int64_t L, const ForwardContext& ctx) {
        h = list[idx++]->as<ResBlockImpl>()->forward(h, temb);
        h = list[idx++]->as<SpatialTransformerImpl>()->forward(h, tokens, ctx);
        h = list[idx++]->as<TemporalBlockImpl>()->forward(h, L, ctx);
        return h;
    }

    NetworkConfig cfg_;
    int64_t temb_dim_ = 0;
    std::map<std::string, AdapterState> adapters_;
};
TORCH_MODULE(Denoiser);

/// Checkpoint group of a named parameter.
inline std::string parameter_group(const std::string& name) {
    const auto lora = name.find(".lora_");
    if (lora != std::string::npos) {
        auto rest = name.substr(lora + 6);
        rest = rest.substr(0, rest.rfind('_'));
        for (auto& c : rest)
            if (c == '_') c = '-';
        return "adapter:" + rest;
    }
    if (name.rfind("instruction_table.", 0) == 0 || name == "null_instruction") return "embeddings";
    return "base";
}

/// Builds a denoiser with parameters drawn deterministically from `seed`.
inline Denoiser make_denoiser(const NetworkConfig& cfg, uint64_t seed) {
    torch::manual_seed(seed);
    return Denoiser(cfg);
}

} // namespace showme::model
