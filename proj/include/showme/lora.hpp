#pragma once

// Linear projections that can host several named low-rank adapter sets.

#include "showme/common.hpp"

#include <map>
#include <set>

namespace showme::model {

/// Per-call switches threaded through every layer of the network.
struct ForwardContext {
    bool temporal_enabled = true;
    std::set<std::string> active;     // adapter sets that contribute
    bool training = false;            // adapter dropout on/off
    at::Generator* gen = nullptr;     // dropout randomness when training
};

/// A named collection of low-rank adapters and the layers it binds to.
struct AdapterSpec {
    std::string name;
    int64_t rank = 8;
    double dropout = 0.1;
    double scaling = 1.0;
    std::vector<std::string> targets;

    bool operator==(const AdapterSpec&) const = default;

    void validate() const {
        if (name.empty()) fail(ErrorKind::usage, "adapter: empty name");
        if (rank < 1) fail(ErrorKind::usage, "adapter '" + name + "': rank must be >= 1");
        if (dropout < 0 || dropout >= 1) fail(ErrorKind::usage, "adapter '" + name + "': dropout must be in [0,1)");
    }
};

/// Parameter-name infix used for an adapter set ("spatial-stage" -> "lora_spatial_stage_").
inline std::string adapter_param_prefix(const std::string& set_name) {
    std::string s = "lora_";
    for (char c : set_name) s.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return s + "_";
}

class AdaptedLinearImpl : public torch::nn::Module {
public:
    struct Adapter {
        torch::Tensor down;  // A: (rank, in)
        torch::Tensor up;    // B: (out, rank)
        double scaling = 1.0;
        double dropout = 0.0;
    };

    AdaptedLinearImpl(int64_t in, int64_t out, bool bias = true)
        : base(register_module("base", torch::nn::Linear(torch::nn::LinearOptions(in, out).bias(bias)))) {}

    torch::Tensor forward(const torch::Tensor& x, const ForwardContext& ctx) {
        auto y = base(x);
        for (const auto& [name, a] : adapters_) {
            if (!ctx.active.count(name)) continue;
            auto h = x;
            if (ctx.training && a.dropout > 0) {
                if (!ctx.gen) fail(ErrorKind::usage, "adapter dropout needs a generator");
                auto keep = torch::empty_like(x).bernoulli_(1.0 - a.dropout, *ctx.gen);
                h = x * keep / (1.0 - a.dropout);
            }
            y = y + a.scaling * torch::nn::functional::linear(torch::nn::functional::linear(h, a.down), a.up);
        }
        return y;
    }

    void attach(const AdapterSpec& spec, at::Generator& gen) {
        const auto in = base->weight.size(1), out = base->weight.size(0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Adapter a;
        {
            torch::NoGradGuard ng;
            auto down = torch::rand({spec.rank, in}, gen, torch::kDouble).mul_(2 * bound).sub_(bound);
            a.down = down.to(base->weight.scalar_type());
            a.up = torch::zeros({out, spec.rank}, base->weight.options());
        }
        const auto prefix = adapter_param_prefix(spec.name);
        a.down = register_parameter(prefix + "A", a.down);
        a.up = register_parameter(prefix + "B", a.up);
        a.scaling = spec.scaling;
        a.dropout = spec.dropout;
        adapters_[spec.name] = a;
    }

    bool has(const std::string& name) const { return adapters_.count(name) > 0; }
    const Adapter& adapter(const std::string& name) const { return adapters_.at(name); }

    /// Dense weight the layer applies with `name` active: W + scaling * B A.
    torch::Tensor effective_weight(const std::string& name) const {
        const auto& a = adapters_.at(name);
        return base->weight + a.scaling * torch::matmul(a.up, a.down);
    }

    torch::nn::Linear base;

private:
    std::map<std::string, Adapter> adapters_;
};
TORCH_MODULE(AdaptedLinear);

} // namespace showme::model
