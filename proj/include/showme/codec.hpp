#pragma once

// Exactly invertible linear latent codec: space-to-depth by the patch size,
// an orthonormal channel mix, and a per-channel whitening affine.

#include "showme/archive.hpp"

namespace showme {

class PatchCodec {
public:
    PatchCodec() = default;

    PatchCodec(int patch, torch::Tensor mixing, torch::Tensor scale, torch::Tensor shift)
        : patch_(patch),
          mixing_(mixing.to(torch::kDouble).contiguous()),
          scale_(scale.to(torch::kDouble).contiguous()),
          shift_(shift.to(torch::kDouble).contiguous()) {
        const int64_t c = channels();
        if (patch_ < 1) fail(ErrorKind::usage, "codec: patch size must be positive");
        if (mixing_.sizes() != torch::IntArrayRef({c, c}) || scale_.numel() != c || shift_.numel() != c)
            fail(ErrorKind::shape, "codec: parameter shapes do not match 3*p*p channels");
        if ((scale_ <= 0).any().item<bool>()) fail(ErrorKind::usage, "codec: whitening scale must be positive");
    }

    /// Seeded random orthonormal mix; whitening starts as the identity.
    static PatchCodec random(int patch, uint64_t seed) {
        const int64_t c = 3LL * patch * patch;
        auto gen = make_generator(seed);
        auto g = torch::randn({c, c}, gen, torch::kDouble);
        auto [q, r] = torch::linalg_qr(g);
        q = q * torch::sign(r.diagonal()).unsqueeze(0);
        return PatchCodec(patch, q.t().contiguous(), torch::ones({c}, torch::kDouble), torch::zeros({c}, torch::kDouble));
    }

    int patch() const { return patch_; }
    int64_t channels() const { return 3LL * patch_ * patch_; }
    const torch::Tensor& mixing() const { return mixing_; }
    const torch::Tensor& scale() const { return scale_; }
    const torch::Tensor& shift() const { return shift_; }

    /// Fits the whitening so latents of `frames` have zero mean and unit
    /// variance per channel (standard deviations floored at 1e-3).
    void fit_whitening(const torch::Tensor& frames) {
        torch::NoGradGuard ng;
        auto y = mix(unshuffle(frames.to(torch::kDouble)));
        auto flat = y.transpose(0, 1).reshape({channels(), -1});
        shift_ = flat.mean(1).contiguous();
        scale_ = flat.std(1, false).clamp_min(1e-3).contiguous();
    }

    /// (...,3,H,W) -> (...,C,H/p,W/p)
    torch::Tensor encode(const torch::Tensor& x) const {
        if (x.dim() < 3 || x.size(-3) != 3) fail(ErrorKind::shape, "codec.encode: expected (...,3,H,W), got " + shape_str(x));
        auto lead = x.sizes().slice(0, x.dim() - 3).vec();
        auto y = mix(unshuffle(x.reshape({-1, 3, x.size(-2), x.size(-1)})));
        auto z = (y - cast(shift_, x).view({1, -1, 1, 1})) / cast(scale_, x).view({1, -1, 1, 1});
        lead.insert(lead.end(), {channels(), z.size(2), z.size(3)});
        return z.reshape(lead);
    }

    /// (...,C,h,w) -> (...,3,h*p,w*p); the exact inverse of encode.
    torch::Tensor decode(const torch::Tensor& z) const {
        if (z.dim() < 3 || z.size(-3) != channels())
            fail(ErrorKind::shape, "codec.decode: expected (...," + std::to_string(channels()) + ",h,w), got " + shape_str(z));
        auto lead = z.sizes().slice(0, z.dim() - 3).vec();
        auto flat = z.reshape({-1, channels(), z.size(-2), z.size(-1)});
        auto y = flat * cast(scale_, z).view({1, -1, 1, 1}) + cast(shift_, z).view({1, -1, 1, 1});
        auto pix = torch::pixel_shuffle(torch::einsum("kc,nkhw->nchw", {cast(mixing_, z), y}), patch_);
        lead.insert(lead.end(), {3, pix.size(2), pix.size(3)});
        return pix.reshape(lead);
    }

    /// Frame-wise over a clip (L,3,H,W); no temporal mixing.
    torch::Tensor encode_clip(const torch::Tensor& frames) const { return encode(frames); }
    torch::Tensor decode_clip(const torch::Tensor& latents) const { return decode(latents); }

    void save(TensorArchive& ar, const std::string& prefix = "codec/") const {
        ar.put(prefix + "patch", torch::tensor({static_cast<int64_t>(patch_)}, torch::kLong));
        ar.put(prefix + "mixing", mixing_);
        ar.put(prefix + "scale", scale_);
        ar.put(prefix + "shift", shift_);
    }

    static PatchCodec load(const TensorArchive& ar, const std::string& prefix = "codec/") {
        return PatchCodec(static_cast<int>(ar.get(prefix + "patch")[0].item<int64_t>()), ar.get(prefix + "mixing"),
                          ar.get(prefix + "scale"), ar.get(prefix + "shift"));
    }

private:
    static torch::Tensor cast(const torch::Tensor& p, const torch::Tensor& like) { return p.to(like.scalar_type()); }

    torch::Tensor unshuffle(const torch::Tensor& x) const {
        if (x.size(-2) % patch_ != 0 || x.size(-1) % patch_ != 0)
            fail(ErrorKind::shape, "codec: frame size " + shape_str(x) + " is not divisible by patch " + std::to_string(patch_));
        return torch::pixel_unshuffle(x, patch_);
    }

    torch::Tensor mix(const torch::Tensor& y) const {
        return torch::einsum("kc,nchw->nkhw", {cast(mixing_, y), y});
    }

    int patch_ = 1;
    torch::Tensor mixing_, scale_, shift_;
};

} // namespace showme
