#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "palmforge/nn/ops.hpp"
#include "palmforge/parallel.hpp"
#include "palmforge/rng.hpp"

// Conditional U-Net denoiser. Two resolution halvings, timestep + quality
// embeddings injected as per-channel biases, optional control branch whose
// features enter the down path through 1x1 projections that start at zero,
// so an attached branch is invisible until training moves it.

namespace palmforge::nn {

struct DenoiserConfig {
    int image_size = 64;
    int c1 = 16;
    int c2 = 32;
    int c3 = 64;
    int emb_dim = 64;
    int quality_tokens = 3;
    int groups = 8;
    int timesteps = 200;
    bool control = false;

    void validate() const {
        if (image_size < 8 || image_size % 4 != 0)
            throw InvalidArgument("denoiser: image_size must be a positive multiple of 4");
        if (c1 <= 0 || c2 <= 0 || c3 <= 0)
            throw InvalidArgument("denoiser: channel counts must be positive");
        if (groups <= 0 || c1 % groups || c2 % groups || c3 % groups)
            throw InvalidArgument("denoiser: channels must be divisible by groups");
        if (emb_dim <= 0 || emb_dim % 2)
            throw InvalidArgument("denoiser: emb_dim must be positive and even");
        if (quality_tokens <= 0) throw InvalidArgument("denoiser: quality_tokens must be positive");
        if (timesteps < 10) throw InvalidArgument("denoiser: timesteps must be >= 10");
    }

    bool operator==(const DenoiserConfig&) const = default;
};

template <class T>
struct ConvP {
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
    std::vector<T> w, b;

    void init_shape(int cin_, int cout_, int k_, int stride_, int pad_) {
        cin = cin_;
        cout = cout_;
        k = k_;
        stride = stride_;
        pad = pad_;
        w.assign(static_cast<std::size_t>(cout) * cin * k * k, T(0));
        b.assign(cout, T(0));
    }
};

template <class T>
struct LinP {
    int in = 0, out = 0;
    std::vector<T> w, b;

    void init_shape(int in_, int out_) {
        in = in_;
        out = out_;
        w.assign(static_cast<std::size_t>(out) * in, T(0));
        b.assign(out, T(0));
    }
};

template <class T>
struct NormP {
    int c = 0;
    std::vector<T> gamma, beta;

    void init_shape(int c_) {
        c = c_;
        gamma.assign(c, T(1));
        beta.assign(c, T(0));
    }
};

template <class T>
struct BlockP {
    ConvP<T> conv_a, conv_b;
    LinP<T> emb;
    NormP<T> gn_a, gn_b;

    void init_shape(int cin, int cout, int emb_dim) {
        conv_a.init_shape(cin, cout, 3, 1, 1);
        conv_b.init_shape(cout, cout, 3, 1, 1);
        emb.init_shape(emb_dim, cout);
        gn_a.init_shape(cout);
        gn_b.init_shape(cout);
    }
};

template <class T>
struct DenoiserParams {
    DenoiserConfig cfg;
    ConvP<T> conv_in, ds1, ds2, conv_out;
    BlockP<T> down1, down2, mid, up1, up2;
    LinP<T> temb1, temb2;
    std::vector<T> qtable;  // [quality_tokens, emb_dim]
    ConvP<T> cc1, cc2, cc3, fuse1, fuse2;

    template <class Self, class F>
    static void visit_impl(Self& s, F&& f) {
        auto conv = [&f](const char* base, auto& c) {
            f((std::string(base) + ".w").c_str(), c.w);
            f((std::string(base) + ".b").c_str(), c.b);
        };
        auto lin = conv;
        auto norm = [&f](const char* base, auto& nrm) {
            f((std::string(base) + ".gamma").c_str(), nrm.gamma);
            f((std::string(base) + ".beta").c_str(), nrm.beta);
        };
        auto block = [&](const char* base, auto& blk) {
            const std::string b(base);
            conv((b + ".conv_a").c_str(), blk.conv_a);
            lin((b + ".emb").c_str(), blk.emb);
            norm((b + ".gn_a").c_str(), blk.gn_a);
            conv((b + ".conv_b").c_str(), blk.conv_b);
            norm((b + ".gn_b").c_str(), blk.gn_b);
        };
        conv("conv_in", s.conv_in);
        block("down1", s.down1);
        conv("ds1", s.ds1);
        block("down2", s.down2);
        conv("ds2", s.ds2);
        block("mid", s.mid);
        block("up1", s.up1);
        block("up2", s.up2);
        conv("conv_out", s.conv_out);
        lin("temb1", s.temb1);
        lin("temb2", s.temb2);
        f("qtable", s.qtable);
        if (s.cfg.control) {
            conv("control.cc1", s.cc1);
            conv("control.cc2", s.cc2);
            conv("control.cc3", s.cc3);
            conv("control.fuse1", s.fuse1);
            conv("control.fuse2", s.fuse2);
        }
    }

    template <class F>
    void visit(F&& f) {
        visit_impl(*this, std::forward<F>(f));
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, std::forward<F>(f));
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        visit([&n](const char*, const std::vector<T>& v) { n += v.size(); });
        return n;
    }
};

template <class T>
void allocate_params(DenoiserParams<T>& p) {
    const auto& c = p.cfg;
    p.conv_in.init_shape(1, c.c1, 3, 1, 1);
    p.down1.init_shape(c.c1, c.c1, c.emb_dim);
    p.ds1.init_shape(c.c1, c.c2, 3, 2, 1);
    p.down2.init_shape(c.c2, c.c2, c.emb_dim);
    p.ds2.init_shape(c.c2, c.c3, 3, 2, 1);
    p.mid.init_shape(c.c3, c.c3, c.emb_dim);
    p.up1.init_shape(c.c3 + c.c2, c.c2, c.emb_dim);
    p.up2.init_shape(c.c2 + c.c1, c.c1, c.emb_dim);
    p.conv_out.init_shape(c.c1, 1, 3, 1, 1);
    p.temb1.init_shape(c.emb_dim, c.emb_dim);
    p.temb2.init_shape(c.emb_dim, c.emb_dim);
    p.qtable.assign(static_cast<std::size_t>(c.quality_tokens) * c.emb_dim, T(0));
    if (c.control) {
        p.cc1.init_shape(1, c.c1, 3, 1, 1);
        p.cc2.init_shape(c.c1, c.c2, 3, 2, 1);
        p.cc3.init_shape(c.c2, c.c2, 3, 1, 1);
        p.fuse1.init_shape(c.c1, c.c1, 1, 1, 0);
        p.fuse2.init_shape(c.c2, c.c2, 1, 1, 0);
    }
}

template <class T>
std::vector<std::vector<T>*> tensor_list(DenoiserParams<T>& p) {
    std::vector<std::vector<T>*> out;
    p.visit([&out](const char*, std::vector<T>& v) { out.push_back(&v); });
    return out;
}

template <class T>
DenoiserParams<T> zero_like(const DenoiserParams<T>& p) {
    DenoiserParams<T> g;
    g.cfg = p.cfg;
    allocate_params(g);
    g.visit([](const char*, std::vector<T>& v) { std::fill(v.begin(), v.end(), T(0)); });
    return g;
}

namespace detail {
template <class T>
void he_fill(std::vector<T>& w, int fan_in, Rng& rng) {
    const T sd = std::sqrt(T(2) / T(fan_in));
    for (auto& v : w) v = static_cast<T>(rng.normal()) * sd;
}
}  // namespace detail

template <class T>
DenoiserParams<T> init_denoiser_t(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DenoiserParams<T> p;
    p.cfg = cfg;
    allocate_params(p);
    Rng rng(derive_seed(seed, 0x11));
    auto conv = [&rng](ConvP<T>& c) { detail::he_fill(c.w, c.cin * c.k * c.k, rng); };
    auto lin = [&rng](LinP<T>& l) { detail::he_fill(l.w, l.in, rng); };
    conv(p.conv_in);
    auto block = [&](BlockP<T>& b) {
        conv(b.conv_a);
        lin(b.emb);
        conv(b.conv_b);
    };
    block(p.down1);
    conv(p.ds1);
    block(p.down2);
    conv(p.ds2);
    block(p.mid);
    block(p.up1);
    block(p.up2);
    conv(p.conv_out);
    lin(p.temb1);
    lin(p.temb2);
    for (auto& v : p.qtable) v = static_cast<T>(rng.normal()) * T(0.02);
    if (cfg.control) {
        conv(p.cc1);
        conv(p.cc2);
        conv(p.cc3);
        // fuse1/fuse2 stay exactly zero
    }
    return p;
}

inline DenoiserParams<float> init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    return init_denoiser_t<float>(cfg, seed);
}

// Stage-two model from a trained backbone: weights copied, control branch
// freshly drawn, fusion projections zero.
template <class T>
DenoiserParams<T> attach_control_branch(const DenoiserParams<T>& backbone, std::uint64_t seed) {
    if (backbone.cfg.control)
        throw InvalidArgument("attach_control_branch: model already has a control branch");
    DenoiserParams<T> p = backbone;
    p.cfg.control = true;
    allocate_params(p);
    // allocate_params reset the backbone tensors; restore them
    DenoiserParams<T> fresh = p;
    p = backbone;
    p.cfg.control = true;
    p.cc1 = fresh.cc1;
    p.cc2 = fresh.cc2;
    p.cc3 = fresh.cc3;
    p.fuse1 = fresh.fuse1;
    p.fuse2 = fresh.fuse2;
    Rng rng(derive_seed(seed, 0xC7));
    detail::he_fill(p.cc1.w, p.cc1.cin * 9, rng);
    detail::he_fill(p.cc2.w, p.cc2.cin * 9, rng);
    detail::he_fill(p.cc3.w, p.cc3.cin * 9, rng);
    return p;
}

template <class T>
struct BlockActs {
    std::vector<T> x, pre_gn_a, gn_a_out, silu_a, pre_gn_b, gn_b_out, out;
    std::vector<T> mean_a, invstd_a, mean_b, invstd_b;
    std::vector<T> emb_bias;  // [N, cout]
};

template <class T>
struct DenoiserActs {
    int n = 0;
    std::vector<T> sin_emb, temb1_out, temb1_silu, emb;
    std::vector<T> x1, p1, p2;
    BlockActs<T> down1, down2, mid, up1, up2;
    std::vector<T> up_m, u1in, up_u1, u2in, eps;
    std::vector<T> c1_pre, c1_act, c2_pre, c2_act, c3_pre, c3_act;
};

namespace detail {

template <class T>
void block_forward(const BlockP<T>& p, const std::vector<T>& x, const std::vector<T>& emb,
                   int N, int H, int W, int groups, BlockActs<T>& a) {
    const int cout = p.conv_a.cout;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t sz = static_cast<std::size_t>(N) * cout * hw;
    a.x = x;
    a.pre_gn_a.resize(sz);
    conv2d_forward(x.data(), N, p.conv_a.cin, H, W, p.conv_a.w.data(), p.conv_a.b.data(), cout, 3,
                   1, 1, a.pre_gn_a.data());
    a.emb_bias.resize(static_cast<std::size_t>(N) * cout);
    linear_forward(emb.data(), N, p.emb.in, p.emb.w.data(), p.emb.b.data(), cout,
                   a.emb_bias.data());
    add_channel_bias(a.pre_gn_a.data(), a.emb_bias.data(), N, cout, static_cast<int>(hw));
    a.gn_a_out.resize(sz);
    a.mean_a.resize(static_cast<std::size_t>(N) * groups);
    a.invstd_a.resize(static_cast<std::size_t>(N) * groups);
    groupnorm_forward(a.pre_gn_a.data(), N, cout, static_cast<int>(hw), groups, p.gn_a.gamma.data(),
                      p.gn_a.beta.data(), a.gn_a_out.data(), a.mean_a.data(), a.invstd_a.data());
    a.silu_a.resize(sz);
    silu_forward(a.gn_a_out.data(), sz, a.silu_a.data());
    a.pre_gn_b.resize(sz);
    conv2d_forward(a.silu_a.data(), N, cout, H, W, p.conv_b.w.data(), p.conv_b.b.data(), cout, 3, 1,
                   1, a.pre_gn_b.data());
    a.gn_b_out.resize(sz);
    a.mean_b.resize(static_cast<std::size_t>(N) * groups);
    a.invstd_b.resize(static_cast<std::size_t>(N) * groups);
    groupnorm_forward(a.pre_gn_b.data(), N, cout, static_cast<int>(hw), groups, p.gn_b.gamma.data(),
                      p.gn_b.beta.data(), a.gn_b_out.data(), a.mean_b.data(), a.invstd_b.data());
    a.out.resize(sz);
    silu_forward(a.gn_b_out.data(), sz, a.out.data());
}

// dx overwritten; parameter grads and demb accumulated
template <class T>
void block_backward(const BlockP<T>& p, const BlockActs<T>& a, const std::vector<T>& emb,
                    const std::vector<T>& dout, int N, int H, int W, int groups, BlockP<T>& g,
                    std::vector<T>& demb, std::vector<T>& dx) {
    const int cout = p.conv_a.cout;
    const int cin = p.conv_a.cin;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t sz = static_cast<std::size_t>(N) * cout * hw;

    std::vector<T> d_gnb(sz);
    silu_backward(a.gn_b_out.data(), dout.data(), sz, d_gnb.data());
    std::vector<T> d_pre_b(sz);
    groupnorm_backward(a.pre_gn_b.data(), d_gnb.data(), N, cout, static_cast<int>(hw), groups,
                       p.gn_b.gamma.data(), a.mean_b.data(), a.invstd_b.data(), d_pre_b.data(),
                       g.gn_b.gamma.data(), g.gn_b.beta.data());
    std::vector<T> d_silua(sz);
    conv2d_backward(a.silu_a.data(), d_pre_b.data(), N, cout, H, W, p.conv_b.w.data(), cout, 3, 1,
                    1, d_silua.data(), g.conv_b.w.data(), g.conv_b.b.data());
    std::vector<T> d_gna(sz);
    silu_backward(a.gn_a_out.data(), d_silua.data(), sz, d_gna.data());
    std::vector<T> d_pre_a(sz);
    groupnorm_backward(a.pre_gn_a.data(), d_gna.data(), N, cout, static_cast<int>(hw), groups,
                       p.gn_a.gamma.data(), a.mean_a.data(), a.invstd_a.data(), d_pre_a.data(),
                       g.gn_a.gamma.data(), g.gn_a.beta.data());

    std::vector<T> d_bias(static_cast<std::size_t>(N) * cout);
    channel_bias_backward(d_pre_a.data(), N, cout, static_cast<int>(hw), d_bias.data());
    linear_backward(emb.data(), d_bias.data(), N, p.emb.in, cout, p.emb.w.data(), demb.data(),
                    g.emb.w.data(), g.emb.b.data(), true);

    dx.resize(static_cast<std::size_t>(N) * cin * hw);
    conv2d_backward(a.x.data(), d_pre_a.data(), N, cin, H, W, p.conv_a.w.data(), cout, 3, 1, 1,
                    dx.data(), g.conv_a.w.data(), g.conv_a.b.data());
}

}  // namespace detail

template <class T>
void denoiser_forward(const DenoiserParams<T>& p, const std::vector<T>& xt,
                      const std::vector<int>& t, const std::vector<int>& quality,
                      const std::vector<T>& control, int N, DenoiserActs<T>& a) {
    const auto& c = p.cfg;
    const int S = c.image_size, S2 = S / 2, S4 = S / 4;
    const std::size_t hw = static_cast<std::size_t>(S) * S;
    const std::size_t hw2 = static_cast<std::size_t>(S2) * S2;
    const std::size_t hw4 = static_cast<std::size_t>(S4) * S4;

    if (N <= 0) throw InvalidArgument("denoiser: batch must be positive");
    if (xt.size() != static_cast<std::size_t>(N) * hw)
        throw InvalidArgument("denoiser: x_t batch has wrong size");
    if (t.size() != static_cast<std::size_t>(N) || quality.size() != static_cast<std::size_t>(N))
        throw InvalidArgument("denoiser: t/quality batch has wrong size");
    for (int n = 0; n < N; ++n) {
        if (t[n] < 0 || t[n] >= c.timesteps)
            throw InvalidArgument("denoiser: timestep out of range");
        if (quality[n] < 0 || quality[n] >= c.quality_tokens)
            throw InvalidArgument("denoiser: quality token out of range");
    }
    if (c.control && control.size() != static_cast<std::size_t>(N) * hw)
        throw InvalidArgument("denoiser: control batch required for the conditional model");
    if (!c.control && !control.empty())
        throw InvalidArgument("denoiser: control supplied to an unconditional model");

    a.n = N;
    const int E = c.emb_dim;
    a.sin_emb.resize(static_cast<std::size_t>(N) * E);
    sinusoidal_embedding(t.data(), N, E, a.sin_emb.data());
    a.temb1_out.resize(static_cast<std::size_t>(N) * E);
    linear_forward(a.sin_emb.data(), N, E, p.temb1.w.data(), p.temb1.b.data(), E,
                   a.temb1_out.data());
    a.temb1_silu.resize(a.temb1_out.size());
    silu_forward(a.temb1_out.data(), a.temb1_out.size(), a.temb1_silu.data());
    a.emb.resize(static_cast<std::size_t>(N) * E);
    linear_forward(a.temb1_silu.data(), N, E, p.temb2.w.data(), p.temb2.b.data(), E, a.emb.data());
    for (int n = 0; n < N; ++n)
        for (int e = 0; e < E; ++e)
            a.emb[static_cast<std::size_t>(n) * E + e] +=
                p.qtable[static_cast<std::size_t>(quality[n]) * E + e];

    a.x1.resize(static_cast<std::size_t>(N) * c.c1 * hw);
    conv2d_forward(xt.data(), N, 1, S, S, p.conv_in.w.data(), p.conv_in.b.data(), c.c1, 3, 1, 1,
                   a.x1.data());

    if (c.control) {
        a.c1_pre.resize(static_cast<std::size_t>(N) * c.c1 * hw);
        conv2d_forward(control.data(), N, 1, S, S, p.cc1.w.data(), p.cc1.b.data(), c.c1, 3, 1, 1,
                       a.c1_pre.data());
        a.c1_act.resize(a.c1_pre.size());
        silu_forward(a.c1_pre.data(), a.c1_pre.size(), a.c1_act.data());
        std::vector<T> f1(a.x1.size());
        conv2d_forward(a.c1_act.data(), N, c.c1, S, S, p.fuse1.w.data(), p.fuse1.b.data(), c.c1, 1,
                       1, 0, f1.data());
        for (std::size_t i = 0; i < a.x1.size(); ++i) a.x1[i] += f1[i];
    }

    detail::block_forward(p.down1, a.x1, a.emb, N, S, S, c.groups, a.down1);

    a.p1.resize(static_cast<std::size_t>(N) * c.c2 * hw2);
    conv2d_forward(a.down1.out.data(), N, c.c1, S, S, p.ds1.w.data(), p.ds1.b.data(), c.c2, 3, 2, 1,
                   a.p1.data());

    if (c.control) {
        a.c2_pre.resize(static_cast<std::size_t>(N) * c.c2 * hw2);
        conv2d_forward(a.c1_act.data(), N, c.c1, S, S, p.cc2.w.data(), p.cc2.b.data(), c.c2, 3, 2,
                       1, a.c2_pre.data());
        a.c2_act.resize(a.c2_pre.size());
        silu_forward(a.c2_pre.data(), a.c2_pre.size(), a.c2_act.data());
        a.c3_pre.resize(a.c2_pre.size());
        conv2d_forward(a.c2_act.data(), N, c.c2, S2, S2, p.cc3.w.data(), p.cc3.b.data(), c.c2, 3, 1,
                       1, a.c3_pre.data());
        a.c3_act.resize(a.c3_pre.size());
        silu_forward(a.c3_pre.data(), a.c3_pre.size(), a.c3_act.data());
        std::vector<T> f2(a.p1.size());
        conv2d_forward(a.c3_act.data(), N, c.c2, S2, S2, p.fuse2.w.data(), p.fuse2.b.data(), c.c2,
                       1, 1, 0, f2.data());
        for (std::size_t i = 0; i < a.p1.size(); ++i) a.p1[i] += f2[i];
    }

    detail::block_forward(p.down2, a.p1, a.emb, N, S2, S2, c.groups, a.down2);

    a.p2.resize(static_cast<std::size_t>(N) * c.c3 * hw4);
    conv2d_forward(a.down2.out.data(), N, c.c2, S2, S2, p.ds2.w.data(), p.ds2.b.data(), c.c3, 3, 2,
                   1, a.p2.data());

    detail::block_forward(p.mid, a.p2, a.emb, N, S4, S4, c.groups, a.mid);

    a.up_m.resize(static_cast<std::size_t>(N) * c.c3 * hw2);
    upsample2x_forward(a.mid.out.data(), N, c.c3, S4, S4, a.up_m.data());
    a.u1in.resize(static_cast<std::size_t>(N) * (c.c3 + c.c2) * hw2);
    concat_channels(a.up_m.data(), c.c3, a.down2.out.data(), c.c2, N, static_cast<int>(hw2),
                    a.u1in.data());
    detail::block_forward(p.up1, a.u1in, a.emb, N, S2, S2, c.groups, a.up1);

    a.up_u1.resize(static_cast<std::size_t>(N) * c.c2 * hw);
    upsample2x_forward(a.up1.out.data(), N, c.c2, S2, S2, a.up_u1.data());
    a.u2in.resize(static_cast<std::size_t>(N) * (c.c2 + c.c1) * hw);
    concat_channels(a.up_u1.data(), c.c2, a.down1.out.data(), c.c1, N, static_cast<int>(hw),
                    a.u2in.data());
    detail::block_forward(p.up2, a.u2in, a.emb, N, S, S, c.groups, a.up2);

    a.eps.resize(static_cast<std::size_t>(N) * hw);
    conv2d_forward(a.up2.out.data(), N, c.c1, S, S, p.conv_out.w.data(), p.conv_out.b.data(), 1, 3,
                   1, 1, a.eps.data());
}

template <class T>
std::vector<T> denoise_forward(const DenoiserParams<T>& p, const std::vector<T>& xt,
                               const std::vector<int>& t, const std::vector<int>& quality,
                               const std::vector<T>& control, int N) {
    DenoiserActs<T> a;
    denoiser_forward(p, xt, t, quality, control, N, a);
    return std::move(a.eps);
}

// Names checked in forward order so the first non-finite layer is reported.
template <class T>
void throw_on_nonfinite(const DenoiserActs<T>& a) {
    const std::pair<const char*, const std::vector<T>*> stages[] = {
        {"temb_mlp", &a.emb},       {"conv_in", &a.x1},   {"down1", &a.down1.out},
        {"ds1", &a.p1},             {"down2", &a.down2.out}, {"ds2", &a.p2},
        {"mid", &a.mid.out},        {"up1", &a.up1.out},  {"up2", &a.up2.out},
        {"conv_out", &a.eps}};
    for (const auto& [name, v] : stages)
        if (!all_finite(v->data(), v->size()))
            throw NumericalFailure(std::string("non-finite activation in ") + name);
}

template <class T>
void denoiser_backward(const DenoiserParams<T>& p, const DenoiserActs<T>& a,
                       const std::vector<T>& xt, const std::vector<T>& control,
                       const std::vector<int>& quality, const std::vector<T>& deps,
                       DenoiserParams<T>& g) {
    const auto& c = p.cfg;
    const int N = a.n;
    const int S = c.image_size, S2 = S / 2, S4 = S / 4;
    const std::size_t hw = static_cast<std::size_t>(S) * S;
    const std::size_t hw2 = static_cast<std::size_t>(S2) * S2;
    const int E = c.emb_dim;

    std::vector<T> demb(static_cast<std::size_t>(N) * E, T(0));

    std::vector<T> d_u2out(static_cast<std::size_t>(N) * c.c1 * hw);
    conv2d_backward(a.up2.out.data(), deps.data(), N, c.c1, S, S, p.conv_out.w.data(), 1, 3, 1, 1,
                    d_u2out.data(), g.conv_out.w.data(), g.conv_out.b.data());

    std::vector<T> d_u2in;
    detail::block_backward(p.up2, a.up2, a.emb, d_u2out, N, S, S, c.groups, g.up2, demb, d_u2in);
    std::vector<T> d_upu1(static_cast<std::size_t>(N) * c.c2 * hw);
    std::vector<T> d_skip1(static_cast<std::size_t>(N) * c.c1 * hw);
    split_channels(d_u2in.data(), c.c2, c.c1, N, static_cast<int>(hw), d_upu1.data(),
                   d_skip1.data());
    std::vector<T> d_u1out(static_cast<std::size_t>(N) * c.c2 * hw2);
    upsample2x_backward(d_upu1.data(), N, c.c2, S2, S2, d_u1out.data());

    std::vector<T> d_u1in;
    detail::block_backward(p.up1, a.up1, a.emb, d_u1out, N, S2, S2, c.groups, g.up1, demb, d_u1in);
    std::vector<T> d_upm(static_cast<std::size_t>(N) * c.c3 * hw2);
    std::vector<T> d_skip2(static_cast<std::size_t>(N) * c.c2 * hw2);
    split_channels(d_u1in.data(), c.c3, c.c2, N, static_cast<int>(hw2), d_upm.data(),
                   d_skip2.data());
    std::vector<T> d_mout(static_cast<std::size_t>(N) * c.c3 *
                          static_cast<std::size_t>(S4) * S4);
    upsample2x_backward(d_upm.data(), N, c.c3, S4, S4, d_mout.data());

    std::vector<T> d_p2;
    detail::block_backward(p.mid, a.mid, a.emb, d_mout, N, S4, S4, c.groups, g.mid, demb, d_p2);

    std::vector<T> d_d2out(static_cast<std::size_t>(N) * c.c2 * hw2);
    conv2d_backward(a.down2.out.data(), d_p2.data(), N, c.c2, S2, S2, p.ds2.w.data(), c.c3, 3, 2, 1,
                    d_d2out.data(), g.ds2.w.data(), g.ds2.b.data());
    for (std::size_t i = 0; i < d_d2out.size(); ++i) d_d2out[i] += d_skip2[i];

    std::vector<T> d_p1;
    detail::block_backward(p.down2, a.down2, a.emb, d_d2out, N, S2, S2, c.groups, g.down2, demb,
                           d_p1);

    std::vector<T> d_c3act;
    if (c.control) {
        d_c3act.resize(static_cast<std::size_t>(N) * c.c2 * hw2);
        conv2d_backward(a.c3_act.data(), d_p1.data(), N, c.c2, S2, S2, p.fuse2.w.data(), c.c2, 1, 1,
                        0, d_c3act.data(), g.fuse2.w.data(), g.fuse2.b.data());
    }

    std::vector<T> d_d1out(static_cast<std::size_t>(N) * c.c1 * hw);
    conv2d_backward(a.down1.out.data(), d_p1.data(), N, c.c1, S, S, p.ds1.w.data(), c.c2, 3, 2, 1,
                    d_d1out.data(), g.ds1.w.data(), g.ds1.b.data());
    for (std::size_t i = 0; i < d_d1out.size(); ++i) d_d1out[i] += d_skip1[i];

    std::vector<T> d_x1;
    detail::block_backward(p.down1, a.down1, a.emb, d_d1out, N, S, S, c.groups, g.down1, demb,
                           d_x1);

    if (c.control) {
        std::vector<T> d_c1act(static_cast<std::size_t>(N) * c.c1 * hw);
        conv2d_backward(a.c1_act.data(), d_x1.data(), N, c.c1, S, S, p.fuse1.w.data(), c.c1, 1, 1,
                        0, d_c1act.data(), g.fuse1.w.data(), g.fuse1.b.data());

        std::vector<T> d_c3pre(d_c3act.size());
        silu_backward(a.c3_pre.data(), d_c3act.data(), d_c3act.size(), d_c3pre.data());
        std::vector<T> d_c2act(static_cast<std::size_t>(N) * c.c2 * hw2);
        conv2d_backward(a.c2_act.data(), d_c3pre.data(), N, c.c2, S2, S2, p.cc3.w.data(), c.c2, 3,
                        1, 1, d_c2act.data(), g.cc3.w.data(), g.cc3.b.data());
        std::vector<T> d_c2pre(d_c2act.size());
        silu_backward(a.c2_pre.data(), d_c2act.data(), d_c2act.size(), d_c2pre.data());
        std::vector<T> d_c1act2(static_cast<std::size_t>(N) * c.c1 * hw);
        conv2d_backward(a.c1_act.data(), d_c2pre.data(), N, c.c1, S, S, p.cc2.w.data(), c.c2, 3, 2,
                        1, d_c1act2.data(), g.cc2.w.data(), g.cc2.b.data());
        for (std::size_t i = 0; i < d_c1act.size(); ++i) d_c1act[i] += d_c1act2[i];
        std::vector<T> d_c1pre(d_c1act.size());
        silu_backward(a.c1_pre.data(), d_c1act.data(), d_c1act.size(), d_c1pre.data());
        conv2d_backward(control.data(), d_c1pre.data(), N, 1, S, S, p.cc1.w.data(), c.c1, 3, 1, 1,
                        static_cast<T*>(nullptr), g.cc1.w.data(), g.cc1.b.data());
    }

    conv2d_backward(xt.data(), d_x1.data(), N, 1, S, S, p.conv_in.w.data(), c.c1, 3, 1, 1,
                    static_cast<T*>(nullptr), g.conv_in.w.data(), g.conv_in.b.data());

    for (int n = 0; n < N; ++n)
        for (int e = 0; e < E; ++e)
            g.qtable[static_cast<std::size_t>(quality[n]) * E + e] +=
                demb[static_cast<std::size_t>(n) * E + e];
    std::vector<T> d_t1silu(static_cast<std::size_t>(N) * E);
    linear_backward(a.temb1_silu.data(), demb.data(), N, E, E, p.temb2.w.data(), d_t1silu.data(),
                    g.temb2.w.data(), g.temb2.b.data());
    std::vector<T> d_t1out(d_t1silu.size());
    silu_backward(a.temb1_out.data(), d_t1silu.data(), d_t1silu.size(), d_t1out.data());
    linear_backward(a.sin_emb.data(), d_t1out.data(), N, E, E, p.temb1.w.data(),
                    static_cast<T*>(nullptr), g.temb1.w.data(), g.temb1.b.data());
}

// Mean squared error between the predicted and drawn noise, gradients for
// every parameter tensor. Each sample runs independently and contributions
// are reduced in sample order, so results do not depend on thread count.
template <class T>
std::pair<T, DenoiserParams<T>> loss_and_grads(const DenoiserParams<T>& p, const std::vector<T>& xt,
                                               const std::vector<int>& t,
                                               const std::vector<int>& quality,
                                               const std::vector<T>& control,
                                               const std::vector<T>& eps_target, int N) {
    const std::size_t hw =
        static_cast<std::size_t>(p.cfg.image_size) * static_cast<std::size_t>(p.cfg.image_size);
    if (eps_target.size() != static_cast<std::size_t>(N) * hw)
        throw InvalidArgument("loss_and_grads: eps batch has wrong size");
    if (!p.cfg.control && !control.empty())
        throw InvalidArgument("loss_and_grads: control supplied to an unconditional model");
    if (p.cfg.control && control.size() != static_cast<std::size_t>(N) * hw)
        throw InvalidArgument("loss_and_grads: control batch has wrong size");

    std::vector<T> losses(N, T(0));
    std::vector<DenoiserParams<T>> grads(N);
    parallel_for(static_cast<std::size_t>(N), [&](std::size_t n) {
        std::vector<T> xt1(xt.begin() + n * hw, xt.begin() + (n + 1) * hw);
        std::vector<T> eps1(eps_target.begin() + n * hw, eps_target.begin() + (n + 1) * hw);
        std::vector<T> ctrl1;
        if (p.cfg.control)
            ctrl1.assign(control.begin() + n * hw, control.begin() + (n + 1) * hw);
        const std::vector<int> t1{t[static_cast<std::size_t>(n)]};
        const std::vector<int> q1{quality[static_cast<std::size_t>(n)]};

        DenoiserActs<T> a;
        denoiser_forward(p, xt1, t1, q1, ctrl1, 1, a);
        if (!all_finite(a.eps.data(), a.eps.size())) throw_on_nonfinite(a);

        std::vector<T> deps(hw);
        T loss = 0;
        const T scale = T(2) / (T(N) * static_cast<T>(hw));
        for (std::size_t i = 0; i < hw; ++i) {
            const T r = a.eps[i] - eps1[i];
            loss += r * r;
            deps[i] = scale * r;
        }
        losses[n] = loss / static_cast<T>(hw);

        grads[n] = zero_like(p);
        denoiser_backward(p, a, xt1, ctrl1, q1, deps, grads[n]);
    });

    T total = 0;
    for (int n = 0; n < N; ++n) total += losses[n];
    total /= T(N);
    if (!std::isfinite(static_cast<double>(total)))
        throw NumericalFailure("non-finite training loss");

    DenoiserParams<T> g = std::move(grads[0]);
    auto dst = tensor_list(g);
    for (int n = 1; n < N; ++n) {
        auto src = tensor_list(grads[n]);
        for (std::size_t k = 0; k < dst.size(); ++k)
            for (std::size_t i = 0; i < dst[k]->size(); ++i) (*dst[k])[i] += (*src[k])[i];
    }
    return {total, std::move(g)};
}

}  // namespace palmforge::nn
