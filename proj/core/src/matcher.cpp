#include "palmforge/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "palmforge/checkpoint.hpp"
#include "palmforge/errors.hpp"
#include "palmforge/nn/adam.hpp"
#include "palmforge/nn/ops.hpp"
#include "palmforge/parallel.hpp"
#include "palmforge/rng.hpp"

namespace palmforge::eval {

void MatcherConfig::validate() const {
    if (image_size < 16 || image_size % 16 != 0)
        throw InvalidArgument("matcher: image_size must be a positive multiple of 16");
    if (c1 <= 0 || c2 <= 0 || c3 <= 0 || c4 <= 0 || embed_dim <= 0)
        throw InvalidArgument("matcher: channel counts must be positive");
    if (quality_bins < 2) throw InvalidArgument("matcher: quality_bins must be >= 2");
    if (batch < 1 || steps < 1) throw InvalidArgument("matcher: batch and steps must be >= 1");
    if (!(base_lr > 0.0) || lr_min < 0.0 || lr_min > base_lr)
        throw InvalidArgument("matcher: need base_lr > 0 and 0 <= lr_min <= base_lr");
}

namespace {

void allocate(MatcherParams& m) {
    const auto& c = m.cfg;
    m.conv1.init_shape(1, c.c1, 3, 1, 1);
    m.conv2.init_shape(c.c1, c.c2, 3, 1, 1);
    m.conv3.init_shape(c.c2, c.c3, 3, 1, 1);
    m.conv4.init_shape(c.c3, c.c4, 3, 1, 1);
    m.embed.init_shape(c.c4, c.embed_dim);
    m.head.init_shape(c.embed_dim, std::max(m.n_classes, 1));
}

std::vector<std::vector<float>*> tensors(MatcherParams& m) {
    std::vector<std::vector<float>*> out;
    m.visit([&out](const char*, std::vector<float>& v) { out.push_back(&v); });
    return out;
}

struct Acts {
    std::vector<float> y1, s1, p1, y2, s2, p2, y3, s3, p3, y4, s4, p4, gap, pre, logits;
};

// Single-sample forward; the head runs only when logits are wanted.
void forward(const MatcherParams& m, const float* x, Acts& a, bool with_head) {
    const auto& c = m.cfg;
    const int S = c.image_size;
    auto block = [&](const nn::ConvP<float>& conv, const float* in, int side,
                     std::vector<float>& y, std::vector<float>& s, std::vector<float>& p) {
        const std::size_t hw = static_cast<std::size_t>(side) * side;
        y.resize(static_cast<std::size_t>(conv.cout) * hw);
        nn::conv2d_forward(in, 1, conv.cin, side, side, conv.w.data(), conv.b.data(), conv.cout, 3,
                           1, 1, y.data());
        s.resize(y.size());
        nn::silu_forward(y.data(), y.size(), s.data());
        p.resize(y.size() / 4);
        nn::avgpool2x2_forward(s.data(), 1, conv.cout, side, side, p.data());
    };
    block(m.conv1, x, S, a.y1, a.s1, a.p1);
    block(m.conv2, a.p1.data(), S / 2, a.y2, a.s2, a.p2);
    block(m.conv3, a.p2.data(), S / 4, a.y3, a.s3, a.p3);
    block(m.conv4, a.p3.data(), S / 8, a.y4, a.s4, a.p4);
    const int hw4 = (S / 16) * (S / 16);
    a.gap.resize(c.c4);
    nn::global_avgpool_forward(a.p4.data(), 1, c.c4, hw4, a.gap.data());
    a.pre.resize(c.embed_dim);
    nn::linear_forward(a.gap.data(), 1, c.c4, m.embed.w.data(), m.embed.b.data(), c.embed_dim,
                       a.pre.data());
    if (with_head) {
        a.logits.resize(m.n_classes);
        nn::linear_forward(a.pre.data(), 1, c.embed_dim, m.head.w.data(), m.head.b.data(),
                           m.n_classes, a.logits.data());
    }
}

// dlogits for one sample; grads accumulate in visit order
void backward(const MatcherParams& m, const Acts& a, const float* x,
              const std::vector<float>& dlogits, std::vector<std::vector<float>>& g) {
    const auto& c = m.cfg;
    const int S = c.image_size;
    // visit order: conv1..conv4 (w,b), embed (w,b), head (w,b)
    std::vector<float> dpre(c.embed_dim);
    nn::linear_backward(a.pre.data(), dlogits.data(), 1, c.embed_dim, m.n_classes,
                        m.head.w.data(), dpre.data(), g[10].data(), g[11].data());
    std::vector<float> dgap(c.c4);
    nn::linear_backward(a.gap.data(), dpre.data(), 1, c.c4, c.embed_dim, m.embed.w.data(),
                        dgap.data(), g[8].data(), g[9].data());
    const int side4 = S / 16;
    std::vector<float> dp4(static_cast<std::size_t>(c.c4) * side4 * side4);
    nn::global_avgpool_backward(dgap.data(), 1, c.c4, side4 * side4, dp4.data());

    auto block_bwd = [&](const nn::ConvP<float>& conv, const float* in,
                         const std::vector<float>& y, const std::vector<float>& dp, int side,
                         std::vector<float>* dx, int gw, int gb) {
        std::vector<float> ds(y.size());
        nn::avgpool2x2_backward(dp.data(), 1, conv.cout, side, side, ds.data());
        std::vector<float> dy(y.size());
        nn::silu_backward(y.data(), ds.data(), y.size(), dy.data());
        nn::conv2d_backward(in, dy.data(), 1, conv.cin, side, side, conv.w.data(), conv.cout, 3, 1,
                            1, dx ? dx->data() : nullptr, g[gw].data(), g[gb].data());
    };
    std::vector<float> dp3(a.p3.size());
    block_bwd(m.conv4, a.p3.data(), a.y4, dp4, S / 8, &dp3, 6, 7);
    std::vector<float> dp2(a.p2.size());
    block_bwd(m.conv3, a.p2.data(), a.y3, dp3, S / 4, &dp2, 4, 5);
    std::vector<float> dp1(a.p1.size());
    block_bwd(m.conv2, a.p1.data(), a.y2, dp2, S / 2, &dp1, 2, 3);
    block_bwd(m.conv1, x, a.y1, dp1, S, nullptr, 0, 1);
}

Embedding embedding_from_pre(const std::vector<float>& pre) {
    Embedding e;
    double norm2 = 0;
    for (float v : pre) norm2 += static_cast<double>(v) * v;
    const double norm = std::sqrt(norm2);
    if (!(norm > 0.0)) throw NumericalFailure("matcher produced a zero embedding");
    e.pre_norm = static_cast<float>(norm);
    e.v.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i)
        e.v[i] = static_cast<float>(pre[i] / norm);
    return e;
}

}  // namespace

MatcherParams init_matcher(const MatcherConfig& cfg, int n_classes, std::uint64_t seed) {
    cfg.validate();
    if (n_classes < 2) throw InvalidArgument("matcher: need at least 2 classes");
    MatcherParams m;
    m.cfg = cfg;
    m.n_classes = n_classes;
    allocate(m);
    Rng rng(derive_seed(seed, 0x3A));
    auto he = [&rng](std::vector<float>& w, int fan_in) {
        const float sd = std::sqrt(2.0f / static_cast<float>(fan_in));
        for (auto& v : w) v = static_cast<float>(rng.normal()) * sd;
    };
    he(m.conv1.w, 9);
    he(m.conv2.w, cfg.c1 * 9);
    he(m.conv3.w, cfg.c2 * 9);
    he(m.conv4.w, cfg.c3 * 9);
    he(m.embed.w, cfg.c4);
    he(m.head.w, cfg.embed_dim);
    return m;
}

Embedding embed_image(const MatcherParams& m, const img::Image& im) {
    if (im.width != m.cfg.image_size || im.height != m.cfg.image_size)
        throw InvalidArgument("matcher: image resolution mismatch");
    Acts a;
    forward(m, im.pixels.data(), a, false);
    return embedding_from_pre(a.pre);
}

std::vector<Embedding> embed_images(const MatcherParams& m, const std::vector<img::Image>& ims) {
    std::vector<Embedding> out(ims.size());
    parallel_for(ims.size(), [&](std::size_t i) { out[i] = embed_image(m, ims[i]); });
    return out;
}

int quality_label(const MatcherParams& m, const img::Image& im) {
    if (m.calib.empty()) throw NotCalibrated("matcher has no quality calibration");
    const Embedding e = embed_image(m, im);
    int label = 0;
    for (float t : m.calib)
        if (e.pre_norm >= t) ++label;
    return label;
}

MatcherTrainResult train_matcher(const std::vector<std::pair<img::Image, std::int64_t>>& data,
                                 const MatcherConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::map<std::int64_t, int> class_of;
    for (const auto& [im, id] : data) {
        if (im.width != cfg.image_size || im.height != cfg.image_size)
            throw InvalidArgument("matcher: image resolution mismatch in training set");
        class_of.emplace(id, 0);
    }
    if (class_of.size() < 2)
        throw InvalidArgument("matcher: training set must contain at least 2 identities");
    {
        int next = 0;
        for (auto& [id, cls] : class_of) cls = next++;
    }
    std::vector<int> per_class(class_of.size(), 0);
    std::vector<int> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        labels[i] = class_of.at(data[i].second);
        ++per_class[labels[i]];
    }
    for (int count : per_class)
        if (count < 2)
            throw InvalidArgument("matcher: every identity needs at least 2 images");

    MatcherTrainResult result;
    result.model = init_matcher(cfg, static_cast<int>(class_of.size()), seed);
    MatcherParams& m = result.model;

    std::vector<std::size_t> sizes;
    m.visit([&sizes](const char*, std::vector<float>& v) { sizes.push_back(v.size()); });
    auto adam = nn::make_adam_state_sized<float>(sizes, cfg.base_lr, cfg.steps, cfg.lr_min);

    const int B = cfg.batch;
    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        Rng rng(derive_seed(seed, 0x3C, static_cast<std::uint64_t>(step)));
        std::vector<std::size_t> idx(B);
        for (int b = 0; b < B; ++b) idx[b] = rng.uniform_index(data.size());

        std::vector<double> losses(B, 0.0);
        std::vector<std::vector<std::vector<float>>> grads(B);
        parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
            const auto& [im, id] = data[idx[b]];
            Acts a;
            forward(m, im.pixels.data(), a, true);
            if (!nn::all_finite(a.logits.data(), a.logits.size()))
                throw NumericalFailure("matcher: non-finite logits at step " +
                                       std::to_string(step));
            std::vector<float> dlogits(m.n_classes);
            const int y = labels[idx[b]];
            losses[b] = nn::softmax_cross_entropy(a.logits.data(), &y, 1, m.n_classes,
                                                  dlogits.data());
            for (auto& v : dlogits) v /= static_cast<float>(B);
            grads[b].resize(sizes.size());
            for (std::size_t k = 0; k < sizes.size(); ++k) grads[b][k].assign(sizes[k], 0.0f);
            backward(m, a, im.pixels.data(), dlogits, grads[b]);
        });

        double loss = 0;
        for (int b = 0; b < B; ++b) loss += losses[b];
        loss /= B;
        result.losses.push_back(loss);

        auto& g0 = grads[0];
        for (int b = 1; b < B; ++b)
            for (std::size_t k = 0; k < sizes.size(); ++k)
                for (std::size_t i = 0; i < g0[k].size(); ++i) g0[k][i] += grads[b][k][i];
        std::vector<std::vector<float>*> gp;
        for (auto& v : g0) gp.push_back(&v);
        nn::adam_step_list(tensors(m), gp, adam);
    }

    // final training accuracy and the quality calibration pass
    std::vector<int> correct(data.size(), 0);
    std::vector<float> norms(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        Acts a;
        forward(m, data[i].first.pixels.data(), a, true);
        int best = 0;
        for (int k = 1; k < m.n_classes; ++k)
            if (a.logits[k] > a.logits[best]) best = k;
        correct[i] = best == labels[i] ? 1 : 0;
        norms[i] = embedding_from_pre(a.pre).pre_norm;
    });
    int right = 0;
    for (int c : correct) right += c;
    result.final_accuracy = static_cast<double>(right) / static_cast<double>(data.size());

    std::vector<float> sorted = norms;
    std::sort(sorted.begin(), sorted.end());
    m.calib.clear();
    for (int k = 1; k < cfg.quality_bins; ++k) {
        float t = sorted[static_cast<std::size_t>(k) * sorted.size() / cfg.quality_bins];
        if (!m.calib.empty() && t <= m.calib.back())
            t = std::nextafter(m.calib.back(), std::numeric_limits<float>::max());
        m.calib.push_back(t);
    }
    return result;
}

MatcherTrainResult train_matcher(const pipe::DatasetManifest& manifest, const MatcherConfig& cfg,
                                 std::uint64_t seed) {
    return train_matcher(pipe::load_labeled_images(manifest), cfg, seed);
}

void save_matcher(const std::filesystem::path& path, const MatcherParams& m) {
    nlohmann::json header = {{"kind", "matcher"},
                             {"arch",
                              {{"image_size", m.cfg.image_size},
                               {"c1", m.cfg.c1},
                               {"c2", m.cfg.c2},
                               {"c3", m.cfg.c3},
                               {"c4", m.cfg.c4},
                               {"embed_dim", m.cfg.embed_dim},
                               {"quality_bins", m.cfg.quality_bins},
                               {"batch", m.cfg.batch},
                               {"steps", m.cfg.steps},
                               {"base_lr", m.cfg.base_lr},
                               {"lr_min", m.cfg.lr_min}}},
                             {"n_classes", m.n_classes},
                             {"calib", m.calib}};
    std::vector<std::pair<std::string, const std::vector<float>*>> list;
    m.visit([&list](const char* name, const std::vector<float>& v) { list.emplace_back(name, &v); });
    ckpt::write_container(path, std::move(header), list);
}

MatcherParams load_matcher(const std::filesystem::path& path) {
    ckpt::Container c = ckpt::read_container(path);
    if (c.header.value("kind", "") != "matcher")
        throw IoError("checkpoint is not a matcher: " + path.string());
    MatcherParams m;
    const auto& a = c.header.at("arch");
    m.cfg.image_size = a.at("image_size").get<int>();
    m.cfg.c1 = a.at("c1").get<int>();
    m.cfg.c2 = a.at("c2").get<int>();
    m.cfg.c3 = a.at("c3").get<int>();
    m.cfg.c4 = a.at("c4").get<int>();
    m.cfg.embed_dim = a.at("embed_dim").get<int>();
    m.cfg.quality_bins = a.at("quality_bins").get<int>();
    m.cfg.batch = a.at("batch").get<int>();
    m.cfg.steps = a.at("steps").get<std::int64_t>();
    m.cfg.base_lr = a.at("base_lr").get<double>();
    m.cfg.lr_min = a.at("lr_min").get<double>();
    m.cfg.validate();
    m.n_classes = c.header.at("n_classes").get<int>();
    m.calib = c.header.at("calib").get<std::vector<float>>();
    allocate(m);
    std::size_t cursor = 0;
    m.visit([&](const char* name, std::vector<float>& v) {
        if (cursor >= c.tensors.size())
            throw IoError("matcher checkpoint missing tensor '" + std::string(name) + "'");
        auto& t = c.tensors[cursor++];
        if (t.name != name || t.data.size() != v.size())
            throw IoError("matcher checkpoint tensor mismatch at '" + std::string(name) + "'");
        v = std::move(t.data);
    });
    if (cursor != c.tensors.size()) throw IoError("matcher checkpoint has extra tensors");
    return m;
}

}  // namespace palmforge::eval
