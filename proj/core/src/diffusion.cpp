#include "palmforge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "palmforge/errors.hpp"
#include "palmforge/nn/adam.hpp"
#include "palmforge/parallel.hpp"
#include "palmforge/rng.hpp"

namespace palmforge::diff {

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::linear ? "linear" : "cosine";
}

ScheduleKind schedule_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw InvalidArgument("unknown schedule kind: " + s);
}

namespace {

constexpr double kBetaFloor = 1e-8;
constexpr double kBetaCeil = 0.999;

void check_schedule(const NoiseSchedule& s) {
    for (int i = 0; i < s.timesteps; ++i) {
        if (!(s.betas[i] > 0.0 && s.betas[i] < 1.0))
            throw NumericalFailure("schedule: beta out of (0,1)");
        if (i > 0 && !(s.alpha_bars[i] < s.alpha_bars[i - 1]))
            throw NumericalFailure("schedule: alpha_bars not strictly decreasing");
    }
    if (!(s.alpha_bars[s.timesteps - 1] < 0.01))
        throw NumericalFailure("schedule: terminal alpha_bar too large");
}

}  // namespace

NoiseSchedule make_schedule(ScheduleKind kind, int timesteps) {
    if (timesteps < 10) throw InvalidArgument("make_schedule: timesteps must be >= 10");
    NoiseSchedule s;
    s.timesteps = timesteps;
    s.betas.resize(timesteps);

    if (kind == ScheduleKind::linear) {
        const double scale = 1000.0 / timesteps;
        const double lo = 1e-4 * scale, hi = 0.02 * scale;
        for (int i = 0; i < timesteps; ++i) {
            const double b = lo + (hi - lo) * static_cast<double>(i) / (timesteps - 1);
            s.betas[i] = std::clamp(b, kBetaFloor, kBetaCeil);
        }
    } else {
        const double off = 0.008;
        auto f = [off, timesteps](double u) {
            const double z = ((u / timesteps + off) / (1.0 + off)) * std::numbers::pi / 2.0;
            const double c = std::cos(z);
            return c * c;
        };
        const double f0 = f(0.0);
        double prev = 1.0;
        for (int i = 0; i < timesteps; ++i) {
            const double target = f(static_cast<double>(i + 1)) / f0;
            const double b = 1.0 - target / prev;
            s.betas[i] = std::clamp(b, kBetaFloor, kBetaCeil);
            prev = target;
        }
    }

    s.alphas.resize(timesteps);
    s.alpha_bars.resize(timesteps);
    double prod = 1.0;
    for (int i = 0; i < timesteps; ++i) {
        s.alphas[i] = 1.0 - s.betas[i];
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
    }
    check_schedule(s);
    return s;
}

img::Image forward_noise(const img::Image& x0, int t, const img::Image& eps,
                         const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.timesteps) throw InvalidArgument("forward_noise: t out of range");
    if (eps.width != x0.width || eps.height != x0.height)
        throw InvalidArgument("forward_noise: eps shape mismatch");
    const float a = static_cast<float>(std::sqrt(sched.alpha_bars[t]));
    const float b = static_cast<float>(std::sqrt(1.0 - sched.alpha_bars[t]));
    img::Image out(x0.width, x0.height);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = a * x0.pixels[i] + b * eps.pixels[i];
    return out;
}

void TrainRunConfig::validate() const {
    arch.validate();
    if (arch.timesteps < 10) throw InvalidArgument("train: timesteps must be >= 10");
    if (batch < 1) throw InvalidArgument("train: batch must be >= 1");
    if (total_steps <= 0) throw InvalidArgument("train: total_steps must be positive");
    if (stage != 1 && stage != 2) throw InvalidArgument("train: stage must be 1 or 2");
    if (ckpt_every <= 0) throw InvalidArgument("train: ckpt_every must be positive");
    if (!(base_lr > 0.0) || lr_min < 0.0 || lr_min > base_lr)
        throw InvalidArgument("train: need base_lr > 0 and 0 <= lr_min <= base_lr");
}

namespace {

void write_state_atomic(const std::filesystem::path& dir, const ckpt::TrainState& st,
                        std::filesystem::path& out_path) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    const auto final_path = dir / "model.pfck";
    const auto tmp = dir / "model.pfck.tmp";
    ckpt::save_denoiser(tmp, st);
    std::filesystem::rename(tmp, final_path);
    out_path = final_path;
}

}  // namespace

TrainResult train(const TrainRunConfig& cfg, const TrainSet& data,
                  const std::optional<ckpt::TrainState>& model_in) {
    cfg.validate();
    if (data.empty()) throw InvalidArgument("train: empty dataset");
    const int S = cfg.arch.image_size;
    const bool wants_control = cfg.stage == 2;
    for (const auto& ex : data) {
        if (ex.x0.width != S || ex.x0.height != S)
            throw InvalidArgument("train: example resolution does not match the model");
        if (wants_control && (ex.control.width != S || ex.control.height != S))
            throw InvalidArgument("train: stage two requires a control map per example");
        if (ex.quality < 0 || ex.quality >= cfg.arch.quality_tokens)
            throw InvalidArgument("train: quality token out of range");
    }

    ckpt::TrainState st;
    st.schedule = to_string(cfg.schedule);
    st.seed = cfg.seed;
    if (model_in) {
        if (model_in->params.cfg.control == wants_control) {
            st = *model_in;  // resume
            if (st.schedule != to_string(cfg.schedule))
                throw InvalidArgument("train: resume schedule does not match checkpoint");
        } else if (wants_control && !model_in->params.cfg.control) {
            st.params = nn::attach_control_branch(model_in->params, cfg.seed);
            st.step = 0;
            st.has_adam = false;
        } else {
            throw InvalidArgument("train: stage one cannot start from a conditional model");
        }
    } else {
        if (wants_control)
            throw InvalidArgument("train: stage two requires the stage-one model");
        nn::DenoiserConfig arch = cfg.arch;
        arch.control = false;
        st.params = nn::init_denoiser(arch, cfg.seed);
        st.step = 0;
        st.has_adam = false;
    }
    if (!st.has_adam) {
        st.adam = nn::make_adam_state(st.params, cfg.base_lr, cfg.total_steps, cfg.lr_min);
        st.has_adam = true;
    }

    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.arch.timesteps);
    const std::size_t hw = static_cast<std::size_t>(S) * S;

    std::ofstream loss_csv;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        const auto csv_path = cfg.out_dir / "loss.csv";
        const bool fresh = !std::filesystem::exists(csv_path) || st.step == 0;
        loss_csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
        if (!loss_csv) throw IoError("cannot write loss log: " + csv_path.string());
        if (fresh) loss_csv << "step,loss,lr\n";
        loss_csv.precision(10);
    }

    TrainResult result;
    const int B = cfg.batch;
    for (std::int64_t step = st.step; step < cfg.total_steps; ++step) {
        Rng rng(derive_seed(cfg.seed, 0x5E, static_cast<std::uint64_t>(step)));

        std::vector<float> xt(static_cast<std::size_t>(B) * hw);
        std::vector<float> eps(static_cast<std::size_t>(B) * hw);
        std::vector<float> control;
        if (wants_control) control.resize(static_cast<std::size_t>(B) * hw);
        std::vector<int> ts(B), qs(B);
        for (int b = 0; b < B; ++b) {
            const auto& ex = data[rng.uniform_index(data.size())];
            const int t = static_cast<int>(rng.uniform_index(sched.timesteps));
            ts[b] = t;
            qs[b] = ex.quality;
            img::Image e(S, S);
            for (auto& v : e.pixels) v = static_cast<float>(rng.normal());
            const img::Image noised = forward_noise(ex.x0, t, e, sched);
            std::copy(noised.pixels.begin(), noised.pixels.end(), xt.begin() + b * hw);
            std::copy(e.pixels.begin(), e.pixels.end(), eps.begin() + b * hw);
            if (wants_control)
                std::copy(ex.control.pixels.begin(), ex.control.pixels.end(),
                          control.begin() + b * hw);
        }

        float loss = 0;
        try {
            auto [l, grads] = nn::loss_and_grads(st.params, xt, ts, qs, control, eps, B);
            loss = l;
            const double lr = nn::adam_step(st.params, grads, st.adam);
            if (loss_csv.is_open()) loss_csv << step << "," << loss << "," << lr << "\n";
        } catch (const NumericalFailure& e) {
            throw NumericalFailure("step " + std::to_string(step) + ": " + e.what());
        }
        result.losses.push_back(loss);
        st.step = step + 1;

        if ((step + 1) % cfg.ckpt_every == 0 || step + 1 == cfg.total_steps) {
            if (loss_csv.is_open()) loss_csv.flush();
            write_state_atomic(cfg.out_dir, st, result.model_path);
        }
    }
    if (st.step >= cfg.total_steps && result.model_path.empty())
        write_state_atomic(cfg.out_dir, st, result.model_path);

    result.state = std::move(st);
    return result;
}

std::vector<float> sample_chain(const EpsFn& eps_fn, const NoiseSchedule& sched, int side,
                                std::uint64_t seed) {
    const std::size_t hw = static_cast<std::size_t>(side) * side;
    Rng rng(derive_seed(seed, 0x5A));
    std::vector<float> x(hw);
    for (auto& v : x) v = static_cast<float>(rng.normal());

    for (int t = sched.timesteps - 1; t >= 0; --t) {
        const std::vector<float> eps_hat = eps_fn(x, t);
        if (eps_hat.size() != hw) throw InvalidArgument("sample: eps_fn returned wrong size");
        const double beta = sched.betas[t];
        const double coef = beta / std::sqrt(1.0 - sched.alpha_bars[t]);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alphas[t]);
        const double sigma = std::sqrt(beta);
        for (std::size_t i = 0; i < hw; ++i) {
            double v = inv_sqrt_alpha * (static_cast<double>(x[i]) - coef * eps_hat[i]);
            if (t > 0) v += sigma * rng.normal();
            x[i] = static_cast<float>(v);
        }
    }
    for (auto& v : x) v = std::clamp(v, 0.0f, 1.0f);
    return x;
}

std::vector<img::Image> sample(const nn::DenoiserParams<float>& model, const NoiseSchedule& sched,
                               int quality, const img::BinaryImage* control, std::uint64_t seed,
                               int n) {
    if (n < 0) throw InvalidArgument("sample: count must be >= 0");
    if (model.cfg.control && !control)
        throw InvalidArgument("sample: conditional model requires a control map");
    if (!model.cfg.control && control)
        throw InvalidArgument("sample: unconditional model got a control map");
    if (sched.timesteps != model.cfg.timesteps)
        throw InvalidArgument("sample: schedule length does not match the model");
    const int S = model.cfg.image_size;
    if (control && (control->width != S || control->height != S))
        throw InvalidArgument("sample: control resolution mismatch");

    std::vector<float> ctrl;
    if (control) {
        ctrl.resize(static_cast<std::size_t>(S) * S);
        for (std::size_t i = 0; i < ctrl.size(); ++i)
            ctrl[i] = control->bits[i] ? 1.0f : 0.0f;
    }

    std::vector<img::Image> out(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const EpsFn fn = [&](const std::vector<float>& x, int t) {
            return nn::denoise_forward(model, x, std::vector<int>{t}, std::vector<int>{quality},
                                       ctrl, 1);
        };
        const std::vector<float> px =
            sample_chain(fn, sched, S, derive_seed(seed, 0xD1F, static_cast<std::uint64_t>(i)));
        img::Image im(S, S);
        im.pixels = px;
        out[i] = std::move(im);
    });
    return out;
}

}  // namespace palmforge::diff
