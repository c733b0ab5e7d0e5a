#include "palmforge/scores.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "palmforge/errors.hpp"
#include "palmforge/rng.hpp"

namespace palmforge::eval {

double match_score(const Embedding& a, const Embedding& b) {
    if (a.v.size() != b.v.size() || a.v.empty())
        throw InvalidArgument("match_score: embedding dimension mismatch");
    double dot = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        dot += static_cast<double>(a.v[i]) * static_cast<double>(b.v[i]);
    return std::clamp(dot, -1.0, 1.0);
}

ScoreSet score_pairs(const std::vector<Embedding>& embeddings,
                     const std::vector<std::int64_t>& ids, Protocol protocol) {
    if (embeddings.size() != ids.size())
        throw InvalidArgument("score_pairs: embeddings and ids differ in length");
    const std::size_t n = embeddings.size();
    {
        std::set<std::int64_t> uniq(ids.begin(), ids.end());
        if (uniq.size() < 2)
            throw InvalidArgument("score_pairs: need at least 2 identities");
    }

    ScoreSet out;
    if (protocol == Protocol::all_pairs) {
        out.protocol_id = "all-pairs";
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double s = match_score(embeddings[i], embeddings[j]);
                (ids[i] == ids[j] ? out.genuine : out.imposter).push_back(s);
            }
    } else {
        out.protocol_id = "first-vs-rest";
        std::vector<std::size_t> gallery;
        std::set<std::int64_t> seen;
        for (std::size_t i = 0; i < n; ++i)
            if (seen.insert(ids[i]).second) gallery.push_back(i);
        std::set<std::size_t> in_gallery(gallery.begin(), gallery.end());
        for (std::size_t p = 0; p < n; ++p) {
            if (in_gallery.count(p)) continue;
            for (std::size_t g : gallery) {
                const double s = match_score(embeddings[p], embeddings[g]);
                (ids[p] == ids[g] ? out.genuine : out.imposter).push_back(s);
            }
        }
    }
    return out;
}

ScoreSet score_distributions(const MatcherParams& model, const pipe::DatasetManifest& manifest,
                             Protocol protocol) {
    const auto labeled = pipe::load_labeled_images(manifest);
    std::vector<img::Image> images;
    std::vector<std::int64_t> ids;
    images.reserve(labeled.size());
    for (const auto& [im, id] : labeled) {
        images.push_back(im);
        ids.push_back(id);
    }
    return score_pairs(embed_images(model, images), ids, protocol);
}

TarResult tar_at_far(const ScoreSet& scores, double far_target) {
    if (scores.genuine.empty() || scores.imposter.empty())
        throw InvalidArgument("tar_at_far: genuine and imposter lists must be non-empty");
    if (!(far_target > 0.0 && far_target < 1.0))
        throw InvalidArgument("tar_at_far: far_target must be in (0,1)");

    std::vector<double> imp = scores.imposter;
    std::sort(imp.begin(), imp.end());
    const double n = static_cast<double>(imp.size());

    double threshold = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < imp.size(); ++i) {
        if (i > 0 && imp[i] == imp[i - 1]) continue;
        const double far = static_cast<double>(imp.size() - i) / n;
        if (far <= far_target) {
            threshold = imp[i];
            break;
        }
    }

    std::size_t accepted = 0;
    for (double g : scores.genuine)
        if (g >= threshold) ++accepted;
    return {static_cast<double>(accepted) / static_cast<double>(scores.genuine.size()), threshold};
}

double overlap_coefficient(const ScoreSet& scores, int bins) {
    if (scores.genuine.empty() || scores.imposter.empty())
        throw InvalidArgument("overlap_coefficient: empty score list");
    if (bins < 1) throw InvalidArgument("overlap_coefficient: bins must be positive");
    std::vector<double> hg(bins, 0.0), hi(bins, 0.0);
    auto add = [bins](std::vector<double>& h, double s) {
        int b = static_cast<int>((s + 1.0) / 2.0 * bins);
        b = std::clamp(b, 0, bins - 1);
        h[b] += 1.0;
    };
    for (double s : scores.genuine) add(hg, s);
    for (double s : scores.imposter) add(hi, s);
    double overlap = 0;
    for (int b = 0; b < bins; ++b)
        overlap += std::min(hg[b] / scores.genuine.size(), hi[b] / scores.imposter.size());
    return overlap;
}

namespace {

// one power-iteration eigenvector of X^T X for row-major X (n x d)
std::vector<double> principal_component(const std::vector<double>& x, std::size_t n,
                                        std::size_t d) {
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    std::vector<double> xv(n), next(d);
    for (int it = 0; it < 200; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * v[j];
            xv[i] = s;
        }
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) next[j] += x[i * d + j] * xv[i];
        double norm = 0;
        for (double e : next) norm += e * e;
        norm = std::sqrt(norm);
        if (norm < 1e-300) return {};
        for (std::size_t j = 0; j < d; ++j) v[j] = next[j] / norm;
    }
    std::size_t pivot = 0;
    for (std::size_t j = 1; j < d; ++j)
        if (std::abs(v[j]) > std::abs(v[pivot])) pivot = j;
    if (v[pivot] < 0)
        for (auto& e : v) e = -e;
    return v;
}

}  // namespace

std::vector<std::pair<double, double>> project_2d(const std::vector<Embedding>& embeddings) {
    if (embeddings.size() < 3) throw InvalidArgument("project_2d: need at least 3 embeddings");
    const std::size_t n = embeddings.size();
    const std::size_t d = embeddings[0].v.size();
    if (d < 2) throw InvalidArgument("project_2d: embedding dimension must be >= 2");
    for (const auto& e : embeddings)
        if (e.v.size() != d) throw InvalidArgument("project_2d: embedding dimension mismatch");

    std::vector<double> x(n * d);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += embeddings[i].v[j];
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] = embeddings[i].v[j] - mean[j];

    auto frob = [&x]() {
        double s = 0;
        for (double e : x) s += e * e;
        return std::sqrt(s);
    };
    if (frob() < 1e-9) throw DegenerateData("project_2d: embeddings are all identical");

    const std::vector<double> v1 = principal_component(x, n, d);
    if (v1.empty()) throw DegenerateData("project_2d: first component vanished");
    std::vector<double> proj1(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * v1[j];
        proj1[i] = s;
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] -= s * v1[j];
    }
    if (frob() < 1e-9) throw DegenerateData("project_2d: embeddings have rank < 2");
    const std::vector<double> v2 = principal_component(x, n, d);
    if (v2.empty()) throw DegenerateData("project_2d: second component vanished");

    std::vector<std::pair<double, double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * v2[j];
        out[i] = {proj1[i], s};
    }
    return out;
}

BootstrapCI bootstrap_mean_ci(const std::vector<double>& values, int iters, double confidence,
                              std::uint64_t seed) {
    if (values.empty()) throw InvalidArgument("bootstrap: empty sample");
    if (iters < 1 || !(confidence > 0.0 && confidence < 1.0))
        throw InvalidArgument("bootstrap: bad iters/confidence");
    Rng rng(derive_seed(seed, 0xB5));
    BootstrapCI ci;
    for (double v : values) ci.mean += v;
    ci.mean /= static_cast<double>(values.size());

    std::vector<double> means(iters);
    for (int k = 0; k < iters; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[rng.uniform_index(values.size())];
        means[k] = s / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1.0 - confidence) / 2.0;
    const auto at = [&means](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        return means[static_cast<std::size_t>(pos)];
    };
    ci.lo = at(alpha);
    ci.hi = at(1.0 - alpha);
    return ci;
}

UtilityReport utility_experiment(
    const pipe::DatasetManifest& real_train, const pipe::DatasetManifest& synth,
    const std::vector<std::pair<std::string, pipe::DatasetManifest>>& tests,
    const MatcherConfig& matcher_cfg, double far_target, std::uint64_t seed) {
    if (tests.empty()) throw InvalidArgument("utility: need at least one test manifest");

    const auto real_ids = pipe::identity_ids(real_train);
    for (const auto& [name, test] : tests) {
        const auto test_ids = pipe::identity_ids(test);
        std::vector<std::int64_t> inter;
        std::set_intersection(real_ids.begin(), real_ids.end(), test_ids.begin(), test_ids.end(),
                              std::back_inserter(inter));
        if (!inter.empty())
            throw ProtocolViolation("utility: train/test identities overlap in '" + name + "'");
    }

    auto real_data = pipe::load_labeled_images(real_train);
    auto synth_data = pipe::load_labeled_images(synth);
    std::int64_t offset = 0;
    for (const auto& [im, id] : real_data) offset = std::max(offset, id + 1);
    for (auto& [im, id] : synth_data) id += offset;  // synthetic ids get their own namespace

    std::vector<std::pair<std::string, std::vector<std::pair<img::Image, std::int64_t>>>> configs;
    configs.emplace_back("real_only", real_data);
    configs.emplace_back("synth_only", synth_data);
    auto combined = real_data;
    combined.insert(combined.end(), synth_data.begin(), synth_data.end());
    configs.emplace_back("real_plus_synth", std::move(combined));

    UtilityReport report;
    report.far = far_target;
    report.seed = seed;
    for (const auto& [name, test] : tests) report.test_names.push_back(name);

    for (auto& [name, data] : configs) {
        UtilityRow row;
        row.config = name;
        {
            std::set<std::int64_t> uniq;
            for (const auto& [im, id] : data) uniq.insert(id);
            row.train_identities = static_cast<int>(uniq.size());
        }
        const auto trained = train_matcher(data, matcher_cfg, seed);
        double sum = 0;
        for (const auto& [tname, test] : tests) {
            const ScoreSet s = score_distributions(trained.model, test, Protocol::all_pairs);
            const double tar = tar_at_far(s, far_target).tar;
            row.tars.push_back(tar);
            sum += tar;
        }
        row.average = sum / static_cast<double>(tests.size());
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string report_csv(const UtilityReport& report) {
    std::string out = "config,n_train_ids";
    for (const auto& name : report.test_names) out += "," + name;
    out += ",average\n";
    char buf[64];
    for (const auto& row : report.rows) {
        out += row.config + "," + std::to_string(row.train_identities);
        for (double t : row.tars) {
            std::snprintf(buf, sizeof(buf), ",%.6f", t);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.6f", row.average);
        out += buf;
        out += "\n";
    }
    return out;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write scores: " + path.string());
    out << "label,score\n";
    out.precision(9);
    for (double s : scores.genuine) out << "G," << s << "\n";
    for (double s : scores.imposter) out << "I," << s << "\n";
}

void write_histogram_svg(const std::filesystem::path& path, const ScoreSet& scores, int bins) {
    if (bins < 1) throw InvalidArgument("histogram: bins must be positive");
    std::vector<double> hg(bins, 0.0), hi(bins, 0.0);
    auto add = [bins](std::vector<double>& h, double s) {
        int b = static_cast<int>((s + 1.0) / 2.0 * bins);
        h[std::clamp(b, 0, bins - 1)] += 1.0;
    };
    for (double s : scores.genuine) add(hg, s);
    for (double s : scores.imposter) add(hi, s);
    for (auto& v : hg) v /= std::max<std::size_t>(scores.genuine.size(), 1);
    for (auto& v : hi) v /= std::max<std::size_t>(scores.imposter.size(), 1);
    double peak = 1e-12;
    for (int b = 0; b < bins; ++b) peak = std::max({peak, hg[b], hi[b]});

    const int W = 640, H = 360, ml = 40, mb = 30, mt = 15, mr = 15;
    const double pw = static_cast<double>(W - ml - mr) / bins;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write histogram: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
        << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    auto series = [&](const std::vector<double>& h, const char* color) {
        for (int b = 0; b < bins; ++b) {
            const double frac = h[b] / peak;
            const double bh = frac * (H - mt - mb);
            out << "<rect x=\"" << ml + b * pw << "\" y=\"" << H - mb - bh << "\" width=\"" << pw
                << "\" height=\"" << bh << "\" fill=\"" << color << "\" fill-opacity=\"0.5\"/>\n";
        }
    };
    series(hi, "#c0392b");
    series(hg, "#27ae60");
    out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
        << H - mb << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << ml << "\" y=\"" << H - 8 << "\" font-size=\"12\">-1</text>\n"
        << "<text x=\"" << W - mr - 10 << "\" y=\"" << H - 8 << "\" font-size=\"12\">1</text>\n"
        << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 10
        << "\" font-size=\"12\" fill=\"#27ae60\">genuine</text>\n"
        << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 26
        << "\" font-size=\"12\" fill=\"#c0392b\">imposter</text>\n"
        << "</svg>\n";
}

}  // namespace palmforge::eval
