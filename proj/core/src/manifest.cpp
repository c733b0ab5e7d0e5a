#include "palmforge/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "palmforge/errors.hpp"
#include "palmforge/image_io.hpp"

namespace palmforge::pipe {

void save_manifest(const std::filesystem::path& file, const DatasetManifest& m) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write manifest: " + file.string());
    for (const auto& r : m.records) {
        nlohmann::json j = {{"identity_id", r.identity_id},
                            {"image_path", r.image_path},
                            {"source", r.source},
                            {"quality_label", r.quality_label},
                            {"seed", r.seed}};
        if (r.homography_index) j["homography_index"] = *r.homography_index;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("short write on manifest: " + file.string());
}

DatasetManifest load_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read manifest: " + file.string());
    DatasetManifest m;
    m.base_dir = file.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw IoError("manifest line " + std::to_string(lineno) + " is not valid JSON");
        ManifestRecord r;
        r.identity_id = j.at("identity_id").get<std::int64_t>();
        r.image_path = j.at("image_path").get<std::string>();
        r.source = j.at("source").get<std::string>();
        r.quality_label = j.at("quality_label").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("homography_index")) r.homography_index = j.at("homography_index").get<int>();
        m.records.push_back(std::move(r));
    }
    return m;
}

std::filesystem::path record_path(const DatasetManifest& m, const ManifestRecord& r) {
    const std::filesystem::path p(r.image_path);
    return p.is_absolute() ? p : m.base_dir / p;
}

void verify_manifest(const DatasetManifest& m, int side) {
    std::set<std::int64_t> stage1_ids;
    for (const auto& r : m.records)
        if (r.source == "stage1") stage1_ids.insert(r.identity_id);
    for (const auto& r : m.records) {
        if (r.source != "real-analog" && r.source != "stage1" && r.source != "stage2")
            throw InvalidArgument("manifest: unknown source '" + r.source + "'");
        if (r.source == "stage2" && !stage1_ids.count(r.identity_id))
            throw InvalidArgument("manifest: stage2 record for identity " +
                                  std::to_string(r.identity_id) + " has no stage1 parent");
        const img::Image im = img::load_png(record_path(m, r));
        if (im.width != side || im.height != side)
            throw InvalidArgument("manifest: " + r.image_path + " is not " +
                                  std::to_string(side) + "x" + std::to_string(side));
    }
}

std::vector<std::int64_t> identity_ids(const DatasetManifest& m) {
    std::vector<std::int64_t> ids;
    ids.reserve(m.records.size());
    for (const auto& r : m.records) ids.push_back(r.identity_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::vector<std::pair<img::Image, std::int64_t>> load_labeled_images(const DatasetManifest& m) {
    std::vector<std::pair<img::Image, std::int64_t>> out(m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i)
        out[i] = {img::load_png(record_path(m, m.records[i])), m.records[i].identity_id};
    return out;
}

}  // namespace palmforge::pipe
