#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "palmforge/image.hpp"

namespace palmforge::pipe {

struct ManifestRecord {
    std::int64_t identity_id = 0;
    std::string image_path;  // relative to the manifest's directory
    std::string source;      // real-analog | stage1 | stage2
    int quality_label = 0;
    std::optional<int> homography_index;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    std::filesystem::path base_dir;
    std::vector<ManifestRecord> records;
};

// One JSON object per line, records in order.
void save_manifest(const std::filesystem::path& file, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& file);

std::filesystem::path record_path(const DatasetManifest& m, const ManifestRecord& r);

// Loads every referenced image, checks resolution and the stage2-has-parent
// rule. Throws on the first violation.
void verify_manifest(const DatasetManifest& m, int side);

std::vector<std::int64_t> identity_ids(const DatasetManifest& m);  // sorted, unique

// Images with their identity ids, in record order.
std::vector<std::pair<img::Image, std::int64_t>> load_labeled_images(const DatasetManifest& m);

}  // namespace palmforge::pipe
