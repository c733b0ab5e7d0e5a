#pragma once

#include <json.hpp>

#include "palmforge/image.hpp"

namespace palmforge::lines {

// Blur -> adaptive threshold -> morphological closing. One config travels
// with every generated dataset so extractions are reproducible.
struct LineExtractConfig {
    int kernel_size = 5;
    double sigma = 1.1;
    int window = 15;
    double offset_c = 0.05;
    img::StructuringElement se{1, img::StructuringElement::Shape::square};

    void validate() const;
};

struct LineExtractStages {
    img::Image blurred;
    img::BinaryImage thresholded;  // pre-closing intermediate
    img::BinaryImage closed;
};

img::BinaryImage extract_lines(const img::Image& image, const LineExtractConfig& cfg = {});

// Same pipeline with the intermediates exposed.
LineExtractStages extract_lines_stages(const img::Image& image, const LineExtractConfig& cfg = {});

void to_json(nlohmann::json& j, const LineExtractConfig& cfg);
void from_json(const nlohmann::json& j, LineExtractConfig& cfg);

}  // namespace palmforge::lines
