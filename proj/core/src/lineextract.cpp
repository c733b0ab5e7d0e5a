#include "palmforge/lineextract.hpp"

namespace palmforge::lines {

void LineExtractConfig::validate() const {
    if (kernel_size < 3 || kernel_size % 2 == 0)
        throw InvalidArgument("line extract: kernel_size must be odd and >= 3");
    if (sigma <= 0) throw InvalidArgument("line extract: sigma must be > 0");
    if (window < 3 || window % 2 == 0)
        throw InvalidArgument("line extract: window must be odd and >= 3");
    if (se.radius < 1) throw InvalidArgument("line extract: SE radius must be >= 1");
}

LineExtractStages extract_lines_stages(const img::Image& image, const LineExtractConfig& cfg) {
    cfg.validate();
    if (image.width < 32 || image.height < 32)
        throw InvalidArgument("extract_lines: image must be at least 32x32");
    LineExtractStages s;
    s.blurred = img::gaussian_blur(image, cfg.kernel_size, cfg.sigma);
    s.thresholded = img::adaptive_threshold(s.blurred, cfg.window, cfg.offset_c);
    s.closed = img::morph_close(s.thresholded, cfg.se);
    return s;
}

img::BinaryImage extract_lines(const img::Image& image, const LineExtractConfig& cfg) {
    return extract_lines_stages(image, cfg).closed;
}

void to_json(nlohmann::json& j, const LineExtractConfig& cfg) {
    j = {{"kernel_size", cfg.kernel_size},
         {"sigma", cfg.sigma},
         {"window", cfg.window},
         {"offset_c", cfg.offset_c},
         {"se_radius", cfg.se.radius},
         {"se_shape", cfg.se.shape == img::StructuringElement::Shape::square ? "square" : "cross"}};
}

void from_json(const nlohmann::json& j, LineExtractConfig& cfg) {
    cfg.kernel_size = j.at("kernel_size").get<int>();
    cfg.sigma = j.at("sigma").get<double>();
    cfg.window = j.at("window").get<int>();
    cfg.offset_c = j.at("offset_c").get<double>();
    cfg.se.radius = j.at("se_radius").get<int>();
    const auto shape = j.at("se_shape").get<std::string>();
    if (shape == "square")
        cfg.se.shape = img::StructuringElement::Shape::square;
    else if (shape == "cross")
        cfg.se.shape = img::StructuringElement::Shape::cross;
    else
        throw InvalidArgument("line extract: unknown SE shape " + shape);
}

}  // namespace palmforge::lines
