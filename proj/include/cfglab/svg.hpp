#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "cfglab/matrix.hpp"

namespace cfglab {

/// One scatter series: points plus a legend label. The caller keeps the
/// points alive for the duration of the emit call.
struct SvgSeries {
    const Matrix* points = nullptr;  // n×2
    std::string label;
};

/// Standalone scatter plot: one color per series, viewBox from the joint data
/// bounds with a 10% margin, legend swatches, config digest in a comment.
/// Byte-deterministic for identical inputs.
void emit_scatter_svg(std::span<const SvgSeries> series, const std::filesystem::path& path,
                      const std::string& digest);

}  // namespace cfglab
