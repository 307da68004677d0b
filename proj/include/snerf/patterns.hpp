#pragma once

#include "snerf/image.hpp"

#include <string>
#include <vector>

namespace snerf {

/// Procedural style references: "stripes", "dots", "checker", "waves".
ImageBuffer make_style_image(const std::string& name, int size = 64);

std::vector<std::string> style_pattern_names();

}  // namespace snerf
