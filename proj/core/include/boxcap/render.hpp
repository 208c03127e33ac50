#pragma once

#include <span>
#include <string>

#include "boxcap/dataio.hpp"
#include "boxcap/image.hpp"

namespace boxcap::render {

/// Draws each caption inside its box with a 5x7 bitmap font scaled to the box's short
/// side. Text runs along the long side and is clipped to the box rectangle. An empty
/// caption list returns the image unchanged.
Image render_captions(const Image& image, std::span<const dataio::TextBox> boxes,
                      std::span<const std::string> captions);

}  // namespace boxcap::render
