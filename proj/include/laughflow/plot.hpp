#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "laughflow/types.hpp"

namespace laughflow::plot {

void write_png(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& rgb);

struct Series {
  VecD values;  // plotted on a fixed [0,1] vertical scale (clamped)
  std::uint8_t r = 0, g = 0, b = 0;
};

// Envelope-overlay chart: one pixel column block per frame, horizontal grid
// at 0/0.25/0.5/0.75/1.
void trace_plot(const std::filesystem::path& path, const std::vector<Series>& series,
                int px_per_frame = 4, int height = 120);

}  // namespace laughflow::plot
