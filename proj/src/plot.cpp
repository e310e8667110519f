#include "laughflow/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

namespace laughflow::plot {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::ofstream& f, const char type[4], const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> head;
  put_be32(head, std::uint32_t(data.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  std::uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), uInt(data.size()));
  std::vector<std::uint8_t> tail;
  put_be32(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& rgb) {
  if (width < 1 || height < 1 || rgb.size() != size_t(width) * size_t(height) * 3) {
    throw std::invalid_argument("write_png: pixel buffer does not match dimensions");
  }
  // scanlines with leading filter byte 0, then one zlib stream
  std::vector<std::uint8_t> raw(size_t(height) * (size_t(width) * 3 + 1));
  for (int y = 0; y < height; ++y) {
    auto* row = raw.data() + size_t(y) * (size_t(width) * 3 + 1);
    row[0] = 0;
    std::memcpy(row + 1, rgb.data() + size_t(y) * size_t(width) * 3, size_t(width) * 3);
  }
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 9) != Z_OK) {
    throw std::runtime_error("write_png: compression failed");
  }
  compressed.resize(bound);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_png: cannot open " + path.string());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  f.write(reinterpret_cast<const char*>(sig), 8);
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, std::uint32_t(width));
  put_be32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(f, "IHDR", ihdr);
  put_chunk(f, "IDAT", compressed);
  put_chunk(f, "IEND", {});
  if (!f) throw std::runtime_error("write_png: short write to " + path.string());
}

void trace_plot(const std::filesystem::path& path, const std::vector<Series>& series,
                int px_per_frame, int height) {
  if (series.empty()) throw std::invalid_argument("trace_plot: no series");
  Index frames = 0;
  for (const auto& s : series) frames = std::max(frames, s.values.size());
  if (frames < 1) throw std::invalid_argument("trace_plot: empty series");
  const int width = std::max(32, int(frames) * px_per_frame);
  const int top = 8, bottom = 8;
  std::vector<std::uint8_t> rgb(size_t(width) * size_t(height) * 3, 255);
  auto set = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || x >= width || y < 0 || y >= height) return;
    auto* px = rgb.data() + (size_t(y) * size_t(width) + size_t(x)) * 3;
    px[0] = r;
    px[1] = g;
    px[2] = b;
  };
  auto y_for = [&](double v) {
    v = std::clamp(v, 0.0, 1.0);
    return int(std::lround((height - 1 - bottom) - v * (height - 1 - top - bottom)));
  };
  for (double level : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const int y = y_for(level);
    for (int x = 0; x < width; ++x) set(x, y, 220, 220, 220);
  }
  for (const auto& s : series) {
    int prev_y = -1;
    for (Index j = 0; j < s.values.size(); ++j) {
      const int y = y_for(s.values(j));
      const int x0 = int(j) * px_per_frame;
      if (prev_y >= 0) {  // join to the previous frame's level
        const int lo = std::min(prev_y, y), hi = std::max(prev_y, y);
        for (int y2 = lo; y2 <= hi; ++y2) set(x0, y2, s.r, s.g, s.b);
      }
      for (int dx = 0; dx < px_per_frame; ++dx) set(x0 + dx, y, s.r, s.g, s.b);
      prev_y = y;
    }
  }
  write_png(path, width, height, rgb);
}

}  // namespace laughflow::plot
