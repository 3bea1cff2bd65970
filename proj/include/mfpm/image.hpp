#pragma once

// Row-major single-channel images, bilinear lookup and 8-bit PGM files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mfpm/errors.hpp"

namespace mfpm {

template <class T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  bool operator==(const Image&) const = default;
};

/// Bilinear lookup at continuous pixel coordinates, pixel (i, j) centered at
/// (i + 0.5, j + 0.5). Taps outside the image read as zero.
inline double bilinear(const Image<double>& img, double u, double v) {
  const double x = u - 0.5;
  const double y = v - 0.5;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  if (!(fx >= -1.0 && fy >= -1.0 && fx < img.width && fy < img.height)) return 0.0;
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  auto tap = [&](int xi, int yi) { return img.inside(xi, yi) ? img.at(xi, yi) : 0.0; };
  const double top = (1.0 - tx) * tap(x0, y0) + tx * tap(x0 + 1, y0);
  const double bot = (1.0 - tx) * tap(x0, y0 + 1) + tx * tap(x0 + 1, y0 + 1);
  return (1.0 - ty) * top + ty * bot;
}

inline std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline double dequantize8(std::uint8_t k) { return k / 255.0; }

/// Rounds every pixel to the nearest 8-bit gray level, keeping doubles.
inline Image<double> quantized(const Image<double>& img) {
  Image<double> out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = dequantize8(quantize8(img[i]));
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const Image<double>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write image", path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) row[x] = static_cast<char>(quantize8(img.at(x, y)));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw ConfigError("write failed", path.string());
}

/// Reads binary (P5) or ASCII (P2) PGM with maxval 255 into [0, 1].
inline Image<double> read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image", path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw ConfigError("not a PGM file", path.string());
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    int v = -1;
    in >> v;
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w < 1 || h < 1 || maxval != 255) throw ConfigError("unsupported PGM header", path.string());
  Image<double> img(w, h);
  if (magic == "P5") {
    in.get();
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw ConfigError("truncated PGM", path.string());
    for (std::size_t i = 0; i < buf.size(); ++i) img[i] = dequantize8(buf[i]);
  } else {
    for (std::size_t i = 0; i < img.size(); ++i) {
      const int v = next_int();
      if (v < 0 || v > 255) throw ConfigError("bad PGM sample", path.string());
      img[i] = dequantize8(static_cast<std::uint8_t>(v));
    }
  }
  return img;
}

}  // namespace mfpm
