#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "curbsight/errors.hpp"

namespace curbsight {

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> px;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), px(size_t(w) * size_t(h), fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  T& at(int x, int y) { return px[size_t(y) * width + x]; }
  const T& at(int x, int y) const { return px[size_t(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

using ImageU8 = Image<uint8_t>;
using ImageF = Image<float>;

inline uint8_t clamp_u8(double v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear sample with a constant value outside the image.
template <typename T>
inline double sample_bilinear(const Image<T>& img, double x, double y, double outside = 0.0) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0;
  double fy = y - y0;
  auto pick = [&](int xi, int yi) -> double {
    return img.contains(xi, yi) ? static_cast<double>(img.at(xi, yi)) : outside;
  };
  double top = pick(x0, y0) * (1.0 - fx) + pick(x0 + 1, y0) * fx;
  double bot = pick(x0, y0 + 1) * (1.0 - fx) + pick(x0 + 1, y0 + 1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

template <typename T>
inline double sample_nearest(const Image<T>& img, double x, double y, double outside = 0.0) {
  int xi = static_cast<int>(std::lround(x));
  int yi = static_cast<int>(std::lround(y));
  return img.contains(xi, yi) ? static_cast<double>(img.at(xi, yi)) : outside;
}

inline std::vector<float> gaussian_kernel(double sigma) {
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[i + radius] = static_cast<float>(w);
    sum += w;
  }
  for (float& w : k) w = static_cast<float>(w / sum);
  return k;
}

// Separable Gaussian blur, borders clamped. sigma <= 0 returns the input.
template <typename T>
inline ImageF gaussian_blur(const Image<T>& src, double sigma) {
  if (src.empty()) throw EmptyImage();
  ImageF out(src.width, src.height);
  if (sigma <= 0.0) {
    for (size_t i = 0; i < src.px.size(); ++i) out.px[i] = static_cast<float>(src.px[i]);
    return out;
  }
  auto k = gaussian_kernel(sigma);
  int radius = static_cast<int>(k.size() / 2);
  ImageF tmp(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int xi = std::clamp(x + i, 0, src.width - 1);
        acc += k[i + radius] * static_cast<double>(src.at(xi, y));
      }
      tmp.at(x, y) = static_cast<float>(acc);
    }
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int yi = std::clamp(y + i, 0, src.height - 1);
        acc += k[i + radius] * tmp.at(x, yi);
      }
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

// Binary PGM (P5, maxval 255). Comment lines carry frame metadata.
inline void write_pgm(const std::string& path, const ImageU8& img,
                      const std::string& comment = "") {
  if (img.empty()) throw EmptyImage();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "P5\n";
  if (!comment.empty()) f << "# " << comment << "\n";
  f << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (!f) throw IoError("short write: " + path);
}

inline ImageU8 read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw IoError("not a binary PGM: " + path);
  auto next_int = [&]() -> int {
    int c = f.get();
    while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
      if (c == '#')
        while (c != '\n' && c != EOF) c = f.get();
      c = f.get();
    }
    int value = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
      value = value * 10 + (c - '0');
      any = true;
      c = f.get();
    }
    if (!any) throw IoError("malformed PGM header: " + path);
    return value;
  };
  int w = next_int();
  int h = next_int();
  int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported PGM header: " + path);
  ImageU8 img(w, h);
  f.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.px.size()))
    throw IoError("truncated PGM data: " + path);
  return img;
}

}  // namespace curbsight
