#include "livo/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "livo/errors.hpp"

namespace livo {

Image::Image(int width, int height, float fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("Image: negative size");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

bool Image::interpolable(const Vec2& px, double margin) const {
  return px.x() >= margin && px.y() >= margin && px.x() < width_ - 1 - margin && px.y() < height_ - 1 - margin;
}

double Image::interpolateUnchecked(const Vec2& px) const {
  const int x0 = static_cast<int>(std::floor(px.x()));
  const int y0 = static_cast<int>(std::floor(px.y()));
  const double fx = px.x() - x0;
  const double fy = px.y() - y0;
  const float* row0 = &data_[static_cast<std::size_t>(y0) * width_ + x0];
  const float* row1 = row0 + width_;
  return (1.0 - fy) * ((1.0 - fx) * row0[0] + fx * row0[1]) + fy * ((1.0 - fx) * row1[0] + fx * row1[1]);
}

double Image::interpolate(const Vec2& px) const {
  if (!interpolable(px)) {
    throw OutOfBoundsError("Image::interpolate: pixel outside interpolation-safe region");
  }
  return interpolateUnchecked(px);
}

Vec2 Image::gradientUnchecked(const Vec2& px) const {
  const int x0 = static_cast<int>(std::floor(px.x()));
  const int y0 = static_cast<int>(std::floor(px.y()));
  const double fx = px.x() - x0;
  const double fy = px.y() - y0;
  const float* row0 = &data_[static_cast<std::size_t>(y0) * width_ + x0];
  const float* row1 = row0 + width_;
  return {(1.0 - fy) * (row0[1] - row0[0]) + fy * (row1[1] - row1[0]),
          (1.0 - fx) * (row1[0] - row0[0]) + fx * (row1[1] - row0[1])};
}

Image Image::halfSample() const {
  Image out(width_ / 2, height_ / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out.at(x, y) = 0.25f * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

Image Image::fromBytes(int width, int height, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("Image::fromBytes: size mismatch");
  }
  Image img(width, height);
  std::transform(bytes.begin(), bytes.end(), img.data_.begin(), [](std::uint8_t b) { return static_cast<float>(b); });
  return img;
}

std::vector<std::uint8_t> Image::toBytes() const {
  std::vector<std::uint8_t> out(data_.size());
  std::transform(data_.begin(), data_.end(), out.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  });
  return out;
}

ImagePyramid::ImagePyramid(const Image& base, double t) : timestamp(t) {
  levels[0] = base;
  for (int l = 1; l < kPyramidLevels; ++l) levels[l] = levels[l - 1].halfSample();
}

double gradientMagnitude(const Image& img, int x, int y) {
  if (x < 1 || y < 1 || x >= img.width() - 1 || y >= img.height() - 1) return 0.0;
  const double gx = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
  const double gy = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
  return std::sqrt(gx * gx + gy * gy);
}

}  // namespace livo
