#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace livo {

using Vec2 = Eigen::Vector2d;

/// Row-major single-channel float image; intensities in 8-bit units.
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<float>& data() const { return data_; }

  /// True when bilinear interpolation at px only touches stored pixels:
  /// 0 <= x < width-1 and 0 <= y < height-1, widened by `margin` on every side.
  bool interpolable(const Vec2& px, double margin = 0.0) const;

  /// Bilinear interpolation. Throws OutOfBoundsError outside interpolable().
  double interpolate(const Vec2& px) const;
  /// Interpolation without the bounds check; callers test interpolable().
  double interpolateUnchecked(const Vec2& px) const;
  /// Exact gradient of the bilinear interpolant at px (unchecked).
  Vec2 gradientUnchecked(const Vec2& px) const;

  /// 2x2 box-filter downsample to floor(w/2) x floor(h/2).
  Image halfSample() const;

  static Image fromBytes(int width, int height, const std::vector<std::uint8_t>& bytes);
  std::vector<std::uint8_t> toBytes() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

inline constexpr int kPyramidLevels = 3;

struct ImagePyramid {
  std::array<Image, kPyramidLevels> levels;
  double timestamp = 0.0;

  ImagePyramid() = default;
  ImagePyramid(const Image& base, double timestamp);

  const Image& level(int l) const { return levels.at(static_cast<std::size_t>(l)); }
};

/// Maps a level-0 pixel coordinate to pyramid level `level` for 2x2 averaging.
inline Vec2 toLevel(const Vec2& px0, int level) {
  const double s = 1.0 / static_cast<double>(1 << level);
  return (px0 + Vec2::Constant(0.5)) * s - Vec2::Constant(0.5);
}

/// Central-difference gradient magnitude at an integer pixel (3x3 support).
double gradientMagnitude(const Image& img, int x, int y);

}  // namespace livo
