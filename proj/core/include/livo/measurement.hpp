#pragma once

#include <variant>

#include "livo/image.hpp"
#include "livo/state.hpp"

namespace livo {

struct CameraFrame {
  double timestamp = 0.0;
  Image image;
};

using Measurement = std::variant<ImuSample, LidarScan, CameraFrame>;

double timestampOf(const Measurement& m);

/// Order among measurements with equal timestamps: IMU, then LiDAR, then image.
int kindRank(const Measurement& m);

}  // namespace livo
