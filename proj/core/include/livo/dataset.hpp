#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "livo/measurement.hpp"
#include "livo/state.hpp"

namespace livo {

struct StampedPose {
  double timestamp = 0.0;
  Mat3 rot = Mat3::Identity();
  Vec3 pos = Vec3::Zero();
};

struct DatasetCalibration {
  std::string scene;
  SensorConfig sensors;
  NoiseConfig noise;  // densities handed to the filter
  double imu_rate = 200.0;
  double scan_rate = 10.0;
  double camera_rate = 10.0;
};

/// In-memory copy of a dataset directory:
///   calib.txt        key = value lines; extrinsics as 16 row-major numbers
///   imu.csv          t,wx,wy,wz,ax,ay,az
///   lidar/<us>.csv   dt_offset,x,y,z[,ring]; <us> is the 16-digit scan end time in microseconds
///   images/<us>.pgm  binary 8-bit grayscale
///   groundtruth.txt  optional, "t tx ty tz qx qy qz qw"
struct Dataset {
  DatasetCalibration calib;
  std::vector<ImuSample> imu;
  std::vector<LidarScan> scans;
  std::vector<CameraFrame> images;
  std::vector<StampedPose> groundtruth;
};

/// All measurements ordered by (timestamp, kindRank).
std::vector<Measurement> mergedStream(const Dataset& d);

struct KeyValue {
  std::string value;
  std::size_t line = 0;
};
/// "key = value" per line; '#' starts a comment. Throws ParseError on lines
/// without '=' or duplicate keys.
std::map<std::string, KeyValue> readKeyValueFile(const std::filesystem::path& path);

/// 16-digit zero-padded microseconds.
std::string timestampName(double t);
/// Inverse of timestampName for a file stem; throws ParseError.
double parseTimestampName(const std::string& stem, const std::string& file);

void writePgm(const std::filesystem::path& path, const Image& img);
Image readPgm(const std::filesystem::path& path);

void writeTum(std::ostream& os, const std::vector<StampedPose>& poses);
std::vector<StampedPose> readTum(const std::filesystem::path& path);

void writeCalibration(const std::filesystem::path& path, const DatasetCalibration& calib);
DatasetCalibration readCalibration(const std::filesystem::path& path);

/// Writes the full layout. Throws std::runtime_error when the directory
/// cannot be created or written.
void writeDataset(const Dataset& d, const std::filesystem::path& dir);
/// Throws ParseError naming the file and line of the first problem.
Dataset readDataset(const std::filesystem::path& dir);

/// Structural checks on a dataset directory; returns one message per problem.
std::vector<std::string> validateDataset(const std::filesystem::path& dir);

}  // namespace livo
