#include "livo/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include <Eigen/Geometry>

#include "livo/errors.hpp"

namespace livo {

namespace fs = std::filesystem;

double timestampOf(const Measurement& m) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ImuSample>) return v.timestamp;
        else if constexpr (std::is_same_v<T, LidarScan>) return v.end_time;
        else return v.timestamp;
      },
      m);
}

int kindRank(const Measurement& m) { return static_cast<int>(m.index()); }

std::vector<Measurement> mergedStream(const Dataset& d) {
  std::vector<Measurement> out;
  out.reserve(d.imu.size() + d.scans.size() + d.images.size());
  for (const auto& s : d.imu) out.emplace_back(s);
  for (const auto& s : d.scans) out.emplace_back(s);
  for (const auto& f : d.images) out.emplace_back(f);
  std::stable_sort(out.begin(), out.end(), [](const Measurement& a, const Measurement& b) {
    const double ta = timestampOf(a), tb = timestampOf(b);
    if (ta != tb) return ta < tb;
    return kindRank(a) < kindRank(b);
  });
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parseNumber(const std::string& tok, const std::string& file, std::size_t line) {
  const std::string t = trim(tok);
  if (t.empty()) throw ParseError(file, line, "empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ParseError(file, line, "invalid number '" + t + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

std::vector<std::string> splitWhitespace(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::ifstream openInput(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError(p.string(), 0, "cannot open file");
  return in;
}

std::ofstream openOutput(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string transformString(const RigidTransform& T) {
  std::string s;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      double v = r < 3 ? (c < 3 ? T.rot(r, c) : T.trans[r]) : (c < 3 ? 0.0 : 1.0);
      if (!s.empty()) s += ' ';
      s += fmt("%.17g", v);
    }
  }
  return s;
}

RigidTransform parseTransform(const KeyValue& kv, const std::string& file) {
  const auto toks = splitWhitespace(kv.value);
  if (toks.size() != 16) throw ParseError(file, kv.line, "transform needs 16 numbers");
  RigidTransform T;
  double m[16];
  for (int i = 0; i < 16; ++i) m[i] = parseNumber(toks[i], file, kv.line);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) T.rot(r, c) = m[4 * r + c];
    T.trans[r] = m[4 * r + 3];
  }
  if (std::abs(m[12]) > 1e-9 || std::abs(m[13]) > 1e-9 || std::abs(m[14]) > 1e-9 || std::abs(m[15] - 1.0) > 1e-9) {
    throw ParseError(file, kv.line, "last transform row must be 0 0 0 1");
  }
  if (!so3::isRotation(T.rot, 1e-6)) throw ParseError(file, kv.line, "transform rotation is not orthonormal");
  T.rot = so3::normalize(T.rot);
  return T;
}

}  // namespace

std::map<std::string, KeyValue> readKeyValueFile(const fs::path& path) {
  std::ifstream in = openInput(path);
  std::map<std::string, KeyValue> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), n, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(path.string(), n, "empty key");
    if (!out.emplace(key, KeyValue{trim(line.substr(eq + 1)), n}).second) {
      throw ParseError(path.string(), n, "duplicate key '" + key + "'");
    }
  }
  return out;
}

std::string timestampName(double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("timestampName: negative time");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016lld", static_cast<long long>(std::llround(t * 1e6)));
  return buf;
}

double parseTimestampName(const std::string& stem, const std::string& file) {
  if (stem.size() != 16 || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ParseError(file, 0, "file name must be 16 digits of microseconds");
  }
  return static_cast<double>(std::stoll(stem)) / 1e6;
}

void writePgm(const fs::path& path, const Image& img) {
  std::ofstream out = openOutput(path);
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  const auto bytes = img.toBytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

Image readPgm(const fs::path& path) {
  std::ifstream in = openInput(path);
  const std::string file = path.string();
  // Header tokens, skipping comments.
  std::vector<std::string> header;
  while (header.size() < 4) {
    int c = in.peek();
    if (c == EOF) throw ParseError(file, 0, "truncated PGM header");
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    std::string tok;
    while (in.peek() != EOF && !std::isspace(in.peek())) tok += static_cast<char>(in.get());
    header.push_back(tok);
  }
  in.get();  // single whitespace before the raster
  if (header[0] != "P5") throw ParseError(file, 1, "expected binary PGM (P5)");
  const int w = static_cast<int>(parseNumber(header[1], file, 1));
  const int h = static_cast<int>(parseNumber(header[2], file, 1));
  const int maxval = static_cast<int>(parseNumber(header[3], file, 1));
  if (w <= 0 || h <= 0 || maxval != 255) throw ParseError(file, 1, "unsupported PGM dimensions or depth");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError(file, 0, "truncated PGM raster");
  return Image::fromBytes(w, h, bytes);
}

void writeTum(std::ostream& os, const std::vector<StampedPose>& poses) {
  char buf[256];
  for (const auto& p : poses) {
    Eigen::Quaterniond q(p.rot);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    std::snprintf(buf, sizeof(buf), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", p.timestamp, p.pos.x(), p.pos.y(),
                  p.pos.z(), q.x(), q.y(), q.z(), q.w());
    os << buf;
  }
}

std::vector<StampedPose> readTum(const fs::path& path) {
  std::ifstream in = openInput(path);
  std::vector<StampedPose> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto toks = splitWhitespace(t);
    if (toks.size() != 8) throw ParseError(path.string(), n, "expected 8 fields 't tx ty tz qx qy qz qw'");
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parseNumber(toks[i], path.string(), n);
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-6) throw ParseError(path.string(), n, "zero quaternion");
    q.normalize();
    out.push_back({v[0], q.toRotationMatrix(), Vec3(v[1], v[2], v[3])});
  }
  return out;
}

void writeCalibration(const fs::path& path, const DatasetCalibration& c) {
  std::ofstream out = openOutput(path);
  out << "scene = " << c.scene << '\n';
  out << "imu_rate = " << fmt("%.17g", c.imu_rate) << '\n';
  out << "scan_rate = " << fmt("%.17g", c.scan_rate) << '\n';
  out << "camera_rate = " << fmt("%.17g", c.camera_rate) << '\n';
  out << "T_IL = " << transformString(c.sensors.T_IL) << '\n';
  out << "T_IC = " << transformString(c.sensors.T_IC) << '\n';
  out << "camera.fx = " << fmt("%.17g", c.sensors.camera.fx) << '\n';
  out << "camera.fy = " << fmt("%.17g", c.sensors.camera.fy) << '\n';
  out << "camera.cx = " << fmt("%.17g", c.sensors.camera.cx) << '\n';
  out << "camera.cy = " << fmt("%.17g", c.sensors.camera.cy) << '\n';
  out << "camera.width = " << c.sensors.camera.width << '\n';
  out << "camera.height = " << c.sensors.camera.height << '\n';
  out << "noise.sigma_gyro = " << fmt("%.17g", c.noise.sigma_gyro) << '\n';
  out << "noise.sigma_accel = " << fmt("%.17g", c.noise.sigma_accel) << '\n';
  out << "noise.sigma_bias_gyro_walk = " << fmt("%.17g", c.noise.sigma_bias_gyro_walk) << '\n';
  out << "noise.sigma_bias_accel_walk = " << fmt("%.17g", c.noise.sigma_bias_accel_walk) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

DatasetCalibration readCalibration(const fs::path& path) {
  const auto kv = readKeyValueFile(path);
  const std::string file = path.string();
  const auto get = [&](const std::string& key) -> const KeyValue& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(file, 0, "missing key '" + key + "'");
    return it->second;
  };
  const auto num = [&](const std::string& key) {
    const KeyValue& v = get(key);
    return parseNumber(v.value, file, v.line);
  };
  const auto positive = [&](const std::string& key) {
    const double v = num(key);
    if (!(v > 0.0)) throw ParseError(file, get(key).line, key + " must be positive");
    return v;
  };
  DatasetCalibration c;
  c.scene = get("scene").value;
  c.imu_rate = positive("imu_rate");
  c.scan_rate = positive("scan_rate");
  c.camera_rate = positive("camera_rate");
  c.sensors.T_IL = parseTransform(get("T_IL"), file);
  c.sensors.T_IC = parseTransform(get("T_IC"), file);
  c.sensors.camera.fx = positive("camera.fx");
  c.sensors.camera.fy = positive("camera.fy");
  c.sensors.camera.cx = num("camera.cx");
  c.sensors.camera.cy = num("camera.cy");
  c.sensors.camera.width = static_cast<int>(positive("camera.width"));
  c.sensors.camera.height = static_cast<int>(positive("camera.height"));
  c.noise.sigma_gyro = positive("noise.sigma_gyro");
  c.noise.sigma_accel = positive("noise.sigma_accel");
  c.noise.sigma_bias_gyro_walk = positive("noise.sigma_bias_gyro_walk");
  c.noise.sigma_bias_accel_walk = positive("noise.sigma_bias_accel_walk");
  return c;
}

namespace {

std::vector<ImuSample> readImuCsv(const fs::path& path) {
  std::ifstream in = openInput(path);
  const std::string file = path.string();
  std::vector<ImuSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (n == 1 && t.rfind("t,", 0) == 0) continue;
    const auto toks = split(t, ',');
    if (toks.size() != 7) throw ParseError(file, n, "expected 7 fields 't,wx,wy,wz,ax,ay,az'");
    ImuSample s;
    s.timestamp = parseNumber(toks[0], file, n);
    for (int i = 0; i < 3; ++i) s.gyro[i] = parseNumber(toks[1 + i], file, n);
    for (int i = 0; i < 3; ++i) s.accel[i] = parseNumber(toks[4 + i], file, n);
    if (!out.empty() && !(s.timestamp > out.back().timestamp)) {
      throw ParseError(file, n, "timestamps must be strictly increasing");
    }
    out.push_back(s);
  }
  return out;
}

LidarScan readLidarCsv(const fs::path& path) {
  std::ifstream in = openInput(path);
  const std::string file = path.string();
  LidarScan scan;
  scan.end_time = parseTimestampName(path.stem().string(), file);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (n == 1 && t.rfind("dt_offset", 0) == 0) continue;
    const auto toks = split(t, ',');
    if (toks.size() != 4 && toks.size() != 5) throw ParseError(file, n, "expected 'dt_offset,x,y,z[,ring]'");
    LidarPoint p;
    p.time_offset = parseNumber(toks[0], file, n);
    if (p.time_offset < 0.0) throw ParseError(file, n, "dt_offset must be non-negative");
    for (int i = 0; i < 3; ++i) p.position[i] = parseNumber(toks[1 + i], file, n);
    if (toks.size() == 5) p.ring = static_cast<int>(parseNumber(toks[4], file, n));
    scan.points.push_back(p);
  }
  return scan;
}

std::vector<fs::path> sortedFiles(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw ParseError(dir.string(), 0, "missing directory");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void writeDataset(const Dataset& d, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "lidar", ec);
  if (!ec) fs::create_directories(dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  writeCalibration(dir / "calib.txt", d.calib);
  {
    std::ofstream out = openOutput(dir / "imu.csv");
    out << "t,wx,wy,wz,ax,ay,az\n";
    char buf[256];
    for (const auto& s : d.imu) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", s.timestamp, s.gyro.x(), s.gyro.y(),
                    s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z());
      out << buf;
    }
    if (!out) throw std::runtime_error("cannot write imu.csv");
  }
  for (const auto& scan : d.scans) {
    std::ofstream out = openOutput(dir / "lidar" / (timestampName(scan.end_time) + ".csv"));
    out << "dt_offset,x,y,z,ring\n";
    char buf[160];
    for (const auto& p : scan.points) {
      std::snprintf(buf, sizeof(buf), "%.9f,%.6f,%.6f,%.6f,%d\n", p.time_offset, p.position.x(), p.position.y(),
                    p.position.z(), p.ring);
      out << buf;
    }
    if (!out) throw std::runtime_error("cannot write LiDAR scan");
  }
  for (const auto& f : d.images) writePgm(dir / "images" / (timestampName(f.timestamp) + ".pgm"), f.image);
  if (!d.groundtruth.empty()) {
    std::ofstream out = openOutput(dir / "groundtruth.txt");
    writeTum(out, d.groundtruth);
  }
}

Dataset readDataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError(dir.string(), 0, "dataset directory does not exist");
  Dataset d;
  d.calib = readCalibration(dir / "calib.txt");
  d.imu = readImuCsv(dir / "imu.csv");
  for (const auto& p : sortedFiles(dir / "lidar", ".csv")) d.scans.push_back(readLidarCsv(p));
  for (const auto& p : sortedFiles(dir / "images", ".pgm")) {
    CameraFrame f;
    f.timestamp = parseTimestampName(p.stem().string(), p.string());
    f.image = readPgm(p);
    if (f.image.width() != d.calib.sensors.camera.width || f.image.height() != d.calib.sensors.camera.height) {
      throw ParseError(p.string(), 0, "image size does not match calib.txt");
    }
    d.images.push_back(std::move(f));
  }
  if (fs::exists(dir / "groundtruth.txt")) d.groundtruth = readTum(dir / "groundtruth.txt");
  return d;
}

std::vector<std::string> validateDataset(const fs::path& dir) {
  std::vector<std::string> problems;
  for (const char* required : {"calib.txt", "imu.csv", "lidar", "images"}) {
    if (!fs::exists(dir / required)) problems.push_back(std::string("missing ") + required);
  }
  if (!problems.empty()) return problems;
  try {
    const Dataset d = readDataset(dir);
    if (d.imu.size() < 2) problems.push_back("imu.csv has fewer than 2 samples");
    if (d.scans.empty()) problems.push_back("no LiDAR scans");
    for (const auto& s : d.scans) {
      if (s.points.empty()) problems.push_back("empty scan at t=" + fmt("%.6f", s.end_time));
      if (!d.imu.empty() && (s.end_time < d.imu.front().timestamp || s.end_time > d.imu.back().timestamp)) {
        problems.push_back("scan at t=" + fmt("%.6f", s.end_time) + " lies outside the IMU time range");
      }
    }
    for (const auto& f : d.images) {
      if (!d.imu.empty() && (f.timestamp < d.imu.front().timestamp || f.timestamp > d.imu.back().timestamp)) {
        problems.push_back("image at t=" + fmt("%.6f", f.timestamp) + " lies outside the IMU time range");
      }
    }
    for (std::size_t i = 1; i < d.groundtruth.size(); ++i) {
      if (!(d.groundtruth[i].timestamp > d.groundtruth[i - 1].timestamp)) {
        problems.push_back("groundtruth.txt timestamps must be increasing");
        break;
      }
    }
  } catch (const ParseError& e) {
    problems.push_back(e.what());
  }
  return problems;
}

}  // namespace livo
