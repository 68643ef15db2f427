#include "livo_cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include "CLI11.hpp"
#include "livo/simulator.hpp"

namespace livo::cli {

namespace fs = std::filesystem;

Dataset cmdSim(const SimOptions& opt) {
  const auto names = sim::sceneNames();
  if (std::find(names.begin(), names.end(), opt.scene) == names.end()) {
    throw UsageError("unknown scene '" + opt.scene + "'");
  }
  if (opt.out.empty()) throw UsageError("--out is required");
  sim::SimulationConfig cfg;
  cfg.seed = opt.seed;
  const Dataset d = sim::generateDataset(sim::makeScene(opt.scene), cfg);
  try {
    writeDataset(d, opt.out);
  } catch (const ParseError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  return d;
}

namespace {

struct ConfigKey {
  std::string name;
  std::function<void(PipelineConfig&, const std::string&, double)> apply;
  bool numeric = true;
};

std::vector<ConfigKey> configTable() {
  const auto positive = [](const std::string& key, double v) {
    if (!(v > 0.0)) throw ConfigError(key + " must be positive");
  };
  const auto count = [](const std::string& key, double v) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError(key + " must be a positive integer");
    return static_cast<int>(v);
  };
  std::vector<ConfigKey> t;
  const auto add = [&](std::string name, std::function<void(PipelineConfig&, double)> f) {
    t.push_back({name, [f](PipelineConfig& c, const std::string&, double v) { f(c, v); }, true});
  };
  t.push_back({"mode", [](PipelineConfig& c, const std::string& s, double) { c.mode = parseMode(s); }, false});
  add("scan_stride", [=](PipelineConfig& c, double v) { c.scan_stride = count("scan_stride", v); });
  add("reorder_tolerance", [=](PipelineConfig& c, double v) {
    if (v < 0.0) throw ConfigError("reorder_tolerance must be non-negative");
    c.reorder_tolerance = v;
  });
  add("init_duration", [=](PipelineConfig& c, double v) { positive("init_duration", v); c.init_duration = v; });
  add("init_gyro_threshold", [=](PipelineConfig& c, double v) {
    positive("init_gyro_threshold", v);
    c.init_gyro_threshold = v;
  });
  add("undistortion.max_imu_gap", [=](PipelineConfig& c, double v) {
    positive("undistortion.max_imu_gap", v);
    c.undistortion.max_imu_gap = v;
  });
  add("kdtree.resolution", [=](PipelineConfig& c, double v) {
    positive("kdtree.resolution", v);
    c.kdtree.downsample_resolution = v;
  });
  add("kdtree.delete_ratio", [=](PipelineConfig& c, double v) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError("kdtree.delete_ratio must be in (0, 1)");
    c.kdtree.delete_ratio = v;
  });
  add("kdtree.balance_ratio", [=](PipelineConfig& c, double v) {
    if (!(v >= 0.5 && v < 1.0)) throw ConfigError("kdtree.balance_ratio must be in [0.5, 1)");
    c.kdtree.balance_ratio = v;
  });
  add("lidar.max_iterations", [=](PipelineConfig& c, double v) {
    c.lidar.iteration.max_iterations = count("lidar.max_iterations", v);
  });
  add("lidar.eps_rot", [=](PipelineConfig& c, double v) { positive("lidar.eps_rot", v); c.lidar.iteration.eps_rot = v; });
  add("lidar.eps_pos", [=](PipelineConfig& c, double v) { positive("lidar.eps_pos", v); c.lidar.iteration.eps_pos = v; });
  add("lidar.min_terms", [=](PipelineConfig& c, double v) { c.lidar.min_terms = count("lidar.min_terms", v); });
  add("lidar.plane_max_dist", [=](PipelineConfig& c, double v) {
    positive("lidar.plane_max_dist", v);
    c.lidar.measurement.plane_max_dist = v;
  });
  add("lidar.residual_gate", [=](PipelineConfig& c, double v) {
    positive("lidar.residual_gate", v);
    c.lidar.measurement.residual_gate = v;
  });
  add("lidar.point_sigma", [=](PipelineConfig& c, double v) {
    positive("lidar.point_sigma", v);
    c.lidar.measurement.point_sigma = v;
  });
  add("lidar.max_neighbor_dist", [=](PipelineConfig& c, double v) {
    positive("lidar.max_neighbor_dist", v);
    c.lidar.measurement.max_neighbor_dist = v;
  });
  add("visual.max_iterations", [=](PipelineConfig& c, double v) {
    c.visual.iteration.max_iterations = count("visual.max_iterations", v);
  });
  add("visual.pixel_sigma", [=](PipelineConfig& c, double v) {
    positive("visual.pixel_sigma", v);
    c.visual.measurement.pixel_sigma = v;
  });
  add("visual.voxel_size", [=](PipelineConfig& c, double v) {
    positive("visual.voxel_size", v);
    c.visual_map.voxel_size = v;
  });
  add("visual.grid_size", [=](PipelineConfig& c, double v) { c.visual_map.grid_size = count("visual.grid_size", v); });
  add("visual.occlusion_margin", [=](PipelineConfig& c, double v) {
    positive("visual.occlusion_margin", v);
    c.visual_map.occlusion_margin = v;
  });
  add("visual.gradient_threshold", [=](PipelineConfig& c, double v) {
    if (v < 0.0) throw ConfigError("visual.gradient_threshold must be non-negative");
    c.visual_map.gradient_threshold = v;
  });
  add("visual.curvature_threshold", [=](PipelineConfig& c, double v) {
    positive("visual.curvature_threshold", v);
    c.visual_map.curvature_threshold = v;
  });
  add("visual.add_patch_error_threshold", [=](PipelineConfig& c, double v) {
    positive("visual.add_patch_error_threshold", v);
    c.visual_map.add_patch_error_threshold = v;
  });
  return t;
}

double parseConfigNumber(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": invalid number '" + value + "'");
  }
  return v;
}

template <typename Fn>
auto asIoError(Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

}  // namespace

std::vector<std::string> runConfigKeys() {
  std::vector<std::string> out;
  for (const auto& k : configTable()) out.push_back(k.name);
  return out;
}

PipelineConfig loadRunConfig(const fs::path& config, const DatasetCalibration& calib) {
  PipelineConfig cfg;
  cfg.sensors = calib.sensors;
  cfg.noise = calib.noise;
  if (config.empty()) return cfg;
  const auto table = configTable();
  for (const auto& [key, kv] : readKeyValueFile(config)) {
    const auto it = std::find_if(table.begin(), table.end(), [&](const ConfigKey& k) { return k.name == key; });
    const std::string where = config.string() + ":" + std::to_string(kv.line) + ": ";
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->apply(cfg, kv.value, it->numeric ? parseConfigNumber(key, kv.value) : 0.0);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

std::vector<TrajectoryRecord> replay(const Dataset& d, Pipeline& pipeline) {
  std::vector<TrajectoryRecord> records;
  for (const Measurement& m : mergedStream(d)) {
    auto r = pipeline.process(m);
    records.insert(records.end(), r.begin(), r.end());
  }
  auto r = pipeline.flush();
  records.insert(records.end(), r.begin(), r.end());
  return records;
}

void writeTrajectory(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
  std::vector<StampedPose> poses;
  poses.reserve(records.size());
  for (const auto& r : records) poses.push_back({r.timestamp, r.rot_GI, r.pos_GI});
  writeTum(os, poses);
}

void writeDiagnosticsCsv(std::ostream& os, const std::vector<UpdateDiagnostics>& diagnostics) {
  os << "t,kind,iterations,converged,degenerate,status,terms,final_cost,submap_points,accepted_points,"
        "added_points,added_patches,preprocess_ms,update_ms,map_ms,cost_history\n";
  char buf[512];
  for (const auto& d : diagnostics) {
    std::snprintf(buf, sizeof(buf), "%.6f,%s,%d,%d,%d,%d,%zu,%.6g,%zu,%zu,%zu,%zu,%.3f,%.3f,%.3f,",
                  d.timestamp, d.kind == UpdateKind::kLidar ? "lidar" : "visual", d.iterations,
                  d.converged ? 1 : 0, d.degenerate ? 1 : 0, static_cast<int>(d.status), d.terms, d.final_cost,
                  d.submap_points, d.accepted_points, d.added_points, d.added_patches, d.preprocess_ms, d.update_ms,
                  d.map_ms);
    os << buf;
    for (std::size_t i = 0; i < d.cost_history.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.6g", i ? ";" : "", d.cost_history[i]);
      os << buf;
    }
    os << '\n';
  }
}

RunSummary cmdRun(const RunOptions& opt) {
  if (opt.out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  if (fs::exists(opt.out) && fs::equivalent(opt.out, opt.dataset, ec)) {
    throw UsageError("--out must not be the dataset directory");
  }
  const Dataset d = readDataset(opt.dataset);
  PipelineConfig cfg = loadRunConfig(opt.config, d.calib);
  if (opt.mode) cfg.mode = *opt.mode;

  Pipeline pipeline(cfg);
  const auto records = replay(d, pipeline);

  RunSummary summary;
  summary.records = records.size();
  summary.counters = pipeline.counters();
  summary.trajectory = opt.out / "trajectory.txt";
  summary.diagnostics = opt.out / "diagnostics.csv";
  asIoError([&] {
    fs::create_directories(opt.out);
    std::ofstream traj(summary.trajectory, std::ios::binary | std::ios::trunc);
    std::ofstream diag(summary.diagnostics, std::ios::binary | std::ios::trunc);
    if (!traj || !diag) throw std::runtime_error("cannot write into " + opt.out.string());
    writeTrajectory(traj, records);
    writeDiagnosticsCsv(diag, pipeline.diagnostics());
    if (!traj || !diag) throw std::runtime_error("write failed in " + opt.out.string());
    return 0;
  });
  return summary;
}

AteReport cmdEval(const EvalOptions& opt) {
  const auto est = readTum(opt.trajectory);
  auto gt = readTum(opt.groundtruth);
  std::stable_sort(gt.begin(), gt.end(),
                   [](const StampedPose& a, const StampedPose& b) { return a.timestamp < b.timestamp; });
  AteReport report = computeAte(est, gt, opt.ate);
  if (!opt.out_csv.empty()) {
    asIoError([&] {
      if (opt.out_csv.has_parent_path()) fs::create_directories(opt.out_csv.parent_path());
      std::ofstream os(opt.out_csv, std::ios::binary | std::ios::trunc);
      if (!os) throw std::runtime_error("cannot write " + opt.out_csv.string());
      writeAteCsv(os, report);
      return 0;
    });
  }
  return report;
}

int runMain(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LiDAR-inertial-visual odometry toolkit"};
  app.require_subcommand(1);

  SimOptions sim_opt;
  auto* sim = app.add_subcommand("sim", "generate a synthetic dataset");
  sim->add_option("scene", sim_opt.scene, "box_room | single_wall | textureless_wall | occluder")->required();
  sim->add_option("--seed", sim_opt.seed, "random seed");
  sim->add_option("--out", sim_opt.out, "output dataset directory")->required();

  RunOptions run_opt;
  std::string mode;
  auto* run = app.add_subcommand("run", "run odometry on a dataset");
  run->add_option("dataset", run_opt.dataset, "dataset directory")->required();
  run->add_option("--mode", mode, "lio | vio | livo");
  run->add_option("--config", run_opt.config, "key = value overrides");
  run->add_option("--seed", run_opt.seed, "recorded for provenance");
  run->add_option("--out", run_opt.out, "output directory")->required();

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "absolute trajectory error against ground truth");
  eval->add_option("trajectory", eval_opt.trajectory, "TUM trajectory")->required();
  eval->add_option("groundtruth", eval_opt.groundtruth, "TUM ground truth")->required();
  eval->add_option("--out", eval_opt.out_csv, "per-sample error CSV");
  eval->add_option("--max-gap", eval_opt.ate.max_time_gap, "association gap, seconds");
  eval->add_flag("!--no-align", eval_opt.ate.align_first_pose, "skip first-pose alignment");

  std::string validate_dir;
  auto* validate = app.add_subcommand("validate", "check a dataset directory");
  validate->add_option("dataset", validate_dir, "dataset directory")->required();

  const auto fail = [&](const char* category, const std::string& msg, int code) {
    err << "error: " << category << ": " << msg << '\n';
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*sim) {
      const Dataset d = cmdSim(sim_opt);
      out << "wrote " << sim_opt.out.string() << ": " << d.imu.size() << " IMU samples, " << d.scans.size()
          << " scans, " << d.images.size() << " images\n";
    } else if (*run) {
      if (!mode.empty()) run_opt.mode = parseMode(mode);
      const RunSummary s = cmdRun(run_opt);
      out << "records " << s.records << " (lidar " << s.counters.lidar_updates << ", visual "
          << s.counters.visual_updates << "), dropped " << s.counters.dropped_out_of_order + s.counters.dropped_failed
          << ", degenerate lidar " << s.counters.degenerate_lidar_updates << '\n';
      out << "trajectory " << s.trajectory.string() << '\n';
    } else if (*eval) {
      const AteReport r = cmdEval(eval_opt);
      char buf[256];
      std::snprintf(buf, sizeof(buf), "ate_rmse %.6f\nrmse_x %.6f\nrmse_y %.6f\nrmse_z %.6f\nmax %.6f\nsamples %zu\n",
                    r.rmse, r.rmse_axis.x(), r.rmse_axis.y(), r.rmse_axis.z(), r.max_error, r.samples.size());
      out << buf;
    } else if (*validate) {
      const auto problems = validateDataset(validate_dir);
      if (!problems.empty()) {
        for (const auto& p : problems) err << "invalid: " << p << '\n';
        return fail("validation", std::to_string(problems.size()) + " problem(s) in " + validate_dir, 8);
      }
      out << "ok\n";
    }
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("usage", e.what(), 2);
  } catch (const IoError& e) {
    return fail("io", e.what(), 3);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), 4);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 5);
  } catch (const InitializationError& e) {
    return fail("initialization", e.what(), 6);
  } catch (const EvaluationError& e) {
    return fail("evaluation", e.what(), 7);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}

}  // namespace livo::cli
