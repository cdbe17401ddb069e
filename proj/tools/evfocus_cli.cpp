// Command-line driver: synthetic data generation, sequential angular-velocity
// estimation with per-loss error tables, optical-flow loss surfaces, depth
// focal curves and semi-dense maps, gradient checks, and timing benchmarks.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 gradcheck failure.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evfocus/evfocus.hpp"

namespace fs = std::filesystem;
using namespace evfocus;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitGradcheck = 3;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw DataError("cannot open output file " + (dir / name).string());
  return out;
}

std::vector<double> parse_numbers(const std::string& s, size_t expect) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.size() != expect)
    throw CLI::ValidationError("expected " + std::to_string(expect) + " comma-separated values: " + s);
  return out;
}

struct GeometryFlags {
  int width = 240, height = 180;
  double fx = -1, fy = -1, cx = -1, cy = -1;  // unset: derived from the sensor size
  double k1 = 0, k2 = 0, p1 = 0, p2 = 0, k3 = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--width", width, "sensor width, px");
    cmd->add_option("--height", height, "sensor height, px");
    cmd->add_option("--fx", fx, "focal length, px (default: 199 * width / 240)");
    cmd->add_option("--fy", fy, "focal length, px (default: 198 * height / 180)");
    cmd->add_option("--cx", cx, "principal point (default: width / 2)");
    cmd->add_option("--cy", cy, "principal point (default: height / 2)");
    cmd->add_option("--k1", k1);
    cmd->add_option("--k2", k2);
    cmd->add_option("--p1", p1);
    cmd->add_option("--p2", p2);
    cmd->add_option("--k3", k3);
  }

  CameraGeometry build() const {
    return CameraGeometry(width, height, fx > 0 ? fx : 199.0 * width / 240.0,
                          fy > 0 ? fy : 198.0 * height / 180.0, cx >= 0 ? cx : width / 2.0,
                          cy >= 0 ? cy : height / 2.0, k1, k2, p1, p2, k3);
  }
};

struct CommonFlags {
  std::string events_path, calib_path, poses_path, out_dir;
  std::string loss_names = "variance";
  std::string polarity = "off";
  std::string tref = "mid";
  size_t n_events = 30000;
  size_t stride = 0;  // 0 = n_events
  std::uint64_t seed = 0;
  double epsilon = 1.0;
  int radius = 3;
  std::string splat = "gaussian";
  int bins = 200;
  double sigma_bins = 5.0;
  double sigma_local = 3.0;
  double sigma_moran = 1.0;
  unsigned threads = 0;  // 0: hardware concurrency

  void add_io(CLI::App* cmd, bool need_events) {
    cmd->add_option("--threads", threads, "worker threads (0: hardware concurrency)");
    auto* ev = cmd->add_option("--events", events_path, "events.txt path");
    if (need_events) ev->required();
    cmd->add_option("--calib", calib_path, "calib.txt path (fx fy cx cy k1 k2 p1 p2 k3)");
    cmd->add_option("--poses", poses_path, "groundtruth.txt path");
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--seed", seed, "random seed");
  }

  void add_loss_params(CLI::App* cmd) {
    cmd->add_option("--loss", loss_names, "loss name list or 'all'");
    cmd->add_option("--polarity", polarity, "on|off: use event polarity in the IWE")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--epsilon", epsilon, "splat kernel sigma, px");
    cmd->add_option("--radius", radius, "splat truncation radius, px");
    cmd->add_option("--splat", splat, "gaussian|bilinear")
        ->check(CLI::IsMember({"gaussian", "bilinear"}));
    cmd->add_option("--bins", bins, "histogram bins (entropy/range)");
    cmd->add_option("--sigma-bins", sigma_bins, "histogram smoothing, bins");
    cmd->add_option("--sigma-local", sigma_local, "local-statistics kernel sigma, px");
    cmd->add_option("--sigma-moran", sigma_moran, "autocorrelation weight sigma, px");
  }

  void add_processing(CLI::App* cmd) {
    add_loss_params(cmd);
    cmd->add_option("--n-events", n_events, "events per window");
    cmd->add_option("--stride", stride, "window stride in events (default: n-events)");
    cmd->add_option("--t-ref", tref, "reference time: mid|first|last")
        ->check(CLI::IsMember({"mid", "first", "last"}));
  }

  TRefPolicy tref_policy() const {
    if (tref == "first") return TRefPolicy::First;
    if (tref == "last") return TRefPolicy::Last;
    return TRefPolicy::Midpoint;
  }

  IweOptions iwe_options() const {
    IweOptions o;
    o.use_polarity = polarity == "on";
    o.epsilon = epsilon;
    o.radius = radius;
    o.splat = splat == "bilinear" ? SplatKind::Bilinear : SplatKind::GaussianTruncated;
    return o;
  }

  std::vector<LossSpec> losses() const {
    std::vector<LossSpec> out;
    if (loss_names == "all") {
      out = all_loss_specs();
    } else {
      std::stringstream ss(loss_names);
      std::string tok;
      while (std::getline(ss, tok, ',')) out.push_back(LossSpec::from_name(tok));
    }
    for (LossSpec& spec : out) {
      spec.bins = bins;
      spec.sigma_bins = sigma_bins;
      spec.sigma_local = sigma_local;
      spec.sigma_moran = sigma_moran;
    }
    if (out.empty()) throw CLI::ValidationError("no losses selected");
    return out;
  }
};

EventStream load_events_checked(const std::string& path, const CameraGeometry& g) {
  if (!fs::exists(path)) throw DataError("events file not found: " + path);
  return load_events(path, g);
}

CameraGeometry geometry_from_flags(const GeometryFlags& gf, const std::string& calib_path) {
  if (calib_path.empty()) return gf.build();
  if (!fs::exists(calib_path)) throw DataError("calib file not found: " + calib_path);
  return load_calib(calib_path, gf.width, gf.height);
}

PoseTrack load_poses_checked(const std::string& path) {
  if (!fs::exists(path)) throw DataError("poses file not found: " + path);
  return load_poses(path);
}

constexpr double kRad2Deg = 180.0 / M_PI;

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  std::string motion = "flow";
  std::string omega = "0,0,2.0";
  std::string flow = "-40,0";
  std::string camera_velocity = "0.3,0,0";
  double plane_depth = 1.1;
  double duration = 0.2;
  double rate = 100000.0;  // total events / s
  int elements = 81;
  double jitter_xy = 0.0, jitter_t = 0.0, outliers = 0.0;
};

int cmd_synth(const CommonFlags& common, const GeometryFlags& gf, const SynthFlags& sf) {
  const CameraGeometry geom = gf.build();
  SceneSpec scene;
  const int nx = std::max(2, int(std::lround(std::sqrt(double(sf.elements)))));
  scene.elements = grid_pattern(geom, nx, nx, 0.12 * std::min(gf.width, gf.height));
  if (sf.motion == "rotation") {
    scene.motion = WarpKind::Rotation;
    const auto w = parse_numbers(sf.omega, 3);
    scene.omega = {w[0], w[1], w[2]};
  } else if (sf.motion == "flow") {
    scene.motion = WarpKind::Flow;
    const auto v = parse_numbers(sf.flow, 2);
    scene.flow = {v[0], v[1]};
  } else if (sf.motion == "depth") {
    scene.motion = WarpKind::Depth;
    scene.plane_depth = sf.plane_depth;
    const auto v = parse_numbers(sf.camera_velocity, 3);
    scene.camera_velocity = {v[0], v[1], v[2]};
  } else {
    throw CLI::ValidationError("unknown motion: " + sf.motion);
  }
  scene.duration = sf.duration;
  scene.rate_per_element = sf.rate / double(scene.elements.size());
  scene.jitter_xy = sf.jitter_xy;
  scene.jitter_t = sf.jitter_t;
  scene.outlier_fraction = sf.outliers;

  const SynthResult res = gen_events(scene, geom, common.seed);
  fs::create_directories(common.out_dir);
  save_events((fs::path(common.out_dir) / "events.txt").string(), res.window.events);
  save_calib((fs::path(common.out_dir) / "calib.txt").string(), geom);
  save_poses((fs::path(common.out_dir) / "groundtruth.txt").string(), res.poses);
  auto truth = open_out(common.out_dir, "truth.csv");
  truth << "motion,p0,p1,p2\n";
  const Eigen::VectorXd th = res.truth.to_vector();
  truth << sf.motion;
  for (int i = 0; i < 3; ++i) truth << "," << (i < th.size() ? fmt9(th[i]) : std::string());
  truth << "\n";
  std::printf("synth: %zu events -> %s\n", res.window.events.size(), common.out_dir.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// angvel

struct AngvelFlags {
  int max_iters = 100;
  double grad_tol = 1e-5;
  double step_tol = 1e-8;
  double init_step = 0.05;  // rad/s
  std::string cg = "pr+";
};

bool polarity_degenerate(const LossSpec& spec, bool use_polarity) {
  return !use_polarity && (spec.kind == LossKind::Mav || spec.kind == LossKind::LocalMav);
}

int cmd_angvel(const CommonFlags& common, const GeometryFlags& gf, const AngvelFlags& af) {
  const auto losses = common.losses();
  const CameraGeometry geom = geometry_from_flags(gf, common.calib_path);
  const EventStream stream = load_events_checked(common.events_path, geom);
  PoseTrack poses;
  if (!common.poses_path.empty()) poses = load_poses_checked(common.poses_path);

  const size_t stride = common.stride == 0 ? common.n_events : common.stride;
  const auto windows = slice_by_count(stream.events, common.n_events, stride, common.tref_policy());
  const IweFrame frame{geom.width, geom.height, 0.0, 0.0};
  const IweOptions opts = common.iwe_options();

  OptimConfig cfg;
  cfg.variant = af.cg == "fr" ? CgVariant::FletcherReeves : CgVariant::PolakRibierePlus;
  cfg.max_iterations = af.max_iters;
  cfg.gradient_tolerance = af.grad_tol;
  cfg.step_tolerance = af.step_tol;
  cfg.initial_step = af.init_step;

  auto errors = open_out(common.out_dir, "errors.csv");
  errors << "window,t_mid,loss,polarity,est_wx,est_wy,est_wz,gt_wx,gt_wy,gt_wz,"
            "err_x_deg,err_y_deg,err_z_deg\n";
  auto summary = open_out(common.out_dir, "summary.csv");
  summary << "loss,polarity,windows,rms_x_deg,rms_y_deg,rms_z_deg,mean_deg,std_deg,rms_deg\n";
  const std::string pol = opts.use_polarity ? "on" : "off";
  if (windows.empty()) return kExitOk;  // headers only

  for (const LossSpec& spec : losses) {
    if (polarity_degenerate(spec, opts.use_polarity)) {
      summary << spec.name() << "," << pol << ",0,-,-,-,-,-,-\n";
      continue;
    }
    Eigen::Vector3d theta = Eigen::Vector3d::Zero();  // first window starts at rest
    std::vector<double> errs;  // pooled per-axis errors, deg/s
    double se_x = 0, se_y = 0, se_z = 0;
    size_t with_gt = 0;
    for (size_t wi = 0; wi < windows.size(); ++wi) {
      const EventWindow& w = windows[wi];
      Objective obj(w, WarpModel::rotation(geom), spec, frame, opts);
      const OptimResult res = maximize(obj, theta, cfg);
      theta = res.theta;  // sequential initialization
      const double t_mid = 0.5 * (w.t_begin() + w.t_end());
      errors << wi << "," << fmt9(t_mid) << "," << spec.name() << "," << pol;
      for (int i = 0; i < 3; ++i) errors << "," << fmt9(res.theta[i]);
      if (poses.covers(t_mid)) {
        const Eigen::Vector3d gt = poses.angular_velocity(t_mid);
        const Eigen::Vector3d err = (res.theta - gt) * kRad2Deg;
        for (int i = 0; i < 3; ++i) errors << "," << fmt9(gt[i]);
        for (int i = 0; i < 3; ++i) errors << "," << fmt9(err[i]);
        se_x += err.x() * err.x();
        se_y += err.y() * err.y();
        se_z += err.z() * err.z();
        errs.insert(errs.end(), {err.x(), err.y(), err.z()});
        ++with_gt;
      } else {
        errors << ",,,,,,";  // no ground truth at this time
      }
      errors << "\n";
    }
    if (with_gt == 0) {
      summary << spec.name() << "," << pol << ",0,,,,,,\n";
      continue;
    }
    double mean = 0;
    for (double e : errs) mean += e;
    mean /= double(errs.size());
    double var = 0, sq = 0;
    for (double e : errs) {
      var += (e - mean) * (e - mean);
      sq += e * e;
    }
    var /= double(errs.size());
    summary << spec.name() << "," << pol << "," << with_gt << ","
            << fmt9(std::sqrt(se_x / double(with_gt))) << ","
            << fmt9(std::sqrt(se_y / double(with_gt))) << ","
            << fmt9(std::sqrt(se_z / double(with_gt))) << "," << fmt9(mean) << ","
            << fmt9(std::sqrt(var)) << "," << fmt9(std::sqrt(sq / double(errs.size()))) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// flow-surface

struct FlowSurfaceFlags {
  std::string patch;  // x0,y0,x1,y1
  std::string center = "0,0";
  double span = 60.0;
  int steps = 41;
  double t0 = -1.0, t1 = -1.0;
  bool dump_best_iwe = false;
};

int cmd_flow_surface(const CommonFlags& common, const GeometryFlags& gf,
                     const FlowSurfaceFlags& ff) {
  const auto losses = common.losses();
  const CameraGeometry geom = geometry_from_flags(gf, common.calib_path);
  const EventStream stream = load_events_checked(common.events_path, geom);

  double x0 = 0, y0 = 0, x1 = geom.width - 1.0, y1 = geom.height - 1.0;
  if (!ff.patch.empty()) {
    const auto p = parse_numbers(ff.patch, 4);
    x0 = p[0];
    y0 = p[1];
    x1 = p[2];
    y1 = p[3];
  }
  std::vector<Event> selected;
  for (const Event& e : stream.events) {
    if (e.x < x0 || e.x > x1 || e.y < y0 || e.y > y1) continue;
    if (ff.t0 >= 0.0 && e.t < ff.t0) continue;
    if (ff.t1 >= 0.0 && e.t > ff.t1) continue;
    selected.push_back(e);
  }
  if (selected.empty()) throw DataError("no events in the requested patch/time window");
  const EventWindow window = make_window(std::move(selected), common.tref_policy());

  const auto c = parse_numbers(ff.center, 2);
  const double half_dt =
      std::max(window.t_ref - window.t_begin(), window.t_end() - window.t_ref);
  const double reach = (std::abs(c[0]) + std::abs(c[1]) + ff.span) * half_dt;
  const int margin = int(std::ceil(reach)) + common.radius + 1;
  IweFrame frame;
  frame.origin_x = x0 - margin;
  frame.origin_y = y0 - margin;
  frame.width = int(std::ceil(x1 - x0)) + 2 * margin + 1;
  frame.height = int(std::ceil(y1 - y0)) + 2 * margin + 1;
  const IweOptions opts = common.iwe_options();

  // one IWE per grid cell, shared by all losses
  const int steps = ff.steps;
  const Eigen::Vector2d center(c[0], c[1]);
  std::vector<std::vector<double>> values(losses.size(),
                                          std::vector<double>(size_t(steps) * steps, 0.0));
  std::vector<ImageGrid> best_iwe(ff.dump_best_iwe ? losses.size() : 0);
  const double step = 2.0 * ff.span / double(steps - 1);
  parallel_for(
      size_t(steps) * steps,
      [&](size_t cell) {
        const int row = int(cell) / steps, col = int(cell) % steps;
        const Eigen::Vector2d v(center.x() - ff.span + col * step,
                                center.y() - ff.span + row * step);
        const WarpParams p = WarpParams::flow_of(v);
        const auto iwe = accumulate_iwe(window, WarpModel::flow(), p, frame, opts);
        TimestampImage ts;
        bool has_ts = false;
        for (size_t li = 0; li < losses.size(); ++li) {
          double val;
          try {
            if (losses[li].kind == LossKind::MeanTimestamp) {
              if (!has_ts) {
                ts = timestamp_image(window, WarpModel::flow(), p, frame, opts);
                has_ts = true;
              }
              val = mean_timestamp_loss(ts);
            } else if (losses[li].kind == LossKind::Area && opts.use_polarity) {
              IweOptions o = opts;
              o.polarity_select = +1;
              val = evaluate_loss(accumulate_iwe(window, WarpModel::flow(), p, frame, o).image,
                                  losses[li]);
              o.polarity_select = -1;
              val += evaluate_loss(accumulate_iwe(window, WarpModel::flow(), p, frame, o).image,
                                   losses[li]);
            } else {
              val = evaluate_loss(iwe.image, losses[li]);
            }
          } catch (const std::domain_error&) {
            val = std::numeric_limits<double>::quiet_NaN();
          }
          values[li][cell] = val;
        }
      },
      common.threads);

  auto best_of = [&](size_t li) {
    const Sense sense = losses[li].sense();
    int best = -1;
    for (int i = 0; i < steps * steps; ++i) {
      const double v = values[li][size_t(i)];
      if (!std::isfinite(v)) continue;
      const bool better = best < 0 || (sense == Sense::Maximize ? v > values[li][size_t(best)]
                                                                : v < values[li][size_t(best)]);
      if (better) best = i;
    }
    return std::max(best, 0);
  };

  auto summary = open_out(common.out_dir, "surfaces_summary.csv");
  summary << "loss,sense,best_vx,best_vy,best_value\n";
  for (size_t li = 0; li < losses.size(); ++li) {
    const std::string name = losses[li].name();
    auto csv = open_out(common.out_dir, "surface_" + name + ".csv");
    csv << "vy_px_s\\vx_px_s";
    for (int col = 0; col < steps; ++col) csv << "," << fmt9(center.x() - ff.span + col * step);
    csv << "\n";
    double vmax = values[li][0];
    for (double v : values[li]) vmax = std::max(vmax, v);
    for (int row = 0; row < steps; ++row) {
      csv << fmt9(center.y() - ff.span + row * step);
      for (int col = 0; col < steps; ++col)
        csv << "," << fmt9(values[li][size_t(row) * steps + col]);
      csv << "\n";
    }
    auto ncsv = open_out(common.out_dir, "surface_" + name + "_normalized.csv");
    ncsv << "vy_px_s\\vx_px_s";
    for (int col = 0; col < steps; ++col) ncsv << "," << fmt9(center.x() - ff.span + col * step);
    ncsv << "\n";
    for (int row = 0; row < steps; ++row) {
      ncsv << fmt9(center.y() - ff.span + row * step);
      for (int col = 0; col < steps; ++col) {
        const double v = values[li][size_t(row) * steps + col];
        ncsv << "," << fmt9(vmax != 0.0 ? v / vmax : v);
      }
      ncsv << "\n";
    }
    ImageGrid surface(steps, steps);
    surface.values.assign(values[li].begin(), values[li].end());
    save_pgm((fs::path(common.out_dir) / ("surface_" + name + ".pgm")).string(), surface);

    const int best = best_of(li);
    const int bc = best % steps, br = best / steps;
    const Eigen::Vector2d vbest(center.x() - ff.span + bc * step, center.y() - ff.span + br * step);
    summary << name << "," << (losses[li].sense() == Sense::Maximize ? "max" : "min") << ","
            << fmt9(vbest.x()) << "," << fmt9(vbest.y()) << "," << fmt9(values[li][size_t(best)])
            << "\n";
    if (ff.dump_best_iwe) {
      const auto iwe =
          accumulate_iwe(window, WarpModel::flow(), WarpParams::flow_of(vbest), frame, opts);
      save_pfm((fs::path(common.out_dir) / ("iwe_" + name + ".pfm")).string(), iwe.image);
      if (has_local_score(losses[li].kind)) {
        const ImageGrid local = local_score_map(iwe.image, losses[li]);
        save_pfm((fs::path(common.out_dir) / ("localmap_" + name + ".pfm")).string(), local);
      }
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// depth

struct DepthFlags {
  double z_min = 0.5, z_max = 2.5;
  int z_steps = 50;
  std::string spacing = "inverse";
  double ref_time = -1.0;
  double patch_sigma = 0.8;
  double min_count = 3.0;
  double keep_percent = 30.0;
  bool no_median = false;
  std::string pixel;  // "x,y" for the focal-curve dump; default: frame center
};

ImageGrid median3(const ImageGrid& im, const ImageGrid& valid) {
  ImageGrid out = im;
  std::vector<double> nb;
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      if (valid.at(x, y) == 0.0) continue;
      nb.clear();
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (im.contains(x + dx, y + dy) && valid.at(x + dx, y + dy) != 0.0)
            nb.push_back(im.at(x + dx, y + dy));
      std::sort(nb.begin(), nb.end());
      out.at(x, y) = nb[nb.size() / 2];
    }
  return out;
}

int cmd_depth(const CommonFlags& common, const GeometryFlags& gf, const DepthFlags& df) {
  const auto losses = common.losses();
  for (const LossSpec& spec : losses)
    if (!supports_local_score(spec.kind))
      throw CLI::ValidationError("loss has no per-pixel focus score for depth maps: " +
                                 spec.name());
  const CameraGeometry geom = geometry_from_flags(gf, common.calib_path);
  const EventStream stream = load_events_checked(common.events_path, geom);
  if (common.poses_path.empty()) throw CLI::ValidationError("depth requires --poses");
  const PoseTrack poses = load_poses_checked(common.poses_path);
  if (stream.events.empty()) throw DataError("no events");

  EventWindow window = make_window(stream.events, common.tref_policy());
  const double ref_time = df.ref_time >= 0.0 ? df.ref_time : window.t_ref;
  if (!poses.covers(ref_time)) throw DataError("reference time outside the pose track");
  const PoseSample ref_pose = poses.interpolate(ref_time);
  const WarpModel model = WarpModel::depth(geom, poses, ref_pose);

  fs::create_directories(common.out_dir);
  const auto depths = depth_samples(df.z_min, df.z_max, df.z_steps,
                                    df.spacing == "linear" ? DepthSpacing::Linear
                                                           : DepthSpacing::InverseDepth);
  const IweFrame frame{geom.width, geom.height, 0.0, 0.0};
  const IweOptions opts = common.iwe_options();
  const auto patch_kernel = gaussian_kernel_1d(df.patch_sigma, 1);  // 3x3 patch weights

  // score[loss][slice] = per-pixel patch focus map; occupancy for validity
  const size_t n_px = size_t(geom.width) * geom.height;
  std::vector<std::vector<ImageGrid>> score(losses.size(),
                                            std::vector<ImageGrid>(depths.size()));
  std::vector<ImageGrid> occupancy(depths.size());
  parallel_for(
      depths.size(),
      [&](size_t zi) {
        const auto iwe =
            accumulate_iwe(window, model, WarpParams::depth_of(depths[zi]), frame, opts);
        occupancy[zi] = convolve_cols(convolve_rows(iwe.image, {1, 1, 1}), {1, 1, 1});
        for (size_t li = 0; li < losses.size(); ++li)
          score[li][zi] = patch_score_map(iwe.image, losses[li], patch_kernel);
      },
      common.threads);

  // per-pixel extremal slice -> depth, confidence, validity
  for (size_t li = 0; li < losses.size(); ++li) {
    const Sense sense = losses[li].sense();
    ImageGrid depth_map(geom.width, geom.height);
    ImageGrid confidence(geom.width, geom.height);
    ImageGrid valid(geom.width, geom.height);
    std::vector<double> confs;
    for (size_t px = 0; px < n_px; ++px) {
      size_t best = 0;
      for (size_t zi = 1; zi < depths.size(); ++zi) {
        const bool better = sense == Sense::Maximize
                                ? score[li][zi].values[px] > score[li][best].values[px]
                                : score[li][zi].values[px] < score[li][best].values[px];
        if (better) best = zi;
      }
      depth_map.values[px] = depths[best];
      confidence.values[px] = score[li][best].values[px];
      if (occupancy[best].values[px] >= df.min_count) {
        valid.values[px] = 1.0;
        confs.push_back(confidence.values[px]);
      }
    }
    // keep the top keep_percent% of valid pixels by confidence
    if (!confs.empty() && df.keep_percent < 100.0) {
      std::sort(confs.begin(), confs.end());
      const double cut_rank = (1.0 - df.keep_percent / 100.0) * double(confs.size() - 1);
      const double cut = sense == Sense::Maximize
                             ? confs[size_t(cut_rank)]
                             : confs[confs.size() - 1 - size_t(cut_rank)];
      for (size_t px = 0; px < n_px; ++px) {
        const bool keep = sense == Sense::Maximize ? confidence.values[px] >= cut
                                                   : confidence.values[px] <= cut;
        if (!keep) valid.values[px] = 0.0;
      }
    }
    if (!df.no_median) depth_map = median3(depth_map, valid);
    for (size_t px = 0; px < n_px; ++px)
      if (valid.values[px] == 0.0) depth_map.values[px] = 0.0;  // invalid marker

    const std::string suffix = losses.size() == 1 ? "" : "_" + losses[li].name();
    save_pfm((fs::path(common.out_dir) / ("depth" + suffix + ".pfm")).string(), depth_map);
    save_pfm((fs::path(common.out_dir) / ("confidence" + suffix + ".pfm")).string(), confidence);
    if (li == 0 && losses.size() > 1) {
      save_pfm((fs::path(common.out_dir) / "depth.pfm").string(), depth_map);
      save_pfm((fs::path(common.out_dir) / "confidence.pfm").string(), confidence);
    }
  }

  // focal curves at the selected pixel
  int px = geom.width / 2, py = geom.height / 2;
  if (!df.pixel.empty()) {
    const auto p = parse_numbers(df.pixel, 2);
    px = int(p[0]);
    py = int(p[1]);
    if (px < 0 || px >= geom.width || py < 0 || py >= geom.height)
      throw CLI::ValidationError("--pixel outside the sensor");
  }
  auto curves = open_out(common.out_dir, "focal_curves.csv");
  curves << "depth_m";
  for (const auto& spec : losses) curves << "," << spec.name() << "," << spec.name() << "_norm";
  curves << "\n";
  std::vector<std::pair<double, double>> ranges(losses.size(),
                                                {std::numeric_limits<double>::infinity(),
                                                 -std::numeric_limits<double>::infinity()});
  for (size_t li = 0; li < losses.size(); ++li)
    for (size_t zi = 0; zi < depths.size(); ++zi) {
      const double v = score[li][zi].at(px, py);
      ranges[li].first = std::min(ranges[li].first, v);
      ranges[li].second = std::max(ranges[li].second, v);
    }
  for (size_t zi = 0; zi < depths.size(); ++zi) {
    curves << fmt9(depths[zi]);
    for (size_t li = 0; li < losses.size(); ++li) {
      const double v = score[li][zi].at(px, py);
      const double span = ranges[li].second - ranges[li].first;
      curves << "," << fmt9(v) << ","
             << fmt9(span > 0.0 ? (v - ranges[li].first) / span : 0.0);
    }
    curves << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckFlags {
  int seeds = 10;
  size_t n_events = 1000;
  int size = 64;
  double h = 1e-4;
  double rel_tol = 1e-4;
  double abs_floor = 1e-6;
  double corrupt_scale = 1.0;
};

int cmd_gradcheck(const CommonFlags& common, const GradcheckFlags& gc) {
  const CameraGeometry geom(gc.size, gc.size, 0.9 * gc.size, 0.9 * gc.size, gc.size / 2.0,
                            gc.size / 2.0);
  auto csv = open_out(common.out_dir, "gradcheck.csv");
  csv << "loss,warp,seed,max_abs_err,max_rel_err,status\n";
  bool any_failed = false;
  const IweFrame frame{gc.size, gc.size, 0.0, 0.0};
  for (const char* warp_name : {"rotation", "flow"}) {
    const bool rot = std::string(warp_name) == "rotation";
    for (int seed = 0; seed < gc.seeds; ++seed) {
      SceneSpec scene;
      scene.elements = grid_pattern(geom, 6, 6, 0.2 * gc.size);
      scene.motion = rot ? WarpKind::Rotation : WarpKind::Flow;
      scene.omega = {0.4 + 0.1 * seed, -0.3, 1.0 + 0.05 * seed};
      scene.flow = {-25.0 + 2.0 * seed, 8.0 - seed};
      scene.duration = 0.05;
      scene.rate_per_element = double(gc.n_events) / (36.0 * scene.duration);
      const auto synth = gen_events(scene, geom, 1000 + std::uint64_t(seed));
      const WarpModel model = rot ? WarpModel::rotation(geom) : WarpModel::flow();
      // probe away from the optimum so gradients are informative
      Eigen::VectorXd at = synth.truth.to_vector();
      for (int i = 0; i < at.size(); ++i) at[i] *= 1.0 + 0.15 * ((seed + i) % 3 - 1);

      for (const LossSpec& spec : common.losses()) {
        if (!has_analytic_gradient(spec.kind)) {
          csv << spec.name() << "," << warp_name << "," << seed << ",,,fd-only\n";
          continue;
        }
        Objective obj(synth.window, model, spec, frame, {}, GradientMode::Analytic);
        Eigen::VectorXd g = obj.gradient(at);
        g *= gc.corrupt_scale;  // harness sensitivity hook
        const Eigen::VectorXd fd = Objective::finite_diff_gradient(
            [&](const Eigen::VectorXd& t) { return obj.value(t); }, at, gc.h);
        double max_abs = 0.0, max_rel = 0.0;
        bool ok = true;
        for (int i = 0; i < g.size(); ++i) {
          const double abs_err = std::abs(g[i] - fd[i]);
          max_abs = std::max(max_abs, abs_err);
          if (std::abs(fd[i]) > 0.0) max_rel = std::max(max_rel, abs_err / std::abs(fd[i]));
          if (abs_err > std::max(gc.rel_tol * std::abs(fd[i]), gc.abs_floor)) ok = false;
        }
        csv << spec.name() << "," << warp_name << "," << seed << "," << fmt9(max_abs) << ","
            << fmt9(max_rel) << "," << (ok ? "pass" : "failed") << "\n";
        if (!ok) any_failed = true;
      }
    }
  }
  return any_failed ? kExitGradcheck : kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchFlags {
  int reps = 100;
  size_t n_events = 30000;
};

template <class Fn>
double median_us(Fn&& fn, int reps) {
  std::vector<double> samples;
  samples.reserve(size_t(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

int cmd_bench(const CommonFlags& common, const GeometryFlags& gf, const BenchFlags& bf) {
  const CameraGeometry geom = gf.build();
  SceneSpec scene;
  scene.elements = grid_pattern(geom, 9, 9, 0.12 * std::min(gf.width, gf.height));
  scene.motion = WarpKind::Rotation;
  scene.omega = {0.5, -0.3, 2.0};
  scene.duration = 0.05;
  scene.rate_per_element = double(bf.n_events) / (81.0 * scene.duration);
  const auto synth = gen_events(scene, geom, common.seed + 7);
  const IweFrame frame{geom.width, geom.height, 0.0, 0.0};
  const IweOptions opts = common.iwe_options();
  const WarpModel model = WarpModel::rotation(geom);
  const WarpParams at = WarpParams::rotation(0.9 * scene.omega);

  auto csv = open_out(common.out_dir, "timing.csv");
  csv << "name,median_us,reps\n";
  volatile double sink = 0.0;
  const double warp_us = median_us(
      [&] { sink = sink + image_sum(accumulate_iwe(synth.window, model, at, frame, opts).image); },
      bf.reps);
  csv << "warp-accumulate," << fmt9(warp_us) << "," << bf.reps << "\n";

  const auto iwe = accumulate_iwe(synth.window, model, at, frame, opts);
  const auto ts = timestamp_image(synth.window, model, at, frame, opts);
  for (const LossSpec& spec : common.losses()) {
    double us;
    if (spec.kind == LossKind::MeanTimestamp)
      us = median_us([&] { sink = sink + mean_timestamp_loss(ts); }, bf.reps);
    else
      us = median_us([&] { sink = sink + evaluate_loss(iwe.image, spec); }, bf.reps);
    csv << spec.name() << "," << fmt9(us) << "," << bf.reps << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-camera motion compensation by focus maximization"};
  app.require_subcommand(1);

  CommonFlags common;
  GeometryFlags geometry;
  SynthFlags synthf;
  AngvelFlags angvelf;
  FlowSurfaceFlags flowf;
  DepthFlags depthf;
  GradcheckFlags gradf;
  BenchFlags benchf;

  auto* synth = app.add_subcommand("synth", "generate a synthetic event dataset");
  common.add_io(synth, false);
  geometry.add_to(synth);
  synth->add_option("--motion", synthf.motion, "rotation|flow|depth")
      ->check(CLI::IsMember({"rotation", "flow", "depth"}));
  synth->add_option("--omega", synthf.omega, "angular velocity, rad/s (rotation)");
  synth->add_option("--flow", synthf.flow, "optical flow, px/s (flow)");
  synth->add_option("--plane-depth", synthf.plane_depth, "scene plane depth, m (depth)");
  synth->add_option("--camera-velocity", synthf.camera_velocity, "m/s (depth)");
  synth->add_option("--duration", synthf.duration, "s");
  synth->add_option("--rate", synthf.rate, "total event rate, ev/s");
  synth->add_option("--elements", synthf.elements, "pattern element count");
  synth->add_option("--jitter-xy", synthf.jitter_xy, "coordinate noise sigma, px");
  synth->add_option("--jitter-t", synthf.jitter_t, "timestamp noise sigma, s");
  synth->add_option("--outliers", synthf.outliers, "outlier fraction [0,1)");

  auto* angvel = app.add_subcommand("angvel", "sequential angular-velocity estimation");
  common.add_io(angvel, true);
  geometry.add_to(angvel);
  common.add_processing(angvel);
  angvel->add_option("--max-iters", angvelf.max_iters);
  angvel->add_option("--grad-tol", angvelf.grad_tol);
  angvel->add_option("--step-tol", angvelf.step_tol);
  angvel->add_option("--init-step", angvelf.init_step, "line-search first step, rad/s");
  angvel->add_option("--cg", angvelf.cg, "pr+|fr")->check(CLI::IsMember({"pr+", "fr"}));

  auto* flow = app.add_subcommand("flow-surface", "loss surfaces over optical flow");
  common.add_io(flow, true);
  geometry.add_to(flow);
  common.add_processing(flow);
  flow->add_option("--patch", flowf.patch, "patch rectangle x0,y0,x1,y1 (px)");
  flow->add_option("--center", flowf.center, "grid center vx,vy (px/s)");
  flow->add_option("--span", flowf.span, "half span around the center (px/s)");
  flow->add_option("--steps", flowf.steps, "grid steps per axis");
  flow->add_option("--t0", flowf.t0, "window start time, s");
  flow->add_option("--t1", flowf.t1, "window end time, s");
  flow->add_flag("--dump-best-iwe", flowf.dump_best_iwe,
                 "write the IWE and local score map at the best cell");

  auto* depth = app.add_subcommand("depth", "focal curves and semi-dense depth maps");
  common.add_io(depth, true);
  geometry.add_to(depth);
  common.add_processing(depth);
  depth->add_option("--z-min", depthf.z_min);
  depth->add_option("--z-max", depthf.z_max);
  depth->add_option("--z-steps", depthf.z_steps);
  depth->add_option("--spacing", depthf.spacing, "inverse|linear")
      ->check(CLI::IsMember({"inverse", "linear"}));
  depth->add_option("--ref-time", depthf.ref_time, "reference view time, s");
  depth->add_option("--patch-sigma", depthf.patch_sigma, "3x3 patch weight sigma, px");
  depth->add_option("--min-count", depthf.min_count, "minimum events per patch");
  depth->add_option("--keep-percent", depthf.keep_percent, "confidence percentile kept");
  depth->add_flag("--no-median", depthf.no_median, "skip the 3x3 median filter");
  depth->add_option("--pixel", depthf.pixel, "focal-curve pixel x,y (default: center)");

  auto* grad = app.add_subcommand("gradcheck", "analytic-vs-FD gradient verification");
  common.add_io(grad, false);
  common.add_loss_params(grad);
  grad->add_option("--seeds", gradf.seeds);
  grad->add_option("--n-events", gradf.n_events);
  grad->add_option("--size", gradf.size, "IWE side length, px");
  grad->add_option("--fd-step", gradf.h, "finite-difference step");
  grad->add_option("--rel-tol", gradf.rel_tol);
  grad->add_option("--abs-floor", gradf.abs_floor);
  grad->add_option("--corrupt-scale", gradf.corrupt_scale)->group("");  // test hook

  auto* bench = app.add_subcommand("bench", "warp and loss timing");
  common.add_io(bench, false);
  geometry.add_to(bench);
  common.add_loss_params(bench);
  bench->add_option("--reps", benchf.reps);
  bench->add_option("--n-events", benchf.n_events);

  // gradcheck/bench measure synthetic windows; loss default is the full set
  grad->callback([&] {
    if (grad->count("--loss") == 0) common.loss_names = "all";
  });
  bench->callback([&] {
    if (bench->count("--loss") == 0) common.loss_names = "all";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, geometry, synthf);
    if (angvel->parsed()) return cmd_angvel(common, geometry, angvelf);
    if (flow->parsed()) return cmd_flow_surface(common, geometry, flowf);
    if (depth->parsed()) return cmd_depth(common, geometry, depthf);
    if (grad->parsed()) return cmd_gradcheck(common, gradf);
    if (bench->parsed()) return cmd_bench(common, geometry, benchf);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
