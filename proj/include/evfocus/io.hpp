#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evfocus/events.hpp"
#include "evfocus/geometry.hpp"
#include "evfocus/image.hpp"
#include "evfocus/poses.hpp"

namespace evfocus {

struct EventStream {
  std::vector<Event> events;
  size_t dropped_out_of_bounds = 0;
  size_t nonmonotonic = 0;  // warning count, not an error (sensors jitter)
};

/// events.txt: one event per line, "t x y p", p in {0,1} mapped to {-1,+1}.
inline EventStream load_events(const std::string& path, const CameraGeometry& geometry) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_events: cannot open " + path);
  EventStream out;
  std::string line;
  size_t lineno = 0;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double t;
    long x, y;
    int p;
    if (!(ss >> t >> x >> y >> p) || (p != 0 && p != 1)) {
      throw std::runtime_error("load_events: malformed line " + std::to_string(lineno) + " in " +
                               path);
    }
    std::string rest;
    if (ss >> rest)
      throw std::runtime_error("load_events: trailing data on line " + std::to_string(lineno));
    if (x < 0 || x >= geometry.width || y < 0 || y >= geometry.height) {
      ++out.dropped_out_of_bounds;
      continue;
    }
    if (t < prev_t) ++out.nonmonotonic;
    prev_t = t;
    out.events.push_back({t, double(x), double(y), std::int8_t(p == 1 ? 1 : -1)});
  }
  return out;
}

/// Fixed-precision serialization; polarity written back as {0,1}.
inline void save_events(const std::string& path, const std::vector<Event>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_events: cannot open " + path);
  char buf[96];
  for (const Event& e : events) {
    std::snprintf(buf, sizeof(buf), "%.9f %d %d %d\n", e.t, int(std::lround(e.x)),
                  int(std::lround(e.y)), e.polarity > 0 ? 1 : 0);
    out << buf;
  }
}

/// calib.txt: single line "fx fy cx cy k1 k2 p1 p2 k3". Sensor size is not in
/// the file and must be supplied by the caller.
inline CameraGeometry load_calib(const std::string& path, int width, int height) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_calib: cannot open " + path);
  double fx, fy, cx, cy, k1, k2, p1, p2, k3;
  if (!(in >> fx >> fy >> cx >> cy >> k1 >> k2 >> p1 >> p2 >> k3))
    throw std::runtime_error("load_calib: expected 9 values in " + path);
  return CameraGeometry(width, height, fx, fy, cx, cy, k1, k2, p1, p2, k3);
}

inline void save_calib(const std::string& path, const CameraGeometry& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_calib: cannot open " + path);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", g.fx, g.fy,
                g.cx, g.cy, g.k1, g.k2, g.p1, g.p2, g.k3);
  out << buf;
}

/// groundtruth.txt: one pose per line, "t tx ty tz qx qy qz qw".
inline PoseTrack load_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_poses: cannot open " + path);
  std::vector<PoseSample> samples;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("load_poses: malformed line " + std::to_string(lineno) + " in " +
                               path);
    PoseSample s;
    s.t = t;
    s.translation = {tx, ty, tz};
    s.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
    samples.push_back(s);
  }
  return PoseTrack(std::move(samples));
}

inline void save_poses(const std::string& path, const std::vector<PoseSample>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_poses: cannot open " + path);
  char buf[256];
  for (const PoseSample& s : samples) {
    std::snprintf(buf, sizeof(buf), "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", s.t,
                  s.translation.x(), s.translation.y(), s.translation.z(), s.rotation.x(),
                  s.rotation.y(), s.rotation.z(), s.rotation.w());
    out << buf;
  }
}

/// Min-max scaled 8-bit (or 16-bit) PGM, for eyeballing.
inline void save_pgm(const std::string& path, const ImageGrid& im, int bits = 8) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("save_pgm: bits must be 8 or 16");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
  const double lo = image_min(im), hi = image_max(im);
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  const int maxval = bits == 8 ? 255 : 65535;
  out << "P5\n" << im.width << " " << im.height << "\n" << maxval << "\n";
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      const double u = (im.at(x, y) - lo) * scale;
      const unsigned q = unsigned(std::lround(u * maxval));
      if (bits == 8) {
        out.put(char(q));
      } else {
        out.put(char(q >> 8));
        out.put(char(q & 0xff));
      }
    }
}

/// Float PFM (little-endian, bottom-to-top rows), lossless for tests.
inline void save_pfm(const std::string& path, const ImageGrid& im) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_pfm: cannot open " + path);
  out << "Pf\n" << im.width << " " << im.height << "\n-1.0\n";
  for (int y = im.height - 1; y >= 0; --y)
    for (int x = 0; x < im.width; ++x) {
      const float v = float(im.at(x, y));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

inline ImageGrid load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_pfm: cannot open " + path);
  std::string magic;
  int w, h;
  double scale;
  in >> magic >> w >> h >> scale;
  if (magic != "Pf" || w <= 0 || h <= 0) throw std::runtime_error("load_pfm: bad header");
  in.get();  // single whitespace after the scale
  ImageGrid im(w, h);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      im.at(x, y) = v;
    }
  if (!in) throw std::runtime_error("load_pfm: truncated data");
  return im;
}

}  // namespace evfocus
