#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "avsa/error.hpp"
#include "avsa/rng.hpp"

namespace avsa {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Viewing angle on the unit sphere. theta is longitude in [-pi, pi),
// positive toward +y (leftward); phi is latitude in [-pi/2, pi/2],
// positive upward. Frontal axis is +x.
struct Direction {
  double theta = 0.0;
  double phi = 0.0;

  Direction() = default;
  Direction(double theta_, double phi_) {
    theta = std::remainder(theta_, 2.0 * kPi);
    if (theta >= kPi) theta -= 2.0 * kPi;
    if (theta < -kPi) theta += 2.0 * kPi;
    phi = std::clamp(phi_, -kPi / 2.0, kPi / 2.0);
  }
};

using Vec3 = std::array<double, 3>;

inline Vec3 direction_to_unit_vector(const Direction& d) {
  const double cp = std::cos(d.phi);
  return {cp * std::cos(d.theta), cp * std::sin(d.theta), std::sin(d.phi)};
}

inline Direction unit_vector_to_direction(const Vec3& v) {
  return Direction(std::atan2(v[1], v[0]),
                   std::asin(std::clamp(v[2], -1.0, 1.0)));
}

// Proper rotation, row-major 3x3.
struct Rotation3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
            m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
  }

  Rotation3 transpose() const {
    Rotation3 r;
    r.m = {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
    return r;
  }

  // Orthogonal, so the inverse is the transpose.
  Rotation3 inverse() const { return transpose(); }

  friend Rotation3 operator*(const Rotation3& a, const Rotation3& b) {
    Rotation3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += a.m[3 * i + k] * b.m[3 * k + j];
        r.m[3 * i + j] = s;
      }
    return r;
  }
};

// Rotation taking the frontal axis (1,0,0) to Direction(yaw, pitch):
// yaw about +z composed after a pitch about +y.
inline Rotation3 rotation_yaw_pitch(double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  // Rz(yaw) * Ry(-pitch)
  Rotation3 r;
  r.m = {cy * cp, -sy, -cy * sp,
         sy * cp,  cy, -sy * sp,
         sp,      0.0, cp};
  return r;
}

inline Rotation3 rotation_yaw(double yaw) { return rotation_yaw_pitch(yaw, 0.0); }

inline double angular_distance(const Direction& a, const Direction& b) {
  const Vec3 u = direction_to_unit_vector(a);
  const Vec3 v = direction_to_unit_vector(b);
  const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  return std::acos(std::clamp(dot, -1.0, 1.0));
}

// Crop centers: pairwise separated, latitude-banded.
struct ViewpointSet {
  std::vector<Direction> directions;
  double min_separation = 0.0;
  double lat_bound = kPi / 2.0;
};

// Uniform-by-rejection over the latitude band: uniform theta, uniform
// sin(phi) within the band. Fails after a fixed budget of candidate draws
// when k points at min_sep cannot be packed.
inline ViewpointSet sample_viewpoints(int k, double min_sep, double lat_bound,
                                      Rng& rng, int budget = 10000) {
  if (k < 1) throw ConfigError("sample_viewpoints: k must be >= 1");
  ViewpointSet set;
  set.min_separation = min_sep;
  set.lat_bound = lat_bound;
  const double smax = std::sin(lat_bound);
  int attempts = 0;
  while (static_cast<int>(set.directions.size()) < k) {
    if (attempts++ >= budget)
      throw DataError("sample_viewpoints: infeasible configuration (k=" +
                      std::to_string(k) + ", min_sep=" + std::to_string(min_sep) +
                      " rad) after " + std::to_string(budget) + " attempts");
    Direction cand(rng.uniform(-kPi, kPi),
                   std::asin(rng.uniform(-smax, smax)));
    bool ok = true;
    for (const Direction& d : set.directions)
      if (angular_distance(cand, d) < min_sep) {
        ok = false;
        break;
      }
    if (ok) set.directions.push_back(cand);
  }
  return set;
}

// Full-sphere equirectangular frames, values in [0,1], W = 2H.
// Pixel (r, c) sits at phi = pi/2 - pi(r+0.5)/H, theta = -pi + 2pi(c+0.5)/W.
struct EquirectVideo {
  int frames = 0;
  int height = 0;
  int width = 0;
  double fps = 0.0;
  std::vector<float> data;  // frames*height*width*3, row-major RGB

  float& at(int t, int r, int c, int ch) {
    return data[((static_cast<size_t>(t) * height + r) * width + c) * 3 + ch];
  }
  float at(int t, int r, int c, int ch) const {
    return data[((static_cast<size_t>(t) * height + r) * width + c) * 3 + ch];
  }
};

inline EquirectVideo make_equirect(int frames, int height, double fps) {
  EquirectVideo v;
  v.frames = frames;
  v.height = height;
  v.width = 2 * height;
  v.fps = fps;
  v.data.assign(static_cast<size_t>(frames) * height * v.width * 3, 0.0f);
  return v;
}

// Bilinear sample with longitude wraparound and latitude clamping.
inline void equirect_sample(const EquirectVideo& v, int frame, double theta,
                            double phi, float out[3]) {
  const double col = (theta + kPi) * v.width / (2.0 * kPi) - 0.5;
  const double row = (kPi / 2.0 - phi) * v.height / kPi - 0.5;
  const double rc = std::clamp(row, 0.0, static_cast<double>(v.height - 1));
  int r0 = static_cast<int>(std::floor(rc));
  int r1 = std::min(r0 + 1, v.height - 1);
  double fr = rc - r0;
  double cf = col - std::floor(col / v.width) * v.width;  // wrap into [0, W)
  int c0 = static_cast<int>(std::floor(cf)) % v.width;
  int c1 = (c0 + 1) % v.width;
  double fc = cf - std::floor(cf);
  for (int ch = 0; ch < 3; ++ch) {
    const double top = (1 - fc) * v.at(frame, r0, c0, ch) + fc * v.at(frame, r0, c1, ch);
    const double bot = (1 - fc) * v.at(frame, r1, c0, ch) + fc * v.at(frame, r1, c1, ch);
    out[ch] = static_cast<float>((1 - fr) * top + fr * bot);
  }
}

// Normal field-of-view clip cut from an equirect video: len x height x width x 3.
struct NfovClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float& at(int t, int r, int c, int ch) {
    return data[((static_cast<size_t>(t) * height + r) * width + c) * 3 + ch];
  }
  float at(int t, int r, int c, int ch) const {
    return data[((static_cast<size_t>(t) * height + r) * width + c) * 3 + ch];
  }
};

// Direction seen by output pixel (r, c) of a gnomonic crop: tangent-plane
// ray (1, a, b) rotated so the plane center faces `center`. Columns run
// right (decreasing theta), rows run down (decreasing phi).
inline Direction gnomonic_pixel_direction(const Direction& center, double hfov,
                                          int out_h, int out_w, double r, double c) {
  const double half = std::tan(hfov / 2.0);
  const double a = half * (1.0 - 2.0 * (c + 0.5) / out_w);
  const double b = half * (static_cast<double>(out_h) / out_w) *
                   (1.0 - 2.0 * (r + 0.5) / out_h);
  const double n = std::sqrt(1.0 + a * a + b * b);
  const Vec3 ray{1.0 / n, a / n, b / n};
  return unit_vector_to_direction(rotation_yaw_pitch(center.theta, center.phi).apply(ray));
}

inline NfovClip gnomonic_project(const EquirectVideo& video, const Direction& center,
                                 double hfov, int out_h, int out_w,
                                 int frame_start, int frame_len) {
  if (!(hfov > 0.0 && hfov < kPi)) throw ConfigError("gnomonic_project: hfov out of (0, pi)");
  if (out_h <= 0 || out_w <= 0) throw ConfigError("gnomonic_project: non-positive out size");
  if (frame_start < 0 || frame_len <= 0 || frame_start + frame_len > video.frames)
    throw DataError("gnomonic_project: frame window out of range");
  NfovClip clip;
  clip.frames = frame_len;
  clip.height = out_h;
  clip.width = out_w;
  clip.data.resize(static_cast<size_t>(frame_len) * out_h * out_w * 3);
  // Directions are the same for every frame; compute once.
  std::vector<Direction> dirs(static_cast<size_t>(out_h) * out_w);
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < out_w; ++c)
      dirs[static_cast<size_t>(r) * out_w + c] =
          gnomonic_pixel_direction(center, hfov, out_h, out_w, r, c);
  for (int t = 0; t < frame_len; ++t)
    for (int r = 0; r < out_h; ++r)
      for (int c = 0; c < out_w; ++c) {
        const Direction& d = dirs[static_cast<size_t>(r) * out_w + c];
        float px[3];
        equirect_sample(video, frame_start + t, d.theta, d.phi, px);
        for (int ch = 0; ch < 3; ++ch) clip.at(t, r, c, ch) = px[ch];
      }
  return clip;
}

}  // namespace avsa
