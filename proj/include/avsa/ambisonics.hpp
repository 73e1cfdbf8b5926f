#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "avsa/error.hpp"
#include "avsa/rng.hpp"
#include "avsa/sphere.hpp"

namespace avsa {

// First-order ambisonics, ACN channel order (W, Y, Z, X), SN3D
// normalization. Channels are stored as four equal-length sample rows.
struct AmbisonicClip {
  std::vector<double> w, y, z, x;
  double sample_rate = 0.0;

  size_t length() const { return w.size(); }

  std::vector<double>& channel(int acn) {
    switch (acn) {
      case 0: return w;
      case 1: return y;
      case 2: return z;
      default: return x;
    }
  }
  const std::vector<double>& channel(int acn) const {
    return const_cast<AmbisonicClip*>(this)->channel(acn);
  }
};

inline AmbisonicClip make_silent_clip(size_t n, double sample_rate) {
  AmbisonicClip c;
  c.sample_rate = sample_rate;
  c.w.assign(n, 0.0);
  c.y.assign(n, 0.0);
  c.z.assign(n, 0.0);
  c.x.assign(n, 0.0);
  return c;
}

// SN3D point-source encoding: W = s, Y = s cos(phi) sin(theta),
// Z = s sin(phi), X = s cos(phi) cos(theta).
inline AmbisonicClip foa_encode(const std::vector<double>& signal, const Direction& d,
                                double sample_rate) {
  const Vec3 u = direction_to_unit_vector(d);
  AmbisonicClip c;
  c.sample_rate = sample_rate;
  const size_t n = signal.size();
  c.w = signal;
  c.y.resize(n);
  c.z.resize(n);
  c.x.resize(n);
  for (size_t i = 0; i < n; ++i) {
    c.x[i] = signal[i] * u[0];
    c.y[i] = signal[i] * u[1];
    c.z[i] = signal[i] * u[2];
  }
  return c;
}

inline void accumulate(AmbisonicClip& acc, const AmbisonicClip& add) {
  if (acc.length() != add.length()) throw ShapeError("accumulate: clip length mismatch");
  for (size_t i = 0; i < acc.length(); ++i) {
    acc.w[i] += add.w[i];
    acc.y[i] += add.y[i];
    acc.z[i] += add.z[i];
    acc.x[i] += add.x[i];
  }
}

// First-order rotation: W is untouched, the (X, Y, Z) dipole vector of each
// sample transforms by r in Cartesian component order.
inline AmbisonicClip rotate_foa(const AmbisonicClip& clip, const Rotation3& r) {
  AmbisonicClip out;
  out.sample_rate = clip.sample_rate;
  out.w = clip.w;
  const size_t n = clip.length();
  out.x.resize(n);
  out.y.resize(n);
  out.z.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double vx = clip.x[i], vy = clip.y[i], vz = clip.z[i];
    out.x[i] = r.m[0] * vx + r.m[1] * vy + r.m[2] * vz;
    out.y[i] = r.m[3] * vx + r.m[4] * vy + r.m[5] * vz;
    out.z[i] = r.m[6] * vx + r.m[7] * vy + r.m[8] * vz;
  }
  return out;
}

// Rotate the global frame so the frontal direction points toward d: a
// source physically at d becomes frontal.
inline AmbisonicClip realign_to_viewpoint(const AmbisonicClip& clip, const Direction& d) {
  return rotate_foa(clip, rotation_yaw_pitch(d.theta, d.phi).inverse());
}

// Virtual-cardioid decode toward d: 0.5 (W + u . (X,Y,Z)). A frontal unit
// source decodes to exactly its signal; the antipode decodes to zero.
inline std::vector<double> decode_mono(const AmbisonicClip& clip, const Direction& d) {
  const Vec3 u = direction_to_unit_vector(d);
  std::vector<double> out(clip.length());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * (clip.w[i] + u[0] * clip.x[i] + u[1] * clip.y[i] + u[2] * clip.z[i]);
  return out;
}

// Horizontal virtual cardioids at +-90 degrees: L = 0.5(W + Y), R = 0.5(W - Y).
inline std::pair<std::vector<double>, std::vector<double>> decode_stereo(
    const AmbisonicClip& clip) {
  std::vector<double> left(clip.length()), right(clip.length());
  for (size_t i = 0; i < clip.length(); ++i) {
    left[i] = 0.5 * (clip.w[i] + clip.y[i]);
    right[i] = 0.5 * (clip.w[i] - clip.y[i]);
  }
  return {std::move(left), std::move(right)};
}

// Pure-yaw misalignment with |yaw| >= min_yaw, uniform over the admissible
// set [-pi, -min_yaw] u [min_yaw, pi]. Returns the yaw used.
inline std::pair<AmbisonicClip, double> yaw_perturb(const AmbisonicClip& clip,
                                                    double min_yaw, Rng& rng) {
  if (!(min_yaw > 0.0 && min_yaw < kPi))
    throw ConfigError("yaw_perturb: min_yaw must be in (0, pi)");
  double mag = rng.uniform(min_yaw, kPi);
  double yaw = rng.bernoulli(0.5) ? mag : -mag;
  return {rotate_foa(clip, rotation_yaw(yaw)), yaw};
}

}  // namespace avsa
