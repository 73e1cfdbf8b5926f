#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "avsa/error.hpp"
#include "avsa/sphere.hpp"

namespace avsa {

// Raw equirect container: "EQRV" magic, then T, H, W as little-endian
// uint32 and fps as little-endian float32, then T*H*W*3 bytes of RGB.
inline constexpr char kEquirectMagic[4] = {'E', 'Q', 'R', 'V'};

namespace detail {
inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
inline void write_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}
inline float read_f32(std::istream& is) {
  uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}
}  // namespace detail

inline uint8_t float_to_u8(float x) {
  const float c = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
  return static_cast<uint8_t>(c * 255.0f + 0.5f);
}

// Compact in-memory form matching the on-disk payload.
struct EquirectU8 {
  int frames = 0, height = 0, width = 0;
  double fps = 0.0;
  std::vector<uint8_t> data;

  // Float view of a frame window, for projection.
  EquirectVideo slice(int frame_start, int frame_len) const {
    if (frame_start < 0 || frame_len <= 0 || frame_start + frame_len > frames)
      throw DataError("EquirectU8::slice: frame window out of range");
    EquirectVideo v;
    v.frames = frame_len;
    v.height = height;
    v.width = width;
    v.fps = fps;
    const size_t per_frame = static_cast<size_t>(height) * width * 3;
    v.data.resize(per_frame * frame_len);
    const uint8_t* src = data.data() + per_frame * frame_start;
    for (size_t i = 0; i < v.data.size(); ++i)
      v.data[i] = static_cast<float>(src[i]) * (1.0f / 255.0f);
    return v;
  }
};

inline EquirectU8 quantize_equirect(const EquirectVideo& v) {
  EquirectU8 q;
  q.frames = v.frames;
  q.height = v.height;
  q.width = v.width;
  q.fps = v.fps;
  q.data.resize(v.data.size());
  for (size_t i = 0; i < v.data.size(); ++i) q.data[i] = float_to_u8(v.data[i]);
  return q;
}

inline void write_equirect(const std::string& path, const EquirectU8& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_equirect: cannot open " + path);
  os.write(kEquirectMagic, 4);
  detail::write_u32(os, static_cast<uint32_t>(v.frames));
  detail::write_u32(os, static_cast<uint32_t>(v.height));
  detail::write_u32(os, static_cast<uint32_t>(v.width));
  detail::write_f32(os, static_cast<float>(v.fps));
  os.write(reinterpret_cast<const char*>(v.data.data()),
           static_cast<std::streamsize>(v.data.size()));
  if (!os) throw DataError("write_equirect: write failed for " + path);
}

inline EquirectU8 read_equirect(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_equirect: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kEquirectMagic, 4) != 0)
    throw DataError("read_equirect: bad magic in " + path);
  EquirectU8 v;
  v.frames = static_cast<int>(detail::read_u32(is));
  v.height = static_cast<int>(detail::read_u32(is));
  v.width = static_cast<int>(detail::read_u32(is));
  v.fps = detail::read_f32(is);
  if (v.width != 2 * v.height)
    throw DataError("read_equirect: width must equal 2*height in " + path);
  const size_t n = static_cast<size_t>(v.frames) * v.height * v.width * 3;
  v.data.resize(n);
  is.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(n));
  if (!is) throw DataError("read_equirect: truncated payload in " + path);
  return v;
}

// Convenience import: a directory of binary PPM (P6) frames, sorted by name.
inline EquirectU8 import_ppm_frames(const std::string& dir, double fps) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("import_ppm_frames: no .ppm files in " + dir);
  EquirectU8 v;
  v.fps = fps;
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    std::string tag;
    int w, h, maxval;
    is >> tag >> w >> h >> maxval;
    if (tag != "P6" || maxval != 255)
      throw DataError("import_ppm_frames: unsupported PPM " + f.string());
    is.get();  // single whitespace after header
    if (v.frames == 0) {
      v.height = h;
      v.width = w;
      if (w != 2 * h) throw DataError("import_ppm_frames: frame is not 2:1 " + f.string());
    } else if (w != v.width || h != v.height) {
      throw DataError("import_ppm_frames: inconsistent frame size " + f.string());
    }
    const size_t n = static_cast<size_t>(w) * h * 3;
    const size_t off = v.data.size();
    v.data.resize(off + n);
    is.read(reinterpret_cast<char*>(v.data.data() + off), static_cast<std::streamsize>(n));
    if (!is) throw DataError("import_ppm_frames: truncated " + f.string());
    ++v.frames;
  }
  return v;
}

}  // namespace avsa
