#include "ncanet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "ncanet/errors.hpp"
#include "ncanet/image_io.hpp"
#include "ncanet/log.hpp"

namespace ncanet {

namespace fs = std::filesystem;

std::vector<RainPair> load_pairs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  struct Files {
    fs::path rainy, clean;
  };
  std::map<std::string, Files> by_id;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".png") {
      log_warning("skipping non-PNG file " + entry.path().string());
      continue;
    }
    const std::string stem = entry.path().stem().string();
    if (stem.starts_with("rain-")) {
      by_id[stem.substr(5)].rainy = entry.path();
    } else if (stem.starts_with("norain-")) {
      by_id[stem.substr(7)].clean = entry.path();
    } else {
      log_warning("skipping " + name + " (expected rain-<id>.png or norain-<id>.png)");
    }
  }
  std::vector<RainPair> pairs;
  for (const auto& [id, files] : by_id) {
    if (files.rainy.empty() || files.clean.empty())
      throw IoError("unmatched pair for id " + id + ": missing " +
                    (files.rainy.empty() ? "rain-" : "norain-") + id + ".png");
    RainPair p{read_png(files.rainy), read_png(files.clean), id};
    if (!(p.rainy.shape() == p.clean.shape()))
      throw IoError("size mismatch in pair " + id + ": rainy " + p.rainy.shape().str() + ", clean " +
                    p.clean.shape().str());
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void save_pairs(const fs::path& dir, const std::vector<RainPair>& pairs) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& p : pairs) {
    write_png(dir / ("rain-" + p.id + ".png"), p.rainy);
    write_png(dir / ("norain-" + p.id + ".png"), p.clean);
  }
}

void SynthRainSpec::validate() const {
  auto check = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string(name) + " range is empty");
  };
  check(angle_deg, "angle");
  check(length_px, "length");
  check(width_px, "width");
  check(intensity, "intensity");
  if (intensity.lo < 0.0 || intensity.hi > 1.0) throw std::invalid_argument("intensity must lie in [0, 1]");
  if (length_px.lo < 0.0 || width_px.lo <= 0.0) throw std::invalid_argument("streak length/width must be positive");
}

SynthRainSpec rain_preset(const std::string& name, std::size_t height, std::size_t width,
                          std::uint64_t seed) {
  Rng rng(seed);
  const double area = static_cast<double>(height * width);
  const double tilt = rng.uniform(-20.0, 20.0);
  SynthRainSpec s;
  s.seed = rng.next();
  s.angle_deg = {tilt - 4.0, tilt + 4.0};
  if (name == "light") {
    s.streak_count = static_cast<std::size_t>(std::lround(area / 200.0));
    s.length_px = {6.0, 14.0};
    s.width_px = {1.0, 1.5};
    s.intensity = {0.15, 0.35};
  } else if (name == "heavy") {
    s.streak_count = static_cast<std::size_t>(std::lround(area / 80.0));
    s.length_px = {10.0, 25.0};
    s.width_px = {1.0, 2.0};
    s.intensity = {0.3, 0.6};
  } else {
    throw std::invalid_argument("unknown rain preset '" + name + "' (light, heavy)");
  }
  return s;
}

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = ax + t * dx - px, ey = ay + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

SynthResult synth_rain(const Tensor<float>& clean, const SynthRainSpec& spec, std::string id) {
  spec.validate();
  if (clean.rank() != 3 || clean.numel() == 0)
    throw ShapeError("synth_rain: expected a non-empty C x H x W image, got " + clean.shape().str());
  const std::size_t C = clean.dim(0), H = clean.dim(1), W = clean.dim(2);
  std::vector<double> layer(H * W, 0.0);
  Rng rng(spec.seed);
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  for (std::size_t s = 0; s < spec.streak_count; ++s) {
    const double cx = rng.uniform(0.0, static_cast<double>(W));
    const double cy = rng.uniform(0.0, static_cast<double>(H));
    const double angle = rng.uniform(spec.angle_deg.lo, spec.angle_deg.hi) * kDegToRad;
    const double len = rng.uniform(spec.length_px.lo, spec.length_px.hi);
    const double width = rng.uniform(spec.width_px.lo, spec.width_px.hi);
    const double amp = rng.uniform(spec.intensity.lo, spec.intensity.hi);
    const double hx = 0.5 * len * std::sin(angle), hy = 0.5 * len * std::cos(angle);
    const double ax = cx - hx, ay = cy - hy, bx = cx + hx, by = cy + hy;
    const double reach = width / 2.0 + 0.5;
    const long x0 = std::max(0L, static_cast<long>(std::floor(std::min(ax, bx) - reach)));
    const long x1 = std::min(static_cast<long>(W) - 1, static_cast<long>(std::ceil(std::max(ax, bx) + reach)));
    const long y0 = std::max(0L, static_cast<long>(std::floor(std::min(ay, by) - reach)));
    const long y1 = std::min(static_cast<long>(H) - 1, static_cast<long>(std::ceil(std::max(ay, by) + reach)));
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        const double d = segment_distance(x + 0.5, y + 0.5, ax, ay, bx, by);
        const double cover = std::clamp(reach - d, 0.0, 1.0);
        if (cover > 0) {
          double& v = layer[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
          v = std::min(1.0, v + amp * cover);
        }
      }
  }

  SynthResult out;
  out.pair.clean = clean;
  out.pair.rainy = clean;
  out.pair.id = std::move(id);
  out.mask = Tensor<float>(Shape{1, H, W});
  for (std::size_t i = 0; i < H * W; ++i) {
    if (layer[i] < 1.0 / 512.0) continue;
    out.mask[i] = 1.0f;
    for (std::size_t c = 0; c < C; ++c) {
      float& v = out.pair.rainy[c * H * W + i];
      v = std::min(1.0f, v + static_cast<float>(layer[i]));
    }
  }
  return out;
}

Tensor<float> synth_clean(std::size_t channels, std::size_t height, std::size_t width, Rng& rng) {
  if (channels == 0 || height == 0 || width == 0) throw ShapeError("synth_clean: empty image");
  const std::size_t C = channels, H = height, W = width;
  Tensor<float> img(Shape{C, H, W});
  const double Hd = static_cast<double>(H), Wd = static_cast<double>(W);

  std::vector<double> base(C), gy(C), gx(C), tex(C);
  for (std::size_t c = 0; c < C; ++c) {
    base[c] = rng.uniform(0.25, 0.55);
    gy[c] = rng.uniform(-0.2, 0.2);
    gx[c] = rng.uniform(-0.2, 0.2);
    tex[c] = rng.uniform(0.0, 0.04);
  }
  const double fx = rng.uniform(0.5, 3.0) * 6.283185307179586 / Wd;
  const double fy = rng.uniform(0.5, 3.0) * 6.283185307179586 / Hd;
  const double phase = rng.uniform(0.0, 6.283185307179586);

  struct Blob {
    double cx, cy, rx, ry, softness;
    bool disc;
    std::vector<double> color;
  };
  std::vector<Blob> blobs(3 + rng.below(4));
  for (auto& b : blobs) {
    b.cx = rng.uniform(0.0, Wd);
    b.cy = rng.uniform(0.0, Hd);
    b.rx = rng.uniform(0.08, 0.3) * Wd;
    b.ry = rng.uniform(0.08, 0.3) * Hd;
    b.softness = rng.uniform(0.5, 2.5);
    b.disc = rng.uniform() < 0.5;
    b.color.resize(C);
    for (auto& v : b.color) v = rng.uniform(0.05, 0.85);
  }

  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double u = (x + 0.5) / Wd - 0.5, v = (y + 0.5) / Hd - 0.5;
      const double wave = std::sin(fx * x + phase) * std::cos(fy * y);
      for (std::size_t c = 0; c < C; ++c) {
        double val = base[c] + gx[c] * u + gy[c] * v + tex[c] * wave;
        for (const auto& b : blobs) {
          const double dx = (x + 0.5 - b.cx) / b.rx, dy = (y + 0.5 - b.cy) / b.ry;
          // signed distance in pixels, roughly: negative inside
          const double r = b.disc ? std::sqrt(dx * dx + dy * dy) : std::max(std::abs(dx), std::abs(dy));
          const double edge = (r - 1.0) * std::min(b.rx, b.ry);
          const double inside = 1.0 / (1.0 + std::exp(edge / b.softness));
          val = val * (1.0 - inside) + b.color[c] * inside;
        }
        img.at(c, y, x) = static_cast<float>(std::clamp(val, 0.05, 0.85));
      }
    }
  return img;
}

std::vector<SynthResult> synth_dataset(std::size_t count, std::size_t height, std::size_t width,
                                       const std::string& preset, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SynthResult> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor<float> clean = synth_clean(3, height, width, rng);
    const SynthRainSpec spec = rain_preset(preset, height, width, rng.next());
    char id[32];
    std::snprintf(id, sizeof id, "%03zu", i);
    out.push_back(synth_rain(clean, spec, id));
  }
  return out;
}

RainPair sample_patch(const RainPair& pair, std::size_t size, Rng& rng) {
  const Shape& s = pair.rainy.shape();
  if (s.rank() != 3 || !(s == pair.clean.shape())) throw ShapeError("sample_patch: malformed pair " + pair.id);
  const std::size_t C = s[0], H = s[1], W = s[2];
  if (size == 0 || H < size || W < size)
    throw ShapeError("sample_patch: image " + s.str() + " is smaller than the " + std::to_string(size) +
                     "px patch");
  const std::size_t oy = rng.below(H - size + 1), ox = rng.below(W - size + 1);
  RainPair out{Tensor<float>(Shape{C, size, size}), Tensor<float>(Shape{C, size, size}), pair.id};
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        out.rainy.at(c, y, x) = pair.rainy.at(c, oy + y, ox + x);
        out.clean.at(c, y, x) = pair.clean.at(c, oy + y, ox + x);
      }
  return out;
}

}  // namespace ncanet
