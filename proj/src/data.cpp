#include "diffmatte/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "diffmatte/image_io.hpp"
#include "diffmatte/trimap.hpp"

namespace diffmatte {

namespace {

constexpr float kAlphaCutoff = 1.0f / 512.0f;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Smooth lattice noise in [0, 1] over a size x size plane with `cells` lattice cells per side.
std::vector<double> value_noise(Rng& rng, int size, int cells) {
  std::vector<double> lattice(static_cast<std::size_t>(cells + 1) * (cells + 1));
  for (auto& v : lattice) v = uniform(rng, 0.0, 1.0);
  auto smooth = [](double f) { return f * f * (3.0 - 2.0 * f); };
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double gx = static_cast<double>(x) / size * cells;
      const double gy = static_cast<double>(y) / size * cells;
      const int ix = static_cast<int>(gx);
      const int iy = static_cast<int>(gy);
      const double fx = smooth(gx - ix);
      const double fy = smooth(gy - iy);
      auto at = [&](int a, int b) { return lattice[static_cast<std::size_t>(b) * (cells + 1) + a]; };
      const double top = at(ix, iy) * (1 - fx) + at(ix + 1, iy) * fx;
      const double bottom = at(ix, iy + 1) * (1 - fx) + at(ix + 1, iy + 1) * fx;
      out[static_cast<std::size_t>(y) * size + x] = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

struct Color {
  double r, g, b;
};

Color random_color(Rng& rng) { return {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)}; }

void stamp_super_ellipse(Rng& rng, int size, std::vector<double>& alpha) {
  const double s = size;
  const double cx = uniform(rng, 0.35 * s, 0.65 * s);
  const double cy = uniform(rng, 0.35 * s, 0.65 * s);
  const double ax = uniform(rng, 0.18 * s, 0.34 * s);
  const double ay = uniform(rng, 0.18 * s, 0.34 * s);
  const double theta = uniform(rng, 0.0, std::numbers::pi);
  const double power = uniform(rng, 1.5, 4.0);
  const double feather = uniform(rng, 0.6, 2.5);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double scale = std::min(ax, ay);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double u = (ct * dx + st * dy) / ax;
      const double v = (-st * dx + ct * dy) / ay;
      const double rho = std::pow(std::pow(std::abs(u), power) + std::pow(std::abs(v), power), 1.0 / power);
      const double d = (rho - 1.0) * scale;
      double a = d <= 0.0 ? 1.0 : std::exp(-0.5 * (d / feather) * (d / feather));
      if (a < kAlphaCutoff) a = 0.0;
      auto& dst = alpha[static_cast<std::size_t>(y) * size + x];
      dst = std::max(dst, a);
    }
  }
}

/// A jittered polyline grown outward from an opaque pixel, rendered with a Gaussian profile.
void stamp_strand(Rng& rng, int size, std::vector<double>& alpha) {
  std::vector<std::pair<int, int>> opaque;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (alpha[static_cast<std::size_t>(y) * size + x] >= 1.0) opaque.emplace_back(x, y);
  if (opaque.empty()) return;
  const auto [sx, sy] = opaque[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(opaque.size()) - 1))];
  const double center = 0.5 * size;
  double heading = std::atan2(sy + 0.5 - center, sx + 0.5 - center) + uniform(rng, -0.6, 0.6);
  const double length = uniform(rng, 0.15 * size, 0.35 * size);
  const double width = uniform(rng, 0.45, 1.0);
  const double opacity = uniform(rng, 0.35, 0.9);
  const double lo = 0.1 * size;
  const double hi = 0.9 * size;

  std::vector<std::pair<double, double>> pts{{sx + 0.5, sy + 0.5}};
  for (double travelled = 0.0; travelled < length; travelled += 1.0) {
    heading += uniform(rng, -0.25, 0.25);
    const double nx = pts.back().first + std::cos(heading);
    const double ny = pts.back().second + std::sin(heading);
    if (nx < lo || nx > hi || ny < lo || ny > hi) break;
    pts.emplace_back(nx, ny);
  }
  if (pts.size() < 2) return;
  const int reach = static_cast<int>(std::ceil(4.0 * width));
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const auto [x0, y0] = pts[k];
    const auto [x1, y1] = pts[k + 1];
    const int bx0 = std::max(0, static_cast<int>(std::min(x0, x1)) - reach);
    const int bx1 = std::min(size - 1, static_cast<int>(std::max(x0, x1)) + reach);
    const int by0 = std::max(0, static_cast<int>(std::min(y0, y1)) - reach);
    const int by1 = std::min(size - 1, static_cast<int>(std::max(y0, y1)) + reach);
    const double vx = x1 - x0;
    const double vy = y1 - y0;
    const double len2 = vx * vx + vy * vy;
    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        const double px = x + 0.5 - x0;
        const double py = y + 0.5 - y0;
        const double f = std::clamp((px * vx + py * vy) / len2, 0.0, 1.0);
        const double ex = px - f * vx;
        const double ey = py - f * vy;
        double a = opacity * std::exp(-0.5 * (ex * ex + ey * ey) / (width * width));
        if (a < kAlphaCutoff) continue;
        auto& dst = alpha[static_cast<std::size_t>(y) * size + x];
        dst = std::max(dst, a);
      }
    }
  }
}

Tensor<float> color_field(Rng& rng, int size, const Color& base, const Color& second, double noise_gain) {
  Tensor<float> out(1, 3, size, size);
  const auto noise = value_noise(rng, size, 4);
  const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(angle);
  const double gy = std::sin(angle);
  const double ch[2][3] = {{base.r, base.g, base.b}, {second.r, second.g, second.b}};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = std::clamp(0.5 + ((x + 0.5) / size - 0.5) * gx + ((y + 0.5) / size - 0.5) * gy, 0.0, 1.0);
      const double n = noise[static_cast<std::size_t>(y) * size + x] - 0.5;
      for (int c = 0; c < 3; ++c) {
        const double v = ch[0][c] * (1 - u) + ch[1][c] * u + noise_gain * n;
        out(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

void require_matching(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw DomainError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

Tensor<float> composite(const Tensor<float>& fg, const Tensor<float>& bg, const Tensor<float>& alpha) {
  fg.require_same_shape(bg, "composite");
  require_matching(fg, alpha, "composite");
  if (alpha.c() != 1) throw DomainError("composite: alpha must have one channel");
  Tensor<float> out(fg.shape());
  for (int n = 0; n < fg.n(); ++n)
    for (int c = 0; c < fg.c(); ++c)
      for (int y = 0; y < fg.h(); ++y)
        for (int x = 0; x < fg.w(); ++x) {
          const double a = alpha(n, 0, y, x);
          const double v = a * fg(n, c, y, x) + (1.0 - a) * bg(n, c, y, x);
          out(n, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
  return out;
}

ForegroundLayer gen_foreground(Rng& rng, int size) {
  if (size < 16 || size % 16 != 0) throw DomainError("gen_foreground: size must be a positive multiple of 16");
  std::vector<double> alpha(static_cast<std::size_t>(size) * size, 0.0);
  const int shapes = uniform_int(rng, 1, 4);
  for (int i = 0; i < shapes; ++i) stamp_super_ellipse(rng, size, alpha);
  const int strands = uniform_int(rng, 0, 6);
  for (int i = 0; i < strands; ++i) stamp_strand(rng, size, alpha);

  ForegroundLayer layer;
  layer.alpha = Tensor<float>(1, 1, size, size);
  for (std::size_t i = 0; i < alpha.size(); ++i) layer.alpha[i] = static_cast<float>(alpha[i]);
  const Color base = random_color(rng);
  const Color second = random_color(rng);
  layer.color = color_field(rng, size, base, second, 0.3);
  return layer;
}

Tensor<float> gen_background(Rng& rng, int size) {
  const Color a = random_color(rng);
  const Color b = random_color(rng);
  return color_field(rng, size, a, b, 0.4);
}

std::vector<bool> erode(const std::vector<bool>& mask, int h, int w, int radius) {
  std::vector<bool> rows(mask.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool keep = true;
      for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius) && keep; ++k) {
        keep = mask[static_cast<std::size_t>(y) * w + k];
      }
      rows[static_cast<std::size_t>(y) * w + x] = keep;
    }
  std::vector<bool> out(mask.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool keep = true;
      for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius) && keep; ++k) {
        keep = rows[static_cast<std::size_t>(k) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = keep;
    }
  return out;
}

TrimapResult make_trimap(const Tensor<float>& alpha, int radius) {
  if (radius < 1) throw DomainError("make_trimap: kernel radius must be >= 1");
  if (alpha.n() != 1 || alpha.c() != 1) throw DomainError("make_trimap: expected a single matte");
  const int h = alpha.h();
  const int w = alpha.w();
  std::vector<bool> fg(alpha.size());
  std::vector<bool> bg(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    fg[i] = alpha[i] >= 1.0f - 1e-6f;
    bg[i] = alpha[i] <= 1e-6f;
  }
  const auto fg_core = erode(fg, h, w, radius);
  const auto bg_core = erode(bg, h, w, radius);
  TrimapResult result;
  result.trimap = Tensor<float>(alpha.shape(), kTrimapUnknown);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (fg_core[i]) result.trimap[i] = kTrimapForeground;
    else if (bg_core[i]) result.trimap[i] = kTrimapBackground;
  }
  result.degenerate = count_unknown(result.trimap) == 0;
  return result;
}

SyntheticSample gen_sample(Rng& rng, int size, TrimapRadiusRange radii) {
  if (radii.lo < 1 || radii.hi < radii.lo) throw DomainError("gen_sample: bad trimap radius range");
  for (;;) {
    SyntheticSample s;
    auto layer = gen_foreground(rng, size);
    s.foreground = std::move(layer.color);
    s.alpha = std::move(layer.alpha);
    // Keep foreground and background distinguishable on average.
    do {
      s.background = gen_background(rng, size);
    } while ([&] {
      double diff = 0.0;
      for (std::size_t i = 0; i < s.background.size(); ++i) diff += std::abs(s.background[i] - s.foreground[i]);
      return diff / static_cast<double>(s.background.size()) < 0.15;
    }());
    s.image = composite(s.foreground, s.background, s.alpha);
    auto tri = make_trimap(s.alpha, uniform_int(rng, radii.lo, radii.hi));
    if (tri.degenerate) continue;
    s.trimap = std::move(tri.trimap);
    return s;
  }
}

Tensor<float> crop_plane(const Tensor<float>& t, int top, int left, int size, bool flip) {
  if (t.empty()) return {};
  if (top < 0 || left < 0 || top + size > t.h() || left + size > t.w()) throw DomainError("crop_plane: out of bounds");
  Tensor<float> out(t.n(), t.c(), size, size);
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const int sx = flip ? size - 1 - x : x;
          out(n, c, y, x) = t(n, c, top + y, left + sx);
        }
  return out;
}

SyntheticSample random_crop_flip(const SyntheticSample& sample, int crop, Rng& rng) {
  const int h = sample.alpha.h();
  const int w = sample.alpha.w();
  if (crop < 1 || crop > h || crop > w) {
    throw DomainError("random_crop_flip: crop " + std::to_string(crop) + " exceeds " + sample.alpha.shape().str());
  }
  int top = (h - crop) / 2;
  int left = (w - crop) / 2;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const int y = uniform_int(rng, 0, h - crop);
    const int x = uniform_int(rng, 0, w - crop);
    if (count_unknown(crop_plane(sample.trimap, y, x, crop, false)) > 0) {
      top = y;
      left = x;
      break;
    }
  }
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  SyntheticSample out;
  out.foreground = crop_plane(sample.foreground, top, left, crop, flip);
  out.background = crop_plane(sample.background, top, left, crop, flip);
  out.alpha = crop_plane(sample.alpha, top, left, crop, flip);
  out.image = crop_plane(sample.image, top, left, crop, flip);
  out.trimap = crop_plane(sample.trimap, top, left, crop, flip);
  return out;
}

std::string dataset_index_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return buf;
}

void save_dataset_item(const std::filesystem::path& dir, int index, const SyntheticSample& sample) {
  const std::string id = dataset_index_name(index);
  write_ppm(dir / ("image_" + id + ".ppm"), sample.image, 255);
  write_pgm(dir / ("alpha_" + id + ".pgm16"), sample.alpha, 65535);
  write_pgm(dir / ("trimap_" + id + ".pgm"), sample.trimap, 255);
}

std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string file = entry.path().filename().string();
    if (file.starts_with("image_") && file.ends_with(".ppm")) ids.push_back(file.substr(6, file.size() - 10));
  }
  std::sort(ids.begin(), ids.end());
  std::vector<DatasetItem> items;
  for (const auto& id : ids) {
    DatasetItem item;
    item.name = id;
    item.image = read_ppm(dir / ("image_" + id + ".ppm"));
    item.alpha = read_pgm(dir / ("alpha_" + id + ".pgm16"));
    item.trimap = snap_trimap(read_pgm(dir / ("trimap_" + id + ".pgm")));
    if (!(item.alpha.shape() == item.trimap.shape()) || item.image.h() != item.alpha.h() ||
        item.image.w() != item.alpha.w()) {
      throw DomainError("dataset item " + id + ": image, alpha and trimap extents disagree");
    }
    items.push_back(std::move(item));
  }
  return items;
}

SyntheticSample to_sample(const DatasetItem& item) {
  SyntheticSample s;
  s.image = item.image;
  s.alpha = item.alpha;
  s.trimap = item.trimap;
  return s;
}

}  // namespace diffmatte
