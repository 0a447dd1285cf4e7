#include "ircr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ircr/raster.hpp"
#include "ircr/seed.hpp"
#include "ircr/tensor_io.hpp"

namespace ircr::data {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxRejections = 1000;
constexpr std::size_t kMinRasterArea = 16;
constexpr std::size_t kMinFinalArea = 10;

void require_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw std::invalid_argument(std::string("scene config: ") + name + " range must be ordered");
  }
}

// Normal(mid, width/4) restricted to [lo, hi] by rejection.
double truncated_normal(std::mt19937_64& rng, const Range& r) {
  if (r.hi == r.lo) return r.lo;
  std::normal_distribution<double> dist(0.5 * (r.lo + r.hi), 0.25 * (r.hi - r.lo));
  for (;;) {
    const double v = dist(rng);
    if (v >= r.lo && v <= r.hi) return v;
  }
}

struct Ellipse {
  double cy = 0.0;
  double cx = 0.0;
  double a = 0.0;
  double b = 0.0;
  double theta = 0.0;
  double intensity = 0.0;
  std::vector<std::size_t> pixels;
  std::vector<double> dist;  // normalized radial distance per pixel
};

void rasterize(Ellipse& e, std::size_t size) {
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  const auto r0 = static_cast<std::ptrdiff_t>(std::floor(e.cy - e.a - 1.0));
  const auto r1 = static_cast<std::ptrdiff_t>(std::ceil(e.cy + e.a + 1.0));
  const auto c0 = static_cast<std::ptrdiff_t>(std::floor(e.cx - e.a - 1.0));
  const auto c1 = static_cast<std::ptrdiff_t>(std::ceil(e.cx + e.a + 1.0));
  const auto n = static_cast<std::ptrdiff_t>(size);
  for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(r0, 0); r <= std::min(r1, n - 1); ++r) {
    for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(c0, 0); c <= std::min(c1, n - 1); ++c) {
      const double dy = static_cast<double>(r) - e.cy;
      const double dx = static_cast<double>(c) - e.cx;
      const double u = (dx * ct + dy * st) / e.a;
      const double v = (-dx * st + dy * ct) / e.b;
      const double d = u * u + v * v;
      if (d <= 1.0) {
        e.pixels.push_back(static_cast<std::size_t>(r * n + c));
        e.dist.push_back(d);
      }
    }
  }
}

std::size_t shared_pixels(const Ellipse& a, const Ellipse& b) {
  std::size_t n = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.pixels.size() && j < b.pixels.size()) {
    if (a.pixels[i] < b.pixels[j]) {
      ++i;
    } else if (b.pixels[j] < a.pixels[i]) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

// Keeps the largest 4-connected piece of every label; smaller pieces become background.
void keep_largest_components(std::vector<std::int32_t>& owner, std::size_t size, std::size_t count) {
  for (std::size_t k = 0; k < count; ++k) {
    BinaryMask m(size, size);
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (owner[p] == static_cast<std::int32_t>(k)) m.set(p, true);
    }
    const InstanceLabelMap cc = raster::connected_components(m);
    if (cc.max_label() <= 1) continue;
    const auto areas = cc.areas();
    const auto best = static_cast<std::int32_t>(std::max_element(areas.begin() + 1, areas.end()) - areas.begin());
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (cc[p] > 0 && cc[p] != best) owner[p] = -1;
    }
  }
}

std::string field(const std::string& prefix, std::int64_t id) { return prefix + "_" + std::to_string(id); }

}  // namespace

void SceneConfig::validate() const {
  if (size == 0 || size % 4 != 0) throw std::invalid_argument("scene config: size must be a positive multiple of 4");
  if (nuclei_count_range[0] > nuclei_count_range[1]) throw std::invalid_argument("scene config: nuclei count range must be ordered");
  require_range(radius_range, "radius");
  require_range(eccentricity_range, "eccentricity");
  require_range(intensity_range, "intensity");
  if (radius_range.lo <= 0.0) throw std::invalid_argument("scene config: radius must be positive");
  if (eccentricity_range.lo < 0.0 || eccentricity_range.hi >= 1.0) {
    throw std::invalid_argument("scene config: eccentricity must be in [0,1)");
  }
  if (intensity_range.lo < 0.0 || intensity_range.hi > 1.0) throw std::invalid_argument("scene config: intensity must be in [0,1]");
  if (overlap_fraction < 0.0 || overlap_fraction > 1.0) throw std::invalid_argument("scene config: overlap_fraction must be in [0,1]");
  if (noise_sigma < 0.0) throw std::invalid_argument("scene config: noise_sigma must be >= 0");
  if (2.0 * radius_range.hi + 3.0 >= static_cast<double>(size)) throw std::invalid_argument("scene config: radius too large for size");
}

Tensor hv_from_labels(const InstanceLabelMap& labels) {
  const std::size_t h = labels.height();
  const std::size_t w = labels.width();
  const auto k = static_cast<std::size_t>(std::max(labels.max_label(), 0));
  const std::vector<raster::Point> cent = raster::centroids(labels);
  std::vector<double> max_dc(k + 1, 0.0);
  std::vector<double> max_dr(k + 1, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::int32_t l = labels.at(r, c);
      if (l <= 0) continue;
      const auto li = static_cast<std::size_t>(l);
      max_dc[li] = std::max(max_dc[li], std::abs(static_cast<double>(c) - cent[li].col));
      max_dr[li] = std::max(max_dr[li], std::abs(static_cast<double>(r) - cent[li].row));
    }
  }
  Tensor hv = Tensor::stack(2, h, w);
  const std::size_t plane = h * w;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::int32_t l = labels.at(r, c);
      if (l <= 0) continue;
      const auto li = static_cast<std::size_t>(l);
      const std::size_t p = r * w + c;
      if (max_dc[li] > 0.0) hv[p] = (static_cast<double>(c) - cent[li].col) / max_dc[li];
      if (max_dr[li] > 0.0) hv[plane + p] = (static_cast<double>(r) - cent[li].row) / max_dr[li];
    }
  }
  return hv;
}

Scene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.size;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> count_dist(cfg.nuclei_count_range[0], cfg.nuclei_count_range[1]);
  const std::size_t target = count_dist(rng);

  std::vector<Ellipse> placed;
  std::size_t rejections = 0;
  while (placed.size() < target && rejections < kMaxRejections) {
    Ellipse e;
    e.a = truncated_normal(rng, cfg.radius_range);
    const double ecc = std::uniform_real_distribution<double>(cfg.eccentricity_range.lo,
                                                              std::nextafter(cfg.eccentricity_range.hi, 1.0))(rng);
    e.b = e.a * std::sqrt(1.0 - ecc * ecc);
    e.theta = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
    std::uniform_real_distribution<double> centre(e.a + 1.0, static_cast<double>(n) - e.a - 2.0);
    e.cy = centre(rng);
    e.cx = centre(rng);
    e.intensity = truncated_normal(rng, cfg.intensity_range);
    rasterize(e, n);
    bool ok = e.pixels.size() >= kMinRasterArea;
    for (std::size_t j = 0; ok && j < placed.size(); ++j) {
      const double shared = static_cast<double>(shared_pixels(e, placed[j]));
      const double smaller = static_cast<double>(std::min(e.pixels.size(), placed[j].pixels.size()));
      if (shared > cfg.overlap_fraction * smaller) ok = false;
    }
    if (ok) {
      placed.push_back(std::move(e));
    } else {
      ++rejections;
    }
  }
  if (placed.size() < cfg.nuclei_count_range[0]) throw std::runtime_error("scene too crowded");

  // Contested pixels go to the ellipse whose boundary is relatively farthest away.
  std::vector<std::int32_t> owner(n * n, -1);
  std::vector<double> best(n * n, 2.0);
  for (std::size_t k = 0; k < placed.size(); ++k) {
    const Ellipse& e = placed[k];
    for (std::size_t i = 0; i < e.pixels.size(); ++i) {
      const std::size_t p = e.pixels[i];
      if (e.dist[i] < best[p]) {
        best[p] = e.dist[i];
        owner[p] = static_cast<std::int32_t>(k);
      }
    }
  }
  keep_largest_components(owner, n, placed.size());
  std::vector<std::size_t> area(placed.size(), 0);
  for (std::int32_t o : owner) {
    if (o >= 0) ++area[static_cast<std::size_t>(o)];
  }
  for (std::int32_t& o : owner) {
    if (o >= 0 && area[static_cast<std::size_t>(o)] < kMinFinalArea) o = -1;
  }

  Scene s;
  s.seed = cfg.seed;
  s.h_channel = Tensor::plane(n, n);
  std::vector<std::int32_t> lbl(n * n, 0);
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] < 0) continue;
    lbl[p] = owner[p] + 1;
    s.h_channel[p] = placed[static_cast<std::size_t>(owner[p])].intensity;
  }
  s.gt_labels = InstanceLabelMap(n, n, std::move(lbl));
  s.gt_labels.relabel_contiguous();
  s.gt_hv = hv_from_labels(s.gt_labels);

  s.image = Tensor::stack(1, n, n);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (std::size_t p = 0; p < n * n; ++p) {
    const double v = s.h_channel[p] + (cfg.noise_sigma > 0.0 ? noise(rng) : 0.0);
    s.image[p] = std::clamp(v, 0.0, 1.0);
  }
  return s;
}

std::vector<Scene> generate_dataset(const SceneConfig& base, std::size_t n, std::uint64_t seed, std::int64_t first_id) {
  std::vector<Scene> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SceneConfig cfg = base;
    const std::int64_t id = first_id + static_cast<std::int64_t>(i);
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(id));
    Scene s = generate_scene(cfg);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

Geometry::Geometry(bool flip, int rotation) : flip_(flip), rotation_(((rotation % 4) + 4) % 4) {}

Geometry Geometry::from_code(int code) {
  if (code < 0 || code > 7) throw std::invalid_argument("geometry code must be in 0..7");
  return Geometry(code >= 4, code % 4);
}

std::array<int, 4> Geometry::matrix() const noexcept {
  // Flip F = [[1,0],[0,-1]] first, then R^k with R = [[0,1],[-1,0]] (clockwise).
  std::array<int, 4> m{1, 0, 0, flip_ ? -1 : 1};
  for (int k = 0; k < rotation_; ++k) m = {m[2], m[3], -m[0], -m[1]};
  return m;
}

Geometry Geometry::compose(const Geometry& then) const {
  const auto a = matrix();
  const auto b = then.matrix();
  const std::array<int, 4> p{b[0] * a[0] + b[1] * a[2], b[0] * a[1] + b[1] * a[3], b[2] * a[0] + b[3] * a[2],
                             b[2] * a[1] + b[3] * a[3]};
  for (int code = 0; code < 8; ++code) {
    const Geometry g = from_code(code);
    if (g.matrix() == p) return g;
  }
  throw std::logic_error("geometry composition left the group");
}

Geometry Geometry::inverse() const {
  for (int code = 0; code < 8; ++code) {
    const Geometry g = from_code(code);
    if (compose(g).is_identity()) return g;
  }
  throw std::logic_error("geometry without inverse");
}

namespace {

// Source index for every destination pixel, plus the destination shape.
std::vector<std::size_t> geometry_map(std::size_t h, std::size_t w, const Geometry& g, std::size_t& oh, std::size_t& ow) {
  const bool swap = g.rotation() % 2 == 1;
  oh = swap ? w : h;
  ow = swap ? h : w;
  const auto m = g.matrix();
  std::vector<std::size_t> src(oh * ow);
  const auto ih = static_cast<long>(h);
  const auto iw = static_cast<long>(w);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      // Doubled centred coordinates keep everything integral.
      const long rr = 2 * static_cast<long>(r) - (static_cast<long>(oh) - 1);
      const long cc = 2 * static_cast<long>(c) - (static_cast<long>(ow) - 1);
      const long sr = m[0] * rr + m[2] * cc;  // transpose = inverse
      const long sc = m[1] * rr + m[3] * cc;
      const long r0 = (sr + ih - 1) / 2;
      const long c0 = (sc + iw - 1) / 2;
      src[r * ow + c] = static_cast<std::size_t>(r0 * iw + c0);
    }
  }
  return src;
}

}  // namespace

Tensor apply_geometry(const Tensor& t, const Geometry& g) {
  if (t.rank() != 2 && t.rank() != 3) throw std::invalid_argument("apply_geometry: expected plane or stack");
  if (g.is_identity()) return t;
  std::size_t oh = 0;
  std::size_t ow = 0;
  const auto src = geometry_map(t.height(), t.width(), g, oh, ow);
  const std::size_t ch = t.rank() == 3 ? t.channels() : 1;
  Tensor out = t.rank() == 3 ? Tensor::stack(ch, oh, ow) : Tensor::plane(oh, ow);
  const std::size_t plane = oh * ow;
  for (std::size_t k = 0; k < ch; ++k) {
    for (std::size_t p = 0; p < plane; ++p) out[k * plane + p] = t[k * plane + src[p]];
  }
  return out;
}

InstanceLabelMap apply_geometry(const InstanceLabelMap& labels, const Geometry& g) {
  if (g.is_identity()) return labels;
  std::size_t oh = 0;
  std::size_t ow = 0;
  const auto src = geometry_map(labels.height(), labels.width(), g, oh, ow);
  std::vector<std::int32_t> v(oh * ow);
  for (std::size_t p = 0; p < v.size(); ++p) v[p] = labels[src[p]];
  return InstanceLabelMap(oh, ow, std::move(v));
}

Tensor apply_geometry_hv(const Tensor& hv, const Geometry& g) {
  if (hv.rank() != 3 || hv.channels() != 2) throw std::invalid_argument("apply_geometry_hv: hv must be 2 x h x w");
  Tensor moved = apply_geometry(hv, g);
  if (g.is_identity()) return moved;
  // Offset vectors transform like coordinates: (v, h) -> M (v, h).
  const auto m = g.matrix();
  const std::size_t plane = moved.height() * moved.width();
  for (std::size_t p = 0; p < plane; ++p) {
    const double h = moved[p];
    const double v = moved[plane + p];
    moved[p] = m[2] * v + m[3] * h;
    moved[plane + p] = m[0] * v + m[1] * h;
  }
  return moved;
}

namespace {

Augmented geometric(const Scene& scene, std::mt19937_64& rng) {
  const Geometry g = Geometry::from_code(std::uniform_int_distribution<int>(0, 7)(rng));
  Augmented a{scene, g};
  if (g.is_identity()) return a;
  a.scene.image = apply_geometry(scene.image, g);
  a.scene.gt_labels = apply_geometry(scene.gt_labels, g);
  a.scene.gt_hv = apply_geometry_hv(scene.gt_hv, g);
  a.scene.h_channel = apply_geometry(scene.h_channel, g);
  return a;
}

}  // namespace

Augmented weak_augment(const Scene& scene, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return geometric(scene, rng);
}

Augmented strong_augment(const Scene& scene, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Augmented a = geometric(scene, rng);
  const double brightness = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  const double contrast = std::uniform_real_distribution<double>(0.75, 1.25)(rng);
  const double sigma = std::uniform_real_distribution<double>(0.0, 0.08)(rng);
  Tensor& img = a.scene.image;
  double mean = 0.0;
  for (double v : img.values()) mean += v;
  mean /= static_cast<double>(img.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : img.values()) {
    v = std::clamp((v - mean) * contrast + mean + brightness + sigma * noise(rng), 0.0, 1.0);
  }
  return a;
}

void save_dataset(const fs::path& dir, const std::vector<Scene>& scenes) {
  fs::create_directories(dir);
  const fs::path manifest = dir / "manifest.csv";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw std::runtime_error(manifest.string() + ": cannot open for writing");
  out << "id,labeled,seed\n";
  for (const Scene& s : scenes) {
    io::save(dir / field("img", s.id), s.image);
    io::save(dir / field("lbl", s.id), s.gt_labels);
    io::save(dir / field("hv", s.id), s.gt_hv);
    io::save(dir / field("hch", s.id), s.h_channel);
    out << s.id << ',' << (s.labeled ? 1 : 0) << ',' << s.seed << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error(manifest.string() + ": write failed");
}

std::vector<Scene> load_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error(manifest.string() + ": cannot open dataset manifest");
  std::string line;
  if (!std::getline(in, line) || line != "id,labeled,seed") {
    throw std::runtime_error(manifest.string() + ": bad header");
  }
  std::vector<Scene> scenes;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id_s;
    std::string lab_s;
    std::string seed_s;
    if (!std::getline(row, id_s, ',') || !std::getline(row, lab_s, ',') || !std::getline(row, seed_s)) {
      throw std::runtime_error(manifest.string() + ": malformed line " + std::to_string(lineno));
    }
    Scene s;
    try {
      s.id = std::stoll(id_s);
      s.seed = std::stoull(seed_s);
    } catch (const std::exception&) {
      throw std::runtime_error(manifest.string() + ": malformed line " + std::to_string(lineno));
    }
    if (lab_s != "0" && lab_s != "1") throw std::runtime_error(manifest.string() + ": bad labeled flag on line " + std::to_string(lineno));
    s.labeled = lab_s == "1";
    s.image = io::load_tensor(dir / field("img", s.id));
    s.gt_labels = io::load_labels(dir / field("lbl", s.id));
    s.gt_hv = io::load_tensor(dir / field("hv", s.id));
    s.h_channel = io::load_tensor(dir / field("hch", s.id));
    const std::size_t h = s.gt_labels.height();
    const std::size_t w = s.gt_labels.width();
    if (s.image.rank() != 3 || s.image.height() != h || s.image.width() != w || s.gt_hv.rank() != 3 ||
        s.gt_hv.channels() != 2 || s.gt_hv.height() != h || s.gt_hv.width() != w || s.h_channel.rank() != 2 ||
        s.h_channel.height() != h || s.h_channel.width() != w) {
      throw std::runtime_error(dir.string() + ": inconsistent shapes for scene " + id_s);
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

std::pair<std::vector<Scene>, std::vector<Scene>> split_labeled(const std::vector<Scene>& scenes, double ratio,
                                                                std::uint64_t seed) {
  if (scenes.empty()) throw std::invalid_argument("split_labeled: empty dataset");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("split_labeled: ratio must be in (0,1]");
  const std::size_t n = scenes.size();
  const auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  const std::size_t k = std::clamp<std::size_t>(want, 1, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> is_labeled(n, 0);
  for (std::size_t i = 0; i < k; ++i) is_labeled[order[i]] = 1;
  std::pair<std::vector<Scene>, std::vector<Scene>> out;
  for (std::size_t i = 0; i < n; ++i) {
    Scene s = scenes[i];
    s.labeled = is_labeled[i] != 0;
    (s.labeled ? out.first : out.second).push_back(std::move(s));
  }
  return out;
}

}  // namespace ircr::data
