#include "ircr/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ircr::priors {

namespace {

struct Corner {
  double x;  // column
  double y;  // row
};

double cross(const Corner& o, const Corner& a, const Corner& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain followed by the shoelace formula.
double hull_area(std::vector<Corner> pts) {
  std::sort(pts.begin(), pts.end(), [](const Corner& a, const Corner& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Corner& a, const Corner& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return 0.0;
  std::vector<Corner> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Corner& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  double twice = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Corner& a = hull[i];
    const Corner& b = hull[(i + 1) % hull.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) * 0.5;
}

struct InstanceStats {
  std::size_t area = 0;
  std::size_t perimeter = 0;
  double intensity_sum = 0.0;
  std::size_t rmin = std::numeric_limits<std::size_t>::max();
  std::size_t rmax = 0;
  std::size_t cmin = std::numeric_limits<std::size_t>::max();
  std::size_t cmax = 0;
  // Per-row leftmost/rightmost column; the hull of their pixel corners is the
  // hull of the whole instance.
  std::vector<std::pair<std::size_t, std::size_t>> row_span;
};

std::vector<InstanceStats> collect(const InstanceLabelMap& labels, const Tensor& h_channel) {
  const std::size_t h = labels.height();
  const std::size_t w = labels.width();
  if (h_channel.rank() != 2 || h_channel.height() != h || h_channel.width() != w) {
    throw std::invalid_argument("h_channel shape must match the label map");
  }
  const auto k = static_cast<std::size_t>(labels.max_label());
  std::vector<InstanceStats> stats(k + 1);
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  for (auto& s : stats) s.row_span.assign(h, {none, 0});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::int32_t l = labels.at(r, c);
      if (l == 0) continue;
      InstanceStats& s = stats[static_cast<std::size_t>(l)];
      ++s.area;
      s.intensity_sum += h_channel.at(r, c);
      s.rmin = std::min(s.rmin, r);
      s.rmax = std::max(s.rmax, r);
      s.cmin = std::min(s.cmin, c);
      s.cmax = std::max(s.cmax, c);
      auto& span = s.row_span[r];
      span.first = std::min(span.first, c);
      span.second = std::max(span.second, c);
      if (r == 0 || labels.at(r - 1, c) != l) ++s.perimeter;
      if (r + 1 == h || labels.at(r + 1, c) != l) ++s.perimeter;
      if (c == 0 || labels.at(r, c - 1) != l) ++s.perimeter;
      if (c + 1 == w || labels.at(r, c + 1) != l) ++s.perimeter;
    }
  }
  return stats;
}

FeatureVector to_features(const InstanceStats& s) {
  std::vector<Corner> corners;
  for (std::size_t r = 0; r < s.row_span.size(); ++r) {
    const auto [lo, hi] = s.row_span[r];
    if (lo == std::numeric_limits<std::size_t>::max()) continue;
    const auto y = static_cast<double>(r);
    corners.push_back({static_cast<double>(lo), y});
    corners.push_back({static_cast<double>(lo), y + 1});
    corners.push_back({static_cast<double>(hi) + 1, y});
    corners.push_back({static_cast<double>(hi) + 1, y + 1});
  }
  const auto area = static_cast<double>(s.area);
  const auto perim = static_cast<double>(s.perimeter);
  const double bbox = static_cast<double>(s.rmax - s.rmin + 1) * static_cast<double>(s.cmax - s.cmin + 1);
  FeatureVector f;
  f.z[0] = area;
  f.z[1] = area / hull_area(std::move(corners));
  f.z[2] = 4.0 * std::numbers::pi * area / (perim * perim);
  f.z[3] = s.intensity_sum / area;
  f.z[4] = area / bbox;
  return f;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

FeatureVector extract_features(const InstanceLabelMap& labels, std::int32_t k, const Tensor& h_channel) {
  if (k <= 0 || k > labels.max_label()) throw std::invalid_argument("unknown instance id");
  const auto stats = collect(labels, h_channel);
  const InstanceStats& s = stats[static_cast<std::size_t>(k)];
  if (s.area == 0) throw std::invalid_argument("unknown instance id");
  return to_features(s);
}

std::vector<FeatureVector> extract_all_features(const InstanceLabelMap& labels, const Tensor& h_channel) {
  const auto stats = collect(labels, h_channel);
  std::vector<FeatureVector> out;
  out.reserve(stats.size() - 1);
  for (std::size_t l = 1; l < stats.size(); ++l) {
    if (stats[l].area == 0) throw std::invalid_argument("label map has a gap at id " + std::to_string(l));
    out.push_back(to_features(stats[l]));
  }
  return out;
}

PriorBank::PriorBank(std::vector<FeatureVector> raw_samples, std::array<double, kFeatureCount> bandwidths,
                     std::array<double, kFeatureCount> mins, std::array<double, kFeatureCount> maxs)
    : raw_(std::move(raw_samples)) {
  if (raw_.empty()) throw std::invalid_argument("prior bank needs at least one sample");
  for (std::size_t ch = 0; ch < kFeatureCount; ++ch) {
    if (!(bandwidths[ch] > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
    if (!(maxs[ch] > mins[ch])) throw std::invalid_argument("degenerate feature channel");
    ChannelModel& m = channels_[ch];
    m.bandwidth = bandwidths[ch];
    m.min = mins[ch];
    m.max = maxs[ch];
    m.samples.reserve(raw_.size());
    for (const FeatureVector& f : raw_) m.samples.push_back((f.z[ch] - m.min) / (m.max - m.min));
  }
}

const ChannelModel& PriorBank::channel(std::size_t idx) const {
  if (idx >= kFeatureCount) throw std::out_of_range("feature channel out of range");
  return channels_[idx];
}

double PriorBank::normalize(std::size_t ch, double raw_value) const {
  const ChannelModel& m = channel(ch);
  return (raw_value - m.min) / (m.max - m.min);
}

PriorBank fit_kde(const std::vector<FeatureVector>& samples, std::optional<double> fixed_bandwidth) {
  if (samples.size() < 2) throw std::invalid_argument("fit_kde needs at least 2 samples");
  if (fixed_bandwidth && !(*fixed_bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
  std::array<double, kFeatureCount> mins{}, maxs{}, hs{};
  const auto n = static_cast<double>(samples.size());
  for (std::size_t ch = 0; ch < kFeatureCount; ++ch) {
    double lo = samples.front().z[ch];
    double hi = lo;
    for (const FeatureVector& f : samples) {
      lo = std::min(lo, f.z[ch]);
      hi = std::max(hi, f.z[ch]);
    }
    if (!(hi > lo)) throw std::invalid_argument("degenerate feature channel");
    mins[ch] = lo;
    maxs[ch] = hi;
    if (fixed_bandwidth) {
      hs[ch] = *fixed_bandwidth;
      continue;
    }
    double mean = 0.0;
    for (const FeatureVector& f : samples) mean += (f.z[ch] - lo) / (hi - lo);
    mean /= n;
    double var = 0.0;
    for (const FeatureVector& f : samples) {
      const double d = (f.z[ch] - lo) / (hi - lo) - mean;
      var += d * d;
    }
    const double sigma = std::sqrt(var / n);
    hs[ch] = std::max(1e-3, 1.06 * sigma * std::pow(n, -0.2));
  }
  return PriorBank(samples, hs, mins, maxs);
}

double density(const PriorBank& bank, std::size_t ch, double x) {
  const ChannelModel& m = bank.channel(ch);
  const double h = m.bandwidth;
  double sum = 0.0;
  for (double s : m.samples) {
    const double d = x - s;
    sum += std::exp(-(d * d) / (2.0 * h * h));
  }
  return sum / (std::sqrt(2.0 * std::numbers::pi) * static_cast<double>(m.samples.size()) * h);
}

double score_instance(const PriorBank& bank, const FeatureVector& z) {
  double total = 0.0;
  for (std::size_t ch = 0; ch < kFeatureCount; ++ch) {
    const double x = std::clamp(bank.normalize(ch, z.z[ch]), 0.0, 1.0);
    total += density(bank, ch, x);
  }
  return total / static_cast<double>(kFeatureCount);
}

void PiacConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (!(w > 0.0)) throw std::invalid_argument("w must be > 0");
}

Tensor piac_mask(const InstanceLabelMap& labels, const std::vector<double>& scores, const PiacConfig& cfg) {
  cfg.validate();
  if (scores.size() != labels.instance_count()) {
    throw std::invalid_argument("piac_mask: " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(labels.instance_count()) + " instances");
  }
  Tensor u = Tensor::plane(labels.height(), labels.width(), cfg.w);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::int32_t l = labels[i];
    if (l > 0 && scores[static_cast<std::size_t>(l - 1)] < cfg.tau) u[i] = 0.0;
  }
  return u;
}

void write_bank(std::ostream& out, const PriorBank& bank) {
  out << "IRCR-PRIORS v1\n";
  out << "N=" << bank.sample_count() << "\n";
  for (std::size_t ch = 0; ch < kFeatureCount; ++ch) {
    const ChannelModel& m = bank.channel(ch);
    out << "channel=" << ch << " h=" << format_double(m.bandwidth) << " min=" << format_double(m.min)
        << " max=" << format_double(m.max) << "\n";
  }
  out << "area,solidity,circularity,intensity,extent\n";
  for (const FeatureVector& f : bank.raw_samples()) {
    for (std::size_t ch = 0; ch < kFeatureCount; ++ch) {
      out << (ch ? "," : "") << format_double(f.z[ch]);
    }
    out << "\n";
  }
}

PriorBank read_bank(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "IRCR-PRIORS v1") throw std::runtime_error("not an IRCR-PRIORS v1 file");
  if (!std::getline(in, line) || line.rfind("N=", 0) != 0) throw std::runtime_error("missing N= line");
  const std::size_t n = std::stoul(line.substr(2));
  std::array<double, kFeatureCount> hs{}, mins{}, maxs{};
  for (std::size_t ch = 0; ch < kFeatureCount; ++ch) {
    if (!std::getline(in, line)) throw std::runtime_error("missing channel line");
    std::istringstream ls(line);
    std::string tok;
    std::size_t idx = kFeatureCount;
    bool got_h = false, got_min = false, got_max = false;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw std::runtime_error("malformed channel line: " + line);
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "channel") {
        idx = std::stoul(val);
      } else if (key == "h") {
        hs[ch] = std::stod(val);
        got_h = true;
      } else if (key == "min") {
        mins[ch] = std::stod(val);
        got_min = true;
      } else if (key == "max") {
        maxs[ch] = std::stod(val);
        got_max = true;
      }
    }
    if (idx != ch || !got_h || !got_min || !got_max) throw std::runtime_error("malformed channel line: " + line);
  }
  std::vector<FeatureVector> samples;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("area", 0) == 0) continue;
    std::istringstream ls(line);
    FeatureVector f;
    std::string cell;
    std::size_t ch = 0;
    while (std::getline(ls, cell, ',')) {
      if (ch >= kFeatureCount) throw std::runtime_error("too many columns in sample row");
      f.z[ch++] = std::stod(cell);
    }
    if (ch != kFeatureCount) throw std::runtime_error("short sample row: " + line);
    samples.push_back(f);
  }
  if (samples.size() != n) {
    throw std::runtime_error("sample count " + std::to_string(samples.size()) + " does not match N=" +
                             std::to_string(n));
  }
  return PriorBank(std::move(samples), hs, mins, maxs);
}

void save_bank(const std::filesystem::path& path, const PriorBank& bank) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_bank(os, bank);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

PriorBank load_bank(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  try {
    return read_bank(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace ircr::priors
