#include "ircr/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace ircr::config {

namespace pt = boost::property_tree;

namespace {

template <typename T>
T as(const pt::ptree& node, const std::string& key) {
  try {
    return node.get_value<T>();
  } catch (const pt::ptree_bad_data&) {
    throw std::invalid_argument("config: bad value for '" + key + "': " + node.data());
  }
}

// "epoch:factor, epoch:factor"
std::vector<std::pair<std::size_t, double>> parse_decay(const std::string& text) {
  std::vector<std::pair<std::size_t, double>> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("config: lr_decay entries must be epoch:factor");
    try {
      out.emplace_back(std::stoul(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("config: bad lr_decay entry '" + item + "'");
    }
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const pt::ptree&, const std::string&)>;

template <typename T, typename F>
Setter setter(F f) {
  return [f](RunConfig& c, const pt::ptree& n, const std::string& key) { f(c, as<T>(n, key)); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"train.epochs", setter<std::size_t>([](RunConfig& c, std::size_t v) { c.train.epochs = v; })},
      {"train.batch_size", setter<std::size_t>([](RunConfig& c, std::size_t v) { c.train.batch_size = v; })},
      {"train.lr", setter<double>([](RunConfig& c, double v) { c.train.lr = v; })},
      {"train.lr_decay", setter<std::string>([](RunConfig& c, const std::string& v) { c.train.lr_decay = parse_decay(v); })},
      {"train.ema_alpha", setter<double>([](RunConfig& c, double v) { c.train.ema.alpha = v; })},
      {"train.beta", setter<double>([](RunConfig& c, double v) { c.train.weights.beta = v; })},
      {"train.gamma1", setter<double>([](RunConfig& c, double v) { c.train.weights.gamma1 = v; })},
      {"train.gamma2", setter<double>([](RunConfig& c, double v) { c.train.weights.gamma2 = v; })},
      {"train.consistency", setter<std::string>([](RunConfig& c, const std::string& v) { c.train.mode = trainer::parse_mode(v); })},
      {"train.mse_weight", setter<double>([](RunConfig& c, double v) { c.train.mse_weight = v; })},
      {"train.consistency_warmup_epochs", setter<double>([](RunConfig& c, double v) { c.train.consistency_warmup_epochs = v; })},
      {"train.seed", setter<std::uint64_t>([](RunConfig& c, std::uint64_t v) { c.train.seed = v; })},
      {"wbis.fg_threshold", setter<double>([](RunConfig& c, double v) { c.train.wbis.fg_threshold = v; })},
      {"wbis.marker_threshold", setter<double>([](RunConfig& c, double v) { c.train.wbis.marker_threshold = v; })},
      {"wbis.min_instance_area", setter<std::size_t>([](RunConfig& c, std::size_t v) { c.train.wbis.min_instance_area = v; })},
      {"piac.tau", setter<double>([](RunConfig& c, double v) { c.train.piac.tau = v; })},
      {"piac.w", setter<double>([](RunConfig& c, double v) { c.train.piac.w = v; })},
      {"match.r_factor", setter<double>([](RunConfig& c, double v) { c.train.r_factor = v; })},
      {"match.boundary_radius", setter<int>([](RunConfig& c, int v) { c.train.boundary_radius = v; })},
      {"data.labeled_ratio", setter<double>([](RunConfig& c, double v) { c.train.labeled_ratio = v; })},
      {"data.split_seed", setter<std::uint64_t>([](RunConfig& c, std::uint64_t v) { c.train.split_seed = v; })},
      {"data.size", setter<std::size_t>([](RunConfig& c, std::size_t v) { c.scene.size = v; })},
      {"data.min_nuclei", setter<std::size_t>([](RunConfig& c, std::size_t v) { c.scene.nuclei_count_range[0] = v; })},
      {"data.max_nuclei", setter<std::size_t>([](RunConfig& c, std::size_t v) { c.scene.nuclei_count_range[1] = v; })},
      {"data.min_radius", setter<double>([](RunConfig& c, double v) { c.scene.radius_range.lo = v; })},
      {"data.max_radius", setter<double>([](RunConfig& c, double v) { c.scene.radius_range.hi = v; })},
      {"data.overlap", setter<double>([](RunConfig& c, double v) { c.scene.overlap_fraction = v; })},
      {"data.noise_sigma", setter<double>([](RunConfig& c, double v) { c.scene.noise_sigma = v; })},
  };
  return table;
}

}  // namespace

RunConfig parse_config(std::istream& in, const RunConfig& defaults) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  RunConfig cfg = defaults;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw std::invalid_argument("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const auto it = setters().find(full);
      if (it == setters().end()) throw std::invalid_argument("config: unknown key '" + full + "'");
      it->second(cfg, node, full);
    }
  }
  cfg.train.validate();
  cfg.scene.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& defaults) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open config");
  try {
    return parse_config(in, defaults);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace ircr::config
