#include "ircr/checkpoint.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "ircr/tensor_io.hpp"

namespace ircr::checkpoint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "ircr-checkpoint";
constexpr int kVersion = 1;

json config_json(const model::ModelConfig& c) {
  return {{"in_channels", c.in_channels}, {"enc1", c.enc1}, {"enc2", c.enc2}, {"dec1", c.dec1}, {"dec2", c.dec2}};
}

model::ModelConfig config_from(const json& j) {
  model::ModelConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.enc1 = j.at("enc1").get<std::size_t>();
  c.enc2 = j.at("enc2").get<std::size_t>();
  c.dec1 = j.at("dec1").get<std::size_t>();
  c.dec2 = j.at("dec2").get<std::size_t>();
  return c;
}

bool same_config(const model::ModelConfig& a, const model::ModelConfig& b) {
  return a.in_channels == b.in_channels && a.enc1 == b.enc1 && a.enc2 == b.enc2 && a.dec1 == b.dec1 &&
         a.dec2 == b.dec2;
}

void write_role(const fs::path& dir, const char* role, const model::ModelParams& p, json& entries) {
  fs::create_directories(dir / role);
  for (const auto& t : p.tensors()) {
    const std::string rel = std::string(role) + "/" + t.name + ".irt";
    io::save(dir / rel, t.value);
    entries.push_back({{"role", role}, {"name", t.name}, {"dims", t.value.dims()}, {"file", rel}});
  }
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  if (!ckpt.student.same_layout(ckpt.teacher)) throw std::invalid_argument("save_checkpoint: student/teacher layout differs");
  fs::create_directories(dir);
  json entries = json::array();
  write_role(dir, "student", ckpt.student, entries);
  write_role(dir, "teacher", ckpt.teacher, entries);
  const bool has_adam = ckpt.adam.m.size() > 0;
  if (has_adam) {
    write_role(dir, "adam_m", ckpt.adam.m, entries);
    write_role(dir, "adam_v", ckpt.adam.v, entries);
  }
  json manifest = {{"format", kFormat},
                   {"version", kVersion},
                   {"config", config_json(ckpt.student.config())},
                   {"step", ckpt.step},
                   {"optimizer", {{"type", "adam"}, {"step", ckpt.adam.step}, {"has_moments", has_adam}}},
                   {"tensors", entries}};
  const fs::path path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const fs::path& dir, const std::optional<model::ModelConfig>& expected) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open checkpoint manifest");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kVersion) {
    throw std::runtime_error(path.string() + ": not an ircr checkpoint");
  }
  const model::ModelConfig cfg = config_from(manifest.at("config"));
  if (expected && !same_config(*expected, cfg)) {
    throw std::invalid_argument("checkpoint " + dir.string() + ": model shape does not match the configuration");
  }

  Checkpoint ckpt;
  ckpt.student = model::ModelParams(cfg);
  ckpt.teacher = model::ModelParams(cfg);
  ckpt.step = manifest.at("step").get<std::uint64_t>();
  const json& opt = manifest.at("optimizer");
  ckpt.adam.step = opt.at("step").get<std::uint64_t>();
  if (opt.at("has_moments").get<bool>()) {
    ckpt.adam.m = model::ModelParams(cfg);
    ckpt.adam.v = model::ModelParams(cfg);
  }

  auto target = [&](const std::string& role) -> model::ModelParams* {
    if (role == "student") return &ckpt.student;
    if (role == "teacher") return &ckpt.teacher;
    if (role == "adam_m" && ckpt.adam.m.size() > 0) return &ckpt.adam.m;
    if (role == "adam_v" && ckpt.adam.v.size() > 0) return &ckpt.adam.v;
    throw std::runtime_error(path.string() + ": unexpected tensor role '" + role + "'");
  };

  std::size_t loaded = 0;
  for (const json& e : manifest.at("tensors")) {
    model::ModelParams* p = target(e.at("role").get<std::string>());
    const std::string name = e.at("name").get<std::string>();
    bool found = false;
    for (auto& t : p->tensors()) {
      if (t.name != name) continue;
      Tensor v = io::load_tensor(dir / e.at("file").get<std::string>());
      if (v.dims() != t.value.dims()) {
        throw std::invalid_argument("checkpoint " + dir.string() + ": shape mismatch for " + name);
      }
      t.value = std::move(v);
      found = true;
      ++loaded;
      break;
    }
    if (!found) throw std::runtime_error(path.string() + ": unknown tensor '" + name + "'");
  }
  const std::size_t expected_count = ckpt.student.size() * (ckpt.adam.m.size() > 0 ? 4 : 2);
  if (loaded != expected_count) throw std::runtime_error(path.string() + ": incomplete tensor list");
  return ckpt;
}

}  // namespace ircr::checkpoint
