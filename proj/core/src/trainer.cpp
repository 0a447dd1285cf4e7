#include "ircr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ircr/checkpoint.hpp"
#include "ircr/log.hpp"
#include "ircr/raster.hpp"
#include "ircr/seed.hpp"
#include "ircr/tensor_io.hpp"

namespace ircr::trainer {

namespace {

// Seed streams; each random decision draws from its own stream.
enum Stream : std::uint64_t {
  kInit = 1,
  kLabeledOrder = 2,
  kLabeledAug = 3,
  kUnlabeledOrder = 4,
  kTeacherAug = 5,
  kStudentAug = 6,
};

Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count) {
  const std::size_t plane = t.height() * t.width();
  Tensor out = Tensor::stack(count, t.height(), t.width());
  std::copy(t.data() + first * plane, t.data() + (first + count) * plane, out.data());
  return out;
}

// Teacher or student prediction moved back to the scene's own frame.
struct Canonical {
  Tensor features;  // np0, np1, h, v
};

Canonical to_canonical(const model::ForwardOutput& out, const data::Geometry& applied) {
  const data::Geometry inv = applied.inverse();
  return {concat_channels(data::apply_geometry(out.np_probs, inv), data::apply_geometry_hv(out.hv, inv))};
}

bool finite(const StepLog& l) {
  return std::isfinite(l.l_sup) && std::isfinite(l.l_miac) && std::isfinite(l.l_piac) && std::isfinite(l.l_total);
}

}  // namespace

std::string to_string(ConsistencyMode mode) {
  switch (mode) {
    case ConsistencyMode::none:
      return "none";
    case ConsistencyMode::mse:
      return "mse";
    case ConsistencyMode::ircr:
      return "ircr";
  }
  return "unknown";
}

ConsistencyMode parse_mode(const std::string& text) {
  if (text == "none") return ConsistencyMode::none;
  if (text == "mse") return ConsistencyMode::mse;
  if (text == "ircr") return ConsistencyMode::ircr;
  throw std::invalid_argument("unknown consistency mode '" + text + "' (expected none|mse|ircr)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (!(labeled_ratio > 0.0 && labeled_ratio <= 1.0)) throw std::invalid_argument("train: labeled_ratio must be in (0,1]");
  if (!(r_factor > 0.0)) throw std::invalid_argument("match: r_factor must be positive");
  if (boundary_radius < 1) throw std::invalid_argument("match: boundary_radius must be >= 1");
  if (mse_weight < 0.0) throw std::invalid_argument("train: mse_weight must be >= 0");
  for (const auto& [epoch, factor] : lr_decay) {
    (void)epoch;
    if (!(factor > 0.0)) throw std::invalid_argument("train: lr_decay factors must be positive");
  }
  ema.validate();
  weights.validate();
  piac.validate();
  wbis.validate();
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
  double f = 1.0;
  if (lr_decay.empty()) {
    const std::size_t at = 2 * epochs / 3;
    if (at > 0 && epoch >= at) f = 0.1;
  } else {
    for (const auto& [e, factor] : lr_decay) {
      if (epoch >= e) f = factor;
    }
  }
  return lr * f;
}

void write_log_line(std::ostream& out, const StepLog& l) {
  const auto old = out.precision(10);
  out << l.step << ',' << l.l_sup << ',' << l.l_dice << ',' << l.l_ce << ',' << l.l_mse << ',' << l.l_msge << ','
      << l.l_miac << ',' << l.l_piac << ',' << l.l_total << ',' << l.matched_pairs << ',' << l.rejected_instances
      << ',' << l.lr << '\n';
  out.precision(old);
}

Trainer::Trainer(TrainConfig cfg, std::vector<data::Scene> labeled, std::vector<data::Scene> unlabeled,
                 std::optional<priors::PriorBank> bank)
    : cfg_(std::move(cfg)), labeled_(std::move(labeled)), unlabeled_(std::move(unlabeled)), bank_(std::move(bank)) {
  cfg_.validate();
  if (labeled_.empty()) throw std::invalid_argument("train: dataset has no labeled scenes");
  if (cfg_.mode == ConsistencyMode::ircr && cfg_.weights.gamma1 > 0.0 && !bank_) {
    throw std::invalid_argument("train: prior-driven consistency needs a prior bank");
  }
  // Supervised-only runs keep the step budget of the matching semi-supervised run.
  const std::size_t budget = std::max(labeled_.size(), unlabeled_.size());
  steps_per_epoch_ = (budget + cfg_.batch_size - 1) / cfg_.batch_size;
  student_ = model::ModelParams::he_normal(cfg_.model, mix_seed(cfg_.seed, kInit));
  teacher_ = student_;
  adam_ = model::AdamState::zeros_for(student_);
}

void Trainer::set_loss_weights(const losses::LossWeights& w) {
  w.validate();
  cfg_.weights = w;
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t pool, std::uint64_t stream, std::uint64_t step) const {
  std::vector<std::size_t> out;
  if (pool == 0) return out;
  const std::size_t b = cfg_.batch_size;
  std::uint64_t cached_pass = ~0ULL;
  std::vector<std::size_t> perm(pool);
  for (std::size_t j = 0; j < b; ++j) {
    const std::uint64_t q = step * b + j;
    const std::uint64_t pass = q / pool;
    if (pass != cached_pass) {
      for (std::size_t i = 0; i < pool; ++i) perm[i] = i;
      std::mt19937_64 rng(mix_seed(cfg_.seed, stream, pass));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_pass = pass;
    }
    out.push_back(perm[q % pool]);
  }
  return out;
}

double Trainer::ramp(std::uint64_t step) const {
  const double warm_epochs =
      cfg_.consistency_warmup_epochs < 0.0 ? 0.1 * static_cast<double>(cfg_.epochs) : cfg_.consistency_warmup_epochs;
  const double warm_steps = warm_epochs * static_cast<double>(steps_per_epoch_);
  if (warm_steps <= 0.0) return 1.0;
  return std::min(1.0, static_cast<double>(step + 1) / warm_steps);
}

Trainer::Pending Trainer::compute(const losses::LossWeights& weights, bool build_cache) const {
  Pending p;
  StepLog& log = p.grads.log;
  log.step = step_;
  log.lr = cfg_.lr_at_epoch(static_cast<std::size_t>(step_ / steps_per_epoch_));
  p.grads.supervised = student_.zeros_like();
  model::Gradients cons_grads = student_.zeros_like();

  const std::vector<std::size_t> lidx = batch_indices(labeled_.size(), kLabeledOrder, step_);
  const double inv_l = 1.0 / static_cast<double>(lidx.size());
  for (std::size_t i : lidx) {
    const data::Scene& scene = labeled_[i];
    p.batch_ids.push_back(scene.id);
    const data::Augmented aug =
        data::strong_augment(scene, mix_seed(cfg_.seed, kLabeledAug, step_, static_cast<std::uint64_t>(scene.id)));
    const model::ForwardOutput out = model::forward(student_, aug.scene.image);
    const losses::SupervisedLoss sup =
        losses::supervised_loss(out.np_probs, out.hv, aug.scene.gt_labels.foreground(), aug.scene.gt_hv);
    model::backward_accumulate(student_, out, inv_l * sup.grad_np, inv_l * sup.grad_hv, p.grads.supervised);
    log.l_sup += inv_l * sup.value;
    log.l_dice += inv_l * sup.dice;
    log.l_ce += inv_l * sup.ce;
    log.l_mse += inv_l * sup.mse;
    log.l_msge += inv_l * sup.msge;
  }
  double cons_total = 0.0;

  if (cfg_.mode != ConsistencyMode::none && !unlabeled_.empty()) {
    const double r = ramp(step_);
    losses::LossWeights scaled = weights;
    scaled.gamma1 *= r;
    scaled.gamma2 *= r;
    const std::vector<std::size_t> uidx = batch_indices(unlabeled_.size(), kUnlabeledOrder, step_);
    const double inv_u = 1.0 / static_cast<double>(uidx.size());
    for (std::size_t i : uidx) {
      const data::Scene& scene = unlabeled_[i];
      const auto sid = static_cast<std::uint64_t>(scene.id);
      p.batch_ids.push_back(scene.id);
      const data::Augmented weak = data::weak_augment(scene, mix_seed(cfg_.seed, kTeacherAug, step_, sid));
      const data::Augmented strong = data::strong_augment(scene, mix_seed(cfg_.seed, kStudentAug, step_, sid));
      const model::ForwardOutput t_out = model::forward(teacher_, weak.scene.image, false);
      const model::ForwardOutput s_out = model::forward(student_, strong.scene.image, true);
      const Tensor ft = to_canonical(t_out, weak.geometry).features;
      const Tensor fs = to_canonical(s_out, strong.geometry).features;

      std::optional<Tensor> grad_f;
      if (cfg_.mode == ConsistencyMode::mse) {
        const losses::LossValue l = losses::mse_loss(fs, ft);
        const double wgt = cfg_.mse_weight * r;
        cons_total += inv_u * wgt * l.value;
        grad_f = (inv_u * wgt) * l.grad;
      } else if (const auto it = cache_.find(scene.id); it != cache_.end()) {
        const CacheEntry& entry = it->second;
        if (entry.step >= step_) throw std::logic_error("consistency cache entry is not from an earlier step");
        std::vector<losses::PairMasks> masks;
        masks.reserve(entry.match.pairs.size());
        for (const matching::MatchedPair& mp : entry.match.pairs) {
          losses::PairMasks pm;
          pm.student = entry.student.mask_of(mp.student_id);
          pm.teacher = entry.teacher.mask_of(mp.teacher_id);
          pm.student_boundary = raster::instance_boundary(pm.student, cfg_.boundary_radius);
          pm.teacher_boundary = raster::instance_boundary(pm.teacher, cfg_.boundary_radius);
          masks.push_back(std::move(pm));
        }
        const losses::MiacLossValue miac =
            losses::miac_loss(fs, ft, fs.channel(1), ft.channel(1), masks, weights.beta);
        const losses::LossValue piac = losses::piac_loss(fs, ft, entry.u, entry.teacher.instance_count());
        const losses::LossValue cons = losses::consistency_loss(piac, losses::fold_boundary(miac, 1), scaled);
        log.l_miac += inv_u * miac.value;
        log.l_piac += inv_u * piac.value;
        log.matched_pairs += entry.match.pairs.size();
        log.rejected_instances += entry.rejected;
        cons_total += inv_u * cons.value;
        grad_f = inv_u * cons.grad;
      }
      if (grad_f) {
        const Tensor g_np = data::apply_geometry(slice_channels(*grad_f, 0, 2), strong.geometry);
        const Tensor g_hv = data::apply_geometry_hv(slice_channels(*grad_f, 2, 2), strong.geometry);
        model::backward_accumulate(student_, s_out, g_np, g_hv, cons_grads);
      }

      if (build_cache && cfg_.mode == ConsistencyMode::ircr) {
        CacheEntry e;
        e.step = step_;
        e.teacher = wbis::segment_instances(ft.channel(1), slice_channels(ft, 2, 2), cfg_.wbis);
        e.student = wbis::segment_instances(fs.channel(1), slice_channels(fs, 2, 2), cfg_.wbis);
        e.match = matching::match_instances(e.teacher, e.student, cfg_.r_factor);
        std::vector<double> scores;
        if (bank_) {
          // Intensity comes from the observed image; the noiseless field is ground truth.
          const Tensor intensity = scene.image.rank() == 3 ? scene.image.channel(0) : scene.image;
          for (const priors::FeatureVector& z : priors::extract_all_features(e.teacher, intensity)) {
            scores.push_back(priors::score_instance(*bank_, z));
          }
        } else {
          scores.assign(e.teacher.instance_count(), cfg_.piac.tau);
        }
        e.rejected = static_cast<std::size_t>(
            std::count_if(scores.begin(), scores.end(), [&](double s) { return s < cfg_.piac.tau; }));
        e.u = priors::piac_mask(e.teacher, scores, cfg_.piac);
        p.refreshed.emplace_back(scene.id, std::move(e));
      }
    }
  }

  log.l_total = log.l_sup + cons_total;
  p.grads.total = p.grads.supervised;
  p.grads.total += cons_grads;
  return p;
}

StepGradients Trainer::peek_gradients(const losses::LossWeights& weights) const {
  weights.validate();
  return compute(weights, false).grads;
}

void Trainer::dump_batch(const Pending& p) const {
  if (cfg_.dump_dir.empty()) return;
  std::filesystem::create_directories(cfg_.dump_dir);
  for (std::int64_t id : p.batch_ids) {
    auto save_from = [&](const std::vector<data::Scene>& pool) {
      for (const data::Scene& s : pool) {
        if (s.id == id) io::save(cfg_.dump_dir / ("img_" + std::to_string(id)), s.image);
      }
    };
    save_from(labeled_);
    save_from(unlabeled_);
  }
  checkpoint::save_checkpoint(cfg_.dump_dir / "params", {student_, teacher_, adam_, step_});
}

StepLog Trainer::step() {
  if (step_ >= total_steps()) throw std::logic_error("train: no steps left");
  Pending p = compute(cfg_.weights, true);
  if (!finite(p.grads.log) || !p.grads.total.all_finite()) {
    dump_batch(p);
    std::ostringstream msg;
    msg << "non-finite loss at step " << step_ << " (L_sup=" << p.grads.log.l_sup << ", L_miac=" << p.grads.log.l_miac
        << ", L_piac=" << p.grads.log.l_piac << ", L_total=" << p.grads.log.l_total << "; scenes";
    for (std::int64_t id : p.batch_ids) msg << ' ' << id;
    msg << ')';
    if (!cfg_.dump_dir.empty()) msg << "; batch dumped to " << cfg_.dump_dir.string();
    throw std::runtime_error(msg.str());
  }
  model::adam_step(student_, p.grads.total, p.grads.log.lr, adam_);
  model::ema_update(teacher_, student_, cfg_.ema);
  for (auto& [id, entry] : p.refreshed) cache_[id] = std::move(entry);
  ++step_;
  return p.grads.log;
}

void Trainer::run(const std::function<void(const StepLog&)>& on_step) {
  const auto logger = log::get();
  while (step_ < total_steps()) {
    const StepLog l = step();
    if (on_step) on_step(l);
    if (step_ % steps_per_epoch_ == 0) {
      logger->info("epoch {}/{} L_sup={:.4f} L_miac={:.5f} L_piac={:.4f} pairs={} lr={:.2e}", step_ / steps_per_epoch_,
                   cfg_.epochs, l.l_sup, l.l_miac, l.l_piac, l.matched_pairs, l.lr);
    }
  }
}

void Trainer::save(const std::filesystem::path& dir) const {
  checkpoint::save_checkpoint(dir, {student_, teacher_, adam_, step_});
}

InstanceLabelMap predict_instances(const model::ModelParams& params, const Tensor& image, const wbis::WbisParams& w) {
  const model::ForwardOutput out = model::forward(params, image, false);
  return wbis::segment_instances(out.np_probs.channel(1), out.hv, w);
}

EvalResult evaluate(const model::ModelParams& params, const std::vector<data::Scene>& scenes,
                    const wbis::WbisParams& w) {
  EvalResult res;
  if (scenes.empty()) return res;
  metrics::MetricReport mean;
  for (const data::Scene& s : scenes) {
    const InstanceLabelMap pred = predict_instances(params, s.image, w);
    const metrics::MetricReport r = metrics::evaluate_pair(s.gt_labels, pred);
    res.rows.push_back({s.id, r});
    mean.aji += r.aji;
    mean.dice += r.dice;
    mean.f1_obj += r.f1_obj;
    mean.tp += r.tp;
    mean.fp += r.fp;
    mean.fn += r.fn;
  }
  const auto n = static_cast<double>(scenes.size());
  mean.aji /= n;
  mean.dice /= n;
  mean.f1_obj /= n;
  res.means = mean;
  return res;
}

void write_eval_csv(std::ostream& out, const EvalResult& result) {
  const auto old = out.precision(10);
  out << "image_id,aji,dice,f1_obj,tp,fp,fn\n";
  for (const EvalRow& r : result.rows) {
    out << r.id << ',' << r.report.aji << ',' << r.report.dice << ',' << r.report.f1_obj << ',' << r.report.tp << ','
        << r.report.fp << ',' << r.report.fn << '\n';
  }
  if (result.means) {
    const metrics::MetricReport& m = *result.means;
    out << "mean," << m.aji << ',' << m.dice << ',' << m.f1_obj << ',' << m.tp << ',' << m.fp << ',' << m.fn << '\n';
  } else {
    out << "mean,no scenes\n";
  }
  out.precision(old);
}

}  // namespace ircr::trainer
