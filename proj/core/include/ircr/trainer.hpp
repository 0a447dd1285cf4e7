#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ircr/data.hpp"
#include "ircr/losses.hpp"
#include "ircr/matching.hpp"
#include "ircr/metrics.hpp"
#include "ircr/model.hpp"
#include "ircr/priors.hpp"
#include "ircr/wbis.hpp"

// Mean-Teacher training loop with instance-level consistency on unlabeled scenes.
namespace ircr::trainer {

enum class ConsistencyMode {
  none,  // supervised only
  mse,   // plain feature MSE between teacher and student
  ircr,  // matching-driven + prior-driven instance consistency
};

std::string to_string(ConsistencyMode mode);
ConsistencyMode parse_mode(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double lr = 1e-4;
  /// (epoch, factor): from that epoch on the base lr is multiplied by factor.
  /// Empty selects a single decay to 10% at two thirds of the run.
  std::vector<std::pair<std::size_t, double>> lr_decay;
  double labeled_ratio = 0.125;
  std::uint64_t split_seed = 0;
  model::EmaConfig ema;
  losses::LossWeights weights;
  priors::PiacConfig piac;
  wbis::WbisParams wbis;
  double r_factor = 1.5;
  int boundary_radius = 1;
  /// Linear consistency ramp length; negative selects 10% of the epochs.
  double consistency_warmup_epochs = -1.0;
  ConsistencyMode mode = ConsistencyMode::ircr;
  double mse_weight = 1.0;
  model::ModelConfig model;
  std::uint64_t seed = 0;
  /// Written when a non-finite loss aborts training; empty disables the dump.
  std::filesystem::path dump_dir;

  void validate() const;
  double lr_at_epoch(std::size_t epoch) const;
};

/// Per-step log line.
struct StepLog {
  std::uint64_t step = 0;
  double l_sup = 0.0;
  double l_dice = 0.0;
  double l_ce = 0.0;
  double l_mse = 0.0;
  double l_msge = 0.0;
  double l_miac = 0.0;
  double l_piac = 0.0;
  double l_total = 0.0;
  std::size_t matched_pairs = 0;
  std::size_t rejected_instances = 0;
  double lr = 0.0;
};

inline constexpr const char* kRunLogHeader =
    "step,L_sup,L_dice,L_ce,L_mse,L_msge,L_miac,L_piac,L_total,matched_pairs,rejected_instances,lr";
void write_log_line(std::ostream& out, const StepLog& log);

/// Detached per-scene state from the last visit: instance maps, matches and
/// the PIAC weights, all in the scene's canonical frame.
struct CacheEntry {
  std::uint64_t step = 0;
  InstanceLabelMap teacher;
  InstanceLabelMap student;
  matching::MatchResult match;
  Tensor u;
  std::size_t rejected = 0;
};

struct StepGradients {
  model::Gradients total;
  model::Gradients supervised;
  StepLog log;
};

class Trainer {
 public:
  /// Throws std::invalid_argument when `labeled` is empty, or when PIAC is
  /// active without a prior bank.
  Trainer(TrainConfig cfg, std::vector<data::Scene> labeled, std::vector<data::Scene> unlabeled,
          std::optional<priors::PriorBank> bank);

  std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  std::size_t total_steps() const noexcept { return steps_per_epoch_ * cfg_.epochs; }
  std::uint64_t step_count() const noexcept { return step_; }

  /// One optimizer step: gradients, Adam, EMA, cache refresh.
  StepLog step();

  /// Runs every remaining step; `on_step` sees each log line.
  void run(const std::function<void(const StepLog&)>& on_step = {});

  /// Gradients the next step would apply under `weights`, without changing state.
  StepGradients peek_gradients(const losses::LossWeights& weights) const;

  const model::ModelParams& student() const noexcept { return student_; }
  const model::ModelParams& teacher() const noexcept { return teacher_; }
  const model::AdamState& adam() const noexcept { return adam_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  void set_loss_weights(const losses::LossWeights& w);
  const std::map<std::int64_t, CacheEntry>& cache() const noexcept { return cache_; }

  void save(const std::filesystem::path& dir) const;

 private:
  struct Pending {
    StepGradients grads;
    std::vector<std::pair<std::int64_t, CacheEntry>> refreshed;
    std::vector<std::int64_t> batch_ids;
  };

  Pending compute(const losses::LossWeights& weights, bool build_cache) const;
  std::vector<std::size_t> batch_indices(std::size_t pool, std::uint64_t stream, std::uint64_t step) const;
  double ramp(std::uint64_t step) const;
  void dump_batch(const Pending& p) const;

  TrainConfig cfg_;
  std::vector<data::Scene> labeled_;
  std::vector<data::Scene> unlabeled_;
  std::optional<priors::PriorBank> bank_;
  std::size_t steps_per_epoch_ = 0;
  model::ModelParams student_;
  model::ModelParams teacher_;
  model::AdamState adam_;
  std::uint64_t step_ = 0;
  std::map<std::int64_t, CacheEntry> cache_;
};

/// Student prediction -> WBIS instances.
InstanceLabelMap predict_instances(const model::ModelParams& params, const Tensor& image,
                                   const wbis::WbisParams& wbis = {});

struct EvalRow {
  std::int64_t id = 0;
  metrics::MetricReport report;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  std::optional<metrics::MetricReport> means;  // nullopt means "no scenes"
};

EvalResult evaluate(const model::ModelParams& params, const std::vector<data::Scene>& scenes,
                    const wbis::WbisParams& wbis = {});

/// CSV: image_id,aji,dice,f1_obj,tp,fp,fn plus a trailing "mean" row
/// (or "mean,no scenes" when the set is empty).
void write_eval_csv(std::ostream& out, const EvalResult& result);

}  // namespace ircr::trainer
