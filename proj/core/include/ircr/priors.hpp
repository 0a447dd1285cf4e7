#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ircr/tensor.hpp"

// Morphological prior for pseudo-label quality: handcrafted per-instance
// features, a per-channel Gaussian KDE, instance likelihoods and the PIAC
// weighting mask.
namespace ircr::priors {

inline constexpr std::size_t kFeatureCount = 5;

enum class Feature : std::size_t { area = 0, solidity = 1, circularity = 2, intensity = 3, extent = 4 };

struct FeatureVector {
  std::array<double, kFeatureCount> z{};

  double area() const { return z[0]; }
  double solidity() const { return z[1]; }
  double circularity() const { return z[2]; }
  double intensity() const { return z[3]; }
  double extent() const { return z[4]; }
};

/// Area, convex-hull solidity, 4*pi*A/P^2 circularity (P = boundary edge count),
/// mean H-channel intensity and bounding-box extent for instance k.
FeatureVector extract_features(const InstanceLabelMap& labels, std::int32_t k, const Tensor& h_channel);

/// Features for every instance 1..K (index i holds label i+1).
std::vector<FeatureVector> extract_all_features(const InstanceLabelMap& labels, const Tensor& h_channel);

struct ChannelModel {
  std::vector<double> samples;  // normalized to [0,1] by [min, max]
  double bandwidth = 0.0;
  double min = 0.0;
  double max = 1.0;
};

/// Per-channel KDE state. Immutable after construction.
class PriorBank {
 public:
  PriorBank() = default;
  /// Builds a bank from raw feature samples and explicit per-channel
  /// bandwidths / bounds; samples are normalized with the given bounds.
  PriorBank(std::vector<FeatureVector> raw_samples, std::array<double, kFeatureCount> bandwidths,
            std::array<double, kFeatureCount> mins, std::array<double, kFeatureCount> maxs);

  std::size_t sample_count() const noexcept { return raw_.size(); }
  const ChannelModel& channel(std::size_t idx) const;
  const std::vector<FeatureVector>& raw_samples() const noexcept { return raw_; }

  double normalize(std::size_t channel, double raw_value) const;

 private:
  std::vector<FeatureVector> raw_;
  std::array<ChannelModel, kFeatureCount> channels_{};
};

/// `std::nullopt` selects Silverman's rule 1.06*sigma*N^(-1/5) (floored at 1e-3)
/// on the normalized samples; a value fixes h for every channel.
PriorBank fit_kde(const std::vector<FeatureVector>& samples, std::optional<double> fixed_bandwidth = std::nullopt);

/// Gaussian KDE at normalized coordinate x on one channel.
double density(const PriorBank& bank, std::size_t channel, double x);

/// Mean of the channel densities at the clamped, normalized features.
double score_instance(const PriorBank& bank, const FeatureVector& z);

struct PiacConfig {
  double tau = 0.35;
  double w = 2.0;

  void validate() const;
};

/// 0 on pixels of instances scoring below tau, w everywhere else.
Tensor piac_mask(const InstanceLabelMap& labels, const std::vector<double>& scores, const PiacConfig& cfg = {});

// Prior bank text file: "IRCR-PRIORS v1", "N=<count>", five
// "channel=<i> h=<h> min=<lo> max=<hi>" lines, then CSV rows of raw features.
void write_bank(std::ostream& out, const PriorBank& bank);
PriorBank read_bank(std::istream& in);
void save_bank(const std::filesystem::path& path, const PriorBank& bank);
PriorBank load_bank(const std::filesystem::path& path);

}  // namespace ircr::priors
