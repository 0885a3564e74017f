// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "hfat/attacks.hpp"
#include "hfat/model.hpp"

namespace hfat {

enum class HiderKind { Adversarial, Natural };

/// One sample that is defended (or correctly classified) by the epoch-i
/// snapshot and misclassified by the epoch-j snapshot.
struct HiderRecord {
    std::size_t sample_index = 0;
    std::size_t epoch_i = 0;
    std::size_t epoch_j = 0;
    std::vector<double> delta; // all-zero for natural hiders
    HiderKind kind = HiderKind::Adversarial;
};

struct RatioSample {
    double r = 0.0;
    std::size_t epoch_interval = 1;
};

/// Gaussian over the relative-position ratio r; interval tags which epoch gap
/// the samples came from.
struct GaussianPrior {
    double mu = 0.0;
    double sigma = 0.0;
    std::size_t n = 0;
    std::size_t interval = 1;
};

struct HiderStats {
    struct Row {
        std::size_t present_epoch;
        std::size_t interval;
        HiderKind kind;
        double proportion;
    };
    std::vector<Row> rows;
    std::vector<std::pair<std::size_t, std::size_t>> gaps; // (present_epoch, interval) lacking a snapshot
};

std::string to_string(HiderKind k);

/// Exactly the samples classified correctly at epoch i and wrongly at epoch j,
/// evaluated at x + delta. Rows whose delta is exactly zero are natural kind.
std::vector<HiderRecord> detect_hiders(const Checkpoint& ckpt_i, const Checkpoint& ckpt_j,
                                       const Tensor& x, const std::vector<int>& y,
                                       const Tensor& deltas);

inline constexpr double kRatioDenominatorFloor = 1e-8;

/// r = <x_hider - x, g_hat> / <x_adv - x, g_hat>. Returns nullopt (sample
/// skipped) when the denominator projection is below the floor.
std::optional<double> compute_ratio(std::span<const double> x, std::span<const double> x_hider,
                                    std::span<const double> x_adv,
                                    std::span<const double> grad_dir);

/// mu = sample mean, sigma = population standard deviation (MLE).
GaussianPrior fit_gaussian(const std::vector<RatioSample>& samples);

inline constexpr double kDefaultRatioMax = 2.0;

/// One draw from N(mu, sigma^2) clipped to [0, r_max].
double sample_ratio(const GaussianPrior& prior, Rng& rng, double r_max = kDefaultRatioMax);

/// Streaming accumulator behind the online prior (Welford form).
class RatioAccumulator {
public:
    void add(double r);
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double m2() const { return m2_; }
    GaussianPrior prior(std::size_t interval) const;
    void restore(std::size_t n, double mean, double m2);

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Interval-1 hider ratios between two consecutive snapshots: hider candidates
/// are the j-model's adversarial examples that the i-model defends; the
/// denominator uses the i-model's own adversarial examples and its input
/// gradient at x. Signed projections are used. Also returns the number of
/// samples skipped by the denominator floor.
struct RatioBatch {
    std::vector<RatioSample> samples;
    std::size_t skipped = 0;
};
RatioBatch collect_ratio_samples(const Checkpoint& ckpt_i, const Checkpoint& ckpt_j,
                                 const Tensor& x, const std::vector<int>& y,
                                 const AttackSpec& attack, const Domain& domain, Rng& rng,
                                 std::size_t interval = 1);

/// Fig.-2-style proportions: of the adversarial examples crafted and defended
/// at each present epoch (and separately the correctly classified natural
/// samples), the fraction that fails `interval` epochs later.
HiderStats proportion_report(const std::vector<Checkpoint>& snapshots, const Tensor& x,
                             const std::vector<int>& y, const AttackSpec& attack,
                             const Domain& domain, Rng& rng,
                             const std::vector<std::size_t>& intervals = {1, 5, 20, 50});

/// For each earlier snapshot, the indices of failed_set members it defends.
/// failed_set rows are evaluation points (x + delta) with their labels.
std::map<std::size_t, std::set<std::size_t>> occurrence_indices(
    const std::vector<Checkpoint>& earlier, const Checkpoint& probe, const Tensor& failed_x,
    const std::vector<int>& failed_y, const std::vector<std::size_t>& failed_indices);

void save_proportions_csv(const HiderStats& stats, const std::filesystem::path& path);
HiderStats load_proportions_csv(const std::filesystem::path& path);
void save_occurrences_csv(const std::map<std::size_t, std::set<std::size_t>>& occ,
                          std::size_t probe_epoch, const std::filesystem::path& path);
void save_ratio_samples_csv(const std::vector<RatioSample>& samples,
                            const std::filesystem::path& path);
std::vector<RatioSample> load_ratio_samples_csv(const std::filesystem::path& path);

} // namespace hfat
