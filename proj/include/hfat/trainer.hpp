// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hfat/auxiliary.hpp"
#include "hfat/dataset.hpp"
#include "hfat/hiders.hpp"
#include "hfat/model.hpp"

namespace hfat {

enum class TrainMode { At, Trades, AtHf, TradesHf };
enum class LambdaMode { Adaptive, Static };
enum class PriorMode { Fixed, Online };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);
bool is_hf(TrainMode m);

struct TrainConfig {
    TrainMode mode = TrainMode::At;
    std::size_t epochs = 60;
    std::size_t batch_size = 128;
    double lr = 0.1;
    std::vector<std::pair<std::size_t, double>> lr_drops; // (epoch, factor), ascending epochs
    double sgd_momentum = 0.9;
    double weight_decay = 5e-4;
    double eps = 0.3;
    AttackSpec train_attack{AttackKind::Pgd, 0.0, 0.0, 10, true, 1.0, 0.0};
    AttackSpec aux_attack{AttackKind::Pgd, 0.0, 0.0, 5, true, 1.0, 0.0};
    double eta_aux = 0.0; // 0: track the current main learning rate
    std::size_t aux_reverse_steps = 1;
    LambdaMode lambda_mode = LambdaMode::Adaptive;
    double lambda_static = 0.0;
    double trades_beta = 6.0;
    PriorMode prior_mode = PriorMode::Fixed;
    double prior_mu = 0.8;
    double prior_sigma = 0.2;
    std::size_t prior_warmup = 200;
    std::size_t probe_subset = 512;
    double r_max = kDefaultRatioMax;
    std::uint64_t seed = 0;
    std::size_t snapshot_every = 1;
    std::vector<std::size_t> hidden = {64, 64};

    void validate() const;
    /// Fills attack eps fields from the training budget when left at 0 and
    /// checks ordering of the drop schedule.
    void normalize();
    double lr_at_epoch(std::size_t epoch) const;
};

struct WeightPair {
    double lambda_s = 1.0;
    double lambda_a = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double natural_accuracy = 0.0;
    double robust_accuracy = 0.0;
    double mean_lambda_a = 0.0;
    double wall_seconds = 0.0;
};

struct LambdaTraceRow {
    std::size_t step;
    double lambda_s;
    double lambda_a;
};

/// lambda_A = e^{KL_aux} / (e^{KL_main} + e^{KL_aux}), evaluated in the
/// overflow-free sigmoid form; lambda_S = 1 - lambda_A.
WeightPair lambda_from_kls(double kl_main, double kl_aux);

/// Adaptive coupling over batch-mean KLs, each branch measured against its own
/// adversarial batch. No gradient flows through the weights.
WeightPair adaptive_lambda(const ModelWeights& theta, const ModelWeights& theta_hat,
                           const Tensor& x, const Tensor& x_adv_main, const Tensor& x_adv_aux);

/// Per-tensor gradient blocks in ModelWeights declaration order.
using GradVector = std::vector<std::vector<double>>;

struct SgdState {
    GradVector velocity;
    static SgdState zeros_like(const ModelWeights& w);
};

/// v <- momentum v + grad + weight_decay theta; theta <- theta - lr v.
void sgd_momentum_step(ModelWeights& theta, const GradVector& grad, SgdState& state, double lr,
                       double momentum, double weight_decay);

class Trainer {
public:
    Trainer(TrainConfig cfg, const Dataset& data);

    /// Runs one epoch (1-based index) of the configured mode.
    EpochLog train_epoch(std::size_t epoch);

    const ModelWeights& weights() const { return theta_; }
    ModelWeights& mutable_weights() { return theta_; }
    SgdState& optimizer_state() { return state_; }
    RatioAccumulator& prior_accumulator() { return accumulator_; }
    const std::vector<LambdaTraceRow>& lambda_trace() const { return trace_; }
    std::size_t steps_per_epoch() const;
    std::size_t global_step() const { return global_step_; }
    void set_global_step(std::size_t s) { global_step_ = s; }
    /// Prior used for sampling r this epoch (fixed, or online once warmed up).
    GaussianPrior active_prior() const;

private:
    struct BatchResult {
        GradVector grad;
        double loss;
        WeightPair lambda;
    };
    BatchResult batch_gradient(std::size_t epoch, std::size_t batch_index, const Tensor& xb,
                               const std::vector<int>& yb, double current_lr);
    void update_online_prior(std::size_t epoch, const ModelWeights& prev);

    TrainConfig cfg_;
    const Dataset& data_;
    Domain domain_;
    ModelWeights theta_;
    SgdState state_;
    RatioAccumulator accumulator_;
    std::vector<LambdaTraceRow> trace_;
    std::size_t global_step_ = 0;
    std::vector<std::size_t> probe_indices_;
};

/// Everything run_training leaves on disk.
struct RunArtifacts {
    std::filesystem::path dir;
    std::vector<EpochLog> epoch_logs;
};

/// Trains per the config, snapshotting every snapshot_every epochs (plus the
/// final epoch) into dir. Layout: config.json (verbatim), epoch_log.csv,
/// lambda_trace.csv, timing.csv (wall clock, excluded from byte comparisons),
/// epoch_<n>.ckpt, epoch_<n>.state. Set resume to pick up after the last
/// snapshot; the restart reproduces the uninterrupted run bit-exactly.
/// stop_after_epoch (0 = off) returns early after that epoch, simulating an
/// interrupted run.
RunArtifacts run_training(const TrainConfig& cfg, const Dataset& data,
                          const std::filesystem::path& dir, bool resume = false,
                          const std::string& config_json = "",
                          std::size_t stop_after_epoch = 0);

std::vector<EpochLog> load_epoch_log_csv(const std::filesystem::path& path);
std::vector<LambdaTraceRow> load_lambda_trace_csv(const std::filesystem::path& path);

} // namespace hfat
