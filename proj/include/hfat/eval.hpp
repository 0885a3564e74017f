// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hfat/dataset.hpp"
#include "hfat/model.hpp"

namespace hfat {

struct EvalAttackResult {
    AttackSpec spec;
    double accuracy = 0.0;
};

struct EvalReport {
    std::string model_id;
    std::string dataset_id;
    double natural = 0.0;
    std::vector<std::pair<std::string, EvalAttackResult>> attacks;
    std::uint64_t seed = 0;
};

/// The standard evaluation battery: fgsm, pgd20, pgd100, mim20, cw30, all with
/// step size eps/4.
std::vector<std::pair<std::string, AttackSpec>> default_eval_attacks(double eps);

/// Natural + per-attack robust accuracy on the test split. Attack RNG streams
/// derive from (seed, attack kind, steps) so crafted batches are replayable.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data,
                    const std::vector<std::pair<std::string, AttackSpec>>& attacks,
                    std::uint64_t seed);

std::string eval_report_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);

struct TransferMatrix {
    std::vector<std::string> model_ids;
    AttackSpec spec;
    std::vector<double> values; // row = source, col = target

    double at(std::size_t source, std::size_t target) const {
        return values[source * model_ids.size() + target];
    }
};

/// Entry (s, t): accuracy of model t on adversarial examples crafted against
/// model s; each source's batch is crafted once and reused for every target.
TransferMatrix transfer_matrix(const std::vector<Checkpoint>& ckpts, const Dataset& data,
                               const AttackSpec& spec, std::uint64_t seed);

void save_transfer_csv(const TransferMatrix& m, const std::filesystem::path& path);
TransferMatrix load_transfer_csv(const std::filesystem::path& path);

enum class LandscapeMode { Grad, Hider };

LandscapeMode landscape_mode_from_string(const std::string& s);
std::string to_string(LandscapeMode m);

/// Loss surface on the plane spanned by d1 (input gradient, or the hider
/// displacement) and a random direction orthogonalized against it.
struct LandscapeGrid {
    LandscapeMode mode = LandscapeMode::Grad;
    double extent = 0.0;
    std::size_t n = 0;
    std::size_t anchor_index = 0;
    int anchor_label = 0;
    std::vector<double> offsets; // n signed offsets shared by both axes
    std::vector<double> values;  // n x n, row = d1 offset, col = d2 offset

    double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

/// n must be odd so the unperturbed anchor sits exactly on the grid origin.
/// Hider mode requires the hider displacement (x_hider - x) as hider_dir.
LandscapeGrid landscape_grid(const ModelWeights& w, std::span<const double> anchor_x,
                             int anchor_y, LandscapeMode mode, double extent, std::size_t n,
                             std::uint64_t seed, std::span<const double> hider_dir = {});

void save_landscape_csv(const LandscapeGrid& grid, const std::filesystem::path& path);
LandscapeGrid load_landscape_csv(const std::filesystem::path& path);

} // namespace hfat
