// SPDX-License-Identifier: Apache-2.0
#include "hfat/hiders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hfat/csv.hpp"

namespace hfat {

namespace {

bool row_is_zero(const Tensor& deltas, std::size_t row, std::size_t d) {
    for (std::size_t k = 0; k < d; ++k)
        if (deltas.at(row * d + k) != 0.0) return false;
    return true;
}

Tensor add_rows(const Tensor& x, const Tensor& deltas) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) + deltas.at(i);
    return Tensor::leaf(x.shape(), std::move(out));
}

// Input gradient of the CE loss at the clean batch.
std::vector<double> input_gradient(const ModelWeights& w, const Tensor& x,
                                   const std::vector<int>& y) {
    Tape tape;
    Tensor x_leaf = Tensor::leaf(x.shape(), {x.data().begin(), x.data().end()}, true);
    Tensor loss = tape.cross_entropy(forward(tape, w, x_leaf), y);
    tape.backward(loss);
    auto g = x_leaf.grad();
    return {g.begin(), g.end()};
}

} // namespace

std::string to_string(HiderKind k) {
    return k == HiderKind::Adversarial ? "adversarial" : "natural";
}

std::vector<HiderRecord> detect_hiders(const Checkpoint& ckpt_i, const Checkpoint& ckpt_j,
                                       const Tensor& x, const std::vector<int>& y,
                                       const Tensor& deltas) {
    if (ckpt_j.epoch <= ckpt_i.epoch)
        throw ContractError("detect_hiders: epoch_j (" + std::to_string(ckpt_j.epoch) +
                            ") must exceed epoch_i (" + std::to_string(ckpt_i.epoch) + ")");
    if (x.shape() != deltas.shape())
        throw DimensionError("detect_hiders: x and deltas shapes differ");
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (y.size() != n) throw DimensionError("detect_hiders: label count mismatch");

    const Tensor probe = add_rows(x, deltas);
    const auto pred_i = predict(ckpt_i.weights, probe);
    const auto pred_j = predict(ckpt_j.weights, probe);

    std::vector<HiderRecord> out;
    for (std::size_t s = 0; s < n; ++s) {
        if (pred_i[s] == y[s] && pred_j[s] != y[s]) {
            HiderRecord rec;
            rec.sample_index = s;
            rec.epoch_i = ckpt_i.epoch;
            rec.epoch_j = ckpt_j.epoch;
            rec.delta.assign(deltas.data().begin() + static_cast<std::ptrdiff_t>(s * d),
                             deltas.data().begin() + static_cast<std::ptrdiff_t>((s + 1) * d));
            rec.kind = row_is_zero(deltas, s, d) ? HiderKind::Natural : HiderKind::Adversarial;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::optional<double> compute_ratio(std::span<const double> x, std::span<const double> x_hider,
                                    std::span<const double> x_adv,
                                    std::span<const double> grad_dir) {
    if (x.size() != x_hider.size() || x.size() != x_adv.size() || x.size() != grad_dir.size())
        throw DimensionError("compute_ratio: vector lengths differ");
    double norm = 0.0;
    for (double v : grad_dir) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) return std::nullopt;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double g = grad_dir[k] / norm;
        num += (x_hider[k] - x[k]) * g;
        den += (x_adv[k] - x[k]) * g;
    }
    if (std::abs(den) < kRatioDenominatorFloor) return std::nullopt;
    return num / den;
}

GaussianPrior fit_gaussian(const std::vector<RatioSample>& samples) {
    if (samples.size() < 2)
        throw InsufficientDataError("fit_gaussian: need at least 2 samples, got " +
                                    std::to_string(samples.size()));
    double mean = 0.0;
    for (const auto& s : samples) mean += s.r;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& s : samples) var += (s.r - mean) * (s.r - mean);
    var /= static_cast<double>(samples.size());
    GaussianPrior prior;
    prior.mu = mean;
    prior.sigma = std::sqrt(var);
    prior.n = samples.size();
    prior.interval = samples.front().epoch_interval;
    return prior;
}

double sample_ratio(const GaussianPrior& prior, Rng& rng, double r_max) {
    if (prior.sigma < 0.0) throw ContractError("sample_ratio: negative sigma");
    const double draw = prior.sigma == 0.0 ? prior.mu : rng.normal(prior.mu, prior.sigma);
    return std::min(r_max, std::max(0.0, draw));
}

void RatioAccumulator::add(double r) {
    ++n_;
    const double d1 = r - mean_;
    mean_ += d1 / static_cast<double>(n_);
    m2_ += d1 * (r - mean_);
}

GaussianPrior RatioAccumulator::prior(std::size_t interval) const {
    GaussianPrior p;
    p.n = n_;
    p.interval = interval;
    p.mu = mean_;
    p.sigma = n_ > 0 ? std::sqrt(m2_ / static_cast<double>(n_)) : 0.0;
    return p;
}

void RatioAccumulator::restore(std::size_t n, double mean, double m2) {
    n_ = n;
    mean_ = mean;
    m2_ = m2;
}

RatioBatch collect_ratio_samples(const Checkpoint& ckpt_i, const Checkpoint& ckpt_j,
                                 const Tensor& x, const std::vector<int>& y,
                                 const AttackSpec& attack, const Domain& domain, Rng& rng,
                                 std::size_t interval) {
    // Hider candidates carry attack capability at epoch j.
    AdvBatch adv_j = run_attack(ckpt_j.weights, x, y, attack, domain, &rng);
    const auto hiders = detect_hiders(ckpt_i, ckpt_j, x, y, adv_j.delta);
    RatioBatch out;
    if (hiders.empty()) return out;

    AdvBatch adv_i = run_attack(ckpt_i.weights, x, y, attack, domain, &rng);
    const auto grad = input_gradient(ckpt_i.weights, x, y);
    const std::size_t d = x.dim(1);
    for (const auto& h : hiders) {
        const std::size_t s = h.sample_index;
        std::span<const double> xs(x.data().subspan(s * d, d));
        std::span<const double> xh(adv_j.x_adv.data().subspan(s * d, d));
        std::span<const double> xa(adv_i.x_adv.data().subspan(s * d, d));
        std::span<const double> gs(std::span<const double>(grad).subspan(s * d, d));
        if (auto r = compute_ratio(xs, xh, xa, gs))
            out.samples.push_back({*r, interval});
        else
            ++out.skipped;
    }
    return out;
}

HiderStats proportion_report(const std::vector<Checkpoint>& snapshots, const Tensor& x,
                             const std::vector<int>& y, const AttackSpec& attack,
                             const Domain& domain, Rng& rng,
                             const std::vector<std::size_t>& intervals) {
    std::map<std::size_t, const Checkpoint*> by_epoch;
    for (const auto& c : snapshots) by_epoch[c.epoch] = &c;

    HiderStats stats;
    for (const auto& [epoch, ckpt] : by_epoch) {
        // Adversarial base set: crafted against the present epoch and defended by it.
        AdvBatch adv = run_attack(ckpt->weights, x, y, attack, domain, &rng);
        const auto pred_adv = predict(ckpt->weights, adv.x_adv);
        const auto pred_nat = predict(ckpt->weights, x);
        std::vector<std::size_t> base_adv, base_nat;
        for (std::size_t s = 0; s < y.size(); ++s) {
            if (pred_adv[s] == y[s]) base_adv.push_back(s);
            if (pred_nat[s] == y[s]) base_nat.push_back(s);
        }
        for (const auto interval : intervals) {
            const auto it = by_epoch.find(epoch + interval);
            if (it == by_epoch.end()) {
                stats.gaps.emplace_back(epoch, interval);
                continue;
            }
            const Checkpoint& later = *it->second;
            const auto later_adv = predict(later.weights, adv.x_adv);
            const auto later_nat = predict(later.weights, x);
            auto proportion = [&](const std::vector<std::size_t>& base,
                                  const std::vector<int>& later_pred) {
                if (base.empty()) return 0.0;
                std::size_t fail = 0;
                for (auto s : base)
                    if (later_pred[s] != y[s]) ++fail;
                return static_cast<double>(fail) / static_cast<double>(base.size());
            };
            stats.rows.push_back(
                {epoch, interval, HiderKind::Adversarial, proportion(base_adv, later_adv)});
            stats.rows.push_back(
                {epoch, interval, HiderKind::Natural, proportion(base_nat, later_nat)});
        }
    }
    return stats;
}

std::map<std::size_t, std::set<std::size_t>> occurrence_indices(
    const std::vector<Checkpoint>& earlier, const Checkpoint& probe, const Tensor& failed_x,
    const std::vector<int>& failed_y, const std::vector<std::size_t>& failed_indices) {
    if (failed_y.size() != failed_indices.size() || failed_x.dim(0) != failed_y.size())
        throw DimensionError("occurrence_indices: failed set sizes disagree");
    std::map<std::size_t, std::set<std::size_t>> out;
    for (const auto& ckpt : earlier) {
        if (ckpt.epoch >= probe.epoch) continue;
        const auto pred = predict(ckpt.weights, failed_x);
        auto& bucket = out[ckpt.epoch];
        for (std::size_t s = 0; s < failed_y.size(); ++s)
            if (pred[s] == failed_y[s]) bucket.insert(failed_indices[s]);
    }
    return out;
}

void save_proportions_csv(const HiderStats& stats, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_proportions_csv: cannot open " + path.string());
    os << "present_epoch,interval,kind,proportion\n";
    for (const auto& row : stats.rows)
        os << row.present_epoch << ',' << row.interval << ',' << to_string(row.kind) << ','
           << format_g17(row.proportion) << "\n";
}

HiderStats load_proportions_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_proportions_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "present_epoch,interval,kind,proportion")
        throw DataError("line 1: bad proportions header");
    HiderStats stats;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 4)
            throw DataError("line " + std::to_string(line_no) + ": expected 4 fields");
        HiderStats::Row row{};
        row.present_epoch = static_cast<std::size_t>(parse_long(cells[0], line_no));
        row.interval = static_cast<std::size_t>(parse_long(cells[1], line_no));
        if (cells[2] == "adversarial")
            row.kind = HiderKind::Adversarial;
        else if (cells[2] == "natural")
            row.kind = HiderKind::Natural;
        else
            throw DataError("line " + std::to_string(line_no) + ": bad kind '" + cells[2] + "'");
        row.proportion = parse_double(cells[3], line_no);
        stats.rows.push_back(row);
    }
    return stats;
}

void save_occurrences_csv(const std::map<std::size_t, std::set<std::size_t>>& occ,
                          std::size_t probe_epoch, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_occurrences_csv: cannot open " + path.string());
    os << "probe_epoch,earlier_epoch,sample_index\n";
    for (const auto& [epoch, indices] : occ)
        for (const auto s : indices) os << probe_epoch << ',' << epoch << ',' << s << "\n";
}

void save_ratio_samples_csv(const std::vector<RatioSample>& samples,
                            const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_ratio_samples_csv: cannot open " + path.string());
    os << "r,interval\n";
    for (const auto& s : samples) os << format_g17(s.r) << ',' << s.epoch_interval << "\n";
}

std::vector<RatioSample> load_ratio_samples_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_ratio_samples_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "r,interval")
        throw DataError("line 1: bad ratio header");
    std::vector<RatioSample> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 2)
            throw DataError("line " + std::to_string(line_no) + ": expected 2 fields");
        out.push_back({parse_double(cells[0], line_no),
                       static_cast<std::size_t>(parse_long(cells[1], line_no))});
    }
    return out;
}

} // namespace hfat
