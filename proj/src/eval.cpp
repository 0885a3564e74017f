// SPDX-License-Identifier: Apache-2.0
#include "hfat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "hfat/config_json.hpp"
#include "hfat/csv.hpp"
#include "hfat/kernels.hpp"

namespace hfat {

namespace {

double match_rate(const std::vector<int>& pred, const std::vector<int>& y) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (pred[i] == y[i]) ++hit;
    return y.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(y.size());
}

Rng attack_stream(std::uint64_t seed, const AttackSpec& spec) {
    return Rng(derive_seed(seed, "eval_attack", to_string(spec.kind), spec.steps));
}

// Per-row CE losses of a logits matrix.
std::vector<double> row_losses(const Tensor& logits, const std::vector<int>& y) {
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<double> logp(rows * cols);
    kernels::log_softmax_rows(logits.data().data(), logp.data(), rows, cols);
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i)
        out[i] = -logp[i * cols + static_cast<std::size_t>(y[i])];
    return out;
}

} // namespace

std::vector<std::pair<std::string, AttackSpec>> default_eval_attacks(double eps) {
    const double alpha = eps / 4.0;
    std::vector<std::pair<std::string, AttackSpec>> out;
    out.push_back({"fgsm", {AttackKind::Fgsm, eps, alpha, 1, false, 1.0, 0.0}});
    out.push_back({"pgd20", {AttackKind::Pgd, eps, alpha, 20, false, 1.0, 0.0}});
    out.push_back({"pgd100", {AttackKind::Pgd, eps, alpha, 100, false, 1.0, 0.0}});
    out.push_back({"mim20", {AttackKind::Mim, eps, alpha, 20, false, 1.0, 0.0}});
    out.push_back({"cw30", {AttackKind::Cw, eps, alpha, 30, false, 1.0, 0.0}});
    return out;
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data,
                    const std::vector<std::pair<std::string, AttackSpec>>& attacks,
                    std::uint64_t seed) {
    EvalReport report;
    report.model_id = "epoch_" + std::to_string(ckpt.epoch) + "_seed_" + std::to_string(ckpt.seed);
    report.dataset_id = data.spec.id();
    report.seed = seed;
    report.natural = match_rate(predict(ckpt.weights, data.x_test), data.y_test);
    for (const auto& [name, spec] : attacks) {
        Rng rng = attack_stream(seed, spec);
        AdvBatch adv = run_attack(ckpt.weights, data.x_test, data.y_test, spec, data.spec.domain,
                                  &rng);
        EvalAttackResult res;
        res.spec = spec;
        res.accuracy = match_rate(predict(ckpt.weights, adv.x_adv), data.y_test);
        report.attacks.emplace_back(name, res);
    }
    return report;
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["model"] = report.model_id;
    j["dataset"] = report.dataset_id;
    j["seed"] = report.seed;
    j["natural"] = report.natural;
    nlohmann::ordered_json attacks = nlohmann::ordered_json::object();
    for (const auto& [name, res] : report.attacks) {
        nlohmann::ordered_json entry;
        entry["spec"] = nlohmann::json(res.spec);
        entry["accuracy"] = res.accuracy;
        attacks[name] = entry;
    }
    j["attacks"] = attacks;
    return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
    const auto j = nlohmann::ordered_json::parse(text);
    EvalReport report;
    report.model_id = j.at("model").get<std::string>();
    report.dataset_id = j.at("dataset").get<std::string>();
    report.seed = j.value("seed", std::uint64_t{0});
    report.natural = j.at("natural").get<double>();
    for (const auto& [name, entry] : j.at("attacks").items()) {
        EvalAttackResult res;
        res.spec = nlohmann::json(entry.at("spec")).get<AttackSpec>();
        res.accuracy = entry.at("accuracy").get<double>();
        report.attacks.emplace_back(name, res);
    }
    return report;
}

TransferMatrix transfer_matrix(const std::vector<Checkpoint>& ckpts, const Dataset& data,
                               const AttackSpec& spec, std::uint64_t seed) {
    if (ckpts.empty()) throw ContractError("transfer_matrix: need at least one checkpoint");
    for (const auto& c : ckpts)
        if (c.spec.input_dim() != data.dim())
            throw ContractError("transfer_matrix: checkpoint input dim does not match dataset");
    TransferMatrix m;
    m.spec = spec;
    for (std::size_t i = 0; i < ckpts.size(); ++i)
        m.model_ids.push_back("m" + std::to_string(i) + "_epoch_" +
                              std::to_string(ckpts[i].epoch) + "_seed_" +
                              std::to_string(ckpts[i].seed));
    m.values.assign(ckpts.size() * ckpts.size(), 0.0);
    for (std::size_t s = 0; s < ckpts.size(); ++s) {
        // Same stream derivation as evaluate() so the diagonal reproduces the
        // white-box robust accuracy bit-exactly.
        Rng rng = attack_stream(seed, spec);
        AdvBatch adv =
            run_attack(ckpts[s].weights, data.x_test, data.y_test, spec, data.spec.domain, &rng);
        for (std::size_t t = 0; t < ckpts.size(); ++t)
            m.values[s * ckpts.size() + t] =
                match_rate(predict(ckpts[t].weights, adv.x_adv), data.y_test);
    }
    return m;
}

void save_transfer_csv(const TransferMatrix& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_transfer_csv: cannot open " + path.string());
    os << "source_target";
    for (const auto& id : m.model_ids) os << ',' << id;
    os << "\n";
    const std::size_t n = m.model_ids.size();
    for (std::size_t s = 0; s < n; ++s) {
        os << m.model_ids[s];
        for (std::size_t t = 0; t < n; ++t) os << ',' << format_g17(m.at(s, t));
        os << "\n";
    }
}

TransferMatrix load_transfer_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_transfer_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw DataError("load_transfer_csv: empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "source_target")
        throw DataError("line 1: bad transfer header");
    TransferMatrix m;
    m.model_ids.assign(header.begin() + 1, header.end());
    const std::size_t n = m.model_ids.size();
    m.values.assign(n * n, 0.0);
    std::size_t line_no = 1, row = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != n + 1 || row >= n)
            throw DataError("line " + std::to_string(line_no) + ": bad transfer row");
        for (std::size_t t = 0; t < n; ++t)
            m.values[row * n + t] = parse_double(cells[t + 1], line_no);
        ++row;
    }
    if (row != n) throw DataError("load_transfer_csv: expected " + std::to_string(n) + " rows");
    return m;
}

LandscapeMode landscape_mode_from_string(const std::string& s) {
    if (s == "grad") return LandscapeMode::Grad;
    if (s == "hider") return LandscapeMode::Hider;
    throw SpecError("unknown landscape mode: " + s);
}

std::string to_string(LandscapeMode m) { return m == LandscapeMode::Grad ? "grad" : "hider"; }

LandscapeGrid landscape_grid(const ModelWeights& w, std::span<const double> anchor_x,
                             int anchor_y, LandscapeMode mode, double extent, std::size_t n,
                             std::uint64_t seed, std::span<const double> hider_dir) {
    if (extent <= 0.0) throw ContractError("landscape_grid: extent must be positive");
    if (n < 3 || n % 2 == 0) throw ContractError("landscape_grid: n must be odd and >= 3");
    const std::size_t d = anchor_x.size();
    if (d != w.spec.input_dim()) throw DimensionError("landscape_grid: anchor dim mismatch");

    std::vector<double> d1(d);
    if (mode == LandscapeMode::Grad) {
        if (!hider_dir.empty())
            throw ContractError("landscape_grid: hider_dir given in grad mode");
        Tape tape;
        Tensor x_leaf = Tensor::leaf({1, d}, {anchor_x.begin(), anchor_x.end()}, true);
        Tensor loss = tape.cross_entropy(forward(tape, w, x_leaf), {anchor_y});
        tape.backward(loss);
        auto g = x_leaf.grad();
        std::copy(g.begin(), g.end(), d1.begin());
    } else {
        if (hider_dir.size() != d)
            throw ContractError("landscape_grid: hider mode requires the hider displacement");
        std::copy(hider_dir.begin(), hider_dir.end(), d1.begin());
    }
    double norm1 = 0.0;
    for (double v : d1) norm1 += v * v;
    norm1 = std::sqrt(norm1);
    if (norm1 == 0.0) throw ContractError("landscape_grid: direction d1 has zero norm");
    for (double& v : d1) v /= norm1;

    // Random direction orthogonalized against d1, resampled if degenerate.
    Rng rng(derive_seed(seed, "landscape_dir"));
    std::vector<double> d2(d);
    for (int attempt = 0; attempt < 64; ++attempt) {
        double dot = 0.0, norm2 = 0.0;
        for (double& v : d2) v = rng.normal(0.0, 1.0);
        for (std::size_t k = 0; k < d; ++k) dot += d2[k] * d1[k];
        for (std::size_t k = 0; k < d; ++k) d2[k] -= dot * d1[k];
        for (double v : d2) norm2 += v * v;
        norm2 = std::sqrt(norm2);
        if (norm2 > 1e-9) {
            for (double& v : d2) v /= norm2;
            break;
        }
        if (attempt == 63)
            throw NumericError("landscape_grid: could not build an orthogonal direction");
    }

    LandscapeGrid grid;
    grid.mode = mode;
    grid.extent = extent;
    grid.n = n;
    grid.anchor_label = anchor_y;
    const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(n - 1) / 2;
    grid.offsets.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        grid.offsets[i] =
            static_cast<double>(static_cast<std::ptrdiff_t>(i) - c) * (extent / static_cast<double>(c));

    std::vector<double> points;
    points.reserve(n * n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < d; ++k)
                points.push_back(anchor_x[k] + grid.offsets[i] * d1[k] + grid.offsets[j] * d2[k]);
    Tensor batch = Tensor::leaf({n * n, d}, std::move(points));
    Tensor logits = forward_nograd(w, batch);
    grid.values = row_losses(logits, std::vector<int>(n * n, anchor_y));
    return grid;
}

void save_landscape_csv(const LandscapeGrid& grid, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_landscape_csv: cannot open " + path.string());
    os << "# mode=" << to_string(grid.mode) << ",extent=" << format_g17(grid.extent)
       << ",n=" << grid.n << ",anchor_index=" << grid.anchor_index
       << ",anchor_label=" << grid.anchor_label << "\n";
    os << "d1_offset_over_d2_offset";
    for (std::size_t j = 0; j < grid.n; ++j) os << ',' << format_g17(grid.offsets[j]);
    os << "\n";
    for (std::size_t i = 0; i < grid.n; ++i) {
        os << format_g17(grid.offsets[i]);
        for (std::size_t j = 0; j < grid.n; ++j) os << ',' << format_g17(grid.at(i, j));
        os << "\n";
    }
}

LandscapeGrid load_landscape_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_landscape_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("# mode=", 0) != 0)
        throw DataError("line 1: bad landscape metadata line");
    LandscapeGrid grid;
    {
        const auto fields = split_csv_line(line.substr(2));
        for (const auto& f : fields) {
            const auto pos = f.find('=');
            if (pos == std::string::npos) throw DataError("line 1: bad metadata field " + f);
            const auto key = f.substr(0, pos), val = f.substr(pos + 1);
            if (key == "mode")
                grid.mode = landscape_mode_from_string(val);
            else if (key == "extent")
                grid.extent = parse_double(val, 1);
            else if (key == "n")
                grid.n = static_cast<std::size_t>(parse_long(val, 1));
            else if (key == "anchor_index")
                grid.anchor_index = static_cast<std::size_t>(parse_long(val, 1));
            else if (key == "anchor_label")
                grid.anchor_label = static_cast<int>(parse_long(val, 1));
        }
    }
    if (!std::getline(is, line)) throw DataError("load_landscape_csv: missing header row");
    auto header = split_csv_line(line);
    if (header.size() != grid.n + 1) throw DataError("line 2: header width mismatch");
    grid.offsets.resize(grid.n);
    for (std::size_t j = 0; j < grid.n; ++j) grid.offsets[j] = parse_double(header[j + 1], 2);
    grid.values.assign(grid.n * grid.n, 0.0);
    std::size_t line_no = 2, row = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != grid.n + 1 || row >= grid.n)
            throw DataError("line " + std::to_string(line_no) + ": bad landscape row");
        for (std::size_t j = 0; j < grid.n; ++j)
            grid.values[row * grid.n + j] = parse_double(cells[j + 1], line_no);
        ++row;
    }
    if (row != grid.n) throw DataError("load_landscape_csv: row count mismatch");
    return grid;
}

} // namespace hfat
