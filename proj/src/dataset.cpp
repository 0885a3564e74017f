// SPDX-License-Identifier: Apache-2.0
#include "hfat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "hfat/csv.hpp"
#include "hfat/rng.hpp"

namespace hfat {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct RawData {
    std::vector<double> x; // n x dim
    std::vector<int> y;
};

RawData gen_moons(const DatasetSpec& spec, Rng& rng) {
    const std::size_t n0 = (spec.n_samples + 1) / 2;
    const std::size_t n1 = spec.n_samples - n0;
    RawData raw;
    raw.x.reserve(spec.n_samples * 2);
    raw.y.reserve(spec.n_samples);
    for (std::size_t i = 0; i < n0; ++i) {
        const double t = n0 > 1 ? kPi * static_cast<double>(i) / static_cast<double>(n0 - 1) : 0.0;
        raw.x.push_back(std::cos(t));
        raw.x.push_back(std::sin(t));
        raw.y.push_back(0);
    }
    for (std::size_t i = 0; i < n1; ++i) {
        const double t = n1 > 1 ? kPi * static_cast<double>(i) / static_cast<double>(n1 - 1) : 0.0;
        raw.x.push_back(1.0 - std::cos(t));
        raw.x.push_back(0.5 - std::sin(t));
        raw.y.push_back(1);
    }
    if (spec.noise > 0.0)
        for (double& v : raw.x) v += rng.normal(0.0, spec.noise);
    return raw;
}

RawData gen_blobs(const DatasetSpec& spec, Rng& rng) {
    Rng center_rng(derive_seed(spec.seed, "blob_centers"));
    std::vector<std::vector<double>> centers;
    const double lo = spec.domain.bounded ? spec.domain.lo + 0.15 * (spec.domain.hi - spec.domain.lo)
                                          : -1.0;
    const double hi = spec.domain.bounded ? spec.domain.hi - 0.15 * (spec.domain.hi - spec.domain.lo)
                                          : 1.0;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        std::vector<double> center(spec.dim);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            for (double& v : center) v = center_rng.uniform(lo, hi);
            double min_d = std::numeric_limits<double>::infinity();
            for (const auto& other : centers) {
                double d2 = 0.0;
                for (std::size_t k = 0; k < spec.dim; ++k)
                    d2 += (center[k] - other[k]) * (center[k] - other[k]);
                min_d = std::min(min_d, std::sqrt(d2));
            }
            if (min_d >= 0.25 * (hi - lo)) break;
        }
        centers.push_back(center);
    }
    RawData raw;
    raw.x.reserve(spec.n_samples * spec.dim);
    raw.y.reserve(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const auto c = i % spec.n_classes;
        for (std::size_t k = 0; k < spec.dim; ++k) {
            double v = centers[c][k];
            if (spec.noise > 0.0) v += rng.normal(0.0, spec.noise);
            raw.x.push_back(spec.domain.clamp(v));
        }
        raw.y.push_back(static_cast<int>(c));
    }
    return raw;
}

} // namespace

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "moons") return DatasetKind::Moons;
    if (s == "blobs") return DatasetKind::Blobs;
    if (s == "csv") return DatasetKind::Csv;
    throw SpecError("unknown dataset kind: " + s);
}

std::string to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::Moons: return "moons";
    case DatasetKind::Blobs: return "blobs";
    case DatasetKind::Csv: return "csv";
    }
    return "?";
}

void DatasetSpec::validate() const {
    if (kind == DatasetKind::Csv) {
        if (path.empty()) throw SpecError("dataset spec: csv kind needs a path");
        return;
    }
    if (n_samples < 2) throw SpecError("dataset spec: need at least 2 samples");
    if (n_classes < 2) throw SpecError("dataset spec: need at least 2 classes");
    if (kind == DatasetKind::Moons && (dim != 2 || n_classes != 2))
        throw SpecError("dataset spec: moons is 2-dimensional with 2 classes");
    if (noise < 0.0) throw SpecError("dataset spec: noise must be >= 0");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw SpecError("dataset spec: train_fraction must be in (0, 1)");
    if (dim == 0) throw SpecError("dataset spec: dim must be positive");
}

std::string DatasetSpec::id() const {
    return to_string(kind) + "_n" + std::to_string(n_samples) + "_c" + std::to_string(n_classes) +
           "_d" + std::to_string(dim) + "_s" + std::to_string(seed);
}

Dataset make_dataset(const DatasetSpec& spec) {
    spec.validate();
    if (spec.kind == DatasetKind::Csv) return load_dataset_csv(spec.path, spec);

    Rng rng(derive_seed(spec.seed, "dataset_noise"));
    RawData raw = spec.kind == DatasetKind::Moons ? gen_moons(spec, rng) : gen_blobs(spec, rng);

    std::vector<std::size_t> order(spec.n_samples);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(spec.seed, "dataset_split"));
    split_rng.shuffle(order);

    const auto n_train =
        static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(spec.n_samples)));
    if (n_train == 0 || n_train == spec.n_samples)
        throw SpecError("dataset spec: split leaves an empty train or test set");

    Dataset ds;
    ds.spec = spec;
    std::vector<double> xtr, xte;
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const std::size_t src = order[i];
        auto& dst_x = i < n_train ? xtr : xte;
        auto& dst_y = i < n_train ? ds.y_train : ds.y_test;
        for (std::size_t k = 0; k < spec.dim; ++k) dst_x.push_back(raw.x[src * spec.dim + k]);
        dst_y.push_back(raw.y[src]);
    }
    ds.x_train = Tensor::leaf({ds.y_train.size(), spec.dim}, std::move(xtr));
    ds.x_test = Tensor::leaf({ds.y_test.size(), spec.dim}, std::move(xte));
    return ds;
}

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_dataset_csv: cannot open " + path.string());
    const std::size_t d = ds.dim();
    os << "split,label";
    for (std::size_t k = 0; k < d; ++k) os << ",x" << k;
    os << "\n";
    auto dump = [&](const char* split, const Tensor& x, const std::vector<int>& y) {
        for (std::size_t i = 0; i < y.size(); ++i) {
            os << split << ',' << y[i];
            for (std::size_t k = 0; k < d; ++k) os << ',' << format_g17(x.at(i * d + k));
            os << "\n";
        }
    };
    dump("train", ds.x_train, ds.y_train);
    dump("test", ds.x_test, ds.y_test);
    if (!os) throw DataError("save_dataset_csv: write failed for " + path.string());
}

Dataset load_dataset_csv(const std::filesystem::path& path, const DatasetSpec& spec) {
    std::ifstream is(path);
    if (!is) throw DataError("load_dataset_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw DataError("load_dataset_csv: empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "split" || header[1] != "label")
        throw DataError("line 1: expected header 'split,label,x0,...'");
    const std::size_t d = header.size() - 2;

    std::vector<double> xtr, xte;
    std::vector<int> ytr, yte;
    int max_label = 0;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(cells.size()));
        const bool is_train = cells[0] == "train";
        if (!is_train && cells[0] != "test")
            throw DataError("line " + std::to_string(line_no) + ": bad split '" + cells[0] + "'");
        const long label = parse_long(cells[1], line_no);
        if (label < 0) throw DataError("line " + std::to_string(line_no) + ": negative label");
        max_label = std::max(max_label, static_cast<int>(label));
        auto& dst_x = is_train ? xtr : xte;
        auto& dst_y = is_train ? ytr : yte;
        for (std::size_t k = 0; k < d; ++k) dst_x.push_back(parse_double(cells[2 + k], line_no));
        dst_y.push_back(static_cast<int>(label));
    }
    if (ytr.empty() || yte.empty())
        throw DataError("load_dataset_csv: file must contain train and test rows");

    Dataset ds;
    ds.spec = spec;
    ds.spec.kind = DatasetKind::Csv;
    ds.spec.path = path.string();
    ds.spec.dim = d;
    ds.spec.n_samples = ytr.size() + yte.size();
    ds.spec.n_classes = std::max<std::size_t>(spec.n_classes, static_cast<std::size_t>(max_label) + 1);
    ds.x_train = Tensor::leaf({ytr.size(), d}, std::move(xtr));
    ds.x_test = Tensor::leaf({yte.size(), d}, std::move(xte));
    ds.y_train = std::move(ytr);
    ds.y_test = std::move(yte);
    return ds;
}

} // namespace hfat
