// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hfat/attacks.hpp"
#include "hfat/tensor.hpp"

namespace hfat {

enum class DatasetKind { Moons, Blobs, Csv };

DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind k);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Moons;
    std::size_t n_samples = 3000;
    std::size_t n_classes = 2;
    double noise = 0.2;
    std::size_t dim = 2;
    double train_fraction = 2.0 / 3.0;
    std::uint64_t seed = 0;
    Domain domain; // unbounded by default
    std::string path; // source file for the csv kind

    void validate() const;
    std::string id() const;
};

struct Dataset {
    DatasetSpec spec;
    Tensor x_train;
    std::vector<int> y_train;
    Tensor x_test;
    std::vector<int> y_test;

    std::size_t dim() const { return x_train.dim(1); }
    std::size_t n_classes() const { return spec.n_classes; }
};

/// Deterministic samples + labels; moons/blobs are parametric generators, csv
/// loads a file previously written by save_dataset_csv.
Dataset make_dataset(const DatasetSpec& spec);

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path, const DatasetSpec& spec);

} // namespace hfat
