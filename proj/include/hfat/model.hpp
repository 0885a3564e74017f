// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hfat/rng.hpp"
#include "hfat/tensor.hpp"

namespace hfat {

/// Fully-connected classifier architecture: input dim, hidden sizes, class
/// count. Hidden layers use the rectifier; the last layer emits raw logits.
struct MlpSpec {
    std::vector<std::size_t> layer_sizes;

    void validate() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    bool operator==(const MlpSpec&) const = default;
};

struct ModelWeights {
    MlpSpec spec;
    std::vector<Tensor> weights; // per layer, fan_in x fan_out
    std::vector<Tensor> biases;  // per layer, fan_out
    std::size_t epoch_tag = 0;

    /// Deep copy with fresh buffers.
    ModelWeights clone() const;
    void set_requires_grad(bool rg);
    void zero_grad();
    /// All weight and bias tensors in declaration order.
    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
};

struct Checkpoint {
    MlpSpec spec;
    ModelWeights weights;
    std::size_t epoch = 0;
    std::uint64_t seed = 0;
    std::uint32_t format_version = 1;
};

/// He-normal weights (scale sqrt(2/fan_in)), zero biases, deterministic in seed.
ModelWeights init_model(const MlpSpec& spec, std::uint64_t seed);

/// Affine-rectifier stack ending in raw logits.
Tensor forward(Tape& tape, const ModelWeights& w, const Tensor& x);

/// Argmax over logits per row; ties break toward the smallest class index.
std::vector<int> predict(const ModelWeights& w, const Tensor& x);

/// Logits without recording gradients.
Tensor forward_nograd(const ModelWeights& w, const Tensor& x);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace hfat
