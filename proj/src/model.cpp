// SPDX-License-Identifier: Apache-2.0
#include "hfat/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace hfat {

namespace {

constexpr char kMagic[8] = {'H', 'F', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_block(std::ostream& os, std::span<const double> values) {
    static_assert(sizeof(double) == 8);
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_u64(os, bits);
    }
}

void read_f64_block(std::istream& is, std::span<double> values) {
    for (double& v : values) {
        std::uint64_t bits = read_u64(is);
        std::memcpy(&v, &bits, 8);
    }
}

} // namespace

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2)
        throw SpecError("model spec: need at least input and output sizes");
    for (auto s : layer_sizes)
        if (s == 0) throw SpecError("model spec: layer size 0");
}

ModelWeights ModelWeights::clone() const {
    ModelWeights out;
    out.spec = spec;
    out.epoch_tag = epoch_tag;
    out.weights.reserve(weights.size());
    out.biases.reserve(biases.size());
    for (const auto& w : weights) out.weights.push_back(w.clone());
    for (const auto& b : biases) out.biases.push_back(b.clone());
    return out;
}

void ModelWeights::set_requires_grad(bool rg) {
    for (auto* t : tensors()) t->set_requires_grad(rg);
}

void ModelWeights::zero_grad() {
    for (auto* t : tensors()) t->zero_grad();
}

std::vector<Tensor*> ModelWeights::tensors() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

std::vector<const Tensor*> ModelWeights::tensors() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

ModelWeights init_model(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelWeights w;
    w.spec = spec;
    Rng rng(derive_seed(seed, "model_init"));
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t fan_in = spec.layer_sizes[l];
        const std::size_t fan_out = spec.layer_sizes[l + 1];
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        std::vector<double> wd(fan_in * fan_out);
        for (double& v : wd) v = rng.normal(0.0, scale);
        w.weights.push_back(Tensor::leaf({fan_in, fan_out}, std::move(wd)));
        w.biases.push_back(Tensor::zeros({fan_out}));
    }
    return w;
}

Tensor forward(Tape& tape, const ModelWeights& w, const Tensor& x) {
    if (x.shape().size() != 2 || x.dim(1) != w.spec.input_dim())
        throw DimensionError("forward: input must be batch x " +
                             std::to_string(w.spec.input_dim()));
    Tensor h = x;
    const std::size_t last = w.weights.size() - 1;
    for (std::size_t l = 0; l < w.weights.size(); ++l) {
        h = tape.add_bias(tape.matmul(h, w.weights[l]), w.biases[l]);
        if (l != last) h = tape.relu(h);
    }
    return h;
}

Tensor forward_nograd(const ModelWeights& w, const Tensor& x) {
    Tape tape;
    Tensor x_plain = Tensor::leaf(x.shape(), {x.data().begin(), x.data().end()}, false);
    return forward(tape, w, x_plain);
}

std::vector<int> predict(const ModelWeights& w, const Tensor& x) {
    Tensor logits = forward_nograd(w, x);
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<int> labels(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j)
            if (logits.at(i * cols + j) > logits.at(i * cols + best)) best = j;
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    c.spec.validate();
    if (c.weights.spec != c.spec)
        throw ContractError("save_checkpoint: weights do not match spec");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("save_checkpoint: cannot open " + path.string());
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(c.epoch));
    write_u64(os, c.seed);
    write_u32(os, static_cast<std::uint32_t>(c.spec.layer_sizes.size()));
    for (auto s : c.spec.layer_sizes) write_u32(os, static_cast<std::uint32_t>(s));
    for (std::size_t l = 0; l < c.weights.weights.size(); ++l) {
        write_f64_block(os, c.weights.weights[l].data());
        write_f64_block(os, c.weights.biases[l].data());
    }
    if (!os) throw FormatError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("load_checkpoint: cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("load_checkpoint: bad magic in " + path.string());
    const std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw FormatError("load_checkpoint: unsupported format version " +
                          std::to_string(version));
    Checkpoint c;
    c.format_version = version;
    c.epoch = read_u32(is);
    c.seed = read_u64(is);
    const std::uint32_t n_sizes = read_u32(is);
    if (n_sizes < 2 || n_sizes > 64)
        throw FormatError("load_checkpoint: implausible layer count " + std::to_string(n_sizes));
    c.spec.layer_sizes.resize(n_sizes);
    for (auto& s : c.spec.layer_sizes) s = read_u32(is);
    c.spec.validate();
    c.weights.spec = c.spec;
    c.weights.epoch_tag = c.epoch;
    for (std::size_t l = 0; l + 1 < n_sizes; ++l) {
        const std::size_t fan_in = c.spec.layer_sizes[l];
        const std::size_t fan_out = c.spec.layer_sizes[l + 1];
        std::vector<double> wd(fan_in * fan_out), bd(fan_out);
        read_f64_block(is, wd);
        read_f64_block(is, bd);
        c.weights.weights.push_back(Tensor::leaf({fan_in, fan_out}, std::move(wd)));
        c.weights.biases.push_back(Tensor::leaf({fan_out}, std::move(bd)));
    }
    is.peek();
    if (!is.eof()) throw FormatError("load_checkpoint: trailing bytes in " + path.string());
    for (const auto* t : c.weights.tensors()) check_finite(t->data(), "checkpoint weights");
    return c;
}

} // namespace hfat
