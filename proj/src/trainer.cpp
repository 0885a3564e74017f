// SPDX-License-Identifier: Apache-2.0
#include "hfat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "hfat/config_json.hpp"
#include "hfat/csv.hpp"

namespace hfat {

namespace {

double stable_sigmoid(double d) {
    double s;
    if (d >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-d));
    } else {
        const double e = std::exp(d);
        s = e / (1.0 + e);
    }
    // The exact value lies strictly inside (0, 1); keep the computed one there
    // when exp saturates the double range.
    if (s >= 1.0) s = std::nextafter(1.0, 0.0);
    if (s <= 0.0) s = std::nextafter(0.0, 1.0);
    return s;
}

double kl_value(const Tensor& p_logits, const Tensor& q_logits) {
    Tape tape;
    return tape
        .kl_divergence(Tensor::leaf(p_logits.shape(), {p_logits.data().begin(), p_logits.data().end()}),
                       Tensor::leaf(q_logits.shape(), {q_logits.data().begin(), q_logits.data().end()}))
        .scalar();
}

// RAII: turn gradient tracking on for the scope of one backward pass.
class GradScope {
public:
    explicit GradScope(ModelWeights& w) : w_(w) { w_.set_requires_grad(true); }
    ~GradScope() {
        w_.zero_grad();
        w_.set_requires_grad(false);
    }

private:
    ModelWeights& w_;
};

GradVector harvest_grads(ModelWeights& w) {
    GradVector out;
    for (auto* t : w.tensors()) {
        auto g = t->grad(); // zero-filled if untouched
        out.emplace_back(g.begin(), g.end());
    }
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    const std::size_t d = x.dim(1);
    std::vector<double> out;
    out.reserve(idx.size() * d);
    for (const auto i : idx)
        for (std::size_t k = 0; k < d; ++k) out.push_back(x.at(i * d + k));
    return Tensor::leaf({idx.size(), d}, std::move(out));
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (const auto i : idx) out.push_back(y[i]);
    return out;
}

double accuracy_against(const ModelWeights& w, const Tensor& x, const std::vector<int>& y) {
    const auto pred = predict(w, x);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (pred[i] == y[i]) ++hit;
    return y.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(y.size());
}

constexpr char kStateMagic[8] = {'H', 'F', 'A', 'T', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kStateVersion = 1;

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
void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}
std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("state: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("state: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

struct ResumeState {
    std::size_t epoch = 0;
    GradVector velocity;
    std::size_t acc_n = 0;
    double acc_mean = 0.0;
    double acc_m2 = 0.0;
};

void save_state(const std::filesystem::path& path, std::size_t epoch, const SgdState& state,
                const RatioAccumulator& acc) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("save_state: cannot open " + tmp);
        os.write(kStateMagic, 8);
        write_u32(os, kStateVersion);
        write_u32(os, static_cast<std::uint32_t>(epoch));
        write_u32(os, static_cast<std::uint32_t>(state.velocity.size()));
        for (const auto& block : state.velocity) {
            write_u64(os, block.size());
            for (double v : block) write_f64(os, v);
        }
        write_u64(os, acc.count());
        write_f64(os, acc.mean());
        write_f64(os, acc.m2());
        if (!os) throw FormatError("save_state: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

ResumeState load_state(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("load_state: cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kStateMagic, 8) != 0)
        throw FormatError("load_state: bad magic in " + path.string());
    if (read_u32(is) != kStateVersion)
        throw FormatError("load_state: unsupported version in " + path.string());
    ResumeState rs;
    rs.epoch = read_u32(is);
    const auto n_blocks = read_u32(is);
    rs.velocity.resize(n_blocks);
    for (auto& block : rs.velocity) {
        block.resize(read_u64(is));
        for (double& v : block) v = read_f64(is);
    }
    rs.acc_n = read_u64(is);
    rs.acc_mean = read_f64(is);
    rs.acc_m2 = read_f64(is);
    return rs;
}

} // namespace

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "at") return TrainMode::At;
    if (s == "trades") return TrainMode::Trades;
    if (s == "at_hf") return TrainMode::AtHf;
    if (s == "trades_hf") return TrainMode::TradesHf;
    throw SpecError("unknown train mode: " + s);
}

std::string to_string(TrainMode m) {
    switch (m) {
    case TrainMode::At: return "at";
    case TrainMode::Trades: return "trades";
    case TrainMode::AtHf: return "at_hf";
    case TrainMode::TradesHf: return "trades_hf";
    }
    return "?";
}

bool is_hf(TrainMode m) { return m == TrainMode::AtHf || m == TrainMode::TradesHf; }

void TrainConfig::validate() const {
    if (lr <= 0.0) throw SpecError("train config: lr must be positive");
    if (epochs < 1) throw SpecError("train config: epochs must be >= 1");
    if (batch_size < 1) throw SpecError("train config: batch_size must be >= 1");
    if (snapshot_every < 1) throw SpecError("train config: snapshot_every must be >= 1");
    if (lambda_static < 0.0) throw SpecError("train config: lambda_static must be >= 0");
    if (aux_reverse_steps < 1) throw SpecError("train config: aux_reverse_steps must be >= 1");
    for (std::size_t i = 1; i < lr_drops.size(); ++i)
        if (lr_drops[i].first <= lr_drops[i - 1].first)
            throw SpecError("train config: lr_drops must be sorted ascending by epoch");
    train_attack.validate();
    aux_attack.validate();
}

void TrainConfig::normalize() {
    if (train_attack.eps == 0.0) train_attack.eps = eps;
    if (aux_attack.eps == 0.0) aux_attack.eps = eps;
    validate();
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
    double out = lr;
    for (const auto& [drop_epoch, factor] : lr_drops)
        if (epoch >= drop_epoch) out *= factor;
    return out;
}

WeightPair lambda_from_kls(double kl_main, double kl_aux) {
    if (!std::isfinite(kl_main) || !std::isfinite(kl_aux))
        throw NumericError("lambda_from_kls: non-finite KL divergence");
    WeightPair out;
    out.lambda_a = stable_sigmoid(kl_aux - kl_main);
    out.lambda_s = 1.0 - out.lambda_a;
    return out;
}

WeightPair adaptive_lambda(const ModelWeights& theta, const ModelWeights& theta_hat,
                           const Tensor& x, const Tensor& x_adv_main, const Tensor& x_adv_aux) {
    const Tensor main_clean = forward_nograd(theta, x);
    const Tensor main_adv = forward_nograd(theta, x_adv_main);
    const Tensor aux_clean = forward_nograd(theta_hat, x);
    const Tensor aux_adv = forward_nograd(theta_hat, x_adv_aux);
    return lambda_from_kls(kl_value(main_clean, main_adv), kl_value(aux_clean, aux_adv));
}

SgdState SgdState::zeros_like(const ModelWeights& w) {
    SgdState s;
    for (const auto* t : w.tensors()) s.velocity.emplace_back(t->numel(), 0.0);
    return s;
}

void sgd_momentum_step(ModelWeights& theta, const GradVector& grad, SgdState& state, double lr,
                       double momentum, double weight_decay) {
    auto tensors = theta.tensors();
    if (grad.size() != tensors.size() || state.velocity.size() != tensors.size())
        throw DimensionError("sgd_momentum_step: block count mismatch");
    for (std::size_t b = 0; b < tensors.size(); ++b) {
        auto data = tensors[b]->mutable_data();
        auto& v = state.velocity[b];
        const auto& g = grad[b];
        if (g.size() != data.size() || v.size() != data.size())
            throw DimensionError("sgd_momentum_step: block size mismatch");
        for (std::size_t i = 0; i < data.size(); ++i) {
            v[i] = momentum * v[i] + g[i] + weight_decay * data[i];
            data[i] -= lr * v[i];
            if (!std::isfinite(data[i]))
                throw NumericError("sgd_momentum_step: non-finite weight produced");
        }
    }
}

Trainer::Trainer(TrainConfig cfg, const Dataset& data) : cfg_(std::move(cfg)), data_(data) {
    cfg_.normalize();
    domain_ = data.spec.domain;
    MlpSpec spec;
    spec.layer_sizes.push_back(data.dim());
    for (auto h : cfg_.hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(data.n_classes());
    theta_ = init_model(spec, cfg_.seed);
    state_ = SgdState::zeros_like(theta_);

    std::vector<std::size_t> order(data.y_train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng probe_rng(derive_seed(cfg_.seed, "probe_subset"));
    probe_rng.shuffle(order);
    const std::size_t n_probe = std::min<std::size_t>(cfg_.probe_subset, order.size());
    probe_indices_.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_probe));
}

std::size_t Trainer::steps_per_epoch() const {
    return (data_.y_train.size() + cfg_.batch_size - 1) / cfg_.batch_size;
}

GaussianPrior Trainer::active_prior() const {
    if (cfg_.prior_mode == PriorMode::Online && accumulator_.count() >= cfg_.prior_warmup)
        return accumulator_.prior(1);
    GaussianPrior fixed;
    fixed.mu = cfg_.prior_mu;
    fixed.sigma = cfg_.prior_sigma;
    fixed.n = cfg_.prior_warmup;
    fixed.interval = 1;
    return fixed;
}

Trainer::BatchResult Trainer::batch_gradient(std::size_t epoch, std::size_t batch_index,
                                             const Tensor& xb, const std::vector<int>& yb,
                                             double current_lr) {
    Rng attack_rng(derive_seed(cfg_.seed, "train_attack", epoch, batch_index));
    const bool trades = cfg_.mode == TrainMode::Trades || cfg_.mode == TrainMode::TradesHf;

    AdvBatch adv;
    Tensor clean_logits_ref;
    if (trades) {
        clean_logits_ref = forward_nograd(theta_, xb);
        adv = kl_ascent(theta_, xb, clean_logits_ref, cfg_.train_attack, domain_, &attack_rng);
    } else {
        adv = pgd(theta_, xb, yb, cfg_.train_attack, domain_, &attack_rng);
    }

    BatchResult result;
    {
        GradScope scope(theta_);
        Tape tape;
        Tensor loss;
        if (trades) {
            Tensor ce = tape.cross_entropy(forward(tape, theta_, xb), yb);
            Tensor kl = tape.kl_divergence(forward(tape, theta_, xb), forward(tape, theta_, adv.x_adv));
            loss = tape.add(ce, tape.scale(kl, cfg_.trades_beta));
        } else {
            loss = tape.cross_entropy(forward(tape, theta_, adv.x_adv), yb);
        }
        result.loss = loss.scalar();
        tape.backward(loss);
        result.grad = harvest_grads(theta_);
    }

    if (!is_hf(cfg_.mode)) {
        result.lambda = WeightPair{1.0, 0.0};
        return result;
    }

    Rng aux_rng(derive_seed(cfg_.seed, "aux_branch", epoch, batch_index));
    const double r = sample_ratio(active_prior(), aux_rng, cfg_.r_max);
    ProbePoint probe =
        transform_T(xb, adv.x_adv, r, cfg_.eps, domain_, &aux_rng, cfg_.eps / 10.0);
    const double eta = cfg_.eta_aux > 0.0 ? cfg_.eta_aux : current_lr;
    ModelWeights theta_hat = reverse_train_step(theta_, probe, yb, eta);
    for (std::size_t s = 1; s < cfg_.aux_reverse_steps; ++s)
        theta_hat = reverse_train_step(theta_hat, probe, yb, eta);
    MomentumResult momentum = compute_momentum_p(theta_hat, xb, yb, cfg_.aux_attack, domain_, &aux_rng);

    result.lambda = cfg_.lambda_mode == LambdaMode::Adaptive
                        ? adaptive_lambda(theta_, theta_hat, xb, adv.x_adv, momentum.adv.x_adv)
                        : WeightPair{1.0, cfg_.lambda_static};

    for (std::size_t b = 0; b < result.grad.size(); ++b)
        for (std::size_t i = 0; i < result.grad[b].size(); ++i)
            result.grad[b][i] =
                result.lambda.lambda_s * result.grad[b][i] + result.lambda.lambda_a * momentum.p.parts[b][i];
    return result;
}

EpochLog Trainer::train_epoch(std::size_t epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double current_lr = cfg_.lr_at_epoch(epoch);

    std::optional<ModelWeights> prev;
    if (is_hf(cfg_.mode) && cfg_.prior_mode == PriorMode::Online) prev = theta_.clone();

    std::vector<std::size_t> order(data_.y_train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg_.seed, "shuffle", epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    double lambda_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        const Tensor xb = gather_rows(data_.x_train, idx);
        const auto yb = gather_labels(data_.y_train, idx);
        BatchResult res = batch_gradient(epoch, batches, xb, yb, current_lr);
        sgd_momentum_step(theta_, res.grad, state_, current_lr, cfg_.sgd_momentum,
                          cfg_.weight_decay);
        trace_.push_back({global_step_, res.lambda.lambda_s, res.lambda.lambda_a});
        ++global_step_;
        loss_sum += res.loss;
        lambda_sum += res.lambda.lambda_a;
        ++batches;
    }
    theta_.epoch_tag = epoch;

    if (is_hf(cfg_.mode) && cfg_.prior_mode == PriorMode::Online && prev)
        update_online_prior(epoch, *prev);

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.mean_lambda_a = lambda_sum / static_cast<double>(batches);
    log.natural_accuracy = accuracy_against(theta_, data_.x_test, data_.y_test);
    {
        Rng eval_rng(derive_seed(cfg_.seed, "epoch_eval", epoch));
        AdvBatch adv =
            run_attack(theta_, data_.x_test, data_.y_test, cfg_.train_attack, domain_, &eval_rng);
        log.robust_accuracy = accuracy_against(theta_, adv.x_adv, data_.y_test);
    }
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

void Trainer::update_online_prior(std::size_t epoch, const ModelWeights& prev) {
    if (epoch < 2) return; // needs a completed earlier epoch as the reference
    Checkpoint before{prev.spec, prev, epoch - 1, cfg_.seed, 1};
    Checkpoint after{theta_.spec, theta_, epoch, cfg_.seed, 1};
    const Tensor xp = gather_rows(data_.x_train, probe_indices_);
    const auto yp = gather_labels(data_.y_train, probe_indices_);
    Rng rng(derive_seed(cfg_.seed, "prior_update", epoch));
    const RatioBatch batch =
        collect_ratio_samples(before, after, xp, yp, cfg_.train_attack, domain_, rng, 1);
    for (const auto& s : batch.samples) accumulator_.add(s.r);
}

RunArtifacts run_training(const TrainConfig& cfg_in, const Dataset& data,
                          const std::filesystem::path& dir, bool resume,
                          const std::string& config_json, std::size_t stop_after_epoch) {
    TrainConfig cfg = cfg_in;
    cfg.normalize();
    std::filesystem::create_directories(dir);

    Trainer trainer(cfg, data);
    RunArtifacts artifacts;
    artifacts.dir = dir;
    std::vector<LambdaTraceRow> kept_trace;
    std::vector<std::pair<std::size_t, double>> timings;
    std::size_t start_epoch = 1;

    if (resume) {
        std::size_t last = 0;
        for (std::size_t e = 1; e <= cfg.epochs; ++e)
            if (std::filesystem::exists(dir / ("epoch_" + std::to_string(e) + ".ckpt")) &&
                std::filesystem::exists(dir / ("epoch_" + std::to_string(e) + ".state")))
                last = e;
        if (last == 0) throw ContractError("run_training: no snapshot to resume from in " +
                                           dir.string());
        Checkpoint ckpt = load_checkpoint(dir / ("epoch_" + std::to_string(last) + ".ckpt"));
        ResumeState rs = load_state(dir / ("epoch_" + std::to_string(last) + ".state"));
        if (rs.epoch != last) throw FormatError("run_training: state/checkpoint epoch mismatch");
        trainer.mutable_weights() = ckpt.weights;
        trainer.mutable_weights().epoch_tag = last;
        trainer.optimizer_state().velocity = rs.velocity;
        trainer.prior_accumulator().restore(rs.acc_n, rs.acc_mean, rs.acc_m2);
        trainer.set_global_step(last * trainer.steps_per_epoch());

        for (const auto& log : load_epoch_log_csv(dir / "epoch_log.csv"))
            if (log.epoch <= last) artifacts.epoch_logs.push_back(log);
        for (const auto& row : load_lambda_trace_csv(dir / "lambda_trace.csv"))
            if (row.step < last * trainer.steps_per_epoch()) kept_trace.push_back(row);
        {
            std::ifstream is(dir / "timing.csv");
            std::string line;
            std::getline(is, line); // header
            std::size_t line_no = 1;
            while (std::getline(is, line)) {
                ++line_no;
                if (line.empty()) continue;
                const auto cells = split_csv_line(line);
                if (cells.size() != 2) continue;
                const auto e = static_cast<std::size_t>(parse_long(cells[0], line_no));
                if (e <= last) timings.emplace_back(e, parse_double(cells[1], line_no));
            }
        }
        start_epoch = last + 1;
    } else {
        std::ofstream os(dir / "config.json", std::ios::trunc);
        if (!os) throw DataError("run_training: cannot write config.json");
        if (!config_json.empty()) {
            os << config_json;
        } else {
            RunConfig rc{cfg_in, data.spec};
            os << nlohmann::json(rc).dump(2) << "\n";
        }
    }

    auto flush_logs = [&] {
        {
            std::ofstream os(dir / "epoch_log.csv", std::ios::trunc);
            os << "epoch,train_loss,natural_accuracy,robust_accuracy,mean_lambda_a\n";
            for (const auto& log : artifacts.epoch_logs)
                os << log.epoch << ',' << format_g17(log.train_loss) << ','
                   << format_g17(log.natural_accuracy) << ',' << format_g17(log.robust_accuracy)
                   << ',' << format_g17(log.mean_lambda_a) << "\n";
        }
        {
            std::ofstream os(dir / "lambda_trace.csv", std::ios::trunc);
            os << "step,lambda_s,lambda_a\n";
            for (const auto& row : kept_trace)
                os << row.step << ',' << format_g17(row.lambda_s) << ','
                   << format_g17(row.lambda_a) << "\n";
            for (const auto& row : trainer.lambda_trace())
                os << row.step << ',' << format_g17(row.lambda_s) << ','
                   << format_g17(row.lambda_a) << "\n";
        }
        {
            std::ofstream os(dir / "timing.csv", std::ios::trunc);
            os << "epoch,wall_seconds\n";
            for (const auto& [e, w] : timings) os << e << ',' << format_g17(w) << "\n";
        }
    };

    for (std::size_t epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        EpochLog log = trainer.train_epoch(epoch);
        artifacts.epoch_logs.push_back(log);
        timings.emplace_back(epoch, log.wall_seconds);
        flush_logs();
        if (epoch % cfg.snapshot_every == 0 || epoch == cfg.epochs) {
            Checkpoint ckpt{trainer.weights().spec, trainer.weights(), epoch, cfg.seed, 1};
            const auto ckpt_path = dir / ("epoch_" + std::to_string(epoch) + ".ckpt");
            const auto tmp = ckpt_path.string() + ".tmp";
            save_checkpoint(ckpt, tmp);
            std::filesystem::rename(tmp, ckpt_path);
            save_state(dir / ("epoch_" + std::to_string(epoch) + ".state"), epoch,
                       trainer.optimizer_state(), trainer.prior_accumulator());
        }
        if (stop_after_epoch != 0 && epoch >= stop_after_epoch) break;
    }
    flush_logs();
    return artifacts;
}

std::vector<EpochLog> load_epoch_log_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_epoch_log_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) ||
        line != "epoch,train_loss,natural_accuracy,robust_accuracy,mean_lambda_a")
        throw DataError("line 1: bad epoch log header");
    std::vector<EpochLog> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 5)
            throw DataError("line " + std::to_string(line_no) + ": expected 5 fields");
        EpochLog log;
        log.epoch = static_cast<std::size_t>(parse_long(cells[0], line_no));
        log.train_loss = parse_double(cells[1], line_no);
        log.natural_accuracy = parse_double(cells[2], line_no);
        log.robust_accuracy = parse_double(cells[3], line_no);
        log.mean_lambda_a = parse_double(cells[4], line_no);
        out.push_back(log);
    }
    return out;
}

std::vector<LambdaTraceRow> load_lambda_trace_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_lambda_trace_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "step,lambda_s,lambda_a")
        throw DataError("line 1: bad lambda trace header");
    std::vector<LambdaTraceRow> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 3)
            throw DataError("line " + std::to_string(line_no) + ": expected 3 fields");
        out.push_back({static_cast<std::size_t>(parse_long(cells[0], line_no)),
                       parse_double(cells[1], line_no), parse_double(cells[2], line_no)});
    }
    return out;
}

} // namespace hfat
