// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef HFAT_HAVE_OPENMP
#include <omp.h>
#endif

#include "hfat/config_json.hpp"
#include "hfat/csv.hpp"
#include "hfat/eval.hpp"
#include "hfat/hiders.hpp"
#include "hfat/kernels.hpp"
#include "hfat/trainer.hpp"

namespace fs = std::filesystem;
using namespace hfat;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), {}};
}

DatasetSpec dataset_spec_from_file(const fs::path& path) {
    return nlohmann::json::parse(slurp(path)).get<DatasetSpec>();
}

std::vector<Checkpoint> load_run_checkpoints(const fs::path& dir) {
    std::vector<std::pair<std::size_t, fs::path>> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("epoch_", 0) == 0 && entry.path().extension() == ".ckpt") {
            const auto num = name.substr(6, name.size() - 6 - 5);
            found.emplace_back(std::stoul(num), entry.path());
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<Checkpoint> out;
    out.reserve(found.size());
    for (const auto& [epoch, path] : found) out.push_back(load_checkpoint(path));
    if (out.empty()) throw DataError("no epoch_<n>.ckpt files in " + dir.string());
    return out;
}

struct AttackFlags {
    std::string kind = "pgd";
    double eps = 0.3;
    double alpha = 0.0;
    std::size_t steps = 20;
    bool random_start = false;
    double mim_decay = 1.0;
    double cw_kappa = 0.0;

    AttackSpec spec() const {
        AttackSpec s;
        s.kind = attack_kind_from_string(kind);
        s.eps = eps;
        s.alpha = alpha;
        s.steps = steps;
        s.random_start = random_start;
        s.mim_decay = mim_decay;
        s.cw_kappa = cw_kappa;
        s.validate();
        return s;
    }
};

void add_attack_flags(CLI::App* cmd, AttackFlags& flags) {
    cmd->add_option("--attack", flags.kind, "attack kind: fgsm|pgd|mim|cw");
    cmd->add_option("--eps", flags.eps, "linf budget");
    cmd->add_option("--alpha", flags.alpha, "step size (0 = eps/4)");
    cmd->add_option("--steps", flags.steps, "attack steps");
    cmd->add_flag("--random-start", flags.random_start, "uniform random start in the ball");
    cmd->add_option("--mim-decay", flags.mim_decay, "momentum decay for mim");
    cmd->add_option("--cw-kappa", flags.cw_kappa, "margin confidence for cw");
}

int run_cli(int argc, char** argv) {
    CLI::App app{"hider-focused adversarial training toolkit"};
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0 = default)");
    bool serial = false;
    app.add_flag("--serial", serial, "force the serial kernel path");

    // train
    auto* train = app.add_subcommand("train", "train a model from a config file");
    std::string train_config;
    std::string train_out = "runs/run";
    bool train_resume = false;
    train->add_option("--config", train_config, "RunConfig JSON file")->required();
    train->add_option("--out", train_out, "run directory");
    train->add_flag("--resume", train_resume, "resume from the last snapshot");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_dataset, eval_out, eval_csv;
    double eval_eps = 0.3;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "DatasetSpec JSON file")->required();
    eval_cmd->add_option("--eps", eval_eps, "linf budget for the battery");
    eval_cmd->add_option("--seed", eval_seed, "attack seed");
    eval_cmd->add_option("--out", eval_out, "EvalReport JSON path (default stdout)");
    eval_cmd->add_option("--csv", eval_csv, "also write accuracies as CSV");

    // transfer
    auto* transfer_cmd = app.add_subcommand("transfer", "transfer black-box matrix");
    std::vector<std::string> transfer_ckpts;
    std::string transfer_dataset, transfer_out = "transfer.csv";
    AttackFlags transfer_attack;
    std::uint64_t transfer_seed = 0;
    transfer_cmd->add_option("--ckpts", transfer_ckpts, "checkpoint files")
        ->required()
        ->expected(-1);
    transfer_cmd->add_option("--dataset", transfer_dataset, "DatasetSpec JSON file")->required();
    transfer_cmd->add_option("--out", transfer_out, "matrix CSV path");
    transfer_cmd->add_option("--seed", transfer_seed, "attack seed");
    add_attack_flags(transfer_cmd, transfer_attack);

    // hiders
    auto* hiders_cmd = app.add_subcommand("hiders", "hider statistics over a snapshot dir");
    std::string hiders_run, hiders_dataset, hiders_outdir = ".";
    std::vector<std::size_t> hiders_intervals{1, 5, 20, 50};
    AttackFlags hiders_attack;
    std::uint64_t hiders_seed = 0;
    std::size_t hiders_subset = 0;
    hiders_cmd->add_option("--run", hiders_run, "run directory with epoch_<n>.ckpt")->required();
    hiders_cmd->add_option("--dataset", hiders_dataset, "DatasetSpec JSON file")->required();
    hiders_cmd->add_option("--out-dir", hiders_outdir, "output directory");
    hiders_cmd->add_option("--intervals", hiders_intervals, "epoch intervals");
    hiders_cmd->add_option("--seed", hiders_seed, "attack seed");
    hiders_cmd->add_option("--subset", hiders_subset, "test subset size (0 = all)");
    add_attack_flags(hiders_cmd, hiders_attack);

    // fitprior
    auto* fit_cmd = app.add_subcommand("fitprior", "fit a Gaussian prior to ratio samples");
    std::string fit_ratios, fit_out;
    fit_cmd->add_option("--ratios", fit_ratios, "ratio samples CSV")->required();
    fit_cmd->add_option("--out", fit_out, "GaussianPrior JSON path (default stdout)");

    // landscape
    auto* land_cmd = app.add_subcommand("landscape", "loss landscape grid around an anchor");
    std::string land_ckpt, land_dataset, land_out = "landscape.csv", land_mode = "grad";
    std::string land_run;
    std::size_t land_index = 0, land_n = 41, land_epoch_i = 0, land_epoch_j = 0;
    double land_extent = 0.0;
    std::uint64_t land_seed = 0;
    AttackFlags land_attack;
    land_cmd->add_option("--ckpt", land_ckpt, "checkpoint file")->required();
    land_cmd->add_option("--dataset", land_dataset, "DatasetSpec JSON file")->required();
    land_cmd->add_option("--index", land_index, "test sample index of the anchor");
    land_cmd->add_option("--mode", land_mode, "grad|hider");
    land_cmd->add_option("--extent", land_extent, "grid half-width (default 1.5*eps)");
    land_cmd->add_option("--n", land_n, "odd grid resolution");
    land_cmd->add_option("--seed", land_seed, "random-direction seed");
    land_cmd->add_option("--out", land_out, "grid CSV path");
    land_cmd->add_option("--run", land_run, "run dir for hider mode snapshots");
    land_cmd->add_option("--hider-i", land_epoch_i, "earlier epoch for hider mode");
    land_cmd->add_option("--hider-j", land_epoch_j, "later epoch for hider mode");
    add_attack_flags(land_cmd, land_attack);

    // dataset
    auto* ds_cmd = app.add_subcommand("dataset", "generate a dataset CSV");
    std::string ds_spec_file, ds_out = "dataset.csv";
    ds_cmd->add_option("--spec", ds_spec_file, "DatasetSpec JSON file")->required();
    ds_cmd->add_option("--out", ds_out, "CSV path");

    CLI11_PARSE(app, argc, argv);

    if (serial) kernels::set_exec_mode(kernels::Exec::Serial);
#ifdef HFAT_HAVE_OPENMP
    if (threads > 0) omp_set_num_threads(static_cast<int>(threads));
#endif

    if (*train) {
        const std::string text = slurp(train_config);
        const RunConfig rc = nlohmann::json::parse(text).get<RunConfig>();
        const Dataset data = make_dataset(rc.dataset);
        const RunArtifacts art = run_training(rc.train, data, train_out, train_resume, text);
        std::cout << "run directory: " << art.dir.string() << "\n";
        if (!art.epoch_logs.empty()) {
            const auto& last = art.epoch_logs.back();
            std::cout << "final epoch " << last.epoch << ": loss " << last.train_loss
                      << ", natural " << last.natural_accuracy << ", robust "
                      << last.robust_accuracy << "\n";
        }
        return 0;
    }

    if (*eval_cmd) {
        const Checkpoint ckpt = load_checkpoint(eval_ckpt);
        const Dataset data = make_dataset(dataset_spec_from_file(eval_dataset));
        const EvalReport report = evaluate(ckpt, data, default_eval_attacks(eval_eps), eval_seed);
        const std::string text = eval_report_json(report);
        if (eval_out.empty()) {
            std::cout << text;
        } else {
            std::ofstream os(eval_out, std::ios::trunc);
            if (!os) throw DataError("cannot write " + eval_out);
            os << text;
        }
        if (!eval_csv.empty()) {
            std::ofstream os(eval_csv, std::ios::trunc);
            if (!os) throw DataError("cannot write " + eval_csv);
            os << "attack,accuracy\n";
            os << "natural," << format_g17(report.natural) << "\n";
            for (const auto& [name, res] : report.attacks)
                os << name << ',' << format_g17(res.accuracy) << "\n";
        }
        return 0;
    }

    if (*transfer_cmd) {
        std::vector<Checkpoint> ckpts;
        ckpts.reserve(transfer_ckpts.size());
        for (const auto& path : transfer_ckpts) ckpts.push_back(load_checkpoint(path));
        const Dataset data = make_dataset(dataset_spec_from_file(transfer_dataset));
        const TransferMatrix m =
            transfer_matrix(ckpts, data, transfer_attack.spec(), transfer_seed);
        save_transfer_csv(m, transfer_out);
        std::cout << "wrote " << transfer_out << "\n";
        return 0;
    }

    if (*hiders_cmd) {
        const auto ckpts = load_run_checkpoints(hiders_run);
        const Dataset data = make_dataset(dataset_spec_from_file(hiders_dataset));
        Tensor x = data.x_test;
        std::vector<int> y = data.y_test;
        if (hiders_subset > 0 && hiders_subset < y.size()) {
            std::vector<double> xs(x.data().begin(),
                                   x.data().begin() +
                                       static_cast<std::ptrdiff_t>(hiders_subset * data.dim()));
            x = Tensor::leaf({hiders_subset, data.dim()}, std::move(xs));
            y.resize(hiders_subset);
        }
        const AttackSpec attack = hiders_attack.spec();
        fs::create_directories(hiders_outdir);

        Rng rng(derive_seed(hiders_seed, "hiders_report"));
        const HiderStats stats =
            proportion_report(ckpts, x, y, attack, data.spec.domain, rng, hiders_intervals);
        save_proportions_csv(stats, fs::path(hiders_outdir) / "proportions.csv");

        // Occurrence sets against the latest snapshot.
        const Checkpoint& probe = ckpts.back();
        Rng occ_rng(derive_seed(hiders_seed, "hiders_occurrence"));
        AdvBatch adv = run_attack(probe.weights, x, y, attack, data.spec.domain, &occ_rng);
        const auto pred = predict(probe.weights, adv.x_adv);
        std::vector<std::size_t> failed_idx;
        std::vector<double> failed_x;
        std::vector<int> failed_y;
        for (std::size_t s = 0; s < y.size(); ++s) {
            if (pred[s] != y[s]) {
                failed_idx.push_back(s);
                for (std::size_t k = 0; k < data.dim(); ++k)
                    failed_x.push_back(adv.x_adv.at(s * data.dim() + k));
                failed_y.push_back(y[s]);
            }
        }
        std::vector<Checkpoint> earlier(ckpts.begin(), ckpts.end() - 1);
        const auto occ = occurrence_indices(
            earlier, probe, Tensor::leaf({failed_idx.size(), data.dim()}, failed_x), failed_y,
            failed_idx);
        save_occurrences_csv(occ, probe.epoch, fs::path(hiders_outdir) / "occurrences.csv");

        // Interval-1 ratio samples across consecutive snapshots.
        std::vector<RatioSample> ratios;
        std::size_t skipped = 0;
        for (std::size_t i = 0; i + 1 < ckpts.size(); ++i) {
            if (ckpts[i + 1].epoch != ckpts[i].epoch + 1) continue;
            Rng r(derive_seed(hiders_seed, "hiders_ratio", ckpts[i].epoch));
            RatioBatch batch = collect_ratio_samples(ckpts[i], ckpts[i + 1], x, y, attack,
                                                     data.spec.domain, r, 1);
            ratios.insert(ratios.end(), batch.samples.begin(), batch.samples.end());
            skipped += batch.skipped;
        }
        save_ratio_samples_csv(ratios, fs::path(hiders_outdir) / "ratios_interval1.csv");
        std::cout << "wrote proportions.csv, occurrences.csv, ratios_interval1.csv under "
                  << hiders_outdir << " (" << ratios.size() << " ratio samples, " << skipped
                  << " skipped by the denominator floor)\n";
        return 0;
    }

    if (*fit_cmd) {
        const auto samples = load_ratio_samples_csv(fit_ratios);
        const GaussianPrior prior = fit_gaussian(samples);
        const std::string text = nlohmann::json(prior).dump(2) + "\n";
        if (fit_out.empty()) {
            std::cout << text;
        } else {
            std::ofstream os(fit_out, std::ios::trunc);
            if (!os) throw DataError("cannot write " + fit_out);
            os << text;
        }
        return 0;
    }

    if (*land_cmd) {
        const Checkpoint ckpt = load_checkpoint(land_ckpt);
        const Dataset data = make_dataset(dataset_spec_from_file(land_dataset));
        if (land_index >= data.y_test.size())
            throw ContractError("landscape: --index outside the test split");
        const std::size_t d = data.dim();
        std::vector<double> anchor(d);
        for (std::size_t k = 0; k < d; ++k) anchor[k] = data.x_test.at(land_index * d + k);
        const int label = data.y_test[land_index];
        const AttackSpec attack = land_attack.spec();
        const double extent = land_extent > 0.0 ? land_extent : 1.5 * attack.eps;

        LandscapeGrid grid;
        if (landscape_mode_from_string(land_mode) == LandscapeMode::Grad) {
            grid = landscape_grid(ckpt.weights, anchor, label, LandscapeMode::Grad, extent,
                                  land_n, land_seed);
        } else {
            if (land_run.empty() || land_epoch_i == 0 || land_epoch_j == 0)
                throw ContractError("landscape: hider mode needs --run, --hider-i and --hider-j");
            const Checkpoint ci = load_checkpoint(
                fs::path(land_run) / ("epoch_" + std::to_string(land_epoch_i) + ".ckpt"));
            const Checkpoint cj = load_checkpoint(
                fs::path(land_run) / ("epoch_" + std::to_string(land_epoch_j) + ".ckpt"));
            Rng rng(derive_seed(land_seed, "landscape_hiders"));
            AdvBatch adv = run_attack(cj.weights, data.x_test, data.y_test, attack,
                                      data.spec.domain, &rng);
            const auto records = detect_hiders(ci, cj, data.x_test, data.y_test, adv.delta);
            const HiderRecord* chosen = nullptr;
            for (const auto& rec : records)
                if (rec.sample_index == land_index) chosen = &rec;
            if (chosen == nullptr)
                throw ContractError("landscape: sample " + std::to_string(land_index) +
                                    " is not a hider between those epochs");
            grid = landscape_grid(ckpt.weights, anchor, label, LandscapeMode::Hider, extent,
                                  land_n, land_seed, chosen->delta);
        }
        grid.anchor_index = land_index;
        save_landscape_csv(grid, land_out);
        std::cout << "wrote " << land_out << "\n";
        return 0;
    }

    if (*ds_cmd) {
        const Dataset data = make_dataset(dataset_spec_from_file(ds_spec_file));
        save_dataset_csv(data, ds_out);
        std::cout << "wrote " << ds_out << " (" << data.y_train.size() << " train, "
                  << data.y_test.size() << " test)\n";
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
