// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include "hfat/dataset.hpp"
#include "hfat/hiders.hpp"
#include "hfat/trainer.hpp"

// JSON (de)serialization for the config surface. Field names mirror the
// structs verbatim; absent fields keep their defaults.

namespace hfat {

inline void to_json(nlohmann::json& j, const AttackSpec& s) {
    j = {{"kind", to_string(s.kind)},   {"eps", s.eps},
         {"alpha", s.alpha},            {"steps", s.steps},
         {"random_start", s.random_start}, {"mim_decay", s.mim_decay},
         {"cw_kappa", s.cw_kappa}};
}

inline void from_json(const nlohmann::json& j, AttackSpec& s) {
    s = AttackSpec{};
    if (j.contains("kind")) s.kind = attack_kind_from_string(j.at("kind").get<std::string>());
    s.eps = j.value("eps", s.eps);
    s.alpha = j.value("alpha", s.alpha);
    s.steps = j.value("steps", s.steps);
    s.random_start = j.value("random_start", s.random_start);
    s.mim_decay = j.value("mim_decay", s.mim_decay);
    s.cw_kappa = j.value("cw_kappa", s.cw_kappa);
}

inline void to_json(nlohmann::json& j, const Domain& d) {
    j = {{"bounded", d.bounded}, {"lo", d.lo}, {"hi", d.hi}};
}

inline void from_json(const nlohmann::json& j, Domain& d) {
    d = Domain{};
    d.bounded = j.value("bounded", d.bounded);
    d.lo = j.value("lo", d.lo);
    d.hi = j.value("hi", d.hi);
}

inline void to_json(nlohmann::json& j, const DatasetSpec& s) {
    j = {{"kind", to_string(s.kind)},
         {"n_samples", s.n_samples},
         {"n_classes", s.n_classes},
         {"noise", s.noise},
         {"dim", s.dim},
         {"train_fraction", s.train_fraction},
         {"seed", s.seed},
         {"domain", s.domain},
         {"path", s.path}};
}

inline void from_json(const nlohmann::json& j, DatasetSpec& s) {
    s = DatasetSpec{};
    if (j.contains("kind")) s.kind = dataset_kind_from_string(j.at("kind").get<std::string>());
    s.n_samples = j.value("n_samples", s.n_samples);
    s.n_classes = j.value("n_classes", s.n_classes);
    s.noise = j.value("noise", s.noise);
    s.dim = j.value("dim", s.dim);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.seed = j.value("seed", s.seed);
    if (j.contains("domain")) s.domain = j.at("domain").get<Domain>();
    s.path = j.value("path", s.path);
}

inline void to_json(nlohmann::json& j, const GaussianPrior& p) {
    j = {{"mu", p.mu}, {"sigma", p.sigma}, {"n", p.n}, {"interval", p.interval}};
}

inline void from_json(const nlohmann::json& j, GaussianPrior& p) {
    p = GaussianPrior{};
    p.mu = j.value("mu", p.mu);
    p.sigma = j.value("sigma", p.sigma);
    p.n = j.value("n", p.n);
    p.interval = j.value("interval", p.interval);
}

inline std::string to_string(LambdaMode m) {
    return m == LambdaMode::Adaptive ? "adaptive" : "static";
}

inline std::string to_string(PriorMode m) { return m == PriorMode::Fixed ? "fixed" : "online"; }

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"mode", to_string(c.mode)},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"lr", c.lr},
         {"lr_drops", c.lr_drops},
         {"sgd_momentum", c.sgd_momentum},
         {"weight_decay", c.weight_decay},
         {"eps", c.eps},
         {"train_attack", c.train_attack},
         {"aux_attack", c.aux_attack},
         {"eta_aux", c.eta_aux},
         {"aux_reverse_steps", c.aux_reverse_steps},
         {"lambda_mode", to_string(c.lambda_mode)},
         {"lambda_static", c.lambda_static},
         {"trades_beta", c.trades_beta},
         {"prior_mode", to_string(c.prior_mode)},
         {"prior_mu", c.prior_mu},
         {"prior_sigma", c.prior_sigma},
         {"prior_warmup", c.prior_warmup},
         {"probe_subset", c.probe_subset},
         {"r_max", c.r_max},
         {"seed", c.seed},
         {"snapshot_every", c.snapshot_every},
         {"hidden", c.hidden}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    if (j.contains("lr_drops"))
        c.lr_drops = j.at("lr_drops").get<std::vector<std::pair<std::size_t, double>>>();
    c.sgd_momentum = j.value("sgd_momentum", c.sgd_momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.eps = j.value("eps", c.eps);
    if (j.contains("train_attack")) c.train_attack = j.at("train_attack").get<AttackSpec>();
    if (j.contains("aux_attack")) c.aux_attack = j.at("aux_attack").get<AttackSpec>();
    c.eta_aux = j.value("eta_aux", c.eta_aux);
    c.aux_reverse_steps = j.value("aux_reverse_steps", c.aux_reverse_steps);
    if (j.contains("lambda_mode")) {
        const auto s = j.at("lambda_mode").get<std::string>();
        if (s == "adaptive")
            c.lambda_mode = LambdaMode::Adaptive;
        else if (s == "static")
            c.lambda_mode = LambdaMode::Static;
        else
            throw SpecError("unknown lambda_mode: " + s);
    }
    c.lambda_static = j.value("lambda_static", c.lambda_static);
    c.trades_beta = j.value("trades_beta", c.trades_beta);
    if (j.contains("prior_mode")) {
        const auto s = j.at("prior_mode").get<std::string>();
        if (s == "fixed")
            c.prior_mode = PriorMode::Fixed;
        else if (s == "online")
            c.prior_mode = PriorMode::Online;
        else
            throw SpecError("unknown prior_mode: " + s);
    }
    c.prior_mu = j.value("prior_mu", c.prior_mu);
    c.prior_sigma = j.value("prior_sigma", c.prior_sigma);
    c.prior_warmup = j.value("prior_warmup", c.prior_warmup);
    c.probe_subset = j.value("probe_subset", c.probe_subset);
    c.r_max = j.value("r_max", c.r_max);
    c.seed = j.value("seed", c.seed);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    c.hidden = j.value("hidden", c.hidden);
}

/// Whole-run configuration file: training settings plus the dataset.
struct RunConfig {
    TrainConfig train;
    DatasetSpec dataset;
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"train", c.train}, {"dataset", c.dataset}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    c = RunConfig{};
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<DatasetSpec>();
}

} // namespace hfat
