#include "imitate/config.hpp"

#include <fstream>
#include <set>

#include "imitate/checkpoint.hpp"

namespace imitate::config {

using nlohmann::json;

namespace {

/// Rejects keys that are not in the allowed set; typos must fail before any
/// computation starts.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    require(j.is_object(), "config section '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key()))
            throw std::invalid_argument("unknown config key '" + where + "." + it.key() + "'");
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json anatomy_json(const phantom::Anatomy& a) {
    return {{"body_cy", a.body_cy}, {"body_cx", a.body_cx}, {"body_ry", a.body_ry},
            {"body_rx", a.body_rx}, {"background_intensity", a.background_intensity},
            {"body_intensity", a.body_intensity}, {"lung_cy", a.lung_cy},
            {"lung_dx", a.lung_dx}, {"lung_ry", a.lung_ry}, {"lung_rx", a.lung_rx},
            {"lung_intensity", a.lung_intensity}, {"diaphragm_ref_row", a.diaphragm_ref_row},
            {"diaphragm_curv", a.diaphragm_curv}, {"tumor_cy", a.tumor_cy},
            {"tumor_dx", a.tumor_dx}, {"tumor_r", a.tumor_r},
            {"tumor_intensity", a.tumor_intensity}, {"tumor_motion", a.tumor_motion},
            {"edge_width", a.edge_width}, {"z_lung", a.z_lung}, {"z_tumor", a.z_tumor}};
}

phantom::Anatomy anatomy_from_json(const json& j, phantom::Anatomy a) {
    check_keys(j, {"body_cy", "body_cx", "body_ry", "body_rx", "background_intensity",
                   "body_intensity", "lung_cy", "lung_dx", "lung_ry", "lung_rx",
                   "lung_intensity", "diaphragm_ref_row", "diaphragm_curv", "tumor_cy",
                   "tumor_dx", "tumor_r", "tumor_intensity", "tumor_motion", "edge_width",
                   "z_lung", "z_tumor"},
               "phantom.anatomy");
    maybe(j, "body_cy", a.body_cy);
    maybe(j, "body_cx", a.body_cx);
    maybe(j, "body_ry", a.body_ry);
    maybe(j, "body_rx", a.body_rx);
    maybe(j, "background_intensity", a.background_intensity);
    maybe(j, "body_intensity", a.body_intensity);
    maybe(j, "lung_cy", a.lung_cy);
    maybe(j, "lung_dx", a.lung_dx);
    maybe(j, "lung_ry", a.lung_ry);
    maybe(j, "lung_rx", a.lung_rx);
    maybe(j, "lung_intensity", a.lung_intensity);
    maybe(j, "diaphragm_ref_row", a.diaphragm_ref_row);
    maybe(j, "diaphragm_curv", a.diaphragm_curv);
    maybe(j, "tumor_cy", a.tumor_cy);
    maybe(j, "tumor_dx", a.tumor_dx);
    maybe(j, "tumor_r", a.tumor_r);
    maybe(j, "tumor_intensity", a.tumor_intensity);
    maybe(j, "tumor_motion", a.tumor_motion);
    maybe(j, "edge_width", a.edge_width);
    maybe(j, "z_lung", a.z_lung);
    maybe(j, "z_tumor", a.z_tumor);
    return a;
}

json spec_json(const phantom::PhantomSpec& s) {
    return {{"image_size", {s.height, s.width}},
            {"anatomy", anatomy_json(s.anatomy)},
            {"motion_gain", s.motion_gain},
            {"hysteresis_gain", s.hysteresis_gain},
            {"noise_sigma", s.noise_sigma}};
}

phantom::PhantomSpec spec_from_json(const json& j, phantom::PhantomSpec s) {
    check_keys(j, {"image_size", "anatomy", "motion_gain", "hysteresis_gain", "noise_sigma",
                   "signal", "plan"},
               "phantom");
    if (j.contains("image_size")) {
        auto v = j.at("image_size").get<std::vector<int>>();
        require(v.size() == 2, "image_size must be [H, W]");
        s.height = v[0];
        s.width = v[1];
    }
    if (j.contains("anatomy")) s.anatomy = anatomy_from_json(j.at("anatomy"), s.anatomy);
    maybe(j, "motion_gain", s.motion_gain);
    maybe(j, "hysteresis_gain", s.hysteresis_gain);
    maybe(j, "noise_sigma", s.noise_sigma);
    return s;
}

json plan_json(const phantom::AcquisitionPlan& p) {
    return {{"table_positions", p.table_positions},
            {"frames_per_position", p.frames_per_position},
            {"sample_rate", p.sample_rate},
            {"dwell", p.dwell}};
}

phantom::AcquisitionPlan plan_from_json(const json& j, phantom::AcquisitionPlan p) {
    check_keys(j, {"table_positions", "frames_per_position", "sample_rate", "dwell"},
               "phantom.plan");
    maybe(j, "table_positions", p.table_positions);
    maybe(j, "frames_per_position", p.frames_per_position);
    maybe(j, "sample_rate", p.sample_rate);
    maybe(j, "dwell", p.dwell);
    return p;
}

json signal_params_json(const phantom::SignalParams& s) {
    return {{"base_period", s.base_period},
            {"jitter", s.jitter},
            {"drift", s.drift},
            {"sample_rate", s.sample_rate}};
}

phantom::SignalParams signal_params_from_json(const json& j, phantom::SignalParams s) {
    check_keys(j, {"base_period", "jitter", "drift", "sample_rate"}, "phantom.signal");
    maybe(j, "base_period", s.base_period);
    maybe(j, "jitter", s.jitter);
    maybe(j, "drift", s.drift);
    maybe(j, "sample_rate", s.sample_rate);
    return s;
}

namespace {

losses::LossWeights weights_from_json(const json& j, losses::LossWeights w) {
    check_keys(j, {"alpha", "beta", "gamma", "zeta"}, "train.weights");
    maybe(j, "alpha", w.alpha);
    maybe(j, "beta", w.beta);
    maybe(j, "gamma", w.gamma);
    maybe(j, "zeta", w.zeta);
    return w;
}

unet::ModelConfig model_from_json_partial(const json& j, unet::ModelConfig m) {
    check_keys(j, {"n_inputs", "depth", "channels", "embed_dim", "use_attention_gates",
                   "head_init_scale", "with_fixed", "conditioned"},
               "model");
    maybe(j, "n_inputs", m.n_inputs);
    maybe(j, "depth", m.depth);
    maybe(j, "channels", m.channels);
    maybe(j, "embed_dim", m.embed_dim);
    maybe(j, "use_attention_gates", m.use_attention_gates);
    maybe(j, "head_init_scale", m.head_init_scale);
    maybe(j, "with_fixed", m.with_fixed);
    maybe(j, "conditioned", m.conditioned);
    return m;
}

train::TrainConfig train_from_json(const json& j, train::TrainConfig t) {
    check_keys(j, {"epochs", "learning_rate", "batch_size", "steps_per_epoch", "weights",
                   "n_inputs", "seed", "ncc_window", "val_fraction", "sampler",
                   "condition_on", "use_masks"},
               "train");
    maybe(j, "epochs", t.epochs);
    maybe(j, "learning_rate", t.learning_rate);
    maybe(j, "batch_size", t.batch_size);
    maybe(j, "steps_per_epoch", t.steps_per_epoch);
    if (j.contains("weights")) t.weights = weights_from_json(j.at("weights"), t.weights);
    maybe(j, "n_inputs", t.n_inputs);
    maybe(j, "seed", t.seed);
    maybe(j, "ncc_window", t.ncc_window);
    maybe(j, "val_fraction", t.val_fraction);
    maybe(j, "sampler", t.sampler);
    maybe(j, "condition_on", t.condition_on);
    maybe(j, "use_masks", t.use_masks);
    return t;
}

EvaluateConfig evaluate_from_json(const json& j, EvaluateConfig e) {
    check_keys(j, {"targets", "n_context", "ncc_window", "continuity", "interpolation"},
               "evaluate");
    maybe(j, "targets", e.targets);
    maybe(j, "n_context", e.n_context);
    maybe(j, "ncc_window", e.ncc_window);
    maybe(j, "continuity", e.continuity);
    maybe(j, "interpolation", e.interpolation);
    return e;
}

}  // namespace

RunConfig parse(const json& j) {
    RunConfig c;
    check_keys(j, {"seed", "phantom", "model", "train", "evaluate"}, "<root>");
    maybe(j, "seed", c.seed);
    if (j.contains("phantom")) {
        const json& p = j.at("phantom");
        c.spec = spec_from_json(p, c.spec);
        if (p.contains("signal")) c.signal = signal_params_from_json(p.at("signal"), c.signal);
        if (p.contains("plan")) c.plan = plan_from_json(p.at("plan"), c.plan);
    }
    if (j.contains("model")) c.model = model_from_json_partial(j.at("model"), c.model);
    if (j.contains("train")) c.train = train_from_json(j.at("train"), c.train);
    if (j.contains("evaluate")) c.evaluate = evaluate_from_json(j.at("evaluate"), c.evaluate);

    // Keep the paired fields coherent unless explicitly overridden.
    if (j.contains("train") && j.at("train").contains("n_inputs") &&
        !(j.contains("model") && j.at("model").contains("n_inputs")))
        c.model.n_inputs = c.train.n_inputs;
    if (j.contains("model") && j.at("model").contains("n_inputs") &&
        !(j.contains("train") && j.at("train").contains("n_inputs")))
        c.train.n_inputs = c.model.n_inputs;

    c.model.validate();
    c.train.validate();
    require(c.model.n_inputs == c.train.n_inputs, "model/train n_inputs disagree");
    require(!c.evaluate.targets.empty(), "evaluate.targets must be nonempty");
    for (double t : c.evaluate.targets)
        require(t >= 0.0 && t <= 1.0, "target amplitudes must lie in [0,1]");
    return c;
}

RunConfig load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
    return parse(j);
}

json to_json(const RunConfig& c) {
    json phantom_section = spec_json(c.spec);
    phantom_section["signal"] = signal_params_json(c.signal);
    phantom_section["plan"] = plan_json(c.plan);
    return {{"seed", c.seed},
            {"phantom", phantom_section},
            {"model", unet::model_config_json(c.model)},
            {"train",
             {{"epochs", c.train.epochs},
              {"learning_rate", c.train.learning_rate},
              {"batch_size", c.train.batch_size},
              {"steps_per_epoch", c.train.steps_per_epoch},
              {"weights",
               {{"alpha", c.train.weights.alpha},
                {"beta", c.train.weights.beta},
                {"gamma", c.train.weights.gamma},
                {"zeta", c.train.weights.zeta}}},
              {"n_inputs", c.train.n_inputs},
              {"seed", c.train.seed},
              {"ncc_window", c.train.ncc_window},
              {"val_fraction", c.train.val_fraction},
              {"sampler", c.train.sampler},
              {"condition_on", c.train.condition_on},
              {"use_masks", c.train.use_masks}}},
            {"evaluate",
             {{"targets", c.evaluate.targets},
              {"n_context", c.evaluate.n_context},
              {"ncc_window", c.evaluate.ncc_window},
              {"continuity", c.evaluate.continuity},
              {"interpolation", c.evaluate.interpolation}}}};
}

std::vector<std::string> variant_names() {
    return {"pairwise", "multireg", "multireg-cond", "imitate"};
}

void apply_variant(RunConfig& c, const std::string& variant) {
    if (variant == "pairwise") {
        c.model.with_fixed = true;
        c.model.conditioned = false;
        c.model.n_inputs = 1;
        c.train.n_inputs = 1;
        c.train.weights = losses::LossWeights::pairwise_preset();
    } else if (variant == "multireg") {
        c.model.with_fixed = true;
        c.model.conditioned = false;
        c.train.weights = losses::LossWeights::imitate_preset();
    } else if (variant == "multireg-cond") {
        c.model.with_fixed = true;
        c.model.conditioned = true;
        c.train.weights = losses::LossWeights::imitate_preset();
    } else if (variant == "imitate") {
        c.model.with_fixed = false;
        c.model.conditioned = true;
        c.train.weights = losses::LossWeights::imitate_preset();
    } else {
        throw std::invalid_argument("unknown variant: " + variant);
    }
}

}  // namespace imitate::config
