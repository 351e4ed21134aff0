#pragma once

#include <string>
#include <vector>

#include "imitate/condunet.hpp"
#include "imitate/losses.hpp"
#include "imitate/phantom.hpp"
#include "imitate/training.hpp"
#include "json.hpp"

namespace imitate::config {

struct EvaluateConfig {
    std::vector<double> targets = {0.0, 0.33, 0.50, 0.66, 0.83};
    int n_context = 3;
    int ncc_window = 9;
    bool continuity = true;
    bool interpolation = true;
};

/// Resolved run configuration. Every field has a default; config files are
/// partial overrides with strict unknown-key rejection.
struct RunConfig {
    uint64_t seed = 1;
    phantom::PhantomSpec spec;
    phantom::SignalParams signal;
    phantom::AcquisitionPlan plan;
    unet::ModelConfig model;
    train::TrainConfig train;
    EvaluateConfig evaluate;
};

RunConfig parse(const nlohmann::json& j);
RunConfig load_file(const std::string& path);
nlohmann::json to_json(const RunConfig& c);

/// Ablation presets: pairwise / multireg / multireg-cond / imitate.
void apply_variant(RunConfig& c, const std::string& variant);
std::vector<std::string> variant_names();

// JSON converters shared with dataset manifests.
nlohmann::json anatomy_json(const phantom::Anatomy& a);
nlohmann::json spec_json(const phantom::PhantomSpec& s);
nlohmann::json plan_json(const phantom::AcquisitionPlan& p);
nlohmann::json signal_params_json(const phantom::SignalParams& s);
phantom::Anatomy anatomy_from_json(const nlohmann::json& j, phantom::Anatomy base);
phantom::PhantomSpec spec_from_json(const nlohmann::json& j, phantom::PhantomSpec base);
phantom::AcquisitionPlan plan_from_json(const nlohmann::json& j, phantom::AcquisitionPlan base);
phantom::SignalParams signal_params_from_json(const nlohmann::json& j,
                                              phantom::SignalParams base);

}  // namespace imitate::config
