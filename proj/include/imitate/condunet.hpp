#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "imitate/autodiff.hpp"
#include "imitate/tensor.hpp"

namespace imitate::unet {

struct ModelConfig {
    int n_inputs = 3;                           // number of moving images
    int depth = 4;                              // encoder levels
    std::vector<int> channels = {16, 32, 64, 128};
    int embed_dim = 32;
    bool use_attention_gates = true;
    double head_init_scale = 1e-3;
    bool with_fixed = false;   // prepend the fixed/target image as a channel
    bool conditioned = true;   // enable the delta embedding + FiLM path

    int in_channels() const { return n_inputs + (with_fixed ? 1 : 0); }
    void validate() const;
};

struct ConditioningContext {
    std::vector<Tensor> movers;       // n {H,W} grids
    std::vector<double> deltas;       // n condition values
    std::vector<Tensor> mover_masks;  // optional, n {H,W} label grids
    Tensor fixed;                     // optional fixed image (with_fixed models)

    int n() const { return static_cast<int>(movers.size()); }
    void validate() const;
};

/// Raw sinusoidal features for one condition value: embed_dim/2 sines then
/// embed_dim/2 cosines of delta/omega_k, omega_k geometric in [1e-4, 1].
Tensor sinusoidal_features(double delta, int embed_dim);

/// Named parameter store with a stable registration order.
class ParamSet {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<std::string>& names() const { return names_; }
    size_t count() const { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor> values_;
    std::unordered_map<std::string, int> index_;
};

/// Parameter lookup used while building a graph; training binds leaves with
/// gradients, inference binds constants.
using ParamBinder = std::function<ad::Var(const std::string&)>;

/// delta embedding: per-delta sinusoidal features, concatenated across the n
/// inputs and projected by a two-layer perceptron to embed_dim.
ad::Var embed_deltas(const std::vector<double>& deltas, int embed_dim, const ParamBinder& p);

/// FiLM block conditioning: an FC layer maps the embedding to per-channel
/// (s1, s2); output = features * (1 + s1) + s2.
ad::Var film_modulate(const ad::Var& features, const ad::Var& embedding, const ad::Var& fc_w,
                      const ad::Var& fc_b);

struct AttentionGateParams {
    ad::Var wx, wg, bias, psi_w, psi_b;
};

/// Additive attention gate: skip features scaled by a sigmoid coefficient
/// map derived from the coarser-level gating signal.
ad::Var attention_gate(const ad::Var& skip, const ad::Var& gating,
                       const AttentionGateParams& p);

class CondUNet {
public:
    ModelConfig config;
    ParamSet params;

    static CondUNet init(const ModelConfig& config, uint64_t seed);

    /// Build the forward graph; input_stack {in_channels,H,W}. Returns n
    /// displacement fields {2,H,W}.
    std::vector<ad::Var> forward_graph(const ad::Var& input_stack,
                                       const std::vector<double>& deltas,
                                       const ParamBinder& p) const;

    /// Inference: constants all the way down.
    std::vector<Tensor> forward(const Tensor& input_stack,
                                const std::vector<double>& deltas) const;

    /// Stack fixed (optional) + movers channel-wise, movers in given order.
    static Tensor stack_inputs(const ConditioningContext& ctx, bool with_fixed);

    ParamBinder constant_binder() const;
};

}  // namespace imitate::unet
