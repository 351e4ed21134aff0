#include "imitate/baseline.hpp"

#include <cmath>

#include "imitate/config.hpp"
#include "imitate/warp.hpp"

namespace imitate::baseline {

warp::DisplacementField pairwise_register(const Tensor& moving, const Tensor& fixed,
                                          const unet::CondUNet& model) {
    require(moving.same_shape(fixed), "moving/fixed shape mismatch");
    require(model.config.with_fixed && model.config.n_inputs == 1,
            "pairwise_register needs a (fixed, 1 mover) model");
    unet::ConditioningContext ctx;
    ctx.movers = {moving};
    ctx.deltas = {0.0};
    ctx.fixed = fixed;
    Tensor stack = unet::CondUNet::stack_inputs(ctx, true);
    return model.forward(stack, ctx.deltas)[0];
}

RescaleResult rescale_interpolate_full(const Tensor& moving, const Tensor& fixed,
                                       const unet::CondUNet& model, double phi_m,
                                       double phi_f, double phi_target) {
    require(phi_m != phi_f, "moving and fixed condition values must differ");
    warp::DisplacementField full = pairwise_register(moving, fixed, model);
    RescaleResult r;
    r.scale = (phi_m - phi_target) / (phi_m - phi_f);
    r.field = warp::scale_field(full, r.scale);
    r.image = warp::warp_image(moving, r.field);
    return r;
}

Tensor rescale_interpolate(const Tensor& moving, const Tensor& fixed,
                           const unet::CondUNet& model, double phi_m, double phi_f,
                           double phi_target) {
    return rescale_interpolate_full(moving, fixed, model, phi_m, phi_f, phi_target).image;
}

std::vector<VariantRun> ablation_variants(const phantom::SliceDataset& dataset,
                                          const unet::ModelConfig& base_model,
                                          const train::TrainConfig& base_train,
                                          const std::string& out_dir,
                                          const std::vector<std::string>& variants) {
    std::vector<VariantRun> runs;
    for (const auto& variant : variants) {
        config::RunConfig c;
        c.model = base_model;
        c.train = base_train;
        config::apply_variant(c, variant);
        c.train.n_inputs = c.model.n_inputs;
        VariantRun run;
        run.variant = variant;
        run.fit = train::fit(dataset, c.model, c.train, out_dir + "/" + variant);
        run.checkpoint_path = run.fit.checkpoint_path;
        runs.push_back(std::move(run));
    }
    return runs;
}

}  // namespace imitate::baseline
