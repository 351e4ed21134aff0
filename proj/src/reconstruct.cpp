#include "imitate/reconstruct.hpp"

#include <algorithm>
#include <cmath>

#include "imitate/baseline.hpp"
#include "imitate/losses.hpp"

namespace imitate::recon {

namespace {

/// Candidate order for context selection: amplitude proximity, ties to the
/// earlier acquisition.
std::vector<int> by_amplitude_proximity(const std::vector<phantom::AcquiredSlice>& group,
                                        double target) {
    std::vector<int> idx(group.size());
    for (size_t i = 0; i < group.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        double da = std::abs(group[static_cast<size_t>(a)].amplitude - target);
        double db = std::abs(group[static_cast<size_t>(b)].amplitude - target);
        if (da != db) return da < db;
        return group[static_cast<size_t>(a)].time < group[static_cast<size_t>(b)].time;
    });
    return idx;
}

RecoveredFrame recover_pairwise(const ReconstructionRequest& request,
                                const std::vector<phantom::AcquiredSlice>& group,
                                const unet::CondUNet& model) {
    // Bracket the target amplitude when possible; otherwise the two nearest.
    int below = -1, above = -1;
    for (size_t i = 0; i < group.size(); ++i) {
        double a = group[i].amplitude;
        if (a <= request.target_amplitude &&
            (below < 0 || a > group[static_cast<size_t>(below)].amplitude))
            below = static_cast<int>(i);
        if (a >= request.target_amplitude &&
            (above < 0 || a < group[static_cast<size_t>(above)].amplitude))
            above = static_cast<int>(i);
    }
    auto order = by_amplitude_proximity(group, request.target_amplitude);
    if (below < 0 || above < 0 || below == above ||
        group[static_cast<size_t>(below)].amplitude ==
            group[static_cast<size_t>(above)].amplitude) {
        below = order[0];
        above = -1;
        for (int idx : order) {
            if (group[static_cast<size_t>(idx)].amplitude !=
                group[static_cast<size_t>(below)].amplitude) {
                above = idx;
                break;
            }
        }
        require(above >= 0, "pairwise recovery needs two distinct amplitudes");
    }
    const auto& moving = group[static_cast<size_t>(below)];
    const auto& fixed = group[static_cast<size_t>(above)];
    auto res = baseline::rescale_interpolate_full(moving.pixels, fixed.pixels, model,
                                                  moving.amplitude, fixed.amplitude,
                                                  request.target_amplitude);
    RecoveredFrame out;
    out.image = std::move(res.image);
    out.field = std::move(res.field);
    out.chosen_index = moving.index;
    out.chosen_delta = moving.amplitude - request.target_amplitude;
    out.context_indices = {moving.index, fixed.index};
    out.deltas = {moving.amplitude - request.target_amplitude,
                  fixed.amplitude - request.target_amplitude};
    return out;
}

}  // namespace

RecoveredFrame recover_frame(const ReconstructionRequest& request,
                             const phantom::SliceDataset& dataset,
                             const unet::CondUNet& model) {
    require(request.target_amplitude >= 0.0 && request.target_amplitude <= 1.0,
            "target amplitude must lie in [0,1]");
    require(request.table_position >= 0 && request.table_position < dataset.positions(),
            "table position out of range");
    const auto& group = dataset.groups[static_cast<size_t>(request.table_position)];
    const int n = model.config.n_inputs;

    if (model.config.with_fixed && n == 1)
        return recover_pairwise(request, group, model);

    auto order = by_amplitude_proximity(group, request.target_amplitude);

    // Fixed-image variants target a proxy: the nearest-amplitude slice.
    int proxy = -1;
    size_t cursor = 0;
    if (model.config.with_fixed) {
        proxy = order[cursor++];
    }
    require(group.size() >= cursor + static_cast<size_t>(n),
            "table-position group too small for the requested context");

    std::vector<int> chosen(order.begin() + static_cast<long>(cursor),
                            order.begin() + static_cast<long>(cursor) + n);
    // Channel stacking follows acquisition time, as in training.
    std::sort(chosen.begin(), chosen.end(), [&](int a, int b) {
        return group[static_cast<size_t>(a)].time < group[static_cast<size_t>(b)].time;
    });

    double reference = model.config.with_fixed ? group[static_cast<size_t>(proxy)].amplitude
                                               : request.target_amplitude;
    unet::ConditioningContext ctx;
    for (int idx : chosen) {
        ctx.movers.push_back(group[static_cast<size_t>(idx)].pixels);
        ctx.deltas.push_back(group[static_cast<size_t>(idx)].amplitude - reference);
    }
    if (model.config.with_fixed) ctx.fixed = group[static_cast<size_t>(proxy)].pixels;

    Tensor stack = unet::CondUNet::stack_inputs(ctx, model.config.with_fixed);
    auto fields = model.forward(stack, ctx.deltas);

    size_t best = 0;
    for (size_t i = 1; i < ctx.deltas.size(); ++i)
        if (std::abs(ctx.deltas[i]) < std::abs(ctx.deltas[best])) best = i;

    RecoveredFrame out;
    out.field = fields[best];
    out.image = warp::warp_image(ctx.movers[best], out.field);
    out.chosen_index = group[static_cast<size_t>(chosen[best])].index;
    out.chosen_delta = ctx.deltas[best];
    out.context_indices = chosen;
    out.deltas = ctx.deltas;
    return out;
}

RecoveredFrame nearest_slice_copy(const ReconstructionRequest& request,
                                  const phantom::SliceDataset& dataset) {
    const auto& group = dataset.groups[static_cast<size_t>(request.table_position)];
    require(!group.empty(), "empty table-position group");
    auto order = by_amplitude_proximity(group, request.target_amplitude);
    const auto& s = group[static_cast<size_t>(order[0])];
    RecoveredFrame out;
    out.image = s.pixels;
    out.field = Tensor({s.pixels.dim(0), s.pixels.dim(1), 2});
    out.chosen_index = s.index;
    out.chosen_delta = s.amplitude - request.target_amplitude;
    out.context_indices = {s.index};
    out.deltas = {out.chosen_delta};
    return out;
}

std::vector<ReconVolume> assemble_4dct(const phantom::SliceDataset& dataset,
                                       const std::vector<double>& targets,
                                       const unet::CondUNet& model) {
    require(!targets.empty(), "target amplitude list is empty");
    const int P = dataset.positions();
    const int H = dataset.spec.height, W = dataset.spec.width;
    std::vector<ReconVolume> out;
    for (double target : targets) {
        ReconVolume v;
        v.target_amplitude = target;
        v.volume = Tensor({P, H, W});
        for (int p = 0; p < P; ++p) {
            ReconstructionRequest req{target, p, model.config.n_inputs};
            RecoveredFrame f = recover_frame(req, dataset, model);
            std::copy(f.image.data(), f.image.data() + f.image.numel(),
                      v.volume.data() + static_cast<size_t>(p) * H * W);
            v.frames.push_back(std::move(f));
        }
        out.push_back(std::move(v));
    }
    return out;
}

namespace {

struct PairStats {
    double ncc = 0.0, ncc_body = 0.0, rmse = 0.0, rmse_body = 0.0;
};

PairStats volume_pair_stats(const Tensor& volume, const Tensor& body, int window) {
    const int P = volume.dim(0), H = volume.dim(1), W = volume.dim(2);
    const size_t plane = static_cast<size_t>(H) * W;
    double body_count = body.sum();
    PairStats acc;
    for (int p = 0; p + 1 < P; ++p) {
        Tensor a({H, W}, std::vector<double>(volume.data() + p * plane,
                                             volume.data() + (p + 1) * plane));
        Tensor b({H, W}, std::vector<double>(volume.data() + (p + 1) * plane,
                                             volume.data() + (p + 2) * plane));
        Tensor cc = losses::ncc_map(a, b, window);
        double mean_cc = 0.0, mean_cc_body = 0.0, se = 0.0, se_body = 0.0;
        for (size_t i = 0; i < plane; ++i) {
            double d = a[i] - b[i];
            mean_cc += cc[i];
            se += d * d;
            if (body[i] > 0.5) {
                mean_cc_body += cc[i];
                se_body += d * d;
            }
        }
        acc.ncc += -mean_cc / static_cast<double>(plane);
        acc.rmse += std::sqrt(se / static_cast<double>(plane));
        acc.ncc_body += -mean_cc_body / body_count;
        acc.rmse_body += std::sqrt(se_body / body_count);
    }
    double inv = 1.0 / static_cast<double>(P - 1);
    acc.ncc *= inv;
    acc.ncc_body *= inv;
    acc.rmse *= inv;
    acc.rmse_body *= inv;
    return acc;
}

}  // namespace

ContinuityMetrics continuity_metrics(const Tensor& volume, const Tensor& oracle_volume,
                                     const Tensor& body_mask, int window) {
    require(volume.rank() == 3 && volume.dim(0) >= 2, "volume needs depth >= 2");
    require(volume.same_shape(oracle_volume), "volume/oracle shape mismatch");
    PairStats v = volume_pair_stats(volume, body_mask, window);
    PairStats o = volume_pair_stats(oracle_volume, body_mask, window);
    ContinuityMetrics m;
    m.ncc = v.ncc;
    m.rmse = v.rmse;
    m.n_ncc = v.ncc_body - o.ncc_body;
    m.n_rmse = v.rmse_body - o.rmse_body;
    return m;
}

double hard_dice(const Tensor& soft_onehot, const Tensor& labels, double threshold) {
    require(soft_onehot.rank() == 3, "soft mask must be {L,H,W}");
    const int L = soft_onehot.dim(0), H = soft_onehot.dim(1), W = soft_onehot.dim(2);
    require(labels.rank() == 2 && labels.dim(0) == H && labels.dim(1) == W,
            "label grid shape mismatch");
    const size_t plane = static_cast<size_t>(H) * W;
    double acc = 0.0;
    int counted = 0;
    for (int l = 1; l < L; ++l) {
        size_t inter = 0, na = 0, nb = 0;
        for (size_t i = 0; i < plane; ++i) {
            bool a = soft_onehot.data()[l * plane + i] >= threshold;
            bool b = std::lround(labels[i]) == l;
            inter += (a && b);
            na += a;
            nb += b;
        }
        double dice = (na + nb == 0) ? 1.0 : 2.0 * inter / static_cast<double>(na + nb);
        acc += dice;
        ++counted;
    }
    return counted == 0 ? 1.0 : acc / counted;
}

InterpolationMetrics interpolation_metrics(const Tensor& recovered, const Tensor& oracle_frame,
                                           const Tensor& recovered_mask_soft,
                                           const Tensor& oracle_mask_labels,
                                           const warp::DisplacementField& field, int window) {
    require(recovered.same_shape(oracle_frame), "recovered/oracle shape mismatch");
    InterpolationMetrics m;
    m.ncc = losses::ncc_value(oracle_frame, recovered, window);
    m.dice = hard_dice(recovered_mask_soft, oracle_mask_labels);
    m.detjac = losses::detjac_value(field);
    return m;
}

double paired_significance(const std::vector<double>& series_a,
                           const std::vector<double>& series_b) {
    return stats::wilcoxon_signed_rank(series_a, series_b).p_value;
}

Tensor oracle_volume(const phantom::SliceDataset& dataset, double target_amplitude) {
    const int P = dataset.positions();
    const int H = dataset.spec.height, W = dataset.spec.width;
    Tensor out({P, H, W});
    for (int p = 0; p < P; ++p) {
        phantom::PhantomSpec ps = phantom::spec_at_position(dataset.spec, p, P);
        Tensor pixels;
        phantom::render_frame(ps, target_amplitude, 0.0, &pixels, nullptr);
        std::copy(pixels.data(), pixels.data() + pixels.numel(),
                  out.data() + static_cast<size_t>(p) * H * W);
    }
    return out;
}

double rmse(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "rmse: shape mismatch");
    double se = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        se += d * d;
    }
    return std::sqrt(se / static_cast<double>(a.numel()));
}

std::vector<FrameEvalRow> evaluate_heldout(const phantom::SliceDataset& dataset,
                                           const unet::CondUNet& model,
                                           const std::vector<int>& positions, int window,
                                           int stride) {
    require(stride >= 1, "stride must be at least 1");
    const bool pairwise = model.config.with_fixed && model.config.n_inputs == 1;
    const int n = model.config.n_inputs;
    std::vector<FrameEvalRow> rows;

    for (int p : positions) {
        const auto& group = dataset.groups.at(static_cast<size_t>(p));
        const int size = static_cast<int>(group.size());
        phantom::PhantomSpec pos_spec =
            phantom::spec_at_position(dataset.spec, p, dataset.positions());
        for (int idx = 1; idx + 1 < size; idx += stride) {
            const auto& target = group[static_cast<size_t>(idx)];
            Tensor recovered, warped_mask;
            warp::DisplacementField field;

            if (pairwise) {
                const auto& moving = group[static_cast<size_t>(idx - 1)];
                const auto& fixed = group[static_cast<size_t>(idx + 1)];
                if (moving.amplitude == fixed.amplitude) continue;
                auto res = baseline::rescale_interpolate_full(
                    moving.pixels, fixed.pixels, model, moving.amplitude, fixed.amplitude,
                    target.amplitude);
                recovered = std::move(res.image);
                field = std::move(res.field);
                warped_mask = warp::warp_mask(moving.mask, field, phantom::kNumLabels);
            } else {
                int want_before = (n + 1) / 2;
                int before = std::min(want_before, idx);
                int after = std::min(n - before, size - 1 - idx);
                before = n - after;
                unet::ConditioningContext ctx;
                std::vector<const phantom::AcquiredSlice*> movers;
                for (int i = idx - before; i <= idx + after; ++i) {
                    if (i == idx) continue;
                    movers.push_back(&group[static_cast<size_t>(i)]);
                    ctx.movers.push_back(group[static_cast<size_t>(i)].pixels);
                    ctx.deltas.push_back(group[static_cast<size_t>(i)].amplitude -
                                         target.amplitude);
                }
                if (model.config.with_fixed) ctx.fixed = target.pixels;
                Tensor stack = unet::CondUNet::stack_inputs(ctx, model.config.with_fixed);
                auto fields = model.forward(stack, ctx.deltas);
                size_t best = 0;
                for (size_t i = 1; i < ctx.deltas.size(); ++i)
                    if (std::abs(ctx.deltas[i]) < std::abs(ctx.deltas[best])) best = i;
                field = fields[best];
                recovered = warp::warp_image(ctx.movers[best], field);
                warped_mask = warp::warp_mask(movers[best]->mask, field, phantom::kNumLabels);
            }

            FrameEvalRow row;
            row.position = p;
            row.index = idx;
            row.amplitude = target.amplitude;
            row.rate = target.rate;
            InterpolationMetrics m = interpolation_metrics(recovered, target.pixels,
                                                           warped_mask, target.mask, field,
                                                           window);
            row.ncc = m.ncc;
            row.dice = m.dice;
            row.detjac = m.detjac;
            row.rmse = rmse(recovered, target.pixels);
            Tensor oracle;
            phantom::render_frame(pos_spec, target.amplitude, target.rate, &oracle, nullptr);
            row.rmse_oracle = rmse(recovered, oracle);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace imitate::recon
