#include "imitate/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "imitate/checkpoint.hpp"
#include "imitate/io.hpp"
#include "imitate/warp.hpp"
#include "json.hpp"

namespace imitate::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    require(epochs >= 1, "epochs must be at least 1");
    require(learning_rate > 0.0, "learning rate must be positive");
    require(batch_size >= 1, "batch size must be at least 1");
    require(n_inputs >= 1 && n_inputs <= 8, "n_inputs must lie in [1,8]");
    require(ncc_window % 2 == 1 && ncc_window >= 3, "ncc window must be odd and >= 3");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must lie in [0,1)");
    require(sampler == "nearest" || sampler == "combinatorial", "unknown sampler");
    require(condition_on == "amplitude" || condition_on == "phase",
            "condition_on must be amplitude or phase");
}

double cosine_lr(double lr0, int step, int total_steps) {
    if (total_steps <= 1) return lr0;
    double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * frac));
}

double condition_value(const phantom::AcquiredSlice& s, const std::string& condition_on) {
    return condition_on == "phase" ? s.phase : s.amplitude;
}

std::vector<TrainingSample> sample_training_batch(
    const std::vector<const std::vector<phantom::AcquiredSlice>*>& groups, int n,
    int batch_size, Rng& rng, const std::string& sampler, const std::string& condition_on) {
    require(!groups.empty(), "no table-position groups to sample from");
    for (const auto* g : groups)
        require(static_cast<int>(g->size()) >= n + 1,
                "table-position group smaller than n+1 slices");

    std::vector<TrainingSample> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        const auto& group = *groups[static_cast<size_t>(rng.index(static_cast<int>(groups.size())))];
        const int size = static_cast<int>(group.size());
        const int target = rng.index(size);

        std::vector<int> chosen;
        chosen.reserve(static_cast<size_t>(n));
        if (sampler == "combinatorial") {
            std::vector<int> pool;
            pool.reserve(static_cast<size_t>(size - 1));
            for (int i = 0; i < size; ++i)
                if (i != target) pool.push_back(i);
            for (int k = 0; k < n; ++k) {
                int j = k + rng.index(static_cast<int>(pool.size()) - k);
                std::swap(pool[k], pool[j]);
                chosen.push_back(pool[k]);
            }
        } else {
            // Slices are time-ordered within a group, so index distance is
            // time distance. Take ceil(n/2) before and floor(n/2) after,
            // spilling to the other side at sequence boundaries.
            int want_before = (n + 1) / 2;
            int avail_before = target;
            int avail_after = size - 1 - target;
            int before = std::min(want_before, avail_before);
            int after = std::min(n - before, avail_after);
            before = n - after;  // spill back if the tail was short
            for (int i = target - before; i < target; ++i) chosen.push_back(i);
            for (int i = target + 1; i <= target + after; ++i) chosen.push_back(i);
        }
        std::sort(chosen.begin(), chosen.end());

        TrainingSample s;
        s.target = &group[target];
        s.table_position = s.target->table_position;
        double target_cond = condition_value(*s.target, condition_on);
        for (int idx : chosen) {
            s.movers.push_back(&group[idx]);
            s.deltas.push_back(condition_value(group[idx], condition_on) - target_cond);
        }
        batch.push_back(std::move(s));
    }
    return batch;
}

Adam::Adam(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(unet::ParamSet& params, const std::vector<Tensor>& grads, double lr) {
    const auto& names = params.names();
    require(grads.size() == names.size(), "gradient/parameter count mismatch");
    if (m_.empty()) {
        for (const auto& name : names) {
            m_.emplace_back(params.get(name).shape());
            v_.emplace_back(params.get(name).shape());
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < names.size(); ++i) {
        Tensor& p = params.get(names[i]);
        const Tensor& g = grads[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (size_t k = 0; k < p.numel(); ++k) {
            double gk = g.empty() ? 0.0 : g[k];
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
            double mh = m[k] / bc1;
            double vh = v[k] / bc2;
            p[k] -= lr * mh / (std::sqrt(vh) + eps_);
        }
    }
}

namespace {

struct SampleGraph {
    losses::CombinedTerms terms;
};

SampleGraph build_sample_graph(const unet::CondUNet& net, const TrainingSample& s,
                               const TrainConfig& config, const unet::ParamBinder& binder) {
    unet::ConditioningContext ctx;
    for (const auto* m : s.movers) ctx.movers.push_back(m->pixels);
    ctx.deltas = s.deltas;
    if (net.config.with_fixed) ctx.fixed = s.target->pixels;
    Tensor stack = unet::CondUNet::stack_inputs(ctx, net.config.with_fixed);

    auto fields = net.forward_graph(ad::constant(stack), s.deltas, binder);

    std::vector<ad::Var> warped, warped_masks;
    bool with_masks = config.use_masks && !s.target->mask.empty();
    ad::Var fixed = ad::constant(s.target->pixels);
    ad::Var fixed_onehot;
    if (with_masks)
        fixed_onehot = ad::constant(warp::one_hot(s.target->mask, phantom::kNumLabels));
    for (size_t i = 0; i < fields.size(); ++i) {
        warped.push_back(ad::grid_sample(ad::constant(s.movers[i]->pixels), fields[i]));
        if (with_masks) {
            Tensor onehot = warp::one_hot(s.movers[i]->mask, phantom::kNumLabels);
            warped_masks.push_back(ad::grid_sample(ad::constant(onehot), fields[i]));
        }
    }
    SampleGraph g;
    g.terms = losses::combined_loss(fixed, fixed_onehot, warped, warped_masks, fields,
                                    config.weights, config.ncc_window);
    return g;
}

}  // namespace

StepResult train_step(unet::CondUNet& net, Adam& adam,
                      const std::vector<TrainingSample>& batch, const TrainConfig& config,
                      double lr, const std::string& diag_path) {
    require(!batch.empty(), "empty batch");

    // One leaf per parameter, shared across the batch so gradients accumulate.
    std::unordered_map<std::string, ad::Var> leaves;
    for (const auto& name : net.params.names())
        leaves[name] = ad::leaf(net.params.get(name), true);
    unet::ParamBinder binder = [&](const std::string& name) {
        auto it = leaves.find(name);
        require(it != leaves.end(), "unbound parameter: " + name);
        return it->second;
    };

    losses::LossReport mean_report;
    ad::Var total;
    std::vector<losses::LossReport> reports;
    for (const auto& s : batch) {
        SampleGraph g = build_sample_graph(net, s, config, binder);
        reports.push_back(g.terms.report());
        total = total ? ad::add(total, g.terms.total) : g.terms.total;
    }
    total = ad::mul_scalar(total, 1.0 / static_cast<double>(batch.size()));

    for (const auto& r : reports) {
        mean_report.total += r.total / batch.size();
        mean_report.sim += r.sim / batch.size();
        mean_report.structural += r.structural / batch.size();
        mean_report.reg += r.reg / batch.size();
        mean_report.agreement += r.agreement / batch.size();
    }

    if (!std::isfinite(mean_report.total)) {
        if (!diag_path.empty()) {
            nlohmann::json diag;
            diag["reason"] = "non-finite loss";
            diag["lr"] = lr;
            nlohmann::json rs = nlohmann::json::array();
            for (const auto& r : reports)
                rs.push_back({{"total", r.total},
                              {"sim", r.sim},
                              {"struct", r.structural},
                              {"reg", r.reg},
                              {"agreement", r.agreement}});
            diag["sample_reports"] = rs;
            double pnorm = 0.0;
            for (const auto& name : net.params.names())
                for (size_t i = 0; i < net.params.get(name).numel(); ++i)
                    pnorm += net.params.get(name)[i] * net.params.get(name)[i];
            diag["param_l2"] = std::sqrt(pnorm);
            io::atomic_write(diag_path, diag.dump(2) + "\n");
        }
        throw std::runtime_error("training aborted: non-finite loss");
    }

    ad::backward(total, /*free_graph=*/true);

    std::vector<Tensor> grads;
    grads.reserve(net.params.names().size());
    for (const auto& name : net.params.names()) grads.push_back(leaves[name]->grad);
    adam.step(net.params, grads, lr);
    return StepResult{mean_report};
}

void split_positions(int n_positions, double val_fraction, std::vector<int>* train_pos,
                     std::vector<int>* val_pos) {
    train_pos->clear();
    val_pos->clear();
    int n_val = static_cast<int>(std::lround(n_positions * val_fraction));
    if (val_fraction > 0.0 && n_positions > 1) n_val = std::max(n_val, 1);
    n_val = std::min(n_val, n_positions - 1);
    if (n_val <= 0) {
        for (int p = 0; p < n_positions; ++p) train_pos->push_back(p);
        return;
    }
    // Spread validation positions evenly through the couch range.
    std::vector<bool> is_val(static_cast<size_t>(n_positions), false);
    for (int k = 0; k < n_val; ++k) {
        int p = static_cast<int>(std::lround((k + 0.5) * n_positions / n_val - 0.5));
        p = std::clamp(p, 0, n_positions - 1);
        while (is_val[static_cast<size_t>(p)]) p = (p + 1) % n_positions;
        is_val[static_cast<size_t>(p)] = true;
    }
    for (int p = 0; p < n_positions; ++p)
        (is_val[static_cast<size_t>(p)] ? val_pos : train_pos)->push_back(p);
}

namespace {

struct ValProbe {
    int position;
    int index;
};

std::vector<ValProbe> validation_probes(const phantom::SliceDataset& ds,
                                        const std::vector<int>& val_pos, int n) {
    std::vector<ValProbe> probes;
    for (int p : val_pos) {
        int size = static_cast<int>(ds.groups[static_cast<size_t>(p)].size());
        int step = std::max(1, size / 5);
        for (int i = step / 2; i < size; i += step) probes.push_back({p, i});
    }
    (void)n;
    return probes;
}

/// Validation NCC under the recovery selection rule: warp every mover,
/// keep the one with the smallest |delta|.
double validation_ncc(const unet::CondUNet& net, const phantom::SliceDataset& ds,
                      const std::vector<ValProbe>& probes, const TrainConfig& config,
                      bool zero_field_reference) {
    double acc = 0.0;
    Rng rng(0);  // sampler unused for validation probes
    for (const auto& probe : probes) {
        const auto& group = ds.groups[static_cast<size_t>(probe.position)];
        std::vector<const std::vector<phantom::AcquiredSlice>*> one_group = {&group};
        // Rebuild the deterministic nearest-in-time context around the probe.
        std::vector<TrainingSample> fake;
        {
            const int size = static_cast<int>(group.size());
            const int n = config.n_inputs;
            int want_before = (n + 1) / 2;
            int before = std::min(want_before, probe.index);
            int after = std::min(n - before, size - 1 - probe.index);
            before = n - after;
            TrainingSample s;
            s.target = &group[probe.index];
            double tc = condition_value(*s.target, config.condition_on);
            for (int i = probe.index - before; i <= probe.index + after; ++i) {
                if (i == probe.index) continue;
                s.movers.push_back(&group[i]);
                s.deltas.push_back(condition_value(group[i], config.condition_on) - tc);
            }
            fake.push_back(std::move(s));
        }
        const TrainingSample& s = fake[0];
        size_t best = 0;
        for (size_t i = 1; i < s.deltas.size(); ++i)
            if (std::abs(s.deltas[i]) < std::abs(s.deltas[best])) best = i;

        Tensor recovered;
        if (zero_field_reference) {
            recovered = s.movers[best]->pixels;
        } else {
            unet::ConditioningContext ctx;
            for (const auto* m : s.movers) ctx.movers.push_back(m->pixels);
            ctx.deltas = s.deltas;
            if (net.config.with_fixed) ctx.fixed = s.target->pixels;
            Tensor stack = unet::CondUNet::stack_inputs(ctx, net.config.with_fixed);
            auto fields = net.forward(stack, s.deltas);
            recovered = warp::warp_image(s.movers[best]->pixels, fields[best]);
        }
        acc += losses::ncc_value(s.target->pixels, recovered, config.ncc_window);
    }
    (void)rng;
    return probes.empty() ? 0.0 : acc / static_cast<double>(probes.size());
}

}  // namespace

FitResult fit(const phantom::SliceDataset& dataset, const unet::ModelConfig& model_config,
              const TrainConfig& config, const std::string& out_dir) {
    config.validate();
    model_config.validate();
    require(model_config.n_inputs == config.n_inputs,
            "model and training n_inputs must agree");
    fs::create_directories(out_dir);

    std::vector<int> train_pos, val_pos;
    split_positions(dataset.positions(), config.val_fraction, &train_pos, &val_pos);
    require(!train_pos.empty(), "no training positions after the split");

    std::vector<const std::vector<phantom::AcquiredSlice>*> train_groups;
    size_t train_slices = 0;
    for (int p : train_pos) {
        train_groups.push_back(&dataset.groups[static_cast<size_t>(p)]);
        train_slices += dataset.groups[static_cast<size_t>(p)].size();
    }

    int steps_per_epoch = config.steps_per_epoch;
    if (steps_per_epoch <= 0)
        steps_per_epoch = std::max(1, static_cast<int>(train_slices) / config.batch_size);
    const int total_steps = steps_per_epoch * config.epochs;

    unet::CondUNet net = unet::CondUNet::init(model_config, config.seed);
    Adam adam;
    Rng rng = Rng(config.seed).fork(0x5a3b1e);

    auto probes = validation_probes(dataset, val_pos, config.n_inputs);
    const bool has_val = !probes.empty();
    double reference_ncc =
        has_val ? validation_ncc(net, dataset, probes, config, /*zero_field=*/true) : 0.0;

    std::string ckpt_path = out_dir + "/model.ckpt";
    std::string log_path = out_dir + "/train_log.jsonl";
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot open run log: " + log_path);
    log.precision(17);

    std::string train_desc = nlohmann::json({{"epochs", config.epochs},
                                             {"learning_rate", config.learning_rate},
                                             {"batch_size", config.batch_size},
                                             {"ncc_window", config.ncc_window},
                                             {"sampler", config.sampler},
                                             {"condition_on", config.condition_on},
                                             {"seed", config.seed}})
                                 .dump();
    std::string train_hash = io::sha256_bytes(train_desc.data(), train_desc.size());

    double best_val = 1e300;
    bool saved = false;
    int step_count = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (int step = 0; step < steps_per_epoch; ++step) {
            double lr = cosine_lr(config.learning_rate, step_count, total_steps);
            auto batch = sample_training_batch(train_groups, config.n_inputs,
                                               config.batch_size, rng, config.sampler,
                                               config.condition_on);
            StepResult r =
                train_step(net, adam, batch, config, lr, out_dir + "/abort_dump.json");
            nlohmann::json line = {{"epoch", epoch},
                                   {"step", step_count},
                                   {"lr", lr},
                                   {"total", r.report.total},
                                   {"sim", r.report.sim},
                                   {"struct", r.report.structural},
                                   {"reg", r.report.reg},
                                   {"agreement", r.report.agreement}};
            log << line.dump() << "\n";
            ++step_count;
        }
        if (has_val) {
            double val = validation_ncc(net, dataset, probes, config, false);
            nlohmann::json line = {{"epoch", epoch}, {"val_ncc", val}};
            log << line.dump() << "\n";
            if (val < best_val) {
                best_val = val;
                unet::save_checkpoint(net, ckpt_path, train_hash);
                saved = true;
            }
        }
    }
    if (!saved) {
        unet::save_checkpoint(net, ckpt_path, train_hash);
        best_val = has_val ? validation_ncc(net, dataset, probes, config, false) : 0.0;
    }

    FitResult result;
    result.checkpoint_path = ckpt_path;
    result.best_val_ncc = best_val;
    result.reference_val_ncc = reference_ncc;
    result.flagged = has_val && best_val > reference_ncc;
    result.total_steps = step_count;

    nlohmann::json summary = {{"best_val_ncc", best_val},
                              {"reference_val_ncc", reference_ncc},
                              {"flagged", result.flagged},
                              {"epochs", config.epochs},
                              {"steps_per_epoch", steps_per_epoch},
                              {"train_positions", train_pos},
                              {"val_positions", val_pos}};
    io::atomic_write(out_dir + "/fit.json", summary.dump(2) + "\n");
    log << nlohmann::json({{"summary", summary}}).dump() << "\n";
    return result;
}

}  // namespace imitate::train
