#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "imitate/baseline.hpp"
#include "imitate/checkpoint.hpp"
#include "imitate/config.hpp"
#include "imitate/dataset.hpp"
#include "imitate/io.hpp"
#include "imitate/plot.hpp"
#include "imitate/reconstruct.hpp"
#include "imitate/stats.hpp"
#include "imitate/threading.hpp"
#include "imitate/training.hpp"
#include "imitate/warp.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace imitate;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunRecord {
    std::string command;
    json config;
    uint64_t seed = 0;
    json artifacts = json::object();

    void add_artifact(const std::string& out_dir, const std::string& rel) {
        artifacts[rel] = io::sha256_file(out_dir + "/" + rel);
    }
    void write(const std::string& out_dir) const {
        json j = {{"command", command},
                  {"version", kVersion},
                  {"config", config},
                  {"seed", seed},
                  {"artifacts", artifacts}};
        io::atomic_write(out_dir + "/run.json", j.dump(2) + "\n");
    }
};

config::RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return config::RunConfig{};
    return config::load_file(path);
}

std::vector<double> parse_targets(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty()) out.push_back(std::stod(cell));
    }
    if (out.empty()) throw std::invalid_argument("empty target list");
    return out;
}

std::vector<int> parse_positions(const std::string& csv, int n_positions) {
    std::vector<int> out;
    if (csv.empty() || csv == "all") {
        out.resize(static_cast<size_t>(n_positions));
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        int p = std::stoi(cell);
        require(p >= 0 && p < n_positions, "position out of range: " + cell);
        out.push_back(p);
    }
    require(!out.empty(), "empty position list");
    return out;
}

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    for (double x : v) m.std += (x - m.mean) * (x - m.mean);
    m.std = v.size() > 1 ? std::sqrt(m.std / static_cast<double>(v.size() - 1)) : 0.0;
    return m;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_phantom(const std::string& config_path, const std::string& out_dir, int64_t seed_flag) {
    config::RunConfig cfg = load_config_or_default(config_path);
    if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
    double duration = cfg.plan.table_positions * cfg.plan.dwell;
    auto signal = phantom::BreathingSignal::generate(cfg.signal, duration, cfg.seed);
    auto dataset = phantom::acquire(cfg.spec, cfg.plan, signal, cfg.seed);
    phantom::save_dataset(dataset, out_dir);

    RunRecord rec{"phantom", config::to_json(cfg), cfg.seed};
    rec.add_artifact(out_dir, "manifest.json");
    rec.write(out_dir);
    std::cout << "phantom: wrote " << dataset.positions() << " positions x "
              << cfg.plan.frames_per_position << " frames to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, int64_t seed_flag) {
    config::RunConfig cfg = load_config_or_default(config_path);
    if (seed_flag >= 0) {
        cfg.seed = static_cast<uint64_t>(seed_flag);
        cfg.train.seed = cfg.seed;
    }
    auto dataset = phantom::load_dataset(data_dir);
    fs::create_directories(out_dir);
    auto result = train::fit(dataset, cfg.model, cfg.train, out_dir);

    RunRecord rec{"train", config::to_json(cfg), cfg.train.seed};
    rec.add_artifact(out_dir, "model.ckpt");
    rec.add_artifact(out_dir, "fit.json");
    rec.write(out_dir);
    std::cout << "train: best validation NCC " << result.best_val_ncc << " (reference "
              << result.reference_val_ncc << (result.flagged ? ", FLAGGED" : "") << ") -> "
              << result.checkpoint_path << "\n";
    return 0;
}

int cmd_baseline(const std::string& variant, const std::string& data_dir,
                 const std::string& config_path, const std::string& out_dir,
                 int64_t seed_flag) {
    config::RunConfig cfg = load_config_or_default(config_path);
    if (seed_flag >= 0) {
        cfg.seed = static_cast<uint64_t>(seed_flag);
        cfg.train.seed = cfg.seed;
    }
    auto dataset = phantom::load_dataset(data_dir);
    std::vector<std::string> variants;
    if (variant == "all")
        variants = config::variant_names();
    else
        variants = {variant};
    auto runs = baseline::ablation_variants(dataset, cfg.model, cfg.train, out_dir, variants);

    RunRecord rec{"baseline", config::to_json(cfg), cfg.train.seed};
    for (const auto& r : runs) {
        rec.add_artifact(out_dir, r.variant + "/model.ckpt");
        std::cout << "baseline[" << r.variant << "]: best val NCC " << r.fit.best_val_ncc
                  << "\n";
    }
    rec.write(out_dir);
    return 0;
}

int cmd_reconstruct(const std::string& data_dir, const std::string& model_path,
                    const std::string& targets_csv, const std::string& out_dir,
                    bool dump_fields, int window) {
    auto dataset = phantom::load_dataset(data_dir);
    auto model = unet::load_checkpoint(model_path);
    auto targets = parse_targets(targets_csv);
    fs::create_directories(out_dir);

    auto volumes = recon::assemble_4dct(dataset, targets, model);
    Tensor body = phantom::body_mask(dataset.spec);

    json manifest = json::array();
    std::vector<double> nccs, n_nccs, rmses, n_rmses, dices, detjacs;
    for (size_t t = 0; t < volumes.size(); ++t) {
        const auto& v = volumes[t];
        char tdir[64];
        std::snprintf(tdir, sizeof(tdir), "target_%02zu", t);
        fs::create_directories(out_dir + "/" + tdir);
        Tensor oracle = recon::oracle_volume(dataset, v.target_amplitude);

        json frames = json::array();
        const int H = dataset.spec.height, W = dataset.spec.width;
        for (int p = 0; p < dataset.positions(); ++p) {
            char fname[64];
            std::snprintf(fname, sizeof(fname), "slice_p%03d.png", p);
            Tensor slice({H, W}, std::vector<double>(
                                     v.volume.data() + static_cast<size_t>(p) * H * W,
                                     v.volume.data() + static_cast<size_t>(p + 1) * H * W));
            io::write_png16(out_dir + "/" + tdir + "/" + fname, slice);
            const auto& f = v.frames[static_cast<size_t>(p)];
            frames.push_back({{"file", std::string(tdir) + "/" + fname},
                              {"position", p},
                              {"chosen_index", f.chosen_index},
                              {"abs_delta", std::abs(f.chosen_delta)}});
            if (dump_fields) {
                std::snprintf(fname, sizeof(fname), "field_p%03d.field", p);
                io::write_field(out_dir + "/" + tdir + "/" + fname, f.field);
            }
            detjacs.push_back(losses::detjac_value(f.field));
            // Warped mask of the chosen mover vs the oracle mask.
            const auto& group = dataset.groups[static_cast<size_t>(p)];
            const auto* chosen = &group[0];
            for (const auto& s : group)
                if (s.index == f.chosen_index) chosen = &s;
            Tensor wm = warp::warp_mask(chosen->mask, f.field, phantom::kNumLabels);
            phantom::PhantomSpec ps =
                phantom::spec_at_position(dataset.spec, p, dataset.positions());
            Tensor omask;
            phantom::render_frame(ps, v.target_amplitude, 0.0, nullptr, &omask);
            dices.push_back(recon::hard_dice(wm, omask));
        }
        auto cm = recon::continuity_metrics(v.volume, oracle, body, window);
        nccs.push_back(cm.ncc);
        n_nccs.push_back(cm.n_ncc);
        rmses.push_back(cm.rmse);
        n_rmses.push_back(cm.n_rmse);
        manifest.push_back({{"target_amplitude", v.target_amplitude},
                            {"frames", frames},
                            {"continuity",
                             {{"ncc", cm.ncc},
                              {"n_ncc", cm.n_ncc},
                              {"rmse", cm.rmse},
                              {"n_rmse", cm.n_rmse}}}});
    }

    auto ncc_ms = mean_std(nccs), nncc_ms = mean_std(n_nccs), rmse_ms = mean_std(rmses),
         nrmse_ms = mean_std(n_rmses), dice_ms = mean_std(dices), dj_ms = mean_std(detjacs);

    std::string model_id = fs::path(model_path).parent_path().filename().string();
    if (model_id.empty()) model_id = "model";
    std::ostringstream csv;
    csv << "model_id,ncc_mean,ncc_std,n_ncc_mean,n_ncc_std,rmse_mean,rmse_std,"
           "n_rmse_mean,n_rmse_std,dice_mean,dice_std,detjac_mse_mean,detjac_mse_std\n";
    csv << model_id << "," << fmt(ncc_ms.mean) << "," << fmt(ncc_ms.std) << ","
        << fmt(nncc_ms.mean) << "," << fmt(nncc_ms.std) << "," << fmt(rmse_ms.mean) << ","
        << fmt(rmse_ms.std) << "," << fmt(nrmse_ms.mean) << "," << fmt(nrmse_ms.std) << ","
        << fmt(dice_ms.mean) << "," << fmt(dice_ms.std) << "," << fmt(dj_ms.mean) << ","
        << fmt(dj_ms.std) << "\n";
    io::atomic_write(out_dir + "/metrics.csv", csv.str());

    json metrics = {{"model_id", model_id},
                    {"window", window},
                    {"definitions",
                     {{"ncc", "mean adjacent-pair windowed NCC loss over stitched slices"},
                      {"n_ncc", "body-masked NCC loss minus the oracle volume's value"},
                      {"rmse", "mean adjacent-pair RMS intensity difference"},
                      {"n_rmse", "body-masked RMSE minus the oracle volume's value"},
                      {"dice", "hard Dice of warped mover masks vs oracle masks"},
                      {"detjac_mse", "MSE of the applied fields' Jacobian determinant vs 1"}}},
                    {"volumes", manifest},
                    {"summary",
                     {{"ncc", {{"mean", ncc_ms.mean}, {"std", ncc_ms.std}}},
                      {"n_ncc", {{"mean", nncc_ms.mean}, {"std", nncc_ms.std}}},
                      {"rmse", {{"mean", rmse_ms.mean}, {"std", rmse_ms.std}}},
                      {"n_rmse", {{"mean", nrmse_ms.mean}, {"std", nrmse_ms.std}}},
                      {"dice", {{"mean", dice_ms.mean}, {"std", dice_ms.std}}},
                      {"detjac_mse", {{"mean", dj_ms.mean}, {"std", dj_ms.std}}}}}};
    io::atomic_write(out_dir + "/metrics.json", metrics.dump(2) + "\n");

    RunRecord rec{"reconstruct", {{"targets", targets}, {"model", model_path}}, dataset.seed};
    rec.add_artifact(out_dir, "metrics.csv");
    rec.add_artifact(out_dir, "metrics.json");
    rec.write(out_dir);
    std::cout << "reconstruct: " << volumes.size() << " volumes, mean continuity NCC "
              << ncc_ms.mean << ", RMSE " << rmse_ms.mean << "\n";
    return 0;
}

json rows_to_json(const std::vector<recon::FrameEvalRow>& rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"position", r.position},
                       {"index", r.index},
                       {"amplitude", r.amplitude},
                       {"rate", r.rate},
                       {"ncc", r.ncc},
                       {"dice", r.dice},
                       {"detjac", r.detjac},
                       {"rmse", r.rmse},
                       {"rmse_oracle", r.rmse_oracle}});
    return out;
}

void write_rows_csv(const std::vector<recon::FrameEvalRow>& rows, const std::string& path) {
    std::ostringstream csv;
    csv << "position,index,amplitude,rate,ncc,dice,detjac,rmse,rmse_oracle\n";
    for (const auto& r : rows)
        csv << r.position << "," << r.index << "," << fmt(r.amplitude) << "," << fmt(r.rate)
            << "," << fmt(r.ncc) << "," << fmt(r.dice) << "," << fmt(r.detjac) << ","
            << fmt(r.rmse) << "," << fmt(r.rmse_oracle) << "\n";
    io::atomic_write(path, csv.str());
}

int cmd_evaluate(const std::string& data_dir, const std::string& model_path,
                 const std::vector<std::string>& compare, const std::string& out_dir,
                 const std::string& positions_csv, int window, int stride) {
    auto dataset = phantom::load_dataset(data_dir);
    auto positions = parse_positions(positions_csv, dataset.positions());
    fs::create_directories(out_dir);

    if (!compare.empty()) {
        require(compare.size() == 2, "--compare expects exactly two checkpoints");
        auto model_a = unet::load_checkpoint(compare[0]);
        auto model_b = unet::load_checkpoint(compare[1]);
        auto rows_a = recon::evaluate_heldout(dataset, model_a, positions, window, stride);
        auto rows_b = recon::evaluate_heldout(dataset, model_b, positions, window, stride);
        require(rows_a.size() == rows_b.size(), "probe sets differ between models");

        auto series = [&](auto getter) {
            std::pair<std::vector<double>, std::vector<double>> s;
            for (size_t i = 0; i < rows_a.size(); ++i) {
                s.first.push_back(getter(rows_a[i]));
                s.second.push_back(getter(rows_b[i]));
            }
            return s;
        };
        json report;
        report["n_frames"] = rows_a.size();
        report["model_a"] = compare[0];
        report["model_b"] = compare[1];
        auto add_metric = [&](const std::string& name, auto getter) {
            auto [a, b] = series(getter);
            auto ma = mean_std(a), mb = mean_std(b);
            json entry = {{"a_mean", ma.mean}, {"a_std", ma.std},
                          {"b_mean", mb.mean}, {"b_std", mb.std}};
            try {
                entry["p_value"] = recon::paired_significance(a, b);
            } catch (const stats::UndefinedStatisticError&) {
                entry["p_value"] = nullptr;
            }
            report["metrics"][name] = entry;
            std::cout << "  " << name << ": a=" << ma.mean << " b=" << mb.mean
                      << " p=" << entry["p_value"].dump() << "\n";
        };
        std::cout << "evaluate --compare over " << rows_a.size() << " held-out frames\n";
        add_metric("ncc", [](const recon::FrameEvalRow& r) { return r.ncc; });
        add_metric("dice", [](const recon::FrameEvalRow& r) { return r.dice; });
        add_metric("detjac", [](const recon::FrameEvalRow& r) { return r.detjac; });
        add_metric("rmse", [](const recon::FrameEvalRow& r) { return r.rmse; });
        add_metric("rmse_oracle", [](const recon::FrameEvalRow& r) { return r.rmse_oracle; });
        report["rows_a"] = rows_to_json(rows_a);
        report["rows_b"] = rows_to_json(rows_b);
        io::atomic_write(out_dir + "/compare_report.json", report.dump(2) + "\n");
        write_rows_csv(rows_a, out_dir + "/eval_rows_a.csv");
        write_rows_csv(rows_b, out_dir + "/eval_rows_b.csv");

        RunRecord rec{"evaluate", {{"compare", compare}, {"positions", positions}}, dataset.seed};
        rec.add_artifact(out_dir, "compare_report.json");
        rec.write(out_dir);
        return 0;
    }

    require(!model_path.empty(), "either --model or --compare is required");
    auto model = unet::load_checkpoint(model_path);
    auto rows = recon::evaluate_heldout(dataset, model, positions, window, stride);
    write_rows_csv(rows, out_dir + "/eval_rows.csv");

    std::vector<double> nccs, dices, djs, rmses, rmses_o;
    for (const auto& r : rows) {
        nccs.push_back(r.ncc);
        dices.push_back(r.dice);
        djs.push_back(r.detjac);
        rmses.push_back(r.rmse);
        rmses_o.push_back(r.rmse_oracle);
    }
    auto j = [](MeanStd m) { return json{{"mean", m.mean}, {"std", m.std}}; };
    json summary = {{"n_frames", rows.size()},
                    {"ncc", j(mean_std(nccs))},
                    {"dice", j(mean_std(dices))},
                    {"detjac", j(mean_std(djs))},
                    {"rmse", j(mean_std(rmses))},
                    {"rmse_oracle", j(mean_std(rmses_o))}};
    io::atomic_write(out_dir + "/eval_summary.json", summary.dump(2) + "\n");

    RunRecord rec{"evaluate", {{"model", model_path}, {"positions", positions}}, dataset.seed};
    rec.add_artifact(out_dir, "eval_rows.csv");
    rec.add_artifact(out_dir, "eval_summary.json");
    rec.write(out_dir);
    std::cout << "evaluate: " << rows.size() << " frames, mean NCC "
              << mean_std(nccs).mean << ", Dice " << mean_std(dices).mean << "\n";
    return 0;
}

int cmd_plot(const std::string& data_dir, const std::string& metrics_csv,
             const std::string& out_dir) {
    fs::create_directories(out_dir);
    RunRecord rec{"plot", json::object(), 0};
    if (!data_dir.empty()) {
        auto dataset = phantom::load_dataset(data_dir);
        plot::plot_signal(dataset, out_dir + "/signal");
        rec.seed = dataset.seed;
        rec.add_artifact(out_dir, "signal.svg");
        rec.add_artifact(out_dir, "signal.png");
    }
    if (!metrics_csv.empty()) {
        plot::plot_metrics_csv(metrics_csv, out_dir + "/metrics");
        rec.add_artifact(out_dir, "metrics.svg");
        rec.add_artifact(out_dir, "metrics.png");
    }
    require(!data_dir.empty() || !metrics_csv.empty(),
            "plot needs --data and/or --metrics");
    rec.write(out_dir);
    std::cout << "plot: figures written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    init_threading();
    CLI::App app{"Condition-driven deformable registration on a synthetic 4D-CT phantom"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, model_path, variant = "imitate";
    std::string targets_csv = "0,0.33,0.5,0.66,0.83";
    std::string positions_csv = "all", metrics_csv;
    std::vector<std::string> compare;
    int64_t seed_flag = -1;
    bool dump_fields = false;
    int window = 9, stride = 1;

    auto* phantom_cmd = app.add_subcommand("phantom", "Generate a synthetic cine dataset");
    phantom_cmd->add_option("--config", config_path, "JSON config file");
    phantom_cmd->add_option("--out", out_dir, "Output dataset directory")->required();
    phantom_cmd->add_option("--seed", seed_flag, "Seed override");

    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
    train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    train_cmd->add_option("--config", config_path, "JSON config file");
    train_cmd->add_option("--out", out_dir, "Run directory")->required();
    train_cmd->add_option("--seed", seed_flag, "Seed override");

    auto* baseline_cmd = app.add_subcommand("baseline", "Train baseline/ablation variants");
    baseline_cmd
        ->add_option("--variant", variant,
                     "pairwise | multireg | multireg-cond | imitate | all")
        ->check(CLI::IsMember({"pairwise", "multireg", "multireg-cond", "imitate", "all"}));
    baseline_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    baseline_cmd->add_option("--config", config_path, "JSON config file");
    baseline_cmd->add_option("--out", out_dir, "Output directory")->required();
    baseline_cmd->add_option("--seed", seed_flag, "Seed override");

    auto* recon_cmd = app.add_subcommand("reconstruct", "Assemble 4D volumes at target amplitudes");
    recon_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    recon_cmd->add_option("--model", model_path, "Model checkpoint")->required();
    recon_cmd->add_option("--targets", targets_csv, "Comma-separated target amplitudes");
    recon_cmd->add_option("--out", out_dir, "Output directory")->required();
    recon_cmd->add_flag("--dump-fields", dump_fields, "Write displacement field files");
    recon_cmd->add_option("--window", window, "NCC window");

    auto* eval_cmd = app.add_subcommand("evaluate", "Held-out frame evaluation / model comparison");
    eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    eval_cmd->add_option("--model", model_path, "Model checkpoint");
    eval_cmd->add_option("--compare", compare, "Two checkpoints for a paired test")
        ->expected(2);
    eval_cmd->add_option("--out", out_dir, "Output directory")->required();
    eval_cmd->add_option("--positions", positions_csv, "'all' or comma-separated indices");
    eval_cmd->add_option("--window", window, "NCC window");
    eval_cmd->add_option("--stride", stride, "Probe stride within each group");

    auto* plot_cmd = app.add_subcommand("plot", "Render signal/metric figures (SVG + PNG)");
    plot_cmd->add_option("--data", data_dir, "Dataset directory");
    plot_cmd->add_option("--metrics", metrics_csv, "Metrics CSV to chart");
    plot_cmd->add_option("--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems -> 2
    }

    try {
        if (phantom_cmd->parsed()) return cmd_phantom(config_path, out_dir, seed_flag);
        if (train_cmd->parsed()) return cmd_train(data_dir, config_path, out_dir, seed_flag);
        if (baseline_cmd->parsed())
            return cmd_baseline(variant, data_dir, config_path, out_dir, seed_flag);
        if (recon_cmd->parsed())
            return cmd_reconstruct(data_dir, model_path, targets_csv, out_dir, dump_fields,
                                   window);
        if (eval_cmd->parsed())
            return cmd_evaluate(data_dir, model_path, compare, out_dir, positions_csv, window,
                                stride);
        if (plot_cmd->parsed()) return cmd_plot(data_dir, metrics_csv, out_dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
