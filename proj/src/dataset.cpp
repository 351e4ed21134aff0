#include "imitate/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "imitate/config.hpp"
#include "imitate/io.hpp"
#include "json.hpp"

namespace imitate::phantom {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slice_filename(int position, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "slice_p%03d_f%03d.png", position, index);
    return buf;
}

std::string mask_filename(int position, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mask_p%03d_f%03d.png", position, index);
    return buf;
}

void save_dataset(const SliceDataset& dataset, const std::string& dir) {
    fs::create_directories(dir);
    json slices = json::array();
    for (const auto& group : dataset.groups) {
        for (const auto& s : group) {
            std::string file = slice_filename(s.table_position, s.index);
            std::string mfile = mask_filename(s.table_position, s.index);
            io::write_png16(dir + "/" + file, s.pixels);
            io::write_png8(dir + "/" + mfile, s.mask);
            slices.push_back({{"file", file},
                              {"mask_file", mfile},
                              {"time", s.time},
                              {"table_position", s.table_position},
                              {"index", s.index},
                              {"amplitude", s.amplitude},
                              {"phase", s.phase},
                              {"rate", s.rate},
                              {"seed", dataset.seed}});
        }
    }
    json cycles = json::array();
    for (const auto& c : dataset.signal.cycles())
        cycles.push_back({{"start", c.start}, {"period", c.period}, {"peak", c.peak}});
    json manifest = {
        {"seed", dataset.seed},
        {"spec", config::spec_json(dataset.spec)},
        {"plan", config::plan_json(dataset.plan)},
        {"signal",
         {{"params", config::signal_params_json(dataset.signal_params)},
          {"duration", dataset.signal.duration()},
          {"cycles", cycles},
          {"norm_offset", dataset.signal.norm_offset()},
          {"norm_scale", dataset.signal.norm_scale()}}},
        {"slices", slices}};
    io::atomic_write(dir + "/manifest.json", manifest.dump(2) + "\n");
}

SliceDataset load_dataset(const std::string& dir) {
    std::string text = io::read_text(dir + "/manifest.json");
    json manifest = json::parse(text);

    SliceDataset ds;
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.spec = config::spec_from_json(manifest.at("spec"), PhantomSpec{});
    ds.plan = config::plan_from_json(manifest.at("plan"), AcquisitionPlan{});
    const json& sig = manifest.at("signal");
    ds.signal_params = config::signal_params_from_json(sig.at("params"), SignalParams{});
    std::vector<BreathingSignal::Cycle> cycles;
    for (const auto& c : sig.at("cycles"))
        cycles.push_back({c.at("start").get<double>(), c.at("period").get<double>(),
                          c.at("peak").get<double>()});
    ds.signal = BreathingSignal::from_state(ds.signal_params, sig.at("duration").get<double>(),
                                            std::move(cycles), sig.at("norm_offset").get<double>(),
                                            sig.at("norm_scale").get<double>());

    ds.groups.resize(static_cast<size_t>(ds.plan.table_positions));
    for (const auto& js : manifest.at("slices")) {
        AcquiredSlice s;
        s.time = js.at("time").get<double>();
        s.table_position = js.at("table_position").get<int>();
        s.index = js.at("index").get<int>();
        s.amplitude = js.at("amplitude").get<double>();
        s.phase = js.at("phase").get<double>();
        s.rate = js.at("rate").get<double>();
        s.pixels = io::read_png16(dir + "/" + js.at("file").get<std::string>());
        s.mask = io::read_png8(dir + "/" + js.at("mask_file").get<std::string>());
        auto& group = ds.groups.at(static_cast<size_t>(s.table_position));
        group.push_back(std::move(s));
    }
    for (auto& group : ds.groups) {
        std::sort(group.begin(), group.end(),
                  [](const AcquiredSlice& a, const AcquiredSlice& b) { return a.index < b.index; });
    }
    return ds;
}

}  // namespace imitate::phantom
