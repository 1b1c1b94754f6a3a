#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "ssga/error.hpp"
#include "ssga/trainer.hpp"

namespace ssga {

namespace {

const std::vector<std::string> kLambdaSweep = {"0", "0.2", "1", "5", "25", "125"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

void check_value(const std::string& axis, const std::string& v) {
    auto bad = [&] { throw config_error("ablate: invalid value '" + v + "' for axis " + axis); };
    if (axis == "lambda_ss") {
        if (std::find(kLambdaSweep.begin(), kLambdaSweep.end(), v) == kLambdaSweep.end()) bad();
    } else if (axis == "tap") {
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) bad();
    } else if (axis == "d_loss") {
        if (v != "L_all" && v != "all" && v != "last_block_only" && v != "last" && v.rfind("patchgan_", 0) != 0) bad();
    } else if (axis == "weights") {
        if (v != "uniform" && v != "earlier" && v != "later") bad();
    } else if (axis == "latent") {
        if (v != "noise_only" && v != "joint") bad();
    } else {
        throw config_error("ablate: unknown axis '" + axis + "' (expected lambda_ss, tap, d_loss, weights, latent)");
    }
}

std::string config_key(const std::string& axis) {
    if (axis == "lambda_ss") return "loss.lambda_ss";
    if (axis == "tap") return "loss.tap_resolution";
    if (axis == "d_loss") return "loss.d_blocks";
    if (axis == "weights") return "loss.weights";
    return "latent.mode";
}

std::string config_value(const std::string& axis, const std::string& v) {
    if (axis == "d_loss") {
        if (v == "L_all") return "all";
        if (v == "last_block_only") return "last";
    }
    return v;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::vector<std::string>> cross_product(const std::vector<AblationAxis>& axes) {
    std::vector<std::vector<std::string>> cells{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<std::string>> next;
        for (const auto& c : cells)
            for (const auto& v : axis.values) {
                auto e = c;
                e.push_back(v);
                next.push_back(std::move(e));
            }
        cells = std::move(next);
    }
    return cells;
}

}  // namespace

std::vector<AblationAxis> parse_axes(const std::string& text) {
    std::vector<AblationAxis> axes;
    for (const auto& part : split(text, ';')) {
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw config_error("ablate: expected axis=v1,v2 in '" + part + "'");
        AblationAxis a{trim(part.substr(0, eq)), split(part.substr(eq + 1), ',')};
        for (const auto& existing : axes)
            if (existing.name == a.name) throw config_error("ablate: axis '" + a.name + "' given twice");
        if (a.values.empty()) throw config_error("ablate: axis '" + a.name + "' has no values");
        for (const auto& v : a.values) check_value(a.name, v);
        axes.push_back(std::move(a));
    }
    if (axes.empty()) throw config_error("ablate: no axes given");
    return axes;
}

TrainConfig ablation_cell_config(const TrainConfig& base, const std::vector<AblationAxis>& axes,
                                 const std::vector<std::string>& cell, std::uint64_t seed) {
    auto file = ConfigFile::parse(base.canonical());
    for (std::size_t i = 0; i < axes.size(); ++i) file.set(config_key(axes[i].name), config_value(axes[i].name, cell[i]));
    file.set("train.seed", std::to_string(seed));
    return TrainConfig::from(file);
}

AblationReport ablation_grid(const TrainConfig& base, const std::vector<AblationAxis>& axes, const TrainState& source,
                             std::size_t threads) {
    for (const auto& a : axes)
        for (const auto& v : a.values) check_value(a.name, v);
    const auto cells = cross_product(axes);
    AblationReport report{axes, {}};
    struct Job {
        std::size_t cell;
        std::uint64_t seed;
        TrainConfig cfg;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (auto seed : base.ablate_seeds) jobs.push_back({c, seed, ablation_cell_config(base, axes, cells[c], seed)});

    std::vector<AblationRun> results(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
                const auto& job = jobs[j];
                const auto data = target_dataset(job.cfg);
                const auto state = adapt(job.cfg, source, data);
                AblationRun r{cells[job.cell], job.seed, {}, state.history.back()};
                for (const auto& row : state.history)
                    if (row.epoch == state.selected_epoch) r.selected = row;
                results[j] = std::move(r);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    report.runs = std::move(results);
    return report;
}

std::string AblationReport::csv() const {
    std::string out;
    for (const auto& a : axes) out += a.name + ",";
    out += "seed,selected_epoch,fid_proxy,intra_div,path_mean,staircase,final_fid_proxy,final_intra_div\n";
    auto line = [&](const std::vector<std::string>& cell, const std::string& seed, const std::string& epoch,
                    const std::vector<double>& v) {
        for (const auto& c : cell) out += c + ",";
        out += seed + "," + epoch;
        for (double x : v) out += "," + num(x);
        out += "\n";
    };
    for (std::size_t i = 0; i < runs.size();) {
        std::size_t j = i;
        std::vector<std::vector<double>> cols(6);
        for (; j < runs.size() && runs[j].cell == runs[i].cell; ++j) {
            const auto& r = runs[j];
            const std::vector<double> v{r.selected.fid_proxy, r.selected.intra_div, r.selected.path_mean,
                                        r.selected.staircase, r.final.fid_proxy,  r.final.intra_div};
            line(r.cell, std::to_string(r.seed), std::to_string(r.selected.epoch), v);
            for (std::size_t c = 0; c < 6; ++c) cols[c].push_back(v[c]);
        }
        std::vector<double> med;
        for (auto& c : cols) med.push_back(median(c));
        line(runs[i].cell, "median", "", med);
        i = j;
    }
    return out;
}

}  // namespace ssga
