#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ssga/error.hpp"
#include "ssga/oracles.hpp"
#include "ssga/trainer.hpp"

namespace fs = std::filesystem;
using namespace ssga;

namespace {

const char* kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return "config";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::io: return "io";
    }
    return "config";
}

// one line, so scripts can split on the first two colons
int report(ErrorKind kind, std::string msg) {
    for (auto& c : msg)
        if (c == '\n' || c == '\r') c = ' ';
    const std::string prefix = std::string(kind_name(kind)) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    std::fprintf(stderr, "error: %s: %s\n", kind_name(kind), msg.c_str());
    return static_cast<int>(kind);
}

std::string config_reference() {
    std::string out = "Config keys (`key = value` per line, # comments; --set key=value overrides):\n";
    std::size_t width = 0;
    for (const auto& k : config_keys()) width = std::max(width, k.key.size() + 3 + k.default_value.size());
    for (const auto& k : config_keys()) {
        std::string left = k.key + " = " + k.default_value;
        left.resize(width, ' ');
        out += "  " + left + "  " + k.help + "\n";
    }
    out += "\nExit codes: 0 ok, 1 usage or config error, 2 numerical failure, 3 I/O error.\n";
    out += "SSGA_THREADS caps concurrent ablation cells (default 1).";
    return out;
}

struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;

    void add(CLI::App* cmd) {
        cmd->add_option("--config", file, "config file (`key = value` lines)");
        cmd->add_option("--set", sets, "override one key, as key=value (repeatable)");
    }

    ConfigFile raw() const {
        ConfigFile f = file.empty() ? ConfigFile{} : ConfigFile::load(file);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + s + "'");
            auto trim = [](std::string v) {
                const auto b = v.find_first_not_of(" \t");
                if (b == std::string::npos) return std::string();
                return v.substr(b, v.find_last_not_of(" \t") - b + 1);
            };
            f.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
        return f;
    }
};

/// Config recorded inside a checkpoint, with optional data overrides.
TrainConfig checkpoint_config(const TrainState& s, const std::string& data_preset, std::size_t shots) {
    if (s.config_text.empty()) throw io_error("checkpoint carries no config text");
    auto f = ConfigFile::parse(s.config_text, "checkpoint");
    if (!data_preset.empty()) f.set("data.preset", data_preset);
    if (shots > 0) f.set("data.shots", std::to_string(shots));
    return TrainConfig::from(f);
}

RunControl progress(std::optional<std::uint64_t> stop_at) {
    RunControl ctl;
    ctl.stop_at = stop_at;
    ctl.observer = [last = std::size_t{0}](const StepInfo& info) mutable {
        const auto& h = info.state->history;
        if (h.size() == last) return;
        last = h.size();
        const auto& r = h.back();
        std::printf("epoch %llu  fid_proxy %.6g  intra_div %.6g  staircase %.6g  loss_d %.6g  loss_g %.6g\n",
                    static_cast<unsigned long long>(r.epoch), r.fid_proxy, r.intra_div, r.staircase, r.loss_d,
                    r.loss_g);
        std::fflush(stdout);
    };
    return ctl;
}

std::string default_metrics_path(const std::string& out) {
    fs::path p(out);
    p.replace_extension(".csv");
    return p.string();
}

void finish_run(const TrainState& s, const std::string& out, const std::string& metrics) {
    save_checkpoint(out, s);
    write_file_atomic(metrics.empty() ? default_metrics_path(out) : metrics, metrics_csv(s.history));
    std::printf("wrote %s at epoch %llu (selected epoch %llu)\n", out.c_str(),
                static_cast<unsigned long long>(s.epoch), static_cast<unsigned long long>(s.selected_epoch));
}

std::size_t thread_cap() {
    const char* env = std::getenv("SSGA_THREADS");
    if (!env || !*env) return 1;
    const std::string v(env);
    if (v.find_first_not_of("0123456789") != std::string::npos || std::stoull(v) == 0)
        throw config_error("SSGA_THREADS must be a positive integer, got '" + v + "'");
    return static_cast<std::size_t>(std::stoull(v));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot GAN adaptation with smoothness similarity regularization, at desk scale.", "ssga"};
    app.require_subcommand(1);
    app.footer(config_reference());

    // pretrain
    ConfigArgs pre_cfg;
    std::string pre_out, pre_metrics, pre_resume;
    std::optional<std::uint64_t> pre_stop;
    auto* pre = app.add_subcommand("pretrain", "train G_s and D on unlimited source samples");
    pre_cfg.add(pre);
    pre->add_option("--out", pre_out, "checkpoint to write")->required();
    pre->add_option("--metrics", pre_metrics, "metrics CSV (default: checkpoint path with .csv)");
    pre->add_option("--resume", pre_resume, "continue from this checkpoint (same config required)");
    pre->add_option("--stop-at", pre_stop, "stop after this many steps in total (resumable)");

    // adapt
    ConfigArgs ad_cfg;
    std::string ad_source, ad_preset, ad_out, ad_metrics, ad_resume;
    std::size_t ad_shots = 0;
    std::optional<std::uint64_t> ad_stop;
    auto* ada = app.add_subcommand("adapt", "adapt a source checkpoint to a few-shot target set");
    ad_cfg.add(ada);
    ada->add_option("--source", ad_source, "source checkpoint from pretrain");
    ada->add_option("--data-preset", ad_preset, "close | dissimilar (overrides data.preset)");
    ada->add_option("--shots", ad_shots, "few-shot images (overrides data.shots)");
    ada->add_option("--out", ad_out, "checkpoint to write")->required();
    ada->add_option("--metrics", ad_metrics, "metrics CSV (default: checkpoint path with .csv)");
    ada->add_option("--resume", ad_resume, "continue from an adaptation checkpoint (same config required)");
    ada->add_option("--stop-at", ad_stop, "stop after this many steps in total (resumable)");

    // eval
    std::string ev_ckpt, ev_preset, ev_csv;
    std::size_t ev_shots = 0;
    bool ev_selected = false;
    auto* ev = app.add_subcommand("eval", "recompute the metrics row of a checkpoint");
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
    ev->add_option("--data-preset", ev_preset, "close | dissimilar (default: the checkpoint's)");
    ev->add_option("--shots", ev_shots, "few-shot images (default: the checkpoint's)");
    ev->add_option("--out-csv", ev_csv, "metrics CSV to write")->required();
    ev->add_flag("--selected", ev_selected, "evaluate the generator kept at the selected epoch");

    // interp
    std::string in_ckpt, in_source, in_out;
    std::size_t in_steps = 8, in_rows = 4;
    std::optional<std::uint64_t> in_seed;
    bool in_selected = false;
    auto* interp = app.add_subcommand("interp", "write a PGM grid of latent interpolations");
    interp->add_option("--ckpt", in_ckpt, "checkpoint")->required();
    interp->add_option("--source-ckpt", in_source, "also render the source generator on the same waypoints");
    interp->add_option("--steps", in_steps, "frames per row, endpoints included")->capture_default_str();
    interp->add_option("--rows", in_rows, "latent pairs")->capture_default_str();
    interp->add_option("--seed", in_seed, "waypoint seed (default: eval.seed of the checkpoint)");
    interp->add_option("--out-pgm", in_out, "PGM file to write")->required();
    interp->add_flag("--selected", in_selected, "use the generator kept at the selected epoch");

    // ablate
    ConfigArgs ab_cfg;
    std::string ab_axes, ab_dir, ab_source;
    auto* abl = app.add_subcommand("ablate", "run a grid of adaptation configs and write a consolidated CSV");
    ab_cfg.add(abl);
    abl->add_option("--axes", ab_axes, "e.g. \"lambda_ss=0,5;d_loss=L_all,last_block_only\"")->required();
    abl->add_option("--out-dir", ab_dir, "output directory")->required();
    abl->add_option("--source", ab_source, "source checkpoint (default: pretrain one into the output directory)");

    // gradcheck
    std::uint64_t gc_seed = 0;
    auto* gc = app.add_subcommand("gradcheck", "run the first/second-order gradient oracle suite");
    gc->add_option("--seed", gc_seed, "seed for the oracle inputs")->capture_default_str();

    // export-data
    ConfigArgs ex_cfg;
    std::string ex_preset, ex_dir;
    std::size_t ex_shots = 0;
    auto* ex = app.add_subcommand("export-data", "write the source and target image sets as PGM files");
    ex_cfg.add(ex);
    ex->add_option("--data-preset", ex_preset, "close | dissimilar (overrides data.preset)");
    ex->add_option("--shots", ex_shots, "few-shot images (overrides data.shots)");
    ex->add_option("--out-dir", ex_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(ErrorKind::config, e.what());
    }

    try {
        if (*pre) {
            const auto cfg = TrainConfig::from(pre_cfg.raw());
            TrainState s;
            if (!pre_resume.empty()) {
                s = load_checkpoint(pre_resume);
                check_resume(cfg, s);
            } else {
                s = init_pretrain_state(cfg);
            }
            run_pretrain(cfg, s, progress(pre_stop));
            finish_run(s, pre_out, pre_metrics);
        } else if (*ada) {
            auto raw = ad_cfg.raw();
            if (!ad_preset.empty()) raw.set("data.preset", ad_preset);
            if (ad_shots > 0) raw.set("data.shots", std::to_string(ad_shots));
            const auto cfg = TrainConfig::from(raw);
            TrainState s;
            if (!ad_resume.empty()) {
                s = load_checkpoint(ad_resume);
                check_resume(cfg, s);
            } else {
                if (ad_source.empty()) throw config_error("adapt needs --source (or --resume)");
                s = init_adapt_state(cfg, load_checkpoint(ad_source));
            }
            run_adapt(cfg, s, target_dataset(cfg), progress(ad_stop));
            finish_run(s, ad_out, ad_metrics);
        } else if (*ev) {
            const auto s = load_checkpoint(ev_ckpt);
            const auto cfg = checkpoint_config(s, ev_preset, ev_shots);
            if (ev_selected && s.best_g.empty()) throw config_error("checkpoint has no selected generator yet");
            const auto& g = ev_selected ? s.best_g : eval_generator(s);
            const auto epoch = ev_selected ? s.selected_epoch : s.epoch;
            const auto row = evaluate(cfg, g, s.d, eval_data(cfg, s.phase), epoch);
            write_file_atomic(ev_csv, metrics_csv({row}));
            std::printf("epoch %llu  fid_proxy %.17g  intra_div %.17g  staircase %.17g\n",
                        static_cast<unsigned long long>(row.epoch), row.fid_proxy, row.intra_div, row.staircase);
        } else if (*interp) {
            if (in_steps < 2) throw config_error("interp: --steps must be at least 2");
            const auto s = load_checkpoint(in_ckpt);
            const auto cfg = checkpoint_config(s, "", 0);
            if (in_selected && s.best_g.empty()) throw config_error("checkpoint has no selected generator yet");
            const GeneratorRef target{&cfg, in_selected ? &s.best_g : &eval_generator(s)};
            std::optional<TrainState> src;
            std::optional<TrainConfig> src_cfg;
            std::optional<GeneratorRef> src_ref;
            if (!in_source.empty()) {
                src = load_checkpoint(in_source);
                src_cfg = checkpoint_config(*src, "", 0);
                src_ref = GeneratorRef{&*src_cfg, &eval_generator(*src)};
            }
            const auto grid = interpolation_grid(target, src_ref ? &*src_ref : nullptr, in_rows, in_steps,
                                                 in_seed.value_or(cfg.eval_seed));
            write_file_atomic(in_out, encode_pgm_grid(grid.images, grid.rows, grid.cols));
            std::printf("wrote %s (%zu x %zu)\n", in_out.c_str(), grid.rows, grid.cols);
        } else if (*abl) {
            const auto cfg = TrainConfig::from(ab_cfg.raw());
            const auto axes = parse_axes(ab_axes);
            const std::size_t threads = thread_cap();
            TrainState source;
            if (!ab_source.empty()) {
                source = load_checkpoint(ab_source);
            } else {
                source = pretrain(cfg);
                save_checkpoint(fs::path(ab_dir) / "source.ssga", source);
            }
            const auto report = ablation_grid(cfg, axes, source, threads);
            const auto path = fs::path(ab_dir) / "ablation.csv";
            write_file_atomic(path, report.csv());
            std::printf("wrote %s (%zu runs)\n", path.string().c_str(), report.runs.size());
        } else if (*gc) {
            bool ok = true;
            for (const auto& r : oracle_suite(gc_seed)) {
                std::printf("%s  %-32s err %.3g (tol %.3g)  %.2fs  %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                            r.value, r.tolerance, r.seconds, r.detail.c_str());
                ok = ok && r.pass;
            }
            if (!ok) return report(ErrorKind::numerical, "gradcheck: oracle suite failed");
        } else if (*ex) {
            auto raw = ex_cfg.raw();
            if (!ex_preset.empty()) raw.set("data.preset", ex_preset);
            if (ex_shots > 0) raw.set("data.shots", std::to_string(ex_shots));
            const auto cfg = TrainConfig::from(raw);
            const auto domains = cfg.domains();
            export_dataset(make_fewshot(domains.source, cfg.shots, cfg.data_seed, cfg.val_size), ex_dir);
            export_dataset(target_dataset(cfg), ex_dir);
            std::printf("wrote %s/{%s,%s}\n", ex_dir.c_str(), domains.source.name.c_str(),
                        domains.target.name.c_str());
        }
    } catch (const Error& e) {
        return report(e.kind(), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return report(ErrorKind::io, e.what());
    } catch (const std::exception& e) {
        return report(ErrorKind::config, e.what());
    }
    return 0;
}
