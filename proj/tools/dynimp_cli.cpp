// dynimp command-line tool: ingest, synth, train, impute, experiment, grad-check.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynimp/config.hpp"
#include "dynimp/data_model.hpp"
#include "dynimp/dynimp_model.hpp"
#include "dynimp/evaluation.hpp"
#include "dynimp/io.hpp"
#include "dynimp/kernels.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dynimp;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kExitFailure = 1;
constexpr int kExitCellsFailed = 3;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

json manifest_base(const std::string& command, const RunConfig& cfg) {
    json m;
    m["format"] = "dynimp-manifest 1";
    m["version"] = kVersion;
    m["command"] = command;
    json c = json::object();
    for (const auto& [k, v] : cfg.values()) c[k] = v;
    m["config"] = c;
    m["seed"] = cfg.get_u64("seed");
    return m;
}

void write_manifest(const fs::path& path, const json& m) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest " + path.string());
    os << m.dump(2) << '\n';
}

fs::path sidecar(const fs::path& out, const std::string& suffix) {
    return fs::path(out.string() + suffix);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

void print_summary(const Dataset& d) {
    std::cout << "windows=" << d.windows.size() << " features=" << d.num_features() << " labels=" << d.num_labels()
              << '\n';
}

void maybe_grad_check(const RunConfig& cfg) {
    if (!cfg.get_bool("grad_check")) return;
    const auto suite = grad_check_random_instances(cfg.get_size("grad_check_instances"), cfg.dynimp_config(),
                                                   cfg.get_real("grad_check_eps"),
                                                   cfg.get_real("grad_check_tolerance"),
                                                   cfg.get_size("grad_check_samples"), cfg.get_u64("seed"));
    std::printf("grad-check instances=%zu max_rel_error=%.3e tolerance=%.1e\n", suite.reports.size(),
                suite.max_rel_error, cfg.get_real("grad_check_tolerance"));
    if (!suite.passed()) {
        for (const auto& r : suite.reports) {
            if (!r.passed()) throw std::runtime_error("gradient check failed: " + r.summary());
        }
    }
}

/// Scaled copy of a raw dataset (or the dataset itself when it is already scaled).
Dataset scaled_copy(const Dataset& raw, const ScalingParams& params, bool clip) {
    Dataset d = raw;
    if (d.scaling.mode == ScalingMode::none && params.mode != ScalingMode::none) apply_scaling(d, params, clip);
    return d;
}

int cmd_ingest(const RunConfig& cfg, const fs::path& csv, const fs::path& out) {
    const auto dataset = ingest_csv(csv, cfg.csv_schema());
    save_dataset(out, dataset);
    auto m = manifest_base("ingest", cfg);
    m["inputs"] = {csv.string()};
    m["outputs"] = {out.string()};
    write_manifest(sidecar(out, ".manifest.json"), m);
    print_summary(dataset);
    return 0;
}

double mean_cross_correlation(const Dataset& d) {
    const auto F = d.num_features();
    if (F < 2) return std::nan("");
    std::vector<std::vector<double>> cols(F);
    for (const auto& w : d.windows) {
        for (std::size_t t = 0; t < w.length(); ++t) {
            bool all = true;
            for (std::size_t f = 0; f < F; ++f) all = all && w.mask(t, f);
            if (!all) continue;
            for (std::size_t f = 0; f < F; ++f) cols[f].push_back(w.values(t, f));
        }
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < F; ++a) {
        for (std::size_t b = a + 1; b < F; ++b) {
            sum += pearson_correlation(cols[a], cols[b]);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

int cmd_synth(const RunConfig& cfg, const fs::path& out) {
    const auto dataset = generate_synthetic(cfg.synthetic_spec());
    save_dataset(out, dataset);
    auto m = manifest_base("synth", cfg);
    m["outputs"] = {out.string()};
    write_manifest(sidecar(out, ".manifest.json"), m);
    std::cout << "windows=" << dataset.windows.size() << " features=" << dataset.num_features()
              << " labels=" << dataset.num_labels();
    std::printf(" correlation=%.4f\n", mean_cross_correlation(dataset));
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& data_path, const fs::path& out,
              const std::optional<fs::path>& resume, std::optional<fs::path> loss_log) {
    Timer timer;
    maybe_grad_check(cfg);
    const auto raw = load_dataset(data_path);
    const auto dyn = cfg.dynimp_config();

    Checkpoint ckpt;
    if (resume) {
        ckpt = load_checkpoint(*resume);
        if (ckpt.model.num_features() != raw.num_features()) {
            throw std::invalid_argument("checkpoint expects " + std::to_string(ckpt.model.num_features()) +
                                        " features, dataset has " + std::to_string(raw.num_features()));
        }
        ckpt.model.config.epochs = dyn.epochs;
    } else {
        ckpt.scaling = raw.scaling.mode == ScalingMode::none ? fit_scaling(raw, cfg.scaling_mode()) : raw.scaling;
    }
    const auto data = scaled_copy(raw, ckpt.scaling, false);
    if (!resume) {
        ckpt.model = make_model(raw.num_features(), dyn, cfg.get_u64("seed"));
        ckpt.model.feature_means = observed_feature_means(data.windows);
    }

    if (!loss_log) loss_log = sidecar(out, ".loss.csv");
    auto log = open_out(*loss_log);
    log << "# dynimp-loss-log v1\nepoch,loss\n";
    try {
        train(ckpt.model, data.windows, [&](const EpochReport& r) {
            char line[64];
            std::snprintf(line, sizeof line, "%zu,%.9g\n", r.epoch, r.mean_loss);
            log << line << std::flush;
            std::printf("epoch %zu loss %.6f\n", r.epoch, r.mean_loss);
            std::fflush(stdout);
        });
    } catch (const TrainingDiverged& e) {
        throw std::runtime_error(std::string("training diverged: ") + e.what());
    }
    save_checkpoint(out, ckpt);

    auto m = manifest_base("train", cfg);
    m["inputs"] = resume ? json{data_path.string(), resume->string()} : json{data_path.string()};
    m["outputs"] = {out.string(), loss_log->string()};
    m["epochs_completed"] = ckpt.model.epochs_completed;
    m["wall_clock_seconds"] = timer.seconds();
    write_manifest(sidecar(out, ".manifest.json"), m);
    std::cout << "checkpoint=" << out.string() << " epochs_completed=" << ckpt.model.epochs_completed << '\n';
    return 0;
}

int cmd_impute(const RunConfig& cfg, const fs::path& data_path, const fs::path& ckpt_path, const fs::path& out) {
    const auto raw = load_dataset(data_path);
    const auto ckpt = load_checkpoint(ckpt_path);
    if (ckpt.model.num_features() != raw.num_features()) {
        throw std::invalid_argument("checkpoint expects " + std::to_string(ckpt.model.num_features()) +
                                    " features, dataset has " + std::to_string(raw.num_features()));
    }
    const bool raw_units = raw.scaling.mode == ScalingMode::none;
    const auto data = scaled_copy(raw, ckpt.scaling, ckpt.model.config.loss == LossMode::bce);
    const auto imputed = parallel::impute_all(ckpt.model, data.windows);

    Dataset result = raw;
    std::size_t filled = 0;
    for (std::size_t i = 0; i < result.windows.size(); ++i) {
        auto& w = result.windows[i];
        for (std::size_t t = 0; t < w.length(); ++t) {
            for (std::size_t f = 0; f < w.features(); ++f) {
                if (w.mask(t, f)) continue;
                const double z = imputed[i].values(t, f);
                w.values(t, f) = raw_units ? ckpt.scaling.unscale(f, z) : z;
                w.mask.set(t, f, true);
                ++filled;
            }
        }
    }
    save_dataset(out, result);
    auto m = manifest_base("impute", cfg);
    m["seed"] = ckpt.model.seed;
    m["inputs"] = {data_path.string(), ckpt_path.string()};
    m["outputs"] = {out.string()};
    write_manifest(sidecar(out, ".manifest.json"), m);
    std::cout << "windows=" << result.windows.size() << " imputed_cells=" << filled << '\n';
    return 0;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    auto os = open_out(path);
    body(os);
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

int cmd_experiment(const RunConfig& cfg, const fs::path& data_path, const fs::path& out_dir) {
    Timer timer;
    maybe_grad_check(cfg);
    const auto dataset = load_dataset(data_path);
    const auto config = cfg.experiment_config();
    fs::create_directories(out_dir);

    const auto output = run_experiment(dataset, config);

    write_file(out_dir / "results.csv", [&](std::ostream& os) { write_results_csv(os, output.results); });
    write_file(out_dir / "aggregate.csv", [&](std::ostream& os) { write_aggregate_csv(os, output.aggregates); });
    write_file(out_dir / "table1.csv", [&](std::ostream& os) {
        write_table1_csv(os, output.aggregates, config.methods, config.levels);
    });
    write_file(out_dir / "table2.csv", [&](std::ostream& os) {
        write_table2_csv(os, output.aggregates, config.methods, config.levels);
    });

    auto m = manifest_base("experiment", cfg);
    m["seeds"] = config.seeds;
    m["inputs"] = {data_path.string()};
    m["outputs"] = {"results.csv", "aggregate.csv", "table1.csv", "table2.csv"};
    json failures = json::array();
    for (const auto& r : output.results) {
        if (r.error.empty()) continue;
        failures.push_back({{"method", r.method}, {"level", r.level}, {"seed", r.seed}, {"error", r.error}});
    }
    m["failures"] = failures;
    json reference = json::array();
    for (const auto& p : kPublishedReference) {
        reference.push_back({{"method", p.method}, {"level", p.level}, {"mean_ba", p.mean_ba},
                             {"ci95", p.ci_half_width}});
    }
    m["reference"] = {{"note", "ExtraSensory, 60 users; not expected to reproduce on synthetic data"},
                      {"points", reference}};
    m["wall_clock_seconds"] = timer.seconds();
    write_manifest(out_dir / "manifest.json", m);

    for (const auto& a : output.aggregates) {
        std::printf("%-14s level=%.2f ba=%.4f +/- %.4f (n=%zu)\n", a.method.c_str(), a.level, a.mean_ba,
                    a.ci_half_width, a.seeds);
    }
    for (const auto& f : failures) {
        std::fprintf(stderr, "failed cell: method=%s level=%g seed=%llu: %s\n",
                     f["method"].get<std::string>().c_str(), f["level"].get<double>(),
                     static_cast<unsigned long long>(f["seed"].get<std::uint64_t>()),
                     f["error"].get<std::string>().c_str());
    }
    return output.failed_cells() == 0 ? 0 : kExitCellsFailed;
}

int cmd_grad_check(const RunConfig& cfg) {
    const double tol = cfg.get_real("grad_check_tolerance");
    const auto suite = grad_check_random_instances(cfg.get_size("grad_check_instances"), cfg.dynimp_config(),
                                                   cfg.get_real("grad_check_eps"), tol,
                                                   cfg.get_size("grad_check_samples"), cfg.get_u64("seed"));
    for (std::size_t i = 0; i < suite.reports.size(); ++i) {
        std::cout << "instance " << i << ": " << suite.reports[i].summary() << '\n';
    }
    std::printf("instances=%zu max_rel_error=%.3e tolerance=%.1e %s\n", suite.reports.size(), suite.max_rel_error,
                tol, suite.passed() ? "PASS" : "FAIL");
    return suite.passed() ? 0 : kExitFailure;
}

std::string flag_name(const std::string& key) {
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    return dashed == key ? "--" + key : "--" + dashed + ",--" + key;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DynImp: kNN-padded LSTM denoising autoencoder imputation for wearable time series"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "key=value config file or a run manifest (.json)");

    std::map<std::string, std::string> flag_values;
    bool grad_check_flag = false;
    CLI::Option* grad_check_opt = nullptr;
    for (const auto& key : RunConfig::keys()) {
        if (key.name == "grad_check") {
            grad_check_opt = app.add_flag(flag_name(key.name), grad_check_flag, key.help);
            continue;
        }
        app.add_option(flag_name(key.name), flag_values[key.name], key.help)
            ->group("Config")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }

    std::string in_path, aux_path, out_path, resume_path, loss_log_path;

    auto* ingest = app.add_subcommand("ingest", "CSV -> dataset file");
    ingest->add_option("csv", in_path, "input CSV")->required();
    ingest->add_option("-o,--out", out_path, "output dataset file")->required();

    auto* synth = app.add_subcommand("synth", "generate a synthetic correlated-channel dataset");
    synth->add_option("-o,--out", out_path, "output dataset file")->required();

    auto* train_cmd = app.add_subcommand("train", "train a DynImp model");
    train_cmd->add_option("dataset", in_path, "dataset file")->required();
    train_cmd->add_option("-o,--out", out_path, "output checkpoint")->required();
    train_cmd->add_option("--resume", resume_path, "continue from this checkpoint");
    train_cmd->add_option("--loss-log", loss_log_path, "loss log CSV (default <out>.loss.csv)");

    auto* impute_cmd = app.add_subcommand("impute", "fill missing cells with a trained model");
    impute_cmd->add_option("dataset", in_path, "dataset file")->required();
    impute_cmd->add_option("checkpoint", aux_path, "checkpoint file")->required();
    impute_cmd->add_option("-o,--out", out_path, "output dataset file")->required();

    auto* experiment = app.add_subcommand("experiment", "run the method x level x seed matrix");
    experiment->add_option("dataset", in_path, "dataset file")->required();
    experiment->add_option("--out-dir", out_path, "directory for CSVs and manifest")->required();

    auto* grad_check_cmd = app.add_subcommand("grad-check", "finite-difference check on random small instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.merge_file(config_path);
        cfg.merge_environment();
        for (const auto& key : RunConfig::keys()) {
            if (key.name == "grad_check") {
                if (grad_check_opt->count() > 0) cfg.set("grad_check", grad_check_flag ? "true" : "false");
                continue;
            }
            if (app.get_option(flag_name(key.name).substr(0, flag_name(key.name).find(',')))->count() > 0) {
                cfg.set(key.name, flag_values[key.name]);
            }
        }
        cfg.validate();
        set_threads(static_cast<int>(cfg.get_size("jobs")));

        if (*ingest) return cmd_ingest(cfg, in_path, out_path);
        if (*synth) return cmd_synth(cfg, out_path);
        if (*train_cmd) {
            return cmd_train(cfg, in_path, out_path,
                             resume_path.empty() ? std::nullopt : std::optional<fs::path>(resume_path),
                             loss_log_path.empty() ? std::nullopt : std::optional<fs::path>(loss_log_path));
        }
        if (*impute_cmd) return cmd_impute(cfg, in_path, aux_path, out_path);
        if (*experiment) return cmd_experiment(cfg, in_path, out_path);
        if (*grad_check_cmd) return cmd_grad_check(cfg);
    } catch (const std::exception& e) {
        std::cerr << "dynimp: error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
