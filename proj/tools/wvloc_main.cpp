// wvloc: batch CLI for the joint wireless-visual localization pipeline.
//
// Subcommands: survey, train, localize, evaluate, bench.
// Exit codes: 0 ok, 2 config error, 3 io/hash/format error, 4 divergence.
// Errors are emitted as machine-readable JSON on stderr.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wvloc/wvloc.hpp"

namespace fs = std::filesystem;
using wvloc::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::string db_dir;
    std::string models_dir;
    std::string queries_path;
    std::optional<std::uint64_t> seed_override;
    bool plot = false;
    bool drop_missed_areas = false;
};

void emit_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw wvloc::IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw wvloc::IoError("cannot open '" + path.string() + "' for writing");
    }
    out << content;
    out.flush();
    if (!out) {
        throw wvloc::IoError("failed while writing '" + path.string() + "'");
    }
}

wvloc::ExperimentConfig load_config(const CliOptions& opts) {
    const std::string text = read_file(opts.config_path);
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
        throw wvloc::ConfigError("config file '" + opts.config_path + "' is not valid JSON");
    }
    wvloc::ExperimentConfig cfg = wvloc::ExperimentConfig::from_json(j);
    if (opts.seed_override) {
        cfg.seed = *opts.seed_override;
    }
    cfg.fine_training.drop_missed_areas =
        cfg.fine_training.drop_missed_areas || opts.drop_missed_areas;
    cfg.validate();
    return cfg;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

/// Records every produced file with its content hash. The timestamp makes
/// the manifest itself non-reproducible; all other artifacts are
/// byte-deterministic given (config, seed).
void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const CliOptions& opts, std::uint64_t seed,
                    const std::vector<fs::path>& files) {
    json file_hashes = json::object();
    for (const fs::path& f : files) {
        file_hashes[f.filename().string()] = wvloc::fnv1a64_hex(read_file(f));
    }
    const json manifest{{"subcommand", subcommand}, {"config", opts.config_path},
                        {"out_dir", out_dir.string()}, {"seed", seed},
                        {"generated_at", utc_timestamp()}, {"files", file_hashes}};
    write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

fs::path ensure_out_dir(const std::string& dir) {
    if (dir.empty()) {
        throw wvloc::ConfigError("--out is required for this subcommand");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw wvloc::IoError("cannot create output directory '" + dir + "': " + ec.message());
    }
    return fs::path(dir);
}

int cmd_survey(const CliOptions& opts) {
    const wvloc::ExperimentConfig cfg = load_config(opts);
    const fs::path out = ensure_out_dir(opts.out_dir);
    const wvloc::SurveyResult survey = wvloc::run_survey(cfg);
    for (const std::string& w : survey.warnings) {
        std::cerr << json{{"warning", w}}.dump() << "\n";
    }
    const std::string hash = cfg.hash();
    wvloc::save_wifi_db(survey.wifi, (out / "wifi.jsonl").string(), hash, cfg.seed);
    wvloc::save_image_db(survey.image, (out / "image.jsonl").string(), hash, cfg.seed);
    // Held-out query set for `localize`: fresh measurements at locations the
    // databases never saw, with ground truth attached so errors get printed.
    const wvloc::SceneBasis basis(cfg.scene, cfg.floor);
    std::vector<wvloc::LocalizationQuery> queries;
    for (const wvloc::EvalQuery& q : wvloc::make_queries(cfg, basis)) {
        queries.push_back({q.rssi, q.features, q.truth});
    }
    wvloc::save_queries(queries, (out / "queries.jsonl").string(), hash, cfg.seed);
    write_manifest(out, "survey", opts, cfg.seed,
                   {out / "wifi.jsonl", out / "image.jsonl", out / "queries.jsonl"});
    std::cout << json{{"status", "ok"},
                      {"n_rp", survey.wifi.n_rp()},
                      {"image_entries", survey.image.size()},
                      {"n_queries", queries.size()},
                      {"out", out.string()}}
                     .dump()
              << "\n";
    return kExitOk;
}

std::string losses_csv(const std::vector<double>& losses, const char* index_name) {
    std::string csv = std::string(index_name) + ",mean_loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        csv += std::to_string(i) + "," + wvloc::number_repr(losses[i]) + "\n";
    }
    return csv;
}

int cmd_train(const CliOptions& opts) {
    const wvloc::ExperimentConfig cfg = load_config(opts);
    if (opts.db_dir.empty()) {
        throw wvloc::ConfigError("--db is required for train");
    }
    const fs::path out = ensure_out_dir(opts.out_dir);
    const std::string hash = cfg.hash();
    const fs::path db(opts.db_dir);

    auto [wifi, wifi_header] = wvloc::load_wifi_db((db / "wifi.jsonl").string(), hash);
    auto [image, image_header] = wvloc::load_image_db((db / "image.jsonl").string(), hash);

    const std::vector<wvloc::ReferencePoint> rps = wifi.reference_points();
    const wvloc::AreaPartition partition =
        wvloc::make_grid_partition(cfg.floor, cfg.n_areas_x, cfg.n_areas_y, rps);

    std::vector<double> checkpoints;
    const wvloc::RpClassifierModel coarse =
        wvloc::train_classifier(wifi, cfg.coarse_training, hash, &checkpoints);
    const std::vector<wvloc::TrainingSample> samples =
        wvloc::make_training_samples(image, partition, coarse, cfg);
    const wvloc::FineTrainResult fine =
        wvloc::train_fine(samples, cfg.fine_training, cfg.floor, cfg.seed, hash);

    wvloc::save_coarse_model(coarse, (out / "coarse_model.jsonl").string(), cfg.seed);
    wvloc::save_fine_model(fine.model, (out / "fine_model.jsonl").string(), cfg.seed);
    write_file(out / "coarse_loss.csv", losses_csv(checkpoints, "checkpoint"));
    write_file(out / "fine_loss.csv", losses_csv(fine.epoch_losses, "epoch"));
    write_manifest(out, "train", opts, cfg.seed,
                   {out / "coarse_model.jsonl", out / "fine_model.jsonl", out / "coarse_loss.csv",
                    out / "fine_loss.csv"});
    std::cout << json{{"status", "ok"},
                      {"coarse_iterations", coarse.iterations},
                      {"coarse_final_loss", coarse.final_loss},
                      {"fine_samples", samples.size()},
                      {"fine_final_loss", fine.model.final_mean_loss},
                      {"out", out.string()}}
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_localize(const CliOptions& opts) {
    const wvloc::ExperimentConfig cfg = load_config(opts);
    if (opts.models_dir.empty() || opts.queries_path.empty()) {
        throw wvloc::ConfigError("--models and --queries are required for localize");
    }
    const std::string hash = cfg.hash();
    const fs::path models(opts.models_dir);
    auto [coarse, coarse_header] =
        wvloc::load_coarse_model((models / "coarse_model.jsonl").string(), hash);
    auto [fine, fine_header] =
        wvloc::load_fine_model((models / "fine_model.jsonl").string(), hash);
    auto [queries, queries_header] = wvloc::load_queries(opts.queries_path, hash);

    const std::vector<wvloc::ReferencePoint> rps = wvloc::rp_grid(cfg);
    const wvloc::AreaPartition partition =
        wvloc::make_grid_partition(cfg.floor, cfg.n_areas_x, cfg.n_areas_y, rps);

    std::vector<std::string> lines;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const wvloc::LocalizationQuery& q = queries[i];
        const wvloc::CandidateSelection sel =
            wvloc::coarse_localize(q.rssi, coarse, partition, cfg.j_star);
        const wvloc::Location loc = wvloc::fine_localize(q.features, fine, sel, partition);
        json record{{"index", i},
                    {"candidate_areas", sel.area_indices},
                    {"probs", sel.probs},
                    {"location", {{"x", loc.x}, {"y", loc.y}, {"z", loc.z}}}};
        if (q.truth) {
            record["error"] = wvloc::distance(loc, *q.truth);
        }
        lines.push_back(record.dump());
        std::cout << lines.back() << "\n";
    }
    if (!opts.out_dir.empty()) {
        const fs::path out = ensure_out_dir(opts.out_dir);
        std::string body;
        for (const std::string& l : lines) {
            body += l + "\n";
        }
        write_file(out / "predictions.jsonl", body);
        write_manifest(out, "localize", opts, cfg.seed, {out / "predictions.jsonl"});
    }
    return kExitOk;
}

int cmd_evaluate(const CliOptions& opts) {
    const wvloc::ExperimentConfig cfg = load_config(opts);
    const fs::path out = ensure_out_dir(opts.out_dir);

    const wvloc::EvaluationReport report = wvloc::run_accuracy_experiment(cfg);
    std::vector<fs::path> files;
    write_file(out / "report.json", wvloc::report_to_json(report).dump(2) + "\n");
    files.push_back(out / "report.json");
    write_file(out / "report_cdf.csv", wvloc::cdf_csv(report));
    files.push_back(out / "report_cdf.csv");
    if (opts.plot) {
        write_file(out / "report_cdf.svg", wvloc::cdf_svg(report));
        files.push_back(out / "report_cdf.svg");
    }

    const std::vector<double> spacings{1.0, 1.5, 2.0};
    const std::vector<wvloc::EvaluationReport> sweep = wvloc::run_grid_sweep(cfg, spacings);
    json sweep_json = json::array();
    for (const wvloc::EvaluationReport& r : sweep) {
        sweep_json.push_back(wvloc::report_to_json(r));
    }
    write_file(out / "sweep.json", sweep_json.dump(2) + "\n");
    files.push_back(out / "sweep.json");
    for (const wvloc::EvaluationReport& r : sweep) {
        const std::string tag = wvloc::number_repr(r.rp_spacing);
        write_file(out / ("sweep_cdf_" + tag + ".csv"), wvloc::cdf_csv(r));
        files.push_back(out / ("sweep_cdf_" + tag + ".csv"));
        if (opts.plot) {
            write_file(out / ("sweep_cdf_" + tag + ".svg"), wvloc::cdf_svg(r));
            files.push_back(out / ("sweep_cdf_" + tag + ".svg"));
        }
    }
    write_manifest(out, "evaluate", opts, cfg.seed, files);
    std::cout << json{{"status", "ok"},
                      {"wifi_only_median", report.wifi_only.median},
                      {"joint_median", report.joint.median},
                      {"containment_rate", report.containment_rate},
                      {"out", out.string()}}
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_bench(const CliOptions& opts) {
    const wvloc::ExperimentConfig cfg = load_config(opts);
    const fs::path out = ensure_out_dir(opts.out_dir);
    const wvloc::TrainedPipeline pipeline = wvloc::train_pipeline(cfg);
    const wvloc::LatencyTable table = wvloc::run_latency_bench(pipeline, {1, 10, 100});
    write_file(out / "latency.json", wvloc::latency_to_json(table).dump(2) + "\n");
    std::string csv = "n_queries,wifi_only_seconds,joint_seconds\n";
    for (const wvloc::LatencyRow& r : table.rows) {
        csv += std::to_string(r.n_queries) + "," + wvloc::number_repr(r.wifi_only_seconds) + "," +
               wvloc::number_repr(r.joint_seconds) + "\n";
    }
    write_file(out / "latency.csv", csv);
    write_manifest(out, "bench", opts, cfg.seed, {out / "latency.json", out / "latency.csv"});
    std::cout << wvloc::latency_to_json(table).dump() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint wireless-visual indoor localization pipeline"};
    app.require_subcommand(1);

    CliOptions opts;
    app.add_option("--config", opts.config_path, "Experiment config JSON")->required();
    app.add_option("--out", opts.out_dir, "Output directory");
    app.add_option("--seed", opts.seed_override, "Override the config's master seed");
    app.add_flag("--plot", opts.plot, "Also emit SVG charts");
    app.add_flag("--drop-missed-areas", opts.drop_missed_areas,
                 "Fine-training ablation: drop samples whose true area was not selected");

    CLI::App* survey = app.add_subcommand(
        "survey", "Generate and persist the fingerprint databases and a held-out query set");
    CLI::App* train = app.add_subcommand("train", "Train the coarse classifier and fine regressor");
    train->add_option("--db", opts.db_dir, "Directory holding wifi.jsonl/image.jsonl")->required();
    CLI::App* localize = app.add_subcommand("localize", "Run queries against trained models");
    localize->add_option("--models", opts.models_dir, "Directory holding the model files")
        ->required();
    localize->add_option("--queries", opts.queries_path, "Query file (JSON Lines)")->required();
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Run the accuracy experiment and grid sweep");
    CLI::App* bench = app.add_subcommand("bench", "Run the latency benchmark");
    // Let `wvloc <subcommand> --config ...` reach the global options above.
    for (CLI::App* sub : {survey, train, localize, evaluate, bench}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage", e.what());
        return kExitConfig;
    }

    try {
        if (survey->parsed()) return cmd_survey(opts);
        if (train->parsed()) return cmd_train(opts);
        if (localize->parsed()) return cmd_localize(opts);
        if (evaluate->parsed()) return cmd_evaluate(opts);
        if (bench->parsed()) return cmd_bench(opts);
        emit_error("usage", "no subcommand given");
        return kExitConfig;
    } catch (const wvloc::ConfigError& e) {
        emit_error("config", e.what());
        return kExitConfig;
    } catch (const wvloc::VersionMismatchError& e) {
        emit_error("version_mismatch", e.what());
        return kExitIo;
    } catch (const wvloc::MalformedLineError& e) {
        emit_error("malformed_line", e.what());
        return kExitIo;
    } catch (const wvloc::HashMismatchError& e) {
        emit_error("hash_mismatch", e.what());
        return kExitIo;
    } catch (const wvloc::IoError& e) {
        emit_error("io", e.what());
        return kExitIo;
    } catch (const wvloc::DivergenceError& e) {
        emit_error("divergence", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return 1;
    }
}
