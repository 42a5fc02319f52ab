#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "wvloc/channel.hpp"
#include "wvloc/coarse.hpp"
#include "wvloc/config.hpp"
#include "wvloc/database.hpp"
#include "wvloc/errors.hpp"
#include "wvloc/fine.hpp"
#include "wvloc/rng.hpp"
#include "wvloc/scene.hpp"
#include "wvloc/serialization.hpp"
#include "wvloc/survey.hpp"

namespace wvloc {

inline double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Fraction of errors at or below each threshold.
inline std::vector<double> error_cdf(const std::vector<double>& errors,
                                     const std::vector<double>& thresholds) {
    if (errors.empty()) {
        throw ConfigError("cannot build a CDF from an empty error list");
    }
    for (double e : errors) {
        if (!(e >= 0.0)) {
            throw ConfigError("errors must be nonnegative");
        }
    }
    std::vector<double> cdf;
    cdf.reserve(thresholds.size());
    for (double t : thresholds) {
        std::size_t count = 0;
        for (double e : errors) {
            if (e <= t) ++count;
        }
        cdf.push_back(static_cast<double>(count) / static_cast<double>(errors.size()));
    }
    return cdf;
}

inline std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 50; ++i) {
        t.push_back(0.1 * i);
    }
    return t;
}

/// Error statistics for one method.
struct MethodResult {
    std::vector<double> errors;
    std::vector<double> cdf;
    double median = 0.0;
    double mean = 0.0;
};

inline MethodResult summarize_errors(std::vector<double> errors,
                                     const std::vector<double>& thresholds) {
    MethodResult r;
    r.cdf = error_cdf(errors, thresholds);
    r.median = median_of(errors);
    r.mean = mean_of(errors);
    r.errors = std::move(errors);
    return r;
}

/// One full accuracy experiment, paper Fig. 5 style: two methods on the same
/// queries plus coarse-stage diagnostics. Latency is measured separately so
/// this report serializes identically across reruns.
struct EvaluationReport {
    double rp_spacing = 0.0;
    int n_rp = 0;
    int n_areas = 0;
    int j_star = 0;
    std::uint64_t seed = 0;
    double containment_rate = 0.0;
    std::vector<double> thresholds;
    MethodResult wifi_only;
    MethodResult joint;
    json config_snapshot;
};

/// Both trained stages plus everything needed to serve queries.
struct TrainedPipeline {
    ExperimentConfig cfg;
    SurveyResult survey;
    RpClassifierModel coarse_model;
    std::vector<double> coarse_checkpoints;
    FineTrainResult fine;
    SceneBasis basis;
};

/// Builds the per-sample coarse selections for fine training. The selection
/// for each sample comes from RSSI synthesized at the sample's true location
/// (the only location that exists at train time). Samples whose true area
/// was missed are kept unless the ablation flag drops them.
inline std::vector<TrainingSample> make_training_samples(const ImageDb& image,
                                                         const AreaPartition& partition,
                                                         const RpClassifierModel& model,
                                                         const ExperimentConfig& cfg) {
    std::vector<TrainingSample> samples;
    for (std::size_t e = 0; e < image.entries.size(); ++e) {
        const ImageDbEntry& entry = image.entries[e];
        for (std::size_t r = 0; r < entry.observations.size(); ++r) {
            RngStream stream(cfg.channel.seed, StreamKind::kSelectionRssi,
                             static_cast<std::uint64_t>(e) * entry.observations.size() +
                                 static_cast<std::uint64_t>(r));
            const RssiObservation rssi =
                synth_rssi(cfg.channel, cfg.ap_positions, entry.location, cfg.n_samples, stream);
            CandidateSelection selection =
                coarse_localize(rssi, model, partition, cfg.j_star);
            if (cfg.fine_training.drop_missed_areas) {
                const int true_area = partition.area_containing(entry.location);
                if (std::find(selection.area_indices.begin(), selection.area_indices.end(),
                              true_area) == selection.area_indices.end()) {
                    continue;
                }
            }
            samples.emplace_back(pool_features(entry.observations[r]), entry.location,
                                 std::move(selection));
        }
    }
    return samples;
}

/// Offline stage end to end: survey, coarse training, fine training.
inline TrainedPipeline train_pipeline(const ExperimentConfig& cfg) {
    cfg.validate();
    SurveyResult survey = run_survey(cfg);
    const std::string hash = cfg.hash();
    std::vector<double> checkpoints;
    RpClassifierModel coarse_model =
        train_classifier(survey.wifi, cfg.coarse_training, hash, &checkpoints);
    const std::vector<TrainingSample> samples =
        make_training_samples(survey.image, survey.partition, coarse_model, cfg);
    FineTrainResult fine =
        train_fine(samples, cfg.fine_training, cfg.floor, cfg.seed, hash);
    SceneBasis basis(cfg.scene, cfg.floor);
    return TrainedPipeline{cfg,
                           std::move(survey),
                           std::move(coarse_model),
                           std::move(checkpoints),
                           std::move(fine),
                           std::move(basis)};
}

/// One held-out online task: ground truth plus synchronized measurements.
struct EvalQuery {
    Location truth;
    RssiObservation rssi;
    ImageFeatures features;
};

/// M query locations drawn uniformly over the floor, with fresh measurement
/// noise, on streams disjoint from every survey stream.
inline std::vector<EvalQuery> make_queries(const ExperimentConfig& cfg, const SceneBasis& basis) {
    std::vector<EvalQuery> queries;
    queries.reserve(static_cast<std::size_t>(cfg.n_tasks));
    for (int m = 0; m < cfg.n_tasks; ++m) {
        RngStream loc_stream(cfg.seed, StreamKind::kQueryLocation,
                             static_cast<std::uint64_t>(m));
        const Location truth{loc_stream.uniform(cfg.floor.min.x, cfg.floor.max.x),
                             loc_stream.uniform(cfg.floor.min.y, cfg.floor.max.y),
                             loc_stream.uniform(cfg.floor.min.z, cfg.floor.max.z)};
        RngStream rssi_stream(cfg.channel.seed, StreamKind::kQueryRssi,
                              static_cast<std::uint64_t>(m));
        RngStream img_stream(cfg.scene.seed, StreamKind::kQueryImage,
                             static_cast<std::uint64_t>(m));
        queries.push_back(EvalQuery{
            truth,
            synth_rssi(cfg.channel, cfg.ap_positions, truth, cfg.n_samples, rssi_stream),
            synth_features(basis, cfg.image_spec, cfg.scene.noise_sigma, truth, img_stream)});
    }
    return queries;
}

/// True when no query location coincides with any surveyed location.
inline bool queries_disjoint_from_training(const std::vector<EvalQuery>& queries,
                                           const SurveyResult& survey) {
    for (const EvalQuery& q : queries) {
        for (const WifiDbEntry& e : survey.wifi.entries) {
            if (e.rp.location == q.truth) return false;
        }
        for (const ImageDbEntry& e : survey.image.entries) {
            if (e.location == q.truth) return false;
        }
    }
    return true;
}

inline EvaluationReport evaluate_pipeline(const TrainedPipeline& pipeline,
                                          const std::vector<EvalQuery>& queries,
                                          const std::vector<double>& thresholds) {
    const ExperimentConfig& cfg = pipeline.cfg;
    const std::vector<ReferencePoint> rps = pipeline.survey.wifi.reference_points();
    std::vector<double> wifi_errors;
    std::vector<double> joint_errors;
    std::size_t contained = 0;
    for (const EvalQuery& q : queries) {
        const CandidateSelection selection =
            coarse_localize(q.rssi, pipeline.coarse_model, pipeline.survey.partition, cfg.j_star);
        const Location wifi_loc = baseline_wifi_only(q.rssi, pipeline.coarse_model, rps);
        const Location joint_loc =
            fine_localize(q.features, pipeline.fine.model, selection, pipeline.survey.partition);
        wifi_errors.push_back(distance(wifi_loc, q.truth));
        joint_errors.push_back(distance(joint_loc, q.truth));
        const int true_area = pipeline.survey.partition.area_containing(q.truth);
        if (std::find(selection.area_indices.begin(), selection.area_indices.end(), true_area) !=
            selection.area_indices.end()) {
            ++contained;
        }
    }
    EvaluationReport report;
    report.rp_spacing = cfg.rp_spacing;
    report.n_rp = cfg.n_rp;
    report.n_areas = cfg.n_areas();
    report.j_star = cfg.j_star;
    report.seed = cfg.seed;
    report.containment_rate = static_cast<double>(contained) / queries.size();
    report.thresholds = thresholds;
    report.wifi_only = summarize_errors(std::move(wifi_errors), thresholds);
    report.joint = summarize_errors(std::move(joint_errors), thresholds);
    report.config_snapshot = cfg.to_json();
    return report;
}

/// Full methodology for one config: survey, train, evaluate M held-out tasks.
inline EvaluationReport run_accuracy_experiment(const ExperimentConfig& cfg) {
    const TrainedPipeline pipeline = train_pipeline(cfg);
    const std::vector<EvalQuery> queries = make_queries(cfg, pipeline.basis);
    if (!queries_disjoint_from_training(queries, pipeline.survey)) {
        throw ConfigError("a held-out query collided with a training location");
    }
    return evaluate_pipeline(pipeline, queries, default_thresholds());
}

/// Derives a valid config for one RP spacing: the RP count follows from the
/// floor size, and the area grid is capped per axis so no area can outnumber
/// the RP columns/rows it draws from.
inline ExperimentConfig config_for_spacing(const ExperimentConfig& base, double spacing) {
    if (!(spacing > 0.0)) {
        throw ConfigError("spacing must be positive");
    }
    if (spacing > base.floor.extent_x() || spacing > base.floor.extent_y()) {
        throw ConfigError("spacing " + std::to_string(spacing) +
                          " exceeds a floor dimension");
    }
    ExperimentConfig cfg = base;
    cfg.rp_spacing = spacing;
    const int nx = detail::grid_count_1d(cfg.floor.extent_x(), spacing);
    const int ny = detail::grid_count_1d(cfg.floor.extent_y(), spacing);
    cfg.n_rp = nx * ny;
    cfg.n_areas_x = std::min(base.n_areas_x, nx);
    cfg.n_areas_y = std::min(base.n_areas_y, ny);
    cfg.j_star = std::min(base.j_star, cfg.n_areas());
    cfg.validate();
    return cfg;
}

/// Paper Fig. 6 mechanism: the accuracy experiment repeated per RP spacing.
inline std::vector<EvaluationReport> run_grid_sweep(const ExperimentConfig& base,
                                                    const std::vector<double>& spacings) {
    if (spacings.empty()) {
        throw ConfigError("grid sweep needs at least one spacing");
    }
    std::vector<EvaluationReport> reports;
    reports.reserve(spacings.size());
    for (double s : spacings) {
        reports.push_back(run_accuracy_experiment(config_for_spacing(base, s)));
    }
    return reports;
}

// ---- latency ----

/// Wall-clock totals (seconds) for both methods at one query count.
struct LatencyRow {
    int n_queries = 0;
    double wifi_only_seconds = 0.0;
    double joint_seconds = 0.0;
};

struct LatencyTable {
    std::vector<LatencyRow> rows;
    int repetitions = 5;
};

/// Times the online path only (measurements are synthesized outside the
/// clock). Each cell is the median of `repetitions` runs. Absolute values
/// are hardware-dependent and reported, never asserted against paper values.
inline LatencyTable run_latency_bench(const TrainedPipeline& pipeline,
                                      const std::vector<int>& query_counts,
                                      int repetitions = 5) {
    if (query_counts.empty()) {
        throw ConfigError("latency bench needs at least one query count");
    }
    for (int n : query_counts) {
        if (n <= 0) {
            throw ConfigError("query counts must be positive");
        }
    }
    const int max_count = *std::max_element(query_counts.begin(), query_counts.end());
    ExperimentConfig qcfg = pipeline.cfg;
    qcfg.n_tasks = max_count;
    qcfg.seed = mix64(pipeline.cfg.seed ^ static_cast<std::uint64_t>(StreamKind::kBench));
    const std::vector<EvalQuery> queries = make_queries(qcfg, pipeline.basis);
    const std::vector<ReferencePoint> rps = pipeline.survey.wifi.reference_points();

    auto time_once = [&](int n, bool joint) {
        volatile double sink = 0.0;  // keep the optimizer honest
        const auto start = std::chrono::steady_clock::now();
        for (int i = 0; i < n; ++i) {
            const EvalQuery& q = queries[static_cast<std::size_t>(i)];
            if (joint) {
                const CandidateSelection sel = coarse_localize(
                    q.rssi, pipeline.coarse_model, pipeline.survey.partition, pipeline.cfg.j_star);
                sink = sink + fine_localize(q.features, pipeline.fine.model, sel,
                                            pipeline.survey.partition)
                                  .x;
            } else {
                sink = sink + baseline_wifi_only(q.rssi, pipeline.coarse_model, rps).x;
            }
        }
        const auto stop = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(stop - start).count();
    };

    LatencyTable table;
    table.repetitions = repetitions;
    for (int n : query_counts) {
        std::vector<double> wifi_times;
        std::vector<double> joint_times;
        for (int rep = 0; rep < repetitions; ++rep) {
            wifi_times.push_back(time_once(n, false));
            joint_times.push_back(time_once(n, true));
        }
        table.rows.push_back(LatencyRow{n, median_of(wifi_times), median_of(joint_times)});
    }
    return table;
}

// ---- report output ----

inline json method_to_json(const MethodResult& m) {
    return json{{"errors", m.errors}, {"cdf", m.cdf}, {"median", m.median}, {"mean", m.mean}};
}

inline json report_to_json(const EvaluationReport& r) {
    return json{{"rp_spacing", r.rp_spacing},
                {"n_rp", r.n_rp},
                {"n_areas", r.n_areas},
                {"j_star", r.j_star},
                {"seed", r.seed},
                {"containment_rate", r.containment_rate},
                {"thresholds", r.thresholds},
                {"methods",
                 {{"wifi_only", method_to_json(r.wifi_only)},
                  {"joint", method_to_json(r.joint)}}},
                {"config", r.config_snapshot}};
}

inline json latency_to_json(const LatencyTable& t) {
    json rows = json::array();
    for (const LatencyRow& r : t.rows) {
        rows.push_back(json{{"n_queries", r.n_queries},
                            {"wifi_only_seconds", r.wifi_only_seconds},
                            {"joint_seconds", r.joint_seconds}});
    }
    return json{{"repetitions", t.repetitions}, {"rows", rows}};
}

/// Serializes one double exactly as the JSON writer would (shortest
/// round-trip form), so CSV artifacts are byte-deterministic too.
inline std::string number_repr(double v) { return json(v).dump(); }

/// CSV of (threshold, fraction) rows for both methods.
inline std::string cdf_csv(const EvaluationReport& r) {
    std::string out = "threshold,wifi_only,joint\n";
    for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
        out += number_repr(r.thresholds[i]) + "," + number_repr(r.wifi_only.cdf[i]) + "," +
               number_repr(r.joint.cdf[i]) + "\n";
    }
    return out;
}

/// Minimal self-contained SVG line chart of the two CDFs.
inline std::string cdf_svg(const EvaluationReport& r) {
    constexpr double kw = 640.0, kh = 420.0, kml = 60.0, kmr = 20.0, kmt = 30.0, kmb = 50.0;
    const double plot_w = kw - kml - kmr;
    const double plot_h = kh - kmt - kmb;
    const double x_max = r.thresholds.empty() ? 1.0 : r.thresholds.back();

    auto px = [&](double t) { return kml + (x_max > 0.0 ? t / x_max : 0.0) * plot_w; };
    auto py = [&](double f) { return kmt + (1.0 - f) * plot_h; };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };
    auto polyline = [&](const std::vector<double>& cdf, const char* color) {
        std::string pts;
        for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
            pts += fmt(px(r.thresholds[i])) + "," + fmt(py(cdf[i])) + " ";
        }
        return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\">\n";
    svg += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    svg += "<text x=\"320\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">CDF of localization errors (spacing " +
           number_repr(r.rp_spacing) + " m)</text>\n";
    // axes
    svg += "<line x1=\"" + fmt(kml) + "\" y1=\"" + fmt(kmt) + "\" x2=\"" + fmt(kml) +
           "\" y2=\"" + fmt(kmt + plot_h) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(kml) + "\" y1=\"" + fmt(kmt + plot_h) + "\" x2=\"" +
           fmt(kml + plot_w) + "\" y2=\"" + fmt(kmt + plot_h) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double t = x_max * i / 5.0;
        svg += "<text x=\"" + fmt(px(t)) + "\" y=\"" + fmt(kmt + plot_h + 18.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(t) +
               "</text>\n";
        const double f = i / 5.0;
        svg += "<text x=\"" + fmt(kml - 8.0) + "\" y=\"" + fmt(py(f) + 4.0) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(f) +
               "</text>\n";
    }
    svg += "<text x=\"" + fmt(kml + plot_w / 2.0) + "\" y=\"" + fmt(kh - 10.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">error "
           "threshold (m)</text>\n";
    svg += polyline(r.wifi_only.cdf, "#1f77b4");
    svg += polyline(r.joint.cdf, "#d62728");
    svg += "<text x=\"" + fmt(kml + plot_w - 150.0) + "\" y=\"" + fmt(kmt + 20.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">wifi_only (median " +
           fmt(r.wifi_only.median) + " m)</text>\n";
    svg += "<text x=\"" + fmt(kml + plot_w - 150.0) + "\" y=\"" + fmt(kmt + 38.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">joint (median " +
           fmt(r.joint.median) + " m)</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace wvloc
