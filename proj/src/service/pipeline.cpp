#include "cqa/service/pipeline.hpp"

#include <cstdlib>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "cqa/errors.hpp"
#include "cqa/features.hpp"
#include "cqa/rng.hpp"
#include "cqa/service/event_log.hpp"
#include "cqa/service/formats.hpp"
#include "cqa/service/http_api.hpp"
#include "cqa/synthgen.hpp"

namespace fs = std::filesystem;

namespace cqa::service {

LabelSource label_source_from_string(const std::string& s) {
    if (s == "surrogate") return LabelSource::surrogate;
    if (s == "manual") return LabelSource::manual;
    throw ConfigError("unknown label source: " + s + " (expected surrogate or manual)");
}

std::optional<int> reference_label(const BundleSlice& slice, LabelSource source) {
    if (source == LabelSource::surrogate) return slice.surrogate_label;
    if (slice.rater_labels.empty()) return std::nullopt;
    return uq::majority_vote(uq::RaterPanel(slice.rater_labels));
}

std::vector<double> model_input(const BundleSlice& slice, const boc::NetworkConfig& net, double tol) {
    if (!slice.image) throw ConfigError("slice " + std::to_string(slice.index) + " has no image");
    std::vector<double> x = net.backbone == boc::Backbone::mlp_features
                                ? features::metric_features(*slice.image, slice.auto_mask, tol)
                                : features::grid_input(*slice.image, slice.auto_mask);
    if (x.size() != net.input_size())
        throw DimensionError("slice input has " + std::to_string(x.size()) + " values, network expects " +
                             std::to_string(net.input_size()));
    return x;
}

std::vector<boc::Example> examples_from(const std::vector<CaseBundle>& cases, const boc::NetworkConfig& net,
                                        LabelSource source, double tol) {
    std::vector<boc::Example> out;
    for (const auto& c : cases)
        for (const auto& s : c.slices) {
            auto y = reference_label(s, source);
            if (!y || !s.image) continue;
            out.push_back({model_input(s, net, tol), *y});
        }
    return out;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::vector<SlicePrediction> predict_dataset(const std::vector<CaseBundle>& cases,
                                             const boc::ModelParameters& params, int T, std::uint64_t seed,
                                             uq::ClassRule rule, double tol) {
    if (T < 1) throw DomainError("T must be at least 1");
    std::vector<SlicePrediction> out;
    for (const auto& c : cases)
        for (const auto& s : c.slices) {
            SlicePrediction p;
            p.slice_id = slice_id(c.subject_id, s.index);
            const auto x = model_input(s, params.config, tol);
            p.mc = boc::mc_forward(params, x, T, derive_seed(seed, fnv1a(p.slice_id)));
            p.quality = uq::summarize(p.mc, rule);
            out.push_back(std::move(p));
        }
    return out;
}

std::vector<calib::CalRecord> join_records(const std::vector<SlicePrediction>& preds,
                                           const std::vector<CaseBundle>& cases, LabelSource source) {
    std::map<std::string, int> labels;
    for (const auto& c : cases)
        for (const auto& s : c.slices)
            if (auto y = reference_label(s, source)) labels[slice_id(c.subject_id, s.index)] = *y;
    std::vector<calib::CalRecord> out;
    for (const auto& p : preds) {
        auto it = labels.find(p.slice_id);
        if (it == labels.end()) continue;
        calib::CalRecord r;
        r.slice_id = p.slice_id;
        r.uncertainty = p.quality.variance;
        r.predicted_class = p.quality.predicted_class;
        r.reference_class = it->second;
        r.class_probs = p.quality.class_probs;
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

// Values from --config; command-line flags override them.
struct ConfigFile {
    geom::SurrogateThresholds thresholds;
    int T = boc::kDefaultMcPasses;
    double dropout_rate = 0.1;
    std::map<std::string, std::string> paths;
};

ConfigFile load_config(const std::string& path) {
    ConfigFile cfg;
    if (path.empty()) return cfg;
    Json j = Json::parse(read_text(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + path + " is not a JSON object");
    try {
        if (j.contains("thresholds")) cfg.thresholds = thresholds_from_json(j["thresholds"]);
        cfg.T = j.value("T", cfg.T);
        cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
        if (j.contains("paths"))
            for (auto& [k, v] : j["paths"].items()) cfg.paths[k] = v.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config " + path + ": " + e.what());
    }
    return cfg;
}

std::string config_path(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return {};
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(parse_int(tok));
    return out;
}

std::vector<boc::GroupRate> parse_group_rates(const std::string& s) {
    std::vector<boc::GroupRate> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw ConfigError("lr group must be name=rate: " + tok);
        out.push_back({tok.substr(0, eq), parse_real(tok.substr(eq + 1))});
    }
    return out;
}

uq::ClassRule rule_from_string(const std::string& s) {
    if (s == "conditional") return uq::ClassRule::conditional;
    if (s == "cumulative") return uq::ClassRule::cumulative;
    throw ConfigError("unknown class rule: " + s);
}

void write_json(const fs::path& path, const Json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text(path, j.dump(2) + "\n");
}

Json train_log_json(const boc::TrainResult& r) {
    Json j;
    j["best_epoch"] = r.best_epoch;
    j["loss_trace"] = r.loss_trace;
    j["val_loss_trace"] = r.val_loss_trace;
    j["warnings"] = r.warnings;
    return j;
}

std::vector<calib::CalRecord> records_from_predictions(const std::string& pred_path, const std::string& data,
                                                       LabelSource source) {
    const auto rows = read_predictions_csv(pred_path);
    std::vector<SlicePrediction> preds;
    preds.reserve(rows.size());
    for (const auto& r : rows) preds.push_back({r.slice_id, {}, r.q});
    return join_records(preds, load_dataset(data), source);
}

struct Ctx {
    std::ostream& out;
    std::ostream& err;
    ConfigFile cfg;
};

// Where a verb reads its records: --records, or --pred joined with --data.
struct RecordSource {
    std::string records, pred, data, labels = "surrogate";

    void add(CLI::App* app) {
        app->add_option("--records", records, "Records CSV (slice_id,uncertainty,predicted_class,reference_class)");
        app->add_option("--pred", pred, "Predictions CSV from predict");
        app->add_option("--data", data, "Dataset joined with --pred for reference labels");
        app->add_option("--labels", labels, "surrogate | manual");
    }
    std::vector<calib::CalRecord> load() const {
        if (!records.empty()) return read_records_csv(records);
        if (pred.empty() || data.empty()) throw ConfigError("need --records, or --pred together with --data");
        return records_from_predictions(pred, data, label_source_from_string(labels));
    }
};

}  // namespace

int run_pipeline(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Contour quality assessment"};
    app.require_subcommand(1);
    std::string config_file;
    app.add_option("--config", config_file, "JSON file with thresholds, T, dropout_rate and paths");

    Ctx ctx{out, err, {}};
    std::function<void()> action;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic case-bundle dataset");
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out_path, shapes = "ellipse,bean,blob";
    int slices_per_subject = 10, raters = 3, grid_rows = 64, grid_cols = 64;
    bool no_balance = false;
    synth->add_option("--n", n, "Number of slices")->required();
    synth->add_option("--seed", seed, "Master seed");
    synth->add_option("--out", out_path, "Output directory")->required();
    synth->add_option("--slices-per-subject", slices_per_subject);
    synth->add_option("--raters", raters, "Simulated raters per slice (0 disables)");
    synth->add_option("--shapes", shapes, "Comma-separated shape catalog");
    synth->add_option("--rows", grid_rows);
    synth->add_option("--cols", grid_cols);
    synth->add_flag("--no-balance", no_balance, "Do not adjust perturbation ranges for class balance");
    synth->callback([&] {
        action = [&] {
            if (slices_per_subject < 1) throw ConfigError("--slices-per-subject must be positive");
            std::vector<synth::ShapeKind> catalog;
            std::stringstream ss(shapes);
            std::string tok;
            while (std::getline(ss, tok, ','))
                if (!tok.empty()) catalog.push_back(synth::shape_from_string(tok));
            synth::DatasetOptions opt;
            opt.grid.rows = grid_rows;
            opt.grid.cols = grid_cols;
            opt.ensure_balance = !no_balance;
            auto ds = synth::generate_dataset(n, catalog, synth::PerturbationParams{}, ctx.cfg.thresholds, seed, opt);
            RaterModel rm;
            rm.raters = raters;
            write_synth_dataset(out_path, ds, slices_per_subject, rm, seed);
            Json j;
            j["n"] = n;
            j["seed"] = seed;
            j["slices_per_subject"] = slices_per_subject;
            j["raters"] = raters;
            j["histogram"] = ds.histogram;
            j["balanced"] = ds.balanced;
            j["thresholds"] = to_json(ctx.cfg.thresholds);
            const auto& p = ds.params_used;
            j["perturbation"] = {{"rotation_deg", {p.rotation_deg.lo, p.rotation_deg.hi}},
                                 {"scale", {p.scale.lo, p.scale.hi}},
                                 {"translation_row_mm", {p.translation_row_mm.lo, p.translation_row_mm.hi}},
                                 {"translation_col_mm", {p.translation_col_mm.lo, p.translation_col_mm.hi}},
                                 {"elastic_grid", p.elastic_grid},
                                 {"elastic_mag_mm", p.elastic_mag_mm}};
            write_json(fs::path(out_path) / "dataset.json", j);
            ctx.out << j.dump() << "\n";
        };
    });

    // metrics
    auto* metrics = app.add_subcommand("metrics", "DSC / SDSC / HD95 of auto against reference masks");
    std::string data;
    double tolerance = geom::kDefaultSurfaceToleranceMm;
    metrics->add_option("--data", data, "Dataset root")->required();
    metrics->add_option("--out", out_path, "Output CSV")->required();
    metrics->add_option("--tolerance", tolerance, "Surface-dice tolerance in mm");
    metrics->callback([&] {
        action = [&] {
            CsvTable t;
            t.header = {"slice_id", "dsc", "sdsc", "hd95_mm", "degenerate"};
            for (const auto& c : load_dataset(data))
                for (const auto& s : c.slices) {
                    if (!s.ref_mask) continue;
                    auto m = geom::compute_metrics(*s.ref_mask, s.auto_mask, tolerance);
                    t.rows.push_back({slice_id(c.subject_id, s.index), format_real(m.dsc), format_real(m.sdsc),
                                      format_real(m.hd95_mm), m.degenerate ? "1" : "0"});
                }
            write_csv(out_path, t);
        };
    });

    // surrogate-label
    auto* surrogate = app.add_subcommand("surrogate-label", "Label slices from their metrics");
    std::string rule_name;
    bool update_bundles = false;
    surrogate->add_option("--data", data, "Dataset root")->required();
    surrogate->add_option("--out", out_path, "Output CSV");
    surrogate->add_option("--rule", rule_name, "max_rule | min_rule (default from thresholds)");
    surrogate->add_option("--tolerance", tolerance, "Surface-dice tolerance in mm");
    surrogate->add_flag("--update-bundles", update_bundles, "Rewrite labels.csv inside each bundle");
    surrogate->callback([&] {
        action = [&] {
            if (out_path.empty() && !update_bundles) throw ConfigError("need --out or --update-bundles");
            auto thr = ctx.cfg.thresholds;
            if (rule_name == "max_rule") thr.aggregation = geom::Aggregation::max_rule;
            else if (rule_name == "min_rule") thr.aggregation = geom::Aggregation::min_rule;
            else if (!rule_name.empty()) throw ConfigError("unknown rule: " + rule_name);
            CsvTable t;
            t.header = {"slice_id", "label", "dsc_class", "sdsc_class", "hd95_class", "dsc", "sdsc", "hd95_mm"};
            auto cases = load_dataset(data);
            for (auto& c : cases) {
                for (auto& s : c.slices) {
                    if (!s.ref_mask) continue;
                    auto m = geom::compute_metrics(*s.ref_mask, s.auto_mask, tolerance);
                    auto pm = geom::per_metric_classes(m, thr);
                    int label = geom::surrogate_label(m, thr);
                    s.metrics = m;
                    s.surrogate_label = label;
                    t.rows.push_back({slice_id(c.subject_id, s.index), std::to_string(label),
                                      std::to_string(pm.dsc), std::to_string(pm.sdsc), std::to_string(pm.hd95),
                                      format_real(m.dsc), format_real(m.sdsc), format_real(m.hd95_mm)});
                }
                if (update_bundles) write_case_bundle(fs::path(data) / c.subject_id, c);
            }
            if (!out_path.empty()) write_csv(out_path, t);
        };
    });

    // train / fine-tune share the training options
    boc::TrainConfig tc;
    std::string val, labels = "surrogate", backbone = "mlp_features", hidden = "32,32", log_path;
    double dropout = -1.0;
    auto add_train_opts = [&](CLI::App* sub) {
        sub->add_option("--data", data, "Training dataset root")->required();
        sub->add_option("--val", val, "Validation dataset root");
        sub->add_option("--labels", labels, "surrogate | manual");
        sub->add_option("--epochs", tc.epochs);
        sub->add_option("--batch-size", tc.batch_size);
        sub->add_option("--seed", tc.seed);
        sub->add_option("--weight-decay", tc.weight_decay);
        sub->add_option("--out", out_path, "Checkpoint path")->required();
        sub->add_option("--log", log_path, "Training log JSON");
        sub->add_option("--tolerance", tolerance, "Surface-dice tolerance in mm for metric features");
    };
    auto* train = app.add_subcommand("train", "Train the ordinal network from scratch");
    add_train_opts(train);
    std::string milestones;
    train->add_option("--lr", tc.base_lr, "Base learning rate");
    train->add_option("--milestones", milestones, "Comma-separated epochs where the rate drops");
    train->add_option("--backbone", backbone, "mlp_features | small_cnn");
    train->add_option("--hidden", hidden, "Comma-separated hidden widths");
    train->add_option("--dropout", dropout, "Dropout rate");

    auto finish_training = [&](const boc::TrainResult& r) {
        boc::save_checkpoint(out_path, r.params);
        for (const auto& w : r.warnings) ctx.err << "warning: " << w << "\n";
        if (!log_path.empty()) write_json(log_path, train_log_json(r));
        Json j;
        j["checkpoint"] = out_path;
        j["best_epoch"] = r.best_epoch;
        j["final_loss"] = r.loss_trace.empty() ? 0.0 : r.loss_trace.back();
        ctx.out << j.dump() << "\n";
    };
    train->callback([&] {
        action = [&] {
            boc::NetworkConfig net;
            net.backbone = boc::backbone_from_string(backbone);
            net.hidden = parse_int_list(hidden);
            net.dropout_rate = dropout >= 0.0 ? dropout : ctx.cfg.dropout_rate;
            if (!milestones.empty()) tc.milestones = parse_int_list(milestones);
            net.validate();
            const auto src = label_source_from_string(labels);
            const auto tr = examples_from(load_dataset(data), net, src, tolerance);
            std::vector<boc::Example> va;
            if (!val.empty()) va = examples_from(load_dataset(val), net, src, tolerance);
            finish_training(boc::train(tc, net, tr, va));
        };
    });

    auto* fine = app.add_subcommand("fine-tune", "Continue training a checkpoint with per-group rates");
    add_train_opts(fine);
    std::string init, lr_groups;
    fine->add_option("--init", init, "Pretrained checkpoint")->required();
    fine->add_option("--lr-groups", lr_groups, "name=rate,... for every layer group")->required();
    fine->add_option("--milestones", milestones, "Comma-separated epochs where the rates drop");
    fine->callback([&] {
        action = [&] {
            auto pre = boc::load_checkpoint(init);
            if (!milestones.empty()) tc.milestones = parse_int_list(milestones);
            const auto src = label_source_from_string(labels);
            const auto tr = examples_from(load_dataset(data), pre.config, src, tolerance);
            std::vector<boc::Example> va;
            if (!val.empty()) va = examples_from(load_dataset(val), pre.config, src, tolerance);
            finish_training(boc::fine_tune(pre, parse_group_rates(lr_groups), tc, tr, va));
        };
    });

    // predict
    auto* predict = app.add_subcommand("predict", "MC-dropout predictions for every slice");
    std::string model, probs_out, pred_out, class_rule = "conditional";
    int T = -1;
    std::uint64_t pred_seed = 0;
    predict->add_option("--model", model, "Checkpoint")->required();
    predict->add_option("--data", data, "Dataset root")->required();
    predict->add_option("--t", T, "Stochastic forward passes");
    predict->add_option("--seed", pred_seed);
    predict->add_option("--rule", class_rule, "conditional | cumulative");
    predict->add_option("--probs-out", probs_out, "Per-pass probabilities CSV")->required();
    predict->add_option("--pred-out", pred_out, "Per-slice predictions CSV")->required();
    predict->add_option("--tolerance", tolerance, "Surface-dice tolerance in mm for metric features");
    predict->callback([&] {
        action = [&] {
            const int passes = T > 0 ? T : ctx.cfg.T;
            auto params = boc::load_checkpoint(model);
            auto preds = predict_dataset(load_dataset(data), params, passes, pred_seed, rule_from_string(class_rule),
                                         tolerance);
            std::vector<ProbRow> probs;
            std::vector<PredictionRow> rows;
            for (const auto& p : preds) {
                probs.push_back({p.slice_id, p.mc});
                rows.push_back({p.slice_id, p.quality});
            }
            write_probs_csv(probs_out, probs);
            write_predictions_csv(pred_out, rows);
        };
    });

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Choose the uncertainty threshold for a target accuracy");
    RecordSource cal_src;
    double target = 0.9;
    std::string records_out;
    int bins = static_cast<int>(calib::kDefaultCurveBins);
    cal_src.add(calibrate);
    calibrate->add_option("--target", target, "Target selective accuracy")->required();
    calibrate->add_option("--out", out_path, "Threshold JSON")->required();
    calibrate->add_option("--records-out", records_out, "Write the joined records CSV");
    calibrate->add_option("--bins", bins, "Curve bins");
    calibrate->callback([&] {
        action = [&] {
            if (bins < 1) throw ConfigError("--bins must be positive");
            auto recs = cal_src.load();
            if (!records_out.empty()) write_records_csv(records_out, recs);
            auto curve = calib::build_curve(recs, static_cast<std::size_t>(bins));
            Json j = to_json(calib::find_threshold(curve, target));
            j["curve_bins"] = curve_bins_json(curve);
            write_json(out_path, j);
            ctx.out << j["tau"].dump() << "\n";
        };
    });

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Selective-prediction report at a threshold");
    RecordSource ev_src;
    std::string threshold_path;
    double tau = -1.0;
    ev_src.add(evaluate);
    evaluate->add_option("--threshold", threshold_path, "Threshold JSON from calibrate");
    evaluate->add_option("--tau", tau, "Explicit threshold");
    evaluate->add_option("--out", out_path, "Report JSON")->required();
    evaluate->add_option("--bins", bins, "Curve bins");
    evaluate->callback([&] {
        action = [&] {
            double t = tau, tgt = 0.0;
            if (!threshold_path.empty()) {
                auto th = threshold_from_json(Json::parse(read_text(threshold_path)));
                if (tau < 0.0) t = th.tau;
                tgt = th.target_accuracy;
            }
            if (t < 0.0) throw ConfigError("need --threshold or --tau");
            auto recs = ev_src.load();
            auto curve = calib::build_curve(recs, static_cast<std::size_t>(std::max(bins, 1)));
            Json j = report_json(calib::selective_evaluate(recs, t), tgt, &curve);
            write_json(out_path, j);
        };
    });

    // serve
    auto* serve = app.add_subcommand("serve", "Run the review HTTP API");
    std::string listen, cal_records, session_log;
    serve->add_option("--data", data, "Dataset root")->required();
    serve->add_option("--model", model, "Checkpoint")->required();
    serve->add_option("--threshold", threshold_path, "Threshold JSON from calibrate")->required();
    serve->add_option("--records", cal_records, "Calibration records CSV for the curve")->required();
    serve->add_option("--log", session_log, "Session event log (JSONL)")->required();
    serve->add_option("--t", T);
    serve->add_option("--seed", pred_seed);
    serve->add_option("--listen", listen, "host:port (default $CQA_LISTEN or 127.0.0.1:8080)");
    serve->callback([&] {
        action = [&] {
            std::string addr = listen;
            if (addr.empty()) {
                const char* env = std::getenv("CQA_LISTEN");
                addr = env && *env ? env : "127.0.0.1:8080";
            }
            auto colon = addr.rfind(':');
            if (colon == std::string::npos) throw ConfigError("listen address must be host:port: " + addr);
            const std::string host = addr.substr(0, colon);
            const int port = parse_int(addr.substr(colon + 1));
            auto cases = load_dataset(data);
            auto params = boc::load_checkpoint(model);
            auto preds = predict_dataset(cases, params, T > 0 ? T : ctx.cfg.T, pred_seed);
            auto th = threshold_from_json(Json::parse(read_text(threshold_path)));
            ReviewService svc(std::move(cases), preds, calib::build_curve(read_records_csv(cal_records)), th,
                              session_log);
            HttpServer server(svc);
            const int bound = server.bind(host, port);
            ctx.err << "listening on " << host << ":" << bound << "\n";
            server.listen();
        };
    });

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        ctx.cfg = load_config(config_path(args));
        app.parse(argv);
        action();
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << error_json("usage_error", e.what()).dump() << "\n";
        return 2;
    } catch (const calib::UnachievableTarget& e) {
        Json j = error_json(e.kind(), e.what());
        j["best_accuracy"] = e.best_accuracy();
        j["best_coverage"] = e.best_coverage();
        err << j.dump() << "\n";
        return 1;
    } catch (const Error& e) {
        err << error_json(e.kind(), e.what()).dump() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << error_json("format_error", e.what()).dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << error_json("internal_error", e.what()).dump() << "\n";
        return 1;
    }
}

}  // namespace cqa::service
