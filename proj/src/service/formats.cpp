#include "cqa/service/formats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cqa/errors.hpp"

namespace cqa::service {

std::string format_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_real(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw FormatError("not a number: '" + s + "'");
    return v;
}

int parse_int(const std::string& s) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) throw FormatError("not an integer: '" + s + "'");
    return static_cast<int>(v);
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw FormatError("CSV column missing: " + name);
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot read " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) throw FormatError(path.string() + ": empty CSV");
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto row = split(line);
        if (row.size() != t.header.size())
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(t.header.size()) + " fields");
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ostringstream os;
    auto put = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << '\n';
    };
    put(table.header);
    for (const auto& r : table.rows) put(r);
    write_text(path, os.str());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot read " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path.string());
    f << text;
}

void write_probs_csv(const std::filesystem::path& path, const std::vector<ProbRow>& rows) {
    CsvTable t{{"slice_id", "pass", "f1", "f2"}, {}};
    for (const auto& r : rows) {
        for (std::size_t p = 0; p < r.mc.pairs.size(); ++p) {
            t.rows.push_back({r.slice_id, std::to_string(p), format_real(r.mc.pairs[p][0]), format_real(r.mc.pairs[p][1])});
        }
    }
    write_csv(path, t);
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows) {
    CsvTable t{{"slice_id", "mean", "variance", "p1_hat", "p2_hat", "P0", "P1", "P2", "predicted_class"}, {}};
    for (const auto& r : rows) {
        const auto& q = r.q;
        t.rows.push_back({r.slice_id, format_real(q.mean), format_real(q.variance), format_real(q.p1_hat),
                          format_real(q.p2_hat), format_real(q.class_probs[0]), format_real(q.class_probs[1]),
                          format_real(q.class_probs[2]), std::to_string(q.predicted_class)});
    }
    write_csv(path, t);
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    const auto c_id = t.column("slice_id"), c_mean = t.column("mean"), c_var = t.column("variance"),
               c_p1 = t.column("p1_hat"), c_p2 = t.column("p2_hat"), c_P0 = t.column("P0"), c_P1 = t.column("P1"),
               c_P2 = t.column("P2"), c_cls = t.column("predicted_class");
    std::vector<PredictionRow> out;
    for (const auto& r : t.rows) {
        PredictionRow p;
        p.slice_id = r[c_id];
        p.q.mean = parse_real(r[c_mean]);
        p.q.variance = parse_real(r[c_var]);
        p.q.p1_hat = parse_real(r[c_p1]);
        p.q.p2_hat = parse_real(r[c_p2]);
        p.q.class_probs = {parse_real(r[c_P0]), parse_real(r[c_P1]), parse_real(r[c_P2])};
        p.q.predicted_class = parse_int(r[c_cls]);
        out.push_back(std::move(p));
    }
    return out;
}

void write_records_csv(const std::filesystem::path& path, const std::vector<calib::CalRecord>& records) {
    const bool probs = !records.empty() &&
        std::all_of(records.begin(), records.end(), [](const calib::CalRecord& r) { return r.class_probs.has_value(); });
    CsvTable t{{"slice_id", "uncertainty", "predicted_class", "reference_class"}, {}};
    if (probs) t.header.insert(t.header.end(), {"P0", "P1", "P2"});
    for (const auto& r : records) {
        std::vector<std::string> row{r.slice_id, format_real(r.uncertainty), std::to_string(r.predicted_class),
                                     std::to_string(r.reference_class)};
        if (probs)
            for (double p : *r.class_probs) row.push_back(format_real(p));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

std::vector<calib::CalRecord> read_records_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    const auto c_id = t.column("slice_id"), c_u = t.column("uncertainty"), c_p = t.column("predicted_class"),
               c_r = t.column("reference_class");
    const bool probs = std::find(t.header.begin(), t.header.end(), "P0") != t.header.end();
    std::vector<calib::CalRecord> out;
    for (const auto& r : t.rows) {
        calib::CalRecord rec{r[c_id], parse_real(r[c_u]), parse_int(r[c_p]), parse_int(r[c_r]), std::nullopt};
        if (probs) rec.class_probs = std::array<double, 3>{parse_real(r[t.column("P0")]), parse_real(r[t.column("P1")]),
                                                           parse_real(r[t.column("P2")])};
        out.push_back(std::move(rec));
    }
    return out;
}

Json to_json(const geom::SurrogateThresholds& t) {
    return Json{{"dsc_hi", t.dsc_hi},
                {"dsc_lo", t.dsc_lo},
                {"sdsc_hi", t.sdsc_hi},
                {"sdsc_lo", t.sdsc_lo},
                {"hd95_good_mm", t.hd95_good_mm},
                {"hd95_major_mm", t.hd95_major_mm},
                {"aggregation", t.aggregation == geom::Aggregation::max_rule ? "max_rule" : "min_rule"}};
}

geom::SurrogateThresholds thresholds_from_json(const Json& j) {
    geom::SurrogateThresholds t;
    t.dsc_hi = j.value("dsc_hi", t.dsc_hi);
    t.dsc_lo = j.value("dsc_lo", t.dsc_lo);
    t.sdsc_hi = j.value("sdsc_hi", t.sdsc_hi);
    t.sdsc_lo = j.value("sdsc_lo", t.sdsc_lo);
    t.hd95_good_mm = j.value("hd95_good_mm", t.hd95_good_mm);
    t.hd95_major_mm = j.value("hd95_major_mm", t.hd95_major_mm);
    const auto agg = j.value("aggregation", std::string("max_rule"));
    if (agg == "max_rule") t.aggregation = geom::Aggregation::max_rule;
    else if (agg == "min_rule") t.aggregation = geom::Aggregation::min_rule;
    else throw ConfigError("unknown aggregation: " + agg);
    t.validate();
    return t;
}

Json to_json(const calib::CurveBin& b) {
    return Json{{"mean_uncertainty", b.mean_uncertainty}, {"accuracy", b.accuracy}, {"count", b.last - b.first}};
}

Json curve_bins_json(const calib::CalibrationCurve& curve) {
    Json a = Json::array();
    for (const auto& b : curve.bins) a.push_back(to_json(b));
    return a;
}

Json to_json(const calib::ThresholdResult& r) {
    return Json{{"target_accuracy", r.target_accuracy},
                {"tau", r.tau},
                {"coverage", r.coverage},
                {"achieved_accuracy", r.achieved_accuracy},
                {"accepted", r.accepted}};
}

calib::ThresholdResult threshold_from_json(const Json& j) {
    try {
        calib::ThresholdResult r;
        r.target_accuracy = j.at("target_accuracy").get<double>();
        r.tau = j.at("tau").get<double>();
        r.coverage = j.value("coverage", 0.0);
        r.achieved_accuracy = j.value("achieved_accuracy", 0.0);
        r.accepted = j.value("accepted", std::size_t{0});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad threshold JSON: ") + e.what());
    }
}

Json to_json(const calib::CalRecord& r) {
    Json j{{"slice_id", r.slice_id},
           {"uncertainty", r.uncertainty},
           {"predicted_class", r.predicted_class},
           {"reference_class", r.reference_class}};
    return j;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json report_json(const calib::SelectiveReport& rep, double target_accuracy, const calib::CalibrationCurve* curve) {
    Json per_class = Json::object();
    for (std::size_t j = 0; j < 3; ++j) {
        const auto& c = rep.per_class[j];
        per_class[std::to_string(j)] = Json{{"precision", opt(c.precision)},
                                            {"recall", opt(c.recall)},
                                            {"f1", opt(c.f1)},
                                            {"auc", opt(c.auc)},
                                            {"weighted_precision", opt(c.weighted_precision)},
                                            {"weighted_recall", opt(c.weighted_recall)},
                                            {"weighted_f1", opt(c.weighted_f1)},
                                            {"support", c.support}};
    }
    Json confusion = Json::array();
    for (const auto& row : rep.confusion) confusion.push_back(Json(row));
    Json bad = Json::array();
    for (const auto& r : rep.bad_cases) bad.push_back(to_json(r));
    Json j{{"target_accuracy", target_accuracy},
           {"tau", rep.tau},
           {"coverage", rep.coverage},
           {"selective_accuracy", opt(rep.selective_accuracy)},
           {"overall_accuracy", opt(rep.overall_accuracy)},
           {"total", rep.total},
           {"accepted", rep.accepted},
           {"per_class", per_class},
           {"confusion", confusion},
           {"bad_cases", bad},
           {"curve_bins", curve ? curve_bins_json(*curve) : Json::array()},
           {"metric_notes",
            "precision/recall/f1: one-vs-rest on accepted records; weighted_*: support-weighted mean of the "
            "positive and negative one-vs-rest sides; auc: rank statistic on P_j over all records"}};
    return j;
}

Json verdict_json(const decision::Verdict& v, double variance, double tau) {
    Json j{{"status", decision::to_string(v.status)}};
    if (v.predicted_class) j["predicted_class"] = *v.predicted_class;
    j["warning"] = v.warning;
    j["message"] = v.message;
    j["variance"] = variance;
    j["tau"] = tau;
    return j;
}

Json error_json(const std::string& kind, const std::string& message) {
    return Json{{"error", kind}, {"message", message}};
}

}  // namespace cqa::service
