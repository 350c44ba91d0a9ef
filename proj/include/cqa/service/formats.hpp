#pragma once
// Text formats shared by the CLI and the HTTP API.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqa/calibration.hpp"
#include "cqa/decision.hpp"
#include "cqa/geometry.hpp"
#include "cqa/uq.hpp"

namespace cqa::service {

using Json = nlohmann::ordered_json;

// Shortest round-trip decimal form ("%.17g"), "inf" for +infinity.
std::string format_real(double v);
double parse_real(const std::string& s);
int parse_int(const std::string& s);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name; FormatError when missing.
    std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// slice_id,pass,f1,f2
struct ProbRow {
    std::string slice_id;
    uq::McProbs mc;
};
void write_probs_csv(const std::filesystem::path& path, const std::vector<ProbRow>& rows);

// slice_id,mean,variance,p1_hat,p2_hat,P0,P1,P2,predicted_class
struct PredictionRow {
    std::string slice_id;
    uq::PredictedQuality q;
};
void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);

// slice_id,uncertainty,predicted_class,reference_class[,P0,P1,P2]
void write_records_csv(const std::filesystem::path& path, const std::vector<calib::CalRecord>& records);
std::vector<calib::CalRecord> read_records_csv(const std::filesystem::path& path);

Json to_json(const geom::SurrogateThresholds& t);
geom::SurrogateThresholds thresholds_from_json(const Json& j);
Json to_json(const calib::CurveBin& b);
Json curve_bins_json(const calib::CalibrationCurve& curve);
Json to_json(const calib::ThresholdResult& r);
calib::ThresholdResult threshold_from_json(const Json& j);
Json to_json(const calib::CalRecord& r);
Json report_json(const calib::SelectiveReport& rep, double target_accuracy, const calib::CalibrationCurve* curve);
Json verdict_json(const decision::Verdict& v, double variance, double tau);

// {"error": kind, "message": ...}
Json error_json(const std::string& kind, const std::string& message);

}  // namespace cqa::service
