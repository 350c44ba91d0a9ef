#pragma once
// Review-workflow HTTP API over a loaded dataset, per-slice predictions, the
// calibration curve and the current threshold. State changes go through the
// session event log, which is replayed on construction.
//
//   GET  /api/cases
//   GET  /api/cases/{cid}/slices/{n}
//   GET  /api/cases/{cid}/slices/{n}/image
//   POST /api/cases/{cid}/slices/{n}/assessment   {rater_id, assessed_class[, expected_seq]}
//   GET  /api/calibration
//   POST /api/threshold                           {target_accuracy}

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "cqa/calibration.hpp"
#include "cqa/decision.hpp"
#include "cqa/service/bundle.hpp"
#include "cqa/service/event_log.hpp"
#include "cqa/service/pipeline.hpp"

namespace cqa::service {

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

class ReviewService {
public:
    // `predictions` must cover every slice of `cases`.
    ReviewService(std::vector<CaseBundle> cases, const std::vector<SlicePrediction>& predictions,
                  calib::CalibrationCurve curve, calib::ThresholdResult threshold,
                  const std::filesystem::path& log_path, EventLog::Clock clock = utc_timestamp);

    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body = {});

    calib::ThresholdResult threshold() const;
    std::size_t event_count() const;

private:
    struct SliceState {
        std::size_t case_index = 0;
        std::size_t slice_index = 0;
        std::string id;
        uq::PredictedQuality prediction;
        std::optional<decision::ClinicianAssessment> assessment;
        std::uint64_t seq = 0;
    };

    HttpResponse list_cases() const;
    HttpResponse get_slice(const SliceState& s) const;
    HttpResponse get_image(const SliceState& s) const;
    HttpResponse post_assessment(SliceState& s, const std::string& body);
    HttpResponse get_calibration() const;
    HttpResponse post_threshold(const std::string& body);
    SliceState* find_slice(const std::string& case_id, const std::string& index);
    void apply(const SessionEvent& e);

    std::vector<CaseBundle> cases_;
    std::vector<SliceState> slices_;
    std::map<std::pair<std::string, int>, std::size_t> slice_lookup_;
    calib::CalibrationCurve curve_;
    calib::ThresholdResult threshold_;
    EventLog log_;
    mutable std::shared_mutex mutex_;
};

// Thin httplib front end delegating to ReviewService::handle.
class HttpServer {
public:
    explicit HttpServer(ReviewService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    void listen();       // blocks until stop()
    void start();        // listen() on a background thread
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cqa::service
