#include "cqa/service/http_api.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <regex>
#include <thread>

#include <httplib.h>

#include "cqa/errors.hpp"
#include "cqa/service/png_io.hpp"

namespace cqa::service {

namespace {

HttpResponse json_response(int status, const Json& j) {
    return {status, "application/json", j.dump()};
}

HttpResponse error_response(int status, const std::string& kind, const std::string& message) {
    return json_response(status, error_json(kind, message));
}

Json assessment_json(const decision::ClinicianAssessment& a) {
    Json j;
    j["rater_id"] = a.rater_id;
    j["assessed_class"] = a.assessed_class;
    j["timestamp"] = a.timestamp;
    return j;
}

Json contours_json(const geom::MaskSlice& mask) {
    Json out = Json::array();
    for (const auto& contour : geom::trace_contours(mask)) {
        Json poly = Json::array();
        for (const auto& p : contour) poly.push_back(Json::array({p.row, p.col}));
        out.push_back(std::move(poly));
    }
    return out;
}

}  // namespace

ReviewService::ReviewService(std::vector<CaseBundle> cases, const std::vector<SlicePrediction>& predictions,
                             calib::CalibrationCurve curve, calib::ThresholdResult threshold,
                             const std::filesystem::path& log_path, EventLog::Clock clock)
    : cases_(std::move(cases)),
      curve_(std::move(curve)),
      threshold_(threshold),
      log_(log_path, std::move(clock)) {
    std::map<std::string, const SlicePrediction*> by_id;
    for (const auto& p : predictions) by_id[p.slice_id] = &p;
    for (std::size_t c = 0; c < cases_.size(); ++c) {
        for (std::size_t s = 0; s < cases_[c].slices.size(); ++s) {
            SliceState st;
            st.case_index = c;
            st.slice_index = s;
            st.id = slice_id(cases_[c].subject_id, cases_[c].slices[s].index);
            auto it = by_id.find(st.id);
            if (it == by_id.end()) throw ConfigError("no prediction for slice " + st.id);
            st.prediction = it->second->quality;
            slice_lookup_[{cases_[c].subject_id, cases_[c].slices[s].index}] = slices_.size();
            slices_.push_back(std::move(st));
        }
    }
    for (const auto& e : log_.events()) apply(e);
}

void ReviewService::apply(const SessionEvent& e) {
    if (e.kind == EventKind::threshold_change) {
        threshold_ = threshold_from_json(e.payload);
        return;
    }
    auto it = slice_lookup_.find({e.payload.at("case_id").get<std::string>(),
                                  e.payload.at("slice_index").get<int>()});
    if (it == slice_lookup_.end()) return;  // slice no longer in the dataset
    SliceState& s = slices_[it->second];
    if (e.kind == EventKind::assessment) {
        decision::ClinicianAssessment a;
        a.slice_id = s.id;
        a.rater_id = e.payload.at("rater_id").get<std::string>();
        a.assessed_class = e.payload.at("assessed_class").get<int>();
        a.timestamp = e.timestamp;
        s.assessment = a;
    }
    s.seq = e.seq;
}

calib::ThresholdResult ReviewService::threshold() const {
    std::shared_lock lock(mutex_);
    return threshold_;
}

std::size_t ReviewService::event_count() const {
    std::shared_lock lock(mutex_);
    return log_.events().size();
}

ReviewService::SliceState* ReviewService::find_slice(const std::string& case_id, const std::string& index) {
    int n = 0;
    try {
        n = parse_int(index);
    } catch (const Error&) {
        return nullptr;
    }
    auto it = slice_lookup_.find({case_id, n});
    return it == slice_lookup_.end() ? nullptr : &slices_[it->second];
}

HttpResponse ReviewService::handle(const std::string& method, const std::string& path, const std::string& body) {
    static const std::regex slice_re(R"(^/api/cases/([^/]+)/slices/([^/]+)(/image|/assessment)?$)");
    try {
        std::smatch m;
        if (path == "/api/cases") {
            if (method != "GET") return error_response(405, "method_not_allowed", method + " " + path);
            std::shared_lock lock(mutex_);
            return list_cases();
        }
        if (path == "/api/calibration") {
            if (method != "GET") return error_response(405, "method_not_allowed", method + " " + path);
            std::shared_lock lock(mutex_);
            return get_calibration();
        }
        if (path == "/api/threshold") {
            if (method != "POST") return error_response(405, "method_not_allowed", method + " " + path);
            std::unique_lock lock(mutex_);
            return post_threshold(body);
        }
        if (std::regex_match(path, m, slice_re)) {
            const std::string suffix = m[3].str();
            const bool is_post = suffix == "/assessment";
            if (method != (is_post ? "POST" : "GET"))
                return error_response(405, "method_not_allowed", method + " " + path);
            if (is_post) {
                std::unique_lock lock(mutex_);
                SliceState* s = find_slice(m[1].str(), m[2].str());
                if (!s) return error_response(404, "not_found", "unknown case or slice: " + path);
                return post_assessment(*s, body);
            }
            std::shared_lock lock(mutex_);
            SliceState* s = find_slice(m[1].str(), m[2].str());
            if (!s) return error_response(404, "not_found", "unknown case or slice: " + path);
            return suffix == "/image" ? get_image(*s) : get_slice(*s);
        }
        return error_response(404, "not_found", "no route for " + path);
    } catch (const Error& e) {
        return error_response(500, e.kind(), e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal_error", e.what());
    }
}

HttpResponse ReviewService::list_cases() const {
    Json out = Json::array();
    std::size_t k = 0;
    for (const auto& c : cases_) {
        int assessed = 0, warnings = 0, abstains = 0;
        for (std::size_t i = 0; i < c.slices.size(); ++i, ++k) {
            const SliceState& s = slices_[k];
            auto v = decision::adjudicate(s.prediction, threshold_.tau, s.assessment);
            if (s.assessment) ++assessed;
            if (v.warning) ++warnings;
            if (v.status == decision::Status::abstain) ++abstains;
        }
        Json j;
        j["case_id"] = c.subject_id;
        j["slice_count"] = c.slices.size();
        j["assessed_count"] = assessed;
        j["abstain_count"] = abstains;
        j["warning_count"] = warnings;
        out.push_back(std::move(j));
    }
    return json_response(200, out);
}

HttpResponse ReviewService::get_slice(const SliceState& s) const {
    const CaseBundle& c = cases_[s.case_index];
    const BundleSlice& b = c.slices[s.slice_index];
    Json j;
    j["case_id"] = c.subject_id;
    j["slice_index"] = b.index;
    j["slice_id"] = s.id;
    j["rows"] = b.auto_mask.rows();
    j["cols"] = b.auto_mask.cols();
    j["spacing_mm"] = Json::array({c.spacing.row_mm, c.spacing.col_mm});
    j["image_url"] = b.image ? Json("/api/cases/" + c.subject_id + "/slices/" + std::to_string(b.index) + "/image")
                             : Json(nullptr);
    j["contours"] = contours_json(b.auto_mask);
    j["prediction"] = {{"mean", s.prediction.mean},
                       {"variance", s.prediction.variance},
                       {"class_probs", s.prediction.class_probs},
                       {"predicted_class", s.prediction.predicted_class}};
    j["verdict"] = verdict_json(decision::adjudicate(s.prediction, threshold_.tau, s.assessment),
                                s.prediction.variance, threshold_.tau);
    j["assessment"] = s.assessment ? assessment_json(*s.assessment) : Json(nullptr);
    j["seq"] = s.seq;
    return json_response(200, j);
}

HttpResponse ReviewService::get_image(const SliceState& s) const {
    const BundleSlice& b = cases_[s.case_index].slices[s.slice_index];
    if (!b.image) return error_response(404, "not_found", "slice " + s.id + " has no image");
    GrayPixels px;
    px.rows = b.image->rows;
    px.cols = b.image->cols;
    px.data.reserve(b.image->values.size());
    for (double v : b.image->values)
        px.data.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    auto bytes = encode_png(px);
    return {200, "image/png", std::string(bytes.begin(), bytes.end())};
}

HttpResponse ReviewService::post_assessment(SliceState& s, const std::string& body) {
    Json req = Json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_response(400, "bad_request", "body is not a JSON object");
    if (!req.contains("rater_id") || !req["rater_id"].is_string() || req["rater_id"].get<std::string>().empty())
        return error_response(422, "invalid_assessment", "rater_id must be a non-empty string");
    if (!req.contains("assessed_class") || !req["assessed_class"].is_number_integer())
        return error_response(422, "invalid_assessment", "assessed_class must be an integer in {0, 1, 2}");
    const auto cls = req["assessed_class"].get<long long>();
    if (cls < 0 || cls > 2)
        return error_response(422, "invalid_assessment", "assessed_class must be an integer in {0, 1, 2}");
    if (req.contains("expected_seq")) {
        if (!req["expected_seq"].is_number_unsigned())
            return error_response(422, "invalid_assessment", "expected_seq must be a non-negative integer");
        if (req["expected_seq"].get<std::uint64_t>() != s.seq) {
            Json e = error_json("conflict", "slice " + s.id + " changed since seq " +
                                                std::to_string(req["expected_seq"].get<std::uint64_t>()));
            e["seq"] = s.seq;
            return json_response(409, e);
        }
    }
    const CaseBundle& c = cases_[s.case_index];
    Json payload;
    payload["case_id"] = c.subject_id;
    payload["slice_index"] = c.slices[s.slice_index].index;
    payload["slice_id"] = s.id;
    payload["rater_id"] = req["rater_id"];
    payload["assessed_class"] = cls;
    const SessionEvent& ae = log_.append(EventKind::assessment, payload);
    apply(ae);

    auto v = decision::adjudicate(s.prediction, threshold_.tau, s.assessment);
    Json vj = verdict_json(v, s.prediction.variance, threshold_.tau);
    Json vp;
    vp["case_id"] = c.subject_id;
    vp["slice_index"] = c.slices[s.slice_index].index;
    vp["slice_id"] = s.id;
    vp["verdict"] = vj;
    const SessionEvent& ve = log_.append(EventKind::verdict, vp);
    apply(ve);

    Json out;
    out["slice_id"] = s.id;
    out["verdict"] = vj;
    out["assessment"] = assessment_json(*s.assessment);
    out["seq"] = s.seq;
    return json_response(200, out);
}

HttpResponse ReviewService::get_calibration() const {
    Json j;
    j["threshold"] = to_json(threshold_);
    j["total"] = curve_.records.size();
    j["curve_bins"] = curve_bins_json(curve_);
    return json_response(200, j);
}

HttpResponse ReviewService::post_threshold(const std::string& body) {
    Json req = Json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_response(400, "bad_request", "body is not a JSON object");
    if (!req.contains("target_accuracy") || !req["target_accuracy"].is_number())
        return error_response(422, "invalid_threshold", "target_accuracy must be a number in (0, 1]");
    const double target = req["target_accuracy"].get<double>();
    if (!(target > 0.0 && target <= 1.0))
        return error_response(422, "invalid_threshold", "target_accuracy must be a number in (0, 1]");
    calib::ThresholdResult r;
    try {
        r = calib::find_threshold(curve_, target);
    } catch (const calib::UnachievableTarget& e) {
        Json err = error_json(e.kind(), e.what());
        err["best_accuracy"] = e.best_accuracy();
        err["best_coverage"] = e.best_coverage();
        return json_response(422, err);
    } catch (const Error& e) {
        return error_response(422, e.kind(), e.what());
    }
    const SessionEvent& ev = log_.append(EventKind::threshold_change, to_json(r));
    apply(ev);
    Json out = to_json(threshold_);
    out["seq"] = ev.seq;
    return json_response(200, out);
}

struct HttpServer::Impl {
    ReviewService& service;
    httplib::Server server;
    std::thread thread;
    explicit Impl(ReviewService& s) : service(s) {}
};

HttpServer::HttpServer(ReviewService& service) : impl_(std::make_unique<Impl>(service)) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        HttpResponse r = impl_->service.handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    impl_->server.Get(R"(/api/.*)", forward);
    impl_->server.Post(R"(/api/.*)", forward);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw ConfigError("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void HttpServer::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace cqa::service
