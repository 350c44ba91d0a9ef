#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>
#include <thread>

#include <httplib.h>

#include "cqa/service/formats.hpp"
#include "cqa/service/http_api.hpp"
#include "cqa/service/png_io.hpp"
#include "cqa/synthgen.hpp"

namespace fs = std::filesystem;
using namespace cqa;
using namespace cqa::service;

namespace {

// Slice n of each case: even n confident class 1, odd n abstaining.
struct Fixture {
    fs::path dir;
    std::vector<CaseBundle> cases;
    std::vector<SlicePrediction> preds;
    calib::CalibrationCurve curve;
    calib::ThresholdResult threshold{0.9, 0.1, 0.4, 1.0, 2};

    explicit Fixture(const std::string& name) {
        dir = fs::temp_directory_path() / ("cqa_http_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
        auto ds = synth::generate_dataset(8, {synth::ShapeKind::ellipse}, synth::PerturbationParams{}, {}, 4);
        cases = bundles_from_samples(ds.samples, 4, RaterModel{}, 4);
        for (const auto& c : cases)
            for (const auto& s : c.slices) {
                SlicePrediction p;
                p.slice_id = slice_id(c.subject_id, s.index);
                p.mc.pairs.assign(20, s.index % 2 == 0 ? std::array<double, 2>{0.99, 0.01}
                                                       : std::array<double, 2>{0.5, 0.5});
                p.quality = uq::summarize(p.mc);
                preds.push_back(p);
            }
        curve = calib::build_curve(read_records_csv(CQA_FIXTURE_DIR "/five_record.csv"));
    }
    ReviewService make(EventLog::Clock clock = [] { return std::string("2026-01-01T00:00:00.000Z"); }) {
        return ReviewService(cases, preds, curve, threshold, dir / "session.jsonl", std::move(clock));
    }
};

Json body(const HttpResponse& r) { return Json::parse(r.body); }

}  // namespace

TEST_CASE("case list") {
    Fixture f("list");
    auto svc = f.make();
    auto r = svc.handle("GET", "/api/cases");
    CHECK(r.status == 200);
    CHECK(r.content_type == "application/json");
    auto j = body(r);
    REQUIRE(j.size() == 2);
    CHECK(j[0]["case_id"] == "subj_0000");
    CHECK(j[0]["slice_count"] == 4);
    CHECK(j[0]["assessed_count"] == 0);
    CHECK(j[0]["abstain_count"] == 2);
}

TEST_CASE("slice view") {
    Fixture f("slice");
    auto svc = f.make();
    auto j = body(svc.handle("GET", "/api/cases/subj_0000/slices/0"));
    CHECK(j["slice_id"] == "subj_0000:0");
    CHECK(j["verdict"]["status"] == "confident");
    CHECK(j["verdict"]["predicted_class"] == 1);
    CHECK(j["verdict"]["warning"] == false);
    CHECK(j["assessment"].is_null());
    CHECK(j["seq"] == 0);
    REQUIRE(j["contours"].size() >= 1);
    CHECK(j["contours"][0][0].size() == 2);
    CHECK(j["image_url"] == "/api/cases/subj_0000/slices/0/image");

    auto a = body(svc.handle("GET", "/api/cases/subj_0000/slices/1"));
    CHECK(a["verdict"]["status"] == "abstain");
    CHECK(a["verdict"]["message"] == decision::kAbstainMessage);

    auto img = svc.handle("GET", "/api/cases/subj_0000/slices/0/image");
    CHECK(img.status == 200);
    CHECK(img.content_type == "image/png");
    auto px = decode_png(std::vector<std::uint8_t>(img.body.begin(), img.body.end()));
    CHECK(px.rows == 64);
    CHECK(px.cols == 64);
}

TEST_CASE("not found and bad methods") {
    Fixture f("errors");
    auto svc = f.make();
    CHECK(svc.handle("GET", "/api/cases/nobody/slices/0").status == 404);
    CHECK(svc.handle("GET", "/api/cases/subj_0000/slices/9").status == 404);
    CHECK(svc.handle("GET", "/api/cases/subj_0000/slices/x").status == 404);
    CHECK(svc.handle("POST", "/api/cases/nobody/slices/0/assessment", R"({"rater_id":"r","assessed_class":1})")
              .status == 404);
    CHECK(svc.handle("GET", "/api/nothing").status == 404);
    CHECK(svc.handle("POST", "/api/cases").status == 405);
    auto e = body(svc.handle("GET", "/api/cases/nobody/slices/0"));
    CHECK(e.contains("error"));
    CHECK(e.contains("message"));
}

TEST_CASE("assessments") {
    Fixture f("assess");
    auto svc = f.make();
    const std::string url = "/api/cases/subj_0000/slices/0/assessment";

    SUBCASE("clinician class 2 against confident class 1 warns") {
        auto r = svc.handle("POST", url, R"({"rater_id":"dr_a","assessed_class":2})");
        CHECK(r.status == 200);
        auto j = body(r);
        CHECK(j["verdict"]["warning"] == true);
        CHECK(j["verdict"]["message"] == decision::kWarningMessage);
        CHECK(j["seq"] == 2);
        CHECK(svc.event_count() == 2);
        auto cases = body(svc.handle("GET", "/api/cases"));
        CHECK(cases[0]["assessed_count"] == 1);
        CHECK(cases[0]["warning_count"] == 1);
    }
    SUBCASE("agreement does not warn") {
        auto j = body(svc.handle("POST", url, R"({"rater_id":"dr_a","assessed_class":1})"));
        CHECK(j["verdict"]["warning"] == false);
    }
    SUBCASE("abstained slice never warns") {
        auto j = body(svc.handle("POST", "/api/cases/subj_0000/slices/1/assessment",
                                 R"({"rater_id":"dr_a","assessed_class":2})"));
        CHECK(j["verdict"]["status"] == "abstain");
        CHECK(j["verdict"]["warning"] == false);
    }
    SUBCASE("invalid bodies") {
        CHECK(svc.handle("POST", url, R"({"rater_id":"dr_a","assessed_class":5})").status == 422);
        CHECK(svc.handle("POST", url, R"({"rater_id":"dr_a","assessed_class":-1})").status == 422);
        CHECK(svc.handle("POST", url, R"({"rater_id":"dr_a","assessed_class":1.5})").status == 422);
        CHECK(svc.handle("POST", url, R"({"rater_id":"dr_a"})").status == 422);
        CHECK(svc.handle("POST", url, R"({"assessed_class":1})").status == 422);
        CHECK(svc.handle("POST", url, "{oops").status == 400);
        CHECK(svc.event_count() == 0);
    }
    SUBCASE("stale sequence number conflicts") {
        CHECK(svc.handle("POST", url, R"({"rater_id":"a","assessed_class":1,"expected_seq":0})").status == 200);
        auto r = svc.handle("POST", url, R"({"rater_id":"b","assessed_class":2,"expected_seq":0})");
        CHECK(r.status == 409);
        CHECK(body(r)["seq"] == 2);
        CHECK(svc.handle("POST", url, R"({"rater_id":"b","assessed_class":2,"expected_seq":2})").status == 200);
        CHECK(svc.event_count() == 4);
    }
}

TEST_CASE("threshold changes") {
    Fixture f("threshold");
    auto svc = f.make();
    auto cal = body(svc.handle("GET", "/api/calibration"));
    CHECK(cal["threshold"]["tau"] == 0.1);
    CHECK(cal["curve_bins"].size() == 5);

    auto r = svc.handle("POST", "/api/threshold", R"({"target_accuracy":0.7})");
    CHECK(r.status == 200);
    CHECK(body(r)["tau"] == 0.20);
    CHECK(svc.threshold().tau == 0.20);
    CHECK(body(svc.handle("GET", "/api/calibration"))["threshold"]["target_accuracy"] == 0.7);

    CHECK(svc.handle("POST", "/api/threshold", R"({"target_accuracy":1.5})").status == 422);
    CHECK(svc.handle("POST", "/api/threshold", R"({"target_accuracy":"high"})").status == 422);
    CHECK(svc.event_count() == 1);
}

TEST_CASE("unachievable threshold target") {
    Fixture f("unreach");
    std::vector<calib::CalRecord> bad{{"a", 0.1, 0, 1, {}}, {"b", 0.2, 1, 1, {}}};
    f.curve = calib::build_curve(bad);
    auto svc = f.make();
    auto r = svc.handle("POST", "/api/threshold", R"({"target_accuracy":0.9})");
    CHECK(r.status == 422);
    auto j = body(r);
    CHECK(j["error"] == "unachievable_target");
    CHECK(j["best_accuracy"] == 0.5);
}

TEST_CASE("replaying the log reproduces every response") {
    Fixture f("replay");
    std::vector<std::string> paths{"/api/cases", "/api/calibration"};
    for (const auto& c : f.cases)
        for (const auto& s : c.slices) paths.push_back("/api/cases/" + c.subject_id + "/slices/" + std::to_string(s.index));
    std::vector<std::string> before;
    {
        auto svc = f.make();
        svc.handle("POST", "/api/cases/subj_0000/slices/0/assessment", R"({"rater_id":"a","assessed_class":2})");
        svc.handle("POST", "/api/threshold", R"({"target_accuracy":0.7})");
        svc.handle("POST", "/api/cases/subj_0001/slices/2/assessment", R"({"rater_id":"b","assessed_class":0})");
        svc.handle("POST", "/api/cases/subj_0000/slices/0/assessment", R"({"rater_id":"c","assessed_class":1})");
        for (const auto& p : paths) before.push_back(svc.handle("GET", p).body);
    }
    auto again = f.make();
    for (std::size_t i = 0; i < paths.size(); ++i) {
        CAPTURE(paths[i]);
        CHECK(again.handle("GET", paths[i]).body == before[i]);
    }
}

TEST_CASE("concurrent assessments are each logged once") {
    Fixture f("concurrent");
    std::vector<std::thread> threads;
    {
        auto svc = f.make();
        for (int t = 0; t < 8; ++t) {
            threads.emplace_back([&svc, t] {
                const std::string cid = t < 4 ? "subj_0000" : "subj_0001";
                const std::string url = "/api/cases/" + cid + "/slices/" + std::to_string(t % 4) + "/assessment";
                for (int k = 0; k < 5; ++k) {
                    Json b{{"rater_id", "r" + std::to_string(t) + "_" + std::to_string(k)}, {"assessed_class", k % 3}};
                    auto r = svc.handle("POST", url, b.dump());
                    CHECK(r.status == 200);
                    svc.handle("GET", "/api/cases");
                }
            });
        }
        for (auto& th : threads) th.join();
        CHECK(svc.event_count() == 80);
    }
    EventLog log(f.dir / "session.jsonl");
    std::set<std::uint64_t> seqs;
    std::set<std::string> raters;
    for (const auto& e : log.events()) {
        seqs.insert(e.seq);
        if (e.kind == EventKind::assessment) CHECK(raters.insert(e.payload["rater_id"].get<std::string>()).second);
    }
    CHECK(seqs.size() == 80);
    CHECK(raters.size() == 40);
}

TEST_CASE("served over a socket") {
    Fixture f("socket");
    auto svc = f.make();
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    server.start();
    httplib::Client cli("127.0.0.1", port);
    auto list = cli.Get("/api/cases");
    REQUIRE(list);
    CHECK(list->status == 200);
    CHECK(Json::parse(list->body).size() == 2);
    auto post = cli.Post("/api/cases/subj_0000/slices/2/assessment", R"({"rater_id":"x","assessed_class":2})",
                         "application/json");
    REQUIRE(post);
    CHECK(post->status == 200);
    CHECK(Json::parse(post->body)["verdict"]["warning"] == true);
    auto bad = cli.Post("/api/cases/subj_0000/slices/2/assessment", R"({"rater_id":"x","assessed_class":5})",
                        "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    auto img = cli.Get("/api/cases/subj_0000/slices/2/image");
    REQUIRE(img);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    server.stop();
}
