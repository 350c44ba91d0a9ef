#include "cqa/service/event_log.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "cqa/errors.hpp"

namespace cqa::service {

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::assessment: return "assessment";
        case EventKind::verdict: return "verdict";
        case EventKind::threshold_change: return "threshold_change";
    }
    return "assessment";
}

EventKind event_kind_from_string(const std::string& s) {
    if (s == "assessment") return EventKind::assessment;
    if (s == "verdict") return EventKind::verdict;
    if (s == "threshold_change") return EventKind::threshold_change;
    throw FormatError("unknown event kind: " + s);
}

Json to_json(const SessionEvent& e) {
    return Json{{"seq", e.seq}, {"timestamp", e.timestamp}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

SessionEvent event_from_json(const Json& j) {
    try {
        SessionEvent e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.timestamp = j.at("timestamp").get<std::string>();
        e.kind = event_kind_from_string(j.at("kind").get<std::string>());
        e.payload = j.at("payload");
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("bad session event: ") + ex.what());
    }
}

std::string utc_timestamp() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const auto secs = system_clock::to_time_t(now);
    const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

EventLog::EventLog(std::filesystem::path path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
    if (std::filesystem::exists(path_)) {
        std::ifstream in(path_);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            SessionEvent e;
            try {
                e = event_from_json(Json::parse(line));
            } catch (const nlohmann::json::exception& ex) {
                throw FormatError(path_.string() + ":" + std::to_string(lineno) + ": " + ex.what());
            }
            if (e.seq <= last_seq())
                throw FormatError(path_.string() + ":" + std::to_string(lineno) + ": sequence numbers must increase");
            events_.push_back(std::move(e));
        }
    } else if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw FormatError("cannot open event log " + path_.string());
}

const SessionEvent& EventLog::append(EventKind kind, Json payload) {
    SessionEvent e{last_seq() + 1, clock_(), kind, std::move(payload)};
    out_ << to_json(e).dump() << '\n';
    out_.flush();
    if (!out_) throw FormatError("failed to append to " + path_.string());
    events_.push_back(std::move(e));
    return events_.back();
}

}  // namespace cqa::service
