#pragma once
// Append-only JSONL session log. One event per line:
//   {"seq": n, "timestamp": "...", "kind": "assessment" | "verdict" | "threshold_change", "payload": {...}}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "cqa/service/formats.hpp"

namespace cqa::service {

enum class EventKind { assessment, verdict, threshold_change };
std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct SessionEvent {
    std::uint64_t seq = 0;
    std::string timestamp;
    EventKind kind = EventKind::assessment;
    Json payload;
};

Json to_json(const SessionEvent& e);
SessionEvent event_from_json(const Json& j);

// ISO-8601 UTC with millisecond precision.
std::string utc_timestamp();

class EventLog {
public:
    using Clock = std::function<std::string()>;

    // Opens (creating if absent) and reads existing events; sequence numbers
    // must be strictly increasing or FormatError is thrown.
    explicit EventLog(std::filesystem::path path, Clock clock = utc_timestamp);

    const std::vector<SessionEvent>& events() const { return events_; }
    std::uint64_t last_seq() const { return events_.empty() ? 0 : events_.back().seq; }

    // Assigns the next sequence number, writes and flushes the line. Callers
    // serialize appends.
    const SessionEvent& append(EventKind kind, Json payload);

private:
    std::filesystem::path path_;
    Clock clock_;
    std::vector<SessionEvent> events_;
    std::ofstream out_;
};

}  // namespace cqa::service
