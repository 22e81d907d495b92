/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef SEETHROUGH_EVENT_LOG_HPP_
#define SEETHROUGH_EVENT_LOG_HPP_

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "seethrough/error.hpp"
#include "seethrough/gaze_engine.hpp"

namespace seethrough {

// One line of the JSONL event log:
//   {"t_us":int,"type":"open"|"close"|"exclusion_start"|"exclusion_end","a":id,"b":id|null}
// Episode lines carry the pair in (a, b); exclusion lines carry the member in
// a and null in b.
struct LogEvent {
    enum class Type { Open, Close, ExclusionStart, ExclusionEnd };

    Micros t{0};
    Type type = Type::Open;
    ParticipantId a;
    std::optional<ParticipantId> b;

    bool operator==(const LogEvent&) const = default;
};

constexpr std::string_view to_string(LogEvent::Type type) noexcept {
    switch (type) {
        case LogEvent::Type::Open: return "open";
        case LogEvent::Type::Close: return "close";
        case LogEvent::Type::ExclusionStart: return "exclusion_start";
        case LogEvent::Type::ExclusionEnd: return "exclusion_end";
    }
    return "open";
}

inline std::optional<LogEvent::Type> log_event_type_from(std::string_view s) {
    for (auto t : {LogEvent::Type::Open, LogEvent::Type::Close, LogEvent::Type::ExclusionStart,
                   LogEvent::Type::ExclusionEnd}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    return std::nullopt;
}

inline nlohmann::ordered_json to_json(const LogEvent& e) {
    nlohmann::ordered_json j;
    j["t_us"] = e.t.count();
    j["type"] = std::string(to_string(e.type));
    j["a"] = e.a.str();
    j["b"] = e.b ? nlohmann::ordered_json(e.b->str()) : nlohmann::ordered_json(nullptr);
    return j;
}

inline std::string to_json_line(const LogEvent& e) {
    return to_json(e).dump() + "\n";
}

inline LogEvent log_event_from_json(const nlohmann::ordered_json& j) {
    auto fail = [](const std::string& why) { throw Error(Errc::InvalidLog, why); };
    if (!j.is_object()) {
        fail("event is not a JSON object");
    }
    for (const char* key : {"t_us", "type", "a", "b"}) {
        if (!j.contains(key)) {
            fail(std::string("missing field '") + key + "'");
        }
    }
    if (!j["t_us"].is_number_integer() || j["t_us"].get<std::int64_t>() < 0) {
        fail("t_us must be a non-negative integer");
    }
    if (!j["type"].is_string()) {
        fail("type must be a string");
    }
    const auto type = log_event_type_from(j["type"].get<std::string>());
    if (!type) {
        fail("unknown event type '" + j["type"].get<std::string>() + "'");
    }
    if (!j["a"].is_string() || j["a"].get<std::string>().empty()) {
        fail("a must be a participant id");
    }
    LogEvent e{Micros{j["t_us"].get<std::int64_t>()}, *type, ParticipantId(j["a"].get<std::string>()), std::nullopt};
    const bool episode_line = *type == LogEvent::Type::Open || *type == LogEvent::Type::Close;
    if (j["b"].is_null()) {
        if (episode_line) {
            fail("episode events need both a and b");
        }
    } else if (j["b"].is_string() && !j["b"].get<std::string>().empty()) {
        if (!episode_line) {
            fail("exclusion events carry b = null");
        }
        e.b = ParticipantId(j["b"].get<std::string>());
        if (*e.b == e.a) {
            fail("episode pair members must differ");
        }
    } else {
        fail("b must be a participant id or null");
    }
    return e;
}

inline LogEvent parse_log_line(std::string_view line) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
        throw Error(Errc::InvalidLog, ex.what());
    }
    return log_event_from_json(j);
}

inline LogEvent to_log_event(const EpisodeEvent& e) {
    return {e.at, e.kind == EpisodeEvent::Kind::Opened ? LogEvent::Type::Open : LogEvent::Type::Close,
            e.pair.first(), e.pair.second()};
}

inline void sort_log(std::vector<LogEvent>& events) {
    auto rank = [](LogEvent::Type t) {
        switch (t) {
            case LogEvent::Type::Close: return 0;
            case LogEvent::Type::ExclusionEnd: return 1;
            case LogEvent::Type::Open: return 2;
            case LogEvent::Type::ExclusionStart: return 3;
        }
        return 4;
    };
    std::stable_sort(events.begin(), events.end(), [&](const LogEvent& x, const LogEvent& y) {
        return std::tuple(x.t, rank(x.type), x.a, x.b) < std::tuple(y.t, rank(y.type), y.a, y.b);
    });
}

/// Chronological log of a finished session: every episode clipped to the
/// horizon plus every member's exclusion intervals.
inline std::vector<LogEvent> build_event_log(std::span<const MutualGazeEpisode> episodes,
                                             std::span<const ParticipantId> members, Micros horizon) {
    std::vector<LogEvent> log;
    for (const auto& e : episodes) {
        const Interval iv = e.clipped(horizon);
        if (iv.empty()) {
            continue;
        }
        log.push_back({iv.start, LogEvent::Type::Open, e.pair.first(), e.pair.second()});
        log.push_back({iv.end, LogEvent::Type::Close, e.pair.first(), e.pair.second()});
    }
    for (const auto& m : members) {
        for (const auto& x : exclusion_intervals(episodes, members, m, horizon)) {
            log.push_back({x.start, LogEvent::Type::ExclusionStart, m, std::nullopt});
            log.push_back({x.end, LogEvent::Type::ExclusionEnd, m, std::nullopt});
        }
    }
    sort_log(log);
    return log;
}

struct LogSummary {
    std::vector<ParticipantId> members;  // everyone named in the log
    std::vector<MutualGazeEpisode> episodes;
    Micros horizon{0};  // latest timestamp in the log
    SessionStats stats;
};

/// Re-derives session statistics from a JSONL log. Episodes are rebuilt
/// from open/close lines; exclusion totals are recomputed from them rather
/// than read back. Failures name the 1-based line number.
inline LogSummary summarize_log(std::istream& in) {
    LogSummary summary;
    std::set<ParticipantId> members;
    std::map<ParticipantPair, Micros> open;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        LogEvent e = [&] {
            try {
                return parse_log_line(line);
            } catch (const Error& ex) {
                throw Error(Errc::InvalidLog, "line " + std::to_string(lineno) + ": " + ex.what());
            }
        }();
        summary.horizon = std::max(summary.horizon, e.t);
        members.insert(e.a);
        if (e.b) {
            members.insert(*e.b);
        }
        if (e.type == LogEvent::Type::Open) {
            if (!open.emplace(ParticipantPair(e.a, *e.b), e.t).second) {
                throw Error(Errc::InvalidLog, "line " + std::to_string(lineno) + ": episode opened twice");
            }
        } else if (e.type == LogEvent::Type::Close) {
            const auto it = open.find(ParticipantPair(e.a, *e.b));
            if (it == open.end()) {
                throw Error(Errc::InvalidLog, "line " + std::to_string(lineno) + ": close without open");
            }
            summary.episodes.push_back({it->first, it->second, e.t});
            open.erase(it);
        }
    }
    if (in.bad()) {
        throw Error(Errc::InvalidLog, "read error");
    }
    for (const auto& [pair, start] : open) {
        summary.episodes.push_back({pair, start, std::nullopt});
    }
    sort_episodes(summary.episodes);
    summary.members.assign(members.begin(), members.end());
    summary.stats = session_stats(summary.episodes, summary.members, summary.horizon);
    return summary;
}

}  // namespace seethrough

#endif  // SEETHROUGH_EVENT_LOG_HPP_
