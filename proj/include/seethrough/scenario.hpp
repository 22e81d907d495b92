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

#ifndef SEETHROUGH_SCENARIO_HPP_
#define SEETHROUGH_SCENARIO_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seethrough/event_log.hpp"
#include "seethrough/gaze_engine.hpp"
#include "seethrough/session/reconcile.hpp"
#include "seethrough/session/simulation.hpp"
#include "seethrough/sync_scheduler.hpp"

namespace seethrough {

// Scenario file:
//   {
//     "name": "three_party",                         optional
//     "participants": ["A", "B", {"id": "C", "join_ms": 0, "leave_ms": 9000}],
//     "network": {"latency_ms": 50, "jitter_ms": 0, "loss": 0, "seed": 42,
//                 "links": [{"from": "A", "to": "B", "latency_ms": 80}],      optional
//                 "faults": [{"site": "C", "at_ms": 5000, "loss": 1.0}]},     optional
//     "schedule": {"fps": 60, "capture_ms": 6, "offset_ms": 0},
//     "trace": [{"t_ms": 1000, "who": "A", "slot": 0}, {"t_ms": 1000, "who": "B", "target": "A"},
//               {"t_ms": 11000, "who": "A", "slot": null}],
//     "debounce_ms": 100, "duration_ms": 12000, "frame_stubs": true, "capacity": 8   optional
//   }
struct Scenario {
    std::string name = "scenario";
    std::vector<session::ParticipantPlan> participants;
    session::NetworkModel network;
    double fps = 60.0;
    double capture_ms = 6.0;
    double offset_ms = 0.0;
    std::vector<session::ScriptedGaze> trace;
    std::optional<double> debounce_ms;
    std::optional<double> duration_ms;
    bool frame_stubs = true;
    std::size_t capacity = 8;
};

// Command-line values win over the scenario file.
struct RunOverrides {
    std::optional<double> fps;
    std::optional<double> capture_ms;
    std::optional<double> offset_ms;
    std::optional<double> debounce_ms;
    std::optional<std::uint64_t> seed;
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void scenario_error(const std::string& why) {
    throw Error(Errc::InvalidScenario, why);
}

inline double number_field(const json& obj, const char* key, const std::string& where, std::optional<double> fallback) {
    if (!obj.contains(key)) {
        if (!fallback) {
            scenario_error(where + " lacks '" + key + "'");
        }
        return *fallback;
    }
    if (!obj[key].is_number()) {
        scenario_error(where + "." + key + " must be a number");
    }
    return obj[key].get<double>();
}

inline ParticipantId id_field(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_string() || obj[key].get<std::string>().empty()) {
        scenario_error(where + "." + key + " must be a non-empty string");
    }
    return ParticipantId(obj[key].get<std::string>());
}

inline Micros ms_field(const json& obj, const char* key, const std::string& where, std::optional<double> fallback) {
    const double v = number_field(obj, key, where, fallback);
    if (v < 0.0) {
        scenario_error(where + "." + key + " must be non-negative");
    }
    return micros_from_ms(v);
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
    using detail::scenario_error;
    if (!j.is_object()) {
        scenario_error("scenario must be a JSON object");
    }
    Scenario s;
    if (j.contains("name")) {
        if (!j["name"].is_string()) {
            scenario_error("name must be a string");
        }
        s.name = j["name"].get<std::string>();
    }

    if (!j.contains("participants") || !j["participants"].is_array()) {
        scenario_error("participants[] is required");
    }
    std::set<ParticipantId> ids;
    for (std::size_t i = 0; i < j["participants"].size(); ++i) {
        const auto& e = j["participants"][i];
        const std::string where = "participants[" + std::to_string(i) + "]";
        session::ParticipantPlan plan{ParticipantId("?"), Micros::zero(), std::nullopt};
        if (e.is_string()) {
            if (e.get<std::string>().empty()) {
                scenario_error(where + " must be a non-empty id");
            }
            plan.id = ParticipantId(e.get<std::string>());
        } else if (e.is_object()) {
            plan.id = detail::id_field(e, "id", where);
            plan.join_at = detail::ms_field(e, "join_ms", where, 0.0);
            if (e.contains("leave_ms")) {
                plan.leave_at = detail::ms_field(e, "leave_ms", where, std::nullopt);
                if (*plan.leave_at <= plan.join_at) {
                    scenario_error(where + " leaves before joining");
                }
            }
        } else {
            scenario_error(where + " must be an id or an object");
        }
        if (session::is_reserved_id(plan.id)) {
            scenario_error(where + ": ids starting with '@' are reserved");
        }
        if (!ids.insert(plan.id).second) {
            scenario_error(where + ": duplicate id '" + plan.id.str() + "'");
        }
        s.participants.push_back(std::move(plan));
    }

    if (!j.contains("network") || !j["network"].is_object()) {
        scenario_error("network{} is required");
    }
    const auto& net = j["network"];
    s.network.base_latency = detail::ms_field(net, "latency_ms", "network", std::nullopt);
    s.network.jitter = detail::ms_field(net, "jitter_ms", "network", 0.0);
    s.network.loss_rate = detail::number_field(net, "loss", "network", 0.0);
    if (net.contains("seed")) {
        if (!net["seed"].is_number_integer() || net["seed"].get<std::int64_t>() < 0) {
            scenario_error("network.seed must be a non-negative integer");
        }
        s.network.seed = net["seed"].get<std::uint64_t>();
    }
    auto known = [&](const ParticipantId& p, const std::string& where) {
        if (!ids.contains(p)) {
            scenario_error(where + " names unknown participant '" + p.str() + "'");
        }
    };
    if (net.contains("links")) {
        if (!net["links"].is_array()) {
            scenario_error("network.links must be an array");
        }
        for (std::size_t i = 0; i < net["links"].size(); ++i) {
            const std::string where = "network.links[" + std::to_string(i) + "]";
            const auto& l = net["links"][i];
            auto from = detail::id_field(l, "from", where);
            auto to = detail::id_field(l, "to", where);
            known(from, where);
            known(to, where);
            s.network.link_latency[{from, to}] = detail::ms_field(l, "latency_ms", where, std::nullopt);
        }
    }
    if (net.contains("faults")) {
        if (!net["faults"].is_array()) {
            scenario_error("network.faults must be an array");
        }
        for (std::size_t i = 0; i < net["faults"].size(); ++i) {
            const std::string where = "network.faults[" + std::to_string(i) + "]";
            const auto& f = net["faults"][i];
            auto site = detail::id_field(f, "site", where);
            known(site, where);
            s.network.faults.push_back(
                {site, detail::ms_field(f, "at_ms", where, 0.0), detail::number_field(f, "loss", where, 1.0)});
        }
    }
    try {
        session::validate(s.network);
    } catch (const Error& ex) {
        scenario_error(std::string("network: ") + ex.what());
    }

    if (j.contains("schedule")) {
        const auto& sch = j["schedule"];
        if (!sch.is_object()) {
            scenario_error("schedule must be an object");
        }
        s.fps = detail::number_field(sch, "fps", "schedule", 60.0);
        s.capture_ms = detail::number_field(sch, "capture_ms", "schedule", 6.0);
        s.offset_ms = detail::number_field(sch, "offset_ms", "schedule", 0.0);
    }

    if (!j.contains("trace") || !j["trace"].is_array()) {
        scenario_error("trace[] is required");
    }
    for (std::size_t i = 0; i < j["trace"].size(); ++i) {
        const std::string where = "trace[" + std::to_string(i) + "]";
        const auto& e = j["trace"][i];
        if (!e.is_object()) {
            scenario_error(where + " must be an object");
        }
        session::ScriptedGaze g{detail::ms_field(e, "t_ms", where, std::nullopt), detail::id_field(e, "who", where),
                                session::GazeChoice::averted()};
        known(g.who, where);
        const bool has_slot = e.contains("slot");
        const bool has_target = e.contains("target");
        if (has_slot == has_target) {
            scenario_error(where + " needs exactly one of 'slot' or 'target'");
        }
        const auto& v = has_slot ? e["slot"] : e["target"];
        if (has_slot && !v.is_null()) {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
                scenario_error(where + ".slot must be a non-negative integer or null");
            }
            g.choice = session::GazeChoice::slot(v.get<std::size_t>());
        } else if (has_target && !v.is_null()) {
            auto target = detail::id_field(e, "target", where);
            known(target, where);
            if (target == g.who) {
                scenario_error(where + ": participants cannot gaze at themselves");
            }
            g.choice = session::GazeChoice::target(std::move(target));
        }
        s.trace.push_back(std::move(g));
    }

    if (j.contains("debounce_ms")) {
        s.debounce_ms = detail::ms_field(j, "debounce_ms", "scenario", std::nullopt).count() / 1000.0;
    }
    if (j.contains("duration_ms")) {
        s.duration_ms = detail::ms_field(j, "duration_ms", "scenario", std::nullopt).count() / 1000.0;
    }
    if (j.contains("frame_stubs")) {
        if (!j["frame_stubs"].is_boolean()) {
            scenario_error("frame_stubs must be a boolean");
        }
        s.frame_stubs = j["frame_stubs"].get<bool>();
    }
    if (j.contains("capacity")) {
        if (!j["capacity"].is_number_integer() || j["capacity"].get<std::int64_t>() < 1) {
            scenario_error("capacity must be a positive integer");
        }
        s.capacity = j["capacity"].get<std::size_t>();
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::InvalidScenario, "cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::InvalidScenario, path.string() + ": " + ex.what());
    }
    return parse_scenario(j);
}

/// Session end when the scenario does not give one: one second after the
/// last scripted thing happens.
inline Micros default_horizon(const Scenario& s) {
    Micros last{0};
    for (const auto& p : s.participants) {
        last = std::max(last, p.join_at);
        if (p.leave_at) {
            last = std::max(last, *p.leave_at);
        }
    }
    for (const auto& g : s.trace) {
        last = std::max(last, g.at);
    }
    for (const auto& f : s.network.faults) {
        last = std::max(last, f.at);
    }
    return last + Micros{1'000'000};
}

inline session::SimConfig make_sim_config(const Scenario& s, const RunOverrides& o = {}) {
    session::SimConfig c;
    try {
        c.schedule = build_schedule(o.fps.value_or(s.fps), o.capture_ms.value_or(s.capture_ms),
                                    o.offset_ms.value_or(s.offset_ms));
    } catch (const Error& ex) {
        throw Error(Errc::InvalidScenario, std::string("schedule: ") + ex.what());
    }
    c.network = s.network;
    if (o.seed) {
        c.network.seed = *o.seed;
    }
    const double debounce_ms = o.debounce_ms.value_or(s.debounce_ms.value_or(100.0));
    if (debounce_ms < 0.0) {
        throw Error(Errc::InvalidScenario, "debounce must be non-negative");
    }
    c.debounce = micros_from_ms(debounce_ms);
    c.horizon = s.duration_ms ? micros_from_ms(*s.duration_ms) : default_horizon(s);
    c.frame_stubs = s.frame_stubs;
    c.capacity = s.capacity;
    return c;
}

struct RunReport {
    std::string scenario;
    FrameSchedule schedule;
    Micros debounce{0};
    Micros horizon{0};
    std::uint64_t seed = 0;
    std::vector<ParticipantId> members;
    std::vector<MutualGazeEpisode> episodes;  // ground truth, clipped at the horizon
    std::vector<ExclusionInterval> exclusions;
    SessionStats stats;
    session::AgreementReport agreement;
    std::vector<session::Departure> departures;
    SeatingRing final_ring{{}, 0};
    std::size_t link_count = 0;
    std::size_t peak_link_count = 0;
    std::uint64_t frames_sent = 0;
    std::uint64_t frames_received = 0;
    std::vector<session::Rejection> rejected;
    std::vector<std::string> join_errors;
    session::NetworkCounters network;

    int exit_code() const noexcept { return agreement.agrees ? 0 : 2; }
};

inline RunReport make_report(const Scenario& s, const session::SimConfig& c, const session::SimResult& r) {
    RunReport rep;
    rep.scenario = s.name;
    rep.schedule = c.schedule;
    rep.debounce = c.debounce;
    rep.horizon = c.horizon;
    rep.seed = c.network.seed;
    rep.members = r.participants;
    rep.episodes = r.ground_truth;
    for (const auto& m : rep.members) {
        for (auto& x : exclusion_intervals(rep.episodes, rep.members, m, rep.horizon)) {
            rep.exclusions.push_back(std::move(x));
        }
    }
    rep.stats = session_stats(rep.episodes, rep.members, rep.horizon);
    rep.agreement = session::reconcile_views(r.views, c.network.max_latency(), c.network.jitter);
    rep.departures = r.departures;
    rep.final_ring = r.final_ring;
    rep.link_count = r.link_count;
    rep.peak_link_count = r.peak_link_count;
    rep.frames_sent = r.frame_stubs.size();
    for (const auto& [id, counters] : r.site_counters) {
        rep.frames_received += counters.frames_received;
    }
    rep.rejected = r.rejected;
    rep.join_errors = r.join_errors;
    rep.network = r.network;
    return rep;
}

inline nlohmann::ordered_json report_to_json(const RunReport& rep) {
    using oj = nlohmann::ordered_json;
    oj j;
    j["scenario"] = rep.scenario;
    j["seed"] = rep.seed;
    j["horizon_us"] = rep.horizon.count();
    j["debounce_us"] = rep.debounce.count();
    j["schedule"] = {{"period_us", rep.schedule.period.count()},
                     {"capture_offset_us", rep.schedule.capture_offset.count()},
                     {"capture_duration_us", rep.schedule.capture_duration.count()},
                     {"display_on_us", display_on_time(rep.schedule).count()},
                     {"display_duty", display_duty(rep.schedule)},
                     {"capture_rate_hz", capture_rate_hz(rep.schedule)}};
    oj members = oj::array();
    for (const auto& m : rep.members) {
        members.push_back(m.str());
    }
    j["members"] = members;
    oj episodes = oj::array();
    for (const auto& e : rep.episodes) {
        const auto iv = e.clipped(rep.horizon);
        episodes.push_back({{"a", e.pair.first().str()},
                            {"b", e.pair.second().str()},
                            {"start_us", iv.start.count()},
                            {"end_us", iv.end.count()}});
    }
    j["episodes"] = episodes;
    oj exclusions = oj::array();
    for (const auto& x : rep.exclusions) {
        exclusions.push_back({{"who", x.who.str()}, {"start_us", x.start.count()}, {"end_us", x.end.count()}});
    }
    j["exclusions"] = exclusions;
    oj mutual = oj::array();
    for (const auto& [pair, total] : rep.stats.mutual) {
        mutual.push_back({{"a", pair.first().str()}, {"b", pair.second().str()}, {"total_us", total.count()}});
    }
    oj exclusion_totals = oj::object();
    for (const auto& [who, total] : rep.stats.exclusion) {
        exclusion_totals[who.str()] = total.count();
    }
    j["totals"] = {{"episode_count", rep.stats.episode_count},
                   {"mutual_us", mutual},
                   {"exclusion_us", exclusion_totals}};
    oj mismatches = oj::array();
    for (const auto& m : rep.agreement.mismatches) {
        mismatches.push_back({{"seen_at", m.seen_at.str()},
                              {"missing_at", m.missing_at.str()},
                              {"a", m.pair.first().str()},
                              {"b", m.pair.second().str()},
                              {"start_us", m.episode.start.count()},
                              {"end_us", m.episode.end.count()}});
    }
    oj skews = oj::array();
    for (const auto& s : rep.agreement.skews) {
        skews.push_back({{"a", s.a.str()}, {"b", s.b.str()}, {"max_skew_us", s.max_skew.count()}, {"matched", s.matched}});
    }
    j["agreement"] = {{"agrees", rep.agreement.agrees},
                      {"latency_bound_us", rep.agreement.latency_bound.count()},
                      {"jitter_us", rep.agreement.jitter.count()},
                      {"max_skew_us", rep.agreement.max_skew.count()},
                      {"mismatches", mismatches},
                      {"site_pairs", skews}};
    oj departures = oj::array();
    for (const auto& d : rep.departures) {
        departures.push_back({{"who", d.who.str()}, {"at_us", d.at.count()}, {"reason", std::string(to_string(d.reason))}});
    }
    oj ring = oj::array();
    for (const auto& p : rep.final_ring.order) {
        ring.push_back(p.str());
    }
    j["membership"] = {{"ring", ring},
                       {"ring_version", rep.final_ring.version},
                       {"links", rep.link_count},
                       {"peak_links", rep.peak_link_count},
                       {"departures", departures}};
    j["frames"] = {{"sent", rep.frames_sent}, {"received", rep.frames_received}};
    oj rejected = oj::array();
    for (const auto& r : rep.rejected) {
        rejected.push_back({{"t_us", r.at.count()}, {"who", r.who.str()}, {"reason", r.reason}});
    }
    j["rejected_gaze"] = rejected;
    j["join_errors"] = rep.join_errors;
    j["network"] = {{"sent", rep.network.sent}, {"dropped", rep.network.dropped}, {"delivered", rep.network.delivered}};
    return j;
}

/// File-system-safe rendering of a participant id.
inline std::string site_file_stem(const ParticipantId& p) {
    std::string out;
    for (char c : p.str()) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

inline std::string render_log(const std::vector<LogEvent>& log) {
    std::string text;
    for (const auto& e : log) {
        text += to_json_line(e);
    }
    return text;
}

/// Writes report.json, events.jsonl (ground truth) and sites/<id>.jsonl
/// (what each site detected).
inline void write_outputs(const std::filesystem::path& out_dir, const RunReport& rep, const session::SimResult& r) {
    std::filesystem::create_directories(out_dir / "sites");
    write_text(out_dir / "report.json", report_to_json(rep).dump(2) + "\n");
    write_text(out_dir / "events.jsonl", render_log(build_event_log(rep.episodes, rep.members, rep.horizon)));
    for (const auto& view : r.views) {
        write_text(out_dir / "sites" / (site_file_stem(view.site) + ".jsonl"),
                   render_log(build_event_log(view.episode_log, rep.members, rep.horizon)));
    }
}

struct ScenarioRun {
    Scenario scenario;
    session::SimConfig config;
    session::SimResult result;
    RunReport report;
};

inline ScenarioRun run_scenario(const Scenario& scenario, const RunOverrides& overrides = {}) {
    ScenarioRun run{scenario, make_sim_config(scenario, overrides), {}, {}};
    session::Simulation sim(run.config, scenario.participants, scenario.trace);
    run.result = sim.run();
    run.report = make_report(run.scenario, run.config, run.result);
    return run;
}

inline ScenarioRun run_scenario(const std::filesystem::path& path, const std::filesystem::path& out_dir,
                                const RunOverrides& overrides = {}) {
    auto run = run_scenario(load_scenario(path), overrides);
    write_outputs(out_dir, run.report, run.result);
    return run;
}

}  // namespace seethrough

#endif  // SEETHROUGH_SCENARIO_HPP_
