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

#ifndef SEETHROUGH_LIVE_LIVE_SESSION_HPP_
#define SEETHROUGH_LIVE_LIVE_SESSION_HPP_

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seethrough/event_log.hpp"
#include "seethrough/gaze_engine.hpp"
#include "seethrough/scenario.hpp"
#include "seethrough/session/coordinator.hpp"
#include "seethrough/session/message.hpp"

namespace seethrough::live {

using ConnectionId = std::uint64_t;

// Called with one encoded, newline-terminated message. Must not block and
// must not call back into the session.
using SendFn = std::function<void(const std::string& line)>;

struct LiveCounters {
    std::uint64_t lines_in = 0;
    std::uint64_t lines_out = 0;
    std::uint64_t gaze_relayed = 0;
    std::uint64_t frames_relayed = 0;
    std::uint64_t stale_dropped = 0;
    std::uint64_t errors_sent = 0;
};

/// Host side of a live session. Consoles connect over some transport, send
/// JOIN/GAZE/HEARTBEAT/LEAVE lines and receive WELCOME, RING_UPDATE, relayed
/// GAZE and EVENT lines. The host is both the membership coordinator and the
/// gaze authority: it resolves slots, runs the one detector for the session
/// and pushes episode and exclusion events as they become final.
///
/// All entry points take the session time and lock one mutex, so transports
/// may call in from any thread.
class LiveSession {
public:
    struct Config {
        FrameSchedule schedule;
        Micros debounce{100'000};
        std::size_t capacity = 8;
        Micros heartbeat_timeout{3'000'000};
        std::string name = "live";
    };

    explicit LiveSession(Config config)
        : config_(std::move(config)),
          coordinator_(session::Coordinator::Config{config_.capacity, config_.heartbeat_timeout}),
          engine_(config_.debounce) {
        validate(config_.schedule);
    }

    ConnectionId connect(SendFn send) {
        std::lock_guard lock(mu_);
        const ConnectionId c = next_connection_++;
        connections_[c] = Connection{std::move(send), std::nullopt, 0};
        return c;
    }

    /// Transport closed. A joined participant leaves the session.
    void disconnect(ConnectionId c, Micros now) {
        std::lock_guard lock(mu_);
        now = advance(now);
        const auto it = connections_.find(c);
        if (it == connections_.end()) {
            return;
        }
        const auto who = it->second.participant;
        connections_.erase(it);
        if (who) {
            by_participant_.erase(*who);
        }
        if (!finished_ && who && coordinator_.is_member(*who)) {
            depart(*who, session::DepartureReason::Leave);
        }
    }

    void on_line(ConnectionId c, std::string_view line, Micros now) {
        std::lock_guard lock(mu_);
        now = advance(now);
        const auto it = connections_.find(c);
        if (it == connections_.end() || finished_) {
            return;
        }
        ++counters_.lines_in;
        std::optional<session::SessionMessage> m;
        try {
            m = session::decode_message(line);
        } catch (const Error& ex) {
            send_error(c, ex.code(), ex.what());
            return;
        }
        try {
            handle(c, it->second, *m);
        } catch (const Error& ex) {
            send_error(c, ex.code(), ex.what());
        }
        settle();
    }

    /// Lets time pass: confirms debounced episodes and expires silent members.
    void tick(Micros now) {
        std::lock_guard lock(mu_);
        now = advance(now);
        if (finished_) {
            return;
        }
        for (const auto& p : coordinator_.expired(now_)) {
            depart(p, session::DepartureReason::HeartbeatTimeout);
        }
        publish(engine_.advance_to(now_));
        settle();
    }

    /// Ends the session at `now` and returns its report.
    RunReport finish(Micros now) {
        std::lock_guard lock(mu_);
        now = advance(now);
        if (!finished_) {
            publish(engine_.finish_at(now_));
            finished_ = true;
            settle(true);
        }
        return report();
    }

    bool finished() const {
        std::lock_guard lock(mu_);
        return finished_;
    }

    SeatingRing ring() const {
        std::lock_guard lock(mu_);
        return coordinator_.ring();
    }

    std::size_t link_count() const {
        std::lock_guard lock(mu_);
        return coordinator_.link_count();
    }

    LiveCounters counters() const {
        std::lock_guard lock(mu_);
        return counters_;
    }

    /// Every EVENT pushed so far, in push order.
    std::vector<LogEvent> pushed_events() const {
        std::lock_guard lock(mu_);
        return pushed_;
    }

private:
    struct Connection {
        SendFn send;
        std::optional<ParticipantId> participant;
        std::uint64_t last_seq = 0;
    };

    Micros advance(Micros now) {
        if (!finished_) {
            now_ = std::max(now_, now);
        }
        return now_;
    }

    void send_to(ConnectionId c, const session::SessionMessage& m) {
        const auto it = connections_.find(c);
        if (it == connections_.end()) {
            return;
        }
        ++counters_.lines_out;
        it->second.send(session::encode_message(m));
    }

    void send_to(const ParticipantId& p, const session::SessionMessage& m) {
        const auto it = by_participant_.find(p);
        if (it != by_participant_.end()) {
            send_to(it->second, m);
        }
    }

    void route(const std::vector<session::Outbound>& out) {
        for (const auto& o : out) {
            send_to(o.to, o.message);
        }
    }

    void send_error(ConnectionId c, Errc code, const std::string& what) {
        ++counters_.errors_sent;
        send_to(c, coordinator_.make_message(session::ErrorPayload{std::string(to_string(code)), what}, now_));
    }

    void handle(ConnectionId c, Connection& conn, const session::SessionMessage& m) {
        if (m.kind() == session::MessageKind::Join) {
            join(c, conn, m.sender);
            conn.last_seq = m.seq;
            return;
        }
        if (!conn.participant) {
            throw Error(Errc::UnknownParticipant, "send JOIN first");
        }
        const ParticipantId self = *conn.participant;
        if (m.sender != self) {
            throw Error(Errc::InvalidMessage, "sender '" + m.sender.str() + "' does not match joined id '" +
                                                  self.str() + "'");
        }
        if (m.seq <= conn.last_seq) {
            ++counters_.stale_dropped;
            return;
        }
        conn.last_seq = m.seq;
        if (!coordinator_.is_member(self)) {
            throw Error(Errc::UnknownParticipant, "'" + self.str() + "' is no longer in the session");
        }
        coordinator_.heartbeat(self, now_);  // any traffic proves liveness
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, session::GazeSlotPayload>) {
                    const auto map = slot_map_for(coordinator_.ring(), self);
                    gaze(self, m.seq, resolve_gaze_target(map, p.slot));
                } else if constexpr (std::is_same_v<T, session::GazePayload>) {
                    if (p.target && (*p.target == self || !coordinator_.is_member(*p.target))) {
                        throw Error(Errc::UnknownParticipant, "'" + p.target->str() + "' is not a peer");
                    }
                    gaze(self, m.seq, p.target);
                } else if constexpr (std::is_same_v<T, session::FrameStubPayload>) {
                    ++counters_.frames_relayed;
                    relay(self, m);
                } else if constexpr (std::is_same_v<T, session::LeavePayload>) {
                    depart(self, session::DepartureReason::Leave);
                } else if constexpr (std::is_same_v<T, session::HeartbeatPayload>) {
                    // liveness already recorded
                } else {
                    throw Error(Errc::InvalidMessage, "consoles may not send " +
                                                          std::string(session::to_string(m.kind())));
                }
            },
            m.payload);
    }

    void join(ConnectionId c, Connection& conn, const ParticipantId& who) {
        if (conn.participant) {
            throw Error(Errc::DuplicateJoin, "this connection already joined as '" + conn.participant->str() + "'");
        }
        auto out = coordinator_.join(who, now_);
        publish(engine_.advance_to(now_));  // before the newcomer is reachable; catch-up covers it
        conn.participant = who;
        by_participant_[who] = c;
        if (std::find(seen_.begin(), seen_.end(), who) == seen_.end()) {
            seen_.push_back(who);
        }
        engine_.add_member(who);
        route(out);
        // Bring the newcomer up to date: current gaze, open episodes and
        // exclusions in progress.
        for (const auto& [p, target] : engine_.state().targets) {
            if (p != who && target) {
                send_to(who, session::SessionMessage{relay_seq_[p], p, now_,
                                                     session::GazePayload{target, engine_.state().last_update.at(p)}});
            }
        }
        for (const auto& e : engine_.episodes()) {
            if (e.is_open()) {
                send_to(who, event_message({e.start, LogEvent::Type::Open, e.pair.first(), e.pair.second()}));
            }
        }
        for (const auto& [p, since] : excluded_since_) {
            if (since) {
                send_to(who, event_message({*since, LogEvent::Type::ExclusionStart, p, std::nullopt}));
            }
        }
    }

    void gaze(const ParticipantId& self, std::uint64_t seq, const std::optional<ParticipantId>& target) {
        publish(engine_.apply(GazeUpdate{self, target, now_}));
        relay_seq_[self] = seq;
        relay(self, session::SessionMessage{seq, self, now_, session::GazePayload{target, now_}});
        ++counters_.gaze_relayed;
    }

    void relay(const ParticipantId& from, const session::SessionMessage& m) {
        for (const auto& p : coordinator_.ring().order) {
            if (p != from) {
                send_to(p, m);
            }
        }
    }

    void depart(const ParticipantId& who, session::DepartureReason reason) {
        auto out = coordinator_.leave(who, now_, reason);
        if (engine_.has_member(who)) {
            publish(engine_.remove_member(who, now_).events);
        }
        relay_seq_.erase(who);
        route(out);
        const auto it = by_participant_.find(who);
        if (it != by_participant_.end()) {
            const auto conn = connections_.find(it->second);
            if (conn != connections_.end()) {
                conn->second.participant.reset();
            }
            by_participant_.erase(it);
        }
    }

    session::SessionMessage event_message(const LogEvent& e) {
        return coordinator_.make_message(session::EventPayload{e}, now_);
    }

    void push_event(const LogEvent& e) {
        pushed_.push_back(e);
        for (const auto& [id, conn] : by_participant_) {
            send_to(conn, event_message(e));
        }
    }

    void publish(const std::vector<EpisodeEvent>& events) {
        for (const auto& e : events) {
            push_event(to_log_event(e));
        }
    }

    // Pushes exclusion boundaries that can no longer change. With `final`,
    // boundaries at the end of the session are included as well.
    void settle(bool final = false) {
        if (seen_.empty()) {
            return;
        }
        const Micros until = final ? now_ : engine_.settled_until();
        for (const auto& m : seen_) {
            std::vector<LogEvent> transitions;
            for (const auto& x : exclusion_intervals(engine_.episodes(), seen_, m, until)) {
                transitions.push_back({x.start, LogEvent::Type::ExclusionStart, m, std::nullopt});
                if (x.end < until || final) {
                    transitions.push_back({x.end, LogEvent::Type::ExclusionEnd, m, std::nullopt});
                }
            }
            auto& done = exclusion_pushed_[m];
            for (std::size_t i = done; i < transitions.size(); ++i) {
                push_event(transitions[i]);
                excluded_since_[m] =
                    transitions[i].type == LogEvent::Type::ExclusionStart ? std::optional(transitions[i].t) : std::nullopt;
            }
            done = transitions.size();
        }
    }

    RunReport report() const {
        RunReport rep;
        rep.scenario = config_.name;
        rep.schedule = config_.schedule;
        rep.debounce = config_.debounce;
        rep.horizon = now_;
        rep.members = seen_;
        rep.episodes = engine_.episodes();
        for (const auto& m : seen_) {
            for (auto& x : exclusion_intervals(rep.episodes, seen_, m, now_)) {
                rep.exclusions.push_back(std::move(x));
            }
        }
        rep.stats = session_stats(rep.episodes, seen_, now_);
        rep.departures = coordinator_.departures();
        rep.final_ring = coordinator_.ring();
        rep.link_count = coordinator_.link_count();
        rep.peak_link_count = rep.link_count;
        rep.frames_sent = counters_.frames_relayed;
        rep.network = {counters_.lines_out + counters_.lines_in, 0, counters_.lines_out};
        return rep;
    }

    Config config_;
    mutable std::mutex mu_;
    session::Coordinator coordinator_;
    GazeEngine engine_;
    std::map<ConnectionId, Connection> connections_;
    std::map<ParticipantId, ConnectionId> by_participant_;
    std::map<ParticipantId, std::uint64_t> relay_seq_;
    std::vector<ParticipantId> seen_;
    std::map<ParticipantId, std::size_t> exclusion_pushed_;
    std::map<ParticipantId, std::optional<Micros>> excluded_since_;
    std::vector<LogEvent> pushed_;
    LiveCounters counters_;
    ConnectionId next_connection_ = 1;
    Micros now_{0};
    bool finished_ = false;
};

/// Writes report.json and events.jsonl for a finished live session.
inline void write_live_outputs(const std::filesystem::path& out_dir, const RunReport& rep) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "report.json", report_to_json(rep).dump(2) + "\n");
    write_text(out_dir / "events.jsonl", render_log(build_event_log(rep.episodes, rep.members, rep.horizon)));
}

}  // namespace seethrough::live

#endif  // SEETHROUGH_LIVE_LIVE_SESSION_HPP_
