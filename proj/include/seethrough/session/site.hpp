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

#ifndef SEETHROUGH_SESSION_SITE_HPP_
#define SEETHROUGH_SESSION_SITE_HPP_

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "seethrough/gaze_engine.hpp"
#include "seethrough/intervals.hpp"
#include "seethrough/seating.hpp"
#include "seethrough/session/coordinator.hpp"
#include "seethrough/session/message.hpp"
#include "seethrough/sync_scheduler.hpp"

namespace seethrough::session {

// What one site knows: its seat, its displays, everybody's gaze as observed
// locally and the episodes it has detected.
struct SessionView {
    ParticipantId site;
    SeatingRing ring;
    std::optional<SlotMap> slot_map;
    GazeState gaze_state;
    std::vector<MutualGazeEpisode> episode_log;
    Interval membership;  // when this site took part, per the coordinator
};

struct SiteCounters {
    std::uint64_t gaze_sent = 0;
    std::uint64_t gaze_received = 0;
    std::uint64_t frames_sent = 0;
    std::uint64_t frames_received = 0;
    std::uint64_t heartbeats_received = 0;
    std::uint64_t stale_dropped = 0;
};

/// One participant's endpoint. It applies its own gaze immediately and
/// timestamps remote gaze by local arrival time.
class Site {
public:
    struct Config {
        FrameSchedule schedule;
        Micros debounce{100'000};
        Micros heartbeat_timeout{3'000'000};
    };

    Site(ParticipantId self, Config config)
        : self_(std::move(self)), config_(std::move(config)), engine_(config_.debounce) {
        validate(config_.schedule);
        engine_.add_member(self_);
    }

    const ParticipantId& id() const noexcept { return self_; }
    const Config& config() const noexcept { return config_; }
    bool joined() const noexcept { return slot_map_.has_value(); }
    const std::optional<SlotMap>& slot_map() const noexcept { return slot_map_; }
    const SeatingRing& ring() const noexcept { return ring_; }
    const GazeEngine& engine() const noexcept { return engine_; }
    const SiteCounters& counters() const noexcept { return counters_; }
    const std::set<ParticipantId>& departed() const noexcept { return departed_; }

    /// Every gaze update this site applied, in application order; the
    /// reference detector run over it must reproduce episodes().
    const std::vector<GazeUpdate>& observed_trace() const noexcept { return observed_; }

    /// Episode events in the order the engine reported them.
    const std::vector<EpisodeEvent>& event_history() const noexcept { return history_; }

    Outbound make_join(Micros now) { return {host_id(), make_message(JoinPayload{}, now)}; }
    Outbound make_leave(Micros now) { return {host_id(), make_message(LeavePayload{}, now)}; }

    /// Resolves `slot` on the local displays, applies the gaze locally and
    /// fans it out to every peer under a single sequence number.
    std::vector<Outbound> broadcast_gaze(std::optional<std::size_t> slot, Micros now) {
        if (!slot_map_) {
            throw Error(Errc::UnknownParticipant, "'" + self_.str() + "' has not been welcomed yet");
        }
        const auto target = resolve_gaze_target(*slot_map_, slot);
        apply_observed({self_, target, now});
        ++counters_.gaze_sent;
        return fan_out(make_message(GazePayload{target, now}, now));
    }

    std::vector<Outbound> heartbeat(Micros now) {
        auto msg = make_message(HeartbeatPayload{}, now);
        std::vector<Outbound> out{{host_id(), msg}};
        for (auto& o : fan_out(msg)) {
            out.push_back(std::move(o));
        }
        return out;
    }

    /// Announces a captured frame. Exposures outside the capture windows are
    /// a programming error and throw.
    std::vector<Outbound> frame_stub(std::int64_t frame, Micros exposure_start, Micros exposure, Micros now) {
        if (gate_capture(config_.schedule, exposure_start, exposure).kind != CaptureDecision::Kind::Admit) {
            throw Error(Errc::InvalidWindow, "exposure at " + std::to_string(exposure_start.count()) +
                                                 " is outside the capture window");
        }
        ++counters_.frames_sent;
        return fan_out(make_message(FrameStubPayload{frame, exposure_start, exposure}, now));
    }

    void receive(const SessionMessage& m, Micros now) {
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, WelcomePayload> || std::is_same_v<T, RingUpdatePayload>) {
                    on_ring(p.ring, p.slot_map, now);
                } else if constexpr (std::is_same_v<T, GazePayload>) {
                    on_gaze(m, p, now);
                } else if constexpr (std::is_same_v<T, FrameStubPayload>) {
                    if (accept_seq(m)) {
                        ++counters_.frames_received;
                    }
                } else if constexpr (std::is_same_v<T, HeartbeatPayload>) {
                    if (accept_seq(m)) {
                        ++counters_.heartbeats_received;
                        last_heard_[m.sender] = now;
                    }
                }
            },
            m.payload);
    }

    /// Peers not heard from for the heartbeat timeout.
    std::vector<ParticipantId> suspected_peers(Micros now) const {
        std::vector<ParticipantId> out;
        if (!slot_map_) {
            return out;
        }
        for (const auto& p : slot_map_->slots) {
            const auto it = last_heard_.find(p);
            const Micros since = it != last_heard_.end() ? it->second : joined_at_;
            if (since + config_.heartbeat_timeout <= now) {
                out.push_back(p);
            }
        }
        return out;
    }

    /// Advances the local detector clock.
    void tick(Micros now) { record(engine_.advance_to(now)); }

    void finish(Micros horizon) { record(engine_.finish_at(horizon)); }

    SessionView view() const {
        return SessionView{self_, ring_, slot_map_, engine_.state(), engine_.episodes(), {joined_at_, joined_at_}};
    }

private:
    SessionMessage make_message(Payload payload, Micros now) {
        return SessionMessage{++seq_, self_, now, std::move(payload)};
    }

    std::vector<Outbound> fan_out(const SessionMessage& msg) const {
        std::vector<Outbound> out;
        if (slot_map_) {
            for (const auto& peer : slot_map_->slots) {
                out.push_back({peer, msg});
            }
        }
        return out;
    }

    bool accept_seq(const SessionMessage& m) {
        if (departed_.contains(m.sender)) {
            return false;
        }
        auto& last = last_seq_[m.sender];
        if (m.seq <= last) {
            ++counters_.stale_dropped;
            return false;
        }
        last = m.seq;
        return true;
    }

    void apply_observed(const GazeUpdate& u) {
        record(engine_.apply(u));
        observed_.push_back(u);
    }

    void record(const std::vector<EpisodeEvent>& events) {
        history_.insert(history_.end(), events.begin(), events.end());
    }

    void on_gaze(const SessionMessage& m, const GazePayload& p, Micros now) {
        if (m.sender == self_ || (p.target && *p.target == m.sender) || !accept_seq(m)) {
            return;
        }
        ++counters_.gaze_received;
        engine_.add_member(m.sender);
        apply_observed({m.sender, p.target, now});
    }

    void on_ring(const SeatingRing& ring, const SlotMap& map, Micros now) {
        if (slot_map_ && ring.version <= ring_.version) {
            return;
        }
        if (map.owner != self_ || !ring.contains(self_) || map != slot_map_for(ring, self_)) {
            throw Error(Errc::InvalidMessage, "slot map for '" + self_.str() + "' disagrees with the ring");
        }
        if (!slot_map_) {
            joined_at_ = now;
        }
        for (const auto& p : ring_.order) {
            if (p != self_ && !ring.contains(p)) {
                departed_.insert(p);
                last_heard_.erase(p);
                if (engine_.has_member(p)) {
                    auto removal = engine_.remove_member(p, now);
                    record(removal.events);
                    observed_.insert(observed_.end(), removal.implied_updates.begin(),
                                     removal.implied_updates.end());
                }
            }
        }
        for (const auto& p : ring.order) {
            if (departed_.erase(p) > 0) {
                last_seq_.erase(p);  // rejoined under the same id
            }
            engine_.add_member(p);
            last_heard_.try_emplace(p, now);
        }
        ring_ = ring;
        slot_map_ = map;
    }

    ParticipantId self_;
    Config config_;
    GazeEngine engine_;
    SeatingRing ring_{{}, 0};
    std::optional<SlotMap> slot_map_;
    std::uint64_t seq_ = 0;
    Micros joined_at_{0};
    std::map<ParticipantId, std::uint64_t> last_seq_;
    std::map<ParticipantId, Micros> last_heard_;
    std::set<ParticipantId> departed_;
    std::vector<GazeUpdate> observed_;
    std::vector<EpisodeEvent> history_;
    SiteCounters counters_;
};

}  // namespace seethrough::session

#endif  // SEETHROUGH_SESSION_SITE_HPP_
