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

#ifndef SEETHROUGH_SESSION_COORDINATOR_HPP_
#define SEETHROUGH_SESSION_COORDINATOR_HPP_

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "seethrough/error.hpp"
#include "seethrough/seating.hpp"
#include "seethrough/session/message.hpp"

namespace seethrough::session {

/// Endpoint name of the signaling host. Participant ids may not start with '@'.
inline const ParticipantId& host_id() {
    static const ParticipantId id("@host");
    return id;
}

inline bool is_reserved_id(const ParticipantId& p) noexcept {
    return !p.str().empty() && p.str().front() == '@';
}

struct Outbound {
    ParticipantId to;
    SessionMessage message;
};

enum class DepartureReason { Leave, HeartbeatTimeout };

constexpr std::string_view to_string(DepartureReason r) noexcept {
    return r == DepartureReason::Leave ? "leave" : "heartbeat_timeout";
}

struct Departure {
    ParticipantId who;
    Micros at{0};
    DepartureReason reason = DepartureReason::Leave;

    bool operator==(const Departure&) const = default;
};

/// Membership authority. Serializes joins and departures, owns the seating
/// ring and tells every member its slot map; gaze traffic does not pass
/// through here. Pure logic: callers move the returned messages.
class Coordinator {
public:
    struct Config {
        std::size_t capacity = 8;
        Micros heartbeat_timeout{3'000'000};
    };

    Coordinator() : Coordinator(Config{}) {}
    explicit Coordinator(Config config) : config_(config) {}

    const Config& config() const noexcept { return config_; }
    const SeatingRing& ring() const noexcept { return ring_; }
    const std::vector<Departure>& departures() const noexcept { return departures_; }
    std::size_t member_count() const noexcept { return members_.size(); }

    bool is_member(const ParticipantId& p) const {
        return std::any_of(members_.begin(), members_.end(), [&](const JoinRecord& r) { return r.id == p; });
    }

    /// Pairwise media links currently established.
    std::size_t link_count() const noexcept { return links_.size(); }
    const std::set<std::pair<ParticipantId, ParticipantId>>& links() const noexcept { return links_; }

    /// Admits p: WELCOME to p, RING_UPDATE to everyone else, links from p to
    /// every existing member.
    std::vector<Outbound> join(const ParticipantId& p, Micros now) {
        if (is_reserved_id(p)) {
            throw Error(Errc::InvalidParticipant, "'" + p.str() + "' is a reserved id");
        }
        if (is_member(p)) {
            throw Error(Errc::DuplicateJoin, "'" + p.str() + "' already joined");
        }
        if (members_.size() >= config_.capacity) {
            throw Error(Errc::SessionFull, "session is full (" + std::to_string(config_.capacity) + ")");
        }
        for (const auto& m : members_) {
            links_.insert(std::minmax(m.id, p));
        }
        members_.push_back({p, now});
        last_heartbeat_[p] = now;
        ring_ = order_by_arrival(members_);
        ring_.version = ++version_;
        return announce(now, p);
    }

    std::vector<Outbound> leave(const ParticipantId& p, Micros now, DepartureReason reason = DepartureReason::Leave) {
        if (!is_member(p)) {
            throw Error(Errc::UnknownParticipant, "'" + p.str() + "' is not in the session");
        }
        std::erase_if(members_, [&](const JoinRecord& r) { return r.id == p; });
        std::erase_if(links_, [&](const auto& link) { return link.first == p || link.second == p; });
        last_heartbeat_.erase(p);
        ring_ = remove_from_ring(ring_, p);
        version_ = ring_.version;
        departures_.push_back({p, now, reason});
        return announce(now, std::nullopt);
    }

    /// Records a heartbeat by its send time.
    void heartbeat(const ParticipantId& p, Micros sent) {
        const auto it = last_heartbeat_.find(p);
        if (it != last_heartbeat_.end()) {
            it->second = std::max(it->second, sent);
        }
    }

    std::optional<Micros> heartbeat_deadline(const ParticipantId& p) const {
        const auto it = last_heartbeat_.find(p);
        if (it == last_heartbeat_.end()) {
            return std::nullopt;
        }
        return it->second + config_.heartbeat_timeout;
    }

    /// Members silent for the whole timeout as of `now`.
    std::vector<ParticipantId> expired(Micros now) const {
        std::vector<ParticipantId> out;
        for (const auto& [p, last] : last_heartbeat_) {
            if (last + config_.heartbeat_timeout <= now) {
                out.push_back(p);
            }
        }
        return out;
    }

    SessionMessage make_message(Payload payload, Micros now) {
        return SessionMessage{++seq_, host_id(), now, std::move(payload)};
    }

private:
    std::vector<Outbound> announce(Micros now, const std::optional<ParticipantId>& joiner) {
        std::vector<Outbound> out;
        for (const auto& p : ring_.order) {
            SlotMap map = slot_map_for(ring_, p);
            if (joiner && p == *joiner) {
                out.push_back({p, make_message(WelcomePayload{ring_, std::move(map)}, now)});
            } else {
                out.push_back({p, make_message(RingUpdatePayload{ring_, std::move(map)}, now)});
            }
        }
        return out;
    }

    Config config_;
    std::vector<JoinRecord> members_;
    SeatingRing ring_{{}, 0};
    std::uint64_t version_ = 0;
    std::uint64_t seq_ = 0;
    std::map<ParticipantId, Micros> last_heartbeat_;
    std::set<std::pair<ParticipantId, ParticipantId>> links_;
    std::vector<Departure> departures_;
};

}  // namespace seethrough::session

#endif  // SEETHROUGH_SESSION_COORDINATOR_HPP_
