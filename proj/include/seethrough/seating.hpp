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

#ifndef SEETHROUGH_SEATING_HPP_
#define SEETHROUGH_SEATING_HPP_

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "seethrough/error.hpp"
#include "seethrough/time.hpp"

namespace seethrough {

class ParticipantId {
public:
    explicit ParticipantId(std::string value) : value_(std::move(value)) {
        if (value_.empty()) {
            throw Error(Errc::InvalidParticipant, "participant id must be non-empty");
        }
    }

    const std::string& str() const noexcept { return value_; }

    auto operator<=>(const ParticipantId&) const = default;
    bool operator==(const ParticipantId&) const = default;

private:
    std::string value_;
};

inline ParticipantId operator""_pid(const char* s, std::size_t n) {
    return ParticipantId(std::string(s, n));
}

// Global cyclic seating order: everybody sits at one virtual round table and
// each site's displays show the table as seen from its own seat.
struct SeatingRing {
    std::vector<ParticipantId> order;
    std::uint64_t version = 1;

    bool contains(const ParticipantId& p) const {
        return std::find(order.begin(), order.end(), p) != order.end();
    }
    std::size_t size() const noexcept { return order.size(); }

    bool operator==(const SeatingRing&) const = default;
};

// Display slots at one site, left to right from the owner's viewpoint.
struct SlotMap {
    ParticipantId owner;
    std::vector<ParticipantId> slots;

    bool operator==(const SlotMap&) const = default;
};

struct JoinRecord {
    ParticipantId id;
    Micros join_time{0};
};

/// Arrival order without the conversation-size check; a session host seats
/// a lone first arrival this way while waiting for a peer.
inline SeatingRing order_by_arrival(std::vector<JoinRecord> participants) {
    std::sort(participants.begin(), participants.end(), [](const JoinRecord& a, const JoinRecord& b) {
        return std::tie(a.join_time, a.id) < std::tie(b.join_time, b.id);
    });
    SeatingRing ring;
    ring.order.reserve(participants.size());
    for (auto& rec : participants) {
        ring.order.push_back(std::move(rec.id));
    }
    return ring;
}

/// Seats participants in arrival order; equal join times fall back to id order.
inline SeatingRing make_ring(std::vector<JoinRecord> participants) {
    std::set<ParticipantId> seen;
    for (const auto& rec : participants) {
        if (!seen.insert(rec.id).second) {
            throw Error(Errc::DuplicateId, "participant '" + rec.id.str() + "' listed twice");
        }
    }
    if (participants.size() < 2) {
        throw Error(Errc::TooFew, "a conversation needs at least two participants");
    }
    return order_by_arrival(std::move(participants));
}

/// Excises `p` and bumps the version; survivors keep their cyclic order.
inline SeatingRing remove_from_ring(const SeatingRing& ring, const ParticipantId& p) {
    if (!ring.contains(p)) {
        throw Error(Errc::UnknownParticipant, "'" + p.str() + "' is not seated");
    }
    SeatingRing out;
    out.version = ring.version + 1;
    for (const auto& q : ring.order) {
        if (q != p) {
            out.order.push_back(q);
        }
    }
    return out;
}

/// The table as seen from p's seat: ring members starting at p's successor.
inline SlotMap slot_map_for(const SeatingRing& ring, const ParticipantId& p) {
    const auto it = std::find(ring.order.begin(), ring.order.end(), p);
    if (it == ring.order.end()) {
        throw Error(Errc::UnknownParticipant, "'" + p.str() + "' is not seated");
    }
    const auto n = ring.order.size();
    const auto self = static_cast<std::size_t>(it - ring.order.begin());
    SlotMap map{p, {}};
    map.slots.reserve(n - 1);
    for (std::size_t step = 1; step < n; ++step) {
        map.slots.push_back(ring.order[(self + step) % n]);
    }
    return map;
}

struct ConsistencyViolation {
    ParticipantId owner;
    std::vector<ParticipantId> expected;
    std::vector<ParticipantId> actual;

    bool operator==(const ConsistencyViolation&) const = default;
};

/// Checks every site's slot map against the ring. Maps owned by strangers and
/// ring members without a map are reported too (with an empty side).
inline std::vector<ConsistencyViolation> verify_global_consistency(const std::vector<SlotMap>& maps,
                                                                   const SeatingRing& ring) {
    std::vector<ConsistencyViolation> violations;
    std::set<ParticipantId> owners;
    for (const auto& map : maps) {
        owners.insert(map.owner);
        if (!ring.contains(map.owner)) {
            violations.push_back({map.owner, {}, map.slots});
            continue;
        }
        // Derived independently of slot_map_for: rotate the ring so the owner
        // is first, then drop the owner.
        std::vector<ParticipantId> rotated = ring.order;
        const auto pos = std::find(rotated.begin(), rotated.end(), map.owner);
        std::rotate(rotated.begin(), pos, rotated.end());
        std::vector<ParticipantId> expected(rotated.begin() + 1, rotated.end());
        if (expected != map.slots) {
            violations.push_back({map.owner, std::move(expected), map.slots});
        }
    }
    for (const auto& member : ring.order) {
        if (!owners.contains(member)) {
            violations.push_back({member, slot_map_for(ring, member).slots, {}});
        }
    }
    return violations;
}

/// Who the owner is looking at when gazing at `slot`; nullopt means averted.
inline std::optional<ParticipantId> resolve_gaze_target(const SlotMap& map,
                                                        std::optional<std::size_t> slot) {
    if (!slot) {
        return std::nullopt;
    }
    if (*slot >= map.slots.size()) {
        throw Error(Errc::SlotOutOfRange, "slot " + std::to_string(*slot) + " of " +
                                              std::to_string(map.slots.size()) + " at '" +
                                              map.owner.str() + "'");
    }
    return map.slots[*slot];
}

/// Inverse of resolve_gaze_target.
inline std::optional<std::size_t> slot_of(const SlotMap& map, const ParticipantId& p) {
    const auto it = std::find(map.slots.begin(), map.slots.end(), p);
    if (it == map.slots.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - map.slots.begin());
}

}  // namespace seethrough

template <>
struct std::hash<seethrough::ParticipantId> {
    std::size_t operator()(const seethrough::ParticipantId& p) const noexcept {
        return std::hash<std::string>{}(p.str());
    }
};

#endif  // SEETHROUGH_SEATING_HPP_
