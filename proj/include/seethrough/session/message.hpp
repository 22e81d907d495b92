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

#ifndef SEETHROUGH_SESSION_MESSAGE_HPP_
#define SEETHROUGH_SESSION_MESSAGE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "seethrough/error.hpp"
#include "seethrough/event_log.hpp"
#include "seethrough/seating.hpp"

namespace seethrough::session {

using json = nlohmann::ordered_json;

// Wire protocol: one UTF-8 JSON object per line,
//   {"kind":K,"seq":n,"sender":id,"sent_us":t,"payload":{...}}\n
// with fields in exactly that order. `seq` increases strictly per sender
// across all kinds.

enum class MessageKind { Join, Welcome, RingUpdate, Gaze, FrameStub, Heartbeat, Leave, Error, Event };

constexpr std::string_view to_string(MessageKind k) noexcept {
    switch (k) {
        case MessageKind::Join: return "JOIN";
        case MessageKind::Welcome: return "WELCOME";
        case MessageKind::RingUpdate: return "RING_UPDATE";
        case MessageKind::Gaze: return "GAZE";
        case MessageKind::FrameStub: return "FRAME_STUB";
        case MessageKind::Heartbeat: return "HEARTBEAT";
        case MessageKind::Leave: return "LEAVE";
        case MessageKind::Error: return "ERROR";
        case MessageKind::Event: return "EVENT";
    }
    return "";
}

inline std::optional<MessageKind> message_kind_from(std::string_view s) {
    for (auto k : {MessageKind::Join, MessageKind::Welcome, MessageKind::RingUpdate, MessageKind::Gaze,
                   MessageKind::FrameStub, MessageKind::Heartbeat, MessageKind::Leave, MessageKind::Error,
                   MessageKind::Event}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

struct JoinPayload {
    bool operator==(const JoinPayload&) const = default;
};

// WELCOME goes to the joiner, RING_UPDATE to everybody else; both carry the
// recipient's own slot map.
struct WelcomePayload {
    SeatingRing ring;
    SlotMap slot_map;
    bool operator==(const WelcomePayload&) const = default;
};

struct RingUpdatePayload {
    SeatingRing ring;
    SlotMap slot_map;
    bool operator==(const RingUpdatePayload&) const = default;
};

struct GazePayload {
    std::optional<ParticipantId> target;
    Micros at{0};
    bool operator==(const GazePayload&) const = default;
};

// Console-to-host form of GAZE: the host resolves the slot against the
// sender's slot map and fans out a GazePayload.
struct GazeSlotPayload {
    std::optional<std::size_t> slot;
    bool operator==(const GazeSlotPayload&) const = default;
};

struct FrameStubPayload {
    std::int64_t frame = 0;
    Micros exposure_start{0};
    Micros exposure{0};
    bool operator==(const FrameStubPayload&) const = default;
};

struct HeartbeatPayload {
    bool operator==(const HeartbeatPayload&) const = default;
};

struct LeavePayload {
    bool operator==(const LeavePayload&) const = default;
};

struct ErrorPayload {
    std::string code;
    std::string message;
    bool operator==(const ErrorPayload&) const = default;
};

// Host-to-console episode/exclusion notifications in event-log form.
struct EventPayload {
    LogEvent event;
    bool operator==(const EventPayload&) const = default;
};

using Payload = std::variant<JoinPayload, WelcomePayload, RingUpdatePayload, GazePayload, GazeSlotPayload,
                             FrameStubPayload, HeartbeatPayload, LeavePayload, ErrorPayload, EventPayload>;

inline MessageKind kind_of(const Payload& p) noexcept {
    struct Visitor {
        MessageKind operator()(const JoinPayload&) const { return MessageKind::Join; }
        MessageKind operator()(const WelcomePayload&) const { return MessageKind::Welcome; }
        MessageKind operator()(const RingUpdatePayload&) const { return MessageKind::RingUpdate; }
        MessageKind operator()(const GazePayload&) const { return MessageKind::Gaze; }
        MessageKind operator()(const GazeSlotPayload&) const { return MessageKind::Gaze; }
        MessageKind operator()(const FrameStubPayload&) const { return MessageKind::FrameStub; }
        MessageKind operator()(const HeartbeatPayload&) const { return MessageKind::Heartbeat; }
        MessageKind operator()(const LeavePayload&) const { return MessageKind::Leave; }
        MessageKind operator()(const ErrorPayload&) const { return MessageKind::Error; }
        MessageKind operator()(const EventPayload&) const { return MessageKind::Event; }
    };
    return std::visit(Visitor{}, p);
}

struct SessionMessage {
    std::uint64_t seq = 0;
    ParticipantId sender;
    Micros sent{0};
    Payload payload;

    MessageKind kind() const noexcept { return kind_of(payload); }

    bool operator==(const SessionMessage&) const = default;
};

namespace detail {

inline json ids_to_json(const std::vector<ParticipantId>& ids) {
    json arr = json::array();
    for (const auto& id : ids) {
        arr.push_back(id.str());
    }
    return arr;
}

inline json ring_to_json(const SeatingRing& ring) {
    json j;
    j["order"] = ids_to_json(ring.order);
    j["version"] = ring.version;
    return j;
}

inline json slot_map_to_json(const SlotMap& map) {
    json j;
    j["owner"] = map.owner.str();
    j["slots"] = ids_to_json(map.slots);
    return j;
}

[[noreturn]] inline void bad(const std::string& why) {
    throw Error(Errc::InvalidMessage, why);
}

inline void expect_keys(const json& j, std::initializer_list<std::string_view> keys, std::string_view what) {
    if (!j.is_object()) {
        bad(std::string(what) + " must be an object");
    }
    for (auto k : keys) {
        if (!j.contains(k)) {
            bad(std::string(what) + " lacks '" + std::string(k) + "'");
        }
    }
    if (j.size() != keys.size()) {
        bad(std::string(what) + " has unexpected fields");
    }
}

inline ParticipantId id_from_json(const json& j, std::string_view what) {
    if (!j.is_string() || j.get_ref<const std::string&>().empty()) {
        bad(std::string(what) + " must be a non-empty string");
    }
    return ParticipantId(j.get<std::string>());
}

inline std::optional<ParticipantId> optional_id_from_json(const json& j, std::string_view what) {
    if (j.is_null()) {
        return std::nullopt;
    }
    return id_from_json(j, what);
}

inline std::int64_t int_from_json(const json& j, std::string_view what) {
    if (!j.is_number_integer()) {
        bad(std::string(what) + " must be an integer");
    }
    if (j.is_number_unsigned() && j.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
        bad(std::string(what) + " out of range");
    }
    return j.get<std::int64_t>();
}

inline std::vector<ParticipantId> ids_from_json(const json& j, std::string_view what) {
    if (!j.is_array()) {
        bad(std::string(what) + " must be an array");
    }
    std::vector<ParticipantId> out;
    for (const auto& e : j) {
        out.push_back(id_from_json(e, what));
    }
    return out;
}

inline SeatingRing ring_from_json(const json& j) {
    expect_keys(j, {"order", "version"}, "ring");
    SeatingRing ring;
    ring.order = ids_from_json(j["order"], "ring.order");
    const auto v = int_from_json(j["version"], "ring.version");
    if (v < 0) {
        bad("ring.version must be non-negative");
    }
    ring.version = static_cast<std::uint64_t>(v);
    return ring;
}

inline SlotMap slot_map_from_json(const json& j) {
    expect_keys(j, {"owner", "slots"}, "slot_map");
    return SlotMap{id_from_json(j["owner"], "slot_map.owner"), ids_from_json(j["slots"], "slot_map.slots")};
}

inline json payload_to_json(const Payload& payload) {
    return std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            json j = json::object();
            if constexpr (std::is_same_v<T, WelcomePayload> || std::is_same_v<T, RingUpdatePayload>) {
                j["ring"] = ring_to_json(p.ring);
                j["slot_map"] = slot_map_to_json(p.slot_map);
            } else if constexpr (std::is_same_v<T, GazePayload>) {
                j["target"] = p.target ? json(p.target->str()) : json(nullptr);
                j["at_us"] = p.at.count();
            } else if constexpr (std::is_same_v<T, GazeSlotPayload>) {
                j["slot"] = p.slot ? json(*p.slot) : json(nullptr);
            } else if constexpr (std::is_same_v<T, FrameStubPayload>) {
                j["frame"] = p.frame;
                j["exposure_start_us"] = p.exposure_start.count();
                j["exposure_us"] = p.exposure.count();
            } else if constexpr (std::is_same_v<T, ErrorPayload>) {
                j["code"] = p.code;
                j["message"] = p.message;
            } else if constexpr (std::is_same_v<T, EventPayload>) {
                j = to_json(p.event);
            }
            return j;
        },
        payload);
}

inline Payload payload_from_json(MessageKind kind, const json& j) {
    switch (kind) {
        case MessageKind::Join:
            expect_keys(j, {}, "JOIN payload");
            return JoinPayload{};
        case MessageKind::Heartbeat:
            expect_keys(j, {}, "HEARTBEAT payload");
            return HeartbeatPayload{};
        case MessageKind::Leave:
            expect_keys(j, {}, "LEAVE payload");
            return LeavePayload{};
        case MessageKind::Welcome:
            expect_keys(j, {"ring", "slot_map"}, "WELCOME payload");
            return WelcomePayload{ring_from_json(j["ring"]), slot_map_from_json(j["slot_map"])};
        case MessageKind::RingUpdate:
            expect_keys(j, {"ring", "slot_map"}, "RING_UPDATE payload");
            return RingUpdatePayload{ring_from_json(j["ring"]), slot_map_from_json(j["slot_map"])};
        case MessageKind::Gaze:
            if (j.is_object() && j.contains("slot")) {
                expect_keys(j, {"slot"}, "GAZE payload");
                if (j["slot"].is_null()) {
                    return GazeSlotPayload{std::nullopt};
                }
                const auto slot = int_from_json(j["slot"], "GAZE slot");
                if (slot < 0) {
                    bad("GAZE slot must be non-negative");
                }
                return GazeSlotPayload{static_cast<std::size_t>(slot)};
            }
            expect_keys(j, {"target", "at_us"}, "GAZE payload");
            return GazePayload{optional_id_from_json(j["target"], "GAZE target"),
                               Micros{int_from_json(j["at_us"], "GAZE at_us")}};
        case MessageKind::FrameStub:
            expect_keys(j, {"frame", "exposure_start_us", "exposure_us"}, "FRAME_STUB payload");
            return FrameStubPayload{int_from_json(j["frame"], "frame"),
                                    Micros{int_from_json(j["exposure_start_us"], "exposure_start_us")},
                                    Micros{int_from_json(j["exposure_us"], "exposure_us")}};
        case MessageKind::Error:
            expect_keys(j, {"code", "message"}, "ERROR payload");
            if (!j["code"].is_string() || !j["message"].is_string()) {
                bad("ERROR code and message must be strings");
            }
            return ErrorPayload{j["code"].get<std::string>(), j["message"].get<std::string>()};
        case MessageKind::Event:
            try {
                return EventPayload{log_event_from_json(j)};
            } catch (const Error& ex) {
                bad(std::string("EVENT payload: ") + ex.what());
            }
    }
    bad("unknown kind");
}

}  // namespace detail

inline json to_json(const SessionMessage& m) {
    json j;
    j["kind"] = std::string(to_string(m.kind()));
    j["seq"] = m.seq;
    j["sender"] = m.sender.str();
    j["sent_us"] = m.sent.count();
    j["payload"] = detail::payload_to_json(m.payload);
    return j;
}

/// Single line, '\n'-terminated.
inline std::string encode_message(const SessionMessage& m) {
    return to_json(m).dump() + "\n";
}

inline SessionMessage message_from_json(const json& j) {
    detail::expect_keys(j, {"kind", "seq", "sender", "sent_us", "payload"}, "message");
    if (!j["kind"].is_string()) {
        detail::bad("kind must be a string");
    }
    const auto kind = message_kind_from(j["kind"].get<std::string>());
    if (!kind) {
        detail::bad("unknown kind '" + j["kind"].get<std::string>() + "'");
    }
    if (!j["seq"].is_number_unsigned() && !(j["seq"].is_number_integer() && j["seq"].get<std::int64_t>() >= 0)) {
        detail::bad("seq must be a non-negative integer");
    }
    return SessionMessage{j["seq"].get<std::uint64_t>(), detail::id_from_json(j["sender"], "sender"),
                          Micros{detail::int_from_json(j["sent_us"], "sent_us")},
                          detail::payload_from_json(*kind, j["payload"])};
}

/// Accepts one line with or without its trailing newline.
inline SessionMessage decode_message(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) {
        line.remove_suffix(1);
    }
    if (line.find('\n') != std::string_view::npos) {
        detail::bad("embedded newline");
    }
    json j;
    try {
        j = json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
        detail::bad(ex.what());
    }
    return message_from_json(j);
}

/// Splits a byte stream into lines.
class LineBuffer {
public:
    explicit LineBuffer(std::size_t max_line = 1 << 20) : max_line_(max_line) {}

    void append(std::string_view bytes) {
        buffer_.append(bytes);
        if (buffer_.size() - consumed_ > max_line_ && buffer_.find('\n', consumed_) == std::string::npos) {
            detail::bad("line exceeds " + std::to_string(max_line_) + " bytes");
        }
    }

    std::optional<std::string> next_line() {
        const auto nl = buffer_.find('\n', consumed_);
        if (nl == std::string::npos) {
            compact();
            return std::nullopt;
        }
        std::string line = buffer_.substr(consumed_, nl - consumed_);
        consumed_ = nl + 1;
        return line;
    }

    std::size_t pending_bytes() const noexcept { return buffer_.size() - consumed_; }

private:
    void compact() {
        buffer_.erase(0, consumed_);
        consumed_ = 0;
    }

    std::size_t max_line_;
    std::string buffer_;
    std::size_t consumed_ = 0;
};

}  // namespace seethrough::session

#endif  // SEETHROUGH_SESSION_MESSAGE_HPP_
