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

#ifndef SEETHROUGH_SESSION_NETWORK_HPP_
#define SEETHROUGH_SESSION_NETWORK_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include "seethrough/error.hpp"
#include "seethrough/session/message.hpp"

namespace seethrough::session {

// From `at` on, every data-path message to or from `endpoint` is lost with
// probability `loss`.
struct LinkFault {
    ParticipantId endpoint;
    Micros at{0};
    double loss = 1.0;
};

struct NetworkModel {
    Micros base_latency{0};
    std::map<std::pair<ParticipantId, ParticipantId>, Micros> link_latency;  // directed overrides
    Micros jitter{0};  // half-width of the uniform jitter
    double loss_rate = 0.0;
    std::uint64_t seed = 0;
    std::vector<LinkFault> faults;

    Micros latency(const ParticipantId& from, const ParticipantId& to) const {
        const auto it = link_latency.find({from, to});
        return it != link_latency.end() ? it->second : base_latency;
    }

    Micros max_latency() const {
        Micros m = base_latency;
        for (const auto& [link, l] : link_latency) {
            m = std::max(m, l);
        }
        return m;
    }

    double loss_at(const ParticipantId& from, const ParticipantId& to, Micros t) const {
        double p = loss_rate;
        // Latest fault in effect per endpoint wins.
        for (const auto* endpoint : {&from, &to}) {
            const LinkFault* active = nullptr;
            for (const auto& f : faults) {
                if (f.endpoint == *endpoint && f.at <= t && (!active || f.at >= active->at)) {
                    active = &f;
                }
            }
            if (active) {
                p = std::max(p, active->loss);
            }
        }
        return p;
    }
};

inline void validate(const NetworkModel& m) {
    auto fail = [](const std::string& why) { throw Error(Errc::InvalidScenario, why); };
    if (m.base_latency < Micros::zero() || m.jitter < Micros::zero()) {
        fail("latency and jitter must be non-negative");
    }
    for (const auto& [link, l] : m.link_latency) {
        if (l < Micros::zero()) {
            fail("link latency must be non-negative");
        }
    }
    if (!(m.loss_rate >= 0.0 && m.loss_rate <= 1.0)) {
        fail("loss must lie in [0, 1]");
    }
    for (const auto& f : m.faults) {
        if (!(f.loss >= 0.0 && f.loss <= 1.0)) {
            fail("fault loss must lie in [0, 1]");
        }
    }
}

// Signaling (JOIN/WELCOME/RING_UPDATE/LEAVE) travels on a reliable channel
// that only sees base latency; everything else is subject to jitter and loss.
enum class Path { Data, Signaling };

constexpr Path default_path(MessageKind k) noexcept {
    switch (k) {
        case MessageKind::Gaze:
        case MessageKind::FrameStub:
        case MessageKind::Heartbeat:
            return Path::Data;
        default:
            return Path::Signaling;
    }
}

struct Delivery {
    ParticipantId from;
    ParticipantId to;
    SessionMessage message;
    Micros sent{0};
    Micros deliver_at{0};
    Path path = Path::Data;
};

struct NetworkCounters {
    std::uint64_t sent = 0;
    std::uint64_t dropped = 0;
    std::uint64_t delivered = 0;

    bool operator==(const NetworkCounters&) const = default;
};

/// Deterministic discrete-event transport. All randomness comes from one
/// seeded generator drawn in send order, so a given sequence of sends always
/// produces the same drops and delays. Each directed channel is FIFO: a
/// message is never delivered before one sent earlier on the same channel.
class SimNetwork {
public:
    explicit SimNetwork(NetworkModel model) : model_(std::move(model)), rng_(model_.seed) { validate(model_); }

    const NetworkModel& model() const noexcept { return model_; }
    const NetworkCounters& counters() const noexcept { return counters_; }

    /// Queues a message; returns false if it was lost.
    bool send(const ParticipantId& from, const ParticipantId& to, SessionMessage message, Micros now,
              std::optional<Path> path = std::nullopt) {
        const Path p = path.value_or(default_path(message.kind()));
        ++counters_.sent;
        Micros delay = model_.latency(from, to);
        if (p == Path::Data) {
            // Always two draws per data message so drop decisions never shift
            // the jitter sequence of later sends.
            const std::uint64_t jitter_draw = rng_();
            const std::uint64_t loss_draw = rng_();
            if (model_.jitter > Micros::zero()) {
                const auto span = static_cast<std::uint64_t>(2 * model_.jitter.count() + 1);
                delay += Micros{static_cast<Micros::rep>(jitter_draw % span)} - model_.jitter;
            }
            const double u = static_cast<double>(loss_draw >> 11) * 0x1.0p-53;
            if (u < model_.loss_at(from, to, now)) {
                ++counters_.dropped;
                return false;
            }
        }
        delay = std::max(delay, Micros::zero());
        auto& last = last_delivery_[{from, to, p}];
        const Micros deliver_at = std::max(now + delay, last);
        last = deliver_at;
        in_flight_.emplace(std::pair{deliver_at, next_order_++},
                           Delivery{from, to, std::move(message), now, deliver_at, p});
        return true;
    }

    /// Removes and returns every message due at or before `now`, in delivery
    /// order (ties in send order).
    std::vector<Delivery> deliver(Micros now) {
        std::vector<Delivery> out;
        while (!in_flight_.empty() && in_flight_.begin()->first.first <= now) {
            out.push_back(std::move(in_flight_.begin()->second));
            in_flight_.erase(in_flight_.begin());
        }
        counters_.delivered += out.size();
        return out;
    }

    std::optional<Micros> next_delivery_time() const {
        if (in_flight_.empty()) {
            return std::nullopt;
        }
        return in_flight_.begin()->first.first;
    }

    std::size_t in_flight() const noexcept { return in_flight_.size(); }

private:
    NetworkModel model_;
    std::mt19937_64 rng_;
    NetworkCounters counters_;
    std::uint64_t next_order_ = 0;
    std::map<std::tuple<ParticipantId, ParticipantId, Path>, Micros> last_delivery_;
    std::map<std::pair<Micros, std::uint64_t>, Delivery> in_flight_;
};

}  // namespace seethrough::session

#endif  // SEETHROUGH_SESSION_NETWORK_HPP_
