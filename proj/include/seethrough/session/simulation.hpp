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

#ifndef SEETHROUGH_SESSION_SIMULATION_HPP_
#define SEETHROUGH_SESSION_SIMULATION_HPP_

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "seethrough/gaze_engine.hpp"
#include "seethrough/session/coordinator.hpp"
#include "seethrough/session/network.hpp"
#include "seethrough/session/reconcile.hpp"
#include "seethrough/session/site.hpp"
#include "seethrough/sync_scheduler.hpp"

namespace seethrough::session {

struct ParticipantPlan {
    ParticipantId id;
    Micros join_at{0};
    std::optional<Micros> leave_at;
};

// A scripted gaze change. Either a display slot at the gazer's site, a
// participant (looked up in the gazer's current slot map) or averted.
struct GazeChoice {
    struct Averted {
        bool operator==(const Averted&) const = default;
    };
    std::variant<Averted, std::size_t, ParticipantId> value;

    static GazeChoice averted() { return {Averted{}}; }
    static GazeChoice slot(std::size_t s) { return {s}; }
    static GazeChoice target(ParticipantId p) { return {std::move(p)}; }

    bool operator==(const GazeChoice&) const = default;
};

struct ScriptedGaze {
    Micros at{0};
    ParticipantId who;
    GazeChoice choice;
};

struct SimConfig {
    FrameSchedule schedule;
    NetworkModel network;
    Micros debounce{100'000};
    Micros heartbeat_interval{1'000'000};
    Micros heartbeat_timeout{3'000'000};
    std::size_t capacity = 8;
    Micros horizon{0};
    bool frame_stubs = true;
};

struct FrameStubRecord {
    ParticipantId sender;
    std::int64_t frame = 0;
    Micros exposure_start{0};
    Micros exposure{0};
};

struct Rejection {
    Micros at{0};
    ParticipantId who;
    std::string reason;
};

struct SimResult {
    Micros horizon{0};
    std::vector<ParticipantId> participants;
    std::vector<SessionView> views;
    std::map<ParticipantId, std::vector<GazeUpdate>> observed;
    std::map<ParticipantId, SiteCounters> site_counters;
    // Gaze as the gazers themselves changed it, plus implied resets on departure.
    std::vector<GazeUpdate> ground_truth_trace;
    std::vector<MutualGazeEpisode> ground_truth;
    std::vector<Departure> departures;
    SeatingRing final_ring{{}, 0};
    std::size_t link_count = 0;
    std::size_t peak_link_count = 0;
    std::vector<FrameStubRecord> frame_stubs;
    std::vector<Rejection> rejected;
    std::vector<std::string> join_errors;
    NetworkCounters network;
};

/// Single-threaded discrete-event run of a full session: one coordinator,
/// one Site per participant, all traffic over a SimNetwork. Everything due at
/// the same instant is processed before the clock moves; network deliveries
/// due at an instant go before scripted actions at that instant.
class Simulation {
public:
    Simulation(SimConfig config, std::vector<ParticipantPlan> plans, std::vector<ScriptedGaze> script)
        : config_(std::move(config)),
          plans_(std::move(plans)),
          script_(std::move(script)),
          network_(config_.network),
          coordinator_(Coordinator::Config{config_.capacity, config_.heartbeat_timeout}) {
        validate(config_.schedule);
        std::stable_sort(script_.begin(), script_.end(),
                         [](const ScriptedGaze& a, const ScriptedGaze& b) { return a.at < b.at; });
        for (const auto& plan : plans_) {
            if (is_reserved_id(plan.id)) {
                throw Error(Errc::InvalidParticipant, "'" + plan.id.str() + "' is a reserved id");
            }
            if (!sites_.try_emplace(plan.id, plan.id,
                                    Site::Config{config_.schedule, config_.debounce, config_.heartbeat_timeout})
                     .second) {
                throw Error(Errc::DuplicateId, "participant '" + plan.id.str() + "' planned twice");
            }
            active_[plan.id] = false;
        }
    }

    const Coordinator& coordinator() const noexcept { return coordinator_; }
    const std::map<ParticipantId, Site>& sites() const noexcept { return sites_; }

    SimResult run() {
        for (std::size_t i = 0; i < plans_.size(); ++i) {
            schedule(plans_[i].join_at, JoinAction{i});
            if (plans_[i].leave_at) {
                schedule(*plans_[i].leave_at, LeaveAction{i});
            }
        }
        for (std::size_t i = 0; i < script_.size(); ++i) {
            schedule(script_[i].at, GazeAction{i});
        }

        while (true) {
            std::optional<Micros> next = network_.next_delivery_time();
            if (!queue_.empty() && (!next || queue_.top().at < *next)) {
                next = queue_.top().at;
            }
            if (!next || *next > config_.horizon) {
                break;
            }
            now_ = *next;
            bool progressed = true;
            while (progressed) {
                progressed = false;
                for (auto& d : network_.deliver(now_)) {
                    dispatch(d);
                    progressed = true;
                }
                if (!queue_.empty() && queue_.top().at == now_) {
                    Action a = queue_.top();
                    queue_.pop();
                    perform(a);
                    progressed = true;
                }
            }
        }
        return collect();
    }

private:
    struct JoinAction { std::size_t plan; };
    struct LeaveAction { std::size_t plan; };
    struct GazeAction { std::size_t entry; };
    struct HeartbeatAction { ParticipantId who; };
    struct FrameAction { ParticipantId who; std::int64_t frame; bool deferred; };
    struct TimeoutCheck { ParticipantId who; };
    using ActionKind = std::variant<JoinAction, LeaveAction, GazeAction, HeartbeatAction, FrameAction, TimeoutCheck>;

    struct Action {
        Micros at;
        std::uint64_t order;
        ActionKind kind;
    };
    struct Later {
        bool operator()(const Action& a, const Action& b) const {
            return std::tie(a.at, a.order) > std::tie(b.at, b.order);
        }
    };

    void schedule(Micros at, ActionKind kind) { queue_.push(Action{at, next_order_++, std::move(kind)}); }

    void send_all(const std::vector<Outbound>& out, const ParticipantId& from) {
        for (const auto& o : out) {
            network_.send(from, o.to, o.message, now_);
        }
    }

    void perform(const Action& a) {
        std::visit([&](const auto& k) { handle(k); }, a.kind);
    }

    void handle(const JoinAction& a) {
        auto& site = sites_.at(plans_[a.plan].id);
        active_[site.id()] = true;
        const auto join = site.make_join(now_);
        network_.send(site.id(), join.to, join.message, now_);
    }

    void handle(const LeaveAction& a) {
        auto& site = sites_.at(plans_[a.plan].id);
        if (!active_[site.id()]) {
            return;
        }
        const auto leave = site.make_leave(now_);
        network_.send(site.id(), leave.to, leave.message, now_);
        active_[site.id()] = false;
    }

    void handle(const GazeAction& a) {
        const auto& entry = script_[a.entry];
        auto it = sites_.find(entry.who);
        if (it == sites_.end()) {
            result_.rejected.push_back({now_, entry.who, "unknown participant"});
            return;
        }
        auto& site = it->second;
        if (!active_[site.id()] || !site.joined()) {
            result_.rejected.push_back({now_, entry.who, "not in session"});
            return;
        }
        std::optional<std::size_t> slot;
        if (const auto* s = std::get_if<std::size_t>(&entry.choice.value)) {
            slot = *s;
        } else if (const auto* p = std::get_if<ParticipantId>(&entry.choice.value)) {
            slot = slot_of(*site.slot_map(), *p);
            if (!slot) {
                result_.rejected.push_back({now_, entry.who, "'" + p->str() + "' is not on a display"});
                return;
            }
        }
        try {
            const auto target = resolve_gaze_target(*site.slot_map(), slot);
            send_all(site.broadcast_gaze(slot, now_), site.id());
            // A site cut off by a heartbeat timeout keeps gazing, but it is no
            // longer part of the conversation.
            if (coordinator_.is_member(site.id())) {
                record_truth({site.id(), target, now_});
            }
        } catch (const Error& ex) {
            result_.rejected.push_back({now_, entry.who, ex.what()});
        }
    }

    void handle(const HeartbeatAction& a) {
        if (!active_[a.who]) {
            return;
        }
        send_all(sites_.at(a.who).heartbeat(now_), a.who);
        schedule(now_ + config_.heartbeat_interval, HeartbeatAction{a.who});
    }

    void handle(const FrameAction& a) {
        if (!active_[a.who]) {
            return;
        }
        auto& site = sites_.at(a.who);
        const auto& sched = config_.schedule;
        const auto decision = gate_capture(sched, now_, sched.capture_duration);
        if (decision.kind == CaptureDecision::Kind::TooLong) {
            return;  // no capture window: nothing to send, ever
        }
        if (decision.kind == CaptureDecision::Kind::DeferUntil) {
            schedule(decision.next_start, FrameAction{a.who, a.frame, true});
        } else {
            send_all(site.frame_stub(a.frame, now_, sched.capture_duration, now_), a.who);
            result_.frame_stubs.push_back({a.who, a.frame, now_, sched.capture_duration});
        }
        if (!a.deferred) {
            schedule(now_ + sched.period, FrameAction{a.who, a.frame + 1, false});
        }
    }

    void handle(const TimeoutCheck& a) {
        if (!coordinator_.is_member(a.who)) {
            return;
        }
        const auto deadline = *coordinator_.heartbeat_deadline(a.who);
        if (deadline <= now_) {
            depart(a.who, DepartureReason::HeartbeatTimeout);
        } else {
            schedule(deadline, TimeoutCheck{a.who});
        }
    }

    void depart(const ParticipantId& who, DepartureReason reason) {
        send_all(coordinator_.leave(who, now_, reason), host_id());
        record_truth({who, std::nullopt, now_});
        std::vector<ParticipantId> watchers;
        for (const auto& [p, t] : truth_targets_) {
            if (t == who) {
                watchers.push_back(p);
            }
        }
        for (const auto& p : watchers) {
            record_truth({p, std::nullopt, now_});
        }
    }

    void record_truth(const GazeUpdate& u) {
        truth_targets_[u.who] = u.target;
        result_.ground_truth_trace.push_back(u);
    }

    void dispatch(const Delivery& d) {
        if (d.to == host_id()) {
            on_host(d);
            return;
        }
        auto& site = sites_.at(d.to);
        const bool was_joined = site.joined();
        site.receive(d.message, now_);
        if (!was_joined && site.joined() && active_[site.id()]) {
            schedule(now_, HeartbeatAction{site.id()});
            if (config_.frame_stubs) {
                const auto& sched = config_.schedule;
                std::int64_t k = frame_index(sched, now_);
                if (sched.epoch + sched.period * k < now_) {
                    ++k;
                }
                schedule(sched.epoch + sched.period * k, FrameAction{site.id(), k, false});
            }
        }
    }

    void on_host(const Delivery& d) {
        const auto& m = d.message;
        switch (m.kind()) {
            case MessageKind::Join:
                try {
                    send_all(coordinator_.join(m.sender, now_), host_id());
                    result_.peak_link_count = std::max(result_.peak_link_count, coordinator_.link_count());
                    schedule(*coordinator_.heartbeat_deadline(m.sender), TimeoutCheck{m.sender});
                } catch (const Error& ex) {
                    result_.join_errors.push_back(m.sender.str() + ": " + ex.what());
                    network_.send(host_id(), m.sender,
                                  coordinator_.make_message(ErrorPayload{std::string(to_string(ex.code())), ex.what()},
                                                            now_),
                                  now_);
                }
                break;
            case MessageKind::Leave:
                if (coordinator_.is_member(m.sender)) {
                    depart(m.sender, DepartureReason::Leave);
                }
                break;
            case MessageKind::Heartbeat:
                coordinator_.heartbeat(m.sender, m.sent);
                break;
            default:
                break;
        }
    }

    SimResult collect() {
        SimResult& r = result_;
        r.horizon = config_.horizon;
        for (const auto& plan : plans_) {
            r.participants.push_back(plan.id);
        }
        for (auto& [id, site] : sites_) {
            site.finish(config_.horizon);
            SessionView view = site.view();
            view.membership = {config_.horizon, config_.horizon};
            if (site.joined()) {
                Micros until = config_.horizon;
                for (const auto& d : coordinator_.departures()) {
                    if (d.who == id) {
                        until = std::min(until, d.at);
                    }
                }
                view.membership = {site.view().membership.start, until};
            }
            r.views.push_back(std::move(view));
            r.observed[id] = site.observed_trace();
            r.site_counters[id] = site.counters();
        }
        r.ground_truth = episodes_from_trace(r.ground_truth_trace, config_.debounce, config_.horizon);
        r.departures = coordinator_.departures();
        r.final_ring = coordinator_.ring();
        r.link_count = coordinator_.link_count();
        r.network = network_.counters();
        return std::move(r);
    }

    SimConfig config_;
    std::vector<ParticipantPlan> plans_;
    std::vector<ScriptedGaze> script_;
    SimNetwork network_;
    Coordinator coordinator_;
    std::map<ParticipantId, Site> sites_;
    std::map<ParticipantId, bool> active_;
    std::map<ParticipantId, std::optional<ParticipantId>> truth_targets_;
    std::priority_queue<Action, std::vector<Action>, Later> queue_;
    std::uint64_t next_order_ = 0;
    Micros now_{0};
    SimResult result_;
};

}  // namespace seethrough::session

#endif  // SEETHROUGH_SESSION_SIMULATION_HPP_
