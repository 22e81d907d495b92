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

#ifndef SEETHROUGH_GAZE_ENGINE_HPP_
#define SEETHROUGH_GAZE_ENGINE_HPP_

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "seethrough/error.hpp"
#include "seethrough/intervals.hpp"
#include "seethrough/seating.hpp"
#include "seethrough/time.hpp"

namespace seethrough {

struct GazeUpdate {
    ParticipantId who;
    std::optional<ParticipantId> target;  // nullopt: gaze averted
    Micros at{0};

    bool operator==(const GazeUpdate&) const = default;
};

inline void validate(const GazeUpdate& u) {
    if (u.target && *u.target == u.who) {
        throw Error(Errc::SelfGaze, "'" + u.who.str() + "' cannot gaze at itself");
    }
    if (u.at < Micros::zero()) {
        throw Error(Errc::NonMonotonicTime, "gaze update before session start");
    }
}

// Unordered pair, stored with first < second.
class ParticipantPair {
public:
    ParticipantPair(ParticipantId a, ParticipantId b) : first_(std::move(a)), second_(std::move(b)) {
        if (first_ == second_) {
            throw Error(Errc::SelfGaze, "pair members must differ");
        }
        if (second_ < first_) {
            std::swap(first_, second_);
        }
    }

    const ParticipantId& first() const noexcept { return first_; }
    const ParticipantId& second() const noexcept { return second_; }
    bool involves(const ParticipantId& p) const noexcept { return first_ == p || second_ == p; }

    auto operator<=>(const ParticipantPair&) const = default;
    bool operator==(const ParticipantPair&) const = default;

private:
    ParticipantId first_;
    ParticipantId second_;
};

struct MutualGazeEpisode {
    ParticipantPair pair;
    Micros start{0};
    std::optional<Micros> end;  // nullopt while ongoing

    bool is_open() const noexcept { return !end.has_value(); }

    /// [start, end) clipped to [0, horizon); open episodes run to the horizon.
    Interval clipped(Micros horizon) const noexcept {
        const Micros e = end ? std::min(*end, horizon) : horizon;
        return {std::max(start, Micros::zero()), e};
    }

    bool operator==(const MutualGazeEpisode&) const = default;
};

/// Canonical order for comparing episode sets.
inline void sort_episodes(std::vector<MutualGazeEpisode>& episodes) {
    std::sort(episodes.begin(), episodes.end(), [](const MutualGazeEpisode& a, const MutualGazeEpisode& b) {
        return std::tie(a.start, a.pair, a.end) < std::tie(b.start, b.pair, b.end);
    });
}

struct ExclusionInterval {
    ParticipantId who;
    Micros start{0};
    Micros end{0};

    bool operator==(const ExclusionInterval&) const = default;
};

struct EpisodeEvent {
    enum class Kind { Opened, Closed };

    Kind kind;
    ParticipantPair pair;
    Micros at{0};  // onset for Opened, break time for Closed

    bool operator==(const EpisodeEvent&) const = default;
};

struct GazeState {
    std::map<ParticipantId, std::optional<ParticipantId>> targets;
    std::map<ParticipantId, Micros> last_update;

    bool has_member(const ParticipantId& p) const { return targets.contains(p); }

    bool operator==(const GazeState&) const = default;
};

inline std::vector<ParticipantPair> reciprocal_pairs(const GazeState& state) {
    std::vector<ParticipantPair> out;
    for (const auto& [who, target] : state.targets) {
        if (!target || !(who < *target)) {
            continue;
        }
        const auto back = state.targets.find(*target);
        if (back != state.targets.end() && back->second == who) {
            out.emplace_back(who, *target);
        }
    }
    return out;
}

/// Streaming mutual-gaze detector.
///
/// Time advances in instants: all updates carrying the same timestamp are
/// applied in arrival order and only the state at the end of the instant
/// counts. A pair becomes an episode once it has been reciprocal for at least
/// the debounce duration (and for a non-zero time); the episode is backdated
/// to the onset of reciprocity. Because of this, events are reported once they
/// are certain: a reciprocity change at time t is only committed when the
/// clock moves past t (next later update, `advance_to`, or `finish*`).
class GazeEngine {
public:
    struct Removal {
        std::vector<EpisodeEvent> events;
        std::vector<GazeUpdate> implied_updates;
    };

    explicit GazeEngine(Micros debounce = Micros{100'000}) : debounce_(debounce) {
        if (debounce_ < Micros::zero()) {
            throw Error(Errc::InvalidWindow, "debounce must be non-negative");
        }
    }

    GazeEngine(const std::vector<ParticipantId>& members, Micros debounce) : GazeEngine(debounce) {
        for (const auto& m : members) {
            add_member(m);
        }
    }

    Micros debounce() const noexcept { return debounce_; }
    Micros clock() const noexcept { return clock_; }
    const GazeState& state() const noexcept { return state_; }

    /// Every episode that has opened so far, in opening order.
    const std::vector<MutualGazeEpisode>& episodes() const noexcept { return episodes_; }

    /// Pairs with a confirmed, still-open episode.
    std::vector<ParticipantPair> open_pairs() const {
        std::vector<ParticipantPair> out;
        for (const auto& [pair, c] : candidates_) {
            if (c.episode) {
                out.push_back(pair);
            }
        }
        return out;
    }

    /// Everything before this time is final: no later update can open or
    /// close an episode earlier than it.
    Micros settled_until() const noexcept {
        Micros t = clock_;
        for (const auto& [pair, c] : candidates_) {
            if (!c.episode) {
                t = std::min(t, c.onset);
            }
        }
        return t;
    }

    bool add_member(const ParticipantId& p) {
        if (state_.has_member(p)) {
            return false;
        }
        state_.targets.emplace(p, std::nullopt);
        state_.last_update.emplace(p, clock_);
        return true;
    }

    bool has_member(const ParticipantId& p) const { return state_.has_member(p); }

    std::vector<EpisodeEvent> apply(const GazeUpdate& u) {
        validate(u);
        if (finished_) {
            throw Error(Errc::NonMonotonicTime, "engine already finished");
        }
        const auto it = state_.targets.find(u.who);
        if (it == state_.targets.end()) {
            throw Error(Errc::UnknownParticipant, "'" + u.who.str() + "' is not in the session");
        }
        if (u.at < state_.last_update.at(u.who)) {
            throw Error(Errc::NonMonotonicTime, "update for '" + u.who.str() + "' at " +
                                                    std::to_string(u.at.count()) + " precedes " +
                                                    std::to_string(state_.last_update.at(u.who).count()));
        }
        if (u.at < clock_) {
            throw Error(Errc::NonMonotonicTime, "update at " + std::to_string(u.at.count()) +
                                                    " is behind the engine clock " +
                                                    std::to_string(clock_.count()));
        }
        auto events = advance_to(u.at);
        it->second = u.target;
        state_.last_update[u.who] = u.at;
        dirty_ = true;
        return events;
    }

    /// Declares that the current state persists up to `now`.
    std::vector<EpisodeEvent> advance_to(Micros now) {
        if (now < clock_) {
            throw Error(Errc::NonMonotonicTime, "cannot rewind engine clock");
        }
        std::vector<EpisodeEvent> events;
        if (now > clock_) {
            if (dirty_) {
                commit(events);
            }
            clock_ = now;
        }
        confirm(now, events);
        return events;
    }

    /// Drops `p` at time `at`. Anyone gazing at p is reset to averted; the
    /// implied updates are returned so callers can keep an observed trace.
    Removal remove_member(const ParticipantId& p, Micros at) {
        if (!state_.has_member(p)) {
            throw Error(Errc::UnknownParticipant, "'" + p.str() + "' is not in the session");
        }
        Removal out;
        std::vector<GazeUpdate> updates{GazeUpdate{p, std::nullopt, at}};
        for (const auto& [who, target] : state_.targets) {
            if (target == p) {
                updates.push_back(GazeUpdate{who, std::nullopt, at});
            }
        }
        for (const auto& u : updates) {
            auto ev = apply(u);
            out.events.insert(out.events.end(), ev.begin(), ev.end());
        }
        state_.targets.erase(p);
        state_.last_update.erase(p);
        out.implied_updates = std::move(updates);
        return out;
    }

    /// Ends an unbounded trace: reciprocity still holding is reported as
    /// ongoing episodes regardless of debounce.
    std::vector<EpisodeEvent> finish() {
        std::vector<EpisodeEvent> events;
        if (dirty_) {
            commit(events);
        }
        for (auto& [pair, c] : candidates_) {
            if (!c.episode) {
                open_episode(pair, c, events);
            }
        }
        finished_ = true;
        return events;
    }

    /// Ends the trace at `horizon`, closing every episode there.
    std::vector<EpisodeEvent> finish_at(Micros horizon) {
        auto events = advance_to(horizon);
        for (auto& [pair, c] : candidates_) {
            if (c.episode) {
                close_episode(pair, c, horizon, events);
            }
        }
        candidates_.clear();
        finished_ = true;
        return events;
    }

private:
    struct Candidate {
        Micros onset;
        std::optional<std::size_t> episode;  // index into episodes_ once opened
    };

    void open_episode(const ParticipantPair& pair, Candidate& c, std::vector<EpisodeEvent>& events) {
        c.episode = episodes_.size();
        episodes_.push_back(MutualGazeEpisode{pair, c.onset, std::nullopt});
        events.push_back(EpisodeEvent{EpisodeEvent::Kind::Opened, pair, c.onset});
    }

    void close_episode(const ParticipantPair& pair, Candidate& c, Micros at, std::vector<EpisodeEvent>& events) {
        episodes_[*c.episode].end = at;
        events.push_back(EpisodeEvent{EpisodeEvent::Kind::Closed, pair, at});
    }

    // Folds the state at the end of instant `clock_` into the candidate set.
    void commit(std::vector<EpisodeEvent>& events) {
        const auto now_reciprocal = reciprocal_pairs(state_);
        for (auto it = candidates_.begin(); it != candidates_.end();) {
            auto& [pair, c] = *it;
            if (std::find(now_reciprocal.begin(), now_reciprocal.end(), pair) != now_reciprocal.end()) {
                ++it;
                continue;
            }
            if (!c.episode && clock_ - c.onset >= debounce_) {
                open_episode(pair, c, events);
            }
            if (c.episode) {
                close_episode(pair, c, clock_, events);
            }
            it = candidates_.erase(it);
        }
        for (const auto& pair : now_reciprocal) {
            candidates_.try_emplace(pair, Candidate{clock_, std::nullopt});
        }
        dirty_ = false;
    }

    void confirm(Micros now, std::vector<EpisodeEvent>& events) {
        for (auto& [pair, c] : candidates_) {
            if (!c.episode && now > c.onset && now - c.onset >= debounce_) {
                open_episode(pair, c, events);
            }
        }
    }

    Micros debounce_;
    Micros clock_{0};
    bool dirty_ = false;
    bool finished_ = false;
    GazeState state_;
    std::map<ParticipantPair, Candidate> candidates_;
    std::vector<MutualGazeEpisode> episodes_;
};

/// Reference detector over a whole trace. Builds each participant's
/// piecewise-constant target as segments, intersects the two directions of
/// every pair and keeps maximal intervals that last at least `debounce`.
/// Without a horizon, reciprocity still holding at the end of the trace is
/// reported as an ongoing episode; with one, everything is clipped there.
inline std::vector<MutualGazeEpisode> episodes_from_trace(std::span<const GazeUpdate> trace, Micros debounce,
                                                          std::optional<Micros> horizon = std::nullopt) {
    constexpr Micros kUnbounded = Micros::max();
    struct Segment {
        Interval span;
        std::optional<ParticipantId> target;
    };

    std::map<ParticipantId, std::vector<std::pair<Micros, std::optional<ParticipantId>>>> per_who;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        validate(trace[i]);
        if (i > 0 && trace[i].at < trace[i - 1].at) {
            throw Error(Errc::UnsortedTrace, "update " + std::to_string(i) + " at " +
                                                 std::to_string(trace[i].at.count()) + " precedes its predecessor");
        }
        auto& changes = per_who[trace[i].who];
        if (!changes.empty() && changes.back().first == trace[i].at) {
            changes.back().second = trace[i].target;  // last write in an instant wins
        } else {
            changes.emplace_back(trace[i].at, trace[i].target);
        }
    }

    std::map<ParticipantId, std::vector<Segment>> segments;
    for (const auto& [who, changes] : per_who) {
        auto& segs = segments[who];
        for (std::size_t i = 0; i < changes.size(); ++i) {
            const Micros end = i + 1 < changes.size() ? changes[i + 1].first : kUnbounded;
            segs.push_back({{changes[i].first, end}, changes[i].second});
        }
    }

    std::vector<MutualGazeEpisode> out;
    for (const auto& [a, segs_a] : segments) {
        for (const auto& [b, segs_b] : segments) {
            if (!(a < b)) {
                continue;
            }
            std::vector<Interval> overlap;
            for (const auto& sa : segs_a) {
                if (sa.target != b) {
                    continue;
                }
                for (const auto& sb : segs_b) {
                    if (sb.target != a) {
                        continue;
                    }
                    overlap.push_back({std::max(sa.span.start, sb.span.start), std::min(sa.span.end, sb.span.end)});
                }
            }
            for (auto iv : merge_intervals(std::move(overlap))) {
                if (horizon) {
                    if (iv.start >= *horizon) {
                        continue;
                    }
                    iv.end = std::min(iv.end, *horizon);
                }
                if (iv.end == kUnbounded) {
                    out.push_back({ParticipantPair(a, b), iv.start, std::nullopt});
                } else if (iv.length() > Micros::zero() && iv.length() >= debounce) {
                    out.push_back({ParticipantPair(a, b), iv.start, iv.end});
                }
            }
        }
    }
    sort_episodes(out);
    return out;
}

/// Maximal intervals in [0, horizon) during which some episode among others
/// is active while `who` has no episode of their own.
inline std::vector<ExclusionInterval> exclusion_intervals(std::span<const MutualGazeEpisode> episodes,
                                                          std::span<const ParticipantId> members,
                                                          const ParticipantId& who, Micros horizon) {
    if (std::find(members.begin(), members.end(), who) == members.end()) {
        throw Error(Errc::UnknownParticipant, "'" + who.str() + "' is not a member");
    }
    std::vector<Interval> others;
    std::vector<Interval> own;
    for (const auto& e : episodes) {
        (e.pair.involves(who) ? own : others).push_back(e.clipped(horizon));
    }
    std::vector<ExclusionInterval> out;
    for (const auto& iv : subtract_intervals(merge_intervals(std::move(others)), merge_intervals(std::move(own)))) {
        out.push_back({who, iv.start, iv.end});
    }
    return out;
}

struct SessionStats {
    std::map<ParticipantPair, Micros> mutual;    // total mutual gaze per pair
    std::map<ParticipantId, Micros> exclusion;  // total exclusion per member
    std::size_t episode_count = 0;

    bool operator==(const SessionStats&) const = default;
};

inline SessionStats session_stats(std::span<const MutualGazeEpisode> episodes,
                                  std::span<const ParticipantId> members, Micros horizon) {
    SessionStats stats;
    for (std::size_t i = 0; i < members.size(); ++i) {
        stats.exclusion[members[i]] = Micros::zero();
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            stats.mutual[ParticipantPair(members[i], members[j])] = Micros::zero();
        }
    }
    for (const auto& e : episodes) {
        const Interval iv = e.clipped(horizon);
        if (iv.empty()) {
            continue;
        }
        stats.mutual[e.pair] += iv.length();
        ++stats.episode_count;
    }
    for (const auto& m : members) {
        Micros total{0};
        for (const auto& x : exclusion_intervals(episodes, members, m, horizon)) {
            total += x.end - x.start;
        }
        stats.exclusion[m] = total;
    }
    return stats;
}

}  // namespace seethrough

#endif  // SEETHROUGH_GAZE_ENGINE_HPP_
